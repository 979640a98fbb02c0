//! Command-line interface. Every command writes one document: pretty JSON by
//! default, CSV with six significant digits on request.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use crate::domains::{make_aloha, make_ffg, AlohaParams, FfgParams};
use crate::error::{Error, Result};
use crate::flat::{flatten, DEFAULT_FLATTEN_CAP};
use crate::model::FactoredDecPOMDP;
use crate::oracle::{
    brute_force_optimal, exact_policy_value, monte_carlo_value, HeuristicPolicy, OpenLoopQmmdp, RandomPolicy,
    DEFAULT_ORACLE_CAP,
};
use crate::policy::JointPolicy;
use crate::report::{
    best_partition_bound, eaf, influence_strength_sweep, local_bound, sig6, BoundOptions, BoundReport, BoundType,
    HeuristicMethod, HeuristicValue, SpKind,
};
use crate::subproblem::{make_partition, ClosureRule, InfluenceCoupling, PartitionDoc, SubProblem, SubProblemDoc};
use crate::vector::{BackupMode, PruneMode};

#[derive(Debug, Parser)]
#[command(
    name = "iobound",
    version,
    about = "Influence-optimistic upper bounds for factored Dec-POMDPs"
)]
pub struct Cli {
    /// Output format.
    #[arg(long, global = true, value_enum, default_value_t = OutFormat::Json)]
    pub out: OutFormat,
    /// Seed for Monte Carlo runs and random heuristics.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Overrides the size cap of the chosen computation.
    #[arg(long, global = true)]
    pub cap: Option<u128>,
    /// Include wall times in bound reports.
    #[arg(long, global = true)]
    pub timing: bool,
    /// Write to this file instead of stdout.
    #[arg(long, short = 'o', global = true)]
    pub output: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutFormat {
    Json,
    Csv,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a benchmark model.
    #[command(subcommand)]
    Generate(Generate),
    /// Extract sub-problems.
    #[command(subcommand)]
    Sp(SpCommand),
    /// Local bound of one sub-problem.
    #[command(subcommand)]
    Bound(BoundCommand),
    /// Global bound over one or more candidate partitions.
    Global(GlobalArgs),
    /// Exact solving and policy evaluation at small scale.
    #[command(subcommand)]
    Oracle(OracleCommand),
    /// Empirical approximation factor of an upper bound and a heuristic value.
    Eaf {
        #[arg(long, allow_hyphen_values = true)]
        ub: f64,
        #[arg(long, allow_hyphen_values = true)]
        heur: f64,
    },
    /// Bound-versus-exact table over the two-agent extinguish probability.
    Sweep(SweepArgs),
}

#[derive(Debug, Subcommand)]
pub enum Generate {
    /// Firefighting graph: a line of houses with one agent between neighbours.
    Ffg {
        #[arg(long)]
        agents: Option<usize>,
        #[arg(long)]
        horizon: Option<usize>,
        #[arg(long)]
        p_extinguish2: Option<f64>,
        /// JSON file with generator parameters; flags override it.
        #[arg(long)]
        params: Option<PathBuf>,
    },
    /// Aloha islands sharing radio channels with their neighbours.
    Aloha {
        #[arg(long)]
        islands: Option<usize>,
        #[arg(long)]
        horizon: Option<usize>,
        #[arg(long)]
        params: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
pub struct SubsetArgs {
    #[arg(long, value_delimiter = ',')]
    pub agents: Vec<usize>,
    #[arg(long, value_delimiter = ',')]
    pub factors: Vec<usize>,
    #[arg(long, value_delimiter = ',')]
    pub rewards: Vec<usize>,
}

#[derive(Debug, Subcommand)]
pub enum SpCommand {
    /// One sub-problem from agent, factor and reward subsets.
    Extract {
        #[arg(long)]
        model: PathBuf,
        #[command(flatten)]
        subset: SubsetArgs,
        /// Give every NLAF its own copy of shared external parents.
        #[arg(long)]
        decoupled_optimism: bool,
    },
    /// A partition of the reward components into sub-problems.
    Partition {
        #[arg(long)]
        model: PathBuf,
        /// Reward blocks, e.g. "0,1,2;3,4".
        #[arg(long)]
        blocks: String,
        #[arg(long, value_enum, default_value_t = Closure::Interior)]
        closure: Closure,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Closure {
    Interior,
    Minimal,
}

impl From<Closure> for ClosureRule {
    fn from(c: Closure) -> Self {
        match c {
            Closure::Interior => ClosureRule::Interior,
            Closure::Minimal => ClosureRule::Minimal,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Io,
    Regular,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Prune {
    Lp,
    Pointwise,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Bound {
    Mmdp,
    Mpomdp,
    Decpomdp,
}

impl From<Bound> for BoundType {
    fn from(b: Bound) -> Self {
        match b {
            Bound::Mmdp => BoundType::Mmdp,
            Bound::Mpomdp => BoundType::Mpomdp,
            Bound::Decpomdp => BoundType::Decpomdp,
        }
    }
}

#[derive(Debug, Args)]
pub struct SolverArgs {
    #[arg(long, value_enum, default_value_t = Mode::Io)]
    pub mode: Mode,
    #[arg(long, value_enum, default_value_t = Prune::Lp)]
    pub prune: Prune,
    #[arg(long)]
    pub decoupled_optimism: bool,
    #[arg(long)]
    pub horizon: Option<usize>,
}

#[derive(Debug, Args)]
pub struct BoundArgs {
    /// Sub-problem document from `sp extract`.
    #[arg(long, conflicts_with = "model")]
    pub sp: Option<PathBuf>,
    /// Model file; without a subset the whole model is one sub-problem.
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[command(flatten)]
    pub subset: SubsetArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
}

#[derive(Debug, Subcommand)]
pub enum BoundCommand {
    /// Fully observable relaxation.
    Mmdp(BoundArgs),
    /// Centralized relaxation with shared observations.
    Mpomdp(BoundArgs),
    /// Decentralized sub-problem, solved exactly.
    Decpomdp(BoundArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Heuristic {
    Random,
    OpenLoopQmmdp,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// Partition document from `sp partition`.
    #[arg(long, conflicts_with = "model")]
    pub partition: Option<PathBuf>,
    #[arg(long, requires = "blocks")]
    pub model: Option<PathBuf>,
    /// Candidate partition as reward blocks ("0,1;2,3"); repeat for several candidates.
    #[arg(long)]
    pub blocks: Vec<String>,
    #[arg(long, value_enum, default_value_t = Closure::Interior)]
    pub closure: Closure,
    #[arg(long, value_enum, default_value_t = Bound::Decpomdp)]
    pub bound: Bound,
    #[command(flatten)]
    pub solver: SolverArgs,
    /// Heuristic policy whose value is reported with the EAF.
    #[arg(long, value_enum)]
    pub heuristic: Option<Heuristic>,
    /// Evaluate the heuristic by simulation instead of exactly.
    #[arg(long)]
    pub sims: Option<u64>,
}

#[derive(Debug, Subcommand)]
pub enum OracleCommand {
    /// Brute-force optimal joint policy.
    Solve {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        horizon: Option<usize>,
    },
    /// Exact value of a joint policy.
    Eval {
        #[arg(long)]
        model: PathBuf,
        /// Joint policy, or the output of `oracle solve`.
        #[arg(long)]
        policy: PathBuf,
    },
    /// Monte Carlo value of a joint policy.
    Mc {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        policy: PathBuf,
        #[arg(long, default_value_t = 10_000)]
        sims: u64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Kind {
    Edge,
    Internal,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Agents in the sub-problem.
    #[arg(long, default_value_t = 2)]
    pub agents: usize,
    #[arg(long, value_enum, default_value_t = Kind::Edge)]
    pub kind: Kind,
    #[arg(long, value_delimiter = ',', default_values_t = vec![0.0, 0.25, 0.5, 0.75, 1.0])]
    pub p: Vec<f64>,
    #[arg(long, value_enum, default_value_t = Bound::Decpomdp)]
    pub bound: Bound,
    #[arg(long, default_value_t = 2)]
    pub horizon: usize,
    /// Generator parameters for the other FFG settings.
    #[arg(long)]
    pub params: Option<PathBuf>,
    /// Also write the table as CSV to this file.
    #[arg(long)]
    pub csv_file: Option<PathBuf>,
}

/// Rendered command output.
pub struct Output {
    pub json: Value,
    pub csv: Option<String>,
}

impl Output {
    fn of<T: Serialize>(v: &T) -> Result<Self> {
        Ok(Output {
            json: serde_json::to_value(v)?,
            csv: None,
        })
    }

    fn with_csv(mut self, csv: String) -> Self {
        self.csv = Some(csv);
        self
    }

    pub fn render(&self, format: OutFormat) -> Result<String> {
        Ok(match format {
            OutFormat::Json => serde_json::to_string_pretty(&self.json)? + "\n",
            OutFormat::Csv => self.csv.clone().unwrap_or_else(|| flat_csv(&self.json)),
        })
    }
}

/// `key,value` lines for scalar leaves of a JSON document.
fn flat_csv(v: &Value) -> String {
    fn walk(prefix: &str, v: &Value, out: &mut String) {
        match v {
            Value::Object(m) => {
                for (k, x) in m {
                    let p = if prefix.is_empty() {
                        k.clone()
                    } else {
                        format!("{prefix}.{k}")
                    };
                    walk(&p, x, out);
                }
            }
            Value::Array(a) if a.iter().all(|x| !x.is_object() && !x.is_array()) => {
                let items: Vec<String> = a.iter().map(scalar).collect();
                out.push_str(&format!("{prefix},{}\n", items.join(" ")));
            }
            Value::Array(a) => {
                for (i, x) in a.iter().enumerate() {
                    walk(&format!("{prefix}.{i}"), x, out);
                }
            }
            _ => out.push_str(&format!("{prefix},{}\n", scalar(v))),
        }
    }
    fn scalar(v: &Value) -> String {
        match v {
            Value::Number(n) if n.is_f64() => sig6(n.as_f64().unwrap()),
            Value::String(s) => s.clone(),
            other => other.to_string(),
        }
    }
    let mut out = String::from("key,value\n");
    walk("", v, &mut out);
    out
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
}

fn parse_blocks(s: &str) -> Result<Vec<Vec<usize>>> {
    s.split(';')
        .map(|b| {
            b.split(',')
                .map(|x| {
                    x.trim()
                        .parse()
                        .map_err(|_| Error::InvalidPartition(format!("bad reward index {x:?} in {s:?}")))
                })
                .collect()
        })
        .collect()
}

fn load_policy(path: &Path) -> Result<JointPolicy> {
    let v: Value = read_json(path)?;
    let v = match v.get("policy") {
        Some(p) => p.clone(),
        None => v,
    };
    Ok(serde_json::from_value(v)?)
}

fn options(cli: &Cli, s: &SolverArgs) -> BoundOptions {
    let mut o = BoundOptions {
        mode: match s.mode {
            Mode::Io => BackupMode::Io,
            Mode::Regular => BackupMode::Regular,
        },
        prune: match s.prune {
            Prune::Lp => PruneMode::Lp,
            Prune::Pointwise => PruneMode::Pointwise,
        },
        coupling: if s.decoupled_optimism {
            InfluenceCoupling::PerNlaf
        } else {
            InfluenceCoupling::Joint
        },
        horizon: s.horizon,
        timing: cli.timing,
        ..Default::default()
    };
    if let Some(c) = cli.cap {
        o.policy_cap = c;
        o.vector_cap = usize::try_from(c).unwrap_or(usize::MAX);
    }
    o
}

fn bound_subproblem(a: &BoundArgs) -> Result<SubProblem> {
    if let Some(p) = &a.sp {
        let doc: SubProblemDoc = read_json(p)?;
        return doc.into_subproblem();
    }
    let Some(path) = &a.model else {
        return Err(Error::InvalidParams("either --sp or --model is required".into()));
    };
    let m = Arc::new(FactoredDecPOMDP::load(path)?);
    let s = &a.subset;
    if s.agents.is_empty() && s.factors.is_empty() && s.rewards.is_empty() {
        SubProblem::whole(m)
    } else {
        SubProblem::extract(m, &s.agents, &s.factors, &s.rewards)
    }
}

fn ffg_params(path: &Option<PathBuf>) -> Result<FfgParams> {
    match path {
        Some(p) => read_json(p),
        None => Ok(FfgParams::default()),
    }
}

pub fn execute(cli: &Cli) -> Result<Output> {
    match &cli.command {
        Command::Generate(Generate::Ffg {
            agents,
            horizon,
            p_extinguish2,
            params,
        }) => {
            let mut p = ffg_params(params)?;
            if let Some(n) = agents {
                p.n_agents = *n;
            }
            if let Some(h) = horizon {
                p.horizon = *h;
            }
            if let Some(x) = p_extinguish2 {
                p.p_extinguish2 = *x;
            }
            Output::of(&make_ffg(&p)?)
        }
        Command::Generate(Generate::Aloha {
            islands,
            horizon,
            params,
        }) => {
            let mut p: AlohaParams = match params {
                Some(path) => read_json(path)?,
                None => AlohaParams::default(),
            };
            if let Some(n) = islands {
                p.n_islands = *n;
            }
            if let Some(h) = horizon {
                p.horizon = *h;
            }
            Output::of(&make_aloha(&p)?)
        }
        Command::Sp(SpCommand::Extract {
            model,
            subset,
            decoupled_optimism,
        }) => {
            let m = Arc::new(FactoredDecPOMDP::load(model)?);
            let coupling = if *decoupled_optimism {
                InfluenceCoupling::PerNlaf
            } else {
                InfluenceCoupling::Joint
            };
            let sp = SubProblem::extract_with(m, &subset.agents, &subset.factors, &subset.rewards, coupling)?;
            Output::of(&sp.to_doc())
        }
        Command::Sp(SpCommand::Partition { model, blocks, closure }) => {
            let m = Arc::new(FactoredDecPOMDP::load(model)?);
            let p = make_partition(m, &parse_blocks(blocks)?, (*closure).into())?;
            Output::of(&p.to_doc())
        }
        Command::Bound(b) => {
            let (bt, args) = match b {
                BoundCommand::Mmdp(a) => (BoundType::Mmdp, a),
                BoundCommand::Mpomdp(a) => (BoundType::Mpomdp, a),
                BoundCommand::Decpomdp(a) => (BoundType::Decpomdp, a),
            };
            let sp = bound_subproblem(args)?;
            let opts = options(cli, &args.solver);
            let lb = local_bound(&sp, bt, &opts)?;
            Output::of(&json!({
                "tool_version": crate::domains::TOOL_VERSION,
                "model": sp.model().name,
                "horizon": opts.horizon.unwrap_or(sp.model().horizon),
                "options": opts,
                "bound": lb,
            }))
        }
        Command::Global(g) => global(cli, g),
        Command::Oracle(o) => oracle(cli, o),
        Command::Eaf { ub, heur } => Output::of(&json!({ "ub": ub, "heuristic": heur, "eaf": eaf(*ub, *heur)? })),
        Command::Sweep(s) => {
            let mut params = ffg_params(&s.params)?;
            params.horizon = s.horizon;
            let kind = match s.kind {
                Kind::Edge => SpKind::Edge,
                Kind::Internal => SpKind::Internal,
            };
            let mut opts = BoundOptions {
                timing: false,
                ..Default::default()
            };
            if let Some(c) = cli.cap {
                opts.policy_cap = c;
            }
            let oracle_cap = cli.cap.unwrap_or(DEFAULT_ORACLE_CAP);
            let r = influence_strength_sweep(&params, &s.p, kind, s.agents, s.bound.into(), &opts, oracle_cap)?;
            let csv = r.to_csv();
            if let Some(path) = &s.csv_file {
                std::fs::write(path, &csv)?;
            }
            Ok(Output::of(&r)?.with_csv(csv))
        }
    }
}

fn global(cli: &Cli, g: &GlobalArgs) -> Result<Output> {
    let opts = options(cli, &g.solver);
    let partitions = match (&g.partition, &g.model) {
        (Some(p), _) => vec![read_json::<PartitionDoc>(p)?.into_partition()?],
        (None, Some(m)) => {
            let m = Arc::new(FactoredDecPOMDP::load(m)?);
            g.blocks
                .iter()
                .map(|b| make_partition(m.clone(), &parse_blocks(b)?, g.closure.into()))
                .collect::<Result<Vec<_>>>()?
        }
        (None, None) => return Err(Error::InvalidParams("either --partition or --model is required".into())),
    };
    let bt: BoundType = g.bound.into();
    let (best, mut all) = best_partition_bound(&partitions, bt, &opts)?;
    let candidates: Vec<Value> = partitions
        .iter()
        .zip(&all)
        .map(|(p, g)| json!({ "blocks": p.blocks, "global_bound": g.value }))
        .collect();
    let global = all.swap_remove(best);
    let mut report = BoundReport::new(&partitions[best], bt, &opts, global);
    if let Some(h) = g.heuristic {
        let mut m = (**partitions[best].model()).clone();
        if let Some(hz) = opts.horizon {
            m.horizon = hz;
        }
        let flat = flatten(&m, DEFAULT_FLATTEN_CAP)?;
        let producer: Box<dyn HeuristicPolicy> = match h {
            Heuristic::Random => Box::new(RandomPolicy { seed: cli.seed }),
            Heuristic::OpenLoopQmmdp => Box::new(OpenLoopQmmdp),
        };
        let pi = producer.policy(&flat)?;
        let hv = match g.sims {
            Some(n) => {
                let mc = monte_carlo_value(&m, &pi, n, cli.seed)?;
                HeuristicValue {
                    policy: producer.name(),
                    method: HeuristicMethod::MonteCarlo,
                    value: mc.mean,
                    std_error: Some(mc.std_error),
                    n_sims: Some(n),
                    seed: Some(cli.seed),
                }
            }
            None => HeuristicValue {
                policy: producer.name(),
                method: HeuristicMethod::Exact,
                value: exact_policy_value(&flat, &pi)?.total,
                std_error: None,
                n_sims: None,
                seed: None,
            },
        };
        report = report.with_heuristic(hv)?;
    }
    let csv = report.to_csv();
    let mut json = serde_json::to_value(&report)?;
    if partitions.len() > 1 {
        json["candidates"] = Value::Array(candidates);
    }
    Ok(Output { json, csv: Some(csv) })
}

fn oracle(cli: &Cli, o: &OracleCommand) -> Result<Output> {
    match o {
        OracleCommand::Solve { model, horizon } => {
            let mut m = FactoredDecPOMDP::load(model)?;
            if let Some(h) = horizon {
                m.horizon = *h;
            }
            let flat = flatten(&m, DEFAULT_FLATTEN_CAP)?;
            let r = brute_force_optimal(&flat, cli.cap.unwrap_or(DEFAULT_ORACLE_CAP))?;
            Output::of(&r)
        }
        OracleCommand::Eval { model, policy } => {
            let m = FactoredDecPOMDP::load(model)?;
            let flat = flatten(&m, DEFAULT_FLATTEN_CAP)?;
            Output::of(&exact_policy_value(&flat, &load_policy(policy)?)?)
        }
        OracleCommand::Mc { model, policy, sims } => {
            let m = FactoredDecPOMDP::load(model)?;
            Output::of(&monte_carlo_value(&m, &load_policy(policy)?, *sims, cli.seed)?)
        }
    }
}

/// Runs the CLI and returns the process exit code.
pub fn main_with(cli: Cli) -> i32 {
    let result = execute(&cli)
        .and_then(|out| out.render(cli.out))
        .and_then(|text| match &cli.output {
            Some(path) => Ok(std::fs::write(path, text)?),
            None => {
                print!("{text}");
                Ok(())
            }
        });
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_cap_or_validation() {
                2
            } else {
                1
            }
        }
    }
}
