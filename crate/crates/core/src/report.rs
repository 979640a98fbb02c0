//! Global bounds over reward partitions, the empirical approximation factor,
//! the influence-strength sweep, and the serialized bound report.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domains::{make_ffg, make_ffg_edge_sp, make_ffg_internal_sp, FfgParams, TOOL_VERSION};
use crate::error::{Error, Result};
use crate::flat::{flatten, DEFAULT_FLATTEN_CAP};
use crate::io_decpomdp::{io_qdecpomdp_bound, DecOptions, DEFAULT_POLICY_CAP};
use crate::io_mmdp::io_qmmdp_bound;
use crate::model::Provenance;
use crate::oracle::brute_force_optimal;
use crate::subproblem::{ClosureRule, InfluenceCoupling, Partition, SubProblem, SubProblemSummary};
use crate::vector::{io_qmpomdp_bound, BackupMode, DpOptions, PruneMode, DEFAULT_VECTOR_CAP};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundType {
    Mmdp,
    Mpomdp,
    Decpomdp,
}

impl BoundType {
    pub const ALL: [BoundType; 3] = [BoundType::Mmdp, BoundType::Mpomdp, BoundType::Decpomdp];
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundOptions {
    pub mode: BackupMode,
    pub prune: PruneMode,
    pub coupling: InfluenceCoupling,
    pub vector_cap: usize,
    pub policy_cap: u128,
    /// Overrides the model horizon when set.
    pub horizon: Option<usize>,
    /// Record wall time per sub-problem. Off by default so reports are reproducible.
    pub timing: bool,
}

impl Default for BoundOptions {
    fn default() -> Self {
        BoundOptions {
            mode: BackupMode::Io,
            prune: PruneMode::Lp,
            coupling: InfluenceCoupling::Joint,
            vector_cap: DEFAULT_VECTOR_CAP,
            policy_cap: DEFAULT_POLICY_CAP,
            horizon: None,
            timing: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalBound {
    pub agents: Vec<usize>,
    pub factors: Vec<usize>,
    pub rewards: Vec<usize>,
    pub nlaf: Vec<usize>,
    pub bound_type: BoundType,
    pub value: f64,
    pub influence_size: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_time_seconds: Option<f64>,
}

/// Influence-optimistic bound of one sub-problem.
pub fn local_bound(sp: &SubProblem, bt: BoundType, opts: &BoundOptions) -> Result<LocalBound> {
    let start = Instant::now();
    let sp = if sp.influence().coupling == opts.coupling {
        sp.clone()
    } else {
        sp.with_coupling(opts.coupling)
    };
    let mut lm = sp.compile()?;
    if let Some(h) = opts.horizon {
        lm = lm.with_horizon(h);
    }
    if opts.mode == BackupMode::Regular && lm.has_nlaf {
        return Err(Error::InvalidParams(
            "regular backups need a sub-problem without non-locally affected factors".into(),
        ));
    }
    let value = match bt {
        BoundType::Mmdp => io_qmmdp_bound(&lm)?.bound,
        BoundType::Mpomdp => {
            let dp = DpOptions {
                mode: opts.mode,
                prune: opts.prune,
                cap: opts.vector_cap,
            };
            io_qmpomdp_bound(&lm, &dp)?.bound
        }
        BoundType::Decpomdp => io_qdecpomdp_bound(&lm, &DecOptions { cap: opts.policy_cap })?.bound,
    };
    Ok(LocalBound {
        agents: sp.agents().to_vec(),
        factors: sp.factors().to_vec(),
        rewards: sp.rewards().to_vec(),
        nlaf: sp.nlaf().to_vec(),
        bound_type: bt,
        value,
        influence_size: sp.influence_source_space_size(),
        wall_time_seconds: opts.timing.then(|| start.elapsed().as_secs_f64()),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalBound {
    pub value: f64,
    pub local: Vec<LocalBound>,
}

/// Sum of the local bounds of every sub-problem in the partition.
pub fn global_bound(partition: &Partition, bt: BoundType, opts: &BoundOptions) -> Result<GlobalBound> {
    let local = partition
        .subproblems
        .par_iter()
        .map(|sp| local_bound(sp, bt, opts))
        .collect::<Result<Vec<_>>>()?;
    Ok(GlobalBound {
        value: local.iter().map(|l| l.value).sum(),
        local,
    })
}

/// Tightest (smallest) global bound among candidate partitions; ties go to the first.
pub fn best_partition_bound(
    partitions: &[Partition],
    bt: BoundType,
    opts: &BoundOptions,
) -> Result<(usize, Vec<GlobalBound>)> {
    if partitions.is_empty() {
        return Err(Error::EmptyInput("no candidate partitions".into()));
    }
    let all = partitions
        .iter()
        .map(|p| global_bound(p, bt, opts))
        .collect::<Result<Vec<_>>>()?;
    let mut best = 0;
    for (i, g) in all.iter().enumerate() {
        if g.value < all[best].value {
            best = i;
        }
    }
    Ok((best, all))
}

/// max(ub / heur, heur / ub); both values must be nonzero with the same sign.
pub fn eaf(v_ub: f64, v_heur: f64) -> Result<f64> {
    if !(v_ub.is_finite() && v_heur.is_finite()) || v_ub == 0.0 || v_heur == 0.0 || v_ub.signum() != v_heur.signum() {
        return Err(Error::SignMismatch(v_ub, v_heur));
    }
    Ok((v_ub / v_heur).max(v_heur / v_ub))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpKind {
    Edge,
    Internal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub p_extinguish2: f64,
    /// Local bound of the sub-problem.
    pub bound: f64,
    /// Optimal value of the full FFG with as many agents as the sub-problem.
    pub exact: f64,
    /// `exact / bound`; above 1 when optimism lowers the cost.
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub tool_version: String,
    pub params: FfgParams,
    pub kind: SpKind,
    pub sp_agents: usize,
    pub bound_type: BoundType,
    pub rows: Vec<SweepRow>,
}

/// Full FFG size hosting a `k`-agent sub-problem of the given kind.
pub fn host_agents(kind: SpKind, k: usize) -> usize {
    match kind {
        SpKind::Edge => k + 1,
        SpKind::Internal => k + 2,
    }
}

pub fn ffg_subproblem(params: &FfgParams, kind: SpKind, k: usize) -> Result<SubProblem> {
    let mut p = params.clone();
    p.n_agents = p.n_agents.max(host_agents(kind, k));
    Ok(match kind {
        SpKind::Edge => make_ffg_edge_sp(&p, k)?.1,
        SpKind::Internal => make_ffg_internal_sp(&p, k)?.1,
    })
}

/// Bound of a `k`-agent FFG sub-problem against the exact value of the
/// `k`-agent full problem, for each probability of two agents extinguishing a fire.
pub fn influence_strength_sweep(
    params: &FfgParams,
    p_values: &[f64],
    kind: SpKind,
    k: usize,
    bt: BoundType,
    opts: &BoundOptions,
    oracle_cap: u128,
) -> Result<SweepReport> {
    if p_values.is_empty() {
        return Err(Error::EmptyInput("no p_extinguish2 values".into()));
    }
    if let Some(p) = p_values.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::InvalidParams(format!("p_extinguish2 = {p} is not in [0, 1]")));
    }
    let rows = p_values
        .iter()
        .map(|&p| {
            let mut params = params.clone();
            params.p_extinguish2 = p;
            let sp = ffg_subproblem(&params, kind, k)?;
            let bound = local_bound(&sp, bt, opts)?.value;
            let mut full = params.clone();
            full.n_agents = k;
            if let Some(h) = opts.horizon {
                full.horizon = h;
            }
            let flat = flatten(&make_ffg(&full)?, DEFAULT_FLATTEN_CAP)?;
            let exact = brute_force_optimal(&flat, oracle_cap)?.value;
            Ok(SweepRow {
                p_extinguish2: p,
                bound,
                exact,
                ratio: exact / bound,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepReport {
        tool_version: TOOL_VERSION.into(),
        params: params.resolved(),
        kind,
        sp_agents: k,
        bound_type: bt,
        rows,
    })
}

impl SweepReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("p_extinguish2,bound,exact,ratio\n");
        for r in &self.rows {
            s.push_str(&format!(
                "{},{},{},{}\n",
                sig6(r.p_extinguish2),
                sig6(r.bound),
                sig6(r.exact),
                sig6(r.ratio)
            ));
        }
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeuristicMethod {
    Exact,
    MonteCarlo,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeuristicValue {
    pub policy: String,
    pub method: HeuristicMethod,
    pub value: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub std_error: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_sims: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionSummary {
    pub closure: ClosureRule,
    pub blocks: Vec<Vec<usize>>,
    pub subproblems: Vec<SubProblemSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub tool_version: String,
    pub model: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<Provenance>,
    pub horizon: usize,
    pub bound_type: BoundType,
    pub options: BoundOptions,
    pub partition: PartitionSummary,
    pub local: Vec<LocalBound>,
    pub global_bound: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub heuristic: Option<HeuristicValue>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eaf: Option<f64>,
}

impl BoundReport {
    pub fn new(partition: &Partition, bt: BoundType, opts: &BoundOptions, global: GlobalBound) -> Self {
        let doc = partition.to_doc();
        let m = partition.model();
        BoundReport {
            tool_version: TOOL_VERSION.into(),
            model: m.name.clone(),
            provenance: m.provenance.clone(),
            horizon: opts.horizon.unwrap_or(m.horizon),
            bound_type: bt,
            options: *opts,
            partition: PartitionSummary {
                closure: doc.closure,
                blocks: doc.blocks,
                subproblems: doc.subproblems,
            },
            local: global.local,
            global_bound: global.value,
            heuristic: None,
            eaf: None,
        }
    }

    /// Attaches a heuristic value and the resulting approximation factor.
    pub fn with_heuristic(mut self, h: HeuristicValue) -> Result<Self> {
        self.eaf = Some(eaf(self.global_bound, h.value)?);
        self.heuristic = Some(h);
        Ok(self)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("subproblem,agents,rewards,bound_type,influence_size,value\n");
        for (i, l) in self.local.iter().enumerate() {
            s.push_str(&format!(
                "{i},{},{},{},{},{}\n",
                join(&l.agents),
                join(&l.rewards),
                bound_name(l.bound_type),
                l.influence_size,
                sig6(l.value)
            ));
        }
        s.push_str(&format!(
            "global,,,{},,{}\n",
            bound_name(self.bound_type),
            sig6(self.global_bound)
        ));
        s
    }
}

pub fn bound_name(bt: BoundType) -> &'static str {
    match bt {
        BoundType::Mmdp => "mmdp",
        BoundType::Mpomdp => "mpomdp",
        BoundType::Decpomdp => "decpomdp",
    }
}

fn join(v: &[usize]) -> String {
    v.iter().map(usize::to_string).collect::<Vec<_>>().join(" ")
}

/// Six significant digits, without trailing zeros.
pub fn sig6(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let s = format!("{:.5e}", x);
    let v: f64 = s.parse().unwrap();
    let exp = v.abs().log10().floor() as i32;
    if (-5..15).contains(&exp) {
        let decimals = (5 - exp).max(0) as usize;
        let t = format!("{:.*}", decimals, v);
        if t.contains('.') {
            t.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            t
        }
    } else {
        s
    }
}
