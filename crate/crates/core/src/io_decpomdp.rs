//! Influence-optimistic Q-Dec-POMDP bound over plan-time states
//! (local state, local joint observation history).
//!
//! The exact bound maximizes over all decentralized local policies. Values of
//! joint sub-trees rooted at stages >= 1 do not depend on the history that
//! led to them, so they are computed once per joint sub-tree. The root choice
//! is then searched by branch and bound over the agents' continuation
//! choices, with bounds from per-agent max-marginals of the stage-1 terms.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::index::Radix;
use crate::policy::{joint_policy_count, AgentPolicy, JointPolicy, TreeSpace};
use crate::subproblem::LocalModel;

pub const DEFAULT_POLICY_CAP: u128 = 1_000_000;
const TABLE_CAP: u128 = 1 << 25;

/// A local state together with one observation history per agent.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PlanTimeState {
    pub local_state: usize,
    pub histories: Vec<usize>,
}

/// Values over plan-time states of one stage, laid out `[history * n_states + x]`
/// with the joint history mixed-radix over agents.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanTimeVector {
    pub stage: usize,
    pub n_states: usize,
    pub histories: Radix,
    pub values: Vec<f64>,
}

impl PlanTimeVector {
    pub fn get(&self, s: &PlanTimeState) -> f64 {
        self.values[self.histories.encode(&s.histories) * self.n_states + s.local_state]
    }

    /// Value at the initial plan-time belief (b0 on empty histories).
    pub fn value_at(&self, b0: &[f64]) -> f64 {
        b0.iter().zip(&self.values[..self.n_states]).map(|(b, v)| b * v).sum()
    }
}

fn tree_spaces(lm: &LocalModel) -> Vec<TreeSpace> {
    (0..lm.n_agents())
        .map(|q| TreeSpace::new(lm.actions.cards()[q], lm.observations.cards()[q], lm.horizon))
        .collect()
}

fn check_policy(lm: &LocalModel, pi: &JointPolicy) -> Result<()> {
    pi.check(lm.actions.cards(), lm.observations.cards(), lm.horizon)
}

/// Iterator over all joint local policies, agent 0's tree index most significant.
pub struct PolicyEnumeration {
    spaces: Vec<TreeSpace>,
    radix: Radix,
    next: usize,
}

impl Iterator for PolicyEnumeration {
    type Item = JointPolicy;

    fn next(&mut self) -> Option<JointPolicy> {
        if self.next >= self.radix.size() {
            return None;
        }
        let idx = self.radix.decode(self.next);
        self.next += 1;
        Some(JointPolicy {
            agents: idx.iter().zip(&self.spaces).map(|(&r, s)| s.to_policy(r)).collect(),
        })
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let n = self.radix.size() - self.next;
        (n, Some(n))
    }
}

pub fn enumerate_local_policies(lm: &LocalModel, cap: u128) -> Result<PolicyEnumeration> {
    lm.check_horizon()?;
    let spaces = tree_spaces(lm);
    let total = joint_policy_count(&spaces);
    if total > cap {
        return Err(Error::cap("joint local policies", total, cap));
    }
    let radix = Radix::new(spaces.iter().map(|s| s.count(0) as usize).collect());
    Ok(PolicyEnumeration { spaces, radix, next: 0 })
}

/// Backward recursion over plan-time states with the influence source at
/// stage `t` ranging over `sources(t)`.
fn pt_backward(lm: &LocalModel, pi: &JointPolicy, sources: &dyn Fn(usize) -> std::ops::Range<usize>) -> PlanTimeVector {
    let h = lm.horizon;
    let nx = lm.n_states();
    let obs_cards = lm.observations.cards().to_vec();
    let n = obs_cards.len();
    let hist_radix = |t: usize| Radix::new(obs_cards.iter().map(|c| c.pow(t as u32)).collect());
    let mut next: Option<PlanTimeVector> = None;
    for t in (0..h).rev() {
        let hr = hist_radix(t);
        let mut values = vec![0.0; hr.size() * nx];
        let mut hv = vec![0; n];
        let mut av = vec![0; n];
        let mut ov = vec![0; n];
        let mut child_hv = vec![0; n];
        for hist in 0..hr.size() {
            hr.decode_into(hist, &mut hv);
            pi.decision_rule(t).act(&hv, &mut av);
            let a = lm.actions.encode(&av);
            let children: Vec<usize> = match &next {
                Some(nv) => (0..lm.n_observations())
                    .map(|o| {
                        lm.observations.decode_into(o, &mut ov);
                        for q in 0..n {
                            child_hv[q] = hv[q] * obs_cards[q] + ov[q];
                        }
                        nv.histories.encode(&child_hv)
                    })
                    .collect(),
                None => Vec::new(),
            };
            for x in 0..nx {
                let mut best = f64::NEG_INFINITY;
                for u in sources(t) {
                    let v: f64 = lm
                        .successors(x, a, u)
                        .map(|(x2, p, r)| {
                            let cont = match &next {
                                Some(nv) => lm
                                    .observation_row(a, x2)
                                    .iter()
                                    .zip(&children)
                                    .map(|(q, &c)| q * nv.values[c * nx + x2])
                                    .sum::<f64>(),
                                None => 0.0,
                            };
                            p * (r + lm.discount * cont)
                        })
                        .sum();
                    if v > best {
                        best = v;
                    }
                }
                values[hist * nx + x] = best;
            }
        }
        next = Some(PlanTimeVector {
            stage: t,
            n_states: nx,
            histories: hr,
            values,
        });
    }
    next.expect("horizon is positive")
}

/// Stage-0 plan-time vector of `pi` with the influence source maximized per
/// (local state, history) at every stage.
pub fn io_pt_evaluate(lm: &LocalModel, pi: &JointPolicy) -> Result<PlanTimeVector> {
    lm.check_horizon()?;
    check_policy(lm, pi)?;
    let nu = lm.n_influence();
    Ok(pt_backward(lm, pi, &|_| 0..nu))
}

/// Value of `pi` at b0 when the influence source at stage `t` is `sequence[t]`.
pub fn evaluate_fixed_influence(lm: &LocalModel, pi: &JointPolicy, sequence: &[usize]) -> Result<f64> {
    lm.check_horizon()?;
    check_policy(lm, pi)?;
    if sequence.len() != lm.horizon {
        return Err(Error::DimensionMismatch(format!(
            "influence sequence has {} stages, horizon is {}",
            sequence.len(),
            lm.horizon
        )));
    }
    if let Some(&u) = sequence.iter().find(|&&u| u >= lm.n_influence()) {
        return Err(Error::range("influence source", u, lm.n_influence()));
    }
    Ok(pt_backward(lm, pi, &|t| sequence[t]..sequence[t] + 1).value_at(&lm.b0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecOptions {
    pub cap: u128,
}

impl Default for DecOptions {
    fn default() -> Self {
        DecOptions {
            cap: DEFAULT_POLICY_CAP,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecBound {
    pub bound: f64,
    pub policy: JointPolicy,
    /// Size of the joint local policy space.
    pub policy_count: u128,
    /// Complete policies whose value was computed during the search.
    pub policies_evaluated: u64,
    /// Partial assignments whose bound was computed during the search.
    pub search_nodes: u64,
    /// Joint sub-tree vectors computed for stages >= 1.
    pub memo_entries: u64,
    /// Reads of memoized sub-tree vectors: each parent sub-tree reads one
    /// child per joint observation, and each root action reads every
    /// stage-1 sub-tree once.
    pub memo_hits: u64,
}

struct Memo {
    /// Joint sub-trees of stage 1, mixed-radix over agents.
    radix: Radix,
    /// Stage-1 values transposed: `[x * J + q]`.
    transposed: Vec<f64>,
    entries: u64,
    hits: u64,
}

/// Values of all joint sub-trees rooted at stage 1.
fn stage_one_memo(lm: &LocalModel, spaces: &[TreeSpace]) -> Result<Memo> {
    let h = lm.horizon;
    let (nx, nu, no) = (lm.n_states(), lm.n_influence(), lm.n_observations());
    let n = spaces.len();
    let mut entries = 0u64;
    let mut hits = 0u64;
    let mut next: Option<(Radix, Vec<f64>)> = None;
    for t in (1..h).rev() {
        let joint: u128 = spaces.iter().fold(1u128, |acc, s| acc.saturating_mul(s.count(t)));
        let cells = joint.saturating_mul(nx as u128);
        if cells > TABLE_CAP {
            return Err(Error::cap("memoized sub-tree values", cells, TABLE_CAP));
        }
        let radix = Radix::new(spaces.iter().map(|s| s.count(t) as usize).collect());
        let values: Vec<f64> = (0..radix.size())
            .into_par_iter()
            .flat_map_iter(|q| {
                let qv = radix.decode(q);
                let av: Vec<usize> = (0..n).map(|i| spaces[i].action_of(t, qv[i])).collect();
                let a = lm.actions.encode(&av);
                let children: Vec<usize> = match &next {
                    Some((nr, _)) => (0..no)
                        .map(|o| {
                            let ov = lm.observations.decode(o);
                            let cv: Vec<usize> = (0..n).map(|i| spaces[i].child(t, qv[i], ov[i])).collect();
                            nr.encode(&cv)
                        })
                        .collect(),
                    None => Vec::new(),
                };
                let cont: Vec<f64> = match &next {
                    Some((_, nv)) => (0..nx)
                        .map(|x2| {
                            lm.observation_row(a, x2)
                                .iter()
                                .zip(&children)
                                .map(|(p, &c)| p * nv[c * nx + x2])
                                .sum::<f64>()
                                * lm.discount
                        })
                        .collect(),
                    None => vec![0.0; nx],
                };
                (0..nx)
                    .map(move |x| {
                        (0..nu)
                            .map(|u| lm.successors(x, a, u).map(|(x2, p, r)| p * (r + cont[x2])).sum::<f64>())
                            .fold(f64::NEG_INFINITY, f64::max)
                    })
                    .collect::<Vec<_>>()
            })
            .collect();
        entries += radix.size() as u64;
        if next.is_some() {
            hits += (radix.size() * no) as u64;
        }
        next = Some((radix, values));
    }
    let (radix, values) = next.expect("horizon >= 2");
    let j = radix.size();
    let mut transposed = vec![0.0; j * nx];
    for q in 0..j {
        for x in 0..nx {
            transposed[x * j + q] = values[q * nx + x];
        }
    }
    Ok(Memo {
        radix,
        transposed,
        entries,
        hits,
    })
}

/// Root terms for one joint action with every agent's continuation still open.
struct RootProblem {
    /// Row weights (b0 over states, or a single merged row).
    weights: Vec<f64>,
    nu: usize,
    no: usize,
    /// `[row * nu + u]`: expected immediate reward.
    base: Vec<f64>,
    /// `levels[j]`: `[((row * nu + u) * no + o) * P_j + p]` with agents `< j` fixed.
    levels: Vec<Vec<f64>>,
    prefix: Vec<usize>,
}

impl RootProblem {
    fn bound(&self, j: usize, pre: &[usize]) -> f64 {
        let level = &self.levels[j];
        let pj = self.prefix[j];
        let mut total = 0.0;
        for (row, w) in self.weights.iter().enumerate() {
            let mut best = f64::NEG_INFINITY;
            for u in 0..self.nu {
                let ru = row * self.nu + u;
                let mut v = self.base[ru];
                let off = ru * self.no;
                for o in 0..self.no {
                    v += level[(off + o) * pj + pre[o]];
                }
                if v > best {
                    best = v;
                }
            }
            total += w * best;
        }
        total
    }
}

fn root_problem(lm: &LocalModel, a: usize, memo: &Memo, n1: &[usize]) -> Result<RootProblem> {
    let (nx, nu, no) = (lm.n_states(), lm.n_influence(), lm.n_observations());
    let jn = memo.radix.size();
    let collapse = nu == 1;
    let active: Vec<usize> = (0..nx).filter(|&x| lm.b0[x] > 0.0).collect();
    let rows = if collapse { 1 } else { active.len() };
    let cells = (rows * nu * no) as u128 * jn as u128;
    if cells > TABLE_CAP {
        return Err(Error::cap("root continuation table", cells, TABLE_CAP));
    }
    let mut base = vec![0.0; rows * nu];
    let mut g = vec![0.0; rows * nu * no * jn];
    for (k, &x) in active.iter().enumerate() {
        let (row, w) = if collapse { (0, lm.b0[x]) } else { (k, 1.0) };
        for u in 0..nu {
            let ru = row * nu + u;
            for (x2, p, r) in lm.successors(x, a, u) {
                base[ru] += w * p * r;
                let wcol = &memo.transposed[x2 * jn..(x2 + 1) * jn];
                for (o, q) in lm.observation_row(a, x2).iter().enumerate() {
                    let c = w * p * q * lm.discount;
                    if c == 0.0 {
                        continue;
                    }
                    let dst = &mut g[(ru * no + o) * jn..(ru * no + o + 1) * jn];
                    for (d, v) in dst.iter_mut().zip(wcol) {
                        *d += c * v;
                    }
                }
            }
        }
    }
    let weights = if collapse {
        vec![1.0]
    } else {
        active.iter().map(|&x| lm.b0[x]).collect()
    };
    let n = n1.len();
    let mut prefix = vec![1usize; n + 1];
    for j in 0..n {
        prefix[j + 1] = prefix[j] * n1[j];
    }
    let mut levels = vec![Vec::new(); n + 1];
    levels[n] = g;
    for j in (0..n).rev() {
        let (pj, k) = (prefix[j], n1[j]);
        let src = &levels[j + 1];
        let blocks = rows * nu * no;
        let mut dst = vec![f64::NEG_INFINITY; blocks * pj];
        for b in 0..blocks {
            for p in 0..pj {
                let s = &src[b * pj * k + p * k..b * pj * k + (p + 1) * k];
                dst[b * pj + p] = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            }
        }
        levels[j] = dst;
    }
    Ok(RootProblem {
        weights,
        nu,
        no,
        base,
        levels,
        prefix,
    })
}

struct Search<'a> {
    root: &'a RootProblem,
    /// Per agent: continuation count and per-observation digit decoders.
    conts: Vec<Radix>,
    /// Per agent: local observation of agent j in each joint observation.
    obs_digit: Vec<Vec<usize>>,
    n1: Vec<usize>,
    best: f64,
    best_choice: Option<Vec<usize>>,
    choice: Vec<usize>,
    nodes: u64,
    leaves: u64,
}

impl Search<'_> {
    fn run(&mut self, j: usize, pre: &[usize]) {
        let n = self.conts.len();
        let no = pre.len();
        let count = self.conts[j].size();
        let mut kids: Vec<(f64, usize, Vec<usize>)> = Vec::with_capacity(count);
        let mut digits = vec![0; self.conts[j].len()];
        for c in 0..count {
            self.conts[j].decode_into(c, &mut digits);
            let next: Vec<usize> = (0..no)
                .map(|o| pre[o] * self.n1[j] + digits[self.obs_digit[j][o]])
                .collect();
            let b = self.root.bound(j + 1, &next);
            self.nodes += 1;
            if j + 1 == n {
                self.leaves += 1;
                if b > self.best {
                    self.best = b;
                    self.choice[j] = c;
                    self.best_choice = Some(self.choice.clone());
                }
            } else if b > self.best {
                kids.push((b, c, next));
            }
        }
        if j + 1 == n {
            return;
        }
        kids.sort_by(|x, y| y.0.total_cmp(&x.0).then(x.1.cmp(&y.1)));
        for (b, c, next) in kids {
            if b <= self.best {
                break;
            }
            self.choice[j] = c;
            self.run(j + 1, &next);
        }
    }
}

/// Exact maximum over decentralized local policies of the influence-optimistic
/// plan-time value at b0.
pub fn io_qdecpomdp_bound(lm: &LocalModel, opts: &DecOptions) -> Result<DecBound> {
    lm.check_horizon()?;
    let spaces = tree_spaces(lm);
    let policy_count = joint_policy_count(&spaces);
    if policy_count > opts.cap {
        return Err(Error::cap("joint local policies", policy_count, opts.cap));
    }
    let n = spaces.len();
    let (nx, nu, na) = (lm.n_states(), lm.n_influence(), lm.n_actions());

    if lm.horizon == 1 {
        let mut best = (f64::NEG_INFINITY, 0);
        for a in 0..na {
            let v: f64 = (0..nx)
                .map(|x| {
                    lm.b0[x]
                        * (0..nu)
                            .map(|u| lm.successors(x, a, u).map(|(_, p, r)| p * r).sum::<f64>())
                            .fold(f64::NEG_INFINITY, f64::max)
                })
                .sum();
            if v > best.0 {
                best = (v, a);
            }
        }
        let av = lm.actions.decode(best.1);
        return Ok(DecBound {
            bound: best.0,
            policy: JointPolicy {
                agents: av.iter().map(|&a| AgentPolicy { actions: vec![vec![a]] }).collect(),
            },
            policy_count,
            policies_evaluated: na as u64,
            search_nodes: na as u64,
            memo_entries: 0,
            memo_hits: 0,
        });
    }

    let memo = stage_one_memo(lm, &spaces)?;
    let n1: Vec<usize> = spaces.iter().map(|s| s.count(1) as usize).collect();
    let obs_cards = lm.observations.cards();
    let conts: Vec<Radix> = (0..n).map(|i| Radix::new(vec![n1[i]; obs_cards[i]])).collect();
    let obs_digit: Vec<Vec<usize>> = (0..n)
        .map(|i| {
            (0..lm.n_observations())
                .map(|o| lm.observations.component(o, i))
                .collect()
        })
        .collect();

    let mut best = f64::NEG_INFINITY;
    let mut best_policy: Option<(usize, Vec<usize>)> = None;
    let (mut nodes, mut leaves, mut hits) = (0u64, 0u64, memo.hits);
    for a in 0..na {
        let root = root_problem(lm, a, &memo, &n1)?;
        hits += memo.radix.size() as u64;
        let pre = vec![0usize; lm.n_observations()];
        nodes += 1;
        if n == 0 {
            let v = root.bound(0, &pre);
            leaves += 1;
            if v > best {
                best = v;
                best_policy = Some((a, Vec::new()));
            }
            continue;
        }
        if root.bound(0, &pre) <= best {
            continue;
        }
        let mut s = Search {
            root: &root,
            conts: conts.clone(),
            obs_digit: obs_digit.clone(),
            n1: n1.clone(),
            best,
            best_choice: None,
            choice: vec![0; n],
            nodes: 0,
            leaves: 0,
        };
        s.run(0, &pre);
        nodes += s.nodes;
        leaves += s.leaves;
        if let Some(c) = s.best_choice {
            best = s.best;
            best_policy = Some((a, c));
        }
    }
    let (a, choice) = best_policy.expect("at least one joint action");
    let av = lm.actions.decode(a);
    let policy = JointPolicy {
        agents: (0..n)
            .map(|i| {
                let root = av[i] as u128 * spaces[i].continuations(0) + choice[i] as u128;
                spaces[i].to_policy(root as usize)
            })
            .collect(),
    };
    Ok(DecBound {
        bound: best,
        policy,
        policy_count,
        policies_evaluated: leaves,
        search_nodes: nodes,
        memo_entries: memo.entries,
        memo_hits: hits,
    })
}
