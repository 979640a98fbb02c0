//! Ground truth at desk scale: exact policy evaluation, exhaustive optimal
//! policies, locally-optimal values, Monte Carlo evaluation, and the classical
//! Q-MMDP and MPOMDP values.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flat::FlatModel;
use crate::index::Radix;
use crate::model::FactoredDecPOMDP;
use crate::policy::{joint_policy_count, AgentPolicy, JointPolicy, TreeSpace};

pub const DEFAULT_ORACLE_CAP: u128 = 10_000_000;
const TABLE_CAP: u128 = 1 << 26;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyValue {
    pub total: f64,
    /// Contribution of each local reward, in model order.
    pub per_reward: Vec<f64>,
}

impl PolicyValue {
    pub fn block(&self, rewards: &[usize]) -> f64 {
        rewards.iter().map(|&l| self.per_reward[l]).sum()
    }
}

fn check_policy(flat: &FlatModel, pi: &JointPolicy) -> Result<()> {
    pi.check(flat.actions.cards(), flat.observations.cards(), flat.horizon)
}

fn history_radix(flat: &FlatModel, t: usize) -> Radix {
    Radix::new(flat.observations.cards().iter().map(|c| c.pow(t as u32)).collect())
}

/// Exact value by propagating the distribution over (joint history, state).
pub fn exact_policy_value(flat: &FlatModel, pi: &JointPolicy) -> Result<PolicyValue> {
    check_policy(flat, pi)?;
    let ns = flat.n_states();
    let n = flat.n_agents();
    let cards = flat.observations.cards().to_vec();
    let mut per_reward = vec![0.0; flat.n_rewards];
    let mut dist = flat.b0.clone();
    let mut scale = 1.0;
    let (mut hv, mut av, mut ov, mut cv) = (vec![0; n], vec![0; n], vec![0; n], vec![0; n]);
    for t in 0..flat.horizon {
        let hr = history_radix(flat, t);
        let last = t + 1 == flat.horizon;
        let next_hr = history_radix(flat, t + 1);
        let cells = next_hr.size() as u128 * ns as u128;
        if !last && cells > TABLE_CAP {
            return Err(Error::cap("history distribution", cells, TABLE_CAP));
        }
        let mut next = if last {
            Vec::new()
        } else {
            vec![0.0; next_hr.size() * ns]
        };
        let rule = pi.decision_rule(t);
        for hist in 0..hr.size() {
            hr.decode_into(hist, &mut hv);
            rule.act(&hv, &mut av);
            let a = flat.actions.encode(&av);
            for s in 0..ns {
                let mass = dist[hist * ns + s];
                if mass == 0.0 {
                    continue;
                }
                for succ in flat.successors(s, a) {
                    let w = mass * succ.prob;
                    for (acc, r) in per_reward.iter_mut().zip(succ.rewards) {
                        *acc += scale * w * r;
                    }
                    if last {
                        continue;
                    }
                    for (o, q) in flat.observation_row(a, succ.state).iter().enumerate() {
                        if *q == 0.0 {
                            continue;
                        }
                        flat.observations.decode_into(o, &mut ov);
                        for i in 0..n {
                            cv[i] = hv[i] * cards[i] + ov[i];
                        }
                        next[next_hr.encode(&cv) * ns + succ.state] += w * q;
                    }
                }
            }
        }
        dist = next;
        scale *= flat.discount;
    }
    Ok(PolicyValue {
        total: per_reward.iter().sum(),
        per_reward,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchStats {
    pub policies_evaluated: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleResult {
    pub value: f64,
    pub policy: JointPolicy,
    /// Value of the optimal policy per local reward.
    pub per_reward: Vec<f64>,
    pub stats: SearchStats,
}

impl OracleResult {
    /// Value of the optimal policy restricted to some rewards.
    pub fn block_value(&self, rewards: &[usize]) -> f64 {
        rewards.iter().map(|&l| self.per_reward[l]).sum()
    }
}

/// Per-reward values of every joint policy, computed from memoized joint
/// sub-tree values at stage 1 and root-level continuation tables.
struct Exhaustive {
    spaces: Vec<TreeSpace>,
    root: Radix,
    n_rewards: usize,
    n_obs: usize,
    /// `[a][l]`: immediate expected reward at the root.
    r0: Vec<f64>,
    /// `[((a * no + o) * J1 + q) * nr + l]`.
    cont: Vec<f64>,
    stage1: Radix,
    obs_digits: Vec<Vec<usize>>,
}

impl Exhaustive {
    fn new(flat: &FlatModel, cap: u128) -> Result<Self> {
        let h = flat.horizon;
        let n = flat.n_agents();
        let spaces: Vec<TreeSpace> = (0..n)
            .map(|i| TreeSpace::new(flat.actions.cards()[i], flat.observations.cards()[i], h))
            .collect();
        let total = joint_policy_count(&spaces);
        if total > cap {
            return Err(Error::cap("joint policies", total, cap));
        }
        let (ns, na, no, nr) = (flat.n_states(), flat.n_actions(), flat.n_observations(), flat.n_rewards);
        let root = Radix::new(spaces.iter().map(|s| s.count(0) as usize).collect());
        let r0: Vec<f64> = (0..na)
            .flat_map(|a| {
                let mut acc = vec![0.0; nr];
                for s in 0..ns {
                    if flat.b0[s] == 0.0 {
                        continue;
                    }
                    for succ in flat.successors(s, a) {
                        for (x, r) in acc.iter_mut().zip(succ.rewards) {
                            *x += flat.b0[s] * succ.prob * r;
                        }
                    }
                }
                acc
            })
            .collect();
        let obs_digits = (0..n)
            .map(|i| (0..no).map(|o| flat.observations.component(o, i)).collect())
            .collect();
        if h == 1 {
            return Ok(Exhaustive {
                spaces,
                root,
                n_rewards: nr,
                n_obs: no,
                r0,
                cont: Vec::new(),
                stage1: Radix::new(vec![]),
                obs_digits,
            });
        }

        // Stage tables V_t[q][l][s] for t = h-1 .. 1.
        let mut next: Option<(Radix, Vec<f64>)> = None;
        for t in (1..h).rev() {
            let joint = spaces.iter().fold(1u128, |acc, s| acc.saturating_mul(s.count(t)));
            let cells = joint.saturating_mul((nr * ns) as u128);
            if cells > TABLE_CAP {
                return Err(Error::cap("memoized sub-tree values", cells, TABLE_CAP));
            }
            let radix = Radix::new(spaces.iter().map(|s| s.count(t) as usize).collect());
            let values: Vec<f64> = (0..radix.size())
                .into_par_iter()
                .flat_map_iter(|q| {
                    let qv = radix.decode(q);
                    let av: Vec<usize> = (0..n).map(|i| spaces[i].action_of(t, qv[i])).collect();
                    let a = flat.actions.encode(&av);
                    let children: Vec<usize> = match &next {
                        Some((nr_, _)) => (0..no)
                            .map(|o| {
                                let ov = flat.observations.decode(o);
                                let cv: Vec<usize> = (0..n).map(|i| spaces[i].child(t, qv[i], ov[i])).collect();
                                nr_.encode(&cv)
                            })
                            .collect(),
                        None => Vec::new(),
                    };
                    let mut out = vec![0.0; nr * ns];
                    for s in 0..ns {
                        for succ in flat.successors(s, a) {
                            for l in 0..nr {
                                let mut v = succ.rewards[l];
                                if let Some((_, nv)) = &next {
                                    let c: f64 = flat
                                        .observation_row(a, succ.state)
                                        .iter()
                                        .zip(&children)
                                        .map(|(q, &ch)| q * nv[(ch * nr + l) * ns + succ.state])
                                        .sum();
                                    v += flat.discount * c;
                                }
                                out[l * ns + s] += succ.prob * v;
                            }
                        }
                    }
                    out
                })
                .collect();
            next = Some((radix, values));
        }
        let (stage1, v1) = next.unwrap();
        let j1 = stage1.size();
        let cells = (na * no * j1 * nr) as u128;
        if cells > TABLE_CAP {
            return Err(Error::cap("root continuation table", cells, TABLE_CAP));
        }
        let mut cont = vec![0.0; na * no * j1 * nr];
        for a in 0..na {
            // w[o][s'] = sum_s b0(s) T(s'|s,a) O(o|a,s')
            let mut w = vec![0.0; no * ns];
            for s in 0..ns {
                if flat.b0[s] == 0.0 {
                    continue;
                }
                for succ in flat.successors(s, a) {
                    for (o, q) in flat.observation_row(a, succ.state).iter().enumerate() {
                        w[o * ns + succ.state] += flat.b0[s] * succ.prob * q;
                    }
                }
            }
            for o in 0..no {
                for q in 0..j1 {
                    for l in 0..nr {
                        let base = (q * nr + l) * ns;
                        let v: f64 = (0..ns).map(|s2| w[o * ns + s2] * v1[base + s2]).sum();
                        cont[((a * no + o) * j1 + q) * nr + l] = flat.discount * v;
                    }
                }
            }
        }
        Ok(Exhaustive {
            spaces,
            root,
            n_rewards: nr,
            n_obs: no,
            r0,
            cont,
            stage1,
            obs_digits,
        })
    }

    fn count(&self) -> usize {
        self.root.size()
    }

    /// Per-reward values of root policy `k` into `out`.
    fn values(&self, k: usize, scratch: &mut Vec<usize>, out: &mut [f64]) {
        let n = self.spaces.len();
        let nr = self.n_rewards;
        scratch.resize(n, 0);
        self.root.decode_into(k, scratch);
        let mut a = 0;
        for i in 0..n {
            a = a * self.spaces[i].n_actions + self.spaces[i].action_of(0, scratch[i]);
        }
        out.copy_from_slice(&self.r0[a * nr..(a + 1) * nr]);
        if self.cont.is_empty() {
            return;
        }
        let j1 = self.stage1.size();
        for o in 0..self.n_obs {
            let mut q = 0;
            for i in 0..n {
                q = q * self.spaces[i].count(1) as usize + self.spaces[i].child(0, scratch[i], self.obs_digits[i][o]);
            }
            let base = ((a * self.n_obs + o) * j1 + q) * nr;
            for l in 0..nr {
                out[l] += self.cont[base + l];
            }
        }
    }

    fn policy(&self, k: usize) -> JointPolicy {
        let idx = self.root.decode(k);
        JointPolicy {
            agents: idx.iter().zip(&self.spaces).map(|(&r, s)| s.to_policy(r)).collect(),
        }
    }
}

const CHUNK: usize = 1 << 12;

/// Exhaustive optimum; among equal values the lowest policy index wins
/// (agent 0's tree index most significant).
pub fn brute_force_optimal(flat: &FlatModel, cap: u128) -> Result<OracleResult> {
    let ex = Exhaustive::new(flat, cap)?;
    let nr = ex.n_rewards;
    let count = ex.count();
    let chunks = count.div_ceil(CHUNK);
    let (value, k) = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut scratch = Vec::new();
            let mut vals = vec![0.0; nr];
            let mut best = (f64::NEG_INFINITY, usize::MAX);
            for k in c * CHUNK..((c + 1) * CHUNK).min(count) {
                ex.values(k, &mut scratch, &mut vals);
                let v: f64 = vals.iter().sum();
                if v > best.0 {
                    best = (v, k);
                }
            }
            best
        })
        .reduce(
            || (f64::NEG_INFINITY, usize::MAX),
            |x, y| if y.0 > x.0 || (y.0 == x.0 && y.1 < x.1) { y } else { x },
        );
    let mut per_reward = vec![0.0; nr];
    ex.values(k, &mut Vec::new(), &mut per_reward);
    Ok(OracleResult {
        value,
        policy: ex.policy(k),
        per_reward,
        stats: SearchStats {
            policies_evaluated: count as u64,
        },
    })
}

/// max over all joint policies of the value of each reward block, from one pass.
pub fn locally_optimal_values(flat: &FlatModel, blocks: &[Vec<usize>], cap: u128) -> Result<Vec<f64>> {
    for b in blocks {
        if let Some(&l) = b.iter().find(|&&l| l >= flat.n_rewards) {
            return Err(Error::range("reward", l, flat.n_rewards));
        }
    }
    let ex = Exhaustive::new(flat, cap)?;
    let nr = ex.n_rewards;
    let count = ex.count();
    let chunks = count.div_ceil(CHUNK);
    let nb = blocks.len();
    Ok((0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut scratch = Vec::new();
            let mut vals = vec![0.0; nr];
            let mut best = vec![f64::NEG_INFINITY; nb];
            for k in c * CHUNK..((c + 1) * CHUNK).min(count) {
                ex.values(k, &mut scratch, &mut vals);
                for (b, block) in blocks.iter().enumerate() {
                    let v: f64 = block.iter().map(|&l| vals[l]).sum();
                    if v > best[b] {
                        best[b] = v;
                    }
                }
            }
            best
        })
        .reduce(
            || vec![f64::NEG_INFINITY; nb],
            |x, y| x.iter().zip(&y).map(|(a, b)| a.max(*b)).collect(),
        ))
}

pub fn locally_optimal_value(flat: &FlatModel, rewards: &[usize], cap: u128) -> Result<f64> {
    Ok(locally_optimal_values(flat, &[rewards.to_vec()], cap)?[0])
}

/// Classical Q-MMDP value: full observability, joint action choice.
pub fn qmmdp_value(flat: &FlatModel) -> Result<f64> {
    if flat.horizon == 0 {
        return Err(Error::InvalidParams("horizon must be at least 1".into()));
    }
    let (ns, na) = (flat.n_states(), flat.n_actions());
    let mut v = vec![0.0; ns];
    let mut q0 = vec![0.0; ns * na];
    for t in (0..flat.horizon).rev() {
        let q: Vec<f64> = (0..ns * na)
            .map(|i| {
                let (s, a) = (i / na, i % na);
                flat.successors(s, a)
                    .map(|x| x.prob * (x.reward + flat.discount * v[x.state]))
                    .sum()
            })
            .collect();
        v = (0..ns)
            .map(|s| {
                q[s * na..(s + 1) * na]
                    .iter()
                    .copied()
                    .fold(f64::NEG_INFINITY, f64::max)
            })
            .collect();
        if t == 0 {
            q0 = q;
        }
    }
    Ok((0..na)
        .map(|a| (0..ns).map(|s| flat.b0[s] * q0[s * na + a]).sum::<f64>())
        .fold(f64::NEG_INFINITY, f64::max))
}

/// Optimal MPOMDP value by exhaustive expansion of the (unnormalized) belief tree.
pub fn mpomdp_value(flat: &FlatModel) -> Result<f64> {
    if flat.horizon == 0 {
        return Err(Error::InvalidParams("horizon must be at least 1".into()));
    }
    let nodes = ((flat.n_actions() * flat.n_observations()) as u128).saturating_pow(flat.horizon as u32 - 1);
    if nodes > TABLE_CAP {
        return Err(Error::cap("belief tree nodes", nodes, TABLE_CAP));
    }
    fn rec(flat: &FlatModel, beta: &[f64], steps: usize) -> f64 {
        let (ns, no) = (flat.n_states(), flat.n_observations());
        let mut best = f64::NEG_INFINITY;
        for a in 0..flat.n_actions() {
            let mut v = 0.0;
            let mut next = if steps > 1 { vec![0.0; no * ns] } else { Vec::new() };
            for s in 0..ns {
                if beta[s] == 0.0 {
                    continue;
                }
                for x in flat.successors(s, a) {
                    v += beta[s] * x.prob * x.reward;
                    if steps > 1 {
                        for (o, q) in flat.observation_row(a, x.state).iter().enumerate() {
                            next[o * ns + x.state] += beta[s] * x.prob * q;
                        }
                    }
                }
            }
            if steps > 1 {
                for o in 0..no {
                    let b = &next[o * ns..(o + 1) * ns];
                    if b.iter().any(|&p| p > 0.0) {
                        v += flat.discount * rec(flat, b, steps - 1);
                    }
                }
            }
            if v > best {
                best = v;
            }
        }
        best
    }
    Ok(rec(flat, &flat.b0, flat.horizon))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub n_sims: u64,
    pub seed: u64,
}

fn sample(rng: &mut ChaCha8Rng, p: &[f64]) -> usize {
    let r: f64 = rng.random();
    let mut acc = 0.0;
    for (i, q) in p.iter().enumerate() {
        acc += q;
        if r < acc {
            return i;
        }
    }
    p.iter().rposition(|&q| q > 0.0).unwrap_or(0)
}

/// Return of one episode; simulation `sim` uses stream `sim` of the seeded generator.
pub fn simulate_episode(m: &FactoredDecPOMDP, pi: &JointPolicy, seed: u64, sim: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(sim);
    let n = m.n_agents();
    let mut s: Vec<usize> = m.b0.iter().map(|row| sample(&mut rng, row)).collect();
    let mut hist = vec![0usize; n];
    let mut a = vec![0usize; n];
    let mut s2 = vec![0usize; m.n_factors()];
    let mut total = 0.0;
    let mut scale = 1.0;
    for t in 0..m.horizon {
        for i in 0..n {
            a[i] = pi.agents[i].actions[t][hist[i]];
        }
        for k in 0..m.n_factors() {
            s2[k] = sample(&mut rng, m.transition_row(k, &s, &a));
        }
        total += scale
            * (0..m.rewards.len())
                .map(|l| m.reward_value(l, &s, &a, &s2))
                .sum::<f64>();
        for i in 0..n {
            let o = sample(&mut rng, m.observation_row(i, &a, &s2));
            hist[i] = hist[i] * m.n_observations(i) + o;
        }
        std::mem::swap(&mut s, &mut s2);
        scale *= m.discount;
    }
    total
}

pub fn monte_carlo_value(m: &FactoredDecPOMDP, pi: &JointPolicy, n_sims: u64, seed: u64) -> Result<MonteCarloEstimate> {
    if n_sims == 0 {
        return Err(Error::InvalidParams("n_sims must be at least 1".into()));
    }
    m.ensure_valid()?;
    let acts: Vec<usize> = m.actions.iter().map(Vec::len).collect();
    let obs: Vec<usize> = m.observations.iter().map(Vec::len).collect();
    pi.check(&acts, &obs, m.horizon)?;
    let returns: Vec<f64> = (0..n_sims)
        .into_par_iter()
        .map(|sim| simulate_episode(m, pi, seed, sim))
        .collect();
    let n = n_sims as f64;
    let mean = returns.iter().sum::<f64>() / n;
    let std_error = if n_sims > 1 {
        let var = returns.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (var / n).sqrt()
    } else {
        0.0
    };
    Ok(MonteCarloEstimate {
        mean,
        std_error,
        n_sims,
        seed,
    })
}

/// Producer of a heuristic joint policy, used as the lower bound in EAF reports.
pub trait HeuristicPolicy {
    fn name(&self) -> String;
    fn policy(&self, flat: &FlatModel) -> Result<JointPolicy>;
}

/// Uniformly random action per agent and history.
#[derive(Debug, Clone, Copy)]
pub struct RandomPolicy {
    pub seed: u64,
}

impl HeuristicPolicy for RandomPolicy {
    fn name(&self) -> String {
        "random".into()
    }

    fn policy(&self, flat: &FlatModel) -> Result<JointPolicy> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let agents = (0..flat.n_agents())
            .map(|i| {
                let (na, no) = (flat.actions.cards()[i], flat.observations.cards()[i]);
                AgentPolicy {
                    actions: (0..flat.horizon)
                        .map(|t| (0..no.pow(t as u32)).map(|_| rng.random_range(0..na)).collect())
                        .collect(),
                }
            })
            .collect();
        Ok(JointPolicy { agents })
    }
}

/// Open-loop plan: at each stage the joint action maximizing the Q-MMDP
/// values under the predicted state distribution, ignoring observations.
#[derive(Debug, Clone, Copy, Default)]
pub struct OpenLoopQmmdp;

impl HeuristicPolicy for OpenLoopQmmdp {
    fn name(&self) -> String {
        "open_loop_qmmdp".into()
    }

    fn policy(&self, flat: &FlatModel) -> Result<JointPolicy> {
        let (ns, na, h) = (flat.n_states(), flat.n_actions(), flat.horizon);
        let mut qs: Vec<Vec<f64>> = vec![Vec::new(); h];
        let mut v = vec![0.0; ns];
        for t in (0..h).rev() {
            let q: Vec<f64> = (0..ns * na)
                .map(|i| {
                    flat.successors(i / na, i % na)
                        .map(|x| x.prob * (x.reward + flat.discount * v[x.state]))
                        .sum()
                })
                .collect();
            v = (0..ns)
                .map(|s| {
                    q[s * na..(s + 1) * na]
                        .iter()
                        .copied()
                        .fold(f64::NEG_INFINITY, f64::max)
                })
                .collect();
            qs[t] = q;
        }
        let mut d = flat.b0.clone();
        let mut plan = Vec::with_capacity(h);
        for q in &qs {
            let mut best = (f64::NEG_INFINITY, 0);
            for a in 0..na {
                let val: f64 = (0..ns).map(|s| d[s] * q[s * na + a]).sum();
                if val > best.0 {
                    best = (val, a);
                }
            }
            plan.push(best.1);
            let mut next = vec![0.0; ns];
            for s in 0..ns {
                for x in flat.successors(s, best.1) {
                    next[x.state] += d[s] * x.prob;
                }
            }
            d = next;
        }
        let agents = (0..flat.n_agents())
            .map(|i| AgentPolicy {
                actions: plan
                    .iter()
                    .enumerate()
                    .map(|(t, &a)| vec![flat.actions.component(a, i); flat.observations.cards()[i].pow(t as u32)])
                    .collect(),
            })
            .collect();
        Ok(JointPolicy { agents })
    }
}
