//! Exact finite-horizon value-vector dynamic programming over local states,
//! with regular or influence-optimistic back-projections and incremental
//! pruning.

use std::collections::VecDeque;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lp::{find_witness, Witness};
use crate::subproblem::LocalModel;

pub const DEFAULT_VECTOR_CAP: usize = 200_000;

/// Pointwise comparisons treat differences below this as ties.
const DOMINANCE_TOL: f64 = 1e-12;
/// A vector must win by more than this at its witness belief to be kept.
const WITNESS_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackupMode {
    #[default]
    Io,
    Regular,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PruneMode {
    /// Duplicates and pointwise-dominated vectors only.
    Pointwise,
    /// Pointwise pass followed by witness LPs.
    #[default]
    Lp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DpOptions {
    pub mode: BackupMode,
    pub prune: PruneMode,
    pub cap: usize,
}

impl Default for DpOptions {
    fn default() -> Self {
        DpOptions {
            mode: BackupMode::Io,
            prune: PruneMode::Lp,
            cap: DEFAULT_VECTOR_CAP,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValueVector {
    pub values: Vec<f64>,
    /// First action of the policy fragment.
    pub action: usize,
    /// Per observation, the index of the successor vector in the next stage's set.
    pub successors: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VectorSet {
    pub stage: usize,
    pub vectors: Vec<ValueVector>,
}

impl VectorSet {
    /// Value of the set at a belief and the index of the maximizing vector.
    pub fn best_at(&self, b: &[f64]) -> (f64, usize) {
        let mut best = (f64::NEG_INFINITY, 0);
        for (i, v) in self.vectors.iter().enumerate() {
            let x = dot(b, &v.values);
            if x > best.0 {
                best = (x, i);
            }
        }
        best
    }
}

/// Probability table over local states.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalBelief(Vec<f64>);

impl LocalBelief {
    pub fn new(p: Vec<f64>) -> Result<Self> {
        let s: f64 = p.iter().sum();
        if p.iter().any(|x| !(0.0..=1.0 + 1e-12).contains(x)) || (s - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidParams(format!("belief sums to {s}")));
        }
        Ok(LocalBelief(p))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PruneStats {
    pub stage: usize,
    /// Vectors produced by cross-sums before pruning.
    pub generated: usize,
    pub kept: usize,
}

#[derive(Debug, Clone)]
pub struct DpSolution {
    /// `sets[t]` for the computed stages; earlier stages are `None`.
    pub sets: Vec<Option<VectorSet>>,
    pub prune_stats: Vec<PruneStats>,
    /// (x, u) evaluations made by back-projections, per computed stage.
    pub backprojection_ops: Vec<u64>,
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn check_mode(lm: &LocalModel, mode: BackupMode) -> Result<()> {
    if mode == BackupMode::Regular && lm.has_nlaf {
        return Err(Error::InvalidParams(
            "regular back-projection needs a sub-problem without non-locally affected factors".into(),
        ));
    }
    Ok(())
}

fn check_len(lm: &LocalModel, v: &[f64]) -> Result<()> {
    if v.len() != lm.n_states() {
        return Err(Error::DimensionMismatch(format!(
            "vector has {} entries, local model has {} states",
            v.len(),
            lm.n_states()
        )));
    }
    Ok(())
}

/// Back-projections of `nu` through action `a` for every observation at once.
/// Returns `[o][x]` and the number of (x, u) pairs evaluated.
fn backproject_all(lm: &LocalModel, nu: &[f64], a: usize, mode: BackupMode) -> (Vec<Vec<f64>>, u64) {
    let (nx, no) = (lm.n_states(), lm.n_observations());
    let nu_count = match mode {
        BackupMode::Io => lm.n_influence(),
        BackupMode::Regular => 1,
    };
    let mut out = vec![vec![f64::NEG_INFINITY; nx]; no];
    let mut acc = vec![0.0; no];
    for x in 0..nx {
        for u in 0..nu_count {
            acc.iter_mut().for_each(|v| *v = 0.0);
            for (x2, p, _) in lm.successors(x, a, u) {
                let w = p * nu[x2];
                for (o, q) in lm.observation_row(a, x2).iter().enumerate() {
                    acc[o] += q * w;
                }
            }
            for o in 0..no {
                if acc[o] > out[o][x] {
                    out[o][x] = acc[o];
                }
            }
        }
    }
    (out, (nx * nu_count) as u64)
}

/// nu^{ao}(s) = sum_{s'} O(o|a,s') T(s'|s,a) nu(s') on a model without NLAFs.
pub fn regular_backproject(lm: &LocalModel, nu: &[f64], a: usize, o: usize) -> Result<Vec<f64>> {
    check_mode(lm, BackupMode::Regular)?;
    check_len(lm, nu)?;
    fixed_backproject(lm, nu, a, o, 0)
}

/// Back-projection under one fixed influence source `u`.
pub fn fixed_backproject(lm: &LocalModel, nu: &[f64], a: usize, o: usize, u: usize) -> Result<Vec<f64>> {
    check_len(lm, nu)?;
    if a >= lm.n_actions() || o >= lm.n_observations() || u >= lm.n_influence() {
        return Err(Error::range(
            "action/observation/influence",
            a.max(o).max(u),
            lm.n_actions(),
        ));
    }
    Ok((0..lm.n_states())
        .map(|x| {
            lm.successors(x, a, u)
                .map(|(x2, p, _)| p * lm.observation_row(a, x2)[o] * nu[x2])
                .sum()
        })
        .collect())
}

/// Per-state maximum over influence sources of the fixed-source back-projection,
/// with the maximizing source (lowest index on ties).
pub fn io_backproject(lm: &LocalModel, nu: &[f64], a: usize, o: usize) -> Result<(Vec<f64>, Vec<usize>)> {
    check_len(lm, nu)?;
    let mut values = vec![f64::NEG_INFINITY; lm.n_states()];
    let mut argmax = vec![0; lm.n_states()];
    for u in 0..lm.n_influence() {
        let f = fixed_backproject(lm, nu, a, o, u)?;
        for x in 0..lm.n_states() {
            if f[x] > values[x] {
                values[x] = f[x];
                argmax[x] = u;
            }
        }
    }
    Ok((values, argmax))
}

/// Expected immediate reward of `a` per local state (maximized over `u` in IO mode).
pub fn immediate_reward(lm: &LocalModel, a: usize, mode: BackupMode) -> Vec<f64> {
    let nu_count = match mode {
        BackupMode::Io => lm.n_influence(),
        BackupMode::Regular => 1,
    };
    (0..lm.n_states())
        .map(|x| {
            (0..nu_count)
                .map(|u| lm.successors(x, a, u).map(|(_, p, r)| p * r).sum::<f64>())
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .collect()
}

fn dominates(a: &[f64], b: &[f64]) -> bool {
    a.iter().zip(b).all(|(x, y)| *x >= *y - DOMINANCE_TOL)
}

/// Indices (in input order) of vectors that survive duplicate and pointwise
/// dominance removal. Among equal vectors the first is kept.
pub fn prune_pointwise(vs: &[&[f64]]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..vs.len()).collect();
    let sums: Vec<f64> = vs.iter().map(|v| v.iter().sum()).collect();
    order.sort_by(|&i, &j| sums[j].total_cmp(&sums[i]).then(i.cmp(&j)));
    let mut kept: Vec<usize> = Vec::new();
    for i in order {
        if !kept.iter().any(|&k| dominates(vs[k], vs[i])) {
            kept.push(i);
        }
    }
    kept.sort_unstable();
    kept
}

fn lex_greater(a: &[f64], b: &[f64]) -> bool {
    for (x, y) in a.iter().zip(b) {
        if x > y {
            return true;
        }
        if x < y {
            return false;
        }
    }
    false
}

fn best_at(b: &[f64], vs: &[&[f64]], candidates: impl Iterator<Item = usize>) -> usize {
    let mut best: Option<(usize, f64)> = None;
    for i in candidates {
        let v = dot(b, vs[i]);
        best = match best {
            None => Some((i, v)),
            Some((j, w)) => {
                if v > w + DOMINANCE_TOL
                    || (v >= w - DOMINANCE_TOL && (lex_greater(vs[i], vs[j]) || (!lex_greater(vs[j], vs[i]) && i < j)))
                {
                    Some((i, v))
                } else {
                    Some((j, w))
                }
            }
        };
    }
    best.expect("nonempty candidate set").0
}

/// Indices (in input order) of the vectors needed for the upper envelope.
pub fn prune_lp(vs: &[&[f64]]) -> Vec<usize> {
    let cand = prune_pointwise(vs);
    if cand.len() <= 1 {
        return cand;
    }
    let n = vs[cand[0]].len();
    let scale = vs.iter().flat_map(|v| v.iter()).fold(1.0f64, |m, x| m.max(x.abs()));
    let tol = WITNESS_TOL * scale;
    let mut kept: Vec<usize> = Vec::new();
    for x in 0..n {
        let mut corner = vec![0.0; n];
        corner[x] = 1.0;
        let best = best_at(&corner, vs, cand.iter().copied());
        if !kept.contains(&best) {
            kept.push(best);
        }
    }
    let mut remaining: VecDeque<usize> = cand.iter().copied().filter(|i| !kept.contains(i)).collect();
    while let Some(i) = remaining.pop_front() {
        let others: Vec<&[f64]> = kept.iter().map(|&k| vs[k]).collect();
        match find_witness(vs[i], &others, tol) {
            Witness::Absent => {}
            // Keeping an undecided vector is safe: it never lowers the envelope.
            Witness::Unknown => kept.push(i),
            Witness::Found(b) => {
                let best = best_at(&b, vs, std::iter::once(i).chain(remaining.iter().copied()));
                kept.push(best);
                if best != i {
                    remaining.retain(|&k| k != best);
                    remaining.push_front(i);
                }
            }
        }
    }
    kept.sort_unstable();
    kept
}

pub fn prune_indices(vs: &[&[f64]], mode: PruneMode) -> Vec<usize> {
    match mode {
        PruneMode::Pointwise => prune_pointwise(vs),
        PruneMode::Lp => prune_lp(vs),
    }
}

/// Pointwise pruning of a vector set; the stage is preserved.
pub fn prune(set: &VectorSet) -> VectorSet {
    let refs: Vec<&[f64]> = set.vectors.iter().map(|v| v.values.as_slice()).collect();
    VectorSet {
        stage: set.stage,
        vectors: prune_pointwise(&refs)
            .into_iter()
            .map(|i| set.vectors[i].clone())
            .collect(),
    }
}

fn check_cap(what: &str, n: u128, cap: usize) -> Result<()> {
    if n > cap as u128 {
        return Err(Error::cap(what, n, cap as u128));
    }
    Ok(())
}

/// Terminal stage: one vector per action.
fn last_stage(lm: &LocalModel, opts: &DpOptions) -> (VectorSet, PruneStats) {
    let t = lm.horizon - 1;
    let all: Vec<ValueVector> = (0..lm.n_actions())
        .map(|a| ValueVector {
            values: immediate_reward(lm, a, opts.mode),
            action: a,
            successors: Vec::new(),
        })
        .collect();
    let refs: Vec<&[f64]> = all.iter().map(|v| v.values.as_slice()).collect();
    let keep = prune_indices(&refs, opts.prune);
    let vectors: Vec<ValueVector> = keep.into_iter().map(|i| all[i].clone()).collect();
    let stats = PruneStats {
        stage: t,
        generated: all.len(),
        kept: vectors.len(),
    };
    (VectorSet { stage: t, vectors }, stats)
}

/// Back-projections of every vector of `next`, indexed `[j][a][o]`, scaled by the discount.
fn backproject_set(lm: &LocalModel, next: &VectorSet, mode: BackupMode) -> (Vec<Vec<Vec<Vec<f64>>>>, u64) {
    let res: Vec<(Vec<Vec<Vec<f64>>>, u64)> = next
        .vectors
        .par_iter()
        .map(|nu| {
            let mut ops = 0;
            let per_a = (0..lm.n_actions())
                .map(|a| {
                    let (mut bp, n) = backproject_all(lm, &nu.values, a, mode);
                    ops += n;
                    if lm.discount != 1.0 {
                        bp.iter_mut().flatten().for_each(|v| *v *= lm.discount);
                    }
                    bp
                })
                .collect();
            (per_a, ops)
        })
        .collect();
    let ops = res.iter().map(|r| r.1).sum();
    (res.into_iter().map(|r| r.0).collect(), ops)
}

fn stage_backup(
    lm: &LocalModel,
    next: &VectorSet,
    stage: usize,
    opts: &DpOptions,
) -> Result<(VectorSet, PruneStats, u64)> {
    let (bp, ops) = backproject_set(lm, next, opts.mode);
    let mut generated = 0usize;
    let mut out: Vec<ValueVector> = Vec::new();
    for a in 0..lm.n_actions() {
        let mut cur: Vec<(Vec<f64>, Vec<usize>)> = vec![(immediate_reward(lm, a, opts.mode), Vec::new())];
        for o in 0..lm.n_observations() {
            let refs: Vec<&[f64]> = bp.iter().map(|per_a| per_a[a][o].as_slice()).collect();
            let choices = prune_indices(&refs, opts.prune);
            check_cap("cross-sum size", cur.len() as u128 * choices.len() as u128, opts.cap)?;
            let mut sums = Vec::with_capacity(cur.len() * choices.len());
            for (base, succ) in &cur {
                for &j in &choices {
                    let values: Vec<f64> = base.iter().zip(refs[j]).map(|(x, y)| x + y).collect();
                    let mut s = succ.clone();
                    s.push(j);
                    sums.push((values, s));
                }
            }
            generated += sums.len();
            let srefs: Vec<&[f64]> = sums.iter().map(|s| s.0.as_slice()).collect();
            let keep = prune_indices(&srefs, opts.prune);
            let mut taken: Vec<Option<(Vec<f64>, Vec<usize>)>> = sums.into_iter().map(Some).collect();
            cur = keep.into_iter().map(|i| taken[i].take().unwrap()).collect();
        }
        out.extend(cur.into_iter().map(|(values, successors)| ValueVector {
            values,
            action: a,
            successors,
        }));
    }
    check_cap("vector set size", out.len() as u128, opts.cap)?;
    let refs: Vec<&[f64]> = out.iter().map(|v| v.values.as_slice()).collect();
    let keep = prune_indices(&refs, opts.prune);
    let mut taken: Vec<Option<ValueVector>> = out.into_iter().map(Some).collect();
    let vectors: Vec<ValueVector> = keep.into_iter().map(|i| taken[i].take().unwrap()).collect();
    let stats = PruneStats {
        stage,
        generated,
        kept: vectors.len(),
    };
    Ok((VectorSet { stage, vectors }, stats, ops))
}

/// Vector sets for stages `first..h`.
pub fn dp_solve_to(lm: &LocalModel, opts: &DpOptions, first: usize) -> Result<DpSolution> {
    lm.check_horizon()?;
    check_mode(lm, opts.mode)?;
    let h = lm.horizon;
    let first = first.min(h - 1);
    let mut sets: Vec<Option<VectorSet>> = vec![None; h];
    let mut prune_stats = Vec::new();
    let mut backprojection_ops = Vec::new();
    let (last, stats) = last_stage(lm, opts);
    sets[h - 1] = Some(last);
    prune_stats.push(stats);
    backprojection_ops.push(0);
    for t in (first..h - 1).rev() {
        let (set, stats, ops) = stage_backup(lm, sets[t + 1].as_ref().unwrap(), t, opts)?;
        sets[t] = Some(set);
        prune_stats.push(stats);
        backprojection_ops.push(ops);
    }
    prune_stats.reverse();
    backprojection_ops.reverse();
    Ok(DpSolution {
        sets,
        prune_stats,
        backprojection_ops,
    })
}

/// Vector sets for every stage.
pub fn dp_solve(lm: &LocalModel, opts: &DpOptions) -> Result<DpSolution> {
    dp_solve_to(lm, opts, 0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MpomdpBound {
    pub bound: f64,
    pub best_action: usize,
    /// Kept vectors per materialized stage. Stage 1 is materialized only at
    /// h = 2; for longer horizons it is searched implicitly from stage 2.
    pub vectors_per_stage: Vec<usize>,
    pub prune_stats: Vec<PruneStats>,
    pub backprojection_ops: u64,
    /// Branch-and-bound nodes expanded over the implicit stage-1 cross-sums.
    pub search_nodes: u64,
}

/// max over the stage-0 vectors at b0, evaluated without materializing stage 0.
///
/// For a root pair (a, o) the contribution is max over stage-1 vectors nu of
/// `g(nu) = sum_x b0(x) max_u <w_{x,u}, nu>`. `g` is convex and monotone, so
/// for h >= 3 its maximum over the stage-1 cross-sums is found by branch and
/// bound over the per-observation choices instead of pruning those sums.
pub fn io_qmpomdp_bound(lm: &LocalModel, opts: &DpOptions) -> Result<MpomdpBound> {
    lm.check_horizon()?;
    check_mode(lm, opts.mode)?;
    let h = lm.horizon;
    let b0 = &lm.b0;
    let rewards: Vec<f64> = (0..lm.n_actions())
        .map(|a| dot(b0, &immediate_reward(lm, a, opts.mode)))
        .collect();
    if h == 1 {
        let (bound, best_action) = argmax(&rewards);
        return Ok(MpomdpBound {
            bound,
            best_action,
            vectors_per_stage: Vec::new(),
            prune_stats: Vec::new(),
            backprojection_ops: 0,
            search_nodes: 0,
        });
    }
    let first = if h == 2 { 1 } else { 2 };
    let sol = dp_solve_to(lm, opts, first)?;
    let next = sol.sets[first].as_ref().unwrap();
    let (future, ops, search_nodes) = if h == 2 {
        let (bp, ops) = backproject_set(lm, next, opts.mode);
        let future: Vec<Vec<f64>> = (0..lm.n_actions())
            .map(|a| {
                (0..lm.n_observations())
                    .map(|o| {
                        bp.iter()
                            .map(|per_a| dot(b0, &per_a[a][o]))
                            .fold(f64::NEG_INFINITY, f64::max)
                    })
                    .collect()
            })
            .collect();
        (future, ops, 0)
    } else {
        root_search(lm, next, opts)?
    };
    let values: Vec<f64> = (0..lm.n_actions())
        .map(|a| rewards[a] + future[a].iter().sum::<f64>())
        .collect();
    let (bound, best_action) = argmax(&values);
    Ok(MpomdpBound {
        bound,
        best_action,
        vectors_per_stage: sol.sets[first..]
            .iter()
            .map(|s| s.as_ref().unwrap().vectors.len())
            .collect(),
        prune_stats: sol.prune_stats,
        backprojection_ops: sol.backprojection_ops.iter().sum::<u64>() + ops,
        search_nodes,
    })
}

/// Root contributions `[a][o]` from the stage-2 set, with back-projection ops
/// and search nodes.
fn root_search(lm: &LocalModel, v2: &VectorSet, opts: &DpOptions) -> Result<(Vec<Vec<f64>>, u64, u64)> {
    let (na, no) = (lm.n_actions(), lm.n_observations());
    let nu = match opts.mode {
        BackupMode::Io => lm.n_influence(),
        BackupMode::Regular => 1,
    };
    let (bp, mut ops) = backproject_set(lm, v2, opts.mode);
    // Stage-1 building blocks per next action: reward vector and, per
    // observation, the envelope of the candidate back-projections.
    let blocks: Vec<Block> = (0..na)
        .map(|a1| {
            let per_o = (0..no)
                .map(|o1| {
                    let refs: Vec<&[f64]> = bp.iter().map(|per_a| per_a[a1][o1].as_slice()).collect();
                    prune_indices(&refs, opts.prune).into_iter().map(|j| refs[j]).collect()
                })
                .collect();
            (immediate_reward(lm, a1, opts.mode), per_o)
        })
        .collect();
    let support: Vec<usize> = (0..lm.n_states()).filter(|&x| lm.b0[x] > 0.0).collect();
    let weights: Vec<f64> = support.iter().map(|&x| lm.b0[x]).collect();
    let pairs: Vec<(usize, usize)> = (0..na).flat_map(|a| (0..no).map(move |o| (a, o))).collect();
    let res: Vec<(f64, u64, u64)> = pairs
        .par_iter()
        .map(|&(a, o)| {
            // Discounted w_{x,u}(x') = T_u(x'|x,a) O(o|a,x') over the support of b0.
            let w: Vec<Vec<(usize, f64)>> = support
                .iter()
                .flat_map(|&x| (0..nu).map(move |u| (x, u)))
                .map(|(x, u)| {
                    lm.successors(x, a, u)
                        .map(|(x2, p, _)| (x2, lm.discount * p * lm.observation_row(a, x2)[o]))
                        .filter(|e| e.1 != 0.0)
                        .collect()
                })
                .collect();
            let project =
                |v: &[f64]| -> Vec<f64> { w.iter().map(|row| row.iter().map(|&(x2, p)| p * v[x2]).sum()).collect() };
            let mut search = Search {
                weights: &weights,
                nu,
                best: f64::NEG_INFINITY,
                nodes: 0,
            };
            let mut ops = 0u64;
            let mut roots: Vec<Branch> = blocks
                .iter()
                .map(|(r, per_o)| {
                    let base = project(r);
                    let levels: Vec<Vec<Vec<f64>>> = per_o
                        .iter()
                        .map(|cands| cands.iter().map(|v| project(v)).collect())
                        .collect();
                    ops += (w.len() * (1 + per_o.iter().map(Vec::len).sum::<usize>())) as u64;
                    let rest = suffix_maxima(&levels, w.len());
                    Branch {
                        ub: search.score(&base, &rest[0]),
                        base,
                        levels,
                        rest,
                    }
                })
                .collect();
            roots.sort_by(|x, y| y.ub.total_cmp(&x.ub));
            for b in &roots {
                if b.ub > search.best {
                    search.descend(0, &b.base, &b.levels, &b.rest);
                }
            }
            (search.best, ops, search.nodes)
        })
        .collect();
    let mut future = vec![vec![0.0; no]; na];
    let mut nodes = 0;
    for (&(a, o), (v, n_ops, n_nodes)) in pairs.iter().zip(res) {
        future[a][o] = v;
        ops += n_ops;
        nodes += n_nodes;
    }
    Ok((future, ops, nodes))
}

/// Reward vector and per-observation candidate back-projections of one stage-1 action.
type Block<'a> = (Vec<f64>, Vec<Vec<&'a [f64]>>);

/// Search root for one stage-1 action, projected onto the (x, u) table.
struct Branch {
    ub: f64,
    base: Vec<f64>,
    levels: Vec<Vec<Vec<f64>>>,
    rest: Vec<Vec<f64>>,
}

/// `rest[d][i]` = sum over levels `>= d` of the best entry `i` at that level.
fn suffix_maxima(levels: &[Vec<Vec<f64>>], len: usize) -> Vec<Vec<f64>> {
    let mut rest = vec![vec![0.0; len]; levels.len() + 1];
    for d in (0..levels.len()).rev() {
        for i in 0..len {
            let m = levels[d].iter().map(|v| v[i]).fold(f64::NEG_INFINITY, f64::max);
            rest[d][i] = rest[d + 1][i] + m;
        }
    }
    rest
}

struct Search<'a> {
    weights: &'a [f64],
    nu: usize,
    best: f64,
    nodes: u64,
}

impl Search<'_> {
    /// sum_x b0(x) max_u (partial + rest) over the (x, u) table.
    fn score(&self, partial: &[f64], rest: &[f64]) -> f64 {
        self.weights
            .iter()
            .enumerate()
            .map(|(k, b)| {
                let r = k * self.nu..(k + 1) * self.nu;
                let m = partial[r.clone()]
                    .iter()
                    .zip(&rest[r])
                    .map(|(p, q)| p + q)
                    .fold(f64::NEG_INFINITY, f64::max);
                b * m
            })
            .sum()
    }

    fn descend(&mut self, d: usize, partial: &[f64], levels: &[Vec<Vec<f64>>], rest: &[Vec<f64>]) {
        self.nodes += 1;
        if d == levels.len() {
            let v = self.score(partial, &rest[d]);
            if v > self.best {
                self.best = v;
            }
            return;
        }
        let mut children: Vec<(f64, Vec<f64>)> = levels[d]
            .iter()
            .map(|s| {
                let child: Vec<f64> = partial.iter().zip(s).map(|(p, q)| p + q).collect();
                (self.score(&child, &rest[d + 1]), child)
            })
            .collect();
        children.sort_by(|x, y| y.0.total_cmp(&x.0));
        for (ub, child) in children {
            if ub <= self.best {
                break;
            }
            self.descend(d + 1, &child, levels, rest);
        }
    }
}

fn argmax(v: &[f64]) -> (f64, usize) {
    let mut best = (f64::NEG_INFINITY, 0);
    for (i, &x) in v.iter().enumerate() {
        if x > best.0 {
            best = (x, i);
        }
    }
    best
}
