//! Explicit-state view of a factored model with sparse transition rows.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::index::{for_each_product, Radix};
use crate::model::FactoredDecPOMDP;

pub const DEFAULT_FLATTEN_CAP: usize = 10_000;

#[derive(Debug, Clone)]
pub struct FlatModel {
    pub states: Radix,
    pub actions: Radix,
    pub observations: Radix,
    pub n_rewards: usize,
    pub b0: Vec<f64>,
    pub horizon: usize,
    pub discount: f64,
    row_start: Vec<usize>,
    succ_state: Vec<usize>,
    succ_prob: Vec<f64>,
    succ_total: Vec<f64>,
    succ_rewards: Vec<f64>,
    obs: Vec<f64>,
}

/// One nonzero transition `s -> state` under a fixed joint action.
#[derive(Debug, Clone, Copy)]
pub struct Successor<'a> {
    pub state: usize,
    pub prob: f64,
    /// Sum of all local rewards on this transition.
    pub reward: f64,
    /// Each local reward on this transition, in model order.
    pub rewards: &'a [f64],
}

impl FlatModel {
    pub fn n_states(&self) -> usize {
        self.states.size()
    }

    pub fn n_actions(&self) -> usize {
        self.actions.size()
    }

    pub fn n_observations(&self) -> usize {
        self.observations.size()
    }

    pub fn n_agents(&self) -> usize {
        self.actions.len()
    }

    pub fn successors(&self, s: usize, a: usize) -> impl Iterator<Item = Successor<'_>> + '_ {
        let row = s * self.n_actions() + a;
        let nr = self.n_rewards;
        (self.row_start[row]..self.row_start[row + 1]).map(move |j| Successor {
            state: self.succ_state[j],
            prob: self.succ_prob[j],
            reward: self.succ_total[j],
            rewards: &self.succ_rewards[j * nr..(j + 1) * nr],
        })
    }

    pub fn transition_prob(&self, s: usize, a: usize, s_next: usize) -> f64 {
        let row = s * self.n_actions() + a;
        let range = self.row_start[row]..self.row_start[row + 1];
        match self.succ_state[range.clone()].binary_search(&s_next) {
            Ok(j) => self.succ_prob[range.start + j],
            Err(_) => 0.0,
        }
    }

    /// Total reward of a transition, or `None` if it has zero probability.
    pub fn reward(&self, s: usize, a: usize, s_next: usize) -> Option<f64> {
        let row = s * self.n_actions() + a;
        let range = self.row_start[row]..self.row_start[row + 1];
        self.succ_state[range.clone()]
            .binary_search(&s_next)
            .ok()
            .map(|j| self.succ_total[range.start + j])
    }

    /// Joint observation distribution given `a` and the next state.
    pub fn observation_row(&self, a: usize, s_next: usize) -> &[f64] {
        let no = self.n_observations();
        let base = (a * self.n_states() + s_next) * no;
        &self.obs[base..base + no]
    }

    pub fn observation_prob(&self, a: usize, s_next: usize, o: usize) -> f64 {
        self.observation_row(a, s_next)[o]
    }
}

/// Flattens `m`, failing if it has more than `cap` joint states.
pub fn flatten(m: &FactoredDecPOMDP, cap: usize) -> Result<FlatModel> {
    m.ensure_valid()?;
    let states = Radix::bounded(
        m.factors.iter().map(|f| f.cardinality).collect(),
        cap,
        "flat state space",
    )?;
    let actions = m.action_radix();
    let observations = m.observation_radix();
    let ns = states.size();
    let na = actions.size();
    let no = observations.size();
    let nr = m.rewards.len();
    let entries = (na as u128) * (ns as u128) * (no as u128);
    if entries > 64 * 1024 * 1024 {
        return Err(Error::cap("flat observation table", entries, 64 * 1024 * 1024));
    }

    type Row = (Vec<usize>, Vec<f64>, Vec<f64>, Vec<f64>);
    let rows: Vec<Vec<Row>> = (0..ns)
        .into_par_iter()
        .map(|s| {
            let sv = states.decode(s);
            (0..na)
                .map(|a| {
                    let av = actions.decode(a);
                    let dists: Vec<&[f64]> = (0..m.n_factors()).map(|k| m.transition_row(k, &sv, &av)).collect();
                    let mut row: Row = Default::default();
                    for_each_product(&dists, |next, p| {
                        row.0.push(states.encode(next));
                        row.1.push(p);
                        let mut total = 0.0;
                        for l in 0..nr {
                            let r = m.reward_value(l, &sv, &av, next);
                            total += r;
                            row.3.push(r);
                        }
                        row.2.push(total);
                    });
                    row
                })
                .collect()
        })
        .collect();

    let mut row_start = Vec::with_capacity(ns * na + 1);
    let (mut succ_state, mut succ_prob, mut succ_total, mut succ_rewards) =
        (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    row_start.push(0);
    for per_s in rows {
        for (st, pr, tot, rw) in per_s {
            succ_state.extend(st);
            succ_prob.extend(pr);
            succ_total.extend(tot);
            succ_rewards.extend(rw);
            row_start.push(succ_state.len());
        }
    }

    let obs: Vec<f64> = (0..na * ns)
        .into_par_iter()
        .flat_map_iter(|idx| {
            let (a, s2) = (idx / ns, idx % ns);
            let av = actions.decode(a);
            let sv = states.decode(s2);
            let dists: Vec<&[f64]> = (0..m.n_agents()).map(|i| m.observation_row(i, &av, &sv)).collect();
            let mut row = vec![0.0; no];
            for_each_product(&dists, |o, p| row[observations.encode(o)] = p);
            row
        })
        .collect();

    let b0 = (0..ns).map(|s| m.b0_prob(&states.decode(s))).collect();
    Ok(FlatModel {
        states,
        actions,
        observations,
        n_rewards: nr,
        b0,
        horizon: m.horizon,
        discount: m.discount,
        row_start,
        succ_state,
        succ_prob,
        succ_total,
        succ_rewards,
        obs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::tests::toy;
    use rand::{Rng, SeedableRng};

    #[test]
    fn flat_agrees_with_factored() {
        let m = toy();
        let f = flatten(&m, DEFAULT_FLATTEN_CAP).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let s = rng.random_range(0..f.n_states());
            let a = rng.random_range(0..f.n_actions());
            let t = rng.random_range(0..f.n_states());
            let o = rng.random_range(0..f.n_observations());
            let (sv, av, tv) = (f.states.decode(s), f.actions.decode(a), f.states.decode(t));
            let p = m.joint_transition_prob(&sv, &av, &tv).unwrap();
            assert!((f.transition_prob(s, a, t) - p).abs() < 1e-15);
            if p > 0.0 {
                assert_eq!(f.reward(s, a, t), Some(m.joint_reward(&sv, &av, &tv).unwrap()));
            }
            let q = m.joint_observation_prob(&av, &tv, &f.observations.decode(o)).unwrap();
            assert!((f.observation_prob(a, t, o) - q).abs() < 1e-15);
        }
    }

    #[test]
    fn rows_sum_to_one() {
        let f = flatten(&toy(), DEFAULT_FLATTEN_CAP).unwrap();
        for s in 0..f.n_states() {
            for a in 0..f.n_actions() {
                let total: f64 = f.successors(s, a).map(|x| x.prob).sum();
                assert!((total - 1.0).abs() < 1e-9);
            }
        }
        assert!((f.b0.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn cap_is_enforced() {
        assert!(matches!(flatten(&toy(), 3), Err(Error::CapExceeded { .. })));
    }
}
