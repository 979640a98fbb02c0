//! Parameterized benchmark generators: FireFightingGraph and Aloha.
//!
//! FireFightingGraph has `n` agents and `n + 1` houses on a line. Agent `i`
//! fights fire at house `i` (`left`) or house `i + 1` (`right`) and observes
//! whether the house it visited shows flames. Default dynamics per house, with
//! levels clamped to `[0, n_fire_levels - 1]`:
//!
//! * no firefighter: +1 with `p_spread` if a neighbor burns; otherwise +1 with
//!   `p_burn_on` if the house itself burns (an extinguished house stays out);
//! * one firefighter: -1 with `p_extinguish1` (no burning neighbor) or
//!   `p_extinguish1_neighbor` (some neighbor burns), otherwise unchanged;
//! * two firefighters: level 0 with `p_extinguish2`, otherwise as for one.
//!
//! Aloha has one backlog factor and one channel factor per island. An island
//! transmits when it sends with a nonempty backlog; its channel becomes idle,
//! success or collision depending on how many islands in its neighborhood
//! transmit, and its packet is delivered only on success.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::index::Radix;
use crate::model::{Cpt, Factor, FactoredDecPOMDP, LocalReward, Provenance};
use crate::subproblem::SubProblem;

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FfgParams {
    pub n_agents: usize,
    pub n_fire_levels: usize,
    pub p_extinguish2: f64,
    pub p_extinguish1: f64,
    pub p_extinguish1_neighbor: f64,
    pub p_spread: f64,
    pub p_burn_on: f64,
    /// Probability of observing flames per fire level; `None` means 0.2, 0.5, then 0.8.
    pub p_flames: Option<Vec<f64>>,
    /// Reward per next-stage fire level; `None` means `-level`.
    pub reward_per_level: Option<Vec<f64>>,
    pub horizon: usize,
}

impl Default for FfgParams {
    fn default() -> Self {
        FfgParams {
            n_agents: 2,
            n_fire_levels: 3,
            p_extinguish2: 1.0,
            p_extinguish1: 1.0,
            p_extinguish1_neighbor: 0.6,
            p_spread: 0.8,
            p_burn_on: 0.4,
            p_flames: None,
            reward_per_level: None,
            horizon: 3,
        }
    }
}

impl FfgParams {
    pub fn new(n_agents: usize) -> Self {
        FfgParams {
            n_agents,
            ..Default::default()
        }
    }

    pub fn with_horizon(mut self, horizon: usize) -> Self {
        self.horizon = horizon;
        self
    }

    /// Fills optional tables with their defaults.
    pub fn resolved(&self) -> Self {
        let levels = self.n_fire_levels;
        let mut p = self.clone();
        if p.p_flames.is_none() {
            p.p_flames = Some(
                (0..levels)
                    .map(|l| match l {
                        0 => 0.2,
                        1 => 0.5,
                        _ => 0.8,
                    })
                    .collect(),
            );
        }
        if p.reward_per_level.is_none() {
            p.reward_per_level = Some((0..levels).map(|l| -(l as f64)).collect());
        }
        p
    }

    fn check(&self) -> Result<()> {
        if self.n_agents == 0 {
            return Err(Error::InvalidParams("n_agents must be at least 1".into()));
        }
        if self.n_fire_levels < 2 {
            return Err(Error::InvalidParams("n_fire_levels must be at least 2".into()));
        }
        if self.horizon == 0 {
            return Err(Error::InvalidParams("horizon must be at least 1".into()));
        }
        let probs = [
            ("p_extinguish2", self.p_extinguish2),
            ("p_extinguish1", self.p_extinguish1),
            ("p_extinguish1_neighbor", self.p_extinguish1_neighbor),
            ("p_spread", self.p_spread),
            ("p_burn_on", self.p_burn_on),
        ];
        for (name, p) in probs {
            check_prob(name, p)?;
        }
        let r = self.resolved();
        let flames = r.p_flames.unwrap();
        if flames.len() != self.n_fire_levels {
            return Err(Error::InvalidParams(format!(
                "p_flames has {} entries for {} fire levels",
                flames.len(),
                self.n_fire_levels
            )));
        }
        for p in flames {
            check_prob("p_flames", p)?;
        }
        let rew = r.reward_per_level.unwrap();
        if rew.len() != self.n_fire_levels || rew.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidParams(
                "reward_per_level needs one finite entry per fire level".into(),
            ));
        }
        Ok(())
    }

    /// Next-level distribution of one house.
    fn house_row(&self, level: usize, neighbor_burning: bool, firefighters: usize) -> Vec<f64> {
        let top = self.n_fire_levels - 1;
        let mut row = vec![0.0; self.n_fire_levels];
        let mut add = |l: usize, p: f64| row[l] += p;
        let one = |add: &mut dyn FnMut(usize, f64), scale: f64| {
            let p = if neighbor_burning {
                self.p_extinguish1_neighbor
            } else {
                self.p_extinguish1
            };
            add(level.saturating_sub(1), scale * p);
            add(level, scale * (1.0 - p));
        };
        match firefighters {
            0 => {
                let p = if neighbor_burning {
                    self.p_spread
                } else if level > 0 {
                    self.p_burn_on
                } else {
                    0.0
                };
                add((level + 1).min(top), p);
                add(level, 1.0 - p);
            }
            1 => one(&mut add, 1.0),
            _ => {
                add(0, self.p_extinguish2);
                one(&mut add, 1.0 - self.p_extinguish2);
            }
        }
        row
    }
}

fn check_prob(name: &str, p: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidParams(format!("{name} = {p} is not a probability")));
    }
    Ok(())
}

pub const LEFT: usize = 0;
pub const RIGHT: usize = 1;
pub const FLAMES: usize = 0;

pub fn make_ffg(params: &FfgParams) -> Result<FactoredDecPOMDP> {
    params.check()?;
    let p = params.resolved();
    let n = p.n_agents;
    let houses = n + 1;
    let levels = p.n_fire_levels;

    let mut transition_cpts = Vec::with_capacity(houses);
    for k in 0..houses {
        let prev: Vec<usize> = (k.saturating_sub(1)..=(k + 1).min(houses - 1)).collect();
        let agents: Vec<usize> = (k.saturating_sub(1)..=k.min(n - 1)).collect();
        let mut cards: Vec<usize> = vec![levels; prev.len()];
        cards.extend(std::iter::repeat_n(2, agents.len()));
        let radix = Radix::new(cards);
        let table = (0..radix.size())
            .map(|row| {
                let v = radix.decode(row);
                let level = v[prev.iter().position(|&h| h == k).unwrap()];
                let neighbor_burning = prev.iter().zip(&v).any(|(&h, &l)| h != k && l > 0);
                let firefighters = agents
                    .iter()
                    .zip(&v[prev.len()..])
                    .filter(|(&i, &a)| (i == k && a == LEFT) || (i + 1 == k && a == RIGHT))
                    .count();
                p.house_row(level, neighbor_burning, firefighters)
            })
            .collect();
        transition_cpts.push(Cpt {
            child: k,
            parent_factors_prev: prev,
            parent_factors_next: vec![],
            parent_agents: agents,
            table,
        });
    }

    let flames = p.p_flames.clone().unwrap();
    let observation_cpts = (0..n)
        .map(|i| {
            let mut table = Vec::with_capacity(levels * levels * 2);
            for left_level in 0..levels {
                for right_level in 0..levels {
                    for a in [LEFT, RIGHT] {
                        let l = if a == LEFT { left_level } else { right_level };
                        table.push(vec![flames[l], 1.0 - flames[l]]);
                    }
                }
            }
            Cpt {
                child: i,
                parent_factors_prev: vec![],
                parent_factors_next: vec![i, i + 1],
                parent_agents: vec![i],
                table,
            }
        })
        .collect();

    let reward_table = p.reward_per_level.clone().unwrap();
    let rewards = (0..houses)
        .map(|k| LocalReward {
            name: format!("house{k}"),
            factor_scope: vec![],
            agent_scope: vec![],
            next_factor_scope: vec![k],
            table: reward_table.clone(),
        })
        .collect();

    let model = FactoredDecPOMDP {
        name: format!("ffg-{n}"),
        provenance: Some(Provenance {
            generator: "ffg".into(),
            params: serde_json::to_value(&p)?,
            tool_version: TOOL_VERSION.into(),
        }),
        agents: (0..n).map(|i| format!("agent{i}")).collect(),
        factors: (0..houses)
            .map(|k| Factor {
                name: format!("house{k}"),
                cardinality: levels,
            })
            .collect(),
        actions: vec![vec!["left".into(), "right".into()]; n],
        observations: vec![vec!["flames".into(), "no_flames".into()]; n],
        transition_cpts,
        observation_cpts,
        rewards,
        b0: vec![vec![1.0 / levels as f64; levels]; houses],
        horizon: p.horizon,
        discount: 1.0,
    };
    model.ensure_valid()?;
    Ok(model)
}

/// Sub-problem of the first `n_sp_agents` agents with houses `0..=n_sp_agents`;
/// only the last house receives outside influence.
pub fn make_ffg_edge_sp(params: &FfgParams, n_sp_agents: usize) -> Result<(Arc<FactoredDecPOMDP>, SubProblem)> {
    if n_sp_agents == 0 || n_sp_agents >= params.n_agents {
        return Err(Error::InvalidParams(format!(
            "edge sub-problem needs 1 <= agents < {}, got {n_sp_agents}",
            params.n_agents
        )));
    }
    let m = Arc::new(make_ffg(params)?);
    let agents: Vec<usize> = (0..n_sp_agents).collect();
    let houses: Vec<usize> = (0..=n_sp_agents).collect();
    let sp = SubProblem::extract(m.clone(), &agents, &houses, &houses)?;
    Ok((m, sp))
}

/// Sub-problem of agents `1..=n_sp_agents` with houses `1..=n_sp_agents + 1`;
/// both end houses receive outside influence.
pub fn make_ffg_internal_sp(params: &FfgParams, n_sp_agents: usize) -> Result<(Arc<FactoredDecPOMDP>, SubProblem)> {
    if n_sp_agents == 0 || n_sp_agents + 2 > params.n_agents {
        return Err(Error::InvalidParams(format!(
            "internal sub-problem with {n_sp_agents} agents needs at least {} agents in the full problem, got {}",
            n_sp_agents + 2,
            params.n_agents
        )));
    }
    let m = Arc::new(make_ffg(params)?);
    let agents: Vec<usize> = (1..=n_sp_agents).collect();
    let houses: Vec<usize> = (1..=n_sp_agents + 1).collect();
    let sp = SubProblem::extract(m.clone(), &agents, &houses, &houses)?;
    Ok((m, sp))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AlohaParams {
    pub n_islands: usize,
    pub topology: String,
    /// Cardinality of each backlog factor (0 means empty).
    pub backlog_levels: usize,
    pub p_arrival: f64,
    /// Probability that an island's collision observation is correct.
    pub p_obs_correct: f64,
    pub horizon: usize,
}

impl Default for AlohaParams {
    fn default() -> Self {
        AlohaParams {
            n_islands: 3,
            topology: "line".into(),
            backlog_levels: 2,
            p_arrival: 0.5,
            p_obs_correct: 0.9,
            horizon: 3,
        }
    }
}

pub const WAIT: usize = 0;
pub const SEND: usize = 1;
const IDLE: usize = 0;
const SUCCESS: usize = 1;
const COLLISION: usize = 2;

pub fn make_aloha(params: &AlohaParams) -> Result<FactoredDecPOMDP> {
    let p = params;
    if p.n_islands < 2 {
        return Err(Error::InvalidParams("n_islands must be at least 2".into()));
    }
    if p.topology != "line" {
        return Err(Error::InvalidParams(format!("unknown topology '{}'", p.topology)));
    }
    if p.backlog_levels < 2 {
        return Err(Error::InvalidParams("backlog_levels must be at least 2".into()));
    }
    if p.horizon == 0 {
        return Err(Error::InvalidParams("horizon must be at least 1".into()));
    }
    check_prob("p_arrival", p.p_arrival)?;
    check_prob("p_obs_correct", p.p_obs_correct)?;

    let n = p.n_islands;
    let b = p.backlog_levels;
    let backlog = |i: usize| 2 * i;
    let channel = |i: usize| 2 * i + 1;
    let hood = |i: usize| (i.saturating_sub(1)..=(i + 1).min(n - 1)).collect::<Vec<_>>();

    let mut factors = Vec::with_capacity(2 * n);
    let mut transition_cpts = Vec::with_capacity(2 * n);
    for i in 0..n {
        factors.push(Factor {
            name: format!("backlog{i}"),
            cardinality: b,
        });
        factors.push(Factor {
            name: format!("channel{i}"),
            cardinality: 3,
        });
        let nb = hood(i);
        let prev: Vec<usize> = nb.iter().map(|&j| backlog(j)).collect();
        let mut cards = vec![b; nb.len()];
        cards.extend(std::iter::repeat_n(2, nb.len()));
        let radix = Radix::new(cards);
        let mut backlog_table = Vec::with_capacity(radix.size());
        let mut channel_table = Vec::with_capacity(radix.size());
        for row in 0..radix.size() {
            let v = radix.decode(row);
            let transmits = |k: usize| v[k] > 0 && v[nb.len() + k] == SEND;
            let count = (0..nb.len()).filter(|&k| transmits(k)).count();
            let me = nb.iter().position(|&j| j == i).unwrap();
            let delivered = transmits(me) && count == 1;
            let level = v[me] - usize::from(delivered);
            let mut brow = vec![0.0; b];
            brow[(level + 1).min(b - 1)] += p.p_arrival;
            brow[level] += 1.0 - p.p_arrival;
            backlog_table.push(brow);
            let mut crow = vec![0.0; 3];
            crow[match count {
                0 => IDLE,
                1 => SUCCESS,
                _ => COLLISION,
            }] = 1.0;
            channel_table.push(crow);
        }
        transition_cpts.push(Cpt {
            child: backlog(i),
            parent_factors_prev: prev.clone(),
            parent_factors_next: vec![],
            parent_agents: nb.clone(),
            table: backlog_table,
        });
        transition_cpts.push(Cpt {
            child: channel(i),
            parent_factors_prev: prev,
            parent_factors_next: vec![],
            parent_agents: nb,
            table: channel_table,
        });
    }

    let observation_cpts = (0..n)
        .map(|i| Cpt {
            child: i,
            parent_factors_prev: vec![],
            parent_factors_next: vec![channel(i)],
            parent_agents: vec![],
            table: (0..3)
                .map(|c| {
                    let q = if c == COLLISION {
                        p.p_obs_correct
                    } else {
                        1.0 - p.p_obs_correct
                    };
                    vec![1.0 - q, q]
                })
                .collect(),
        })
        .collect();

    let rewards = (0..n)
        .map(|i| LocalReward {
            name: format!("island{i}"),
            factor_scope: vec![],
            agent_scope: vec![],
            next_factor_scope: vec![backlog(i)],
            table: (0..b).map(|l| -(l as f64)).collect(),
        })
        .collect();

    let mut b0 = Vec::with_capacity(2 * n);
    for _ in 0..n {
        b0.push(vec![1.0 / b as f64; b]);
        b0.push(vec![1.0, 0.0, 0.0]);
    }

    let model = FactoredDecPOMDP {
        name: format!("aloha-{n}"),
        provenance: Some(Provenance {
            generator: "aloha".into(),
            params: serde_json::to_value(p)?,
            tool_version: TOOL_VERSION.into(),
        }),
        agents: (0..n).map(|i| format!("island{i}")).collect(),
        factors,
        actions: vec![vec!["wait".into(), "send".into()]; n],
        observations: vec![vec!["no_collision".into(), "collision".into()]; n],
        transition_cpts,
        observation_cpts,
        rewards,
        b0,
        horizon: p.horizon,
        discount: 1.0,
    };
    model.ensure_valid()?;
    Ok(model)
}
