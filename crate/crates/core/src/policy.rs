//! Deterministic policies over observation histories and the indexing of
//! policy trees used by the exhaustive solvers.
//!
//! A history of length `t` is the mixed-radix index of its observations,
//! earliest first, so appending observation `o` to history `h` gives
//! `h * |O| + o`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One agent's policy: `actions[t][h]` is the action after history `h` of length `t`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentPolicy {
    pub actions: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JointPolicy {
    pub agents: Vec<AgentPolicy>,
}

/// Per agent, the stage-`t` slice of a policy.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecisionRule<'a> {
    pub stage: usize,
    pub per_agent: Vec<&'a [usize]>,
}

/// A policy of the agents of a sub-problem.
pub type LocalJointPolicy = JointPolicy;

impl AgentPolicy {
    pub fn horizon(&self) -> usize {
        self.actions.len()
    }

    /// Checks table shapes and action ranges.
    pub fn check(&self, n_actions: usize, n_obs: usize, horizon: usize) -> Result<()> {
        if self.actions.len() != horizon {
            return Err(Error::DimensionMismatch(format!(
                "policy has {} stages, horizon is {horizon}",
                self.actions.len()
            )));
        }
        let mut width = 1usize;
        for (t, stage) in self.actions.iter().enumerate() {
            if stage.len() != width {
                return Err(Error::DimensionMismatch(format!(
                    "stage {t} has {} entries, expected {width}",
                    stage.len()
                )));
            }
            if let Some(&a) = stage.iter().find(|&&a| a >= n_actions) {
                return Err(Error::range("policy action", a, n_actions));
            }
            width = width.saturating_mul(n_obs);
        }
        Ok(())
    }

    pub fn to_tree(&self, action_names: &[String], n_obs: usize) -> PolicyTree {
        fn build(p: &AgentPolicy, names: &[String], n_obs: usize, t: usize, h: usize) -> PolicyTree {
            let next = if t + 1 < p.actions.len() {
                (0..n_obs)
                    .map(|o| build(p, names, n_obs, t + 1, h * n_obs + o))
                    .collect()
            } else {
                Vec::new()
            };
            PolicyTree {
                action: names[p.actions[t][h]].clone(),
                next,
            }
        }
        build(self, action_names, n_obs, 0, 0)
    }
}

/// Tree form of an agent policy; `next[o]` is followed after observation `o`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicyTree {
    pub action: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub next: Vec<PolicyTree>,
}

impl JointPolicy {
    pub fn n_agents(&self) -> usize {
        self.agents.len()
    }

    pub fn horizon(&self) -> usize {
        self.agents.first().map_or(0, AgentPolicy::horizon)
    }

    pub fn decision_rule(&self, t: usize) -> DecisionRule<'_> {
        DecisionRule {
            stage: t,
            per_agent: self.agents.iter().map(|p| p.actions[t].as_slice()).collect(),
        }
    }

    /// Checks the policy against per-agent action and observation counts.
    pub fn check(&self, n_actions: &[usize], n_obs: &[usize], horizon: usize) -> Result<()> {
        if self.agents.len() != n_actions.len() {
            return Err(Error::DimensionMismatch(format!(
                "policy has {} agents, expected {}",
                self.agents.len(),
                n_actions.len()
            )));
        }
        for (i, p) in self.agents.iter().enumerate() {
            p.check(n_actions[i], n_obs[i], horizon)?;
        }
        Ok(())
    }
}

impl DecisionRule<'_> {
    /// Actions of every agent given each agent's own history index.
    pub fn act(&self, histories: &[usize], out: &mut [usize]) {
        for (i, rule) in self.per_agent.iter().enumerate() {
            out[i] = rule[histories[i]];
        }
    }
}

/// Indexing of one agent's policy trees by stage.
///
/// A subtree rooted at stage `t` has index `action * N(t+1)^|O| + sum_k
/// child_k * N(t+1)^(|O|-1-k)`, where `N(t)` counts subtrees rooted at `t`.
#[derive(Debug, Clone)]
pub struct TreeSpace {
    pub n_actions: usize,
    pub n_obs: usize,
    pub horizon: usize,
    counts: Vec<u128>,
    child_pow: Vec<Vec<u128>>,
}

impl TreeSpace {
    pub fn new(n_actions: usize, n_obs: usize, horizon: usize) -> Self {
        let mut counts = vec![1u128; horizon + 1];
        for t in (0..horizon).rev() {
            let children = (counts[t + 1]).saturating_pow(n_obs as u32);
            counts[t] = if t + 1 == horizon {
                n_actions as u128
            } else {
                (n_actions as u128).saturating_mul(children)
            };
        }
        let child_pow = (0..horizon)
            .map(|t| {
                let base = if t + 1 < horizon { counts[t + 1] } else { 0 };
                (0..n_obs)
                    .map(|k| base.saturating_pow((n_obs - 1 - k) as u32))
                    .collect()
            })
            .collect();
        TreeSpace {
            n_actions,
            n_obs,
            horizon,
            counts,
            child_pow,
        }
    }

    /// Number of distinct subtrees rooted at stage `t` (saturating).
    pub fn count(&self, t: usize) -> u128 {
        self.counts[t]
    }

    /// Number of ways to pick one stage-(t+1) subtree per observation.
    pub fn continuations(&self, t: usize) -> u128 {
        if t + 1 >= self.horizon {
            1
        } else {
            self.counts[t + 1].saturating_pow(self.n_obs as u32)
        }
    }

    pub fn action_of(&self, t: usize, idx: usize) -> usize {
        (idx as u128 / self.continuations(t)) as usize
    }

    pub fn child(&self, t: usize, idx: usize, o: usize) -> usize {
        let rest = idx as u128 % self.continuations(t);
        ((rest / self.child_pow[t][o]) % self.counts[t + 1]) as usize
    }

    pub fn compose(&self, t: usize, action: usize, children: &[usize]) -> usize {
        let mut idx = action as u128 * self.continuations(t);
        for (k, &c) in children.iter().enumerate() {
            idx += c as u128 * self.child_pow[t][k];
        }
        idx as usize
    }

    pub fn to_policy(&self, root: usize) -> AgentPolicy {
        let mut actions: Vec<Vec<usize>> = (0..self.horizon).map(|t| vec![0; self.n_obs.pow(t as u32)]).collect();
        let mut frontier = vec![root];
        for (t, stage) in actions.iter_mut().enumerate() {
            for (h, &node) in frontier.iter().enumerate() {
                stage[h] = self.action_of(t, node);
            }
            if t + 1 < self.horizon {
                frontier = frontier
                    .iter()
                    .flat_map(|&node| (0..self.n_obs).map(move |o| (node, o)))
                    .map(|(node, o)| self.child(t, node, o))
                    .collect();
            }
        }
        AgentPolicy { actions }
    }

    pub fn index_of(&self, p: &AgentPolicy) -> usize {
        fn rec(ts: &TreeSpace, p: &AgentPolicy, t: usize, h: usize) -> usize {
            let children: Vec<usize> = if t + 1 < ts.horizon {
                (0..ts.n_obs).map(|o| rec(ts, p, t + 1, h * ts.n_obs + o)).collect()
            } else {
                Vec::new()
            };
            ts.compose(t, p.actions[t][h], &children)
        }
        rec(self, p, 0, 0)
    }
}

/// Number of joint policies, saturating.
pub fn joint_policy_count(spaces: &[TreeSpace]) -> u128 {
    spaces.iter().fold(1u128, |acc, s| acc.saturating_mul(s.count(0)))
}
