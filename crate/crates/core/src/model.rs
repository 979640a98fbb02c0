//! Factored Dec-POMDPs as two-stage dynamic Bayesian networks.
//!
//! Transition CPT rows are indexed row-major over the parents in the order
//! `parent_factors_prev`, `parent_factors_next`, `parent_agents`. Reward tables
//! are indexed row-major over `factor_scope`, `agent_scope`, `next_factor_scope`.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::index::Radix;

pub const PROB_TOL: f64 = 1e-9;

/// Per-factor value indices.
pub type JointState = Vec<usize>;
/// Per-agent action indices.
pub type JointAction = Vec<usize>;
/// Per-agent observation indices.
pub type JointObservation = Vec<usize>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ParentRef {
    /// Factor value at stage t.
    Prev(usize),
    /// Factor value at stage t+1.
    Next(usize),
    /// Action of an agent at stage t.
    Agent(usize),
}

impl fmt::Display for ParentRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParentRef::Prev(k) => write!(f, "factor {k}"),
            ParentRef::Next(k) => write!(f, "next-stage factor {k}"),
            ParentRef::Agent(i) => write!(f, "action of agent {i}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Factor {
    pub name: String,
    pub cardinality: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cpt {
    pub child: usize,
    #[serde(default)]
    pub parent_factors_prev: Vec<usize>,
    #[serde(default)]
    pub parent_factors_next: Vec<usize>,
    #[serde(default)]
    pub parent_agents: Vec<usize>,
    pub table: Vec<Vec<f64>>,
}

impl Cpt {
    pub fn parents(&self) -> impl Iterator<Item = ParentRef> + '_ {
        self.parent_factors_prev
            .iter()
            .map(|&k| ParentRef::Prev(k))
            .chain(self.parent_factors_next.iter().map(|&k| ParentRef::Next(k)))
            .chain(self.parent_agents.iter().map(|&i| ParentRef::Agent(i)))
    }

    /// Row index for the parent values supplied by `value`.
    pub fn row_of(&self, m: &FactoredDecPOMDP, mut value: impl FnMut(ParentRef) -> usize) -> usize {
        self.parents().fold(0, |row, p| row * m.parent_card(p) + value(p))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalReward {
    #[serde(default)]
    pub name: String,
    #[serde(default)]
    pub factor_scope: Vec<usize>,
    #[serde(default)]
    pub agent_scope: Vec<usize>,
    #[serde(default)]
    pub next_factor_scope: Vec<usize>,
    pub table: Vec<f64>,
}

impl LocalReward {
    pub fn scope(&self) -> impl Iterator<Item = ParentRef> + '_ {
        self.factor_scope
            .iter()
            .map(|&k| ParentRef::Prev(k))
            .chain(self.agent_scope.iter().map(|&i| ParentRef::Agent(i)))
            .chain(self.next_factor_scope.iter().map(|&k| ParentRef::Next(k)))
    }

    pub fn value(&self, m: &FactoredDecPOMDP, mut value: impl FnMut(ParentRef) -> usize) -> f64 {
        let idx = self.scope().fold(0, |row, p| row * m.parent_card(p) + value(p));
        self.table[idx]
    }
}

/// Generator parameters and tool version stamped into generated documents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub generator: String,
    pub params: serde_json::Value,
    pub tool_version: String,
}

fn default_discount() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactoredDecPOMDP {
    #[serde(default)]
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<Provenance>,
    pub agents: Vec<String>,
    pub factors: Vec<Factor>,
    pub actions: Vec<Vec<String>>,
    pub observations: Vec<Vec<String>>,
    pub transition_cpts: Vec<Cpt>,
    pub observation_cpts: Vec<Cpt>,
    pub rewards: Vec<LocalReward>,
    pub b0: Vec<Vec<f64>>,
    pub horizon: usize,
    #[serde(default = "default_discount")]
    pub discount: f64,
}

/// One failed model invariant, naming the offending table or row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub location: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.location, self.message)
    }
}

impl FactoredDecPOMDP {
    pub fn n_agents(&self) -> usize {
        self.agents.len()
    }

    pub fn n_factors(&self) -> usize {
        self.factors.len()
    }

    pub fn factor_card(&self, k: usize) -> usize {
        self.factors[k].cardinality
    }

    pub fn n_actions(&self, agent: usize) -> usize {
        self.actions[agent].len()
    }

    pub fn n_observations(&self, agent: usize) -> usize {
        self.observations[agent].len()
    }

    pub fn parent_card(&self, p: ParentRef) -> usize {
        match p {
            ParentRef::Prev(k) | ParentRef::Next(k) => self.factors[k].cardinality,
            ParentRef::Agent(i) => self.actions[i].len(),
        }
    }

    pub fn state_radix(&self) -> Radix {
        Radix::new(self.factors.iter().map(|f| f.cardinality).collect())
    }

    pub fn action_radix(&self) -> Radix {
        Radix::new(self.actions.iter().map(Vec::len).collect())
    }

    pub fn observation_radix(&self) -> Radix {
        Radix::new(self.observations.iter().map(Vec::len).collect())
    }

    /// Number of joint states, saturating at `u128::MAX`.
    pub fn n_states_u128(&self) -> u128 {
        self.factors
            .iter()
            .fold(1u128, |acc, f| acc.saturating_mul(f.cardinality as u128))
    }

    pub fn with_horizon(&self, horizon: usize) -> Self {
        let mut m = self.clone();
        m.horizon = horizon;
        m
    }

    /// Lists every violated invariant; empty iff the model is well formed.
    pub fn validate(&self) -> Vec<Violation> {
        let mut v = Vec::new();
        macro_rules! push {
            ($loc:expr, $msg:expr $(,)?) => {
                v.push(Violation {
                    location: $loc,
                    message: $msg,
                })
            };
        }

        if self.horizon == 0 {
            push!("horizon".into(), "must be at least 1".into());
        }
        if !(self.discount.is_finite() && (0.0..=1.0).contains(&self.discount)) {
            push!("discount".into(), format!("{} is not in [0, 1]", self.discount));
        }
        if self.factors.is_empty() {
            push!("factors".into(), "at least one factor is required".into());
        }
        for (k, f) in self.factors.iter().enumerate() {
            if f.cardinality == 0 {
                push!(format!("factors[{k}]"), "cardinality must be positive".into());
            }
        }
        let n = self.agents.len();
        if self.actions.len() != n {
            push!(
                "actions".into(),
                format!("{} lists for {} agents", self.actions.len(), n)
            );
        }
        if self.observations.len() != n {
            push!(
                "observations".into(),
                format!("{} lists for {} agents", self.observations.len(), n),
            );
        }
        for (i, a) in self.actions.iter().enumerate() {
            if a.is_empty() {
                push!(format!("actions[{i}]"), "agent has no actions".into());
            }
        }
        for (i, o) in self.observations.iter().enumerate() {
            if o.is_empty() {
                push!(format!("observations[{i}]"), "agent has no observations".into());
            }
        }
        // Structural problems above make the table checks below meaningless.
        if !v.is_empty() {
            return v;
        }

        let factor_ok = |k: usize| k < self.factors.len();
        let agent_ok = |i: usize| i < n;

        if self.transition_cpts.len() != self.factors.len() {
            push!(
                "transition_cpts".into(),
                format!(
                    "{} tables for {} factors",
                    self.transition_cpts.len(),
                    self.factors.len()
                ),
            );
        }
        for (k, cpt) in self.transition_cpts.iter().enumerate() {
            let loc = format!("transition_cpts[{k}]");
            if cpt.child != k {
                push!(loc.clone(), format!("child is {}, expected {k}", cpt.child));
            }
            if !cpt.parent_factors_next.is_empty() {
                push!(loc.clone(), "same-stage factor parents are not supported".into());
            }
            let child_card = self.factors.get(k).map(|f| f.cardinality).unwrap_or(0);
            self.check_cpt(
                cpt,
                &loc,
                child_card,
                &factor_ok,
                &agent_ok,
                &mut |location, message| v.push(Violation { location, message }),
            );
        }

        if self.observation_cpts.len() != n {
            push!(
                "observation_cpts".into(),
                format!("{} tables for {} agents", self.observation_cpts.len(), n),
            );
        }
        for (i, cpt) in self.observation_cpts.iter().enumerate() {
            let loc = format!("observation_cpts[{i}]");
            if cpt.child != i {
                push!(loc.clone(), format!("child is {}, expected {i}", cpt.child));
            }
            if !cpt.parent_factors_prev.is_empty() {
                push!(
                    loc.clone(),
                    "observations may only depend on next-stage factors and actions".into()
                );
            }
            let child_card = self.observations.get(i).map(Vec::len).unwrap_or(0);
            self.check_cpt(
                cpt,
                &loc,
                child_card,
                &factor_ok,
                &agent_ok,
                &mut |location, message| v.push(Violation { location, message }),
            );
        }

        for (l, r) in self.rewards.iter().enumerate() {
            let loc = format!("rewards[{l}]");
            let mut scope_ok = true;
            for p in r.scope() {
                let ok = match p {
                    ParentRef::Prev(k) | ParentRef::Next(k) => factor_ok(k),
                    ParentRef::Agent(i) => agent_ok(i),
                };
                if !ok {
                    scope_ok = false;
                    push!(loc.clone(), format!("scope references undeclared {p}"));
                }
            }
            if scope_ok {
                let expected: usize = r.scope().map(|p| self.parent_card(p)).product();
                if r.table.len() != expected {
                    push!(
                        loc.clone(),
                        format!("table has {} entries, expected {expected}", r.table.len())
                    );
                }
            }
            if let Some(j) = r.table.iter().position(|x| !x.is_finite()) {
                push!(format!("{loc}.table[{j}]"), "entry is not finite".into());
            }
        }

        if self.b0.len() != self.factors.len() {
            push!(
                "b0".into(),
                format!("{} tables for {} factors", self.b0.len(), self.factors.len())
            );
        }
        for (k, row) in self.b0.iter().enumerate() {
            let loc = format!("b0[{k}]");
            if let Some(f) = self.factors.get(k) {
                if row.len() != f.cardinality {
                    push!(
                        loc.clone(),
                        format!("{} entries for cardinality {}", row.len(), f.cardinality)
                    );
                }
            }
            check_distribution(row, &loc, &mut |location, message| {
                v.push(Violation { location, message })
            });
        }
        v
    }

    fn check_cpt(
        &self,
        cpt: &Cpt,
        loc: &str,
        child_card: usize,
        factor_ok: &dyn Fn(usize) -> bool,
        agent_ok: &dyn Fn(usize) -> bool,
        push: &mut dyn FnMut(String, String),
    ) {
        let mut parents_ok = true;
        let mut seen = std::collections::BTreeSet::new();
        for p in cpt.parents() {
            let ok = match p {
                ParentRef::Prev(k) | ParentRef::Next(k) => factor_ok(k),
                ParentRef::Agent(i) => agent_ok(i),
            };
            if !ok {
                parents_ok = false;
                push(loc.to_string(), format!("parent {p} is not declared"));
            } else if !seen.insert(p) {
                push(loc.to_string(), format!("parent {p} is listed twice"));
            }
        }
        if parents_ok {
            let rows: usize = cpt.parents().map(|p| self.parent_card(p)).product();
            if cpt.table.len() != rows {
                push(loc.to_string(), format!("{} rows, expected {rows}", cpt.table.len()));
            }
        }
        for (r, row) in cpt.table.iter().enumerate() {
            let rloc = format!("{loc}.table[{r}]");
            if row.len() != child_card {
                push(
                    rloc.clone(),
                    format!("{} entries for child cardinality {child_card}", row.len()),
                );
            }
            check_distribution(row, &rloc, push);
        }
    }

    pub fn ensure_valid(&self) -> Result<()> {
        let v = self.validate();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidModel(v))
        }
    }

    pub fn check_state(&self, s: &[usize], what: &str) -> Result<()> {
        check_values(s, self.factors.iter().map(|f| f.cardinality), what)
    }

    pub fn check_action(&self, a: &[usize]) -> Result<()> {
        check_values(a, self.actions.iter().map(Vec::len), "joint action")
    }

    pub fn check_observation(&self, o: &[usize]) -> Result<()> {
        check_values(o, self.observations.iter().map(Vec::len), "joint observation")
    }

    /// Distribution of factor `k` at t+1 given state `s` and joint action `a`.
    pub fn transition_row(&self, k: usize, s: &[usize], a: &[usize]) -> &[f64] {
        let cpt = &self.transition_cpts[k];
        let row = cpt.row_of(self, |p| match p {
            ParentRef::Prev(j) | ParentRef::Next(j) => s[j],
            ParentRef::Agent(i) => a[i],
        });
        &cpt.table[row]
    }

    /// Distribution of agent `i`'s observation given `a` and the next state.
    pub fn observation_row(&self, i: usize, a: &[usize], s_next: &[usize]) -> &[f64] {
        let cpt = &self.observation_cpts[i];
        let row = cpt.row_of(self, |p| match p {
            ParentRef::Prev(j) | ParentRef::Next(j) => s_next[j],
            ParentRef::Agent(j) => a[j],
        });
        &cpt.table[row]
    }

    pub fn joint_transition_prob(&self, s: &[usize], a: &[usize], s_next: &[usize]) -> Result<f64> {
        self.check_state(s, "state")?;
        self.check_action(a)?;
        self.check_state(s_next, "next state")?;
        Ok((0..self.n_factors())
            .map(|k| self.transition_row(k, s, a)[s_next[k]])
            .product())
    }

    pub fn joint_observation_prob(&self, a: &[usize], s_next: &[usize], o: &[usize]) -> Result<f64> {
        self.check_action(a)?;
        self.check_state(s_next, "next state")?;
        self.check_observation(o)?;
        Ok((0..self.n_agents())
            .map(|i| self.observation_row(i, a, s_next)[o[i]])
            .product())
    }

    pub fn reward_value(&self, l: usize, s: &[usize], a: &[usize], s_next: &[usize]) -> f64 {
        self.rewards[l].value(self, |p| match p {
            ParentRef::Prev(k) => s[k],
            ParentRef::Next(k) => s_next[k],
            ParentRef::Agent(i) => a[i],
        })
    }

    pub fn joint_reward(&self, s: &[usize], a: &[usize], s_next: &[usize]) -> Result<f64> {
        self.check_state(s, "state")?;
        self.check_action(a)?;
        self.check_state(s_next, "next state")?;
        Ok((0..self.rewards.len())
            .map(|l| self.reward_value(l, s, a, s_next))
            .sum())
    }

    pub fn b0_prob(&self, s: &[usize]) -> f64 {
        s.iter().enumerate().map(|(k, &v)| self.b0[k][v]).product()
    }

    /// Relabels agents so that new agent `j` is old agent `perm[j]`.
    pub fn permute_agents(&self, perm: &[usize]) -> Result<Self> {
        let n = self.n_agents();
        let mut inv = vec![usize::MAX; n];
        if perm.len() != n {
            return Err(Error::InvalidParams(format!(
                "permutation of length {} for {n} agents",
                perm.len()
            )));
        }
        for (j, &i) in perm.iter().enumerate() {
            if i >= n || inv[i] != usize::MAX {
                return Err(Error::InvalidParams(format!("{perm:?} is not a permutation")));
            }
            inv[i] = j;
        }
        let mut m = self.clone();
        m.agents = perm.iter().map(|&i| self.agents[i].clone()).collect();
        m.actions = perm.iter().map(|&i| self.actions[i].clone()).collect();
        m.observations = perm.iter().map(|&i| self.observations[i].clone()).collect();
        m.observation_cpts = perm
            .iter()
            .enumerate()
            .map(|(j, &i)| {
                let mut c = self.observation_cpts[i].clone();
                c.child = j;
                c
            })
            .collect();
        for c in m.transition_cpts.iter_mut().chain(m.observation_cpts.iter_mut()) {
            for i in c.parent_agents.iter_mut() {
                *i = inv[*i];
            }
        }
        for r in m.rewards.iter_mut() {
            for i in r.agent_scope.iter_mut() {
                *i = inv[*i];
            }
        }
        Ok(m)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let m: Self = serde_json::from_str(text)?;
        m.ensure_valid()?;
        Ok(m)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serialization cannot fail")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

fn check_values(v: &[usize], cards: impl ExactSizeIterator<Item = usize>, what: &str) -> Result<()> {
    if v.len() != cards.len() {
        return Err(Error::DimensionMismatch(format!(
            "{what} has {} components, expected {}",
            v.len(),
            cards.len()
        )));
    }
    for (x, c) in v.iter().zip(cards) {
        if *x >= c {
            return Err(Error::range(what, *x, c));
        }
    }
    Ok(())
}

fn check_distribution(row: &[f64], loc: &str, push: &mut dyn FnMut(String, String)) {
    if row.iter().any(|p| !p.is_finite() || *p < 0.0 || *p > 1.0) {
        push(loc.to_string(), "entries must lie in [0, 1]".into());
        return;
    }
    let sum: f64 = row.iter().sum();
    if (sum - 1.0).abs() > PROB_TOL {
        push(loc.to_string(), format!("row sums to {sum}"));
    }
}
