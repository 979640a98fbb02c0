//! Sub-problems: agent/factor/reward slices of a factored model whose
//! transition model is left open at the non-locally affected factors.

use std::collections::BTreeSet;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flat::DEFAULT_FLATTEN_CAP;
use crate::index::{for_each_product, Radix};
use crate::model::{FactoredDecPOMDP, ParentRef};

/// How influence sources of different NLAFs relate.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InfluenceCoupling {
    /// A parent shared by several NLAFs takes one value in `u`.
    #[default]
    Joint,
    /// Each NLAF gets its own copy of its external parents (looser, still sound).
    PerNlaf,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NlafSources {
    pub factor: usize,
    pub external_factors: Vec<usize>,
    pub external_agents: Vec<usize>,
}

/// One component of an influence source instantiation `u`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InfluenceSlot {
    /// `Prev(k)` for an external factor, `Agent(i)` for an external action.
    pub source: ParentRef,
    pub cardinality: usize,
}

#[derive(Debug, Clone)]
pub struct InfluenceSpace {
    pub coupling: InfluenceCoupling,
    pub per_nlaf: Vec<NlafSources>,
    pub slots: Vec<InfluenceSlot>,
    slot_of: Vec<Vec<(ParentRef, usize)>>,
    radix: Radix,
}

impl InfluenceSpace {
    fn build(m: &FactoredDecPOMDP, per_nlaf: Vec<NlafSources>, coupling: InfluenceCoupling) -> Self {
        let mut slots: Vec<InfluenceSlot> = Vec::new();
        let mut slot_of = Vec::with_capacity(per_nlaf.len());
        for s in &per_nlaf {
            let mut map = Vec::new();
            let sources = s
                .external_factors
                .iter()
                .map(|&k| ParentRef::Prev(k))
                .chain(s.external_agents.iter().map(|&i| ParentRef::Agent(i)));
            for src in sources {
                let existing = match coupling {
                    InfluenceCoupling::Joint => slots.iter().position(|x| x.source == src),
                    InfluenceCoupling::PerNlaf => None,
                };
                let idx = existing.unwrap_or_else(|| {
                    slots.push(InfluenceSlot {
                        source: src,
                        cardinality: m.parent_card(src),
                    });
                    slots.len() - 1
                });
                map.push((src, idx));
            }
            slot_of.push(map);
        }
        let radix = Radix::new(slots.iter().map(|s| s.cardinality).collect());
        InfluenceSpace {
            coupling,
            per_nlaf,
            slots,
            slot_of,
            radix,
        }
    }

    /// Number of influence source instantiations |u|.
    pub fn size(&self) -> usize {
        self.radix.size()
    }

    pub fn radix(&self) -> &Radix {
        &self.radix
    }

    fn slot(&self, nlaf: usize, p: ParentRef) -> usize {
        self.slot_of[nlaf]
            .iter()
            .find(|(src, _)| *src == p)
            .map(|x| x.1)
            .expect("external parent has a slot")
    }
}

/// Subset references of a sub-problem, by id in the parent model.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubProblemSpec {
    pub agents: Vec<usize>,
    pub factors: Vec<usize>,
    pub rewards: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct SubProblem {
    model: Arc<FactoredDecPOMDP>,
    agents: Vec<usize>,
    factors: Vec<usize>,
    rewards: Vec<usize>,
    olaf: Vec<usize>,
    nlaf: Vec<usize>,
    influence: InfluenceSpace,
    factor_pos: Vec<Option<usize>>,
    agent_pos: Vec<Option<usize>>,
    nlaf_pos: Vec<Option<usize>>,
}

fn canonical(ids: &[usize], limit: usize, what: &str) -> Result<Vec<usize>> {
    let set: BTreeSet<usize> = ids.iter().copied().collect();
    if set.len() != ids.len() {
        return Err(Error::InvalidParams(format!("duplicate {what} id in {ids:?}")));
    }
    if let Some(&bad) = set.iter().find(|&&x| x >= limit) {
        return Err(Error::range(what, bad, limit));
    }
    Ok(set.into_iter().collect())
}

impl SubProblem {
    /// Extracts the slice with joint influence coupling. Ids are sorted; local
    /// indices follow increasing global ids.
    pub fn extract(
        model: Arc<FactoredDecPOMDP>,
        agents: &[usize],
        factors: &[usize],
        rewards: &[usize],
    ) -> Result<Self> {
        Self::extract_with(model, agents, factors, rewards, InfluenceCoupling::Joint)
    }

    pub fn extract_with(
        model: Arc<FactoredDecPOMDP>,
        agents: &[usize],
        factors: &[usize],
        rewards: &[usize],
        coupling: InfluenceCoupling,
    ) -> Result<Self> {
        model.ensure_valid()?;
        let m = &*model;
        let agents = canonical(agents, m.n_agents(), "agent")?;
        let factors = canonical(factors, m.n_factors(), "factor")?;
        let rewards = canonical(rewards, m.rewards.len(), "reward")?;
        if factors.is_empty() {
            return Err(Error::EmptyInput("a sub-problem needs at least one factor".into()));
        }
        let mut factor_pos = vec![None; m.n_factors()];
        for (q, &k) in factors.iter().enumerate() {
            factor_pos[k] = Some(q);
        }
        let mut agent_pos = vec![None; m.n_agents()];
        for (q, &i) in agents.iter().enumerate() {
            agent_pos[i] = Some(q);
        }
        let inside = |p: ParentRef| match p {
            ParentRef::Prev(k) | ParentRef::Next(k) => factor_pos[k].is_some(),
            ParentRef::Agent(i) => agent_pos[i].is_some(),
        };

        for &i in &agents {
            if let Some(p) = m.observation_cpts[i].parents().find(|&p| !inside(p)) {
                return Err(Error::ObservationDependenceViolation {
                    agent: i,
                    parent: p.to_string(),
                });
            }
        }
        for &l in &rewards {
            if let Some(p) = m.rewards[l].scope().find(|&p| !inside(p)) {
                return Err(Error::RewardDependenceViolation {
                    reward: l,
                    parent: p.to_string(),
                });
            }
        }

        let mut olaf = Vec::new();
        let mut nlaf = Vec::new();
        let mut per_nlaf = Vec::new();
        let mut nlaf_pos = vec![None; m.n_factors()];
        for &k in &factors {
            let cpt = &m.transition_cpts[k];
            let ext_f: Vec<usize> = cpt
                .parent_factors_prev
                .iter()
                .copied()
                .filter(|&g| factor_pos[g].is_none())
                .collect();
            let ext_a: Vec<usize> = cpt
                .parent_agents
                .iter()
                .copied()
                .filter(|&i| agent_pos[i].is_none())
                .collect();
            if ext_f.is_empty() && ext_a.is_empty() {
                olaf.push(k);
            } else {
                nlaf_pos[k] = Some(nlaf.len());
                nlaf.push(k);
                per_nlaf.push(NlafSources {
                    factor: k,
                    external_factors: ext_f,
                    external_agents: ext_a,
                });
            }
        }
        let influence = InfluenceSpace::build(m, per_nlaf, coupling);
        Ok(SubProblem {
            model,
            agents,
            factors,
            rewards,
            olaf,
            nlaf,
            influence,
            factor_pos,
            agent_pos,
            nlaf_pos,
        })
    }

    pub fn from_spec(model: Arc<FactoredDecPOMDP>, spec: &SubProblemSpec, coupling: InfluenceCoupling) -> Result<Self> {
        Self::extract_with(model, &spec.agents, &spec.factors, &spec.rewards, coupling)
    }

    /// The whole problem as a single sub-problem.
    pub fn whole(model: Arc<FactoredDecPOMDP>) -> Result<Self> {
        let a: Vec<usize> = (0..model.n_agents()).collect();
        let f: Vec<usize> = (0..model.n_factors()).collect();
        let r: Vec<usize> = (0..model.rewards.len()).collect();
        Self::extract(model, &a, &f, &r)
    }

    pub fn with_coupling(&self, coupling: InfluenceCoupling) -> Self {
        let mut sp = self.clone();
        sp.influence = InfluenceSpace::build(&self.model, self.influence.per_nlaf.clone(), coupling);
        sp
    }

    pub fn spec(&self) -> SubProblemSpec {
        SubProblemSpec {
            agents: self.agents.clone(),
            factors: self.factors.clone(),
            rewards: self.rewards.clone(),
        }
    }

    pub fn model(&self) -> &Arc<FactoredDecPOMDP> {
        &self.model
    }

    pub fn agents(&self) -> &[usize] {
        &self.agents
    }

    pub fn factors(&self) -> &[usize] {
        &self.factors
    }

    pub fn rewards(&self) -> &[usize] {
        &self.rewards
    }

    pub fn olaf(&self) -> &[usize] {
        &self.olaf
    }

    pub fn nlaf(&self) -> &[usize] {
        &self.nlaf
    }

    pub fn influence(&self) -> &InfluenceSpace {
        &self.influence
    }

    pub fn influence_source_space_size(&self) -> usize {
        self.influence.size()
    }

    pub fn state_radix(&self) -> Radix {
        Radix::new(self.factors.iter().map(|&k| self.model.factor_card(k)).collect())
    }

    pub fn action_radix(&self) -> Radix {
        Radix::new(self.agents.iter().map(|&i| self.model.n_actions(i)).collect())
    }

    pub fn observation_radix(&self) -> Radix {
        Radix::new(self.agents.iter().map(|&i| self.model.n_observations(i)).collect())
    }

    /// Product marginal of the initial distribution on the sub-problem factors.
    pub fn b0_local(&self) -> Vec<f64> {
        let r = self.state_radix();
        (0..r.size())
            .map(|x| {
                r.decode(x)
                    .iter()
                    .zip(&self.factors)
                    .map(|(&v, &k)| self.model.b0[k][v])
                    .product()
            })
            .collect()
    }

    fn check_inputs(&self, x: &[usize], a: &[usize], u: &[usize]) -> Result<()> {
        self.state_radix().try_encode(x, "local state")?;
        self.action_radix().try_encode(a, "local action")?;
        if u.len() != self.influence.slots.len() {
            return Err(Error::DimensionMismatch(format!(
                "influence source has {} components, the influence space has {}",
                u.len(),
                self.influence.slots.len()
            )));
        }
        self.influence.radix.try_encode(u, "influence source")?;
        Ok(())
    }

    /// Next-value distribution of local factor `j` with external parents taken from `u`.
    pub fn factor_row(&self, j: usize, x: &[usize], a: &[usize], u: &[usize]) -> &[f64] {
        let m = &*self.model;
        let k = self.factors[j];
        let cpt = &m.transition_cpts[k];
        let row = cpt.row_of(m, |p| match p {
            ParentRef::Prev(g) | ParentRef::Next(g) => match self.factor_pos[g] {
                Some(q) => x[q],
                None => u[self.influence.slot(self.nlaf_pos[k].unwrap(), p)],
            },
            ParentRef::Agent(i) => match self.agent_pos[i] {
                Some(q) => a[q],
                None => u[self.influence.slot(self.nlaf_pos[k].unwrap(), p)],
            },
        });
        &cpt.table[row]
    }

    fn observation_row(&self, q: usize, a: &[usize], x_next: &[usize]) -> &[f64] {
        let m = &*self.model;
        let cpt = &m.observation_cpts[self.agents[q]];
        let row = cpt.row_of(m, |p| match p {
            ParentRef::Prev(g) | ParentRef::Next(g) => x_next[self.factor_pos[g].unwrap()],
            ParentRef::Agent(i) => a[self.agent_pos[i].unwrap()],
        });
        &cpt.table[row]
    }

    pub fn local_transition_prob(&self, x: &[usize], a: &[usize], u: &[usize], x_next: &[usize]) -> Result<f64> {
        self.check_inputs(x, a, u)?;
        self.state_radix().try_encode(x_next, "next local state")?;
        Ok((0..self.factors.len())
            .map(|j| self.factor_row(j, x, a, u)[x_next[j]])
            .product())
    }

    pub fn local_observation_prob(&self, a: &[usize], x_next: &[usize], o: &[usize]) -> Result<f64> {
        self.action_radix().try_encode(a, "local action")?;
        self.state_radix().try_encode(x_next, "next local state")?;
        self.observation_radix().try_encode(o, "local observation")?;
        Ok((0..self.agents.len())
            .map(|q| self.observation_row(q, a, x_next)[o[q]])
            .product())
    }

    fn reward_unchecked(&self, x: &[usize], a: &[usize], x_next: &[usize]) -> f64 {
        let m = &*self.model;
        self.rewards
            .iter()
            .map(|&l| {
                m.rewards[l].value(m, |p| match p {
                    ParentRef::Prev(g) => x[self.factor_pos[g].unwrap()],
                    ParentRef::Next(g) => x_next[self.factor_pos[g].unwrap()],
                    ParentRef::Agent(i) => a[self.agent_pos[i].unwrap()],
                })
            })
            .sum()
    }

    pub fn local_reward(&self, x: &[usize], a: &[usize], x_next: &[usize]) -> Result<f64> {
        self.state_radix().try_encode(x, "local state")?;
        self.action_radix().try_encode(a, "local action")?;
        self.state_radix().try_encode(x_next, "next local state")?;
        Ok(self.reward_unchecked(x, a, x_next))
    }

    /// Dense local model with sparse successor lists per (x, a, u).
    pub fn compile(&self) -> Result<LocalModel> {
        self.compile_with_cap(DEFAULT_FLATTEN_CAP)
    }

    pub fn compile_with_cap(&self, state_cap: usize) -> Result<LocalModel> {
        let m = &*self.model;
        let states = Radix::bounded(
            self.factors.iter().map(|&k| m.factor_card(k)).collect(),
            state_cap,
            "local state space",
        )?;
        let actions = self.action_radix();
        let observations = self.observation_radix();
        let influence = self.influence.radix.clone();
        let (nx, na, nu, no) = (states.size(), actions.size(), influence.size(), observations.size());
        let rows = (nx as u128) * (na as u128) * (nu as u128);
        const ROW_CAP: u128 = 1 << 26;
        if rows > ROW_CAP {
            return Err(Error::cap(
                "local transition rows (states x actions x influence)",
                rows,
                ROW_CAP,
            ));
        }

        type Row = (Vec<usize>, Vec<f64>, Vec<f64>);
        let per_x: Vec<Vec<Row>> = (0..nx)
            .into_par_iter()
            .map(|x| {
                let xv = states.decode(x);
                let mut out = Vec::with_capacity(na * nu);
                for a in 0..na {
                    let av = actions.decode(a);
                    for u in 0..nu {
                        let uv = influence.decode(u);
                        let dists: Vec<&[f64]> = (0..self.factors.len())
                            .map(|j| self.factor_row(j, &xv, &av, &uv))
                            .collect();
                        let mut row: Row = Default::default();
                        for_each_product(&dists, |next, p| {
                            row.0.push(states.encode(next));
                            row.1.push(p);
                            row.2.push(self.reward_unchecked(&xv, &av, next));
                        });
                        out.push(row);
                    }
                }
                out
            })
            .collect();
        let mut row_start = Vec::with_capacity(nx * na * nu + 1);
        row_start.push(0);
        let (mut succ_state, mut succ_prob, mut succ_reward) = (Vec::new(), Vec::new(), Vec::new());
        for rows in per_x {
            for (s, p, r) in rows {
                succ_state.extend(s);
                succ_prob.extend(p);
                succ_reward.extend(r);
                row_start.push(succ_state.len());
            }
        }

        let obs: Vec<f64> = (0..na * nx)
            .into_par_iter()
            .flat_map_iter(|idx| {
                let (a, x2) = (idx / nx, idx % nx);
                let av = actions.decode(a);
                let xv = states.decode(x2);
                let dists: Vec<&[f64]> = (0..self.agents.len())
                    .map(|q| self.observation_row(q, &av, &xv))
                    .collect();
                let mut row = vec![0.0; no];
                for_each_product(&dists, |o, p| row[observations.encode(o)] = p);
                row
            })
            .collect();

        Ok(LocalModel {
            b0: self.b0_local(),
            states,
            actions,
            observations,
            influence,
            horizon: m.horizon,
            discount: m.discount,
            has_nlaf: !self.nlaf.is_empty(),
            row_start,
            succ_state,
            succ_prob,
            succ_reward,
            obs,
        })
    }

    pub fn to_doc(&self) -> SubProblemDoc {
        SubProblemDoc {
            model: (*self.model).clone(),
            agents: self.agents.clone(),
            factors: self.factors.clone(),
            rewards: self.rewards.clone(),
            coupling: self.influence.coupling,
            olaf: self.olaf.clone(),
            nlaf: self.nlaf.clone(),
            influence_sources: self.influence.per_nlaf.clone(),
            influence_size: self.influence.size(),
        }
    }
}

/// Explicit local model of a sub-problem; transitions are indexed by
/// (local state, local joint action, influence source).
#[derive(Debug, Clone)]
pub struct LocalModel {
    pub states: Radix,
    pub actions: Radix,
    pub observations: Radix,
    pub influence: Radix,
    pub b0: Vec<f64>,
    pub horizon: usize,
    pub discount: f64,
    pub has_nlaf: bool,
    row_start: Vec<usize>,
    succ_state: Vec<usize>,
    succ_prob: Vec<f64>,
    succ_reward: Vec<f64>,
    obs: Vec<f64>,
}

impl LocalModel {
    pub fn n_states(&self) -> usize {
        self.states.size()
    }

    pub fn n_actions(&self) -> usize {
        self.actions.size()
    }

    pub fn n_observations(&self) -> usize {
        self.observations.size()
    }

    pub fn n_influence(&self) -> usize {
        self.influence.size()
    }

    pub fn n_agents(&self) -> usize {
        self.actions.len()
    }

    pub fn with_horizon(mut self, horizon: usize) -> Self {
        self.horizon = horizon;
        self
    }

    /// Nonzero transitions as `(x', probability, reward)` triples.
    #[inline]
    pub fn successors(&self, x: usize, a: usize, u: usize) -> impl Iterator<Item = (usize, f64, f64)> + '_ {
        let row = (x * self.n_actions() + a) * self.n_influence() + u;
        (self.row_start[row]..self.row_start[row + 1])
            .map(move |j| (self.succ_state[j], self.succ_prob[j], self.succ_reward[j]))
    }

    #[inline]
    pub fn observation_row(&self, a: usize, x_next: usize) -> &[f64] {
        let no = self.n_observations();
        let base = (a * self.n_states() + x_next) * no;
        &self.obs[base..base + no]
    }

    pub fn check_horizon(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::InvalidParams("horizon must be at least 1".into()));
        }
        Ok(())
    }
}

/// Serialized sub-problem: the parent model plus subset references. Derived
/// fields are informational and recomputed on load.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubProblemDoc {
    pub model: FactoredDecPOMDP,
    pub agents: Vec<usize>,
    pub factors: Vec<usize>,
    pub rewards: Vec<usize>,
    #[serde(default)]
    pub coupling: InfluenceCoupling,
    #[serde(default)]
    pub olaf: Vec<usize>,
    #[serde(default)]
    pub nlaf: Vec<usize>,
    #[serde(default)]
    pub influence_sources: Vec<NlafSources>,
    #[serde(default)]
    pub influence_size: usize,
}

impl SubProblemDoc {
    pub fn into_subproblem(self) -> Result<SubProblem> {
        let spec = SubProblemSpec {
            agents: self.agents,
            factors: self.factors,
            rewards: self.rewards,
        };
        SubProblem::from_spec(Arc::new(self.model), &spec, self.coupling)
    }
}

/// How a reward block is closed into a sub-problem.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClosureRule {
    /// Scope of the rewards, plus every agent acting on an included factor
    /// whose observations stay inside the included factors.
    #[default]
    Interior,
    /// Scope of the rewards only.
    Minimal,
}

#[derive(Debug, Clone)]
pub struct Partition {
    pub closure: ClosureRule,
    pub blocks: Vec<Vec<usize>>,
    pub subproblems: Vec<SubProblem>,
}

/// Agents and factors required by a reward block under `rule`, closed under
/// the observation dependence requirement.
pub fn close_block(m: &FactoredDecPOMDP, rewards: &[usize], rule: ClosureRule) -> (Vec<usize>, Vec<usize>) {
    let mut factors = BTreeSet::new();
    let mut agents = BTreeSet::new();
    for &l in rewards {
        for p in m.rewards[l].scope() {
            match p {
                ParentRef::Prev(k) | ParentRef::Next(k) => {
                    factors.insert(k);
                }
                ParentRef::Agent(i) => {
                    agents.insert(i);
                }
            }
        }
    }
    if rule == ClosureRule::Interior {
        for i in 0..m.n_agents() {
            let acts_inside = factors.iter().any(|&k| m.transition_cpts[k].parent_agents.contains(&i));
            let sees_inside = m.observation_cpts[i].parents().all(|p| match p {
                ParentRef::Prev(k) | ParentRef::Next(k) => factors.contains(&k),
                ParentRef::Agent(_) => true,
            });
            if acts_inside && sees_inside {
                agents.insert(i);
            }
        }
    }
    loop {
        let mut changed = false;
        for i in agents.clone() {
            for p in m.observation_cpts[i].parents() {
                changed |= match p {
                    ParentRef::Prev(k) | ParentRef::Next(k) => factors.insert(k),
                    ParentRef::Agent(j) => agents.insert(j),
                };
            }
        }
        if !changed {
            break;
        }
    }
    (agents.into_iter().collect(), factors.into_iter().collect())
}

pub fn make_partition(model: Arc<FactoredDecPOMDP>, blocks: &[Vec<usize>], rule: ClosureRule) -> Result<Partition> {
    model.ensure_valid()?;
    if blocks.is_empty() {
        return Err(Error::InvalidPartition("no blocks given".into()));
    }
    let nr = model.rewards.len();
    let mut owner = vec![None; nr];
    for (b, block) in blocks.iter().enumerate() {
        if block.is_empty() {
            return Err(Error::InvalidPartition(format!("block {b} is empty")));
        }
        for &l in block {
            if l >= nr {
                return Err(Error::InvalidPartition(format!(
                    "reward {l} does not exist ({nr} rewards)"
                )));
            }
            if let Some(prev) = owner[l] {
                return Err(Error::InvalidPartition(format!(
                    "reward {l} appears in blocks {prev} and {b}"
                )));
            }
            owner[l] = Some(b);
        }
    }
    if let Some(l) = owner.iter().position(Option::is_none) {
        return Err(Error::InvalidPartition(format!("reward {l} is not covered")));
    }
    let subproblems = blocks
        .iter()
        .map(|block| {
            let (agents, factors) = close_block(&model, block, rule);
            SubProblem::extract(model.clone(), &agents, &factors, block)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Partition {
        closure: rule,
        blocks: blocks.to_vec(),
        subproblems,
    })
}

impl Partition {
    pub fn model(&self) -> &Arc<FactoredDecPOMDP> {
        self.subproblems[0].model()
    }

    pub fn to_doc(&self) -> PartitionDoc {
        PartitionDoc {
            model: (**self.model()).clone(),
            closure: self.closure,
            blocks: self.blocks.clone(),
            subproblems: self
                .subproblems
                .iter()
                .map(|sp| SubProblemSummary {
                    agents: sp.agents.clone(),
                    factors: sp.factors.clone(),
                    rewards: sp.rewards.clone(),
                    olaf: sp.olaf.clone(),
                    nlaf: sp.nlaf.clone(),
                    influence_size: sp.influence_source_space_size(),
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubProblemSummary {
    pub agents: Vec<usize>,
    pub factors: Vec<usize>,
    pub rewards: Vec<usize>,
    pub olaf: Vec<usize>,
    pub nlaf: Vec<usize>,
    pub influence_size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionDoc {
    pub model: FactoredDecPOMDP,
    #[serde(default)]
    pub closure: ClosureRule,
    pub blocks: Vec<Vec<usize>>,
    #[serde(default)]
    pub subproblems: Vec<SubProblemSummary>,
}

impl PartitionDoc {
    pub fn into_partition(self) -> Result<Partition> {
        make_partition(Arc::new(self.model), &self.blocks, self.closure)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domains::{make_ffg, FfgParams};
    use rand::{Rng, SeedableRng};

    fn ffg(n: usize) -> Arc<FactoredDecPOMDP> {
        Arc::new(make_ffg(&FfgParams::new(n)).unwrap())
    }

    #[test]
    fn edge_sp_sources() {
        let m = ffg(4);
        let sp = SubProblem::extract(m, &[1, 2], &[1, 2, 3], &[1, 2, 3]).unwrap();
        assert_eq!(sp.nlaf(), &[1, 3]);
        let s3 = &sp.influence().per_nlaf[1];
        assert_eq!(s3.external_factors, vec![4]);
        assert_eq!(s3.external_agents, vec![3]);
        assert_eq!(sp.influence_source_space_size(), 36);
    }

    #[test]
    fn one_sided_influence_size() {
        let sp = SubProblem::extract(ffg(3), &[0, 1], &[0, 1, 2], &[0, 1, 2]).unwrap();
        assert_eq!(sp.nlaf(), &[2]);
        assert_eq!(sp.influence_source_space_size(), 6);
    }

    #[test]
    fn whole_problem_has_no_nlaf() {
        let sp = SubProblem::whole(ffg(2)).unwrap();
        assert!(sp.nlaf().is_empty());
        assert_eq!(sp.influence_source_space_size(), 1);
    }

    #[test]
    fn observation_dependence_enforced() {
        let r = SubProblem::extract(ffg(3), &[0, 1], &[0, 1], &[0, 1]);
        assert!(matches!(r, Err(Error::ObservationDependenceViolation { agent: 1, .. })));
    }

    #[test]
    fn reward_dependence_enforced() {
        let r = SubProblem::extract(ffg(3), &[0], &[0, 1], &[2]);
        assert!(matches!(r, Err(Error::RewardDependenceViolation { reward: 2, .. })));
    }

    #[test]
    fn shared_parents_counted_once() {
        // House 1 alone: parents 0 and 2 plus agents 0 and 1 are all external.
        let m = ffg(2);
        let sp = SubProblem::extract(m.clone(), &[], &[1], &[1]).unwrap();
        assert_eq!(sp.influence_source_space_size(), 3 * 3 * 2 * 2);
        // Houses 0 and 2: both depend on house 1 and agent 0 / agent 1.
        let sp = SubProblem::extract(m.clone(), &[], &[0, 2], &[0, 2]).unwrap();
        assert_eq!(sp.influence_source_space_size(), 3 * 2 * 2);
        let per = sp.with_coupling(InfluenceCoupling::PerNlaf);
        assert_eq!(per.influence_source_space_size(), 3 * 2 * 3 * 2);
    }

    #[test]
    fn incomplete_u_is_error() {
        let sp = SubProblem::extract(ffg(3), &[0, 1], &[0, 1, 2], &[0, 1, 2]).unwrap();
        assert!(sp.local_transition_prob(&[0, 0, 0], &[0, 0], &[1], &[0, 0, 0]).is_err());
        assert!(sp
            .local_transition_prob(&[0, 0, 0], &[0, 0], &[1, 1], &[0, 0, 0])
            .is_ok());
    }

    #[test]
    fn local_evaluators_match_embedding() {
        let m = ffg(3);
        let sp = SubProblem::extract(m.clone(), &[0, 1], &[0, 1, 2], &[0, 1, 2]).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let s: Vec<usize> = (0..4).map(|_| rng.random_range(0..3)).collect();
            let s2: Vec<usize> = (0..4).map(|_| rng.random_range(0..3)).collect();
            let a: Vec<usize> = (0..3).map(|_| rng.random_range(0..2)).collect();
            let o: Vec<usize> = (0..3).map(|_| rng.random_range(0..2)).collect();
            // u = (house 3, agent 2)
            let u = [s[3], a[2]];
            let local = sp.local_transition_prob(&s[..3], &a[..2], &u, &s2[..3]).unwrap();
            let full: f64 = (0..3).map(|k| m.transition_row(k, &s, &a)[s2[k]]).product();
            assert!((local - full).abs() < 1e-15);
            let lo = sp.local_observation_prob(&a[..2], &s2[..3], &o[..2]).unwrap();
            let fo = m.observation_row(0, &a, &s2)[o[0]] * m.observation_row(1, &a, &s2)[o[1]];
            assert!((lo - fo).abs() < 1e-15);
            let lr = sp.local_reward(&s[..3], &a[..2], &s2[..3]).unwrap();
            assert_eq!(lr, -((s2[0] + s2[1] + s2[2]) as f64));
        }
    }

    #[test]
    fn local_rows_are_stochastic() {
        let sp = SubProblem::extract(ffg(4), &[1, 2], &[1, 2, 3], &[1, 2, 3]).unwrap();
        let lm = sp.compile().unwrap();
        for x in 0..lm.n_states() {
            for a in 0..lm.n_actions() {
                for u in 0..lm.n_influence() {
                    let t: f64 = lm.successors(x, a, u).map(|s| s.1).sum();
                    assert!((t - 1.0).abs() < 1e-8);
                }
            }
        }
    }

    #[test]
    fn partition_matches_two_block_layout() {
        let m = ffg(6);
        let p = make_partition(m, &[vec![0, 1, 2, 3], vec![4, 5, 6]], ClosureRule::Interior).unwrap();
        assert_eq!(p.subproblems[0].agents(), &[0, 1, 2]);
        assert_eq!(p.subproblems[0].factors(), &[0, 1, 2, 3]);
        assert_eq!(p.subproblems[1].agents(), &[4, 5]);
        assert_eq!(p.subproblems[1].factors(), &[4, 5, 6]);
        assert_eq!(p.subproblems[0].nlaf(), &[3]);
        assert_eq!(p.subproblems[1].nlaf(), &[4]);
    }

    #[test]
    fn partition_errors() {
        let m = ffg(2);
        assert!(make_partition(m.clone(), &[vec![0, 1, 2]], ClosureRule::Interior).is_ok());
        assert!(matches!(
            make_partition(m.clone(), &[vec![0, 1], vec![1, 2]], ClosureRule::Interior),
            Err(Error::InvalidPartition(_))
        ));
        assert!(make_partition(m.clone(), &[vec![0, 1]], ClosureRule::Interior).is_err());
        assert!(make_partition(m, &[], ClosureRule::Interior).is_err());
    }

    #[test]
    fn minimal_closure_has_no_agents_for_state_rewards() {
        let p = make_partition(ffg(2), &[vec![0], vec![1], vec![2]], ClosureRule::Minimal).unwrap();
        assert!(p.subproblems.iter().all(|sp| sp.agents().is_empty()));
    }

    #[test]
    fn doc_roundtrip() {
        let sp = SubProblem::extract(ffg(3), &[0, 1], &[0, 1, 2], &[0, 1, 2]).unwrap();
        let text = serde_json::to_string(&sp.to_doc()).unwrap();
        let back: SubProblemDoc = serde_json::from_str(&text).unwrap();
        let sp2 = back.into_subproblem().unwrap();
        assert_eq!(sp2.nlaf(), sp.nlaf());
        assert_eq!(sp2.influence_source_space_size(), 6);
    }
}
