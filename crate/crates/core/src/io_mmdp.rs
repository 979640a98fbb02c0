//! Influence-optimistic Q-MMDP: finite-horizon value iteration over local
//! states where every backup picks the most favorable influence source.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::subproblem::LocalModel;

/// Stage-`t` action values over (local state, local joint action).
#[derive(Debug, Clone, PartialEq)]
pub struct QTable {
    pub stage: usize,
    pub n_states: usize,
    pub n_actions: usize,
    /// Indexed `x * n_actions + a`.
    pub values: Vec<f64>,
    /// Maximizing influence source per entry (lowest index on ties).
    pub argmax_influence: Vec<usize>,
}

impl QTable {
    pub fn get(&self, x: usize, a: usize) -> f64 {
        self.values[x * self.n_actions + a]
    }

    pub fn state_value(&self, x: usize) -> f64 {
        self.values[x * self.n_actions..(x + 1) * self.n_actions]
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Inner-loop evaluations one backup stage performs: |u| * |X| * |A|.
pub fn backup_op_counter(lm: &LocalModel) -> u64 {
    (lm.n_influence() * lm.n_states() * lm.n_actions()) as u64
}

/// One backup. `q_next = None` stands for the terminal table Q = 0.
/// Returns the new table and the number of (x, a, u) evaluations made.
pub fn io_qmmdp_backup(lm: &LocalModel, stage: usize, q_next: Option<&QTable>) -> Result<(QTable, u64)> {
    let (nx, na, nu) = (lm.n_states(), lm.n_actions(), lm.n_influence());
    if let Some(q) = q_next {
        if q.n_states != nx || q.n_actions != na || q.values.len() != nx * na {
            return Err(Error::DimensionMismatch(format!(
                "next-stage table is {}x{}, local model is {nx}x{na}",
                q.n_states, q.n_actions
            )));
        }
    }
    let future: Vec<f64> = match q_next {
        Some(q) => (0..nx).map(|x| lm.discount * q.state_value(x)).collect(),
        None => vec![0.0; nx],
    };
    let mut values = vec![0.0; nx * na];
    let mut argmax = vec![0usize; nx * na];
    let ops: u64 = values
        .par_chunks_mut(na)
        .zip(argmax.par_chunks_mut(na))
        .enumerate()
        .map(|(x, (vrow, arow))| {
            let mut ops = 0u64;
            for a in 0..na {
                let mut best = f64::NEG_INFINITY;
                let mut best_u = 0;
                for u in 0..nu {
                    ops += 1;
                    let v: f64 = lm.successors(x, a, u).map(|(x2, p, r)| p * (r + future[x2])).sum();
                    if v > best {
                        best = v;
                        best_u = u;
                    }
                }
                vrow[a] = best;
                arow[a] = best_u;
            }
            ops
        })
        .sum();
    Ok((
        QTable {
            stage,
            n_states: nx,
            n_actions: na,
            values,
            argmax_influence: argmax,
        },
        ops,
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MmdpBound {
    pub bound: f64,
    pub best_action: usize,
    /// Counted inner-loop evaluations, stage 0 first.
    pub stage_ops: Vec<u64>,
    pub predicted_stage_ops: u64,
}

/// All Q tables, stage 0 first.
pub fn io_qmmdp_tables(lm: &LocalModel) -> Result<(Vec<QTable>, Vec<u64>)> {
    lm.check_horizon()?;
    let h = lm.horizon;
    let mut tables: Vec<QTable> = Vec::with_capacity(h);
    let mut ops = Vec::with_capacity(h);
    for t in (0..h).rev() {
        let (q, n) = io_qmmdp_backup(lm, t, tables.last())?;
        tables.push(q);
        ops.push(n);
    }
    tables.reverse();
    ops.reverse();
    Ok((tables, ops))
}

/// max_a sum_x b0(x) Q_0(x, a).
pub fn io_qmmdp_bound(lm: &LocalModel) -> Result<MmdpBound> {
    let (tables, stage_ops) = io_qmmdp_tables(lm)?;
    let q0 = &tables[0];
    let mut bound = f64::NEG_INFINITY;
    let mut best_action = 0;
    for a in 0..lm.n_actions() {
        let v: f64 = lm.b0.iter().enumerate().map(|(x, b)| b * q0.get(x, a)).sum();
        if v > bound {
            bound = v;
            best_action = a;
        }
    }
    Ok(MmdpBound {
        bound,
        best_action,
        stage_ops,
        predicted_stage_ops: backup_op_counter(lm),
    })
}
