#![allow(clippy::needless_range_loop)]

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use iobound::domains::{make_ffg, make_ffg_edge_sp, FfgParams};
use iobound::model::{Cpt, Factor, LocalReward};
use iobound::subproblem::{LocalModel, SubProblem};
use iobound::vector::{
    dot, dp_solve, fixed_backproject, io_backproject, io_qmpomdp_bound, regular_backproject, BackupMode, DpOptions,
};
use iobound::FactoredDecPOMDP;

/// Dense single-agent model: t[x][a][x'], o[x'][a][o], r[x][a].
struct Dense {
    t: Vec<Vec<Vec<f64>>>,
    o: Vec<Vec<Vec<f64>>>,
    r: Vec<Vec<f64>>,
}

fn random_row(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let w: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..1.0)).collect();
    let s: f64 = w.iter().sum();
    w.iter().map(|x| x / s).collect()
}

fn random_dense(seed: u64, ns: usize) -> Dense {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Dense {
        t: (0..ns)
            .map(|_| (0..2).map(|_| random_row(&mut rng, ns)).collect())
            .collect(),
        o: (0..ns)
            .map(|_| (0..2).map(|_| random_row(&mut rng, 2)).collect())
            .collect(),
        r: (0..ns)
            .map(|_| (0..2).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect(),
    }
}

fn to_model(d: &Dense, h: usize) -> FactoredDecPOMDP {
    let ns = d.t.len();
    let flat_rows = |rows: &Vec<Vec<Vec<f64>>>| rows.iter().flat_map(|per_a| per_a.iter().cloned()).collect();
    FactoredDecPOMDP {
        name: "dense".into(),
        provenance: None,
        agents: vec!["a".into()],
        factors: vec![Factor {
            name: "x".into(),
            cardinality: ns,
        }],
        actions: vec![vec!["a0".into(), "a1".into()]],
        observations: vec![vec!["o0".into(), "o1".into()]],
        transition_cpts: vec![Cpt {
            child: 0,
            parent_factors_prev: vec![0],
            parent_factors_next: vec![],
            parent_agents: vec![0],
            table: flat_rows(&d.t),
        }],
        observation_cpts: vec![Cpt {
            child: 0,
            parent_factors_prev: vec![],
            parent_factors_next: vec![0],
            parent_agents: vec![0],
            table: flat_rows(&d.o),
        }],
        rewards: vec![LocalReward {
            name: "r".into(),
            factor_scope: vec![0],
            agent_scope: vec![0],
            next_factor_scope: vec![],
            table: d.r.iter().flatten().copied().collect(),
        }],
        b0: vec![vec![1.0 / ns as f64; ns]],
        horizon: h,
        discount: 1.0,
    }
}

fn local(m: FactoredDecPOMDP) -> LocalModel {
    SubProblem::whole(Arc::new(m)).unwrap().compile().unwrap()
}

fn regular() -> DpOptions {
    DpOptions {
        mode: BackupMode::Regular,
        ..DpOptions::default()
    }
}

#[test]
fn zero_vector_back_projects_to_zero() {
    let lm = local(to_model(&random_dense(1, 3), 2));
    for a in 0..2 {
        for o in 0..2 {
            assert!(regular_backproject(&lm, &[0.0; 3], a, o)
                .unwrap()
                .iter()
                .all(|&v| v == 0.0));
        }
    }
}

#[test]
fn deterministic_dynamics_permute_entries() {
    // x' = 1 - x, observation = x'
    let d = Dense {
        t: vec![vec![vec![0.0, 1.0]; 2], vec![vec![1.0, 0.0]; 2]],
        o: vec![vec![vec![1.0, 0.0]; 2], vec![vec![0.0, 1.0]; 2]],
        r: vec![vec![0.0; 2]; 2],
    };
    let lm = local(to_model(&d, 2));
    let nu = [3.0, 5.0];
    for a in 0..2 {
        let total: Vec<f64> = (0..2)
            .map(|o| regular_backproject(&lm, &nu, a, o).unwrap())
            .fold(vec![0.0; 2], |acc, v| acc.iter().zip(&v).map(|(x, y)| x + y).collect());
        assert_eq!(total, vec![5.0, 3.0]);
    }
}

#[test]
fn back_projection_matches_dense_matrices() {
    for seed in 0..5 {
        let d = random_dense(seed, 4);
        let lm = local(to_model(&d, 2));
        let nu = [0.3, -1.2, 2.5, 0.7];
        for a in 0..2 {
            for o in 0..2 {
                let got = regular_backproject(&lm, &nu, a, o).unwrap();
                for x in 0..4 {
                    let want: f64 = (0..4).map(|x2| d.o[x2][a][o] * d.t[x][a][x2] * nu[x2]).sum();
                    assert!((got[x] - want).abs() < 1e-12);
                }
                let (io, _) = io_backproject(&lm, &nu, a, o).unwrap();
                assert_eq!(io, got);
            }
        }
    }
}

/// max over action sequences of the unnormalized belief tree rooted at `beta`.
fn belief_tree(d: &Dense, beta: &[f64], steps: usize) -> f64 {
    if steps == 0 {
        return 0.0;
    }
    let ns = beta.len();
    (0..2)
        .map(|a| {
            let now: f64 = (0..ns).map(|x| beta[x] * d.r[x][a]).sum();
            let later: f64 = (0..2)
                .map(|o| {
                    let next: Vec<f64> = (0..ns)
                        .map(|x2| (0..ns).map(|x| beta[x] * d.t[x][a][x2]).sum::<f64>() * d.o[x2][a][o])
                        .collect();
                    belief_tree(d, &next, steps - 1)
                })
                .sum();
            now + later
        })
        .fold(f64::NEG_INFINITY, f64::max)
}

#[test]
fn regular_vectors_match_belief_tree() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    for (seed, h) in [(7, 2), (8, 3)] {
        let d = random_dense(seed, 2);
        let lm = local(to_model(&d, h));
        let sol = dp_solve(&lm, &regular()).unwrap();
        let v0 = sol.sets[0].as_ref().unwrap();
        for _ in 0..1000 {
            let p: f64 = rng.random();
            let b = [p, 1.0 - p];
            let (got, _) = v0.best_at(&b);
            let want = belief_tree(&d, &b, h);
            assert!((got - want).abs() < 1e-10, "h={h} b={b:?}: {got} vs {want}");
        }
    }
}

#[test]
fn horizon_one_set_is_the_reward_vectors() {
    let d = random_dense(3, 3);
    let lm = local(to_model(&d, 1));
    let sol = dp_solve(&lm, &regular()).unwrap();
    let set = sol.sets[0].as_ref().unwrap();
    for v in &set.vectors {
        let want: Vec<f64> = (0..3).map(|x| d.r[x][v.action]).collect();
        assert!(v.values.iter().zip(&want).all(|(a, b)| (a - b).abs() < 1e-12));
    }
}

fn edge_sp(h: usize) -> LocalModel {
    make_ffg_edge_sp(&FfgParams::new(3).with_horizon(h), 2)
        .unwrap()
        .1
        .compile()
        .unwrap()
}

#[test]
fn io_back_projection_dominates_every_fixed_source() {
    let lm = edge_sp(2);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..5 {
        let nu: Vec<f64> = (0..lm.n_states()).map(|_| rng.random_range(-3.0..1.0)).collect();
        for a in 0..lm.n_actions() {
            for o in 0..lm.n_observations() {
                let (io, arg) = io_backproject(&lm, &nu, a, o).unwrap();
                for u in 0..lm.n_influence() {
                    let f = fixed_backproject(&lm, &nu, a, o, u).unwrap();
                    assert!(io.iter().zip(&f).all(|(x, y)| x >= y));
                }
                for x in 0..lm.n_states() {
                    let f = fixed_backproject(&lm, &nu, a, o, arg[x]).unwrap();
                    assert_eq!(f[x], io[x]);
                }
            }
        }
    }
}

#[test]
fn constant_vector_scales_by_attainable_mass() {
    let lm = edge_sp(2);
    let c = 2.5;
    let nu = vec![c; lm.n_states()];
    for a in 0..lm.n_actions() {
        for o in 0..lm.n_observations() {
            let (io, _) = io_backproject(&lm, &nu, a, o).unwrap();
            for x in 0..lm.n_states() {
                let mass = (0..lm.n_influence())
                    .map(|u| {
                        lm.successors(x, a, u)
                            .map(|(x2, p, _)| p * lm.observation_row(a, x2)[o])
                            .sum::<f64>()
                    })
                    .fold(f64::NEG_INFINITY, f64::max);
                assert!((io[x] - c * mass).abs() < 1e-12 && io[x] <= c + 1e-12);
            }
        }
    }
}

fn fixed_reward(lm: &LocalModel, a: usize, u: usize) -> Vec<f64> {
    (0..lm.n_states())
        .map(|x| lm.successors(x, a, u).map(|(_, p, r)| p * r).sum())
        .collect()
}

#[test]
fn io_vectors_dominate_fixed_influence_sequences() {
    let lm = edge_sp(2);
    let sol = dp_solve(&lm, &DpOptions::default()).unwrap();
    let (v0, v1) = (sol.sets[0].as_ref().unwrap(), sol.sets[1].as_ref().unwrap());
    for v in &v0.vectors {
        for u0 in 0..lm.n_influence() {
            for u1 in 0..lm.n_influence() {
                let mut fixed = fixed_reward(&lm, v.action, u0);
                for (o, &j) in v.successors.iter().enumerate() {
                    let next = fixed_reward(&lm, v1.vectors[j].action, u1);
                    let bp = fixed_backproject(&lm, &next, v.action, o, u0).unwrap();
                    fixed.iter_mut().zip(&bp).for_each(|(x, y)| *x += y);
                }
                assert!(v.values.iter().zip(&fixed).all(|(x, y)| *x >= y - 1e-12));
            }
        }
    }
}

#[test]
fn zero_rewards_give_a_zero_bound() {
    let mut p = FfgParams::new(3).with_horizon(3);
    p.reward_per_level = Some(vec![0.0; 3]);
    let lm = make_ffg_edge_sp(&p, 2).unwrap().1.compile().unwrap();
    assert_eq!(io_qmpomdp_bound(&lm, &DpOptions::default()).unwrap().bound, 0.0);
}

#[test]
fn whole_problem_io_equals_regular() {
    for h in [2, 3] {
        let m = make_ffg(&FfgParams::new(2).with_horizon(h)).unwrap();
        let lm = local(m);
        let io = io_qmpomdp_bound(&lm, &DpOptions::default()).unwrap().bound;
        let reg = io_qmpomdp_bound(&lm, &regular()).unwrap().bound;
        assert!((io - reg).abs() < 1e-12);
        if h > 2 {
            continue;
        }
        let sol = dp_solve(&lm, &regular()).unwrap();
        let direct = sol.sets[0]
            .as_ref()
            .unwrap()
            .vectors
            .iter()
            .map(|v| dot(&lm.b0, &v.values))
            .fold(f64::NEG_INFINITY, f64::max);
        assert!((direct - reg).abs() < 1e-9, "h={h}: {direct} vs {reg}");
    }
}
