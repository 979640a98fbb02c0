use std::sync::Arc;

use iobound::domains::{make_ffg, FfgParams};
use iobound::flat::flatten;
use iobound::oracle::brute_force_optimal;
use iobound::report::{
    best_partition_bound, eaf, global_bound, influence_strength_sweep, BoundOptions, BoundReport, BoundType,
    HeuristicMethod, HeuristicValue, SpKind,
};
use iobound::subproblem::{make_partition, ClosureRule};
use iobound::FactoredDecPOMDP;

fn ffg(n: usize, h: usize) -> Arc<FactoredDecPOMDP> {
    Arc::new(make_ffg(&FfgParams::new(n).with_horizon(h)).unwrap())
}

fn blocks(ranges: &[std::ops::Range<usize>]) -> Vec<Vec<usize>> {
    ranges.iter().map(|r| r.clone().collect()).collect()
}

#[test]
fn larger_subproblems_give_tighter_bounds() {
    let m = ffg(10, 2);
    let small = make_partition(m.clone(), &blocks(&[0..3, 3..6, 6..9, 9..11]), ClosureRule::Interior).unwrap();
    let large = make_partition(m, &blocks(&[0..6, 6..11]), ClosureRule::Interior).unwrap();
    assert!(small.subproblems.iter().all(|sp| sp.agents().len() <= 2));
    assert_eq!(large.subproblems[0].agents().len(), 5);
    let (best, all) = best_partition_bound(&[small, large], BoundType::Mmdp, &BoundOptions::default()).unwrap();
    assert_eq!(best, 1);
    assert!(all[1].value <= all[0].value, "{} vs {}", all[1].value, all[0].value);
}

#[test]
fn six_agent_decompositions_bound_the_optimum() {
    let m = ffg(6, 2);
    let optimum = brute_force_optimal(&flatten(&m, 1 << 16).unwrap(), 1 << 20)
        .unwrap()
        .value;
    let two = make_partition(m.clone(), &blocks(&[0..4, 4..7]), ClosureRule::Interior).unwrap();
    let three = make_partition(m, &blocks(&[0..3, 3..5, 5..7]), ClosureRule::Interior).unwrap();
    assert_eq!(two.subproblems.len(), 2);
    for p in [&two, &three] {
        for bt in BoundType::ALL {
            let g = global_bound(p, bt, &BoundOptions::default()).unwrap();
            assert!(optimum <= g.value + 1e-9, "{bt:?}: {optimum} > {}", g.value);
            let sum: f64 = g.local.iter().map(|l| l.value).sum();
            assert!((sum - g.value).abs() < 1e-12);
        }
    }
}

#[test]
fn identical_partitions_pick_the_first() {
    let m = ffg(3, 2);
    let p = make_partition(m, &blocks(&[0..2, 2..4]), ClosureRule::Interior).unwrap();
    let (best, _) = best_partition_bound(&[p.clone(), p], BoundType::Mmdp, &BoundOptions::default()).unwrap();
    assert_eq!(best, 0);
}

#[test]
fn sweep_ratio_is_monotone_in_p() {
    let params = FfgParams::new(1).with_horizon(2);
    for bt in BoundType::ALL {
        let r = influence_strength_sweep(
            &params,
            &[0.0, 0.5, 1.0],
            SpKind::Edge,
            2,
            bt,
            &BoundOptions::default(),
            1 << 20,
        )
        .unwrap();
        for w in r.rows.windows(2) {
            assert!(w[1].ratio >= w[0].ratio - 1e-12, "{bt:?}: {:?}", r.rows);
        }
        assert!(r.rows.iter().all(|row| row.ratio >= 1.0));
    }
}

#[test]
fn sweep_default_row_matches_plain_bound() {
    let params = FfgParams::new(3).with_horizon(2);
    let r = influence_strength_sweep(
        &params,
        &[1.0],
        SpKind::Edge,
        2,
        BoundType::Mmdp,
        &BoundOptions::default(),
        1 << 20,
    )
    .unwrap();
    let (_, sp) = iobound::domains::make_ffg_edge_sp(&params, 2).unwrap();
    let plain = iobound::report::local_bound(&sp, BoundType::Mmdp, &BoundOptions::default())
        .unwrap()
        .value;
    assert_eq!(r.rows[0].bound, plain);
}

#[test]
fn report_survives_a_json_round_trip() {
    let m = ffg(3, 2);
    let p = make_partition(m, &blocks(&[0..2, 2..4]), ClosureRule::Minimal).unwrap();
    let opts = BoundOptions::default();
    let g = global_bound(&p, BoundType::Mpomdp, &opts).unwrap();
    let report = BoundReport::new(&p, BoundType::Mpomdp, &opts, g)
        .with_heuristic(HeuristicValue {
            policy: "random".into(),
            method: HeuristicMethod::MonteCarlo,
            value: -9.5,
            std_error: Some(0.01),
            n_sims: Some(1000),
            seed: Some(4),
        })
        .unwrap();
    let text = serde_json::to_string(&report).unwrap();
    let back: BoundReport = serde_json::from_str(&text).unwrap();
    assert_eq!(back, report);
    assert!(report.eaf.unwrap() >= 1.0);
}

#[test]
fn eaf_is_symmetric() {
    for (a, b) in [(-3.0, -4.5), (2.0, 7.0), (-1.0, -1.0)] {
        assert_eq!(eaf(a, b).unwrap(), eaf(b, a).unwrap());
    }
}
