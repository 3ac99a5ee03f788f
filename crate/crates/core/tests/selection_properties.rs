use proptest::prelude::*;
use ssr_core::envs::{make_chain_env, rollout, ChainConfig};
use ssr_core::ope::Estimator;
use ssr_core::select::{kendall_tau, run_selection, rrs_splits, Cell, ScoreTable, Sequential, Strategy};
use ssr_core::{AhSpec, RngSeed, TabularPolicy};

fn table(rows: &[Vec<f64>]) -> ScoreTable {
    ScoreTable {
        ah_specs: (1..=rows.len()).map(AhSpec::horizon).collect(),
        cells: rows.iter().map(|r| r.iter().map(|&v| Cell::Score(v)).collect()).collect(),
    }
}

proptest! {
    #[test]
    fn permuting_repetitions_keeps_aggregates(
        rows in prop::collection::vec(prop::collection::vec(-100.0f64..100.0, 4), 1..6),
        rot in 0usize..4,
    ) {
        let a = table(&rows);
        let rotated: Vec<Vec<f64>> = rows.iter().map(|r| {
            let mut r = r.clone();
            r.rotate_left(rot);
            r
        }).collect();
        let b = table(&rotated);
        for i in 0..a.n_ahs() {
            let (x, y) = (a.aggregate(i).unwrap(), b.aggregate(i).unwrap());
            prop_assert!((x - y).abs() <= 1e-12 * x.abs().max(1.0));
        }
    }

    #[test]
    fn positive_scaling_keeps_the_choice(
        rows in prop::collection::vec(prop::collection::vec(0i32..50, 3), 1..6),
        scale in prop::sample::select(vec![0.5, 2.0, 4.0, 1024.0]),
    ) {
        // integer scores and power-of-two scales keep every sum exact
        let rows: Vec<Vec<f64>> = rows.iter().map(|r| r.iter().map(|&v| v as f64).collect()).collect();
        let scaled: Vec<Vec<f64>> = rows.iter().map(|r| r.iter().map(|v| v * scale).collect()).collect();
        prop_assert_eq!(table(&rows).best(), table(&scaled).best());
    }

    #[test]
    fn kendall_tau_is_antisymmetric(a in prop::collection::vec(-10.0f64..10.0, 2..12), seed in any::<u64>()) {
        let n = a.len();
        // distinct b values in a seeded order
        let b: Vec<f64> = (0..n).map(|i| ((i as u64).wrapping_mul(2654435761) ^ seed) as f64).collect();
        let reversed: Vec<f64> = b.iter().map(|v| -v).collect();
        let t = kendall_tau(&a, &b).unwrap();
        prop_assert_eq!(kendall_tau(&a, &reversed).unwrap(), -t);
        prop_assert!((-1.0..=1.0).contains(&t));
    }

    #[test]
    fn rrs_partitions_every_repetition(n in 2usize..300, k in 1usize..8, seed in any::<u64>()) {
        let plan = rrs_splits(n, k, 0.5, RngSeed(seed)).unwrap();
        prop_assert_eq!(plan.len(), k);
        for split in &plan.repetitions {
            prop_assert_eq!(split.train.len(), n / 2);
            let mut all: Vec<usize> = split.train.iter().chain(&split.valid).copied().collect();
            all.sort_unstable();
            prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
        }
    }
}

#[test]
fn selection_is_deterministic() {
    let env = make_chain_env(ChainConfig::default()).unwrap();
    let ds = rollout(&env, &TabularPolicy::uniform(7, 2), 150, RngSeed(3)).unwrap();
    let ahs: Vec<AhSpec> = (1..=6).map(AhSpec::horizon).collect();
    let strategy = Strategy::Rrs { k: 4, ratio: 0.5 };
    let a = run_selection(&strategy, &ahs, &ds, &Estimator::Is, RngSeed(8), &Sequential).unwrap();
    let b = run_selection(&strategy, &ahs, &ds, &Estimator::Is, RngSeed(8), &Sequential).unwrap();
    assert_eq!(a, b);
}
