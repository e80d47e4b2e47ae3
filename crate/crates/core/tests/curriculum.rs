use std::collections::HashSet;

use agl_core::curriculum::{
    lp_difficulty, nc_difficulty, score_lp, score_nc, stratify, wilson_lower_bound, Components,
    DifficultyScore, StageQuota, Stratum, DEFAULT_ETA, DEFAULT_Z,
};
use agl_core::synthetic::{environment, SyntheticSpec};
use agl_core::{Split, Target};
use proptest::prelude::*;

/// Wilson lower bound written out from the textbook interval.
fn wilson_reference(p: f64, n: f64, z: f64) -> f64 {
    let denom = 1.0 + z * z / n;
    let centre = p + z * z / (2.0 * n);
    let half = z * ((p * (1.0 - p) + z * z / (4.0 * n)) / n).sqrt();
    (centre - half) / denom
}

#[test]
fn closed_form_value() {
    let z = 1.96f64;
    let expect = 1.0 / (1.0 + z * z / 10.0) + 0.05 * 11f64.ln();
    let got = nc_difficulty(1.0, 10, DEFAULT_Z, DEFAULT_ETA).score;
    assert!((got - expect).abs() < 1e-12);
    assert!((got - 0.8424).abs() < 1e-4);
}

#[test]
fn wilson_matches_reference() {
    for i in 1..=100 {
        for n in [1.0, 2.0, 5.0, 10.0, 50.0, 1000.0] {
            let p = i as f64 / 100.0;
            assert!(
                (wilson_lower_bound(p, n, DEFAULT_Z) - wilson_reference(p, n, DEFAULT_Z).max(0.0))
                    .abs()
                    < 1e-12
            );
        }
    }
}

#[test]
fn monotone_grids() {
    for d in [1usize, 3, 10, 100] {
        let mut prev = f64::NEG_INFINITY;
        for i in 0..=1000 {
            let s = nc_difficulty(i as f64 / 1000.0, d, DEFAULT_Z, DEFAULT_ETA).score;
            assert!(s >= prev);
            prev = s;
        }
    }
    let mut prev = f64::NEG_INFINITY;
    for d in 1..=1000 {
        let s = nc_difficulty(1.0, d, DEFAULT_Z, DEFAULT_ETA).score;
        assert!(s > prev);
        prev = s;
    }
}

#[test]
fn synthetic_scores_and_plan() {
    let env = environment(&SyntheticSpec {
        nodes: 600,
        ..Default::default()
    });
    let nodes: Vec<_> = env.graph.nodes_in_split(Split::Train).collect();
    let nc = score_nc(&env.graph, &nodes, DEFAULT_Z, DEFAULT_ETA).unwrap();
    for s in &nc {
        let Components::Nc {
            wilson,
            degree_term,
        } = s.components
        else {
            panic!()
        };
        assert_eq!(s.score, wilson + degree_term);
        assert!((0.0..=1.0).contains(&wilson));
    }
    let lp = score_lp(env.pool.as_ref().unwrap().entries(), &env.embeddings);
    assert!(lp.iter().all(|s| (0.0..=1.0).contains(&s.score)));

    let plan = stratify(
        nc.clone(),
        &[StageQuota::new(20, 20, 20), StageQuota::new(10, 30, 30)],
        11,
    )
    .unwrap();
    let again = stratify(
        nc,
        &[StageQuota::new(20, 20, 20), StageQuota::new(10, 30, 30)],
        11,
    )
    .unwrap();
    assert_eq!(plan.to_jsonl(), again.to_jsonl());
}

fn scores_strategy() -> impl Strategy<Value = Vec<DifficultyScore>> {
    prop::collection::vec(0.0f64..1.0, 0..200).prop_map(|v| {
        v.into_iter()
            .enumerate()
            .map(|(i, score)| DifficultyScore {
                target: Target::node(i as u32),
                score,
                components: Components::Lp {
                    sim: score,
                    label: 1,
                },
            })
            .collect()
    })
}

proptest! {
    #[test]
    fn stratification_partitions(scores in scores_strategy(), seed in any::<u64>()) {
        let n = scores.len();
        let plan = stratify(scores, &[], seed).unwrap();
        let mut seen = HashSet::new();
        for s in Stratum::ALL {
            let st = plan.stratum(s);
            for w in st.windows(2) {
                prop_assert!(w[0].score >= w[1].score);
            }
            for d in st {
                prop_assert!(seen.insert(d.target.u));
            }
        }
        prop_assert_eq!(seen.len(), n);
        let (e, h) = (plan.stratum(Stratum::Easy), plan.stratum(Stratum::Hard));
        if let (Some(lo), Some(hi)) = (e.last(), h.first()) {
            prop_assert!(lo.score >= hi.score);
        }
    }

    #[test]
    fn difficulty_ranges(p in 0.0f64..=1.0, d in 0usize..500, sim in -1.0f64..=1.0, y in 0u8..=1) {
        let nc = nc_difficulty(p, d, DEFAULT_Z, DEFAULT_ETA);
        prop_assert!((0.0..=1.0).contains(&nc.wilson));
        prop_assert!((0.0..=1.0).contains(&lp_difficulty(sim, y)));
    }
}
