mod common;

use common::{column, good_grasps as good_oracle, pop_std, random_entry, rng};
use econgrasp::ambiguity::{
    attribute_std, best_grasp, conditional_std, good_grasps, report, Condition, Triple,
};
use econgrasp::compiler::Graspability;
use econgrasp::geometry::GripperModel;
use econgrasp::synth::{DenseObjectLabels, LabelEntry};
use rand::Rng;

fn random_point(seed: u64, n_views: usize) -> Vec<LabelEntry> {
    let mut r = rng(seed);
    (0..n_views * 48).map(|_| random_entry(&mut r)).collect()
}

fn random_triples(seed: u64) -> Vec<Triple> {
    let mut r = rng(seed);
    let n = r.random_range(1..30);
    (0..n)
        .map(|_| {
            [
                r.random_range(1..=8),
                r.random_range(1..=12),
                r.random_range(1..=4),
            ]
        })
        .collect()
}

#[test]
fn good_grasps_match_nested_loops() {
    let g = GripperModel::default();
    for seed in 0..1000 {
        let point = random_point(seed, 4);
        for t in [0.4, 0.8] {
            let got: Vec<Triple> = good_grasps(&point, 12, 4, &g, &Graspability::new(t))
                .iter()
                .map(|x| x.triple)
                .collect();
            assert_eq!(got, good_oracle(&point, 4, 12, 4, t), "seed {seed}");
        }
    }
}

#[test]
fn attribute_std_matches_moment_formula() {
    for seed in 0..2000 {
        let set = random_triples(seed);
        let got = attribute_std(&set).unwrap();
        for (k, g) in got.iter().enumerate() {
            assert!(
                (g - pop_std(&column(&set, k))).abs() <= 1e-9,
                "seed {seed}"
            );
        }
    }
    assert!(attribute_std(&[]).is_none());
}

#[test]
fn conditional_std_matches_filtering() {
    for seed in 0..2000 {
        let set = random_triples(seed);
        let anchor = set[seed as usize % set.len()];
        for (c, fixed) in [
            (Condition::View, 0),
            (Condition::Angle, 1),
            (Condition::Depth, 2),
        ] {
            let subset: Vec<Triple> = set
                .iter()
                .filter(|t| t[fixed] == anchor[fixed])
                .copied()
                .collect();
            let expected: Vec<f64> = (0..3)
                .filter(|&k| k != fixed)
                .map(|k| pop_std(&column(&subset, k)))
                .collect();
            let got = conditional_std(&set, c, &anchor).unwrap();
            assert_eq!(got.len(), 2);
            for (a, b) in got.iter().zip(&expected) {
                assert!((a - b).abs() <= 1e-9, "seed {seed}");
            }
        }
    }
}

#[test]
fn single_grasp_has_zero_spread() {
    let set = [[3, 5, 2]];
    assert_eq!(attribute_std(&set).unwrap(), [0.0; 3]);
    assert_eq!(
        conditional_std(&set, Condition::View, &set[0]).unwrap(),
        vec![0.0, 0.0]
    );
}

#[test]
fn best_grasp_prefers_low_friction() {
    let g = GripperModel::default();
    let mut point = vec![LabelEntry::EMPTY; 3 * 48];
    let e = |mu| LabelEntry {
        mu,
        collide: false,
        width: 0.03,
    };
    point[2 * 48 + 7] = e(0);
    point[5] = e(2);
    point[60] = e(0);
    let set = good_grasps(&point, 12, 4, &g, &Graspability::new(0.8));
    assert_eq!(best_grasp(&set), Some([2, 4, 1]));
}

#[test]
fn report_counts_empty_points() {
    let g = GripperModel::default();
    let mut labels = DenseObjectLabels::empty(3, 4, 12, 4);
    let n = labels.per_point();
    labels.entries[n + 9] = LabelEntry {
        mu: 1,
        collide: false,
        width: 0.02,
    };
    let rep = report(&[labels], &g, &Graspability::new(0.8));
    assert_eq!((rep.n_points_counted, rep.n_points_empty), (1, 2));
    assert_eq!(rep.rows[1].std_view, None);
    assert_eq!(rep.rows[1].std_angle, Some(0.0));
}
