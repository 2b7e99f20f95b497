//! Spread of good grasps within a point: population standard deviations of
//! view, angle and depth indices, unconditionally and with one attribute
//! fixed to the point's best grasp.

use std::fmt::Write as _;

use rayon::prelude::*;

use crate::compiler::{EconomicSceneLabels, Graspability};
use crate::geometry::GripperModel;
use crate::synth::{DenseObjectLabels, LabelEntry};

/// 1-based `(view, angle, depth)`.
pub type Triple = [usize; 3];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Condition {
    None,
    View,
    Angle,
    Depth,
}

impl Condition {
    pub const ALL: [Condition; 4] = [
        Condition::None,
        Condition::View,
        Condition::Angle,
        Condition::Depth,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Condition::None => "original",
            Condition::View => "view",
            Condition::Angle => "angle",
            Condition::Depth => "depth",
        }
    }

    fn fixed(&self) -> Option<usize> {
        match self {
            Condition::None => None,
            Condition::View => Some(0),
            Condition::Angle => Some(1),
            Condition::Depth => Some(2),
        }
    }
}

/// A good grasp together with its friction-grid index.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RankedGrasp {
    pub triple: Triple,
    pub mu: u8,
}

/// Collision-free entries of one point's `views × angles × depths` slice
/// with friction under the threshold, in slice order.
pub fn good_grasps(
    point: &[LabelEntry],
    n_angles: usize,
    n_depths: usize,
    gripper: &GripperModel,
    rule: &Graspability,
) -> Vec<RankedGrasp> {
    point
        .iter()
        .enumerate()
        .filter(|(_, e)| rule.entry(e, gripper))
        .map(|(i, e)| RankedGrasp {
            triple: [
                i / (n_angles * n_depths) + 1,
                (i / n_depths) % n_angles + 1,
                i % n_depths + 1,
            ],
            mu: e.mu,
        })
        .collect()
}

/// One grasp per graspable view of an economic label row.
pub fn good_grasps_economic(
    labels: &EconomicSceneLabels,
    k: usize,
    gripper: &GripperModel,
    rule: &Graspability,
) -> Vec<RankedGrasp> {
    labels
        .records(k)
        .iter()
        .enumerate()
        .filter(|(_, r)| rule.record(r, gripper))
        .filter_map(|(v, r)| {
            let mu = gripper.friction_index(gripper.friction_for_class(r.score_class)?)?;
            Some(RankedGrasp {
                triple: [v + 1, r.angle as usize, r.depth as usize],
                mu: mu as u8,
            })
        })
        .collect()
}

/// Lowest friction, then lowest view, depth and angle.
pub fn best_grasp(set: &[RankedGrasp]) -> Option<Triple> {
    set.iter()
        .min_by_key(|g| (g.mu, g.triple[0], g.triple[2], g.triple[1]))
        .map(|g| g.triple)
}

fn population_std(values: impl Iterator<Item = usize> + Clone) -> f64 {
    let n = values.clone().count() as f64;
    let mean = values.clone().map(|v| v as f64).sum::<f64>() / n;
    (values.map(|v| (v as f64 - mean).powi(2)).sum::<f64>() / n).sqrt()
}

/// Population standard deviation of each attribute; `None` for an empty set.
pub fn attribute_std(set: &[Triple]) -> Option<[f64; 3]> {
    if set.is_empty() {
        return None;
    }
    Some([0, 1, 2].map(|k| population_std(set.iter().map(move |t| t[k]))))
}

/// Restricts `set` to triples sharing the anchor's value of the fixed
/// attribute and returns the deviations of the other two, in
/// `(view, angle, depth)` order.
pub fn conditional_std(set: &[Triple], condition: Condition, anchor: &Triple) -> Option<Vec<f64>> {
    let Some(fixed) = condition.fixed() else {
        return attribute_std(set).map(|s| s.to_vec());
    };
    let subset: Vec<Triple> = set
        .iter()
        .filter(|t| t[fixed] == anchor[fixed])
        .copied()
        .collect();
    let stds = attribute_std(&subset)?;
    Some((0..3).filter(|&k| k != fixed).map(|k| stds[k]).collect())
}

/// Mean deviations for one conditioning mode; `None` entries are the fixed
/// column or absent data.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AmbiguityRow {
    pub condition: Condition,
    pub std_view: Option<f64>,
    pub std_angle: Option<f64>,
    pub std_depth: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AmbiguityReport {
    pub rows: [AmbiguityRow; 4],
    pub n_points_counted: usize,
    pub n_points_empty: usize,
    pub threshold_mu: f64,
}

/// Per-point stds for all four modes, or `None` when the point has no
/// good grasp.
fn point_stds(set: &[RankedGrasp]) -> Option<[Vec<f64>; 4]> {
    let anchor = best_grasp(set)?;
    let triples: Vec<Triple> = set.iter().map(|g| g.triple).collect();
    Some(
        Condition::ALL
            .map(|c| conditional_std(&triples, c, &anchor).expect("anchor is in the set")),
    )
}

fn aggregate(per_point: Vec<Option<[Vec<f64>; 4]>>, threshold_mu: f64) -> AmbiguityReport {
    let counted: Vec<&[Vec<f64>; 4]> = per_point.iter().flatten().collect();
    let n = counted.len();
    let rows = Condition::ALL.map(|c| {
        let row = row_index(c);
        let mean_of = |slot: usize| -> Option<f64> {
            (n > 0).then(|| counted.iter().map(|p| p[row][slot]).sum::<f64>() / n as f64)
        };
        let mut cols = [None; 3];
        let mut slot = 0;
        for (k, col) in cols.iter_mut().enumerate() {
            if c.fixed() == Some(k) {
                continue;
            }
            *col = mean_of(slot);
            slot += 1;
        }
        AmbiguityRow {
            condition: c,
            std_view: cols[0],
            std_angle: cols[1],
            std_depth: cols[2],
        }
    });
    AmbiguityReport {
        rows,
        n_points_counted: n,
        n_points_empty: per_point.len() - n,
        threshold_mu,
    }
}

fn row_index(c: Condition) -> usize {
    Condition::ALL.iter().position(|x| *x == c).expect("listed")
}

/// Collects per-point statistics one label set at a time, so a dataset
/// never has to be held in memory at once.
#[derive(Debug, Default)]
pub struct AmbiguityAccumulator {
    per_point: Vec<Option<[Vec<f64>; 4]>>,
}

impl AmbiguityAccumulator {
    pub fn add_dense(
        &mut self,
        l: &DenseObjectLabels,
        gripper: &GripperModel,
        rule: &Graspability,
    ) {
        let stats: Vec<_> = (0..l.n_points)
            .into_par_iter()
            .map(|p| {
                point_stds(&good_grasps(
                    l.point(p),
                    l.n_angles,
                    l.n_depths,
                    gripper,
                    rule,
                ))
            })
            .collect();
        self.per_point.extend(stats);
    }

    pub fn add_economic(
        &mut self,
        l: &EconomicSceneLabels,
        gripper: &GripperModel,
        rule: &Graspability,
    ) {
        let stats: Vec<_> = (0..l.len())
            .into_par_iter()
            .map(|k| point_stds(&good_grasps_economic(l, k, gripper, rule)))
            .collect();
        self.per_point.extend(stats);
    }

    pub fn finish(self, threshold_mu: f64) -> AmbiguityReport {
        aggregate(self.per_point, threshold_mu)
    }
}

/// Ambiguity statistics over every point of a set of dense label grids.
pub fn report(
    labels: &[DenseObjectLabels],
    gripper: &GripperModel,
    rule: &Graspability,
) -> AmbiguityReport {
    let mut acc = AmbiguityAccumulator::default();
    for l in labels {
        acc.add_dense(l, gripper, rule);
    }
    acc.finish(rule.threshold_mu)
}

/// Ambiguity statistics of compiled labels, one grasp per graspable view.
pub fn report_economic(
    labels: &[EconomicSceneLabels],
    gripper: &GripperModel,
    rule: &Graspability,
) -> AmbiguityReport {
    let mut acc = AmbiguityAccumulator::default();
    for l in labels {
        acc.add_economic(l, gripper, rule);
    }
    acc.finish(rule.threshold_mu)
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.4}"))
}

impl AmbiguityReport {
    /// Aligned table, one row per conditioning mode.
    pub fn to_table(&self) -> String {
        let mut s = String::new();
        writeln!(s, "threshold_mu {}", self.threshold_mu).unwrap();
        writeln!(
            s,
            "points counted {}, without good grasps {}",
            self.n_points_counted, self.n_points_empty
        )
        .unwrap();
        writeln!(
            s,
            "{:<10} {:>10} {:>10} {:>10}",
            "fixed", "view", "angle", "depth"
        )
        .unwrap();
        for r in &self.rows {
            writeln!(
                s,
                "{:<10} {:>10} {:>10} {:>10}",
                r.condition.name(),
                cell(r.std_view),
                cell(r.std_angle),
                cell(r.std_depth)
            )
            .unwrap();
        }
        s
    }

    /// `key=value` lines; absent values are written as `none`.
    pub fn to_key_values(&self) -> String {
        let mut s = String::new();
        writeln!(s, "threshold_mu={}", self.threshold_mu).unwrap();
        writeln!(s, "points_counted={}", self.n_points_counted).unwrap();
        writeln!(s, "points_empty={}", self.n_points_empty).unwrap();
        for r in &self.rows {
            for (name, v) in [
                ("view", r.std_view),
                ("angle", r.std_angle),
                ("depth", r.std_depth),
            ] {
                let value = v.map_or_else(|| "none".to_string(), |x| format!("{x:?}"));
                writeln!(s, "{}.std_{name}={value}", r.condition.name()).unwrap();
            }
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn singleton_has_zero_spread() {
        assert_eq!(attribute_std(&[[5, 2, 3]]), Some([0.0; 3]));
        assert_eq!(attribute_std(&[]), None);
    }

    #[test]
    fn two_views_one_apart() {
        assert_eq!(
            attribute_std(&[[1, 1, 1], [3, 1, 1]]),
            Some([1.0, 0.0, 0.0])
        );
    }

    #[test]
    fn fixing_the_view_keeps_its_angles() {
        let set = [[4, 2, 1], [4, 4, 1], [9, 7, 3]];
        assert_eq!(
            conditional_std(&set, Condition::View, &[4, 2, 1]),
            Some(vec![1.0, 0.0])
        );
    }

    #[test]
    fn one_grasp_per_view_is_unambiguous_given_the_view() {
        let set = [[1, 3, 2], [2, 7, 4], [3, 1, 1]];
        assert_eq!(
            conditional_std(&set, Condition::View, &[2, 7, 4]),
            Some(vec![0.0, 0.0])
        );
    }

    #[test]
    fn empty_dataset_reports_nothing() {
        let l = DenseObjectLabels::empty(3, 2, 2, 2);
        let r = report(&[l], &GripperModel::default(), &Graspability::default());
        assert_eq!(r.n_points_counted, 0);
        assert_eq!(r.n_points_empty, 3);
        assert!(r
            .rows
            .iter()
            .all(|row| row.std_view.is_none() && row.std_angle.is_none()));
    }
}
