//! Input point sampling, nearest-label matching within a radius, and the
//! supervision bundle with its selective mask.

use std::collections::HashMap;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::compiler::{BestGrasp, EconomicSceneLabels};
use crate::geometry::Vec3;

pub const DEFAULT_MATCH_RADIUS: f64 = 0.005;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MatchError {
    #[error("cannot sample from an empty cloud")]
    EmptyCloud,
    #[error("sample count must be positive")]
    ZeroCount,
    #[error("farthest-point sampling of {count} from {available} points")]
    CountExceedsCloud { count: usize, available: usize },
    #[error("match radius {0} must be positive")]
    NonPositiveRadius(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleStrategy {
    Uniform,
    FarthestPoint,
}

impl std::str::FromStr for SampleStrategy {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "uniform" => Ok(Self::Uniform),
            "farthest-point" | "fps" => Ok(Self::FarthestPoint),
            _ => Err(format!("unknown sampling strategy `{s}`")),
        }
    }
}

impl std::fmt::Display for SampleStrategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Uniform => "uniform",
            Self::FarthestPoint => "farthest-point",
        })
    }
}

/// Indices of `count` sampled cloud points.
///
/// Uniform sampling draws without replacement when `count` fits the cloud
/// and with replacement otherwise. Farthest-point sampling starts at index
/// 0 and breaks distance ties toward the lowest index; it ignores `seed`.
pub fn sample_points(
    cloud: &[Vec3],
    count: usize,
    seed: u64,
    strategy: SampleStrategy,
) -> Result<Vec<usize>, MatchError> {
    if cloud.is_empty() {
        return Err(MatchError::EmptyCloud);
    }
    if count == 0 {
        return Err(MatchError::ZeroCount);
    }
    let n = cloud.len();
    match strategy {
        SampleStrategy::Uniform => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            if count <= n {
                Ok(index::sample(&mut rng, n, count).into_vec())
            } else {
                Ok((0..count).map(|_| rng.random_range(0..n)).collect())
            }
        }
        SampleStrategy::FarthestPoint => {
            if count > n {
                return Err(MatchError::CountExceedsCloud {
                    count,
                    available: n,
                });
            }
            let mut picked = Vec::with_capacity(count);
            let mut dist = vec![f64::INFINITY; n];
            let mut current = 0;
            for _ in 0..count {
                picked.push(current);
                let c = cloud[current];
                let mut next = 0;
                let mut far = f64::NEG_INFINITY;
                for (i, p) in cloud.iter().enumerate() {
                    dist[i] = dist[i].min((p - c).norm_squared());
                    if dist[i] > far {
                        far = dist[i];
                        next = i;
                    }
                }
                current = next;
            }
            Ok(picked)
        }
    }
}

type Cell = (i64, i64, i64);

/// Uniform hash grid over label points with cells slightly larger than the
/// query radius, so every label within the radius sits in one of the 27
/// cells around the query.
struct LabelGrid {
    cell: f64,
    cells: HashMap<Cell, Vec<usize>>,
}

impl LabelGrid {
    fn new(points: &[Vec3], radius: f64) -> Self {
        let cell = radius * (1.0 + 1e-6);
        let mut cells: HashMap<Cell, Vec<usize>> = HashMap::new();
        for (k, p) in points.iter().enumerate() {
            cells.entry(Self::key(p, cell)).or_default().push(k);
        }
        Self { cell, cells }
    }

    fn key(p: &Vec3, cell: f64) -> Cell {
        let f = |v: f64| (v / cell).floor() as i64;
        (f(p.x), f(p.y), f(p.z))
    }

    fn nearest(&self, q: &Vec3, points: &[Vec3], radius: f64) -> Option<usize> {
        let (cx, cy, cz) = Self::key(q, self.cell);
        let r2 = radius * radius;
        let mut best: Option<(f64, usize)> = None;
        for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    let Some(rows) = self.cells.get(&(cx + dx, cy + dy, cz + dz)) else {
                        continue;
                    };
                    for &k in rows {
                        let d2 = (points[k] - q).norm_squared();
                        if d2 <= r2 && best.is_none_or(|(bd, bk)| d2 < bd || (d2 == bd && k < bk)) {
                            best = Some((d2, k));
                        }
                    }
                }
            }
        }
        best.map(|(_, k)| k)
    }
}

/// Nearest label row within `radius` of each sampled point; distance ties
/// go to the lowest row.
pub fn match_points(
    sampled: &[Vec3],
    labels: &EconomicSceneLabels,
    radius: f64,
) -> Result<Vec<Option<usize>>, MatchError> {
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(MatchError::NonPositiveRadius(radius));
    }
    let points: Vec<Vec3> = (0..labels.len()).map(|k| labels.point(k)).collect();
    let grid = LabelGrid::new(&points, radius);
    Ok(sampled
        .par_iter()
        .map(|q| grid.nearest(q, &points, radius))
        .collect())
}

/// Training targets copied from a matched label row.
#[derive(Debug, Clone, PartialEq)]
pub struct PointTargets {
    pub view_graspness: Vec<f64>,
    pub records: Vec<BestGrasp>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SupervisionBundle {
    pub sampled_points: Vec<Vec3>,
    pub match_index: Vec<Option<usize>>,
    /// `true` rows are supervised.
    pub mask: Vec<bool>,
    pub targets: Vec<Option<PointTargets>>,
}

impl SupervisionBundle {
    pub fn len(&self) -> usize {
        self.sampled_points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sampled_points.is_empty()
    }

    pub fn supervised(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    pub fn masked_fraction(&self) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        1.0 - self.supervised() as f64 / self.len() as f64
    }

    /// Rows of all bundles, in order. Match indices keep their per-scene
    /// meaning.
    pub fn concat<'a>(parts: impl IntoIterator<Item = &'a SupervisionBundle>) -> Self {
        let mut out = SupervisionBundle {
            sampled_points: Vec::new(),
            match_index: Vec::new(),
            mask: Vec::new(),
            targets: Vec::new(),
        };
        for b in parts {
            out.sampled_points.extend_from_slice(&b.sampled_points);
            out.match_index.extend_from_slice(&b.match_index);
            out.mask.extend_from_slice(&b.mask);
            out.targets.extend(b.targets.iter().cloned());
        }
        out
    }
}

pub fn make_bundle(
    sampled: &[Vec3],
    labels: &EconomicSceneLabels,
    radius: f64,
) -> Result<SupervisionBundle, MatchError> {
    let match_index = match_points(sampled, labels, radius)?;
    let targets = match_index
        .iter()
        .map(|m| {
            m.map(|k| PointTargets {
                view_graspness: labels.views(k).iter().map(|&g| g as f64).collect(),
                records: labels.records(k).to_vec(),
            })
        })
        .collect();
    Ok(SupervisionBundle {
        sampled_points: sampled.to_vec(),
        mask: match_index.iter().map(Option::is_some).collect(),
        match_index,
        targets,
    })
}

/// Masked fraction and a histogram of match distances in `bins` equal
/// slices of `[0, radius]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchSummary {
    pub sampled: usize,
    pub supervised: usize,
    pub masked_fraction: f64,
    pub histogram: Vec<usize>,
    pub radius: f64,
}

pub fn summarize(
    bundle: &SupervisionBundle,
    labels: &EconomicSceneLabels,
    radius: f64,
    bins: usize,
) -> MatchSummary {
    let mut histogram = vec![0; bins.max(1)];
    for (q, m) in bundle.sampled_points.iter().zip(&bundle.match_index) {
        if let Some(k) = m {
            let d = (labels.point(*k) - q).norm();
            let b = ((d / radius) * histogram.len() as f64) as usize;
            let last = histogram.len() - 1;
            histogram[b.min(last)] += 1;
        }
    }
    MatchSummary {
        sampled: bundle.len(),
        supervised: bundle.supervised(),
        masked_fraction: bundle.masked_fraction(),
        histogram,
        radius,
    }
}
