use super::{GeometryError, Vec3};

/// Discrete set of outward approach directions, indexed `1..=n_views`.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewSphere {
    directions: Vec<Vec3>,
}

impl ViewSphere {
    /// Spherical Fibonacci lattice with half-step offsets in `z`.
    ///
    /// Index 1 is the point nearest the north pole. A single view is the
    /// `+z` axis.
    pub fn generate(n_views: usize) -> Result<Self, GeometryError> {
        if n_views == 0 {
            return Err(GeometryError::EmptySphere);
        }
        if n_views == 1 {
            return Ok(Self {
                directions: vec![Vec3::z()],
            });
        }
        let golden_angle = std::f64::consts::PI * (3.0 - 5.0_f64.sqrt());
        let n = n_views as f64;
        let directions = (0..n_views)
            .map(|i| {
                let z = 1.0 - (2.0 * i as f64 + 1.0) / n;
                let r = (1.0 - z * z).max(0.0).sqrt();
                let theta = golden_angle * i as f64;
                Vec3::new(r * theta.cos(), r * theta.sin(), z).normalize()
            })
            .collect();
        Ok(Self { directions })
    }

    pub fn n_views(&self) -> usize {
        self.directions.len()
    }

    pub fn directions(&self) -> &[Vec3] {
        &self.directions
    }

    /// Direction of the 1-based view index.
    pub fn direction(&self, view: usize) -> Result<Vec3, GeometryError> {
        self.check(view)?;
        Ok(self.directions[view - 1])
    }

    pub(crate) fn check(&self, view: usize) -> Result<(), GeometryError> {
        if view == 0 || view > self.directions.len() {
            return Err(GeometryError::ViewOutOfRange {
                index: view,
                count: self.directions.len(),
            });
        }
        Ok(())
    }

    /// 1-based index of the direction with the largest cosine to `dir`;
    /// ties go to the lowest index.
    pub fn nearest(&self, dir: &Vec3) -> usize {
        let mut best = 0;
        let mut best_dot = f64::NEG_INFINITY;
        for (i, d) in self.directions.iter().enumerate() {
            let dot = d.dot(dir);
            if dot > best_dot {
                best_dot = dot;
                best = i;
            }
        }
        best + 1
    }
}
