use nalgebra::{DMatrix, DVector, Matrix2, Matrix3, Vector2};
use serde::{Deserialize, Serialize};

use super::SlamError;
use crate::geometry::{ConeClass, Pose2D};

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct LandmarkMeta {
    pub observation_count: u32,
    /// Observation counts indexed by `ConeClass::index`.
    pub class_histogram: [u32; 4],
}

impl LandmarkMeta {
    pub fn first(class: ConeClass) -> Self {
        let mut meta = Self::default();
        meta.record(class);
        meta
    }

    pub fn record(&mut self, class: ConeClass) {
        self.observation_count += 1;
        self.class_histogram[class.index()] += 1;
    }

    /// Histogram argmax; ties resolve to the lower class index.
    pub fn class(&self) -> ConeClass {
        let mut best = 0;
        for i in 1..4 {
            if self.class_histogram[i] > self.class_histogram[best] {
                best = i;
            }
        }
        ConeClass::from_index(best).unwrap_or(ConeClass::Blue)
    }
}

/// Joint EKF state: `[x, y, heading, l1x, l1y, ...]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SlamState {
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
    pub landmark_meta: Vec<LandmarkMeta>,
}

/// One row of the exported map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapEntry {
    pub x: f64,
    pub y: f64,
    pub class: ConeClass,
    pub cov_xx: f64,
    pub cov_xy: f64,
    pub cov_yy: f64,
    pub n_obs: u32,
}

impl SlamState {
    pub fn new(pose: Pose2D, pose_covariance: Matrix3<f64>) -> Self {
        let mut covariance = DMatrix::zeros(3, 3);
        covariance.fixed_view_mut::<3, 3>(0, 0).copy_from(&pose_covariance);
        Self {
            mean: DVector::from_vec(vec![pose.x, pose.y, pose.heading]),
            covariance,
            landmark_meta: Vec::new(),
        }
    }

    pub fn pose(&self) -> Pose2D {
        Pose2D::new(self.mean[0], self.mean[1], self.mean[2])
    }

    pub fn set_pose(&mut self, pose: Pose2D) {
        self.mean[0] = pose.x;
        self.mean[1] = pose.y;
        self.mean[2] = pose.heading;
    }

    pub fn pose_covariance(&self) -> Matrix3<f64> {
        self.covariance.fixed_view::<3, 3>(0, 0).into_owned()
    }

    pub fn landmark_count(&self) -> usize {
        self.landmark_meta.len()
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn landmark(&self, i: usize) -> Vector2<f64> {
        Vector2::new(self.mean[3 + 2 * i], self.mean[4 + 2 * i])
    }

    pub fn landmark_covariance(&self, i: usize) -> Matrix2<f64> {
        self.covariance.fixed_view::<2, 2>(3 + 2 * i, 3 + 2 * i).into_owned()
    }

    pub fn landmark_class(&self, i: usize) -> ConeClass {
        self.landmark_meta[i].class()
    }

    /// Symmetry to 1e-9, PSD via Cholesky of `P + 1e-9·I`, and dimension bookkeeping.
    pub fn check_invariants(&self) -> Result<(), SlamError> {
        let n = self.dim();
        if n != 3 + 2 * self.landmark_count() || self.covariance.nrows() != n || self.covariance.ncols() != n {
            return Err(SlamError::Invariant(format!(
                "mean {} / covariance {}x{} / {} landmarks",
                n,
                self.covariance.nrows(),
                self.covariance.ncols(),
                self.landmark_count()
            )));
        }
        for i in 0..n {
            for j in (i + 1)..n {
                let a = self.covariance[(i, j)];
                let b = self.covariance[(j, i)];
                if (a - b).abs() > 1e-9 {
                    return Err(SlamError::Invariant(format!("asymmetric at ({i}, {j}): {a} vs {b}")));
                }
            }
        }
        let shifted = &self.covariance + DMatrix::identity(n, n) * 1e-9;
        if shifted.cholesky().is_none() {
            return Err(SlamError::Invariant("covariance is not positive semidefinite".into()));
        }
        Ok(())
    }

    pub fn map(&self) -> Vec<MapEntry> {
        (0..self.landmark_count())
            .map(|i| {
                let p = self.landmark(i);
                let c = self.landmark_covariance(i);
                MapEntry {
                    x: p.x,
                    y: p.y,
                    class: self.landmark_class(i),
                    cov_xx: c[(0, 0)],
                    cov_xy: c[(0, 1)],
                    cov_yy: c[(1, 1)],
                    n_obs: self.landmark_meta[i].observation_count,
                }
            })
            .collect()
    }

    pub fn map_json(&self) -> String {
        serde_json::to_string_pretty(&self.map()).expect("map entries serialize")
    }

    pub(crate) fn symmetrize(&mut self) {
        let n = self.dim();
        for i in 0..n {
            for j in (i + 1)..n {
                let m = 0.5 * (self.covariance[(i, j)] + self.covariance[(j, i)]);
                self.covariance[(i, j)] = m;
                self.covariance[(j, i)] = m;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn histogram_argmax() {
        let mut m = LandmarkMeta::first(ConeClass::Yellow);
        m.record(ConeClass::Blue);
        m.record(ConeClass::Yellow);
        assert_eq!(m.class(), ConeClass::Yellow);
        assert_eq!(m.observation_count, 3);
    }

    #[test]
    fn fresh_state_is_valid() {
        let s = SlamState::new(Pose2D::new(1.0, 2.0, 0.3), Matrix3::identity() * 0.01);
        s.check_invariants().unwrap();
        assert_eq!(s.pose(), Pose2D::new(1.0, 2.0, 0.3));
        assert!(s.map().is_empty());
    }

    #[test]
    fn detects_indefinite_covariance() {
        let mut s = SlamState::new(Pose2D::identity(), Matrix3::identity());
        s.covariance[(0, 0)] = -1.0;
        assert!(s.check_invariants().is_err());
    }
}
