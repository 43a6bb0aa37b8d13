use nalgebra::{DMatrix, DVector, Matrix2, Matrix2x3, Matrix3, MatrixXx2, Vector2};

use super::association::{Association, Pairing};
use super::state::{LandmarkMeta, SlamState};
use super::SlamConfig;
use crate::geometry::normalize_angle;
use crate::perception::ConeObservation;
use crate::world::OdometrySample;

/// Range-bearing noise. The range sigma grows linearly with range.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeasurementNoise {
    pub range_sigma: f64,
    pub range_sigma_rel: f64,
    pub bearing_sigma: f64,
}

impl Default for MeasurementNoise {
    fn default() -> Self {
        Self {
            range_sigma: 0.1,
            range_sigma_rel: 0.05,
            bearing_sigma: 0.02,
        }
    }
}

impl MeasurementNoise {
    pub fn covariance(&self, range: f64) -> Matrix2<f64> {
        let sr = self.range_sigma + self.range_sigma_rel * range.max(0.0);
        Matrix2::new(sr * sr, 0.0, 0.0, self.bearing_sigma * self.bearing_sigma)
    }
}

/// Predicted range/bearing of one landmark with Jacobians for the pose and
/// landmark blocks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredictedMeasurement {
    pub range: f64,
    pub bearing: f64,
    pub h_pose: Matrix2x3<f64>,
    pub h_landmark: Matrix2<f64>,
}

impl PredictedMeasurement {
    pub fn z(&self) -> Vector2<f64> {
        Vector2::new(self.range, self.bearing)
    }
}

/// Unicycle propagation. Only the pose rows and columns of the covariance change.
pub fn motion_update(state: &mut SlamState, odom: &OdometrySample, dt: f64, process_noise: &Matrix3<f64>) {
    assert!(dt > 0.0, "dt must be positive, got {dt}");
    let th = state.mean[2];
    let (s, c) = th.sin_cos();
    let v = odom.speed;
    state.mean[0] += v * c * dt;
    state.mean[1] += v * s * dt;
    state.mean[2] = normalize_angle(th + odom.yaw_rate * dt);

    let f = Matrix3::new(1.0, 0.0, -v * s * dt, 0.0, 1.0, v * c * dt, 0.0, 0.0, 1.0);
    let n = state.dim();
    let ppp = state.pose_covariance();
    let new_pp = f * ppp * f.transpose() + process_noise * dt;
    state.covariance.fixed_view_mut::<3, 3>(0, 0).copy_from(&new_pp);
    if n > 3 {
        let cross = f * state.covariance.view((0, 3), (3, n - 3));
        state.covariance.view_mut((0, 3), (3, n - 3)).copy_from(&cross);
        state.covariance.view_mut((3, 0), (n - 3, 3)).copy_from(&cross.transpose());
    }
}

pub fn measurement_model(state: &SlamState, landmark: usize) -> PredictedMeasurement {
    let l = state.landmark(landmark);
    let dx = l.x - state.mean[0];
    let dy = l.y - state.mean[1];
    let q = dx * dx + dy * dy;
    let r = q.sqrt();
    let bearing = normalize_angle(dy.atan2(dx) - state.mean[2]);
    PredictedMeasurement {
        range: r,
        bearing,
        h_pose: Matrix2x3::new(-dx / r, -dy / r, 0.0, dy / q, -dx / q, -1.0),
        h_landmark: Matrix2::new(dx / r, dy / r, -dy / q, dx / q),
    }
}

/// Innovation `z - h` with the bearing component wrapped.
pub fn innovation(obs: &ConeObservation, predicted: &PredictedMeasurement) -> Vector2<f64> {
    Vector2::new(obs.range - predicted.range, normalize_angle(obs.bearing - predicted.bearing))
}

/// `P·Hᵀ` using only the five non-zero columns of `H`.
fn p_ht(p: &DMatrix<f64>, pm: &PredictedMeasurement, landmark: usize) -> MatrixXx2<f64> {
    let li = 3 + 2 * landmark;
    let mut out = p.columns(0, 3) * pm.h_pose.transpose();
    out += p.columns(li, 2) * pm.h_landmark.transpose();
    out
}

/// Innovation covariance `H·P·Hᵀ + R` for one landmark.
pub fn innovation_covariance(state: &SlamState, pm: &PredictedMeasurement, landmark: usize, r: &Matrix2<f64>) -> Matrix2<f64> {
    let li = 3 + 2 * landmark;
    let pht = p_ht(&state.covariance, pm, landmark);
    let s = pm.h_pose * pht.rows(0, 3) + pm.h_landmark * pht.rows(li, 2);
    Matrix2::new(s[(0, 0)], s[(0, 1)], s[(1, 0)], s[(1, 1)]) + r
}

/// Sequential Joseph-form update for one paired observation.
fn update_one(state: &mut SlamState, obs: &ConeObservation, landmark: usize, noise: &MeasurementNoise) {
    let pm = measurement_model(state, landmark);
    let r = noise.covariance(obs.range);
    let li = 3 + 2 * landmark;
    let pht = p_ht(&state.covariance, &pm, landmark);
    let hph = pm.h_pose * pht.rows(0, 3) + pm.h_landmark * pht.rows(li, 2);
    let s = Matrix2::new(hph[(0, 0)], hph[(0, 1)], hph[(1, 0)], hph[(1, 1)]) + r;
    let Some(s_inv) = s.try_inverse() else {
        log::warn!("singular innovation covariance for landmark {landmark}");
        return;
    };
    let k = &pht * s_inv;
    let nu = innovation(obs, &pm);
    state.mean += &k * nu;
    state.mean[2] = normalize_angle(state.mean[2]);

    // Joseph form: (I - KH) P (I - KH)ᵀ + K R Kᵀ
    let a = &state.covariance - &k * pht.transpose();
    let mut a_ht = a.columns(0, 3) * pm.h_pose.transpose();
    a_ht += a.columns(li, 2) * pm.h_landmark.transpose();
    state.covariance = a - a_ht * k.transpose() + &k * r * k.transpose();
    state.symmetrize();
}

/// Appends a landmark from the inverse measurement model. The measurement
/// noise contribution is inflated by `inflation`.
fn add_landmark(state: &mut SlamState, obs: &ConeObservation, noise: &MeasurementNoise, inflation: f64) {
    let (x, y, th) = (state.mean[0], state.mean[1], state.mean[2]);
    let a = th + obs.bearing;
    let (s, c) = a.sin_cos();
    let r = obs.range;
    let g_pose = Matrix2x3::new(1.0, 0.0, -r * s, 0.0, 1.0, r * c);
    let g_z = Matrix2::new(c, -r * s, s, r * c);

    let n = state.dim();
    let p_pose_all = state.covariance.rows(0, 3).into_owned();
    let cross = g_pose * &p_pose_all; // 2 x n
    let ll = g_pose * state.pose_covariance() * g_pose.transpose()
        + g_z * noise.covariance(r) * g_z.transpose() * inflation;

    let mut cov = DMatrix::zeros(n + 2, n + 2);
    cov.view_mut((0, 0), (n, n)).copy_from(&state.covariance);
    cov.view_mut((n, 0), (2, n)).copy_from(&cross);
    cov.view_mut((0, n), (n, 2)).copy_from(&cross.transpose());
    cov.view_mut((n, n), (2, 2)).copy_from(&ll);
    state.covariance = cov;

    let mut mean = DVector::zeros(n + 2);
    mean.rows_mut(0, n).copy_from(&state.mean);
    mean[n] = x + r * c;
    mean[n + 1] = y + r * s;
    state.mean = mean;
    state.landmark_meta.push(LandmarkMeta::first(obs.class));
    state.symmetrize();
}

/// Applies paired updates in observation order, then initializes new landmarks.
pub fn measurement_update(state: &mut SlamState, observations: &[ConeObservation], association: &Association, config: &SlamConfig) {
    assert_eq!(observations.len(), association.pairings.len(), "association does not match frame");
    for (obs, pairing) in observations.iter().zip(&association.pairings) {
        if let Pairing::Landmark(j) = *pairing {
            assert!(j < state.landmark_count(), "landmark {j} out of range");
            update_one(state, obs, j, &config.measurement);
            state.landmark_meta[j].record(obs.class);
        }
    }
    for (obs, pairing) in observations.iter().zip(&association.pairings) {
        if *pairing == Pairing::NewLandmark {
            add_landmark(state, obs, &config.measurement, config.new_landmark_inflation);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{ConeClass, Pose2D};
    use crate::perception::SourceTier;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn obs(range: f64, bearing: f64, class: ConeClass) -> ConeObservation {
        ConeObservation {
            range,
            bearing,
            class,
            source_tier: SourceTier::LidarFusion,
            confidence: 1.0,
            depth: range,
            cone_id: None,
        }
    }

    fn odom(v: f64, w: f64) -> OdometrySample {
        OdometrySample {
            timestamp: 0.0,
            speed: v,
            yaw_rate: w,
            noise_applied: false,
        }
    }

    fn with_landmarks(pose: Pose2D, pts: &[(f64, f64)]) -> SlamState {
        let mut s = SlamState::new(pose, Matrix3::identity() * 0.01);
        let config = SlamConfig::default();
        for &(x, y) in pts {
            let d = Vector2::new(x - pose.x, y - pose.y);
            let o = obs(d.norm(), normalize_angle(d.y.atan2(d.x) - pose.heading), ConeClass::Blue);
            add_landmark(&mut s, &o, &config.measurement, config.new_landmark_inflation);
        }
        s
    }

    #[test]
    fn stationary_motion_adds_q_dt() {
        let mut s = with_landmarks(Pose2D::new(1.0, 2.0, 0.5), &[(4.0, 4.0)]);
        let before = s.clone();
        let q = Matrix3::from_diagonal(&nalgebra::Vector3::new(0.02, 0.03, 0.004));
        motion_update(&mut s, &odom(0.0, 0.0), 0.1, &q);
        assert_eq!(s.mean, before.mean);
        let grow = s.covariance.trace() - before.covariance.trace();
        assert!((grow - q.trace() * 0.1).abs() < 1e-12);
    }

    #[test]
    fn axis_aligned_motion() {
        let mut s = SlamState::new(Pose2D::identity(), Matrix3::zeros());
        motion_update(&mut s, &odom(1.0, 0.0), 1.0, &Matrix3::zeros());
        assert_eq!(s.mean[0], 1.0);
        assert_eq!(s.mean[1], 0.0);
    }

    #[test]
    fn motion_leaves_landmark_blocks_alone() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut s = with_landmarks(Pose2D::new(0.0, 0.0, 0.2), &[(5.0, 1.0), (3.0, -2.0), (8.0, 4.0)]);
        let before = s.covariance.view((3, 3), (6, 6)).into_owned();
        let lm = s.mean.rows(3, 6).into_owned();
        let q = Matrix3::identity() * 0.01;
        for _ in 0..100 {
            let o = odom(rng.gen_range(0.0..10.0), rng.gen_range(-1.0..1.0));
            motion_update(&mut s, &o, rng.gen_range(0.001..0.05), &q);
        }
        assert_eq!(s.covariance.view((3, 3), (6, 6)).into_owned(), before);
        assert_eq!(s.mean.rows(3, 6).into_owned(), lm);
        s.check_invariants().unwrap();
    }

    #[test]
    fn three_four_five() {
        let s = with_landmarks(Pose2D::identity(), &[(3.0, 4.0), (7.0, 0.0)]);
        let pm = measurement_model(&s, 0);
        assert!((pm.range - 5.0).abs() < 1e-12);
        assert!((pm.bearing - 4f64.atan2(3.0)).abs() < 1e-12);
        assert_eq!(measurement_model(&s, 1).bearing, 0.0);
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let h = 1e-6;
        for _ in 0..100 {
            let pose = Pose2D::new(rng.gen_range(-20.0..20.0), rng.gen_range(-20.0..20.0), rng.gen_range(-3.0..3.0));
            let lx = pose.x + rng.gen_range(1.0..20.0) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
            let ly = pose.y + rng.gen_range(-20.0..20.0);
            let s = with_landmarks(pose, &[(lx, ly)]);
            let pm = measurement_model(&s, 0);
            for k in 0..5 {
                let mut plus = s.clone();
                let mut minus = s.clone();
                plus.mean[k] += h;
                minus.mean[k] -= h;
                let zp = measurement_model(&plus, 0).z();
                let zm = measurement_model(&minus, 0).z();
                let mut d = zp - zm;
                d.y = normalize_angle(d.y);
                let fd = d / (2.0 * h);
                let analytic = if k < 3 {
                    pm.h_pose.column(k).into_owned()
                } else {
                    pm.h_landmark.column(k - 3).into_owned()
                };
                assert!((fd - analytic).norm() < 1e-6, "col {k}: fd {fd:?} vs {analytic:?}");
            }
        }
    }

    #[test]
    fn zero_innovation_keeps_mean_and_shrinks_trace() {
        let config = SlamConfig::default();
        let mut s = with_landmarks(Pose2D::new(0.5, 0.0, 0.1), &[(6.0, 2.0)]);
        motion_update(&mut s, &odom(1.0, 0.1), 0.5, &(Matrix3::identity() * 0.05));
        let pm = measurement_model(&s, 0);
        let o = obs(pm.range, pm.bearing, ConeClass::Blue);
        let before = s.clone();
        let assoc = Association {
            pairings: vec![Pairing::Landmark(0)],
            joint_distance: 0.0,
        };
        measurement_update(&mut s, &[o], &assoc, &config);
        assert!((s.mean.clone() - before.mean).norm() < 1e-12);
        assert!(s.covariance.trace() < before.covariance.trace());
        assert_eq!(s.landmark_meta[0].observation_count, 2);
    }

    #[test]
    fn new_landmark_from_inverse_model() {
        let config = SlamConfig::default();
        let mut s = SlamState::new(Pose2D::identity(), Matrix3::zeros());
        let assoc = Association {
            pairings: vec![Pairing::NewLandmark],
            joint_distance: 0.0,
        };
        measurement_update(&mut s, &[obs(5.0, 0.0, ConeClass::Yellow)], &assoc, &config);
        assert_eq!(s.landmark_count(), 1);
        assert!((s.landmark(0) - Vector2::new(5.0, 0.0)).norm() < 1e-12);
        assert_eq!(s.landmark_class(0), ConeClass::Yellow);
        s.check_invariants().unwrap();
    }

    #[test]
    fn fuzzed_updates_stay_psd() {
        let config = SlamConfig::default();
        let q = config.process_noise_matrix();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let mut s = SlamState::new(Pose2D::identity(), Matrix3::identity() * 1e-4);
        for step in 0..1000 {
            motion_update(&mut s, &odom(rng.gen_range(0.0..8.0), rng.gen_range(-0.8..0.8)), 0.01, &q);
            if step % 5 == 0 {
                let n = s.landmark_count();
                let o = obs(rng.gen_range(1.0..25.0), rng.gen_range(-1.2..1.2), ConeClass::Blue);
                let pairing = if n > 0 && rng.gen_bool(0.8) {
                    Pairing::Landmark(rng.gen_range(0..n))
                } else {
                    Pairing::NewLandmark
                };
                let assoc = Association {
                    pairings: vec![pairing],
                    joint_distance: 0.0,
                };
                measurement_update(&mut s, &[o], &assoc, &config);
            }
            s.check_invariants().unwrap();
        }
    }
}
