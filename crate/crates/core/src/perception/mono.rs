use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use super::{ConeObservation, PerceptionError, SourceTier};
use crate::geometry::{ConeClass, Pixel, Pose2D};
use crate::world::{
    simulate_stereo_detector, stream_rng, BoxQuality, CameraRig, DetectedBox, DetectorNoise, Mission, Stream,
    TrackCone, TrackDefinition, VehicleState,
};

/// Power law `depth = a * h^b`, `h` being the box height as a fraction of
/// the image height.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonoCalibration {
    pub a: f64,
    pub b: f64,
}

impl Default for MonoCalibration {
    fn default() -> Self {
        Self { a: 0.498, b: -0.954 }
    }
}

impl MonoCalibration {
    pub fn depth(&self, h: f64) -> f64 {
        self.a * h.powf(self.b)
    }
}

/// Box height scaled to the small-cone size so one curve serves both sizes.
fn normalized_height(b: &DetectedBox, image_height: f64) -> f64 {
    let scale = ConeClass::Blue.geometry().height / b.class.geometry().height;
    b.h / image_height * scale
}

pub fn mono_depth_from_box(
    b: &DetectedBox,
    rig: &CameraRig,
    calib: &MonoCalibration,
) -> Result<ConeObservation, PerceptionError> {
    if b.quality != BoxQuality::Good {
        return Err(PerceptionError::BadConeQuality(b.quality));
    }
    let depth = calib.depth(normalized_height(b, rig.intrinsics.image_height));
    Ok(ConeObservation::from_pixel(
        &Pixel::new(b.u, b.v),
        depth,
        &rig.intrinsics,
        &rig.vehicle_from_left,
        b.class,
        SourceTier::Monocular,
        b.confidence,
        b.cone_id,
    ))
}

/// Depth from a PnP fit of the seven keypoints alone. Not routed by the
/// pipeline; kept for benchmarking.
pub fn pnp_mono_depth(
    b: &DetectedBox,
    rig: &CameraRig,
    config: &crate::geometry::PnpConfig,
) -> Result<ConeObservation, PerceptionError> {
    let kps = b.keypoints.ok_or(PerceptionError::MissingKeypoints)?;
    let sol = crate::geometry::solve_pnp(&b.class.geometry().canonical_keypoints, &kps, &rig.intrinsics, config)?;
    Ok(ConeObservation::from_pixel(
        &Pixel::new(b.u, b.v),
        sol.translation().z,
        &rig.intrinsics,
        &rig.vehicle_from_left,
        b.class,
        SourceTier::Monocular,
        b.confidence,
        b.cone_id,
    ))
}

/// Least-squares fit of `ln depth = ln a + b ln h`.
pub fn refit_mono_curve(samples: &[(f64, f64)]) -> Result<MonoCalibration, PerceptionError> {
    if samples.len() < 10 {
        return Err(PerceptionError::InsufficientSamples { found: samples.len() });
    }
    let mut ata = Matrix2::zeros();
    let mut atb = Vector2::zeros();
    for &(h, d) in samples {
        if !(h > 0.0 && d > 0.0) {
            return Err(PerceptionError::InvalidSample(format!("h = {h}, depth = {d}")));
        }
        let row = Vector2::new(1.0, h.ln());
        ata += row * row.transpose();
        atb += row * d.ln();
    }
    let sol = ata
        .lu()
        .solve(&atb)
        .ok_or_else(|| PerceptionError::InvalidSample("all samples share one box height".into()))?;
    Ok(MonoCalibration {
        a: sol.x.exp(),
        b: sol.y,
    })
}

/// Fits the power law against this rig by placing noise-free cones at
/// known depths in front of the simulated detector.
pub fn calibrate_mono(rig: &CameraRig, min_depth: f64, max_depth: f64) -> Result<MonoCalibration, PerceptionError> {
    let cam = *rig.vehicle_from_left.translation();
    let vehicle = VehicleState::at_rest(Pose2D::identity(), 1.53);
    let mut samples = Vec::new();
    let steps = 60;
    for i in 0..=steps {
        let depth = min_depth + (max_depth - min_depth) * i as f64 / steps as f64;
        for lateral in [-0.3, 0.0, 0.3] {
            let world = TrackDefinition {
                mission: Mission::Autocross,
                track_width: 4.0,
                start_pose: Pose2D::identity(),
                cones: vec![TrackCone::new(cam.x + depth, cam.y + lateral * depth, ConeClass::Blue)],
                skidpad_triggers: None,
                centerline: vec![],
            };
            let out = simulate_stereo_detector(
                &world,
                &vehicle,
                rig,
                &DetectorNoise::off(),
                &mut stream_rng(0, Stream::Benchmark, i as u64),
            );
            for (b, t) in out.boxes.iter().zip(&out.truth) {
                if b.quality == BoxQuality::Good {
                    samples.push((normalized_height(b, rig.intrinsics.image_height), t.depth));
                }
            }
        }
    }
    refit_mono_curve(&samples)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_distr::{Distribution, Normal};

    fn boxed(h_px: f64, quality: BoxQuality) -> DetectedBox {
        DetectedBox {
            u: 640.0,
            v: 360.0,
            w: 10.0,
            h: h_px,
            class: ConeClass::Yellow,
            confidence: 1.0,
            keypoints: None,
            quality,
            cone_id: None,
        }
    }

    #[test]
    fn paper_curve_values() {
        let c = MonoCalibration::default();
        assert!((c.depth(1.0) - 0.498).abs() < 1e-12);
        assert!((c.depth(0.1) - 4.48).abs() < 0.01);
    }

    #[test]
    fn full_height_box_gives_coefficient() {
        let rig = CameraRig::default();
        let obs = mono_depth_from_box(&boxed(720.0, BoxQuality::Good), &rig, &MonoCalibration::default()).unwrap();
        assert!((obs.depth - 0.498).abs() < 1e-12);
        assert_eq!(obs.source_tier, SourceTier::Monocular);
    }

    #[test]
    fn bad_quality_rejected() {
        let rig = CameraRig::default();
        let err = mono_depth_from_box(&boxed(50.0, BoxQuality::Fallen), &rig, &MonoCalibration::default());
        assert_eq!(err.unwrap_err(), PerceptionError::BadConeQuality(BoxQuality::Fallen));
    }

    #[test]
    fn exact_model_recovered() {
        let samples: Vec<(f64, f64)> = (1..=20).map(|i| {
            let h = i as f64 * 0.01;
            (h, 0.5 * h.powf(-1.0))
        }).collect();
        let c = refit_mono_curve(&samples).unwrap();
        assert!((c.a - 0.5).abs() < 1e-9);
        assert!((c.b + 1.0).abs() < 1e-9);
    }

    #[test]
    fn noisy_fit_recovers_exponent() {
        let truth = MonoCalibration::default();
        let mut rng = stream_rng(11, Stream::Benchmark, 0);
        let noise = Normal::new(0.0, 0.02).unwrap();
        let samples: Vec<(f64, f64)> = (0..241)
            .map(|_| {
                let h: f64 = rng.gen_range(0.01..0.2);
                (h, truth.depth(h) * (1.0 + noise.sample(&mut rng)))
            })
            .collect();
        let c = refit_mono_curve(&samples).unwrap();
        assert!((c.b - truth.b).abs() < 0.05);
    }

    #[test]
    fn too_few_samples() {
        let samples = vec![(0.1, 4.0); 5];
        assert_eq!(refit_mono_curve(&samples).unwrap_err(), PerceptionError::InsufficientSamples { found: 5 });
    }

    #[test]
    fn depth_decreases_with_height() {
        let c = MonoCalibration::default();
        let mut last = f64::INFINITY;
        for i in 1..100 {
            let d = c.depth(i as f64 * 0.01);
            assert!(d < last);
            last = d;
        }
    }

    #[test]
    fn calibration_fits_simulated_camera() {
        let rig = CameraRig::default();
        let c = calibrate_mono(&rig, 4.0, 35.0).unwrap();
        // with the calibrated curve, noise-free boxes land within a few percent
        let cam = *rig.vehicle_from_left.translation();
        for depth in [6.0, 12.0, 20.0, 30.0] {
            let world = TrackDefinition {
                mission: Mission::Autocross,
                track_width: 4.0,
                start_pose: Pose2D::identity(),
                cones: vec![TrackCone::new(cam.x + depth, cam.y, ConeClass::Yellow)],
                skidpad_triggers: None,
                centerline: vec![],
            };
            let out = simulate_stereo_detector(
                &world,
                &VehicleState::at_rest(Pose2D::identity(), 1.53),
                &rig,
                &DetectorNoise::off(),
                &mut stream_rng(0, Stream::Benchmark, 0),
            );
            let obs = mono_depth_from_box(&out.boxes[0], &rig, &c).unwrap();
            assert!((obs.depth - out.truth[0].depth).abs() / out.truth[0].depth < 0.03, "{depth}: {}", obs.depth);
        }
    }
}
