//! Synthetic depth benchmark: every tier and stereo variant on the same cones.

use std::fmt::Write as _;
use std::time::Instant;

use fsai_core::geometry::{ConeClass, PnpConfig, Pose2D};
use fsai_core::perception::{
    calibrate_mono, pnp_mono_depth, stereo_depth, three_tier_pipeline, BoxOutcome, BoxRegion,
    KeypointPick, PerceptionConfig, SensorFrame, SourceTier, StereoMode,
};
use fsai_core::world::{
    simulate_lidar, simulate_stereo_detector, stream_rng, DetectorNoise, LidarConfig, LidarNoise,
    Mission, Stream, TrackCone, TrackDefinition, VehicleState,
};
use rand::Rng;

use crate::config::{boolean, int, key_values, non_neg, positive, prob, read_config_file, ConfigError, KeyError};

#[derive(Debug, Clone)]
pub struct BenchConfig {
    pub cones: usize,
    pub seed: u64,
    pub min_depth: f64,
    pub max_depth: f64,
    pub max_bearing_deg: f64,
    pub fallen_fraction: f64,
    pub occluded_fraction: f64,
    pub lidar: LidarConfig,
    pub lidar_noise: LidarNoise,
    pub detector_noise: DetectorNoise,
    pub perception: PerceptionConfig,
    /// Refit the monocular curve against the benchmark camera first.
    pub refit_mono: bool,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            cones: 500,
            seed: 7,
            min_depth: 3.0,
            max_depth: 30.0,
            max_bearing_deg: 20.0,
            fallen_fraction: 0.2,
            occluded_fraction: 0.1,
            lidar: LidarConfig::default(),
            lidar_noise: LidarNoise::default(),
            detector_noise: DetectorNoise::default(),
            perception: PerceptionConfig::default(),
            refit_mono: true,
        }
    }
}

impl BenchConfig {
    pub fn from_file(path: &std::path::Path) -> Result<Self, ConfigError> {
        Self::parse(&read_config_file(path)?)
    }

    /// Same `key = value` format as the run configuration.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut c = Self::default();
        for (line, key, v) in key_values(text)? {
            let r: Result<(), KeyError> = (|| {
                match key {
                    "cones" => c.cones = int(v)? as usize,
                    "seed" => c.seed = int(v)?,
                    "min_depth" => c.min_depth = positive(v)?,
                    "max_depth" => c.max_depth = positive(v)?,
                    "max_bearing_deg" => c.max_bearing_deg = positive(v)?,
                    "fallen_fraction" => c.fallen_fraction = prob(v)?,
                    "occluded_fraction" => c.occluded_fraction = prob(v)?,
                    "refit_mono" => c.refit_mono = boolean(v)?,
                    "noise" => match v {
                        "off" => {
                            c.lidar_noise = LidarNoise::off();
                            c.detector_noise = DetectorNoise::off();
                            c.perception.stereo.match_sigma_px = 0.0;
                            c.perception.stereo.mismatch_full = 0.0;
                            c.perception.stereo.mismatch_slender = 0.0;
                        }
                        "default" => {
                            c.lidar_noise = LidarNoise::default();
                            c.detector_noise = DetectorNoise::default();
                        }
                        other => return Err(KeyError::Bad(format!("expected 'off' or 'default', got '{other}'"))),
                    },
                    "lidar.range_sigma" => c.lidar_noise.range_sigma = non_neg(v)?,
                    "lidar.dropout" => c.lidar_noise.dropout = prob(v)?,
                    "detector.box_sigma_px" => c.detector_noise.box_sigma_px = non_neg(v)?,
                    "detector.keypoint_sigma_px" => c.detector_noise.keypoint_sigma_px = non_neg(v)?,
                    "detector.class_flip" => c.detector_noise.class_flip = prob(v)?,
                    "detector.miss_slope" => c.detector_noise.miss_slope = non_neg(v)?,
                    "stereo.match_sigma_px" => c.perception.stereo.match_sigma_px = non_neg(v)?,
                    _ => return Err(KeyError::Unknown),
                }
                Ok(())
            })();
            r.map_err(|e| e.at(line, key))?;
        }
        if c.min_depth >= c.max_depth {
            return Err(ConfigError::Invalid(format!(
                "min_depth {} must be below max_depth {}",
                c.min_depth, c.max_depth
            )));
        }
        Ok(c)
    }
}

/// One benchmark cone as routed by the three-tier pipeline.
#[derive(Debug, Clone, PartialEq)]
pub struct ConeRecord {
    pub cone_id: usize,
    pub true_depth: f64,
    pub est_depth: f64,
    pub tier: SourceTier,
}

impl ConeRecord {
    pub fn rel_err_pct(&self) -> f64 {
        100.0 * (self.est_depth - self.true_depth).abs() / self.true_depth
    }
}

/// Error statistics for one method, in percent.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodSummary {
    pub method: &'static str,
    pub count: usize,
    pub mean_err_pct: f64,
    pub under_5_pct: f64,
    pub under_10_pct: f64,
    pub under_20_pct: f64,
}

impl MethodSummary {
    fn from_errors(method: &'static str, errors: &[f64]) -> Self {
        let n = errors.len();
        let frac = |limit: f64| {
            if n == 0 {
                0.0
            } else {
                100.0 * errors.iter().filter(|&&e| e < limit).count() as f64 / n as f64
            }
        };
        Self {
            method,
            count: n,
            mean_err_pct: if n == 0 { f64::NAN } else { errors.iter().sum::<f64>() / n as f64 },
            under_5_pct: frac(5.0),
            under_10_pct: frac(10.0),
            under_20_pct: frac(20.0),
        }
    }
}

#[derive(Debug, Clone)]
pub struct BenchReport {
    pub records: Vec<ConeRecord>,
    pub summary: Vec<MethodSummary>,
    pub missed: usize,
    pub dropped: usize,
    pub elapsed_s: f64,
}

pub const METHOD_LIDAR: &str = "lidar_camera_fusion";
pub const METHOD_MONO: &str = "mono_bb_height";
pub const METHOD_STEREO_ROUTED: &str = "stereo_routed";
pub const METHOD_FULL_TOP1: &str = "stereo_full_top1";
pub const METHOD_FULL_TOP2: &str = "stereo_full_top2";
pub const METHOD_SLENDER_TOP1: &str = "stereo_slender_top1";
pub const METHOD_SLENDER_TOP2: &str = "stereo_slender_top2";
pub const METHOD_MONO_PNP: &str = "mono_pnp";
pub const METHOD_MONO_STEREO: &str = "mono_stereo_fusion";

const STEREO_VARIANTS: [(&str, BoxRegion, KeypointPick); 4] = [
    (METHOD_FULL_TOP1, BoxRegion::FullBox, KeypointPick::Top1),
    (METHOD_FULL_TOP2, BoxRegion::FullBox, KeypointPick::Top2),
    (METHOD_SLENDER_TOP1, BoxRegion::SlenderBox, KeypointPick::Top1),
    (METHOD_SLENDER_TOP2, BoxRegion::SlenderBox, KeypointPick::Top2),
];

impl BenchReport {
    pub fn method(&self, name: &str) -> Option<&MethodSummary> {
        self.summary.iter().find(|m| m.method == name)
    }

    pub fn cones_csv(&self) -> String {
        let mut s = String::from("cone_id,true_depth_m,est_depth_m,tier,rel_err_pct\n");
        for r in &self.records {
            let _ = writeln!(
                s,
                "{},{:.4},{:.4},{},{:.3}",
                r.cone_id,
                r.true_depth,
                r.est_depth,
                r.tier.as_str(),
                r.rel_err_pct()
            );
        }
        s
    }

    pub fn summary_csv(&self) -> String {
        let mut s = String::from("method,count,avg_err_pct,under_5_pct,under_10_pct,under_20_pct\n");
        for m in &self.summary {
            let _ = writeln!(
                s,
                "{},{},{:.3},{:.2},{:.2},{:.2}",
                m.method, m.count, m.mean_err_pct, m.under_5_pct, m.under_10_pct, m.under_20_pct
            );
        }
        s
    }
}

fn rel_err(est: f64, truth: f64) -> f64 {
    100.0 * (est - truth).abs() / truth
}

fn random_class(rng: &mut impl Rng) -> ConeClass {
    match rng.gen_range(0..10) {
        0..=3 => ConeClass::Blue,
        4..=7 => ConeClass::Yellow,
        8 => ConeClass::SmallOrange,
        _ => ConeClass::BigOrange,
    }
}

pub fn run_depth_benchmark(config: &BenchConfig) -> BenchReport {
    let start = Instant::now();
    let mut perception = config.perception.clone();
    if config.refit_mono {
        if let Ok(c) = calibrate_mono(&perception.rig, config.min_depth.max(2.0), config.max_depth + 5.0) {
            perception.mono = c;
        }
    }
    let cam = *perception.rig.vehicle_from_left.translation();
    let vehicle = VehicleState::at_rest(Pose2D::identity(), 1.53);
    let pnp = PnpConfig::default();

    let mut records = Vec::new();
    let mut by_method: Vec<(&'static str, Vec<f64>)> = [
        METHOD_LIDAR,
        METHOD_MONO,
        METHOD_STEREO_ROUTED,
        METHOD_FULL_TOP1,
        METHOD_FULL_TOP2,
        METHOD_SLENDER_TOP1,
        METHOD_SLENDER_TOP2,
        METHOD_MONO_PNP,
        METHOD_MONO_STEREO,
    ]
    .into_iter()
    .map(|m| (m, Vec::new()))
    .collect();
    let mut push = |m: &str, e: f64| {
        if let Some((_, v)) = by_method.iter_mut().find(|(n, _)| *n == m) {
            v.push(e);
        }
    };
    let mut missed = 0;
    let mut dropped = 0;

    for i in 0..config.cones {
        let mut rng = stream_rng(config.seed, Stream::Benchmark, i as u64);
        let class = random_class(&mut rng);
        let depth = rng.gen_range(config.min_depth..config.max_depth);
        let bearing = rng.gen_range(-config.max_bearing_deg..config.max_bearing_deg).to_radians();
        let fallen = rng.gen_bool(config.fallen_fraction);
        let occluded = !fallen && rng.gen_bool(config.occluded_fraction);
        let occluder_shift = rng.gen_range(0.06..0.12);
        let x = cam.x + depth * bearing.cos();
        let y = cam.y + depth * bearing.sin();
        let mut cone = TrackCone::new(x, y, class);
        cone.fallen = fallen;
        let mut cones = vec![cone];
        if occluded {
            let d = depth - 1.5;
            let side = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
            cones.push(TrackCone::new(
                cam.x + d * bearing.cos() - side * occluder_shift * bearing.sin(),
                cam.y + d * bearing.sin() + side * occluder_shift * bearing.cos(),
                random_class(&mut rng),
            ));
        }
        let world = TrackDefinition {
            mission: Mission::Autocross,
            track_width: 4.0,
            start_pose: Pose2D::identity(),
            cones,
            skidpad_triggers: None,
            centerline: vec![],
        };
        let cloud = simulate_lidar(
            &world,
            &vehicle,
            &config.lidar,
            &config.lidar_noise,
            &mut stream_rng(config.seed, Stream::Lidar, i as u64),
        );
        let detections = simulate_stereo_detector(
            &world,
            &vehicle,
            &perception.rig,
            &config.detector_noise,
            &mut stream_rng(config.seed, Stream::Detector, i as u64),
        );
        let Some(bi) = detections.boxes.iter().position(|b| b.cone_id == Some(0)) else {
            missed += 1;
            continue;
        };
        let b = detections.boxes[bi].clone();
        let truth = detections.truth[bi].clone();
        let frame = SensorFrame {
            timestamp: 0.0,
            cloud,
            detections,
        };
        let out = three_tier_pipeline(&frame, &perception, &mut stream_rng(config.seed, Stream::StereoMatch, i as u64));
        match (&out.outcomes[bi], out.observations.iter().find(|o| o.cone_id == Some(0))) {
            (Some(BoxOutcome::Observed(tier)), Some(obs)) => {
                let e = rel_err(obs.depth, truth.depth);
                records.push(ConeRecord {
                    cone_id: i,
                    true_depth: truth.depth,
                    est_depth: obs.depth,
                    tier: *tier,
                });
                match tier {
                    SourceTier::LidarFusion => push(METHOD_LIDAR, e),
                    SourceTier::Monocular => {
                        push(METHOD_MONO, e);
                        push(METHOD_MONO_STEREO, e);
                    }
                    SourceTier::Stereo => {
                        push(METHOD_STEREO_ROUTED, e);
                        push(METHOD_MONO_STEREO, e);
                    }
                }
            }
            _ => dropped += 1,
        }

        // every stereo variant sees the same box and the same random draws
        for (name, region, pick) in STEREO_VARIANTS {
            let mode = StereoMode { region, pick };
            let mut srng = stream_rng(config.seed ^ 0x5EED, Stream::StereoMatch, i as u64);
            if let Ok(obs) = stereo_depth(&b, &truth, &perception.rig, mode, &perception.stereo, &mut srng) {
                push(name, rel_err(obs.depth, truth.depth));
            }
        }
        if let Ok(obs) = pnp_mono_depth(&b, &perception.rig, &pnp) {
            push(METHOD_MONO_PNP, rel_err(obs.depth, truth.depth));
        }
    }

    let summary = by_method
        .iter()
        .map(|(m, errs)| MethodSummary::from_errors(m, errs))
        .collect();
    BenchReport {
        records,
        summary,
        missed,
        dropped,
        elapsed_s: start.elapsed().as_secs_f64(),
    }
}
