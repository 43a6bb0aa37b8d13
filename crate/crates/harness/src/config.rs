//! Run configuration as a `key = value` text file.
//!
//! Blank lines and `#` comments are ignored. Keys are applied in file order,
//! so `noise = off` followed by `odometry.bias_v = 0.05` keeps the bias.

use std::path::{Path, PathBuf};

use fsai_core::control::{LateralController, PidGains, PurePursuitParams, StanleyParams};
use fsai_core::perception::{PerceptionConfig, StereoConfig};
use fsai_core::planning::SpeedProfile;
use fsai_core::slam::{AssociationMethod, SlamConfig};
use fsai_core::world::{CameraRig, DetectorNoise, LidarConfig, LidarNoise, Mission, OdomNoise, VehicleParams};
use nalgebra::Vector3;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("line {line}: key '{key}': {message}")]
    Value { line: usize, key: String, message: String },
    #[error("line {line}: unknown key '{key}'")]
    UnknownKey { line: usize, key: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    #[default]
    Deterministic,
    Threaded,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    /// Track JSON; when absent a track is generated from `mission` and `track_seed`.
    pub track: Option<PathBuf>,
    pub mission: Mission,
    pub seed: u64,
    pub track_seed: Option<u64>,
    pub sim_rate_hz: f64,
    pub perception_rate_hz: f64,
    pub control_rate_hz: f64,
    pub sync_window_s: f64,
    /// Camera timestamps trail the LiDAR sweep by this much.
    pub camera_delay_s: f64,
    pub lidar: LidarConfig,
    pub lidar_noise: LidarNoise,
    pub detector_noise: DetectorNoise,
    pub odom_noise: OdomNoise,
    pub perception: PerceptionConfig,
    pub vehicle: VehicleParams,
    pub slam: SlamConfig,
    /// Measurement latency in perception ticks.
    pub slam_latency_ticks: u32,
    /// Observations beyond this range are not passed to SLAM.
    pub slam_max_range: f64,
    pub check_invariants: bool,
    pub controller: LateralController,
    pub pure_pursuit: PurePursuitParams,
    pub stanley: StanleyParams,
    pub pid: PidGains,
    pub speed: SpeedProfile,
    pub raceline: bool,
    pub raceline_margin: f64,
    pub laps: Option<u32>,
    pub max_time_s: f64,
    pub output_dir: Option<PathBuf>,
    pub execution: Execution,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            track: None,
            mission: Mission::Trackdrive,
            seed: 42,
            track_seed: None,
            sim_rate_hz: 100.0,
            perception_rate_hz: 10.0,
            control_rate_hz: 50.0,
            sync_window_s: 0.02,
            camera_delay_s: 0.005,
            lidar: LidarConfig::default(),
            lidar_noise: LidarNoise::default(),
            detector_noise: DetectorNoise::default(),
            odom_noise: OdomNoise::default(),
            perception: PerceptionConfig::default(),
            vehicle: VehicleParams::default(),
            slam: SlamConfig::default(),
            slam_latency_ticks: 3,
            slam_max_range: 12.0,
            check_invariants: false,
            controller: LateralController::PurePursuit,
            pure_pursuit: PurePursuitParams::default(),
            stanley: StanleyParams::default(),
            pid: PidGains::default(),
            speed: SpeedProfile::default(),
            raceline: false,
            raceline_margin: 1.0,
            laps: None,
            max_time_s: 600.0,
            output_dir: None,
            execution: Execution::Deterministic,
        }
    }
}

/// Intermediate camera and LiDAR mount values; the rig is rebuilt after parsing.
struct Mounts {
    camera: Vector3<f64>,
    baseline: f64,
    fx: Option<f64>,
    fy: Option<f64>,
    cx: Option<f64>,
    cy: Option<f64>,
    width: Option<f64>,
    height: Option<f64>,
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let mut cfg = Self::parse(&read_config_file(path)?)?;
        // relative track paths are resolved against the config file
        if let (Some(t), Some(dir)) = (&cfg.track, path.parent()) {
            if t.is_relative() {
                cfg.track = Some(dir.join(t));
            }
        }
        Ok(cfg)
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = RunConfig::default();
        let rig = CameraRig::default();
        let mut m = Mounts {
            camera: *rig.vehicle_from_left.translation(),
            baseline: rig.baseline,
            fx: None,
            fy: None,
            cx: None,
            cy: None,
            width: None,
            height: None,
        };
        let mut camera_touched = false;
        for (line, key, value) in key_values(text)? {
            if key.starts_with("camera.") {
                camera_touched = true;
            }
            cfg.apply(key, value, &mut m).map_err(|e| e.at(line, key))?;
        }
        if camera_touched {
            let mut rig = CameraRig::forward_facing(m.camera, m.baseline);
            let k = &mut rig.intrinsics;
            k.fx = m.fx.unwrap_or(k.fx);
            k.fy = m.fy.unwrap_or(k.fy);
            k.cx = m.cx.unwrap_or(k.cx);
            k.cy = m.cy.unwrap_or(k.cy);
            k.image_width = m.width.unwrap_or(k.image_width);
            k.image_height = m.height.unwrap_or(k.image_height);
            k.validate().map_err(|e| ConfigError::Invalid(format!("camera intrinsics: {e}")))?;
            cfg.perception.rig = rig;
        }
        cfg.perception.vehicle_from_lidar = cfg.lidar.vehicle_from_lidar();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let rates = [
            ("sim_rate_hz", self.sim_rate_hz),
            ("perception_rate_hz", self.perception_rate_hz),
            ("control_rate_hz", self.control_rate_hz),
        ];
        for (k, v) in rates {
            if !(v > 0.0 && v.is_finite()) {
                return Err(ConfigError::Invalid(format!("{k} must be positive, got {v}")));
            }
        }
        if self.perception_rate_hz > self.sim_rate_hz || self.control_rate_hz > self.sim_rate_hz {
            return Err(ConfigError::Invalid("perception and control rates must not exceed the sim rate".into()));
        }
        if 1.0 / self.sim_rate_hz > 0.05 {
            return Err(ConfigError::Invalid("sim rate must be at least 20 Hz".into()));
        }
        if !(self.max_time_s > 0.0) {
            return Err(ConfigError::Invalid("max_time_s must be positive".into()));
        }
        if self.sync_window_s < 0.0 {
            return Err(ConfigError::Invalid("sync_window_s must be non-negative".into()));
        }
        Ok(())
    }

    /// Ticks of the sim clock between perception frames.
    pub fn perception_every(&self) -> u64 {
        (self.sim_rate_hz / self.perception_rate_hz).round().max(1.0) as u64
    }

    pub fn control_every(&self) -> u64 {
        (self.sim_rate_hz / self.control_rate_hz).round().max(1.0) as u64
    }

    fn apply(&mut self, key: &str, v: &str, m: &mut Mounts) -> Result<(), KeyError> {
        match key {
            "track" => self.track = Some(PathBuf::from(v)),
            "mission" => self.mission = v.parse().map_err(KeyError::Bad)?,
            "seed" => self.seed = int(v)?,
            "track_seed" => self.track_seed = Some(int(v)?),
            "sim_rate_hz" => self.sim_rate_hz = num(v)?,
            "perception_rate_hz" => self.perception_rate_hz = num(v)?,
            "control_rate_hz" => self.control_rate_hz = num(v)?,
            "sync_window_s" => self.sync_window_s = num(v)?,
            "camera_delay_s" => self.camera_delay_s = num(v)?,
            "noise" => match v {
                "off" => {
                    self.lidar_noise = LidarNoise::off();
                    self.detector_noise = DetectorNoise::off();
                    self.odom_noise = OdomNoise::off();
                    self.perception.stereo.match_sigma_px = 0.0;
                    self.perception.stereo.mismatch_full = 0.0;
                    self.perception.stereo.mismatch_slender = 0.0;
                }
                "default" => {
                    self.lidar_noise = LidarNoise::default();
                    self.detector_noise = DetectorNoise::default();
                    self.odom_noise = OdomNoise::default();
                    self.perception.stereo = StereoConfig::default();
                }
                other => return Err(KeyError::Bad(format!("expected 'off' or 'default', got '{other}'"))),
            },
            "lidar.range_sigma" => self.lidar_noise.range_sigma = non_neg(v)?,
            "lidar.dropout" => self.lidar_noise.dropout = prob(v)?,
            "lidar.x" => self.lidar.mount.x = num(v)?,
            "lidar.y" => self.lidar.mount.y = num(v)?,
            "lidar.z" => self.lidar.mount.z = num(v)?,
            "lidar.max_range" => self.lidar.max_range = positive(v)?,
            "detector.box_sigma_px" => self.detector_noise.box_sigma_px = non_neg(v)?,
            "detector.keypoint_sigma_px" => self.detector_noise.keypoint_sigma_px = non_neg(v)?,
            "detector.class_flip" => self.detector_noise.class_flip = prob(v)?,
            "detector.miss_slope" => self.detector_noise.miss_slope = non_neg(v)?,
            "odometry.enabled" => self.odom_noise.enabled = boolean(v)?,
            "odometry.sigma_v" => self.odom_noise.sigma_v = non_neg(v)?,
            "odometry.sigma_omega" => self.odom_noise.sigma_omega = non_neg(v)?,
            "odometry.bias_v" => self.odom_noise.bias_v = num(v)?,
            "odometry.bias_omega" => self.odom_noise.bias_omega = num(v)?,
            "stereo.match_sigma_px" => self.perception.stereo.match_sigma_px = non_neg(v)?,
            "camera.x" => m.camera.x = num(v)?,
            "camera.y" => m.camera.y = num(v)?,
            "camera.z" => m.camera.z = num(v)?,
            "camera.baseline" => m.baseline = positive(v)?,
            "camera.fx" => m.fx = Some(positive(v)?),
            "camera.fy" => m.fy = Some(positive(v)?),
            "camera.cx" => m.cx = Some(num(v)?),
            "camera.cy" => m.cy = Some(num(v)?),
            "camera.width" => m.width = Some(positive(v)?),
            "camera.height" => m.height = Some(positive(v)?),
            "association" => self.slam.association = v.parse().map_err(KeyError::Bad)?,
            "slam.latency_ticks" => self.slam_latency_ticks = int(v)? as u32,
            "slam.measurement_updates" => self.slam.measurement_updates = boolean(v)?,
            "slam.process_noise_xy" => {
                let q = non_neg(v)?;
                self.slam.process_noise.x = q;
                self.slam.process_noise.y = q;
            }
            "slam.process_noise_heading" => self.slam.process_noise.z = non_neg(v)?,
            "slam.max_range" => self.slam_max_range = positive(v)?,
            "slam.nn_gate" => self.slam.nn_gate = positive(v)?,
            "slam.check_invariants" => self.check_invariants = boolean(v)?,
            "controller" => self.controller = v.parse().map_err(KeyError::Bad)?,
            "pure_pursuit.k_lookahead" => self.pure_pursuit.k_lookahead = non_neg(v)?,
            "pure_pursuit.l_min" => self.pure_pursuit.l_min = positive(v)?,
            "stanley.k_gain" => self.stanley.k_gain = non_neg(v)?,
            "stanley.v_soft" => self.stanley.v_soft = positive(v)?,
            "pid.kp" => self.pid.kp = num(v)?,
            "pid.ki" => self.pid.ki = num(v)?,
            "pid.kd" => self.pid.kd = num(v)?,
            "planning.v_max" => self.speed.v_max = positive(v)?,
            "planning.a_lat_max" => self.speed.a_lat_max = positive(v)?,
            "planning.raceline" => self.raceline = boolean(v)?,
            "planning.raceline_margin" => self.raceline_margin = non_neg(v)?,
            "laps" => self.laps = Some(int(v)? as u32),
            "max_time_s" => self.max_time_s = positive(v)?,
            "output_dir" => self.output_dir = Some(PathBuf::from(v)),
            "execution" => {
                self.execution = match v {
                    "deterministic" => Execution::Deterministic,
                    "threaded" => Execution::Threaded,
                    other => return Err(KeyError::Bad(format!("expected 'deterministic' or 'threaded', got '{other}'"))),
                }
            }
            _ => return Err(KeyError::Unknown),
        }
        Ok(())
    }

    pub fn association(&self) -> AssociationMethod {
        self.slam.association
    }
}

pub(crate) enum KeyError {
    Unknown,
    Bad(String),
}

impl KeyError {
    pub(crate) fn at(self, line: usize, key: &str) -> ConfigError {
        match self {
            KeyError::Unknown => ConfigError::UnknownKey {
                line,
                key: key.to_string(),
            },
            KeyError::Bad(message) => ConfigError::Value {
                line,
                key: key.to_string(),
                message,
            },
        }
    }
}

/// Splits `key = value` lines, skipping blanks and `#` comments.
pub(crate) fn key_values(text: &str) -> Result<Vec<(usize, &str, &str)>, ConfigError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (key, value) = content.split_once('=').ok_or_else(|| ConfigError::Syntax {
            line,
            message: format!("expected 'key = value', got '{content}'"),
        })?;
        let key = key.trim();
        if key.is_empty() {
            return Err(ConfigError::Syntax {
                line,
                message: "empty key".into(),
            });
        }
        out.push((line, key, value.trim()));
    }
    Ok(out)
}

pub(crate) fn read_config_file(path: &Path) -> Result<String, ConfigError> {
    std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

pub(crate) fn num(v: &str) -> Result<f64, KeyError> {
    let x: f64 = v.parse().map_err(|_| KeyError::Bad(format!("expected a number, got '{v}'")))?;
    if !x.is_finite() {
        return Err(KeyError::Bad(format!("expected a finite number, got '{v}'")));
    }
    Ok(x)
}

pub(crate) fn positive(v: &str) -> Result<f64, KeyError> {
    let x = num(v)?;
    if x <= 0.0 {
        return Err(KeyError::Bad(format!("must be positive, got {x}")));
    }
    Ok(x)
}

pub(crate) fn non_neg(v: &str) -> Result<f64, KeyError> {
    let x = num(v)?;
    if x < 0.0 {
        return Err(KeyError::Bad(format!("must be non-negative, got {x}")));
    }
    Ok(x)
}

pub(crate) fn prob(v: &str) -> Result<f64, KeyError> {
    let x = num(v)?;
    if !(0.0..=1.0).contains(&x) {
        return Err(KeyError::Bad(format!("must be in [0, 1], got {x}")));
    }
    Ok(x)
}

pub(crate) fn int(v: &str) -> Result<u64, KeyError> {
    v.parse().map_err(|_| KeyError::Bad(format!("expected a non-negative integer, got '{v}'")))
}

pub(crate) fn boolean(v: &str) -> Result<bool, KeyError> {
    match v {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(KeyError::Bad(format!("expected true or false, got '{v}'"))),
    }
}
