//! Closed-loop mission runner on a single logical clock.
//!
//! Every sim tick: odometry feeds the SLAM prediction and a dead-reckoning
//! pose. Perception ticks simulate both sensors, assemble a frame, run the
//! depth pipeline, submit it to SLAM and replan. Control ticks run the
//! supervisor, the lateral controller and the speed PID.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::time::Instant;

use fsai_core::control::{
    emergency_command, pid_speed, pure_pursuit, stanley, ControlCommand, ControlError, LateralController, MissionStatus,
    PidState, Supervisor, SupervisorConfig, TickContext, TrackingError,
};
use fsai_core::geometry::{ConeClass, PointCloud, Pose2D};
use fsai_core::perception::{calibrate_mono, three_tier_pipeline, BoxOutcome, SensorFrame};
use fsai_core::planning::{
    delaunay_triangulate, extract_midline, min_curvature_refine, plan_acceleration, skidpad_step, FirstCircle,
    MidlineConfig, RacelineConfig, SkidpadPaths, SkidpadSegment, SkidpadState, WaypointPath,
};
use fsai_core::slam::{ExecutionMode, MapEntry, SlamFilter, SlamState};
use fsai_core::world::{
    generate_track, simulate_lidar, simulate_odometry, simulate_stereo_detector, step_vehicle, stream_rng,
    DetectorOutput, Mission, OdometrySample, Stream, TrackDefinition, TrackSpec, Trigger, VehicleState, WorldError,
    SKIDPAD_EXIT_LENGTH,
};
use nalgebra::Vector2;
use thiserror::Error;

use crate::config::{ConfigError, Execution, RunConfig};
use crate::frame::{assemble_frame, Assembled, SensorBuffers};
use crate::telemetry::{
    commands_csv, depth_csv, landmark_mse, pose_trace_csv, telemetry_csv, tick_metrics, tier_stats, DepthSample,
    RunSummary, TickRecord,
};

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("track {path}: {source}")]
    Track { path: String, source: WorldError },
    #[error("cannot write {path}: {message}")]
    Output { path: String, message: String },
}

/// Landmarks seen fewer times than this are left out of planning.
const MIN_LANDMARK_OBSERVATIONS: u32 = 2;
/// Mapped cones closer than this are treated as one when planning.
const LANDMARK_MERGE_DISTANCE: f64 = 1.0;
/// A replanned circuit path shorter than this ahead of the car may be a stub.
const MIN_ROAD_AHEAD: f64 = 10.0;

pub struct RunOutput {
    pub config: RunConfig,
    pub track: TrackDefinition,
    pub records: Vec<TickRecord>,
    pub summary: RunSummary,
    pub map: Vec<MapEntry>,
    pub path: Option<WaypointPath>,
    pub depth_samples: Vec<DepthSample>,
    /// (sim time, perception ms) per assembled frame. Wall-clock, never deterministic.
    pub perception_timing: Vec<(f64, f64)>,
    /// (landmarks, seconds) per applied SLAM update.
    pub slam_timing: Vec<(usize, f64)>,
}

impl RunOutput {
    pub fn status(&self) -> &str {
        &self.summary.ticks.final_status
    }

    pub fn exit_code(&self) -> i32 {
        match self.status() {
            "finishing" => 0,
            "emergency_stop" => 2,
            _ => 1,
        }
    }

    pub fn telemetry_csv(&self) -> String {
        telemetry_csv(&self.records)
    }

    /// Writes every output file into `dir`.
    pub fn write(&self, dir: &Path) -> Result<(), RunError> {
        std::fs::create_dir_all(dir).map_err(|e| RunError::Output {
            path: dir.display().to_string(),
            message: e.to_string(),
        })?;
        let mut timing = String::from("kind,key,value\n");
        for (t, ms) in &self.perception_timing {
            timing.push_str(&format!("perception_ms,{t},{ms:.3}\n"));
        }
        for (n, s) in &self.slam_timing {
            timing.push_str(&format!("slam_update_ms,{n},{:.3}\n", s * 1e3));
        }
        let files: [(&str, String); 9] = [
            ("telemetry.csv", self.telemetry_csv()),
            ("commands.csv", commands_csv(&self.records)),
            ("pose_trace.csv", pose_trace_csv(&self.records)),
            ("summary.json", self.summary.to_json()),
            ("map.json", serde_json::to_string_pretty(&self.map).expect("map serializes")),
            (
                "path.csv",
                self.path.as_ref().map(WaypointPath::to_csv).unwrap_or_else(|| "s_m,x,y,curvature_1pm,v_target_mps\n".into()),
            ),
            ("depth_errors.csv", depth_csv(&self.depth_samples)),
            ("track.json", self.track.to_json()),
            ("timing.csv", timing),
        ];
        for (name, body) in files {
            let p = dir.join(name);
            std::fs::write(&p, body).map_err(|e| RunError::Output {
                path: p.display().to_string(),
                message: e.to_string(),
            })?;
        }
        Ok(())
    }
}

pub fn load_track(config: &RunConfig) -> Result<TrackDefinition, RunError> {
    match &config.track {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| RunError::Track {
                path: path.display().to_string(),
                source: WorldError::InvalidTrack(e.to_string()),
            })?;
            TrackDefinition::from_json(&text).map_err(|source| RunError::Track {
                path: path.display().to_string(),
                source,
            })
        }
        None => {
            let seed = config.track_seed.unwrap_or(config.seed);
            generate_track(&TrackSpec::new(config.mission, seed)).map_err(|source| RunError::Track {
                path: format!("<generated {} seed {seed}>", config.mission.as_str()),
                source,
            })
        }
    }
}

/// Arc length left on `path` past the projection of `p`.
fn road_ahead(path: &WaypointPath, p: Vector2<f64>) -> f64 {
    if path.closed {
        return path.length();
    }
    path.project(p).map_or(0.0, |q| path.length() - q.s)
}

/// Map cones usable for planning: seen often enough, with near-duplicates
/// (typically a landmark spawned by a misclassified detection) merged into
/// the better-observed one.
pub fn planning_cones(map: &[MapEntry]) -> Vec<(f64, f64, ConeClass)> {
    let mut entries: Vec<&MapEntry> = map.iter().filter(|e| e.n_obs >= MIN_LANDMARK_OBSERVATIONS).collect();
    entries.sort_by(|a, b| b.n_obs.cmp(&a.n_obs));
    let mut kept: Vec<&MapEntry> = Vec::new();
    for e in entries {
        if kept
            .iter()
            .all(|k| (k.x - e.x).hypot(k.y - e.y) >= LANDMARK_MERGE_DISTANCE)
        {
            kept.push(e);
        }
    }
    kept.into_iter().map(|e| (e.x, e.y, e.class)).collect()
}

enum Planner {
    Circuit {
        path: Option<WaypointPath>,
        midline: MidlineConfig,
        raceline: Option<(RacelineConfig, f64)>,
        track_width: f64,
    },
    Skidpad {
        paths: SkidpadPaths,
        state: SkidpadState,
        triggers: Vec<Trigger>,
    },
    Acceleration {
        path: Option<WaypointPath>,
        start: Pose2D,
        finish: f64,
    },
}

impl Planner {
    fn new(config: &RunConfig, track: &TrackDefinition) -> Result<Self, RunError> {
        let speed = config.speed;
        Ok(match track.mission {
            Mission::Autocross | Mission::Trackdrive => Planner::Circuit {
                path: None,
                midline: MidlineConfig {
                    speed,
                    ..MidlineConfig::default()
                },
                raceline: config.raceline.then(|| {
                    (
                        RacelineConfig {
                            speed,
                            ..RacelineConfig::default()
                        },
                        config.raceline_margin,
                    )
                }),
                track_width: track.track_width,
            },
            Mission::Skidpad => {
                let triggers = track.skidpad_triggers.clone().ok_or_else(|| RunError::Track {
                    path: "skidpad".into(),
                    source: WorldError::InvalidTrack("skidpad track has no triggers".into()),
                })?;
                let paths = SkidpadPaths::from_layout(&triggers, track.start_pose.position(), SKIDPAD_EXIT_LENGTH, &speed)
                    .map_err(|e| RunError::Track {
                        path: "skidpad".into(),
                        source: WorldError::InvalidTrack(e.to_string()),
                    })?;
                Planner::Skidpad {
                    paths,
                    state: SkidpadState::new(FirstCircle::Right),
                    triggers,
                }
            }
            Mission::Acceleration => {
                // the finish gate is the far row of big orange cones
                let start = track.start_pose;
                let finish = track
                    .cones
                    .iter()
                    .filter(|c| c.class == ConeClass::BigOrange)
                    .map(|c| start.inverse_transform_point(c.position()).x)
                    .fold(0.0, f64::max);
                Planner::Acceleration {
                    path: None,
                    start,
                    finish,
                }
            }
        })
    }

    fn replan(&mut self, slam: &SlamState, config: &RunConfig) {
        match self {
            Planner::Circuit {
                path,
                midline,
                raceline,
                track_width,
            } => {
                let cones = planning_cones(&slam.map());
                if cones.len() < 3 {
                    return;
                }
                let Ok(tri) = delaunay_triangulate(&cones) else {
                    return;
                };
                match extract_midline(&tri, &slam.pose(), midline) {
                    Ok(mid) => {
                        let refined = match raceline {
                            Some((rc, margin)) if mid.closed => min_curvature_refine(&mid, *track_width, *margin, rc).ok(),
                            _ => None,
                        };
                        let new = refined.unwrap_or(mid);
                        // a sparse map can momentarily give a stub; keep driving the old path
                        let here = slam.pose().position();
                        let stub = path.as_ref().is_some_and(|old| {
                            let (a, b) = (road_ahead(&new, here), road_ahead(old, here));
                            a < MIN_ROAD_AHEAD && a < 0.5 * b
                        });
                        if !stub {
                            *path = Some(new);
                        }
                    }
                    Err(e) => log::debug!("midline: {e}"),
                }
            }
            Planner::Acceleration { path, start, finish } => {
                let cones = planning_cones(&slam.map());
                match plan_acceleration(&cones, start, *finish + 40.0, &config.speed) {
                    Ok(p) => *path = Some(p),
                    Err(e) => log::debug!("acceleration plan: {e}"),
                }
            }
            Planner::Skidpad { .. } => {}
        }
    }

    fn path(&self) -> Option<&WaypointPath> {
        match self {
            Planner::Circuit { path, .. } | Planner::Acceleration { path, .. } => path.as_ref(),
            Planner::Skidpad { paths, state, .. } => Some(paths.segment(state.active)),
        }
    }

    fn segment(&self) -> &'static str {
        match self {
            Planner::Skidpad { state, .. } => state.active.as_str(),
            _ => "",
        }
    }

    /// Updates mission progress from the estimated pose; returns completed
    /// laps for missions that count them here.
    fn progress(&mut self, est: &Pose2D) -> Option<u32> {
        match self {
            Planner::Skidpad { paths, state, triggers } => {
                *state = skidpad_step(state.clone(), est.position(), triggers);
                let done = state.active == SkidpadSegment::ExitLine
                    && paths
                        .exit
                        .project(est.position())
                        .is_some_and(|p| p.s >= 0.5 * paths.exit.length());
                Some(u32::from(done))
            }
            Planner::Acceleration { start, finish, .. } => {
                Some(u32::from(start.inverse_transform_point(est.position()).x >= *finish))
            }
            Planner::Circuit { .. } => None,
        }
    }

    fn center_crossings(&self) -> Option<u32> {
        match self {
            Planner::Skidpad { state, .. } => Some(state.center_crossings),
            _ => None,
        }
    }
}

/// Footprint rectangle against the cone's base disc.
fn footprint_hits(vehicle: &VehicleState, half_width: f64, cone: Vector2<f64>, radius: f64) -> bool {
    let local = vehicle.pose.inverse_transform_point(cone);
    let (x0, x1) = (-0.4, vehicle.wheelbase + 0.6);
    let dx = (x0 - local.x).max(0.0).max(local.x - x1);
    let dy = (local.y.abs() - half_width).max(0.0);
    dx.hypot(dy) <= radius
}

fn dead_reckon(p: &Pose2D, odom: &OdometrySample, dt: f64) -> Pose2D {
    Pose2D::new(
        p.x + odom.speed * p.heading.cos() * dt,
        p.y + odom.speed * p.heading.sin() * dt,
        p.heading + odom.yaw_rate * dt,
    )
}

/// Signed progress past the start line when the car is within the gate.
fn start_gate(track: &TrackDefinition, p: Vector2<f64>) -> Option<f64> {
    let local = track.start_pose.inverse_transform_point(p);
    (local.y.abs() <= track.track_width).then_some(local.x)
}

pub fn run_mission(config: &RunConfig) -> Result<RunOutput, RunError> {
    config.validate()?;
    let track = load_track(config)?;
    run_on_track(config, track)
}

pub fn run_on_track(config: &RunConfig, track: TrackDefinition) -> Result<RunOutput, RunError> {
    config.validate()?;
    let dt = 1.0 / config.sim_rate_hz;
    let perception_every = config.perception_every();
    let control_every = config.control_every();
    let control_dt = control_every as f64 * dt;
    let max_ticks = (config.max_time_s / dt).ceil() as u64;
    let limits = config.vehicle.limits;
    let wheelbase = config.vehicle.wheelbase;

    let mut perception = config.perception.clone();
    match calibrate_mono(&perception.rig, 2.0, config.lidar.max_range + 5.0) {
        Ok(c) => perception.mono = c,
        Err(e) => log::warn!("mono calibration failed, keeping defaults: {e}"),
    }

    let mode = match config.execution {
        Execution::Deterministic => ExecutionMode::Deterministic {
            latency: (config.slam_latency_ticks as u64 * perception_every) as f64 * dt,
        },
        Execution::Threaded => ExecutionMode::Threaded,
    };
    let mut slam = SlamFilter::new(track.start_pose, config.slam.clone(), mode);
    slam.check_invariants = config.check_invariants;
    let mut planner = Planner::new(config, &track)?;
    let mut supervisor = Supervisor::new(SupervisorConfig {
        laps_required: config
            .laps
            .unwrap_or_else(|| SupervisorConfig::for_mission(track.mission).laps_required),
        ..SupervisorConfig::for_mission(track.mission)
    });

    let mut truth = VehicleState::at_rest(track.start_pose, wheelbase);
    let mut dr = track.start_pose;
    let mut measured_speed = 0.0;
    let mut cmd = ControlCommand::default();
    let mut pid = PidState::default();
    let mut buffers: SensorBuffers<PointCloud, DetectorOutput> = SensorBuffers::default();
    let mut last_perception: Option<f64> = None;

    let mut records = Vec::new();
    let mut events: Vec<String> = Vec::new();
    let mut depth_samples = Vec::new();
    let mut perception_timing = Vec::new();
    let mut frames_assembled = 0;
    let mut frames_skipped = 0;
    let mut hit: BTreeSet<usize> = BTreeSet::new();
    let half_width = config.vehicle.width / 2.0;

    let mut laps = 0u32;
    let mut gate_prev = start_gate(&track, truth.pose.position());
    let mut since_lap = 0.0;
    let mut last_segment = "";
    let mut last_crossings = 0;

    for tick in 0..=max_ticks {
        let t = tick as f64 * dt;
        if tick > 0 {
            let odom = simulate_odometry(&truth, &config.odom_noise, t, &mut stream_rng(config.seed, Stream::Odometry, tick));
            slam.predict(&odom, dt);
            dr = dead_reckon(&dr, &odom, dt);
            measured_speed = odom.speed;
        }
        slam.poll(t);

        if tick % perception_every == 0 {
            let cloud = simulate_lidar(
                &track,
                &truth,
                &config.lidar,
                &config.lidar_noise,
                &mut stream_rng(config.seed, Stream::Lidar, tick),
            );
            let det = simulate_stereo_detector(
                &track,
                &truth,
                &perception.rig,
                &config.detector_noise,
                &mut stream_rng(config.seed, Stream::Detector, tick),
            );
            buffers.push_lidar(t, cloud);
            buffers.push_camera(t + config.camera_delay_s, det);
            match assemble_frame(&mut buffers, config.sync_window_s) {
                Assembled::Frame { lidar, camera } => {
                    let frame = SensorFrame {
                        timestamp: lidar.t,
                        cloud: lidar.data,
                        detections: camera.data,
                    };
                    let started = Instant::now();
                    let out = three_tier_pipeline(&frame, &perception, &mut stream_rng(config.seed, Stream::StereoMatch, tick));
                    perception_timing.push((t, started.elapsed().as_secs_f64() * 1e3));
                    for (i, outcome) in out.outcomes.iter().enumerate() {
                        let (Some(BoxOutcome::Observed(tier)), Some(id)) = (outcome, frame.detections.boxes[i].cone_id) else {
                            continue;
                        };
                        if let Some(obs) = out.observations.iter().find(|o| o.cone_id == Some(id)) {
                            depth_samples.push(DepthSample {
                                t,
                                cone_id: id,
                                tier: tier.as_str().to_string(),
                                true_depth: frame.detections.truth[i].depth,
                                est_depth: obs.depth,
                            });
                        }
                    }
                    frames_assembled += 1;
                    last_perception = Some(t);
                    let near = out.observations.into_iter().filter(|o| o.range <= config.slam_max_range).collect();
                    slam.submit(near, t);
                }
                Assembled::Skip => frames_skipped += 1,
            }
            planner.replan(slam.state(), config);
        }

        let finished_stopped = matches!(supervisor.status, MissionStatus::Finishing | MissionStatus::EmergencyStop)
            && truth.speed <= 1e-6;

        if tick % control_every == 0 || finished_stopped {
            let est = slam.pose();
            if let Some(l) = planner.progress(&est) {
                if l > laps {
                    laps = l;
                    events.push(format!("lap:{laps}"));
                }
            }
            // one event per segment entered, and one per extra circle lap
            let segment = planner.segment();
            let crossings = planner.center_crossings().unwrap_or(0);
            if !segment.is_empty() && (segment != last_segment || crossings > last_crossings) {
                events.push(format!("segment:{segment}"));
            }
            last_segment = segment;
            last_crossings = crossings;
            let off_track = track
                .cones
                .iter()
                .map(|c| (c.position() - truth.pose.position()).norm())
                .fold(f64::INFINITY, f64::min);
            let ctx = TickContext {
                time: t,
                last_perception,
                pose_covariance_trace: slam.state().pose_covariance().trace(),
                off_track_distance: (off_track - track.track_width).max(0.0),
                has_valid_path: planner.path().is_some(),
                laps_completed: laps,
            };
            let before = supervisor.status;
            let status = supervisor.step(&ctx);
            if status != before {
                events.push(format!("status:{}", status.as_str()));
            }

            let est_state = VehicleState {
                pose: est,
                speed: measured_speed.max(0.0),
                yaw_rate: 0.0,
                steering_angle: cmd.steering_angle,
                wheelbase,
            };
            let lateral = planner.path().map(|p| match config.controller {
                LateralController::PurePursuit => pure_pursuit(&est_state, p, &config.pure_pursuit, &limits, None),
                LateralController::Stanley => stanley(&est_state, p, &config.stanley, &limits, None),
            });
            let (steering, error, target): (f64, Option<TrackingError>, f64) = match lateral {
                Some(Ok(out)) => {
                    let v = planner.path().map_or(0.0, |p| p.speed_at(&out.projection));
                    (out.steering, Some(out.error), v)
                }
                Some(Err(ControlError::PathExhausted)) | Some(Err(ControlError::EmptyPath)) | None => (0.0, None, 0.0),
            };
            cmd = match status {
                MissionStatus::EmergencyStop => emergency_command(&limits, t),
                MissionStatus::Finishing => limits.clamp(ControlCommand::new(steering, -limits.max_brake, t)),
                MissionStatus::Starting => ControlCommand::new(0.0, 0.0, t),
                MissionStatus::Racing => {
                    let (accel, next) = pid_speed(target, est_state.speed, pid, control_dt, &config.pid, &limits);
                    pid = next;
                    limits.clamp(ControlCommand::new(steering, accel, t))
                }
            };

            let cross_track = planner
                .path()
                .and_then(|p| p.project(truth.pose.position()))
                .map(|p| p.offset);
            let cov = slam.state().pose_covariance();
            records.push(TickRecord {
                t,
                x: truth.pose.x,
                y: truth.pose.y,
                heading: truth.pose.heading,
                speed: truth.speed,
                est_x: est.x,
                est_y: est.y,
                est_heading: est.heading,
                cov_trace: cov.trace(),
                dr_x: dr.x,
                dr_y: dr.y,
                dr_heading: dr.heading,
                steering: cmd.steering_angle,
                accel: cmd.acceleration,
                cross_track,
                heading_error: error.map(|e| e.heading_error),
                mode: status.as_str().to_string(),
                segment: segment.to_string(),
                laps,
                events: events.join(";"),
            });
            events.clear();
            if finished_stopped {
                break;
            }
        }

        let prev = truth.pose.position();
        truth = step_vehicle(&truth, &cmd, dt, &limits);
        since_lap += (truth.pose.position() - prev).norm();

        for (id, cone) in track.cones.iter().enumerate() {
            if hit.contains(&id) {
                continue;
            }
            let radius = cone.class.geometry().base_width / 2.0;
            if footprint_hits(&truth, half_width, cone.position(), radius) {
                hit.insert(id);
                events.push(format!("hit:{id}"));
            }
        }

        if matches!(track.mission, Mission::Autocross | Mission::Trackdrive) {
            let gate = start_gate(&track, truth.pose.position());
            if let (Some(a), Some(b)) = (gate_prev, gate) {
                if a < 0.0 && b >= 0.0 && since_lap > 2.0 * track.track_width {
                    laps += 1;
                    since_lap = 0.0;
                    events.push(format!("lap:{laps}"));
                }
            }
            gate_prev = gate;
        }
    }
    slam.flush();

    let ticks = tick_metrics(&records);
    let map = slam.state().map();
    let final_lateral_offset_m = match &planner {
        Planner::Acceleration { start, .. } => Some(start.inverse_transform_point(truth.pose.position()).y),
        _ => None,
    };
    let summary = RunSummary {
        mission: track.mission.as_str().into(),
        seed: config.seed,
        controller: config.controller.as_str().into(),
        association: config.slam.association.as_str().into(),
        emergency_cause: supervisor.cause.map(|c| format!("{c:?}")),
        ticks,
        landmarks: map.len(),
        landmark_mse_m2: landmark_mse(&map, &track),
        depth_error: tier_stats(&depth_samples),
        center_crossings: planner.center_crossings(),
        final_lateral_offset_m,
        frames_assembled,
        frames_skipped,
        slam_frames_applied: slam.stats.frames_applied,
        slam_frames_dropped: slam.stats.frames_dropped,
        slam_fallbacks_to_nn: slam.stats.jcbb_fallbacks,
        invariant_checks: slam.stats.invariant_checks,
        invariant_violations: slam.stats.invariant_violations,
    };
    Ok(RunOutput {
        config: config.clone(),
        track,
        records,
        summary,
        map,
        path: planner.path().cloned(),
        depth_samples,
        perception_timing,
        slam_timing: slam.stats.update_timing.clone(),
    })
}

/// Output directory for a run: the explicit one, else the config's, else `out`.
pub fn output_dir(config: &RunConfig, explicit: Option<PathBuf>) -> PathBuf {
    explicit
        .or_else(|| config.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"))
}
