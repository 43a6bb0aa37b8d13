//! Per-tick records, the run summary and the CSV/JSON files behind them.
//!
//! Floats are written with Rust's shortest round-trip formatting, so a summary
//! recomputed from a parsed `telemetry.csv` matches the one computed in the run.

use std::fmt::Write as _;
use std::path::Path;

use fsai_core::slam::MapEntry;
use fsai_core::world::TrackDefinition;
use serde::{Deserialize, Serialize};

/// One control tick.
#[derive(Debug, Clone, PartialEq)]
pub struct TickRecord {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    pub speed: f64,
    pub est_x: f64,
    pub est_y: f64,
    pub est_heading: f64,
    pub cov_trace: f64,
    pub dr_x: f64,
    pub dr_y: f64,
    pub dr_heading: f64,
    pub steering: f64,
    pub accel: f64,
    /// Rear-axle offset of the true pose from the active path.
    pub cross_track: Option<f64>,
    pub heading_error: Option<f64>,
    pub mode: String,
    pub segment: String,
    pub laps: u32,
    /// `;`-separated, e.g. `lap:1;hit:17`.
    pub events: String,
}

pub const TELEMETRY_HEADER: &str = "t,x,y,heading,speed,est_x,est_y,est_heading,cov_trace,dr_x,dr_y,dr_heading,steering_rad,accel_mps2,cross_track_m,heading_err_rad,mode,segment,laps,events";

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl TickRecord {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.t,
            self.x,
            self.y,
            self.heading,
            self.speed,
            self.est_x,
            self.est_y,
            self.est_heading,
            self.cov_trace,
            self.dr_x,
            self.dr_y,
            self.dr_heading,
            self.steering,
            self.accel,
            opt(self.cross_track),
            opt(self.heading_error),
            self.mode,
            self.segment,
            self.laps,
            self.events
        )
    }

    pub fn events(&self) -> impl Iterator<Item = &str> {
        self.events.split(';').filter(|e| !e.is_empty())
    }
}

pub fn telemetry_csv(records: &[TickRecord]) -> String {
    let mut s = String::with_capacity(records.len() * 200);
    s.push_str(TELEMETRY_HEADER);
    s.push('\n');
    for r in records {
        s.push_str(&r.csv_row());
        s.push('\n');
    }
    s
}

pub fn commands_csv(records: &[TickRecord]) -> String {
    let mut s = String::from("t,steering_rad,accel_mps2,cross_track_m,heading_err_rad,mode\n");
    for r in records {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            r.t,
            r.steering,
            r.accel,
            opt(r.cross_track),
            opt(r.heading_error),
            r.mode
        );
    }
    s
}

pub fn pose_trace_csv(records: &[TickRecord]) -> String {
    let mut s = String::from("t,x,y,heading,cov_trace\n");
    for r in records {
        let _ = writeln!(s, "{},{},{},{},{}", r.t, r.est_x, r.est_y, r.est_heading, r.cov_trace);
    }
    s
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("telemetry line {line}: {message}")]
pub struct TelemetryParseError {
    pub line: usize,
    pub message: String,
}

pub fn parse_telemetry(text: &str) -> Result<Vec<TickRecord>, TelemetryParseError> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == TELEMETRY_HEADER => {}
        _ => {
            return Err(TelemetryParseError {
                line: 1,
                message: "missing or unexpected header".into(),
            })
        }
    }
    let mut out = Vec::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let err = |message: String| TelemetryParseError { line: i + 1, message };
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 20 {
            return Err(err(format!("expected 20 fields, got {}", f.len())));
        }
        let num = |k: usize| f[k].parse::<f64>().map_err(|_| err(format!("field {k}: bad number '{}'", f[k])));
        let opt_num = |k: usize| if f[k].is_empty() { Ok(None) } else { num(k).map(Some) };
        out.push(TickRecord {
            t: num(0)?,
            x: num(1)?,
            y: num(2)?,
            heading: num(3)?,
            speed: num(4)?,
            est_x: num(5)?,
            est_y: num(6)?,
            est_heading: num(7)?,
            cov_trace: num(8)?,
            dr_x: num(9)?,
            dr_y: num(10)?,
            dr_heading: num(11)?,
            steering: num(12)?,
            accel: num(13)?,
            cross_track: opt_num(14)?,
            heading_error: opt_num(15)?,
            mode: f[16].to_string(),
            segment: f[17].to_string(),
            laps: f[18].parse().map_err(|_| err(format!("field 18: bad lap count '{}'", f[18])))?,
            events: f[19].to_string(),
        });
    }
    Ok(out)
}

/// Depth error of one routed observation against the detector's ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthSample {
    pub t: f64,
    pub cone_id: usize,
    pub tier: String,
    pub true_depth: f64,
    pub est_depth: f64,
}

impl DepthSample {
    pub fn rel_err_pct(&self) -> f64 {
        100.0 * (self.est_depth - self.true_depth).abs() / self.true_depth
    }
}

pub fn depth_csv(samples: &[DepthSample]) -> String {
    let mut s = String::from("t,cone_id,tier,true_depth_m,est_depth_m\n");
    for d in samples {
        let _ = writeln!(s, "{},{},{},{},{}", d.t, d.cone_id, d.tier, d.true_depth, d.est_depth);
    }
    s
}

pub fn parse_depth_csv(text: &str) -> Result<Vec<DepthSample>, TelemetryParseError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let err = |message: String| TelemetryParseError { line: i + 1, message };
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 5 {
            return Err(err(format!("expected 5 fields, got {}", f.len())));
        }
        let num = |k: usize| f[k].parse::<f64>().map_err(|_| err(format!("field {k}: bad number '{}'", f[k])));
        out.push(DepthSample {
            t: num(0)?,
            cone_id: f[1].parse().map_err(|_| err(format!("bad cone id '{}'", f[1])))?,
            tier: f[2].to_string(),
            true_depth: num(3)?,
            est_depth: num(4)?,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TierStats {
    pub tier: String,
    pub count: usize,
    pub mean_abs_rel_err_pct: f64,
}

pub fn tier_stats(samples: &[DepthSample]) -> Vec<TierStats> {
    let mut tiers: Vec<&str> = samples.iter().map(|d| d.tier.as_str()).collect();
    tiers.sort_unstable();
    tiers.dedup();
    tiers
        .into_iter()
        .map(|tier| {
            let errs: Vec<f64> = samples.iter().filter(|d| d.tier == tier).map(DepthSample::rel_err_pct).collect();
            TierStats {
                tier: tier.to_string(),
                count: errs.len(),
                mean_abs_rel_err_pct: errs.iter().sum::<f64>() / errs.len() as f64,
            }
        })
        .collect()
}

/// Quantities derivable from the tick records alone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct TickMetrics {
    pub sim_time_s: f64,
    pub final_status: String,
    pub laps_completed: u32,
    pub lap_times_s: Vec<f64>,
    pub cones_hit: usize,
    /// Over racing ticks with an active path.
    pub mean_abs_cross_track_m: f64,
    pub max_abs_cross_track_m: f64,
    pub pose_rmse_m: f64,
    pub dead_reckoning_rmse_m: f64,
    pub segment_sequence: Vec<String>,
}

pub fn tick_metrics(records: &[TickRecord]) -> TickMetrics {
    let mut m = TickMetrics::default();
    let Some(last) = records.last() else {
        return m;
    };
    m.sim_time_s = last.t;
    m.final_status = last.mode.clone();
    m.laps_completed = last.laps;

    let mut lap_start = 0.0;
    for r in records {
        for e in r.events() {
            if e.starts_with("lap:") {
                m.lap_times_s.push(r.t - lap_start);
                lap_start = r.t;
            } else if e.starts_with("hit:") {
                m.cones_hit += 1;
            } else if let Some(seg) = e.strip_prefix("segment:") {
                m.segment_sequence.push(seg.to_string());
            }
        }
    }

    let cte: Vec<f64> = records
        .iter()
        .filter(|r| r.mode == "racing")
        .filter_map(|r| r.cross_track)
        .map(f64::abs)
        .collect();
    if !cte.is_empty() {
        m.mean_abs_cross_track_m = cte.iter().sum::<f64>() / cte.len() as f64;
        m.max_abs_cross_track_m = cte.iter().copied().fold(0.0, f64::max);
    }
    let rmse = |f: &dyn Fn(&TickRecord) -> f64| (records.iter().map(f).sum::<f64>() / records.len() as f64).sqrt();
    m.pose_rmse_m = rmse(&|r| (r.est_x - r.x).powi(2) + (r.est_y - r.y).powi(2));
    m.dead_reckoning_rmse_m = rmse(&|r| (r.dr_x - r.x).powi(2) + (r.dr_y - r.y).powi(2));
    m
}

/// Mean squared distance from each mapped landmark to the nearest true cone.
pub fn landmark_mse(map: &[MapEntry], track: &TrackDefinition) -> Option<f64> {
    if map.is_empty() || track.cones.is_empty() {
        return None;
    }
    let total: f64 = map
        .iter()
        .map(|l| {
            track
                .cones
                .iter()
                .map(|c| (c.x - l.x).powi(2) + (c.y - l.y).powi(2))
                .fold(f64::INFINITY, f64::min)
        })
        .sum();
    Some(total / map.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub mission: String,
    pub seed: u64,
    pub controller: String,
    pub association: String,
    pub emergency_cause: Option<String>,
    #[serde(flatten)]
    pub ticks: TickMetrics,
    pub landmarks: usize,
    pub landmark_mse_m2: Option<f64>,
    pub depth_error: Vec<TierStats>,
    pub center_crossings: Option<u32>,
    /// Acceleration runs: signed distance of the stopped car from the corridor axis.
    pub final_lateral_offset_m: Option<f64>,
    pub frames_assembled: usize,
    pub frames_skipped: usize,
    pub slam_frames_applied: usize,
    pub slam_frames_dropped: usize,
    pub slam_fallbacks_to_nn: usize,
    pub invariant_checks: usize,
    pub invariant_violations: usize,
}

impl RunSummary {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("summary serializes")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplayMismatch {
    pub field: String,
    pub stored: String,
    pub recomputed: String,
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 || (a.is_nan() && b.is_nan())
}

/// Recomputes what the output directory's raw files determine and compares it
/// with `summary.json`. Landmark and depth checks run when their files exist.
pub fn replay_check(telemetry_path: &Path) -> Result<Vec<ReplayMismatch>, String> {
    let dir = telemetry_path.parent().unwrap_or(Path::new("."));
    let read = |p: &Path| std::fs::read_to_string(p).map_err(|e| format!("cannot read {}: {e}", p.display()));
    let records = parse_telemetry(&read(telemetry_path)?).map_err(|e| e.to_string())?;
    let summary: RunSummary =
        serde_json::from_str(&read(&dir.join("summary.json"))?).map_err(|e| format!("summary.json: {e}"))?;
    let mut bad = Vec::new();
    fn check(bad: &mut Vec<ReplayMismatch>, field: &str, stored: f64, recomputed: f64) {
        if !close(stored, recomputed) {
            bad.push(ReplayMismatch {
                field: field.into(),
                stored: stored.to_string(),
                recomputed: recomputed.to_string(),
            });
        }
    }
    let m = tick_metrics(&records);
    let s = &summary.ticks;
    check(&mut bad, "sim_time_s", s.sim_time_s, m.sim_time_s);
    check(&mut bad, "laps_completed", s.laps_completed as f64, m.laps_completed as f64);
    check(&mut bad, "cones_hit", s.cones_hit as f64, m.cones_hit as f64);
    check(&mut bad, "mean_abs_cross_track_m", s.mean_abs_cross_track_m, m.mean_abs_cross_track_m);
    check(&mut bad, "max_abs_cross_track_m", s.max_abs_cross_track_m, m.max_abs_cross_track_m);
    check(&mut bad, "pose_rmse_m", s.pose_rmse_m, m.pose_rmse_m);
    check(&mut bad, "dead_reckoning_rmse_m", s.dead_reckoning_rmse_m, m.dead_reckoning_rmse_m);
    check(&mut bad, "lap_count", s.lap_times_s.len() as f64, m.lap_times_s.len() as f64);
    for (i, (a, b)) in s.lap_times_s.iter().zip(&m.lap_times_s).enumerate() {
        check(&mut bad, &format!("lap_times_s[{i}]"), *a, *b);
    }
    if s.final_status != m.final_status || s.segment_sequence != m.segment_sequence {
        bad.push(ReplayMismatch {
            field: "final_status/segment_sequence".into(),
            stored: format!("{} {:?}", s.final_status, s.segment_sequence),
            recomputed: format!("{} {:?}", m.final_status, m.segment_sequence),
        });
    }

    let depth_path = dir.join("depth_errors.csv");
    if depth_path.exists() {
        let samples = parse_depth_csv(&read(&depth_path)?).map_err(|e| e.to_string())?;
        let stats = tier_stats(&samples);
        check(&mut bad, "depth_error.len", summary.depth_error.len() as f64, stats.len() as f64);
        for (a, b) in summary.depth_error.iter().zip(&stats) {
            check(&mut bad, &format!("depth_error[{}].count", a.tier), a.count as f64, b.count as f64);
            check(&mut bad, &format!("depth_error[{}].mean", a.tier), a.mean_abs_rel_err_pct, b.mean_abs_rel_err_pct);
        }
    }
    let (map_path, track_path) = (dir.join("map.json"), dir.join("track.json"));
    if map_path.exists() && track_path.exists() {
        let map: Vec<MapEntry> = serde_json::from_str(&read(&map_path)?).map_err(|e| format!("map.json: {e}"))?;
        let track = TrackDefinition::from_json(&read(&track_path)?).map_err(|e| e.to_string())?;
        check(&mut bad, "landmarks", summary.landmarks as f64, map.len() as f64);
        if let (Some(a), Some(b)) = (summary.landmark_mse_m2, landmark_mse(&map, &track)) {
            check(&mut bad, "landmark_mse_m2", a, b);
        }
    }
    Ok(bad)
}

/// Nearest true cone class for each mapped landmark, for class-accuracy stats.
pub fn landmark_class_accuracy(map: &[MapEntry], track: &TrackDefinition) -> f64 {
    if map.is_empty() {
        return 0.0;
    }
    let correct = map
        .iter()
        .filter(|l| {
            track
                .cones
                .iter()
                .min_by(|a, b| {
                    let da = (a.x - l.x).powi(2) + (a.y - l.y).powi(2);
                    let db = (b.x - l.x).powi(2) + (b.y - l.y).powi(2);
                    da.total_cmp(&db)
                })
                .is_some_and(|c| c.class == l.class || (c.class.is_orange() && l.class.is_orange()))
        })
        .count();
    correct as f64 / map.len() as f64
}
