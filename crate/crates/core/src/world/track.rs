//! Cone-delimited tracks: data model, JSON schema and seeded generators.
//!
//! JSON schema (all lengths in metres, angles in radians):
//!
//! ```json
//! {
//!   "mission": "trackdrive",          // autocross | trackdrive | skidpad | acceleration
//!   "track_width_m": 4.0,
//!   "start_pose": {"x": 0.0, "y": 0.0, "heading": 0.0},
//!   "cones": [{"x": 1.0, "y": 2.0, "class": "blue", "fallen": false}],
//!   "triggers": [{"center": [0.0, 0.0], "radius": 1.5, "id": "center"}],
//!   "centerline": [[0.0, 0.0], [1.0, 0.0]]
//! }
//! ```
//!
//! `class` is one of `blue`, `yellow`, `orange_small`, `orange_big`.
//! `fallen`, `triggers` and `centerline` are optional.

use std::f64::consts::{PI, TAU};

use nalgebra::Vector2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::rng::{stream_rng, Stream};
use super::WorldError;
use crate::geometry::{ConeClass, Pose2D};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mission {
    Autocross,
    Trackdrive,
    Skidpad,
    Acceleration,
}

impl Mission {
    pub fn as_str(self) -> &'static str {
        match self {
            Mission::Autocross => "autocross",
            Mission::Trackdrive => "trackdrive",
            Mission::Skidpad => "skidpad",
            Mission::Acceleration => "acceleration",
        }
    }
}

impl std::str::FromStr for Mission {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "autocross" => Ok(Mission::Autocross),
            "trackdrive" => Ok(Mission::Trackdrive),
            "skidpad" => Ok(Mission::Skidpad),
            "acceleration" => Ok(Mission::Acceleration),
            other => Err(format!("unknown mission '{other}'")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackCone {
    pub x: f64,
    pub y: f64,
    pub class: ConeClass,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub fallen: bool,
}

impl TrackCone {
    pub fn new(x: f64, y: f64, class: ConeClass) -> Self {
        Self {
            x,
            y,
            class,
            fallen: false,
        }
    }

    pub fn position(&self) -> Vector2<f64> {
        Vector2::new(self.x, self.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TriggerId {
    #[serde(rename = "center")]
    Center,
    #[serde(rename = "right_1")]
    Right1,
    #[serde(rename = "right_2")]
    Right2,
    #[serde(rename = "left_1")]
    Left1,
    #[serde(rename = "left_2")]
    Left2,
}

/// Circular trigger volume on the ground plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Trigger {
    pub center: [f64; 2],
    pub radius: f64,
    pub id: TriggerId,
}

impl Trigger {
    pub fn contains(&self, p: Vector2<f64>) -> bool {
        (p - Vector2::new(self.center[0], self.center[1])).norm() <= self.radius
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackDefinition {
    pub mission: Mission,
    #[serde(rename = "track_width_m")]
    pub track_width: f64,
    pub start_pose: Pose2D,
    pub cones: Vec<TrackCone>,
    #[serde(default, rename = "triggers", skip_serializing_if = "Option::is_none")]
    pub skidpad_triggers: Option<Vec<Trigger>>,
    /// Reference centreline, closed for circuits. Informational only.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub centerline: Vec<[f64; 2]>,
}

impl TrackDefinition {
    pub fn from_json(text: &str) -> Result<Self, WorldError> {
        let track: TrackDefinition = serde_json::from_str(text).map_err(|e| WorldError::TrackParse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        track.validate_basic()?;
        Ok(track)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("track serializes")
    }

    fn validate_basic(&self) -> Result<(), WorldError> {
        if !(self.track_width > 0.0) {
            return Err(WorldError::InvalidTrack("track_width_m must be positive".into()));
        }
        for (i, c) in self.cones.iter().enumerate() {
            if !c.x.is_finite() || !c.y.is_finite() {
                return Err(WorldError::InvalidTrack(format!("cones[{i}] has non-finite position")));
            }
        }
        if self.mission == Mission::Skidpad && self.skidpad_triggers.is_none() {
            return Err(WorldError::InvalidTrack("skidpad track needs triggers".into()));
        }
        Ok(())
    }

    /// Checks the width against a vehicle and the boundary cone spacing.
    pub fn validate(&self, vehicle_width: f64, max_cone_spacing: f64) -> Result<(), WorldError> {
        self.validate_basic()?;
        if self.track_width <= vehicle_width {
            return Err(WorldError::InvalidTrack(format!(
                "track width {} m not wider than vehicle {} m",
                self.track_width, vehicle_width
            )));
        }
        if matches!(self.mission, Mission::Autocross | Mission::Trackdrive | Mission::Acceleration) {
            for (i, c) in self.cones.iter().enumerate() {
                if c.class.is_orange() {
                    continue;
                }
                let nearest_same_side = self
                    .cones
                    .iter()
                    .enumerate()
                    .filter(|(j, o)| *j != i && (o.class == c.class || o.class.is_orange()))
                    .map(|(_, o)| (o.position() - c.position()).norm())
                    .fold(f64::INFINITY, f64::min);
                if nearest_same_side > max_cone_spacing + 1e-9 {
                    return Err(WorldError::InvalidTrack(format!(
                        "cone {i} is {nearest_same_side:.2} m from its nearest same-side neighbour"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn is_closed(&self) -> bool {
        matches!(self.mission, Mission::Autocross | Mission::Trackdrive)
    }
}

/// Parameters for [`generate_track`].
#[derive(Debug, Clone, PartialEq)]
pub struct TrackSpec {
    pub mission: Mission,
    pub seed: u64,
    pub track_width: f64,
    pub cone_spacing: f64,
    /// Straight length for acceleration runs.
    pub length: f64,
    /// Mean radius of generated circuits.
    pub mean_radius: f64,
    /// Relative amplitude of the harmonic shape perturbation.
    pub shape_amplitude: f64,
    pub min_turn_radius: f64,
}

impl TrackSpec {
    pub fn new(mission: Mission, seed: u64) -> Self {
        let (track_width, cone_spacing) = match mission {
            Mission::Acceleration => (3.0, 5.0),
            Mission::Skidpad => (3.0, 3.0),
            _ => (4.0, 3.5),
        };
        Self {
            mission,
            seed,
            track_width,
            cone_spacing,
            length: 75.0,
            mean_radius: 28.0,
            shape_amplitude: 0.22,
            min_turn_radius: 7.0,
        }
    }
}

pub fn generate_track(spec: &TrackSpec) -> Result<TrackDefinition, WorldError> {
    if !(spec.track_width > 0.0) {
        return Err(WorldError::InvalidSpec("track width must be positive".into()));
    }
    if !(spec.cone_spacing > 0.0) {
        return Err(WorldError::InvalidSpec("cone spacing must be positive".into()));
    }
    match spec.mission {
        Mission::Acceleration => {
            if !(spec.length > 0.0) {
                return Err(WorldError::InvalidSpec("length must be positive".into()));
            }
            Ok(acceleration_track(spec))
        }
        Mission::Skidpad => Ok(skidpad_track(spec)),
        Mission::Autocross | Mission::Trackdrive => {
            if !(spec.mean_radius > 0.0) || !(spec.min_turn_radius > 0.0) {
                return Err(WorldError::InvalidSpec("radii must be positive".into()));
            }
            if spec.min_turn_radius <= spec.track_width / 2.0 {
                return Err(WorldError::InvalidSpec(
                    "minimum turn radius must exceed half the track width".into(),
                ));
            }
            circuit_track(spec)
        }
    }
}

fn acceleration_track(spec: &TrackSpec) -> TrackDefinition {
    let half = spec.track_width / 2.0;
    let stations = (spec.length / spec.cone_spacing).ceil() as usize;
    let step = spec.length / stations as f64;
    let mut cones = Vec::new();
    for i in 0..=stations {
        let x = i as f64 * step;
        let (left, right) = if i == 0 || i == stations {
            (ConeClass::BigOrange, ConeClass::BigOrange)
        } else {
            (ConeClass::Blue, ConeClass::Yellow)
        };
        cones.push(TrackCone::new(x, half, left));
        cones.push(TrackCone::new(x, -half, right));
    }
    let braking = 50.0;
    let n_brake = (braking / spec.cone_spacing).ceil() as usize;
    for i in 1..=n_brake {
        let x = spec.length + i as f64 * braking / n_brake as f64;
        cones.push(TrackCone::new(x, half, ConeClass::SmallOrange));
        cones.push(TrackCone::new(x, -half, ConeClass::SmallOrange));
    }
    TrackDefinition {
        mission: Mission::Acceleration,
        track_width: spec.track_width,
        start_pose: Pose2D::new(0.0, 0.0, 0.0),
        cones,
        skidpad_triggers: None,
        centerline: vec![[-5.0, 0.0], [spec.length + braking, 0.0]],
    }
}

/// Skidpad centre radius (midway between the 15.25 m and 21.25 m circles).
pub const SKIDPAD_RADIUS: f64 = 9.125;
pub const SKIDPAD_ENTRY_LENGTH: f64 = 15.0;
pub const SKIDPAD_EXIT_LENGTH: f64 = 20.0;

fn skidpad_track(spec: &TrackSpec) -> TrackDefinition {
    let r = SKIDPAD_RADIUS;
    let inner = r - 1.5;
    let outer = r + 1.5;
    let mut cones = Vec::new();
    // right circle (driven clockwise) centred at (0, -r); its mirror image is the left circle
    let mut right_half = Vec::new();
    for i in 0..16 {
        let a = i as f64 * TAU / 16.0;
        right_half.push((a.cos() * inner, -r + a.sin() * inner, ConeClass::Yellow));
    }
    for i in 0..13 {
        let a = PI / 2.0 + i as f64 * TAU / 13.0;
        let rel = crate::geometry::normalize_angle(a - PI / 2.0).abs();
        if rel < 0.9 {
            continue;
        }
        right_half.push((a.cos() * outer, -r + a.sin() * outer, ConeClass::Blue));
    }
    for &(x, y, class) in &right_half {
        cones.push(TrackCone::new(x, y, class));
    }
    for &(x, y, class) in &right_half {
        let mirrored = match class {
            ConeClass::Blue => ConeClass::Yellow,
            ConeClass::Yellow => ConeClass::Blue,
            c => c,
        };
        cones.push(TrackCone::new(x, -y, mirrored));
    }
    // lane cones stay outside the outer circle so the circle paths never cross them
    let half = spec.track_width / 2.0;
    let mut x = -SKIDPAD_ENTRY_LENGTH;
    while x <= -outer + 1e-9 {
        cones.push(TrackCone::new(x, half, ConeClass::SmallOrange));
        cones.push(TrackCone::new(x, -half, ConeClass::SmallOrange));
        x += spec.cone_spacing;
    }
    let mut x = outer;
    while x <= SKIDPAD_EXIT_LENGTH + 1e-9 {
        cones.push(TrackCone::new(x, half, ConeClass::SmallOrange));
        cones.push(TrackCone::new(x, -half, ConeClass::SmallOrange));
        x += spec.cone_spacing;
    }
    let trig = |x: f64, y: f64, id| Trigger {
        center: [x, y],
        radius: 1.5,
        id,
    };
    TrackDefinition {
        mission: Mission::Skidpad,
        track_width: spec.track_width,
        start_pose: Pose2D::new(-SKIDPAD_ENTRY_LENGTH, 0.0, 0.0),
        cones,
        skidpad_triggers: Some(vec![
            trig(0.0, 0.0, TriggerId::Center),
            trig(r, -r, TriggerId::Right1),
            trig(-r, -r, TriggerId::Right2),
            trig(r, r, TriggerId::Left1),
            trig(-r, r, TriggerId::Left2),
        ]),
        centerline: vec![[-SKIDPAD_ENTRY_LENGTH, 0.0], [SKIDPAD_EXIT_LENGTH, 0.0]],
    }
}

struct Shape {
    terms: Vec<(f64, f64, f64)>,
    mean_radius: f64,
}

impl Shape {
    fn point(&self, phi: f64) -> Vector2<f64> {
        let mut r = 1.0;
        for &(k, amp, phase) in &self.terms {
            r += amp * (k * phi + phase).cos();
        }
        Vector2::new(phi.cos(), phi.sin()) * (self.mean_radius * r)
    }
}

const CIRCUIT_SAMPLES: usize = 4000;

fn circuit_track(spec: &TrackSpec) -> Result<TrackDefinition, WorldError> {
    let mut rng = stream_rng(spec.seed, Stream::Track, 0);
    let mut terms: Vec<(f64, f64, f64)> = (2..=4)
        .map(|k| {
            (
                k as f64,
                rng.gen_range(0.3..1.0) * spec.shape_amplitude / (k as f64 - 1.0),
                rng.gen_range(0.0..TAU),
            )
        })
        .collect();

    let mut samples = Vec::new();
    for _attempt in 0..40 {
        let shape = Shape {
            terms: terms.clone(),
            mean_radius: spec.mean_radius,
        };
        samples = (0..CIRCUIT_SAMPLES)
            .map(|i| shape.point(i as f64 * TAU / CIRCUIT_SAMPLES as f64))
            .collect::<Vec<_>>();
        if min_turn_radius(&samples) >= spec.min_turn_radius {
            break;
        }
        for t in &mut terms {
            t.1 *= 0.85;
        }
        samples.clear();
    }
    if samples.is_empty() {
        return Err(WorldError::InvalidSpec(
            "could not satisfy minimum turn radius".into(),
        ));
    }

    // arc-length table
    let n = samples.len();
    let mut cum = vec![0.0; n + 1];
    for i in 0..n {
        cum[i + 1] = cum[i] + (samples[(i + 1) % n] - samples[i]).norm();
    }
    let total = cum[n];
    let at = |s: f64| -> (Vector2<f64>, Vector2<f64>) {
        let s = s.rem_euclid(total);
        let idx = match cum.binary_search_by(|c| c.total_cmp(&s)) {
            Ok(i) => i.min(n - 1),
            Err(i) => i.saturating_sub(1).min(n - 1),
        };
        let a = samples[idx];
        let b = samples[(idx + 1) % n];
        let seg = cum[idx + 1] - cum[idx];
        let f = if seg > 0.0 { (s - cum[idx]) / seg } else { 0.0 };
        let p = a + (b - a) * f;
        let prev = samples[(idx + n - 1) % n];
        let next = samples[(idx + 2) % n];
        let t = ((b - prev) * (1.0 - f) + (next - a) * f).normalize();
        (p, t)
    };

    let stations = (total / spec.cone_spacing).ceil() as usize;
    let step = total / stations as f64;
    let half = spec.track_width / 2.0;
    let mut cones = Vec::new();
    for i in 0..stations {
        let s = i as f64 * step;
        let (p, t) = at(s);
        let normal = Vector2::new(-t.y, t.x);
        if i == 0 {
            for ds in [-0.5, 0.5] {
                let (q, tq) = at(s + ds);
                let nq = Vector2::new(-tq.y, tq.x);
                let l = q + nq * half;
                let r = q - nq * half;
                cones.push(TrackCone::new(l.x, l.y, ConeClass::BigOrange));
                cones.push(TrackCone::new(r.x, r.y, ConeClass::BigOrange));
            }
            continue;
        }
        let l = p + normal * half;
        let r = p - normal * half;
        cones.push(TrackCone::new(l.x, l.y, ConeClass::Blue));
        cones.push(TrackCone::new(r.x, r.y, ConeClass::Yellow));
    }
    let (p0, t0) = at(0.0);
    let centerline = (0..(total / 0.5).ceil() as usize)
        .map(|i| {
            let (p, _) = at(i as f64 * 0.5);
            [p.x, p.y]
        })
        .collect();
    Ok(TrackDefinition {
        mission: spec.mission,
        track_width: spec.track_width,
        start_pose: Pose2D::new(p0.x, p0.y, t0.y.atan2(t0.x)),
        cones,
        skidpad_triggers: None,
        centerline,
    })
}

fn min_turn_radius(samples: &[Vector2<f64>]) -> f64 {
    let n = samples.len();
    let mut min_r = f64::INFINITY;
    for i in 0..n {
        let a = samples[(i + n - 1) % n];
        let b = samples[i];
        let c = samples[(i + 1) % n];
        let k = menger_curvature(a, b, c).abs();
        if k > 0.0 {
            min_r = min_r.min(1.0 / k);
        }
    }
    min_r
}

/// Signed curvature of the circle through three points (positive = left turn).
pub fn menger_curvature(a: Vector2<f64>, b: Vector2<f64>, c: Vector2<f64>) -> f64 {
    let ab = b - a;
    let bc = c - b;
    let ca = a - c;
    let denom = ab.norm() * bc.norm() * ca.norm();
    if denom < 1e-15 {
        return 0.0;
    }
    2.0 * (ab.x * bc.y - ab.y * bc.x) / denom
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn acceleration_is_straight_corridor() {
        let mut spec = TrackSpec::new(Mission::Acceleration, 0);
        spec.length = 75.0;
        spec.track_width = 3.0;
        let t = generate_track(&spec).unwrap();
        for c in &t.cones {
            assert!((c.y.abs() - 1.5).abs() < 1e-12);
        }
        assert!(t.centerline.iter().all(|p| p[1] == 0.0));
        let lefts = t.cones.iter().filter(|c| c.y > 0.0).count();
        assert_eq!(lefts, t.cones.len() / 2);
        t.validate(1.4, 5.0).unwrap();
    }

    #[test]
    fn skidpad_mirror_symmetric() {
        let t = generate_track(&TrackSpec::new(Mission::Skidpad, 1)).unwrap();
        for c in &t.cones {
            let found = t.cones.iter().any(|o| {
                (o.x - c.x).abs() < 1e-9
                    && (o.y + c.y).abs() < 1e-9
                    && match c.class {
                        ConeClass::Blue => o.class == ConeClass::Yellow,
                        ConeClass::Yellow => o.class == ConeClass::Blue,
                        k => o.class == k,
                    }
            });
            assert!(found, "no mirror for {c:?}");
        }
        assert_eq!(t.skidpad_triggers.as_ref().unwrap().len(), 5);
    }

    #[test]
    fn generation_is_deterministic() {
        let spec = TrackSpec::new(Mission::Trackdrive, 42);
        let a = generate_track(&spec).unwrap().to_json();
        let b = generate_track(&spec).unwrap().to_json();
        assert_eq!(a, b);
        let c = generate_track(&TrackSpec::new(Mission::Trackdrive, 43)).unwrap().to_json();
        assert_ne!(a, c);
    }

    #[test]
    fn circuits_satisfy_spacing_and_radius() {
        for seed in 0..10 {
            let spec = TrackSpec::new(Mission::Trackdrive, seed);
            let t = generate_track(&spec).unwrap();
            t.validate(1.4, 5.0).unwrap();
            let pts: Vec<_> = t.centerline.iter().map(|p| Vector2::new(p[0], p[1])).collect();
            assert!(min_turn_radius(&pts) >= spec.min_turn_radius * 0.95);
        }
    }

    #[test]
    fn invalid_specs_rejected() {
        let mut spec = TrackSpec::new(Mission::Acceleration, 0);
        spec.length = -1.0;
        assert!(matches!(generate_track(&spec), Err(WorldError::InvalidSpec(_))));
        let mut spec = TrackSpec::new(Mission::Trackdrive, 0);
        spec.track_width = 0.0;
        assert!(matches!(generate_track(&spec), Err(WorldError::InvalidSpec(_))));
    }

    #[test]
    fn json_round_trip_and_diagnostics() {
        let t = generate_track(&TrackSpec::new(Mission::Skidpad, 0)).unwrap();
        let back = TrackDefinition::from_json(&t.to_json()).unwrap();
        assert_eq!(back, t);
        let err = TrackDefinition::from_json("{\n \"mission\": \"trackdrive\",\n \"track_width_m\": \"wide\"\n}").unwrap_err();
        match err {
            WorldError::TrackParse { line, .. } => assert_eq!(line, 3),
            e => panic!("unexpected {e:?}"),
        }
    }
}
