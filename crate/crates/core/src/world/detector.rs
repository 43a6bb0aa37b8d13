//! Box-level stand-in for the cone detector and keypoint regressor.

use nalgebra::{Matrix3, Vector2, Vector3};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::track::{TrackCone, TrackDefinition};
use super::vehicle::VehicleState;
use crate::geometry::{
    project_point, CameraIntrinsics, ConeClass, ConeGeometry, Distortion, Pixel, RigidTransform3D,
    CONE_KEYPOINT_COUNT,
};

/// Keypoints followed by the axis features.
pub const STEREO_FEATURE_COUNT: usize = CONE_KEYPOINT_COUNT + 4;

const RIM_SAMPLES: usize = 32;
const MIN_DEPTH: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BoxQuality {
    Good,
    Fallen,
    PartiallyVisible,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectedBox {
    /// Box centre.
    pub u: f64,
    pub v: f64,
    pub w: f64,
    pub h: f64,
    /// Reported class, possibly wrong.
    pub class: ConeClass,
    pub confidence: f64,
    pub keypoints: Option<[Pixel; CONE_KEYPOINT_COUNT]>,
    pub quality: BoxQuality,
    /// Index of the world cone that produced the box. Used for evaluation only.
    pub cone_id: Option<usize>,
}

impl DetectedBox {
    pub fn left(&self) -> f64 {
        self.u - self.w / 2.0
    }

    pub fn right(&self) -> f64 {
        self.u + self.w / 2.0
    }

    pub fn top(&self) -> f64 {
        self.v - self.h / 2.0
    }

    pub fn bottom(&self) -> f64 {
        self.v + self.h / 2.0
    }

    pub fn contains(&self, px: &Pixel) -> bool {
        px.u >= self.left() && px.u <= self.right() && px.v >= self.top() && px.v <= self.bottom()
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    pub fn intersection_area(&self, other: &DetectedBox) -> f64 {
        let w = self.right().min(other.right()) - self.left().max(other.left());
        let h = self.bottom().min(other.bottom()) - self.top().max(other.top());
        w.max(0.0) * h.max(0.0)
    }
}

/// Noise-free correspondences for one box: the same cone points seen by both cameras.
#[derive(Debug, Clone, PartialEq)]
pub struct StereoTruth {
    pub left_features: [Pixel; STEREO_FEATURE_COUNT],
    pub right_features: [Pixel; STEREO_FEATURE_COUNT],
    /// Left-camera depth of the cone base centre.
    pub depth: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DetectorOutput {
    pub boxes: Vec<DetectedBox>,
    /// Parallel to `boxes`.
    pub truth: Vec<StereoTruth>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectorNoise {
    pub box_sigma_px: f64,
    pub keypoint_sigma_px: f64,
    /// Keypoint noise multiplier for fallen or partly hidden cones, which the
    /// keypoint regressor was not trained on.
    pub bad_keypoint_scale: f64,
    pub class_flip: f64,
    /// Miss probability is `clamp(miss_slope * (d - miss_onset), 0, 0.9)`.
    pub miss_slope: f64,
    pub miss_onset: f64,
    pub occlusion_threshold: f64,
    /// Boxes hidden beyond this fraction are not reported at all.
    pub occlusion_drop: f64,
    pub max_range: f64,
}

impl DetectorNoise {
    pub fn off() -> Self {
        Self {
            box_sigma_px: 0.0,
            keypoint_sigma_px: 0.0,
            class_flip: 0.0,
            miss_slope: 0.0,
            ..Self::default()
        }
    }

    pub fn miss_probability(&self, distance: f64) -> f64 {
        (self.miss_slope * (distance - self.miss_onset)).clamp(0.0, 0.9)
    }
}

impl Default for DetectorNoise {
    fn default() -> Self {
        Self {
            box_sigma_px: 0.5,
            keypoint_sigma_px: 0.5,
            bad_keypoint_scale: 3.0,
            class_flip: 0.02,
            miss_slope: 0.02,
            miss_onset: 15.0,
            occlusion_threshold: 0.5,
            occlusion_drop: 0.95,
            max_range: 35.0,
        }
    }
}

/// Stereo pair mounted on the vehicle. The right camera sits `baseline`
/// metres along the left camera's `x` axis.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraRig {
    pub intrinsics: CameraIntrinsics,
    pub vehicle_from_left: RigidTransform3D,
    pub baseline: f64,
}

impl Default for CameraRig {
    fn default() -> Self {
        Self::forward_facing(Vector3::new(1.2, 0.06, 0.8), 0.12)
    }
}

impl CameraRig {
    /// Level camera looking along the vehicle `x` axis from `position`.
    pub fn forward_facing(position: Vector3<f64>, baseline: f64) -> Self {
        let intrinsics = CameraIntrinsics {
            fx: 530.0,
            fy: 530.0,
            cx: 640.0,
            cy: 360.0,
            image_width: 1280.0,
            image_height: 720.0,
            distortion: Distortion::default(),
        };
        Self {
            intrinsics,
            vehicle_from_left: RigidTransform3D::new(vehicle_from_camera_rotation(), position)
                .expect("axis permutation is a rotation"),
            baseline,
        }
    }

    pub fn vehicle_from_right(&self) -> RigidTransform3D {
        self.vehicle_from_left
            .compose(&RigidTransform3D::from_translation(Vector3::new(self.baseline, 0.0, 0.0)))
    }

    /// Extrinsic mapping LiDAR-frame points into the left camera frame.
    pub fn left_from(&self, vehicle_from_sensor: &RigidTransform3D) -> RigidTransform3D {
        self.vehicle_from_left.inverse().compose(vehicle_from_sensor)
    }

    /// Right-camera frame from left-camera frame.
    pub fn right_from_left(&self) -> RigidTransform3D {
        RigidTransform3D::from_translation(Vector3::new(-self.baseline, 0.0, 0.0))
    }
}

/// Columns are the camera axes (right, down, forward) in the vehicle frame.
pub fn vehicle_from_camera_rotation() -> Matrix3<f64> {
    Matrix3::new(0.0, 0.0, 1.0, -1.0, 0.0, 0.0, 0.0, -1.0, 0.0)
}

/// Pose of the cone-local frame in the vehicle frame, with the silhouette
/// plane facing `viewer` (vehicle frame).
pub fn vehicle_from_cone(cone: &TrackCone, vehicle: &VehicleState, viewer: &Vector3<f64>) -> RigidTransform3D {
    let g = ConeGeometry::for_class(cone.class);
    let local = vehicle.pose.inverse_transform_point(Vector2::new(cone.x, cone.y));
    let (origin, axis) = if cone.fallen {
        let yaw = cone.y.atan2(cone.x) + std::f64::consts::FRAC_PI_2 - vehicle.pose.heading;
        (
            Vector3::new(local.x, local.y, g.base_radius()),
            Vector3::new(yaw.cos(), yaw.sin(), 0.0),
        )
    } else {
        (Vector3::new(local.x, local.y, 0.0), Vector3::z())
    };
    let to_viewer = viewer - origin;
    let mut facing = to_viewer - axis * to_viewer.dot(&axis);
    if facing.norm() < 1e-9 {
        facing = Vector3::x();
    }
    let z = facing.normalize();
    let x = axis.cross(&z);
    let r = Matrix3::from_columns(&[x, axis, z]);
    RigidTransform3D::new(r, origin).expect("orthonormal cone frame")
}

/// Cone-local points behind the stereo features: keypoints, then axis features.
pub fn stereo_feature_points(g: &ConeGeometry) -> [Vector3<f64>; STEREO_FEATURE_COUNT] {
    let mut out = [Vector3::zeros(); STEREO_FEATURE_COUNT];
    out[..CONE_KEYPOINT_COUNT].copy_from_slice(&g.canonical_keypoints);
    out[CONE_KEYPOINT_COUNT..].copy_from_slice(&g.axis_features());
    out
}

struct Candidate {
    cone_id: usize,
    depth: f64,
    distance: f64,
    quality: BoxQuality,
    class: ConeClass,
    bounds: [f64; 4],
    clipped: bool,
    truth: StereoTruth,
}

fn project_cone(
    id: usize,
    cone: &TrackCone,
    vehicle: &VehicleState,
    rig: &CameraRig,
    noise: &DetectorNoise,
) -> Option<Candidate> {
    let k = &rig.intrinsics;
    let cam_pos = *rig.vehicle_from_left.translation();
    let v_from_cone = vehicle_from_cone(cone, vehicle, &cam_pos);
    let left_from_cone = rig.vehicle_from_left.inverse().compose(&v_from_cone);
    let right_from_cone = rig.vehicle_from_right().inverse().compose(&v_from_cone);
    let depth = left_from_cone.translation().z;
    let distance = Vector2::new(left_from_cone.translation().x, depth).norm();
    if depth < MIN_DEPTH || distance > noise.max_range {
        return None;
    }

    let g = ConeGeometry::for_class(cone.class);
    let mut lo = Vector2::new(f64::INFINITY, f64::INFINITY);
    let mut hi = Vector2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
    for (h, r) in [(0.0, g.base_radius()), (g.height, g.top_radius())] {
        for i in 0..RIM_SAMPLES {
            let a = i as f64 * std::f64::consts::TAU / RIM_SAMPLES as f64;
            let p = Vector3::new(r * a.cos(), h, r * a.sin());
            let px = project_point(&left_from_cone.apply(&p), k).ok()?;
            lo = lo.inf(&px.to_vector());
            hi = hi.sup(&px.to_vector());
        }
    }
    if hi.x <= 0.0 || hi.y <= 0.0 || lo.x >= k.image_width || lo.y >= k.image_height {
        return None;
    }

    let pts = stereo_feature_points(&g);
    let mut left_features = [Pixel::default(); STEREO_FEATURE_COUNT];
    let mut right_features = [Pixel::default(); STEREO_FEATURE_COUNT];
    for i in 0..STEREO_FEATURE_COUNT {
        left_features[i] = project_point(&left_from_cone.apply(&pts[i]), k).ok()?;
        right_features[i] = project_point(&right_from_cone.apply(&pts[i]), k).ok()?;
    }
    Some(Candidate {
        cone_id: id,
        depth,
        distance,
        quality: if cone.fallen { BoxQuality::Fallen } else { BoxQuality::Good },
        class: cone.class,
        bounds: [lo.x, lo.y, hi.x, hi.y],
        clipped: false,
        truth: StereoTruth {
            left_features,
            right_features,
            depth,
        },
    })
}

fn clamp_bounds(b: [f64; 4], k: &CameraIntrinsics) -> ([f64; 4], bool) {
    let c = [
        b[0].clamp(0.0, k.image_width),
        b[1].clamp(0.0, k.image_height),
        b[2].clamp(0.0, k.image_width),
        b[3].clamp(0.0, k.image_height),
    ];
    (c, c != b)
}

fn to_box(b: [f64; 4], class: ConeClass, quality: BoxQuality, cone_id: usize) -> DetectedBox {
    DetectedBox {
        u: (b[0] + b[2]) / 2.0,
        v: (b[1] + b[3]) / 2.0,
        w: b[2] - b[0],
        h: b[3] - b[1],
        class,
        confidence: 1.0,
        keypoints: None,
        quality,
        cone_id: Some(cone_id),
    }
}

/// Simulates the left-image detector plus the right-image correspondences.
///
/// Boxes are clamped to the image; a box cut by the border or hidden by a
/// nearer cone beyond the occlusion threshold is marked `PartiallyVisible`.
pub fn simulate_stereo_detector(
    world: &TrackDefinition,
    vehicle: &VehicleState,
    rig: &CameraRig,
    noise: &DetectorNoise,
    rng: &mut ChaCha8Rng,
) -> DetectorOutput {
    assert!(rig.baseline > 0.0, "stereo baseline must be positive");
    let k = &rig.intrinsics;
    let mut candidates: Vec<Candidate> = world
        .cones
        .iter()
        .enumerate()
        .filter_map(|(i, c)| project_cone(i, c, vehicle, rig, noise))
        .collect();
    candidates.sort_by(|a, b| a.depth.total_cmp(&b.depth).then(a.cone_id.cmp(&b.cone_id)));
    for c in &mut candidates {
        let (b, clipped) = clamp_bounds(c.bounds, k);
        c.bounds = b;
        c.clipped = clipped;
    }

    let box_noise = Normal::new(0.0, noise.box_sigma_px.max(0.0)).expect("valid sigma");
    let kp_noise = Normal::new(0.0, noise.keypoint_sigma_px.max(0.0)).expect("valid sigma");
    let mut out = DetectorOutput::default();
    for (idx, c) in candidates.iter().enumerate() {
        let own = to_box(c.bounds, c.class, c.quality, c.cone_id);
        if own.area() <= 0.0 {
            continue;
        }
        let hidden = candidates[..idx]
            .iter()
            .map(|n| own.intersection_area(&to_box(n.bounds, n.class, n.quality, n.cone_id)) / own.area())
            .fold(0.0, f64::max);
        if hidden >= noise.occlusion_drop {
            continue;
        }
        // draws happen in a fixed order for every candidate so streams stay aligned
        let miss_draw: f64 = rng.gen();
        let flip_draw: f64 = rng.gen();
        let flip_to = rng.gen_range(1..ConeClass::ALL.len());
        let confidence = if noise.box_sigma_px > 0.0 { rng.gen_range(0.6..1.0) } else { 1.0 };
        let jitter: [f64; 4] = std::array::from_fn(|_| box_noise.sample(rng));
        let kp_jitter: [(f64, f64); CONE_KEYPOINT_COUNT] =
            std::array::from_fn(|_| (kp_noise.sample(rng), kp_noise.sample(rng)));
        if miss_draw < noise.miss_probability(c.distance) {
            continue;
        }
        let class = if flip_draw < noise.class_flip {
            ConeClass::from_index((c.class.index() + flip_to) % ConeClass::ALL.len()).expect("class index")
        } else {
            c.class
        };
        let quality = match c.quality {
            BoxQuality::Fallen => BoxQuality::Fallen,
            _ if c.clipped || hidden >= noise.occlusion_threshold => BoxQuality::PartiallyVisible,
            q => q,
        };
        let w = (own.w + jitter[0]).max(1.0);
        let h = (own.h + jitter[1]).max(1.0);
        let u = own.u + jitter[2];
        let v = own.v + jitter[3];
        let (b, _) = clamp_bounds([u - w / 2.0, v - h / 2.0, u + w / 2.0, v + h / 2.0], k);
        let mut det = to_box(b, class, quality, c.cone_id);
        if det.w <= 0.0 || det.h <= 0.0 {
            continue;
        }
        det.confidence = confidence;
        let kp_scale = if quality == BoxQuality::Good { 1.0 } else { noise.bad_keypoint_scale };
        let mut kps = [Pixel::default(); CONE_KEYPOINT_COUNT];
        for i in 0..CONE_KEYPOINT_COUNT {
            let t = c.truth.left_features[i];
            kps[i] = Pixel::new(t.u + kp_scale * kp_jitter[i].0, t.v + kp_scale * kp_jitter[i].1);
        }
        det.keypoints = Some(kps);
        out.boxes.push(det);
        out.truth.push(c.truth.clone());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Pose2D;
    use crate::world::rng::{stream_rng, Stream};
    use crate::world::track::Mission;

    fn world(cones: Vec<TrackCone>) -> TrackDefinition {
        TrackDefinition {
            mission: Mission::Autocross,
            track_width: 4.0,
            start_pose: Pose2D::identity(),
            cones,
            skidpad_triggers: None,
            centerline: vec![],
        }
    }

    fn detect(w: &TrackDefinition, noise: &DetectorNoise, seed: u64) -> DetectorOutput {
        let v = VehicleState::at_rest(Pose2D::identity(), 1.53);
        let rig = CameraRig::default();
        simulate_stereo_detector(w, &v, &rig, noise, &mut stream_rng(seed, Stream::Detector, 0))
    }

    #[test]
    fn on_axis_cone_is_centred() {
        let rig = CameraRig::default();
        let cam = rig.vehicle_from_left.translation();
        let out = detect(&world(vec![TrackCone::new(cam.x + 10.0, cam.y, ConeClass::Blue)]), &DetectorNoise::off(), 0);
        assert_eq!(out.boxes.len(), 1);
        assert!((out.boxes[0].u - rig.intrinsics.cx).abs() < 0.5);
        assert_eq!(out.boxes[0].quality, BoxQuality::Good);
    }

    #[test]
    fn keypoints_match_projection() {
        let cone = TrackCone::new(8.0, 1.0, ConeClass::Yellow);
        let out = detect(&world(vec![cone]), &DetectorNoise::off(), 0);
        let rig = CameraRig::default();
        let v = VehicleState::at_rest(Pose2D::identity(), 1.53);
        let pose = rig.vehicle_from_left.inverse().compose(&vehicle_from_cone(
            &cone,
            &v,
            rig.vehicle_from_left.translation(),
        ));
        let kps = out.boxes[0].keypoints.unwrap();
        for (kp, p) in kps.iter().zip(ConeClass::Yellow.geometry().canonical_keypoints.iter()) {
            let expect = project_point(&pose.apply(p), &rig.intrinsics).unwrap();
            assert!(kp.distance(&expect) < 1e-9);
        }
    }

    #[test]
    fn occluded_rear_cone_is_partially_visible() {
        let rig = CameraRig::default();
        let cam = rig.vehicle_from_left.translation();
        // the nearer cone hides roughly 60 % of the farther box
        let front = TrackCone::new(cam.x + 6.0, cam.y, ConeClass::Blue);
        let mut lateral = 0.0;
        let mut hidden = 0.0;
        for step in 0..400 {
            lateral = step as f64 * 0.001;
            let rear = TrackCone::new(cam.x + 7.0, cam.y + lateral, ConeClass::Blue);
            let out = detect(&world(vec![front, rear]), &DetectorNoise::off(), 0);
            if out.boxes.len() < 2 {
                continue;
            }
            hidden = out.boxes[1].intersection_area(&out.boxes[0]) / out.boxes[1].area();
            if hidden <= 0.6 {
                break;
            }
        }
        assert!((0.55..=0.6).contains(&hidden), "overlap {hidden} at {lateral}");
        let rear = TrackCone::new(cam.x + 7.0, cam.y + lateral, ConeClass::Blue);
        let out = detect(&world(vec![front, rear]), &DetectorNoise::off(), 0);
        assert_eq!(out.boxes[0].quality, BoxQuality::Good);
        assert_eq!(out.boxes[1].quality, BoxQuality::PartiallyVisible);
    }

    #[test]
    fn fallen_cone_flagged() {
        let mut cone = TrackCone::new(9.0, 0.5, ConeClass::Blue);
        cone.fallen = true;
        let out = detect(&world(vec![cone]), &DetectorNoise::off(), 0);
        assert_eq!(out.boxes[0].quality, BoxQuality::Fallen);
    }

    #[test]
    fn boxes_stay_inside_image_for_random_scenes() {
        let rig = CameraRig::default();
        for seed in 0..1000u64 {
            let mut rng = stream_rng(seed, Stream::Track, 0);
            let cones = (0..12)
                .map(|_| TrackCone::new(rng.gen_range(-2.0..30.0), rng.gen_range(-15.0..15.0), ConeClass::Blue))
                .collect();
            let out = detect(&world(cones), &DetectorNoise::default(), seed);
            for b in &out.boxes {
                assert!(b.w > 0.0 && b.h > 0.0);
                assert!(b.left() >= 0.0 && b.top() >= 0.0);
                assert!(b.right() <= rig.intrinsics.image_width + 1e-9);
                assert!(b.bottom() <= rig.intrinsics.image_height + 1e-9);
            }
        }
    }

    #[test]
    fn stereo_truth_has_positive_disparity() {
        let out = detect(&world(vec![TrackCone::new(10.0, 0.0, ConeClass::Blue)]), &DetectorNoise::off(), 0);
        let t = &out.truth[0];
        for (l, r) in t.left_features.iter().zip(&t.right_features) {
            let d = l.u - r.u;
            assert!((d - 530.0 * 0.12 / t.depth).abs() < 0.5);
        }
    }
}
