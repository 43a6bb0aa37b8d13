use log::debug;
use rand_chacha::ChaCha8Rng;

use super::{
    dbscan_cluster, filter_cone_clusters, fuse_lidar_camera, mono_depth_from_box, ransac_ground_removal,
    stereo_depth, ClusterSet, ConeFilterConfig, ConeObservation, FusionConfig, MonoCalibration, PerceptionError,
    RansacConfig, SourceTier, StereoConfig, StereoMode,
};
use crate::geometry::{PointCloud, RigidTransform3D};
use crate::world::{BoxQuality, CameraRig, DetectorOutput, LidarConfig};

/// Sensor data for one perception tick. The cloud is in the LiDAR frame.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SensorFrame {
    pub timestamp: f64,
    pub cloud: PointCloud,
    pub detections: DetectorOutput,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PerceptionConfig {
    pub rig: CameraRig,
    pub vehicle_from_lidar: RigidTransform3D,
    pub ransac: RansacConfig,
    pub dbscan_eps: f64,
    pub dbscan_min_pts: usize,
    pub cone_filter: ConeFilterConfig,
    pub fusion: FusionConfig,
    pub mono: MonoCalibration,
    pub stereo_mode: StereoMode,
    pub stereo: StereoConfig,
    /// Reject a LiDAR depth that disagrees with the box-height depth by more
    /// than this fraction (upright cones only). Catches clusters credited to
    /// the wrong box when the cone in front was not detected.
    pub fusion_gate: Option<f64>,
}

impl Default for PerceptionConfig {
    fn default() -> Self {
        Self {
            rig: CameraRig::default(),
            vehicle_from_lidar: LidarConfig::default().vehicle_from_lidar(),
            ransac: RansacConfig::default(),
            dbscan_eps: 0.4,
            dbscan_min_pts: 2,
            cone_filter: ConeFilterConfig::default(),
            fusion: FusionConfig::default(),
            mono: MonoCalibration::default(),
            stereo_mode: StereoMode::default(),
            stereo: StereoConfig::default(),
            fusion_gate: None,
        }
    }
}

impl PerceptionConfig {
    pub fn camera_from_lidar(&self) -> RigidTransform3D {
        self.rig.left_from(&self.vehicle_from_lidar)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DropReason {
    pub tier: SourceTier,
    pub error: PerceptionError,
}

/// Routing outcome of one box.
#[derive(Debug, Clone, PartialEq)]
pub enum BoxOutcome {
    Observed(SourceTier),
    Dropped(DropReason),
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PipelineOutput {
    /// Sorted by the left edge of the originating box.
    pub observations: Vec<ConeObservation>,
    /// Parallel to the input boxes.
    pub outcomes: Vec<Option<BoxOutcome>>,
}

impl PipelineOutput {
    pub fn drops(&self) -> impl Iterator<Item = (usize, &DropReason)> {
        self.outcomes.iter().enumerate().filter_map(|(i, o)| match o {
            Some(BoxOutcome::Dropped(r)) => Some((i, r)),
            _ => None,
        })
    }
}

/// Finds cone clusters in a LiDAR sweep. Returns the ground plane when one was found.
pub fn lidar_cone_clusters(
    cloud: &PointCloud,
    config: &PerceptionConfig,
    rng: &mut ChaCha8Rng,
) -> (Option<super::Plane3D>, PointCloud, ClusterSet) {
    let (plane, rest) = match ransac_ground_removal(cloud, &config.ransac, rng) {
        Ok((plane, rest)) => (Some(plane), rest),
        Err(e) => {
            debug!("ground removal skipped: {e}");
            (None, cloud.clone())
        }
    };
    if rest.is_empty() {
        return (plane, rest, ClusterSet::default());
    }
    let clusters = dbscan_cluster(&rest, config.dbscan_eps, config.dbscan_min_pts);
    let clusters = match &plane {
        Some(p) => filter_cone_clusters(&clusters, &rest, p, &config.cone_filter),
        None => clusters,
    };
    (plane, rest, clusters)
}

/// Routes every detector box through exactly one depth tier.
pub fn three_tier_pipeline(frame: &SensorFrame, config: &PerceptionConfig, rng: &mut ChaCha8Rng) -> PipelineOutput {
    let boxes = &frame.detections.boxes;
    let mut outcomes: Vec<Option<BoxOutcome>> = vec![None; boxes.len()];
    let mut tagged: Vec<(usize, ConeObservation)> = Vec::new();

    let (plane, rest, clusters) = lidar_cone_clusters(&frame.cloud, config, rng);
    let fusion = FusionConfig {
        size_prior: Some(config.fusion.size_prior.unwrap_or(config.mono)),
        ..config.fusion
    };
    let fused = fuse_lidar_camera(
        &clusters,
        &rest,
        boxes,
        &config.camera_from_lidar(),
        &config.rig,
        plane.as_ref(),
        &fusion,
    );
    let mut unmatched = fused.unmatched;
    for (bi, obs) in fused.observations {
        if let (Some(gate), BoxQuality::Good | BoxQuality::PartiallyVisible) = (config.fusion_gate, boxes[bi].quality) {
            let mut b = boxes[bi].clone();
            b.quality = BoxQuality::Good;
            if let Ok(mono) = mono_depth_from_box(&b, &config.rig, &config.mono) {
                if (obs.depth - mono.depth).abs() > gate * mono.depth {
                    debug!("box {bi}: lidar depth {:.2} disagrees with box height {:.2}", obs.depth, mono.depth);
                    unmatched.push(bi);
                    continue;
                }
            }
        }
        outcomes[bi] = Some(BoxOutcome::Observed(SourceTier::LidarFusion));
        tagged.push((bi, obs));
    }
    unmatched.sort_unstable();
    for &bi in &unmatched {
        let b = &boxes[bi];
        let (tier, result) = if b.quality == BoxQuality::Good {
            (SourceTier::Monocular, mono_depth_from_box(b, &config.rig, &config.mono))
        } else {
            let truth = &frame.detections.truth[bi];
            (
                SourceTier::Stereo,
                stereo_depth(b, truth, &config.rig, config.stereo_mode, &config.stereo, rng),
            )
        };
        match result {
            Ok(obs) => {
                outcomes[bi] = Some(BoxOutcome::Observed(tier));
                tagged.push((bi, obs));
            }
            Err(error) => {
                debug!("box {bi} dropped by {tier:?}: {error}");
                outcomes[bi] = Some(BoxOutcome::Dropped(DropReason { tier, error }));
            }
        }
    }
    tagged.sort_by(|a, b| boxes[a.0].left().total_cmp(&boxes[b.0].left()).then(a.0.cmp(&b.0)));
    PipelineOutput {
        observations: tagged.into_iter().map(|(_, o)| o).collect(),
        outcomes,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{ConeClass, Pose2D};
    use crate::perception::calibrate_mono;
    use crate::world::{
        simulate_lidar, simulate_stereo_detector, stream_rng, DetectorNoise, LidarNoise, Mission, Stream, TrackCone,
        TrackDefinition, VehicleState,
    };

    fn frame_for(cones: Vec<TrackCone>, seed: u64) -> SensorFrame {
        let world = TrackDefinition {
            mission: Mission::Autocross,
            track_width: 4.0,
            start_pose: Pose2D::identity(),
            cones,
            skidpad_triggers: None,
            centerline: vec![],
        };
        let v = VehicleState::at_rest(Pose2D::identity(), 1.53);
        let cloud = simulate_lidar(&world, &v, &LidarConfig::default(), &LidarNoise::default(), &mut stream_rng(seed, Stream::Lidar, 0));
        let detections = simulate_stereo_detector(&world, &v, &CameraRig::default(), &DetectorNoise::off(), &mut stream_rng(seed, Stream::Detector, 0));
        SensorFrame {
            timestamp: 0.0,
            cloud,
            detections,
        }
    }

    fn config() -> PerceptionConfig {
        let mut c = PerceptionConfig::default();
        c.mono = calibrate_mono(&c.rig, 4.0, 35.0).unwrap();
        c
    }

    fn run(cones: Vec<TrackCone>) -> PipelineOutput {
        three_tier_pipeline(&frame_for(cones, 1), &config(), &mut stream_rng(1, Stream::StereoMatch, 0))
    }

    #[test]
    fn near_cone_uses_lidar() {
        let out = run(vec![TrackCone::new(6.2, 0.5, ConeClass::Blue)]);
        assert_eq!(out.observations.len(), 1);
        assert_eq!(out.observations[0].source_tier, SourceTier::LidarFusion);
        let truth = 6.2 - 1.2;
        assert!((out.observations[0].depth - truth).abs() / truth < 0.02, "{}", out.observations[0].depth);
    }

    #[test]
    fn far_good_cone_uses_mono() {
        let out = run(vec![TrackCone::new(19.2, 0.5, ConeClass::Yellow)]);
        assert_eq!(out.observations[0].source_tier, SourceTier::Monocular);
    }

    #[test]
    fn far_fallen_cone_uses_stereo() {
        let mut cone = TrackCone::new(19.2, 0.5, ConeClass::Yellow);
        cone.fallen = true;
        let out = run(vec![cone]);
        assert_eq!(out.observations[0].source_tier, SourceTier::Stereo);
    }

    #[test]
    fn routing_is_exhaustive_and_sorted() {
        let cones: Vec<TrackCone> = (0..16)
            .map(|i| {
                let mut c = TrackCone::new(4.0 + i as f64 * 2.0, if i % 2 == 0 { 2.0 } else { -2.0 }, ConeClass::Blue);
                c.fallen = i % 5 == 0;
                c
            })
            .collect();
        let frame = frame_for(cones, 3);
        let out = three_tier_pipeline(&frame, &config(), &mut stream_rng(3, Stream::StereoMatch, 0));
        assert!(out.outcomes.iter().all(|o| o.is_some()));
        let observed = out.outcomes.iter().filter(|o| matches!(o, Some(BoxOutcome::Observed(_)))).count();
        assert_eq!(observed, out.observations.len());
        assert!(out.observations.len() <= frame.detections.boxes.len());
    }
}
