//! Stereo depth from PnP-propagated boxes and simulated feature matching.
//!
//! Without images there is no descriptor matching. Each candidate feature gets
//! a texture quality `q` (log-uniform); its match lands on the true
//! right-image location plus Gaussian noise of `q * sigma`, and `q` doubles
//! as the match score, so better-scored matches are better localised. With a
//! region-dependent probability the match is instead a random location inside
//! the predicted right box, scored like any other match. A true feature that
//! falls outside the right crop cannot be matched at all; the stand-in is a
//! random location with a score worse than any genuine match.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{ConeObservation, PerceptionError, SourceTier};
use crate::geometry::{project_point, solve_pnp, Pixel, PnpConfig};
use crate::world::{stereo_feature_points, CameraRig, DetectedBox, StereoTruth, STEREO_FEATURE_COUNT};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BoxRegion {
    FullBox,
    SlenderBox,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum KeypointPick {
    Top1,
    Top2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StereoMode {
    pub region: BoxRegion,
    pub pick: KeypointPick,
}

impl Default for StereoMode {
    fn default() -> Self {
        Self {
            region: BoxRegion::SlenderBox,
            pick: KeypointPick::Top1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StereoConfig {
    pub match_sigma_px: f64,
    pub mismatch_full: f64,
    pub mismatch_slender: f64,
    /// Width of the slender band relative to the box width.
    pub slender_fraction: f64,
    pub min_disparity_px: f64,
    /// Depths beyond this are reported as out of range.
    pub max_depth_m: f64,
    /// Range of the log-uniform feature quality that scales the match noise.
    pub quality_min: f64,
    pub quality_max: f64,
    pub pnp: PnpConfig,
}

impl Default for StereoConfig {
    fn default() -> Self {
        Self {
            match_sigma_px: 0.5,
            mismatch_full: 0.10,
            mismatch_slender: 0.02,
            slender_fraction: 0.4,
            min_disparity_px: 0.1,
            max_depth_m: 60.0,
            quality_min: 0.2,
            quality_max: 16.0,
            pnp: PnpConfig::default(),
        }
    }
}

/// Horizontal extent of the matching region of a box.
fn region_span(b: &DetectedBox, region: BoxRegion, fraction: f64) -> (f64, f64) {
    match region {
        BoxRegion::FullBox => (b.left(), b.right()),
        BoxRegion::SlenderBox => (b.u - fraction * b.w / 2.0, b.u + fraction * b.w / 2.0),
    }
}

struct Match {
    score: f64,
    disparity: f64,
    /// Depth of the feature relative to the cone origin, from the PnP pose.
    axis_offset: f64,
}

pub fn stereo_depth(
    left: &DetectedBox,
    truth: &StereoTruth,
    rig: &CameraRig,
    mode: StereoMode,
    config: &StereoConfig,
    rng: &mut ChaCha8Rng,
) -> Result<ConeObservation, PerceptionError> {
    assert!(rig.baseline > 0.0, "stereo baseline must be positive");
    let k = &rig.intrinsics;
    let kps = left.keypoints.ok_or(PerceptionError::MissingKeypoints)?;
    let g = left.class.geometry();
    let pnp = solve_pnp(&g.canonical_keypoints, &kps, k, &config.pnp)?;

    // propagate the cone pose into the right camera to place the right box
    let right_pose = rig.right_from_left().compose(&pnp.pose);
    let mut shift = 0.0;
    for p in &g.canonical_keypoints {
        let l = project_point(&pnp.pose.apply(p), k)?;
        let r = project_point(&right_pose.apply(p), k)?;
        shift += l.u - r.u;
    }
    shift /= g.canonical_keypoints.len() as f64;
    let right_box = DetectedBox {
        u: left.u - shift,
        ..left.clone()
    };

    let fraction = config.slender_fraction;
    let (l_lo, l_hi) = region_span(left, mode.region, fraction);
    let (r_lo, r_hi) = region_span(&right_box, mode.region, fraction);
    let p_mismatch = match mode.region {
        BoxRegion::FullBox => config.mismatch_full,
        BoxRegion::SlenderBox => config.mismatch_slender,
    };
    let noise = Normal::new(0.0, config.match_sigma_px.max(0.0)).expect("valid sigma");
    let (q_lo, q_hi) = (config.quality_min.ln(), config.quality_max.ln());

    let points = stereo_feature_points(&g);
    let mut matches = Vec::with_capacity(STEREO_FEATURE_COUNT);
    for i in 0..STEREO_FEATURE_COUNT {
        let axis_offset = pnp.pose.apply_vector(&points[i]).z;
        let lf: Pixel = truth.left_features[i];
        let in_left = lf.u >= l_lo && lf.u <= l_hi && lf.v >= left.top() && lf.v <= left.bottom();
        // draw for every feature so the stream does not depend on the region
        let mismatch_draw: f64 = rng.gen();
        let quality = (q_lo + (q_hi - q_lo) * rng.gen::<f64>()).exp();
        let err = noise.sample(rng) * quality;
        let random_u = if r_hi > r_lo { rng.gen_range(r_lo..r_hi) } else { r_lo };
        if !in_left {
            continue;
        }
        let genuine_u = truth.right_features[i].u + err;
        let m = if mismatch_draw < p_mismatch {
            Match {
                score: quality,
                disparity: lf.u - random_u,
                axis_offset,
            }
        } else if genuine_u < r_lo || genuine_u > r_hi {
            // the true feature is outside the right crop; the best remaining match is poor
            Match {
                score: config.quality_max * (1.0 + quality),
                disparity: lf.u - random_u,
                axis_offset,
            }
        } else {
            Match {
                score: quality,
                disparity: lf.u - genuine_u,
                axis_offset,
            }
        };
        matches.push(m);
    }
    if matches.is_empty() {
        return Err(PerceptionError::NoFeatures);
    }
    matches.sort_by(|a, b| a.score.total_cmp(&b.score));
    let take = match mode.pick {
        KeypointPick::Top1 => 1,
        KeypointPick::Top2 => 2.min(matches.len()),
    };
    let fb = k.fx * rig.baseline;
    let picked = &matches[..take];
    let d = picked.iter().map(|m| m.disparity).sum::<f64>() / take as f64;
    if picked.iter().any(|m| m.disparity <= config.min_disparity_px) {
        return Err(PerceptionError::ZeroDisparity { disparity: d });
    }
    // refer each feature depth to the cone axis before averaging disparities
    let axis_disparity = picked
        .iter()
        .map(|m| fb / (fb / m.disparity - m.axis_offset))
        .sum::<f64>()
        / take as f64;
    let depth = fb / axis_disparity;
    if depth > config.max_depth_m {
        return Err(PerceptionError::OutOfRange { depth });
    }
    Ok(ConeObservation::from_pixel(
        &Pixel::new(left.u, left.v),
        depth,
        k,
        &rig.vehicle_from_left,
        left.class,
        SourceTier::Stereo,
        left.confidence,
        left.cone_id,
    ))
}

/// Depth from a disparity in pixels.
pub fn depth_from_disparity(fx: f64, baseline: f64, disparity: f64) -> Result<f64, PerceptionError> {
    if disparity <= 0.1 {
        return Err(PerceptionError::ZeroDisparity { disparity });
    }
    Ok(fx * baseline / disparity)
}
