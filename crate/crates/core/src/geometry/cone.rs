use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

pub const CONE_KEYPOINT_COUNT: usize = 7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ConeClass {
    #[serde(rename = "blue")]
    Blue,
    #[serde(rename = "yellow")]
    Yellow,
    #[serde(rename = "orange_small")]
    SmallOrange,
    #[serde(rename = "orange_big")]
    BigOrange,
}

impl ConeClass {
    pub const ALL: [ConeClass; 4] = [
        ConeClass::Blue,
        ConeClass::Yellow,
        ConeClass::SmallOrange,
        ConeClass::BigOrange,
    ];

    pub fn index(self) -> usize {
        match self {
            ConeClass::Blue => 0,
            ConeClass::Yellow => 1,
            ConeClass::SmallOrange => 2,
            ConeClass::BigOrange => 3,
        }
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ConeClass::Blue => "blue",
            ConeClass::Yellow => "yellow",
            ConeClass::SmallOrange => "orange_small",
            ConeClass::BigOrange => "orange_big",
        }
    }

    pub fn is_orange(self) -> bool {
        matches!(self, ConeClass::SmallOrange | ConeClass::BigOrange)
    }

    pub fn geometry(self) -> ConeGeometry {
        ConeGeometry::for_class(self)
    }
}

const SMALL_HEIGHT: f64 = 0.325;
const SMALL_BASE_WIDTH: f64 = 0.228;
const SMALL_TOP_WIDTH: f64 = 0.05;
const BIG_HEIGHT: f64 = 0.505;
const BIG_BASE_WIDTH: f64 = 0.285;
const BIG_TOP_WIDTH: f64 = 0.06;

/// Physical model of a cone as a right circular frustum.
///
/// The cone-local frame has its origin at the centre of the base, `y` along
/// the axis (up) and `x` lateral; the keypoints lie in the `z = 0` plane,
/// which is the silhouette plane facing the viewer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConeGeometry {
    pub class: ConeClass,
    pub height: f64,
    pub base_width: f64,
    pub top_width: f64,
    pub canonical_keypoints: [Vector3<f64>; CONE_KEYPOINT_COUNT],
}

impl ConeGeometry {
    pub fn for_class(class: ConeClass) -> Self {
        let (height, base_width, top_width) = match class {
            ConeClass::BigOrange => (BIG_HEIGHT, BIG_BASE_WIDTH, BIG_TOP_WIDTH),
            _ => (SMALL_HEIGHT, SMALL_BASE_WIDTH, SMALL_TOP_WIDTH),
        };
        let mut g = Self {
            class,
            height,
            base_width,
            top_width,
            canonical_keypoints: [Vector3::zeros(); CONE_KEYPOINT_COUNT],
        };
        // apex, then left/right pairs at 60 %, 30 % and 0 % of the height
        let mut kps = [Vector3::zeros(); CONE_KEYPOINT_COUNT];
        kps[0] = Vector3::new(0.0, height, 0.0);
        for (pair, frac) in [0.6, 0.3, 0.0].into_iter().enumerate() {
            let h = frac * height;
            let r = g.radius_at(h);
            kps[1 + 2 * pair] = Vector3::new(-r, h, 0.0);
            kps[2 + 2 * pair] = Vector3::new(r, h, 0.0);
        }
        g.canonical_keypoints = kps;
        g
    }

    pub fn base_radius(&self) -> f64 {
        self.base_width / 2.0
    }

    pub fn top_radius(&self) -> f64 {
        self.top_width / 2.0
    }

    /// Frustum radius at height `h` above the base, zero outside `[0, height]`.
    pub fn radius_at(&self, h: f64) -> f64 {
        if !(0.0..=self.height).contains(&h) {
            return 0.0;
        }
        self.base_radius() - (self.base_radius() - self.top_radius()) * h / self.height
    }

    /// Textured points on the cone axis used as stereo features, cone-local frame.
    pub fn axis_features(&self) -> [Vector3<f64>; 4] {
        [0.15, 0.35, 0.55, 0.75].map(|f| Vector3::new(0.0, f * self.height, 0.0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seven_keypoints_inside_bounding_cylinder() {
        for class in ConeClass::ALL {
            let g = class.geometry();
            assert_eq!(g.canonical_keypoints.len(), 7);
            for kp in &g.canonical_keypoints {
                assert!(kp.x.hypot(kp.z) <= g.base_radius() + 1e-12);
                assert!(kp.y >= 0.0 && kp.y <= g.height);
            }
        }
    }

    #[test]
    fn small_classes_share_height_big_is_taller() {
        let h = ConeClass::Blue.geometry().height;
        assert_eq!(ConeClass::Yellow.geometry().height, h);
        assert_eq!(ConeClass::SmallOrange.geometry().height, h);
        assert!(ConeClass::BigOrange.geometry().height > h);
    }

    #[test]
    fn class_names_round_trip() {
        for class in ConeClass::ALL {
            let s = serde_json::to_string(&class).unwrap();
            assert_eq!(s, format!("\"{}\"", class.as_str()));
            assert_eq!(serde_json::from_str::<ConeClass>(&s).unwrap(), class);
            assert_eq!(ConeClass::from_index(class.index()), Some(class));
        }
    }
}
