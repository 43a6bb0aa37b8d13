use nalgebra::{Matrix2, Vector2};

use super::path::{SpeedProfile, WaypointPath};
use super::PlanningError;
use crate::geometry::{ConeClass, Pose2D};

/// Total-least-squares line through `pts`: centroid and unit direction.
fn fit_line(pts: &[Vector2<f64>]) -> (Vector2<f64>, Vector2<f64>) {
    let c = pts.iter().sum::<Vector2<f64>>() / pts.len() as f64;
    let mut m = Matrix2::zeros();
    for p in pts {
        let d = p - c;
        m += d * d.transpose();
    }
    let eig = m.symmetric_eigen();
    let k = if eig.eigenvalues[0] >= eig.eigenvalues[1] { 0 } else { 1 };
    let v = eig.eigenvectors.column(k).into_owned();
    (c, v.normalize())
}

/// Straight path along the bisector of the two cone rows. Blue and yellow
/// cones give the left and right rows; orange cones are split by which side
/// of the start pose they lie on.
pub fn plan_acceleration(cones: &[(f64, f64, ConeClass)], start: &Pose2D, length: f64, profile: &SpeedProfile) -> Result<WaypointPath, PlanningError> {
    let mut left = Vec::new();
    let mut right = Vec::new();
    for &(x, y, class) in cones {
        let p = Vector2::new(x, y);
        let is_left = match class {
            ConeClass::Blue => true,
            ConeClass::Yellow => false,
            _ => start.inverse_transform_point(p).y > 0.0,
        };
        if is_left {
            left.push(p);
        } else {
            right.push(p);
        }
    }
    if left.len() < 2 || right.len() < 2 {
        return Err(PlanningError::DegenerateInput(format!(
            "{} left and {} right cones, need 2 per side",
            left.len(),
            right.len()
        )));
    }
    let heading = Vector2::new(start.heading.cos(), start.heading.sin());
    let orient = |d: Vector2<f64>| if d.dot(&heading) < 0.0 { -d } else { d };
    let (cl, dl) = fit_line(&left);
    let (cr, dr) = fit_line(&right);
    let dir = (orient(dl) + orient(dr)).normalize();
    let centre = (cl + cr) / 2.0;
    // start from the projection of the start pose onto the bisector
    let origin = centre + dir * (start.position() - centre).dot(&dir);
    let n = (length / 0.5).ceil() as usize;
    let pts = (0..=n).map(|i| origin + dir * (i as f64 * length / n as f64)).collect();
    Ok(WaypointPath::new(pts, false, profile))
}
