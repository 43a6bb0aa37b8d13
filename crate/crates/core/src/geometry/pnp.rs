//! Perspective-n-Point for (near-)planar targets such as the cone silhouette.
//!
//! The pose is initialised from a DLT homography between the best-fit plane
//! of the object points and the undistorted image points, then refined with
//! damped Gauss-Newton (Levenberg-Marquardt) on the pixel reprojection error.
//! A step is accepted only if it lowers the error, so the RMS reported for
//! successive accepted iterates is non-increasing.

use nalgebra::{DMatrix, DVector, Matrix3, SMatrix, SVector, Vector3};

use super::{project_point, CameraIntrinsics, GeometryError, Pixel, RigidTransform3D};

const MIN_CORRESPONDENCES: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PnpConfig {
    pub max_iterations: usize,
    /// RMS above which an exhausted iteration budget is reported as failure.
    pub rms_threshold_px: f64,
    pub initial_damping: f64,
}

impl Default for PnpConfig {
    fn default() -> Self {
        Self {
            max_iterations: 50,
            rms_threshold_px: 2.0,
            initial_damping: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PnpSolution {
    /// Maps object-frame points into the camera frame.
    pub pose: RigidTransform3D,
    pub rms_px: f64,
    pub iterations: usize,
    /// RMS after initialisation and after every accepted step.
    pub rms_trace: Vec<f64>,
}

impl PnpSolution {
    /// Object origin expressed in the camera frame.
    pub fn translation(&self) -> Vector3<f64> {
        *self.pose.translation()
    }
}

pub fn solve_pnp(
    object_points: &[Vector3<f64>],
    image_points: &[Pixel],
    k: &CameraIntrinsics,
    config: &PnpConfig,
) -> Result<PnpSolution, GeometryError> {
    let n = object_points.len();
    if n != image_points.len() {
        return Err(GeometryError::DegenerateConfiguration(format!(
            "{} object points but {} image points",
            n,
            image_points.len()
        )));
    }
    if n < MIN_CORRESPONDENCES {
        return Err(GeometryError::DegenerateConfiguration(format!(
            "need at least {MIN_CORRESPONDENCES} correspondences, got {n}"
        )));
    }

    let init = homography_init(object_points, image_points, k)?;
    refine(init, object_points, image_points, k, config)
}

fn homography_init(
    object_points: &[Vector3<f64>],
    image_points: &[Pixel],
    k: &CameraIntrinsics,
) -> Result<RigidTransform3D, GeometryError> {
    let n = object_points.len() as f64;
    let centroid = object_points.iter().sum::<Vector3<f64>>() / n;
    let scatter: Matrix3<f64> = object_points
        .iter()
        .map(|p| {
            let d = p - centroid;
            d * d.transpose()
        })
        .sum();
    let eig = scatter.symmetric_eigen();
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let s1 = eig.eigenvalues[order[0]].max(0.0).sqrt();
    let s2 = eig.eigenvalues[order[1]].max(0.0).sqrt();
    if s1 <= f64::EPSILON || s2 <= 1e-9 * s1 {
        return Err(GeometryError::DegenerateConfiguration(
            "object points are collinear".into(),
        ));
    }
    let e1: Vector3<f64> = eig.eigenvectors.column(order[0]).into_owned();
    let e2: Vector3<f64> = eig.eigenvectors.column(order[1]).into_owned();
    let e3 = e1.cross(&e2).normalize();
    let e2 = e3.cross(&e1);
    let basis = Matrix3::from_columns(&[e1, e2, e3]);

    let plane: Vec<(f64, f64)> = object_points
        .iter()
        .map(|p| {
            let d = p - centroid;
            (d.dot(&e1), d.dot(&e2))
        })
        .collect();
    let image: Vec<(f64, f64)> = image_points.iter().map(|px| k.normalize(px)).collect();

    let (tp, _) = similarity_normalizer(&plane);
    let (ti, ti_inv) = similarity_normalizer(&image);
    let mut ata = SMatrix::<f64, 9, 9>::zeros();
    for (&(a, b), &(x, y)) in plane.iter().zip(&image) {
        let p = tp * Vector3::new(a, b, 1.0);
        let q = ti * Vector3::new(x, y, 1.0);
        let r1 = SVector::<f64, 9>::from_column_slice(&[
            -p.x, -p.y, -1.0, 0.0, 0.0, 0.0, q.x * p.x, q.x * p.y, q.x,
        ]);
        let r2 = SVector::<f64, 9>::from_column_slice(&[
            0.0, 0.0, 0.0, -p.x, -p.y, -1.0, q.y * p.x, q.y * p.y, q.y,
        ]);
        ata += r1 * r1.transpose() + r2 * r2.transpose();
    }
    let eig = ata.symmetric_eigen();
    let (min_idx, _) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("9 eigenvalues");
    let h = eig.eigenvectors.column(min_idx);
    let hn = Matrix3::new(h[0], h[1], h[2], h[3], h[4], h[5], h[6], h[7], h[8]);
    let hmat = ti_inv * hn * tp;

    let h1 = hmat.column(0).into_owned();
    let h2 = hmat.column(1).into_owned();
    let h3 = hmat.column(2).into_owned();
    let norm = (h1.norm() + h2.norm()) / 2.0;
    if norm <= f64::EPSILON {
        return Err(GeometryError::DegenerateConfiguration("singular homography".into()));
    }
    let mut lambda = 1.0 / norm;
    if h3.z * lambda < 0.0 {
        lambda = -lambda;
    }
    let r1 = h1 * lambda;
    let r2 = h2 * lambda;
    let r3 = r1.cross(&r2);
    let approx = Matrix3::from_columns(&[r1, r2, r3]);
    let svd = approx.svd(true, true);
    let (u, v_t) = (svd.u.expect("U"), svd.v_t.expect("V"));
    let mut rp = u * v_t;
    if rp.determinant() < 0.0 {
        let mut u2 = u;
        u2.column_mut(2).neg_mut();
        rp = u2 * v_t;
    }
    let tp_vec = h3 * lambda;
    let rotation = rp * basis.transpose();
    let translation = tp_vec - rotation * centroid;
    Ok(RigidTransform3D::from_rotation_unchecked(rotation, translation))
}

/// Hartley normalisation: centroid to origin, mean distance √2.
fn similarity_normalizer(pts: &[(f64, f64)]) -> (Matrix3<f64>, Matrix3<f64>) {
    let n = pts.len() as f64;
    let (mx, my) = pts
        .iter()
        .fold((0.0, 0.0), |acc, p| (acc.0 + p.0 / n, acc.1 + p.1 / n));
    let mean_dist = pts
        .iter()
        .map(|p| (p.0 - mx).hypot(p.1 - my))
        .sum::<f64>()
        / n;
    let s = if mean_dist > f64::EPSILON {
        std::f64::consts::SQRT_2 / mean_dist
    } else {
        1.0
    };
    let t = Matrix3::new(s, 0.0, -s * mx, 0.0, s, -s * my, 0.0, 0.0, 1.0);
    let t_inv = Matrix3::new(1.0 / s, 0.0, mx, 0.0, 1.0 / s, my, 0.0, 0.0, 1.0);
    (t, t_inv)
}

fn residuals(
    pose: &RigidTransform3D,
    object_points: &[Vector3<f64>],
    image_points: &[Pixel],
    k: &CameraIntrinsics,
) -> Option<DVector<f64>> {
    let mut r = DVector::zeros(2 * object_points.len());
    for (i, (p, obs)) in object_points.iter().zip(image_points).enumerate() {
        let px = project_point(&pose.apply(p), k).ok()?;
        r[2 * i] = px.u - obs.u;
        r[2 * i + 1] = px.v - obs.v;
    }
    Some(r)
}

fn perturb(pose: &RigidTransform3D, delta: &SVector<f64, 6>) -> RigidTransform3D {
    let omega = Vector3::new(delta[0], delta[1], delta[2]);
    let dt = Vector3::new(delta[3], delta[4], delta[5]);
    let step = RigidTransform3D::from_axis_angle(omega, Vector3::zeros());
    RigidTransform3D::from_rotation_unchecked(
        step.rotation() * pose.rotation(),
        pose.translation() + dt,
    )
}

fn refine(
    init: RigidTransform3D,
    object_points: &[Vector3<f64>],
    image_points: &[Pixel],
    k: &CameraIntrinsics,
    config: &PnpConfig,
) -> Result<PnpSolution, GeometryError> {
    let n = object_points.len() as f64;
    let mut pose = init;
    let mut r = residuals(&pose, object_points, image_points, k).ok_or_else(|| {
        GeometryError::DegenerateConfiguration("initial pose places points behind the camera".into())
    })?;
    let mut cost = r.norm_squared();
    let mut rms_trace = vec![(cost / n).sqrt()];
    let mut damping = config.initial_damping;
    let mut iterations = 0;
    let mut converged = false;

    while iterations < config.max_iterations {
        iterations += 1;
        let jac = numeric_jacobian(&pose, object_points, image_points, k, &r);
        let jtj = jac.transpose() * &jac;
        let jtr = jac.transpose() * &r;
        if iterations == 1 {
            let eig = jtj.clone().symmetric_eigen();
            let max = eig.eigenvalues.max();
            let min = eig.eigenvalues.min();
            if !(max > 0.0) || min <= 1e-14 * max {
                return Err(GeometryError::DegenerateConfiguration(
                    "singular normal equations".into(),
                ));
            }
        }
        if jtr.amax() <= 1e-14 * (1.0 + cost) {
            converged = true;
            break;
        }
        let mut accepted = false;
        for _ in 0..10 {
            let mut a = jtj.clone();
            for d in 0..6 {
                a[(d, d)] += damping * jtj[(d, d)].max(1e-12);
            }
            let Some(chol) = a.cholesky() else {
                damping *= 10.0;
                continue;
            };
            let delta_dyn = chol.solve(&(-&jtr));
            let delta = SVector::<f64, 6>::from_iterator(delta_dyn.iter().copied());
            let candidate = perturb(&pose, &delta);
            match residuals(&candidate, object_points, image_points, k) {
                Some(rc) if rc.norm_squared() < cost => {
                    let new_cost = rc.norm_squared();
                    let rel = (cost - new_cost) / cost.max(f64::MIN_POSITIVE);
                    pose = candidate;
                    r = rc;
                    cost = new_cost;
                    rms_trace.push((cost / n).sqrt());
                    damping = (damping / 10.0).max(1e-12);
                    accepted = true;
                    if rel < 1e-12 || delta.norm() < 1e-13 {
                        converged = true;
                    }
                    break;
                }
                _ => damping *= 10.0,
            }
        }
        if !accepted || converged {
            converged = true;
            break;
        }
    }

    let rms_px = (cost / n).sqrt();
    if !converged && rms_px > config.rms_threshold_px {
        return Err(GeometryError::NoConvergence { rms_px, iterations });
    }
    Ok(PnpSolution {
        pose,
        rms_px,
        iterations,
        rms_trace,
    })
}

fn numeric_jacobian(
    pose: &RigidTransform3D,
    object_points: &[Vector3<f64>],
    image_points: &[Pixel],
    k: &CameraIntrinsics,
    r0: &DVector<f64>,
) -> DMatrix<f64> {
    let mut jac = DMatrix::zeros(r0.len(), 6);
    for d in 0..6 {
        let h = if d < 3 { 1e-7 } else { 1e-7 * (1.0 + pose.translation().norm()) };
        let mut delta = SVector::<f64, 6>::zeros();
        delta[d] = h;
        let plus = residuals(&perturb(pose, &delta), object_points, image_points, k);
        delta[d] = -h;
        let minus = residuals(&perturb(pose, &delta), object_points, image_points, k);
        if let (Some(p), Some(m)) = (plus, minus) {
            jac.set_column(d, &((p - m) / (2.0 * h)));
        }
    }
    jac
}
