use nalgebra::{DMatrix, DVector, Matrix2, MatrixXx2, Vector2};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use super::ekf::{innovation, measurement_model, PredictedMeasurement};
use super::state::SlamState;
use super::{SlamConfig, SlamError};
use crate::geometry::ConeClass;
use crate::perception::ConeObservation;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pairing {
    Landmark(usize),
    NewLandmark,
    /// Compatible with some landmark but left out of the jointly compatible
    /// hypothesis. Neither fused nor mapped.
    Rejected,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Association {
    pub pairings: Vec<Pairing>,
    /// Joint Mahalanobis distance (squared) of the paired subset.
    pub joint_distance: f64,
}

impl Association {
    pub fn empty() -> Self {
        Self {
            pairings: Vec::new(),
            joint_distance: 0.0,
        }
    }

    pub fn pair_count(&self) -> usize {
        self.pairings.iter().filter(|p| matches!(p, Pairing::Landmark(_))).count()
    }

    /// True when no landmark index appears twice.
    pub fn is_injective(&self) -> bool {
        let mut seen = std::collections::HashSet::new();
        self.pairings.iter().all(|p| match p {
            Pairing::Landmark(j) => seen.insert(*j),
            _ => true,
        })
    }
}

pub fn classes_compatible(a: ConeClass, b: ConeClass) -> bool {
    a == b || (a.is_orange() && b.is_orange())
}

/// Ground-frame position of an observation from the current pose mean.
pub fn observation_position(state: &SlamState, obs: &ConeObservation) -> Vector2<f64> {
    let pose = state.pose();
    let a = pose.heading + obs.bearing;
    Vector2::new(pose.x + obs.range * a.cos(), pose.y + obs.range * a.sin())
}

/// Greedy Euclidean nearest neighbour in observation order. Claimed landmarks
/// are skipped; anything outside `config.nn_gate` becomes a new landmark.
pub fn associate_nn(state: &SlamState, observations: &[ConeObservation], config: &SlamConfig) -> Association {
    let mut claimed = vec![false; state.landmark_count()];
    let pairings = observations
        .iter()
        .map(|obs| {
            let p = observation_position(state, obs);
            let mut best: Option<(usize, f64)> = None;
            for j in 0..state.landmark_count() {
                if claimed[j] || !classes_compatible(obs.class, state.landmark_class(j)) {
                    continue;
                }
                let d = (state.landmark(j) - p).norm();
                if d <= config.nn_gate && best.map_or(true, |(_, bd)| d < bd) {
                    best = Some((j, d));
                }
            }
            match best {
                Some((j, _)) => {
                    claimed[j] = true;
                    Pairing::Landmark(j)
                }
                None => Pairing::NewLandmark,
            }
        })
        .collect();
    Association {
        pairings,
        joint_distance: 0.0,
    }
}

/// χ² quantiles for even degrees of freedom `2, 4, ..., 2·max_pairs`.
struct ChiSquareTable {
    by_pairs: Vec<f64>,
}

impl ChiSquareTable {
    fn new(confidence: f64, max_pairs: usize) -> Self {
        let mut by_pairs = vec![0.0];
        for k in 1..=max_pairs.max(1) {
            let dist = ChiSquared::new(2.0 * k as f64).expect("positive dof");
            by_pairs.push(dist.inverse_cdf(confidence));
        }
        Self { by_pairs }
    }

    fn threshold(&self, pairs: usize) -> f64 {
        self.by_pairs[pairs]
    }
}

struct Candidate {
    landmark: usize,
    predicted: PredictedMeasurement,
    nu: Vector2<f64>,
    /// `P·Hᵀ`, n x 2.
    pht: MatrixXx2<f64>,
}

/// Individually compatible candidates per observation, nearest first.
struct Problem {
    r: Vec<Matrix2<f64>>,
    candidates: Vec<Vec<Candidate>>,
    chi2: ChiSquareTable,
}

impl Problem {
    fn new(state: &SlamState, observations: &[ConeObservation], config: &SlamConfig) -> Self {
        let chi2 = ChiSquareTable::new(config.jcbb_confidence, observations.len());
        let gate = chi2.threshold(1);
        let mut r = Vec::with_capacity(observations.len());
        let mut candidates = Vec::with_capacity(observations.len());
        for obs in observations {
            let ri = config.measurement.covariance(obs.range);
            let mut list = Vec::new();
            for j in 0..state.landmark_count() {
                if !classes_compatible(obs.class, state.landmark_class(j)) {
                    continue;
                }
                let predicted = measurement_model(state, j);
                let nu = innovation(obs, &predicted);
                let li = 3 + 2 * j;
                let mut pht = state.covariance.columns(0, 3) * predicted.h_pose.transpose();
                pht += state.covariance.columns(li, 2) * predicted.h_landmark.transpose();
                let hph = predicted.h_pose * pht.rows(0, 3) + predicted.h_landmark * pht.rows(li, 2);
                let s = Matrix2::new(hph[(0, 0)], hph[(0, 1)], hph[(1, 0)], hph[(1, 1)]) + ri;
                let Some(s_inv) = s.try_inverse() else { continue };
                let d2 = (nu.transpose() * s_inv * nu)[0];
                if d2 <= gate {
                    list.push((d2, Candidate { landmark: j, predicted, nu, pht }));
                }
            }
            list.sort_by(|a, b| a.0.total_cmp(&b.0));
            candidates.push(list.into_iter().map(|(_, c)| c).collect());
            r.push(ri);
        }
        Self {
            r,
            candidates,
            chi2,
        }
    }

    /// Joint squared Mahalanobis distance of `(observation, candidate)` pairs.
    fn joint_distance(&self, hyp: &[(usize, usize)]) -> Option<f64> {
        let k = hyp.len();
        if k == 0 {
            return Some(0.0);
        }
        let mut nu = DVector::zeros(2 * k);
        let mut s = DMatrix::zeros(2 * k, 2 * k);
        for (a, &(ia, ca)) in hyp.iter().enumerate() {
            let cand_a = &self.candidates[ia][ca];
            nu.fixed_rows_mut::<2>(2 * a).copy_from(&cand_a.nu);
            let la = 3 + 2 * cand_a.landmark;
            for (b, &(ib, cb)) in hyp.iter().enumerate().skip(a) {
                let cand_b = &self.candidates[ib][cb];
                // H_a · (P·H_bᵀ) restricted to H_a's non-zero columns
                let block = cand_a.predicted.h_pose * cand_b.pht.rows(0, 3) + cand_a.predicted.h_landmark * cand_b.pht.rows(la, 2);
                let mut block = Matrix2::new(block[(0, 0)], block[(0, 1)], block[(1, 0)], block[(1, 1)]);
                if a == b {
                    block += self.r[ia];
                }
                s.fixed_view_mut::<2, 2>(2 * a, 2 * b).copy_from(&block);
                s.fixed_view_mut::<2, 2>(2 * b, 2 * a).copy_from(&block.transpose());
            }
        }
        let chol = s.cholesky()?;
        let y = chol.solve(&nu);
        Some(nu.dot(&y))
    }

    fn compatible(&self, hyp: &[(usize, usize)]) -> Option<f64> {
        let d = self.joint_distance(hyp)?;
        (d <= self.chi2.threshold(hyp.len())).then_some(d)
    }

    fn into_association(&self, best: &[(usize, usize)], distance: f64) -> Association {
        let mut pairings: Vec<Pairing> = self
            .candidates
            .iter()
            .map(|c| if c.is_empty() { Pairing::NewLandmark } else { Pairing::Rejected })
            .collect();
        for &(i, c) in best {
            pairings[i] = Pairing::Landmark(self.candidates[i][c].landmark);
        }
        Association {
            pairings,
            joint_distance: distance,
        }
    }
}

struct Search<'p> {
    problem: &'p Problem,
    used: Vec<bool>,
    hyp: Vec<(usize, usize)>,
    best: Vec<(usize, usize)>,
    best_distance: f64,
}

impl Search<'_> {
    fn better(&self, d: f64) -> bool {
        self.hyp.len() > self.best.len() || (self.hyp.len() == self.best.len() && d < self.best_distance)
    }

    fn recurse(&mut self, i: usize) {
        let m = self.problem.candidates.len();
        if i == m {
            if let Some(d) = self.problem.compatible(&self.hyp) {
                if self.better(d) {
                    self.best = self.hyp.clone();
                    self.best_distance = d;
                }
            }
            return;
        }
        let remaining = m - i;
        if self.hyp.len() + remaining < self.best.len() {
            return;
        }
        for c in 0..self.problem.candidates[i].len() {
            let j = self.problem.candidates[i][c].landmark;
            if self.used[j] {
                continue;
            }
            self.hyp.push((i, c));
            // any completion has at least this distance and at most
            // len + remaining - 1 pairs
            let reachable = self
                .problem
                .joint_distance(&self.hyp)
                .is_some_and(|d| d <= self.problem.chi2.threshold(self.hyp.len() + remaining - 1));
            if reachable {
                self.used[j] = true;
                self.recurse(i + 1);
                self.used[j] = false;
            }
            self.hyp.pop();
        }
        self.recurse(i + 1);
    }
}

/// Joint compatibility branch and bound: the hypothesis with the most pairs
/// whose stacked innovation passes the χ² test at `config.jcbb_confidence`,
/// ties to the smaller joint distance. Observations with no individually
/// compatible landmark become new landmarks.
pub fn associate_jcbb(state: &SlamState, observations: &[ConeObservation], config: &SlamConfig) -> Result<Association, SlamError> {
    if observations.len() > config.max_jcbb_observations {
        return Err(SlamError::FrameTooLarge {
            observations: observations.len(),
            limit: config.max_jcbb_observations,
        });
    }
    let problem = Problem::new(state, observations, config);
    let landmarks = state.landmark_count();
    let mut search = Search {
        problem: &problem,
        used: vec![false; landmarks],
        hyp: Vec::new(),
        best: Vec::new(),
        best_distance: 0.0,
    };
    search.recurse(0);
    Ok(problem.into_association(&search.best, search.best_distance))
}

/// Exhaustive enumeration of every injective partial assignment over
/// individually compatible pairs. Exponential; meant for small scenes.
pub fn associate_exhaustive(state: &SlamState, observations: &[ConeObservation], config: &SlamConfig) -> Association {
    let problem = Problem::new(state, observations, config);
    let m = observations.len();
    let mut best: Vec<(usize, usize)> = Vec::new();
    let mut best_distance = 0.0;
    let mut hyp = Vec::new();
    let mut used = vec![false; state.landmark_count()];

    fn walk(
        p: &Problem,
        i: usize,
        m: usize,
        hyp: &mut Vec<(usize, usize)>,
        used: &mut Vec<bool>,
        best: &mut Vec<(usize, usize)>,
        best_distance: &mut f64,
    ) {
        if i == m {
            if let Some(d) = p.compatible(hyp) {
                if hyp.len() > best.len() || (hyp.len() == best.len() && d < *best_distance) {
                    *best = hyp.clone();
                    *best_distance = d;
                }
            }
            return;
        }
        for c in 0..p.candidates[i].len() {
            let j = p.candidates[i][c].landmark;
            if used[j] {
                continue;
            }
            used[j] = true;
            hyp.push((i, c));
            walk(p, i + 1, m, hyp, used, best, best_distance);
            hyp.pop();
            used[j] = false;
        }
        walk(p, i + 1, m, hyp, used, best, best_distance);
    }

    walk(&problem, 0, m, &mut hyp, &mut used, &mut best, &mut best_distance);
    problem.into_association(&best, best_distance)
}
