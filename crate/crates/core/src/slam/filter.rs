use std::sync::mpsc::{self, Receiver, Sender, TryRecvError};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use nalgebra::Matrix3;

use super::association::{associate_jcbb, associate_nn, Association};
use super::ekf::{measurement_update, motion_update};
use super::state::SlamState;
use super::{AssociationMethod, SlamConfig};
use crate::geometry::Pose2D;
use crate::perception::ConeObservation;
use crate::world::OdometrySample;

/// Re-applies the motion accumulated since a snapshot on top of the corrected
/// snapshot pose: `corrected ⊕ (snapshot⁻¹ ⊕ current)`.
pub fn parallel_correction(snapshot: &Pose2D, corrected: &Pose2D, current: &Pose2D) -> Pose2D {
    corrected.compose(&snapshot.relative_to(current))
}

#[derive(Debug, Clone)]
pub struct MeasurementResult {
    pub state: SlamState,
    pub snapshot_pose: Pose2D,
    pub association: Association,
    /// JCBB rejected the frame as too large and NN was used instead.
    pub fell_back_to_nn: bool,
    pub elapsed: Duration,
}

/// Associates and fuses one frame into a snapshot.
pub fn run_measurement(mut snapshot: SlamState, frame: &[ConeObservation], config: &SlamConfig) -> MeasurementResult {
    let start = Instant::now();
    let snapshot_pose = snapshot.pose();
    let mut fell_back_to_nn = false;
    let association = match config.association {
        AssociationMethod::Nn => associate_nn(&snapshot, frame, config),
        AssociationMethod::Jcbb => associate_jcbb(&snapshot, frame, config).unwrap_or_else(|e| {
            log::debug!("{e}; using NN");
            fell_back_to_nn = true;
            associate_nn(&snapshot, frame, config)
        }),
    };
    measurement_update(&mut snapshot, frame, &association, config);
    MeasurementResult {
        state: snapshot,
        snapshot_pose,
        association,
        fell_back_to_nn,
        elapsed: start.elapsed(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ExecutionMode {
    /// Measurement computed on submission, applied `latency` seconds later.
    Deterministic { latency: f64 },
    /// Measurement computed on a worker thread, applied when it arrives.
    Threaded,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FilterStats {
    pub motion_updates: usize,
    pub observation_updates: usize,
    pub frames_submitted: usize,
    pub frames_dropped: usize,
    pub frames_applied: usize,
    pub invariant_checks: usize,
    pub invariant_violations: usize,
    /// JCBB frames that exceeded the size limit and were associated by NN.
    pub jcbb_fallbacks: usize,
    /// (landmark count, seconds) per applied frame.
    pub update_timing: Vec<(usize, f64)>,
}

enum InFlight {
    Local { result: Box<MeasurementResult>, due: f64 },
    Remote,
}

struct Worker {
    tx: Option<Sender<(SlamState, Vec<ConeObservation>)>>,
    rx: Receiver<MeasurementResult>,
    handle: Option<JoinHandle<()>>,
}

impl Worker {
    fn spawn(config: SlamConfig) -> Self {
        let (tx, job_rx) = mpsc::channel::<(SlamState, Vec<ConeObservation>)>();
        let (result_tx, rx) = mpsc::channel();
        let handle = std::thread::spawn(move || {
            while let Ok((snapshot, frame)) = job_rx.recv() {
                if result_tx.send(run_measurement(snapshot, &frame, &config)).is_err() {
                    break;
                }
            }
        });
        Self {
            tx: Some(tx),
            rx,
            handle: Some(handle),
        }
    }
}

impl Drop for Worker {
    fn drop(&mut self) {
        self.tx.take();
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

/// Motion side of the filter. Owns the propagated state; at most one
/// measurement is in flight and frames arriving meanwhile are dropped.
pub struct SlamFilter {
    config: SlamConfig,
    q: Matrix3<f64>,
    state: SlamState,
    mode: ExecutionMode,
    in_flight: Option<InFlight>,
    motion_log: Vec<(OdometrySample, f64)>,
    worker: Option<Worker>,
    pub check_invariants: bool,
    pub stats: FilterStats,
}

impl SlamFilter {
    pub fn new(start: Pose2D, config: SlamConfig, mode: ExecutionMode) -> Self {
        let s2 = config.initial_pose_sigma.powi(2);
        let state = SlamState::new(start, Matrix3::from_diagonal_element(s2));
        let worker = matches!(mode, ExecutionMode::Threaded).then(|| Worker::spawn(config.clone()));
        Self {
            q: config.process_noise_matrix(),
            config,
            state,
            mode,
            in_flight: None,
            motion_log: Vec::new(),
            worker,
            check_invariants: false,
            stats: FilterStats::default(),
        }
    }

    pub fn state(&self) -> &SlamState {
        &self.state
    }

    pub fn pose(&self) -> Pose2D {
        self.state.pose()
    }

    pub fn config(&self) -> &SlamConfig {
        &self.config
    }

    pub fn busy(&self) -> bool {
        self.in_flight.is_some()
    }

    fn check(&mut self) {
        if self.check_invariants {
            self.stats.invariant_checks += 1;
            if let Err(e) = self.state.check_invariants() {
                log::error!("{e}");
                self.stats.invariant_violations += 1;
            }
        }
    }

    pub fn predict(&mut self, odom: &OdometrySample, dt: f64) {
        motion_update(&mut self.state, odom, dt, &self.q);
        self.stats.motion_updates += 1;
        if self.in_flight.is_some() {
            self.motion_log.push((*odom, dt));
        }
        self.check();
    }

    /// Hands a frame to the measurement task. Returns false if it was dropped.
    pub fn submit(&mut self, frame: Vec<ConeObservation>, now: f64) -> bool {
        if !self.config.measurement_updates {
            return false;
        }
        self.stats.frames_submitted += 1;
        if self.in_flight.is_some() {
            self.stats.frames_dropped += 1;
            return false;
        }
        let snapshot = self.state.clone();
        self.motion_log.clear();
        match self.mode {
            ExecutionMode::Deterministic { latency } => {
                let result = run_measurement(snapshot, &frame, &self.config);
                self.in_flight = Some(InFlight::Local {
                    result: Box::new(result),
                    due: now + latency,
                });
            }
            ExecutionMode::Threaded => {
                let worker = self.worker.as_ref().expect("threaded mode has a worker");
                if let Some(tx) = &worker.tx {
                    if tx.send((snapshot, frame)).is_err() {
                        self.stats.frames_dropped += 1;
                        return false;
                    }
                }
                self.in_flight = Some(InFlight::Remote);
            }
        }
        true
    }

    /// Applies a finished measurement, if any. Returns it for logging.
    pub fn poll(&mut self, now: f64) -> Option<Association> {
        let result = match self.in_flight.take()? {
            InFlight::Local { result, due } => {
                if now + 1e-9 < due {
                    self.in_flight = Some(InFlight::Local { result, due });
                    return None;
                }
                *result
            }
            InFlight::Remote => {
                let worker = self.worker.as_ref().expect("threaded mode has a worker");
                match worker.rx.try_recv() {
                    Ok(r) => r,
                    Err(TryRecvError::Empty) => {
                        self.in_flight = Some(InFlight::Remote);
                        return None;
                    }
                    Err(TryRecvError::Disconnected) => {
                        log::error!("measurement worker exited");
                        return None;
                    }
                }
            }
        };
        Some(self.apply(result))
    }

    /// Blocks until the in-flight measurement (if any) is applied.
    pub fn flush(&mut self) {
        while self.in_flight.is_some() {
            if self.poll(f64::INFINITY).is_none() {
                std::thread::sleep(Duration::from_micros(50));
            }
        }
    }

    fn apply(&mut self, result: MeasurementResult) -> Association {
        let current_pose = self.state.pose();
        let corrected_pose = result.state.pose();
        let mut next = result.state;
        // covariance follows the same replay; the mean is set by composition
        for (odom, dt) in self.motion_log.drain(..) {
            motion_update(&mut next, &odom, dt, &self.q);
        }
        next.set_pose(parallel_correction(&result.snapshot_pose, &corrected_pose, &current_pose));
        self.stats.frames_applied += 1;
        self.stats.observation_updates += result.association.pair_count();
        self.stats.update_timing.push((next.landmark_count(), result.elapsed.as_secs_f64()));
        self.stats.jcbb_fallbacks += usize::from(result.fell_back_to_nn);
        self.state = next;
        self.check();
        result.association
    }
}
