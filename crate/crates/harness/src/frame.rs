//! Time-synchronized pairing of LiDAR sweeps and camera detections.

#[derive(Debug, Clone, PartialEq)]
pub struct Stamped<T> {
    pub t: f64,
    pub data: T,
}

/// Pending sensor messages, oldest first.
#[derive(Debug, Clone, PartialEq)]
pub struct SensorBuffers<L, C> {
    pub lidar: Vec<Stamped<L>>,
    pub camera: Vec<Stamped<C>>,
}

impl<L, C> Default for SensorBuffers<L, C> {
    fn default() -> Self {
        Self {
            lidar: Vec::new(),
            camera: Vec::new(),
        }
    }
}

impl<L, C> SensorBuffers<L, C> {
    pub fn push_lidar(&mut self, t: f64, data: L) {
        self.lidar.push(Stamped { t, data });
    }

    pub fn push_camera(&mut self, t: f64, data: C) {
        self.camera.push(Stamped { t, data });
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Assembled<L, C> {
    Frame { lidar: Stamped<L>, camera: Stamped<C> },
    Skip,
}

/// Pairs the newest sweep with the newest detection set when their stamps are
/// within `sync_window`. A pairing consumes both buffers; older messages are
/// discarded either way, so only the newest of each can ever be used.
pub fn assemble_frame<L, C>(buffers: &mut SensorBuffers<L, C>, sync_window: f64) -> Assembled<L, C> {
    let keep_newest = |n: usize| n.saturating_sub(1);
    let nl = keep_newest(buffers.lidar.len());
    buffers.lidar.drain(..nl);
    let nc = keep_newest(buffers.camera.len());
    buffers.camera.drain(..nc);
    match (buffers.lidar.last(), buffers.camera.last()) {
        (Some(l), Some(c)) if (l.t - c.t).abs() <= sync_window + 1e-12 => {
            let lidar = buffers.lidar.pop().expect("checked");
            let camera = buffers.camera.pop().expect("checked");
            Assembled::Frame { lidar, camera }
        }
        _ => Assembled::Skip,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn within_window_pairs() {
        let mut b = SensorBuffers::default();
        b.push_lidar(1.000, "sweep");
        b.push_camera(1.005, "boxes");
        assert_eq!(
            assemble_frame(&mut b, 0.02),
            Assembled::Frame {
                lidar: Stamped { t: 1.0, data: "sweep" },
                camera: Stamped { t: 1.005, data: "boxes" }
            }
        );
        assert!(b.lidar.is_empty() && b.camera.is_empty());
    }

    #[test]
    fn outside_window_skips() {
        let mut b = SensorBuffers::default();
        b.push_lidar(1.0, 0);
        b.push_camera(1.04, 0);
        assert_eq!(assemble_frame(&mut b, 0.02), Assembled::Skip);
        // a fresh sweep can still pair with the waiting camera frame
        b.push_lidar(1.05, 1);
        assert!(matches!(assemble_frame(&mut b, 0.02), Assembled::Frame { .. }));
    }

    #[test]
    fn newest_camera_wins() {
        let mut b = SensorBuffers::default();
        b.push_camera(0.98, 'a');
        b.push_camera(0.99, 'b');
        b.push_camera(1.0, 'c');
        b.push_lidar(1.0, ());
        match assemble_frame(&mut b, 0.02) {
            Assembled::Frame { camera, .. } => assert_eq!(camera.data, 'c'),
            Assembled::Skip => panic!("expected a frame"),
        }
        assert!(b.camera.is_empty());
    }

    #[test]
    fn missing_sensor_skips() {
        let mut b: SensorBuffers<(), ()> = SensorBuffers::default();
        b.push_lidar(0.0, ());
        assert_eq!(assemble_frame(&mut b, 0.02), Assembled::Skip);
        assert_eq!(b.lidar.len(), 1);
    }
}
