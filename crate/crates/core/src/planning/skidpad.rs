use nalgebra::Vector2;
use std::f64::consts::TAU;

use super::path::{SpeedProfile, WaypointPath};
use super::PlanningError;
use crate::world::{Trigger, TriggerId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum SkidpadSegment {
    #[default]
    EntryLine,
    RightCircle,
    LeftCircle,
    ExitLine,
}

impl SkidpadSegment {
    pub fn as_str(self) -> &'static str {
        match self {
            SkidpadSegment::EntryLine => "entry",
            SkidpadSegment::RightCircle => "right",
            SkidpadSegment::LeftCircle => "left",
            SkidpadSegment::ExitLine => "exit",
        }
    }
}

/// Which circle is driven first. The layout convention is right-first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FirstCircle {
    #[default]
    Right,
    Left,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SkidpadState {
    pub active: SkidpadSegment,
    pub right_flags: [bool; 2],
    pub left_flags: [bool; 2],
    pub right_count: u8,
    pub left_count: u8,
    pub center_crossings: u32,
    pub first: FirstCircle,
    /// Per trigger (center, right 1, right 2, left 1, left 2): currently inside.
    inside: [bool; 5],
}

impl SkidpadState {
    pub fn new(first: FirstCircle) -> Self {
        Self {
            first,
            ..Self::default()
        }
    }
}

fn slot(id: TriggerId) -> usize {
    match id {
        TriggerId::Center => 0,
        TriggerId::Right1 => 1,
        TriggerId::Right2 => 2,
        TriggerId::Left1 => 3,
        TriggerId::Left2 => 4,
    }
}

/// Paths for the three parts of the figure eight.
#[derive(Debug, Clone, PartialEq)]
pub struct SkidpadPaths {
    pub entry: WaypointPath,
    pub right: WaypointPath,
    pub left: WaypointPath,
    pub exit: WaypointPath,
}

impl SkidpadPaths {
    /// Builds the paths from the trigger layout: circle centres sit midway
    /// between each circle's two triggers.
    pub fn from_layout(triggers: &[Trigger], entry_start: Vector2<f64>, exit_length: f64, profile: &SpeedProfile) -> Result<Self, PlanningError> {
        let find = |id: TriggerId| {
            triggers
                .iter()
                .find(|t| t.id == id)
                .map(|t| Vector2::new(t.center[0], t.center[1]))
                .ok_or_else(|| PlanningError::DegenerateInput(format!("skidpad layout lacks trigger {id:?}")))
        };
        let c = find(TriggerId::Center)?;
        let right_c = (find(TriggerId::Right1)? + find(TriggerId::Right2)?) / 2.0;
        let left_c = (find(TriggerId::Left1)? + find(TriggerId::Left2)?) / 2.0;
        let spacing = 0.5;

        let line = |from: Vector2<f64>, to: Vector2<f64>| {
            let n = ((to - from).norm() / spacing).ceil().max(1.0) as usize;
            (0..=n).map(|i| from + (to - from) * (i as f64 / n as f64)).collect::<Vec<_>>()
        };
        let dir = (c - entry_start).normalize();
        // the circle paths start at the centre trigger heading along `dir`
        let circle = |centre: Vector2<f64>, clockwise: bool| {
            let r = (c - centre).norm();
            let a0 = (c - centre).y.atan2((c - centre).x);
            let n = (TAU * r / spacing).ceil() as usize;
            let sign = if clockwise { -1.0 } else { 1.0 };
            let pts = (0..n)
                .map(|i| {
                    let a = a0 + sign * TAU * i as f64 / n as f64;
                    centre + Vector2::new(a.cos(), a.sin()) * r
                })
                .collect();
            WaypointPath::new(pts, true, profile)
        };
        let right_is_cw = {
            let rel = c - right_c;
            rel.x * dir.y - rel.y * dir.x < 0.0
        };
        Ok(Self {
            entry: WaypointPath::new(line(entry_start, c + dir * 5.0), false, profile),
            right: circle(right_c, right_is_cw),
            left: circle(left_c, !right_is_cw),
            exit: WaypointPath::new(line(c, c + dir * exit_length), false, profile),
        })
    }

    pub fn segment(&self, seg: SkidpadSegment) -> &WaypointPath {
        match seg {
            SkidpadSegment::EntryLine => &self.entry,
            SkidpadSegment::RightCircle => &self.right,
            SkidpadSegment::LeftCircle => &self.left,
            SkidpadSegment::ExitLine => &self.exit,
        }
    }
}

/// Advances the trigger state machine for one vehicle position. A trigger
/// fires on entry; staying inside or re-entering a set flag changes nothing.
pub fn skidpad_step(mut state: SkidpadState, position: Vector2<f64>, triggers: &[Trigger]) -> SkidpadState {
    for trig in triggers {
        let k = slot(trig.id);
        let now_inside = trig.contains(position);
        let entered = now_inside && !state.inside[k];
        state.inside[k] = now_inside;
        if !entered {
            continue;
        }
        match trig.id {
            TriggerId::Center => {
                state.center_crossings += 1;
                let (first_count, second_count, first, second) = match state.first {
                    FirstCircle::Right => (state.right_count, state.left_count, SkidpadSegment::RightCircle, SkidpadSegment::LeftCircle),
                    FirstCircle::Left => (state.left_count, state.right_count, SkidpadSegment::LeftCircle, SkidpadSegment::RightCircle),
                };
                state.active = if first_count < 2 {
                    first
                } else if second_count < 2 {
                    second
                } else {
                    SkidpadSegment::ExitLine
                };
            }
            TriggerId::Right1 | TriggerId::Right2 if state.active == SkidpadSegment::RightCircle => {
                state.right_flags[k - 1] = true;
                if state.right_flags == [true, true] {
                    state.right_count = (state.right_count + 1).min(2);
                    state.right_flags = [false, false];
                }
            }
            TriggerId::Left1 | TriggerId::Left2 if state.active == SkidpadSegment::LeftCircle => {
                state.left_flags[k - 3] = true;
                if state.left_flags == [true, true] {
                    state.left_count = (state.left_count + 1).min(2);
                    state.left_flags = [false, false];
                }
            }
            _ => {}
        }
    }
    state
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::{generate_track, Mission, TrackSpec, SKIDPAD_RADIUS};

    fn layout() -> Vec<Trigger> {
        generate_track(&TrackSpec::new(Mission::Skidpad, 1)).unwrap().skidpad_triggers.unwrap()
    }

    fn visit(state: SkidpadState, p: (f64, f64), triggers: &[Trigger]) -> SkidpadState {
        let s = skidpad_step(state, Vector2::new(p.0, p.1), triggers);
        // leave every trigger again
        skidpad_step(s, Vector2::new(100.0, 100.0), triggers)
    }

    #[test]
    fn first_center_crossing_enters_right() {
        let t = layout();
        let s = visit(SkidpadState::default(), (0.0, 0.0), &t);
        assert_eq!(s.active, SkidpadSegment::RightCircle);
        assert_eq!(s.center_crossings, 1);
    }

    #[test]
    fn right_count_two_switches_left() {
        let t = layout();
        let s = SkidpadState {
            active: SkidpadSegment::RightCircle,
            right_count: 2,
            ..SkidpadState::default()
        };
        assert_eq!(visit(s, (0.0, 0.0), &t).active, SkidpadSegment::LeftCircle);
    }

    #[test]
    fn re_entering_set_flag_is_idempotent() {
        let t = layout();
        let r = SKIDPAD_RADIUS;
        let mut s = visit(SkidpadState::default(), (0.0, 0.0), &t);
        s = visit(s, (r, -r), &t);
        let once = s.clone();
        s = visit(s, (r, -r), &t);
        assert_eq!(s, once);
        assert_eq!(s.right_flags, [true, false]);
        assert_eq!(s.right_count, 0);
    }

    #[test]
    fn full_protocol_takes_five_center_crossings() {
        let t = layout();
        let r = SKIDPAD_RADIUS;
        let mut s = SkidpadState::default();
        let mut trace = vec![s.active];
        s = visit(s, (0.0, 0.0), &t);
        trace.push(s.active);
        for _ in 0..2 {
            s = visit(s, (r, -r), &t);
            s = visit(s, (-r, -r), &t);
            s = visit(s, (0.0, 0.0), &t);
            trace.push(s.active);
        }
        for _ in 0..2 {
            s = visit(s, (r, r), &t);
            s = visit(s, (-r, r), &t);
            s = visit(s, (0.0, 0.0), &t);
            trace.push(s.active);
        }
        use SkidpadSegment::*;
        assert_eq!(trace, vec![EntryLine, RightCircle, RightCircle, LeftCircle, LeftCircle, ExitLine]);
        assert_eq!(s.center_crossings, 5);
    }

    #[test]
    fn paths_follow_layout() {
        let t = layout();
        let paths = SkidpadPaths::from_layout(&t, Vector2::new(-15.0, 0.0), 20.0, &SpeedProfile::default()).unwrap();
        let r = SKIDPAD_RADIUS;
        assert!(paths.right.points.iter().all(|p| ((p - Vector2::new(0.0, -r)).norm() - r).abs() < 1e-9));
        // right circle driven clockwise: curvature negative
        assert!(paths.right.curvature.iter().all(|&k| k < 0.0));
        assert!(paths.left.curvature.iter().all(|&k| k > 0.0));
        assert_eq!(paths.entry.points[0], Vector2::new(-15.0, 0.0));
    }
}
