//! Perception, SLAM, planning and control for a simulated Formula Student driverless car.

pub mod control;
pub mod geometry;
pub mod perception;
pub mod planning;
pub mod slam;
pub mod world;
