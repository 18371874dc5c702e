//! Planning and control stack for a small autonomous delivery vehicle.
//!
//! The crate is layered the way the on-vehicle software is: a global route
//! over the road graph ([`routenet`]), maneuver selection ([`behavior`]), a
//! Frenet-frame lattice search for the local path ([`frenet`]), a
//! speed-profile pass producing time-stamped trajectories ([`motion`]) and
//! trajectory-tracking controllers ([`control`]). Shared geometric types
//! live in [`geom`].

pub mod behavior;
pub mod control;
pub mod error;
pub mod frenet;
pub mod geom;
pub mod motion;
pub mod qp;
pub mod routenet;

pub use error::CoreError;
pub use geom::{
    footprint_circles, interpolate, normalize_angle, Circle, ConvexPolygon, Footprint, Obstacle,
    Pose2D, Trajectory, TrajectoryPoint, Vec2, VehicleState,
};
