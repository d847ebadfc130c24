//! Weightless-state toolkit for humanoid whole-body control.
//!
//! The crate covers the full desk-scale pipeline: kinematic trees and
//! forward kinematics, contact geometry, automatic labeling of weightless
//! intervals and joints, motion smoothing, an LSTM relaxation-level
//! network with exact backpropagation through time, PD torque modulation
//! with domain randomization, reward/observation assembly, and a planar
//! articulated simulator used to exercise the relaxation mechanism.

pub mod autolabel;
pub mod cli;
pub mod contact_geometry;
pub mod control;
pub mod error;
pub mod io;
pub mod motion;
pub mod motion_model;
pub mod rewards;
pub mod seed;
pub mod sim;
pub mod smoothing;
pub mod wm;

pub use error::{Error, Result};
