//! Planar floating-base simulator with penalty contacts, the closed-loop
//! relaxation demo and tracking metrics.

mod chain;
mod demo;
mod metrics;
mod scenario;

pub use chain::{
    step, ContactBody, ContactParams, ContactReport, PlanarChain, PlanarLink, SimState, SitePoint, BASE_DOF, GRAVITY,
};
pub use demo::{run_weightless_demo, DemoConfig, DemoReport, DemoResult, Relaxation, TrajectoryRow};
pub use metrics::{compute_metrics, TrackingMetrics};
pub use scenario::{
    seat_scene, sit_scenario, sit_scenario_with, sitter_chain, sitter_pose, synthetic_sit_corpus, SitGeometry, SitSample, SitScenario, HOVER_GAP,
    SITTER_FPS,
};
