//! Source localization for deterministic cascades observed through noise.
//!
//! A cascade starts at an unknown vertex of a graph and, at time `t`, exactly
//! the ball of radius `t` around the source is affected. Every vertex emits a
//! noisy observation each step. A multiple sequential probability ratio test
//! stops once one candidate beats every candidate farther than `R` away.

pub mod cascade_sim;
pub mod estimator;
pub mod graph;
pub mod harness;
pub mod numeric;
pub mod obs_model;
pub mod theory;

pub use cascade_sim::{CascadeRun, StepObservation};
pub use estimator::{MsprtConfig, MsprtState, StopDecision};
pub use graph::{CandidateSet, Graph, GraphKind, Vertex};
pub use obs_model::{DivergenceReport, ObservationModel};
