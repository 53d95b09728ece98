//! Intent-driven constrained routing for LEO constellations.
//!
//! The pipeline: natural-language intents are compiled into a typed
//! [`ir::ConstraintProgram`], checked by the eight-pass [`validator`], grounded
//! into topology masks over a synthesized Walker Delta [`constellation`]
//! snapshot, and routed on the constrained graph by the reference
//! [`router`]. The [`harness`] module provides the benchmark loader, the
//! scoring rubric, the corruption/adversarial audits, and the end-to-end
//! evaluation protocol.

pub mod compiler;
pub mod constellation;
pub mod grounding;
pub mod harness;
pub mod ir;
pub mod router;
pub mod validator;

pub use constellation::{Region, RegionCatalog, SatelliteState, TopologySnapshot, WalkerConfig};
pub use grounding::{ConstrainedGraph, GroundingResult};
pub use ir::{ConstraintProgram, FlowSelector, HardConstraint, SoftConstraint, Target};
pub use validator::{Outcome, ValidationReport, Validator, Witness};
