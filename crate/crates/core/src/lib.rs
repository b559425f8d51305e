//! Discrete-time leader–follower platoon simulation with event-triggered
//! broadcasting, velocity-gain attacks and topology-switching mitigation.
//!
//! Numeric building blocks are generic over [`linalg::Scalar`] (`f32`/`f64`);
//! the simulation, attack schedules and scenario files use `f64`.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod attack;
pub mod certify;
pub mod error;
pub mod gain;
pub mod graph;
pub mod linalg;
pub mod plant;
pub mod scenario;
pub mod sim;
pub mod trigger;

pub use attack::{AttackBudget, AttackInterval, AttackSchedule};
pub use error::{PlatoonError, Result};
pub use graph::{BuiltinTopology, Topology};
pub use scenario::{Resolved, ScenarioConfig};
pub use sim::{Metrics, Scenario, Trace};

pub type Matrix64 = linalg::Matrix<f64>;
pub type Matrix32 = linalg::Matrix<f32>;
pub type Spectrum64 = graph::Spectrum<f64>;
pub type VehicleState64 = plant::VehicleState<f64>;
pub type PlantModel64 = plant::PlantModel<f64>;
pub type Gain64 = gain::Gain<f64>;
pub type GainDesign64 = gain::GainDesign<f64>;
pub type SConstants64 = trigger::SConstants<f64>;
pub type StaticTriggerParams64 = trigger::StaticTriggerParams<f64>;
pub type DynamicTriggerParams64 = trigger::DynamicTriggerParams<f64>;
pub type TriggerScheme64 = trigger::TriggerScheme<f64>;
