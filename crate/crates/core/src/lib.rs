//! Simulator and verification lab for byzantine asynchronous multi-agent
//! systems.
//!
//! Runs are built round by round from protocols and an adversarial
//! environment ([`engine`]), interpreted as a Kripke structure
//! ([`epistemics`]) and used to check the soundness of local fault and
//! occurrence detection ([`hopechain`], [`detection`]). [`sim`] ties it
//! together behind scenario files and traces.

pub mod agent;
pub mod detection;
pub mod engine;
pub mod epistemics;
pub mod error;
pub mod exec;
pub mod hopechain;
pub mod model;
pub mod sim;
mod syntax;

pub use agent::{AgentId, AgentSet};
pub use error::{Error, Result};
pub use exec::Exec;
