//! The hap algebra, histories and designated atoms.

mod atom;
mod hap;
mod history;

pub use atom::{eval_atom, DesignatedAtom};
pub(crate) use atom::{holds, parse_atom_body, ATOM_HEADS};
pub use hap::{make_gmi, GlobalAction, GlobalHap, Gmi, Hap, MessageId, Name, StateId};
pub(crate) use hap::parse_local;
pub use history::{update_agent, update_env, EnvHistory, GlobalRound, GlobalState, LocalHistory, LocalRound, Run};
