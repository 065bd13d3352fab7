//! Persuasion-based team formation: signaling schemes that rank agents so
//! that stable matching on posteriors improves expected welfare.

pub mod beliefs;
pub mod canon;
pub mod cli;
pub mod error;
pub mod exec;
pub mod experiments;
pub mod lp;
pub mod model;
pub mod numeric;
pub mod schemes;

pub use error::{Error, Result};
