//! Simulator and algorithm library for distributed ribbon and flag coloring.
//!
//! Agents on a line or grid run synchronous message-passing programs (or read
//! a concentration gradient) to split themselves into `k` ordered, balanced
//! color bands.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod concentration;
pub mod counter;
pub mod error;
pub mod experiment;
pub mod flag;
pub mod hybrid;
pub mod ribbon;
pub mod sim;
pub mod topology;
pub mod validate;

pub use error::{Error, Result};
