//! Reproduction harness for the piggyback differentiation experiments.
//!
//! [`runner`] executes a scenario over seeded repetitions and produces
//! [`records::ExperimentRecord`] rows; [`aggregate`] reduces them to
//! median/decile summaries; [`records`] pins the CSV byte format and
//! [`svg`] the chart rendering; [`config`] reads `key = value` files.

pub mod aggregate;
pub mod config;
pub mod records;
pub mod runner;
pub mod svg;
