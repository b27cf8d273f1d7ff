//! Detection and multi-agent validation of anomalies in daily financial
//! time series.
//!
//! The pipeline screens a price series for outliers and missing values,
//! turns the flags plus series metadata into a machine-readable payload,
//! has a question-formulator agent and three expert agents (web research,
//! institutional knowledge, cross-checking) verify them, consolidates the
//! findings, and runs a moderated management discussion. Every exchange is
//! written to an append-only run directory that can be replayed into the
//! same final report.

pub mod audit;
pub mod cli;
pub mod config;
pub mod deliberation;
pub mod detector;
pub mod experts;
pub mod gateway;
pub mod payload;
pub mod pipeline;
pub mod providers;
pub mod runstore;
pub mod series;
