//! Brittleness analysis for engineered systems.
//!
//! A system is brittle when it holds performance inside a stress tolerance and
//! collapses quickly outside it. This crate measures that property three ways:
//!
//! * [`curves`] — area metrics (hardness, ductility, their ratio) and
//!   sensitivity functionals over measured performance-vs-stress curves;
//! * [`propagation`] — an analytic expected-value model of how performance
//!   moves through a component graph under normally distributed stress;
//! * [`simengine`] — a deterministic Monte Carlo engine for the same graphs,
//!   used to check the analytic model and to run sweep experiments;
//! * [`scenarios`] — closed-form and root-finding studies of three concrete
//!   systems (finite M/M/1 queue, slotted ALOHA, stop-and-wait ARQ) plus a
//!   small tolerance-adaptation controller.
//!
//! [`io`] holds the text formats: CSV curve/family/graph files, flat
//! `key=value` experiment files, and the writers for every output table.

pub mod curves;
pub mod io;
mod normal;
pub mod propagation;
pub mod scenarios;
pub mod simengine;

use thiserror::Error;

/// Any error the library can produce, tagged by module of origin.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Curve(#[from] curves::CurveError),
    #[error(transparent)]
    Graph(#[from] propagation::GraphError),
    #[error(transparent)]
    Sim(#[from] simengine::SimError),
    #[error(transparent)]
    Scenario(#[from] scenarios::ScenarioError),
    #[error(transparent)]
    Parse(#[from] io::ParseError),
}

/// Coarse classification used by callers that map errors to exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    /// Malformed input text: bad CSV, bad key=value file, bad range syntax.
    Parse,
    /// Structurally valid input that violates a domain rule (unstable queue,
    /// cyclic graph, probability out of range, ...).
    Domain,
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Parse(_) => ErrorClass::Parse,
            _ => ErrorClass::Domain,
        }
    }
}
