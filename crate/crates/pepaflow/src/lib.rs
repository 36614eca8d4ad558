//! Stochastic process-algebra performance evaluation for mobile-core
//! control planes.
//!
//! The crate parses a small compositional modelling language (components
//! performing timed actions and cooperating on shared action sets),
//! compiles models to a population-level transition system, and solves
//! them three interchangeable ways:
//!
//! * exact steady state of the underlying continuous-time Markov chain
//!   ([`analysis::ctmc`]),
//! * mean-field fluid ODEs for large populations ([`analysis::fluid`]),
//! * exact-jump stochastic simulation ([`analysis::ssa`]).
//!
//! On top of the engines, [`metrics`] computes procedure rates, processor
//! utilization, Little's-law response times, productivity and
//! scalability; [`netmodels`] ships the built-in service-driven 6G
//! control-plane models and their 3GPP 5GS counterparts; and
//! [`experiment`] runs UE-population sweeps (data-parallel with the
//! default `parallel` feature, sequential without).

pub mod analysis;
pub mod ast;
pub mod experiment;
pub mod metrics;
pub mod netmodels;
pub mod parser;
pub mod rng;
pub mod semantics;

pub use analysis::{AnalysisSolution, Method};
pub use ast::{validate_model, Bindings, ConcreteModel, Model, ValidationReport};
pub use parser::{parse_model, serialize_model, ParseError, SourceModel};
pub use semantics::{compile, CompiledSystem, PopulationState, TransitionClass};
