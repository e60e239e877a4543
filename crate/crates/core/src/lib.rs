//! Metricity analysis of gauge structures given in local coordinates.
//!
//! Module map: [`expr`] parses and differentiates coefficient expressions,
//! [`bundle`] holds connections, metrics and gauge transformations with the
//! Amari dual and gauge action, [`transport`] integrates parallel transport,
//! [`fe_solver`] computes solution spaces of parallel-section systems,
//! [`metricity`] turns them into verdicts and indices, and [`stat_models`]
//! builds α-connections of statistical families.

pub mod bundle;
pub mod corpus;
pub mod error;
pub mod expr;
pub mod fe_solver;
pub mod linalg;
pub mod metricity;
pub mod stat_models;
pub mod tolerances;
pub mod transport;

pub use error::{Error, Result};
