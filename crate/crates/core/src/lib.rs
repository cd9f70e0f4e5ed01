//! Targeted maximum likelihood estimation of treatment effects transported
//! from a source population (`S = 1`) to a target population (`S = 0`).
//!
//! Two observed-data problems are covered:
//!
//! * a clinical outcome subject to missingness, where the target population
//!   only reveals a coordinate subset `V` of the source covariates `W`
//!   ([`tmle`]);
//! * a discrete-time survival outcome subject to right censoring
//!   ([`survival`]).
//!
//! The less aggressive variant that drops the density-ratio factor, and the
//! split source/target workflow it enables, live in [`federated`].
//! [`dgp`] provides data generators with exactly computable ground truth.
//!
//! The crate is `no_std` and only needs `alloc`. File formats, the study
//! harness and the command line live in the companion `transport-tmle` crate.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod data;
pub mod design;
pub mod dgp;
pub mod eic;
mod error;
pub mod federated;
pub mod glm;
pub mod linalg;
pub mod model;
pub mod nuisance;
pub mod stats;
pub mod survival;
pub mod tmle;

pub use error::{Error, Result};

pub use data::{
    DataSummary, MissingDataset, ObservedRecord, PersonTimeRow, RawTable, Schema, Strata,
    SurvivalDataset, SurvivalRecord,
};
pub use design::{DesignSpec, Link, TimeEncoding};
pub use model::{NuisanceModel, Truncation};
pub use tmle::{EstimateReport, FluctuationResult};
