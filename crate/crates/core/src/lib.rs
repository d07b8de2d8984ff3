//! Nonlinear-interference modelling and launch-power allocation for
//! coherent, dispersion-uncompensated WDM links.
//!
//! The crate is organised bottom-up:
//!
//! * [`units`] and [`config`] hold the physical parameter types, unit
//!   conversions and the JSON configuration schema.
//! * [`kernel`] evaluates the multi-span four-wave-mixing link kernel.
//! * [`quadrature`] provides the integration engines.
//! * [`tables`] integrates the self- and cross-channel kernels into the
//!   per-channel lookup tables `D1..D4` and persists them.
//! * [`budget`] turns tables and launch powers into ASE/NLI/SNR budgets.
//! * [`optimizer`] solves the max-min margin and max sum-rate problems.
//! * [`workbench`] glues everything into reproducible reports.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod budget;
pub mod config;
pub mod error;
pub mod kernel;
pub mod optimizer;
pub mod quadrature;
pub mod tables;
pub mod units;
pub mod workbench;

pub use budget::{LinkBudget, PowerAllocation};
pub use config::{
    AmplifierSpec, ChannelGrid, CorrectionMode, FiberParams, ModelMode, ModulationSpec,
    NoiseFigureRule, OuterBand, SystemConfig,
};
pub use error::{Error, Result};
pub use kernel::KernelContext;
pub use optimizer::{BarrierSettings, Objective, Solution};
pub use quadrature::QuadratureSpec;
pub use tables::NliTables;
