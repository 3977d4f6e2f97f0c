//! Robust multi-domain training on small dense classifiers.
//!
//! The crate trains softmax classifiers (linear, or with small tanh hidden
//! layers) over data that is partitioned into demarcated domains, and
//! compares training policies that differ only in how much weight each
//! domain's gradient receives at every step:
//!
//! * [`optim::Algorithm::Erm`]: fixed uniform domain weights,
//! * [`optim::Algorithm::ErmUw`]: fixed size-dependent weights,
//! * [`optim::Algorithm::GroupDro`]: all weight on the worst
//!   (choice-adjusted) domain,
//! * [`optim::Algorithm::Cgd`]: multiplicative weights driven by
//!   cross-domain gradient alignment,
//! * [`optim::Algorithm::CrossGrad`]: a label/domain classifier pair that
//!   augment each other with input-gradient perturbations.
//!
//! [`csd`] holds the common-specific low-rank decomposition of per-domain
//! classifiers, both the closed-form SVD route and the trained route, and
//! [`synth`] generates every synthetic task used by the benchmark harness.

pub mod crossgrad;
pub mod csd;
pub mod error;
pub mod linalg;
pub mod metrics;
pub mod model;
pub mod optim;
pub mod rng;
pub mod synth;

pub use error::{Error, Result};
