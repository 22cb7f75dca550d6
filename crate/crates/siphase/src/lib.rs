//! Phase retrieval of real-valued signals in shift-invariant spaces.
//!
//! A signal `f(t) = sum_k c(k) phi(t - k)` over a compactly supported
//! continuous generator `phi` is observed only through noisy squared
//! magnitudes `z(y) = |f(y)|^2 + noise` on a periodic sampling set. This
//! crate recovers the coefficients up to one global sign, certifies when
//! that is possible, and measures how robustly it happens:
//!
//! - [`generator`]: B-splines and tabulated generators, the node matrix,
//!   full-spark certification and its conditioning constant;
//! - [`signal`]: coefficient windows, separability, stability constants;
//! - [`sampling`]: sampling schemes, the periodic sample set, sampling
//!   rates, seeded noisy samples;
//! - [`meps`]: the four-stage block reconstruction (minimization,
//!   extension, phase adjustment, sewing);
//! - [`closed_form`]: the independent closed-form recovery for the hat
//!   generator;
//! - [`harness`]: random signals, error metrics, Monte-Carlo success-rate
//!   grids and error-scaling fits.
//!
//! All numeric code is generic over the scalar type through
//! [`scalar::Scalar`]; the aliases below pin the common instantiations.

pub mod closed_form;
pub mod error;
pub mod generator;
pub mod harness;
pub mod linalg;
pub mod meps;
pub mod sampling;
pub mod scalar;
pub mod signal;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Generator64 = generator::Generator<f64>;
pub type PhiMatrix64 = generator::PhiMatrix<f64>;
pub type Signal64 = signal::SisSignal<f64>;
pub type Scheme64 = sampling::SamplingScheme<f64>;
pub type Samples64 = sampling::NoisySamples<f64>;
pub type Reconstruction64 = meps::Reconstruction<f64>;

pub type Generator32 = generator::Generator<f32>;
pub type PhiMatrix32 = generator::PhiMatrix<f32>;
pub type Signal32 = signal::SisSignal<f32>;
pub type Scheme32 = sampling::SamplingScheme<f32>;
