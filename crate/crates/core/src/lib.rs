//! Wu's modified log-Sobolev inequality for Poisson laws, computed.
//!
//! For a positive `f` on the nonnegative integers and a horizon `T`, let
//! `μ = f π_T` where `π_T` is the Poisson(T) law. Wu's inequality says
//!
//! ```text
//! Ent_{π_T}(f) ≤ T E_{π_T}[φ(f(X+1)/f(X)) f(X)],   φ(x) = x ln x − x + 1,
//! ```
//!
//! with equality exactly for `f(k) = e^{ak+b}`. This crate evaluates both
//! sides and the deficit to tight tolerances, checks the stability bound for
//! ultra-log-concave `f`, certifies the stochastic-calculus representation by
//! quadrature, and simulates the Föllmer process whose time-`T` law is `μ`.
//!
//! ```
//! use poisson_mlsi::{functionals, DensityFunction, ProblemSpec};
//!
//! let spec = ProblemSpec::normalized(1.0, DensityFunction::gaussian_like(0.7, 1.0)?)?;
//! let report = functionals::deficit_report(&spec, None)?;
//! assert!(report.wu_holds() && report.is_ulc && report.stability_holds());
//! # Ok::<(), poisson_mlsi::Error>(())
//! ```

pub mod density;
pub mod error;
pub mod follmer;
pub mod functionals;
pub mod poisson;
pub mod quadrature;
pub mod semigroup;
pub mod suites;

pub use density::{DensityFunction, Family, TableExtension};
pub use error::{Error, Result};
pub use poisson::{Intensity, SeriesTolerance};
pub use semigroup::{ProblemSpec, SpecOptions};
