//! Flow jets of polynomial ODE systems and the Kronecker-product identities
//! that tie them to the vector Riccati equation.
//!
//! Everything is generic over [`Real`] (`f32` or `f64`); the `*F64`
//! aliases below name the double-precision instances used by the CLI.

pub mod csym;
pub mod error;
pub mod identities;
pub mod matkron;
pub mod riccati;
pub mod scalar;
pub mod selftest;
pub mod sysmodel;
pub mod varflow;

pub use error::{Error, Result};
pub use identities::{AllwrightReport, Eq8Report, ScalarFormulas};
pub use matkron::Mat;
pub use riccati::{DetectConfig, ExistenceWindow, FlowDetection, FracLin, FracSolution, RoundTripReport};
pub use scalar::Real;
pub use sysmodel::{PolyMat, PolySystem, PolyT, RiccatiCoeffs};
pub use varflow::{DirJet3, IntegratorConfig, Jet3, Trajectory};

pub type MatF64 = Mat<f64>;
pub type PolySystemF64 = PolySystem<f64>;
pub type RiccatiCoeffsF64 = RiccatiCoeffs<f64>;
pub type FracLinF64 = FracLin<f64>;
pub type Jet3F64 = Jet3<f64>;
pub type DirJet3F64 = DirJet3<f64>;
pub type IntegratorConfigF64 = IntegratorConfig<f64>;

pub type MatF32 = Mat<f32>;
pub type PolySystemF32 = PolySystem<f32>;
