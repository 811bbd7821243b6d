//! Competitive-ratio, regret-optimal, H2 and H∞ controller synthesis for
//! discrete-time LQR plants.

pub mod freqeval;
pub mod model;
pub mod numerics;
pub mod pipeline;
pub mod scalar;
pub mod sim;
pub mod synthesis;

pub use scalar::Real;

pub use freqeval::{FrequencyMetrics, Grid};
pub use model::{LtiSystem, ModelError, ValidationReport};
pub use pipeline::PipelineError;
pub use sim::{DisturbanceKind, DisturbanceSpec, SimError, SimOptions, SimResult};
pub use synthesis::{
    ControllerRealization, CrPath, Method, SynthesisCertificate, SynthesisError, SynthesisOptions,
};

/// Real matrix in double precision.
pub type Matrix = nalgebra::DMatrix<f64>;
/// Complex matrix in double precision.
pub type ComplexMatrix = nalgebra::DMatrix<nalgebra::Complex<f64>>;
/// Double-precision plant.
pub type System = model::LtiSystem<f64>;
/// Single-precision plant.
pub type SystemF32 = model::LtiSystem<f32>;
/// Double-precision controller.
pub type Controller = synthesis::ControllerRealization<f64>;
/// Double-precision certificate.
pub type Certificate = synthesis::SynthesisCertificate<f64>;
