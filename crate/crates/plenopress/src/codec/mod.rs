//! The learned codec's numerical core: tensors, layers, the global
//! attention module, the hyperprior-context network, quantization, rate
//! models, and gradient verification.

pub mod attention;
pub mod blocks;
pub mod gradcheck;
pub mod layers;
pub mod network;
pub mod quant;
pub mod rate;
pub mod tensor;

pub use attention::GlobalAttention;
pub use gradcheck::{grad_check, GradCheckResult, GradTarget};
pub use network::{FactorizedPrior, GaussianParams, ModelParams, LAMBDA_TABLE, SIGMA_MIN};
pub use quant::{quantize, QuantizeMode};
pub use rate::{rate_estimate, rate_estimate_factorized, rd_loss, LossConfig};
pub use tensor::FeatureTensor;
