//! Learned span-masking policies for intermediate pre-training.
//!
//! A small Bi-LSTM span extractor is trained on (context, answer) pairs and
//! then used to pick one span per corpus chunk to replace with `<mask>`.
//! Random-token, random-span and salient-span heuristics are provided for
//! comparison, together with proxy metrics that score how often each policy
//! lands on answer-bearing spans.
//!
//! The numeric core is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix the 64-bit variant used throughout training.

pub mod baselines;
pub mod corpus;
pub mod corruption;
pub mod evaluation;
pub mod numerics;
pub mod policy;
pub mod scalar;
pub mod seeding;
pub mod span;

pub use scalar::Scalar;
pub use span::Span;

pub type Tensor = numerics::Tensor<f64>;
pub type TensorF32 = numerics::Tensor<f32>;
pub type Graph<'a> = numerics::Graph<'a, f64>;
pub type OptimizerState = numerics::OptimizerState<f64>;
pub type PolicyParams = policy::PolicyParams<f64>;
pub type PolicyParamsF32 = policy::PolicyParams<f32>;
pub type ScoredSpan = policy::ScoredSpan<f64>;
