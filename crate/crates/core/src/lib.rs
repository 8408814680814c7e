//! Mapping space signatures of gridded maps `[0,1]^d → R^n`.
//!
//! A [`GridMap`] is reduced to its [`JacobianField`] of per-cell minors, and the
//! engine sums products of minors over products of permuted simplices. The
//! [`oracles`] module holds independent reference computations used to check
//! the engine.

pub mod engine;
pub mod error;
pub mod fixtures;
pub mod index;
pub mod map;
pub mod oracles;
pub mod tensor;
pub mod verify;

pub use engine::{
    extract_moment, identity_signature, moment_functional, monomial, parametrized_signature,
    signature, GridRule, MomentPlan, Quadrature,
};
pub use error::{Error, Result};
pub use index::{
    HyperoctahedralElement, LevelIndex, OrderedInjection, Permutation, PermutationTuple,
};
pub use map::{jacobian_field, GridMap, JacobianField, SubdomainSpec};
pub use tensor::{Functional, GradedTensor, NormalizationConfig};
pub use verify::{Hooks, Report, VerifyConfig};
