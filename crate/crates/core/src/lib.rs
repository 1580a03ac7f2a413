//! Geometry, volumes, covering numbers and generic chaining on constant
//! negative curvature model spaces.

// `!(x > 0.0)` checks reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bounds;
pub mod chaining;
pub mod cloud;
pub mod convex;
pub mod covering;
pub mod error;
pub mod experiment;
pub mod hyperbolic;
pub mod quadrature;
pub mod rng;
pub mod volume;

pub use error::{Error, Result};
pub use hyperbolic::{minkowski_form, BallSampler, HPoint, HTangent, ModelSpace, NormalChart};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/geometry.md")]
    mod geometry {}
    #[doc = include_str!("../../../book/src/convex.md")]
    mod convex {}
    #[doc = include_str!("../../../book/src/volumes.md")]
    mod volumes {}
    #[doc = include_str!("../../../book/src/covering.md")]
    mod covering {}
    #[doc = include_str!("../../../book/src/chaining.md")]
    mod chaining {}
    #[doc = include_str!("../../../book/src/constants.md")]
    mod constants {}
    #[doc = include_str!("../../../book/src/experiments.md")]
    mod experiments {}
}
