//! Resonant wavenumbers of perfectly conducting cavities from the electric
//! field integral equation, discretised with divergence-conforming spline
//! spaces on multipatch NURBS surfaces and solved with Beyn's contour
//! integral method.

// `!(x > 0.0)` style checks deliberately reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analytic;
pub mod beyn;
pub mod cli;
pub mod densela;
pub mod efie;
pub mod error;
pub mod geometry;
pub mod quadrature;
pub mod space;
pub mod splines;

pub use error::{Error, Result};
