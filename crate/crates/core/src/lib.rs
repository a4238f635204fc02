//! Numerical function-space analysis on dyadic grids: Whitney lattices,
//! sequence-space norms, wavelet systems, atoms and local means, traces and
//! wavelet-friendly extensions, weighted Hardy functionals, and the
//! decomposition of reinforced Triebel–Lizorkin spaces on the unit cube.

pub mod atoms;
pub mod boundary;
pub mod corpus;
pub mod daubechies;
pub mod decompose;
pub mod error;
pub mod fwt;
pub mod grid;
pub mod hardy;
pub mod numerics;
pub mod seqspace;
pub mod wavelets;
pub mod whitney;

pub use error::{Error, Result};
pub use grid::{Bbox, DyadicCube, GridFunction, SpaceParams};
pub use seqspace::{CoefficientField, Geometry};
pub use wavelets::{NormMethod, WaveletSystem};
