//! Low-complexity channel reconstruction for massive 3D-MIMO downlink
//! precoding.
//!
//! The pipeline is: [`channel`] draws per-user, per-subcarrier `M × Nt`
//! channels over a dual-polarized planar array; [`reconstruct`] turns each
//! precoding unit into an `S × Nt` effective channel (full-array eigen
//! beamforming or one of three Kronecker-factored variants); [`precode`]
//! stacks the effective channels into a zero-forcing precoder and scores the
//! link with an MMSE-IRC receiver; [`flops`] prices each reconstruction
//! method; [`experiment`] ties them into seeded, reproducible sweeps.

// `!(x > 0.0)` guards are meant to reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod channel;
pub mod config;
pub mod error;
pub mod experiment;
pub mod flops;
pub mod linalg;
pub mod precode;
pub mod reconstruct;
pub mod tensor_io;

pub use error::{Error, Result};
pub use linalg::{ComplexMatrix, EigPair, C64};
