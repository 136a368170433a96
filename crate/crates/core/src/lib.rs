//! Block-structured Markov chains: block-form GTH, censoring,
//! RG-factorization, and truncation of M/G/1-type chains by renormalized
//! approximate censoring (RA-CM) or last-block-column augmentation.

// `!(x > 0.0)` is used deliberately so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod augment;
pub mod blocklinalg;
pub mod censor;
pub mod error;
pub mod gth;
pub mod io;
pub mod mg1;
pub mod models;
pub mod oracle;
pub mod rgfact;

#[cfg(test)]
mod test_util;

pub use augment::{Depth, RenormReport, RenormRule};
pub use blocklinalg::{Block, BlockMatrix, LevelBlocks, LevelPhaseIndex, StationaryVector};
pub use error::{Error, Result};
pub use mg1::{BlockSeries, GColumnSeries, Mg1Spec, Mg1Truncation, PmfWeights};
pub use models::MxM1WvParams;
pub use rgfact::RGFactors;
