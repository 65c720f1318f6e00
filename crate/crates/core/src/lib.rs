//! Two-party secure gradient boosted trees over vertically partitioned data.
//!
//! Party A holds some feature columns and the label, party B holds the other
//! columns, and a dealer supplies input-independent correlated randomness.
//! Every intermediate quantity of training and prediction is additively
//! secret-shared over `Z_{2^l}`; the only values revealed are the chosen split
//! indices and the final predictions.

pub mod binning;
pub mod codec;
pub mod dealer;
pub mod he;
pub mod oracle;
pub mod permutation;
pub mod predict;
pub mod protocols;
pub mod ring;
pub mod session;
pub mod sumgrad;
pub mod synth;
pub mod train;
pub mod transport;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error(transparent)]
    Ring(#[from] ring::RingError),
    #[error(transparent)]
    Transport(#[from] transport::TransportError),
    #[error(transparent)]
    Decode(#[from] codec::DecodeError),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
