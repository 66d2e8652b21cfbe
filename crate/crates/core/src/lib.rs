//! Link-level MIMO-OFDM simulation with a reservoir-computing time-domain
//! equalizer followed by a constellation-structure classifier, plus LMMSE and
//! nearest-neighbour baselines, rank/link adaptation and a BER sweep harness.

pub mod adaptation;
pub mod baselines;
pub mod channel;
pub mod error;
pub mod harness;
pub mod numerics;
pub mod ofdm;
pub mod qam;
pub mod random;
pub mod reservoir;
pub mod structure;

pub use error::{Error, Result};
