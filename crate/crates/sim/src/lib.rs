//! Wireless environments: an uplink OFDM scheduler ([`mac`]) and a 2×2 MIMO
//! ARQ link ([`phy`]). Every stochastic call takes an explicit RNG.

pub mod mac;
pub mod phy;
