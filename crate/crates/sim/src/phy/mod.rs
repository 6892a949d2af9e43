//! 2×2 MIMO link simulator with Alamouti or spatial-multiplexing transmission,
//! BPSK/QPSK constellations and an ARQ latency KPI.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

pub mod channel;
pub mod link;
pub mod ser;

pub use channel::{steering_vector, Channel, Mat2, ANTENNA_SPACING};
pub use link::{send_packet, transmit_arq, transmit_arq_at, ArqConfig};
pub use ser::{log_softmax_from_ser, snr_bin, softmax_from_ser, PhyPolicy, SerTable};

pub const SNR_MIN_DB: f64 = -5.0;
pub const SNR_MAX_DB: f64 = 15.0;
pub const MAX_PATHS: u8 = 10;

#[derive(Debug, Error)]
pub enum PhyError {
    #[error("SNR {0} dB outside [-5, 15]")]
    SnrOutOfRange(f64),
    #[error("path count {0} outside 1..=10")]
    PathsOutOfRange(u8),
    #[error("temperature must be positive and finite, got {0}")]
    Temperature(f64),
    #[error("invalid ARQ config: {0}")]
    Arq(String),
    #[error("invalid SNR distribution: {0}")]
    SnrDistribution(String),
    #[error("unknown transmission app {0:?}")]
    UnknownApp(String),
    #[error("SER table: {0}")]
    SerTable(String),
    #[error("SER table csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("SER table i/o: {0}")]
    Io(#[from] std::io::Error),
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhyContext {
    snr_db: f64,
    paths: u8,
}

impl PhyContext {
    pub fn new(snr_db: f64, paths: u8) -> Result<Self, PhyError> {
        if !(SNR_MIN_DB..=SNR_MAX_DB).contains(&snr_db) {
            return Err(PhyError::SnrOutOfRange(snr_db));
        }
        if !(1..=MAX_PATHS).contains(&paths) {
            return Err(PhyError::PathsOutOfRange(paths));
        }
        Ok(Self { snr_db, paths })
    }

    pub fn snr_db(&self) -> f64 {
        self.snr_db
    }

    pub fn snr_linear(&self) -> f64 {
        db_to_linear(self.snr_db)
    }

    pub fn paths(&self) -> u8 {
        self.paths
    }
}

/// Gaussian SNR in dB truncated to `[-5, 15]` by rejection, paths uniform on `1..=10`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContextDistribution {
    snr: Normal<f64>,
}

impl ContextDistribution {
    pub fn new(mean_db: f64, std_db: f64) -> Result<Self, PhyError> {
        if !(std_db > 0.0 && std_db.is_finite() && mean_db.is_finite()) {
            return Err(PhyError::SnrDistribution(format!("mean {mean_db}, std {std_db}")));
        }
        let snr = Normal::new(mean_db, std_db).map_err(|e| PhyError::SnrDistribution(e.to_string()))?;
        Ok(Self { snr })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> PhyContext {
        let snr_db = loop {
            let s = self.snr.sample(rng);
            if (SNR_MIN_DB..=SNR_MAX_DB).contains(&s) {
                break s;
            }
        };
        PhyContext {
            snr_db,
            paths: rng.random_range(1..=MAX_PATHS),
        }
    }
}

impl Default for ContextDistribution {
    fn default() -> Self {
        Self::new(5.0, 5.0).expect("valid defaults")
    }
}

pub fn sample_context<R: Rng + ?Sized>(rng: &mut R) -> PhyContext {
    ContextDistribution::default().sample(rng)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SpaceTimeCode {
    Alamouti,
    Multiplexing,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Constellation {
    Bpsk,
    Qpsk,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TransmissionApp {
    pub code: SpaceTimeCode,
    pub constellation: Constellation,
}

impl TransmissionApp {
    pub const ALAMOUTI_BPSK: Self = Self::new(SpaceTimeCode::Alamouti, Constellation::Bpsk);
    pub const ALAMOUTI_QPSK: Self = Self::new(SpaceTimeCode::Alamouti, Constellation::Qpsk);
    pub const MULTIPLEXING_BPSK: Self = Self::new(SpaceTimeCode::Multiplexing, Constellation::Bpsk);
    pub const MULTIPLEXING_QPSK: Self = Self::new(SpaceTimeCode::Multiplexing, Constellation::Qpsk);

    pub const ALL: [Self; 4] = [
        Self::ALAMOUTI_BPSK,
        Self::ALAMOUTI_QPSK,
        Self::MULTIPLEXING_BPSK,
        Self::MULTIPLEXING_QPSK,
    ];

    pub const fn new(code: SpaceTimeCode, constellation: Constellation) -> Self {
        Self { code, constellation }
    }

    pub fn index(self) -> usize {
        let c = match self.code {
            SpaceTimeCode::Alamouti => 0,
            SpaceTimeCode::Multiplexing => 2,
        };
        c + match self.constellation {
            Constellation::Bpsk => 0,
            Constellation::Qpsk => 1,
        }
    }

    pub fn code_label(self) -> &'static str {
        match self.code {
            SpaceTimeCode::Alamouti => "alamouti",
            SpaceTimeCode::Multiplexing => "multiplexing",
        }
    }

    pub fn constellation_label(self) -> &'static str {
        match self.constellation {
            Constellation::Bpsk => "bpsk",
            Constellation::Qpsk => "qpsk",
        }
    }

    pub fn label(self) -> String {
        format!("{}-{}", self.code_label(), self.constellation_label())
    }

    pub fn from_parts(code: &str, constellation: &str) -> Result<Self, PhyError> {
        let bad = || PhyError::UnknownApp(format!("{code}-{constellation}"));
        let code = match code.trim().to_ascii_lowercase().as_str() {
            "alamouti" => SpaceTimeCode::Alamouti,
            "multiplexing" | "mux" => SpaceTimeCode::Multiplexing,
            _ => return Err(bad()),
        };
        let constellation = match constellation.trim().to_ascii_lowercase().as_str() {
            "bpsk" => Constellation::Bpsk,
            "qpsk" => Constellation::Qpsk,
            _ => return Err(bad()),
        };
        Ok(Self::new(code, constellation))
    }
}

impl fmt::Display for TransmissionApp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.code_label(), self.constellation_label())
    }
}

impl FromStr for TransmissionApp {
    type Err = PhyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (code, cons) = s
            .split_once(['-', '/', ':'])
            .ok_or_else(|| PhyError::UnknownApp(s.to_string()))?;
        Self::from_parts(code, cons)
    }
}
