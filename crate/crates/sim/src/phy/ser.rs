use std::io;
use std::path::Path;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::channel::Channel;
use super::link::{draw_block_noise, send_block};
use super::{db_to_linear, PhyContext, PhyError, TransmissionApp, MAX_PATHS, SNR_MIN_DB};

pub const SER_FLOOR: f64 = 1e-6;
pub const DEFAULT_SER_SEED: u64 = 0x5E12_7AB1;
pub const DEFAULT_N_MC: usize = 10_000;
pub const SNR_BINS: usize = 20;

/// Index of the 1 dB bin holding `snr_db`; the top edge belongs to the last bin.
pub fn snr_bin(snr_db: f64) -> usize {
    let idx = (snr_db - SNR_MIN_DB).floor();
    if idx.is_nan() || idx < 0.0 {
        0
    } else {
        (idx as usize).min(SNR_BINS - 1)
    }
}

pub fn bin_low_db(bin: usize) -> f64 {
    SNR_MIN_DB + bin as f64
}

fn bin_centre_db(bin: usize) -> f64 {
    bin_low_db(bin) + 0.5
}

/// Monte-Carlo symbol-error-rate estimates over `(app, SNR bin, paths)`.
///
/// Each `(app, paths)` row reuses the same channels, symbols and noise at
/// every SNR bin, so a row is monotone in SNR by construction.
#[derive(Debug, Clone, PartialEq)]
pub struct SerTable {
    n_mc: usize,
    seed: u64,
    values: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct SerRow {
    app: String,
    snr_bin_low_db: f64,
    m: u8,
    ser: f64,
    n_mc: usize,
    seed: u64,
}

impl SerTable {
    fn index(app: TransmissionApp, bin: usize, paths: u8) -> usize {
        (app.index() * SNR_BINS + bin) * MAX_PATHS as usize + usize::from(paths) - 1
    }

    /// Estimates every cell from `n_mc` symbols (`n_mc / 2` two-symbol blocks).
    pub fn build(n_mc: usize, seed: u64) -> Result<Self, PhyError> {
        if n_mc < 2 {
            return Err(PhyError::SerTable("n_mc must be at least 2".into()));
        }
        let mut values = vec![0.0; TransmissionApp::ALL.len() * SNR_BINS * MAX_PATHS as usize];
        let blocks = n_mc / 2;
        let symbols = (blocks * 2) as f64;
        for app in TransmissionApp::ALL {
            for paths in 1..=MAX_PATHS {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream((app.index() as u64) << 8 | u64::from(paths));
                let mut errors = [0usize; SNR_BINS];
                let order = app.constellation.order() as u8;
                for _ in 0..blocks {
                    let unit = Channel::draw(1.0, paths, &mut rng);
                    let sent = [rng.random_range(0..order), rng.random_range(0..order)];
                    let noise = draw_block_noise(1.0, &mut rng);
                    for (bin, err) in errors.iter_mut().enumerate() {
                        let ch = unit.scaled(db_to_linear(bin_centre_db(bin)).sqrt());
                        *err += match send_block(app.code, app.constellation, &ch, sent, &noise) {
                            Some(d) => usize::from(d[0] != sent[0]) + usize::from(d[1] != sent[1]),
                            None => 2,
                        };
                    }
                }
                for (bin, err) in errors.iter().enumerate() {
                    values[Self::index(app, bin, paths)] = (*err as f64 / symbols).clamp(SER_FLOOR, 1.0 - SER_FLOOR);
                }
            }
        }
        Ok(Self { n_mc, seed, values })
    }

    pub fn n_mc(&self) -> usize {
        self.n_mc
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn get(&self, app: TransmissionApp, bin: usize, paths: u8) -> f64 {
        self.values[Self::index(app, bin, paths)]
    }

    pub fn lookup(&self, app: TransmissionApp, ctx: &PhyContext) -> f64 {
        self.get(app, snr_bin(ctx.snr_db()), ctx.paths())
    }

    pub fn write_csv<W: io::Write>(&self, out: W) -> Result<(), PhyError> {
        let mut w = csv::Writer::from_writer(out);
        for app in TransmissionApp::ALL {
            for bin in 0..SNR_BINS {
                for m in 1..=MAX_PATHS {
                    w.serialize(SerRow {
                        app: app.label(),
                        snr_bin_low_db: bin_low_db(bin),
                        m,
                        ser: self.get(app, bin, m),
                        n_mc: self.n_mc,
                        seed: self.seed,
                    })?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: io::Read>(input: R) -> Result<Self, PhyError> {
        let mut rdr = csv::Reader::from_reader(input);
        let mut values = vec![f64::NAN; TransmissionApp::ALL.len() * SNR_BINS * MAX_PATHS as usize];
        let mut meta: Option<(usize, u64)> = None;
        for row in rdr.deserialize() {
            let row: SerRow = row?;
            let app: TransmissionApp = row.app.parse()?;
            let bin_f = row.snr_bin_low_db - SNR_MIN_DB;
            if bin_f.fract() != 0.0 || !(0.0..SNR_BINS as f64).contains(&bin_f) {
                return Err(PhyError::SerTable(format!("bad SNR bin {}", row.snr_bin_low_db)));
            }
            if !(1..=MAX_PATHS).contains(&row.m) {
                return Err(PhyError::SerTable(format!("bad path count {}", row.m)));
            }
            if !(row.ser > 0.0 && row.ser < 1.0) {
                return Err(PhyError::SerTable(format!("SER {} outside (0, 1)", row.ser)));
            }
            match meta {
                None => meta = Some((row.n_mc, row.seed)),
                Some(m) if m != (row.n_mc, row.seed) => {
                    return Err(PhyError::SerTable("rows disagree on n_mc/seed".into()))
                }
                _ => {}
            }
            values[Self::index(app, bin_f as usize, row.m)] = row.ser;
        }
        if values.iter().any(|v| v.is_nan()) {
            return Err(PhyError::SerTable("table is missing cells".into()));
        }
        let (n_mc, seed) = meta.ok_or_else(|| PhyError::SerTable("empty table".into()))?;
        Ok(Self { n_mc, seed, values })
    }

    pub fn save(&self, path: &Path) -> Result<(), PhyError> {
        self.write_csv(std::fs::File::create(path)?)
    }

    pub fn load(path: &Path) -> Result<Self, PhyError> {
        Self::read_csv(std::fs::File::open(path)?)
    }
}

/// Log-softmax of `1 / (ε T)` across the given SER estimates.
pub fn log_softmax_from_ser(sers: &[f64], temperature: f64) -> Vec<f64> {
    let logits: Vec<f64> = sers.iter().map(|e| 1.0 / (e * temperature)).collect();
    let top = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = top + logits.iter().map(|l| (l - top).exp()).sum::<f64>().ln();
    logits.iter().map(|l| l - lse).collect()
}

pub fn softmax_from_ser(sers: &[f64], temperature: f64) -> Vec<f64> {
    let logits: Vec<f64> = sers.iter().map(|e| 1.0 / (e * temperature)).collect();
    let top = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|l| (l - top).exp()).collect();
    let total: f64 = e.iter().sum();
    e.into_iter().map(|v| v / total).collect()
}

/// Softmax app selection over the four transmission apps.
#[derive(Debug, Clone)]
pub struct PhyPolicy {
    temperature: f64,
    table: Arc<SerTable>,
}

impl PhyPolicy {
    pub fn new(temperature: f64, table: Arc<SerTable>) -> Result<Self, PhyError> {
        if !(temperature > 0.0 && temperature.is_finite()) {
            return Err(PhyError::Temperature(temperature));
        }
        Ok(Self { temperature, table })
    }

    pub fn temperature(&self) -> f64 {
        self.temperature
    }

    pub fn table(&self) -> &SerTable {
        &self.table
    }

    pub fn log_probabilities(&self, ctx: &PhyContext) -> [f64; 4] {
        let sers = TransmissionApp::ALL.map(|a| self.table.lookup(a, ctx));
        let lp = log_softmax_from_ser(&sers, self.temperature);
        [lp[0], lp[1], lp[2], lp[3]]
    }

    pub fn probabilities(&self, ctx: &PhyContext) -> [f64; 4] {
        let sers = TransmissionApp::ALL.map(|a| self.table.lookup(a, ctx));
        let p = softmax_from_ser(&sers, self.temperature);
        [p[0], p[1], p[2], p[3]]
    }

    pub fn log_probability(&self, app: TransmissionApp, ctx: &PhyContext) -> f64 {
        self.log_probabilities(ctx)[app.index()]
    }

    /// `ln w_{from→to}(x) = ln p(to|x) − ln p(from|x)`.
    pub fn log_weight(&self, from: TransmissionApp, to: TransmissionApp, ctx: &PhyContext) -> f64 {
        if from == to {
            return 0.0;
        }
        let lp = self.log_probabilities(ctx);
        lp[to.index()] - lp[from.index()]
    }

    pub fn select_app<R: Rng + ?Sized>(&self, ctx: &PhyContext, rng: &mut R) -> TransmissionApp {
        let p = self.probabilities(ctx);
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for app in TransmissionApp::ALL {
            acc += p[app.index()];
            if u < acc {
                return app;
            }
        }
        // Rounding can leave the cumulative sum a hair below 1.
        *TransmissionApp::ALL
            .iter()
            .rev()
            .find(|a| p[a.index()] > 0.0)
            .expect("softmax has a positive entry")
    }

    /// Largest `p(app | x)` over all grid cells; `p(app | x)` is constant
    /// within a cell, so this bounds it everywhere.
    pub fn max_probability(&self, app: TransmissionApp) -> f64 {
        let mut best: f64 = 0.0;
        for bin in 0..SNR_BINS {
            for m in 1..=MAX_PATHS {
                let ctx = PhyContext::new(bin_centre_db(bin), m).expect("grid cell");
                best = best.max(self.probabilities(&ctx)[app.index()]);
            }
        }
        best
    }
}
