use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::channel::Channel;
use super::{Constellation, PhyContext, PhyError, SpaceTimeCode, TransmissionApp};

const HALF: f64 = std::f64::consts::FRAC_1_SQRT_2;

pub const DEFAULT_MAX_ATTEMPTS: u32 = 10;
pub const DEFAULT_SYMBOLS_PER_PACKET: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArqConfig {
    max_attempts: u32,
    symbols_per_packet: usize,
    noise_std: f64,
}

impl ArqConfig {
    /// `noise_std` is the per-complex-sample noise standard deviation; 1 is unit-power noise.
    pub fn new(max_attempts: u32, symbols_per_packet: usize, noise_std: f64) -> Result<Self, PhyError> {
        if max_attempts == 0 {
            return Err(PhyError::Arq("max_attempts must be positive".into()));
        }
        if symbols_per_packet == 0 || symbols_per_packet % 2 != 0 {
            return Err(PhyError::Arq("symbols_per_packet must be a positive even number".into()));
        }
        if !(noise_std >= 0.0 && noise_std.is_finite()) {
            return Err(PhyError::Arq("noise_std must be finite and nonnegative".into()));
        }
        Ok(Self {
            max_attempts,
            symbols_per_packet,
            noise_std,
        })
    }

    pub fn noiseless(self) -> Self {
        Self { noise_std: 0.0, ..self }
    }

    pub fn max_attempts(&self) -> u32 {
        self.max_attempts
    }

    pub fn symbols_per_packet(&self) -> usize {
        self.symbols_per_packet
    }
}

impl Default for ArqConfig {
    fn default() -> Self {
        Self {
            max_attempts: DEFAULT_MAX_ATTEMPTS,
            symbols_per_packet: DEFAULT_SYMBOLS_PER_PACKET,
            noise_std: 1.0,
        }
    }
}

impl Constellation {
    pub fn order(self) -> usize {
        match self {
            Constellation::Bpsk => 2,
            Constellation::Qpsk => 4,
        }
    }

    /// Unit-energy Gray mapping. QPSK index bits `(b1 b0)` set the signs of
    /// the imaginary and real parts.
    pub fn modulate(self, index: u8) -> Complex64 {
        match self {
            Constellation::Bpsk => Complex64::new(if index & 1 == 0 { 1.0 } else { -1.0 }, 0.0),
            Constellation::Qpsk => {
                let re = if index & 1 == 0 { HALF } else { -HALF };
                let im = if index & 2 == 0 { HALF } else { -HALF };
                Complex64::new(re, im)
            }
        }
    }

    /// Minimum-distance decision; scale-invariant, so unnormalized soft estimates are fine.
    pub fn detect(self, z: Complex64) -> u8 {
        let re_bit = u8::from(z.re < 0.0);
        match self {
            Constellation::Bpsk => re_bit,
            Constellation::Qpsk => re_bit | (u8::from(z.im < 0.0) << 1),
        }
    }
}

fn complex_noise<R: Rng + ?Sized>(std: f64, rng: &mut R) -> Complex64 {
    if std == 0.0 {
        return Complex64::new(0.0, 0.0);
    }
    let n = Normal::new(0.0, std * HALF).expect("finite std");
    Complex64::new(n.sample(rng), n.sample(rng))
}

/// Two symbols' worth of noise for one code block: `[slot][rx antenna]`.
pub(crate) type BlockNoise = [[Complex64; 2]; 2];

pub(crate) fn draw_block_noise<R: Rng + ?Sized>(std: f64, rng: &mut R) -> BlockNoise {
    let mut n = [[Complex64::new(0.0, 0.0); 2]; 2];
    for v in n.iter_mut().flatten() {
        *v = complex_noise(std, rng);
    }
    n
}

/// Sends one block of two symbols and returns the detected indices.
/// Alamouti spans two slots; multiplexing uses only the first slot of `noise`.
/// Returns `None` when the receiver has nothing to work with (`H = 0`).
pub(crate) fn send_block(
    code: SpaceTimeCode,
    constellation: Constellation,
    channel: &Channel,
    symbols: [u8; 2],
    noise: &BlockNoise,
) -> Option<[u8; 2]> {
    let s = symbols.map(|i| constellation.modulate(i));
    match code {
        SpaceTimeCode::Alamouti => {
            if channel.frobenius_sq() == 0.0 {
                return None;
            }
            let r1 = add(channel.apply([s[0] * HALF, s[1] * HALF]), noise[0]);
            let r2 = add(channel.apply([-s[1].conj() * HALF, s[0].conj() * HALF]), noise[1]);
            let h = &channel.h;
            let mut z = [Complex64::new(0.0, 0.0); 2];
            for j in 0..2 {
                z[0] += h[j][0].conj() * r1[j] + h[j][1] * r2[j].conj();
                z[1] += h[j][1].conj() * r1[j] - h[j][0] * r2[j].conj();
            }
            Some(z.map(|v| constellation.detect(v)))
        }
        SpaceTimeCode::Multiplexing => {
            let g = channel.zero_forcing()?;
            let r = add(channel.apply([s[0] * HALF, s[1] * HALF]), noise[0]);
            let z = [g[0][0] * r[0] + g[0][1] * r[1], g[1][0] * r[0] + g[1][1] * r[1]];
            Some(z.map(|v| constellation.detect(v)))
        }
    }
}

fn add(a: [Complex64; 2], b: [Complex64; 2]) -> [Complex64; 2] {
    [a[0] + b[0], a[1] + b[1]]
}

/// One packet attempt over a fresh channel; true iff every symbol is decoded.
pub fn send_packet<R: Rng + ?Sized>(
    app: TransmissionApp,
    snr_linear: f64,
    paths: u8,
    arq: &ArqConfig,
    rng: &mut R,
) -> bool {
    let channel = Channel::draw(snr_linear, paths, rng);
    let order = app.constellation.order() as u8;
    let mut ok = true;
    for _ in 0..arq.symbols_per_packet / 2 {
        let symbols = [rng.random_range(0..order), rng.random_range(0..order)];
        let noise = draw_block_noise(arq.noise_std, rng);
        match send_block(app.code, app.constellation, &channel, symbols, &noise) {
            Some(d) if d == symbols => {}
            _ => ok = false,
        }
    }
    ok
}

/// Number of attempts until the first error-free packet, capped at `max_attempts`.
pub fn transmit_arq_at<R: Rng + ?Sized>(
    app: TransmissionApp,
    snr_linear: f64,
    paths: u8,
    arq: &ArqConfig,
    rng: &mut R,
) -> u32 {
    for attempt in 1..arq.max_attempts {
        if send_packet(app, snr_linear, paths, arq, rng) {
            return attempt;
        }
    }
    arq.max_attempts
}

pub fn transmit_arq<R: Rng + ?Sized>(app: TransmissionApp, ctx: &PhyContext, arq: &ArqConfig, rng: &mut R) -> u32 {
    transmit_arq_at(app, ctx.snr_linear(), ctx.paths(), arq, rng)
}
