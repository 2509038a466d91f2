//! Two-branch transmit diversity over flat Rayleigh fading.
//!
//! Each branch delivers an exponentially distributed instantaneous SNR
//! around its average; the receiver combines them so that the post-combining
//! SNR is their sum. BPSK bit errors then occur with probability
//! `Q(sqrt(2·γ))`. The module offers:
//!
//! - the configuration-space coordinates (imbalance factor, effective SNR),
//! - the exact average bit error probability of that model,
//! - a seeded semi-analytic Monte Carlo block simulator, and
//! - a synthetic surface (oracle plus controlled relative noise) used as a
//!   test fixture for the sampler and the miner.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::grid::Axes;
use crate::sampler::{PerformanceDatabase, PointRecord};
use crate::stats::{clamp_sample, BerSample};
use crate::{Error, Result};

/// A configuration: the average SNRs of the two branches, in dB.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointConfig {
    pub s1_db: f64,
    pub s2_db: f64,
}

impl PointConfig {
    pub fn new(s1_db: f64, s2_db: f64) -> Self {
        PointConfig { s1_db, s2_db }
    }

    pub fn mirrored(&self) -> Self {
        PointConfig::new(self.s2_db, self.s1_db)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimBlockConfig {
    pub frames: u64,
    pub bits_per_frame: u64,
    pub seed: u64,
}

impl Default for SimBlockConfig {
    fn default() -> Self {
        SimBlockConfig {
            frames: 10_000,
            bits_per_frame: 80,
            seed: 0,
        }
    }
}

impl SimBlockConfig {
    pub fn bits(&self) -> u64 {
        self.frames * self.bits_per_frame
    }

    pub fn validate(&self) -> Result<()> {
        if self.frames == 0 || self.bits_per_frame == 0 {
            return Err(Error::invalid("frames and bits per frame must be positive"));
        }
        if self.bits() < 3 {
            return Err(Error::invalid("a block must simulate at least 3 bits"));
        }
        Ok(())
    }
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(0.1 * db)
}

pub fn linear_to_db(lin: f64) -> f64 {
    10.0 * lin.log10()
}

/// Branch power imbalance factor `10^(-0.1·|s1 - s2|)`.
pub fn imbalance_factor(p: PointConfig) -> f64 {
    10f64.powf(-0.1 * (p.s1_db - p.s2_db).abs())
}

/// Effective SNR in dB: the dB value of the mean of the branch linear SNRs.
pub fn effective_snr(p: PointConfig) -> f64 {
    linear_to_db(0.5 * (db_to_linear(p.s1_db) + db_to_linear(p.s2_db)))
}

/// Inverts `(alpha, effective SNR)` to branch SNRs with `s1 <= s2`.
pub fn point_from_alpha_snr(alpha: f64, snr_db: f64) -> Result<PointConfig> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::invalid(format!("alpha must lie in (0, 1], got {alpha}")));
    }
    let gap_db = -10.0 * alpha.log10();
    // g1 + g1/alpha = 2·10^(S/10)
    let g1 = 2.0 * db_to_linear(snr_db) * alpha / (1.0 + alpha);
    let s1 = linear_to_db(g1);
    Ok(PointConfig::new(s1, s1 + gap_db))
}

/// Gaussian tail probability `Q(x) = P(Z > x)`.
pub fn q_function(x: f64) -> f64 {
    0.5 * libm::erfc(x / std::f64::consts::SQRT_2)
}

/// BPSK bit error probability at instantaneous SNR `gamma` (linear).
fn bpsk_error_probability(gamma: f64) -> f64 {
    // Q(sqrt(2γ)) = erfc(sqrt(γ)) / 2
    0.5 * libm::erfc(gamma.sqrt())
}

/// Exact average bit error probability of BPSK with two independently
/// Rayleigh faded branches combined into the SNR sum.
pub fn closed_form_bep(p: PointConfig) -> f64 {
    let (a, b) = (db_to_linear(p.s1_db), db_to_linear(p.s2_db));
    // Fixed argument order keeps the result exactly symmetric.
    let (g1, g2) = if a <= b { (a, b) } else { (b, a) };
    if g1 == g2 {
        return equal_means_bep(g1);
    }
    // ½[1 − (g1μ1 − g2μ2)/(g1 − g2)], with the divided difference expanded
    // as μ1 + g2/((1+g1)(1+g2)(μ1+μ2)) so it stays exact as g2 → g1.
    let mu1 = (g1 / (1.0 + g1)).sqrt();
    let mu2 = (g2 / (1.0 + g2)).sqrt();
    let one_minus_mu1 = 1.0 / ((1.0 + g1) * (1.0 + mu1));
    let rest = g2 / ((1.0 + g1) * (1.0 + g2) * (mu1 + mu2));
    0.5 * (one_minus_mu1 - rest)
}

/// Confluent limit for equal branch means: `((1-μ)/2)^2 (2+μ)`.
pub fn equal_means_bep(mean_snr: f64) -> f64 {
    let mu = (mean_snr / (1.0 + mean_snr)).sqrt();
    let half_gap = 0.5 / ((1.0 + mean_snr) * (1.0 + mu));
    half_gap * half_gap * (2.0 + mu)
}

/// SplitMix64 finalizer.
fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Per-block seed: a SplitMix64 chain over the master seed, both branch
/// SNRs (IEEE bit patterns) and the block index. Results therefore do not
/// depend on the order in which blocks are simulated.
pub fn block_seed(master: u64, p: PointConfig, block_index: u64) -> u64 {
    let mut h = mix64(master);
    for word in [p.s1_db.to_bits(), p.s2_db.to_bits(), block_index] {
        h = mix64(h ^ word);
    }
    h
}

/// Simulates one block of `cfg.frames` frames at `p`, seeded by `cfg.seed`.
///
/// Fading is quasi-static: one draw of both branch SNRs per frame. Given the
/// frame SNR, bit errors are independent Bernoulli trials, so the frame's
/// error count is drawn as a single binomial.
pub fn simulate_block(p: PointConfig, cfg: &SimBlockConfig) -> Result<BerSample> {
    cfg.validate()?;
    let mean1 = db_to_linear(p.s1_db);
    let mean2 = db_to_linear(p.s2_db);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut errors = 0u64;
    for _ in 0..cfg.frames {
        let f1: f64 = rng.sample(Exp1);
        let f2: f64 = rng.sample(Exp1);
        let pe = bpsk_error_probability(mean1 * f1 + mean2 * f2);
        let frame_errors = Binomial::new(cfg.bits_per_frame, pe)
            .map_err(|e| Error::Simulation(format!("binomial p = {pe}: {e}")))?
            .sample(&mut rng);
        errors += frame_errors;
    }
    clamp_sample(errors, cfg.bits())
}

/// Source of BER blocks for the adaptive sampler.
pub trait BlockSimulator: Sync {
    /// The `block_index`-th block at `point`. Must be a pure function of its
    /// arguments.
    fn simulate(&self, point: PointConfig, block_index: u64) -> Result<BerSample>;
}

/// The semi-analytic Monte Carlo simulator.
#[derive(Debug, Clone, Copy)]
pub struct MonteCarlo {
    pub block: SimBlockConfig,
}

impl BlockSimulator for MonteCarlo {
    fn simulate(&self, point: PointConfig, block_index: u64) -> Result<BerSample> {
        let cfg = SimBlockConfig {
            seed: block_seed(self.block.seed, point, block_index),
            ..self.block
        };
        simulate_block(point, &cfg)
    }
}

/// Closed-form surface with relative Gaussian noise: each block reports
/// `bep·(1 + ε)`, `ε ~ N(0, noise_sd_rel²)`, clipped into `(0, 0.5]` and
/// quantized to an error count over `bits`.
#[derive(Debug, Clone, Copy)]
pub struct Synthetic {
    pub noise_sd_rel: f64,
    pub bits: u64,
    pub seed: u64,
}

impl Synthetic {
    pub fn new(noise_sd_rel: f64, bits: u64, seed: u64) -> Result<Self> {
        if !(noise_sd_rel >= 0.0 && noise_sd_rel.is_finite()) {
            return Err(Error::invalid(format!(
                "noise level must be a non-negative number, got {noise_sd_rel}"
            )));
        }
        if bits < 3 {
            return Err(Error::invalid("a block must simulate at least 3 bits"));
        }
        Ok(Synthetic {
            noise_sd_rel,
            bits,
            seed,
        })
    }
}

impl BlockSimulator for Synthetic {
    fn simulate(&self, point: PointConfig, block_index: u64) -> Result<BerSample> {
        let bep = closed_form_bep(point);
        let value = if self.noise_sd_rel > 0.0 {
            let mut rng = ChaCha8Rng::seed_from_u64(block_seed(self.seed, point, block_index));
            let eps: f64 = rng.sample(StandardNormal);
            bep * (1.0 + self.noise_sd_rel * eps)
        } else {
            bep
        };
        let max_errors = self.bits / 2;
        let errors = if value <= 0.0 {
            0
        } else {
            ((value * self.bits as f64).round() as u64).min(max_errors)
        };
        clamp_sample(errors, self.bits)
    }
}

/// A database with `samples_per_point` synthetic blocks at every cell.
pub fn synthetic_surface(
    axes: &Axes,
    noise_sd_rel: f64,
    seed: u64,
    samples_per_point: usize,
    bits: u64,
) -> Result<PerformanceDatabase> {
    let sim = Synthetic::new(noise_sd_rel, bits, seed)?;
    let mut db = PerformanceDatabase::new(axes.clone());
    for (ix, &s1) in axes.x.iter().enumerate() {
        for (iy, &s2) in axes.y.iter().enumerate() {
            let point = PointConfig::new(s1, s2);
            let samples = (0..samples_per_point as u64)
                .map(|j| sim.simulate(point, j))
                .collect::<Result<Vec<_>>>()?;
            db.insert(ix, iy, PointRecord::new(point, samples, None, false));
        }
    }
    Ok(db)
}
