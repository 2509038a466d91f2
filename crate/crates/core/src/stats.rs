//! Point-level statistics: BER samples, the Student t CDF, confidence of
//! acceptable performance and the adaptive-sampling stopping predicates.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Every block is assumed to have produced at least this many bit errors.
pub const MIN_COUNTED_ERRORS: u64 = 3;

/// One simulated block: raw error count over a number of bits.
///
/// The BER value used for estimation is floored at `3 / bits`; zero is too
/// optimistic an estimate for any real channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BerSample {
    errors: u64,
    bits: u64,
}

impl BerSample {
    pub fn errors(&self) -> u64 {
        self.errors
    }

    pub fn bits(&self) -> u64 {
        self.bits
    }

    /// Clamped BER estimate, `max(errors, 3) / bits`.
    pub fn value(&self) -> f64 {
        self.errors.max(MIN_COUNTED_ERRORS) as f64 / self.bits as f64
    }

    /// Unclamped `errors / bits`; unbiased, unlike [`BerSample::value`].
    pub fn raw_ber(&self) -> f64 {
        self.errors as f64 / self.bits as f64
    }
}

/// Builds a sample from raw counts, applying the three-error floor.
pub fn clamp_sample(errors: u64, bits: u64) -> Result<BerSample> {
    if bits < MIN_COUNTED_ERRORS {
        return Err(Error::invalid(format!(
            "a block needs at least {MIN_COUNTED_ERRORS} bits, got {bits}"
        )));
    }
    if errors > bits {
        return Err(Error::invalid(format!(
            "{errors} errors exceed the {bits} simulated bits"
        )));
    }
    Ok(BerSample { errors, bits })
}

/// Sample mean, unbiased sample variance and sample size of one point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointEstimate {
    pub mean: f64,
    pub variance: f64,
    pub n: usize,
}

impl PointEstimate {
    pub fn new(mean: f64, variance: f64, n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::InsufficientData(format!(
                "variance needs at least 2 samples, got {n}"
            )));
        }
        if !mean.is_finite() || !variance.is_finite() || variance < 0.0 {
            return Err(Error::invalid(format!(
                "bad estimate: mean {mean}, variance {variance}"
            )));
        }
        Ok(PointEstimate { mean, variance, n })
    }

    pub fn sd(&self) -> f64 {
        self.variance.sqrt()
    }

    /// Standard error of the mean, `sd / sqrt(n)`.
    pub fn std_error(&self) -> f64 {
        (self.variance / self.n as f64).sqrt()
    }
}

/// Mean and unbiased variance over the clamped values of `samples`.
pub fn point_estimate(samples: &[BerSample]) -> Result<PointEstimate> {
    let values: Vec<f64> = samples.iter().map(BerSample::value).collect();
    estimate_values(&values)
}

/// Same as [`point_estimate`] for plain values.
pub fn estimate_values(values: &[f64]) -> Result<PointEstimate> {
    let n = values.len();
    if n < 2 {
        return Err(Error::InsufficientData(format!(
            "variance needs at least 2 samples, got {n}"
        )));
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    PointEstimate::new(mean, ss / (n - 1) as f64, n)
}

/// Thresholds of the per-point stopping rules.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StoppingConfig {
    /// Relative accuracy threshold.
    pub beta: f64,
    /// Confidence level shared by both rules.
    pub gamma: f64,
    /// Sampling threshold: stop once the BEP is confidently below it.
    pub t_threshold: f64,
    pub max_samples: usize,
    /// Blocks drawn before any rule may stop sampling. Never below 2.
    pub min_samples: usize,
}

impl Default for StoppingConfig {
    fn default() -> Self {
        StoppingConfig {
            beta: 0.1,
            gamma: 0.9,
            t_threshold: 1e-4,
            max_samples: 50,
            min_samples: 2,
        }
    }
}

impl StoppingConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = |name: &str, v: f64| {
            if v > 0.0 && v < 1.0 {
                Ok(())
            } else {
                Err(Error::invalid(format!("{name} must lie in (0, 1), got {v}")))
            }
        };
        unit("beta", self.beta)?;
        unit("gamma", self.gamma)?;
        unit("t", self.t_threshold)?;
        if self.min_samples < 2 {
            return Err(Error::invalid("min_samples must be at least 2"));
        }
        if self.max_samples < self.min_samples {
            return Err(Error::invalid(format!(
                "max_samples {} is below min_samples {}",
                self.max_samples, self.min_samples
            )));
        }
        Ok(())
    }
}

/// `P(X < x)` for `X` Student t distributed with `dof` degrees of freedom.
///
/// Evaluated through the regularized incomplete beta function,
/// `F(x) = 1 - I_{dof/(dof+x^2)}(dof/2, 1/2) / 2` for `x >= 0`.
pub fn student_t_cdf(x: f64, dof: u64) -> Result<f64> {
    if dof == 0 {
        return Err(Error::invalid("Student t needs at least one degree of freedom"));
    }
    if x.is_nan() {
        return Err(Error::invalid("t statistic is NaN"));
    }
    if x.is_infinite() {
        return Ok(if x > 0.0 { 1.0 } else { 0.0 });
    }
    if x == 0.0 {
        return Ok(0.5);
    }
    let nu = dof as f64;
    let x2 = x * x;
    // Both arguments computed directly so neither suffers cancellation.
    let z = nu / (nu + x2);
    let one_minus_z = x2 / (nu + x2);
    let tail = 0.5 * inc_beta(0.5 * nu, 0.5, z, one_minus_z);
    Ok(if x > 0.0 { 1.0 - tail } else { tail })
}

/// Regularized incomplete beta `I_x(a, b)`; `y` must equal `1 - x`.
fn inc_beta(a: f64, b: f64, x: f64, y: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if y <= 0.0 {
        return 1.0;
    }
    let ln_front = a * x.ln() + b * y.ln() - ln_beta(a, b);
    if x < (a + 1.0) / (a + b + 2.0) {
        ln_front.exp() * beta_cont_frac(a, b, x) / a
    } else {
        1.0 - ln_front.exp() * beta_cont_frac(b, a, y) / b
    }
}

/// Continued fraction for the incomplete beta (modified Lentz).
fn beta_cont_frac(a: f64, b: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    const EPS: f64 = 1e-16;
    const MAX_ITER: usize = 100_000;

    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;

        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;

        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

fn ln_beta(a: f64, b: f64) -> f64 {
    ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)
}

/// Lanczos approximation (g = 7, 9 terms), relative error near 1e-15.
fn ln_gamma(x: f64) -> f64 {
    const G: f64 = 7.0;
    const COEF: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        // Reflection.
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = COEF[0];
    for (i, c) in COEF.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    let t = x + G + 0.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

/// Confidence that a mean estimated as `mean ± sd/sqrt(n)` lies below
/// `threshold`: `F_{n-1}((threshold - mean) / (sd / sqrt(n)))`.
///
/// A zero standard deviation yields the degenerate-distribution limit:
/// 1 below the threshold, 0 above, 0.5 exactly at it.
pub fn t_confidence(mean: f64, variance: f64, n: usize, threshold: f64) -> Result<f64> {
    if n < 2 {
        return Err(Error::InsufficientData(format!(
            "confidence needs at least 2 samples, got {n}"
        )));
    }
    let se = (variance / n as f64).sqrt();
    let gap = threshold - mean;
    if se == 0.0 {
        return Ok(if gap > 0.0 {
            1.0
        } else if gap < 0.0 {
            0.0
        } else {
            0.5
        });
    }
    student_t_cdf(gap / se, (n - 1) as u64)
}

/// `P(E[b] < threshold)` for a point estimate.
pub fn confidence_below(est: &PointEstimate, threshold: f64) -> Result<f64> {
    t_confidence(est.mean, est.variance, est.n, threshold)
}

/// Rule 1: `P(|E[b] - b̂| < beta·b̂) >= gamma`, with the symmetric two-sided
/// t interval. Always satisfied when the sample variance is zero.
pub fn rule_relative_accuracy(est: &PointEstimate, cfg: &StoppingConfig) -> bool {
    let se = est.std_error();
    if se == 0.0 {
        return true;
    }
    let stat = cfg.beta * est.mean / se;
    match student_t_cdf(stat, (est.n - 1) as u64) {
        Ok(p) => 2.0 * p - 1.0 >= cfg.gamma,
        Err(_) => false,
    }
}

/// Rule 2: `P(E[b] < t) >= gamma`.
pub fn rule_threshold(est: &PointEstimate, cfg: &StoppingConfig) -> bool {
    confidence_below(est, cfg.t_threshold).is_ok_and(|p| p >= cfg.gamma)
}
