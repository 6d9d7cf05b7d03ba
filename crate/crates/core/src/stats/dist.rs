//! Special functions and the CDFs behind every p-value: Student t, Fisher F
//! (both through the regularized incomplete beta function) and the
//! studentized range (by nested numerical integration).

use std::f64::consts::{LN_2, PI, SQRT_2};

use super::quad::{integrate, integrate_noisy};
use super::StatsError;

const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
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

/// Natural log of the gamma function for `x > 0`.
pub fn ln_gamma(x: f64) -> f64 {
    if x < 0.5 {
        // reflection
        return (PI / (PI * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = LANCZOS[0];
    for (i, c) in LANCZOS.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    let t = x + LANCZOS_G + 0.5;
    0.5 * (2.0 * PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

const CF_EPS: f64 = 1e-16;
const CF_TINY: f64 = 1e-300;
const CF_MAX_ITER: usize = 20_000;

// Continued fraction for I_x(a, b) by the modified Lentz method.
fn beta_cf(a: f64, b: f64, x: f64) -> f64 {
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < CF_TINY {
        d = CF_TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=CF_MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < CF_TINY {
            d = CF_TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < CF_TINY {
            c = CF_TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < CF_TINY {
            d = CF_TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < CF_TINY {
            c = CF_TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < CF_EPS {
            break;
        }
    }
    h
}

/// Regularized incomplete beta `I_x(a, b)` and its complement, given both
/// `x` and `y = 1 - x` so that callers can pass an exact complement.
pub fn beta_reg_pair(a: f64, b: f64, x: f64, y: f64) -> (f64, f64) {
    if x <= 0.0 {
        return (0.0, 1.0);
    }
    if y <= 0.0 {
        return (1.0, 0.0);
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * y.ln();
    let front = ln_front.exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        let w = front * beta_cf(a, b, x) / a;
        (w, 1.0 - w)
    } else {
        let w = front * beta_cf(b, a, y) / b;
        (1.0 - w, w)
    }
}

pub fn beta_reg(a: f64, b: f64, x: f64) -> f64 {
    beta_reg_pair(a, b, x, 1.0 - x).0
}

// Regularized upper incomplete gamma Q(a, x).
fn gamma_q(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    let ln_front = a * x.ln() - x - ln_gamma(a);
    if x < a + 1.0 {
        let mut ap = a;
        let mut del = 1.0 / a;
        let mut sum = del;
        for _ in 0..CF_MAX_ITER {
            ap += 1.0;
            del *= x / ap;
            sum += del;
            if del.abs() < sum.abs() * CF_EPS {
                break;
            }
        }
        1.0 - sum * ln_front.exp()
    } else {
        let mut b = x + 1.0 - a;
        let mut c = 1.0 / CF_TINY;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..=CF_MAX_ITER {
            let an = -(i as f64) * (i as f64 - a);
            b += 2.0;
            d = an * d + b;
            if d.abs() < CF_TINY {
                d = CF_TINY;
            }
            c = b + an / c;
            if c.abs() < CF_TINY {
                c = CF_TINY;
            }
            d = 1.0 / d;
            let del = d * c;
            h *= del;
            if (del - 1.0).abs() < CF_EPS {
                break;
            }
        }
        ln_front.exp() * h
    }
}

/// Complementary error function.
pub fn erfc(x: f64) -> f64 {
    if x >= 0.0 {
        gamma_q(0.5, x * x)
    } else {
        2.0 - gamma_q(0.5, x * x)
    }
}

/// Standard normal upper tail `P(Z > z)`.
pub fn normal_sf(z: f64) -> f64 {
    0.5 * erfc(z / SQRT_2)
}

pub fn normal_cdf(z: f64) -> f64 {
    normal_sf(-z)
}

pub fn normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * PI).sqrt()
}

// P(z - w < Z < z), computed from whichever tail avoids cancellation.
fn normal_interval(lo: f64, hi: f64) -> f64 {
    if lo >= 0.0 {
        normal_sf(lo) - normal_sf(hi)
    } else if hi <= 0.0 {
        normal_cdf(hi) - normal_cdf(lo)
    } else {
        1.0 - normal_cdf(lo) - normal_sf(hi)
    }
}

fn check_df(name: &str, df: f64) -> Result<(), StatsError> {
    if df.is_nan() || df <= 0.0 {
        return Err(StatsError::Domain(format!("{name} must be positive, got {df}")));
    }
    Ok(())
}

/// Student t CDF.
pub fn t_cdf(t: f64, df: f64) -> Result<f64, StatsError> {
    check_df("df", df)?;
    if t.is_nan() {
        return Err(StatsError::Domain("t is NaN".into()));
    }
    if t == 0.0 {
        return Ok(0.5);
    }
    if t.is_infinite() {
        return Ok(if t > 0.0 { 1.0 } else { 0.0 });
    }
    let tail = 0.5 * t_two_sided_p(t, df)?;
    Ok(if t > 0.0 { 1.0 - tail } else { tail })
}

/// Two-sided p-value `P(|T| >= |t|)`.
pub fn t_two_sided_p(t: f64, df: f64) -> Result<f64, StatsError> {
    check_df("df", df)?;
    if t.is_infinite() {
        return Ok(0.0);
    }
    let t2 = t * t;
    let x = df / (df + t2);
    let y = t2 / (df + t2);
    Ok(beta_reg_pair(0.5 * df, 0.5, x, y).0.clamp(0.0, 1.0))
}

/// Fisher F CDF.
pub fn f_cdf(f: f64, df1: f64, df2: f64) -> Result<f64, StatsError> {
    Ok(1.0 - f_sf(f, df1, df2)?)
}

/// Fisher F upper tail `P(F >= f)`.
pub fn f_sf(f: f64, df1: f64, df2: f64) -> Result<f64, StatsError> {
    check_df("df1", df1)?;
    check_df("df2", df2)?;
    if f.is_nan() {
        return Err(StatsError::Domain("F is NaN".into()));
    }
    if f <= 0.0 {
        return Ok(1.0);
    }
    if f.is_infinite() {
        return Ok(0.0);
    }
    let denom = df2 + df1 * f;
    let x = df2 / denom;
    let y = df1 * f / denom;
    Ok(beta_reg_pair(0.5 * df2, 0.5 * df1, x, y).0.clamp(0.0, 1.0))
}

const INNER_TOL: f64 = 1e-14;
const OUTER_TOL: f64 = 1e-12;
// relative accuracy of the inner range integral as seen by the outer one
const INNER_NOISE: f64 = 1e-12;
const Z_LIMIT: f64 = 8.5;

/// CDF of the range of `k` iid standard normals.
fn normal_range_cdf(w: f64, k: f64) -> f64 {
    if w <= 0.0 {
        return 0.0;
    }
    let integrand = |z: f64| {
        let p = normal_interval(z - w, z);
        if p <= 0.0 {
            0.0
        } else {
            normal_pdf(z) * p.powf(k - 1.0)
        }
    };
    (k * integrate(integrand, -Z_LIMIT, Z_LIMIT, INNER_TOL)).clamp(0.0, 1.0)
}

/// Studentized range CDF `P(Q <= q)` for `k` groups and `df` error degrees
/// of freedom. `df = f64::INFINITY` gives the normal range distribution.
pub fn ptukey(q: f64, k: f64, df: f64) -> Result<f64, StatsError> {
    if k.is_nan() || k < 2.0 {
        return Err(StatsError::Domain(format!("k must be >= 2, got {k}")));
    }
    if df.is_nan() || df < 1.0 {
        return Err(StatsError::Domain(format!("df must be >= 1, got {df}")));
    }
    if q.is_nan() {
        return Err(StatsError::Domain("q is NaN".into()));
    }
    if q <= 0.0 {
        return Ok(0.0);
    }
    if q.is_infinite() {
        return Ok(1.0);
    }
    if df.is_infinite() || df > 1e7 {
        return Ok(normal_range_cdf(q, k));
    }
    // density of s = sqrt(chi2_df / df)
    let ln_norm = 0.5 * df * df.ln() - ln_gamma(0.5 * df) - (0.5 * df - 1.0) * LN_2;
    let density = |s: f64| {
        if s <= 0.0 {
            return if df == 1.0 { ln_norm.exp() } else { 0.0 };
        }
        (ln_norm + (df - 1.0) * s.ln() - 0.5 * df * s * s).exp()
    };
    let mode = ((df - 1.0).max(0.0) / df).sqrt();
    let spread = (0.5 / df).sqrt().max(0.2);
    let lo = (mode - 12.0 * spread).max(0.0);
    let hi = mode + 14.0 * spread;
    let value = integrate_noisy(
        |s| {
            let dens = density(s);
            if dens == 0.0 {
                0.0
            } else {
                dens * normal_range_cdf(q * s, k)
            }
        },
        lo,
        hi,
        OUTER_TOL,
        INNER_NOISE,
    );
    Ok(value.clamp(0.0, 1.0))
}

/// Upper tail of the studentized range, i.e. the Tukey HSD p-value.
pub fn ptukey_sf(q: f64, k: f64, df: f64) -> Result<f64, StatsError> {
    Ok((1.0 - ptukey(q, k, df)?).clamp(0.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Distribution {
    StudentT { df: f64 },
    FisherF { df1: f64, df2: f64 },
    StudentizedRange { k: f64, df: f64 },
}

impl Distribution {
    pub fn cdf(&self, x: f64) -> Result<f64, StatsError> {
        match *self {
            Distribution::StudentT { df } => t_cdf(x, df),
            Distribution::FisherF { df1, df2 } => f_cdf(x, df1, df2),
            Distribution::StudentizedRange { k, df } => ptukey(x, k, df),
        }
    }
}

pub fn dist_cdf(dist: Distribution, x: f64) -> Result<f64, StatsError> {
    dist.cdf(x)
}
