//! Special functions and distribution quantiles.
//!
//! Everything here is built on the regularized incomplete gamma function:
//! the chi-square CDF is `P(k/2, x/2)` and the normal CDF is expressed
//! through `Q(1/2, z^2/2)`, so a single, carefully converged kernel backs
//! all tail probabilities and quantiles used by the calibration code.

use std::f64::consts::PI;

const EPS: f64 = 1e-16;
const MAX_ITER: usize = 10_000;

/// Natural log of the gamma function (Lanczos, g = 7, n = 9).
pub fn ln_gamma(x: f64) -> f64 {
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
        return (PI / (PI * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = COEF[0];
    let t = x + 7.5;
    for (i, c) in COEF.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    0.5 * (2.0 * PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

/// ln of the gamma density kernel `x^(a-1) e^(-x) / Gamma(a)`.
fn ln_gamma_kernel(a: f64, x: f64) -> f64 {
    (a - 1.0) * x.ln() - x - ln_gamma(a)
}

/// Series for P(a, x), valid for x < a + 1. Returns ln P.
fn ln_gamma_p_series(a: f64, x: f64) -> f64 {
    let mut ap = a;
    let mut sum = 1.0 / a;
    let mut del = sum;
    for _ in 0..MAX_ITER {
        ap += 1.0;
        del *= x / ap;
        sum += del;
        if del.abs() < sum.abs() * EPS {
            break;
        }
    }
    sum.ln() + a * x.ln() - x - ln_gamma(a)
}

/// Continued fraction for Q(a, x), valid for x >= a + 1. Returns ln Q.
fn ln_gamma_q_cf(a: f64, x: f64) -> f64 {
    let tiny = 1e-300;
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / tiny;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..MAX_ITER {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < tiny {
            d = tiny;
        }
        c = b + an / c;
        if c.abs() < tiny {
            c = tiny;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h.ln() + a * x.ln() - x - ln_gamma(a)
}

/// ln P(a, x) and ln Q(a, x) for a > 0, x >= 0.
fn ln_gamma_pq(a: f64, x: f64) -> (f64, f64) {
    if x <= 0.0 {
        return (f64::NEG_INFINITY, 0.0);
    }
    if x < a + 1.0 {
        let lp = ln_gamma_p_series(a, x);
        (lp, (-lp.exp()).ln_1p())
    } else {
        let lq = ln_gamma_q_cf(a, x);
        ((-lq.exp()).ln_1p(), lq)
    }
}

/// Regularized lower incomplete gamma function P(a, x).
pub fn gamma_p(a: f64, x: f64) -> f64 {
    ln_gamma_pq(a, x).0.exp()
}

/// Regularized upper incomplete gamma function Q(a, x) = 1 - P(a, x).
pub fn gamma_q(a: f64, x: f64) -> f64 {
    ln_gamma_pq(a, x).1.exp()
}

#[derive(Clone, Copy)]
enum Tail {
    Lower,
    Upper,
}

/// Solves `P(a, x) = p` (lower tail) or `Q(a, x) = p` (upper tail) for x.
///
/// Newton iterations on the log of the selected tail probability, kept inside
/// a bracket and falling back to bisection whenever a step escapes it.
fn gamma_inv(a: f64, p: f64, tail: Tail) -> f64 {
    assert!(a > 0.0, "shape must be positive");
    if p <= 0.0 {
        return match tail {
            Tail::Lower => 0.0,
            Tail::Upper => f64::INFINITY,
        };
    }
    if p >= 1.0 {
        return match tail {
            Tail::Lower => f64::INFINITY,
            Tail::Upper => 0.0,
        };
    }
    let target = p.ln();
    // g(x) = ln(tail(x)) - ln p; increasing in x for the lower tail.
    let g = |x: f64| -> f64 {
        let (lp, lq) = ln_gamma_pq(a, x);
        match tail {
            Tail::Lower => lp - target,
            Tail::Upper => target - lq,
        }
    };

    let mut lo = 0.0_f64;
    let mut hi = a.max(1.0);
    while g(hi) < 0.0 {
        lo = hi;
        hi *= 2.0;
    }
    let mut x = 0.5 * (lo + hi);
    for _ in 0..400 {
        let gx = g(x);
        if gx == 0.0 {
            return x;
        }
        if gx < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        let (lp, lq) = ln_gamma_pq(a, x);
        let ln_dens = ln_gamma_kernel(a, x);
        let slope = match tail {
            Tail::Lower => (ln_dens - lp).exp(),
            Tail::Upper => (ln_dens - lq).exp(),
        };
        let mut next = x - gx / slope;
        if !next.is_finite() || next <= lo || next >= hi {
            next = 0.5 * (lo + hi);
        }
        if (next - x).abs() <= 4.0 * f64::EPSILON * x.abs() || hi - lo <= 4.0 * f64::EPSILON * hi {
            return next;
        }
        x = next;
    }
    x
}

/// Quantile of the Gamma(a, 1) distribution: x with P(a, x) = p.
pub fn gamma_quantile(a: f64, p: f64) -> f64 {
    gamma_inv(a, p, Tail::Lower)
}

/// Upper-tail quantile of Gamma(a, 1): x with Q(a, x) = q.
pub fn gamma_upper_quantile(a: f64, q: f64) -> f64 {
    gamma_inv(a, q, Tail::Upper)
}

pub fn chi_sq_cdf(x: f64, df: f64) -> f64 {
    gamma_p(0.5 * df, 0.5 * x)
}

/// Upper tail probability of the chi-square distribution.
pub fn chi_sq_sf(x: f64, df: f64) -> f64 {
    gamma_q(0.5 * df, 0.5 * x)
}

pub fn chi_sq_quantile(p: f64, df: f64) -> f64 {
    if p > 0.5 {
        2.0 * gamma_upper_quantile(0.5 * df, 1.0 - p)
    } else {
        2.0 * gamma_quantile(0.5 * df, p)
    }
}

/// Standard normal CDF.
pub fn normal_cdf(z: f64) -> f64 {
    if z.is_nan() {
        return f64::NAN;
    }
    let tail = 0.5 * gamma_q(0.5, 0.5 * z * z);
    if z < 0.0 {
        tail
    } else {
        1.0 - tail
    }
}

/// Standard normal quantile.
///
/// Acklam's rational approximation followed by Halley refinement against
/// [`normal_cdf`].
pub fn normal_quantile(p: f64) -> f64 {
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    const A: [f64; 6] = [
        -3.969_683_028_665_376e1,
        2.209_460_984_245_205e2,
        -2.759_285_104_469_687e2,
        1.383_577_518_672_69e2,
        -3.066_479_806_614_716e1,
        2.506_628_277_459_239,
    ];
    const B: [f64; 5] = [
        -5.447_609_879_822_406e1,
        1.615_858_368_580_409e2,
        -1.556_989_798_598_866e2,
        6.680_131_188_771_972e1,
        -1.328_068_155_288_572e1,
    ];
    const C: [f64; 6] = [
        -7.784_894_002_430_293e-3,
        -3.223_964_580_411_365e-1,
        -2.400_758_277_161_838,
        -2.549_732_539_343_734,
        4.374_664_141_464_968,
        2.938_163_982_698_783,
    ];
    const D: [f64; 4] = [
        7.784_695_709_041_462e-3,
        3.224_671_290_700_398e-1,
        2.445_134_137_142_996,
        3.754_408_661_907_416,
    ];
    let p_low = 0.024_25;
    let mut x = if p < p_low {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - p_low {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = (-2.0 * (1.0 - p).ln()).sqrt();
        -(((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };
    for _ in 0..3 {
        // Phi(x) - p, evaluated on the smaller tail to keep relative precision.
        let e = if x < 0.0 {
            0.5 * gamma_q(0.5, 0.5 * x * x) - p
        } else {
            (1.0 - p) - 0.5 * gamma_q(0.5, 0.5 * x * x)
        };
        let u = e * (2.0 * PI).sqrt() * (0.5 * x * x).exp();
        x -= u / (1.0 + 0.5 * x * u);
    }
    x
}

/// Exact (Garwood) confidence limits for a Poisson mean given `observed`.
///
/// lower = ½·χ²(α/2; 2O), upper = ½·χ²(1−α/2; 2(O+1)); lower is 0 when O = 0.
pub fn poisson_exact_interval(observed: u64, level: f64) -> (f64, f64) {
    let alpha = 1.0 - level;
    let lower = if observed == 0 {
        0.0
    } else {
        gamma_quantile(observed as f64, 0.5 * alpha)
    };
    let upper = gamma_upper_quantile(observed as f64 + 1.0, 0.5 * alpha);
    (lower, upper)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn ln_gamma_matches_factorials() {
        let mut fact = 1.0_f64;
        for n in 1..30 {
            assert_relative_eq!(ln_gamma(n as f64), fact.ln(), max_relative = 1e-13, epsilon = 1e-14);
            fact *= n as f64;
        }
        assert_relative_eq!(ln_gamma(0.5), PI.sqrt().ln(), max_relative = 1e-13);
    }

    #[test]
    fn chi_square_table_values() {
        // Published critical values.
        assert_relative_eq!(chi_sq_quantile(0.95, 1.0), 3.841_458_820_694_124, max_relative = 1e-10);
        assert_relative_eq!(chi_sq_quantile(0.95, 2.0), 5.991_464_547_107_979, max_relative = 1e-10);
        assert_relative_eq!(chi_sq_quantile(0.95, 9.0), 16.918_977_604_620_45, max_relative = 1e-10);
        assert_relative_eq!(chi_sq_quantile(0.99, 4.0), 13.276_704_135_987_62, max_relative = 1e-10);
        assert_relative_eq!(chi_sq_quantile(0.05, 10.0), 3.940_299_136_119_826, max_relative = 1e-10);
        assert_relative_eq!(chi_sq_sf(3.841_458_820_694_124, 1.0), 0.05, max_relative = 1e-10);
    }

    #[test]
    fn normal_table_values() {
        assert_relative_eq!(normal_quantile(0.975), 1.959_963_984_540_054, max_relative = 1e-12);
        assert_relative_eq!(normal_quantile(0.5), 0.0, epsilon = 1e-15);
        assert_relative_eq!(normal_quantile(1e-10), -6.361_340_902_404_056, max_relative = 1e-10);
        assert_relative_eq!(normal_cdf(1.0), 0.841_344_746_068_542_9, max_relative = 1e-13);
        assert_relative_eq!(normal_cdf(-3.0), 0.001_349_898_031_630_094_6, max_relative = 1e-12);
    }

    #[test]
    fn quantile_inverts_cdf() {
        for &a in &[0.5, 1.0, 3.0, 17.5, 250.0] {
            for &p in &[1e-8, 0.025, 0.3, 0.5, 0.9, 0.975] {
                let x = gamma_quantile(a, p);
                assert_relative_eq!(gamma_p(a, x), p, max_relative = 1e-11);
                let y = gamma_upper_quantile(a, p);
                assert_relative_eq!(gamma_q(a, y), p, max_relative = 1e-11);
            }
        }
    }

    #[test]
    fn poisson_interval_zero_count() {
        let (lo, hi) = poisson_exact_interval(0, 0.95);
        assert_eq!(lo, 0.0);
        assert_relative_eq!(hi, -(0.025_f64.ln()), max_relative = 1e-12);
        assert_relative_eq!(hi, 3.688_879_454_113_936, max_relative = 1e-10);
    }
}
