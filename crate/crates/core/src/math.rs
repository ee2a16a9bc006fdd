//! Log-space arithmetic and closed-form divergences between conjugate
//! posteriors.

pub use statrs::function::gamma::{digamma, ln_gamma};

pub const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[inline]
pub fn log_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// `E[log p_i]` under `Dirichlet(alpha)`.
pub fn dirichlet_expected_log(alpha: &[f64]) -> Vec<f64> {
    let total = digamma(alpha.iter().sum());
    alpha.iter().map(|&a| digamma(a) - total).collect()
}

/// `KL(Dirichlet(q) || Dirichlet(p))`.
pub fn kl_dirichlet(q: &[f64], p: &[f64]) -> f64 {
    debug_assert_eq!(q.len(), p.len());
    let q0: f64 = q.iter().sum();
    let p0: f64 = p.iter().sum();
    let psi0 = digamma(q0);
    let mut kl = ln_gamma(q0) - ln_gamma(p0);
    for (&qi, &pi) in q.iter().zip(p) {
        kl += ln_gamma(pi) - ln_gamma(qi) + (qi - pi) * (digamma(qi) - psi0);
    }
    kl.max(0.0)
}

pub fn kl_beta(qa: f64, qb: f64, pa: f64, pb: f64) -> f64 {
    kl_dirichlet(&[qa, qb], &[pa, pb])
}

/// `KL(Gamma(a, rate b) || Gamma(a0, rate b0))`.
pub fn kl_gamma(a: f64, b: f64, a0: f64, b0: f64) -> f64 {
    ((a - a0) * digamma(a) - ln_gamma(a) + ln_gamma(a0) + a0 * (b / b0).ln()
        + a * (b0 - b) / b)
        .max(0.0)
}

/// KL between two univariate Normal-Gamma distributions where
/// `mu | lambda ~ N(m, 1 / (kappa * lambda))` and `lambda ~ Gamma(a, rate b)`.
#[allow(clippy::too_many_arguments)]
pub fn kl_normal_gamma(
    m: f64,
    kappa: f64,
    a: f64,
    b: f64,
    m0: f64,
    kappa0: f64,
    a0: f64,
    b0: f64,
) -> f64 {
    let r = kappa0 / kappa;
    let normal = 0.5 * (r - 1.0 - r.ln() + kappa0 * (a / b) * (m - m0) * (m - m0));
    (normal + kl_gamma(a, b, a0, b0)).max(0.0)
}
