//! Log densities and draws that `rand_distr` does not cover directly.

use rand::Rng;
use rand_distr::{Distribution, Gamma};
use statrs::function::gamma::ln_gamma;

/// Log density of `Gamma(shape, rate)` at `x`.
pub fn gamma_ln_pdf(x: f64, shape: f64, rate: f64) -> f64 {
    if x <= 0.0 {
        return f64::NEG_INFINITY;
    }
    shape * rate.ln() - ln_gamma(shape) + (shape - 1.0) * x.ln() - rate * x
}

/// Log density of `Dirichlet(alpha)` at a point of the simplex.
///
/// Returns `-inf` when any coordinate is zero or negative.
pub fn dirichlet_ln_pdf(x: &[f64], alpha: &[f64]) -> f64 {
    debug_assert_eq!(x.len(), alpha.len());
    let mut total = 0.0;
    let mut acc = 0.0;
    for (&xi, &ai) in x.iter().zip(alpha) {
        if xi <= 0.0 {
            return f64::NEG_INFINITY;
        }
        total += ai;
        acc += (ai - 1.0) * xi.ln() - ln_gamma(ai);
    }
    acc + ln_gamma(total)
}

/// Draws from `Dirichlet(alpha)` by normalizing independent Gamma draws.
///
/// With very small concentrations a coordinate can underflow to exactly
/// zero; callers must be ready for that.
pub fn sample_dirichlet<R: Rng + ?Sized>(alpha: &[f64], rng: &mut R) -> Vec<f64> {
    let mut draws: Vec<f64> = alpha
        .iter()
        .map(|&a| {
            Gamma::new(a, 1.0)
                .expect("positive concentration")
                .sample(rng)
        })
        .collect();
    let total: f64 = draws.iter().sum();
    if total > 0.0 {
        draws.iter_mut().for_each(|x| *x /= total);
    } else {
        // every coordinate underflowed; fall back to a single unit mass on
        // the largest concentration so the result stays on the simplex
        let best = alpha
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
            .unwrap_or(0);
        draws.iter_mut().for_each(|x| *x = 0.0);
        draws[best] = 1.0;
    }
    draws
}

/// `log(lambda)` if the flag is set, `log(1 - lambda)` otherwise.
#[inline]
pub fn bernoulli_ln_pmf(flag: bool, lambda: f64) -> f64 {
    if flag {
        lambda.ln()
    } else {
        (1.0 - lambda).ln()
    }
}
