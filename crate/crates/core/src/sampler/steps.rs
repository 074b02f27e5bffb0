use rand::Rng;
use rand_distr::{Distribution, Exp1, Gamma};

use crate::error::{Error, Result};
use crate::model::{Dataset, LatentMatrix, SupportParams};
use crate::perm::{applicable_swaps, ReferenceOrder};

use super::proposal::{McTables, ProposalContext};
use super::{ChainConfig, ChainState, SwapRule};

/// Result of the joint Metropolis-Hastings move.
#[derive(Debug, Clone)]
pub struct TjmOutcome {
    pub rho: ReferenceOrder,
    pub p: SupportParams,
    pub accepted: bool,
    /// Tables that were drawn under (the direction of) the returned `p`.
    pub tables: McTables,
    /// Observed-data log-likelihood at the returned `(rho, p)`.
    pub log_lik: f64,
}

/// Target-over-proposal log weight of `(rho, p)` in direction coordinates.
fn log_weight(
    dataset: &Dataset,
    ctx: &ProposalContext,
    config: &ChainConfig,
    rho: &ReferenceOrder,
    p: &SupportParams,
    tables: &McTables,
) -> Result<(f64, f64)> {
    let u = p.normalized();
    let log_lik = dataset.selection_paths(rho)?.log_lik(u.as_slice());
    let log_prior = if config.c == 1.0 {
        0.0
    } else {
        (config.c - 1.0) * u.as_slice().iter().map(|x| x.ln()).sum::<f64>()
    };
    let log_g = ctx.log_density(dataset, rho, p, tables);
    Ok((log_lik, log_lik + log_prior - log_g))
}

/// Log acceptance ratio of moving from the current `(rho, p)` to the
/// candidate, each evaluated against its own frozen Monte Carlo tables.
#[allow(clippy::too_many_arguments)]
pub fn tjm_log_acceptance(
    dataset: &Dataset,
    ctx: &ProposalContext,
    config: &ChainConfig,
    candidate: (&ReferenceOrder, &SupportParams, &McTables),
    current: (&ReferenceOrder, &SupportParams, &McTables),
) -> Result<f64> {
    let (_, cand) = log_weight(dataset, ctx, config, candidate.0, candidate.1, candidate.2)?;
    let (_, cur) = log_weight(dataset, ctx, config, current.0, current.1, current.2)?;
    Ok(cand - cur)
}

/// Joint move on `(rho, p)`.
///
/// The reverse proposal density is evaluated against tables freshly drawn
/// under the current `p`; the candidate's density uses the tables drawn
/// while building it. On acceptance the candidate direction is given a
/// total drawn from `Gamma(K c, d)`.
pub fn tjm_step<R: Rng + ?Sized>(
    state: &ChainState,
    dataset: &Dataset,
    ctx: &ProposalContext,
    config: &ChainConfig,
    rng: &mut R,
) -> Result<TjmOutcome> {
    let current_tables = ctx.draw_tables(&state.p, rng);
    let proposal = ctx.propose(dataset, rng)?;

    let (cand_lik, cand_w) = log_weight(
        dataset,
        ctx,
        config,
        &proposal.rho,
        &proposal.p,
        &proposal.trace.mc_tables,
    )?;
    let (cur_lik, cur_w) = log_weight(dataset, ctx, config, &state.rho, &state.p, &current_tables)?;
    let log_alpha = cand_w - cur_w;

    let u: f64 = rng.random();
    if !log_alpha.is_nan() && u.ln() < log_alpha {
        let k = dataset.k() as f64;
        let total = Gamma::new(k * config.c, 1.0 / config.d)
            .map_err(|e| Error::param(e.to_string()))?
            .sample(rng);
        let p = proposal.p.scaled(total)?;
        Ok(TjmOutcome {
            rho: proposal.rho,
            p,
            accepted: true,
            tables: proposal.trace.mc_tables,
            log_lik: cand_lik,
        })
    } else {
        Ok(TjmOutcome {
            rho: state.rho.clone(),
            p: state.p.clone(),
            accepted: false,
            tables: current_tables,
            log_lik: cur_lik,
        })
    }
}

#[derive(Debug, Clone)]
pub struct SwapOutcome {
    pub rho: ReferenceOrder,
    pub proposed: ReferenceOrder,
    pub accepted: bool,
}

/// Adjacent-swap move on `rho` with `p` held fixed.
///
/// `log_lik` may carry the already known log-likelihood at `(rho, p)`.
#[allow(clippy::too_many_arguments)]
pub fn swap_step<R: Rng + ?Sized>(
    rho: &ReferenceOrder,
    p: &SupportParams,
    dataset: &Dataset,
    ctx: &ProposalContext,
    config: &ChainConfig,
    tables: &McTables,
    log_lik: Option<f64>,
    rng: &mut R,
) -> Result<SwapOutcome> {
    let swaps = applicable_swaps(rho);
    if swaps.is_empty() {
        return Err(Error::param("swap move needs at least two items"));
    }
    let t = swaps[rng.random_range(0..swaps.len())];
    let proposed = rho.swapped(t).expect("applicable swap");

    let here = match log_lik {
        Some(v) => v,
        None => dataset.selection_paths(rho)?.log_lik(p.as_slice()),
    };
    let there = dataset.selection_paths(&proposed)?.log_lik(p.as_slice());
    let log_alpha = match config.swap_rule {
        SwapRule::Posterior => {
            let back = applicable_swaps(&proposed).len();
            there - here + (swaps.len() as f64).ln() - (back as f64).ln()
        }
        SwapRule::ProposalWeighted => {
            there - here + ctx.log_density(dataset, rho, p, tables)
                - ctx.log_density(dataset, &proposed, p, tables)
        }
    };

    let u: f64 = rng.random();
    let accepted = !log_alpha.is_nan() && u.ln() < log_alpha;
    Ok(SwapOutcome {
        rho: if accepted {
            proposed.clone()
        } else {
            rho.clone()
        },
        proposed,
        accepted,
    })
}

/// Exponential rates of the latent variables: for subject `s` and stage
/// `t`, the total weight of the items not yet placed (row-major `N x K`).
pub fn latent_rates(
    dataset: &Dataset,
    rho: &ReferenceOrder,
    p: &SupportParams,
) -> Result<Vec<f64>> {
    let paths = dataset.selection_paths(rho)?;
    let k = dataset.k();
    let w = p.as_slice();
    let mut rates = vec![0.0; dataset.n() * k];
    for (path, out) in paths.iter().zip(rates.chunks_exact_mut(k)) {
        let mut remaining = 0.0;
        for t in (0..k).rev() {
            remaining += w[path[t]];
            out[t] = remaining;
        }
    }
    Ok(rates)
}

/// Full-conditional draw of the latent exponentials.
pub fn gibbs_step_y<R: Rng + ?Sized>(
    dataset: &Dataset,
    rho: &ReferenceOrder,
    p: &SupportParams,
    rng: &mut R,
) -> Result<LatentMatrix> {
    let rates = latent_rates(dataset, rho, p)?;
    let values = rates
        .iter()
        .map(|&rate| {
            let e: f64 = Exp1.sample(rng);
            e / rate
        })
        .collect();
    LatentMatrix::new(dataset.n(), dataset.k(), values)
}

/// Full-conditional draw of the support weights:
/// `p_i ~ Gamma(c + N, d + exposure_i)`.
pub fn gibbs_step_p<R: Rng + ?Sized>(
    dataset: &Dataset,
    rho: &ReferenceOrder,
    y: &LatentMatrix,
    config: &ChainConfig,
    rng: &mut R,
) -> Result<SupportParams> {
    if y.n() != dataset.n() || y.k() != dataset.k() {
        return Err(Error::DimensionMismatch {
            expected: dataset.n() * dataset.k(),
            got: y.n() * y.k(),
        });
    }
    let shape = config.c + dataset.n() as f64;
    let exposure = dataset.selection_paths(rho)?.item_exposure(y);
    let values = exposure
        .iter()
        .map(|&e| {
            Gamma::new(shape, 1.0 / (config.d + e))
                .map(|g| g.sample(rng).max(f64::MIN_POSITIVE))
                .map_err(|err| Error::param(err.to_string()))
        })
        .collect::<Result<Vec<_>>>()?;
    SupportParams::new(values)
}
