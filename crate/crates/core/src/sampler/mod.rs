//! Posterior simulation for the constrained EPL.
//!
//! Each sweep composes three kernels:
//!
//! 1. a Metropolis-Hastings move on `(rho, p)` driven by the tuned joint
//!    proposal in [`proposal`];
//! 2. an adjacent-swap Metropolis move on `rho` alone;
//! 3. a Gibbs cycle over the latent exponentials `y` and the weights `p`.
//!
//! The likelihood only identifies `p` up to scale. Under the Gamma prior the
//! total `S = sum(p)` is independent of `(rho, p / S)` a posteriori with law
//! `Gamma(K c, d)`, while the direction `p / S` carries a flat-on-`c`
//! Dirichlet prior. The joint move works in those coordinates: it proposes a
//! direction on the simplex and a fresh total from its exact law, so the
//! acceptance ratio only involves the direction.

mod proposal;
mod steps;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dist::gamma_ln_pdf;
use crate::error::{Error, Result};
use crate::model::{Dataset, LatentMatrix, SupportParams};
use crate::perm::{reference_order_from_index, ReferenceOrder};

pub use proposal::{
    eval_proposal_log_density, expected_frequency_table, floor_frequencies, lambda_from_distances,
    propose_joint, stage_lambda, top_bottom_frequencies, JointProposal, McTables, ProposalContext,
    ProposalTrace,
};
pub use steps::{
    gibbs_step_p, gibbs_step_y, latent_rates, swap_step, tjm_log_acceptance, tjm_step, SwapOutcome,
    TjmOutcome,
};

/// RNG used for every chain; seeded per chain so runs replay exactly.
pub type ChainRng = ChaCha8Rng;

/// RNG for chain (or replication) `index` of a run seeded with `seed`.
pub fn chain_rng(seed: u64, index: u64) -> ChainRng {
    ChaCha8Rng::seed_from_u64(seed.wrapping_add(index))
}

/// Acceptance rule for the adjacent-swap move.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SwapRule {
    /// Likelihood ratio with the Hastings correction for the number of
    /// applicable swaps on each side. Leaves the posterior invariant.
    #[default]
    Posterior,
    /// Likelihood ratio times the inverse ratio of joint-proposal densities,
    /// without the swap-count correction. Kept for comparison only: it does
    /// not leave the posterior invariant.
    ProposalWeighted,
}

/// Tuning constants and run lengths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChainConfig {
    pub iterations: usize,
    pub burn_in: usize,
    /// Gamma prior shape.
    pub c: f64,
    /// Gamma prior rate.
    pub d: f64,
    /// Dirichlet concentration scale of the joint proposal.
    pub alpha0: f64,
    /// Floor on the bottom-selection probability at stages `2..K-1`.
    pub h: f64,
    /// Top-selection probability at the first stage.
    pub lambda1: f64,
    /// Monte Carlo draws per expected-frequency table; `None` means `N`.
    pub mc_size: Option<usize>,
    pub seed: u64,
    pub swap_rule: SwapRule,
}

impl Default for ChainConfig {
    fn default() -> Self {
        Self {
            iterations: 10_000,
            burn_in: 2_000,
            c: 1.0,
            d: 1.0,
            alpha0: 50.0,
            h: 0.1,
            lambda1: 0.5,
            mc_size: None,
            seed: 0,
            swap_rule: SwapRule::Posterior,
        }
    }
}

impl ChainConfig {
    pub fn validate(&self) -> Result<()> {
        let check = |ok: bool, msg: &str| if ok { Ok(()) } else { Err(Error::param(msg)) };
        check(self.iterations > 0, "iterations must be positive")?;
        check(
            self.burn_in < self.iterations,
            "burn-in must be smaller than iterations",
        )?;
        check(self.c > 0.0 && self.c.is_finite(), "c must be positive")?;
        check(self.d > 0.0 && self.d.is_finite(), "d must be positive")?;
        check(
            self.alpha0 > 0.0 && self.alpha0.is_finite(),
            "alpha0 must be positive",
        )?;
        check(self.h > 0.0 && self.h < 0.5, "h must lie in (0, 0.5)")?;
        check(
            self.lambda1 > 0.0 && self.lambda1 < 1.0,
            "lambda1 must lie in (0, 1)",
        )?;
        check(self.mc_size != Some(0), "mc-size must be positive")?;
        Ok(())
    }

    pub fn mc_size_for(&self, n: usize) -> usize {
        self.mc_size.unwrap_or(n).max(1)
    }
}

/// Current values of every unknown.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainState {
    pub rho: ReferenceOrder,
    pub p: SupportParams,
    pub y: LatentMatrix,
    pub iteration: usize,
}

impl ChainState {
    /// Uniform `rho` on the constrained space, `p` from the prior, and `y`
    /// from its full conditional.
    pub fn from_prior<R: Rng + ?Sized>(
        dataset: &Dataset,
        config: &ChainConfig,
        rng: &mut R,
    ) -> Result<Self> {
        let k = dataset.k();
        let rho = random_reference_order(k, rng)?;
        let p = sample_prior_p(k, config, rng)?;
        let y = gibbs_step_y(dataset, &rho, &p, rng)?;
        Ok(Self {
            rho,
            p,
            y,
            iteration: 0,
        })
    }
}

/// Uniform draw from the constrained space via independent code bits.
pub fn random_reference_order<R: Rng + ?Sized>(k: usize, rng: &mut R) -> Result<ReferenceOrder> {
    if k == 0 {
        return Err(Error::param("K must be at least 1"));
    }
    let mut index = 0usize;
    for _ in 0..k - 1 {
        index = (index << 1) | rng.random_bool(0.5) as usize;
    }
    reference_order_from_index(k, index)
}

pub fn sample_prior_p<R: Rng + ?Sized>(
    k: usize,
    config: &ChainConfig,
    rng: &mut R,
) -> Result<SupportParams> {
    use rand_distr::{Distribution, Gamma};
    let prior = Gamma::new(config.c, 1.0 / config.d).map_err(|e| Error::param(e.to_string()))?;
    SupportParams::new(
        (0..k)
            .map(|_| prior.sample(rng).max(f64::MIN_POSITIVE))
            .collect(),
    )
}

/// Log posterior density of `(rho, p)` up to a constant: observed-data
/// log-likelihood plus the Gamma log prior (the prior on `rho` is flat).
pub fn log_posterior(
    dataset: &Dataset,
    rho: &ReferenceOrder,
    p: &SupportParams,
    config: &ChainConfig,
) -> Result<f64> {
    let lik = crate::model::observed_data_log_lik(dataset, rho, p)?;
    Ok(lik + log_prior_p(p, config))
}

fn log_prior_p(p: &SupportParams, config: &ChainConfig) -> f64 {
    p.as_slice()
        .iter()
        .map(|&x| gamma_ln_pdf(x, config.c, config.d))
        .sum()
}

/// Per-sweep acceptance flags.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SweepOutcome {
    pub joint_accepted: bool,
    pub swap_accepted: bool,
}

/// A Markov transition on the full state for a fixed dataset.
pub trait Kernel {
    fn sweep(
        &mut self,
        state: &mut ChainState,
        dataset: &Dataset,
        rng: &mut ChainRng,
    ) -> Result<SweepOutcome>;
}

/// Joint MH, then swap move, then the Gibbs cycle.
#[derive(Debug, Clone)]
pub struct TjmWithinGibbs {
    pub config: ChainConfig,
}

impl TjmWithinGibbs {
    pub fn new(config: ChainConfig) -> Self {
        Self { config }
    }
}

impl Kernel for TjmWithinGibbs {
    fn sweep(
        &mut self,
        state: &mut ChainState,
        dataset: &Dataset,
        rng: &mut ChainRng,
    ) -> Result<SweepOutcome> {
        let ctx = ProposalContext::new(dataset, &self.config)?;
        let joint = tjm_step(state, dataset, &ctx, &self.config, rng)?;
        let swap = swap_step(
            &joint.rho,
            &joint.p,
            dataset,
            &ctx,
            &self.config,
            &joint.tables,
            Some(joint.log_lik),
            rng,
        )?;
        let y = gibbs_step_y(dataset, &swap.rho, &joint.p, rng)?;
        let p = gibbs_step_p(dataset, &swap.rho, &y, &self.config, rng)?;
        state.rho = swap.rho;
        state.p = p;
        state.y = y;
        state.iteration += 1;
        Ok(SweepOutcome {
            joint_accepted: joint.accepted,
            swap_accepted: swap.accepted,
        })
    }
}

/// One retained draw.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub iteration: usize,
    pub log_posterior: f64,
    pub rho: ReferenceOrder,
    pub p: SupportParams,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct AcceptanceStats {
    pub sweeps: usize,
    pub joint_accepted: usize,
    pub swap_accepted: usize,
}

impl AcceptanceStats {
    pub fn joint_rate(&self) -> f64 {
        self.joint_accepted as f64 / self.sweeps.max(1) as f64
    }

    pub fn swap_rate(&self) -> f64 {
        self.swap_accepted as f64 / self.sweeps.max(1) as f64
    }
}

/// Post-burn-in draws of one chain.
#[derive(Debug, Clone)]
pub struct Chain {
    pub samples: Vec<Sample>,
    pub acceptance: AcceptanceStats,
    pub final_state: ChainState,
}

/// Runs a chain with the default kernel.
pub fn run_chain(
    dataset: &Dataset,
    config: &ChainConfig,
    init: Option<ChainState>,
    rng: &mut ChainRng,
) -> Result<Chain> {
    run_chain_with(
        &mut TjmWithinGibbs::new(config.clone()),
        dataset,
        config,
        init,
        rng,
    )
}

/// Runs a chain with an arbitrary kernel, recording draws after burn-in.
pub fn run_chain_with<K: Kernel>(
    kernel: &mut K,
    dataset: &Dataset,
    config: &ChainConfig,
    init: Option<ChainState>,
    rng: &mut ChainRng,
) -> Result<Chain> {
    config.validate()?;
    if dataset.k() < 2 {
        return Err(Error::param(
            "at least two items are needed to fit the model",
        ));
    }
    let mut state = match init {
        Some(s) => {
            if s.rho.len() != dataset.k() || s.p.len() != dataset.k() {
                return Err(Error::DimensionMismatch {
                    expected: dataset.k(),
                    got: s.rho.len(),
                });
            }
            s
        }
        None => ChainState::from_prior(dataset, config, rng)?,
    };

    let mut acceptance = AcceptanceStats::default();
    let mut samples = Vec::with_capacity(config.iterations - config.burn_in);
    for l in 0..config.iterations {
        let outcome = kernel.sweep(&mut state, dataset, rng)?;
        acceptance.sweeps += 1;
        acceptance.joint_accepted += outcome.joint_accepted as usize;
        acceptance.swap_accepted += outcome.swap_accepted as usize;
        if l >= config.burn_in {
            samples.push(Sample {
                iteration: l + 1,
                log_posterior: log_posterior(dataset, &state.rho, &state.p, config)?,
                rho: state.rho.clone(),
                p: state.p.clone(),
            });
        }
    }
    Ok(Chain {
        samples,
        acceptance,
        final_state: state,
    })
}
