//! Synthetic data, the reference-order recovery study, and a Monte Carlo
//! oracle for the posterior of `rho` on small instances.

use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, Gamma};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diagnostics::{batch_means_se, normalized_kendall, summarize_posterior};
use crate::error::{Error, Result};
use crate::model::{path_log_prob, sample_epl_ordering, Dataset, SupportParams};
use crate::perm::{compose_eta, enumerate_constrained_space, Ordering, ReferenceOrder};
use crate::sampler::{random_reference_order, run_chain, ChainConfig, ChainRng, Sample};

/// A dataset with the parameters that generated it.
#[derive(Debug, Clone)]
pub struct Simulated {
    pub dataset: Dataset,
    pub rho: ReferenceOrder,
    pub p: SupportParams,
}

/// `rho` uniform on the constrained space, `p_i` iid `Uniform(0, 1)`, and
/// `n` orderings from the resulting EPL.
pub fn simulate_dataset<R: Rng + ?Sized>(k: usize, n: usize, rng: &mut R) -> Result<Simulated> {
    if k < 2 || n < 1 {
        return Err(Error::param("simulation needs K >= 2 and N >= 1"));
    }
    let rho = random_reference_order(k, rng)?;
    // open interval: a zero weight is not a valid support parameter
    let p = SupportParams::new((0..k).map(|_| 1.0 - rng.random::<f64>()).collect())?;
    let orderings = (0..n)
        .map(|_| sample_epl_ordering(&rho, &p, rng))
        .collect::<Result<Vec<_>>>()?;
    Ok(Simulated {
        dataset: Dataset::new(orderings)?,
        rho,
        p,
    })
}

/// Grid cells `(K, N)` run by default: finishes in minutes on a desktop.
pub const DESK_GRID: [(usize, usize); 6] = [
    (5, 50),
    (5, 200),
    (5, 1000),
    (10, 50),
    (10, 200),
    (10, 1000),
];

/// Every cell of the original simulation study. Long-running.
pub const FULL_GRID: [(usize, usize); 12] = [
    (5, 50),
    (5, 200),
    (5, 1000),
    (5, 10000),
    (10, 50),
    (10, 200),
    (10, 1000),
    (10, 10000),
    (20, 50),
    (20, 200),
    (20, 1000),
    (20, 10000),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationRecord {
    pub replication: usize,
    pub true_rho: ReferenceOrder,
    pub estimate: ReferenceOrder,
    pub mode_mass: f64,
    pub distance: f64,
    pub recovered: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryReport {
    pub k: usize,
    pub n: usize,
    pub replications: usize,
    pub percent_recovered: f64,
    /// Mean posterior mass of the mode over replications where it equals
    /// the true order; `None` when there are none.
    pub mean_mode_mass: Option<f64>,
    /// Mean normalized Kendall distance between the true order and the
    /// mode, over all replications.
    pub mean_normalized_kendall: f64,
    pub records: Vec<ReplicationRecord>,
}

impl RecoveryReport {
    fn from_records(k: usize, n: usize, records: Vec<ReplicationRecord>) -> Self {
        let r = records.len() as f64;
        let hits: Vec<&ReplicationRecord> = records.iter().filter(|x| x.recovered).collect();
        let mean_mode_mass = (!hits.is_empty())
            .then(|| hits.iter().map(|x| x.mode_mass).sum::<f64>() / hits.len() as f64);
        Self {
            k,
            n,
            replications: records.len(),
            percent_recovered: 100.0 * hits.len() as f64 / r,
            mean_mode_mass,
            mean_normalized_kendall: records.iter().map(|x| x.distance).sum::<f64>() / r,
            records,
        }
    }
}

/// RNG of one replication: the stream is keyed by grid cell and
/// replication, so results do not depend on scheduling.
pub fn replication_rng(seed: u64, cell: usize, replication: usize) -> ChainRng {
    let mut rng = ChainRng::seed_from_u64(seed);
    rng.set_stream(((cell as u64) << 32) | replication as u64);
    rng
}

/// One replication: simulate, fit one chain from a prior draw, compare the
/// posterior mode with the truth.
pub fn recovery_replication(
    k: usize,
    n: usize,
    config: &ChainConfig,
    replication: usize,
    rng: &mut ChainRng,
) -> Result<ReplicationRecord> {
    let sim = simulate_dataset(k, n, rng)?;
    let chain = run_chain(&sim.dataset, config, None, rng)?;
    let summary = summarize_posterior(&chain.samples)?;
    let distance = normalized_kendall(sim.rho.ranks(), summary.rho_mode.ranks())?;
    Ok(ReplicationRecord {
        replication,
        recovered: summary.rho_mode == sim.rho,
        true_rho: sim.rho,
        estimate: summary.rho_mode,
        mode_mass: summary.rho_mode_mass,
        distance,
    })
}

/// Runs `replications` independent simulate-and-fit rounds for every grid
/// cell, in parallel.
pub fn recovery_experiment(
    grid: &[(usize, usize)],
    replications: usize,
    config: &ChainConfig,
    seed: u64,
) -> Result<Vec<RecoveryReport>> {
    config.validate()?;
    if replications == 0 {
        return Err(Error::param("at least one replication is needed"));
    }
    if let Some(&(k, n)) = grid.iter().find(|(k, n)| *k < 2 || *n < 1) {
        return Err(Error::param(format!(
            "invalid grid cell (K = {k}, N = {n})"
        )));
    }
    let units: Vec<(usize, usize)> = (0..grid.len())
        .flat_map(|c| (0..replications).map(move |r| (c, r)))
        .collect();
    let records = units
        .par_iter()
        .map(|&(c, r)| {
            let (k, n) = grid[c];
            recovery_replication(k, n, config, r + 1, &mut replication_rng(seed, c, r))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut records = records.into_iter();
    Ok(grid
        .iter()
        .map(|&(k, n)| {
            RecoveryReport::from_records(k, n, records.by_ref().take(replications).collect())
        })
        .collect())
}

/// Monte Carlo estimate of the posterior of `rho` over the constrained
/// space, in `W`-code order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleEstimate {
    pub orders: Vec<ReferenceOrder>,
    pub probs: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub draws: usize,
}

pub const ORACLE_MAX_K: usize = 4;
pub const ORACLE_MAX_N: usize = 30;

/// Posterior of `rho` from its marginal likelihood
/// `m(rho) = E[L(rho, p)]` under the Gamma prior, estimated with the same
/// prior draws for every `rho`. Standard errors use the delta method for
/// the ratio `m(rho) / sum(m)`.
///
/// `orderings` may be empty, in which case the posterior is the uniform
/// prior.
pub fn exact_rho_posterior_oracle<R: Rng + ?Sized>(
    k: usize,
    orderings: &[Ordering],
    config: &ChainConfig,
    draws: usize,
    rng: &mut R,
) -> Result<OracleEstimate> {
    if !(2..=ORACLE_MAX_K).contains(&k) {
        return Err(Error::param(format!(
            "the oracle supports 2 <= K <= {ORACLE_MAX_K}"
        )));
    }
    if orderings.len() > ORACLE_MAX_N {
        return Err(Error::param(format!(
            "the oracle supports N <= {ORACLE_MAX_N}"
        )));
    }
    if let Some(o) = orderings.iter().find(|o| o.len() != k) {
        return Err(Error::DimensionMismatch {
            expected: k,
            got: o.len(),
        });
    }
    if draws < 2 {
        return Err(Error::param("the oracle needs at least two prior draws"));
    }
    let prior = Gamma::new(config.c, 1.0 / config.d).map_err(|e| Error::param(e.to_string()))?;

    let orders = enumerate_constrained_space(k)?;
    let m = orders.len();
    let paths: Vec<Vec<Vec<usize>>> = orders
        .iter()
        .map(|rho| orderings.iter().map(|o| compose_eta(o, rho)).collect())
        .collect::<Result<_>>()?;

    // Running sums of z_r = exp(L_r - shift), of z_r^2, of z_r T and of T^2
    // with T = sum_r z_r; rescaled whenever the shift grows.
    let mut shift = f64::NEG_INFINITY;
    let (mut s, mut q, mut c) = (vec![0.0; m], vec![0.0; m], vec![0.0; m]);
    let mut tt = 0.0;
    let mut p = vec![0.0; k];
    let mut log_lik = vec![0.0; m];
    for _ in 0..draws {
        p.iter_mut()
            .for_each(|x| *x = prior.sample(rng).max(f64::MIN_POSITIVE));
        for (l, rho_paths) in log_lik.iter_mut().zip(&paths) {
            *l = rho_paths.iter().map(|path| path_log_prob(path, &p)).sum();
        }
        let top = log_lik.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if top > shift {
            let f = (shift - top).exp();
            let f2 = f * f;
            s.iter_mut().for_each(|x| *x *= f);
            q.iter_mut().for_each(|x| *x *= f2);
            c.iter_mut().for_each(|x| *x *= f2);
            tt *= f2;
            shift = top;
        }
        let z: Vec<f64> = log_lik.iter().map(|l| (l - shift).exp()).collect();
        let t: f64 = z.iter().sum();
        for r in 0..m {
            s[r] += z[r];
            q[r] += z[r] * z[r];
            c[r] += z[r] * t;
        }
        tt += t * t;
    }

    let j = draws as f64;
    let total: f64 = s.iter().sum();
    let probs: Vec<f64> = s.iter().map(|x| x / total).collect();
    let mean_t = total / j;
    let std_errors = (0..m)
        .map(|r| {
            // influence of draw i: (z_r - prob_r T) / mean(T)
            let pr = probs[r];
            let ss = q[r] - 2.0 * pr * c[r] + pr * pr * tt;
            let var = (ss / (j - 1.0)).max(0.0) / (mean_t * mean_t);
            (var / j).sqrt()
        })
        .collect();
    Ok(OracleEstimate {
        orders,
        probs,
        std_errors,
        draws,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleCell {
    pub rho: ReferenceOrder,
    pub oracle: f64,
    pub oracle_se: f64,
    pub mcmc: f64,
    pub mcmc_se: f64,
    /// `(mcmc - oracle) / sqrt(oracle_se^2 + mcmc_se^2)`.
    pub z: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleComparison {
    pub cells: Vec<OracleCell>,
    pub tolerance: f64,
    pub passed: bool,
}

/// Batches used for the Monte Carlo error of chain frequencies.
pub const COMPARISON_BATCHES: usize = 50;

/// Compares chain visit frequencies of each order with the oracle. Chains
/// are pooled; the standard error of a pooled frequency combines per-chain
/// batch-means errors, floored at the error of as many independent draws.
/// A cell passes when `|z| < tolerance`.
pub fn compare_with_oracle(
    chains: &[Vec<Sample>],
    oracle: &OracleEstimate,
    tolerance: f64,
) -> Result<OracleComparison> {
    if chains.is_empty() || chains.iter().any(Vec::is_empty) {
        return Err(Error::Empty("no chain samples to compare".into()));
    }
    let total: usize = chains.iter().map(Vec::len).sum();
    let cells = oracle
        .orders
        .iter()
        .enumerate()
        .map(|(r, rho)| {
            let mut hits = 0usize;
            let mut var = 0.0;
            for chain in chains {
                let ind: Vec<f64> = chain.iter().map(|s| (s.rho == *rho) as u8 as f64).collect();
                hits += ind.iter().filter(|&&x| x > 0.0).count();
                let w = chain.len() as f64 / total as f64;
                var += (w * batch_means_se(&ind, COMPARISON_BATCHES)).powi(2);
            }
            let mcmc = hits as f64 / total as f64;
            // a rarely visited order can have no visits at all, and a zero
            // batch-means error; never claim more precision than iid draws
            let pr = oracle.probs[r];
            let mcmc_se = var.sqrt().max((pr * (1.0 - pr) / total as f64).sqrt());
            let z = (mcmc - pr) / (oracle.std_errors[r].powi(2) + mcmc_se.powi(2)).sqrt();
            OracleCell {
                rho: rho.clone(),
                oracle: oracle.probs[r],
                oracle_se: oracle.std_errors[r],
                mcmc,
                mcmc_se,
                z,
            }
        })
        .collect::<Vec<_>>();
    let passed = cells
        .iter()
        .all(|c| c.z.abs() < tolerance || c.mcmc == c.oracle);
    Ok(OracleComparison {
        cells,
        tolerance,
        passed,
    })
}
