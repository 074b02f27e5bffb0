//! Tuned joint proposal for `(rho, p)`.
//!
//! A candidate is built stage by stage. The first flag is a coin with fixed
//! bias `lambda1`; the direction of `p` is then drawn from a Dirichlet
//! centered on the observed first- or last-rank item frequencies; every
//! later flag up to stage `K - 1` is a coin whose bias compares the observed
//! transitions between consecutive stages with those expected under the
//! drawn `p` (estimated by Monte Carlo). The final flag is forced.

use rand::Rng;

use crate::dist::{bernoulli_ln_pmf, dirichlet_ln_pdf, sample_dirichlet};
use crate::error::{Error, Result};
use crate::model::{pl_race, Dataset, SupportParams};
use crate::perm::{ReferenceOrder, TopBottomCode};

use super::ChainConfig;

/// Relative frequency of each item at a 0-based `rank` across subjects.
pub fn top_bottom_frequencies(dataset: &Dataset, rank: usize) -> Result<Vec<f64>> {
    let k = dataset.k();
    if rank != 0 && rank != k - 1 {
        return Err(Error::OutOfRange(format!(
            "frequencies are defined for the first or last rank, got {}",
            rank + 1
        )));
    }
    let mut freq = vec![0.0; k];
    for s in 0..dataset.n() {
        freq[dataset.item_at(s, rank)] += 1.0;
    }
    let n = dataset.n() as f64;
    freq.iter_mut().for_each(|f| *f /= n);
    Ok(freq)
}

/// Floors every entry at `1 / (n k)` and renormalizes, so that the
/// Dirichlet built on it is proper.
pub fn floor_frequencies(freq: &[f64], n: usize) -> Vec<f64> {
    let floor = 1.0 / (n * freq.len()) as f64;
    let floored: Vec<f64> = freq.iter().map(|&f| f.max(floor)).collect();
    let total: f64 = floored.iter().sum();
    floored.into_iter().map(|f| f / total).collect()
}

/// Monte Carlo counts of consecutive-stage item pairs under a
/// Plackett-Luce model.
///
/// Table `t` (for 0-based stages `1..=K-2`) is a row-major `K x K` matrix
/// whose `(i, j)` entry counts draws selecting `i` at stage `t - 1` and `j`
/// at stage `t`. The tables do not depend on the reference order, so one
/// batch of draws serves every stage.
#[derive(Debug, Clone, PartialEq)]
pub struct McTables {
    k: usize,
    mc_size: usize,
    counts: Vec<Vec<u32>>,
}

impl McTables {
    pub fn draw<R: Rng + ?Sized>(p: &[f64], mc_size: usize, rng: &mut R) -> Self {
        let k = p.len();
        let stages = k.saturating_sub(2);
        let mut counts = vec![vec![0u32; k * k]; stages];
        if stages > 0 {
            let (mut order, mut keys) = (Vec::with_capacity(k), Vec::with_capacity(k));
            for _ in 0..mc_size {
                pl_race(p, rng, &mut order, &mut keys);
                for (t, table) in counts.iter_mut().enumerate() {
                    table[order[t] * k + order[t + 1]] += 1;
                }
            }
        }
        Self { k, mc_size, counts }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn mc_size(&self) -> usize {
        self.mc_size
    }

    /// Counts for 0-based stage `t` in `1..=K-2`.
    pub fn table(&self, t: usize) -> &[u32] {
        &self.counts[t - 1]
    }
}

/// One expected-frequency table for 0-based stage `t` (`1 <= t <= K - 2`).
pub fn expected_frequency_table<R: Rng + ?Sized>(
    p: &SupportParams,
    t: usize,
    mc_size: usize,
    rng: &mut R,
) -> Result<Vec<u32>> {
    let k = p.len();
    if t == 0 || t + 2 > k {
        return Err(Error::OutOfRange(format!(
            "stage {} has no transition table for K = {k}",
            t + 1
        )));
    }
    let mut table = vec![0u32; k * k];
    let (mut order, mut keys) = (Vec::new(), Vec::new());
    for _ in 0..mc_size {
        pl_race(p.as_slice(), rng, &mut order, &mut keys);
        table[order[t - 1] * k + order[t]] += 1;
    }
    Ok(table)
}

/// Top-selection probability from the two transition distances.
///
/// `d = 1 - d_top / (d_top + d_bottom)` is mapped onto `[h, 1 - h]`. When
/// both distances vanish there is no evidence either way and `d = 0.5`.
pub fn lambda_from_distances(d_top: f64, d_bottom: f64, h: f64) -> f64 {
    let total = d_top + d_bottom;
    let d = if total > 0.0 {
        1.0 - d_top / total
    } else {
        0.5
    };
    d * (1.0 - 2.0 * h) + h
}

/// Top-selection probability at 0-based stage `t = prefix.len()`, given
/// the ranks fixed at the earlier stages.
///
/// Observed transitions go from the item at the previous stage's rank to
/// the item at the best (resp. worst) free rank, and are compared with
/// `expected` rescaled from `mc_size` draws to `N` subjects.
pub fn stage_lambda(
    dataset: &Dataset,
    prefix: &[usize],
    expected: &[u32],
    mc_size: usize,
    h: f64,
) -> f64 {
    let k = dataset.k();
    let t = prefix.len();
    debug_assert!(t >= 1 && t + 1 < k);
    debug_assert_eq!(expected.len(), k * k);

    let mut taken = vec![false; k];
    prefix.iter().for_each(|&r| taken[r] = true);
    let top = taken.iter().position(|&x| !x).expect("a free rank");
    let bottom = taken.iter().rposition(|&x| !x).expect("a free rank");
    let prev = prefix[t - 1];

    let mut tau = vec![0u32; k * k];
    let mut beta = vec![0u32; k * k];
    for s in 0..dataset.n() {
        let i = dataset.item_at(s, prev);
        tau[i * k + dataset.item_at(s, top)] += 1;
        beta[i * k + dataset.item_at(s, bottom)] += 1;
    }

    let scale = dataset.n() as f64 / mc_size as f64;
    let (mut d_top, mut d_bottom) = (0.0, 0.0);
    for cell in 0..k * k {
        let e = scale * expected[cell] as f64;
        d_top += (tau[cell] as f64 - e).powi(2);
        d_bottom += (beta[cell] as f64 - e).powi(2);
    }
    lambda_from_distances(d_top, d_bottom, h)
}

/// What the proposal did, kept for reverse-density evaluation.
#[derive(Debug, Clone)]
pub struct ProposalTrace {
    /// Top-selection probability used at every stage; the last is 1.
    pub lambda: Vec<f64>,
    pub code: TopBottomCode,
    pub log_density: f64,
    pub mc_tables: McTables,
}

/// A candidate `(rho, p)` with `p` on the simplex.
#[derive(Debug, Clone)]
pub struct JointProposal {
    pub rho: ReferenceOrder,
    pub p: SupportParams,
    pub trace: ProposalTrace,
}

/// Data-dependent pieces of the proposal, fixed for a given dataset.
#[derive(Debug, Clone)]
pub struct ProposalContext {
    alpha_top: Vec<f64>,
    alpha_bottom: Vec<f64>,
    lambda1: f64,
    h: f64,
    mc_size: usize,
}

impl ProposalContext {
    pub fn new(dataset: &Dataset, config: &ChainConfig) -> Result<Self> {
        let k = dataset.k();
        let n = dataset.n();
        let alpha = |rank| -> Result<Vec<f64>> {
            Ok(
                floor_frequencies(&top_bottom_frequencies(dataset, rank)?, n)
                    .into_iter()
                    .map(|r| config.alpha0 * r)
                    .collect(),
            )
        };
        Ok(Self {
            alpha_top: alpha(0)?,
            alpha_bottom: alpha(k - 1)?,
            lambda1: config.lambda1,
            h: config.h,
            mc_size: config.mc_size_for(n),
        })
    }

    pub fn mc_size(&self) -> usize {
        self.mc_size
    }

    /// Dirichlet concentration used when the first stage picks the top
    /// (`true`) or the bottom rank.
    pub fn concentration(&self, first_is_top: bool) -> &[f64] {
        if first_is_top {
            &self.alpha_top
        } else {
            &self.alpha_bottom
        }
    }

    pub fn draw_tables<R: Rng + ?Sized>(&self, p: &SupportParams, rng: &mut R) -> McTables {
        McTables::draw(p.normalized().as_slice(), self.mc_size, rng)
    }

    pub fn propose<R: Rng + ?Sized>(
        &self,
        dataset: &Dataset,
        rng: &mut R,
    ) -> Result<JointProposal> {
        let k = dataset.k();
        let first_top = rng.random_bool(self.lambda1);

        let alpha = self.concentration(first_top);
        let mut direction = sample_dirichlet(alpha, rng);
        // coordinates can underflow for tiny concentrations
        direction
            .iter_mut()
            .for_each(|x| *x = x.max(f64::MIN_POSITIVE));
        let p = SupportParams::new(direction)?;
        let mc_tables = McTables::draw(p.as_slice(), self.mc_size, rng);

        let mut lambda = Vec::with_capacity(k);
        let mut w = Vec::with_capacity(k);
        let mut ranks = Vec::with_capacity(k);
        let (mut lo, mut hi) = (0usize, k - 1);
        let mut code_density = 0.0;

        for t in 0..k {
            let (lam, top) = if t == k - 1 {
                (1.0, true)
            } else {
                let lam = if t == 0 {
                    self.lambda1
                } else {
                    stage_lambda(dataset, &ranks, mc_tables.table(t), self.mc_size, self.h)
                };
                let top = if t == 0 {
                    first_top
                } else {
                    rng.random_bool(lam)
                };
                code_density += bernoulli_ln_pmf(top, lam);
                (lam, top)
            };
            lambda.push(lam);
            w.push(top);
            if top {
                ranks.push(lo);
                lo += 1;
            } else {
                ranks.push(hi);
                hi -= 1;
            }
        }

        // same arithmetic as `log_density`, so a replay matches exactly
        let log_density = dirichlet_ln_pdf(p.normalized().as_slice(), alpha) + code_density;
        let code = TopBottomCode::from_w(w)?;
        let rho = ReferenceOrder::from_code(code.clone());
        debug_assert_eq!(rho.ranks(), ranks.as_slice());
        Ok(JointProposal {
            rho,
            p,
            trace: ProposalTrace {
                lambda,
                code,
                log_density,
                mc_tables,
            },
        })
    }

    /// Log-probability of the flags of `rho` when replayed against `tables`.
    pub fn code_log_density(
        &self,
        dataset: &Dataset,
        rho: &ReferenceOrder,
        tables: &McTables,
    ) -> f64 {
        let k = rho.len();
        let w = rho.code().w();
        let mut acc = bernoulli_ln_pmf(w[0], self.lambda1);
        for (t, &top) in w.iter().enumerate().take(k.saturating_sub(1)).skip(1) {
            let lam = stage_lambda(
                dataset,
                &rho.ranks()[..t],
                tables.table(t),
                self.mc_size,
                self.h,
            );
            acc += bernoulli_ln_pmf(top, lam);
        }
        acc
    }

    /// Joint proposal log-density of `(rho, p)`, evaluating the Dirichlet
    /// factor at `p` rescaled onto the simplex.
    pub fn log_density(
        &self,
        dataset: &Dataset,
        rho: &ReferenceOrder,
        p: &SupportParams,
        tables: &McTables,
    ) -> f64 {
        let first_top = rho.code().w()[0];
        let u = p.normalized();
        dirichlet_ln_pdf(u.as_slice(), self.concentration(first_top))
            + self.code_log_density(dataset, rho, tables)
    }
}

/// Draws a candidate `(rho, p)` from the tuned joint proposal.
pub fn propose_joint<R: Rng + ?Sized>(
    dataset: &Dataset,
    config: &ChainConfig,
    rng: &mut R,
) -> Result<JointProposal> {
    ProposalContext::new(dataset, config)?.propose(dataset, rng)
}

/// Proposal log-density of `(rho, p)` given frozen Monte Carlo tables.
pub fn eval_proposal_log_density(
    dataset: &Dataset,
    rho: &ReferenceOrder,
    p: &SupportParams,
    tables: &McTables,
    config: &ChainConfig,
) -> Result<f64> {
    Ok(ProposalContext::new(dataset, config)?.log_density(dataset, rho, p, tables))
}
