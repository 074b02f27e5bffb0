//! Extended Plackett-Luce distributions over orderings.
//!
//! Under `EPL(rho, p)` the ranks are filled in the stage order given by
//! `rho`: at stage `t` an item is drawn among those still unplaced with
//! probability proportional to its support weight, and it receives rank
//! `rho[t]`. With `rho` the forward order this is the usual Plackett-Luce
//! model.

use rand::Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::perm::{Ordering, ReferenceOrder};

/// Positive item support weights. No normalization is imposed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct SupportParams(Vec<f64>);

impl SupportParams {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Empty("support parameters".into()));
        }
        if let Some((i, v)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !(v.is_finite() && **v > 0.0))
        {
            return Err(Error::param(format!(
                "support parameter {} must be positive and finite, got {v}",
                i + 1
            )));
        }
        Ok(Self(values))
    }

    pub fn uniform(k: usize) -> Self {
        Self(vec![1.0; k])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn sum(&self) -> f64 {
        self.0.iter().sum()
    }

    /// The same weights rescaled onto the simplex.
    pub fn normalized(&self) -> Self {
        let total = self.sum();
        Self(self.0.iter().map(|v| v / total).collect())
    }

    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(self.0.iter().map(|v| v * factor).collect())
    }
}

impl TryFrom<Vec<f64>> for SupportParams {
    type Error = Error;

    fn try_from(values: Vec<f64>) -> Result<Self> {
        Self::new(values)
    }
}

impl From<SupportParams> for Vec<f64> {
    fn from(p: SupportParams) -> Self {
        p.0
    }
}

/// A sample of complete orderings of the same `K` items.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    k: usize,
    orderings: Vec<Ordering>,
}

impl Dataset {
    pub fn new(orderings: Vec<Ordering>) -> Result<Self> {
        let first = orderings
            .first()
            .ok_or_else(|| Error::Empty("dataset has no orderings".into()))?;
        let k = first.len();
        if k == 0 {
            return Err(Error::Empty("orderings have no items".into()));
        }
        for (s, o) in orderings.iter().enumerate() {
            if o.len() != k {
                return Err(Error::BadRow {
                    row: s + 1,
                    reason: format!("expected {k} items, found {}", o.len()),
                });
            }
        }
        Ok(Self { k, orderings })
    }

    pub fn n(&self) -> usize {
        self.orderings.len()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn orderings(&self) -> &[Ordering] {
        &self.orderings
    }

    /// Item placed at `rank` by subject `s` (both 0-based).
    #[inline]
    pub fn item_at(&self, s: usize, rank: usize) -> usize {
        self.orderings[s].item_at(rank)
    }

    /// Items in order of selection for every subject under `rho`.
    pub fn selection_paths(&self, rho: &ReferenceOrder) -> Result<SelectionPaths> {
        check_k(self.k, rho.len())?;
        let mut items = Vec::with_capacity(self.n() * self.k);
        for o in &self.orderings {
            items.extend(rho.ranks().iter().map(|&r| o.item_at(r)));
        }
        Ok(SelectionPaths { k: self.k, items })
    }
}

/// Per-subject item selected at each stage, stored row-major (`N x K`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SelectionPaths {
    k: usize,
    items: Vec<usize>,
}

impl SelectionPaths {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n(&self) -> usize {
        self.items.len() / self.k
    }

    pub fn subject(&self, s: usize) -> &[usize] {
        &self.items[s * self.k..(s + 1) * self.k]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[usize]> {
        self.items.chunks_exact(self.k)
    }

    /// Log-likelihood of all paths under weights `p`.
    pub fn log_lik(&self, p: &[f64]) -> f64 {
        self.iter().map(|path| path_log_prob(path, p)).sum()
    }

    /// For each item, the sum over subjects and stages of `y[s][t]` over the
    /// stages at which the item was still available.
    pub fn item_exposure(&self, y: &LatentMatrix) -> Vec<f64> {
        let mut exposure = vec![0.0; self.k];
        for (s, path) in self.iter().enumerate() {
            let row = y.row(s);
            let mut cum = 0.0;
            for (t, &item) in path.iter().enumerate() {
                cum += row[t];
                exposure[item] += cum;
            }
        }
        exposure
    }
}

/// Auxiliary exponential variables, one per subject and stage.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentMatrix {
    n: usize,
    k: usize,
    values: Vec<f64>,
}

impl LatentMatrix {
    pub fn new(n: usize, k: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != n * k {
            return Err(Error::DimensionMismatch {
                expected: n * k,
                got: values.len(),
            });
        }
        if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::param("latent values must be finite and nonnegative"));
        }
        Ok(Self { n, k, values })
    }

    pub fn zeros(n: usize, k: usize) -> Self {
        Self {
            n,
            k,
            values: vec![0.0; n * k],
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn get(&self, s: usize, t: usize) -> f64 {
        self.values[s * self.k + t]
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.values[s * self.k..(s + 1) * self.k]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }
}

fn check_k(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::DimensionMismatch { expected, got });
    }
    Ok(())
}

fn check_modelable(k: usize) -> Result<()> {
    if k < 2 {
        return Err(Error::param("likelihoods need at least two items"));
    }
    Ok(())
}

/// Log-probability of selecting the items of `path` in that order,
/// drawing without replacement proportionally to `p`.
///
/// Denominators come from a running suffix sum; the final stage is
/// certain and contributes nothing.
pub fn path_log_prob(path: &[usize], p: &[f64]) -> f64 {
    let k = path.len();
    if k < 2 {
        return 0.0;
    }
    let mut remaining = p[path[k - 1]];
    let mut acc = 0.0;
    for &item in path[..k - 1].iter().rev() {
        remaining += p[item];
        acc += (p[item] / remaining).ln();
    }
    acc
}

/// Log-probability of ordering `o` under `EPL(rho, p)`.
pub fn epl_log_prob(o: &Ordering, rho: &ReferenceOrder, p: &SupportParams) -> Result<f64> {
    check_k(rho.len(), o.len())?;
    check_k(rho.len(), p.len())?;
    check_modelable(o.len())?;
    let path: Vec<usize> = rho.ranks().iter().map(|&r| o.item_at(r)).collect();
    Ok(path_log_prob(&path, p.as_slice()))
}

/// Log-probability of `o` under the standard (forward-order) Plackett-Luce.
pub fn pl_log_prob(o: &Ordering, p: &SupportParams) -> Result<f64> {
    check_k(p.len(), o.len())?;
    check_modelable(o.len())?;
    Ok(path_log_prob(o.as_slice(), p.as_slice()))
}

/// Fills `keys` and returns the items sorted by selection stage.
///
/// Uses the exponential race: with independent `E_i ~ Exp(1)`, sorting the
/// items by `E_i / p_i` yields a Plackett-Luce draw.
pub(crate) fn pl_race<R: Rng + ?Sized>(
    p: &[f64],
    rng: &mut R,
    order: &mut Vec<usize>,
    keys: &mut Vec<f64>,
) {
    keys.clear();
    keys.extend(p.iter().map(|&w| {
        let e: f64 = Exp1.sample(rng);
        e / w
    }));
    order.clear();
    order.extend(0..p.len());
    order.sort_unstable_by(|&a, &b| keys[a].total_cmp(&keys[b]));
}

/// Draws the first `t` stage selections of a Plackett-Luce process.
pub fn sample_pl_prefix<R: Rng + ?Sized>(
    p: &SupportParams,
    t: usize,
    rng: &mut R,
) -> Result<Vec<usize>> {
    if t == 0 || t > p.len() {
        return Err(Error::OutOfRange(format!(
            "prefix length {t} for K = {}",
            p.len()
        )));
    }
    let (mut order, mut keys) = (Vec::new(), Vec::new());
    pl_race(p.as_slice(), rng, &mut order, &mut keys);
    order.truncate(t);
    Ok(order)
}

/// Draws an ordering from `EPL(rho, p)`.
pub fn sample_epl_ordering<R: Rng + ?Sized>(
    rho: &ReferenceOrder,
    p: &SupportParams,
    rng: &mut R,
) -> Result<Ordering> {
    check_k(rho.len(), p.len())?;
    let eta = sample_pl_prefix(p, p.len(), rng)?;
    let mut items = vec![0; p.len()];
    for (&rank, &item) in rho.ranks().iter().zip(&eta) {
        items[rank] = item;
    }
    Ordering::new(items)
}

/// Whether item `i` is still unplaced at the start of stage `t` for subject
/// `s` (all 0-based).
pub fn delta_indicator(
    dataset: &Dataset,
    rho: &ReferenceOrder,
    s: usize,
    t: usize,
    i: usize,
) -> Result<bool> {
    check_k(dataset.k(), rho.len())?;
    let k = dataset.k();
    if s >= dataset.n() || t >= k || i >= k {
        return Err(Error::OutOfRange(format!(
            "(s, t, i) = ({}, {}, {}) for N = {}, K = {k}",
            s + 1,
            t + 1,
            i + 1,
            dataset.n()
        )));
    }
    Ok(rho.ranks()[t..].iter().any(|&r| dataset.item_at(s, r) == i))
}

/// Complete-data log-likelihood of `(rho, p, y)`.
pub fn complete_data_log_lik(
    dataset: &Dataset,
    rho: &ReferenceOrder,
    p: &SupportParams,
    y: &LatentMatrix,
) -> Result<f64> {
    check_k(dataset.k(), p.len())?;
    check_modelable(dataset.k())?;
    if y.n() != dataset.n() || y.k() != dataset.k() {
        return Err(Error::DimensionMismatch {
            expected: dataset.n() * dataset.k(),
            got: y.n() * y.k(),
        });
    }
    let paths = dataset.selection_paths(rho)?;
    let exposure = paths.item_exposure(y);
    let n = dataset.n() as f64;
    Ok(p.as_slice()
        .iter()
        .zip(&exposure)
        .map(|(&pi, &e)| n * pi.ln() - pi * e)
        .sum())
}

/// Observed-data log-likelihood: the sum of EPL log-probabilities.
pub fn observed_data_log_lik(
    dataset: &Dataset,
    rho: &ReferenceOrder,
    p: &SupportParams,
) -> Result<f64> {
    check_k(dataset.k(), p.len())?;
    check_modelable(dataset.k())?;
    Ok(dataset.selection_paths(rho)?.log_lik(p.as_slice()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn o(v: &[usize]) -> Ordering {
        Ordering::from_one_based(v).unwrap()
    }

    fn rho(v: &[usize]) -> ReferenceOrder {
        ReferenceOrder::from_one_based(v).unwrap()
    }

    fn p(v: &[f64]) -> SupportParams {
        SupportParams::new(v.to_vec()).unwrap()
    }

    #[test]
    fn uniform_weights_give_uniform_orderings() {
        let v = epl_log_prob(&o(&[2, 3, 1]), &rho(&[1, 2, 3]), &p(&[1.0, 1.0, 1.0])).unwrap();
        assert!((v - (1.0f64 / 6.0).ln()).abs() < 1e-14);
        let v = pl_log_prob(&o(&[4, 1, 3, 2]), &p(&[2.5; 4])).unwrap();
        assert!((v - (1.0f64 / 24.0).ln()).abs() < 1e-14);
    }

    #[test]
    fn stagewise_product_example() {
        // stage 1 puts item 3 at rank 3 (1/4), stage 2 puts item 1 at rank 1
        // (2/3), stage 3 is forced
        let v = epl_log_prob(&o(&[1, 2, 3]), &rho(&[3, 1, 2]), &p(&[2.0, 1.0, 1.0])).unwrap();
        assert!((v - (1.0f64 / 6.0).ln()).abs() < 1e-14);
    }

    #[test]
    fn two_items_single_stage() {
        let v = pl_log_prob(&o(&[1, 2]), &p(&[3.0, 1.0])).unwrap();
        assert!((v - 0.75f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(epl_log_prob(&o(&[1, 2]), &rho(&[1, 2, 3]), &p(&[1.0, 1.0, 1.0])).is_err());
        assert!(pl_log_prob(&o(&[1]), &p(&[1.0])).is_err());
        assert!(SupportParams::new(vec![1.0, 0.0]).is_err());
        assert!(SupportParams::new(vec![1.0, f64::NAN]).is_err());
        assert!(Dataset::new(vec![]).is_err());
        assert!(Dataset::new(vec![o(&[1, 2]), o(&[1, 2, 3])]).is_err());
    }

    #[test]
    fn delta_examples() {
        let data = Dataset::new(vec![o(&[1, 2, 3]), o(&[3, 1, 2])]).unwrap();
        let r = rho(&[3, 1, 2]);
        for s in 0..2 {
            for i in 0..3 {
                assert!(delta_indicator(&data, &r, s, 0, i).unwrap());
            }
            let last: usize = (0..3)
                .filter(|&i| delta_indicator(&data, &r, s, 2, i).unwrap())
                .count();
            assert_eq!(last, 1);
        }
        let at_stage_2: Vec<bool> = (0..3)
            .map(|i| delta_indicator(&data, &r, 0, 1, i).unwrap())
            .collect();
        assert_eq!(at_stage_2, [true, true, false]);
        assert!(delta_indicator(&data, &r, 2, 0, 0).is_err());
    }

    #[test]
    fn complete_data_log_lik_special_cases() {
        let data = Dataset::new(vec![o(&[1, 2, 3]), o(&[2, 3, 1])]).unwrap();
        let r = rho(&[1, 3, 2]);
        let weights = p(&[0.5, 2.0, 1.5]);
        let zeros = LatentMatrix::zeros(2, 3);
        let v = complete_data_log_lik(&data, &r, &weights, &zeros).unwrap();
        let expected = 2.0 * (0.5f64.ln() + 2.0f64.ln() + 1.5f64.ln());
        assert!((v - expected).abs() < 1e-12);

        let y = LatentMatrix::new(2, 3, vec![0.3, 1.1, 0.4, 2.0, 0.7, 0.1]).unwrap();
        let v = complete_data_log_lik(&data, &r, &SupportParams::uniform(3), &y).unwrap();
        // delta row counts are K - t + 1 = 3, 2, 1
        let expected = -(0.3 * 3.0 + 1.1 * 2.0 + 0.4 + 2.0 * 3.0 + 0.7 * 2.0 + 0.1);
        assert!((v - expected).abs() < 1e-12);

        let swapped = Dataset::new(vec![o(&[2, 3, 1]), o(&[1, 2, 3])]).unwrap();
        let y_swapped = LatentMatrix::new(2, 3, vec![2.0, 0.7, 0.1, 0.3, 1.1, 0.4]).unwrap();
        let a = complete_data_log_lik(&data, &r, &weights, &y).unwrap();
        let b = complete_data_log_lik(&swapped, &r, &weights, &y_swapped).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn observed_log_lik_laws() {
        let rows = vec![o(&[1, 2, 3, 4]), o(&[4, 2, 1, 3]), o(&[2, 1, 4, 3])];
        let data = Dataset::new(rows.clone()).unwrap();
        let doubled = Dataset::new(rows.iter().chain(&rows).cloned().collect()).unwrap();
        let r = rho(&[4, 1, 2, 3]);
        let weights = p(&[0.3, 1.7, 0.9, 2.2]);
        let single = Dataset::new(vec![rows[1].clone()]).unwrap();

        let base = observed_data_log_lik(&data, &r, &weights).unwrap();
        let twice = observed_data_log_lik(&doubled, &r, &weights).unwrap();
        assert!((twice - 2.0 * base).abs() < 1e-12);
        let one = observed_data_log_lik(&single, &r, &weights).unwrap();
        assert_eq!(one, epl_log_prob(&rows[1], &r, &weights).unwrap());
        let scaled = observed_data_log_lik(&data, &r, &weights.scaled(37.5).unwrap()).unwrap();
        assert!((scaled - base).abs() < 1e-10);
    }

    #[test]
    fn prefix_sampling_is_replayable() {
        let weights = p(&[1.0, 4.0, 2.0, 0.5]);
        let a = sample_pl_prefix(&weights, 3, &mut ChaCha8Rng::seed_from_u64(11)).unwrap();
        let b = sample_pl_prefix(&weights, 3, &mut ChaCha8Rng::seed_from_u64(11)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 3);
        assert!(sample_pl_prefix(&weights, 0, &mut ChaCha8Rng::seed_from_u64(1)).is_err());
        assert!(sample_pl_prefix(&weights, 5, &mut ChaCha8Rng::seed_from_u64(1)).is_err());
    }

    #[test]
    fn first_pick_frequency() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let weights = p(&[9.0, 1.0]);
        let n = 20_000;
        let hits = (0..n)
            .filter(|_| sample_pl_prefix(&weights, 1, &mut rng).unwrap()[0] == 0)
            .count();
        let freq = hits as f64 / n as f64;
        // binomial sd is 0.0021
        assert!((freq - 0.9).abs() < 0.0085, "{freq}");
    }

    #[test]
    fn two_item_epl_is_symmetric_at_equal_weights() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let weights = SupportParams::uniform(2);
        for r in [rho(&[1, 2]), rho(&[2, 1])] {
            let n = 20_000;
            let first = (0..n)
                .filter(|_| {
                    sample_epl_ordering(&r, &weights, &mut rng)
                        .unwrap()
                        .item_at(0)
                        == 0
                })
                .count();
            assert!((first as f64 / n as f64 - 0.5).abs() < 0.015);
        }
    }
}
