//! Posterior summaries, Kendall distances, trace files and the
//! joint-distribution check of the sampler.

use std::collections::HashMap;
use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, FisherSnedecor, StudentsT};

use crate::error::{Error, Result};
use crate::io::write_atomic;
use crate::model::{sample_epl_ordering, Dataset, SupportParams};
use crate::perm::{Ordering, ReferenceOrder};
use crate::sampler::{
    gibbs_step_y, random_reference_order, sample_prior_p, ChainConfig, ChainRng, ChainState,
    Kernel, Sample, TjmWithinGibbs,
};

/// Number of discordant pairs between two sequences of the same length.
pub fn kendall_distance(a: &[usize], b: &[usize]) -> Result<usize> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            got: b.len(),
        });
    }
    let mut count = 0;
    for i in 0..a.len() {
        for j in i + 1..a.len() {
            if (a[i] < a[j]) != (b[i] < b[j]) {
                count += 1;
            }
        }
    }
    Ok(count)
}

/// Kendall distance divided by its maximum `K (K - 1) / 2`.
pub fn normalized_kendall(a: &[usize], b: &[usize]) -> Result<f64> {
    let k = a.len();
    if k < 2 {
        return Err(Error::param("normalized Kendall distance needs K >= 2"));
    }
    let d = kendall_distance(a, b)?;
    Ok(d as f64 / (k * (k - 1) / 2) as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RhoProbability {
    pub rho: ReferenceOrder,
    pub w_code: String,
    pub prob: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSummary {
    /// Visited reference orders, most probable first.
    pub rho_table: Vec<RhoProbability>,
    pub rho_mode: ReferenceOrder,
    pub rho_mode_mass: f64,
    /// Posterior means of `p / sum(p)`.
    pub p_mean: Vec<f64>,
    pub modal_ordering: Ordering,
    pub samples: usize,
}

/// Ordering implied by a reference order and item weights: the item with
/// the largest weight is selected first and takes rank `rho(1)`, and so on.
pub fn modal_ordering(rho: &ReferenceOrder, p: &[f64]) -> Result<Ordering> {
    let k = rho.len();
    if p.len() != k {
        return Err(Error::DimensionMismatch {
            expected: k,
            got: p.len(),
        });
    }
    let mut by_weight: Vec<usize> = (0..k).collect();
    by_weight.sort_by(|&i, &j| p[j].total_cmp(&p[i]).then(i.cmp(&j)));
    let mut o = vec![0; k];
    for (t, &rank) in rho.ranks().iter().enumerate() {
        o[rank] = by_weight[t];
    }
    Ordering::new(o)
}

/// Relative visit frequencies of `rho` and mean normalized weights.
///
/// Orders with equal counts are listed by ascending `W` code.
pub fn summarize_posterior(samples: &[Sample]) -> Result<PosteriorSummary> {
    let first = samples
        .first()
        .ok_or_else(|| Error::Empty("no retained samples to summarize".into()))?;
    let k = first.p.len();

    let mut counts: HashMap<&ReferenceOrder, usize> = HashMap::new();
    let mut p_mean = vec![0.0; k];
    for s in samples {
        if s.p.len() != k || s.rho.len() != k {
            return Err(Error::DimensionMismatch {
                expected: k,
                got: s.p.len(),
            });
        }
        *counts.entry(&s.rho).or_default() += 1;
        let total = s.p.sum();
        for (m, &x) in p_mean.iter_mut().zip(s.p.as_slice()) {
            *m += x / total;
        }
    }
    let n = samples.len() as f64;
    p_mean.iter_mut().for_each(|m| *m /= n);

    let mut table: Vec<(&ReferenceOrder, usize)> = counts.into_iter().collect();
    table.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.code_index().cmp(&b.0.code_index())));
    let rho_table: Vec<RhoProbability> = table
        .into_iter()
        .map(|(rho, c)| RhoProbability {
            rho: rho.clone(),
            w_code: rho.bits(),
            prob: c as f64 / n,
        })
        .collect();

    let rho_mode = rho_table[0].rho.clone();
    let rho_mode_mass = rho_table[0].prob;
    let modal_ordering = modal_ordering(&rho_mode, &p_mean)?;
    Ok(PosteriorSummary {
        rho_table,
        rho_mode,
        rho_mode_mass,
        p_mean,
        modal_ordering,
        samples: samples.len(),
    })
}

fn trace_header(k: usize) -> Vec<String> {
    let mut header = vec![
        "iteration".to_string(),
        "log_posterior".into(),
        "rho".into(),
    ];
    header.extend((1..=k).map(|i| format!("p_{i}")));
    header
}

/// Writes one CSV row per sample: iteration, log posterior, the `W` bits of
/// `rho` and the raw weights. Floats are written in shortest round-trip form.
pub fn write_traces<W: Write>(samples: &[Sample], writer: W) -> csv::Result<()> {
    let k = samples.first().map_or(0, |s| s.p.len());
    let mut out = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(writer);
    out.write_record(trace_header(k))?;
    for s in samples {
        out.serialize((s.iteration, s.log_posterior, s.rho.bits(), s.p.as_slice()))?;
    }
    out.flush()?;
    Ok(())
}

/// Atomically writes the trace CSV at `path`.
pub fn export_traces(samples: &[Sample], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if samples.is_empty() {
        return Err(Error::Empty("no retained samples to export".into()));
    }
    write_atomic(path, |w| {
        write_traces(samples, w).map_err(|source| Error::Csv {
            path: path.to_path_buf(),
            source,
        })
    })
}

/// Reads a trace CSV written by [`export_traces`].
pub fn import_traces(path: impl AsRef<Path>) -> Result<Vec<Sample>> {
    let path = path.as_ref();
    let csv_err = |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(csv_err)?;
    let header = reader.headers().map_err(csv_err)?.clone();
    let k = header.len().saturating_sub(3);
    if k < 1 || header.iter().ne(trace_header(k).iter().map(String::as_str)) {
        return Err(Error::BadRow {
            row: 0,
            reason: format!("unexpected trace header in {}", path.display()),
        });
    }

    let mut samples = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(csv_err)?;
        let bad = |reason: String| Error::BadRow {
            row: row + 1,
            reason,
        };
        let num = |j: usize| -> Result<f64> {
            record[j].parse::<f64>().map_err(|_| {
                bad(format!(
                    "column {} is not a number: {:?}",
                    &header[j], &record[j]
                ))
            })
        };
        let iteration = record[0]
            .parse::<usize>()
            .map_err(|_| bad(format!("iteration is not an integer: {:?}", &record[0])))?;
        let log_posterior = num(1)?;
        let rho = ReferenceOrder::from_bits(&record[2]).map_err(|e| bad(e.to_string()))?;
        if rho.len() != k {
            return Err(bad(format!(
                "rho code {:?} does not have {k} stages",
                &record[2]
            )));
        }
        let p = (3..3 + k).map(num).collect::<Result<Vec<_>>>()?;
        let p = SupportParams::new(p).map_err(|e| bad(e.to_string()))?;
        samples.push(Sample {
            iteration,
            log_posterior,
            rho,
            p,
        });
    }
    if samples.is_empty() {
        return Err(Error::Empty(format!("{} has no samples", path.display())));
    }
    Ok(samples)
}

/// Means of `batches` consecutive equal-size batches; a trailing remainder
/// is dropped.
pub fn batch_means(series: &[f64], batches: usize) -> Vec<f64> {
    let size = series.len() / batches.max(1);
    if size == 0 {
        return Vec::new();
    }
    series
        .chunks_exact(size)
        .take(batches)
        .map(|c| c.iter().sum::<f64>() / size as f64)
        .collect()
}

/// Batch-means standard error of the mean of an autocorrelated series.
pub fn batch_means_se(series: &[f64], batches: usize) -> f64 {
    let means = batch_means(series, batches);
    let b = means.len() as f64;
    if means.len() < 2 {
        return f64::NAN;
    }
    let mean = means.iter().sum::<f64>() / b;
    let var = means.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / (b - 1.0);
    (var / b).sqrt()
}

/// One statistic of the joint-distribution check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GewekeCheck {
    pub name: String,
    pub statistic: f64,
    pub p_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GewekeReport {
    pub sweeps: usize,
    pub batches: usize,
    /// Family-wise level; each check is held to `level / checks.len()`.
    pub level: f64,
    pub checks: Vec<GewekeCheck>,
    /// Visit frequency of each constrained order, by `W`-code index.
    pub rho_frequencies: Vec<f64>,
    pub passed: bool,
}

impl GewekeReport {
    pub fn per_check_level(&self) -> f64 {
        self.level / self.checks.len() as f64
    }

    pub fn failures(&self) -> impl Iterator<Item = &GewekeCheck> {
        let cut = self.per_check_level();
        self.checks
            .iter()
            .filter(move |c| c.p_value.is_nan() || c.p_value < cut)
    }
}

pub const GEWEKE_BATCHES: usize = 50;
pub const GEWEKE_LEVEL: f64 = 0.01;

/// Joint-distribution check of the default kernel.
pub fn geweke_joint_test(
    k: usize,
    n: usize,
    config: &ChainConfig,
    sweeps: usize,
    rng: &mut ChainRng,
) -> Result<GewekeReport> {
    geweke_joint_test_with_kernel(
        &mut TjmWithinGibbs::new(config.clone()),
        k,
        n,
        config,
        sweeps,
        rng,
    )
}

/// Successive-conditional simulation: alternate a kernel sweep given the
/// data with a fresh dataset drawn from the current parameters. If the
/// kernel leaves the posterior invariant, the parameter draws follow the
/// prior.
///
/// Per item, the mean of `p` and of `(p - c/d)^2` are compared with the
/// prior values `c/d` and `c/d^2` by a batch-means t statistic; the visit
/// frequencies of the constrained orders are compared with the uniform law
/// by a batch-means Hotelling statistic. Bonferroni correction keeps the
/// family-wise level at [`GEWEKE_LEVEL`].
pub fn geweke_joint_test_with_kernel<K: Kernel>(
    kernel: &mut K,
    k: usize,
    n: usize,
    config: &ChainConfig,
    sweeps: usize,
    rng: &mut ChainRng,
) -> Result<GewekeReport> {
    config.validate()?;
    if !(2..=5).contains(&k) || !(1..=20).contains(&n) {
        return Err(Error::param(
            "the joint-distribution check needs 2 <= K <= 5 and 1 <= N <= 20",
        ));
    }
    let batches = GEWEKE_BATCHES;
    if sweeps < 10 * batches {
        return Err(Error::param(format!(
            "at least {} sweeps are needed",
            10 * batches
        )));
    }

    let simulate =
        |rho: &ReferenceOrder, p: &SupportParams, rng: &mut ChainRng| -> Result<Dataset> {
            Dataset::new(
                (0..n)
                    .map(|_| sample_epl_ordering(rho, p, rng))
                    .collect::<Result<_>>()?,
            )
        };
    let rho = random_reference_order(k, rng)?;
    let p = sample_prior_p(k, config, rng)?;
    let mut data = simulate(&rho, &p, rng)?;
    let y = gibbs_step_y(&data, &rho, &p, rng)?;
    let mut state = ChainState {
        rho,
        p,
        y,
        iteration: 0,
    };

    let cells = 1usize << (k - 1);
    let mut p_draws = vec![Vec::with_capacity(sweeps); k];
    let mut cell_draws = Vec::with_capacity(sweeps);
    for _ in 0..sweeps {
        kernel.sweep(&mut state, &data, rng)?;
        data = simulate(&state.rho, &state.p, rng)?;
        for (i, &x) in state.p.as_slice().iter().enumerate() {
            p_draws[i].push(x);
        }
        cell_draws.push(state.rho.code_index());
    }

    let mean = config.c / config.d;
    let var = config.c / (config.d * config.d);
    let mut checks = Vec::new();
    for (i, draws) in p_draws.iter().enumerate() {
        checks.push(batch_t_check(
            format!("mean of p_{}", i + 1),
            draws,
            mean,
            batches,
        ));
        let sq: Vec<f64> = draws.iter().map(|x| (x - mean).powi(2)).collect();
        checks.push(batch_t_check(
            format!("variance of p_{}", i + 1),
            &sq,
            var,
            batches,
        ));
    }
    checks.push(uniform_cells_check(&cell_draws, cells, batches));

    let mut visits = vec![0usize; cells];
    cell_draws.iter().for_each(|&c| visits[c] += 1);
    let rho_frequencies = visits.iter().map(|&v| v as f64 / sweeps as f64).collect();
    let mut report = GewekeReport {
        sweeps,
        batches,
        level: GEWEKE_LEVEL,
        checks,
        rho_frequencies,
        passed: false,
    };
    let passed = report.failures().next().is_none();
    report.passed = passed;
    Ok(report)
}

fn batch_t_check(name: String, series: &[f64], target: f64, batches: usize) -> GewekeCheck {
    let means = batch_means(series, batches);
    let b = means.len() as f64;
    let mean = means.iter().sum::<f64>() / b;
    let se = batch_means_se(series, batches);
    let t = (mean - target) / se;
    let dist = StudentsT::new(0.0, 1.0, b - 1.0).expect("valid degrees of freedom");
    let p_value = if t.is_finite() {
        2.0 * (1.0 - dist.cdf(t.abs()))
    } else {
        0.0
    };
    GewekeCheck {
        name,
        statistic: t,
        p_value,
    }
}

/// Hotelling test that batch-mean cell frequencies have mean `1 / cells`.
/// The last cell is dropped since frequencies sum to one.
fn uniform_cells_check(draws: &[usize], cells: usize, batches: usize) -> GewekeCheck {
    let q = cells - 1;
    let size = draws.len() / batches;
    let rows: Vec<DVector<f64>> = draws
        .chunks_exact(size)
        .take(batches)
        .map(|chunk| {
            let mut v = DVector::zeros(q);
            for &c in chunk.iter().filter(|&&c| c < q) {
                v[c] += 1.0 / size as f64;
            }
            v
        })
        .collect();
    let b = rows.len() as f64;
    let mean = rows.iter().fold(DVector::zeros(q), |acc, r| acc + r) / b;
    let cov = rows.iter().fold(DMatrix::zeros(q, q), |acc, r| {
        let dev = r - &mean;
        acc + &dev * dev.transpose()
    }) / (b - 1.0);
    let diff = mean - DVector::from_element(q, 1.0 / cells as f64);

    let name = "uniform reference order".to_string();
    let Some(chol) = cov.cholesky() else {
        // degenerate batch covariance: some order was never visited
        return GewekeCheck {
            name,
            statistic: f64::INFINITY,
            p_value: 0.0,
        };
    };
    let t2 = b * diff.dot(&chol.solve(&diff));
    let qf = q as f64;
    let f = (b - qf) / (qf * (b - 1.0)) * t2;
    let dist = FisherSnedecor::new(qf, b - qf).expect("valid degrees of freedom");
    GewekeCheck {
        name,
        statistic: t2,
        p_value: 1.0 - dist.cdf(f),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(bits: &str, p: &[f64], iteration: usize) -> Sample {
        Sample {
            iteration,
            log_posterior: -1.5,
            rho: ReferenceOrder::from_bits(bits).unwrap(),
            p: SupportParams::new(p.to_vec()).unwrap(),
        }
    }

    #[test]
    fn kendall_examples() {
        assert_eq!(kendall_distance(&[0, 1, 2], &[0, 1, 2]).unwrap(), 0);
        assert_eq!(kendall_distance(&[0, 1, 2], &[2, 1, 0]).unwrap(), 3);
        assert_eq!(kendall_distance(&[0, 1, 2], &[1, 0, 2]).unwrap(), 1);
        assert!((normalized_kendall(&[0, 1, 2], &[1, 0, 2]).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(
            normalized_kendall(&[0, 1, 2, 3], &[3, 2, 1, 0]).unwrap(),
            1.0
        );
        assert!(kendall_distance(&[0, 1], &[0, 1, 2]).is_err());
        assert!(normalized_kendall(&[0], &[0]).is_err());
    }

    #[test]
    fn single_order_has_full_mass() {
        let samples: Vec<_> = (0..5)
            .map(|i| sample("0101", &[1.0, 2.0, 3.0, 4.0], i))
            .collect();
        let s = summarize_posterior(&samples).unwrap();
        assert_eq!(s.rho_mode_mass, 1.0);
        assert_eq!(s.rho_table.len(), 1);
        assert!((s.p_mean[3] - 0.4).abs() < 1e-15);
    }

    #[test]
    fn ties_go_to_the_lower_code() {
        let samples = vec![
            sample("101", &[1.0, 1.0, 1.0], 1),
            sample("011", &[1.0, 1.0, 1.0], 2),
        ];
        let s = summarize_posterior(&samples).unwrap();
        assert_eq!(s.rho_mode.bits(), "011");
        assert_eq!(s.rho_table[1].w_code, "101");
        assert_eq!(s.rho_mode_mass, 0.5);
    }

    #[test]
    fn empty_chain_is_rejected() {
        assert!(matches!(summarize_posterior(&[]), Err(Error::Empty(_))));
    }

    #[test]
    fn modal_ordering_follows_stage_order() {
        let rho = ReferenceOrder::from_one_based(&[11, 10, 9, 8, 7, 6, 1, 2, 3, 5, 4]).unwrap();
        let p = [
            0.0070, 0.0596, 0.1613, 0.1886, 0.1836, 0.1015, 0.0287, 0.0771, 0.1492, 0.0343, 0.0092,
        ];
        let o = modal_ordering(&rho, &p).unwrap();
        assert_eq!(o.to_one_based(), vec![2, 10, 7, 1, 11, 8, 6, 9, 3, 5, 4]);
    }

    #[test]
    fn trace_csv_layout() {
        let samples: Vec<_> = (0..3)
            .map(|i| sample("01001", &[0.1, 0.2, 0.3, 0.25, 1e-300], i + 1))
            .collect();
        let mut buf = Vec::new();
        write_traces(&samples, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 4);
        assert_eq!(lines[0], "iteration,log_posterior,rho,p_1,p_2,p_3,p_4,p_5");
        assert_eq!(lines[1], "1,-1.5,01001,0.1,0.2,0.3,0.25,1e-300");
    }

    #[test]
    fn batch_means_drop_remainder() {
        let series: Vec<f64> = (0..10).map(|x| x as f64).collect();
        assert_eq!(batch_means(&series, 3), vec![1.0, 4.0, 7.0]);
        assert!(batch_means_se(&series, 1).is_nan());
    }
}
