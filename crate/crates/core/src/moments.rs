//! Empirical conditional moments, negative-correlation checks and nested
//! Monte Carlo Doob decompositions.
//!
//! `max_over_bins` is an estimator of the worst-case conditional moment, not
//! a certificate: with finitely many replicates it can under-shoot.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::rng::{self, StreamRng};
use crate::stats;

/// Multiplier applied to standard errors before flagging a violation.
pub const CI_MULTIPLIER: f64 = 3.0;
pub const DEFAULT_BIN_COUNT: usize = 10;
pub const DEFAULT_INNER: usize = 100;

/// `rows` replicates of `cols` variables, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleMatrix {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl SampleMatrix {
    pub fn new(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        if rows < 2 {
            return Err(Error::invalid("sample matrix needs at least two replicates"));
        }
        if cols == 0 || values.len() != rows * cols {
            return Err(Error::invalid(format!(
                "sample matrix of {rows}x{cols} needs {} values, got {}",
                rows * cols,
                values.len()
            )));
        }
        Ok(Self { rows, cols, values })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::invalid("sample matrix rows differ in length"));
        }
        Self::new(rows.len(), cols, rows.concat())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.cols + col]
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.values[row * self.cols..(row + 1) * self.cols]
    }

    /// Prefix sums `S_{var} = X_0 + … + X_{var-1}` for every replicate.
    pub fn prefix_sums(&self, var: usize) -> Vec<f64> {
        (0..self.rows)
            .map(|r| self.row(r)[..var].iter().sum())
            .collect()
    }

    pub fn column(&self, col: usize) -> Vec<f64> {
        (0..self.rows).map(|r| self.get(r, col)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MomentBin {
    /// Prefix-sum range covered by the bin (closed).
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
    pub estimate: f64,
    pub standard_error: f64,
}

/// Binned estimate of `E(X_varˡ | prefix sum)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionalMomentEstimate {
    pub var: usize,
    pub order: u32,
    pub bins: Vec<MomentBin>,
    pub max_over_bins: f64,
    /// Standard error of the bin attaining the maximum.
    pub standard_error: f64,
    /// Set when binning was impossible (constant prefix) and one bin was used.
    pub collapsed: bool,
}

fn bin_stats(values: &[f64]) -> (f64, f64) {
    let est = stats::mean(values);
    let se = stats::std_error(values).unwrap_or(f64::INFINITY);
    (est, se)
}

/// Equal-count quantile bins of the prefix sum `S_var`; per bin the sample
/// mean of `X_varˡ`. `var = 0` yields the unconditional moment.
pub fn estimate_conditional_moment(
    samples: &SampleMatrix,
    var: usize,
    order: u32,
    bin_count: usize,
) -> Result<ConditionalMomentEstimate> {
    if order < 2 || order % 2 != 0 {
        return Err(Error::invalid(format!("order must be even and >= 2, got {order}")));
    }
    if bin_count == 0 {
        return Err(Error::invalid("bin_count must be at least 1"));
    }
    if var >= samples.cols() {
        return Err(Error::invalid(format!(
            "variable {var} out of range for {} columns",
            samples.cols()
        )));
    }
    let powered: Vec<f64> = (0..samples.rows())
        .map(|r| samples.get(r, var).powi(order as i32))
        .collect();
    let prefix = samples.prefix_sums(var);
    let (lo, hi) = prefix
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));

    let degenerate = var == 0 || lo == hi;
    let bins_wanted = bin_count.min(samples.rows());
    let collapsed = var > 0 && lo == hi && bins_wanted > 1;

    let bins = if degenerate || bins_wanted == 1 {
        let (estimate, standard_error) = bin_stats(&powered);
        vec![MomentBin {
            lo,
            hi,
            count: powered.len(),
            estimate,
            standard_error,
        }]
    } else {
        let mut order_idx: Vec<usize> = (0..samples.rows()).collect();
        order_idx.sort_by(|&a, &b| prefix[a].total_cmp(&prefix[b]).then(a.cmp(&b)));
        let total = order_idx.len();
        (0..bins_wanted)
            .map(|b| {
                let start = b * total / bins_wanted;
                let end = (b + 1) * total / bins_wanted;
                let mut members = order_idx[start..end].to_vec();
                let range = (prefix[members[0]], prefix[*members.last().unwrap()]);
                members.sort_unstable();
                let vals: Vec<f64> = members.iter().map(|&r| powered[r]).collect();
                let (estimate, standard_error) = bin_stats(&vals);
                MomentBin {
                    lo: range.0,
                    hi: range.1,
                    count: vals.len(),
                    estimate,
                    standard_error,
                }
            })
            .collect()
    };

    let best = bins
        .iter()
        .max_by(|a, b| a.estimate.total_cmp(&b.estimate))
        .expect("at least one bin");
    Ok(ConditionalMomentEstimate {
        var,
        order,
        max_over_bins: best.estimate,
        standard_error: best.standard_error,
        bins,
        collapsed,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SncEntry {
    pub var: usize,
    /// Odd power of the prefix sum.
    pub order: u32,
    pub mean: f64,
    pub standard_error: f64,
    pub lower: f64,
    pub upper: f64,
    /// The whole confidence interval lies above zero.
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SncReport {
    pub entries: Vec<SncEntry>,
    pub any_flagged: bool,
}

/// For every variable with a nonempty prefix and every odd `l < m`, the
/// sample mean of `X_var · S_varˡ` with a normal-approximation interval.
pub fn check_snc(samples: &SampleMatrix, m: u32) -> Result<SncReport> {
    if m < 2 || m % 2 != 0 {
        return Err(Error::invalid(format!("m must be even and >= 2, got {m}")));
    }
    let mut entries = Vec::new();
    for var in 1..samples.cols() {
        let prefix = samples.prefix_sums(var);
        for order in (1..m).step_by(2) {
            let vals: Vec<f64> = (0..samples.rows())
                .map(|r| samples.get(r, var) * prefix[r].powi(order as i32))
                .collect();
            let mean = stats::mean(&vals);
            let se = stats::std_error(&vals).unwrap_or(0.0);
            let lower = mean - CI_MULTIPLIER * se;
            entries.push(SncEntry {
                var,
                order,
                mean,
                standard_error: se,
                lower,
                upper: mean + CI_MULTIPLIER * se,
                flagged: lower > 0.0,
            });
        }
    }
    let any_flagged = entries.iter().any(|e| e.flagged);
    Ok(SncReport {
        entries,
        any_flagged,
    })
}

/// Nested Monte Carlo estimate of the Doob martingale differences
/// `X_i = E^i f − E^{i−1} f`.
#[derive(Debug, Clone)]
pub struct DoobDecomposition {
    pub f_values: Vec<f64>,
    /// `outer × n` matrix of difference estimates.
    pub differences: SampleMatrix,
    /// Per replicate, the estimate of `E f` (level 0).
    pub level0: Vec<f64>,
    /// Per replicate, standard error of the level-0 inner average.
    pub nested_standard_error: Vec<f64>,
    pub inner_resamples: usize,
}

/// Estimates Doob differences for `f(Y_0, …, Y_{n-1})` with independent
/// coordinates drawn by `sample(i, rng)`.
///
/// For every outer replicate the levels `E^i f` (prefix `Y_0..Y_{i-1}` fixed,
/// suffix redrawn `inner` times) are estimated once and shared by adjacent
/// differences, so `Σ X_i = f(Y) − Ê^0 f` holds exactly per replicate.
pub fn doob_decompose<Y, S, F>(
    sample: S,
    functional: F,
    n: usize,
    outer: usize,
    inner: usize,
    seed: u64,
) -> Result<DoobDecomposition>
where
    Y: Clone + Send,
    S: Fn(usize, &mut StreamRng) -> Y + Sync,
    F: Fn(&[Y]) -> f64 + Sync,
{
    if inner == 0 {
        return Err(Error::invalid("inner resample count must be at least 1"));
    }
    if n == 0 {
        return Err(Error::invalid("n must be at least 1"));
    }
    let outer_tag = rng::site_tag("doob.outer");
    let inner_tag = rng::site_tag("doob.inner");
    let rows: Vec<(f64, Vec<f64>, f64, f64)> = (0..outer)
        .into_par_iter()
        .map(|rep| {
            let mut rng = rng::stream(seed, rep as u64, outer_tag);
            let y: Vec<Y> = (0..n).map(|i| sample(i, &mut rng)).collect();
            let f_full = functional(&y);

            // levels[i] = Ê^i f for i = 0..n; levels[n] = f(Y).
            let mut levels = vec![0.0; n + 1];
            levels[n] = f_full;
            let mut level0_se = 0.0;
            let mut work = y.clone();
            for level in 0..n {
                let mut inner_rng =
                    rng::stream(seed, rep as u64, inner_tag ^ (level as u64).wrapping_mul(0x9E37_79B9));
                let draws: Vec<f64> = (0..inner)
                    .map(|_| {
                        for (j, slot) in work.iter_mut().enumerate().skip(level) {
                            *slot = sample(j, &mut inner_rng);
                        }
                        functional(&work)
                    })
                    .collect();
                work[..].clone_from_slice(&y);
                levels[level] = stats::mean(&draws);
                if level == 0 {
                    level0_se = stats::std_error(&draws).unwrap_or(0.0);
                }
            }
            let diffs: Vec<f64> = (1..=n).map(|i| levels[i] - levels[i - 1]).collect();
            (f_full, diffs, levels[0], level0_se)
        })
        .collect();

    let mut f_values = Vec::with_capacity(outer);
    let mut level0 = Vec::with_capacity(outer);
    let mut nested_standard_error = Vec::with_capacity(outer);
    let mut flat = Vec::with_capacity(outer * n);
    for (f, d, l0, se) in rows {
        f_values.push(f);
        flat.extend(d);
        level0.push(l0);
        nested_standard_error.push(se);
    }
    Ok(DoobDecomposition {
        f_values,
        differences: SampleMatrix::new(outer, n, flat)?,
        level0,
        nested_standard_error,
        inner_resamples: inner,
    })
}
