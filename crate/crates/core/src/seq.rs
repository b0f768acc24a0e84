//! Longest increasing subsequences and random-projection statistics.

use rand::Rng;
use rand_distr::{Distribution, Pareto, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, StreamRng};
use crate::stats;

#[derive(Debug, Clone, PartialEq)]
pub struct Sequence {
    pub values: Vec<f64>,
    pub seed: u64,
}

impl Sequence {
    /// `n` i.i.d. uniform draws on [0, 1).
    pub fn uniform(n: usize, seed: u64) -> Self {
        let mut rng = rng::stream_for(seed, 0, "seq.uniform");
        Self {
            values: (0..n).map(|_| rng.random::<f64>()).collect(),
            seed,
        }
    }
}

/// Ranks of `values` under the order (value, index), so equal values
/// compare by position and the result is a permutation of `0..n`.
fn ranks(values: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
    let mut rank = vec![0; values.len()];
    for (r, &i) in idx.iter().enumerate() {
        rank[i] = r;
    }
    rank
}

/// Length of the longest increasing subsequence ending at each position,
/// for a sequence of distinct keys.
fn lis_ending_at(keys: &[usize]) -> Vec<usize> {
    let mut tails: Vec<usize> = Vec::new();
    keys.iter()
        .map(|&k| {
            let pos = tails.partition_point(|&t| t < k);
            if pos == tails.len() {
                tails.push(k);
            } else {
                tails[pos] = k;
            }
            pos + 1
        })
        .collect()
}

/// LIS length by patience sorting. Equal values count as increasing when
/// they appear in index order.
pub fn lis(values: &[f64]) -> usize {
    let mut tails: Vec<f64> = Vec::new();
    for &v in values {
        let pos = tails.partition_point(|&t| t <= v);
        if pos == tails.len() {
            tails.push(v);
        } else {
            tails[pos] = v;
        }
    }
    tails.len()
}

/// Flags positions that belong to every LIS, i.e. whose removal shortens it.
pub fn essential_elements(values: &[f64]) -> Vec<bool> {
    let n = values.len();
    if n == 0 {
        return Vec::new();
    }
    let rank = ranks(values);
    let fwd = lis_ending_at(&rank);
    let rev: Vec<usize> = rank.iter().rev().map(|&r| n - 1 - r).collect();
    let mut bwd = lis_ending_at(&rev);
    bwd.reverse();
    let total = *fwd.iter().max().unwrap();
    let mut level_count = vec![0usize; total + 1];
    let on_some = |j: usize| fwd[j] + bwd[j] - 1 == total;
    for j in 0..n {
        if on_some(j) {
            level_count[fwd[j]] += 1;
        }
    }
    (0..n).map(|j| on_some(j) && level_count[fwd[j]] == 1).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EssentialEstimate {
    /// Zero-based position of the first resampled variable.
    pub start: usize,
    /// `estimates[k]` estimates the probability that position `start + k`
    /// is essential given the prefix.
    pub estimates: Vec<f64>,
    pub standard_errors: Vec<f64>,
    /// Mean LIS of the resampled suffix alone.
    pub suffix_lis_mean: f64,
    pub suffix_lis_se: f64,
    pub resamples: usize,
}

/// Monte Carlo estimate of the probability that each suffix position is
/// essential, with the prefix held fixed and the suffix redrawn uniformly.
pub fn essential_probability(
    n: usize,
    prefix: &[f64],
    resamples: usize,
    seed: u64,
) -> Result<EssentialEstimate> {
    if resamples < 100 {
        return Err(Error::invalid(format!("need at least 100 resamples, got {resamples}")));
    }
    if prefix.len() >= n {
        return Err(Error::invalid(format!(
            "prefix of length {} leaves no suffix in a sequence of length {n}",
            prefix.len()
        )));
    }
    let start = prefix.len();
    let width = n - start;
    let mut rng = rng::stream_for(seed, start as u64, "seq.essential");
    let mut hits = vec![0usize; width];
    let mut suffix_lis = Vec::with_capacity(resamples);
    let mut values = prefix.to_vec();
    values.resize(n, 0.0);
    for _ in 0..resamples {
        for v in &mut values[start..] {
            *v = rng.random::<f64>();
        }
        for (k, e) in essential_elements(&values)[start..].iter().enumerate() {
            if *e {
                hits[k] += 1;
            }
        }
        suffix_lis.push(lis(&values[start..]) as f64);
    }
    let total = resamples as f64;
    let estimates: Vec<f64> = hits.iter().map(|&h| h as f64 / total).collect();
    let standard_errors = estimates
        .iter()
        .map(|&p| (p * (1.0 - p) / total).sqrt())
        .collect();
    Ok(EssentialEstimate {
        start,
        estimates,
        standard_errors,
        suffix_lis_mean: stats::mean(&suffix_lis),
        suffix_lis_se: stats::std_error(&suffix_lis).unwrap_or(0.0),
        resamples,
    })
}

/// Distribution of the squared radius in a radial mixture. Every variant is
/// normalized to `E R² = 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum RadialDistribution {
    Constant,
    /// `R² = (n + extra)/n · Beta(n/2, extra/2)`: the first `n` coordinates
    /// of a uniform point on the `(n + extra)`-sphere, rescaled. Satisfies
    /// both projection hypotheses.
    ScaledBeta { extra_dims: usize },
    /// `R² ∈ {low, 2 − low}` with equal probability. Reinforces: a large
    /// partial sum predicts a large next coordinate.
    TwoPoint { low: f64 },
    /// Pareto `R²` with the given shape; moments of order `2·shape` and
    /// above are infinite.
    Pareto { shape: f64 },
}

impl RadialDistribution {
    fn validate(&self) -> Result<()> {
        match *self {
            Self::TwoPoint { low } if !(0.0..=1.0).contains(&low) => {
                Err(Error::invalid(format!("two-point radius low value {low} outside [0, 1]")))
            }
            Self::Pareto { shape } if !(shape > 1.0) => {
                Err(Error::invalid(format!("pareto shape {shape} must exceed 1")))
            }
            _ => Ok(()),
        }
    }

    /// `E R^{2q}` when finite.
    pub fn radial_moment(&self, n: usize, q: u32) -> Option<f64> {
        match *self {
            Self::Constant => Some(1.0),
            Self::ScaledBeta { extra_dims } => {
                let (a, b) = (n as f64 / 2.0, extra_dims as f64 / 2.0);
                let scale = (n + extra_dims) as f64 / n as f64;
                let ratio: f64 = (0..q).map(|r| (a + r as f64) / (a + b + r as f64)).product();
                Some(scale.powi(q as i32) * ratio)
            }
            Self::TwoPoint { low } => Some((low.powi(q as i32) + (2.0 - low).powi(q as i32)) / 2.0),
            Self::Pareto { shape } => {
                let xm = (shape - 1.0) / shape;
                (shape > q as f64).then(|| shape * xm.powi(q as i32) / (shape - q as f64))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum VectorFamily {
    SphereUniform,
    RadialMixture { radial: RadialDistribution },
    /// Independent `N(0, 1/n)` coordinates.
    Gaussian,
}

impl VectorFamily {
    /// The admissible heavy-tailed family shipped by default.
    pub fn default_radial(n: usize) -> Self {
        Self::RadialMixture {
            radial: RadialDistribution::ScaledBeta { extra_dims: n },
        }
    }

    /// `E Y_i²` for every coordinate.
    pub fn mean_square(&self, n: usize) -> f64 {
        1.0 / n as f64
    }

    /// `E Y_i^{2q}` when finite.
    pub fn coordinate_moment(&self, n: usize, q: u32) -> Option<f64> {
        // E U_i^{2q} for U uniform on the sphere: (2q-1)!! / Π_{r<q} (n + 2r).
        let sphere: f64 = (0..q)
            .map(|r| (2 * r + 1) as f64 / (n as f64 + 2.0 * r as f64))
            .product();
        match self {
            Self::SphereUniform => Some(sphere),
            Self::RadialMixture { radial } => radial.radial_moment(n, q).map(|m| m * sphere),
            Self::Gaussian => {
                let dfact: f64 = (0..q).map(|r| (2 * r + 1) as f64).product();
                Some(dfact / (n as f64).powi(q as i32))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RandomUnitVector {
    pub coords: Vec<f64>,
    pub family: VectorFamily,
}

fn normal_vector(n: usize, rng: &mut StreamRng) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

fn sphere_point(n: usize, rng: &mut StreamRng) -> Vec<f64> {
    loop {
        let z = normal_vector(n, rng);
        let norm = z.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            return z.into_iter().map(|x| x / norm).collect();
        }
    }
}

/// Draws one vector with a stream derived from `seed`.
pub fn sample_unit_vector(n: usize, family: &VectorFamily, seed: u64) -> Result<RandomUnitVector> {
    let mut rng = rng::stream_for(seed, 0, "seq.vector");
    sample_unit_vector_with(n, family, &mut rng)
}

pub fn sample_unit_vector_with(
    n: usize,
    family: &VectorFamily,
    rng: &mut StreamRng,
) -> Result<RandomUnitVector> {
    if n == 0 {
        return Err(Error::invalid("vector dimension must be at least 1"));
    }
    let coords = match family {
        VectorFamily::SphereUniform => sphere_point(n, rng),
        VectorFamily::Gaussian => {
            let scale = (n as f64).sqrt();
            normal_vector(n, rng).into_iter().map(|x| x / scale).collect()
        }
        VectorFamily::RadialMixture { radial } => {
            radial.validate()?;
            match *radial {
                RadialDistribution::ScaledBeta { extra_dims } => {
                    let z = normal_vector(n + extra_dims, rng);
                    let norm2: f64 = z.iter().map(|x| x * x).sum();
                    let scale = ((n + extra_dims) as f64 / n as f64 / norm2).sqrt();
                    z[..n].iter().map(|x| x * scale).collect()
                }
                RadialDistribution::Constant => sphere_point(n, rng),
                RadialDistribution::TwoPoint { low } => {
                    let dir = sphere_point(n, rng);
                    let r2 = if rng.random::<bool>() { low } else { 2.0 - low };
                    dir.into_iter().map(|x| x * r2.sqrt()).collect()
                }
                RadialDistribution::Pareto { shape } => {
                    let dir = sphere_point(n, rng);
                    let xm = (shape - 1.0) / shape;
                    let r2: f64 = Pareto::new(xm, shape)
                        .map_err(|e| Error::invalid(e.to_string()))?
                        .sample(rng);
                    dir.into_iter().map(|x| x * r2.sqrt()).collect()
                }
            }
        }
    };
    Ok(RandomUnitVector {
        coords,
        family: family.clone(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct JlStatistic {
    pub sum: f64,
    /// `Σ_{i<k} (Y_i² − E Y_i²)`.
    pub centered: f64,
}

pub fn jl_projection_statistic(v: &RandomUnitVector, k: usize) -> Result<JlStatistic> {
    let n = v.coords.len();
    if k > n {
        return Err(Error::invalid(format!("k = {k} exceeds dimension {n}")));
    }
    let sum: f64 = v.coords[..k].iter().map(|y| y * y).sum();
    Ok(JlStatistic {
        sum,
        centered: sum - k as f64 * v.family.mean_square(n),
    })
}

/// Hypothesis (ii) tolerance: admissible families keep every measured
/// constant at or below this value. Sphere-uniform vectors measure about 0.5.
pub const MOMENT_CONSTANT_LIMIT: f64 = 2.0;
pub const JL_MOMENT_ORDERS: [u32; 3] = [2, 4, 6];
const MONOTONE_PROBES: usize = 8;
const MONOTONE_BINS: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionalBin {
    pub w_mean: f64,
    pub estimate: f64,
    pub standard_error: f64,
    /// `(1 − w)/(n − i)` for sphere-uniform vectors; a reference curve.
    pub sphere_reference: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonotoneProbe {
    /// Zero-based coordinate index; `w` sums the squares before it.
    pub index: usize,
    /// Least-squares slope of `Y_i²` on `w`.
    pub slope: f64,
    pub slope_se: f64,
    /// Slope significantly positive: conditional mean increases in `w`.
    pub flagged: bool,
    pub bins: Vec<ConditionalBin>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MomentGrowth {
    pub order: u32,
    /// `max_i n^{l/2} Ê Y_i^l / l^{l/2}`.
    pub scaled_moment: f64,
    /// The same quantity raised to `2/l`: the implied constant `c`.
    pub constant: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JlHypothesisReport {
    pub n: usize,
    pub k: usize,
    pub samples: usize,
    pub monotone: Vec<MonotoneProbe>,
    pub moments: Vec<MomentGrowth>,
    pub monotone_ok: bool,
    pub moments_ok: bool,
}

impl JlHypothesisReport {
    pub fn admissible(&self) -> bool {
        self.monotone_ok && self.moments_ok
    }
}

/// Empirical checks of the projection hypotheses: conditional second
/// moments non-increasing in the partial sum of squares, and moment growth
/// at most `(c l)^{l/2} / n^{l/2}`.
pub fn check_jl_hypotheses(
    family: &VectorFamily,
    n: usize,
    k: usize,
    samples: usize,
    seed: u64,
) -> Result<JlHypothesisReport> {
    if samples < 10_000 {
        return Err(Error::invalid(format!("need at least 10000 samples, got {samples}")));
    }
    if k < 2 || k > n {
        return Err(Error::invalid(format!("need 2 <= k <= n, got k = {k}, n = {n}")));
    }
    let mut rng = rng::stream_for(seed, 0, "seq.jl_check");
    let squares: Vec<Vec<f64>> = (0..samples)
        .map(|_| {
            sample_unit_vector_with(n, family, &mut rng)
                .map(|v| v.coords[..k].iter().map(|y| y * y).collect())
        })
        .collect::<Result<_>>()?;

    let probes: Vec<usize> = {
        let mut p: Vec<usize> = (0..MONOTONE_PROBES)
            .map(|j| 1 + j * (k - 2) / (MONOTONE_PROBES - 1).max(1))
            .collect();
        p.dedup();
        p
    };
    let monotone: Vec<MonotoneProbe> = probes
        .into_iter()
        .map(|i| monotone_probe(&squares, n, i))
        .collect();

    let nf = n as f64;
    let moments: Vec<MomentGrowth> = JL_MOMENT_ORDERS
        .iter()
        .map(|&l| {
            let half = l / 2;
            let max_moment = (0..k)
                .map(|i| stats::mean(&squares.iter().map(|row| row[i].powi(half as i32)).collect::<Vec<_>>()))
                .fold(0.0, f64::max);
            let scaled = nf.powi(half as i32) * max_moment / (l as f64).powi(half as i32);
            MomentGrowth {
                order: l,
                scaled_moment: scaled,
                constant: scaled.powf(2.0 / l as f64),
            }
        })
        .collect();

    let monotone_ok = monotone.iter().all(|p| !p.flagged);
    let moments_ok = moments.iter().all(|m| m.constant <= MOMENT_CONSTANT_LIMIT);
    Ok(JlHypothesisReport {
        n,
        k,
        samples,
        monotone,
        moments,
        monotone_ok,
        moments_ok,
    })
}

fn monotone_probe(squares: &[Vec<f64>], n: usize, index: usize) -> MonotoneProbe {
    let w: Vec<f64> = squares.iter().map(|row| row[..index].iter().sum()).collect();
    let y: Vec<f64> = squares.iter().map(|row| row[index]).collect();
    let (slope, slope_se) = slope_with_se(&w, &y);

    let mut order: Vec<usize> = (0..w.len()).collect();
    order.sort_by(|&a, &b| w[a].total_cmp(&w[b]).then(a.cmp(&b)));
    let bins = (0..MONOTONE_BINS)
        .map(|b| {
            let part = &order[b * order.len() / MONOTONE_BINS..(b + 1) * order.len() / MONOTONE_BINS];
            let wv: Vec<f64> = part.iter().map(|&r| w[r]).collect();
            let yv: Vec<f64> = part.iter().map(|&r| y[r]).collect();
            let w_mean = stats::mean(&wv);
            ConditionalBin {
                w_mean,
                estimate: stats::mean(&yv),
                standard_error: stats::std_error(&yv).unwrap_or(0.0),
                sphere_reference: (1.0 - w_mean) / (n - index) as f64,
            }
        })
        .collect();
    MonotoneProbe {
        index,
        slope,
        slope_se,
        flagged: slope > crate::moments::CI_MULTIPLIER * slope_se,
        bins,
    }
}

/// OLS slope with its heteroskedasticity-robust (HC0) standard error.
fn slope_with_se(x: &[f64], y: &[f64]) -> (f64, f64) {
    let mx = stats::mean(x);
    let my = stats::mean(y);
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    if sxx == 0.0 {
        return (0.0, f64::INFINITY);
    }
    let slope = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum::<f64>() / sxx;
    let intercept = my - slope * mx;
    let meat: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| ((a - mx) * (b - intercept - slope * a)).powi(2))
        .sum();
    (slope, meat.sqrt() / sxx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn lis_brute(values: &[f64]) -> usize {
        let n = values.len();
        (0u32..1 << n)
            .filter(|mask| {
                let picked: Vec<usize> = (0..n).filter(|i| mask >> i & 1 == 1).collect();
                picked.windows(2).all(|w| values[w[0]] <= values[w[1]])
            })
            .map(|mask| mask.count_ones() as usize)
            .max()
            .unwrap_or(0)
    }

    fn essential_by_removal(values: &[f64]) -> Vec<bool> {
        let full = lis(values);
        (0..values.len())
            .map(|j| {
                let mut rest = values.to_vec();
                rest.remove(j);
                lis(&rest) + 1 == full
            })
            .collect()
    }

    #[test]
    fn small_cases() {
        assert_eq!(lis(&[1.0, 2.0, 3.0]), 3);
        assert_eq!(lis(&[3.0, 2.0, 1.0]), 1);
        assert_eq!(lis(&[]), 0);
        assert_eq!(lis(&[2.0, 2.0, 2.0]), 3);
        let sorted: Vec<f64> = (0..50).map(f64::from).collect();
        assert_eq!(lis(&sorted), 50);
        let rev: Vec<f64> = sorted.iter().rev().copied().collect();
        assert_eq!(lis(&rev), 1);
    }

    #[test]
    fn patience_matches_brute_force() {
        for case in 0..500u64 {
            let s = Sequence::uniform(12, case);
            assert_eq!(lis(&s.values), lis_brute(&s.values), "seed {case}");
        }
    }

    #[test]
    fn essential_matches_removal_definition() {
        for case in 0..300u64 {
            let n = 1 + (case % 20) as usize;
            let s = Sequence::uniform(n, 1000 + case);
            assert_eq!(essential_elements(&s.values), essential_by_removal(&s.values));
        }
        let ties = [1.0, 1.0, 0.5, 1.0];
        assert_eq!(essential_elements(&ties), essential_by_removal(&ties));
    }

    #[test]
    fn two_element_essential_probabilities() {
        // Increasing (prob 1/2): both essential. Decreasing: neither.
        let e = essential_probability(2, &[], 20_000, 3).unwrap();
        for (p, se) in e.estimates.iter().zip(&e.standard_errors) {
            assert!((p - 0.5).abs() < 4.0 * se);
        }
    }

    #[test]
    fn essential_sum_bounded_by_suffix_lis() {
        let e = essential_probability(40, &[0.3, 0.9, 0.1], 2000, 5).unwrap();
        assert!(e.estimates.iter().all(|p| (0.0..=1.0).contains(p)));
        let total: f64 = e.estimates.iter().sum();
        assert!(total <= e.suffix_lis_mean + 3.0 * e.suffix_lis_se);
    }

    #[test]
    fn essential_probability_rejects_bad_input() {
        assert!(essential_probability(5, &[], 50, 1).is_err());
        assert!(essential_probability(2, &[0.1, 0.2], 200, 1).is_err());
    }

    #[test]
    fn sphere_has_unit_norm() {
        for seed in 0..50 {
            let v = sample_unit_vector(37, &VectorFamily::SphereUniform, seed).unwrap();
            let s: f64 = v.coords.iter().map(|y| y * y).sum();
            assert!((s - 1.0).abs() < 1e-12);
            let j = jl_projection_statistic(&v, 37).unwrap();
            assert!(j.centered.abs() < 1e-12);
            assert_eq!(jl_projection_statistic(&v, 0).unwrap().sum, 0.0);
        }
    }

    #[test]
    fn one_dimensional_sphere_is_a_sign() {
        let pos = (0..4000)
            .filter(|&s| {
                let v = sample_unit_vector(1, &VectorFamily::SphereUniform, s).unwrap();
                assert_eq!(v.coords[0].abs(), 1.0);
                v.coords[0] > 0.0
            })
            .count();
        assert!((pos as f64 - 2000.0).abs() < 4.0 * 31.7);
    }

    #[test]
    fn analytic_moments_match_samples() {
        let n = 30;
        for family in [
            VectorFamily::SphereUniform,
            VectorFamily::Gaussian,
            VectorFamily::default_radial(n),
            VectorFamily::RadialMixture {
                radial: RadialDistribution::TwoPoint { low: 0.2 },
            },
        ] {
            let mut rng = rng::stream(17, 0, 0);
            let draws: Vec<f64> = (0..20_000)
                .map(|_| sample_unit_vector_with(n, &family, &mut rng).unwrap().coords[3].powi(4))
                .collect();
            let expect = family.coordinate_moment(n, 2).unwrap();
            let se = stats::std_error(&draws).unwrap();
            assert!((stats::mean(&draws) - expect).abs() < 4.0 * se, "{family:?}");
        }
        let pareto = RadialDistribution::Pareto { shape: 1.2 };
        assert!(pareto.radial_moment(10, 1).is_some());
        assert!(pareto.radial_moment(10, 2).is_none());
    }

    #[test]
    fn default_radial_is_negatively_correlated() {
        // Cov(Y_1², Y_2²) = E R⁴/(n(n+2)) − 1/n² < 0 needs E R⁴ < 1 + 2/n.
        for n in [2, 10, 1000] {
            let m4 = RadialDistribution::ScaledBeta { extra_dims: n }.radial_moment(n, 2).unwrap();
            assert!(m4 < 1.0 + 2.0 / n as f64);
        }
    }

    #[test]
    fn sphere_passes_hypotheses() {
        let r = check_jl_hypotheses(&VectorFamily::SphereUniform, 60, 20, 10_000, 9).unwrap();
        assert!(r.admissible(), "{r:?}");
        for p in &r.monotone {
            assert!(p.slope < 0.0);
            for b in &p.bins {
                assert!((b.estimate - b.sphere_reference).abs() < 4.0 * b.standard_error + 1e-3);
            }
        }
        let c2 = r.moments[0].constant;
        assert!((c2 - 0.5).abs() < 0.1);
    }

    #[test]
    fn reinforcing_family_is_flagged() {
        let fam = VectorFamily::RadialMixture {
            radial: RadialDistribution::TwoPoint { low: 0.2 },
        };
        let r = check_jl_hypotheses(&fam, 60, 20, 10_000, 10).unwrap();
        assert!(!r.monotone_ok);
    }

    #[test]
    fn pareto_family_fails_moment_growth() {
        let fam = VectorFamily::RadialMixture {
            radial: RadialDistribution::Pareto { shape: 1.2 },
        };
        let r = check_jl_hypotheses(&fam, 60, 20, 10_000, 11).unwrap();
        assert!(!r.moments_ok, "{:?}", r.moments);
    }

    proptest! {
        #[test]
        fn lis_bounds_and_reverse(values in proptest::collection::vec(0.0f64..1.0, 1..40)) {
            let l = lis(&values);
            prop_assert!(l >= 1 && l <= values.len());
            let rev: Vec<f64> = values.iter().rev().copied().collect();
            // Erdős–Szekeres: longest non-decreasing times longest non-increasing ≥ n.
            let lds = lis(&rev);
            prop_assert!(l * lds >= values.len());
        }
    }
}
