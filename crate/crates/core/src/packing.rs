//! Discrete-distribution bin packing through its linear-programming
//! relaxation.
//!
//! The primal `min Σ x_i  s.t.  Σ_i x_i a_ij ≥ n_j,  x ≥ 0` is solved through
//! its dual `max Σ n_j y_j  s.t.  Σ_j a_ij y_j ≤ 1,  y ≥ 0`, whose slack basis
//! is feasible from the start. Optimal primal values are read off the
//! reduced costs of the dual slacks.

use std::io::{BufRead, Write};

use num_rational::BigRational;
use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::rng::StreamRng;
use crate::scalar::LpScalar;

pub const MAX_ITEM_TYPES: usize = 8;
pub const MIN_ITEM_SIZE: f64 = 0.05;
pub const MAX_BIN_TYPES: usize = 1_000_000;
pub const PIVOT_LIMIT: usize = 1_000_000;
/// Instances with at most this many bin types get an exact re-solve in the
/// oracle tests.
pub const EXACT_RESOLVE_TYPES: usize = 6;

#[derive(Debug, Clone, PartialEq)]
pub struct ItemDistribution<T> {
    sizes: Vec<T>,
    probs: Vec<T>,
}

impl<T: LpScalar> ItemDistribution<T> {
    pub fn new(sizes: Vec<T>, probs: Vec<T>) -> Result<Self> {
        if sizes.is_empty() || sizes.len() != probs.len() {
            return Err(Error::invalid("sizes and probabilities must be nonempty and of equal length"));
        }
        if sizes.iter().any(|z| *z <= T::zero() || *z > T::one()) {
            return Err(Error::invalid("item sizes must lie in (0, 1]"));
        }
        if probs.iter().any(|p| *p < T::zero()) {
            return Err(Error::invalid("probabilities must be nonnegative"));
        }
        let total = probs.iter().fold(T::zero(), |a, p| a + p.clone());
        let slack = if T::is_exact() { T::zero() } else { T::from_f64(1e-12).unwrap() };
        if (total - T::one()).abs() > slack {
            return Err(Error::invalid("probabilities must sum to 1"));
        }
        Ok(Self { sizes, probs })
    }

    pub fn sizes(&self) -> &[T] {
        &self.sizes
    }

    pub fn probs(&self) -> &[T] {
        &self.probs
    }

    pub fn r(&self) -> usize {
        self.sizes.len()
    }

    pub fn mean(&self) -> T {
        self.sizes
            .iter()
            .zip(&self.probs)
            .fold(T::zero(), |a, (z, p)| a + z.clone() * p.clone())
    }

    pub fn variance(&self) -> T {
        let mu = self.mean();
        self.sizes.iter().zip(&self.probs).fold(T::zero(), |a, (z, p)| {
            let d = z.clone() - mu.clone();
            a + p.clone() * d.clone() * d
        })
    }

    /// `μ³ + σ²`, the per-item variance scale of the LP value.
    pub fn spread_scale(&self) -> T {
        let mu = self.mean();
        mu.clone() * mu.clone() * mu + self.variance()
    }

    pub fn to_f64(&self) -> ItemDistribution<f64> {
        ItemDistribution {
            sizes: self.sizes.iter().map(LpScalar::to_f64_lossy).collect(),
            probs: self.probs.iter().map(LpScalar::to_f64_lossy).collect(),
        }
    }

    /// Item type drawn by inversion of one uniform.
    pub fn sample_type(&self, rng: &mut StreamRng) -> usize {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (j, p) in self.probs.iter().enumerate() {
            acc += p.to_f64_lossy();
            if u < acc {
                return j;
            }
        }
        self.probs.len() - 1
    }

    /// Item counts per type for `n` i.i.d. items.
    pub fn sample_counts(&self, n: usize, rng: &mut StreamRng) -> Vec<u64> {
        let mut counts = vec![0; self.r()];
        for _ in 0..n {
            counts[self.sample_type(rng)] += 1;
        }
        counts
    }

    /// Regime warnings: atoms rarer than `1/ln n`, or mean above `1/(r² ln n)`.
    pub fn regime_warnings(&self, n: usize) -> Vec<String> {
        let ln_n = (n as f64).ln();
        let mut out = Vec::new();
        let min_p = self.probs.iter().map(LpScalar::to_f64_lossy).fold(f64::INFINITY, f64::min);
        if min_p < 1.0 / ln_n {
            out.push(format!("smallest atom probability {min_p:.4} is below 1/ln n = {:.4}", 1.0 / ln_n));
        }
        let mu = self.mean().to_f64_lossy();
        let cap = 1.0 / ((self.r() * self.r()) as f64 * ln_n);
        if mu > cap {
            out.push(format!("mean item size {mu:.4} exceeds 1/(r² ln n) = {cap:.4}"));
        }
        out
    }
}

/// The perfectly packable two-point distribution: `k − 2` large items of
/// size `(k−1)/(k(k−2))` plus one small item of size `1/k` fill a bin.
pub fn lower_bound_distribution<T: LpScalar>(k: i64) -> Result<ItemDistribution<T>> {
    if k < 4 {
        return Err(Error::invalid(format!("k must be at least 4, got {k}")));
    }
    ItemDistribution::new(
        vec![T::from_ratio(k - 1, k * (k - 2)), T::from_ratio(1, k)],
        vec![T::from_ratio(k - 2, k - 1), T::from_ratio(1, k - 1)],
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct BinTypeSet<T> {
    pub sizes: Vec<T>,
    /// Lexicographically increasing count vectors.
    pub rows: Vec<Vec<u32>>,
    pub maximal_only: bool,
}

impl<T: LpScalar> BinTypeSet<T> {
    fn load(&self, row: &[u32]) -> T {
        row.iter()
            .zip(&self.sizes)
            .fold(T::zero(), |a, (&c, z)| a + T::from_u32(c).unwrap() * z.clone())
    }

    pub fn is_feasible(&self, row: &[u32]) -> bool {
        self.load(row) <= T::one() + T::tolerance()
    }

    pub fn is_maximal(&self, row: &[u32]) -> bool {
        let load = self.load(row);
        self.sizes
            .iter()
            .all(|z| load.clone() + z.clone() > T::one() + T::tolerance())
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

/// All feasible bin types (or only those to which no item can be added),
/// in lexicographic order.
pub fn enumerate_bin_types<T: LpScalar>(dist: &ItemDistribution<T>, maximal_only: bool) -> Result<BinTypeSet<T>> {
    let r = dist.r();
    if r > MAX_ITEM_TYPES {
        return Err(Error::invalid(format!("at most {MAX_ITEM_TYPES} item types supported, got {r}")));
    }
    if dist.sizes.iter().any(|z| z.to_f64_lossy() < MIN_ITEM_SIZE) {
        return Err(Error::invalid(format!("item sizes below {MIN_ITEM_SIZE} are not supported")));
    }
    let mut set = BinTypeSet {
        sizes: dist.sizes.clone(),
        rows: Vec::new(),
        maximal_only,
    };
    let mut current = vec![0u32; r];
    let mut visited = 0usize;
    extend(&mut set, &mut current, 0, T::zero(), &mut visited)?;
    Ok(set)
}

fn extend<T: LpScalar>(
    set: &mut BinTypeSet<T>,
    current: &mut Vec<u32>,
    pos: usize,
    load: T,
    visited: &mut usize,
) -> Result<()> {
    if pos == current.len() {
        *visited += 1;
        if *visited > MAX_BIN_TYPES {
            return Err(Error::SizeLimit(format!("more than {MAX_BIN_TYPES} bin types")));
        }
        if !set.maximal_only || set.is_maximal(current) {
            set.rows.push(current.clone());
        }
        return Ok(());
    }
    let size = set.sizes[pos].clone();
    let mut count = 0u32;
    let mut here = load;
    loop {
        current[pos] = count;
        extend(set, current, pos + 1, here.clone(), visited)?;
        here = here + size.clone();
        if here > T::one() + T::tolerance() {
            break;
        }
        count += 1;
    }
    current[pos] = 0;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution<T> {
    /// Bins of each type.
    pub primal: Vec<T>,
    /// Imputed item sizes.
    pub dual: Vec<T>,
    pub primal_value: T,
    pub dual_value: T,
    /// Number of nonzero primal variables.
    pub basis_size: usize,
    pub pivots: usize,
}

impl<T: LpScalar> LpSolution<T> {
    pub fn value(&self) -> T {
        self.dual_value.clone()
    }

    pub fn duality_gap(&self) -> T {
        (self.primal_value.clone() - self.dual_value.clone()).abs()
    }

    pub fn primal_feasible(&self, types: &BinTypeSet<T>, counts: &[u64]) -> bool {
        let tol = T::tolerance() * (T::one() + self.primal_value.clone());
        self.primal.iter().all(|x| *x >= -T::tolerance())
            && counts.iter().enumerate().all(|(j, &n)| {
                let covered = types
                    .rows
                    .iter()
                    .zip(&self.primal)
                    .fold(T::zero(), |a, (row, x)| a + x.clone() * T::from_u32(row[j]).unwrap());
                covered >= T::from_u64(n).unwrap() - tol.clone()
            })
    }

    pub fn dual_feasible(&self, types: &BinTypeSet<T>) -> bool {
        dual_vector_feasible(types, &self.dual)
    }
}

/// `y ≥ 0` and `Σ_j a_ij y_j ≤ 1` for every bin type.
pub fn dual_vector_feasible<T: LpScalar>(types: &BinTypeSet<T>, y: &[T]) -> bool {
    y.iter().all(|v| *v >= -T::tolerance())
        && types.rows.iter().all(|row| {
            let load = row
                .iter()
                .zip(y)
                .fold(T::zero(), |a, (&c, v)| a + T::from_u32(c).unwrap() * v.clone());
            load <= T::one() + T::tolerance()
        })
}

/// Simplex on the dual in dictionary form with Bland's rule.
///
/// Variables `0..r` are the dual `y_j`; `r..r+s` are the slacks of the bin
/// type constraints. The dictionary has one row per basic variable and one
/// column per nonbasic variable.
pub fn solve_packing_lp<T: LpScalar>(types: &BinTypeSet<T>, counts: &[u64]) -> Result<LpSolution<T>> {
    let r = types.sizes.len();
    let s = types.rows.len();
    if counts.len() != r {
        return Err(Error::invalid(format!("expected {r} item counts, got {}", counts.len())));
    }
    for (j, &n) in counts.iter().enumerate() {
        if n > 0 && types.rows.iter().all(|row| row[j] == 0) {
            return Err(Error::Infeasible(format!("item type {j} fits in no bin type")));
        }
    }
    let tol = T::tolerance();
    let mut nonbasic: Vec<usize> = (0..r).collect();
    let mut basic: Vec<usize> = (r..r + s).collect();
    let mut dict: Vec<Vec<T>> = types
        .rows
        .iter()
        .map(|row| row.iter().map(|&c| T::from_u32(c).unwrap()).collect())
        .collect();
    let mut rhs: Vec<T> = vec![T::one(); s];
    let mut cost: Vec<T> = counts.iter().map(|&n| T::from_u64(n).unwrap()).collect();
    let mut objective = T::zero();
    let mut pivots = 0;

    loop {
        // Bland: entering variable with the smallest index among improving ones.
        let entering = (0..r)
            .filter(|&k| cost[k] > tol)
            .min_by_key(|&k| nonbasic[k]);
        let Some(k) = entering else { break };
        let mut leaving: Option<usize> = None;
        for i in 0..s {
            if dict[i][k] <= tol {
                continue;
            }
            leaving = match leaving {
                None => Some(i),
                Some(best) => {
                    let lhs = rhs[i].clone() * dict[best][k].clone();
                    let rhs_best = rhs[best].clone() * dict[i][k].clone();
                    if lhs < rhs_best || (lhs == rhs_best && basic[i] < basic[best]) {
                        Some(i)
                    } else {
                        Some(best)
                    }
                }
            };
        }
        let Some(p) = leaving else {
            return Err(Error::Infeasible("dual is unbounded".into()));
        };
        pivots += 1;
        if pivots > PIVOT_LIMIT {
            return Err(Error::PivotLimit(PIVOT_LIMIT));
        }

        let piv = dict[p][k].clone();
        let inv = T::one() / piv;
        for (kk, v) in dict[p].iter_mut().enumerate() {
            *v = if kk == k { inv.clone() } else { v.clone() * inv.clone() };
        }
        rhs[p] = rhs[p].clone() * inv.clone();
        let pivot_row = dict[p].clone();
        for i in 0..s {
            if i == p || dict[i][k].is_zero() {
                continue;
            }
            let factor = dict[i][k].clone();
            rhs[i] = rhs[i].clone() - factor.clone() * rhs[p].clone();
            for kk in 0..r {
                dict[i][kk] = if kk == k {
                    -(factor.clone() * pivot_row[k].clone())
                } else {
                    dict[i][kk].clone() - factor.clone() * pivot_row[kk].clone()
                };
            }
        }
        let ck = cost[k].clone();
        objective = objective + ck.clone() * rhs[p].clone();
        for kk in 0..r {
            cost[kk] = if kk == k {
                -(ck.clone() * pivot_row[k].clone())
            } else {
                cost[kk].clone() - ck.clone() * pivot_row[kk].clone()
            };
        }
        std::mem::swap(&mut basic[p], &mut nonbasic[k]);
    }

    let mut dual = vec![T::zero(); r];
    for (i, &var) in basic.iter().enumerate() {
        if var < r {
            dual[var] = rhs[i].clone();
        }
    }
    let mut primal = vec![T::zero(); s];
    for (k, &var) in nonbasic.iter().enumerate() {
        if var >= r {
            primal[var - r] = -cost[k].clone();
        }
    }
    let primal_value = primal.iter().fold(T::zero(), |a, x| a + x.clone());
    let dual_value = dual
        .iter()
        .zip(counts)
        .fold(T::zero(), |a, (y, &n)| a + y.clone() * T::from_u64(n).unwrap());
    debug_assert!(T::is_exact() || (objective.clone() - dual_value.clone()).abs() <= T::from_f64(1e-6).unwrap() * (T::one() + dual_value.clone()));
    let basis_size = primal.iter().filter(|x| !x.approx_zero()).count();
    Ok(LpSolution {
        primal,
        dual,
        primal_value,
        dual_value,
        basis_size,
        pivots,
    })
}

/// Rounds every nonzero primal variable up: a feasible integer packing whose
/// size is within `r` of the LP value.
pub fn lp_round_up<T: LpScalar>(sol: &LpSolution<T>) -> u64 {
    sol.primal
        .iter()
        .filter(|x| !x.approx_zero())
        .map(|x| x.ceil_tolerant().max(0) as u64)
        .sum()
}

/// Whether the counts of the first `i − 1` items stay within the typical
/// band `|γ'_j| ≤ 100 √(m ln(10m/μ) p_j (i−1))` for every type.
pub fn within_typical_band(prefix_counts: &[u64], items_seen: usize, probs: &[f64], m: u32, mu: f64) -> bool {
    let m = f64::from(m);
    let seen = items_seen as f64;
    let log_term = (10.0 * m / mu).ln().max(0.0);
    prefix_counts.iter().zip(probs).all(|(&c, &p)| {
        let gamma = c as f64 - seen * p;
        gamma.abs() <= 100.0 * (m * log_term * p * seen).sqrt()
    })
}

/// Reads an instance file: a header `sizes=a,b,...; probs=p,q,...` followed
/// by one CSV line of item counts per replicate.
pub fn read_instances<R: BufRead>(input: R) -> Result<(ItemDistribution<f64>, Vec<Vec<u64>>)> {
    let mut lines = input.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Parse("empty instance file".into()))?
        .map_err(|e| Error::io("<instances>", e))?;
    let mut sizes = None;
    let mut probs = None;
    for part in header.split(';') {
        let (key, value) = part
            .split_once('=')
            .ok_or_else(|| Error::Parse(format!("malformed header field `{part}`")))?;
        let parsed = value
            .split(',')
            .map(|v| v.trim().parse::<f64>().map_err(|e| Error::Parse(format!("{key}: {e}"))))
            .collect::<Result<Vec<_>>>()?;
        match key.trim() {
            "sizes" => sizes = Some(parsed),
            "probs" => probs = Some(parsed),
            other => return Err(Error::Parse(format!("unknown header field `{other}`"))),
        }
    }
    let dist = ItemDistribution::new(
        sizes.ok_or_else(|| Error::Parse("missing sizes".into()))?,
        probs.ok_or_else(|| Error::Parse("missing probs".into()))?,
    )?;
    let body = lines
        .map(|l| l.map(|s| s + "\n"))
        .collect::<std::io::Result<String>>()
        .map_err(|e| Error::io("<instances>", e))?;
    let mut rows = Vec::new();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .from_reader(body.as_bytes());
    for record in reader.records() {
        let record = record?;
        let counts = record
            .iter()
            .map(|v| v.trim().parse::<u64>().map_err(|e| Error::Parse(e.to_string())))
            .collect::<Result<Vec<_>>>()?;
        if counts.len() != dist.r() {
            return Err(Error::Parse(format!("expected {} counts, got {}", dist.r(), counts.len())));
        }
        rows.push(counts);
    }
    Ok((dist, rows))
}

pub fn write_instances<W: Write>(mut out: W, dist: &ItemDistribution<f64>, rows: &[Vec<u64>]) -> Result<()> {
    let join = |v: &[f64]| v.iter().map(f64::to_string).collect::<Vec<_>>().join(",");
    writeln!(out, "sizes={}; probs={}", join(dist.sizes()), join(dist.probs()))
        .map_err(|e| Error::io("<instances>", e))?;
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.write_record(row.iter().map(u64::to_string))?;
    }
    w.flush().map_err(|e| Error::io("<instances>", e))?;
    Ok(())
}

/// Summary of one LP solve suitable for reports.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PackingOutcome {
    pub lp_value: f64,
    pub rounded_bins: u64,
    pub basis_size: usize,
    pub duality_gap: f64,
}

/// LP value and rounded packing size for `counts` over `types`.
pub fn pack(types: &BinTypeSet<f64>, counts: &[u64]) -> Result<PackingOutcome> {
    let sol = solve_packing_lp(types, counts)?;
    Ok(PackingOutcome {
        lp_value: sol.value(),
        rounded_bins: lp_round_up(&sol),
        basis_size: sol.basis_size,
        duality_gap: sol.duality_gap(),
    })
}

/// Exact-rational counterpart of an `f64` distribution, for re-solving small
/// instances without rounding. Each value is read as its shortest decimal
/// representation, so `0.2` becomes `1/5` rather than the nearest binary
/// fraction.
pub fn exact_distribution(dist: &ItemDistribution<f64>) -> Result<ItemDistribution<BigRational>> {
    let sizes = dist.sizes().iter().map(|v| decimal_rational(*v)).collect::<Result<Vec<_>>>()?;
    let mut probs = dist.probs().iter().map(|v| decimal_rational(*v)).collect::<Result<Vec<_>>>()?;
    // Decimal probabilities may still miss 1 by a rounding residue; it goes on the last atom.
    let total = probs.iter().fold(BigRational::from_integer(0.into()), |a, p| a + p);
    let last = probs.len() - 1;
    probs[last] = probs[last].clone() + (BigRational::from_integer(1.into()) - total);
    ItemDistribution::new(sizes, probs)
}

fn decimal_rational(v: f64) -> Result<BigRational> {
    if !v.is_finite() {
        return Err(Error::invalid("non-finite value"));
    }
    let text = format!("{v:e}");
    let (mantissa, exponent) = text.split_once('e').expect("exponent form");
    let exponent: i32 = exponent.parse().expect("integer exponent");
    let (whole, frac) = mantissa.split_once('.').unwrap_or((mantissa, ""));
    let digits: num_bigint::BigInt = format!("{whole}{frac}").parse().expect("decimal digits");
    let shift = exponent - frac.len() as i32;
    let ten = num_bigint::BigInt::from(10);
    Ok(if shift >= 0 {
        BigRational::from_integer(digits * num_traits::pow(ten, shift as usize))
    } else {
        BigRational::new(digits, num_traits::pow(ten, (-shift) as usize))
    })
}
