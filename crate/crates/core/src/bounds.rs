//! Moment and tail bounds for sums of strongly negatively correlated variables.
//!
//! Everything here works in the natural-log domain: moment bounds of the form
//! `(c·n·m)^{m/2}` overflow double precision long before `m` gets interesting.
//! A "log bound" is therefore `ln E(ΣXᵢ)^m`, and `-∞` encodes an exact zero.
//!
//! Variables are indexed from 0 in the API. Error messages report 1-based
//! indices since that is how moment profiles are usually written down.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Coefficient in front of every order-reducing term of the moment recursion.
const RECURSION_WEIGHT: f64 = 11.0 / 5.0;

/// `ln(a + b)` for log-domain operands.
pub fn log_add<T: Real>(a: T, b: T) -> T {
    if a == T::neg_infinity() {
        return b;
    }
    if b == T::neg_infinity() {
        return a;
    }
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// `ln Σ exp(xᵢ)`; returns `-∞` for an empty input.
pub fn log_sum_exp<T: Real>(values: impl IntoIterator<Item = T>) -> T {
    let values: Vec<T> = values.into_iter().collect();
    let hi = values.iter().copied().fold(T::neg_infinity(), T::max);
    if hi == T::neg_infinity() || hi == T::infinity() {
        return hi;
    }
    let acc: T = values.iter().map(|&v| (v - hi).exp()).sum();
    hi + acc.ln()
}

/// `ln k!` by direct summation (orders here are small).
pub fn ln_factorial<T: Real>(k: u32) -> T {
    (2..=k).map(|j| T::from_u32(j).unwrap().ln()).sum()
}

fn check_even_order(m: u32) -> Result<()> {
    if m < 2 || m % 2 != 0 {
        return Err(Error::invalid(format!(
            "moment order must be an even integer >= 2, got {m}"
        )));
    }
    Ok(())
}

/// Nearest even integer to `x`, never below 2.
pub fn nearest_even_order(x: f64) -> u32 {
    if !x.is_finite() {
        return if x > 0.0 { u32::MAX - 1 } else { 2 };
    }
    let m = ((x / 2.0).round() * 2.0).max(2.0);
    if m >= f64::from(u32::MAX - 1) {
        u32::MAX - 1
    } else {
        m as u32
    }
}

fn slot(order: u32) -> usize {
    (order / 2 - 1) as usize
}

#[derive(Debug, Clone, PartialEq)]
enum Entries<T> {
    Uniform(Vec<Option<T>>),
    PerVariable(Vec<Vec<Option<T>>>),
}

/// Upper bounds `M_{i,l}` on the even conditional moments
/// `E(Xᵢˡ | X₁+…+Xᵢ₋₁)` for `l = 2, 4, …, max_order`, stored as logarithms.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentProfile<T> {
    n: usize,
    max_order: u32,
    entries: Entries<T>,
}

impl<T: Real> MomentProfile<T> {
    fn validate_shape(n: usize, max_order: u32) -> Result<()> {
        if n == 0 {
            return Err(Error::invalid("moment profile needs at least one variable"));
        }
        check_even_order(max_order)
    }

    fn to_log(order: u32, value: T) -> Result<T> {
        if value.is_nan() || value < T::zero() {
            return Err(Error::invalid(format!(
                "moment bound for order {order} must be nonnegative, got {value:?}"
            )));
        }
        Ok(value.ln())
    }

    /// Profile whose bounds do not depend on the variable index.
    pub fn uniform(n: usize, max_order: u32, bound: impl Fn(u32) -> T) -> Result<Self> {
        Self::validate_shape(n, max_order)?;
        let row = (2..=max_order)
            .step_by(2)
            .map(|l| Self::to_log(l, bound(l)).map(Some))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            n,
            max_order,
            entries: Entries::Uniform(row),
        })
    }

    /// Uniform profile given directly in the log domain.
    pub fn uniform_log(n: usize, max_order: u32, log_bound: impl Fn(u32) -> T) -> Result<Self> {
        Self::validate_shape(n, max_order)?;
        let row = (2..=max_order)
            .step_by(2)
            .map(|l| {
                let v = log_bound(l);
                if v.is_nan() {
                    Err(Error::invalid(format!("log bound for order {l} is NaN")))
                } else {
                    Ok(Some(v))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            n,
            max_order,
            entries: Entries::Uniform(row),
        })
    }

    /// Per-variable profile; `bound(i, l)` receives a 0-based variable index.
    pub fn from_fn(n: usize, max_order: u32, bound: impl Fn(usize, u32) -> T) -> Result<Self> {
        Self::validate_shape(n, max_order)?;
        let rows = (0..n)
            .map(|i| {
                (2..=max_order)
                    .step_by(2)
                    .map(|l| Self::to_log(l, bound(i, l)).map(Some))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            n,
            max_order,
            entries: Entries::PerVariable(rows),
        })
    }

    /// Per-variable profile with every entry missing; fill with [`Self::set`].
    pub fn empty(n: usize, max_order: u32) -> Result<Self> {
        Self::validate_shape(n, max_order)?;
        Ok(Self {
            n,
            max_order,
            entries: Entries::PerVariable(vec![vec![None; slot(max_order) + 1]; n]),
        })
    }

    pub fn set(&mut self, var: usize, order: u32, value: T) -> Result<()> {
        check_even_order(order)?;
        if var >= self.n || order > self.max_order {
            return Err(Error::invalid(format!(
                "entry (variable {}, order {order}) outside profile of {} variables up to order {}",
                var + 1,
                self.n,
                self.max_order
            )));
        }
        let log = Self::to_log(order, value)?;
        self.make_per_variable();
        if let Entries::PerVariable(rows) = &mut self.entries {
            rows[var][slot(order)] = Some(log);
        }
        Ok(())
    }

    fn make_per_variable(&mut self) {
        if let Entries::Uniform(row) = &self.entries {
            self.entries = Entries::PerVariable(vec![row.clone(); self.n]);
        }
    }

    /// Expands a uniform profile to the explicit per-variable form.
    pub fn to_per_variable(&self) -> Self {
        let mut out = self.clone();
        out.make_per_variable();
        out
    }

    pub fn is_uniform(&self) -> bool {
        matches!(self.entries, Entries::Uniform(_))
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn max_order(&self) -> u32 {
        self.max_order
    }

    /// Stored even orders `2, 4, …, max_order`.
    pub fn orders(&self) -> impl Iterator<Item = u32> {
        (2..=self.max_order).step_by(2)
    }

    /// `ln M_{var,order}`.
    pub fn log_bound(&self, var: usize, order: u32) -> Result<T> {
        let missing = Error::IncompleteProfile {
            var: var + 1,
            order,
        };
        if var >= self.n || order < 2 || order % 2 != 0 || order > self.max_order {
            return Err(missing);
        }
        let entry = match &self.entries {
            Entries::Uniform(row) => row[slot(order)],
            Entries::PerVariable(rows) => rows[var][slot(order)],
        };
        entry.ok_or(missing)
    }

    pub fn bound(&self, var: usize, order: u32) -> Result<T> {
        self.log_bound(var, order).map(T::exp)
    }

    /// Profile matching the closed-form bound: `M_{i,l} = (n/m)^{(l-2)/2} · l!` for `l ≤ m`.
    pub fn theorem1_hypothesis(n: usize, m: u32) -> Result<Self> {
        check_even_order(m)?;
        let ratio = (T::from_usize_lossy(n) / T::from_u32(m).unwrap()).ln();
        Self::uniform_log(n, m, |l| {
            T::from_u32(l - 2).unwrap() / T::lit(2.0) * ratio + ln_factorial::<T>(l)
        })
    }
}

/// Typical-case moment bounds `L_{i,l}` with atypical-event probabilities
/// `δ_{i,l}`, on top of the worst-case profile `M_{i,l}`.
#[derive(Debug, Clone, PartialEq)]
pub struct TypicalProfile<T> {
    worst: MomentProfile<T>,
    typical: MomentProfile<T>,
    /// `ln δ_{i,l}`; stored with the same layout as a moment profile.
    delta: MomentProfile<T>,
}

impl<T: Real> TypicalProfile<T> {
    pub fn new(
        worst: MomentProfile<T>,
        typical: MomentProfile<T>,
        delta: MomentProfile<T>,
    ) -> Result<Self> {
        for other in [&typical, &delta] {
            if other.n != worst.n || other.max_order != worst.max_order {
                return Err(Error::invalid(
                    "typical, worst-case and delta profiles must share n and orders",
                ));
            }
        }
        let slack = T::lit(1e-12);
        for i in 0..worst.n {
            for l in worst.orders() {
                let (Ok(lm), Ok(ll), Ok(ld)) = (
                    worst.log_bound(i, l),
                    typical.log_bound(i, l),
                    delta.log_bound(i, l),
                ) else {
                    continue;
                };
                if ld > slack {
                    return Err(Error::invalid(format!(
                        "delta for (variable {}, order {l}) is {:?}, outside [0, 1]",
                        i + 1,
                        ld.exp()
                    )));
                }
                if ll > lm + slack * (T::one() + lm.abs()) {
                    return Err(Error::invalid(format!(
                        "typical bound exceeds worst-case bound at (variable {}, order {l})",
                        i + 1
                    )));
                }
            }
        }
        Ok(Self {
            worst,
            typical,
            delta,
        })
    }

    /// Typical event equal to the whole space: `L = M`, `δ = 0`.
    pub fn whole_space(worst: MomentProfile<T>) -> Self {
        let delta = MomentProfile::uniform_log(worst.n, worst.max_order, |_| T::neg_infinity())
            .expect("shape already validated");
        Self {
            typical: worst.clone(),
            worst,
            delta,
        }
    }

    pub fn worst(&self) -> &MomentProfile<T> {
        &self.worst
    }

    pub fn typical(&self) -> &MomentProfile<T> {
        &self.typical
    }

    pub fn delta(&self, var: usize, order: u32) -> Result<T> {
        self.delta.log_bound(var, order).map(T::exp)
    }

    pub fn log_delta(&self, var: usize, order: u32) -> Result<T> {
        self.delta.log_bound(var, order)
    }

    pub fn n(&self) -> usize {
        self.worst.n
    }
}

/// The generic constants of the bounds, all strictly positive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundConstants<T> {
    /// Constant inside `(c·n·m)^{m/2}`.
    pub c_theorem1: T,
    /// Constant of the typical/worst-case bound.
    pub c_main: T,
    /// Constant in the order heuristic `m ≈ t²/(c·n)`.
    pub c_mopt: T,
}

impl<T: Real> Default for BoundConstants<T> {
    fn default() -> Self {
        Self {
            c_theorem1: T::lit(48.0),
            c_main: T::lit(48.0),
            c_mopt: T::lit(std::f64::consts::E * 48.0),
        }
    }
}

impl<T: Real> BoundConstants<T> {
    pub fn new(c_theorem1: T, c_main: T, c_mopt: T) -> Result<Self> {
        let out = Self {
            c_theorem1,
            c_main,
            c_mopt,
        };
        out.validate()?;
        Ok(out)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("c_theorem1", self.c_theorem1),
            ("c_main", self.c_main),
            ("c_mopt", self.c_mopt),
        ] {
            if !(v > T::zero()) || !v.is_finite() {
                return Err(Error::invalid(format!("{name} must be positive and finite")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundMethod {
    Theorem1Closed,
    Theorem1Recursion,
    MainTheorem,
    ChernoffCorollary,
    GeneralChernoff,
    HoeffdingAzuma,
}

/// A tail bound `Pr(|ΣXᵢ| ≥ t) ≤ tail_probability` obtained from an even moment.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TailBoundResult<T> {
    pub t: T,
    pub m_used: u32,
    /// `ln` of the bound on `E(ΣXᵢ)^m`.
    pub moment_bound: T,
    pub tail_probability: T,
    pub method: BoundMethod,
    /// For the Chernoff-type results: the `c` with `tail = exp(-c·t²/scale)`.
    pub realized_constant: Option<T>,
}

/// `(m/2)·ln(c·n·m)`: the closed-form moment bound.
pub fn theorem1_closed_bound<T: Real>(n: usize, m: u32, constants: &BoundConstants<T>) -> Result<T> {
    check_even_order(m)?;
    if n == 0 {
        return Err(Error::invalid("n must be at least 1"));
    }
    constants.validate()?;
    let m_t = T::from_u32(m).unwrap();
    Ok(m_t / T::lit(2.0) * (constants.c_theorem1 * T::from_usize_lossy(n) * m_t).ln())
}

/// Exact solution of the moment recursion
///
/// `g(i,q) = g(i−1,q) + (11/5)·Σ_{t even, 2≤t≤q} (qᵗ/t!)·M_{i,t}·g(i−1,q−t)`,
/// with `g(·,0) = 1` and `g(1,q) = M_{1,q}`. Returns `ln g(n,m)`.
pub fn theorem1_recursion_bound<T: Real>(profile: &MomentProfile<T>, m: u32) -> Result<T> {
    check_even_order(m)?;
    let half = (m / 2) as usize;
    // Validate completeness up front so the error names the first gap.
    for i in 0..profile.n() {
        for t in (2..=m).step_by(2) {
            profile.log_bound(i, t)?;
        }
    }

    let log_weight = T::lit(RECURSION_WEIGHT).ln();
    let log_fact: Vec<T> = (0..=m).map(ln_factorial::<T>).collect();
    let log_q: Vec<T> = (0..=half).map(|k| T::from_usize_lossy(2 * k).ln()).collect();

    // g[k] = ln g(i, 2k) for the current i.
    let mut g: Vec<T> = (0..=half)
        .map(|k| {
            if k == 0 {
                Ok(T::zero())
            } else {
                profile.log_bound(0, 2 * k as u32)
            }
        })
        .collect::<Result<_>>()?;

    let mut next = vec![T::zero(); half + 1];
    for i in 1..profile.n() {
        let log_m: Vec<T> = (1..=half)
            .map(|k| profile.log_bound(i, 2 * k as u32))
            .collect::<Result<_>>()?;
        next[0] = T::zero();
        for k in 1..=half {
            let terms = (1..=k).map(|s| {
                let t = 2 * s;
                T::from_usize_lossy(t) * log_q[k] - log_fact[t] + log_m[s - 1] + g[k - s]
            });
            let reduced = log_weight + log_sum_exp(terms);
            next[k] = log_add(g[k], reduced);
        }
        std::mem::swap(&mut g, &mut next);
    }
    Ok(g[half])
}

/// Typical/worst-case moment bound:
///
/// `(c·m)^{m/2}·(Σ_{l=1}^{m/2} m^{1−1/l}/l² · (Σᵢ L_{i,2l})^{1/l})^{m/2}
///  + (c·m)^m · Σ_{l=1}^{m/2} 1/(n·l²) · Σᵢ (n·M_{i,2l}·δ_{i,2l}^{2/(m−2l+2)})^{m/(2l)}`,
///
/// returned as a logarithm, with `0^{positive} = 0`.
pub fn main_theorem_bound<T: Real>(
    profile: &TypicalProfile<T>,
    m: u32,
    constants: &BoundConstants<T>,
) -> Result<T> {
    check_even_order(m)?;
    constants.validate()?;
    let n = profile.n();
    let half = m / 2;
    let two = T::lit(2.0);
    let m_t = T::from_u32(m).unwrap();
    let log_m = m_t.ln();
    let log_n = T::from_usize_lossy(n).ln();
    let log_cm = (constants.c_main * m_t).ln();

    for i in 0..n {
        for l in 1..=half {
            let ld = profile.log_delta(i, 2 * l)?;
            if ld > T::lit(1e-12) {
                return Err(Error::invalid(format!(
                    "delta for (variable {}, order {}) exceeds 1",
                    i + 1,
                    2 * l
                )));
            }
        }
    }

    let mut inner = Vec::with_capacity(half as usize);
    for l in 1..=half {
        let l_t = T::from_u32(l).unwrap();
        let log_sum_l = log_sum_exp(
            (0..n)
                .map(|i| profile.typical().log_bound(i, 2 * l))
                .collect::<Result<Vec<_>>>()?,
        );
        let coeff = (T::one() - T::one() / l_t) * log_m - two * l_t.ln();
        inner.push(coeff + log_sum_l / l_t);
    }
    let half_t = m_t / two;
    let first = half_t * log_cm + half_t * log_sum_exp(inner);

    let mut second_terms = Vec::new();
    for l in 1..=half {
        let l_t = T::from_u32(l).unwrap();
        let delta_pow = two / (m_t - two * l_t + two);
        let outer_pow = m_t / (two * l_t);
        let prefix = -log_n - two * l_t.ln();
        for i in 0..n {
            let lm = profile.worst().log_bound(i, 2 * l)?;
            let ld = profile.log_delta(i, 2 * l)?;
            let base = log_n + lm + delta_pow * ld;
            if base == T::neg_infinity() {
                continue;
            }
            second_terms.push(prefix + outer_pow * base);
        }
    }
    let second = m_t * log_cm + log_sum_exp(second_terms);
    Ok(log_add(first, second))
}

/// Markov step: `min(1, exp(log_bound − m·ln t))`.
pub fn markov_tail<T: Real>(log_bound: T, m: u32, t: T) -> Result<T> {
    if !(t > T::zero()) {
        return Err(Error::invalid(format!("threshold t must be positive, got {t:?}")));
    }
    if log_bound.is_nan() {
        return Err(Error::invalid("log moment bound is NaN"));
    }
    let log_tail = log_bound - T::from_u32(m).unwrap() * t.ln();
    Ok(if log_tail >= T::zero() {
        T::one()
    } else {
        log_tail.exp()
    })
}

/// Largest admissible even order when the bound is only intended for `m ≤ n`.
pub fn clamp_order_to_n(m_max: u32, n: usize) -> u32 {
    let cap = u32::try_from(n).unwrap_or(u32::MAX) & !1;
    (m_max & !1).min(cap).max(2)
}

/// Scans every even `m` in `[2, m_max]` and keeps the smallest Markov tail;
/// ties go to the smaller order.
pub fn optimize_m<T: Real>(
    method: BoundMethod,
    mut bound_fn: impl FnMut(u32) -> Result<T>,
    t: T,
    m_max: u32,
) -> Result<TailBoundResult<T>> {
    check_even_order(m_max)?;
    let mut best: Option<TailBoundResult<T>> = None;
    for m in (2..=m_max).step_by(2) {
        let log_bound = bound_fn(m)?;
        let tail = markov_tail(log_bound, m, t)?;
        if best.as_ref().is_none_or(|b| tail < b.tail_probability) {
            best = Some(TailBoundResult {
                t,
                m_used: m,
                moment_bound: log_bound,
                tail_probability: tail,
                method,
                realized_constant: None,
            });
        }
    }
    Ok(best.expect("m_max >= 2 gives a nonempty scan"))
}

/// Order suggested by the closed form's minimizer: nearest even integer
/// (at least 2) to `t²/(c·n)`, clamped to `m_max`.
pub fn suggested_order<T: Real>(t: T, n: usize, constants: &BoundConstants<T>, m_max: u32) -> u32 {
    let x = (t * t / (constants.c_mopt * T::from_usize_lossy(n)))
        .to_f64()
        .unwrap_or(f64::INFINITY);
    nearest_even_order(x).min(m_max.max(2) & !1).max(2)
}

/// Closed-form tail optimized over even `m ≤ min(m_max, n)`.
pub fn theorem1_tail<T: Real>(
    n: usize,
    t: T,
    m_max: u32,
    constants: &BoundConstants<T>,
) -> Result<TailBoundResult<T>> {
    let cap = clamp_order_to_n(m_max, n);
    optimize_m(
        BoundMethod::Theorem1Closed,
        |m| theorem1_closed_bound(n, m, constants),
        t,
        cap,
    )
}

/// Tail of `ΣXᵢ` when every conditional even moment is at most `σ²`.
///
/// Requires `0 < t ≤ n·σ²`; uses `m` = nearest even integer to
/// `t²/(c_mopt·n·σ²)` and the closed form applied to `Xᵢ/σ`, giving
/// `(c_theorem1·n·m·σ²/t²)^{m/2}`.
pub fn chernoff_corollary_bound<T: Real>(
    n: usize,
    sigma2: T,
    t: T,
    constants: &BoundConstants<T>,
) -> Result<TailBoundResult<T>> {
    constants.validate()?;
    if n == 0 {
        return Err(Error::invalid("n must be at least 1"));
    }
    if !(sigma2 > T::zero()) || !(t > T::zero()) {
        return Err(Error::invalid("sigma2 and t must be positive"));
    }
    let scale = T::from_usize_lossy(n) * sigma2;
    if t > scale * (T::one() + T::lit(1e-12)) {
        return Err(Error::OutOfRegime(format!(
            "t = {t:?} exceeds n*sigma2 = {scale:?}"
        )));
    }
    let m = nearest_even_order(
        (t * t / (constants.c_mopt * scale))
            .to_f64()
            .unwrap_or(f64::INFINITY),
    );
    let m_t = T::from_u32(m).unwrap();
    let log_bound = m_t / T::lit(2.0) * (constants.c_theorem1 * scale * m_t).ln();
    let tail = markov_tail(log_bound, m, t)?;
    Ok(TailBoundResult {
        t,
        m_used: m,
        moment_bound: log_bound,
        tail_probability: tail,
        method: BoundMethod::ChernoffCorollary,
        realized_constant: Some(-tail.ln() * scale / (t * t)),
    })
}

/// Chernoff bound for independent, non-identical Bernoulli trials with
/// `ν = Σνᵢ`: `m` = nearest even integer (at least 2) to `t²/(2(ν+t))` and
/// tail `(c_main·m·(ν+m)/t²)^{m/2}`.
pub fn general_chernoff_bound<T: Real>(
    nu: T,
    t: T,
    constants: &BoundConstants<T>,
) -> Result<TailBoundResult<T>> {
    constants.validate()?;
    if !(nu > T::zero()) || !(t > T::zero()) {
        return Err(Error::invalid("nu and t must be positive"));
    }
    let two = T::lit(2.0);
    let scale = two * (nu + t);
    let m = nearest_even_order((t * t / scale).to_f64().unwrap_or(f64::INFINITY));
    let m_t = T::from_u32(m).unwrap();
    let log_bound = m_t / two * (constants.c_main * m_t * (nu + m_t)).ln();
    let tail = markov_tail(log_bound, m, t)?;
    Ok(TailBoundResult {
        t,
        m_used: m,
        moment_bound: log_bound,
        tail_probability: tail,
        method: BoundMethod::GeneralChernoff,
        realized_constant: Some(-tail.ln() * scale / (t * t)),
    })
}
