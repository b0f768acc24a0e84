//! Experiment orchestration: configuration, deterministic replication,
//! record persistence, and empirical-versus-bound tail summaries.
//!
//! Replicate `r` of an experiment with base seed `b` runs on the seed
//! `rng::derive_seed(b, r, rng::site_tag(id))`, so every record is a pure
//! function of the configuration and the worker count never matters.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bounds::{
    self, BoundConstants, BoundMethod, MomentProfile, TailBoundResult, TypicalProfile,
};
use crate::error::{Error, Result};
use crate::euclid::{self, TourMethod};
use crate::graphs::{self, EdgeProbabilityMatrix};
use crate::moments::{self, SampleMatrix};
use crate::packing::{self, BinTypeSet, ItemDistribution};
use crate::pointproc::{self, CellCountDistribution, PlacementStrategy};
use crate::rng;
use crate::seq::{self, JlHypothesisReport, VectorFamily};
use crate::stats;

pub const SCHEMA_VERSION: u32 = 1;
pub const DEFAULT_T_POINTS: usize = 20;
/// Fewest records for which a bound comparison is attempted.
pub const MIN_RECORDS_FOR_BOUND: usize = 100;
pub const DEFAULT_JL_CHECK_SAMPLES: usize = 10_000;
/// Verdict slack in binomial standard errors.
pub const VERDICT_SE_MULTIPLIER: f64 = 3.0;
const DEFAULT_M_MAX: u32 = 40;
/// Highest order at which the projection moment hypothesis is measured,
/// doubled: `E (Y²)^q` needs `E Y^{2q}`.
const JL_PROFILE_ORDER: u32 = 6;
const BINPACK_PROFILE_ORDER: u32 = 8;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstantsConfig {
    #[serde(default)]
    pub c_theorem1: Option<f64>,
    #[serde(default)]
    pub c_main: Option<f64>,
    #[serde(default)]
    pub c_mopt: Option<f64>,
}

impl ConstantsConfig {
    pub fn resolve(&self) -> Result<BoundConstants<f64>> {
        let d = BoundConstants::<f64>::default();
        BoundConstants::new(
            self.c_theorem1.unwrap_or(d.c_theorem1),
            self.c_main.unwrap_or(d.c_main),
            self.c_mopt.unwrap_or(d.c_mopt),
        )
    }
}

fn default_placement() -> PlacementStrategy {
    PlacementStrategy::UniformInCell
}

fn default_check_samples() -> usize {
    DEFAULT_JL_CHECK_SAMPLES
}

fn default_band_order() -> u32 {
    4
}

/// Point process on a grid of cells in the unit square.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanarParams {
    pub n_cells: usize,
    pub count: CellCountDistribution,
    #[serde(default = "default_placement")]
    pub placement: PlacementStrategy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChromaticParams {
    pub n: usize,
    /// Edge probability shared by every pair.
    pub p: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JlParams {
    pub n: usize,
    pub k: usize,
    pub family: VectorFamily,
    #[serde(default = "default_check_samples")]
    pub check_samples: usize,
}

/// Either the perfectly packable distribution for `k`, or explicit atoms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BinpackParams {
    pub n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sizes: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probs: Option<Vec<f64>>,
    /// Order `m` used by the typical-band diagnostic.
    #[serde(default = "default_band_order")]
    pub band_order: u32,
}

impl BinpackParams {
    pub fn distribution(&self) -> Result<ItemDistribution<f64>> {
        match (self.k, &self.sizes, &self.probs) {
            (Some(k), None, None) => packing::lower_bound_distribution(k),
            (None, Some(s), Some(p)) => ItemDistribution::new(s.clone(), p.clone()),
            _ => Err(Error::invalid("give either `k` or both `sizes` and `probs`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LisParams {
    pub n: usize,
}

/// Independent Bernoulli trials; trial `i` succeeds with `nu[i % nu.len()]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChernoffParams {
    pub n: usize,
    pub nu: Vec<f64>,
}

impl ChernoffParams {
    pub fn total_nu(&self) -> f64 {
        (0..self.n).map(|i| self.nu[i % self.nu.len()]).sum()
    }

    pub fn is_homogeneous(&self) -> bool {
        self.nu.iter().all(|&v| v == self.nu[0])
    }
}

/// Sum of `n` standard normals: the reference functional whose standard
/// deviation grows like `√n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaussianSumParams {
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Experiment {
    Tsp(PlanarParams),
    Mwst(PlanarParams),
    Chromatic(ChromaticParams),
    Jl(JlParams),
    Binpack(BinpackParams),
    Lis(LisParams),
    Chernoff(ChernoffParams),
    GaussianSum(GaussianSumParams),
}

impl Experiment {
    pub fn id(&self) -> &'static str {
        match self {
            Self::Tsp(_) => "tsp",
            Self::Mwst(_) => "mwst",
            Self::Chromatic(_) => "chromatic",
            Self::Jl(_) => "jl",
            Self::Binpack(_) => "binpack",
            Self::Lis(_) => "lis",
            Self::Chernoff(_) => "chernoff",
            Self::GaussianSum(_) => "gaussian_sum",
        }
    }

    /// Human-readable name of the measured functional.
    pub fn functional(&self) -> &'static str {
        match self {
            Self::Tsp(_) => "tour length (exact up to 13 points, else 2-opt from the strip tour)",
            Self::Mwst(_) => "minimum spanning tree weight",
            Self::Chromatic(_) => "chromatic number",
            Self::Jl(_) => "centered squared length of the first k coordinates",
            Self::Binpack(_) => "bin packing LP value",
            Self::Lis(_) => "longest increasing subsequence length",
            Self::Chernoff(_) => "number of successes",
            Self::GaussianSum(_) => "sum of standard normals",
        }
    }

    /// The size parameter varied by scaling studies.
    pub fn size(&self) -> usize {
        match self {
            Self::Tsp(p) | Self::Mwst(p) => p.n_cells,
            Self::Chromatic(p) => p.n,
            Self::Jl(p) => p.n,
            Self::Binpack(p) => p.n,
            Self::Lis(p) => p.n,
            Self::Chernoff(p) => p.n,
            Self::GaussianSum(p) => p.n,
        }
    }

    pub fn with_size(&self, n: usize) -> Self {
        let mut out = self.clone();
        match &mut out {
            Self::Tsp(p) | Self::Mwst(p) => p.n_cells = n,
            Self::Chromatic(p) => p.n = n,
            Self::Jl(p) => p.n = n,
            Self::Binpack(p) => p.n = n,
            Self::Lis(p) => p.n = n,
            Self::Chernoff(p) => p.n = n,
            Self::GaussianSum(p) => p.n = n,
        }
        out
    }

    /// First 16 hex digits of the SHA-256 of the parameters' JSON encoding.
    pub fn param_hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("parameters serialize");
        let digest = Sha256::digest(json);
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Structural checks that need no simulation.
    fn validate(&self) -> Result<()> {
        match self {
            Self::Tsp(p) | Self::Mwst(p) => {
                p.count.validate()?;
                pointproc::grid_side(p.n_cells)?;
            }
            Self::Chromatic(p) => {
                if !(0.0..=1.0).contains(&p.p) {
                    return Err(Error::invalid(format!("edge probability {} outside [0, 1]", p.p)));
                }
                if p.n == 0 || p.n > graphs::CHROMATIC_EXACT_CAP {
                    return Err(Error::invalid(format!(
                        "n must lie in 1..={}, got {}",
                        graphs::CHROMATIC_EXACT_CAP,
                        p.n
                    )));
                }
            }
            Self::Jl(p) => {
                if p.n == 0 || p.k > p.n {
                    return Err(Error::invalid(format!("need 1 <= n and k <= n, got n={}, k={}", p.n, p.k)));
                }
                if p.check_samples < DEFAULT_JL_CHECK_SAMPLES {
                    return Err(Error::invalid(format!(
                        "check_samples must be at least {DEFAULT_JL_CHECK_SAMPLES}"
                    )));
                }
            }
            Self::Binpack(p) => {
                p.distribution()?;
                if p.n < 2 {
                    return Err(Error::invalid("binpack needs n >= 2"));
                }
                if p.band_order < 2 || p.band_order % 2 != 0 {
                    return Err(Error::invalid("band_order must be even and at least 2"));
                }
            }
            Self::Lis(_) | Self::GaussianSum(_) => {}
            Self::Chernoff(p) => {
                if p.n == 0 || p.nu.is_empty() || p.nu.iter().any(|v| !(*v > 0.0 && *v <= 1.0)) {
                    return Err(Error::invalid("chernoff needs n >= 1 and every nu in (0, 1]"));
                }
            }
        }
        Ok(())
    }

    /// Validates and builds the state shared by all replicates. Structural
    /// problems come back as config errors; a projection family failing its
    /// hypotheses comes back as a hypothesis violation.
    pub fn prepare(&self, base_seed: u64) -> Result<Prepared> {
        self.validate().map_err(|e| match e {
            Error::InvalidArgument(message) => Error::Config {
                path: format!("experiment.{}", self.id()),
                message,
            },
            other => other,
        })?;
        let mut prepared = Prepared::default();
        match self {
            Self::Chromatic(p) => prepared.graph = Some(EdgeProbabilityMatrix::constant(p.n, p.p)?),
            Self::Binpack(p) => {
                let dist = p.distribution()?;
                prepared.warnings.extend(dist.regime_warnings(p.n));
                let types = packing::enumerate_bin_types(&dist, true)?;
                prepared.packing = Some((dist, types));
            }
            Self::Jl(p) => {
                let seed = rng::derive_seed(base_seed, 0, rng::site_tag("harness.jl_check"));
                let report = seq::check_jl_hypotheses(&p.family, p.n, p.k, p.check_samples, seed)?;
                if !report.admissible() {
                    return Err(Error::HypothesisViolation(jl_violation_message(&report)));
                }
                prepared.jl = Some(report);
            }
            _ => {}
        }
        Ok(prepared)
    }

    fn run_replicate(&self, prepared: &Prepared, seed: u64) -> Result<(f64, BTreeMap<String, f64>)> {
        let mut aux = BTreeMap::new();
        let f = match self {
            Self::Tsp(p) => {
                let ps = pointproc::sample_point_set(p.n_cells, &p.count, p.placement, seed)?;
                let points = ps.points();
                let (len, method) = euclid::tour_functional(&points)?;
                aux.insert("points".into(), points.len() as f64);
                aux.insert("exact".into(), f64::from(u8::from(method == TourMethod::Exact)));
                len
            }
            Self::Mwst(p) => {
                let ps = pointproc::sample_point_set(p.n_cells, &p.count, p.placement, seed)?;
                let points = ps.points();
                aux.insert("points".into(), points.len() as f64);
                euclid::mst_weight(&points)?.weight
            }
            Self::Chromatic(_) => {
                let p = prepared.graph.as_ref().expect("prepared graph");
                let g = graphs::sample_graph(p, seed);
                aux.insert("edges".into(), g.edges().len() as f64);
                aux.insert("max_degree".into(), g.max_degree() as f64);
                graphs::chromatic_exact(&g)? as f64
            }
            Self::Jl(p) => {
                let v = seq::sample_unit_vector(p.n, &p.family, seed)?;
                let st = seq::jl_projection_statistic(&v, p.k)?;
                aux.insert("sum".into(), st.sum);
                st.centered
            }
            Self::Binpack(p) => {
                let (dist, types) = prepared.packing.as_ref().expect("prepared packing");
                let mut r = rng::stream_for(seed, 0, "binpack.items");
                let probs = dist.probs().to_vec();
                let mu = dist.mean();
                let mut counts = vec![0u64; dist.r()];
                let mut violated = false;
                for i in 0..p.n {
                    if !violated && !packing::within_typical_band(&counts, i, &probs, p.band_order, mu) {
                        violated = true;
                    }
                    counts[dist.sample_type(&mut r)] += 1;
                }
                let outcome = packing::pack(types, &counts)?;
                aux.insert("rounded".into(), outcome.rounded_bins as f64);
                aux.insert("basis_size".into(), outcome.basis_size as f64);
                aux.insert("band_violation".into(), f64::from(u8::from(violated)));
                outcome.lp_value
            }
            Self::Lis(p) => seq::lis(&seq::Sequence::uniform(p.n, seed).values) as f64,
            Self::Chernoff(p) => {
                let mut r = rng::stream_for(seed, 0, "chernoff.trials");
                (0..p.n)
                    .filter(|&i| r.random::<f64>() < p.nu[i % p.nu.len()])
                    .count() as f64
            }
            Self::GaussianSum(p) => {
                let mut r = rng::stream_for(seed, 0, "gaussian_sum.draws");
                (0..p.n).map(|_| -> f64 { StandardNormal.sample(&mut r) }).sum::<f64>()
            }
        };
        Ok((f, aux))
    }
}

fn jl_violation_message(report: &JlHypothesisReport) -> String {
    let mut parts = Vec::new();
    if !report.monotone_ok {
        let flagged: Vec<String> = report
            .monotone
            .iter()
            .filter(|p| p.flagged)
            .map(|p| format!("coordinate {} (slope {:.3e} ± {:.1e})", p.index, p.slope, p.slope_se))
            .collect();
        parts.push(format!(
            "conditional second moment increases in the partial sum at {}",
            flagged.join(", ")
        ));
    }
    if !report.moments_ok {
        let bad: Vec<String> = report
            .moments
            .iter()
            .filter(|m| m.constant > seq::MOMENT_CONSTANT_LIMIT)
            .map(|m| format!("order {} constant {:.3}", m.order, m.constant))
            .collect();
        parts.push(format!(
            "moment growth exceeds the admissible constant {}: {}",
            seq::MOMENT_CONSTANT_LIMIT,
            bad.join(", ")
        ));
    }
    format!("projection family refused (n={}, k={}): {}", report.n, report.k, parts.join("; "))
}

/// State computed once per run and shared by every replicate.
#[derive(Debug, Clone, Default)]
pub struct Prepared {
    pub warnings: Vec<String>,
    pub packing: Option<(ItemDistribution<f64>, BinTypeSet<f64>)>,
    pub graph: Option<EdgeProbabilityMatrix>,
    pub jl: Option<JlHypothesisReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub replicates: usize,
    pub base_seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_grid: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constants: Option<ConstantsConfig>,
    pub experiment: Experiment,
}

impl ExperimentConfig {
    pub fn new(experiment: Experiment, replicates: usize, base_seed: u64) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            replicates,
            base_seed,
            output: None,
            workers: None,
            t_grid: None,
            constants: None,
            experiment,
        }
    }

    /// Parses and validates a JSON config; errors carry the offending field path.
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let config: Self = serde_path_to_error::deserialize(de).map_err(|e| Error::Config {
            path: e.path().to_string(),
            message: e.inner().to_string(),
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let config_err = |path: &str, message: String| Error::Config {
            path: path.into(),
            message,
        };
        if self.schema_version != SCHEMA_VERSION {
            return Err(config_err(
                "schema_version",
                format!("unsupported schema version {}, expected {SCHEMA_VERSION}", self.schema_version),
            ));
        }
        if self.replicates == 0 {
            return Err(config_err("replicates", "must be at least 1".into()));
        }
        if self.workers == Some(0) {
            return Err(config_err("workers", "must be at least 1".into()));
        }
        if let Some(grid) = &self.t_grid {
            if grid.is_empty() || grid.iter().any(|t| !(*t > 0.0 && t.is_finite())) {
                return Err(config_err("t_grid", "must be a nonempty list of positive reals".into()));
            }
        }
        if let Some(c) = &self.constants {
            c.resolve()
                .map_err(|e| config_err("constants", e.to_string()))?;
        }
        Ok(())
    }

    pub fn constants(&self) -> Result<BoundConstants<f64>> {
        self.constants.unwrap_or_default().resolve()
    }

    pub fn replicate_seed(&self, replicate: usize) -> u64 {
        rng::derive_seed(self.base_seed, replicate as u64, rng::site_tag(self.experiment.id()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentRecord {
    pub experiment: String,
    pub replicate: usize,
    pub seed: u64,
    pub param_hash: String,
    pub f: f64,
    pub aux: BTreeMap<String, f64>,
}

/// Records as CSV: `experiment,replicate,seed,param_hash,f,<aux keys sorted>`.
pub fn records_csv(records: &[ExperimentRecord]) -> Result<Vec<u8>> {
    let aux_keys: Vec<String> = records
        .first()
        .map(|r| r.aux.keys().cloned().collect())
        .unwrap_or_default();
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["experiment", "replicate", "seed", "param_hash", "f"];
    header.extend(aux_keys.iter().map(String::as_str));
    w.write_record(&header)?;
    for r in records {
        let mut row = vec![
            r.experiment.clone(),
            r.replicate.to_string(),
            r.seed.to_string(),
            r.param_hash.clone(),
            r.f.to_string(),
        ];
        row.extend(aux_keys.iter().map(|k| r.aux.get(k).copied().unwrap_or(f64::NAN).to_string()));
        w.write_record(&row)?;
    }
    w.into_inner()
        .map_err(|e| Error::io("<records>", e.into_error()))
}

/// Parses a records CSV; `#` lines (such as error markers) are skipped.
pub fn parse_records(text: &str) -> Result<Vec<ExperimentRecord>> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let headers = reader.headers()?.clone();
    let fixed = ["experiment", "replicate", "seed", "param_hash", "f"];
    if headers.len() < fixed.len() || headers.iter().zip(fixed).any(|(h, f)| h != f) {
        return Err(Error::Parse(format!(
            "records header must start with {}",
            fixed.join(",")
        )));
    }
    let parse_err = |what: &str, e: &dyn std::fmt::Display| Error::Parse(format!("{what}: {e}"));
    let mut out = Vec::new();
    for row in reader.records() {
        let row = row?;
        let aux = headers
            .iter()
            .zip(row.iter())
            .skip(fixed.len())
            .map(|(k, v)| Ok((k.to_string(), v.parse::<f64>().map_err(|e| parse_err(k, &e))?)))
            .collect::<Result<BTreeMap<_, _>>>()?;
        out.push(ExperimentRecord {
            experiment: row[0].to_string(),
            replicate: row[1].parse().map_err(|e| parse_err("replicate", &e))?,
            seed: row[2].parse().map_err(|e| parse_err("seed", &e))?,
            param_hash: row[3].to_string(),
            f: row[4].parse().map_err(|e| parse_err("f", &e))?,
            aux,
        });
    }
    Ok(out)
}

/// Where the bound curve of a summary comes from.
#[derive(Debug, Clone)]
pub enum BoundSource {
    Analytic(AnalyticBound),
    /// Conditional moments estimated from a matrix of martingale differences
    /// (one row per replicate), each padded by three standard errors.
    Estimated { differences: SampleMatrix, m_max: u32 },
    None,
}

#[derive(Debug, Clone)]
pub enum AnalyticBound {
    ChernoffCorollary { n: usize, sigma2: f64 },
    GeneralChernoff { nu: f64 },
    Recursion { profile: MomentProfile<f64>, m_max: u32 },
    Typical { profile: TypicalProfile<f64>, m_max: u32 },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConcentrationSummary {
    pub experiment: String,
    pub functional: String,
    pub replicates: usize,
    pub mean: f64,
    /// `None` below two records.
    pub sd: Option<f64>,
    pub t_grid: Vec<f64>,
    /// `Pr̂(|f − mean| ≥ t)`.
    pub empirical: Vec<f64>,
    pub bound_method: Option<BoundMethod>,
    pub bound: Vec<Option<f64>>,
    pub m_used: Vec<Option<u32>>,
    pub verdicts: Vec<Option<bool>>,
    /// Whether every evaluated verdict holds; `None` without a bound.
    pub dominated: Option<bool>,
    pub envelopes: BTreeMap<String, f64>,
    pub curves: BTreeMap<String, Vec<f64>>,
    pub warnings: Vec<String>,
}

/// Default grid: 20 equally spaced points from `0.5·sd` to `6·sd`
/// (`sd` taken as 1 when it is zero or undefined).
pub fn default_t_grid(sd: Option<f64>) -> Vec<f64> {
    let s = sd.filter(|s| *s > 0.0).unwrap_or(1.0);
    let (lo, hi) = (0.5 * s, 6.0 * s);
    (0..DEFAULT_T_POINTS)
        .map(|i| lo + (hi - lo) * i as f64 / (DEFAULT_T_POINTS - 1) as f64)
        .collect()
}

/// Empirical part of a summary: mean, sd and the tail curve.
pub fn summarize(values: &[f64], t_grid: Option<&[f64]>) -> ConcentrationSummary {
    let mean = stats::mean(values);
    let sd = stats::std_dev(values);
    let grid = t_grid.map_or_else(|| default_t_grid(sd), <[f64]>::to_vec);
    let n = values.len() as f64;
    let empirical = grid
        .iter()
        .map(|&t| values.iter().filter(|&&f| (f - mean).abs() >= t).count() as f64 / n)
        .collect();
    let len = grid.len();
    ConcentrationSummary {
        experiment: String::new(),
        functional: String::new(),
        replicates: values.len(),
        mean,
        sd,
        t_grid: grid,
        empirical,
        bound_method: None,
        bound: vec![None; len],
        m_used: vec![None; len],
        verdicts: vec![None; len],
        dominated: None,
        envelopes: BTreeMap::new(),
        curves: BTreeMap::new(),
        warnings: if values.len() < 2 {
            vec!["fewer than two records: sd undefined".into()]
        } else {
            Vec::new()
        },
    }
}

/// `empirical ≤ bound + 3·√(b(1−b)/N)`.
pub fn verdict(empirical: f64, bound: f64, n: usize) -> bool {
    let b = bound.clamp(0.0, 1.0);
    empirical <= b + VERDICT_SE_MULTIPLIER * (b * (1.0 - b) / n as f64).sqrt()
}

fn cached_optimize(
    method: BoundMethod,
    log_bounds: &[f64],
    t: f64,
) -> Result<TailBoundResult<f64>> {
    let m_max = 2 * log_bounds.len() as u32;
    bounds::optimize_m(method, |m| Ok(log_bounds[(m / 2 - 1) as usize]), t, m_max)
}

fn log_bounds_for(m_max: u32, f: impl Fn(u32) -> Result<f64>) -> Result<Vec<f64>> {
    (2..=m_max).step_by(2).map(f).collect()
}

/// Profile estimated from martingale differences: `M_{i,l}` is the largest
/// binned conditional moment plus three standard errors.
pub fn estimated_profile(differences: &SampleMatrix, m_max: u32) -> Result<MomentProfile<f64>> {
    let mut profile = MomentProfile::empty(differences.cols(), m_max)?;
    for var in 0..differences.cols() {
        for order in (2..=m_max).step_by(2) {
            let est = moments::estimate_conditional_moment(
                differences,
                var,
                order,
                moments::DEFAULT_BIN_COUNT,
            )?;
            let se = if est.standard_error.is_finite() { est.standard_error } else { 0.0 };
            profile.set(var, order, (est.max_over_bins + moments::CI_MULTIPLIER * se).max(0.0))?;
        }
    }
    Ok(profile)
}

/// Attaches the bound curve of `source` to the empirical summary of `values`.
pub fn compare_bound(
    values: &[f64],
    source: &BoundSource,
    constants: &BoundConstants<f64>,
    t_grid: Option<&[f64]>,
) -> Result<ConcentrationSummary> {
    if values.len() < MIN_RECORDS_FOR_BOUND {
        return Err(Error::invalid(format!(
            "bound comparison needs at least {MIN_RECORDS_FOR_BOUND} records, got {}",
            values.len()
        )));
    }
    let mut summary = summarize(values, t_grid);
    let results: Vec<Option<TailBoundResult<f64>>> = match source {
        BoundSource::None => return Ok(summary),
        BoundSource::Analytic(AnalyticBound::ChernoffCorollary { n, sigma2 }) => summary
            .t_grid
            .iter()
            .map(|&t| match bounds::chernoff_corollary_bound(*n, *sigma2, t, constants) {
                Ok(r) => Ok(Some(r)),
                Err(Error::OutOfRegime(_)) => Ok(None),
                Err(e) => Err(e),
            })
            .collect::<Result<_>>()?,
        BoundSource::Analytic(AnalyticBound::GeneralChernoff { nu }) => summary
            .t_grid
            .iter()
            .map(|&t| bounds::general_chernoff_bound(*nu, t, constants).map(Some))
            .collect::<Result<_>>()?,
        BoundSource::Analytic(AnalyticBound::Recursion { profile, m_max }) => {
            let m_max = (*m_max).min(profile.max_order());
            let logs = log_bounds_for(m_max, |m| bounds::theorem1_recursion_bound(profile, m))?;
            summary
                .t_grid
                .iter()
                .map(|&t| cached_optimize(BoundMethod::Theorem1Recursion, &logs, t).map(Some))
                .collect::<Result<_>>()?
        }
        BoundSource::Analytic(AnalyticBound::Typical { profile, m_max }) => {
            let m_max = (*m_max).min(profile.worst().max_order());
            let logs = log_bounds_for(m_max, |m| bounds::main_theorem_bound(profile, m, constants))?;
            summary
                .t_grid
                .iter()
                .map(|&t| cached_optimize(BoundMethod::MainTheorem, &logs, t).map(Some))
                .collect::<Result<_>>()?
        }
        BoundSource::Estimated { differences, m_max } => {
            let profile = estimated_profile(differences, *m_max)?;
            let snc = moments::check_snc(differences, *m_max)?;
            if snc.any_flagged {
                summary
                    .warnings
                    .push("estimated differences show positive correlation with prefix sums".into());
            }
            let logs = log_bounds_for(*m_max, |m| bounds::theorem1_recursion_bound(&profile, m))?;
            summary
                .t_grid
                .iter()
                .map(|&t| cached_optimize(BoundMethod::Theorem1Recursion, &logs, t).map(Some))
                .collect::<Result<_>>()?
        }
    };
    summary.bound_method = results.iter().flatten().map(|r| r.method).next();
    for (i, r) in results.iter().enumerate() {
        if let Some(r) = r {
            summary.bound[i] = Some(r.tail_probability);
            summary.m_used[i] = Some(r.m_used);
            summary.verdicts[i] = Some(verdict(summary.empirical[i], r.tail_probability, values.len()));
        }
    }
    let evaluated: Vec<bool> = summary.verdicts.iter().flatten().copied().collect();
    summary.dominated = (!evaluated.is_empty()).then(|| evaluated.iter().all(|&v| v));
    Ok(summary)
}

/// `(l−1)!!` for even `l`: the `l`-th moment of a standard normal.
fn normal_moment(l: u32) -> f64 {
    (1..l).step_by(2).map(f64::from).product()
}

/// The analytic bound source of an experiment, where one exists.
pub fn default_bound_source(
    experiment: &Experiment,
    prepared: &Prepared,
    records: &[ExperimentRecord],
) -> Result<BoundSource> {
    Ok(match experiment {
        Experiment::Chernoff(p) => BoundSource::Analytic(if p.is_homogeneous() {
            AnalyticBound::ChernoffCorollary {
                n: p.n,
                sigma2: p.nu[0],
            }
        } else {
            AnalyticBound::GeneralChernoff { nu: p.total_nu() }
        }),
        Experiment::GaussianSum(p) => BoundSource::Analytic(AnalyticBound::Recursion {
            profile: MomentProfile::uniform(p.n, DEFAULT_M_MAX, normal_moment)?,
            m_max: DEFAULT_M_MAX,
        }),
        Experiment::Jl(p) => match &prepared.jl {
            Some(report) if p.k > 0 => BoundSource::Analytic(AnalyticBound::Recursion {
                profile: jl_profile(p.n, p.k, report)?,
                m_max: JL_PROFILE_ORDER,
            }),
            _ => BoundSource::None,
        },
        Experiment::Binpack(p) => match &prepared.packing {
            Some((dist, _)) => {
                let violations = records
                    .iter()
                    .filter(|r| r.aux.get("band_violation").copied().unwrap_or(0.0) > 0.0)
                    .count();
                let delta = violations as f64 / records.len().max(1) as f64;
                BoundSource::Analytic(AnalyticBound::Typical {
                    profile: binpack_profile(dist, p.n, delta)?,
                    m_max: BINPACK_PROFILE_ORDER,
                })
            }
            None => BoundSource::None,
        },
        _ => BoundSource::None,
    })
}

/// The measured moment constant `c` of a projection family: the largest
/// over the checked orders.
pub fn jl_constant(report: &JlHypothesisReport) -> f64 {
    report.moments.iter().map(|m| m.constant).fold(0.0, f64::max)
}

/// Profile of `X_i = Y_i² − E Y_i²` for `i ≤ k` implied by
/// `E Y_i^l ≤ (c l)^{l/2} / n^{l/2}`: `E X_i^q ≤ ((2cq)^q + 1) / n^q`.
pub fn jl_profile(n: usize, k: usize, report: &JlHypothesisReport) -> Result<MomentProfile<f64>> {
    let c = jl_constant(report);
    let nf = n as f64;
    MomentProfile::uniform(k, JL_PROFILE_ORDER, |q| {
        let q = f64::from(q);
        ((2.0 * c * q).powf(q) + 1.0) / nf.powf(q)
    })
}

/// Upper envelope for the standard deviation of the projection statistic:
/// the square root of the second-moment bound.
pub fn jl_sd_envelope(n: usize, k: usize, report: &JlHypothesisReport) -> Result<f64> {
    let profile = jl_profile(n, k, report)?;
    Ok((bounds::theorem1_recursion_bound(&profile, 2)? / 2.0).exp())
}

/// Typical/worst-case profile of the packing martingale: typical second
/// moments `μ³ + σ²`, worst-case `μ² + 65σ² + 64μ³`, higher orders scaled
/// by the largest insertion increment, and a uniform `δ`.
pub fn binpack_profile(dist: &ItemDistribution<f64>, n: usize, delta: f64) -> Result<TypicalProfile<f64>> {
    let mu = dist.mean();
    let s2 = dist.variance();
    let worst2 = mu * mu + 65.0 * s2 + 64.0 * mu.powi(3);
    let typical2 = mu.powi(3) + s2;
    let step = dist.sizes().iter().map(|z| z + 2.0 * z * z).fold(0.0, f64::max);
    let worst = |l: u32| step.powi(l as i32 - 2) * worst2;
    let typical = |l: u32| typical2.min(worst(l));
    TypicalProfile::new(
        MomentProfile::uniform(n, BINPACK_PROFILE_ORDER, worst)?,
        MomentProfile::uniform(n, BINPACK_PROFILE_ORDER, typical)?,
        MomentProfile::uniform(n, BINPACK_PROFILE_ORDER, |_| delta.clamp(0.0, 1.0))?,
    )
}

fn attach_envelopes(
    summary: &mut ConcentrationSummary,
    experiment: &Experiment,
    prepared: &Prepared,
    records: &[ExperimentRecord],
) -> Result<()> {
    match experiment {
        Experiment::Chromatic(p) => {
            let n = p.n as f64;
            let matrix = prepared.graph.as_ref().expect("prepared graph");
            let mad = graphs::mad(matrix)?;
            summary.envelopes.insert("n_sqrt_p_ln_n".into(), n * p.p.sqrt() * n.ln());
            summary.envelopes.insert("mad".into(), mad);
            summary.envelopes.insert("mad_ln_n".into(), mad * n.ln());
        }
        Experiment::Jl(p) => {
            if let Some(report) = &prepared.jl {
                let c = jl_constant(report);
                summary.envelopes.insert("moment_constant".into(), c);
                if p.k > 0 {
                    summary.envelopes.insert("sd_envelope".into(), jl_sd_envelope(p.n, p.k, report)?);
                    // Relative deviation of the squared length from k/n, in the
                    // Gaussian and polynomial regimes of the projection tail.
                    let k = p.k as f64;
                    let eps: Vec<f64> = summary.t_grid.iter().map(|t| t * p.n as f64 / k).collect();
                    let e = std::f64::consts::E;
                    summary.curves.insert(
                        "envelope_exponential".into(),
                        eps.iter().map(|x| (-k * x * x / (2.0 * e * c)).exp().min(1.0)).collect(),
                    );
                    summary.curves.insert(
                        "envelope_polynomial".into(),
                        eps.iter().map(|x| (c / (x * x)).powf(k / 2.0).min(1.0)).collect(),
                    );
                }
            }
        }
        Experiment::Binpack(p) => {
            if let Some((dist, _)) = &prepared.packing {
                let scale = p.n as f64 * dist.spread_scale();
                summary.envelopes.insert("n_spread_scale".into(), scale);
                if let Some(sd) = summary.sd {
                    summary.envelopes.insert("variance_ratio".into(), sd * sd / scale);
                }
                let rate = records
                    .iter()
                    .filter(|r| r.aux.get("band_violation").copied().unwrap_or(0.0) > 0.0)
                    .count() as f64
                    / records.len() as f64;
                summary.envelopes.insert("band_violation_rate".into(), rate);
            }
        }
        _ => {}
    }
    Ok(())
}

/// Overrides applied on top of a config, typically from the command line.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub workers: Option<usize>,
    pub output: Option<PathBuf>,
    pub base_seed: Option<u64>,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub records: Vec<ExperimentRecord>,
    pub summary: ConcentrationSummary,
    pub csv: Vec<u8>,
}

fn thread_pool(workers: Option<usize>) -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(w) = workers {
        builder = builder.num_threads(w);
    }
    builder
        .build()
        .map_err(|e| Error::invalid(format!("cannot build worker pool: {e}")))
}

fn write_output(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Runs every replicate, writes the records CSV if an output path is set,
/// and returns the records with their summary.
///
/// On a failing replicate the records before it are still written, followed
/// by a `# error at replicate R: message` line, and the error is returned.
pub fn run_experiment(config: &ExperimentConfig, options: &RunOptions) -> Result<RunOutput> {
    let mut config = config.clone();
    if let Some(seed) = options.base_seed {
        config.base_seed = seed;
    }
    if options.workers.is_some() {
        config.workers = options.workers;
    }
    if options.output.is_some() {
        config.output.clone_from(&options.output);
    }
    config.validate()?;
    let experiment = &config.experiment;
    let prepared = experiment.prepare(config.base_seed)?;
    let hash = experiment.param_hash();
    let pool = thread_pool(config.workers)?;
    let results: Vec<Result<ExperimentRecord>> = pool.install(|| {
        (0..config.replicates)
            .into_par_iter()
            .map(|rep| {
                let seed = config.replicate_seed(rep);
                let (f, aux) = experiment.run_replicate(&prepared, seed)?;
                Ok(ExperimentRecord {
                    experiment: experiment.id().into(),
                    replicate: rep,
                    seed,
                    param_hash: hash.clone(),
                    f,
                    aux,
                })
            })
            .collect()
    });

    let (records, csv, failure) = assemble(results)?;
    if let Some(path) = &config.output {
        write_output(path, &csv)?;
    }
    if let Some(e) = failure {
        return Err(e);
    }
    let summary = summary_for(&config, &prepared, &records)?;
    Ok(RunOutput { records, summary, csv })
}

/// Keeps the records before the first failure and renders them, with an
/// error marker line when a replicate failed.
fn assemble(
    results: Vec<Result<ExperimentRecord>>,
) -> Result<(Vec<ExperimentRecord>, Vec<u8>, Option<Error>)> {
    let mut records = Vec::with_capacity(results.len());
    let mut failure = None;
    for (rep, r) in results.into_iter().enumerate() {
        match r {
            Ok(rec) => records.push(rec),
            Err(e) => {
                failure = Some((rep, e));
                break;
            }
        }
    }
    let mut csv = records_csv(&records)?;
    if let Some((rep, e)) = &failure {
        writeln!(csv, "# error at replicate {rep}: {e}").expect("write to memory");
    }
    Ok((records, csv, failure.map(|(_, e)| e)))
}

fn summary_for(
    config: &ExperimentConfig,
    prepared: &Prepared,
    records: &[ExperimentRecord],
) -> Result<ConcentrationSummary> {
    let values: Vec<f64> = records.iter().map(|r| r.f).collect();
    let grid = config.t_grid.as_deref();
    let mut summary = if values.len() >= MIN_RECORDS_FOR_BOUND {
        let source = default_bound_source(&config.experiment, prepared, records)?;
        compare_bound(&values, &source, &config.constants()?, grid)?
    } else {
        summarize(&values, grid)
    };
    summary.experiment = config.experiment.id().into();
    summary.functional = config.experiment.functional().into();
    summary.warnings.splice(0..0, prepared.warnings.iter().cloned());
    attach_envelopes(&mut summary, &config.experiment, prepared, records)?;
    Ok(summary)
}

/// Recomputes a summary from a records CSV alone, or with the bound of
/// `config`'s experiment when a config is supplied.
pub fn report(records_text: &str, config: Option<&ExperimentConfig>) -> Result<ConcentrationSummary> {
    let records = parse_records(records_text)?;
    if records.is_empty() {
        return Err(Error::Parse("records file holds no records".into()));
    }
    match config {
        Some(config) => {
            let prepared = config.experiment.prepare(config.base_seed)?;
            summary_for(config, &prepared, &records)
        }
        None => {
            let values: Vec<f64> = records.iter().map(|r| r.f).collect();
            let mut summary = summarize(&values, None);
            summary.experiment = records[0].experiment.clone();
            summary.functional = "f column of the records file".into();
            Ok(summary)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingRow {
    pub n: usize,
    pub replicates: usize,
    pub mean: f64,
    pub sd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingStudy {
    pub experiment: String,
    pub rows: Vec<ScalingRow>,
    pub intercept: f64,
    /// Slope of `ln sd` against `ln n`.
    pub slope: f64,
    pub slope_se: f64,
    /// 95% normal interval for the slope.
    pub ci: [f64; 2],
}

/// Weighted least squares of `ln sd` on `ln n` with weights `2(N−1)`, the
/// inverse of the large-sample variance of a log standard deviation.
pub fn fit_log_sd_slope(rows: &[ScalingRow]) -> Result<(f64, f64, f64)> {
    if rows.len() < 2 || rows.iter().any(|r| !(r.sd > 0.0) || r.replicates < 2) {
        return Err(Error::invalid("slope fit needs two or more rows with positive sd"));
    }
    let xs: Vec<f64> = rows.iter().map(|r| (r.n as f64).ln()).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.sd.ln()).collect();
    let ws: Vec<f64> = rows.iter().map(|r| 2.0 * (r.replicates as f64 - 1.0)).collect();
    let sw: f64 = ws.iter().sum();
    let xbar = xs.iter().zip(&ws).map(|(x, w)| x * w).sum::<f64>() / sw;
    let ybar = ys.iter().zip(&ws).map(|(y, w)| y * w).sum::<f64>() / sw;
    let sxx: f64 = xs.iter().zip(&ws).map(|(x, w)| w * (x - xbar) * (x - xbar)).sum();
    if sxx == 0.0 {
        return Err(Error::invalid("slope fit needs distinct sizes"));
    }
    let sxy: f64 = xs.iter().zip(&ys).zip(&ws).map(|((x, y), w)| w * (x - xbar) * (y - ybar)).sum();
    let slope = sxy / sxx;
    Ok((ybar - slope * xbar, slope, (1.0 / sxx).sqrt()))
}

/// Runs `template` at every size in `n_list` and fits the sd scaling slope.
pub fn scaling_study(template: &ExperimentConfig, n_list: &[usize], options: &RunOptions) -> Result<ScalingStudy> {
    let mut sizes = n_list.to_vec();
    sizes.sort_unstable();
    sizes.dedup();
    if sizes.len() < 3 {
        return Err(Error::invalid("a scaling study needs at least three distinct sizes"));
    }
    let mut rows = Vec::with_capacity(sizes.len());
    for &n in &sizes {
        let mut config = template.clone();
        config.experiment = template.experiment.with_size(n);
        config.output = None;
        let opts = RunOptions {
            output: None,
            ..options.clone()
        };
        let out = run_experiment(&config, &opts)?;
        rows.push(ScalingRow {
            n,
            replicates: out.records.len(),
            mean: out.summary.mean,
            sd: out.summary.sd.unwrap_or(f64::NAN),
        });
    }
    let (intercept, slope, slope_se) = fit_log_sd_slope(&rows)?;
    Ok(ScalingStudy {
        experiment: template.experiment.id().into(),
        rows,
        intercept,
        slope,
        slope_se,
        ci: [slope - 1.96 * slope_se, slope + 1.96 * slope_se],
    })
}

/// Lists of even-order bounds `[M_2, M_4, …]`, shared by every variable or
/// given per variable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ProfileValues {
    Uniform(Vec<f64>),
    PerVariable(Vec<Vec<f64>>),
}

impl ProfileValues {
    fn max_order(&self) -> Result<u32> {
        let len = match self {
            Self::Uniform(v) => v.len(),
            Self::PerVariable(rows) => {
                let len = rows.first().map_or(0, Vec::len);
                if rows.iter().any(|r| r.len() != len) {
                    return Err(Error::invalid("per-variable rows must have equal length"));
                }
                len
            }
        };
        if len == 0 {
            return Err(Error::invalid("profile needs at least the order-2 bound"));
        }
        Ok(2 * len as u32)
    }

    pub fn to_profile(&self, n: usize) -> Result<MomentProfile<f64>> {
        let max_order = self.max_order()?;
        match self {
            Self::Uniform(v) => MomentProfile::uniform(n, max_order, |l| v[(l / 2 - 1) as usize]),
            Self::PerVariable(rows) => {
                if rows.len() != n {
                    return Err(Error::invalid(format!("expected {n} rows, got {}", rows.len())));
                }
                MomentProfile::from_fn(n, max_order, |i, l| rows[i][(l / 2 - 1) as usize])
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProfileMethod {
    /// The exact recursion on the given moments.
    #[default]
    Recursion,
    /// The closed form `(c·n·m)^{m/2}`; moments are not consulted.
    Closed,
    /// Typical/worst-case bound; needs `typical` and `delta`.
    Typical,
}

/// Input of `tailmoment bound`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileFile {
    pub n: usize,
    #[serde(default)]
    pub method: ProfileMethod,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub moments: Option<ProfileValues>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub typical: Option<ProfileValues>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<ProfileValues>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constants: Option<ConstantsConfig>,
}

impl ProfileFile {
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| Error::Config {
            path: e.path().to_string(),
            message: e.inner().to_string(),
        })
    }

    /// Optimized tail bound at every `t`.
    pub fn evaluate(&self, ts: &[f64], m_max: u32) -> Result<Vec<TailBoundResult<f64>>> {
        let constants = self.constants.unwrap_or_default().resolve()?;
        let missing = |field: &str| Error::Config {
            path: field.into(),
            message: format!("required by method {:?}", self.method),
        };
        let (method, logs) = match self.method {
            ProfileMethod::Closed => {
                let cap = bounds::clamp_order_to_n(m_max, self.n);
                (
                    BoundMethod::Theorem1Closed,
                    log_bounds_for(cap, |m| bounds::theorem1_closed_bound(self.n, m, &constants))?,
                )
            }
            ProfileMethod::Recursion => {
                let profile = self.moments.as_ref().ok_or_else(|| missing("moments"))?.to_profile(self.n)?;
                let cap = m_max.min(profile.max_order()) & !1;
                (
                    BoundMethod::Theorem1Recursion,
                    log_bounds_for(cap.max(2), |m| bounds::theorem1_recursion_bound(&profile, m))?,
                )
            }
            ProfileMethod::Typical => {
                let worst = self.moments.as_ref().ok_or_else(|| missing("moments"))?.to_profile(self.n)?;
                let typical = self.typical.as_ref().ok_or_else(|| missing("typical"))?.to_profile(self.n)?;
                let delta = self.delta.as_ref().ok_or_else(|| missing("delta"))?.to_profile(self.n)?;
                let cap = m_max.min(worst.max_order()) & !1;
                let profile = TypicalProfile::new(worst, typical, delta)?;
                (
                    BoundMethod::MainTheorem,
                    log_bounds_for(cap.max(2), |m| bounds::main_theorem_bound(&profile, m, &constants))?,
                )
            }
        };
        ts.iter().map(|&t| cached_optimize(method, &logs, t)).collect()
    }
}
