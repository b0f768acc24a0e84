//! Grid point process on the unit square: `n` cells of side `1/√n`, an
//! independent random count per cell and a placement rule inside each cell.
//!
//! Cell `row·side + col` covers `[col·h, (col+1)·h) × [row·h, (row+1)·h)`
//! with rows counted from the bottom. The top row and right column are
//! closed on their outer edge so that the cells partition `[0, 1]²`.

use std::io::Write;

use rand::Rng;
use rand_distr::{Distribution, Poisson, Zipf};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::rng::{self, StreamRng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CellCountDistribution {
    Poisson { mean: f64 },
    /// `Pr(k) ∝ k^{-exponent}` on `1..=cap`.
    Zeta { exponent: f64, cap: u64 },
    /// 0 with probability `p0`, else `value`.
    TwoPoint { p0: f64, value: u64 },
    Deterministic { k: u64 },
}

impl CellCountDistribution {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Self::Poisson { mean } if !(mean > 0.0 && mean.is_finite()) => {
                Err(Error::invalid(format!("poisson mean must be positive, got {mean}")))
            }
            Self::Zeta { exponent, cap } if !(exponent > 1.0) || cap == 0 => Err(Error::invalid(format!(
                "zeta needs exponent > 1 and cap >= 1, got exponent {exponent}, cap {cap}"
            ))),
            Self::TwoPoint { p0, .. } if !(0.0..=1.0).contains(&p0) => {
                Err(Error::invalid(format!("two-point p0 must lie in [0, 1], got {p0}")))
            }
            _ => Ok(()),
        }
    }

    pub fn sample(&self, rng: &mut StreamRng) -> Result<u64> {
        Ok(match *self {
            Self::Poisson { mean } => {
                let d = Poisson::new(mean).map_err(|e| Error::invalid(e.to_string()))?;
                d.sample(rng) as u64
            }
            Self::Zeta { exponent, cap } => {
                let d = Zipf::new(cap as f64, exponent).map_err(|e| Error::invalid(e.to_string()))?;
                d.sample(rng) as u64
            }
            Self::TwoPoint { p0, value } => {
                if rng.random::<f64>() < p0 {
                    0
                } else {
                    value
                }
            }
            Self::Deterministic { k } => k,
        })
    }

    /// Probability of an empty cell.
    pub fn prob_zero(&self) -> f64 {
        match *self {
            Self::Poisson { mean } => (-mean).exp(),
            Self::Zeta { .. } => 0.0,
            Self::TwoPoint { p0, value } => {
                if value == 0 {
                    1.0
                } else {
                    p0
                }
            }
            Self::Deterministic { k } => f64::from(u8::from(k == 0)),
        }
    }

    /// Probability mass at `k`.
    pub fn pmf(&self, k: u64) -> f64 {
        match *self {
            Self::Poisson { mean } => {
                let ln = k as f64 * mean.ln() - mean - crate::bounds::ln_factorial::<f64>(k as u32);
                ln.exp()
            }
            Self::Zeta { exponent, cap } => {
                if k == 0 || k > cap {
                    0.0
                } else {
                    (k as f64).powf(-exponent) / zeta_partial(exponent, cap, 0.0)
                }
            }
            Self::TwoPoint { p0, value } => {
                let mut p = 0.0;
                if k == 0 {
                    p += p0;
                }
                if k == value {
                    p += 1.0 - p0;
                }
                p
            }
            Self::Deterministic { k: d } => f64::from(u8::from(k == d)),
        }
    }

    /// `E count^l`.
    pub fn moment(&self, l: u32) -> f64 {
        match *self {
            Self::Poisson { mean } => {
                // Touchard polynomial: Σ_j S(l, j) mean^j.
                let mut stirling = vec![1.0f64];
                for row in 1..=l as usize {
                    let mut next = vec![0.0; row + 1];
                    for (j, &s) in stirling.iter().enumerate() {
                        next[j] += j as f64 * s;
                        next[j + 1] += s;
                    }
                    stirling = next;
                }
                stirling
                    .iter()
                    .enumerate()
                    .map(|(j, s)| s * mean.powi(j as i32))
                    .sum()
            }
            Self::Zeta { exponent, cap } => {
                zeta_partial(exponent, cap, f64::from(l)) / zeta_partial(exponent, cap, 0.0)
            }
            Self::TwoPoint { p0, value } => (1.0 - p0) * (value as f64).powi(l as i32),
            Self::Deterministic { k } => (k as f64).powi(l as i32),
        }
    }

    /// Largest `l` whose moment stays bounded independently of any
    /// truncation; `None` when every moment does.
    pub fn moment_order_valid(&self) -> Option<u32> {
        match *self {
            Self::Zeta { exponent, .. } => {
                let limit = exponent - 1.0;
                let l = limit.ceil() - 1.0;
                Some(l.max(0.0) as u32)
            }
            _ => None,
        }
    }
}

/// `Σ_{k=1}^{cap} k^{power − exponent}`.
fn zeta_partial(exponent: f64, cap: u64, power: f64) -> f64 {
    (1..=cap).rev().map(|k| (k as f64).powf(power - exponent)).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlacementStrategy {
    UniformInCell,
    /// Uniform in the lower-left tenth of the cell side.
    CornerBunch,
    /// Centres of a `g × g` lattice, `g = ⌈√count⌉`, filled row by row.
    GridSpread,
    /// Every point on the cell corner nearest `(0.5, 0.5)`; ties go to the
    /// lower coordinate.
    AdversarialDiagonal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PointProcessConfig {
    pub n_cells: usize,
    pub count: CellCountDistribution,
    pub placement: PlacementStrategy,
}

impl PointProcessConfig {
    pub fn validate(&self) -> Result<usize> {
        self.count.validate()?;
        grid_side(self.n_cells)
    }

    /// Hex SHA-256 of the canonical JSON encoding.
    pub fn hash_hex(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        format!("{:x}", Sha256::digest(json))
    }
}

/// Side length of the grid in cells.
pub fn grid_side(n_cells: usize) -> Result<usize> {
    let side = (n_cells as f64).sqrt().round() as usize;
    if n_cells < 4 || side * side != n_cells {
        return Err(Error::invalid(format!(
            "cell count must be a perfect square >= 4, got {n_cells}"
        )));
    }
    Ok(side)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PointSet {
    pub n_cells: usize,
    pub side: usize,
    pub cells: Vec<Vec<[f64; 2]>>,
    pub seed: u64,
}

impl PointSet {
    pub fn cell_width(&self) -> f64 {
        1.0 / self.side as f64
    }

    pub fn total_points(&self) -> usize {
        self.cells.iter().map(Vec::len).sum()
    }

    pub fn points(&self) -> Vec<[f64; 2]> {
        self.cells.iter().flatten().copied().collect()
    }

    /// Closed bounds `[x0, x1] × [y0, y1]` of a cell.
    pub fn cell_bounds(&self, cell: usize) -> [f64; 4] {
        cell_bounds(self.side, cell)
    }

    /// Index of the cell owning `p` under the half-open rule.
    pub fn owner(&self, p: [f64; 2]) -> usize {
        let clamp = |v: f64| ((v * self.side as f64).floor().max(0.0) as usize).min(self.side - 1);
        clamp(p[1]) * self.side + clamp(p[0])
    }

    pub fn write_csv<W: Write>(&self, out: W, config_hash: &str) -> Result<()> {
        let mut out = out;
        writeln!(out, "# config_hash={config_hash} seed={}", self.seed)
            .map_err(|e| Error::io("<point set>", e))?;
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["cell_index", "x", "y"])?;
        for (cell, pts) in self.cells.iter().enumerate() {
            for p in pts {
                w.write_record(&[cell.to_string(), p[0].to_string(), p[1].to_string()])?;
            }
        }
        w.flush().map_err(|e| Error::io("<point set>", e))?;
        Ok(())
    }
}

fn cell_bounds(side: usize, cell: usize) -> [f64; 4] {
    let h = 1.0 / side as f64;
    let (row, col) = (cell / side, cell % side);
    let hi = |k: usize| if k + 1 == side { 1.0 } else { (k + 1) as f64 * h };
    [col as f64 * h, hi(col), row as f64 * h, hi(row)]
}

/// Maps `u ∈ [0, 1)` into `[lo, hi)`, guarding against rounding onto `hi`.
fn lerp_open(lo: f64, hi: f64, u: f64) -> f64 {
    let v = lo + u * (hi - lo);
    if v >= hi {
        hi.next_down()
    } else {
        v
    }
}

/// Upper edge is strictly nearer to 1/2 iff `lo + hi < 1`, i.e. `2k + 1 < side`.
fn nearest_to_half(k: usize, side: usize, lo: f64, hi: f64) -> f64 {
    if 2 * k + 1 < side {
        hi
    } else {
        lo
    }
}

/// Draws the points of one cell.
pub fn sample_cell(
    side: usize,
    cell: usize,
    count: &CellCountDistribution,
    placement: PlacementStrategy,
    rng: &mut StreamRng,
) -> Result<Vec<[f64; 2]>> {
    let k = count.sample(rng)? as usize;
    let [x0, x1, y0, y1] = cell_bounds(side, cell);
    let points = match placement {
        PlacementStrategy::UniformInCell => (0..k)
            .map(|_| {
                let (u, v) = (rng.random::<f64>(), rng.random::<f64>());
                [lerp_open(x0, x1, u), lerp_open(y0, y1, v)]
            })
            .collect(),
        PlacementStrategy::CornerBunch => {
            let (w, h) = ((x1 - x0) / 10.0, (y1 - y0) / 10.0);
            (0..k)
                .map(|_| {
                    let (u, v) = (rng.random::<f64>(), rng.random::<f64>());
                    [lerp_open(x0, x0 + w, u), lerp_open(y0, y0 + h, v)]
                })
                .collect()
        }
        PlacementStrategy::GridSpread => {
            let g = (k as f64).sqrt().ceil().max(1.0) as usize;
            (0..k)
                .map(|j| {
                    let (a, b) = (j / g, j % g);
                    [
                        x0 + (b as f64 + 0.5) / g as f64 * (x1 - x0),
                        y0 + (a as f64 + 0.5) / g as f64 * (y1 - y0),
                    ]
                })
                .collect()
        }
        PlacementStrategy::AdversarialDiagonal => {
            let corner = [
                nearest_to_half(cell % side, side, x0, x1),
                nearest_to_half(cell / side, side, y0, y1),
            ];
            vec![corner; k]
        }
    };
    Ok(points)
}

/// Per-cell stream, so a single cell can be redrawn without touching others.
pub fn cell_stream(seed: u64, cell: usize) -> StreamRng {
    rng::stream_for(seed, cell as u64, "pointproc.cell")
}

pub fn sample_point_set(
    n_cells: usize,
    count: &CellCountDistribution,
    placement: PlacementStrategy,
    seed: u64,
) -> Result<PointSet> {
    let side = grid_side(n_cells)?;
    count.validate()?;
    let cells = (0..n_cells)
        .map(|cell| sample_cell(side, cell, count, placement, &mut cell_stream(seed, cell)))
        .collect::<Result<_>>()?;
    Ok(PointSet {
        n_cells,
        side,
        cells,
        seed,
    })
}

/// Cells in layers: layer `L` holds the cells with `min(row, col) = L`, so the
/// first layer touches the bottom or left edge and the last is the top-right
/// cell. Row-major within a layer.
pub fn layer_order(n_cells: usize) -> Result<Vec<usize>> {
    let side = grid_side(n_cells)?;
    let mut cells: Vec<usize> = (0..n_cells).collect();
    cells.sort_by_key(|&c| ((c / side).min(c % side), c));
    Ok(cells)
}
