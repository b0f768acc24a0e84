//! Euclidean tour and spanning-tree functionals on planar point sets.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::scalar::Real;

pub type Point<T> = [T; 2];

/// Largest instance accepted by the exact tour solver.
pub const EXACT_TSP_LIMIT: usize = 13;
/// Above this many points distances are computed on the fly.
const DISTANCE_MATRIX_LIMIT: usize = 4096;

pub fn dist<T: Real>(a: Point<T>, b: Point<T>) -> T {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tour<T> {
    pub order: Vec<usize>,
    pub length: T,
}

impl<T: Real> Tour<T> {
    /// Builds a tour from a visiting order, computing its closed length.
    pub fn from_order(points: &[Point<T>], order: Vec<usize>) -> Result<Self> {
        check_permutation(&order, points.len())?;
        let length = closed_length(points, &order);
        Ok(Self { order, length })
    }

    pub fn recompute_length(&self, points: &[Point<T>]) -> T {
        closed_length(points, &self.order)
    }
}

fn check_permutation(order: &[usize], n: usize) -> Result<()> {
    let mut seen = vec![false; n];
    if order.len() != n {
        return Err(Error::invalid(format!("tour visits {} of {n} points", order.len())));
    }
    for &i in order {
        if i >= n || std::mem::replace(&mut seen[i], true) {
            return Err(Error::invalid(format!("tour order is not a permutation (index {i})")));
        }
    }
    Ok(())
}

fn closed_length<T: Real>(points: &[Point<T>], order: &[usize]) -> T {
    if order.len() < 2 {
        return T::zero();
    }
    order
        .iter()
        .zip(order.iter().cycle().skip(1))
        .map(|(&a, &b)| dist(points[a], points[b]))
        .sum()
}

/// Optimal closed tour by Held-Karp dynamic programming. Among optimal tours
/// (equal within a relative 1e-9) the lexicographically smallest order
/// starting at point 0 is returned.
pub fn tsp_exact<T: Real>(points: &[Point<T>]) -> Result<Tour<T>> {
    let n = points.len();
    if n == 0 {
        return Err(Error::invalid("exact tour needs at least one point"));
    }
    if n > EXACT_TSP_LIMIT {
        return Err(Error::SizeLimit(format!(
            "exact tour supports at most {EXACT_TSP_LIMIT} points, got {n}"
        )));
    }
    if n <= 2 {
        return Tour::from_order(points, (0..n).collect());
    }
    // Vertices 1..n are bit (v-1). best[rest][j]: shortest path from j through
    // every vertex of `rest`, ending at 0 (j ∉ rest).
    let m = n - 1;
    let full = (1usize << m) - 1;
    let d = |a: usize, b: usize| dist(points[a], points[b]);
    let mut best = vec![T::infinity(); (full + 1) * n];
    for j in 1..n {
        best[j] = d(j, 0);
    }
    for rest in 1..=full {
        for j in 1..n {
            if rest >> (j - 1) & 1 == 1 {
                continue;
            }
            let mut value = T::infinity();
            let mut bits = rest;
            while bits != 0 {
                let k = bits.trailing_zeros() as usize + 1;
                bits &= bits - 1;
                let cand = d(j, k) + best[(rest & !(1 << (k - 1))) * n + k];
                if cand < value {
                    value = cand;
                }
            }
            best[rest * n + j] = value;
        }
    }
    let start_cost = |rest: usize, k: usize, from: usize| d(from, k) + best[(rest & !(1 << (k - 1))) * n + k];
    let optimum = (1..n)
        .map(|k| start_cost(full, k, 0))
        .fold(T::infinity(), T::min);
    let tol = T::lit(1e-9) * (T::one() + optimum);

    // Greedy reconstruction: smallest next vertex that keeps the path optimal.
    let mut order = vec![0];
    let mut rest = full;
    let mut cur = 0;
    let mut spent = T::zero();
    while rest != 0 {
        let next = (1..n)
            .filter(|&k| rest >> (k - 1) & 1 == 1)
            .find(|&k| spent + start_cost(rest, k, cur) <= optimum + tol)
            .expect("an optimal continuation exists");
        spent = spent + d(cur, next);
        rest &= !(1 << (next - 1));
        order.push(next);
        cur = next;
    }
    Tour::from_order(points, order)
}

/// Axis-aligned square `[x, x + side] × [y, y + side]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Square<T> {
    pub x: T,
    pub y: T,
    pub side: T,
}

impl<T: Real> Square<T> {
    pub fn unit() -> Self {
        Self {
            x: T::zero(),
            y: T::zero(),
            side: T::one(),
        }
    }

    pub fn contains(&self, p: Point<T>) -> bool {
        p[0] >= self.x && p[0] <= self.x + self.side && p[1] >= self.y && p[1] <= self.y + self.side
    }
}

/// `3α√s + 2α`.
pub fn strip_bound<T: Real>(side: T, s: usize) -> T {
    T::lit(3.0) * side * T::from_usize_lossy(s).sqrt() + T::lit(2.0) * side
}

/// Boustrophedon tour over `⌈√s⌉` horizontal strips: left to right in even
/// strips, right to left in odd ones. The length bound `3α√s + 2α` is
/// checked on every call.
pub fn tsp_strip<T: Real>(points: &[Point<T>], square: Square<T>) -> Result<Tour<T>> {
    if let Some(p) = points.iter().find(|p| !square.contains(**p)) {
        return Err(Error::invalid(format!("point {p:?} lies outside the square")));
    }
    let s = points.len();
    let strips = (s as f64).sqrt().ceil().max(1.0) as usize;
    let k = T::from_usize_lossy(strips);
    let strip_of = |p: Point<T>| {
        let raw = ((p[1] - square.y) / square.side * k).floor();
        raw.to_usize().unwrap_or(0).min(strips - 1)
    };
    let mut keyed: Vec<(usize, usize)> = (0..s).map(|i| (strip_of(points[i]), i)).collect();
    keyed.sort_by(|&(sa, a), &(sb, b)| {
        sa.cmp(&sb).then_with(|| {
            let (pa, pb) = (points[a], points[b]);
            let by_x = pa[0].partial_cmp(&pb[0]).unwrap().then(pa[1].partial_cmp(&pb[1]).unwrap()).then(a.cmp(&b));
            if sa % 2 == 0 {
                by_x
            } else {
                by_x.reverse()
            }
        })
    });
    let tour = Tour::from_order(points, keyed.into_iter().map(|(_, i)| i).collect())?;
    let bound = strip_bound(square.side, s);
    assert!(
        tour.length <= bound * (T::one() + T::lit(1e-9)),
        "strip tour length {:?} exceeds certified bound {:?}",
        tour.length,
        bound
    );
    Ok(tour)
}

enum Metric<'a, T> {
    Matrix(Vec<T>, usize),
    Direct(&'a [Point<T>]),
}

impl<'a, T: Real> Metric<'a, T> {
    fn new(points: &'a [Point<T>]) -> Self {
        let n = points.len();
        if n <= DISTANCE_MATRIX_LIMIT {
            let mut m = vec![T::zero(); n * n];
            for i in 0..n {
                for j in i + 1..n {
                    let d = dist(points[i], points[j]);
                    m[i * n + j] = d;
                    m[j * n + i] = d;
                }
            }
            Self::Matrix(m, n)
        } else {
            Self::Direct(points)
        }
    }

    #[inline]
    fn d(&self, a: usize, b: usize) -> T {
        match self {
            Self::Matrix(m, n) => m[a * n + b],
            Self::Direct(p) => dist(p[a], p[b]),
        }
    }
}

/// First-improvement 2-opt. Scans pairs of tour edges in index order and
/// applies any exchange that shortens the tour by more than a rounding
/// margin; stops after a pass without change or after `max_passes`.
pub fn tsp_2opt<T: Real>(points: &[Point<T>], start: &Tour<T>, max_passes: usize) -> Result<Tour<T>> {
    check_permutation(&start.order, points.len())?;
    let n = points.len();
    let mut order = start.order.clone();
    if n < 4 {
        return Tour::from_order(points, order);
    }
    let metric = Metric::new(points);
    let margin = T::lit(16.0) * T::epsilon();
    for _ in 0..max_passes {
        let mut improved = false;
        for i in 0..n - 2 {
            let last = if i == 0 { n - 1 } else { n };
            let mut j = i + 2;
            while j < last {
                let (a, b) = (order[i], order[i + 1]);
                let (c, d) = (order[j], order[(j + 1) % n]);
                let (ab, cd) = (metric.d(a, b), metric.d(c, d));
                let (ac, bd) = (metric.d(a, c), metric.d(b, d));
                let delta = ac + bd - ab - cd;
                if delta < -margin * (ab + cd + ac + bd) {
                    order[i + 1..=j].reverse();
                    improved = true;
                }
                j += 1;
            }
        }
        if !improved {
            break;
        }
    }
    let tour = Tour::from_order(points, order)?;
    debug_assert!(tour.length <= start.recompute_length(points) * (T::one() + T::lit(1e-12)));
    Ok(tour)
}

/// Which tour computation produced a functional value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TourMethod {
    Exact,
    TwoOptFromStrip,
}

/// Tour length used by the experiments: exact up to the solver limit, else
/// 2-opt from the strip tour over the unit square.
pub fn tour_functional<T: Real>(points: &[Point<T>]) -> Result<(T, TourMethod)> {
    if points.is_empty() {
        return Ok((T::zero(), TourMethod::Exact));
    }
    if points.len() <= EXACT_TSP_LIMIT {
        return Ok((tsp_exact(points)?.length, TourMethod::Exact));
    }
    let start = tsp_strip(points, Square::unit())?;
    Ok((tsp_2opt(points, &start, usize::MAX)?.length, TourMethod::TwoOptFromStrip))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpanningTree<T> {
    pub edges: Vec<(usize, usize)>,
    pub weight: T,
}

impl<T: Real> SpanningTree<T> {
    pub fn recompute_weight(&self, points: &[Point<T>]) -> T {
        self.edges.iter().map(|&(a, b)| dist(points[a], points[b])).sum()
    }

    /// Connected, acyclic and spanning on `n` vertices.
    pub fn is_spanning_tree(&self, n: usize) -> bool {
        if self.edges.len() + 1 != n.max(1) {
            return false;
        }
        let mut parent: Vec<usize> = (0..n).collect();
        fn root(p: &mut [usize], mut x: usize) -> usize {
            while p[x] != x {
                p[x] = p[p[x]];
                x = p[x];
            }
            x
        }
        self.edges.iter().all(|&(a, b)| {
            if a >= n || b >= n {
                return false;
            }
            let (ra, rb) = (root(&mut parent, a), root(&mut parent, b));
            parent[ra] = rb;
            ra != rb
        })
    }
}

/// Exact Euclidean minimum spanning tree by dense Prim, `O(n²)`.
pub fn mst_weight<T: Real>(points: &[Point<T>]) -> Result<SpanningTree<T>> {
    let n = points.len();
    if n == 0 {
        return Err(Error::invalid("spanning tree needs at least one point"));
    }
    let mut in_tree = vec![false; n];
    let mut best = vec![T::infinity(); n];
    let mut link = vec![0usize; n];
    let mut edges = Vec::with_capacity(n - 1);
    let mut weight = T::zero();
    best[0] = T::zero();
    for _ in 0..n {
        let mut u = usize::MAX;
        for v in 0..n {
            if !in_tree[v] && (u == usize::MAX || best[v] < best[u]) {
                u = v;
            }
        }
        in_tree[u] = true;
        if u != 0 {
            edges.push((link[u], u));
            weight = weight + best[u];
        }
        for v in 0..n {
            if !in_tree[v] {
                let d = dist(points[u], points[v]);
                if d < best[v] {
                    best[v] = d;
                    link[v] = u;
                }
            }
        }
    }
    Ok(SpanningTree { edges, weight })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use proptest::prelude::*;
    use rand::seq::SliceRandom;
    use rand::Rng;

    fn random_points(n: usize, seed: u64) -> Vec<Point<f64>> {
        let mut r = rng::stream(seed, 0, 5);
        (0..n).map(|_| [r.random::<f64>(), r.random::<f64>()]).collect()
    }

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() <= 1e-9 * (1.0 + a.abs().max(b.abs()))
    }

    #[test]
    fn exact_small_shapes() {
        let tri = [[0.0, 0.0], [3.0, 0.0], [0.0, 4.0]];
        assert!(close(tsp_exact(&tri).unwrap().length, 12.0));
        let sq = [[0.0, 0.0], [1.0, 1.0], [1.0, 0.0], [0.0, 1.0]];
        let t = tsp_exact(&sq).unwrap();
        assert!(close(t.length, 4.0));
        assert_eq!(t.order, vec![0, 2, 1, 3]);
        assert_eq!(tsp_exact(&[[0.5, 0.5]]).unwrap().length, 0.0);
        assert!(matches!(tsp_exact(&random_points(14, 1)), Err(Error::SizeLimit(_))));
    }

    #[test]
    fn exact_beats_random_permutations() {
        let pts = random_points(8, 2);
        let best = tsp_exact(&pts).unwrap();
        let mut r = rng::stream(3, 0, 0);
        let mut order: Vec<usize> = (0..8).collect();
        for _ in 0..10_000 {
            order.shuffle(&mut r);
            let len = Tour::from_order(&pts, order.clone()).unwrap().length;
            assert!(best.length <= len + 1e-12);
        }
    }

    #[test]
    fn exact_matches_permutation_enumeration() {
        fn permute(k: usize, order: &mut Vec<usize>, pts: &[Point<f64>], best: &mut (f64, Vec<usize>)) {
            if k == order.len() {
                let len = closed_length(pts, order);
                if len < best.0 - 1e-12 {
                    *best = (len, order.clone());
                }
                return;
            }
            for i in k..order.len() {
                order.swap(k, i);
                permute(k + 1, order, pts, best);
                order.swap(k, i);
            }
        }
        for seed in 0..20 {
            let pts = random_points(7, 100 + seed);
            let mut best = (f64::INFINITY, vec![]);
            permute(1, &mut (0..7).collect(), &pts, &mut best);
            let t = tsp_exact(&pts).unwrap();
            assert!(close(t.length, best.0));
            assert!(close(t.recompute_length(&pts), t.length));
        }
    }

    #[test]
    fn exact_is_monotone_under_insertion() {
        for seed in 0..30 {
            let pts = random_points(12, 200 + seed);
            let mut prev = 0.0;
            for k in 1..=12 {
                let len = tsp_exact(&pts[..k]).unwrap().length;
                assert!(len + 1e-12 >= prev, "seed {seed}, k {k}");
                prev = len;
            }
        }
    }

    #[test]
    fn exact_works_in_f32() {
        let tri: [Point<f32>; 3] = [[0.0, 0.0], [3.0, 0.0], [0.0, 4.0]];
        assert!((tsp_exact(&tri).unwrap().length - 12.0).abs() < 1e-5);
    }

    #[test]
    fn strip_examples() {
        let one = tsp_strip(&[[0.3, 0.3]], Square::unit()).unwrap();
        assert_eq!(one.length, 0.0);
        let alpha = 2.5;
        let sq = Square { x: 1.0, y: -1.0, side: alpha };
        let corners = [[1.0, -1.0], [3.5, -1.0], [1.0, 1.5], [3.5, 1.5]];
        let t = tsp_strip(&corners, sq).unwrap();
        assert!(t.length <= 3.0 * alpha * 2.0 + 2.0 * alpha);
        assert!(close(t.length, 4.0 * alpha));
        let big = random_points(10_000, 4);
        let t = tsp_strip(&big, Square::unit()).unwrap();
        assert!(t.length <= 302.0);
        let opt = tsp_2opt(&big[..2000], &tsp_strip(&big[..2000], Square::unit()).unwrap(), 3).unwrap();
        assert!(opt.length <= tsp_strip(&big[..2000], Square::unit()).unwrap().length);
        assert!(tsp_strip(&[[2.0, 0.0]], Square::unit()).is_err());
    }

    /// Hill-climbs point positions to maximise the strip tour relative to its
    /// bound, hunting for violations on small counts.
    #[test]
    fn strip_bound_survives_adversarial_search() {
        let mut r = rng::stream(9, 0, 0);
        for s in 1..=30 {
            let mut pts = random_points(s, 300 + s as u64);
            let score = |p: &[Point<f64>]| {
                let t = std::panic::catch_unwind(|| tsp_strip(p, Square::unit()).unwrap());
                t.map(|t| t.length).unwrap_or(f64::INFINITY)
            };
            let mut cur = score(&pts);
            for _ in 0..3000 {
                let i = r.random_range(0..s);
                let old = pts[i];
                pts[i] = if r.random::<f64>() < 0.3 {
                    [f64::from(r.random::<bool>() as u8), r.random::<f64>()]
                } else {
                    [r.random::<f64>(), r.random::<f64>()]
                };
                let new = score(&pts);
                if new >= cur {
                    cur = new;
                } else {
                    pts[i] = old;
                }
            }
            assert!(cur <= strip_bound(1.0, s), "s = {s}: {cur} > {}", strip_bound(1.0, s));
        }
    }

    #[test]
    fn two_opt_examples() {
        let sq = [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]];
        let convex = Tour::from_order(&sq, vec![0, 1, 2, 3]).unwrap();
        assert_eq!(tsp_2opt(&sq, &convex, 10).unwrap().order, convex.order);
        let crossing = Tour::from_order(&sq, vec![0, 2, 1, 3]).unwrap();
        let fixed = tsp_2opt(&sq, &crossing, 1).unwrap();
        assert!(close(fixed.length, 4.0));
    }

    #[test]
    fn two_opt_near_exact_on_small_instances() {
        let mut within = 0;
        for seed in 0..500 {
            let n = 5 + (seed % 6) as usize;
            let pts = random_points(n, 1000 + seed);
            let exact = tsp_exact(&pts).unwrap().length;
            let start = tsp_strip(&pts, Square::unit()).unwrap();
            let opt = tsp_2opt(&pts, &start, usize::MAX).unwrap().length;
            assert!(opt + 1e-12 >= exact);
            if opt <= 1.05 * exact {
                within += 1;
            }
        }
        assert!(within >= 475, "{within} of 500 within 5%");
    }

    #[test]
    fn two_opt_leaves_no_improving_exchange() {
        let pts = random_points(60, 7);
        let t = tsp_2opt(&pts, &tsp_strip(&pts, Square::unit()).unwrap(), usize::MAX).unwrap();
        let n = pts.len();
        for i in 0..n {
            for j in i + 2..n {
                if i == 0 && j == n - 1 {
                    continue;
                }
                let (a, b, c, d) = (t.order[i], t.order[i + 1], t.order[j], t.order[(j + 1) % n]);
                let delta = dist(pts[a], pts[c]) + dist(pts[b], pts[d]) - dist(pts[a], pts[b]) - dist(pts[c], pts[d]);
                assert!(delta >= -1e-12);
            }
        }
    }

    #[test]
    fn mst_examples() {
        let two = mst_weight(&[[0.0, 0.0], [3.0, 4.0]]).unwrap();
        assert!(close(two.weight, 5.0));
        let h = 3f64.sqrt() / 2.0;
        let tri = [[0.0, 0.0], [1.0, 0.0], [0.5, h]];
        let w_tri = mst_weight(&tri).unwrap().weight;
        assert!(close(w_tri, 2.0));
        let with_centre = [tri[0], tri[1], tri[2], [0.5, h / 3.0]];
        let w = mst_weight(&with_centre).unwrap().weight;
        assert!(close(w, 3.0 / 3f64.sqrt()));
        assert!(w < w_tri);
        assert_eq!(mst_weight(&[[0.1, 0.1]]).unwrap().weight, 0.0);
    }

    fn prufer_min_weight(pts: &[Point<f64>]) -> f64 {
        let n = pts.len();
        let mut best = f64::INFINITY;
        let total = n.pow((n - 2) as u32);
        for code in 0..total {
            let mut seq = Vec::with_capacity(n - 2);
            let mut c = code;
            for _ in 0..n - 2 {
                seq.push(c % n);
                c /= n;
            }
            let mut degree = vec![1; n];
            for &v in &seq {
                degree[v] += 1;
            }
            let mut w = 0.0;
            for &v in &seq {
                let leaf = (0..n).find(|&u| degree[u] == 1).unwrap();
                w += dist(pts[leaf], pts[v]);
                degree[leaf] -= 1;
                degree[v] -= 1;
            }
            let rest: Vec<usize> = (0..n).filter(|&u| degree[u] == 1).collect();
            w += dist(pts[rest[0]], pts[rest[1]]);
            best = best.min(w);
        }
        best
    }

    #[test]
    fn prim_matches_cayley_enumeration() {
        for seed in 0..10 {
            let pts = random_points(7, 500 + seed);
            let tree = mst_weight(&pts).unwrap();
            assert!(tree.is_spanning_tree(7));
            assert!(close(tree.weight, prufer_min_weight(&pts)));
            assert!(close(tree.weight, tree.recompute_weight(&pts)));
        }
    }

    proptest! {
        #[test]
        fn functionals_are_permutation_invariant(seed in 0u64..1000, n in 2usize..11) {
            let pts = random_points(n, seed);
            let mut shuffled = pts.clone();
            shuffled.shuffle(&mut rng::stream(seed, 1, 1));
            prop_assert!(close(tsp_exact(&pts).unwrap().length, tsp_exact(&shuffled).unwrap().length));
            prop_assert!(close(mst_weight(&pts).unwrap().weight, mst_weight(&shuffled).unwrap().weight));
        }

        #[test]
        fn strip_bound_holds(seed in 0u64..10_000, n in 1usize..400) {
            let pts = random_points(n, seed);
            let t = tsp_strip(&pts, Square::unit()).unwrap();
            prop_assert!(t.length <= strip_bound(1.0, n));
            prop_assert!(close(t.recompute_length(&pts), t.length));
        }
    }
}
