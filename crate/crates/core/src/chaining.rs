//! The `γ_α` functional on finite metric spaces.
//!
//! Admissible sequences follow the usual cardinality convention: `|A_0| = 1`
//! and `|A_n| ≤ 2^(2^n)` for `n ≥ 1`. The value of a sequence is
//! `max_t Σ_n 2^(n/α) Δ(A_n(t))`.

use std::io::Read;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::bounds::Flag;
use crate::covering::{farthest_point_order, IndexedMetric, Start};
use crate::error::{input, Error, Result};
use crate::hyperbolic::{HPoint, ModelSpace};
use crate::rng;

/// Largest instance accepted by [`exact_gamma_small`].
pub const EXACT_GAMMA_MAX: usize = 6;
/// Slack allowed in the triangle inequality check.
pub const TRIANGLE_SLACK: f64 = 1e-9;
/// Log-spaced points in [`dudley_grid`].
pub const DUDLEY_GRID_POINTS: usize = 64;
/// Ratio between the top and bottom of the log-spaced part of the grid.
pub const DUDLEY_GRID_SPAN: f64 = 256.0;
/// Smallest trial count for [`gaussian_sup_mc`].
pub const MIN_TRIALS: usize = 1_000;

/// `N_n`: 1 for `n = 0`, else `2^(2^n)`, saturating.
pub fn level_cap(n: usize) -> usize {
    match n {
        0 => 1,
        1..=5 => 1usize << (1usize << n).min(63),
        _ => usize::MAX,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiniteMetricSpace {
    labels: Vec<String>,
    n: usize,
    dist: Vec<f64>,
}

impl FiniteMetricSpace {
    /// Validates a distance matrix: square, finite, nonnegative, zero diagonal,
    /// symmetric, and the triangle inequality up to [`TRIANGLE_SLACK`].
    pub fn new(labels: Vec<String>, rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        if labels.len() != n {
            return input(format!("{} labels for {n} rows", labels.len()));
        }
        if rows.iter().any(|r| r.len() != n) {
            return input("distance matrix is not square");
        }
        let dist: Vec<f64> = rows.into_iter().flatten().collect();
        for i in 0..n {
            if dist[i * n + i] != 0.0 {
                return input(format!("nonzero diagonal entry at {i}"));
            }
            for j in 0..n {
                let d = dist[i * n + j];
                if !(d.is_finite() && d >= 0.0) {
                    return input(format!("entry ({i},{j}) = {d} is not a finite nonnegative distance"));
                }
                if (d - dist[j * n + i]).abs() > 1e-12 * d.max(1.0) {
                    return input(format!("matrix is not symmetric at ({i},{j})"));
                }
            }
        }
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    if dist[i * n + k] > dist[i * n + j] + dist[j * n + k] + TRIANGLE_SLACK {
                        return input(format!("triangle inequality fails on ({i},{j},{k})"));
                    }
                }
            }
        }
        Ok(FiniteMetricSpace { labels, n, dist })
    }

    fn from_fn(n: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let mut dist = vec![0.0; n * n];
        for i in 0..n {
            for j in i + 1..n {
                let d = f(i, j);
                dist[i * n + j] = d;
                dist[j * n + i] = d;
            }
        }
        FiniteMetricSpace {
            labels: (0..n).map(|i| i.to_string()).collect(),
            n,
            dist,
        }
    }

    /// Geodesic distances between points of a model space.
    pub fn from_points(space: &ModelSpace, points: &[HPoint]) -> Self {
        Self::from_fn(points.len(), |i, j| space.distance(&points[i], &points[j]))
    }

    /// Euclidean distances between vectors of equal length.
    pub fn from_vectors(vectors: &[Vec<f64>]) -> Result<Self> {
        if let Some(v) = vectors.first() {
            if vectors.iter().any(|w| w.len() != v.len()) {
                return input("vectors have different lengths");
            }
        }
        Ok(Self::from_fn(vectors.len(), |i, j| euclid(&vectors[i], &vectors[j])))
    }

    /// Reads a distance matrix: a header row of labels, then one numeric row
    /// per point.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let labels: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
        let mut rows = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            let row = rec
                .iter()
                .map(|f| f.parse::<f64>().map_err(|_| Error::Input(format!("not a number: {f:?}"))))
                .collect::<Result<Vec<_>>>()?;
            rows.push(row);
        }
        Self::new(labels, rows)
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn diameter(&self) -> f64 {
        self.dist.iter().copied().fold(0.0, f64::max)
    }

    /// Same space with every distance multiplied by `c > 0`.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        if !(c > 0.0 && c.is_finite()) {
            return input(format!("scale must be positive, got {c}"));
        }
        Ok(FiniteMetricSpace {
            labels: self.labels.clone(),
            n: self.n,
            dist: self.dist.iter().map(|d| d * c).collect(),
        })
    }

    /// Subspace (or relabelling) on the listed indices, in that order.
    pub fn restrict(&self, idx: &[usize]) -> Result<Self> {
        if idx.iter().any(|&i| i >= self.n) {
            return input("index out of range");
        }
        let mut s = Self::from_fn(idx.len(), |i, j| self.dist[idx[i] * self.n + idx[j]]);
        s.labels = idx.iter().map(|&i| self.labels[i].clone()).collect();
        Ok(s)
    }
}

impl IndexedMetric for FiniteMetricSpace {
    fn len(&self) -> usize {
        self.n
    }

    fn dist(&self, i: usize, j: usize) -> f64 {
        self.dist[i * self.n + j]
    }
}

fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdmissibleSequence {
    /// `partitions[n][t]` is the part label of point `t` at level `n`.
    pub partitions: Vec<Vec<usize>>,
    pub alpha: f64,
    pub value: f64,
}

impl AdmissibleSequence {
    pub fn part_count(&self, level: usize) -> usize {
        distinct(&self.partitions[level])
    }

    /// Checks the cardinality caps and nesting.
    pub fn validate(&self) -> Result<()> {
        for (n, p) in self.partitions.iter().enumerate() {
            if distinct(p) > level_cap(n) {
                return input(format!("level {n} has more than {} parts", level_cap(n)));
            }
            if n > 0 {
                let parent = &self.partitions[n - 1];
                for i in 0..p.len() {
                    for j in 0..p.len() {
                        if p[i] == p[j] && parent[i] != parent[j] {
                            return input(format!("level {n} does not refine level {}", n - 1));
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

fn distinct(labels: &[usize]) -> usize {
    let mut v = labels.to_vec();
    v.sort_unstable();
    v.dedup();
    v.len()
}

/// Diameter of the part containing each point.
fn part_diameters<M: IndexedMetric + ?Sized>(m: &M, labels: &[usize]) -> Vec<f64> {
    let n = labels.len();
    let parts = labels.iter().copied().max().map_or(0, |x| x + 1);
    let mut diam = vec![0.0f64; parts];
    for i in 0..n {
        for j in i + 1..n {
            if labels[i] == labels[j] {
                let d = &mut diam[labels[i]];
                *d = d.max(m.dist(i, j));
            }
        }
    }
    labels.iter().map(|&l| diam[l]).collect()
}

/// `max_t Σ_n 2^(n/α) Δ(A_n(t))`.
pub fn chain_value<M: IndexedMetric + ?Sized>(m: &M, partitions: &[Vec<usize>], alpha: f64) -> f64 {
    let mut acc = vec![0.0; m.len()];
    for (n, p) in partitions.iter().enumerate() {
        let w = 2f64.powf(n as f64 / alpha);
        for (a, d) in acc.iter_mut().zip(part_diameters(m, p)) {
            *a += w * d;
        }
    }
    acc.into_iter().fold(0.0, f64::max)
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return input(format!("alpha must be positive, got {alpha}"));
    }
    Ok(())
}

/// Nested partitions from prefixes of one farthest-point ordering. Level `n`
/// uses the first `N_n` centres and sends every point to the nearest centre
/// inside its level `n−1` part, lowest point index on ties.
pub fn greedy_gamma<M: IndexedMetric + ?Sized>(m: &M, alpha: f64) -> Result<AdmissibleSequence> {
    check_alpha(alpha)?;
    let n = m.len();
    if n == 0 {
        return input("empty metric space");
    }
    let order = farthest_point_order(m, Start::Center, 0.0, usize::MAX)?;
    let total = order.centers.len();
    let mut partitions = vec![vec![0usize; n]];
    let mut level = 1;
    while partitions.last().map(|p| distinct(p)).unwrap_or(0) < total {
        let k = level_cap(level).min(total);
        let parent = partitions.last().unwrap();
        let centers = &order.centers[..k];
        let labels: Vec<usize> = (0..n)
            .map(|t| {
                let mut best = (f64::INFINITY, usize::MAX, 0);
                for (pos, &c) in centers.iter().enumerate() {
                    if parent[c] != parent[t] {
                        continue;
                    }
                    let d = m.dist(t, c);
                    if d < best.0 || (d == best.0 && c < best.1) {
                        best = (d, c, pos);
                    }
                }
                best.2
            })
            .collect();
        partitions.push(labels);
        level += 1;
    }
    let value = chain_value(m, &partitions, alpha);
    Ok(AdmissibleSequence {
        partitions,
        alpha,
        value,
    })
}

/// Every set partition of `0..n` that refines `parent` and has at most `cap`
/// blocks, as restricted growth strings.
fn refinements(parent: &[usize], cap: usize) -> Vec<Vec<usize>> {
    fn grow(i: usize, cur: &mut Vec<usize>, blocks: usize, parent: &[usize], cap: usize, out: &mut Vec<Vec<usize>>) {
        if i == parent.len() {
            out.push(cur.clone());
            return;
        }
        for b in 0..=blocks {
            if b == blocks && blocks == cap {
                break;
            }
            if b < blocks {
                let rep = cur.iter().position(|&x| x == b).unwrap();
                if parent[rep] != parent[i] {
                    continue;
                }
            }
            cur.push(b);
            grow(i + 1, cur, blocks.max(b + 1), parent, cap, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    grow(0, &mut Vec::new(), 0, parent, cap, &mut out);
    out
}

/// Exact `γ_α` by enumerating nested partition chains. Once a level's cap
/// reaches the point count, singletons are optimal there and every later term
/// vanishes.
pub fn exact_gamma_small<M: IndexedMetric + ?Sized>(m: &M, alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    let n = m.len();
    if n > EXACT_GAMMA_MAX {
        return Err(Error::Unsupported(format!(
            "exact gamma handles at most {EXACT_GAMMA_MAX} points, got {n}"
        )));
    }
    if n == 0 {
        return input("empty metric space");
    }
    fn search<M: IndexedMetric + ?Sized>(m: &M, alpha: f64, level: usize, parent: &[usize], acc: &[f64]) -> f64 {
        let cap = level_cap(level);
        if cap >= parent.len() {
            return acc.iter().copied().fold(0.0, f64::max);
        }
        let w = 2f64.powf(level as f64 / alpha);
        let mut best = f64::INFINITY;
        for p in refinements(parent, cap) {
            let next: Vec<f64> = acc
                .iter()
                .zip(part_diameters(m, &p))
                .map(|(a, d)| a + w * d)
                .collect();
            if next.iter().copied().fold(0.0, f64::max) >= best {
                continue;
            }
            best = best.min(search(m, alpha, level + 1, &p, &next));
        }
        best
    }
    let whole = vec![0usize; n];
    let acc = part_diameters(m, &whole);
    Ok(search(m, alpha, 1, &whole, &acc))
}

/// `{0}` plus [`DUDLEY_GRID_POINTS`] log-spaced values from `diam/256` to `diam`.
pub fn dudley_grid(diam: f64, points: usize) -> Result<Vec<f64>> {
    if !(diam > 0.0 && diam.is_finite()) || points < 2 {
        return input("dudley grid needs diam > 0 and at least two points");
    }
    let mut g = vec![0.0];
    g.extend((0..points).map(|i| diam * DUDLEY_GRID_SPAN.powf(i as f64 / (points - 1) as f64 - 1.0)));
    *g.last_mut().unwrap() = diam;
    Ok(g)
}

/// Trapezoid rule for `∫ (ln N(ε))^(1/α) dε` with greedy counts on `grid`.
///
/// The integrand drops to zero at the diameter, so the rule stops there and
/// uses the value just below it.
pub fn dudley_integral<M: IndexedMetric + ?Sized>(m: &M, alpha: f64, grid: &[f64]) -> Result<f64> {
    check_alpha(alpha)?;
    if m.is_empty() {
        return Ok(0.0);
    }
    let mut diam: f64 = 0.0;
    for i in 0..m.len() {
        for j in i + 1..m.len() {
            diam = diam.max(m.dist(i, j));
        }
    }
    if diam == 0.0 {
        return Ok(0.0);
    }
    let mut g: Vec<f64> = grid.to_vec();
    if g.iter().any(|e| !(e.is_finite() && *e >= 0.0)) {
        return input("grid values must be finite and nonnegative");
    }
    g.sort_by(f64::total_cmp);
    if g[0] != 0.0 || *g.last().unwrap() < diam {
        return input(format!("grid must cover [0, {diam}]"));
    }
    g.retain(|&e| e < diam);
    g.dedup();
    let order = farthest_point_order(m, Start::Center, 0.0, usize::MAX)?;
    let f = |eps: f64| {
        let count = order.count_at(eps).unwrap_or(order.centers.len());
        (count as f64).ln().powf(1.0 / alpha)
    };
    let below = f(diam * (1.0 - 1e-12));
    let mut xs = g.clone();
    xs.push(diam);
    let mut ys: Vec<f64> = g.iter().map(|&e| f(e)).collect();
    ys.push(below);
    Ok(xs
        .windows(2)
        .zip(ys.windows(2))
        .map(|(x, y)| 0.5 * (x[1] - x[0]) * (y[0] + y[1]))
        .sum())
}

/// Index set of the process `X_t = Σ_k t_k g_k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianIndexSet {
    vectors: Vec<Vec<f64>>,
}

impl GaussianIndexSet {
    pub fn new(vectors: Vec<Vec<f64>>) -> Result<Self> {
        let Some(first) = vectors.first() else {
            return input("empty index set");
        };
        let d = first.len();
        if d == 0 || vectors.iter().any(|v| v.len() != d) {
            return input("vectors must share a positive length");
        }
        if vectors.iter().flatten().any(|x| !x.is_finite()) {
            return input("vector entries must be finite");
        }
        Ok(GaussianIndexSet { vectors })
    }

    /// One vector per row; a non-numeric first row is taken as a header.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let mut vectors = Vec::new();
        for (i, rec) in r.records().enumerate() {
            let rec = rec?;
            let row: std::result::Result<Vec<f64>, _> = rec.iter().map(str::parse::<f64>).collect();
            match row {
                Ok(v) => vectors.push(v),
                Err(_) if i == 0 => continue,
                Err(e) => return input(format!("row {i}: {e}")),
            }
        }
        Self::new(vectors)
    }

    pub fn vectors(&self) -> &[Vec<f64>] {
        &self.vectors
    }

    pub fn dim(&self) -> usize {
        self.vectors[0].len()
    }

    pub fn scaled(&self, c: f64) -> Result<Self> {
        Self::new(self.vectors.iter().map(|v| v.iter().map(|x| x * c).collect()).collect())
    }

    pub fn metric(&self) -> FiniteMetricSpace {
        FiniteMetricSpace::from_fn(self.vectors.len(), |i, j| euclid(&self.vectors[i], &self.vectors[j]))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianSup {
    pub mean_sup: f64,
    pub stderr: f64,
    pub trials: usize,
}

/// Monte Carlo mean of `max_t ⟨t, g⟩` over standard Gaussian `g`.
pub fn gaussian_sup_mc<R: Rng + ?Sized>(gset: &GaussianIndexSet, trials: usize, rng: &mut R) -> Result<GaussianSup> {
    if trials < MIN_TRIALS {
        return input(format!("need at least {MIN_TRIALS} trials, got {trials}"));
    }
    let d = gset.dim();
    let root = rng::draw_root(rng);
    let parts = rng::par_chunks(root, trials, |r, count| {
        let mut g = vec![0.0; d];
        let (mut s, mut s2) = (0.0, 0.0);
        for _ in 0..count {
            for x in g.iter_mut() {
                *x = r.sample(StandardNormal);
            }
            let sup = gset
                .vectors
                .iter()
                .map(|t| t.iter().zip(&g).map(|(a, b)| a * b).sum::<f64>())
                .fold(f64::NEG_INFINITY, f64::max);
            s += sup;
            s2 += sup * sup;
        }
        (s, s2)
    });
    let (s, s2) = parts.into_iter().fold((0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1));
    let t = trials as f64;
    let mean = s / t;
    let var = ((s2 - t * mean * mean) / (t - 1.0)).max(0.0);
    Ok(GaussianSup {
        mean_sup: mean,
        stderr: (var / t).sqrt(),
        trials,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FerniqueBand {
    pub alpha: f64,
    pub gamma_greedy: f64,
    pub mean_sup: f64,
    pub stderr: f64,
    /// `mean_sup / gamma_greedy`.
    pub l_lower: Option<f64>,
    /// `gamma_greedy / mean_sup`.
    pub l_upper: Option<f64>,
    pub flag: Flag,
}

/// Measures the constants `L` in `γ/L ≤ E sup X_t ≤ L γ` with the greedy `γ`.
pub fn fernique_band<R: Rng + ?Sized>(
    gset: &GaussianIndexSet,
    alpha: f64,
    trials: usize,
    rng: &mut R,
) -> Result<FerniqueBand> {
    let gamma = greedy_gamma(&gset.metric(), alpha)?.value;
    let sup = gaussian_sup_mc(gset, trials, rng)?;
    let (l_lower, l_upper, flag) = if gamma == 0.0 {
        (None, None, Flag::NotAssertable("all index vectors coincide".into()))
    } else {
        let lo = sup.mean_sup / gamma;
        let hi = gamma / sup.mean_sup;
        let ok = lo.is_finite() && hi.is_finite() && lo > 0.0 && hi > 0.0;
        (Some(lo), Some(hi), Flag::from_bool(ok))
    };
    Ok(FerniqueBand {
        alpha,
        gamma_greedy: gamma,
        mean_sup: sup.mean_sup,
        stderr: sup.stderr,
        l_lower,
        l_upper,
        flag,
    })
}
