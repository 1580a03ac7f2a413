//! Covering numbers on finite clouds.
//!
//! Every greedy count comes from one farthest-point ordering: after the first
//! `j` centres of the ordering every point is within `radii[j-1]` of a centre,
//! so `N(ε)` is the first `j` with `radii[j-1] ≤ ε`.

use std::io::Write;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::bounds::Flag;
use crate::convex::{convexity_probe, internal_rng, SetRep};
use crate::error::{input, Error, Result};
use crate::hyperbolic::{HPoint, ModelSpace};
use crate::volume::{ball_volume, mc_volume, VolumeEstimate};

/// Largest instance accepted by [`exact_covering_number_small`].
pub const EXACT_COVER_MAX: usize = 16;
/// Default ε grid length.
pub const EPS_GRID_LEN: usize = 16;
/// Default ratio between the largest and smallest grid value.
pub const EPS_GRID_SPAN: f64 = 64.0;

/// A finite set of points addressed by index.
pub trait IndexedMetric: Sync {
    fn len(&self) -> usize;
    fn dist(&self, i: usize, j: usize) -> f64;
    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Points of a model space under the geodesic distance.
#[derive(Debug, Clone, Copy)]
pub struct CloudMetric<'a> {
    pub space: &'a ModelSpace,
    pub points: &'a [HPoint],
}

impl IndexedMetric for CloudMetric<'_> {
    fn len(&self) -> usize {
        self.points.len()
    }

    fn dist(&self, i: usize, j: usize) -> f64 {
        self.space.distance(&self.points[i], &self.points[j])
    }
}

/// Where the farthest-point ordering starts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Start {
    Index(usize),
    /// A point of least eccentricity. Ties go to the smaller total distance,
    /// then the lower index. Quadratic cost but independent of labelling
    /// except on exact ties of both keys.
    Center,
}

// Mutually farthest pairs share their eccentricity, so eccentricity ties are
// not rare even for points in general position.
fn least_eccentric<M: IndexedMetric + ?Sized>(m: &M) -> usize {
    let n = m.len();
    let mut best = (f64::INFINITY, f64::INFINITY, 0);
    for i in 0..n {
        let (mut ecc, mut total): (f64, f64) = (0.0, 0.0);
        for j in 0..n {
            let d = m.dist(i, j);
            ecc = ecc.max(d);
            total += d;
            if ecc > best.0 {
                break;
            }
        }
        if ecc < best.0 || (ecc == best.0 && total < best.1) {
            best = (ecc, total, i);
        }
    }
    best.2
}

/// Prefix of a farthest-point ordering.
#[derive(Debug, Clone, PartialEq)]
pub struct FarthestOrder {
    pub centers: Vec<usize>,
    /// `radii[j]`: covering radius of the first `j + 1` centres.
    pub radii: Vec<f64>,
    /// Nearest chosen centre (as a position in `centers`) for every point.
    pub owner: Vec<usize>,
}

impl FarthestOrder {
    /// Greedy count at scale `eps`, if the prefix reaches it.
    pub fn count_at(&self, eps: f64) -> Option<usize> {
        self.radii.iter().position(|&r| r <= eps).map(|j| j + 1)
    }
}

/// Farthest-point ordering, stopped once the covering radius is at most
/// `stop_radius` or `max_centers` centres are placed. The farthest point is
/// taken with lowest index on ties.
///
/// Each point belongs to the cell of its nearest centre. A new centre `x` can
/// only capture points of cell `c` if `d(x, c) < 2·rad(c)`, so other cells are
/// skipped.
pub fn farthest_point_order<M: IndexedMetric + ?Sized>(
    m: &M,
    start: Start,
    stop_radius: f64,
    max_centers: usize,
) -> Result<FarthestOrder> {
    let n = m.len();
    if n == 0 {
        return input("empty point set");
    }
    let first = match start {
        Start::Index(i) if i < n => i,
        Start::Index(i) => return input(format!("start index {i} out of range")),
        Start::Center => least_eccentric(m),
    };
    let mut dmin = vec![0.0; n];
    let mut owner = vec![0usize; n];
    let mut cells: Vec<Vec<u32>> = vec![(0..n as u32).collect()];
    for (i, d) in dmin.iter_mut().enumerate() {
        *d = m.dist(first, i);
    }
    dmin[first] = 0.0;
    let worst = |cell: &[u32], dmin: &[f64]| -> (f64, usize) {
        cell.iter().fold((0.0, usize::MAX), |acc, &i| {
            let d = dmin[i as usize];
            if d > acc.0 || (d == acc.0 && (i as usize) < acc.1) {
                (d, i as usize)
            } else {
                acc
            }
        })
    };
    let mut cell_worst = vec![worst(&cells[0], &dmin)];
    let mut centers = vec![first];
    let mut radii = vec![cell_worst[0].0];
    let max_centers = max_centers.max(1).min(n);
    while centers.len() < max_centers {
        let (r, x) = cell_worst.iter().fold((0.0, usize::MAX), |acc, &(d, i)| {
            if d > acc.0 || (d == acc.0 && i < acc.1) {
                (d, i)
            } else {
                acc
            }
        });
        if r <= stop_radius || r == 0.0 {
            break;
        }
        let pos = centers.len();
        let mut captured = Vec::new();
        for (c, cell) in cells.iter_mut().enumerate() {
            if m.dist(x, centers[c]) >= 2.0 * cell_worst[c].0 {
                continue;
            }
            let before = cell.len();
            cell.retain(|&i| {
                let i = i as usize;
                let d = if i == x { 0.0 } else { m.dist(x, i) };
                if d < dmin[i] || i == x {
                    dmin[i] = d;
                    owner[i] = pos;
                    captured.push(i as u32);
                    false
                } else {
                    true
                }
            });
            if cell.len() != before {
                cell_worst[c] = worst(cell, &dmin);
            }
        }
        cell_worst.push(worst(&captured, &dmin));
        cells.push(captured);
        centers.push(x);
        radii.push(cell_worst.iter().fold(0.0, |a, w| f64::max(a, w.0)));
    }
    Ok(FarthestOrder {
        centers,
        radii,
        owner,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cover {
    pub count: usize,
    pub centers: Vec<usize>,
}

/// Farthest-point greedy cover at scale `eps`, started at index 0.
pub fn greedy_covering_number<M: IndexedMetric + ?Sized>(m: &M, eps: f64) -> Result<Cover> {
    greedy_cover_from(m, eps, Start::Index(0))
}

pub fn greedy_cover_from<M: IndexedMetric + ?Sized>(m: &M, eps: f64, start: Start) -> Result<Cover> {
    if !(eps > 0.0) {
        return input(format!("eps must be positive, got {eps}"));
    }
    let order = farthest_point_order(m, start, eps, usize::MAX)?;
    let count = order.count_at(eps).unwrap_or(order.centers.len());
    Ok(Cover {
        count,
        centers: order.centers[..count].to_vec(),
    })
}

/// Minimum number of `eps`-balls centred at the points themselves, by branch
/// and bound over the lowest uncovered point.
pub fn exact_covering_number_small<M: IndexedMetric + ?Sized>(m: &M, eps: f64) -> Result<usize> {
    let n = m.len();
    if n > EXACT_COVER_MAX {
        return Err(Error::Unsupported(format!(
            "exact covering handles at most {EXACT_COVER_MAX} points, got {n}"
        )));
    }
    if n == 0 {
        return input("empty point set");
    }
    let masks: Vec<u32> = (0..n)
        .map(|c| (0..n).filter(|&j| m.dist(c, j) <= eps).fold(0u32, |a, j| a | 1 << j))
        .collect();
    let full = (1u32 << n) - 1;
    fn search(covered: u32, used: usize, best: &mut usize, masks: &[u32], full: u32) {
        if covered == full {
            *best = (*best).min(used);
            return;
        }
        if used + 1 >= *best {
            return;
        }
        let u = (!covered).trailing_zeros() as usize;
        let mut options: Vec<u32> = masks.iter().copied().filter(|mk| mk & (1 << u) != 0).collect();
        options.sort_by_key(|mk| std::cmp::Reverse((mk & !covered).count_ones()));
        for mk in options {
            search(covered | mk, used + 1, best, masks, full);
        }
    }
    let mut best = n;
    search(0, 0, &mut best, &masks, full);
    Ok(best)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoverMethod {
    Greedy,
    Exact,
}

impl CoverMethod {
    pub fn name(&self) -> &'static str {
        match self {
            CoverMethod::Greedy => "greedy",
            CoverMethod::Exact => "exact",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoveringProfile {
    pub epsilons: Vec<f64>,
    pub counts: Vec<usize>,
    pub method: CoverMethod,
}

impl CoveringProfile {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["eps", "count", "method"])?;
        for (e, c) in self.epsilons.iter().zip(&self.counts) {
            w.write_record([e.to_string(), c.to_string(), self.method.name().to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn count_at(&self, eps: f64) -> Option<usize> {
        self.epsilons.iter().position(|&e| e == eps).map(|i| self.counts[i])
    }
}

/// `len` values spaced evenly in log scale from `diam` down to `diam / span`.
pub fn eps_grid(diam: f64, len: usize, span: f64) -> Result<Vec<f64>> {
    if !(diam > 0.0 && diam.is_finite()) || len < 2 || !(span > 1.0) {
        return input("eps grid needs diam > 0, len ≥ 2 and span > 1");
    }
    Ok((0..len)
        .map(|i| diam * span.powf(-(i as f64) / (len - 1) as f64))
        .collect())
}

fn check_grid(epsilons: &[f64]) -> Result<()> {
    if epsilons.is_empty() || epsilons.iter().any(|e| !(*e > 0.0)) || epsilons.windows(2).any(|w| w[1] >= w[0]) {
        return input("eps grid must be positive and strictly decreasing");
    }
    Ok(())
}

/// Greedy counts for every grid value from one farthest-point ordering.
pub fn covering_profile<M: IndexedMetric + ?Sized>(
    m: &M,
    epsilons: &[f64],
    start: Start,
) -> Result<CoveringProfile> {
    check_grid(epsilons)?;
    let smallest = *epsilons.last().unwrap();
    let order = farthest_point_order(m, start, smallest, usize::MAX)?;
    let counts = epsilons
        .iter()
        .map(|&e| order.count_at(e).unwrap_or(order.centers.len()))
        .collect();
    Ok(CoveringProfile {
        epsilons: epsilons.to_vec(),
        counts,
        method: CoverMethod::Greedy,
    })
}

/// Exact counts on a small instance.
pub fn exact_covering_profile<M: IndexedMetric + ?Sized>(m: &M, epsilons: &[f64]) -> Result<CoveringProfile> {
    check_grid(epsilons)?;
    let counts = epsilons
        .iter()
        .map(|&e| exact_covering_number_small(m, e))
        .collect::<Result<_>>()?;
    Ok(CoveringProfile {
        epsilons: epsilons.to_vec(),
        counts,
        method: CoverMethod::Exact,
    })
}

/// Start index for clouds: the point nearest the centre of the bounding ball.
pub fn cloud_start(s: &SetRep) -> Start {
    Start::Index(s.support().nearest(&s.bounding().center).0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SandwichReport {
    pub eps: f64,
    pub n_greedy: usize,
    pub lower: f64,
    pub upper: f64,
    pub lower_stderr: f64,
    pub upper_stderr: f64,
    pub volume: VolumeEstimate,
    pub unit_ball_volume: f64,
    /// How the unit ball in the bounds is chosen.
    pub normalization: String,
    pub support_points: usize,
    pub convexity_violations: usize,
    pub eps_ball_contained: bool,
    pub flag: Flag,
}

/// Compares greedy covering of a dense support cloud with
/// `(1/ε)ⁿ Vol(s)/Vol(B) ≤ N ≤ (3/ε)ⁿ Vol(s)/Vol(B)`, with `B` a unit geodesic
/// ball. Both bounds are allowed three standard errors.
pub fn volume_sandwich_check<R: Rng + ?Sized>(
    space: &ModelSpace,
    s: &SetRep,
    eps: f64,
    samples: usize,
    rng: &mut R,
) -> Result<SandwichReport> {
    if !(eps > 0.0 && eps.is_finite()) {
        return input(format!("eps must be positive, got {eps}"));
    }
    let n = space.dim() as i32;
    let convex = convexity_probe(space, s, 200, rng)?;
    let center = s.support().points()[match cloud_start(s) {
        Start::Index(i) => i,
        Start::Center => 0,
    }]
    .clone();
    let mut dirs = internal_rng(0x5a4d);
    let eps_ball_contained =
        s.contains(&center) && (0..256).all(|_| s.contains(&space.ray_point(&space.random_unit_tangent(&center, &mut dirs), eps)));
    let volume = mc_volume(space, s, samples, rng)?;
    let unit = ball_volume(space, 1.0)?;
    let dense = s.densified(eps / 4.0)?;
    let start = cloud_start(&dense);
    let metric = CloudMetric {
        space,
        points: dense.support().points(),
    };
    let n_greedy = greedy_cover_from(&metric, eps, start)?.count;
    let lo_f = eps.powi(-n) / unit;
    let hi_f = (3.0 / eps).powi(n) / unit;
    let (lower, upper) = (lo_f * volume.value, hi_f * volume.value);
    let (lower_stderr, upper_stderr) = (lo_f * volume.stderr, hi_f * volume.stderr);
    let within = lower - 3.0 * lower_stderr <= n_greedy as f64 && n_greedy as f64 <= upper + 3.0 * upper_stderr;
    let flag = if convex.violations > 0 {
        Flag::NotAssertable(format!("set failed the convexity probe ({} violations)", convex.violations))
    } else if !eps_ball_contained {
        Flag::NotAssertable(format!("no ball of radius {eps} fits inside the set"))
    } else {
        Flag::from_bool(within)
    };
    Ok(SandwichReport {
        eps,
        n_greedy,
        lower,
        upper,
        lower_stderr,
        upper_stderr,
        volume,
        unit_ball_volume: unit,
        normalization: "geodesic unit ball at the support point nearest the bounding centre".into(),
        support_points: dense.support().len(),
        convexity_violations: convex.violations,
        eps_ball_contained,
        flag,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioEntry {
    pub eps: f64,
    pub n_t: usize,
    pub n_th: usize,
    pub ratio: f64,
    pub bound: f64,
    pub holds: bool,
    /// `holds`, or not assertable when `n_t < 2`.
    pub flag: Flag,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoveringRatioReport {
    pub r: f64,
    pub n: usize,
    pub entries: Vec<RatioEntry>,
    pub max_ratio: f64,
    pub flag: Flag,
}

/// Checks `N_Th(ε) ≤ R·3ⁿ·N_T(ε)` on a shared grid.
pub fn covering_ratio_check(
    profile_t: &CoveringProfile,
    profile_th: &CoveringProfile,
    r: f64,
    n: usize,
) -> Result<CoveringRatioReport> {
    if profile_t.epsilons != profile_th.epsilons {
        return input("covering profiles use different eps grids");
    }
    if !(r > 0.0) {
        return input(format!("R must be positive, got {r}"));
    }
    let bound_factor = r * 3f64.powi(n as i32);
    let entries: Vec<RatioEntry> = profile_t
        .epsilons
        .iter()
        .zip(profile_t.counts.iter().zip(&profile_th.counts))
        .map(|(&eps, (&n_t, &n_th))| {
            let bound = bound_factor * n_t as f64;
            let holds = n_th as f64 <= bound;
            let flag = if n_t < 2 {
                Flag::NotAssertable(format!("N_T = {n_t} < 2"))
            } else {
                Flag::from_bool(holds)
            };
            RatioEntry {
                eps,
                n_t,
                n_th,
                ratio: n_th as f64 / n_t as f64,
                bound,
                holds,
                flag,
            }
        })
        .collect();
    let max_ratio = entries.iter().map(|e| e.ratio).fold(0.0, f64::max);
    let flag = Flag::all(entries.iter().map(|e| &e.flag));
    Ok(CoveringRatioReport {
        r,
        n,
        entries,
        max_ratio,
        flag,
    })
}
