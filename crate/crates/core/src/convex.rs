//! Regions of the model space.
//!
//! A [`SetRep`] pairs a membership oracle and a distance function with a
//! support cloud (a dense sample of member points) and a bounding ball. Balls,
//! half-spaces, geodesic segments and their unions have closed-form distances;
//! hull clouds and envelopes go through the support cloud.

use std::f64::consts::LN_2;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};
use smallvec::SmallVec;

use crate::bounds;
use crate::cloud::{ChartGrid, PointCloud};
use crate::error::{input, Error, Result};
use crate::hyperbolic::{mink, random_unit_vector, Coords, HPoint, HTangent, ModelSpace};
use crate::rng::{self, StreamRng};

/// Hard cap on the number of points a hull or densified cloud may hold.
pub const MAX_CLOUD_POINTS: usize = 10_000_000;
/// Default spacing of hull clouds.
pub const DEFAULT_HULL_TOL: f64 = 1e-3;
/// Default truncation length of the envelope ray.
pub const DEFAULT_RAY_LENGTH: f64 = 50.0;
/// Interior points tested on each pair by [`convexity_probe`].
pub const PROBE_INTERIOR_POINTS: usize = 9;
/// Exterior depth below which a probe failure is treated as rounding.
pub const PROBE_DEPTH_TOL: f64 = 1e-4;

// Support points of balls sit this fraction inside the rim.
const RIM: f64 = 1.0 - 1e-9;
const SEGMENT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SetKind {
    GeodesicBall,
    HalfSpace,
    Segment,
    Union,
    HullCloud,
    Envelope,
    Neighborhood,
}

impl SetKind {
    pub fn name(&self) -> &'static str {
        match self {
            SetKind::GeodesicBall => "geodesic_ball",
            SetKind::HalfSpace => "half_space",
            SetKind::Segment => "segment",
            SetKind::Union => "union",
            SetKind::HullCloud => "hull_cloud",
            SetKind::Envelope => "envelope",
            SetKind::Neighborhood => "neighborhood",
        }
    }
}

/// A ball guaranteed to contain the set; the radius may be infinite.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundingBall {
    pub center: HPoint,
    pub radius: f64,
}

#[derive(Debug, Clone)]
enum Shape {
    Ball { center: HPoint, radius: f64 },
    // {x : ⟨x, normal⟩ ≤ 0} for a unit spacelike normal.
    HalfSpace { normal: Coords },
    Segment { dir: HTangent, len: f64 },
    Union(Vec<SetRep>),
    Hull { tol: f64 },
    Envelope(Box<EnvelopeSpec>),
    Neighborhood { inner: Box<SetRep>, delta: f64 },
}

#[derive(Debug, Clone)]
pub struct SetRep {
    space: ModelSpace,
    shape: Shape,
    support: Arc<PointCloud>,
    bounding: BoundingBall,
}

fn ball_rim_points(space: &ModelSpace, center: &HPoint, r: f64, count: usize) -> Vec<HPoint> {
    let dim = space.dim();
    let mut out = Vec::with_capacity(count);
    if dim == 2 {
        for i in 0..count {
            let th = std::f64::consts::TAU * i as f64 / count as f64;
            let u = space.frame_vector(center, &[th.cos(), th.sin()]);
            out.push(space.ray_point(&u, r * RIM));
        }
    } else {
        for i in 0..dim {
            for s in [1.0, -1.0] {
                let mut e = vec![0.0; dim];
                e[i] = s;
                out.push(space.ray_point(&space.frame_vector(center, &e), r * RIM));
            }
        }
        let mut rng = rng::substream(0x000b_0a11, dim as u64);
        while out.len() < count.max(2 * dim) {
            let u = random_unit_vector(dim, &mut rng);
            out.push(space.ray_point(&space.frame_vector(center, &u), r * RIM));
        }
    }
    out
}

impl SetRep {
    /// Closed geodesic ball `B(center, radius)`.
    pub fn ball(space: ModelSpace, center: HPoint, radius: f64) -> Result<Self> {
        if !(radius.is_finite() && radius > 0.0) {
            return input(format!("ball radius must be positive, got {radius}"));
        }
        let mut pts = vec![center.clone()];
        pts.extend(ball_rim_points(&space, &center, radius, 64));
        Ok(SetRep {
            space,
            support: Arc::new(PointCloud::new(space, pts)?),
            bounding: BoundingBall {
                center: center.clone(),
                radius,
            },
            shape: Shape::Ball { center, radius },
        })
    }

    /// Closed half-space bounded by the totally geodesic hyperplane through
    /// `point` orthogonal to `outward`, on the side opposite `outward`.
    pub fn half_space(space: ModelSpace, point: HPoint, outward: &HTangent) -> Result<Self> {
        let u = outward
            .unit()
            .ok_or_else(|| Error::Input("half-space normal is zero".into()))?;
        if space.distance(u.base(), &point) > 1e-9 {
            return input("half-space normal is not based at the given point");
        }
        let inward = u.scaled(-1.0);
        let pts = vec![point.clone(), space.ray_point(&inward, 1.0)];
        Ok(SetRep {
            space,
            support: Arc::new(PointCloud::new(space, pts)?),
            bounding: BoundingBall {
                center: point,
                radius: f64::INFINITY,
            },
            shape: Shape::HalfSpace {
                normal: u.vec().iter().copied().collect(),
            },
        })
    }

    /// Geodesic segment `[a, b]`.
    pub fn segment(space: ModelSpace, a: HPoint, b: HPoint) -> Result<Self> {
        let v = space.log_map(&a, &b);
        let len = v.norm();
        match v.unit() {
            Some(u) => Self::geodesic_piece(space, u, len),
            None => input("segment endpoints coincide"),
        }
    }

    /// `{exp(start, t·dir) : t ∈ [0, len]}` for a unit `dir` based at `start`.
    pub fn geodesic_piece(space: ModelSpace, dir: HTangent, len: f64) -> Result<Self> {
        if (dir.norm() - 1.0).abs() > 1e-9 {
            return input("geodesic direction must be a unit vector");
        }
        if !(len.is_finite() && len > 0.0) {
            return input("geodesic length must be positive and finite");
        }
        let pts: Vec<HPoint> = (0..=64)
            .map(|i| space.ray_point(&dir, len * i as f64 / 64.0))
            .collect();
        let mid = space.ray_point(&dir, len / 2.0);
        Ok(SetRep {
            space,
            support: Arc::new(PointCloud::new(space, pts)?),
            bounding: BoundingBall {
                center: mid,
                radius: len / 2.0 + 1e-12,
            },
            shape: Shape::Segment { dir, len },
        })
    }

    pub fn union(members: Vec<SetRep>) -> Result<Self> {
        let first = members
            .first()
            .ok_or_else(|| Error::Input("union of no sets".into()))?;
        let space = first.space;
        if members.iter().any(|m| m.space != space) {
            return input("union members live in different spaces");
        }
        let pts: Vec<HPoint> = members
            .iter()
            .flat_map(|m| m.support.points().iter().cloned())
            .collect();
        let bounding = enclosing_ball(&space, members.iter().map(|m| &m.bounding));
        Ok(SetRep {
            space,
            support: Arc::new(PointCloud::new(space, pts)?),
            bounding,
            shape: Shape::Union(members),
        })
    }

    /// The set `{p : dist(p, inner) ≤ delta}`.
    pub fn neighborhood(inner: &SetRep, delta: f64) -> Result<Self> {
        if !(delta.is_finite() && delta > 0.0) {
            return input(format!("neighbourhood radius must be positive, got {delta}"));
        }
        Ok(SetRep {
            space: inner.space,
            support: inner.support.clone(),
            bounding: BoundingBall {
                center: inner.bounding.center.clone(),
                radius: inner.bounding.radius + delta,
            },
            shape: Shape::Neighborhood {
                inner: Box::new(inner.clone()),
                delta,
            },
        })
    }

    pub fn kind(&self) -> SetKind {
        match self.shape {
            Shape::Ball { .. } => SetKind::GeodesicBall,
            Shape::HalfSpace { .. } => SetKind::HalfSpace,
            Shape::Segment { .. } => SetKind::Segment,
            Shape::Union(_) => SetKind::Union,
            Shape::Hull { .. } => SetKind::HullCloud,
            Shape::Envelope(_) => SetKind::Envelope,
            Shape::Neighborhood { .. } => SetKind::Neighborhood,
        }
    }

    pub fn space(&self) -> &ModelSpace {
        &self.space
    }

    pub fn support(&self) -> &PointCloud {
        &self.support
    }

    pub fn bounding(&self) -> &BoundingBall {
        &self.bounding
    }

    /// Members of a union; empty for other kinds.
    pub fn members(&self) -> &[SetRep] {
        match &self.shape {
            Shape::Union(m) => m,
            _ => &[],
        }
    }

    /// Spacing of a hull cloud.
    pub fn hull_tol(&self) -> Option<f64> {
        match self.shape {
            Shape::Hull { tol } => Some(tol),
            _ => None,
        }
    }

    pub fn envelope(&self) -> Option<&EnvelopeSpec> {
        match &self.shape {
            Shape::Envelope(e) => Some(e),
            _ => None,
        }
    }

    /// Replaces the bounding ball; the caller guarantees containment.
    pub fn with_bounding(mut self, bounding: BoundingBall) -> Self {
        self.bounding = bounding;
        self
    }

    pub fn contains(&self, p: &HPoint) -> bool {
        match &self.shape {
            Shape::Ball { center, radius } => self.space.distance(center, p) <= *radius,
            Shape::HalfSpace { normal } => mink(p.coords(), normal) <= 0.0,
            Shape::Segment { dir, len } => {
                self.space.distance_to_geodesic(p, dir, *len).0 <= SEGMENT_TOL
            }
            Shape::Union(members) => members.iter().any(|m| m.contains(p)),
            Shape::Hull { tol } => self
                .support
                .refined_distance_within(p, 2.0 * tol)
                .is_some_and(|d| d <= 2.0 * tol),
            Shape::Envelope(env) => env.contains(p),
            Shape::Neighborhood { inner, delta } => {
                inner.dist_within(p, *delta).is_some_and(|d| d <= *delta)
            }
        }
    }

    /// Distance from `p` to the set; zero for members.
    pub fn dist(&self, p: &HPoint) -> f64 {
        self.dist_within(p, f64::INFINITY)
            .expect("uncapped distance is always available")
    }

    /// Like [`dist`](Self::dist), but may return `None` once the distance is
    /// known to exceed `cap`.
    pub fn dist_within(&self, p: &HPoint, cap: f64) -> Option<f64> {
        let d = match &self.shape {
            Shape::Ball { center, radius } => (self.space.distance(center, p) - radius).max(0.0),
            Shape::HalfSpace { normal } => {
                let k = self.space.curvature_scale();
                ((k * mink(p.coords(), normal)).asinh() / k).max(0.0)
            }
            Shape::Segment { dir, len } => self.space.distance_to_geodesic(p, dir, *len).0,
            Shape::Union(members) => {
                let mut best: Option<f64> = None;
                for m in members {
                    let c = best.map_or(cap, |b| b.min(cap));
                    if let Some(d) = m.dist_within(p, c) {
                        best = Some(best.map_or(d, |b: f64| b.min(d)));
                        if d == 0.0 {
                            break;
                        }
                    }
                }
                best?
            }
            Shape::Hull { tol } => {
                let d = self.support.refined_distance_within(p, cap + 2.0 * tol)?;
                (d - 2.0 * tol).max(0.0)
            }
            Shape::Envelope(env) => {
                let g = env.g(p);
                if g <= 1.0 {
                    0.0
                } else {
                    // Each g_i is a-Lipschitz, so d(p, G) ≥ (g − 1)/(2a).
                    if (g - 1.0) / (2.0 * env.decay) > cap {
                        return None;
                    }
                    self.support.refined_distance_within(p, cap)?
                }
            }
            Shape::Neighborhood { inner, delta } => {
                (inner.dist_within(p, cap + delta)? - delta).max(0.0)
            }
        };
        (d <= cap).then_some(d)
    }

    /// Rejection draw from the bounding ball; `None` after `attempts` misses.
    pub fn sample_member<R: Rng + ?Sized>(&self, rng: &mut R, attempts: usize) -> Option<HPoint> {
        if !self.bounding.radius.is_finite() {
            return None;
        }
        let sampler = self
            .space
            .ball_sampler(&self.bounding.center, self.bounding.radius.max(1e-12))
            .ok()?;
        (0..attempts)
            .map(|_| sampler.sample(rng))
            .find(|p| self.contains(p))
    }

    /// Copy of the set whose support is `spacing`-dense: every member point lies
    /// within about `spacing` of a support point.
    pub fn densified(&self, spacing: f64) -> Result<SetRep> {
        if !(spacing.is_finite() && spacing > 0.0) {
            return input("densification spacing must be positive");
        }
        let pts = match &self.shape {
            Shape::Union(members) => {
                let mut grid = ChartGrid::new(self.space, &self.bounding.center, spacing);
                for m in members {
                    for p in m.densified(spacing)?.support.points() {
                        grid.insert_if_separated(p.clone(), 0.5 * spacing);
                        if grid.len() > MAX_CLOUD_POINTS {
                            return Err(cloud_cap(spacing));
                        }
                    }
                }
                grid.into_points()
            }
            Shape::Segment { dir, len } => {
                let steps = (len / spacing).ceil().max(1.0) as usize;
                (0..=steps)
                    .map(|i| self.space.ray_point(dir, len * i as f64 / steps as f64))
                    .collect()
            }
            Shape::HalfSpace { .. } => {
                return Err(Error::Unsupported("cannot densify an unbounded set".into()))
            }
            _ => self.lattice_fill(spacing)?,
        };
        let mut out = self.clone();
        out.support = Arc::new(PointCloud::new(self.space, pts)?);
        Ok(out)
    }

    // Chart lattice over the bounding ball, filtered by membership and thinned.
    fn lattice_fill(&self, spacing: f64) -> Result<Vec<HPoint>> {
        let space = self.space;
        let n = space.dim();
        let k = space.curvature_scale();
        let big_r = self.bounding.radius;
        if !big_r.is_finite() {
            return Err(Error::Unsupported("cannot densify an unbounded set".into()));
        }
        let kr = k * big_r;
        let stretch = if kr > 0.0 { kr.sinh() / kr } else { 1.0 };
        let h = spacing / ((n as f64).sqrt() * stretch);
        let steps = (big_r / h).ceil() as i64;
        let cells = (2 * steps + 1) as f64;
        if cells.powi(n as i32) > 50.0 * MAX_CLOUD_POINTS as f64 {
            return Err(cloud_cap(spacing));
        }
        let chart = space.chart(&self.bounding.center);
        let mut grid = ChartGrid::new(space, &self.bounding.center, spacing);
        for p in self.support.points() {
            grid.insert(p.clone());
        }
        if let Shape::Ball { center, radius } = &self.shape {
            let circ = std::f64::consts::TAU * (k * radius).sinh() / k;
            let count = ((circ / (0.5 * spacing)).ceil() as usize).max(64);
            let count = if n == 2 { count } else { count.pow(n as u32 - 1).min(200_000) };
            for p in ball_rim_points(&space, center, *radius, count) {
                grid.insert_if_separated(p, 0.25 * spacing);
            }
        }
        let mut idx = vec![-steps; n];
        let mut y = vec![0.0; n];
        loop {
            let mut r2 = 0.0;
            for j in 0..n {
                y[j] = idx[j] as f64 * h;
                r2 += y[j] * y[j];
            }
            if r2 <= big_r * big_r {
                let p = chart.from_chart(&y);
                if self.contains(&p) {
                    grid.insert_if_separated(p, 0.5 * spacing);
                    if grid.len() > MAX_CLOUD_POINTS {
                        return Err(cloud_cap(spacing));
                    }
                }
            }
            let mut j = 0;
            loop {
                if j == n {
                    return Ok(grid.into_points());
                }
                idx[j] += 1;
                if idx[j] > steps {
                    idx[j] = -steps;
                    j += 1;
                } else {
                    break;
                }
            }
        }
    }
}

fn cloud_cap(tol: f64) -> Error {
    Error::Resource {
        what: "point cloud size",
        reached: MAX_CLOUD_POINTS,
        achieved_tol: tol,
    }
}

/// A ball containing every given ball; tries each centre and keeps the smallest.
fn enclosing_ball<'a>(space: &ModelSpace, balls: impl Iterator<Item = &'a BoundingBall>) -> BoundingBall {
    let balls: Vec<&BoundingBall> = balls.collect();
    let radius_from = |c: &HPoint| {
        balls
            .iter()
            .map(|b| space.distance(c, &b.center) + b.radius)
            .fold(0.0, f64::max)
    };
    let mut best = BoundingBall {
        center: balls[0].center.clone(),
        radius: radius_from(&balls[0].center),
    };
    let mut consider = |c: HPoint| {
        let r = radius_from(&c);
        if r < best.radius {
            best = BoundingBall { center: c, radius: r };
        }
    };
    for b in &balls[1..] {
        consider(b.center.clone());
    }
    // Midpoint of the two centres furthest apart, shifted for unequal radii.
    let mut far = (0, 0, 0.0);
    for i in 0..balls.len() {
        for j in i + 1..balls.len() {
            let d = space.distance(&balls[i].center, &balls[j].center);
            let span = d + balls[i].radius + balls[j].radius;
            if span > far.2 {
                far = (i, j, span);
            }
        }
    }
    if far.0 != far.1 {
        let (a, b) = (balls[far.0], balls[far.1]);
        let d = space.distance(&a.center, &b.center);
        if d > 0.0 {
            let t = (0.5 * (far.2) - a.radius) / d;
            consider(space.geodesic_at(&a.center, &b.center, t.clamp(0.0, 1.0)));
        }
    }
    best
}

/// Distance from `p` to `s`; zero when `p` is a member.
pub fn dist_to_set(p: &HPoint, s: &SetRep) -> f64 {
    s.dist(p)
}

/// The `delta`-neighbourhood of `s`.
pub fn delta_neighborhood(s: &SetRep, delta: f64) -> Result<SetRep> {
    SetRep::neighborhood(s, delta)
}

/// `m_rho` geodesic balls that all contain `common_point`.
///
/// Radii are uniform on `[0.5, spread]`; each centre sits at distance at most
/// `0.8·r` from the common point. Balls of curvature `−k²` have normal
/// curvature `k·coth(kr) > k`, so they are `λ`-convex whenever `λ ≤ k`.
pub fn make_lambda_convex_suite<R: Rng + ?Sized>(
    space: &ModelSpace,
    m_rho: usize,
    lambda: f64,
    common_point: &HPoint,
    spread: f64,
    rng: &mut R,
) -> Result<Vec<SetRep>> {
    if m_rho == 0 {
        return input("need at least one generator set");
    }
    if !(lambda > 0.0) {
        return input("lambda must be positive");
    }
    if lambda > space.curvature_scale() + 1e-12 {
        return Err(Error::Unsupported(format!(
            "lambda = {lambda} exceeds the curvature scale k = {}; balls are not lambda-convex",
            space.curvature_scale()
        )));
    }
    if !(spread.is_finite() && spread >= 0.5) {
        return input(format!("spread must be at least 0.5, got {spread}"));
    }
    (0..m_rho)
        .map(|_| {
            let r = 0.5 + (spread - 0.5) * rng.random::<f64>();
            let off = 0.8 * r * rng.random::<f64>();
            let u = space.random_unit_tangent(common_point, rng);
            SetRep::ball(*space, space.ray_point(&u, off), r)
        })
        .collect()
}

/// Approximate geodesic convex hull of `seeds`.
///
/// The support is grown from the seeds by inserting geodesic midpoints that lie
/// farther than the working spacing from every stored point. Spacing halves
/// from about `diam/16` down to `tol`. The coarsest level closes over all
/// pairs; finer levels close over pairs within four spacings, which is enough
/// to refine the previous level's cloud. A final pass checks random global
/// pairs and repairs any gap it finds. Every generated point is a midpoint of
/// hull points, so the cloud never leaves the hull.
///
/// Membership is `refined distance to the cloud ≤ 2·tol`.
pub fn geodesic_hull(space: &ModelSpace, seeds: &[HPoint], tol: f64) -> Result<SetRep> {
    if seeds.is_empty() {
        return input("hull needs at least one seed");
    }
    if !(tol.is_finite() && tol > 0.0) {
        return input(format!("hull tolerance must be positive, got {tol}"));
    }
    let seed_cloud = PointCloud::new(*space, seeds.to_vec())?;
    let (ia, ib, diam) = seed_cloud.diameter_pair();
    let center = space.midpoint(&seeds[ia], &seeds[ib]);
    let mut points: Vec<HPoint> = Vec::new();

    if diam > tol {
        let bridges = extreme_bridges(space, seeds, &center, tol);
        let mut levels = 0;
        while tol * 2f64.powi(levels) < diam / 16.0 && levels < 30 {
            levels += 1;
        }
        for level in (0..=levels).rev() {
            let t = tol * 2f64.powi(level);
            let mut grid = ChartGrid::new(*space, &center, 2.0 * t);
            for p in points.drain(..) {
                grid.insert(p);
            }
            for s in bridges.iter().chain(seeds) {
                grid.insert_if_separated(s.clone(), t);
            }
            if level == levels {
                close_all_pairs(space, &mut grid, t)?;
            } else {
                close_local_pairs(space, &mut grid, t, 4.0 * t, 0)?;
            }
            points = grid.into_points();
        }
        let mut grid = ChartGrid::new(*space, &center, 2.0 * tol);
        for p in points.drain(..) {
            grid.insert(p);
        }
        verify_global_pairs(space, &mut grid, tol)?;
        points = grid.into_points();
        // Seeds skipped by the thinning still belong to the support.
        let mut grid = ChartGrid::new(*space, &center, tol);
        for p in points.drain(..) {
            grid.insert(p);
        }
        for s in seeds {
            grid.insert_if_separated(s.clone(), 0.0);
        }
        points = grid.into_points();
    } else {
        points = seeds.to_vec();
    }

    let radius = points
        .iter()
        .map(|p| space.distance(&center, p))
        .fold(0.0, f64::max)
        + 2.0 * tol;
    Ok(SetRep {
        space: *space,
        support: Arc::new(PointCloud::new(*space, points)?),
        bounding: BoundingBall { center, radius },
        shape: Shape::Hull { tol },
    })
}

/// Hull vertices and the geodesic edges between neighbouring ones.
///
/// Seeds are mapped to Klein coordinates around `center`, where geodesics are
/// straight lines, so the geodesic hull is the Euclidean hull of the images. In
/// the plane the hull polygon is computed exactly. In higher dimensions every
/// vertex maximises some linear functional, and maximisers of nearby
/// directions are joined. Edges are dyadically subdivided; they lie in the hull
/// and bridge the shallow dents that purely local midpoint sweeps cannot reach.
fn extreme_bridges(space: &ModelSpace, seeds: &[HPoint], center: &HPoint, tol: f64) -> Vec<HPoint> {
    let k = space.curvature_scale();
    let dim = space.dim();
    let chart = space.chart(center);
    let klein: Vec<SmallVec<[f64; 4]>> = seeds
        .iter()
        .map(|p| {
            let y = chart.to_chart(p);
            let r = y.iter().map(|v| v * v).sum::<f64>().sqrt();
            let s = if r > 0.0 { (k * r).tanh() / r } else { k };
            y.iter().map(|v| v * s).collect()
        })
        .collect();
    let mut pairs: Vec<(usize, usize)> = Vec::new();
    if dim == 2 {
        let poly = planar_hull(&klein);
        for i in 0..poly.len() {
            let (a, b) = (poly[i], poly[(i + 1) % poly.len()]);
            if a != b {
                pairs.push((a.min(b), a.max(b)));
            }
        }
    } else {
        let argmax = |u: &[f64]| -> usize {
            let mut best = (f64::NEG_INFINITY, 0);
            for (i, x) in klein.iter().enumerate() {
                let v: f64 = x.iter().zip(u).map(|(a, b)| a * b).sum();
                if v > best.0 {
                    best = (v, i);
                }
            }
            best.1
        };
        let count = 4096 * (dim - 1);
        let mut rng = rng::substream(0x0b41_d9e5, dim as u64);
        let dirs: Vec<SmallVec<[f64; 4]>> =
            (0..count).map(|_| random_unit_vector(dim, &mut rng)).collect();
        let hits: Vec<usize> = dirs.iter().map(|u| argmax(u)).collect();
        // Join each direction's maximiser to those of its nearest directions.
        for i in 0..count {
            let mut near: Vec<(f64, usize)> = (0..count)
                .filter(|&j| j != i)
                .map(|j| (dirs[i].iter().zip(&dirs[j]).map(|(a, b)| a * b).sum::<f64>(), j))
                .collect();
            near.select_nth_unstable_by(2 * dim, |a, b| b.0.total_cmp(&a.0));
            for &(_, j) in &near[..2 * dim] {
                if hits[i] != hits[j] {
                    pairs.push((hits[i].min(hits[j]), hits[i].max(hits[j])));
                }
            }
        }
    }
    pairs.sort_unstable();
    pairs.dedup();
    let mut out = Vec::new();
    for (i, j) in pairs {
        dyadic_fill(space, &seeds[i], &seeds[j], tol, &mut out);
    }
    out
}

// Vertices of the planar convex hull in cyclic order (monotone chain).
fn planar_hull(pts: &[SmallVec<[f64; 4]>]) -> Vec<usize> {
    let cross = |o: usize, a: usize, b: usize| {
        (pts[a][0] - pts[o][0]) * (pts[b][1] - pts[o][1]) - (pts[a][1] - pts[o][1]) * (pts[b][0] - pts[o][0])
    };
    let mut idx: Vec<usize> = (0..pts.len()).collect();
    idx.sort_by(|&a, &b| pts[a][0].total_cmp(&pts[b][0]).then(pts[a][1].total_cmp(&pts[b][1])).then(a.cmp(&b)));
    if idx.len() < 3 {
        return idx;
    }
    let mut hull: Vec<usize> = Vec::with_capacity(2 * idx.len());
    for pass in 0..2 {
        let base = hull.len();
        for n in 0..idx.len() {
            let i = if pass == 0 { idx[n] } else { idx[idx.len() - 1 - n] };
            while hull.len() >= base + 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], i) <= 0.0 {
                hull.pop();
            }
            hull.push(i);
        }
        hull.pop();
    }
    hull
}

// Midpoints of [a, b] subdivided until pieces are shorter than `tol`.
fn dyadic_fill(space: &ModelSpace, a: &HPoint, b: &HPoint, tol: f64, out: &mut Vec<HPoint>) {
    if space.distance(a, b) <= tol {
        return;
    }
    let m = space.midpoint(a, b);
    dyadic_fill(space, a, &m, tol, out);
    out.push(m.clone());
    dyadic_fill(space, &m, b, tol, out);
}

fn check_cap(grid: &ChartGrid, t: f64) -> Result<()> {
    if grid.len() > MAX_CLOUD_POINTS {
        return Err(Error::Resource {
            what: "hull closure",
            reached: grid.len(),
            achieved_tol: 2.0 * t,
        });
    }
    Ok(())
}

fn close_all_pairs(space: &ModelSpace, grid: &mut ChartGrid, t: f64) -> Result<()> {
    let mut i = 0;
    while i < grid.len() {
        for l in 0..i {
            let m = space.midpoint(&grid.points()[i], &grid.points()[l]);
            grid.insert_if_separated(m, t);
        }
        check_cap(grid, t)?;
        i += 1;
    }
    Ok(())
}

// Processes each pair (i, l) with l < i and d ≤ reach exactly once, starting
// from index `from`; points appended meanwhile are processed in turn.
fn close_local_pairs(
    space: &ModelSpace,
    grid: &mut ChartGrid,
    t: f64,
    reach: f64,
    from: usize,
) -> Result<()> {
    let mut i = from;
    let mut near: Vec<usize> = Vec::new();
    while i < grid.len() {
        near.clear();
        grid.for_each_within(&grid.points()[i], reach, |l, d| {
            // Midpoints of closer pairs are within t of both ends already.
            if l < i && d > 2.0 * t {
                near.push(l);
            }
        });
        near.sort_unstable();
        for &l in &near {
            let m = space.midpoint(&grid.points()[i], &grid.points()[l]);
            grid.insert_if_separated(m, t);
        }
        check_cap(grid, t)?;
        i += 1;
    }
    Ok(())
}

fn verify_global_pairs(space: &ModelSpace, grid: &mut ChartGrid, tol: f64) -> Result<()> {
    let mut rng = rng::substream(0x4a11_5eed, grid.len() as u64);
    for _round in 0..8 {
        let start = grid.len();
        let n = grid.len();
        if n < 2 {
            return Ok(());
        }
        for _ in 0..20_000 {
            let i = rng.random_range(0..n);
            let l = rng.random_range(0..n);
            if i == l {
                continue;
            }
            let m = space.midpoint(&grid.points()[i], &grid.points()[l]);
            if !grid.any_within(&m, tol) {
                // Fill the whole segment, then re-close around the new points.
                let d = space.distance(&grid.points()[i], &grid.points()[l]);
                let steps = (d / tol).ceil() as usize;
                let (a, b) = (grid.points()[i].clone(), grid.points()[l].clone());
                for s in 1..steps {
                    let p = space.geodesic_at(&a, &b, s as f64 / steps as f64);
                    grid.insert_if_separated(p, tol);
                }
            }
        }
        if grid.len() == start {
            return Ok(());
        }
        close_local_pairs(space, grid, tol, 4.0 * tol, start)?;
        // Pairs between the new points and everything nearby.
        check_cap(grid, tol)?;
    }
    Ok(())
}

/// Parameters of the envelope `G = {g1 + g2 ≤ 1}` around a hull and a ray.
///
/// `g1 = 1 − e^{−a·dist(·, base)}` and `g2 = 1 − e^{−a·dist(·, ζ)}` where
/// `ζ(t) = exp(Q, t·dir)` for `t ∈ [0, ray_length]`.
#[derive(Debug, Clone)]
pub struct EnvelopeSpec {
    space: ModelSpace,
    base_hull: SetRep,
    ray: HTangent,
    decay: f64,
    ray_length: f64,
}

impl EnvelopeSpec {
    /// Validates that `ray_dir` is a unit vector at `ray_start` and that
    /// `decay` passes the feasibility test for `k1`.
    pub fn new(
        base_hull: SetRep,
        ray_start: &HPoint,
        ray_dir: &HTangent,
        decay: f64,
        k1: f64,
    ) -> Result<Self> {
        let space = base_hull.space;
        if space.distance(ray_dir.base(), ray_start) > 1e-9 {
            return input("ray direction is not based at the ray start");
        }
        if (ray_dir.norm() - 1.0).abs() > 1e-9 {
            return input("ray direction must be a unit vector");
        }
        if !(decay > 0.0) {
            return input(format!("decay must be positive, got {decay}"));
        }
        if !bounds::a_is_feasible(decay, k1) {
            return input(format!("decay a = {decay} is not feasible for k1 = {k1}"));
        }
        if space.curvature_scale() < k1 - 1e-12 {
            return Err(Error::Unsupported(format!(
                "model curvature scale {} is below k1 = {k1}",
                space.curvature_scale()
            )));
        }
        if !base_hull.bounding.radius.is_finite() {
            return Err(Error::Unsupported("envelope base must be bounded".into()));
        }
        Ok(EnvelopeSpec {
            space,
            base_hull,
            ray: ray_dir.clone(),
            decay,
            ray_length: DEFAULT_RAY_LENGTH,
        })
    }

    /// Envelope of `base` and the segment from the closest base point `Q` to `target`.
    pub fn towards(base: SetRep, target: &HPoint, decay: f64, k1: f64) -> Result<Self> {
        let space = base.space;
        if base.contains(target) {
            return input("target lies inside the base set");
        }
        let q = match &base.shape {
            Shape::Ball { center, radius } => {
                let u = space.log_map(center, target).unit().expect("target is outside");
                space.ray_point(&u, *radius)
            }
            _ => base.support.points()[base.support.nearest(target).0].clone(),
        };
        let v = space.log_map(&q, target);
        let len = v.norm();
        let dir = v.unit().ok_or_else(|| Error::Input("target coincides with the base".into()))?;
        EnvelopeSpec::new(base, &q, &dir, decay, k1)?.with_ray_length(len)
    }

    pub fn with_ray_length(mut self, len: f64) -> Result<Self> {
        if !(len.is_finite() && len > 0.0) {
            return input("ray length must be positive and finite");
        }
        self.ray_length = len;
        Ok(self)
    }

    pub fn space(&self) -> &ModelSpace {
        &self.space
    }

    pub fn base_hull(&self) -> &SetRep {
        &self.base_hull
    }

    pub fn ray_start(&self) -> &HPoint {
        self.ray.base()
    }

    pub fn ray_dir(&self) -> &HTangent {
        &self.ray
    }

    pub fn ray_end(&self) -> HPoint {
        self.space.ray_point(&self.ray, self.ray_length)
    }

    pub fn decay(&self) -> f64 {
        self.decay
    }

    pub fn ray_length(&self) -> f64 {
        self.ray_length
    }

    pub fn dist_base(&self, p: &HPoint) -> f64 {
        self.base_hull.dist(p)
    }

    pub fn dist_ray(&self, p: &HPoint) -> f64 {
        self.space.distance_to_geodesic(p, &self.ray, self.ray_length).0
    }

    pub fn g1(&self, p: &HPoint) -> f64 {
        -(-self.decay * self.dist_base(p)).exp_m1()
    }

    pub fn g2(&self, p: &HPoint) -> f64 {
        -(-self.decay * self.dist_ray(p)).exp_m1()
    }

    pub fn g(&self, p: &HPoint) -> f64 {
        self.g1(p) + self.g2(p)
    }

    pub fn contains(&self, p: &HPoint) -> bool {
        self.g(p) <= 1.0
    }

    /// Every member is within `ln 2 / a` of the base or the ray, since
    /// otherwise both terms exceed ½.
    pub fn bounding_ball(&self) -> BoundingBall {
        let c = &self.base_hull.bounding.center;
        let reach = self
            .base_hull
            .bounding
            .radius
            .max(self.space.distance(c, self.ray_start()))
            .max(self.space.distance(c, &self.ray_end()));
        BoundingBall {
            center: c.clone(),
            radius: reach + LN_2 / self.decay,
        }
    }

    /// Last member point along `exp(Q, t·u)`, by bisection.
    pub fn boundary_along(&self, u: &HTangent) -> HPoint {
        let b = self.bounding_ball();
        let mut hi = self.space.distance(&b.center, self.ray_start()) + b.radius;
        let mut lo = 0.0;
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if self.contains(&self.space.ray_point(u, mid)) {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo < 1e-12 {
                break;
            }
        }
        self.space.ray_point(u, lo)
    }

    /// The envelope as a [`SetRep`], with a boundary cloud of roughly the
    /// given spacing for distance queries.
    pub fn to_set(&self, spacing: f64) -> Result<SetRep> {
        if !(spacing.is_finite() && spacing > 0.0) {
            return input("boundary spacing must be positive");
        }
        let space = self.space;
        let q = self.ray_start();
        let mut pts = vec![q.clone(), self.ray_end()];
        if space.dim() == 2 {
            let at = |th: f64| self.boundary_along(&space.frame_vector(q, &[th.cos(), th.sin()]));
            let base_count = 256;
            let mut stack: Vec<(f64, f64, HPoint, HPoint, u32)> = Vec::new();
            let angles: Vec<f64> = (0..=base_count)
                .map(|i| std::f64::consts::TAU * i as f64 / base_count as f64)
                .collect();
            let ends: Vec<HPoint> = angles.iter().map(|&th| at(th)).collect();
            for i in 0..base_count {
                stack.push((angles[i], angles[i + 1], ends[i].clone(), ends[i + 1].clone(), 0));
            }
            while let Some((a, b, pa, pb, depth)) = stack.pop() {
                pts.push(pa.clone());
                if space.distance(&pa, &pb) > spacing && depth < 30 {
                    let mid = 0.5 * (a + b);
                    let pm = at(mid);
                    stack.push((mid, b, pm.clone(), pb, depth + 1));
                    stack.push((a, mid, pa, pm, depth + 1));
                }
                if pts.len() > MAX_CLOUD_POINTS {
                    return Err(cloud_cap(spacing));
                }
            }
        } else {
            let b = self.bounding_ball();
            let kr = space.curvature_scale() * b.radius;
            let area = (kr.sinh() / space.curvature_scale()).powi(space.dim() as i32 - 1);
            let count = ((4.0 * area / spacing.powi(space.dim() as i32 - 1)).ceil() as usize)
                .clamp(1024, 200_000);
            let mut rng = rng::substream(0x0e0e_109e, space.dim() as u64);
            for _ in 0..count {
                let u = random_unit_vector(space.dim(), &mut rng);
                pts.push(self.boundary_along(&space.frame_vector(q, &u)));
            }
        }
        Ok(SetRep {
            space,
            support: Arc::new(PointCloud::new(space, pts)?),
            bounding: self.bounding_ball(),
            shape: Shape::Envelope(Box::new(self.clone())),
        })
    }

    /// Numerical gradient of `g` at `p`, as a tangent vector.
    pub fn gradient(&self, p: &HPoint, h: f64) -> HTangent {
        let n = self.space.dim();
        let mut grad = self.space.zero_tangent(p);
        let mut acc: SmallVec<[f64; 4]> = SmallVec::from_elem(0.0, n + 1);
        for i in 0..n {
            let mut e = vec![0.0; n];
            e[i] = 1.0;
            let v = self.space.frame_vector(p, &e);
            let fp = self.g(&self.space.ray_point(&v, h));
            let fm = self.g(&self.space.ray_point(&v, -h));
            let c = (fp - fm) / (2.0 * h);
            for (a, x) in acc.iter_mut().zip(v.vec()) {
                *a += c * x;
            }
        }
        if let Ok(t) = self.space.tangent(p, &acc) {
            grad = t;
        }
        grad
    }
}

impl EnvelopeSpec {
    /// Component of `x` tangent to the level set of `g` through `x.base()`,
    /// normalised. `None` when `x` is parallel to the gradient.
    pub fn level_tangent(&self, x: &HTangent) -> Option<HTangent> {
        let grad = self.gradient(x.base(), 1e-6).unit()?;
        let c = x.inner(&grad);
        let v: SmallVec<[f64; 4]> = x.vec().iter().zip(grad.vec()).map(|(a, b)| a - c * b).collect();
        self.space.tangent(x.base(), &v).ok()?.unit()
    }
}

/// Central second difference of `g1 + g2` along the geodesic through `p` with
/// unit velocity `x`.
pub fn second_difference_probe(env: &EnvelopeSpec, p: &HPoint, x: &HTangent, h: f64) -> Result<f64> {
    let g0 = env.g(p);
    if (g0 - 1.0).abs() > 1e-3 {
        return input(format!("point is not on the envelope boundary (g = {g0})"));
    }
    if !(1e-4..=1e-2).contains(&h) {
        return input(format!("step {h} outside [1e-4, 1e-2]"));
    }
    let space = env.space;
    if space.distance(x.base(), p) > 1e-9 || (x.norm() - 1.0).abs() > 1e-9 {
        return input("direction must be a unit vector at the probe point");
    }
    let gp = env.g(&space.ray_point(x, h));
    let gm = env.g(&space.ray_point(x, -h));
    Ok((gp - 2.0 * g0 + gm) / (h * h))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvexityReport {
    pub pairs: usize,
    pub violations: usize,
    pub worst_depth: f64,
}

/// Tests [`PROBE_INTERIOR_POINTS`] interior points on each of `trials` member
/// pairs. Half the pairs come from rejection sampling in the bounding ball and
/// half from the support cloud. An interior point counts as a violation when it
/// is not a member and lies deeper than [`PROBE_DEPTH_TOL`] outside.
pub fn convexity_probe<R: Rng + ?Sized>(
    space: &ModelSpace,
    s: &SetRep,
    trials: usize,
    rng: &mut R,
) -> Result<ConvexityReport> {
    if trials == 0 {
        return input("need at least one trial");
    }
    if s.space != *space {
        return input("set lives in a different space");
    }
    let root = rng::draw_root(rng);
    let parts = rng::par_chunks(root, trials, |r: &mut StreamRng, count| {
        let mut v = 0;
        let mut worst: f64 = 0.0;
        let mut done = 0;
        for i in 0..count {
            let pick = |r: &mut StreamRng| -> Option<HPoint> {
                if i % 2 == 0 {
                    if let Some(p) = s.sample_member(r, 10_000) {
                        return Some(p);
                    }
                }
                let pts = s.support.points();
                Some(pts[r.random_range(0..pts.len())].clone())
            };
            let (Some(p), Some(q)) = (pick(r), pick(r)) else { continue };
            done += 1;
            for j in 1..=PROBE_INTERIOR_POINTS {
                let t = j as f64 / (PROBE_INTERIOR_POINTS + 1) as f64;
                let x = space.geodesic_at(&p, &q, t);
                if !s.contains(&x) {
                    let d = s.dist(&x);
                    if d > PROBE_DEPTH_TOL {
                        v += 1;
                        worst = worst.max(d);
                    }
                }
            }
        }
        (done, v, worst)
    });
    let (pairs, violations, worst_depth) = parts
        .into_iter()
        .fold((0, 0, 0.0f64), |a, b| (a.0 + b.0, a.1 + b.1, a.2.max(b.2)));
    Ok(ConvexityReport {
        pairs,
        violations,
        worst_depth,
    })
}

/// Largest distance from a hull point to `t_set`: every support point of the
/// hull plus `probes` rejection samples of hull members.
pub fn hull_gap<R: Rng + ?Sized>(
    space: &ModelSpace,
    t_set: &SetRep,
    hull: &SetRep,
    probes: usize,
    rng: &mut R,
) -> Result<f64> {
    if hull.space != *space || t_set.space != *space {
        return input("sets live in different spaces");
    }
    use rayon::prelude::*;
    let support_gap = hull
        .support
        .points()
        .par_iter()
        .map(|p| t_set.dist(p))
        .reduce(|| 0.0, f64::max);
    let root = rng::draw_root(rng);
    let probe_gap = rng::par_chunks(root, probes, |r, count| {
        (0..count)
            .filter_map(|_| hull.sample_member(r, 1_000))
            .map(|p| t_set.dist(&p))
            .fold(0.0, f64::max)
    })
    .into_iter()
    .fold(0.0, f64::max);
    Ok(support_gap.max(probe_gap))
}

/// Deterministic generator for internal sampling that must not consume the caller's stream.
pub(crate) fn internal_rng(tag: u64) -> StreamRng {
    StreamRng::seed_from_u64(tag)
}
