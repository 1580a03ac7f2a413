//! Constant-curvature hyperboloid model.
//!
//! A point of the `n`-dimensional model with sectional curvature `-k²` is a
//! vector `x ∈ R^{n+1}` with `⟨x, x⟩ = -1/k²` and `x₀ > 0`, where `⟨·,·⟩` is the
//! Minkowski form of signature `(-, +, …, +)`. Distances, geodesics and the
//! exponential/logarithm maps are all closed form in this model.
//!
//! Every operation that produces a point re-projects it onto the sheet by
//! recomputing `x₀` from the spatial coordinates.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use smallvec::SmallVec;

use crate::error::{input, Error, Result};
use crate::quadrature;

/// Inline storage for `n + 1` Minkowski coordinates; spills to the heap above `n = 3`.
pub type Coords = SmallVec<[f64; 4]>;

/// Tolerance on the (relative) hyperboloid constraint and tangency residuals.
pub const CONSTRAINT_TOL: f64 = 1e-9;

/// Number of nodes in the radial inverse-CDF table used for uniform ball sampling.
pub const RADIAL_TABLE_SIZE: usize = 4096;

/// Minkowski bilinear form `-x₀y₀ + Σ_{i≥1} xᵢyᵢ`.
pub fn minkowski_form(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return input(format!("length mismatch: {} vs {}", x.len(), y.len()));
    }
    if x.len() < 3 {
        return input(format!("need at least 3 coordinates, got {}", x.len()));
    }
    Ok(mink(x, y))
}

#[inline]
pub(crate) fn mink(x: &[f64], y: &[f64]) -> f64 {
    let mut acc = -x[0] * y[0];
    for i in 1..x.len() {
        acc += x[i] * y[i];
    }
    acc
}

/// The hyperbolic space `H^n` of constant sectional curvature `-k²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelSpace {
    dim: usize,
    k: f64,
}

/// A point on the hyperboloid sheet of some [`ModelSpace`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HPoint(Coords);

/// A tangent vector `vec` at `base`, Minkowski-orthogonal to `base`.
#[derive(Debug, Clone, PartialEq)]
pub struct HTangent {
    base: HPoint,
    vec: Coords,
}

impl HPoint {
    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    /// Spatial part `(x₁, …, xₙ)`.
    pub fn spatial(&self) -> &[f64] {
        &self.0[1..]
    }
}

impl HTangent {
    pub fn base(&self) -> &HPoint {
        &self.base
    }

    pub fn vec(&self) -> &[f64] {
        &self.vec
    }

    /// Riemannian length `sqrt(⟨v, v⟩)`.
    pub fn norm(&self) -> f64 {
        mink(&self.vec, &self.vec).max(0.0).sqrt()
    }

    pub fn scaled(&self, t: f64) -> HTangent {
        HTangent {
            base: self.base.clone(),
            vec: self.vec.iter().map(|v| v * t).collect(),
        }
    }

    /// Unit vector in the same direction; `None` for the zero vector.
    pub fn unit(&self) -> Option<HTangent> {
        let n = self.norm();
        (n > 0.0).then(|| self.scaled(1.0 / n))
    }

    /// Riemannian inner product with another vector at the same base.
    pub fn inner(&self, other: &HTangent) -> f64 {
        mink(&self.vec, &other.vec)
    }
}

impl ModelSpace {
    pub fn new(dim: usize, curvature_scale: f64) -> Result<Self> {
        if dim < 2 {
            return input(format!("dimension must be at least 2, got {dim}"));
        }
        if !(curvature_scale.is_finite() && curvature_scale > 0.0) {
            return input(format!("curvature scale must be positive, got {curvature_scale}"));
        }
        Ok(ModelSpace {
            dim,
            k: curvature_scale,
        })
    }

    /// The standard hyperbolic plane (`n = 2`, `k = 1`).
    pub fn plane() -> Self {
        ModelSpace { dim: 2, k: 1.0 }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn curvature_scale(&self) -> f64 {
        self.k
    }

    pub fn sectional_curvature(&self) -> f64 {
        -self.k * self.k
    }

    /// `(1/k, 0, …, 0)`.
    pub fn origin(&self) -> HPoint {
        let mut c = Coords::from_elem(0.0, self.dim + 1);
        c[0] = 1.0 / self.k;
        HPoint(c)
    }

    /// Lifts spatial coordinates onto the sheet.
    pub fn lift(&self, spatial: &[f64]) -> Result<HPoint> {
        if spatial.len() != self.dim {
            return input(format!(
                "expected {} spatial coordinates, got {}",
                self.dim,
                spatial.len()
            ));
        }
        if spatial.iter().any(|v| !v.is_finite()) {
            return input("non-finite coordinate");
        }
        let mut c = Coords::with_capacity(self.dim + 1);
        c.push(0.0);
        c.extend_from_slice(spatial);
        Ok(self.reproject(c))
    }

    /// Validates full Minkowski coordinates and re-projects them onto the sheet.
    pub fn point(&self, coords: &[f64]) -> Result<HPoint> {
        if coords.len() != self.dim + 1 {
            return input(format!(
                "expected {} coordinates, got {}",
                self.dim + 1,
                coords.len()
            ));
        }
        if coords.iter().any(|v| !v.is_finite()) {
            return input("non-finite coordinate");
        }
        if coords[0] <= 0.0 {
            return input("point lies on the lower sheet (x0 <= 0)");
        }
        let residual = self.constraint_residual(coords);
        if residual > CONSTRAINT_TOL {
            return Err(Error::NumericalDomain {
                what: "hyperboloid constraint",
                value: residual,
            });
        }
        Ok(self.reproject(Coords::from_slice(coords)))
    }

    /// `|k²⟨x,x⟩ + 1|`, normalised by `max(1, (k x₀)²)` so the check is
    /// meaningful far from the origin where coordinates grow like `e^{kr}`.
    pub fn constraint_residual(&self, coords: &[f64]) -> f64 {
        let k2 = self.k * self.k;
        let raw = (k2 * mink(coords, coords) + 1.0).abs();
        raw / (k2 * coords[0] * coords[0]).max(1.0)
    }

    /// Unnormalised residual `|⟨x,x⟩ + 1/k²|`.
    pub fn raw_constraint_residual(&self, p: &HPoint) -> f64 {
        (mink(&p.0, &p.0) + 1.0 / (self.k * self.k)).abs()
    }

    fn reproject(&self, mut c: Coords) -> HPoint {
        let s: f64 = c[1..].iter().map(|v| v * v).sum();
        c[0] = (1.0 / (self.k * self.k) + s).sqrt();
        HPoint(c)
    }

    /// Geodesic distance. Uses `d = (2/k) asinh(k‖q−p‖/2)` with the
    /// Minkowski norm of the chord, which stays accurate for nearby points
    /// where `arccosh` loses half its digits.
    pub fn distance(&self, p: &HPoint, q: &HPoint) -> f64 {
        chord_distance(self.k, &p.0, &q.0)
    }

    /// Distance between raw coordinate vectors, rejecting inputs whose
    /// `arccosh` argument `-k²⟨x,y⟩` falls below 1 by more than the tolerance.
    pub fn checked_distance(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        let form = minkowski_form(x, y)?;
        if x.len() != self.dim + 1 {
            return input("coordinate length does not match the model dimension");
        }
        let k2 = self.k * self.k;
        let arg = -k2 * form;
        let scale = (k2 * x[0].abs() * y[0].abs()).max(1.0);
        if arg < 1.0 - CONSTRAINT_TOL * scale || !arg.is_finite() {
            return Err(Error::NumericalDomain {
                what: "arccosh argument below 1",
                value: arg,
            });
        }
        Ok(chord_distance(self.k, x, y))
    }

    /// Projects an ambient vector onto the tangent space at `base`.
    pub fn tangent(&self, base: &HPoint, vec: &[f64]) -> Result<HTangent> {
        if vec.len() != self.dim + 1 {
            return input(format!(
                "expected {} tangent coordinates, got {}",
                self.dim + 1,
                vec.len()
            ));
        }
        Ok(self.project_tangent(base, Coords::from_slice(vec)))
    }

    fn project_tangent(&self, base: &HPoint, mut v: Coords) -> HTangent {
        let c = self.k * self.k * mink(&v, &base.0);
        for (vi, bi) in v.iter_mut().zip(base.0.iter()) {
            *vi += c * bi;
        }
        HTangent {
            base: base.clone(),
            vec: v,
        }
    }

    pub fn zero_tangent(&self, base: &HPoint) -> HTangent {
        HTangent {
            base: base.clone(),
            vec: Coords::from_elem(0.0, self.dim + 1),
        }
    }

    /// Point reached after time 1 along the geodesic with initial velocity `v`.
    pub fn exp_map(&self, v: &HTangent) -> HPoint {
        let s = v.norm();
        if s == 0.0 {
            return v.base.clone();
        }
        let ks = self.k * s;
        let a = ks.cosh();
        let b = ks.sinh() / ks;
        let c: Coords = v
            .base
            .0
            .iter()
            .zip(v.vec.iter())
            .map(|(x, u)| a * x + b * u)
            .collect();
        self.reproject(c)
    }

    /// Inverse of [`exp_map`](Self::exp_map): the tangent at `base` pointing
    /// at `target` with length `distance(base, target)`.
    pub fn log_map(&self, base: &HPoint, target: &HPoint) -> HTangent {
        let k = self.k;
        let w: Coords = target.0.iter().zip(base.0.iter()).map(|(q, p)| q - p).collect();
        let w2 = mink(&w, &w).max(0.0);
        if w2 == 0.0 {
            return self.zero_tangent(base);
        }
        // cosh(kd) - 1 = k²⟨w,w⟩/2, so the tangential part of `target` is w - (cosh(kd) - 1)·base.
        let c = 0.5 * k * k * w2;
        let d = 2.0 / k * (0.5 * k * w2.sqrt()).asinh();
        let kd = k * d;
        let scale = if kd > 0.0 { kd / kd.sinh() } else { 1.0 };
        let u: Coords = w
            .iter()
            .zip(base.0.iter())
            .map(|(wi, bi)| (wi - c * bi) * scale)
            .collect();
        self.project_tangent(base, u)
    }

    /// `exp_map(p, t · log_map(p, q))` for `t ∈ [0, 1]`.
    pub fn geodesic_point(&self, p: &HPoint, q: &HPoint, t: f64) -> Result<HPoint> {
        if !(0.0..=1.0).contains(&t) {
            return input(format!("geodesic parameter {t} outside [0, 1]"));
        }
        Ok(self.geodesic_at(p, q, t))
    }

    /// Unchecked variant of [`geodesic_point`](Self::geodesic_point); `t` may leave `[0, 1]`.
    pub(crate) fn geodesic_at(&self, p: &HPoint, q: &HPoint, t: f64) -> HPoint {
        if t == 0.0 {
            return p.clone();
        }
        self.exp_map(&self.log_map(p, q).scaled(t))
    }

    /// Geodesic midpoint: the normalised Minkowski sum `(p + q)/(k·sqrt(-⟨p+q, p+q⟩))`.
    pub fn midpoint(&self, p: &HPoint, q: &HPoint) -> HPoint {
        let s: Coords = p.0.iter().zip(q.0.iter()).map(|(a, b)| a + b).collect();
        let norm = (-mink(&s, &s)).max(f64::MIN_POSITIVE).sqrt() * self.k;
        self.reproject(s.into_iter().map(|v| v / norm).collect())
    }

    /// Point `exp(start, t·dir)` on the geodesic through `start` with unit velocity `dir`.
    pub fn ray_point(&self, dir: &HTangent, t: f64) -> HPoint {
        self.exp_map(&dir.scaled(t))
    }

    /// Distance from `p` to the geodesic piece `{exp(start, t·dir) : t ∈ [0, len]}`
    /// for a unit `dir` at `start`, together with the minimising parameter.
    ///
    /// Along the geodesic, `cosh(k·d(p, ζ(t))) = A cosh(kt) − B sinh(kt)` with
    /// `A = −k²⟨p, start⟩` and `B = k⟨p, dir⟩`, minimised at `tanh(kt) = B/A`.
    pub fn distance_to_geodesic(&self, p: &HPoint, dir: &HTangent, len: f64) -> (f64, f64) {
        let k = self.k;
        let a = -k * k * mink(&p.0, &dir.base.0);
        let b = k * mink(&p.0, &dir.vec);
        let ratio = (b / a).clamp(-1.0, 1.0);
        let t = if ratio >= 1.0 {
            len
        } else if ratio <= -1.0 {
            0.0
        } else {
            (ratio.atanh() / k).clamp(0.0, len)
        };
        (self.distance(p, &self.ray_point(dir, t)), t)
    }

    /// Distance from `p` to the geodesic segment `[a, b]`.
    pub fn distance_to_segment(&self, p: &HPoint, a: &HPoint, b: &HPoint) -> f64 {
        let v = self.log_map(a, b);
        let len = v.norm();
        match v.unit() {
            Some(u) => self.distance_to_geodesic(p, &u, len).0,
            None => self.distance(p, a),
        }
    }

    /// Applies the Lorentz boost that carries the origin to `center`.
    pub(crate) fn boost(&self, center: &HPoint, x: &[f64], inverse: bool) -> Coords {
        let k = self.k;
        let c0 = k * center.0[0];
        let sign = if inverse { -1.0 } else { 1.0 };
        let cs = &center.0[1..];
        let x0 = x[0];
        let xs = &x[1..];
        let dot: f64 = cs.iter().zip(xs).map(|(c, v)| sign * k * c * v).sum();
        let mut out = Coords::with_capacity(x.len());
        out.push(c0 * x0 + dot);
        let f = x0 + dot / (1.0 + c0);
        for (c, v) in cs.iter().zip(xs) {
            out.push(v + sign * k * c * f);
        }
        out
    }

    /// Carries a vector `u ∈ R^n` of the origin's tangent space (an orthonormal
    /// frame) to the tangent space at `base`, isometrically.
    pub fn frame_vector(&self, base: &HPoint, u: &[f64]) -> HTangent {
        debug_assert_eq!(u.len(), self.dim);
        let mut x = Coords::with_capacity(self.dim + 1);
        x.push(0.0);
        x.extend_from_slice(u);
        let v = self.boost(base, &x, false);
        self.project_tangent(base, v)
    }

    /// Uniformly distributed unit tangent vector at `base`.
    pub fn random_unit_tangent<R: Rng + ?Sized>(&self, base: &HPoint, rng: &mut R) -> HTangent {
        let u = random_unit_vector(self.dim, rng);
        self.frame_vector(base, &u)
    }

    /// Normal coordinates centred at `center`: the log map in the boosted frame.
    pub fn chart(&self, center: &HPoint) -> NormalChart {
        NormalChart {
            space: *self,
            center: center.clone(),
        }
    }

    /// Builds a reusable sampler for the uniform distribution on `B(center, r)`.
    pub fn ball_sampler(&self, center: &HPoint, r: f64) -> Result<BallSampler> {
        BallSampler::new(*self, center.clone(), r)
    }

    /// One uniform draw from `B(center, r)`. Builds a fresh radial table; use
    /// [`ball_sampler`](Self::ball_sampler) for repeated draws.
    pub fn sample_ball_uniform<R: Rng + ?Sized>(
        &self,
        center: &HPoint,
        r: f64,
        rng: &mut R,
    ) -> Result<HPoint> {
        Ok(self.ball_sampler(center, r)?.sample(rng))
    }
}

#[inline]
fn chord_distance(k: f64, x: &[f64], y: &[f64]) -> f64 {
    let mut s = -(x[0] - y[0]) * (x[0] - y[0]);
    for i in 1..x.len() {
        let d = x[i] - y[i];
        s += d * d;
    }
    if s <= 0.0 {
        return 0.0;
    }
    2.0 / k * (0.5 * k * s.sqrt()).asinh()
}

pub(crate) fn random_unit_vector<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> SmallVec<[f64; 4]> {
    loop {
        let u: SmallVec<[f64; 4]> = (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let n = u.iter().map(|v| v * v).sum::<f64>().sqrt();
        if n > 1e-12 {
            return u.into_iter().map(|v| v / n).collect();
        }
    }
}

/// Normal (Riemannian-exponential) coordinates around a centre point.
///
/// In nonpositive curvature the log map is 1-Lipschitz, so the Euclidean
/// distance between chart images never exceeds the geodesic distance. Spatial
/// indexes rely on that.
#[derive(Debug, Clone)]
pub struct NormalChart {
    space: ModelSpace,
    center: HPoint,
}

impl NormalChart {
    pub fn center(&self) -> &HPoint {
        &self.center
    }

    pub fn to_chart(&self, p: &HPoint) -> SmallVec<[f64; 4]> {
        let k = self.space.k;
        let x = self.space.boost(&self.center, &p.0, true);
        let s = x[1..].iter().map(|v| v * v).sum::<f64>().sqrt();
        if s == 0.0 {
            return SmallVec::from_elem(0.0, self.space.dim);
        }
        let d = (k * s).asinh() / k;
        x[1..].iter().map(|v| v * d / s).collect()
    }

    pub fn from_chart(&self, y: &[f64]) -> HPoint {
        let k = self.space.k;
        let r = y.iter().map(|v| v * v).sum::<f64>().sqrt();
        let mut x = Coords::with_capacity(y.len() + 1);
        x.push((k * r).cosh() / k);
        let f = if r > 0.0 { (k * r).sinh() / (k * r) } else { 1.0 };
        x.extend(y.iter().map(|v| v * f));
        let c = self.space.boost(&self.center, &x, false);
        self.space.reproject(c)
    }
}

/// Inverse-CDF sampler for the uniform (Riemannian volume) distribution on a ball.
///
/// The radial density is proportional to `(sinh(kt)/k)^{n-1}`; its CDF is
/// tabulated on [`RADIAL_TABLE_SIZE`] equally spaced radii and inverted by
/// linear interpolation.
#[derive(Debug, Clone)]
pub struct BallSampler {
    space: ModelSpace,
    center: HPoint,
    radius: f64,
    cdf: Vec<f64>,
}

impl BallSampler {
    fn new(space: ModelSpace, center: HPoint, radius: f64) -> Result<Self> {
        if !(radius.is_finite() && radius > 0.0) {
            return input(format!("ball radius must be positive and finite, got {radius}"));
        }
        let n = RADIAL_TABLE_SIZE;
        let h = radius / (n - 1) as f64;
        let k = space.k;
        let exponent = (space.dim - 1) as i32;
        let density = |t: f64| ((k * t).sinh() / k).powi(exponent);
        let mut cdf = Vec::with_capacity(n);
        cdf.push(0.0);
        let mut acc = 0.0;
        for i in 1..n {
            acc += quadrature::gauss_legendre_8(density, (i - 1) as f64 * h, i as f64 * h);
            cdf.push(acc);
        }
        for v in cdf.iter_mut() {
            *v /= acc;
        }
        Ok(BallSampler {
            space,
            center,
            radius,
            cdf,
        })
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn center(&self) -> &HPoint {
        &self.center
    }

    /// Radius whose CDF value is `u`.
    pub fn radial_quantile(&self, u: f64) -> f64 {
        let n = self.cdf.len();
        let h = self.radius / (n - 1) as f64;
        let i = self.cdf.partition_point(|&c| c <= u).clamp(1, n - 1);
        let (c0, c1) = (self.cdf[i - 1], self.cdf[i]);
        let frac = if c1 > c0 { (u - c0) / (c1 - c0) } else { 0.0 };
        ((i - 1) as f64 + frac.clamp(0.0, 1.0)) * h
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> HPoint {
        let t = self.radial_quantile(rng.random::<f64>());
        let dir = self.space.random_unit_tangent(&self.center, rng);
        let p = self.space.exp_map(&dir.scaled(t));
        // Rounding can push a point a hair past the rim.
        if self.space.distance(&self.center, &p) > self.radius {
            self.space.geodesic_at(&self.center, &p, 1.0 - 1e-12)
        } else {
            p
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_point(space: &ModelSpace, radius: f64, rng: &mut ChaCha8Rng) -> HPoint {
        let o = space.origin();
        let r = radius * rng.random::<f64>();
        space.exp_map(&space.random_unit_tangent(&o, rng).scaled(r))
    }

    #[test]
    fn minkowski_form_basis_identities() {
        assert_eq!(minkowski_form(&[1.0, 0.0, 0.0], &[1.0, 0.0, 0.0]).unwrap(), -1.0);
        assert_eq!(minkowski_form(&[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0]).unwrap(), 0.0);
        let x = [1f64.cosh(), 1f64.sinh(), 0.0];
        assert_abs_diff_eq!(minkowski_form(&x, &x).unwrap(), -1.0, epsilon = 1e-15);
        assert!(minkowski_form(&[1.0, 0.0], &[1.0, 0.0, 0.0]).is_err());
        assert!(minkowski_form(&[1.0, 0.0], &[1.0, 0.0]).is_err());
    }

    #[test]
    fn distance_hand_values() {
        let h = ModelSpace::plane();
        let p = h.point(&[1.0, 0.0, 0.0]).unwrap();
        let q = h.point(&[1f64.cosh(), 1f64.sinh(), 0.0]).unwrap();
        assert_eq!(h.distance(&p, &p), 0.0);
        assert_abs_diff_eq!(h.distance(&p, &q), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(h.distance(&q, &p), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn checked_distance_rejects_domain_violations() {
        let h = ModelSpace::plane();
        // Same sheet, valid.
        assert!(h.checked_distance(&[1.0, 0.0, 0.0], &[1.0, 0.0, 0.0]).is_ok());
        // ⟨x,y⟩ = 0 gives an arccosh argument of 0.
        let err = h.checked_distance(&[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0]).unwrap_err();
        assert!(matches!(err, Error::NumericalDomain { .. }));
    }

    #[test]
    fn point_validation() {
        let h = ModelSpace::plane();
        assert!(h.point(&[1.0, 0.0]).is_err());
        assert!(h.point(&[-1.0, 0.0, 0.0]).is_err());
        assert!(h.point(&[2.0, 0.0, 0.0]).is_err());
        assert!(ModelSpace::new(1, 1.0).is_err());
        assert!(ModelSpace::new(2, 0.0).is_err());
        let s = ModelSpace::new(3, 2.0).unwrap();
        assert_abs_diff_eq!(s.origin().coords()[0], 0.5);
        assert_eq!(s.sectional_curvature(), -4.0);
    }

    #[test]
    fn exp_of_zero_is_base_and_log_of_self_is_zero() {
        let h = ModelSpace::new(3, 1.5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = random_point(&h, 2.0, &mut rng);
        assert_eq!(h.exp_map(&h.zero_tangent(&p)), p);
        assert_eq!(h.log_map(&p, &p).norm(), 0.0);
    }

    #[test]
    fn geodesic_endpoints_and_midpoint() {
        let h = ModelSpace::plane();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let p = random_point(&h, 3.0, &mut rng);
            let q = random_point(&h, 3.0, &mut rng);
            assert_eq!(h.geodesic_point(&p, &q, 0.0).unwrap(), p);
            let end = h.geodesic_point(&p, &q, 1.0).unwrap();
            assert!(h.distance(&end, &q) < 1e-9);
            let m = h.geodesic_point(&p, &q, 0.5).unwrap();
            assert_abs_diff_eq!(h.distance(&p, &m), h.distance(&m, &q), epsilon = 1e-9);
        }
        let p = h.origin();
        assert!(h.geodesic_point(&p, &p, 1.5).is_err());
        assert!(h.geodesic_point(&p, &p, -0.1).is_err());
    }

    #[test]
    fn segment_distance_matches_dense_sampling() {
        let h = ModelSpace::new(2, 1.3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..100 {
            let a = random_point(&h, 2.0, &mut rng);
            let b = random_point(&h, 2.0, &mut rng);
            let p = random_point(&h, 3.0, &mut rng);
            let dense = (0..=4000)
                .map(|i| h.distance(&p, &h.geodesic_at(&a, &b, i as f64 / 4000.0)))
                .fold(f64::INFINITY, f64::min);
            let got = h.distance_to_segment(&p, &a, &b);
            assert!(got <= dense + 1e-12);
            assert!(dense - got < 1e-4, "{got} vs {dense}");
        }
    }

    #[test]
    fn midpoint_is_equidistant_and_on_the_segment() {
        let h = ModelSpace::new(3, 0.8).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        for _ in 0..100 {
            let p = random_point(&h, 4.0, &mut rng);
            let q = random_point(&h, 4.0, &mut rng);
            let m = h.midpoint(&p, &q);
            let d = h.distance(&p, &q);
            assert_abs_diff_eq!(h.distance(&p, &m), d / 2.0, epsilon = 1e-9);
            assert_abs_diff_eq!(h.distance(&q, &m), d / 2.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn chart_round_trip_and_lipschitz() {
        let h = ModelSpace::new(3, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let c = random_point(&h, 1.0, &mut rng);
        let chart = h.chart(&c);
        for _ in 0..200 {
            let p = random_point(&h, 3.0, &mut rng);
            let q = random_point(&h, 3.0, &mut rng);
            let (yp, yq) = (chart.to_chart(&p), chart.to_chart(&q));
            assert!(h.distance(&chart.from_chart(&yp), &p) < 1e-9);
            let e: f64 = yp.iter().zip(&yq).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            assert!(e <= h.distance(&p, &q) + 1e-9);
            // The chart norm is the distance to the centre.
            let n = yp.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert_abs_diff_eq!(n, h.distance(&c, &p), epsilon = 1e-9);
        }
    }

    #[test]
    fn frame_vectors_are_orthonormal() {
        let h = ModelSpace::new(3, 0.7).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let b = random_point(&h, 2.0, &mut rng);
        let e: Vec<_> = (0..3)
            .map(|i| {
                let mut u = [0.0; 3];
                u[i] = 1.0;
                h.frame_vector(&b, &u)
            })
            .collect();
        for i in 0..3 {
            assert!(mink(e[i].vec(), b.coords()).abs() < 1e-9);
            for j in 0..3 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert_abs_diff_eq!(e[i].inner(&e[j]), want, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn sampler_stays_inside_and_has_expected_mean_radius() {
        let h = ModelSpace::plane();
        let o = h.origin();
        let sampler = h.ball_sampler(&o, 2.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 100_000;
        let mut sum = 0.0;
        for _ in 0..n {
            let p = sampler.sample(&mut rng);
            let d = h.distance(&o, &p);
            assert!(d <= 2.0);
            sum += d;
        }
        // ∫₀² t sinh t dt / ∫₀² sinh t dt = (2 cosh 2 − sinh 2)/(cosh 2 − 1).
        let want = (2.0 * 2f64.cosh() - 2f64.sinh()) / (2f64.cosh() - 1.0);
        assert_abs_diff_eq!(sum / n as f64, want, epsilon = 0.02);
        assert!(h.ball_sampler(&o, 0.0).is_err());
    }
}
