//! Ball volumes and hit-or-miss Monte Carlo volume estimates.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::convex::{EnvelopeSpec, SetRep};
use crate::error::{input, Error, Result};
use crate::hyperbolic::ModelSpace;
use crate::quadrature;
use crate::rng;

/// Smallest sample count accepted by the estimators.
pub const MIN_SAMPLES: usize = 1_000;

/// Area of the unit sphere `S^m ⊂ R^{m+1}`.
pub fn unit_sphere_area(m: usize) -> f64 {
    use std::f64::consts::PI;
    match m {
        0 => 2.0,
        1 => 2.0 * PI,
        _ => 2.0 * PI / (m as f64 - 1.0) * unit_sphere_area(m - 2),
    }
}

/// Area of the geodesic sphere of radius `r`: `ω_{n−1} (sinh(kr)/k)^{n−1}`.
pub fn sphere_area(space: &ModelSpace, r: f64) -> f64 {
    let k = space.curvature_scale();
    let n = space.dim();
    unit_sphere_area(n - 1) * ((k * r).sinh() / k).powi(n as i32 - 1)
}

/// Volume of a geodesic ball of radius `r`, by 256-node Gauss–Legendre
/// quadrature of the sphere area.
pub fn ball_volume(space: &ModelSpace, r: f64) -> Result<f64> {
    if !(r >= 0.0 && r.is_finite()) {
        return input(format!("radius must be nonnegative and finite, got {r}"));
    }
    if r == 0.0 {
        return Ok(0.0);
    }
    let k = space.curvature_scale();
    let e = space.dim() as i32 - 1;
    let integral = quadrature::rule_256().integrate(|t| ((k * t).sinh() / k).powi(e), 0.0, r);
    Ok(unit_sphere_area(space.dim() - 1) * integral)
}

/// Closed form of [`ball_volume`] where one is known (`n = 2, 3`).
pub fn ball_volume_closed_form(space: &ModelSpace, r: f64) -> Option<f64> {
    use std::f64::consts::PI;
    let k = space.curvature_scale();
    match space.dim() {
        2 => Some(2.0 * PI * ((k * r).cosh() - 1.0) / (k * k)),
        3 => Some(PI * ((2.0 * k * r).sinh() - 2.0 * k * r) / (k * k * k)),
        _ => None,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VolumeEstimate {
    pub value: f64,
    pub stderr: f64,
    pub samples: usize,
    pub hits: usize,
    pub bounding_volume: f64,
    /// Set when no sample hit the set; `stderr` is then the rule-of-three bound.
    pub low_confidence: bool,
}

impl VolumeEstimate {
    fn from_hits(hits: usize, samples: usize, bounding_volume: f64) -> Self {
        let p = hits as f64 / samples as f64;
        let (stderr, low_confidence) = if hits == 0 {
            (bounding_volume * 3.0 / samples as f64, true)
        } else {
            (bounding_volume * (p * (1.0 - p) / samples as f64).sqrt(), false)
        };
        VolumeEstimate {
            value: p * bounding_volume,
            stderr,
            samples,
            hits,
            bounding_volume,
            low_confidence,
        }
    }
}

/// Flat record for JSON reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VolumeRecord {
    pub kind: String,
    pub n: usize,
    pub k: f64,
    pub samples: usize,
    pub value: f64,
    pub stderr: f64,
}

impl VolumeRecord {
    pub fn new(s: &SetRep, est: &VolumeEstimate) -> Self {
        VolumeRecord {
            kind: s.kind().name().to_string(),
            n: s.space().dim(),
            k: s.space().curvature_scale(),
            samples: est.samples,
            value: est.value,
            stderr: est.stderr,
        }
    }
}

fn check_samples(samples: usize) -> Result<()> {
    if samples < MIN_SAMPLES {
        return input(format!("need at least {MIN_SAMPLES} samples, got {samples}"));
    }
    Ok(())
}

/// Hit-or-miss estimate of `Vol(s)` with uniform draws from its bounding ball.
pub fn mc_volume<R: Rng + ?Sized>(
    space: &ModelSpace,
    s: &SetRep,
    samples: usize,
    rng: &mut R,
) -> Result<VolumeEstimate> {
    check_samples(samples)?;
    let b = s.bounding();
    if !b.radius.is_finite() || s.space() != space {
        return input("set needs a finite bounding ball in this space");
    }
    let sampler = space.ball_sampler(&b.center, b.radius)?;
    let bv = ball_volume(space, b.radius)?;
    let root = rng::draw_root(rng);
    let hits: usize = rng::par_chunks(root, samples, |r, count| {
        (0..count).filter(|_| s.contains(&sampler.sample(r))).count()
    })
    .into_iter()
    .sum();
    Ok(VolumeEstimate::from_hits(hits, samples, bv))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShellRatio {
    pub delta: f64,
    /// `Vol(N(s, δ) − s)`.
    pub shell_volume: f64,
    pub stderr: f64,
    /// `shell_volume / δ`.
    pub ratio: f64,
    pub ratio_stderr: f64,
}

/// `Vol(N(s, δ) − s)/δ` for each `δ`, from one shared pass of samples over the
/// bounding ball grown by the largest `δ`.
pub fn shell_volume_ratio<R: Rng + ?Sized>(
    space: &ModelSpace,
    s: &SetRep,
    deltas: &[f64],
    samples: usize,
    rng: &mut R,
) -> Result<Vec<ShellRatio>> {
    check_samples(samples)?;
    if deltas.is_empty() {
        return input("need at least one delta");
    }
    if deltas.iter().any(|d| !(d.is_finite() && *d > 0.0)) || deltas.windows(2).any(|w| w[1] >= w[0]) {
        return input("deltas must be positive and strictly decreasing");
    }
    let b = s.bounding();
    if !b.radius.is_finite() {
        return input("set needs a finite bounding ball");
    }
    let dmax = deltas[0];
    let radius = b.radius + dmax;
    let sampler = space.ball_sampler(&b.center, radius)?;
    let bv = ball_volume(space, radius)?;
    let root = rng::draw_root(rng);
    let counts = rng::par_chunks(root, samples, |r, count| {
        let mut c = vec![0usize; deltas.len()];
        for _ in 0..count {
            let p = sampler.sample(r);
            if s.contains(&p) {
                continue;
            }
            if let Some(d) = s.dist_within(&p, dmax) {
                for (ci, &delta) in c.iter_mut().zip(deltas) {
                    if d <= delta {
                        *ci += 1;
                    }
                }
            }
        }
        c
    });
    let mut total = vec![0usize; deltas.len()];
    for c in counts {
        for (t, v) in total.iter_mut().zip(c) {
            *t += v;
        }
    }
    Ok(deltas
        .iter()
        .zip(total)
        .map(|(&delta, hits)| {
            let e = VolumeEstimate::from_hits(hits, samples, bv);
            ShellRatio {
                delta,
                shell_volume: e.value,
                stderr: e.stderr,
                ratio: e.value / delta,
                ratio_stderr: e.stderr / delta,
            }
        })
        .collect())
}

/// The three-way split of an envelope's volume around `B(Q, η)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeDecomposition {
    pub eta: f64,
    /// Beyond `B(Q, η)` and nearer the ray than the base.
    pub vol_g1: VolumeEstimate,
    /// Inside `B(Q, η)`.
    pub vol_g2: VolumeEstimate,
    /// The rest.
    pub vol_g3: VolumeEstimate,
    pub vol_total: VolumeEstimate,
    /// `Vol(B(Q, η))`, an upper bound for `vol_g2`.
    pub ball_volume_eta: f64,
    /// Exponent used for the ball-growth bound `e^{k(n−1)η}`.
    pub ball_growth_exponent: String,
}

pub fn decompose_envelope_volumes<R: Rng + ?Sized>(
    space: &ModelSpace,
    env: &EnvelopeSpec,
    eta: f64,
    samples: usize,
    rng: &mut R,
) -> Result<EnvelopeDecomposition> {
    check_samples(samples)?;
    if !(eta.is_finite() && eta > 0.0) {
        return input(format!("eta must be positive, got {eta}"));
    }
    if env.space() != space {
        return Err(Error::Input("envelope lives in a different space".into()));
    }
    let b = env.bounding_ball();
    let sampler = space.ball_sampler(&b.center, b.radius)?;
    let bv = ball_volume(space, b.radius)?;
    let q = env.ray_start();
    let root = rng::draw_root(rng);
    let parts = rng::par_chunks(root, samples, |r, count| {
        let mut c = [0usize; 3];
        for _ in 0..count {
            let p = sampler.sample(r);
            let d1 = env.dist_base(&p);
            let d2 = env.dist_ray(&p);
            let g = -(-env.decay() * d1).exp_m1() - (-env.decay() * d2).exp_m1();
            if g > 1.0 {
                continue;
            }
            if space.distance(q, &p) <= eta {
                c[1] += 1;
            } else if d2 < d1 {
                c[0] += 1;
            } else {
                c[2] += 1;
            }
        }
        c
    });
    let mut c = [0usize; 3];
    for part in parts {
        for i in 0..3 {
            c[i] += part[i];
        }
    }
    let est = |h| VolumeEstimate::from_hits(h, samples, bv);
    Ok(EnvelopeDecomposition {
        eta,
        vol_g1: est(c[0]),
        vol_g2: est(c[1]),
        vol_g3: est(c[2]),
        vol_total: est(c[0] + c[1] + c[2]),
        ball_volume_eta: ball_volume(space, eta)?,
        ball_growth_exponent: "n-1".into(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn sphere_constants() {
        use std::f64::consts::PI;
        assert_relative_eq!(unit_sphere_area(2), 4.0 * PI, epsilon = 1e-14);
        assert_relative_eq!(unit_sphere_area(3), 2.0 * PI * PI, epsilon = 1e-14);
    }

    #[test]
    fn quadrature_matches_closed_forms() {
        for n in [2, 3] {
            for k in [0.5, 1.0, 2.0] {
                let h = ModelSpace::new(n, k).unwrap();
                for r in [0.1, 1.0, 3.0, 20.0 / k] {
                    let q = ball_volume(&h, r).unwrap();
                    let c = ball_volume_closed_form(&h, r).unwrap();
                    assert!(((q - c) / c).abs() < 1e-12, "n={n} k={k} r={r}: {q} vs {c}");
                }
            }
        }
        assert_eq!(ball_volume(&ModelSpace::plane(), 0.0).unwrap(), 0.0);
        assert!(ball_volume(&ModelSpace::plane(), -1.0).is_err());
    }

    #[test]
    fn volume_scales_like_k_to_minus_n() {
        for n in [2, 3, 5] {
            let h1 = ModelSpace::new(n, 1.0).unwrap();
            let h2 = ModelSpace::new(n, 2.0).unwrap();
            let v1 = ball_volume(&h1, 1.5).unwrap();
            let v2 = ball_volume(&h2, 0.75).unwrap();
            assert_relative_eq!(v2, v1 / 2f64.powi(n as i32), max_relative = 1e-12);
        }
    }

    #[test]
    fn zero_hits_uses_rule_of_three() {
        let e = VolumeEstimate::from_hits(0, 1000, 10.0);
        assert!(e.low_confidence);
        assert_eq!(e.value, 0.0);
        assert_relative_eq!(e.stderr, 0.03);
    }
}
