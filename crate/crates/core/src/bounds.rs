//! Closed-form constants: the envelope decay `a`, the radius `η*`, the
//! exponent loss `ϖ`, the volume bounds, the ratio `R` and the chaining factor `L`.

use serde::{Deserialize, Serialize};

use crate::error::{input, Error, Result};

/// Points in the feasibility grid over `(0, 20]`.
pub const FEASIBILITY_GRID: usize = 10_000;
/// Upper end of the feasibility grid.
pub const FEASIBILITY_SPAN: f64 = 20.0;
/// Resolution of the search for `a`.
pub const A_STEP: f64 = 1e-3;

/// Outcome of a check whose constants may or may not be pinned down.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", content = "reason", rename_all = "snake_case")]
pub enum Flag {
    Pass,
    Fail,
    NotAssertable(String),
}

impl Flag {
    pub fn from_bool(ok: bool) -> Self {
        if ok {
            Flag::Pass
        } else {
            Flag::Fail
        }
    }

    pub fn is_fail(&self) -> bool {
        matches!(self, Flag::Fail)
    }

    /// Combines flags: any fail wins, then any pass, else not-assertable.
    pub fn all<'a>(flags: impl IntoIterator<Item = &'a Flag>) -> Flag {
        let mut out: Option<Flag> = None;
        for f in flags {
            match f {
                Flag::Fail => return Flag::Fail,
                Flag::Pass => out = Some(Flag::Pass),
                Flag::NotAssertable(r) => {
                    if out.is_none() {
                        out = Some(Flag::NotAssertable(r.clone()));
                    }
                }
            }
        }
        out.unwrap_or_else(|| Flag::NotAssertable("nothing to check".into()))
    }
}

impl std::fmt::Display for Flag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Flag::Pass => write!(f, "pass"),
            Flag::Fail => write!(f, "fail"),
            Flag::NotAssertable(r) => write!(f, "not-assertable ({r})"),
        }
    }
}

/// Scenario constants shared by every bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioParams {
    pub n: usize,
    pub k1: f64,
    pub k2: f64,
    pub m: usize,
    pub rho: f64,
    pub lambda: f64,
    pub beta: f64,
    pub alpha: f64,
}

impl Default for ScenarioParams {
    fn default() -> Self {
        ScenarioParams {
            n: 2,
            k1: 1.0,
            k2: 2.0,
            m: 16,
            rho: 0.5,
            lambda: 1.0,
            beta: 1.0,
            alpha: 2.0,
        }
    }
}

impl ScenarioParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Input(msg));
        if self.n < 2 {
            return bad(format!("n must be at least 2, got {}", self.n));
        }
        if !(self.k1.is_finite() && self.k1 >= 1.0) {
            return bad(format!("k1 must be at least 1, got {}", self.k1));
        }
        if !(self.k2.is_finite() && self.k2 > self.k1) {
            return bad(format!("k2 must exceed k1, got k1 = {}, k2 = {}", self.k1, self.k2));
        }
        if self.m < 1 {
            return bad("m must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.rho) {
            return bad(format!("rho must lie in [0, 1], got {}", self.rho));
        }
        if !(self.lambda > 0.0 && self.lambda <= self.k2) {
            return bad(format!("lambda must lie in (0, k2], got {}", self.lambda));
        }
        if !(self.beta.is_finite() && self.beta > 0.0) {
            return bad(format!("beta must be positive, got {}", self.beta));
        }
        if !(self.alpha.is_finite() && self.alpha > 0.0) {
            return bad(format!("alpha must be positive, got {}", self.alpha));
        }
        Ok(())
    }

    /// Number of generator sets, `round(m^ρ)` but at least 1.
    pub fn generator_count(&self) -> usize {
        ((self.m as f64).powf(self.rho).round() as usize).max(1)
    }
}

/// Root of `tanh τ = τ/2` on `τ > 0`, the split between the two cases of the decay test.
pub fn tau_split() -> f64 {
    // Newton on f(τ) = tanh τ − τ/2 from the right of the root.
    let mut t: f64 = 2.0;
    for _ in 0..60 {
        let f = t.tanh() - 0.5 * t;
        let df = 1.0 / t.cosh().powi(2) - 0.5;
        let step = f / df;
        t -= step;
        if step.abs() < 1e-15 {
            break;
        }
    }
    t
}

/// Per-case outcome of the decay feasibility test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Feasibility {
    /// `2a²τ < (k1² − ½) tanh τ` on every grid `τ ≤ τ₀`.
    pub near_case: bool,
    /// `2a e^{−ar}/(k1² − ½) < ½` on every grid `r > ln 2 / a`.
    pub far_case: bool,
}

impl Feasibility {
    pub fn ok(&self) -> bool {
        self.near_case && self.far_case
    }
}

/// Evaluates both inequalities on the `10⁴`-point grid over `(0, 20]`.
pub fn check_decay(a: f64, k1: f64) -> Feasibility {
    let c = k1 * k1 - 0.5;
    if !(a > 0.0) || c <= 0.0 {
        return Feasibility {
            near_case: false,
            far_case: false,
        };
    }
    let split = tau_split();
    let r_min = std::f64::consts::LN_2 / a;
    let mut near_case = true;
    let mut far_case = true;
    for j in 1..=FEASIBILITY_GRID {
        let x = FEASIBILITY_SPAN * j as f64 / FEASIBILITY_GRID as f64;
        if x <= split && 2.0 * a * a * x >= c * x.tanh() {
            near_case = false;
        }
        if x > r_min && 2.0 * a * (-a * x).exp() / c >= 0.5 {
            far_case = false;
        }
    }
    Feasibility {
        near_case,
        far_case,
    }
}

pub fn a_is_feasible(a: f64, k1: f64) -> bool {
    check_decay(a, k1).ok()
}

/// Largest `a ∈ (0, 1]` on the `10⁻³` grid passing [`check_decay`].
pub fn find_a(k1: f64) -> Result<f64> {
    if !(k1.is_finite() && k1 >= 1.0) {
        return input(format!("k1 must be at least 1, got {k1}"));
    }
    let steps = (1.0 / A_STEP).round() as usize;
    for i in (1..=steps).rev() {
        let a = i as f64 * A_STEP;
        if a_is_feasible(a, k1) {
            return Ok(a);
        }
    }
    Err(Error::Infeasible { k1 })
}

/// `η* = ρ ln m / ((n − 1)(k2 + a))`, zero for `m ≤ 1`.
pub fn eta_star(m: usize, rho: f64, n: usize, k2: f64, a: f64) -> f64 {
    if m <= 1 {
        return 0.0;
    }
    rho * (m as f64).ln() / ((n as f64 - 1.0) * (k2 + a))
}

/// `ϖ = ρa / ((n − 1)(k2 + a))` with `a = find_a(k1)`.
pub fn varpi(rho: f64, k1: f64, k2: f64, n: usize) -> Result<f64> {
    if n < 2 {
        return input("n must be at least 2");
    }
    let a = find_a(k1)?;
    Ok(varpi_with(rho, a, k2, n))
}

pub(crate) fn varpi_with(rho: f64, a: f64, k2: f64, n: usize) -> f64 {
    rho * a / ((n as f64 - 1.0) * (k2 + a))
}

/// The three volume terms of the decomposition with unit constants:
/// `e^{−a(n−1)η} + e^{k2(n−1)η} + m^ρ e^{−aη}`.
pub fn eta_objective_shape(eta: f64, m: usize, rho: f64, n: usize, k2: f64, a: f64) -> f64 {
    let nm1 = n as f64 - 1.0;
    (-a * nm1 * eta).exp() + (k2 * nm1 * eta).exp() + (m as f64).powf(rho) * (-a * eta).exp()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VolBounds {
    /// `C_ub · m^{1+ρ−ϖ}`.
    pub upper: f64,
    /// `C_lb · λβ / k2`.
    pub lower: f64,
    pub exponent: f64,
}

pub fn vol_bounds(params: &ScenarioParams, c_ub: f64, c_lb: f64) -> Result<VolBounds> {
    params.validate()?;
    if !(c_ub > 0.0 && c_lb > 0.0) {
        return input("volume constants must be positive");
    }
    let w = varpi(params.rho, params.k1, params.k2, params.n)?;
    let exponent = 1.0 + params.rho - w;
    Ok(VolBounds {
        upper: c_ub * (params.m as f64).powf(exponent),
        lower: c_lb * params.lambda * params.beta / params.k2,
        exponent,
    })
}

/// `R = upper / lower` from [`vol_bounds`].
pub fn ratio_r(params: &ScenarioParams, c_ub: f64, c_lb: f64) -> Result<f64> {
    let b = vol_bounds(params, c_ub, c_lb)?;
    if b.lower <= 0.0 {
        return input("volume lower bound is zero");
    }
    Ok(b.upper / b.lower)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FactorL {
    pub value: f64,
    /// Set when the supplied `R` was below 1 and was raised to 1.
    pub clamped: bool,
}

/// `(log(R·3ⁿ)/log 2 + 1)^{1/α}`, with `R < 1` clamped to 1.
pub fn factor_l(r: f64, n: usize, alpha: f64) -> Result<FactorL> {
    if !(r.is_finite() && r > 0.0) {
        return input(format!("R must be positive and finite, got {r}"));
    }
    if !(alpha > 0.0) {
        return input("alpha must be positive");
    }
    let clamped = r < 1.0;
    let r = r.max(1.0);
    let x = (r * 3f64.powi(n as i32)).ln() / std::f64::consts::LN_2 + 1.0;
    Ok(FactorL {
        value: x.powf(1.0 / alpha),
        clamped,
    })
}

/// Every evaluated constant, with the fitted volume constants they rest on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub params: ScenarioParams,
    pub a: f64,
    pub eta_star: f64,
    pub varpi: f64,
    pub c_ub: f64,
    pub c_lb: f64,
    pub vol_th_upper_shape: f64,
    pub vol_t_lower_shape: f64,
    pub r_hada: f64,
    pub l_hada: f64,
    pub r_clamped: bool,
}

impl BoundReport {
    pub fn evaluate(params: &ScenarioParams, c_ub: f64, c_lb: f64) -> Result<Self> {
        let a = find_a(params.k1)?;
        let vb = vol_bounds(params, c_ub, c_lb)?;
        let r = vb.upper / vb.lower;
        let l = factor_l(r, params.n, params.alpha)?;
        Ok(BoundReport {
            params: *params,
            a,
            eta_star: eta_star(params.m, params.rho, params.n, params.k2, a),
            varpi: varpi_with(params.rho, a, params.k2, params.n),
            c_ub,
            c_lb,
            vol_th_upper_shape: (params.m as f64).powf(vb.exponent),
            vol_t_lower_shape: params.lambda * params.beta / params.k2,
            r_hada: r,
            l_hada: l.value,
            r_clamped: l.clamped,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_point_solves_its_equation() {
        let t = tau_split();
        assert!((t.tanh() - t / 2.0).abs() < 1e-14);
        assert!((t - 1.915).abs() < 1e-3);
    }

    #[test]
    fn quarter_is_the_answer_at_unit_k1() {
        assert_eq!(find_a(1.0).unwrap(), 0.25);
        assert!(check_decay(0.25, 1.0).ok());
        assert!(!check_decay(0.251, 1.0).far_case);
    }

    #[test]
    fn feasible_region_grows_with_k1() {
        let a1 = find_a(1.0).unwrap();
        let a2 = find_a(2.0).unwrap();
        assert!(a2 >= a1);
        assert!(find_a(0.5).is_err());
    }

    #[test]
    fn flag_combination() {
        let na = Flag::NotAssertable("x".into());
        assert_eq!(Flag::all([&Flag::Pass, &na]), Flag::Pass);
        assert_eq!(Flag::all([&Flag::Pass, &Flag::Fail]), Flag::Fail);
        assert_eq!(Flag::all([&na]), na);
        let j = serde_json::to_string(&na).unwrap();
        assert_eq!(j, r#"{"status":"not_assertable","reason":"x"}"#);
        assert_eq!(serde_json::to_string(&Flag::Pass).unwrap(), r#"{"status":"pass"}"#);
    }

    #[test]
    fn params_validation() {
        assert!(ScenarioParams::default().validate().is_ok());
        for p in [
            ScenarioParams { k2: 0.5, ..Default::default() },
            ScenarioParams { rho: 1.5, ..Default::default() },
            ScenarioParams { lambda: 3.0, ..Default::default() },
        ] {
            assert!(p.validate().is_err());
        }
        assert_eq!(ScenarioParams::default().generator_count(), 4);
    }

    #[test]
    fn factor_l_clamps_small_ratios() {
        let f = factor_l(0.5, 2, 2.0).unwrap();
        assert!(f.clamped);
        assert_eq!(f.value, factor_l(1.0, 2, 2.0).unwrap().value);
        assert!(factor_l(0.0, 2, 2.0).is_err());
    }
}
