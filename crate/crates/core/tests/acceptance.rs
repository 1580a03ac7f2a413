use std::error::Error as StdError;
use std::f64::consts::PI;
use std::time::Instant;

use hadamard_chaining::bounds::{check_decay, eta_star, factor_l, find_a, varpi, Flag};
use hadamard_chaining::chaining::{
    dudley_grid, dudley_integral, exact_gamma_small, fernique_band, gaussian_sup_mc, greedy_gamma, FiniteMetricSpace,
    GaussianIndexSet, DUDLEY_GRID_POINTS,
};
use hadamard_chaining::convex::{second_difference_probe, BoundingBall, SetRep};
use hadamard_chaining::covering::volume_sandwich_check;
use hadamard_chaining::experiment::{
    default_envelope, probe_envelope, run_pipeline, verify, Check, ExperimentConfig, PipelineReport, SHELL_DELTAS,
};
use hadamard_chaining::rng::{substream, StreamRng};
use hadamard_chaining::volume::{ball_volume, ball_volume_closed_form, mc_volume};
use hadamard_chaining::ModelSpace;
use rand::Rng;

type Outcome = Result<(bool, String), Box<dyn StdError>>;

const ROOT: u64 = 0xacce;

fn rng(index: u64) -> StreamRng {
    substream(ROOT, index)
}

fn random_point(h: &ModelSpace, r: &mut StreamRng, spread: f64) -> hadamard_chaining::HPoint {
    let x: Vec<f64> = (0..h.dim()).map(|_| r.random_range(-spread..spread)).collect();
    h.lift(&x).expect("finite spatial coordinates")
}

fn ac1() -> Outcome {
    let start = Instant::now();
    let mut r = rng(1);
    let (mut inv, mut tri, mut drift) = (0.0f64, f64::NEG_INFINITY, 0.0f64);
    let spaces: Vec<ModelSpace> = [(2, 0.5), (2, 1.0), (2, 2.0), (3, 0.5), (3, 1.0), (3, 2.0)]
        .into_iter()
        .map(|(n, k)| ModelSpace::new(n, k))
        .collect::<Result<_, _>>()?;
    for i in 0..100_000 {
        let h = &spaces[i % spaces.len()];
        let p = random_point(h, &mut r, 3.0);
        let q = random_point(h, &mut r, 3.0);
        let z = random_point(h, &mut r, 3.0);
        let v = h.log_map(&p, &q);
        let back = h.exp_map(&v);
        inv = inv.max(h.distance(&back, &q)).max((v.norm() - h.distance(&p, &q)).abs());
        let w = h.log_map(&p, &h.exp_map(&v));
        let dv = v.vec().iter().zip(w.vec()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        inv = inv.max(dv / v.norm().max(1.0));
        tri = tri.max(h.distance(&p, &z) - h.distance(&p, &q) - h.distance(&q, &z));
        drift = drift.max(h.constraint_residual(back.coords()));
    }
    for h in &spaces {
        let mut x = h.origin();
        for _ in 0..10_000 {
            let u = if h.distance(&h.origin(), &x) > 6.0 {
                h.log_map(&x, &h.origin()).unit().expect("nonzero")
            } else {
                h.random_unit_tangent(&x, &mut r)
            };
            x = h.exp_map(&u.scaled(0.5));
            drift = drift.max(h.constraint_residual(x.coords()));
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let ok = inv <= 1e-8 && tri <= 1e-9 && drift <= 1e-9 && secs < 30.0;
    Ok((
        ok,
        format!("exp/log {inv:.2e} (<= 1e-8), triangle slack {tri:.2e} (<= 1e-9), drift {drift:.2e} (<= 1e-9), {secs:.1} s (< 30 s)"),
    ))
}

fn ac2() -> Outcome {
    let mut r = rng(2);
    let mut parts = Vec::new();
    let mut ok = true;
    for (n, want) in [(2, 2.0 * PI * (1f64.cosh() - 1.0)), (3, PI * (2f64.sinh() - 2.0))] {
        let h = ModelSpace::new(n, 1.0)?;
        let c = random_point(&h, &mut r, 1.0);
        let ball = SetRep::ball(h, c.clone(), 1.0)?.with_bounding(BoundingBall { center: c, radius: 1.5 });
        let est = mc_volume(&h, &ball, 1_000_000, &mut r)?;
        let z = (est.value - want).abs() / est.stderr;
        ok &= z <= 3.0;
        parts.push(format!("H{n} {:.5} vs {want:.5} ({z:.2} sigma)", est.value));
    }
    let mut quad = 0.0f64;
    for n in [2, 3] {
        for k in [0.5, 1.0, 2.0] {
            let h = ModelSpace::new(n, k)?;
            for rad in [0.1, 0.5, 1.0, 2.0, 4.0] {
                let exact = ball_volume_closed_form(&h, rad).expect("closed form in dims 2 and 3");
                quad = quad.max((ball_volume(&h, rad)? - exact).abs() / exact.max(1.0));
            }
        }
    }
    ok &= quad <= 1e-10;
    parts.push(format!("quadrature {quad:.1e} (<= 1e-10)"));
    Ok((ok, parts.join(", ")))
}

fn ac3() -> Outcome {
    let feas = check_decay(0.25, 1.0);
    let a = find_a(1.0)?;
    let w = varpi(1.0, 1.0, 2.0, 2)?;
    let e = eta_star(16, 1.0, 2, 2.0, 0.25);
    let l = factor_l(1.0, 2, 2.0)?.value;
    let dw = (w - 1.0 / 9.0).abs();
    let de = (e - 16f64.ln() / 2.25).abs();
    let dl = (l - (9f64.log2() + 1.0).sqrt()).abs();
    let ok = feas.near_case && feas.far_case && a >= 0.25 && dw <= 1e-12 && de <= 1e-12 && dl <= 1e-12;
    Ok((
        ok,
        format!(
            "a = 1/4 feasible (near {}, far {}), find_a(1) = {a:.4}, varpi err {dw:.1e}, eta* err {de:.1e}, L err {dl:.1e}",
            feas.near_case, feas.far_case
        ),
    ))
}

fn ac4() -> Outcome {
    let start = Instant::now();
    let cfg = ExperimentConfig::default();
    let rep = verify(Check::Lemma2, &cfg)?;
    let secs = start.elapsed().as_secs_f64();
    let spread = rep.details["shell_spread"].as_f64().unwrap_or(f64::NAN);
    let ratios: Vec<String> = rep.details["shells"]
        .as_array()
        .map(|a| a.iter().map(|s| format!("{:.3}", s["ratio"].as_f64().unwrap_or(f64::NAN))).collect())
        .unwrap_or_default();
    let ok = rep.flag == Flag::Pass && spread <= 1.5 && cfg.samples_volume >= 100_000 && secs < 300.0;
    Ok((
        ok,
        format!(
            "ratios {} at delta {:?}, spread {spread:.3} (<= 1.5), {} samples, {secs:.1} s (< 300 s)",
            ratios.join("/"),
            SHELL_DELTAS,
            cfg.samples_volume
        ),
    ))
}

fn ac5() -> Outcome {
    let cfg = ExperimentConfig::default();
    let probe = probe_envelope(&cfg, 10_000)?;
    let conv = probe.convexity.expect("probe_envelope runs the convexity probe");
    let env = default_envelope(&cfg, &mut substream(cfg.seed, 0))?;
    let h = *env.space();
    let mut r = rng(5);
    let (mut tested, mut min2) = (0usize, f64::INFINITY);
    while tested < 1_000 {
        let u = h.random_unit_tangent(env.ray_start(), &mut r);
        let p = env.boundary_along(&u);
        let x = h.random_unit_tangent(&p, &mut r);
        let Some(t) = env.level_tangent(&x) else { continue };
        min2 = min2.min(second_difference_probe(&env, &p, &t, 1e-3)?);
        tested += 1;
    }
    let ok = conv.pairs >= 10_000 && conv.violations == 0 && min2 >= -1e-3;
    Ok((
        ok,
        format!(
            "decay {:.4}, {} violations over {} pairs, min second difference {min2:.3} over {tested} boundary points (>= -1e-3)",
            probe.decay, conv.violations, conv.pairs
        ),
    ))
}

fn ac6() -> Outcome {
    let h = ModelSpace::plane();
    let mut r = rng(6);
    let mut ok = true;
    let mut parts = Vec::new();
    for rad in [1.5, 2.0] {
        let c = random_point(&h, &mut r, 1.0);
        let ball = SetRep::ball(h, c, rad)?;
        for eps in [0.25, 0.5, 1.0] {
            let s = volume_sandwich_check(&h, &ball, eps, 200_000, &mut r)?;
            ok &= s.flag == Flag::Pass;
            parts.push(format!("r{rad} e{eps}: {:.0} <= {} <= {:.0}", s.lower, s.n_greedy, s.upper));
        }
    }
    Ok((ok, parts.join("; ")))
}

fn seed_runs() -> Result<Vec<PipelineReport>, Box<dyn StdError>> {
    (1..=10)
        .map(|seed| {
            let cfg = ExperimentConfig { seed, ..ExperimentConfig::default() };
            run_pipeline(&cfg).map_err(|e| Box::new(e.source) as Box<dyn StdError>)
        })
        .collect()
}

fn ac7(runs: &[PipelineReport]) -> Outcome {
    let mut ok = true;
    let (mut worst, mut r_lo, mut r_hi) = (0.0f64, f64::INFINITY, 0.0f64);
    let (mut pass, mut na) = (0, 0);
    for rep in runs {
        let flags = rep.flags.as_ref().ok_or("report has no flags")?;
        match &flags.lemma4 {
            Flag::Pass => pass += 1,
            Flag::NotAssertable(_) => na += 1,
            Flag::Fail => ok = false,
        }
        let n = rep.config.params.n as i32;
        for arm in &rep.arms {
            let l4 = arm.covering.lemma4.as_ref().ok_or("arm has no covering ratio report")?;
            ok &= l4.max_ratio.is_finite() && l4.max_ratio <= l4.r * 3f64.powi(n);
            worst = worst.max(l4.max_ratio);
            r_lo = r_lo.min(l4.r);
            r_hi = r_hi.max(l4.r);
        }
    }
    Ok((
        ok,
        format!("seeds 1..10: {pass} pass, {na} not assertable, max N_Th/N_T {worst:.3}, fitted R in [{r_lo:.3}, {r_hi:.3}]"),
    ))
}

fn ac8() -> Outcome {
    let two = FiniteMetricSpace::from_vectors(&[vec![0.0, 0.0], vec![3.0, 4.0]])?;
    let s = 0.7;
    let tri = FiniteMetricSpace::new(
        vec!["x".into(), "y".into(), "z".into()],
        vec![vec![0.0, s, s], vec![s, 0.0, s], vec![s, s, 0.0]],
    )?;
    let hand = (exact_gamma_small(&two, 2.0)? - 5.0).abs().max((exact_gamma_small(&tri, 2.0)? - s).abs());
    let mut r = rng(8);
    let mut small_bad = 0;
    for _ in 0..100 {
        let count = r.random_range(2..=5);
        let v: Vec<Vec<f64>> = (0..count).map(|_| (0..2).map(|_| r.random_range(-1.0..1.0)).collect()).collect();
        let m = FiniteMetricSpace::from_vectors(&v)?;
        if greedy_gamma(&m, 2.0)?.value < exact_gamma_small(&m, 2.0)? - 1e-12 {
            small_bad += 1;
        }
    }
    let (mut big_bad, mut worst) = (0, 0.0f64);
    for _ in 0..100 {
        let count = r.random_range(2..=256);
        let dim = r.random_range(1..=4);
        let v: Vec<Vec<f64>> = (0..count).map(|_| (0..dim).map(|_| r.random_range(-1.0..1.0)).collect()).collect();
        let m = FiniteMetricSpace::from_vectors(&v)?;
        let g = greedy_gamma(&m, 2.0)?.value;
        let d = dudley_integral(&m, 2.0, &dudley_grid(m.diameter(), DUDLEY_GRID_POINTS)?)?;
        worst = worst.max(g / d);
        if g > 8.0 * d {
            big_bad += 1;
        }
    }
    let ok = hand <= 1e-12 && small_bad == 0 && big_bad == 0;
    Ok((
        ok,
        format!(
            "hand values err {hand:.1e}, greedy < exact on {small_bad}/100, greedy > 8 dudley on {big_bad}/100 (max ratio {worst:.3})"
        ),
    ))
}

fn ac9(runs: &[PipelineReport]) -> Outcome {
    let mut ok = true;
    let (mut worst, mut l_min) = (0.0f64, f64::INFINITY);
    for rep in runs {
        let flags = rep.flags.as_ref().ok_or("report has no flags")?;
        let fitted = rep.fitted.as_ref().ok_or("report has no fitted constants")?;
        ok &= !flags.theorem2.is_fail();
        for arm in &rep.arms {
            let c = &arm.chaining;
            ok &= c.gamma_th <= fitted.l_hada * c.gamma_t * (1.0 + 1e-12);
            if let Some(g) = c.gamma_ratio {
                worst = worst.max(g / fitted.l_hada);
            }
        }
        l_min = l_min.min(fitted.l_hada);
    }
    Ok((ok, format!("seeds 1..10: max gamma_Th/(L gamma_T) {worst:.3}, min L {l_min:.3}")))
}

fn ac10() -> Outcome {
    let mut r = rng(10);
    let sigma = 1.0;
    let pair = GaussianIndexSet::new(vec![vec![0.0, 0.0], vec![sigma, 0.0]])?;
    let s = gaussian_sup_mc(&pair, 100_000, &mut r)?;
    let want = sigma / (2.0 * PI).sqrt();
    let z = (s.mean_sup - want).abs() / s.stderr;
    let mut finite = 0;
    for _ in 0..20 {
        let count = r.random_range(2..=40);
        let dim = r.random_range(2..=6);
        let v: Vec<Vec<f64>> = (0..count).map(|_| (0..dim).map(|_| r.random_range(-1.0..1.0)).collect()).collect();
        let b = fernique_band(&GaussianIndexSet::new(v)?, 2.0, 5_000, &mut r)?;
        if matches!((b.l_lower, b.l_upper), (Some(lo), Some(hi)) if lo.is_finite() && hi.is_finite() && lo > 0.0 && hi > 0.0) {
            finite += 1;
        }
    }
    Ok((
        z <= 3.0 && finite == 20,
        format!("two-point mean {:.5} vs {want:.5} ({z:.2} sigma), finite L on {finite}/20 sets", s.mean_sup),
    ))
}

fn ac11() -> Outcome {
    let cfg = ExperimentConfig::default();
    let a = run_pipeline(&cfg).map_err(|e| e.source)?.without_timings();
    let b = run_pipeline(&cfg).map_err(|e| e.source)?.without_timings();
    let (ja, jb) = (a.to_json()?, b.to_json()?);
    Ok((a == b && ja == jb, format!("seed {}: reports equal, {} bytes of JSON", cfg.seed, ja.len())))
}

fn report(id: usize, name: &str, outcome: Outcome, failures: &mut usize) {
    let (ok, detail) = outcome.unwrap_or_else(|e| (false, format!("error: {e}")));
    if !ok {
        *failures += 1;
    }
    println!("AC-{id} {} {name}: {detail}", if ok { "PASS" } else { "FAIL" });
}

fn main() {
    let mut failures = 0;
    report(1, "geometry oracles", ac1(), &mut failures);
    report(2, "volume oracles", ac2(), &mut failures);
    report(3, "closed-form constants", ac3(), &mut failures);
    report(4, "envelope shell linearity", ac4(), &mut failures);
    report(5, "envelope convexity", ac5(), &mut failures);
    report(6, "covering sandwich", ac6(), &mut failures);
    let runs = seed_runs();
    let (r7, r9): (Outcome, Outcome) = match &runs {
        Ok(runs) => (ac7(runs), ac9(runs)),
        Err(e) => (Err(e.to_string().into()), Err(e.to_string().into())),
    };
    report(7, "covering ratio", r7, &mut failures);
    report(8, "gamma oracles", ac8(), &mut failures);
    report(9, "gamma ratio", r9, &mut failures);
    report(10, "gaussian suprema", ac10(), &mut failures);
    report(11, "determinism", ac11(), &mut failures);
    println!("{} of 11 criteria passed", 11 - failures);
    if failures > 0 {
        std::process::exit(1);
    }
}
