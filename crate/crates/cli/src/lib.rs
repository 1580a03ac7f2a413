//! Command-line driver. Exit codes: 0 when every flag passes or is not
//! assertable, 1 when any flag fails, 2 for usage and configuration errors.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use hadamard_chaining::bounds::{check_decay, eta_star, factor_l, find_a, varpi, Flag};
use hadamard_chaining::chaining::{
    dudley_grid, dudley_integral, exact_gamma_small, fernique_band, gaussian_sup_mc, greedy_gamma, FiniteMetricSpace,
    GaussianIndexSet, DUDLEY_GRID_POINTS, EXACT_GAMMA_MAX,
};
use hadamard_chaining::convex::SetRep;
use hadamard_chaining::covering::{
    cloud_start, covering_profile, exact_covering_number_small, greedy_covering_number, CloudMetric,
};
use hadamard_chaining::experiment::{arm_geometry, run_pipeline, verify, write_outputs, Check, ExperimentConfig};
use hadamard_chaining::rng::substream;
use hadamard_chaining::volume::{ball_volume, ball_volume_closed_form, mc_volume, VolumeRecord};
use hadamard_chaining::{Error, ModelSpace};
use serde_json::{json, Value};

#[derive(Debug, Parser)]
#[command(name = "hchain", version, about = "Chaining and hull-volume experiments in hyperbolic space")]
pub struct Cli {
    /// JSON config file, or `default` for built-in defaults.
    #[arg(long, global = true)]
    pub config: Option<String>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Where to write the JSON report.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Monte Carlo sample (or trial) count.
    #[arg(long, global = true)]
    pub samples: Option<usize>,
    /// Length of the covering ε grid.
    #[arg(long = "eps-grid", global = true)]
    pub eps_grid: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Quick oracle checks.
    Selftest,
    /// Volumes of the generator union and its hull.
    Volume,
    /// Greedy covering profiles of the union and its hull.
    Covering,
    /// γ estimates for a CSV distance matrix, or for sampled points of the union.
    Gamma { matrix: Option<PathBuf> },
    /// Gaussian supremum and band constants for a CSV of vectors, or a two-point set.
    Gaussian { vectors: Option<PathBuf> },
    /// One named check: lemma1, lemma2, theorem1, lemma4 or theorem2.
    Verify { check: String },
    /// The full pipeline.
    Pipeline,
}

struct Outcome {
    summary: Vec<String>,
    json: Value,
    failed: bool,
}

fn config_for(cli: &Cli) -> Result<ExperimentConfig, Error> {
    let mut cfg = match cli.config.as_deref() {
        None | Some("default") => ExperimentConfig::default(),
        Some(path) => ExperimentConfig::load(Path::new(path))?,
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(n) = cli.samples {
        cfg.samples_volume = n;
        cfg.trials_gaussian = n;
    }
    if let Some(n) = cli.eps_grid {
        cfg.eps_grid_size = n;
    }
    if let Some(p) = &cli.out {
        cfg.output_path = Some(p.display().to_string());
    }
    cfg.validate()?;
    Ok(cfg)
}

fn line(flag: &Flag, name: &str, detail: impl std::fmt::Display) -> String {
    let detail = detail.to_string();
    if detail.is_empty() {
        format!("{flag:<8} {name}")
    } else {
        format!("{flag:<8} {name}: {detail}")
    }
}

fn selftest(cfg: &ExperimentConfig) -> Result<Outcome, Error> {
    let mut checks: Vec<(String, Flag, String)> = Vec::new();
    let mut push = |name: &str, ok: bool, detail: String| checks.push((name.into(), Flag::from_bool(ok), detail));

    for n in [2, 3] {
        let h = ModelSpace::new(n, 1.0)?;
        let q = ball_volume(&h, 1.0)?;
        let c = ball_volume_closed_form(&h, 1.0).expect("closed form for n = 2, 3");
        push(&format!("ball_volume_n{n}"), (q - c).abs() <= 1e-10, format!("{q:.12} vs {c:.12}"));
    }
    let a = find_a(1.0)?;
    push("find_a", a >= 0.25 && check_decay(0.25, 1.0).ok(), format!("a = {a}"));
    let w = varpi(1.0, 1.0, 2.0, 2)?;
    push("varpi", (w - 1.0 / 9.0).abs() <= 1e-12, format!("{w}"));
    let e = eta_star(16, 1.0, 2, 2.0, 0.25);
    push("eta_star", (e - 16f64.ln() / 2.25).abs() <= 1e-12, format!("{e}"));
    let l = factor_l(1.0, 2, 2.0)?.value;
    push("factor_l", (l - (9f64.log2() + 1.0).sqrt()).abs() <= 1e-12, format!("{l}"));

    let two = FiniteMetricSpace::from_vectors(&[vec![0.0], vec![1.5]])?;
    let tri = FiniteMetricSpace::new(
        vec!["a".into(), "b".into(), "c".into()],
        vec![vec![0.0, 1.0, 1.0], vec![1.0, 0.0, 1.0], vec![1.0, 1.0, 0.0]],
    )?;
    let g2 = exact_gamma_small(&two, 2.0)?;
    let g3 = exact_gamma_small(&tri, 2.0)?;
    push("exact_gamma", (g2 - 1.5).abs() < 1e-12 && (g3 - 1.0).abs() < 1e-12, format!("{g2}, {g3}"));
    let gg = greedy_gamma(&tri, 2.0)?.value;
    push("greedy_gamma", gg >= g3 - 1e-12, format!("{gg}"));
    let grid = dudley_grid(1.0, DUDLEY_GRID_POINTS)?;
    let unit = FiniteMetricSpace::from_vectors(&[vec![0.0], vec![1.0]])?;
    let du = dudley_integral(&unit, 2.0, &grid)?;
    push("dudley", (du - 2f64.ln().sqrt()).abs() < 1e-12, format!("{du}"));
    let c1 = greedy_covering_number(&two, 1.5)?.count;
    let c2 = exact_covering_number_small(&two, 1.0)?;
    push("covering", c1 == 1 && c2 == 2, format!("{c1}, {c2}"));

    let h = ModelSpace::plane();
    let mut rng = substream(cfg.seed, 0);
    let sampler = h.ball_sampler(&h.origin(), 3.0)?;
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let (p, q) = (sampler.sample(&mut rng), sampler.sample(&mut rng));
        worst = worst.max(h.distance(&h.exp_map(&h.log_map(&p, &q)), &q));
    }
    push("exp_log", worst <= 1e-8, format!("max error {worst:e}"));
    let ball = SetRep::ball(h, h.origin(), 1.0)?.with_bounding(hadamard_chaining::convex::BoundingBall {
        center: h.origin(),
        radius: 2.0,
    });
    let v = mc_volume(&h, &ball, 100_000, &mut rng)?;
    let exact = ball_volume_closed_form(&h, 1.0).expect("n = 2");
    push("mc_volume", (v.value - exact).abs() <= 3.0 * v.stderr, format!("{:.4} ± {:.4} vs {exact:.4}", v.value, v.stderr));
    let pair = GaussianIndexSet::new(vec![vec![0.0, 0.0], vec![1.0, 0.0]])?;
    let s = gaussian_sup_mc(&pair, 20_000, &mut rng)?;
    let target = 1.0 / (2.0 * std::f64::consts::PI).sqrt();
    push("gaussian_sup", (s.mean_sup - target).abs() <= 3.0 * s.stderr, format!("{:.4} ± {:.4}", s.mean_sup, s.stderr));

    let failed = checks.iter().any(|c| c.1.is_fail());
    Ok(Outcome {
        summary: checks.iter().map(|(n, f, d)| line(f, n, d)).collect(),
        json: json!({
            "command": "selftest",
            "seed": cfg.seed,
            "checks": checks.iter().map(|(n, f, d)| json!({ "name": n, "flag": f, "detail": d })).collect::<Vec<_>>(),
        }),
        failed,
    })
}

fn volume(cfg: &ExperimentConfig) -> Result<Outcome, Error> {
    let mut rng = substream(cfg.seed, 0);
    let g = arm_geometry(cfg, cfg.params.k1, &mut rng)?;
    let vt = mc_volume(&g.space, &g.t, cfg.samples_volume, &mut rng)?;
    let vh = mc_volume(&g.space, &g.hull, cfg.samples_volume, &mut rng)?;
    let records = vec![VolumeRecord::new(&g.t, &vt), VolumeRecord::new(&g.hull, &vh)];
    Ok(Outcome {
        summary: records
            .iter()
            .map(|r| format!("{:<10} n={} k={} value {:.5} ± {:.5}", r.kind, r.n, r.k, r.value, r.stderr))
            .collect(),
        json: json!({ "command": "volume", "seed": cfg.seed, "records": records }),
        failed: false,
    })
}

fn covering(cfg: &ExperimentConfig) -> Result<Outcome, Error> {
    let mut rng = substream(cfg.seed, 0);
    let g = arm_geometry(cfg, cfg.params.k1, &mut rng)?;
    let mt = CloudMetric {
        space: &g.space,
        points: g.t_dense.support().points(),
    };
    let mh = CloudMetric {
        space: &g.space,
        points: g.hull.support().points(),
    };
    let pt = covering_profile(&mt, &g.grid, cloud_start(&g.t_dense))?;
    let ph = covering_profile(&mh, &g.grid, cloud_start(&g.hull))?;
    if let Some(out) = &cfg.output_path {
        let stem = Path::new(out).with_extension("");
        pt.write_csv(std::fs::File::create(format!("{}.cover_t.csv", stem.display()))?)?;
        ph.write_csv(std::fs::File::create(format!("{}.cover_th.csv", stem.display()))?)?;
    }
    let summary = pt
        .epsilons
        .iter()
        .zip(pt.counts.iter().zip(&ph.counts))
        .map(|(e, (a, b))| format!("eps {e:.5}  N_T {a:>6}  N_Th {b:>6}"))
        .collect();
    Ok(Outcome {
        summary,
        json: json!({ "command": "covering", "seed": cfg.seed, "hull_tol": g.hull_tol, "profile_t": pt, "profile_th": ph }),
        failed: false,
    })
}

fn gamma(cfg: &ExperimentConfig, matrix: Option<&Path>) -> Result<Outcome, Error> {
    let fms = match matrix {
        Some(p) => FiniteMetricSpace::read_csv(std::fs::File::open(p)?)?,
        None => {
            let mut rng = substream(cfg.seed, 0);
            let g = arm_geometry(cfg, cfg.params.k1, &mut rng)?;
            let pts = (0..cfg.params.m)
                .map(|_| g.t.sample_member(&mut rng, 100_000).ok_or_else(|| Error::Input("could not sample T".into())))
                .collect::<Result<Vec<_>, _>>()?;
            FiniteMetricSpace::from_points(&g.space, &pts)
        }
    };
    let alpha = cfg.params.alpha;
    let greedy = greedy_gamma(&fms, alpha)?;
    let diam = fms.diameter();
    let dudley = if diam > 0.0 {
        dudley_integral(&fms, alpha, &dudley_grid(diam, DUDLEY_GRID_POINTS)?)?
    } else {
        0.0
    };
    use hadamard_chaining::covering::IndexedMetric;
    let exact = if fms.len() <= EXACT_GAMMA_MAX {
        Some(exact_gamma_small(&fms, alpha)?)
    } else {
        None
    };
    let mut summary = vec![
        format!("points {}  diameter {diam:.6}", fms.len()),
        format!("greedy gamma {:.6} over {} levels", greedy.value, greedy.partitions.len()),
        format!("dudley integral {dudley:.6}"),
    ];
    if let Some(e) = exact {
        summary.push(format!("exact gamma {e:.6}"));
    }
    Ok(Outcome {
        summary,
        json: json!({
            "command": "gamma",
            "seed": cfg.seed,
            "alpha": alpha,
            "points": fms.len(),
            "diameter": diam,
            "greedy_gamma": greedy.value,
            "levels": greedy.partitions.len(),
            "dudley": dudley,
            "exact_gamma": exact,
        }),
        failed: false,
    })
}

fn gaussian(cfg: &ExperimentConfig, vectors: Option<&Path>) -> Result<Outcome, Error> {
    let set = match vectors {
        Some(p) => GaussianIndexSet::read_csv(std::fs::File::open(p)?)?,
        None => GaussianIndexSet::new(vec![vec![0.0, 0.0], vec![1.0, 0.0]])?,
    };
    let mut rng = substream(cfg.seed, 0);
    let band = fernique_band(&set, 2.0, cfg.trials_gaussian, &mut rng)?;
    let fmt = |x: Option<f64>| x.map_or("undefined".to_string(), |v| format!("{v:.4}"));
    Ok(Outcome {
        summary: vec![
            format!("mean sup {:.5} ± {:.5}", band.mean_sup, band.stderr),
            format!("greedy gamma_2 {:.5}", band.gamma_greedy),
            line(&band.flag, "band", format!("L_lower {}  L_upper {}", fmt(band.l_lower), fmt(band.l_upper))),
        ],
        failed: band.flag.is_fail(),
        json: json!({ "command": "gaussian", "seed": cfg.seed, "trials": cfg.trials_gaussian, "band": band }),
    })
}

fn verify_cmd(cfg: &ExperimentConfig, check: Check) -> Result<Outcome, Error> {
    let rep = verify(check, cfg)?;
    Ok(Outcome {
        summary: vec![line(&rep.flag, &rep.check, format!("seed {}", rep.seed))],
        failed: rep.flag.is_fail(),
        json: serde_json::to_value(&rep)?,
    })
}

fn pipeline(cfg: &ExperimentConfig) -> Result<Outcome, Error> {
    let report = run_pipeline(cfg).map_err(|e| {
        if let Some(out) = &cfg.output_path {
            let _ = write_outputs(&e.partial, Path::new(out));
        }
        Error::Input(e.to_string())
    })?;
    let flags = report.flags.clone().expect("complete report has flags");
    let mut summary: Vec<String> = report
        .arms
        .iter()
        .map(|a| {
            format!(
                "k = {}: Vol(T) {:.4}  Vol(T_h) {:.4}  gap {:.4}  gamma_2 {:.4} -> {:.4}",
                a.k, a.volumes.vol_t.value, a.volumes.vol_th.value, a.geometry.hull_gap, a.chaining.gamma_t, a.chaining.gamma_th
            )
        })
        .collect();
    if let Some(f) = &report.fitted {
        summary.push(format!("fitted R {:.5}  L {:.5}", f.r_hada, f.l_hada));
    }
    summary.extend(flags.iter().map(|(n, f)| line(f, n, "")));
    if let Some(out) = &cfg.output_path {
        write_outputs(&report, Path::new(out))?;
    }
    Ok(Outcome {
        summary,
        failed: flags.any_fail(),
        json: serde_json::to_value(&report)?,
    })
}

fn dispatch(cli: &Cli) -> Result<Outcome, Error> {
    let cfg = config_for(cli)?;
    match &cli.command {
        Command::Selftest => selftest(&cfg),
        Command::Volume => volume(&cfg),
        Command::Covering => covering(&cfg),
        Command::Gamma { matrix } => gamma(&cfg, matrix.as_deref()),
        Command::Gaussian { vectors } => gaussian(&cfg, vectors.as_deref()),
        Command::Verify { check } => verify_cmd(&cfg, check.parse()?),
        Command::Pipeline => pipeline(&cfg),
    }
}

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = if code == 0 { write!(out, "{e}") } else { write!(err, "{e}") };
            return code;
        }
    };
    match dispatch(&cli) {
        Ok(o) => {
            for l in &o.summary {
                let _ = writeln!(out, "{l}");
            }
            let is_pipeline = matches!(cli.command, Command::Pipeline);
            if let Some(path) = config_for(&cli).ok().and_then(|c| c.output_path) {
                if !is_pipeline {
                    let text = serde_json::to_string_pretty(&o.json).unwrap_or_default();
                    if let Err(e) = std::fs::write(&path, text) {
                        let _ = writeln!(err, "cannot write {path}: {e}");
                        return 2;
                    }
                }
                let _ = writeln!(out, "report written to {path}");
            }
            i32::from(o.failed)
        }
        Err(e @ (Error::Config(_) | Error::Io(_))) => {
            let _ = writeln!(err, "error: {e}");
            2
        }
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            1
        }
    }
}
