use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use roughflow::expansion::{verify_amplitude_bounds, ApproximationBundle, BandReport};
use roughflow::harness::{self, checks, Format, RunConfig, Status};
use roughflow::ns::NsSolver;
use roughflow::Exec;
use std::path::PathBuf;
use std::process::ExitCode;

/// Euler boundary layers over rough walls and their Navier-Stokes check.
#[derive(Parser)]
#[command(name = "roughflow", version)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

/// Flags override the config file.
#[derive(Args)]
struct Common {
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    output: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(long, global = true, value_delimiter = ',')]
    epsilons: Option<Vec<f64>>,
    #[arg(long, global = true)]
    nu_power: Option<i32>,
    #[arg(long, global = true)]
    nu_scale: Option<f64>,
    /// Expansion order N.
    #[arg(long, global = true)]
    order: Option<u32>,
    #[arg(long, global = true)]
    sequential: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Build u^app for each ε and fit the amplitude bounds.
    BuildApprox,
    /// Run Navier-Stokes for one (ε, ν), printing one JSON line per step.
    RunNs {
        #[arg(long)]
        epsilon: f64,
        /// Defaults to the sweep rule.
        #[arg(long)]
        nu: Option<f64>,
        #[arg(long)]
        quiet: bool,
    },
    /// Full (ε, ν) sweep with CSV, JSON and SVG output.
    Sweep {
        #[arg(long, value_delimiter = ',', default_value = "csv,json,svg")]
        formats: Vec<String>,
    },
    /// Randomized property suites.
    Check {
        #[arg(long, value_enum, default_value_t = Suite::All)]
        suite: Suite,
        #[arg(long, default_value_t = 100)]
        fields: usize,
    },
    /// Re-emit and re-judge a saved sweep.
    Report {
        input: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "csv,svg")]
        formats: Vec<String>,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Suite {
    All,
    Traces,
    Identities,
    Weight,
    Scaling,
}

fn load(common: &Common) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(p) => harness::parse_config(p)?,
        None => RunConfig::default(),
    };
    if let Some(o) = &common.output {
        cfg.output = o.clone();
    } else {
        cfg.output = cfg.output_dir();
    }
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(t) = common.threads {
        cfg.threads = t;
    }
    if let Some(e) = &common.epsilons {
        cfg.sweep.epsilons = e.clone();
    }
    if let Some(p) = common.nu_power {
        cfg.sweep.nu_power = p;
    }
    if let Some(c) = common.nu_scale {
        cfg.sweep.nu_scale = c;
    }
    if let Some(n) = common.order {
        cfg.approx.order = n;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn formats(names: &[String]) -> Result<Vec<Format>> {
    Ok(names
        .iter()
        .map(|s| s.parse())
        .collect::<roughflow::Result<_>>()?)
}

fn verdict_line(pass: bool, what: &str) {
    println!("[{}] {what}", if pass { "PASS" } else { "FAIL" });
}

fn build_approx(cfg: &RunConfig, exec: Exec) -> Result<bool> {
    std::fs::create_dir_all(&cfg.output)?;
    let mut sweep = Vec::new();
    for &eps in &cfg.sweep.epsilons {
        let bundle =
            ApproximationBundle::compute(&cfg.domain_for(eps)?, &cfg.forcing, &cfg.approx, exec)?;
        let reports = bundle.reports(&cfg.forcing, cfg.gamma, exec)?;
        let sup = BandReport::sup(&reports);
        let path = cfg
            .output
            .join(format!("approx_eps_{}.json", (1.0 / eps).round()));
        std::fs::write(&path, serde_json::to_string_pretty(&reports)?)?;
        println!(
            "ε = {eps}: |u_bl|_inf {:.4e}, |u_bl|_L2 {:.4e}, residual L2 {:.4e} -> {}",
            sup.u_bl_linf,
            sup.u_bl_l2,
            sup.resid_l2,
            path.display()
        );
        sweep.push((eps, sup));
    }
    if sweep.len() < 3 {
        return Ok(true);
    }
    let fams = verify_amplitude_bounds(&sweep, cfg.alpha(), cfg.approx.order, cfg.domain.n0)?;
    for f in &fams {
        let slope = f
            .measured_slope
            .map_or("degenerate".into(), |s| format!("{s:.3}"));
        verdict_line(
            f.pass,
            &format!(
                "{}: slope {slope}, predicted {:.3}",
                f.name, f.predicted_exponent
            ),
        );
    }
    Ok(fams.iter().all(|f| f.pass))
}

fn run_ns(cfg: &RunConfig, eps: f64, nu: Option<f64>, quiet: bool, exec: Exec) -> Result<bool> {
    let nu = nu.unwrap_or(cfg.sweep.nu_scale * eps.powi(cfg.sweep.nu_power));
    let solver = NsSolver::new(cfg.ns_config(eps, nu)?, exec)?;
    eprintln!(
        "ε = {eps}, ν = {nu:e}, grid {}x{}, {:?}",
        solver.mesh().nx,
        solver.mesh().nz(),
        solver.resolution()
    );
    let run = solver.run(&[], None, |r| {
        if !quiet {
            println!("{}", r.progress_json());
        }
    })?;
    let dir = cfg.output.join(format!("ns_eps_{}", (1.0 / eps).round()));
    harness::write_checkpoint(&dir, &run.final_state, eps, cfg.ns.grid)?;
    std::fs::write(
        dir.join("records.json"),
        serde_json::to_string(&run.records)?,
    )?;
    let pass = run.ledger_drift < 0.02;
    verdict_line(
        pass,
        &format!("energy ledger drift {:.3e} < 2e-2", run.ledger_drift),
    );
    Ok(pass)
}

fn judge(records: &[harness::SweepRecord]) -> Result<bool> {
    let failed = records
        .iter()
        .filter(|r| r.status == Status::Failed)
        .count();
    for r in records.iter().filter(|r| r.status == Status::Failed) {
        eprintln!(
            "pair ε = {}, ν = {:e} failed: {}",
            r.epsilon,
            r.nu,
            r.error.as_deref().unwrap_or("")
        );
    }
    let v = harness::rate_verdict(records)?;
    let slope = v
        .fit
        .map_or("degenerate".into(), |f| format!("{:.3}", f.slope));
    verdict_line(
        v.fit.is_none_or(|f| f.slope >= v.slope_floor),
        &format!(
            "L^inf slope {slope} ≥ {:.3} ({} pairs excluded)",
            v.slope_floor, v.excluded
        ),
    );
    let trend: Vec<String> = v
        .normalized
        .iter()
        .map(|(e, q)| format!("{e}: {q:.4}"))
        .collect();
    verdict_line(
        v.non_increasing,
        &format!("normalized L2 non-increasing [{}]", trend.join(", ")),
    );
    verdict_line(failed == 0, &format!("{failed} failed pairs"));
    Ok(v.pass && failed == 0)
}

fn check(cfg: &RunConfig, suite: Suite, fields: usize, exec: Exec) -> Result<bool> {
    let mut reports = Vec::new();
    if matches!(suite, Suite::All | Suite::Weight) {
        reports.push(checks::weight_suite()?);
    }
    if matches!(suite, Suite::All | Suite::Traces) {
        reports.push(checks::trace_suite(cfg.seed, fields, exec)?);
    }
    if matches!(suite, Suite::All | Suite::Identities) {
        reports.push(checks::identity_suite(cfg.seed, fields, exec)?);
    }
    if matches!(suite, Suite::All | Suite::Scaling) {
        reports.push(checks::scaling_suite(cfg.approx.cell, exec)?);
    }
    for r in &reports {
        for c in &r.checks {
            verdict_line(
                c.pass,
                &format!(
                    "{}: {}: {:.3e} (bound {:.3e})",
                    r.suite, c.name, c.value, c.bound
                ),
            );
        }
    }
    std::fs::create_dir_all(&cfg.output)?;
    std::fs::write(
        cfg.output.join("checks.json"),
        serde_json::to_string_pretty(&reports)?,
    )?;
    Ok(reports.iter().all(|r| r.pass()))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let exec = if cli.common.sequential {
        Exec::Sequential
    } else {
        Exec::Parallel
    };
    let outcome = load(&cli.common).and_then(|cfg| match cli.command {
        Command::BuildApprox => build_approx(&cfg, exec),
        Command::RunNs { epsilon, nu, quiet } => run_ns(&cfg, epsilon, nu, quiet, exec),
        Command::Sweep { formats: f } => {
            let fmts = formats(&f)?;
            let records = harness::sweep(&cfg, |r| {
                eprintln!(
                    "ε = {}, ν = {:e}: {:?} {}",
                    r.epsilon,
                    r.nu,
                    r.status,
                    r.runtime_s.map_or(String::new(), |t| format!("({t:.1} s)"))
                );
            })?;
            for p in harness::emit(&records, &fmts, &cfg.output)? {
                eprintln!("wrote {}", p.display());
            }
            judge(&records)
        }
        Command::Check { suite, fields } => check(&cfg, suite, fields, exec),
        Command::Report { input, formats: f } => {
            let records = harness::read_json(&input)
                .with_context(|| format!("reading {}", input.display()))?;
            if records.is_empty() {
                bail!("{} holds no records", input.display());
            }
            for p in harness::emit(&records, &formats(&f)?, &cfg.output)? {
                eprintln!("wrote {}", p.display());
            }
            judge(&records)
        }
    });
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
