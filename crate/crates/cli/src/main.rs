mod lemma;

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use pqlab::degiorgi::{caccioppoli_sides, trace, verify_sup_bound, BoundReport};
use pqlab::exponents::{check_gap, derive, ExponentChain, StructureParams};
use pqlab::grid::io::{read_binary, write_binary};
use pqlab::grid::SpaceTimeField;
use pqlab::harness::{
    emit_reports, load_config, run_sweep, variational_gaps, ExperimentConfig, HarnessError,
};
use pqlab::solver::{energy_report, solve, SolveConfig};

#[derive(Parser)]
#[command(
    name = "pqlab",
    version,
    about = "Local sup-bounds for degenerate parabolic p,q-growth problems"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Experiment configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output file, prefix or directory, depending on the command.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Constant on the first term of the level formula.
    #[arg(long, global = true)]
    calibration: Option<f64>,
}

#[derive(Args, Clone)]
struct FieldArgs {
    /// Regularization parameter; defaults to the last one of the schedule.
    #[arg(long)]
    eps: Option<f64>,
    /// Use a stored field dump instead of solving.
    #[arg(long)]
    field: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum LemmaKind {
    Mollify,
    Interp,
    Geom,
    Absorb,
}

#[derive(Subcommand)]
enum Command {
    /// Print every derived exponent and the gap margin.
    Derive {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        p: f64,
        #[arg(long)]
        q: f64,
        #[arg(long)]
        alpha: f64,
        #[arg(long)]
        beta: f64,
        #[arg(long, default_value_t = 0.0)]
        mu: f64,
    },
    /// Solve the regularized problem once.
    Solve(FieldArgs),
    /// Check ess sup u <= k on every target cylinder.
    VerifyBound(FieldArgs),
    /// Record the De Giorgi levels and fit the recursion.
    TraceDegiorgi(FieldArgs),
    /// Evaluate both sides of the Caccioppoli inequality.
    CheckCaccioppoli {
        #[command(flatten)]
        field: FieldArgs,
        #[arg(long, default_value_t = 1e3)]
        max_constant: f64,
    },
    /// Evaluate the energy bound.
    CheckEnergy(FieldArgs),
    /// Evaluate the variational inequality against the comparison presets.
    CheckVarsol(FieldArgs),
    /// Run one of the auxiliary lemma suites.
    Lemma {
        #[arg(value_enum)]
        which: LemmaKind,
    },
    /// Solve the whole regularization schedule and write all reports.
    Sweep,
}

enum Failure {
    Verification(String),
    Solver(String),
    Config(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Self::Verification(_) => 1,
            Self::Solver(_) => 2,
            Self::Config(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            Self::Verification(m) | Self::Solver(m) | Self::Config(m) => m,
        }
    }
}

impl From<HarnessError> for Failure {
    fn from(e: HarnessError) -> Self {
        match e {
            HarnessError::Solve { .. } => Self::Solver(e.to_string()),
            HarnessError::Config { .. } | HarnessError::Model(_) => Self::Config(e.to_string()),
            other => Self::Verification(other.to_string()),
        }
    }
}

fn io_failure(e: impl std::fmt::Display) -> Failure {
    Failure::Config(format!("i/o error: {e}"))
}

fn config(cli: &Cli) -> Result<ExperimentConfig, Failure> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| Failure::Config("--config is required".into()))?;
    let mut cfg = load_config(path)?;
    if let Some(w) = cli.workers {
        if w == 0 {
            return Err(Failure::Config("--workers must be positive".into()));
        }
        cfg.run.workers = w;
    }
    if let Some(s) = cli.seed {
        cfg.run.seed = s;
    }
    if let Some(c) = cli.calibration {
        if !(c > 0.0 && c.is_finite()) {
            return Err(Failure::Config(format!(
                "--calibration must be positive, got {c}"
            )));
        }
        cfg.calibration.c_cal = c;
    }
    Ok(cfg)
}

fn field(
    cfg: &ExperimentConfig,
    args: &FieldArgs,
) -> Result<(SpaceTimeField, SolveConfig), Failure> {
    let eps = args
        .eps
        .unwrap_or_else(|| *cfg.schedule().last().expect("nonempty schedule"));
    let solve_cfg = cfg.solve_config(eps)?;
    let u = match &args.field {
        Some(path) => {
            let u = read_binary(BufReader::new(File::open(path).map_err(io_failure)?))
                .map_err(io_failure)?;
            if u.domain() != &solve_cfg.domain {
                return Err(Failure::Config(format!(
                    "{} does not match the configured grid",
                    path.display()
                )));
            }
            u
        }
        None => {
            solve(&solve_cfg)
                .map_err(|e| Failure::Solver(e.to_string()))?
                .field
        }
    };
    Ok((u, solve_cfg))
}

fn write_json(path: &Path, value: &Value) -> Result<(), Failure> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io_failure)?;
    }
    let mut text = serde_json::to_string_pretty(value).map_err(io_failure)?;
    text.push('\n');
    fs::write(path, text).map_err(io_failure)
}

fn emit(cli: &Cli, value: &Value) -> Result<(), Failure> {
    if let Some(path) = &cli.out {
        write_json(path, value)?;
    }
    println!(
        "{}",
        serde_json::to_string_pretty(value).map_err(io_failure)?
    );
    Ok(())
}

fn verdict(pass: bool, what: &str) -> Result<(), Failure> {
    if pass {
        Ok(())
    } else {
        Err(Failure::Verification(format!("{what} failed")))
    }
}

fn bound_reports(
    cfg: &ExperimentConfig,
    u: &SpaceTimeField,
    sc: &SolveConfig,
) -> Result<Vec<BoundReport>, Failure> {
    let d = cfg.exponents()?;
    let a = cfg.coefficient_a.sample(&sc.domain);
    let b = cfg.coefficient_b.sample(&sc.domain);
    let params = sc.spec.params;
    let mut out = Vec::new();
    for t in cfg.target_list()? {
        out.push(
            verify_sup_bound(
                u,
                &t.center,
                t.t,
                t.rho,
                t.sigma,
                &a,
                &b,
                &params,
                &d,
                cfg.calibration.c_cal,
            )
            .map_err(|e| Failure::Config(e.to_string()))?,
        );
    }
    Ok(out)
}

fn num(v: f64) -> String {
    format!("{v}")
}

fn run(cli: &Cli) -> Result<(), Failure> {
    match &cli.command {
        Command::Derive {
            n,
            p,
            q,
            alpha,
            beta,
            mu,
        } => {
            let params = StructureParams::new(*n, *p, *q, *alpha, *beta).with_mu(*mu);
            let gap = check_gap(&params).map_err(|e| Failure::Config(e.to_string()))?;
            let d = derive(&params).map_err(|e| Failure::Config(e.to_string()))?;
            let chain = ExponentChain::new(&params, &d);
            emit(
                cli,
                &json!({ "params": params, "exponents": d, "gap": gap, "chain": chain, "chain_holds": chain.holds(1e-12) }),
            )
        }
        Command::Solve(args) => {
            let cfg = config(cli)?;
            let eps = args
                .eps
                .unwrap_or_else(|| *cfg.schedule().last().expect("nonempty schedule"));
            let sc = cfg.solve_config(eps)?;
            let sol = solve(&sc).map_err(|e| Failure::Solver(e.to_string()))?;
            let manifest = json!({
                "config": cfg,
                "eps": eps,
                "iterations": sol.steps.iter().map(|s| s.iterations).collect::<Vec<_>>(),
                "residuals": sol.steps.iter().map(|s| s.residual).collect::<Vec<_>>(),
            });
            let energy =
                serde_json::to_value(energy_report(&sol.field, &sc)).map_err(io_failure)?;
            if let Some(prefix) = &cli.out {
                let with = |ext: &str| PathBuf::from(format!("{}{ext}", prefix.display()));
                write_json(&with(".manifest.json"), &manifest)?;
                write_json(&with(".energy.json"), &energy)?;
                let mut f = BufWriter::new(File::create(with(".bin")).map_err(io_failure)?);
                write_binary(&sol.field, &mut f).map_err(io_failure)?;
                f.flush().map_err(io_failure)?;
            }
            println!(
                "{}",
                serde_json::to_string_pretty(&json!({ "manifest": manifest, "energy": energy }))
                    .map_err(io_failure)?
            );
            Ok(())
        }
        Command::VerifyBound(args) => {
            let cfg = config(cli)?;
            let (u, sc) = field(&cfg, args)?;
            let reports = bound_reports(&cfg, &u, &sc)?;
            if let Some(path) = &cli.out {
                let mut w = csv::Writer::from_path(path).map_err(io_failure)?;
                let header = [
                    "center_x",
                    "center_y",
                    "center_t",
                    "rho",
                    "sigma",
                    "ess_sup",
                    "k_choice",
                    "k_theorem",
                    "margin",
                    "eps",
                    "eps_threshold",
                    "pass",
                ];
                w.write_record(header).map_err(io_failure)?;
                for r in &reports {
                    w.write_record([
                        num(r.center[0]),
                        r.center.get(1).copied().map(num).unwrap_or_default(),
                        num(r.t),
                        num(r.rho),
                        num(r.sigma),
                        num(r.ess_sup),
                        num(r.k_choice),
                        num(r.k_theorem),
                        num(r.margin),
                        num(r.eps),
                        num(r.eps_threshold),
                        r.pass.to_string(),
                    ])
                    .map_err(io_failure)?;
                }
                w.flush().map_err(io_failure)?;
            }
            println!(
                "{}",
                serde_json::to_string_pretty(&reports).map_err(io_failure)?
            );
            verdict(reports.iter().all(|r| r.pass), "sup bound")
        }
        Command::TraceDegiorgi(args) => {
            let cfg = config(cli)?;
            let (u, sc) = field(&cfg, args)?;
            let d = cfg.exponents()?;
            let reports = bound_reports(&cfg, &u, &sc)?;
            let mut traces = Vec::new();
            for r in &reports {
                traces.push(
                    trace(
                        &u,
                        &r.center,
                        r.t,
                        r.rho,
                        r.sigma,
                        r.k_choice,
                        &d,
                        cfg.targets.trace_depth,
                    )
                    .map_err(|e| Failure::Config(e.to_string()))?,
                );
            }
            for w in traces.iter().flat_map(|t| &t.warnings) {
                eprintln!("warning: {w}");
            }
            emit(cli, &serde_json::to_value(&traces).map_err(io_failure)?)?;
            verdict(traces.iter().all(|t| t.converges), "De Giorgi recursion")
        }
        Command::CheckCaccioppoli {
            field: args,
            max_constant,
        } => {
            let cfg = config(cli)?;
            let (u, sc) = field(&cfg, args)?;
            let d = cfg.exponents()?;
            let a = cfg.coefficient_a.sample(&sc.domain);
            let b = cfg.coefficient_b.sample(&sc.domain);
            let reports = bound_reports(&cfg, &u, &sc)?;
            let mut rows = Vec::new();
            for (t, r) in cfg.target_list()?.iter().zip(&reports) {
                for &fraction in &cfg.targets.caccioppoli_levels {
                    let k = fraction * r.ess_sup;
                    let sides =
                        caccioppoli_sides(&u, k, &t.half(), &t.full(), &a, &b, &sc.spec.params, &d)
                            .map_err(|e| Failure::Config(e.to_string()))?;
                    rows.push((t.clone(), fraction, k, sides));
                }
            }
            if let Some(path) = &cli.out {
                let mut w = csv::Writer::from_path(path).map_err(io_failure)?;
                w.write_record([
                    "center_x",
                    "center_y",
                    "center_t",
                    "rho",
                    "sigma",
                    "fraction",
                    "k",
                    "lhs",
                    "rhs_mu",
                    "rhs_gamma",
                    "rhs_eps",
                    "rhs_time",
                    "c_min",
                ])
                .map_err(io_failure)?;
                for (t, fraction, k, s) in &rows {
                    let mut rec = vec![
                        num(t.center[0]),
                        t.center.get(1).copied().map(num).unwrap_or_default(),
                        num(t.t),
                        num(t.rho),
                        num(t.sigma),
                        num(*fraction),
                        num(*k),
                        num(s.lhs),
                    ];
                    rec.extend(s.rhs_terms.iter().map(|v| num(*v)));
                    rec.push(num(s.c_min));
                    w.write_record(rec).map_err(io_failure)?;
                }
                w.flush().map_err(io_failure)?;
            }
            let worst = rows.iter().map(|r| r.3.c_min).fold(0.0, f64::max);
            println!(
                "{}",
                json!({ "rows": rows.len(), "max_c_min": worst, "limit": max_constant })
            );
            verdict(worst <= *max_constant, "Caccioppoli constant")
        }
        Command::CheckEnergy(args) => {
            let cfg = config(cli)?;
            let (u, sc) = field(&cfg, args)?;
            let e = energy_report(&u, &sc);
            emit(cli, &serde_json::to_value(e).map_err(io_failure)?)?;
            let dual_ok = !sc.boundary.is_time_independent() || e.dual_term == 0.0;
            verdict(
                e.lhs.is_finite() && e.c_emp.is_finite() && dual_ok,
                "energy bound",
            )
        }
        Command::CheckVarsol(args) => {
            let cfg = config(cli)?;
            let (u, sc) = field(&cfg, args)?;
            let gaps = variational_gaps(&u, &sc)?;
            if let Some(path) = &cli.out {
                let mut w = csv::Writer::from_path(path).map_err(io_failure)?;
                w.write_record(["map", "level", "gap", "scale"])
                    .map_err(io_failure)?;
                for g in &gaps {
                    for (j, v) in g.profile.iter().enumerate() {
                        w.write_record([g.name.clone(), j.to_string(), num(*v), num(g.scale)])
                            .map_err(io_failure)?;
                    }
                }
                w.flush().map_err(io_failure)?;
            }
            let summary: Vec<Value> = gaps
                .iter()
                .map(|g| json!({ "map": g.name, "min_gap": g.min_gap, "level": g.min_level, "scale": g.scale, "pass": g.pass }))
                .collect();
            println!(
                "{}",
                serde_json::to_string_pretty(&summary).map_err(io_failure)?
            );
            verdict(gaps.iter().all(|g| g.pass), "variational inequality")
        }
        Command::Lemma { which } => {
            let seed = cli.seed.unwrap_or(0);
            let cases = match which {
                LemmaKind::Mollify => lemma::mollify(seed),
                LemmaKind::Interp => lemma::interp(),
                LemmaKind::Geom => lemma::geom(seed),
                LemmaKind::Absorb => lemma::absorb(seed),
            };
            let pass = cases.iter().all(|c| c["pass"] == json!(true));
            emit(cli, &Value::Array(cases))?;
            verdict(pass, "lemma suite")
        }
        Command::Sweep => {
            let cfg = config(cli)?;
            let dir = cli
                .out
                .clone()
                .unwrap_or_else(|| PathBuf::from(&cfg.output.dir));
            let run = run_sweep(&cfg)?;
            emit_reports(&run, &dir)?;
            let r = &run.report;
            println!(
                "{}",
                json!({
                    "dir": dir.display().to_string(),
                    "items": r.items.len(),
                    "compliance_index": r.compliance_index,
                    "cauchy": r.cauchy,
                    "failure": r.failure,
                    "pass": r.pass,
                })
            );
            if let Some(f) = &r.failure {
                return Err(Failure::Solver(f.message.clone()));
            }
            verdict(r.pass, "sweep")
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("pqlab: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
