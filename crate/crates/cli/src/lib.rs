pub mod config;
pub mod report;

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use logbound::analysis::{ground_level, limit_profile, unshift_factor};
use logbound::grid::Field;
use logbound::solve::{
    continuation_sweep, mountain_pass_level, saddle_minmax, solve_critical, MountainPassOptions, Seed, SolveError,
    SolveOptions, SolveReport,
};
use logbound::validate::{run_suite, Mutation, ValidateOptions};
use thiserror::Error;

use config::RunConfig;
use report::{diagnostics, RunReport, SweepRow};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error("io: {0}")]
    Io(String),
    #[error(transparent)]
    Solve(#[from] SolveError),
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

/// Process exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    /// Converged and the penalization is inactive.
    Success,
    /// A critical point of the penalized functional was found but it does not
    /// solve the original equation.
    Unrecovered,
    Failure,
}

impl Outcome {
    pub fn code(self) -> u8 {
        match self {
            Outcome::Success => 0,
            Outcome::Unrecovered => 2,
            Outcome::Failure => 1,
        }
    }

    fn of(report: &SolveReport) -> Self {
        if !report.converged {
            Outcome::Failure
        } else if report.penalization_active {
            Outcome::Unrecovered
        } else {
            Outcome::Success
        }
    }
}

/// Shared run settings from the command line.
#[derive(Debug, Clone, Default)]
pub struct RunFlags {
    pub out: PathBuf,
    pub dump_fields: bool,
    /// `gaussian` or a path to a field dump (`.csv` on the problem grid, or a
    /// binary dump on any grid).
    pub seed: Option<String>,
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path).map(BufWriter::new).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<(), CliError> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| CliError::Io(e.to_string()))?;
    writeln!(w)?;
    Ok(())
}

fn resolve_seed(flags: &RunFlags, cfg: &RunConfig, eps: f64) -> Result<SolveOptions, CliError> {
    let mut opts = cfg.solve_options();
    if flags.dump_fields {
        let dir = flags.out.join("snapshots");
        std::fs::create_dir_all(&dir)?;
        opts.snapshot_every = Some(cfg.raw.solver.snapshot_every);
        opts.snapshot_dir = Some(dir);
    }
    match flags.seed.as_deref() {
        None | Some("gaussian") => {}
        Some(path) => {
            let p = Path::new(path);
            let file = File::open(p).map_err(|e| CliError::Io(format!("seed {path}: {e}")))?;
            let spec = cfg.template.build(eps)?;
            let field = if p.extension().is_some_and(|e| e == "csv") {
                Field::read_csv(spec.grid().clone(), BufReader::new(file))
            } else {
                Field::read_binary(BufReader::new(file))
            }
            .map_err(|e| CliError::Config(format!("seed {path}: {e}")))?;
            // dumps hold solutions of the original equation
            opts.seed = Seed::Field(field.scaled(1.0 / unshift_factor(spec.cfg().gauge_shift)));
        }
    }
    Ok(opts)
}

fn write_field(path: &Path, u: &Field) -> Result<(), CliError> {
    let mut w = create(path)?;
    u.write_csv(&mut w)?;
    Ok(())
}

pub fn cmd_solve(cfg: &RunConfig, flags: &RunFlags) -> Result<Outcome, CliError> {
    std::fs::create_dir_all(&flags.out)?;
    let eps = cfg.eps()?;
    let spec = cfg.template.build(eps)?;
    let opts = resolve_seed(flags, cfg, eps)?;
    let report = match solve_critical(&spec, &opts) {
        Ok(r) => r,
        Err(SolveError::NoConvergence { report, .. }) => *report,
        Err(e) => return Err(e.into()),
    };
    let mp = match &cfg.raw.mountain_pass {
        Some(m) => Some(mountain_pass_level(
            &spec,
            &m.path_seeds,
            &MountainPassOptions { iterations: m.iterations, ..Default::default() },
        )?),
        None => None,
    };
    finish_single(cfg, flags, &spec, eps, report, mp, None)
}

pub fn cmd_saddle(cfg: &RunConfig, flags: &RunFlags) -> Result<Outcome, CliError> {
    std::fs::create_dir_all(&flags.out)?;
    let eps = cfg.eps()?;
    let points = &cfg.raw.saddle.as_ref().ok_or_else(|| CliError::Config("`saddle.points` is required".into()))?.points;
    let spec = cfg.template.build(eps)?;
    let opts = resolve_seed(flags, cfg, eps)?;
    let sr = saddle_minmax(&spec, points, &opts)?;
    let report = sr.report.clone();
    finish_single(cfg, flags, &spec, eps, report, None, Some(sr))
}

fn finish_single(
    cfg: &RunConfig,
    flags: &RunFlags,
    spec: &logbound::functional::ProblemSpec,
    eps: f64,
    report: SolveReport,
    mp: Option<logbound::solve::MountainPassEstimate>,
    saddle: Option<logbound::solve::SaddleReport>,
) -> Result<Outcome, CliError> {
    let outcome = Outcome::of(&report);
    let diag = diagnostics(&report, spec, cfg)?;
    let original = report.unshifted();
    write_field(&flags.out.join("field.csv"), &original)?;
    if let Some(fit) = &diag.decay {
        let mut w = create(&flags.out.join("decay.csv"))?;
        writeln!(w, "dist,log_u,fit")?;
        for (d, l) in &fit.samples {
            writeln!(w, "{d:?},{l:?},{:?}", fit.intercept + fit.slope * d.powf(fit.exponent))?;
        }
    }
    let run = RunReport::new(cfg, spec, eps, &report, diag, mp, saddle);
    write_json(&flags.out.join("report.json"), &run)?;
    Ok(outcome)
}

pub fn cmd_sweep(cfg: &RunConfig, flags: &RunFlags) -> Result<Outcome, CliError> {
    let eps_list = cfg.eps_list()?;
    std::fs::create_dir_all(&flags.out)?;
    let opts = resolve_seed(flags, cfg, eps_list[0])?;
    let entries = continuation_sweep(&cfg.template, &eps_list, &opts, cfg.raw.solver.warm_start)?;
    let mut rows = Vec::with_capacity(entries.len());
    let mut outcome = Outcome::Success;
    for e in &entries {
        let report = match &e.result {
            Ok(r) => Some(r),
            Err(SolveError::NoConvergence { report, .. }) => Some(report.as_ref()),
            Err(_) => None,
        };
        let row = match report {
            Some(r) => {
                let spec = cfg.template.build(e.eps)?;
                let diag = diagnostics(r, &spec, cfg)?;
                if flags.dump_fields {
                    write_field(&flags.out.join(format!("field_eps{}.csv", e.eps)), &r.unshifted())?;
                }
                let o = Outcome::of(r);
                outcome = worse(outcome, o);
                SweepRow::from_report(e.eps, r, &diag, status_of(o))
            }
            None => {
                outcome = Outcome::Failure;
                let err = e.result.as_ref().err().map(|x| x.to_string()).unwrap_or_default();
                SweepRow::failed(e.eps, cfg.template.dim, err)
            }
        };
        rows.push(row);
    }
    let mut w = create(&flags.out.join("sweep.csv"))?;
    report::write_sweep_csv(&mut w, cfg.template.dim, &rows)?;
    Ok(outcome)
}

fn worse(a: Outcome, b: Outcome) -> Outcome {
    if a.code() == 1 || b.code() == 1 {
        Outcome::Failure
    } else if a.code() == 2 || b.code() == 2 {
        Outcome::Unrecovered
    } else {
        Outcome::Success
    }
}

fn status_of(o: Outcome) -> &'static str {
    match o {
        Outcome::Success => "ok",
        Outcome::Unrecovered => "penalization_active",
        Outcome::Failure => "no_convergence",
    }
}

pub fn cmd_validate(out: Option<&Path>, mutation: Mutation, seed: u64) -> Result<Outcome, CliError> {
    let r = run_suite(&ValidateOptions { mutation, seed, ..Default::default() });
    println!("{:<24} {:>7} {:>9} {:>11}  result", "property", "cases", "failures", "worst");
    for p in &r.properties {
        println!(
            "{:<24} {:>7} {:>9} {:>11.3e}  {}",
            p.name,
            p.cases,
            p.failures,
            p.worst,
            if p.passed { "pass" } else { "FAIL" }
        );
    }
    println!("{} cases in {:.1} s", r.total_cases, r.seconds);
    if let Some(dir) = out {
        std::fs::create_dir_all(dir)?;
        write_json(&dir.join("validate.json"), &r)?;
    }
    Ok(if r.all_passed() { Outcome::Success } else { Outcome::Failure })
}

#[derive(Debug, Clone)]
pub struct ProfileArgs {
    pub a: f64,
    pub b: f64,
    pub dim: usize,
    /// Largest radius sampled, rescaled units.
    pub extent: f64,
    pub samples: usize,
}

pub fn cmd_limit_profile(args: &ProfileArgs, out: &Path) -> Result<Outcome, CliError> {
    if !(args.b > 0.0) {
        return Err(CliError::Config(format!("b must be positive, got {}", args.b)));
    }
    if args.samples < 2 || !(args.extent > 0.0) {
        return Err(CliError::Config("need at least two samples on a positive extent".into()));
    }
    let p = limit_profile(args.a, args.b, args.dim).map_err(|e| CliError::Config(e.to_string()))?;
    std::fs::create_dir_all(out)?;
    let mut w = create(&out.join("profile.csv"))?;
    writeln!(w, "r,value")?;
    for i in 0..args.samples {
        let r = args.extent * i as f64 / (args.samples - 1) as f64;
        writeln!(w, "{r:?},{:?}", p.value_at_radius_sq(r * r))?;
    }
    println!("{:.15e}", p.level);
    debug_assert_eq!(p.level, ground_level(args.a, args.b, args.dim));
    Ok(Outcome::Success)
}
