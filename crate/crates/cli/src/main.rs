mod config;

use std::collections::BTreeSet;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::Context;
use clap::{Parser, Subcommand};
use lagctrl_core::adjoint::AdjointField;
use lagctrl_core::flowmap::{advect_many, FlowTrace};
use lagctrl_core::gram::gram_report;
use lagctrl_core::pde::{FluidState, NonlinDiag};
use lagctrl_core::verify::{identity_suite, SuiteOptions};
use lagctrl_core::{Error, RunConfig, ShootingContext};
use serde::Serialize;

/// Lagrangian control of a 1D viscous compressible flow.
#[derive(Debug, Parser)]
#[command(name = "lagctrl", version)]
struct Cli {
    /// TOML configuration file; built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override a configuration entry, e.g. `--set numerics.cells=512`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    /// Output directory; overrides `output.directory`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Validate the configuration, print it with defaults resolved and exit.
    #[arg(long, global = true)]
    dry_run: bool,
    /// Worker thread cap.
    #[arg(long, env = "LAGCTRL_THREADS", global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Gram matrix report and adjoint-field samples on the control window.
    Gram,
    /// Newton shooting for the control amplitudes.
    Synthesize,
    /// One nonlinear solve and flow map for given amplitudes.
    Simulate {
        /// Comma-separated amplitudes, one per point; zero when omitted.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        epsilon: Vec<f64>,
    },
    /// Identity and convergence checks.
    Verify {
        /// Restrict to these check groups (gram, duality, linearization, trig).
        #[arg(long, value_delimiter = ',')]
        only: Vec<String>,
        /// Multiplies every tolerance.
        #[arg(long, default_value_t = 1.0)]
        tolerance_scale: f64,
        /// Random tuples per size in the trig group.
        #[arg(long)]
        trig_cases: Option<usize>,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Gram => "gram",
            Command::Synthesize => "synthesize",
            Command::Simulate { .. } => "simulate",
            Command::Verify { .. } => "verify",
        }
    }
}

const EXIT_CONFIG: u8 = 1;
const EXIT_DEGENERATE: u8 = 2;
const EXIT_DIVERGED: u8 = 3;
const EXIT_AMPLITUDE: u8 = 4;
const EXIT_CHECKS_FAILED: u8 = 5;

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Error>() {
        Some(Error::DegenerateGram { .. }) => EXIT_DEGENERATE,
        Some(Error::Diverged(_)) => EXIT_DIVERGED,
        Some(
            Error::AmplitudeTooLarge(_)
            | Error::VacuumApproach { .. }
            | Error::NonFiniteField { .. }
            | Error::CflViolation { .. },
        ) => EXIT_AMPLITUDE,
        _ => EXIT_CONFIG,
    }
}

#[derive(Serialize)]
struct Header {
    tool: &'static str,
    version: &'static str,
    command: &'static str,
    /// Seconds since the Unix epoch; the only field that varies between runs.
    timestamp: u64,
}

#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    header: Header,
    config: &'a RunConfig,
    report: &'a T,
}

struct Run {
    command: &'static str,
    config: RunConfig,
    dir: PathBuf,
}

impl Run {
    fn create(&self, name: &str) -> anyhow::Result<BufWriter<File>> {
        let path = self.dir.join(name);
        let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
        Ok(BufWriter::new(file))
    }

    fn write_json<T: Serialize>(&self, name: &str, report: &T) -> anyhow::Result<()> {
        let envelope = Envelope {
            header: Header {
                tool: "lagctrl",
                version: env!("CARGO_PKG_VERSION"),
                command: self.command,
                timestamp: SystemTime::now()
                    .duration_since(UNIX_EPOCH)
                    .map(|d| d.as_secs())
                    .unwrap_or(0),
            },
            config: &self.config,
            report,
        };
        let mut w = self.create(name)?;
        serde_json::to_writer_pretty(&mut w, &envelope)?;
        writeln!(w)?;
        w.flush()?;
        Ok(())
    }

    fn write_traces(&self, traces: &[FlowTrace]) -> anyhow::Result<()> {
        for (i, trace) in traces.iter().enumerate() {
            trace.write_csv(self.create(&format!("trajectory_{}.csv", i + 1))?)?;
        }
        Ok(())
    }

    fn write_state(&self, state: &FluidState, ctx: &ShootingContext) -> anyhow::Result<()> {
        let grid = ctx.grid();
        let mut w = self.create("final_state.csv")?;
        writeln!(w, "field,x,value")?;
        for (x, rho) in grid.centers().iter().zip(&state.rho) {
            writeln!(w, "rho,{x:.16e},{rho:.16e}")?;
        }
        for (x, u) in grid.nodes().iter().zip(&state.u) {
            writeln!(w, "u,{x:.16e},{u:.16e}")?;
        }
        w.flush()?;
        Ok(())
    }
}

fn warn_conditioning(report: &lagctrl_core::GramReport) {
    if report.near_degenerate() {
        eprintln!(
            "warning: Gram matrix is near-degenerate (condition number {:.3e}, eigenvalues {:.3e}..{:.3e})",
            report.condition_number, report.min_eigenvalue, report.max_eigenvalue
        );
    }
}

fn cmd_gram(run: &Run) -> anyhow::Result<()> {
    let cfg = &run.config;
    let p = &cfg.problem;
    let cutoff = p.cutoff()?;
    let fields = p
        .alphas
        .iter()
        .map(|&a| {
            Ok(
                AdjointField::new(a, cfg.gas.c, p.horizon, cfg.numerics.gram_truncation)?
                    .with_acceleration(cfg.numerics.acceleration),
            )
        })
        .collect::<lagctrl_core::Result<Vec<_>>>()?;
    let report = gram_report(&fields, &cutoff, &cfg.numerics.quad)?;
    warn_conditioning(&report);
    run.write_json("gram.json", &report)?;
    if cfg.output.csv {
        let ts: Vec<f64> = (0..=40).map(|k| p.horizon * k as f64 / 40.0).collect();
        let (lo, hi) = p.omega;
        let xs: Vec<f64> = (0..=50).map(|k| lo + (hi - lo) * k as f64 / 50.0).collect();
        let samples = fields
            .iter()
            .map(|f| f.xi_batch(&ts, &xs))
            .collect::<lagctrl_core::Result<Vec<_>>>()?;
        let mut w = run.create("xi.csv")?;
        write!(w, "t,x,chi")?;
        for i in 1..=fields.len() {
            write!(w, ",xi_{i}")?;
        }
        writeln!(w)?;
        for (a, t) in ts.iter().enumerate() {
            for (b, x) in xs.iter().enumerate() {
                write!(w, "{t:.16e},{x:.16e},{:.16e}", cutoff.chi_eval(*x))?;
                for s in &samples {
                    write!(w, ",{:.16e}", s[[a, b]])?;
                }
                writeln!(w)?;
            }
        }
        w.flush()?;
    }
    report.ensure_nondegenerate()?;
    println!(
        "gram: d={} det={:.6e} condition={:.6e} -> {}",
        report.d,
        report.det,
        report.condition_number,
        run.dir.join("gram.json").display()
    );
    Ok(())
}

fn cmd_synthesize(run: &Run) -> anyhow::Result<()> {
    let cfg = &run.config;
    let ctx = ShootingContext::new(&cfg.problem, &cfg.gas, &cfg.numerics)?;
    warn_conditioning(ctx.gram());
    let report = ctx.synthesize()?;
    for entry in &report.log {
        eprintln!("{entry}");
    }
    run.write_json("synthesis.json", &report)?;
    let (_, sim) = ctx.theta_with_run(&report.epsilon)?;
    if cfg.output.csv {
        run.write_traces(&advect_many(
            &sim.history,
            &cfg.problem.alphas,
            &cfg.numerics.integrator(),
        )?)?;
        run.write_state(&sim.state, &ctx)?;
    }
    println!(
        "synthesize: converged in {} iterations, residual {:.3e}, epsilon {:?}",
        report.iterations,
        report.max_residual(),
        report.epsilon
    );
    Ok(())
}

#[derive(Serialize)]
struct SimulateReport {
    epsilon: Vec<f64>,
    terminal: Vec<f64>,
    residual: Vec<f64>,
    diagnostics: NonlinDiag,
}

fn cmd_simulate(run: &Run, epsilon: &[f64]) -> anyhow::Result<()> {
    let cfg = &run.config;
    let d = cfg.problem.d();
    let epsilon = if epsilon.is_empty() {
        vec![0.0; d]
    } else {
        epsilon.to_vec()
    };
    if epsilon.len() != d {
        return Err(Error::InvalidConfig {
            field: "epsilon".into(),
            reason: format!("has {} values but the problem has {d} points", epsilon.len()),
        }
        .into());
    }
    let ctx = ShootingContext::new(&cfg.problem, &cfg.gas, &cfg.numerics)?;
    let (terminal, sim) = ctx.theta_with_run(&epsilon)?;
    let residual = terminal.iter().zip(&cfg.problem.betas).map(|(t, b)| t - b).collect();
    let report = SimulateReport {
        epsilon,
        terminal,
        residual,
        diagnostics: sim.diag,
    };
    if cfg.output.lcns {
        let mut w = run.create("velocity.lcns")?;
        sim.history.write_lcns(&mut w)?;
    }
    run.write_json("simulate.json", &report)?;
    if cfg.output.csv {
        run.write_traces(&advect_many(
            &sim.history,
            &cfg.problem.alphas,
            &cfg.numerics.integrator(),
        )?)?;
        run.write_state(&sim.state, &ctx)?;
    }
    println!("simulate: terminal positions {:?}", report.terminal);
    Ok(())
}

fn cmd_verify(run: &Run, only: &[String], tolerance_scale: f64, trig_cases: Option<usize>) -> anyhow::Result<bool> {
    let cfg = &run.config;
    let mut opts = SuiteOptions {
        only: only.iter().cloned().collect::<BTreeSet<_>>(),
        tolerance_scale,
        ..SuiteOptions::default()
    };
    if let Some(n) = trig_cases {
        opts.trig_cases = n;
    }
    let report = identity_suite(&cfg.problem, &cfg.gas, &cfg.numerics, &opts)?;
    print!("{report}");
    run.write_json("verify.json", &report)?;
    Ok(report.passed())
}

fn execute(cli: &Cli) -> anyhow::Result<u8> {
    let mut config = config::load(cli.config.as_deref(), &cli.overrides)?;
    if let Some(out) = &cli.out {
        config.output.directory = out.clone();
    }
    if cli.dry_run {
        print!("{}", toml::to_string(&config)?);
        return Ok(0);
    }
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the worker pool")?;
    }
    let dir = config.output.directory.clone();
    fs::create_dir_all(&dir).with_context(|| format!("creating output directory {}", dir.display()))?;
    let run = Run {
        command: cli.command.name(),
        config,
        dir,
    };
    match &cli.command {
        Command::Gram => cmd_gram(&run)?,
        Command::Synthesize => cmd_synthesize(&run)?,
        Command::Simulate { epsilon } => cmd_simulate(&run, epsilon)?,
        Command::Verify {
            only,
            tolerance_scale,
            trig_cases,
        } => {
            if !cmd_verify(&run, only, *tolerance_scale, *trig_cases)? {
                return Ok(EXIT_CHECKS_FAILED);
            }
        }
    }
    Ok(0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_follow_error_kind() {
        let code = |e: Error| exit_code(&anyhow::Error::from(e));
        assert_eq!(
            code(Error::DegenerateGram {
                min_eigenvalue: 0.0,
                max_eigenvalue: 1.0
            }),
            EXIT_DEGENERATE
        );
        assert_eq!(code(Error::Diverged("x".into())), EXIT_DIVERGED);
        assert_eq!(code(Error::AmplitudeTooLarge("x".into())), EXIT_AMPLITUDE);
        assert_eq!(
            code(Error::InvalidConfig {
                field: "problem.eta".into(),
                reason: "x".into()
            }),
            EXIT_CONFIG
        );
        assert_eq!(exit_code(&anyhow::anyhow!("plain")), EXIT_CONFIG);
    }

    #[test]
    fn command_line_parses() {
        let cli = Cli::try_parse_from([
            "lagctrl",
            "simulate",
            "--epsilon",
            "-1.5,2",
            "--set",
            "numerics.cells=64",
        ])
        .unwrap();
        match cli.command {
            Command::Simulate { epsilon } => assert_eq!(epsilon, vec![-1.5, 2.0]),
            other => panic!("{other:?}"),
        }
        assert_eq!(cli.overrides, vec!["numerics.cells=64"]);
    }
}
