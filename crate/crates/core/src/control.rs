//! The endpoint map `Theta(eps) = (phi[sum_i eps_i f_i](T, alpha_j))_j` and
//! quasi-Newton shooting for `Theta(eps) = beta`.
//!
//! The Gram matrix is the exact Jacobian of `Theta` at `eps = 0`, so it is
//! used as the frozen Jacobian until the residual stops contracting; after
//! that a central-difference Jacobian is rebuilt every iteration.

use std::f64::consts::PI;
use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::adjoint::{AdjointField, Cutoff, ForcingTable, Superposition};
use crate::flowmap::{advect_many, IntegratorOptions};
use crate::gram::{gram_report, linear_predict, GramReport, QuadSpec};
use crate::pde::{solve_nonlinear, GasModel, Grid, NonlinearRun, SolverOptions};
use crate::{par, Error, Result};

/// Source points, targets, horizon and control window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControlProblem {
    pub alphas: Vec<f64>,
    pub betas: Vec<f64>,
    #[serde(alias = "T")]
    pub horizon: f64,
    pub omega: (f64, f64),
    pub eta: f64,
}

impl Default for ControlProblem {
    fn default() -> Self {
        Self {
            alphas: vec![0.3, 0.6],
            betas: vec![0.301, 0.5995],
            horizon: 2.0,
            omega: (1.5, 2.5),
            eta: 0.1,
        }
    }
}

fn invalid(field: &str, reason: impl Into<String>) -> Error {
    Error::InvalidConfig {
        field: field.to_string(),
        reason: reason.into(),
    }
}

fn check_points(field: &str, xs: &[f64]) -> Result<()> {
    if xs.is_empty() {
        return Err(invalid(field, "needs at least one point"));
    }
    for (k, &x) in xs.iter().enumerate() {
        if !(x > 0.0 && x < 1.0) {
            return Err(invalid(&format!("{field}[{k}]"), format!("{x} is not inside (0, 1)")));
        }
    }
    if let Some(k) = xs.windows(2).position(|w| w[0] >= w[1]) {
        return Err(invalid(
            field,
            format!("must be strictly increasing ({} >= {})", xs[k], xs[k + 1]),
        ));
    }
    Ok(())
}

impl ControlProblem {
    pub fn d(&self) -> usize {
        self.alphas.len()
    }

    pub fn validate(&self) -> Result<()> {
        check_points("problem.alphas", &self.alphas)?;
        check_points("problem.betas", &self.betas)?;
        if self.betas.len() != self.alphas.len() {
            return Err(invalid(
                "problem.betas",
                format!("has {} points but alphas has {}", self.betas.len(), self.alphas.len()),
            ));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(invalid("problem.horizon", format!("{} must be positive", self.horizon)));
        }
        let (lo, hi) = self.omega;
        if !(lo > 1.0 && lo < hi && hi < PI) {
            return Err(invalid(
                "problem.omega",
                format!("({lo}, {hi}) must have closure inside (1, pi)"),
            ));
        }
        if !(self.eta > 0.0 && 2.0 * self.eta < hi - lo) {
            return Err(invalid(
                "problem.eta",
                format!("{} must satisfy 0 < 2 eta < {}", self.eta, hi - lo),
            ));
        }
        Ok(())
    }

    /// `beta - alpha`.
    pub fn displacement(&self) -> Vec<f64> {
        self.betas.iter().zip(&self.alphas).map(|(b, a)| b - a).collect()
    }

    pub fn cutoff(&self) -> Result<Cutoff> {
        Cutoff::new(self.omega, self.eta)
    }
}

/// Discretization and solver settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Numerics {
    /// Finite-difference cells `M`.
    pub cells: usize,
    /// Time step; sized from `cfl_target` when absent.
    pub dt: Option<f64>,
    /// `dt c / dx` used to size the step.
    pub cfl_target: f64,
    /// Bound on `dt (max|u| + sound speed) / dx` enforced every step.
    pub cfl_limit: f64,
    /// Series truncation for the Gram quadrature.
    pub gram_truncation: usize,
    /// Series truncation for the tabulated forcings.
    pub forcing_truncation: usize,
    pub acceleration: bool,
    pub quad: QuadSpec,
    pub density_floor: f64,
    pub substeps: usize,
    /// Position tolerance `max_i |phi(T, alpha_i) - beta_i|`.
    pub tol_pos: f64,
    pub max_iter: usize,
    pub max_halvings: usize,
    /// Residual ratio above which an iteration counts as non-contracting.
    pub contraction: f64,
    /// Non-contracting iterations tolerated before switching Jacobians.
    pub stall_limit: usize,
    pub seed: u64,
}

impl Default for Numerics {
    fn default() -> Self {
        Self {
            cells: 1024,
            dt: None,
            cfl_target: 0.4,
            cfl_limit: 0.5,
            gram_truncation: 2048,
            forcing_truncation: 512,
            acceleration: true,
            quad: QuadSpec::default(),
            density_floor: 0.1,
            substeps: 1,
            tol_pos: 1e-6,
            max_iter: 25,
            max_halvings: 10,
            contraction: 0.5,
            stall_limit: 3,
            seed: 20240601,
        }
    }
}

impl Numerics {
    pub fn validate(&self) -> Result<()> {
        let pos = |field: &str, ok: bool, v: &dyn fmt::Display| {
            if ok {
                Ok(())
            } else {
                Err(invalid(field, format!("{v} is out of range")))
            }
        };
        pos("numerics.cells", self.cells >= 4, &self.cells)?;
        if let Some(dt) = self.dt {
            pos("numerics.dt", dt > 0.0 && dt.is_finite(), &dt)?;
        }
        pos(
            "numerics.cfl_target",
            self.cfl_target > 0.0 && self.cfl_target <= self.cfl_limit,
            &self.cfl_target,
        )?;
        pos("numerics.cfl_limit", self.cfl_limit > 0.0, &self.cfl_limit)?;
        pos(
            "numerics.gram_truncation",
            self.gram_truncation >= 1,
            &self.gram_truncation,
        )?;
        pos(
            "numerics.forcing_truncation",
            self.forcing_truncation >= 1,
            &self.forcing_truncation,
        )?;
        pos(
            "numerics.quad",
            self.quad.validate().is_ok(),
            &format_args!("{:?}", self.quad),
        )?;
        pos(
            "numerics.density_floor",
            (0.0..1.0).contains(&self.density_floor),
            &self.density_floor,
        )?;
        pos("numerics.substeps", self.substeps >= 1, &self.substeps)?;
        pos("numerics.tol_pos", self.tol_pos > 0.0, &self.tol_pos)?;
        pos(
            "numerics.contraction",
            self.contraction > 0.0 && self.contraction < 1.0,
            &self.contraction,
        )?;
        Ok(())
    }

    pub fn grid(&self, horizon: f64, c: f64) -> Result<Grid> {
        match self.dt {
            Some(dt) => Grid::new(self.cells, horizon, (horizon / dt).round().max(1.0) as usize),
            None => Grid::with_cfl(self.cells, horizon, c, self.cfl_target),
        }
    }

    pub fn solver_options(&self) -> SolverOptions {
        SolverOptions {
            cfl_limit: self.cfl_limit,
            density_floor: self.density_floor,
        }
    }

    pub fn integrator(&self) -> IntegratorOptions {
        IntegratorOptions {
            substeps_per_step: self.substeps,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JacobianSource {
    GramLinear,
    FiniteDifference,
}

impl fmt::Display for JacobianSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            JacobianSource::GramLinear => "gram",
            JacobianSource::FiniteDifference => "fd",
        })
    }
}

/// One shooting iteration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterationLog {
    pub iteration: usize,
    /// `max_i |Theta_i - beta_i|` after the iteration.
    pub residual: f64,
    /// `max_i |eps_new - eps_old|`.
    pub step: f64,
    pub halvings: usize,
    pub jacobian: JacobianSource,
    pub epsilon: Vec<f64>,
}

impl fmt::Display for IterationLog {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "iter {:>2} residual {:.6e} step {:.6e} halvings {} jacobian {}",
            self.iteration, self.residual, self.step, self.halvings, self.jacobian
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SynthesisReport {
    pub epsilon: Vec<f64>,
    /// `Theta(eps) - beta`.
    pub residual: Vec<f64>,
    pub terminal: Vec<f64>,
    pub iterations: usize,
    pub jacobian_source: JacobianSource,
    pub converged: bool,
    pub initial_guess: Vec<f64>,
    pub log: Vec<IterationLog>,
}

impl SynthesisReport {
    pub fn max_residual(&self) -> f64 {
        self.residual.iter().fold(0.0f64, |m, r| m.max(r.abs()))
    }
}

/// Everything `Theta` needs, computed once: grid, forcing tables and Gram matrix.
#[derive(Debug, Clone)]
pub struct ShootingContext {
    problem: ControlProblem,
    gas: GasModel,
    numerics: Numerics,
    grid: Grid,
    tables: Vec<ForcingTable>,
    gram: GramReport,
}

impl ShootingContext {
    pub fn new(problem: &ControlProblem, gas: &GasModel, numerics: &Numerics) -> Result<Self> {
        problem.validate()?;
        numerics.validate()?;
        let cutoff = problem.cutoff()?;
        let grid = numerics.grid(problem.horizon, gas.c)?;
        let build = |n: usize| -> Result<Vec<AdjointField>> {
            problem
                .alphas
                .iter()
                .map(|&a| Ok(AdjointField::new(a, gas.c, problem.horizon, n)?.with_acceleration(numerics.acceleration)))
                .collect()
        };
        let gram = gram_report(&build(numerics.gram_truncation)?, &cutoff, &numerics.quad)?;
        let forcing_fields = build(numerics.forcing_truncation)?;
        let tables = par::map(&forcing_fields, |f| ForcingTable::build(f, &cutoff, &grid))
            .into_iter()
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            problem: problem.clone(),
            gas: *gas,
            numerics: numerics.clone(),
            grid,
            tables,
            gram,
        })
    }

    pub fn problem(&self) -> &ControlProblem {
        &self.problem
    }

    pub fn gas(&self) -> &GasModel {
        &self.gas
    }

    pub fn numerics(&self) -> &Numerics {
        &self.numerics
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn gram(&self) -> &GramReport {
        &self.gram
    }

    pub fn tables(&self) -> &[ForcingTable] {
        &self.tables
    }

    fn check_eps(&self, eps: &[f64]) -> Result<()> {
        if eps.len() != self.problem.d() {
            return Err(Error::Precondition(format!(
                "epsilon has {} entries, problem has {} points",
                eps.len(),
                self.problem.d()
            )));
        }
        if eps.iter().any(|e| !e.is_finite()) {
            return Err(Error::AmplitudeTooLarge(format!("non-finite amplitude {eps:?}")));
        }
        Ok(())
    }

    /// Nonlinear solve with `f = sum_i eps_i f_i`.
    pub fn simulate(&self, eps: &[f64]) -> Result<NonlinearRun> {
        self.check_eps(eps)?;
        let forcing = Superposition::new(&self.tables, eps);
        solve_nonlinear(&forcing, &self.grid, &self.gas, &self.numerics.solver_options()).map_err(|e| {
            if e.is_regime_exit() {
                Error::AmplitudeTooLarge(format!("epsilon {eps:?}: {e}"))
            } else {
                e
            }
        })
    }

    /// Terminal positions of the particles starting at the source points.
    pub fn theta_with_run(&self, eps: &[f64]) -> Result<(Vec<f64>, NonlinearRun)> {
        let run = self.simulate(eps)?;
        let traces = advect_many(&run.history, &self.problem.alphas, &self.numerics.integrator())?;
        let terminal: Vec<f64> = traces.iter().map(|t| t.terminal).collect();
        if terminal.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::AmplitudeTooLarge(format!(
                "epsilon {eps:?} does not preserve particle order: {terminal:?}"
            )));
        }
        Ok((terminal, run))
    }

    pub fn theta(&self, eps: &[f64]) -> Result<Vec<f64>> {
        self.theta_with_run(eps).map(|(t, _)| t)
    }

    /// Central-difference Jacobian of `Theta`, columns computed in parallel.
    pub fn fd_jacobian(&self, eps: &[f64]) -> Result<DMatrix<f64>> {
        let d = eps.len();
        let norm = eps.iter().map(|e| e * e).sum::<f64>().sqrt();
        let h = 1e-4 * norm + 1e-6;
        let columns = par::map_range(2 * d, |k| {
            let mut e = eps.to_vec();
            e[k / 2] += if k % 2 == 0 { h } else { -h };
            self.theta(&e)
        });
        let columns = columns.into_iter().collect::<Result<Vec<_>>>()?;
        Ok(DMatrix::from_fn(d, d, |i, j| {
            (columns[2 * j][i] - columns[2 * j + 1][i]) / (2.0 * h)
        }))
    }

    /// Linear prediction `G^{-1} (beta - alpha)`.
    pub fn linear_guess(&self) -> Result<Vec<f64>> {
        linear_predict(&self.gram, &self.problem.displacement())
    }

    pub fn synthesize(&self) -> Result<SynthesisReport> {
        self.gram.ensure_nondegenerate()?;
        let guess = self.linear_guess()?;
        self.synthesize_from(&guess)
    }

    /// Shooting from an explicit starting amplitude.
    pub fn synthesize_from(&self, initial: &[f64]) -> Result<SynthesisReport> {
        self.gram.ensure_nondegenerate()?;
        self.check_eps(initial)?;
        let n = &self.numerics;
        let betas = &self.problem.betas;
        let residual_of = |theta: &[f64]| -> Vec<f64> { theta.iter().zip(betas).map(|(t, b)| t - b).collect() };
        let max_abs = |v: &[f64]| v.iter().fold(0.0f64, |m, x| m.max(x.abs()));

        let mut eps = initial.to_vec();
        let mut terminal = self.theta(&eps)?;
        let mut residual = residual_of(&terminal);
        let mut norm = max_abs(&residual);
        let mut jacobian = self.gram.to_matrix();
        let mut source = JacobianSource::GramLinear;
        let mut stalled = 0;
        let mut log = Vec::new();
        let mut iterations = 0;

        while norm > n.tol_pos {
            if iterations == n.max_iter {
                return Err(Error::Diverged(format!(
                    "no convergence after {iterations} iterations, residual {norm:e}"
                )));
            }
            iterations += 1;
            let rhs = DVector::from_iterator(residual.len(), residual.iter().map(|r| -r));
            let step = jacobian
                .clone()
                .lu()
                .solve(&rhs)
                .ok_or_else(|| Error::Diverged("singular Jacobian".into()))?;
            let mut lambda = 1.0;
            let mut halvings = 0;
            let (trial, trial_terminal, trial_residual, trial_norm) = loop {
                let trial: Vec<f64> = eps.iter().zip(step.iter()).map(|(e, s)| e + lambda * s).collect();
                let outcome = match self.theta(&trial) {
                    Ok(t) => {
                        let r = residual_of(&t);
                        let rn = max_abs(&r);
                        (rn <= norm).then_some((trial, t, r, rn))
                    }
                    Err(Error::AmplitudeTooLarge(_)) => None,
                    Err(e) => return Err(e),
                };
                if let Some(accepted) = outcome {
                    break accepted;
                }
                halvings += 1;
                if halvings > n.max_halvings {
                    return Err(Error::Diverged(format!(
                        "damping floor reached at iteration {iterations}, residual {norm:e}"
                    )));
                }
                lambda *= 0.5;
            };
            let step_norm = trial.iter().zip(&eps).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            let ratio = trial_norm / norm;
            eps = trial;
            terminal = trial_terminal;
            residual = trial_residual;
            norm = trial_norm;
            log.push(IterationLog {
                iteration: iterations,
                residual: norm,
                step: step_norm,
                halvings,
                jacobian: source,
                epsilon: eps.clone(),
            });
            if norm <= n.tol_pos {
                break;
            }
            stalled = if ratio > n.contraction { stalled + 1 } else { 0 };
            if source == JacobianSource::GramLinear && stalled >= n.stall_limit {
                source = JacobianSource::FiniteDifference;
            }
            if source == JacobianSource::FiniteDifference {
                jacobian = self.fd_jacobian(&eps)?;
            }
        }
        Ok(SynthesisReport {
            epsilon: eps,
            residual,
            terminal,
            iterations,
            jacobian_source: source,
            converged: true,
            initial_guess: initial.to_vec(),
            log,
        })
    }
}
