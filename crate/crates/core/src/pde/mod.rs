//! Staggered finite-difference solvers on `[0, pi]`.
//!
//! Densities (`rho` or `eta`) live at the `M` cell centres, velocities at
//! the `M + 1` nodes with Dirichlet values at both ends. Each step updates
//! the mass equation with the old velocity, then solves the momentum
//! equation with the new pressure gradient, explicit transport and
//! implicit viscosity (one tridiagonal solve).

mod history;
mod linear;
mod nonlinear;
mod tridiagonal;

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub use history::FieldHistory;
pub use linear::{solve_linearized, EnergyDiag, LinearRun, LinearState};
pub use nonlinear::{solve_nonlinear, FluidState, NonlinDiag, NonlinearRun};
pub use tridiagonal::solve_tridiagonal;

/// Uniform space-time grid with `steps * dt = horizon`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    cells: usize,
    horizon: f64,
    dt: f64,
    steps: usize,
}

impl Grid {
    /// `steps` equal time steps on `[0, horizon]`.
    pub fn new(cells: usize, horizon: f64, steps: usize) -> Result<Self> {
        if cells < 4 {
            return Err(Error::Precondition(format!("grid needs at least 4 cells, got {cells}")));
        }
        if steps == 0 {
            return Err(Error::Precondition("grid needs at least one time step".into()));
        }
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::OutOfRange {
                what: "horizon T",
                value: horizon,
                range: "(0, inf)",
            });
        }
        Ok(Self {
            cells,
            horizon,
            dt: horizon / steps as f64,
            steps,
        })
    }

    /// Largest uniform step with `dt <= cfl * dx / speed`.
    pub fn with_cfl(cells: usize, horizon: f64, speed: f64, cfl: f64) -> Result<Self> {
        if !(speed > 0.0 && cfl > 0.0) {
            return Err(Error::Precondition(format!(
                "CFL sizing needs positive speed and factor, got {speed} and {cfl}"
            )));
        }
        let dt_max = cfl * (PI / cells as f64) / speed;
        let steps = (horizon / dt_max).ceil().max(1.0) as usize;
        Self::new(cells, horizon, steps)
    }

    /// Grid read back from a stored history, where only `dt` is known.
    pub fn from_step(cells: usize, steps: usize, dt: f64) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::OutOfRange {
                what: "time step dt",
                value: dt,
                range: "(0, inf)",
            });
        }
        let mut grid = Self::new(cells, dt * steps as f64, steps.max(1))?;
        grid.dt = dt;
        Ok(grid)
    }

    pub fn cells(&self) -> usize {
        self.cells
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn dx(&self) -> f64 {
        PI / self.cells as f64
    }

    pub fn node(&self, i: usize) -> f64 {
        PI * i as f64 / self.cells as f64
    }

    /// `M + 1` node positions, the last one exactly `pi`.
    pub fn nodes(&self) -> Vec<f64> {
        (0..=self.cells).map(|i| self.node(i)).collect()
    }

    pub fn centers(&self) -> Vec<f64> {
        (0..self.cells)
            .map(|j| PI * (j as f64 + 0.5) / self.cells as f64)
            .collect()
    }

    /// `t_k`, exactly `horizon` at `k = steps`.
    pub fn time(&self, k: usize) -> f64 {
        if k == self.steps {
            self.horizon
        } else {
            k as f64 * self.dt
        }
    }

    /// Midpoint of step `k`, where forcings are sampled.
    pub fn midpoint(&self, k: usize) -> f64 {
        (k as f64 + 0.5) * self.dt
    }
}

/// Barotropic gas `p(rho) = (c^2 / gamma) rho^gamma`, unit viscosity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GasModel {
    pub c: f64,
    pub gamma: f64,
}

impl GasModel {
    pub fn new(c: f64, gamma: f64) -> Result<Self> {
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::OutOfRange {
                what: "sound speed c",
                value: c,
                range: "(0, inf)",
            });
        }
        if !(gamma >= 1.0 && gamma.is_finite()) {
            return Err(Error::OutOfRange {
                what: "adiabatic exponent gamma",
                value: gamma,
                range: "[1, inf)",
            });
        }
        Ok(Self { c, gamma })
    }

    pub fn pressure(&self, rho: f64) -> f64 {
        if self.gamma == 1.0 {
            self.c * self.c * rho
        } else {
            self.c * self.c / self.gamma * rho.powf(self.gamma)
        }
    }

    /// `sqrt(p'(rho))`.
    pub fn sound_speed(&self, rho: f64) -> f64 {
        self.c * rho.powf(0.5 * (self.gamma - 1.0))
    }
}

impl Default for GasModel {
    fn default() -> Self {
        Self { c: 1.3, gamma: 1.4 }
    }
}

/// Where a sampler is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Staggering {
    /// The `M + 1` nodes (momentum forcing `f`).
    Nodes,
    /// The `M` cell centres (mass source `g`).
    Cells,
}

/// Space-time source evaluated at the midpoint of each time step.
pub trait Sampler: Sync {
    /// Values for step `step` at the positions selected by `at`.
    fn fill(&self, grid: &Grid, step: usize, at: Staggering, out: &mut [f64]);

    /// Lets solvers skip the work for identically zero sources.
    fn is_zero(&self) -> bool {
        false
    }
}

/// The zero source.
#[derive(Debug, Clone, Copy, Default)]
pub struct Zero;

impl Sampler for Zero {
    fn fill(&self, _: &Grid, _: usize, _: Staggering, out: &mut [f64]) {
        out.fill(0.0);
    }

    fn is_zero(&self) -> bool {
        true
    }
}

/// A closed-form source `(t, x) -> value`.
#[derive(Debug, Clone, Copy)]
pub struct FnSampler<F>(pub F);

impl<F: Fn(f64, f64) -> f64 + Sync> Sampler for FnSampler<F> {
    fn fill(&self, grid: &Grid, step: usize, at: Staggering, out: &mut [f64]) {
        let t = grid.midpoint(step);
        let cells = grid.cells() as f64;
        for (i, o) in out.iter_mut().enumerate() {
            let x = match at {
                Staggering::Nodes => grid.node(i),
                Staggering::Cells => PI * (i as f64 + 0.5) / cells,
            };
            *o = (self.0)(t, x);
        }
    }
}

/// Solver guards.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    /// Upper bound on `dt (max|u| + max sound speed) / dx`, checked every step.
    pub cfl_limit: f64,
    /// Minimum admissible density.
    pub density_floor: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            cfl_limit: 0.5,
            density_floor: 0.1,
        }
    }
}

pub(crate) fn check_cfl(grid: &Grid, step: usize, speed: f64, opts: &SolverOptions) -> Result<()> {
    let limit = opts.cfl_limit * grid.dx() / speed;
    if grid.dt() > limit || !speed.is_finite() {
        return Err(Error::CflViolation {
            step,
            dt: grid.dt(),
            limit,
        });
    }
    Ok(())
}

pub(crate) fn max_abs(xs: &[f64]) -> f64 {
    xs.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}
