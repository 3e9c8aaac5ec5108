//! `rho_t + (rho u)_x = 0`, `rho (u_t + u u_x) + p(rho)_x = u_xx + f`,
//! starting from rest `(rho, u) = (1, 0)`.

use serde::Serialize;

use super::linear::{gradient_norm2, node_norm2};
use super::{check_cfl, max_abs, solve_tridiagonal, FieldHistory, GasModel, Grid, Sampler, SolverOptions, Staggering};
use crate::sum::compensated;
use crate::{Error, Result};

/// Cell densities `rho`, node velocities `u` at time `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct FluidState {
    pub rho: Vec<f64>,
    pub u: Vec<f64>,
    pub t: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct NonlinDiag {
    pub initial_mass: f64,
    /// `max_k |mass(t_k) - mass(0)|`.
    pub mass_drift: f64,
    pub min_rho: f64,
    /// `sup_t (||rho - 1||_H1 + ||u||_H1)`.
    pub sup_h1: f64,
    /// `(int_0^T ||u_x||_H1^2 dt)^{1/2}`.
    pub dissipation: f64,
    /// `||f||_L2` over `(0, T) x (0, pi)`.
    pub forcing: f64,
    /// `(sup_h1 + dissipation) / forcing`, the measured a-priori constant.
    pub ratio: f64,
}

#[derive(Debug, Clone)]
pub struct NonlinearRun {
    pub history: FieldHistory,
    pub state: FluidState,
    pub diag: NonlinDiag,
}

pub fn solve_nonlinear(
    f: &(impl Sampler + ?Sized),
    grid: &Grid,
    gas: &GasModel,
    opts: &SolverOptions,
) -> Result<NonlinearRun> {
    let m = grid.cells();
    let dx = grid.dx();
    let dt = grid.dt();
    let r = dt / (dx * dx);

    let mut rho = vec![1.0; m];
    let mut u = vec![0.0; m + 1];
    let mut flux = vec![0.0; m + 1];
    let mut pressure = vec![0.0; m];
    let mut fv = vec![0.0; m + 1];
    let mut lower = vec![0.0; m - 1];
    let mut diag = vec![0.0; m - 1];
    let mut upper = vec![0.0; m - 1];
    let mut rhs = vec![0.0; m - 1];
    let mut scratch = vec![0.0; m - 1];

    let mut history = Vec::with_capacity((grid.steps() + 1) * (m + 1));
    history.extend_from_slice(&u);
    let initial_mass = compensated(&rho) * dx;
    let mut d = NonlinDiag {
        initial_mass,
        min_rho: 1.0,
        ..Default::default()
    };
    let (mut dissipation2, mut forcing2) = (0.0, 0.0);
    let f_zero = f.is_zero();

    for step in 0..grid.steps() {
        let max_sound = rho.iter().fold(0.0f64, |s, &p| s.max(gas.sound_speed(p)));
        check_cfl(grid, step, max_abs(&u) + max_sound, opts)?;
        if !f_zero {
            f.fill(grid, step, Staggering::Nodes, &mut fv);
            forcing2 += node_norm2(&fv, dx) * dt;
        }

        // mass: upwind flux with the old velocity
        for i in 1..m {
            let upwind = if u[i] > 0.0 { rho[i - 1] } else { rho[i] };
            flux[i] = u[i] * upwind;
        }
        for j in 0..m {
            rho[j] -= dt / dx * (flux[j + 1] - flux[j]);
            pressure[j] = gas.pressure(rho[j]);
        }

        // momentum: divide by the face density, viscosity implicit
        for i in 1..m {
            let face = 0.5 * (rho[i - 1] + rho[i]);
            let a = r / face;
            let convection = if u[i] > 0.0 {
                u[i] * (u[i] - u[i - 1]) / dx
            } else {
                u[i] * (u[i + 1] - u[i]) / dx
            };
            let grad_p = (pressure[i] - pressure[i - 1]) / dx;
            let mut s = u[i] - dt * (convection + grad_p / face);
            if !f_zero {
                s += dt * fv[i] / face;
            }
            lower[i - 1] = -a;
            diag[i - 1] = 1.0 + 2.0 * a;
            upper[i - 1] = -a;
            rhs[i - 1] = s;
        }
        solve_tridiagonal(&lower, &diag, &upper, &mut rhs, &mut scratch);
        u[1..m].copy_from_slice(&rhs);

        if rho.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFiniteField { field: "rho", step });
        }
        if u.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFiniteField { field: "u", step });
        }
        let min_rho = rho.iter().copied().fold(f64::INFINITY, f64::min);
        d.min_rho = d.min_rho.min(min_rho);
        if min_rho < opts.density_floor {
            return Err(Error::VacuumApproach {
                step,
                min_rho,
                floor: opts.density_floor,
            });
        }

        let mass = compensated(&rho) * dx;
        d.mass_drift = d.mass_drift.max((mass - initial_mass).abs());
        let rho_h1 = {
            let l2: f64 = rho.iter().map(|p| (p - 1.0).powi(2)).sum::<f64>() * dx;
            let grad: f64 = rho.windows(2).map(|p| (p[1] - p[0]).powi(2)).sum::<f64>() / dx;
            (l2 + grad).sqrt()
        };
        let u_h1 = (node_norm2(&u, dx) + gradient_norm2(&u, dx)).sqrt();
        d.sup_h1 = d.sup_h1.max(rho_h1 + u_h1);
        let uxx2: f64 = u.windows(3).map(|w| (w[2] - 2.0 * w[1] + w[0]).powi(2)).sum::<f64>() / dx.powi(3);
        dissipation2 += (gradient_norm2(&u, dx) + uxx2) * dt;
        history.extend_from_slice(&u);
    }

    d.dissipation = dissipation2.sqrt();
    d.forcing = forcing2.sqrt();
    d.ratio = if d.forcing > 0.0 {
        (d.sup_h1 + d.dissipation) / d.forcing
    } else {
        0.0
    };
    Ok(NonlinearRun {
        history: FieldHistory::from_values(grid.clone(), history)?,
        state: FluidState {
            rho,
            u,
            t: grid.horizon(),
        },
        diag: d,
    })
}
