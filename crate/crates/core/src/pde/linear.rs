//! The linearization about `(rho, u) = (1, 0)`:
//! `eta_t + v_x = g`, `v_t + c^2 eta_x = v_xx + f`.

use serde::Serialize;

use super::{check_cfl, max_abs, solve_tridiagonal, FieldHistory, GasModel, Grid, Sampler, SolverOptions, Staggering};
use crate::sum::compensated;
use crate::{Error, Result};

/// Cell values `eta`, node values `v` at time `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearState {
    pub eta: Vec<f64>,
    pub v: Vec<f64>,
    pub t: f64,
}

/// Discrete counterpart of the linear energy estimate.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct EnergyDiag {
    /// `sup_t (||eta||_L2 + ||v||_L2)`.
    pub sup_state: f64,
    /// `(int_0^T ||v_x||^2 dt)^{1/2}`.
    pub dissipation: f64,
    /// `||f||_L2 + ||g||_L2` over `(0, T) x (0, pi)`.
    pub forcing: f64,
    /// Measured constant `(sup_state + dissipation) / forcing`.
    pub ratio: f64,
}

#[derive(Debug, Clone)]
pub struct LinearRun {
    pub history: FieldHistory,
    pub state: LinearState,
    pub energy: EnergyDiag,
    /// `int eta dx` after every step.
    pub eta_mass: Vec<f64>,
}

pub fn solve_linearized(
    f: &(impl Sampler + ?Sized),
    g: &(impl Sampler + ?Sized),
    grid: &Grid,
    gas: &GasModel,
    opts: &SolverOptions,
) -> Result<LinearRun> {
    let m = grid.cells();
    let dx = grid.dx();
    let dt = grid.dt();
    let c2 = gas.c * gas.c;
    let r = dt / (dx * dx);

    let mut eta = vec![0.0; m];
    let mut v = vec![0.0; m + 1];
    let mut fv = vec![0.0; m + 1];
    let mut gv = vec![0.0; m];
    let lower = vec![-r; m - 1];
    let diag = vec![1.0 + 2.0 * r; m - 1];
    let upper = vec![-r; m - 1];
    let mut rhs = vec![0.0; m - 1];
    let mut scratch = vec![0.0; m - 1];

    let mut history = Vec::with_capacity((grid.steps() + 1) * (m + 1));
    history.extend_from_slice(&v);
    let mut eta_mass = Vec::with_capacity(grid.steps());
    let (mut sup_state, mut dissipation2, mut forcing_f2, mut forcing_g2) = (0.0f64, 0.0, 0.0, 0.0);
    let f_zero = f.is_zero();
    let g_zero = g.is_zero();

    for step in 0..grid.steps() {
        check_cfl(grid, step, max_abs(&v) + gas.c, opts)?;
        if !f_zero {
            f.fill(grid, step, Staggering::Nodes, &mut fv);
            forcing_f2 += node_norm2(&fv, dx) * dt;
        }
        if !g_zero {
            g.fill(grid, step, Staggering::Cells, &mut gv);
            forcing_g2 += gv.iter().map(|x| x * x).sum::<f64>() * dx * dt;
        }

        for j in 0..m {
            eta[j] -= dt / dx * (v[j + 1] - v[j]);
            if !g_zero {
                eta[j] += dt * gv[j];
            }
        }
        for i in 1..m {
            let mut s = v[i] - dt * c2 * (eta[i] - eta[i - 1]) / dx;
            if !f_zero {
                s += dt * fv[i];
            }
            rhs[i - 1] = s;
        }
        solve_tridiagonal(&lower, &diag, &upper, &mut rhs, &mut scratch);
        v[1..m].copy_from_slice(&rhs);

        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFiniteField { field: "v", step });
        }
        if eta.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFiniteField { field: "eta", step });
        }
        eta_mass.push(compensated(&eta) * dx);
        let eta_l2 = (eta.iter().map(|x| x * x).sum::<f64>() * dx).sqrt();
        sup_state = sup_state.max(eta_l2 + node_norm2(&v, dx).sqrt());
        dissipation2 += gradient_norm2(&v, dx) * dt;
        history.extend_from_slice(&v);
    }

    let dissipation = dissipation2.sqrt();
    let forcing = forcing_f2.sqrt() + forcing_g2.sqrt();
    let energy = EnergyDiag {
        sup_state,
        dissipation,
        forcing,
        ratio: if forcing > 0.0 {
            (sup_state + dissipation) / forcing
        } else {
            0.0
        },
    };
    Ok(LinearRun {
        history: FieldHistory::from_values(grid.clone(), history)?,
        state: LinearState {
            eta,
            v,
            t: grid.horizon(),
        },
        energy,
        eta_mass,
    })
}

/// Trapezoid `||w||^2` for node values.
pub(crate) fn node_norm2(w: &[f64], dx: f64) -> f64 {
    let n = w.len() - 1;
    let inner: f64 = w[1..n].iter().map(|x| x * x).sum();
    (inner + 0.5 * (w[0] * w[0] + w[n] * w[n])) * dx
}

/// `||w_x||^2` from node differences.
pub(crate) fn gradient_norm2(w: &[f64], dx: f64) -> f64 {
    w.windows(2).map(|p| (p[1] - p[0]).powi(2)).sum::<f64>() / dx
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pde::{FnSampler, Zero};
    use std::f64::consts::PI;

    const C: f64 = 1.3;

    fn mms_error(grid: &Grid) -> (f64, f64) {
        // v = sin x sin t, eta = cos x sin t
        let f = FnSampler(|t: f64, x: f64| x.sin() * t.cos() - C * C * x.sin() * t.sin() + x.sin() * t.sin());
        let g = FnSampler(|t: f64, x: f64| x.cos() * t.cos() + x.cos() * t.sin());
        let gas = GasModel::new(C, 1.4).unwrap();
        let run = solve_linearized(&f, &g, grid, &gas, &SolverOptions::default()).unwrap();
        let t = grid.horizon();
        let ev = grid
            .nodes()
            .iter()
            .zip(&run.state.v)
            .map(|(x, v)| (v - x.sin() * t.sin()).abs())
            .fold(0.0, f64::max);
        let ee = grid
            .centers()
            .iter()
            .zip(&run.state.eta)
            .map(|(x, e)| (e - x.cos() * t.sin()).abs())
            .fold(0.0, f64::max);
        (ev, ee)
    }

    #[test]
    fn zero_data_stays_zero() {
        let grid = Grid::with_cfl(32, 1.0, C, 0.4).unwrap();
        let run = solve_linearized(&Zero, &Zero, &grid, &GasModel::default(), &SolverOptions::default()).unwrap();
        assert!(run.history.values().iter().all(|&v| v == 0.0));
        assert!(run.state.eta.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn mean_of_eta_is_conserved() {
        let grid = Grid::with_cfl(128, 1.0, C, 0.4).unwrap();
        let f = FnSampler(|t: f64, x: f64| 0.2 * (3.0 * x).sin() * (1.0 + t) + 0.1 * (x - 2.0).powi(2));
        let run = solve_linearized(&f, &Zero, &grid, &GasModel::default(), &SolverOptions::default()).unwrap();
        assert!(run.eta_mass.iter().all(|m| m.abs() < 1e-12));
        assert!(run.energy.ratio > 0.0 && run.energy.ratio.is_finite());
    }

    #[test]
    fn manufactured_solution_time_order() {
        // dt halves while dx stays fine: first order in time
        let e1 = mms_error(&Grid::new(1024, 1.0, 1400).unwrap()).0;
        let e2 = mms_error(&Grid::new(1024, 1.0, 2800).unwrap()).0;
        let e3 = mms_error(&Grid::new(1024, 1.0, 5600).unwrap()).0;
        let (p1, p2) = ((e1 / e2).log2(), (e2 / e3).log2());
        assert!(p1 > 0.85 && p2 > 0.85, "orders {p1} {p2} ({e1} {e2} {e3})");
    }

    #[test]
    fn manufactured_solution_space_order() {
        // dt ~ dx^2 so the temporal error is second order in dx as well
        let run = |m: usize| {
            let dx = PI / m as f64;
            let steps = (1.0 / (0.2 * dx * dx)).ceil() as usize;
            mms_error(&Grid::new(m, 1.0, steps).unwrap())
        };
        let (v1, e1) = run(16);
        let (v2, e2) = run(32);
        let (v3, e3) = run(64);
        for (a, b, c) in [(v1, v2, v3), (e1, e2, e3)] {
            let (p1, p2) = ((a / b).log2(), (b / c).log2());
            assert!(p1 > 1.8 && p2 > 1.8, "orders {p1} {p2} ({a} {b} {c})");
        }
    }

    #[test]
    fn energy_constant_is_stable_under_refinement() {
        let pulse = FnSampler(|t: f64, x: f64| {
            if t < 0.5 {
                (-(x - 2.0).powi(2) * 20.0).exp()
            } else {
                0.0
            }
        });
        let ratio = |m: usize| {
            let grid = Grid::with_cfl(m, 2.0, C, 0.4).unwrap();
            solve_linearized(&pulse, &Zero, &grid, &GasModel::default(), &SolverOptions::default())
                .unwrap()
                .energy
                .ratio
        };
        let (a, b) = (ratio(128), ratio(256));
        assert!((a - b).abs() / b < 0.05, "{a} {b}");
    }

    #[test]
    fn cfl_violation_detected() {
        let grid = Grid::new(64, 1.0, 10).unwrap();
        let err = solve_linearized(&Zero, &Zero, &grid, &GasModel::default(), &SolverOptions::default()).unwrap_err();
        assert!(matches!(err, Error::CflViolation { step: 0, .. }));
    }
}
