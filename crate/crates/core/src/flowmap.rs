//! Particle trajectories `phi_t = u(t, phi)`, `phi(0) = x0`, through a
//! stored velocity history.
//!
//! Velocities are interpolated linearly in time between snapshots and by a
//! cubic Hermite spline in space. Spline slopes are fourth-order finite
//! differences (centred in the interior), limited where the data are locally monotone so the spline
//! cannot overshoot there.

use std::f64::consts::PI;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::pde::FieldHistory;
use crate::{par, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntegratorOptions {
    /// RK4 steps per history interval.
    pub substeps_per_step: usize,
}

impl Default for IntegratorOptions {
    fn default() -> Self {
        Self { substeps_per_step: 1 }
    }
}

/// One trajectory, recorded at every history time level.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FlowTrace {
    pub x0: f64,
    pub times: Vec<f64>,
    pub positions: Vec<f64>,
    pub terminal: f64,
}

impl FlowTrace {
    pub fn write_csv(&self, mut w: impl Write) -> Result<()> {
        writeln!(w, "t,phi")?;
        for (t, x) in self.times.iter().zip(&self.positions) {
            writeln!(w, "{t:.16e},{x:.16e}")?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Outcome of advecting an increasing family of particles.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OrderReport {
    pub ordered: bool,
    /// `min_k (phi(T, x_{k+1}) - phi(T, x_k))`.
    pub min_gap: f64,
    pub terminals: Vec<f64>,
}

/// `u(t_k, x)` from snapshot `k` by monotone-limited cubic Hermite interpolation.
pub fn interpolate_snapshot(history: &FieldHistory, k: usize, x: f64) -> f64 {
    if x <= 0.0 || x >= PI {
        return 0.0;
    }
    let u = history.snapshot(k);
    let m = history.grid().cells();
    let dx = history.grid().dx();
    let i = ((x / dx).floor() as usize).min(m - 1);
    let s = (x - history.grid().node(i)) / dx;
    let (m0, m1) = (slope(u, i, dx), slope(u, i + 1, dx));
    let s2 = s * s;
    let s3 = s2 * s;
    let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
    let h10 = s3 - 2.0 * s2 + s;
    let h01 = -2.0 * s3 + 3.0 * s2;
    let h11 = s3 - s2;
    h00 * u[i] + h01 * u[i + 1] + dx * (h10 * m0 + h11 * m1)
}

fn slope(u: &[f64], i: usize, dx: f64) -> f64 {
    let m = u.len() - 1;
    let raw = if i == 0 {
        (-25.0 * u[0] + 48.0 * u[1] - 36.0 * u[2] + 16.0 * u[3] - 3.0 * u[4]) / (12.0 * dx)
    } else if i == m {
        (25.0 * u[m] - 48.0 * u[m - 1] + 36.0 * u[m - 2] - 16.0 * u[m - 3] + 3.0 * u[m - 4]) / (12.0 * dx)
    } else if i == 1 {
        (-3.0 * u[0] - 10.0 * u[1] + 18.0 * u[2] - 6.0 * u[3] + u[4]) / (12.0 * dx)
    } else if i == m - 1 {
        (3.0 * u[m] + 10.0 * u[m - 1] - 18.0 * u[m - 2] + 6.0 * u[m - 3] - u[m - 4]) / (12.0 * dx)
    } else {
        (-u[i + 2] + 8.0 * u[i + 1] - 8.0 * u[i - 1] + u[i - 2]) / (12.0 * dx)
    };
    if i == 0 || i == m {
        return raw;
    }
    let left = (u[i] - u[i - 1]) / dx;
    let right = (u[i + 1] - u[i]) / dx;
    if left * right < 0.0 {
        return raw;
    }
    if left == 0.0 || right == 0.0 {
        return 0.0;
    }
    let bound = 3.0 * left.abs().min(right.abs());
    if raw * left <= 0.0 {
        0.0
    } else {
        raw.signum() * raw.abs().min(bound)
    }
}

/// `u` at fraction `theta` of the way from snapshot `k` to `k + 1`.
fn velocity(history: &FieldHistory, k: usize, theta: f64, x: f64) -> Result<f64> {
    if !(0.0..=PI).contains(&x) || !x.is_finite() {
        return Err(Error::OutOfDomain { x });
    }
    let a = interpolate_snapshot(history, k, x);
    if theta == 0.0 {
        return Ok(a);
    }
    let b = interpolate_snapshot(history, k + 1, x);
    Ok((1.0 - theta) * a + theta * b)
}

/// `u(t, x)` anywhere in `[0, T] x [0, pi]`.
pub fn sample(history: &FieldHistory, t: f64, x: f64) -> Result<f64> {
    let grid = history.grid();
    if !(0.0..=grid.horizon()).contains(&t) {
        return Err(Error::OutOfRange {
            what: "time t",
            value: t,
            range: "[0, T]",
        });
    }
    let s = t / grid.dt();
    let k = (s.floor() as usize).min(grid.steps() - 1);
    velocity(history, k, s - k as f64, x)
}

/// Classical RK4 through the history from `x0`.
pub fn advect(history: &FieldHistory, x0: f64, opts: &IntegratorOptions) -> Result<FlowTrace> {
    if !(0.0..=PI).contains(&x0) {
        return Err(Error::OutOfDomain { x: x0 });
    }
    if opts.substeps_per_step == 0 {
        return Err(Error::Precondition("substeps_per_step must be positive".into()));
    }
    let grid = history.grid();
    let sub = opts.substeps_per_step;
    let h = grid.dt() / sub as f64;
    let mut times = Vec::with_capacity(grid.steps() + 1);
    let mut positions = Vec::with_capacity(grid.steps() + 1);
    times.push(0.0);
    positions.push(x0);
    let mut x = x0;
    for k in 0..grid.steps() {
        for j in 0..sub {
            let th0 = j as f64 / sub as f64;
            let th_half = (j as f64 + 0.5) / sub as f64;
            let th1 = (j + 1) as f64 / sub as f64;
            let k1 = velocity(history, k, th0, x)?;
            let k2 = velocity(history, k, th_half, x + 0.5 * h * k1)?;
            let k3 = velocity(history, k, th_half, x + 0.5 * h * k2)?;
            let k4 = velocity(history, k, th1, x + h * k3)?;
            x += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        }
        if !(0.0..=PI).contains(&x) {
            return Err(Error::OutOfDomain { x });
        }
        times.push(grid.time(k + 1));
        positions.push(x);
    }
    Ok(FlowTrace {
        x0,
        times,
        positions,
        terminal: x,
    })
}

/// Advects several particles in parallel.
pub fn advect_many(history: &FieldHistory, xs: &[f64], opts: &IntegratorOptions) -> Result<Vec<FlowTrace>> {
    par::map(xs, |&x| advect(history, x, opts)).into_iter().collect()
}

/// Advects strictly increasing `probes` and checks that `phi(T, .)` keeps them
/// strictly increasing.
pub fn order_check(history: &FieldHistory, probes: &[f64], opts: &IntegratorOptions) -> Result<OrderReport> {
    if probes.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Precondition("probes must be strictly increasing".into()));
    }
    let terminals: Vec<f64> = advect_many(history, probes, opts)?
        .into_iter()
        .map(|t| t.terminal)
        .collect();
    let min_gap = terminals.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
    Ok(OrderReport {
        ordered: min_gap > 0.0 || terminals.len() < 2,
        min_gap,
        terminals,
    })
}

/// `n` equally spaced probes strictly inside `(0, pi)`.
pub fn probe_ladder(n: usize) -> Vec<f64> {
    (1..=n).map(|k| PI * k as f64 / (n + 1) as f64).collect()
}
