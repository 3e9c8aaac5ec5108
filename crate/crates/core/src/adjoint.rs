//! Adjoint control fields.
//!
//! `xi_i` solves the backward linearized adjoint system with a Dirac source
//! at `alpha_i` and vanishes at the horizon. On `[0, pi]` it is the sine
//! series
//!
//! ```text
//! xi(t, x) = (2/pi) sum_{n>=1} sin(n alpha) k_n(T - t) sin(n x)
//! ```
//!
//! with `k_n` the mode kernel from [`crate::spectral`]. Coefficients decay
//! like `e^{-c^2 (T-t)} / n^2`; that leading layer is summed in closed form
//! through `sum cos(n y) / n^2 = y^2/4 - pi y/2 + pi^2/6` on `[0, 2 pi]`.

use std::f64::consts::{FRAC_2_PI, PI};

use ndarray::Array2;
use serde::Serialize;

use crate::pde::{Grid, Sampler, Staggering};
use crate::spectral::{eigen_pair, ModeEigen};
use crate::{Error, Result};

pub const DEFAULT_TRUNCATION: usize = 2048;

/// The closed-form tail is only subtracted once `e^{lambda_N tau}` is below
/// double precision, i.e. `N^2 tau >= 36`.
const ACCEL_MIN_EXPONENT: f64 = 36.0;

/// `sum_{n>=1} cos(n y) / n^2` for `y` in `[0, 2 pi]`.
pub fn cosine_square_series(y: f64) -> f64 {
    debug_assert!((-1e-12..=2.0 * PI + 1e-12).contains(&y));
    y * y / 4.0 - PI * y / 2.0 + PI * PI / 6.0
}

/// Truncated-series representation of one adjoint field `xi_i`.
#[derive(Debug, Clone)]
pub struct AdjointField {
    alpha: f64,
    c: f64,
    horizon: f64,
    accel: bool,
    modes: Vec<ModeEigen>,
    sin_alpha: Vec<f64>,
}

impl AdjointField {
    /// Field for a source at `alpha` in `(0, pi)`, truncated after `truncation`
    /// modes, acceleration on.
    pub fn new(alpha: f64, c: f64, horizon: f64, truncation: usize) -> Result<Self> {
        if !(alpha > 0.0 && alpha < PI) {
            return Err(Error::OutOfRange {
                what: "alpha",
                value: alpha,
                range: "(0, pi)",
            });
        }
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::OutOfRange {
                what: "sound speed c",
                value: c,
                range: "(0, inf)",
            });
        }
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::OutOfRange {
                what: "horizon T",
                value: horizon,
                range: "(0, inf)",
            });
        }
        if truncation == 0 {
            return Err(Error::Precondition("truncation order must be at least 1".into()));
        }
        let modes = (1..=truncation as u32).map(|n| eigen_pair(n, c)).collect();
        let sin_alpha = (1..=truncation).map(|n| (n as f64 * alpha).sin()).collect();
        Ok(Self {
            alpha,
            c,
            horizon,
            accel: true,
            modes,
            sin_alpha,
        })
    }

    pub fn with_acceleration(mut self, accel: bool) -> Self {
        self.accel = accel;
        self
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn truncation(&self) -> usize {
        self.modes.len()
    }

    pub fn accelerated(&self) -> bool {
        self.accel
    }

    /// `n0 = 2c` when it is an integer within the truncation.
    pub fn resonant_mode(&self) -> Option<u32> {
        let n0 = 2.0 * self.c;
        (n0.fract() == 0.0 && n0 >= 1.0 && n0 <= self.modes.len() as f64).then_some(n0 as u32)
    }

    fn check(&self, t: f64, x: f64) -> Result<()> {
        if !(0.0..=self.horizon).contains(&t) {
            return Err(Error::OutOfRange {
                what: "time t",
                value: t,
                range: "[0, T]",
            });
        }
        if !(0.0..=PI).contains(&x) {
            return Err(Error::OutOfRange {
                what: "position x",
                value: x,
                range: "[0, pi]",
            });
        }
        Ok(())
    }

    /// Weight `a_1(tau) = e^{-c^2 tau}` of the `1/n^2` layer, when it is used.
    fn tail_weight(&self, tau: f64) -> Option<f64> {
        let n = self.modes.len() as f64;
        (self.accel && n * n * tau >= ACCEL_MIN_EXPONENT).then(|| (-self.c * self.c * tau).exp())
    }

    /// `sum_n sin(n alpha) sin(n x) / n^2` in closed form.
    fn tail_closed_form(&self, x: f64) -> f64 {
        0.5 * (cosine_square_series((x - self.alpha).abs()) - cosine_square_series(x + self.alpha))
    }

    /// `xi(t, x)`.
    pub fn xi_eval(&self, t: f64, x: f64) -> Result<f64> {
        self.check(t, x)?;
        let tau = self.horizon - t;
        if tau == 0.0 || x == 0.0 || x == PI {
            return Ok(0.0);
        }
        let weight = self.tail_weight(tau);
        let mut s = 0.0;
        for (i, (mode, sa)) in self.modes.iter().zip(&self.sin_alpha).enumerate() {
            let n = (i + 1) as f64;
            let mut k = mode.kernel(tau);
            if let Some(a1) = weight {
                k -= a1 / (n * n);
            }
            s += sa * k * (n * x).sin();
        }
        if let Some(a1) = weight {
            s += a1 * self.tail_closed_form(x);
        }
        Ok(FRAC_2_PI * s)
    }

    /// The companion density field `zeta(t, x)`, cosine series with
    /// coefficients `n int_0^tau k_n`. Plain summation; converges like `1/N`.
    pub fn zeta_eval(&self, t: f64, x: f64) -> Result<f64> {
        self.check(t, x)?;
        let tau = self.horizon - t;
        if tau == 0.0 {
            return Ok(0.0);
        }
        let c2 = self.c * self.c;
        let mut s = 0.0;
        for (i, (mode, sa)) in self.modes.iter().zip(&self.sin_alpha).enumerate() {
            let n = (i + 1) as f64;
            let integral = 1.0 - mode.mean_exp(tau) - 0.5 * n * n * mode.kernel(tau);
            s += sa * integral / (c2 * n) * (n * x).cos();
        }
        Ok(FRAC_2_PI * s)
    }

    /// `xi` on the tensor grid `t_grid x x_grid`, row `k` for `t_grid[k]`.
    ///
    /// One mode-by-time matrix times one mode-by-space matrix.
    pub fn xi_batch(&self, t_grid: &[f64], x_grid: &[f64]) -> Result<Array2<f64>> {
        for &t in t_grid {
            self.check(t, 0.0)?;
        }
        for &x in x_grid {
            self.check(0.0, x)?;
        }
        let n_modes = self.modes.len();
        let mut temporal = Array2::<f64>::zeros((t_grid.len(), n_modes));
        let mut weights = vec![None; t_grid.len()];
        for (k, &t) in t_grid.iter().enumerate() {
            let tau = self.horizon - t;
            if tau == 0.0 {
                continue;
            }
            let weight = self.tail_weight(tau);
            weights[k] = weight;
            let mut row = temporal.row_mut(k);
            for (i, (mode, sa)) in self.modes.iter().zip(&self.sin_alpha).enumerate() {
                let n = (i + 1) as f64;
                let mut kn = mode.kernel(tau);
                if let Some(a1) = weight {
                    kn -= a1 / (n * n);
                }
                row[i] = sa * kn;
            }
        }
        let spatial = Array2::from_shape_fn((n_modes, x_grid.len()), |(i, l)| ((i + 1) as f64 * x_grid[l]).sin());
        let mut out = temporal.dot(&spatial);
        let tails: Vec<f64> = x_grid.iter().map(|&x| self.tail_closed_form(x)).collect();
        for (k, &t) in t_grid.iter().enumerate() {
            let terminal = self.horizon - t == 0.0;
            for (l, &x) in x_grid.iter().enumerate() {
                let v = &mut out[[k, l]];
                if terminal || x == 0.0 || x == PI {
                    *v = 0.0;
                    continue;
                }
                let mut s = *v;
                if let Some(a1) = weights[k] {
                    s += a1 * tails[l];
                }
                *v = FRAC_2_PI * s;
            }
        }
        Ok(out)
    }
}

/// Smooth step `h(s) = g(s) / (g(s) + g(1 - s))`, `g(s) = exp(-1/s)` for
/// `s > 0`; exactly 0 for `s <= 0` and exactly 1 for `s >= 1`.
pub fn smooth_step(s: f64) -> f64 {
    fn g(s: f64) -> f64 {
        if s > 0.0 {
            (-1.0 / s).exp()
        } else {
            0.0
        }
    }
    if s <= 0.0 {
        0.0
    } else if s >= 1.0 {
        1.0
    } else {
        let a = g(s);
        a / (a + g(1.0 - s))
    }
}

/// Smooth cutoff `chi_eta`: zero outside `omega`, one where
/// `dist(x, omega^c) >= eta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Cutoff {
    lo: f64,
    hi: f64,
    eta: f64,
}

impl Cutoff {
    pub fn new(omega: (f64, f64), eta: f64) -> Result<Self> {
        let (lo, hi) = omega;
        if !(lo >= 1.0 && lo < hi && hi <= PI) {
            return Err(Error::Precondition(format!(
                "control window ({lo}, {hi}) must be a nonempty interval inside (1, pi)"
            )));
        }
        if !(eta > 0.0 && 2.0 * eta < hi - lo) {
            return Err(Error::Precondition(format!(
                "cutoff margin eta = {eta} must satisfy 0 < 2 eta < |omega| = {}",
                hi - lo
            )));
        }
        Ok(Self { lo, hi, eta })
    }

    pub fn omega(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn chi_eval(&self, x: f64) -> f64 {
        if x <= self.lo || x >= self.hi {
            return 0.0;
        }
        smooth_step((x - self.lo) / self.eta) * smooth_step((self.hi - x) / self.eta)
    }
}

/// `f_i(t, x) = chi_eta(x) xi_i(t, x)`.
pub fn forcing_eval(field: &AdjointField, cutoff: &Cutoff, t: f64, x: f64) -> Result<f64> {
    field.check(t, x)?;
    let chi = cutoff.chi_eval(x);
    if chi == 0.0 {
        return Ok(0.0);
    }
    Ok(chi * field.xi_eval(t, x)?)
}

/// `f_i` tabulated at the nodes of a [`Grid`] and the midpoints of its time
/// steps. Only the nodes inside `omega` are stored.
#[derive(Debug, Clone)]
pub struct ForcingTable {
    grid: Grid,
    first_node: usize,
    width: usize,
    values: Vec<f64>,
}

impl ForcingTable {
    pub fn build(field: &AdjointField, cutoff: &Cutoff, grid: &Grid) -> Result<Self> {
        if (grid.horizon() - field.horizon()).abs() > 1e-12 * field.horizon() {
            return Err(Error::Precondition(format!(
                "grid horizon {} differs from field horizon {}",
                grid.horizon(),
                field.horizon()
            )));
        }
        let nodes = grid.nodes();
        let support: Vec<usize> = (0..nodes.len()).filter(|&i| cutoff.chi_eval(nodes[i]) > 0.0).collect();
        let (first_node, width) = match (support.first(), support.last()) {
            (Some(&a), Some(&b)) => (a, b - a + 1),
            _ => (0, 0),
        };
        let xs = &nodes[first_node..first_node + width];
        let times: Vec<f64> = (0..grid.steps()).map(|k| grid.midpoint(k)).collect();
        let xi = field.xi_batch(&times, xs)?;
        let chi: Vec<f64> = xs.iter().map(|&x| cutoff.chi_eval(x)).collect();
        let mut values = Vec::with_capacity(times.len() * width);
        for row in xi.rows() {
            values.extend(row.iter().zip(&chi).map(|(v, c)| v * c));
        }
        Ok(Self {
            grid: grid.clone(),
            first_node,
            width,
            values,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// `f_i` at node `node` during step `step`.
    pub fn value(&self, step: usize, node: usize) -> f64 {
        if node < self.first_node || node >= self.first_node + self.width {
            return 0.0;
        }
        self.values[step * self.width + node - self.first_node]
    }

    fn accumulate(&self, step: usize, weight: f64, out: &mut [f64]) {
        let row = &self.values[step * self.width..(step + 1) * self.width];
        for (o, v) in out[self.first_node..self.first_node + self.width].iter_mut().zip(row) {
            *o += weight * v;
        }
    }
}

impl Sampler for ForcingTable {
    fn fill(&self, grid: &Grid, step: usize, at: Staggering, out: &mut [f64]) {
        assert_eq!(grid, &self.grid, "forcing table built for a different grid");
        out.fill(0.0);
        if at == Staggering::Nodes {
            self.accumulate(step, 1.0, out);
        }
    }
}

/// `sum_i eps_i f_i` over tabulated forcings sharing one grid.
#[derive(Debug, Clone, Copy)]
pub struct Superposition<'a> {
    tables: &'a [ForcingTable],
    weights: &'a [f64],
}

impl<'a> Superposition<'a> {
    pub fn new(tables: &'a [ForcingTable], weights: &'a [f64]) -> Self {
        assert_eq!(tables.len(), weights.len());
        Self { tables, weights }
    }
}

impl Sampler for Superposition<'_> {
    fn fill(&self, grid: &Grid, step: usize, at: Staggering, out: &mut [f64]) {
        out.fill(0.0);
        if at != Staggering::Nodes {
            return;
        }
        for (table, &w) in self.tables.iter().zip(self.weights) {
            assert_eq!(grid, &table.grid, "forcing table built for a different grid");
            if w != 0.0 {
                table.accumulate(step, w, out);
            }
        }
    }

    fn is_zero(&self) -> bool {
        self.weights.iter().all(|&w| w == 0.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn fixture() -> AdjointField {
        AdjointField::new(0.3, 1.3, 2.0, DEFAULT_TRUNCATION).unwrap()
    }

    #[test]
    fn closed_form_cosine_series() {
        for &y in &[0.0, 0.4, 1.0, 2.5, PI, 4.0, 2.0 * PI] {
            let direct: f64 = (1..200_000).map(|n| (n as f64 * y).cos() / (n as f64).powi(2)).sum();
            assert!((direct - cosine_square_series(y)).abs() < 2e-5, "y={y}");
        }
    }

    #[test]
    fn terminal_and_boundary_zeros() {
        let f = fixture();
        for &x in &[0.0, 0.3, 1.0, 2.0, PI] {
            assert_eq!(f.xi_eval(2.0, x).unwrap(), 0.0);
        }
        for &t in &[0.0, 0.5, 1.9] {
            assert_eq!(f.xi_eval(t, 0.0).unwrap(), 0.0);
            assert_eq!(f.xi_eval(t, PI).unwrap(), 0.0);
        }
    }

    #[test]
    fn rejects_points_outside_domain() {
        let f = fixture();
        assert!(f.xi_eval(-1e-9, 1.0).is_err());
        assert!(f.xi_eval(2.0 + 1e-9, 1.0).is_err());
        assert!(f.xi_eval(1.0, -0.1).is_err());
        assert!(f.xi_eval(1.0, 3.2).is_err());
        assert!(f.xi_batch(&[0.5], &[4.0]).is_err());
        assert!(AdjointField::new(0.0, 1.3, 2.0, 16).is_err());
        assert!(AdjointField::new(0.3, 1.3, 2.0, 0).is_err());
    }

    #[test]
    fn resonant_mode_detection() {
        assert_eq!(AdjointField::new(0.3, 1.0, 1.0, 8).unwrap().resonant_mode(), Some(2));
        assert_eq!(AdjointField::new(0.3, 1.5, 1.0, 8).unwrap().resonant_mode(), Some(3));
        assert_eq!(AdjointField::new(0.3, 1.3, 1.0, 8).unwrap().resonant_mode(), None);
        assert_eq!(AdjointField::new(0.3, 5.0, 1.0, 8).unwrap().resonant_mode(), None);
    }

    #[test]
    fn acceleration_changes_convergence_rate() {
        let (t, x) = (1.0, 2.0);
        let plain = |n: usize| {
            AdjointField::new(0.3, 1.3, 2.0, n)
                .unwrap()
                .with_acceleration(false)
                .xi_eval(t, x)
                .unwrap()
        };
        let fast = |n: usize| AdjointField::new(0.3, 1.3, 2.0, n).unwrap().xi_eval(t, x).unwrap();
        let reference = fast(1 << 15);
        let mut prev_plain = f64::INFINITY;
        for &n in &[64usize, 128, 256, 512] {
            let e_plain = (plain(n) - plain(2 * n)).abs();
            let e_fast = (fast(n) - reference).abs();
            assert!(e_plain < 2.0 / n as f64, "plain {n}: {e_plain}");
            assert!(e_fast < 20.0 / (n as f64).powi(3), "accel {n}: {e_fast}");
            assert!(e_plain <= prev_plain * 1.01);
            prev_plain = e_plain;
        }
    }

    #[test]
    fn accelerated_and_plain_agree_at_large_truncation() {
        let a = AdjointField::new(0.3, 1.3, 2.0, 4096).unwrap();
        let b = AdjointField::new(0.3, 1.3, 2.0, 1 << 17)
            .unwrap()
            .with_acceleration(false);
        for &(t, x) in &[(0.2, 1.6), (1.0, 2.0), (1.7, 2.4)] {
            let (va, vb) = (a.xi_eval(t, x).unwrap(), b.xi_eval(t, x).unwrap());
            assert!((va - vb).abs() < 1e-6, "({t},{x}): {va} vs {vb}");
        }
    }

    #[test]
    fn batch_matches_pointwise() {
        let f = fixture();
        let ts = [0.0, 0.37, 1.0, 1.61, 2.0];
        let xs = [0.0, 0.3, 1.2, 2.2, 2.9];
        let b = f.xi_batch(&ts, &xs).unwrap();
        for (k, &t) in ts.iter().enumerate() {
            for (l, &x) in xs.iter().enumerate() {
                assert!((b[[k, l]] - f.xi_eval(t, x).unwrap()).abs() < 1e-13);
            }
        }
        assert!(b.row(4).iter().all(|&v| v == 0.0));
        let single = f.xi_batch(&[0.7], &[1.9]).unwrap();
        assert!((single[[0, 0]] - f.xi_eval(0.7, 1.9).unwrap()).abs() < 1e-15);
    }

    #[test]
    fn pde_residual_shrinks_under_refinement() {
        // Truncated series satisfy -xi_t - c^2 zeta_x - xi_xx = delta_N exactly,
        // with delta_N the truncated sine expansion of the Dirac mass.
        let c = 1.3;
        let alpha = 0.3;
        let field = AdjointField::new(alpha, c, 2.0, 400).unwrap().with_acceleration(false);
        let (t, x) = (0.9, 1.8);
        let delta_n: f64 = FRAC_2_PI
            * (1..=400)
                .map(|n| (n as f64 * alpha).sin() * (n as f64 * x).sin())
                .sum::<f64>();
        let residual = |h: f64| {
            let xi = |t: f64, x: f64| field.xi_eval(t, x).unwrap();
            let zeta = |t: f64, x: f64| field.zeta_eval(t, x).unwrap();
            let xi_t = (xi(t + h, x) - xi(t - h, x)) / (2.0 * h);
            let zeta_x = (zeta(t, x + h) - zeta(t, x - h)) / (2.0 * h);
            let xi_xx = (xi(t, x + h) - 2.0 * xi(t, x) + xi(t, x - h)) / (h * h);
            (-xi_t - c * c * zeta_x - xi_xx - delta_n).abs()
        };
        let r1 = residual(2e-3);
        let r2 = residual(1e-3);
        assert!(r2 < r1 / 3.0, "{r1} -> {r2}");
        assert!(r2 < 1e-1, "{r2}");
        // the companion equation zeta_t = -xi_x holds mode by mode
        let h = 1e-4;
        let zeta_t = (field.zeta_eval(t + h, x).unwrap() - field.zeta_eval(t - h, x).unwrap()) / (2.0 * h);
        let xi_x = (field.xi_eval(t, x + h).unwrap() - field.xi_eval(t, x - h).unwrap()) / (2.0 * h);
        assert!((zeta_t + xi_x).abs() < 1e-5, "{zeta_t} {xi_x}");
    }

    #[test]
    fn bounded_uniformly_in_truncation() {
        let mut sup: f64 = 0.0;
        for &n in &[16usize, 256, 4096] {
            let f = AdjointField::new(0.3, 1.3, 2.0, n).unwrap();
            for i in 0..=20 {
                for j in 0..=40 {
                    let t = 2.0 * i as f64 / 20.0;
                    let x = PI * j as f64 / 40.0;
                    sup = sup.max(f.xi_eval(t, x).unwrap().abs());
                }
            }
        }
        // |xi| <= (2/pi) sum_n tau_n-bounded terms; measured sup is ~0.17
        assert!(sup < 0.5, "sup |xi| = {sup}");
    }

    #[test]
    fn cutoff_values() {
        let chi = Cutoff::new((1.5, 2.5), 0.1).unwrap();
        assert_eq!(chi.chi_eval(2.0), 1.0);
        assert_eq!(chi.chi_eval(1.5), 0.0);
        assert_eq!(chi.chi_eval(2.5), 0.0);
        assert_eq!(chi.chi_eval(1.0), 0.0);
        assert_eq!(chi.chi_eval(1.6), 1.0);
        assert!((chi.chi_eval(1.55) - 0.5).abs() < 1e-14);
        assert_eq!(smooth_step(0.5), 0.5);
        assert!(Cutoff::new((1.5, 2.5), 0.5).is_err());
        assert!(Cutoff::new((0.5, 2.5), 0.1).is_err());
    }

    #[test]
    fn forcing_is_product_of_factors() {
        let f = fixture();
        let chi = Cutoff::new((1.5, 2.5), 0.1).unwrap();
        assert_eq!(forcing_eval(&f, &chi, 1.0, 1.2).unwrap(), 0.0);
        assert_eq!(forcing_eval(&f, &chi, 2.0, 2.0).unwrap(), 0.0);
        let v = forcing_eval(&f, &chi, 1.0, 2.0).unwrap();
        assert_eq!(v, f.xi_eval(1.0, 2.0).unwrap());
        let v = forcing_eval(&f, &chi, 1.0, 1.53).unwrap();
        assert_eq!(v, chi.chi_eval(1.53) * f.xi_eval(1.0, 1.53).unwrap());
    }

    proptest! {
        #[test]
        fn source_and_observation_swap(a in 0.01f64..3.13, x in 0.01f64..3.13, t in 0.0f64..1.99) {
            let f = AdjointField::new(a, 1.3, 2.0, 256).unwrap();
            let g = AdjointField::new(x, 1.3, 2.0, 256).unwrap();
            let u = f.xi_eval(t, x).unwrap();
            let v = g.xi_eval(t, a).unwrap();
            prop_assert!((u - v).abs() < 1e-13);
        }

        #[test]
        fn cutoff_bounded(x in 0.0f64..PI, lo in 1.0f64..2.0, w in 0.2f64..1.0, frac in 0.01f64..0.49) {
            let chi = Cutoff::new((lo, lo + w), frac * w).unwrap();
            let v = chi.chi_eval(x);
            prop_assert!((0.0..=1.0).contains(&v));
            if x <= lo || x >= lo + w { prop_assert_eq!(v, 0.0); }
        }
    }
}
