//! The Gram matrix `G_ij = int_0^T int_omega chi_eta xi_i xi_j dx dt`.
//!
//! `G` is the Jacobian of the endpoint map at zero control, so its
//! determinant and conditioning decide whether shooting is well posed.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::adjoint::{AdjointField, Cutoff};
use crate::quadrature::CompositeRule;
use crate::{par, Error, Result};

/// Relative eigenvalue threshold below which `G` counts as singular.
pub const DEGENERACY_TOL: f64 = 1e-12;

/// Condition number above which a warning is warranted.
pub const ILL_CONDITIONED: f64 = 1e8;

/// Smallest eigenvalue below which the control is too weak to be useful: a
/// `1e-3` displacement would need amplitudes beyond `1e5`, far outside the
/// local regime.
pub const WEAK_EIGENVALUE: f64 = 1e-8;

/// Composite Gauss–Legendre layout in `t` and `x`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuadSpec {
    pub t_panels: usize,
    pub t_nodes: usize,
    pub x_panels: usize,
    pub x_nodes: usize,
}

impl Default for QuadSpec {
    fn default() -> Self {
        Self {
            t_panels: 16,
            t_nodes: 8,
            x_panels: 16,
            x_nodes: 8,
        }
    }
}

impl QuadSpec {
    pub fn validate(&self) -> Result<()> {
        if self.t_panels == 0 || self.t_nodes == 0 || self.x_panels == 0 || self.x_nodes == 0 {
            return Err(Error::Precondition(
                "quadrature panel and node counts must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Same nodes per panel, twice the panels in both directions.
    pub fn refined(&self) -> Self {
        Self {
            t_panels: 2 * self.t_panels,
            x_panels: 2 * self.x_panels,
            ..*self
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GramReport {
    pub d: usize,
    /// Row-major, symmetrized.
    pub matrix: Vec<f64>,
    pub det: f64,
    /// Ascending.
    pub eigenvalues: Vec<f64>,
    pub min_eigenvalue: f64,
    pub max_eigenvalue: f64,
    pub condition_number: f64,
    /// `max |G_ij - G_ji|` before averaging.
    pub asymmetry: f64,
    pub quad: QuadSpec,
    pub truncation: usize,
    pub degenerate: bool,
}

impl GramReport {
    /// Symmetrizes `raw` and fills in the spectral diagnostics.
    pub fn from_matrix(raw: &DMatrix<f64>, quad: QuadSpec, truncation: usize) -> Self {
        let d = raw.nrows();
        assert_eq!(d, raw.ncols());
        let sym = (raw + raw.transpose()) * 0.5;
        let asymmetry = (raw - raw.transpose()).amax();
        let det = sym.clone().lu().determinant();
        let mut eigenvalues: Vec<f64> = sym.clone().symmetric_eigen().eigenvalues.iter().copied().collect();
        eigenvalues.sort_by(f64::total_cmp);
        let min_eigenvalue = eigenvalues.first().copied().unwrap_or(f64::NAN);
        let max_eigenvalue = eigenvalues.last().copied().unwrap_or(f64::NAN);
        let degenerate = !(min_eigenvalue.is_finite() && max_eigenvalue.is_finite())
            || max_eigenvalue <= 0.0
            || min_eigenvalue <= DEGENERACY_TOL * max_eigenvalue;
        let condition_number = if min_eigenvalue > 0.0 {
            max_eigenvalue / min_eigenvalue
        } else {
            f64::INFINITY
        };
        Self {
            d,
            matrix: sym.transpose().iter().copied().collect(),
            det,
            eigenvalues,
            min_eigenvalue,
            max_eigenvalue,
            condition_number,
            asymmetry,
            quad,
            truncation,
            degenerate,
        }
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.matrix[i * self.d + j]
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.d, self.d, &self.matrix)
    }

    pub fn ill_conditioned(&self) -> bool {
        self.condition_number > ILL_CONDITIONED
    }

    /// Degenerate, ill-conditioned, or with an absolutely tiny eigenvalue.
    pub fn near_degenerate(&self) -> bool {
        self.degenerate || self.ill_conditioned() || self.min_eigenvalue < WEAK_EIGENVALUE
    }

    pub fn ensure_nondegenerate(&self) -> Result<()> {
        if self.degenerate {
            return Err(Error::DegenerateGram {
                min_eigenvalue: self.min_eigenvalue,
                max_eigenvalue: self.max_eigenvalue,
            });
        }
        Ok(())
    }
}

/// Raw (unsymmetrized) `int_0^T int_omega w(x) xi_i xi_j dx dt`.
///
/// Time panels run in parallel; the partial sums are added in panel order,
/// so the result does not depend on the thread count.
pub fn gram_integrals(
    fields: &[AdjointField],
    weight: impl Fn(f64) -> f64 + Sync + Send,
    omega: (f64, f64),
    quad: &QuadSpec,
) -> Result<DMatrix<f64>> {
    quad.validate()?;
    let d = fields.len();
    let horizon = match fields.first() {
        Some(f) => f.horizon(),
        None => return Err(Error::Precondition("need at least one adjoint field".into())),
    };
    if fields.iter().any(|f| f.horizon() != horizon) {
        return Err(Error::Precondition("adjoint fields have different horizons".into()));
    }
    let t_rule = CompositeRule::new(0.0, horizon, quad.t_panels, quad.t_nodes);
    let x_rule = CompositeRule::new(omega.0, omega.1, quad.x_panels, quad.x_nodes);
    let wx: Vec<f64> = x_rule
        .points
        .iter()
        .zip(&x_rule.weights)
        .map(|(&x, &w)| w * weight(x))
        .collect();

    let partials = par::map_range(quad.t_panels, |p| -> Result<DMatrix<f64>> {
        let (ts, wt) = t_rule.panel(p);
        let xi = fields
            .iter()
            .map(|f| f.xi_batch(ts, &x_rule.points))
            .collect::<Result<Vec<_>>>()?;
        let mut g = DMatrix::zeros(d, d);
        for i in 0..d {
            for j in i..d {
                let mut s = 0.0;
                for (k, &w) in wt.iter().enumerate() {
                    let row_i = xi[i].row(k);
                    let row_j = xi[j].row(k);
                    let inner: f64 = row_i
                        .iter()
                        .zip(row_j.iter())
                        .zip(&wx)
                        .map(|((a, b), c)| a * b * c)
                        .sum();
                    s += w * inner;
                }
                g[(i, j)] = s;
                g[(j, i)] = s;
            }
        }
        Ok(g)
    });
    let mut total = DMatrix::zeros(d, d);
    for g in partials {
        total += g?;
    }
    Ok(total)
}

/// Gram report without the degeneracy check.
pub fn gram_report(fields: &[AdjointField], cutoff: &Cutoff, quad: &QuadSpec) -> Result<GramReport> {
    let raw = gram_integrals(fields, |x| cutoff.chi_eval(x), cutoff.omega(), quad)?;
    let truncation = fields.iter().map(AdjointField::truncation).min().unwrap_or(0);
    Ok(GramReport::from_matrix(&raw, *quad, truncation))
}

/// Gram report, failing with [`Error::DegenerateGram`] when singular.
pub fn gram_matrix(fields: &[AdjointField], cutoff: &Cutoff, quad: &QuadSpec) -> Result<GramReport> {
    let report = gram_report(fields, cutoff, quad)?;
    report.ensure_nondegenerate()?;
    Ok(report)
}

/// `G^{-1} (beta - alpha)` by Cholesky.
pub fn linear_predict(report: &GramReport, displacement: &[f64]) -> Result<Vec<f64>> {
    report.ensure_nondegenerate()?;
    if displacement.len() != report.d {
        return Err(Error::Precondition(format!(
            "displacement has {} entries, Gram matrix is {}x{}",
            displacement.len(),
            report.d,
            report.d
        )));
    }
    let chol = report.to_matrix().cholesky().ok_or(Error::DegenerateGram {
        min_eigenvalue: report.min_eigenvalue,
        max_eigenvalue: report.max_eigenvalue,
    })?;
    Ok(chol
        .solve(&DVector::from_column_slice(displacement))
        .iter()
        .copied()
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn fixture(alphas: &[f64], n: usize) -> Vec<AdjointField> {
        alphas
            .iter()
            .map(|&a| AdjointField::new(a, 1.3, 2.0, n).unwrap())
            .collect()
    }

    fn cutoff() -> Cutoff {
        Cutoff::new((1.5, 2.5), 0.1).unwrap()
    }

    #[test]
    fn single_point_is_positive() {
        let r = gram_matrix(&fixture(&[0.3], 512), &cutoff(), &QuadSpec::default()).unwrap();
        assert_eq!(r.d, 1);
        assert!(r.entry(0, 0) > 0.0);
        assert_eq!(r.det, r.entry(0, 0));
    }

    #[test]
    fn fixture_is_symmetric_positive_definite() {
        let r = gram_matrix(&fixture(&[0.3, 0.6], 2048), &cutoff(), &QuadSpec::default()).unwrap();
        assert!(r.asymmetry <= 1e-12);
        assert!(r.min_eigenvalue > 0.0 && r.det > 0.0);
        assert!(r.entry(0, 1).powi(2) < r.entry(0, 0) * r.entry(1, 1));
        let m = r.to_matrix();
        assert!((m.clone().lu().determinant() - r.det).abs() <= 1e-14 * r.det.abs().max(1e-300));
        assert!((r.eigenvalues.iter().product::<f64>() - r.det).abs() < 1e-10 * r.det.abs());
    }

    #[test]
    fn quadrature_refinement_converges() {
        // the cutoff is smooth but not analytic at the edges of omega, so the
        // x rule converges faster than any power but not geometrically
        let fields = fixture(&[0.3, 0.6], 2048);
        let coarse = QuadSpec {
            t_panels: 8,
            t_nodes: 8,
            x_panels: 8,
            x_nodes: 8,
        };
        let a = gram_report(&fields, &cutoff(), &coarse).unwrap();
        let b = gram_report(&fields, &cutoff(), &coarse.refined()).unwrap();
        let c = gram_report(&fields, &cutoff(), &coarse.refined().refined()).unwrap();
        assert_eq!(b.quad, QuadSpec::default());
        let scale = c.max_eigenvalue;
        let e1 = a
            .matrix
            .iter()
            .zip(&c.matrix)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max);
        let e2 = b
            .matrix
            .iter()
            .zip(&c.matrix)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max);
        assert!(e2 < 5e-6 * scale, "{e1} {e2} {scale}");
        assert!(e2 < e1 / 8.0, "{e1} {e2}");
    }

    #[test]
    fn scaling_the_weight_scales_the_matrix() {
        let fields = fixture(&[0.3, 0.6], 256);
        let chi = cutoff();
        let q = QuadSpec::default();
        let g = gram_integrals(&fields, |x| chi.chi_eval(x), chi.omega(), &q).unwrap();
        let g4 = gram_integrals(&fields, |x| 4.0 * chi.chi_eval(x), chi.omega(), &q).unwrap();
        assert_eq!(g4, &g * 4.0);
        let r = GramReport::from_matrix(&g, q, 256);
        let r4 = GramReport::from_matrix(&g4, q, 256);
        assert_eq!(r4.det, 16.0 * r.det);
    }

    #[test]
    fn thin_window_near_boundary_is_flagged() {
        let fixture_report = gram_report(&fixture(&[0.3, 0.6], 2048), &cutoff(), &QuadSpec::default()).unwrap();
        assert!(!fixture_report.near_degenerate());
        let thin = Cutoff::new((3.0, 3.01), 0.004).unwrap();
        let r = gram_report(&fixture(&[0.3, 0.6], 2048), &thin, &QuadSpec::default()).unwrap();
        assert!(!r.degenerate);
        assert!(r.near_degenerate(), "{r:?}");
    }

    #[test]
    fn coincident_points_are_degenerate() {
        let fields = fixture(&[0.3, 0.3], 256);
        let err = gram_matrix(&fields, &cutoff(), &QuadSpec::default()).unwrap_err();
        assert!(matches!(err, Error::DegenerateGram { .. }));
        let r = gram_report(&fields, &cutoff(), &QuadSpec::default()).unwrap();
        assert!(r.degenerate);
        assert!(linear_predict(&r, &[1e-3, 1e-3]).is_err());
    }

    #[test]
    fn prediction_examples() {
        let r = gram_matrix(&fixture(&[0.3, 0.6], 512), &cutoff(), &QuadSpec::default()).unwrap();
        assert_eq!(linear_predict(&r, &[0.0, 0.0]).unwrap(), vec![0.0, 0.0]);
        let r1 = gram_matrix(&fixture(&[0.3], 512), &cutoff(), &QuadSpec::default()).unwrap();
        let eps = linear_predict(&r1, &[1e-3]).unwrap();
        assert!((eps[0] - 1e-3 / r1.entry(0, 0)).abs() < 1e-15 * eps[0].abs());
    }

    proptest! {
        #[test]
        fn prediction_recovers_displacement(
            d in 1usize..6,
            entries in proptest::collection::vec(-1.0f64..1.0, 36),
            rhs in proptest::collection::vec(-1e-3f64..1e-3, 6),
        ) {
            let a = DMatrix::from_fn(d, d, |i, j| entries[i * 6 + j]);
            let spd = &a * a.transpose() + DMatrix::identity(d, d) * 0.5;
            let report = GramReport::from_matrix(&spd, QuadSpec::default(), 1);
            let eps = linear_predict(&report, &rhs[..d]).unwrap();
            let back = report.to_matrix() * DVector::from_vec(eps);
            for i in 0..d {
                prop_assert!((back[i] - rhs[i]).abs() < 1e-12);
            }
        }
    }
}
