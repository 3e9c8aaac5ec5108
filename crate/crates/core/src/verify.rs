//! Numerical checks: the trigonometric Vandermonde identity
//!
//! ```text
//! det(sin(i alpha_j))_{i,j=1..d}
//!     = 2^{d(d-1)} prod_i sin(alpha_i) prod_{i<j} sin((alpha_i - alpha_j)/2) sin((alpha_i + alpha_j)/2),
//! ```
//!
//! the polynomials `S_i` with `sin(i theta) = S_i(cos theta) sin theta`, and
//! a suite tying the Gram matrix to the PDE solvers.

use std::collections::BTreeSet;
use std::fmt;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use twofloat::TwoFloat;

use crate::adjoint::{AdjointField, ForcingTable};
use crate::control::{ControlProblem, Numerics, ShootingContext};
use crate::pde::{solve_linearized, GasModel, Zero};
use crate::{par, Error, Result};

/// Largest `d` accepted by [`trig_vandermonde_brute`].
pub const BRUTE_SIZE_LIMIT: usize = 12;

/// Largest index accepted by [`chebyshev_s`]; coefficients stay inside `i128`.
pub const CHEBYSHEV_LIMIT: u32 = 64;

/// Denominator floor for relative errors of tiny determinants.
pub const REL_FLOOR: f64 = 1e-15;

/// Minimum spacing of random tuples.
pub const MIN_GAP: f64 = 1e-3;

/// Product formula for `det(sin(i alpha_j))`. Unsorted input gives the sign
/// of the correspondingly permuted determinant.
pub fn trig_vandermonde_closed(alphas: &[f64]) -> f64 {
    let d = alphas.len();
    let mut p = 2f64.powi((d * d.saturating_sub(1)) as i32);
    for &a in alphas {
        p *= a.sin();
    }
    for j in 0..d {
        for i in 0..j {
            p *= (0.5 * (alphas[i] - alphas[j])).sin() * (0.5 * (alphas[i] + alphas[j])).sin();
        }
    }
    p
}

/// `det(sin(i alpha_j))` by LU decomposition with partial pivoting.
///
/// Entries and elimination are carried in double-double arithmetic: for
/// clustered points the determinant of the double-precision matrix is itself
/// off by up to `1e-9` relative, whatever the elimination accuracy.
pub fn trig_vandermonde_brute(alphas: &[f64]) -> Result<f64> {
    let d = alphas.len();
    if d > BRUTE_SIZE_LIMIT {
        return Err(Error::SizeLimit {
            d,
            limit: BRUTE_SIZE_LIMIT,
        });
    }
    let mut a: Vec<Vec<TwoFloat>> = (1..=d)
        .map(|i| alphas.iter().map(|&x| (TwoFloat::from(x) * i as f64).sin()).collect())
        .collect();
    let mut det = TwoFloat::from(1.0);
    for k in 0..d {
        let pivot = (k..d)
            .max_by(|&p, &q| {
                a[p][k]
                    .abs()
                    .partial_cmp(&a[q][k].abs())
                    .unwrap_or(std::cmp::Ordering::Equal)
            })
            .unwrap_or(k);
        if a[pivot][k] == TwoFloat::from(0.0) {
            return Ok(0.0);
        }
        if pivot != k {
            a.swap(pivot, k);
            det = -det;
        }
        det *= a[k][k];
        let inv = reciprocal(a[k][k]);
        let (upper, lower) = a.split_at_mut(k + 1);
        let pivot_row = &upper[k];
        for row in lower.iter_mut() {
            let factor = row[k] * inv;
            for (x, &p) in row[k + 1..].iter_mut().zip(&pivot_row[k + 1..]) {
                *x -= factor * p;
            }
        }
    }
    Ok(det.hi() + det.lo())
}

// twofloat's quotient is only good to about 1e-17; one Newton step restores
// full double-double accuracy.
fn reciprocal(x: TwoFloat) -> TwoFloat {
    let y = TwoFloat::from(1.0 / x.hi());
    let y = y + y * (TwoFloat::from(1.0) - x * y);
    y + y * (TwoFloat::from(1.0) - x * y)
}

/// `det(sin(i alpha_j))` in plain double precision, for comparison.
pub fn trig_vandermonde_f64(alphas: &[f64]) -> f64 {
    let d = alphas.len();
    DMatrix::from_fn(d, d, |i, j| ((i + 1) as f64 * alphas[j]).sin())
        .lu()
        .determinant()
}

/// Coefficients of `S_i`, constant term first, from the multiple-angle
/// expansion `S_i(x) = sum_k (-1)^k C(i, 2k+1) x^{i-2k-1} (1 - x^2)^k`.
pub fn chebyshev_s(i: u32) -> Vec<i128> {
    assert!(
        (1..=CHEBYSHEV_LIMIT).contains(&i),
        "chebyshev_s index must lie in 1..={CHEBYSHEV_LIMIT}"
    );
    let i = i as usize;
    let binom = |n: usize, k: usize| -> i128 {
        let mut b: i128 = 1;
        for t in 0..k {
            b = b * (n - t) as i128 / (t + 1) as i128;
        }
        b
    };
    let mut coeffs = vec![0i128; i];
    let mut k = 0;
    while 2 * k < i {
        let sign = if k % 2 == 0 { 1 } else { -1 };
        let outer = sign * binom(i, 2 * k + 1);
        let base = i - 2 * k - 1;
        // (1 - x^2)^k = sum_m C(k, m) (-1)^m x^{2m}
        for m in 0..=k {
            let inner = if m % 2 == 0 { 1 } else { -1 } * binom(k, m);
            coeffs[base + 2 * m] += outer * inner;
        }
        k += 1;
    }
    coeffs
}

/// Horner evaluation of integer coefficients.
pub fn eval_poly(coeffs: &[i128], x: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrigDetCase {
    pub alphas: Vec<f64>,
    pub closed_form: f64,
    pub brute_force: f64,
    pub rel_error: f64,
}

impl TrigDetCase {
    pub fn evaluate(alphas: Vec<f64>) -> Result<Self> {
        let closed_form = trig_vandermonde_closed(&alphas);
        let brute_force = trig_vandermonde_brute(&alphas)?;
        let rel_error = (closed_form - brute_force).abs() / brute_force.abs().max(REL_FLOOR);
        Ok(Self {
            alphas,
            closed_form,
            brute_force,
            rel_error,
        })
    }
}

/// Strictly increasing tuple in `(0, pi)` with consecutive gaps of at least `min_gap`.
pub fn random_tuple(rng: &mut impl Rng, d: usize, min_gap: f64) -> Vec<f64> {
    loop {
        let mut t: Vec<f64> = (0..d).map(|_| rng.random_range(0.0..std::f64::consts::PI)).collect();
        t.sort_by(f64::total_cmp);
        if t[0] > 0.0 && t.windows(2).all(|w| w[1] - w[0] >= min_gap) {
            return t;
        }
    }
}

/// `count` random cases of size `d`, reproducible from `seed`.
pub fn trig_batch(d: usize, count: usize, seed: u64) -> Result<Vec<TrigDetCase>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(d as u64));
    let tuples: Vec<Vec<f64>> = (0..count).map(|_| random_tuple(&mut rng, d, MIN_GAP)).collect();
    par::map(&tuples, |t| TrigDetCase::evaluate(t.clone()))
        .into_iter()
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pass,
    Fail,
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub group: &'static str,
    pub name: String,
    pub status: Status,
    pub measured: f64,
    pub tolerance: f64,
    pub detail: String,
}

impl CheckResult {
    fn bound(group: &'static str, name: String, measured: f64, tolerance: f64, detail: String) -> Self {
        let status = if measured <= tolerance {
            Status::Pass
        } else {
            Status::Fail
        };
        Self {
            group,
            name,
            status,
            measured,
            tolerance,
            detail,
        }
    }

    fn skipped(group: &'static str, name: &str, why: String) -> Self {
        Self {
            group,
            name: name.to_string(),
            status: Status::Skipped,
            measured: f64::NAN,
            tolerance: f64::NAN,
            detail: why,
        }
    }
}

/// Check groups in execution order.
pub const GROUPS: [&str; 4] = ["gram", "duality", "linearization", "trig"];

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteOptions {
    /// Groups to run; all when empty.
    pub only: BTreeSet<String>,
    /// Multiplies every tolerance.
    pub tolerance_scale: f64,
    /// Random tuples per size in the trig group.
    pub trig_cases: usize,
}

impl Default for SuiteOptions {
    fn default() -> Self {
        Self {
            only: BTreeSet::new(),
            tolerance_scale: 1.0,
            trig_cases: 1000,
        }
    }
}

impl SuiteOptions {
    fn wants(&self, group: &str) -> bool {
        self.only.is_empty() || self.only.contains(group)
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(bad) = self.only.iter().find(|g| !GROUPS.contains(&g.as_str())) {
            return Err(Error::InvalidConfig {
                field: "only".into(),
                reason: format!("unknown check group {bad:?}; expected one of {GROUPS:?}"),
            });
        }
        if !(self.tolerance_scale > 0.0 && self.tolerance_scale.is_finite()) {
            return Err(Error::InvalidConfig {
                field: "tolerance_scale".into(),
                reason: format!("{} must be positive", self.tolerance_scale),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteReport {
    pub checks: Vec<CheckResult>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.status != Status::Fail)
    }

    pub fn count(&self, status: Status) -> usize {
        self.checks.iter().filter(|c| c.status == status).count()
    }
}

impl fmt::Display for SuiteReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{:<14} {:<34} {:<7} {:>12} {:>12}  detail",
            "group", "check", "status", "measured", "tolerance"
        )?;
        for c in &self.checks {
            let status = match c.status {
                Status::Pass => "pass",
                Status::Fail => "FAIL",
                Status::Skipped => "skip",
            };
            writeln!(
                f,
                "{:<14} {:<34} {:<7} {:>12.4e} {:>12.4e}  {}",
                c.group, c.name, status, c.measured, c.tolerance, c.detail
            )?;
        }
        write!(
            f,
            "{} passed, {} failed, {} skipped",
            self.count(Status::Pass),
            self.count(Status::Fail),
            self.count(Status::Skipped)
        )
    }
}

/// Duality tolerance `|int v_i(., alpha_j) - G_ij| / |G_ij|`.
pub const DUALITY_TOL: f64 = 0.02;
/// Symmetry tolerance of the averaged Gram matrix.
pub const SYMMETRY_TOL: f64 = 1e-12;
/// Largest admissible `E(eps/2) / E(eps)` on the linearization ladder.
pub const LADDER_RATIO: f64 = 0.7;
/// Trig identity tolerance.
pub const TRIG_TOL: f64 = 1e-10;

/// Runs the selected check groups. Failed checks are reported, not raised;
/// errors only come from invalid input.
pub fn identity_suite(
    problem: &ControlProblem,
    gas: &GasModel,
    numerics: &Numerics,
    opts: &SuiteOptions,
) -> Result<SuiteReport> {
    opts.validate()?;
    let scale = opts.tolerance_scale;
    let mut checks = Vec::new();
    let needs_context = ["gram", "duality", "linearization"].iter().any(|g| opts.wants(g));
    if needs_context {
        let ctx = ShootingContext::new(problem, gas, numerics)?;
        let gram = ctx.gram();
        let d = problem.d();
        if gram.degenerate {
            let why = format!(
                "degenerate Gram matrix (min eigenvalue {:e}, max {:e})",
                gram.min_eigenvalue, gram.max_eigenvalue
            );
            for g in ["gram", "duality", "linearization"] {
                if opts.wants(g) {
                    checks.push(CheckResult::skipped(g, "all", why.clone()));
                }
            }
        } else {
            if opts.wants("gram") {
                checks.extend(gram_checks(&ctx, scale));
            }
            if opts.wants("duality") {
                checks.extend(duality_checks(&ctx, scale)?);
            }
            if opts.wants("linearization") {
                for i in 0..d {
                    checks.extend(ladder_checks(&ctx, i, scale)?);
                }
            }
        }
    }
    if opts.wants("trig") {
        for d in 1..=6 {
            let cases = trig_batch(d, opts.trig_cases, numerics.seed)?;
            let worst = cases.iter().map(|c| c.rel_error).fold(0.0, f64::max);
            checks.push(CheckResult::bound(
                "trig",
                format!("vandermonde d={d}"),
                worst,
                TRIG_TOL * scale,
                format!("{} random tuples, worst relative error", cases.len()),
            ));
        }
        let worst = (1..=24u32)
            .flat_map(|i| {
                let s = chebyshev_s(i);
                (1..100).map(move |k| {
                    // Monomial coefficients reach 2^22 here, so the check runs in
                    // double-double to keep cancellation out of the comparison.
                    let th = TwoFloat::from(0.0314 * k as f64);
                    let x = th.cos();
                    let poly = s.iter().rev().fold(TwoFloat::from(0.0), |acc, &c| acc * x + c as f64);
                    let diff = (th * i as f64).sin() - poly * th.sin();
                    diff.hi().abs() / (i as f64)
                })
            })
            .fold(0.0, f64::max);
        checks.push(CheckResult::bound(
            "trig",
            "multiple-angle polynomials".into(),
            worst,
            1e-12 * scale,
            "sin(i t) = S_i(cos t) sin t, i <= 24".into(),
        ));
    }
    Ok(SuiteReport { checks })
}

fn gram_checks(ctx: &ShootingContext, scale: f64) -> Vec<CheckResult> {
    let g = ctx.gram();
    let mut out = vec![
        CheckResult::bound(
            "gram",
            "symmetry".into(),
            g.asymmetry,
            SYMMETRY_TOL * scale,
            "max |G_ij - G_ji| before averaging".into(),
        ),
        CheckResult {
            group: "gram",
            name: "positive definite".into(),
            status: if g.min_eigenvalue > 0.0 {
                Status::Pass
            } else {
                Status::Fail
            },
            measured: g.min_eigenvalue,
            tolerance: 0.0,
            detail: format!("condition number {:.3e}, det {:.6e}", g.condition_number, g.det),
        },
    ];
    for i in 0..g.d {
        for j in i + 1..g.d {
            let ratio = g.entry(i, j).powi(2) / (g.entry(i, i) * g.entry(j, j));
            out.push(CheckResult {
                group: "gram",
                name: format!("cauchy-schwarz ({i},{j})"),
                status: if ratio < 1.0 { Status::Pass } else { Status::Fail },
                measured: ratio,
                tolerance: 1.0,
                detail: "G_ij^2 / (G_ii G_jj) strictly below 1".into(),
            });
        }
    }
    out
}

/// `int_0^T v_i(t, alpha_j) dt` on the context grid and on the grid with
/// twice the cells.
fn duality_checks(ctx: &ShootingContext, scale: f64) -> Result<Vec<CheckResult>> {
    let problem = ctx.problem();
    let numerics = ctx.numerics();
    let d = problem.d();
    let cutoff = problem.cutoff()?;
    let fine_grid = Numerics {
        cells: 2 * numerics.cells,
        dt: numerics.dt.map(|dt| dt / 2.0),
        ..numerics.clone()
    }
    .grid(problem.horizon, ctx.gas().c)?;
    let runs = par::map_range(2 * d, |k| -> Result<Vec<f64>> {
        let i = k % d;
        let (table, grid) = if k < d {
            (ctx.tables()[i].clone(), ctx.grid().clone())
        } else {
            let field = AdjointField::new(
                problem.alphas[i],
                ctx.gas().c,
                problem.horizon,
                numerics.forcing_truncation,
            )?
            .with_acceleration(numerics.acceleration);
            (ForcingTable::build(&field, &cutoff, &fine_grid)?, fine_grid.clone())
        };
        let run = solve_linearized(&table, &Zero, &grid, ctx.gas(), &numerics.solver_options())?;
        problem.alphas.iter().map(|&a| run.history.time_integral(a)).collect()
    });
    let runs = runs.into_iter().collect::<Result<Vec<_>>>()?;
    let mut out = Vec::new();
    for (i, (coarse_run, fine_run)) in runs[..d].iter().zip(&runs[d..]).enumerate() {
        for j in 0..d {
            let g = ctx.gram().entry(i, j);
            let coarse = (coarse_run[j] - g).abs() / g.abs();
            let fine = (fine_run[j] - g).abs() / g.abs();
            let order = (coarse / fine).log2();
            out.push(CheckResult::bound(
                "duality",
                format!("int v_{i}(alpha_{j}) vs G_{i}{j}"),
                coarse,
                DUALITY_TOL * scale,
                format!(
                    "M={} rel {coarse:.3e}, M={} rel {fine:.3e}, order {order:.2}",
                    ctx.grid().cells(),
                    fine_grid.cells()
                ),
            ));
            out.push(CheckResult {
                group: "duality",
                name: format!("refinement order ({i},{j})"),
                status: if order >= 1.0 / scale.min(1.0) || fine == 0.0 {
                    Status::Pass
                } else {
                    Status::Fail
                },
                measured: order,
                tolerance: 1.0,
                detail: "log2 of the error ratio under M -> 2M, at least 1".into(),
            });
        }
    }
    Ok(out)
}

/// Difference quotients of `Theta` along `e_i` for `eps = 1e-2, 5e-3, 2.5e-3`,
/// against the linearized solver on the same grid and against `G`.
fn ladder_checks(ctx: &ShootingContext, i: usize, scale: f64) -> Result<Vec<CheckResult>> {
    let problem = ctx.problem();
    let d = problem.d();
    let ladder = [1e-2, 5e-3, 2.5e-3];
    let linear = solve_linearized(
        &ctx.tables()[i],
        &Zero,
        ctx.grid(),
        ctx.gas(),
        &ctx.numerics().solver_options(),
    )?;
    let derivative: Vec<f64> = problem
        .alphas
        .iter()
        .map(|&a| linear.history.time_integral(a))
        .collect::<Result<_>>()?;
    let thetas = par::map(&ladder, |&e| {
        let mut eps = vec![0.0; d];
        eps[i] = e;
        ctx.theta(&eps)
    });
    let thetas = thetas.into_iter().collect::<Result<Vec<_>>>()?;
    let mut out = Vec::new();
    for j in 0..d {
        let quotient: Vec<f64> = ladder
            .iter()
            .zip(&thetas)
            .map(|(e, th)| (th[j] - problem.alphas[j]) / e)
            .collect();
        let e_disc: Vec<f64> = quotient.iter().map(|q| (q - derivative[j]).abs()).collect();
        let ratio = (e_disc[1] / e_disc[0]).max(e_disc[2] / e_disc[1]);
        out.push(CheckResult::bound(
            "linearization",
            format!("ladder ratio ({i},{j})"),
            ratio,
            LADDER_RATIO * scale,
            format!(
                "|quotient - int v| = {:.3e}, {:.3e}, {:.3e}",
                e_disc[0], e_disc[1], e_disc[2]
            ),
        ));
        let g = ctx.gram().entry(i, j);
        let rel = (quotient[2] - g).abs() / g.abs();
        out.push(CheckResult::bound(
            "linearization",
            format!("quotient vs G_{i}{j}"),
            rel,
            DUALITY_TOL * scale,
            format!("eps = 2.5e-3, |E| = {:.3e}", (quotient[2] - g).abs()),
        ));
    }
    Ok(out)
}
