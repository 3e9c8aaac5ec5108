//! Acceptance harness: one PASS/FAIL line per criterion, nonzero exit if any
//! criterion fails. Tolerances are fixed here and never scaled.

use std::process::ExitCode;
use std::time::Instant;

use lagctrl_core::control::Numerics;
use lagctrl_core::flowmap::{order_check, probe_ladder};
use lagctrl_core::spectral::mode_kernel;
use lagctrl_core::verify::{identity_suite, trig_batch, CheckResult, Status, SuiteOptions};
use lagctrl_core::{AdjointField, ControlProblem, GasModel, ShootingContext, SynthesisReport};
use serde_json::Value;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn scaled(v: &[f64], s: f64) -> Vec<f64> {
    v.iter().map(|x| s * x).collect()
}

fn trig_identity() -> Outcome {
    let start = Instant::now();
    let mut worst = 0.0f64;
    let mut per_d = Vec::new();
    for d in 1..=6 {
        let cases = trig_batch(d, 1000, Numerics::default().seed).expect("trig batch");
        let w = cases.iter().map(|c| c.rel_error).fold(0.0, f64::max);
        per_d.push(format!("d{d} {w:.1e}"));
        worst = worst.max(w);
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        worst <= 1e-10 && secs < 5.0,
        format!(
            "worst rel error {worst:.2e} <= 1e-10 over 6000 tuples ({}), {secs:.2} s < 5 s",
            per_d.join(", ")
        ),
    )
}

fn resonance_continuity() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for tau in [0.1, 1.0, 2.0] {
        let resonant = mode_kernel(2, 1.0, tau);
        let err = [1.0 - 1e-6, 1.0 + 1e-6]
            .iter()
            .map(|&c| (mode_kernel(2, c, tau) - resonant).abs())
            .fold(0.0, f64::max);
        pass &= err <= 1e-8;
        parts.push(format!("tau={tau}: {err:.2e}"));
    }
    outcome(pass, format!("|k(c=1+-1e-6) - k_res| <= 1e-8: {}", parts.join(", ")))
}

fn series_truncation() -> Outcome {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/xi_reference.json");
    let doc: Value = serde_json::from_str(&std::fs::read_to_string(path).expect("reference fixture")).unwrap();
    let c = doc["c"].as_f64().unwrap();
    let horizon = doc["horizon"].as_f64().unwrap();
    let start = Instant::now();
    let mut worst = 0.0f64;
    let mut count = 0;
    for f in doc["fields"].as_array().unwrap() {
        let alpha = f["alpha"].as_f64().unwrap();
        let field = AdjointField::new(alpha, c, horizon, 2048)
            .unwrap()
            .with_acceleration(true);
        for p in f["points"].as_array().unwrap() {
            let (t, x, want) = (
                p["t"].as_f64().unwrap(),
                p["x"].as_f64().unwrap(),
                p["xi"].as_f64().unwrap(),
            );
            worst = worst.max((field.xi_eval(t, x).unwrap() - want).abs());
            count += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        worst <= 1e-6 && secs < 1.0,
        format!("max |xi_2048 - xi_1e7| = {worst:.2e} <= 1e-6 at {count} points, {secs:.3} s"),
    )
}

fn suite(group: &str) -> Vec<CheckResult> {
    let opts = SuiteOptions {
        only: [group.to_string()].into(),
        ..SuiteOptions::default()
    };
    identity_suite(
        &ControlProblem::default(),
        &GasModel::default(),
        &Numerics::default(),
        &opts,
    )
    .expect("suite runs")
    .checks
}

fn duality() -> Outcome {
    let checks = suite("duality");
    let pass = !checks.is_empty() && checks.iter().all(|c| c.status == Status::Pass);
    let worst = checks
        .iter()
        .filter(|c| c.name.starts_with("int"))
        .map(|c| c.measured)
        .fold(0.0, f64::max);
    let order = checks
        .iter()
        .filter(|c| c.name.starts_with("refinement"))
        .map(|c| c.measured)
        .fold(f64::INFINITY, f64::min);
    outcome(
        pass,
        format!(
            "worst |int v_i(alpha_j) - G_ij| / |G_ij| = {worst:.2e} <= 2% at M=1024, min order M->2M {order:.3} >= 1"
        ),
    )
}

fn linearization(ctx: &ShootingContext) -> Outcome {
    let alphas = &ctx.problem().alphas;
    let d = alphas.len();
    let eps = [1e-2, 5e-3, 2.5e-3];
    // err[k][i][j] = E(eps_k) for entry (i, j)
    let mut err = vec![vec![vec![0.0; d]; d]; eps.len()];
    for (k, &e) in eps.iter().enumerate() {
        for i in 0..d {
            let mut amp = vec![0.0; d];
            amp[i] = e;
            let theta = ctx.theta(&amp).expect("small forcing stays in regime");
            for j in 0..d {
                err[k][i][j] = ((theta[j] - alphas[j]) / e - ctx.gram().entry(i, j)).abs();
            }
        }
    }
    let mut worst = 0.0f64;
    for pair in err.windows(2) {
        for (coarse, fine) in pair[0].iter().flatten().zip(pair[1].iter().flatten()) {
            worst = worst.max(fine / coarse);
        }
    }
    let floor: Vec<String> = (0..eps.len()).map(|k| format!("{:.2e}", err[k][0][0])).collect();
    let discrete = suite("linearization")
        .iter()
        .filter(|c| c.name.starts_with("ladder"))
        .map(|c| c.measured)
        .fold(0.0, f64::max);
    outcome(
        worst <= 0.7,
        format!(
            "max E(eps/2)/E(eps) = {worst:.3} <= 0.7 (E_00 = {}); against the discrete int v the ratio is {discrete:.3}",
            floor.join(", ")
        ),
    )
}

fn tight(numerics: &Numerics) -> Numerics {
    Numerics {
        tol_pos: 1e-11,
        ..numerics.clone()
    }
}

/// Converges from the linear guess, then checks that tight restarts from
/// 0.5 and 1.5 times the guess agree.
fn shooting(problem: &ControlProblem, max_iter: usize) -> (Outcome, Option<(ShootingContext, SynthesisReport)>) {
    let gas = GasModel::default();
    let numerics = Numerics::default();
    let ctx = ShootingContext::new(problem, &gas, &numerics).expect("context");
    let gram = ctx.gram();
    let pd = !gram.degenerate && gram.min_eigenvalue > 0.0;
    let report = match ctx.synthesize() {
        Ok(r) => r,
        Err(e) => {
            let detail = format!(
                "d={} lambda_min {:.2e}, condition {:.2e}; synthesis failed: {e}",
                problem.d(),
                gram.min_eigenvalue,
                gram.condition_number
            );
            return (outcome(false, detail), None);
        }
    };
    let converged = report.iterations <= max_iter && report.max_residual() <= 1e-6;
    let precise = ShootingContext::new(problem, &gas, &tight(&numerics)).expect("context");
    let guess = precise.linear_guess().unwrap();
    let runs: Vec<_> = [1.0, 1.5, 0.5]
        .iter()
        .map(|&s| precise.synthesize_from(&scaled(&guess, s)))
        .collect();
    let spread = match (&runs[0], &runs[1], &runs[2]) {
        (Ok(a), Ok(b), Ok(c)) => max_abs_diff(&a.epsilon, &b.epsilon).max(max_abs_diff(&a.epsilon, &c.epsilon)),
        _ => f64::INFINITY,
    };
    let detail = format!(
        "d={} lambda_min {:.2e}, {} iterations <= {max_iter}, residual {:.2e} <= 1e-6, eps {:?}; restarts from 0.5x/1.5x guess agree to {spread:.2e} <= 1e-5",
        problem.d(),
        gram.min_eigenvalue,
        report.iterations,
        report.max_residual(),
        report.epsilon.iter().map(|e| format!("{e:.6}")).collect::<Vec<_>>(),
    );
    (outcome(pd && converged && spread <= 1e-5, detail), Some((ctx, report)))
}

fn structural(runs: &[(ShootingContext, SynthesisReport)]) -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for (ctx, report) in runs {
        let d = ctx.problem().d();
        let (_, run) = ctx.theta_with_run(&report.epsilon).expect("converged run");
        let order = order_check(&run.history, &probe_ladder(64), &ctx.numerics().integrator()).unwrap();
        let (rest, rest_run) = ctx.theta_with_run(&vec![0.0; d]).unwrap();
        let rest_exact = rest == ctx.problem().alphas
            && rest_run.history.values().iter().all(|&u| u == 0.0)
            && rest_run.state.rho.iter().all(|&r| r == 1.0);
        let g = ctx.gram();
        let m = g.to_matrix();
        let symmetric = g.asymmetry <= 1e-12 && m == m.transpose();
        let ok = run.diag.mass_drift <= 1e-12 && rest_exact && order.ordered && symmetric && g.min_eigenvalue > 0.0;
        pass &= ok;
        parts.push(format!(
            "d={d}: mass drift {:.1e}, rest exact {rest_exact}, 64 probes min gap {:.2e}, asymmetry {:.1e}, lambda_min {:.2e}",
            run.diag.mass_drift, order.min_gap, g.asymmetry, g.min_eigenvalue
        ));
    }
    outcome(pass, parts.join("; "))
}

fn main() -> ExitCode {
    let started = Instant::now();
    let mut results: Vec<(u32, &str, Outcome, f64)> = Vec::new();
    let mut run = |id: u32, name: &'static str, f: &mut dyn FnMut() -> Outcome| {
        let t = Instant::now();
        let o = f();
        let secs = t.elapsed().as_secs_f64();
        println!(
            "criterion {id} [{}] {name}: {} ({secs:.1} s)",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail
        );
        results.push((id, name, o, secs));
    };

    run(1, "trig Vandermonde identity", &mut trig_identity);
    run(2, "resonance continuity of the mode kernel", &mut resonance_continuity);
    run(
        3,
        "series truncation against 1e7-term reference",
        &mut series_truncation,
    );
    run(4, "duality identity", &mut duality);

    let fixture = ControlProblem::default();
    let mut accepted = Vec::new();
    let mut first = None;
    run(6, "end-to-end shooting, d=2", &mut || {
        let (o, r) = shooting(&fixture, 10);
        first = r;
        o
    });
    if let Some((ctx, _)) = &first {
        run(5, "linearization remainder", &mut || linearization(ctx));
    }
    accepted.extend(first);
    let three = ControlProblem {
        alphas: vec![0.2, 0.45, 0.7],
        betas: vec![0.201, 0.4495, 0.7005],
        ..ControlProblem::default()
    };
    run(8, "end-to-end shooting, d=3", &mut || {
        let (o, r) = shooting(&three, 12);
        accepted.extend(r);
        o
    });
    run(7, "structural invariants on accepted runs", &mut || {
        structural(&accepted)
    });

    results.sort_by_key(|r| r.0);
    let failed: Vec<u32> = results.iter().filter(|r| !r.2.pass).map(|r| r.0).collect();
    println!(
        "acceptance: {} of {} criteria pass, total {:.1} s{}",
        results.len() - failed.len(),
        results.len(),
        started.elapsed().as_secs_f64(),
        if failed.is_empty() {
            String::new()
        } else {
            format!("; failing: {failed:?}")
        }
    );
    if failed.is_empty() && results.len() == 8 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
