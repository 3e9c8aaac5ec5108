//! Regenerates `tests/fixtures/xi_reference.json`: the adjoint field `xi` for
//! the two-point fixture summed to ten million modes without acceleration.
//!
//! The mode kernel is evaluated from the complex eigenvalues of the mode
//! block, independently of the library's real-arithmetic branches, and the
//! series is accumulated with Neumaier compensation.
//!
//! ```text
//! cargo run --release -p lagctrl-core --example xi_reference
//! ```

use std::f64::consts::PI;
use std::io::Write;

use num_complex::Complex64;
use rayon::prelude::*;
use serde_json::json;

const TERMS: u64 = 10_000_000;
const C: f64 = 1.3;
const HORIZON: f64 = 2.0;
const ALPHAS: [f64; 2] = [0.3, 0.6];
const TIMES: [f64; 5] = [0.05, 0.5, 1.0, 1.5, 1.95];
const XS: [f64; 5] = [1.55, 1.8, 2.0, 2.2, 2.45];

/// `k_n(tau) = (e^{l1 tau} - e^{l2 tau}) / (l1 - l2)` with `l^2 + n^2 l + c^2 n^2 = 0`.
fn kernel(n: f64, tau: f64) -> f64 {
    let b = n * n;
    let prod = C * C * n * n;
    let disc = Complex64::new(b * b - 4.0 * prod, 0.0).sqrt();
    // stable pair: the large root directly, the small one from the product
    let big = -(Complex64::new(b, 0.0) + disc) * 0.5;
    let small = Complex64::new(prod, 0.0) / big;
    let k = ((small * tau).exp() - (big * tau).exp()) / (small - big);
    k.re
}

struct Neumaier {
    sum: f64,
    carry: f64,
}

impl Neumaier {
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        self.carry += if self.sum.abs() >= x.abs() {
            (self.sum - t) + x
        } else {
            (x - t) + self.sum
        };
        self.sum = t;
    }
}

fn xi(alpha: f64, t: f64, x: f64) -> f64 {
    let tau = HORIZON - t;
    let mut acc = Neumaier { sum: 0.0, carry: 0.0 };
    for n in 1..=TERMS {
        let nf = n as f64;
        acc.add((nf * alpha).sin() * kernel(nf, tau) * (nf * x).sin());
    }
    2.0 / PI * (acc.sum + acc.carry)
}

fn main() -> std::io::Result<()> {
    let fields: Vec<_> = ALPHAS
        .iter()
        .map(|&alpha| {
            let grid: Vec<(f64, f64)> = TIMES.iter().flat_map(|&t| XS.iter().map(move |&x| (t, x))).collect();
            let points: Vec<_> = grid
                .par_iter()
                .map(|&(t, x)| json!({ "t": t, "x": x, "xi": xi(alpha, t, x) }))
                .collect();
            json!({ "alpha": alpha, "points": points })
        })
        .collect();
    let doc = json!({
        "c": C,
        "horizon": HORIZON,
        "terms": TERMS,
        "fields": fields,
    });
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/xi_reference.json");
    let mut f = std::fs::File::create(path)?;
    writeln!(f, "{}", serde_json::to_string_pretty(&doc)?)?;
    eprintln!("wrote {path}");
    Ok(())
}
