//! Spectral structure of the linearized operator, one Fourier mode at a time.
//!
//! On the pair (`cos nx` density coefficient, `sin nx` velocity coefficient)
//! the adjoint operator acts as the 2x2 block
//!
//! ```text
//! A_n = [  0    c n ]
//!       [ -c n  -n^2 ]
//! ```
//!
//! with trace `-n^2` and determinant `c^2 n^2`. Its eigenvalues `lambda_n <=
//! mu_n` are complex conjugate for `n < 2c`, coincide at `n = 2c` and are
//! real and distinct for `n > 2c`. Everything downstream is expressed in
//! real arithmetic.

use serde::Serialize;

/// Below this value of `|mu - lambda| * tau` the kernel switches to its
/// Taylor form.
pub const NEAR_RESONANCE_SAFEGUARD: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Branch {
    /// `n < 2c`: `lambda = conj(mu)`, decaying oscillation.
    Oscillatory,
    /// `n = 2c`: double eigenvalue `-n^2 / 2`.
    Resonant,
    /// `n > 2c`: two distinct negative real eigenvalues.
    Overdamped,
}

/// Eigenvalues of `A_n`.
///
/// `lambda = lambda_re - i * imag` and `mu = mu_re + i * imag`, where `imag`
/// is nonzero only on the oscillatory branch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModeEigen {
    pub n: u32,
    pub c: f64,
    pub branch: Branch,
    pub lambda_re: f64,
    pub mu_re: f64,
    pub imag: f64,
}

/// Eigenvalues of the `n`-th block for sound speed `c`.
///
/// The overdamped `mu_n` is obtained from `lambda_n mu_n = c^2 n^2` rather
/// than from the quadratic formula, which cancels catastrophically for large
/// `n`.
pub fn eigen_pair(n: u32, c: f64) -> ModeEigen {
    assert!(n >= 1, "mode index must be positive");
    assert!(c > 0.0 && c.is_finite(), "sound speed must be positive");
    let nf = n as f64;
    let half = 0.5 * nf * nf;
    let two_c = 2.0 * c;
    if nf == two_c {
        ModeEigen {
            n,
            c,
            branch: Branch::Resonant,
            lambda_re: -half,
            mu_re: -half,
            imag: 0.0,
        }
    } else if nf < two_c {
        // n * sqrt(c^2 - n^2/4), factored to stay accurate near resonance
        let omega = 0.5 * nf * ((two_c - nf) * (two_c + nf)).sqrt();
        ModeEigen {
            n,
            c,
            branch: Branch::Oscillatory,
            lambda_re: -half,
            mu_re: -half,
            imag: omega,
        }
    } else {
        let split = 0.5 * nf * ((nf - two_c) * (nf + two_c)).sqrt();
        let lambda = -half - split;
        let mu = c * c * nf * nf / lambda;
        ModeEigen {
            n,
            c,
            branch: Branch::Overdamped,
            lambda_re: lambda,
            mu_re: mu,
            imag: 0.0,
        }
    }
}

impl ModeEigen {
    /// `|mu - lambda|`.
    pub fn gap(&self) -> f64 {
        match self.branch {
            Branch::Oscillatory => 2.0 * self.imag,
            Branch::Resonant => 0.0,
            Branch::Overdamped => self.mu_re - self.lambda_re,
        }
    }

    pub fn trace(&self) -> f64 {
        self.lambda_re + self.mu_re
    }

    pub fn determinant(&self) -> f64 {
        self.lambda_re * self.mu_re + self.imag * self.imag
    }

    /// Divided difference `(e^{mu tau} - e^{lambda tau}) / (mu - lambda)`,
    /// continued by `tau e^{lambda tau}` at the double eigenvalue.
    ///
    /// This is the `(2,2)` entry of `int_0^tau e^{A_n s} ds`, i.e. the
    /// response of the sine coefficient to a unit constant source.
    pub fn kernel(&self, tau: f64) -> f64 {
        debug_assert!(tau >= 0.0);
        if tau == 0.0 {
            return 0.0;
        }
        match self.branch {
            Branch::Resonant => tau * (self.lambda_re * tau).exp(),
            Branch::Oscillatory => {
                let x = self.imag * tau;
                let sinc = if 2.0 * x < NEAR_RESONANCE_SAFEGUARD {
                    1.0 - x * x / 6.0
                } else {
                    x.sin() / x
                };
                (self.lambda_re * tau).exp() * tau * sinc
            }
            Branch::Overdamped => {
                let gap = self.mu_re - self.lambda_re;
                let z = gap * tau;
                if z < NEAR_RESONANCE_SAFEGUARD {
                    tau * (self.lambda_re * tau).exp() * (1.0 + z / 2.0 + z * z / 6.0)
                } else if z < 1.0 {
                    (self.lambda_re * tau).exp() * z.exp_m1() / gap
                } else {
                    ((self.mu_re * tau).exp() - (self.lambda_re * tau).exp()) / gap
                }
            }
        }
    }

    /// Real part of `(e^{lambda t} + e^{mu t}) / 2`.
    pub fn mean_exp(&self, t: f64) -> f64 {
        match self.branch {
            Branch::Resonant => (self.lambda_re * t).exp(),
            Branch::Oscillatory => (self.lambda_re * t).exp() * (self.imag * t).cos(),
            Branch::Overdamped => 0.5 * ((self.lambda_re * t).exp() + (self.mu_re * t).exp()),
        }
    }

    /// `e^{A_n t}` in the basis (cosine density mode, sine velocity mode).
    ///
    /// With `m = -n^2/2` and `B = A_n - m I` one has `B^2 = ((mu - lambda)/2)^2 I`,
    /// so `e^{A_n t} = mean_exp(t) I + kernel(t) B` on every branch.
    pub fn block(&self, t: f64) -> [[f64; 2]; 2] {
        let nf = self.n as f64;
        let half = 0.5 * nf * nf;
        let cn = self.c * nf;
        let k = self.kernel(t);
        let m = self.mean_exp(t);
        [[m + half * k, cn * k], [-cn * k, m - half * k]]
    }

    /// Time derivative of [`kernel`](Self::kernel): the `(2,2)` entry of `e^{A_n t}`.
    pub fn kernel_rate(&self, t: f64) -> f64 {
        let nf = self.n as f64;
        self.mean_exp(t) - 0.5 * nf * nf * self.kernel(t)
    }
}

/// `k_n(tau)`; see [`ModeEigen::kernel`].
pub fn mode_kernel(n: u32, c: f64, tau: f64) -> f64 {
    eigen_pair(n, c).kernel(tau)
}

/// Propagator of the adjoint block in reversed time `tau = T - t`.
pub fn semigroup_block(n: u32, c: f64, t: f64) -> [[f64; 2]; 2] {
    eigen_pair(n, c).block(t)
}
