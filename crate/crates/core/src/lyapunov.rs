//! Transfer matrices of the first-moment recursion and Lyapunov exponents of
//! their i.i.d. products.

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::envmodel::{EnvironmentLaw, MomentTriple};
use crate::error::{Error, Result};
use crate::seed::stream_rng;

/// Slack below zero tolerated before a `lambda` counts as infeasible.
pub const FEASIBILITY_TOL: f64 = 1e-12;

/// A real 2x2 matrix, row major.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Matrix2 {
    pub a11: f64,
    pub a12: f64,
    pub a21: f64,
    pub a22: f64,
}

impl Matrix2 {
    pub const IDENTITY: Self = Self::new(1.0, 0.0, 0.0, 1.0);

    pub const fn new(a11: f64, a12: f64, a21: f64, a22: f64) -> Self {
        Self { a11, a12, a21, a22 }
    }

    pub fn det(&self) -> f64 {
        self.a11 * self.a22 - self.a12 * self.a21
    }

    pub fn trace(&self) -> f64 {
        self.a11 + self.a22
    }

    pub fn inverse(&self) -> Option<Self> {
        let d = self.det();
        if d == 0.0 || !d.is_finite() {
            return None;
        }
        Some(Self::new(self.a22 / d, -self.a12 / d, -self.a21 / d, self.a11 / d))
    }

    pub fn scale(&self, s: f64) -> Self {
        Self::new(self.a11 * s, self.a12 * s, self.a21 * s, self.a22 * s)
    }

    /// Max-absolute-entry norm.
    pub fn max_abs(&self) -> f64 {
        self.a11
            .abs()
            .max(self.a12.abs())
            .max(self.a21.abs())
            .max(self.a22.abs())
    }

    pub fn is_nonnegative(&self) -> bool {
        self.a11 >= 0.0 && self.a12 >= 0.0 && self.a21 >= 0.0 && self.a22 >= 0.0
    }

    pub fn apply(&self, v: [f64; 2]) -> [f64; 2] {
        [
            self.a11 * v[0] + self.a12 * v[1],
            self.a21 * v[0] + self.a22 * v[1],
        ]
    }
}

impl std::ops::Mul for Matrix2 {
    type Output = Self;

    fn mul(self, r: Self) -> Self {
        Self::new(
            self.a11 * r.a11 + self.a12 * r.a21,
            self.a11 * r.a12 + self.a12 * r.a22,
            self.a21 * r.a11 + self.a22 * r.a21,
            self.a21 * r.a12 + self.a22 * r.a22,
        )
    }
}

impl std::ops::Sub for Matrix2 {
    type Output = Self;

    fn sub(self, r: Self) -> Self {
        Self::new(
            self.a11 - r.a11,
            self.a12 - r.a12,
            self.a21 - r.a21,
            self.a22 - r.a22,
        )
    }
}

/// Transfer matrix of `f(k+1) = ((1 - mu0) f(k) - mu_minus f(k-1)) / mu_plus`.
pub fn build_a(m: &MomentTriple) -> Result<Matrix2> {
    if m.mu_plus <= 0.0 {
        return Err(Error::InvalidArgument("A requires mu_plus > 0".into()));
    }
    Ok(Matrix2::new(
        (1.0 - m.mu_zero) / m.mu_plus,
        -m.mu_minus / m.mu_plus,
        1.0,
        0.0,
    ))
}

/// The mirrored transfer matrix (roles of `mu_minus` and `mu_plus` swapped).
pub fn build_a_tilde(m: &MomentTriple) -> Result<Matrix2> {
    if m.mu_minus <= 0.0 {
        return Err(Error::InvalidArgument("A_tilde requires mu_minus > 0".into()));
    }
    build_a(&m.reflected())
}

/// The nonnegative matrix acting on `(g(k) - g(k-1), g(k))` with
/// `g(k) = lambda^-k f(k)`.
///
/// Entries are nonnegative exactly when `lambda` satisfies
/// `mu_minus / lambda + mu_zero + mu_plus * lambda <= 1`; other values are
/// rejected.
pub fn build_a_lambda(m: &MomentTriple, lambda: f64) -> Result<Matrix2> {
    if !(lambda.is_finite() && lambda > 0.0) {
        return Err(Error::InfeasibleLambda {
            lambda,
            reason: "lambda must be positive and finite".into(),
        });
    }
    if m.mu_plus <= 0.0 {
        return Err(Error::InvalidArgument("A_lambda requires mu_plus > 0".into()));
    }
    let slack = 1.0 - m.lambda_mean(lambda);
    if slack < -FEASIBILITY_TOL {
        return Err(Error::InfeasibleLambda {
            lambda,
            reason: format!("mu_minus/lambda + mu_zero + mu_plus*lambda exceeds 1 by {}", -slack),
        });
    }
    let corner = m.mu_minus / (lambda * lambda * m.mu_plus);
    let off = slack.max(0.0) / (lambda * m.mu_plus);
    Ok(Matrix2::new(corner, off, corner, 1.0 + off))
}

/// The conjugating matrix `B = [[1, -lambda], [1, 0]]`.
pub fn conjugator(lambda: f64) -> Matrix2 {
    Matrix2::new(1.0, -lambda, 1.0, 0.0)
}

/// Max-abs entry of `A - lambda B^-1 A_lambda B`.
pub fn conjugacy_residual(m: &MomentTriple, lambda: f64) -> Result<f64> {
    let a = build_a(m)?;
    let al = build_a_lambda(m, lambda)?;
    let b = conjugator(lambda);
    let b_inv = b.inverse().expect("det B = lambda > 0");
    Ok((a - (b_inv * al * b).scale(lambda)).max_abs())
}

/// Which matrix family a Lyapunov exponent refers to.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum MatrixKind {
    A,
    ATilde,
    ALambda { lambda: f64 },
}

impl MatrixKind {
    pub fn name(&self) -> &'static str {
        match self {
            MatrixKind::A => "A",
            MatrixKind::ATilde => "A_tilde",
            MatrixKind::ALambda { .. } => "A_lambda",
        }
    }

    pub fn build(&self, m: &MomentTriple) -> Result<Matrix2> {
        match *self {
            MatrixKind::A => build_a(m),
            MatrixKind::ATilde => build_a_tilde(m),
            MatrixKind::ALambda { lambda } => build_a_lambda(m, lambda),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LyapunovOptions {
    /// Measured steps per replica.
    pub steps: u64,
    pub replicas: usize,
    pub seed: u64,
    /// Steps discarded before measuring; `None` means `steps / 100`.
    pub warmup: Option<u64>,
}

impl Default for LyapunovOptions {
    fn default() -> Self {
        Self {
            steps: 100_000,
            replicas: 32,
            seed: 0,
            warmup: None,
        }
    }
}

impl LyapunovOptions {
    pub fn with_seed(seed: u64) -> Self {
        Self {
            seed,
            ..Self::default()
        }
    }
}

/// Estimated top exponent in nats per step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LyapunovEstimate {
    pub value: f64,
    pub stderr: f64,
    pub steps: u64,
    pub replicas: usize,
    pub matrix_kind: MatrixKind,
}

impl LyapunovEstimate {
    /// Standard error of the difference of two independent estimates.
    pub fn combined_stderr(&self, other: &Self) -> f64 {
        self.stderr.hypot(other.stderr)
    }
}

/// Top Lyapunov exponent of the i.i.d. product of `kind` matrices.
///
/// Each replica draws states from the environment law with its own generator,
/// keeps the running product renormalised by its max-abs entry and sums the
/// log normalisers. Replicas run in parallel; the result does not depend on
/// the thread count.
pub fn top_lyapunov(
    envlaw: &EnvironmentLaw,
    kind: MatrixKind,
    opts: &LyapunovOptions,
) -> Result<LyapunovEstimate> {
    if opts.steps < 1_000 {
        return Err(Error::InvalidArgument(format!(
            "steps = {} < 1000",
            opts.steps
        )));
    }
    if opts.replicas < 2 {
        return Err(Error::InvalidArgument(format!(
            "replicas = {} < 2",
            opts.replicas
        )));
    }
    let matrices = envlaw
        .moments()
        .iter()
        .map(|m| kind.build(m))
        .collect::<Result<Vec<_>>>()?;
    let warmup = opts.warmup.unwrap_or(opts.steps / 100);

    let per_replica: Vec<f64> = (0..opts.replicas)
        .into_par_iter()
        .map(|r| {
            let mut rng = stream_rng(opts.seed, r as u64);
            let mut draw = || {
                if matrices.len() == 1 {
                    &matrices[0]
                } else {
                    &matrices[envlaw.state_for_uniform(rng.random::<f64>())]
                }
            };
            let mut product = Matrix2::IDENTITY;
            for _ in 0..warmup {
                product = *draw() * product;
                product = product.scale(product.max_abs().recip());
            }
            let mut log_sum = 0.0;
            for _ in 0..opts.steps {
                product = *draw() * product;
                let norm = product.max_abs();
                log_sum += norm.ln();
                product = product.scale(norm.recip());
            }
            log_sum / opts.steps as f64
        })
        .collect();

    let (mean, sd) = mean_sd(&per_replica);
    Ok(LyapunovEstimate {
        value: mean,
        stderr: sd / (opts.replicas as f64).sqrt(),
        steps: opts.steps,
        replicas: opts.replicas,
        matrix_kind: kind,
    })
}

/// Second exponent of the `A_lambda` products from the determinant sum rule:
/// `E ln det A_lambda - gamma1_lambda`.
///
/// `lambda` must be feasible for every state.
pub fn second_exponent_via_det(envlaw: &EnvironmentLaw, lambda: f64, gamma1_lambda: f64) -> f64 {
    mean_log_det_a_lambda(envlaw, lambda) - gamma1_lambda
}

/// `E ln(mu_minus / mu_plus) - 2 ln lambda`.
pub fn mean_log_det_a_lambda(envlaw: &EnvironmentLaw, lambda: f64) -> f64 {
    envlaw.expect(|m| (m.mu_minus / m.mu_plus).ln()) - 2.0 * lambda.ln()
}

pub(crate) fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}
