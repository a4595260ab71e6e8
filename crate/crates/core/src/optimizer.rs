//! Stochastic optimization of the prolongation operator.
//!
//! For a fixed coarse dimension `m` the asymptotic contraction factor
//! `ρ(T(P))` is minimized through the surrogate `‖T(P)^k‖_F²` (Gelfand
//! formula), estimated by Rademacher probes: `‖T^k‖_F² = E‖T^k z‖²`. The
//! empirical-mean objective `J(P) = (1/N) Σ_i ‖T(P)^k z_i‖²` is evaluated
//! matrix-free by pushing each probe through `k` sweeps of
//! smooth → residual → coarse solve → correct, and differentiated exactly in
//! reverse mode. The restriction is tied to `Pᵀ`, so adjoint contributions to
//! the restriction and to `A_c = PᵀAP` all fold into one gradient for `P`.
//! Plain gradient descent with a fixed learning rate does the rest.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg;
use crate::model_problem::{GridProblem, JacobiSmoother};
use crate::two_level::{
    assemble_t, metric_report, CoarseKind, CoarseSpace, KappaVariant, MetricReport,
};

/// Condition limit on `A_c` past which an iterate counts as singular.
const AC_COND_LIMIT: f64 = 1e12;

/// Settings of the stochastic prolongation optimization.
#[derive(Debug, Clone)]
pub struct OptimizerConfig {
    /// Coarse dimension.
    pub m: usize,
    /// Power of `T` inside the surrogate objective.
    pub k: usize,
    /// Number of Rademacher probes; defaults to `n`.
    pub num_samples: Option<usize>,
    /// Step size of the plain gradient descent.
    pub learning_rate: f64,
    /// Step budget.
    pub iterations: usize,
    /// Probes per step; defaults to the full sample set.
    pub batch_size: Option<usize>,
    /// RNG seed; runs are bit-reproducible given the seed.
    pub seed: u64,
    /// Half-width of the uniform initialization; defaults to `0.2/√n`.
    ///
    /// The objective depends on `range(P)` only, which makes the gradient
    /// orthogonal to the radial direction: `‖P‖` barely moves during descent
    /// and the initialization scale acts as the inverse effective step size.
    /// `0.2/√n` keeps column norms near 0.12 regardless of n, which makes the
    /// fixed 0.1 learning rate productive.
    pub init_scale: Option<f64>,
    /// Draw a fresh probe batch every step instead of fixing the sample set.
    pub resample: bool,
    /// Steps between `ρ(T(P))` probes.
    pub probe_interval: usize,
    /// Early-stop window (steps) and improvement threshold on the smoothed
    /// objective.
    pub early_stop_window: usize,
    pub early_stop_tol: f64,
}

impl OptimizerConfig {
    pub fn new(m: usize) -> Self {
        Self {
            m,
            k: 10,
            num_samples: None,
            learning_rate: 0.1,
            iterations: 2000,
            batch_size: None,
            seed: 0,
            init_scale: None,
            resample: false,
            probe_interval: 50,
            early_stop_window: 200,
            early_stop_tol: 1e-6,
        }
    }

    fn validate(&self, n: usize) -> Result<()> {
        if self.m < 1 || self.m > n {
            return Err(Error::CoarseDimOutOfRange { m: self.m, n });
        }
        if self.k < 1 {
            return Err(Error::InvalidConfig("k must be >= 1".into()));
        }
        if self.num_samples == Some(0) {
            return Err(Error::InvalidConfig("num_samples must be >= 1".into()));
        }
        if self.learning_rate.is_nan() || self.learning_rate <= 0.0 {
            return Err(Error::InvalidConfig("learning_rate must be > 0".into()));
        }
        let samples = self.num_samples.unwrap_or(n);
        if let Some(b) = self.batch_size {
            if b == 0 || b > samples {
                return Err(Error::InvalidConfig(format!(
                    "batch_size {b} must be in 1..={samples}"
                )));
            }
        }
        if let Some(s) = self.init_scale {
            if s.is_nan() || s <= 0.0 {
                return Err(Error::InvalidConfig("init_scale must be > 0".into()));
            }
        }
        if self.probe_interval == 0 {
            return Err(Error::InvalidConfig("probe_interval must be >= 1".into()));
        }
        Ok(())
    }
}

/// One recorded optimization step.
#[derive(Debug, Clone)]
pub struct TraceStep {
    pub step: usize,
    pub objective: f64,
    pub grad_norm: f64,
    /// `ρ(T(P))`, present on probe steps only.
    pub rho_probe: Option<f64>,
}

/// Why the loop ended.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TraceStatus {
    Completed,
    EarlyStopped { step: usize },
    Aborted { step: usize, halvings: usize },
}

/// Full optimization record: per-step values, the final iterate and the
/// best-ρ iterate seen at probe points.
#[derive(Debug, Clone)]
pub struct OptimizationTrace {
    pub steps: Vec<TraceStep>,
    pub status: TraceStatus,
    pub final_p: DMatrix<f64>,
    pub final_rho: f64,
    pub best_p: DMatrix<f64>,
    pub best_rho: f64,
    pub report: MetricReport,
}

/// Deterministic Rademacher probes (`±1` entries, equiprobable).
pub fn rademacher_probes(n: usize, count: usize, seed: u64) -> Vec<DVector<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    draw_probes(n, count, &mut rng)
}

fn draw_probes(n: usize, count: usize, rng: &mut ChaCha8Rng) -> Vec<DVector<f64>> {
    (0..count)
        .map(|_| DVector::from_fn(n, |_, _| if rng.random::<bool>() { 1.0 } else { -1.0 }))
        .collect()
}

/// Factorizations reused across probes for a fixed `P`.
struct SweepContext<'a> {
    a: &'a DMatrix<f64>,
    smooth_scale: f64,
    p: &'a DMatrix<f64>,
    ac_lu: nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
    ac_t_lu: nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
}

impl<'a> SweepContext<'a> {
    fn new(
        problem: &'a GridProblem,
        smoother: &JacobiSmoother,
        p: &'a DMatrix<f64>,
    ) -> Result<Self> {
        let a_c = p.transpose() * &problem.a * p;
        let (smax, smin) = linalg::singular_extrema(&a_c);
        let cond = if smin > 0.0 { smax / smin } else { f64::INFINITY };
        if cond > AC_COND_LIMIT {
            return Err(Error::DegenerateCoarseSpace { cond });
        }
        let ac_t_lu = a_c.transpose().lu();
        let ac_lu = a_c.lu();
        Ok(Self {
            a: &problem.a,
            smooth_scale: smoother.m_inv_scale,
            p,
            ac_lu,
            ac_t_lu,
        })
    }

    /// One application of `T`, returning the cached intermediates needed by
    /// the reverse sweep: `w = A G y` and the coarse solution `e`.
    fn apply_t(&self, y: &DVector<f64>) -> (DVector<f64>, DVector<f64>, DVector<f64>) {
        let ay = self.a * y;
        let g = y - self.smooth_scale * ay;
        let w = self.a * &g;
        let rc = self.p.transpose() * &w;
        let e = self.ac_lu.solve(&rc).expect("A_c factorization is nonsingular");
        let out = &g - self.p * &e;
        (out, w, e)
    }

    /// `‖T^k z‖²` for one probe.
    fn forward_norm_sq(&self, z: &DVector<f64>, k: usize) -> f64 {
        let mut y = z.clone();
        for _ in 0..k {
            let (out, _, _) = self.apply_t(&y);
            y = out;
        }
        y.norm_squared()
    }

    /// Forward pass with tape, then reverse sweep; returns
    /// `(‖T^k z‖², d‖T^k z‖²/dP)`.
    fn forward_backward(&self, z: &DVector<f64>, k: usize) -> (f64, DMatrix<f64>) {
        let n = z.len();
        let m = self.p.ncols();
        let mut tape: Vec<(DVector<f64>, DVector<f64>)> = Vec::with_capacity(k);
        let mut y = z.clone();
        for _ in 0..k {
            let (out, w, e) = self.apply_t(&y);
            tape.push((w, e));
            y = out;
        }
        let value = y.norm_squared();

        let mut grad = DMatrix::zeros(n, m);
        let mut y_bar = 2.0 * y;
        for (w, e) in tape.iter().rev() {
            // out = g - P e with e = A_c^{-1} P^T w and w = A g.
            let e_bar = -(self.p.transpose() * &y_bar);
            let rc_bar = self
                .ac_t_lu
                .solve(&e_bar)
                .expect("A_c^T factorization is nonsingular");
            let p_rc = self.p * &rc_bar;
            let at_p_rc = self.a.transpose() * &p_rc;
            let a_pe = self.a * (self.p * e);

            // Prolongation: out = g - P e gives -y_bar e^T. Restriction:
            // rc = P^T w gives +w rc_bar^T. The A_c = P^T A P dependence gives
            // -(A P e) rc_bar^T - (A^T P rc_bar) e^T via dX^{-1} = -X^{-1} dX X^{-1}.
            grad.ger(-1.0, &y_bar, e, 1.0);
            grad.ger(1.0, w, &rc_bar, 1.0);
            grad.ger(-1.0, &a_pe, &rc_bar, 1.0);
            grad.ger(-1.0, &at_p_rc, e, 1.0);

            let g_bar = &y_bar + at_p_rc;
            y_bar = &g_bar - self.smooth_scale * (self.a.transpose() * &g_bar);
        }
        (value, grad)
    }
}

/// Matrix-free `J(P) = (1/N) Σ ‖T(P)^k z_i‖²`.
pub fn objective(
    problem: &GridProblem,
    smoother: &JacobiSmoother,
    p: &DMatrix<f64>,
    probes: &[DVector<f64>],
    k: usize,
) -> Result<f64> {
    let ctx = SweepContext::new(problem, smoother, p)?;
    let sum: f64 = probes
        .par_iter()
        .map(|z| ctx.forward_norm_sq(z, k))
        .collect::<Vec<_>>()
        .into_iter()
        .sum();
    Ok(sum / probes.len() as f64)
}

/// Objective together with its exact reverse-mode gradient with respect to
/// `P` (restriction tied to `Pᵀ`).
pub fn objective_and_gradient(
    problem: &GridProblem,
    smoother: &JacobiSmoother,
    p: &DMatrix<f64>,
    probes: &[DVector<f64>],
    k: usize,
) -> Result<(f64, DMatrix<f64>)> {
    let ctx = SweepContext::new(problem, smoother, p)?;
    // Per-probe results are reduced in probe order so runs are reproducible.
    let parts: Vec<(f64, DMatrix<f64>)> = probes
        .par_iter()
        .map(|z| ctx.forward_backward(z, k))
        .collect();
    let inv_n = 1.0 / probes.len() as f64;
    let mut value = 0.0;
    let mut grad = DMatrix::zeros(p.nrows(), p.ncols());
    for (v, g) in parts {
        value += v;
        grad += g;
    }
    Ok((value * inv_n, grad * inv_n))
}

fn rho_of(problem: &GridProblem, smoother: &JacobiSmoother, p: &DMatrix<f64>) -> Result<f64> {
    let cs = CoarseSpace { p: p.clone(), m: p.ncols() };
    let op = assemble_t(problem, smoother, &cs, CoarseKind::Optimized)?;
    linalg::spectral_radius(&op.t)
}

/// Runs plain gradient descent on the probe surrogate.
///
/// The iterate starts from a uniform initialization, steps at the configured
/// rate, and `ρ(T(P))` is probed periodically; the best probe is returned
/// alongside the final iterate since the surrogate and the spectral radius
/// are not identical objectives. A step landing on a singular `A_c` is
/// rejected and retried with a halved increment, at most 20 times.
pub fn optimize(
    problem: &GridProblem,
    smoother: &JacobiSmoother,
    cfg: &OptimizerConfig,
) -> Result<OptimizationTrace> {
    let n = problem.n;
    cfg.validate(n)?;
    let num_samples = cfg.num_samples.unwrap_or(n);
    let batch = cfg.batch_size.unwrap_or(num_samples);
    let init_scale = cfg.init_scale.unwrap_or_else(|| 0.2 / (n as f64).sqrt());

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    // Column-major fill keeps the draw order independent of matrix internals.
    let mut p = DMatrix::zeros(n, cfg.m);
    for v in p.iter_mut() {
        *v = rng.random_range(-init_scale..init_scale);
    }
    let pool = draw_probes(n, num_samples, &mut rng);

    let mut steps: Vec<TraceStep> = Vec::with_capacity(cfg.iterations);
    let mut smoothed: Vec<f64> = Vec::with_capacity(cfg.iterations);
    let ema_alpha = 2.0 / (50.0 + 1.0);
    let mut best_p = p.clone();
    let mut best_rho = f64::INFINITY;
    let mut status = TraceStatus::Completed;

    for step in 0..cfg.iterations {
        let batch_probes: Vec<DVector<f64>> = if cfg.resample {
            draw_probes(n, batch, &mut rng)
        } else if batch == num_samples {
            pool.clone()
        } else {
            // Deterministic round-robin over the fixed pool.
            let start = (step * batch) % num_samples;
            (0..batch).map(|i| pool[(start + i) % num_samples].clone()).collect()
        };

        let (value, grad) = objective_and_gradient(problem, smoother, &p, &batch_probes, cfg.k)?;
        let grad_norm = grad.norm();

        let rho_probe = if step % cfg.probe_interval == 0 {
            let rho = rho_of(problem, smoother, &p)?;
            if rho < best_rho {
                best_rho = rho;
                best_p = p.clone();
            }
            Some(rho)
        } else {
            None
        };
        steps.push(TraceStep { step, objective: value, grad_norm, rho_probe });

        let ema = match smoothed.last() {
            Some(prev) => prev + ema_alpha * (value - prev),
            None => value,
        };
        smoothed.push(ema);
        if smoothed.len() > cfg.early_stop_window {
            let old = smoothed[smoothed.len() - 1 - cfg.early_stop_window];
            if old - ema < cfg.early_stop_tol {
                status = TraceStatus::EarlyStopped { step };
                break;
            }
        }

        // Descent step with the singular-A_c rejection safeguard.
        let mut delta = &grad * cfg.learning_rate;
        let mut halvings = 0usize;
        loop {
            let candidate = &p - &delta;
            match SweepContext::new(problem, smoother, &candidate) {
                Ok(_) => {
                    p = candidate;
                    break;
                }
                Err(_) => {
                    halvings += 1;
                    if halvings > 20 {
                        status = TraceStatus::Aborted { step, halvings: halvings - 1 };
                        break;
                    }
                    delta /= 2.0;
                }
            }
        }
        if matches!(status, TraceStatus::Aborted { .. }) {
            break;
        }
    }

    let final_rho = rho_of(problem, smoother, &p)?;
    if final_rho < best_rho {
        best_rho = final_rho;
        best_p = p.clone();
    }
    if let Some(last) = steps.last_mut() {
        if last.rho_probe.is_none() && last.step + 1 == cfg.iterations {
            last.rho_probe = Some(final_rho);
        }
    }

    let best_cs = CoarseSpace { p: best_p.clone(), m: cfg.m };
    let best_op = assemble_t(problem, smoother, &best_cs, CoarseKind::Optimized)?;
    let report = metric_report(&best_op, KappaVariant::default())?;

    Ok(OptimizationTrace {
        steps,
        status,
        final_p: p,
        final_rho,
        best_p,
        best_rho,
        report,
    })
}
