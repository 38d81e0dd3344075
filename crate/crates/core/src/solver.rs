//! Proximal gradient solvers for the doubly network-regularized GLM
//! objective
//!
//!   ℓ(y; offset + α + Xβ) + ½·γ_n·αᵀ(L_n + δI)α + γ_p·P(G_p, β) + λ‖β‖₁
//!
//! with either an ℓ2 feature fusion penalty P = ½βᵀL_pβ (plain proximal
//! gradient descent) or an ℓ1 fusion penalty P = ‖J_pβ‖₁ handled through its
//! Nesterov-smoothed surrogate f_q (accelerated proximal gradient).
//!
//! When γ_n = 0 the per-unit intercepts are not identifiable and are held at
//! zero, which recovers feature-only (Grace-style and lasso) estimators.

use crate::family::{Family, FamilyError};
use crate::graph::{incidence, laplacian, Graph, IncidenceView};
use crate::sparse::CsrMatrix;
use ndarray::{s, Array1, Array2, ArrayView1};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("objective became non-finite with step size {step:e}")]
    NonFinite { step: f64 },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid hyperparameters: {0}")]
    InvalidHyperparams(String),
    #[error("solver expects fusion flavor {expected}")]
    FusionMismatch { expected: &'static str },
    #[error(transparent)]
    Family(#[from] FamilyError),
}

/// Feature fusion penalty flavor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Fusion {
    L1,
    L2,
}

/// The tuning triple (γ_n, γ_p, λ) plus the ridge stabilizer δ, fusion
/// flavor, and the ℓ1 smoothing parameter q.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    pub gamma_n: f64,
    pub gamma_p: f64,
    pub lambda: f64,
    #[serde(default = "default_delta")]
    pub delta: f64,
    pub fusion: Fusion,
    #[serde(default = "default_q")]
    pub q: f64,
}

fn default_delta() -> f64 {
    0.01
}

fn default_q() -> f64 {
    0.001
}

impl Hyperparams {
    pub fn new(gamma_n: f64, gamma_p: f64, lambda: f64, fusion: Fusion) -> Self {
        Hyperparams {
            gamma_n,
            gamma_p,
            lambda,
            delta: default_delta(),
            fusion,
            q: default_q(),
        }
    }

    pub fn validate(&self) -> Result<(), SolverError> {
        let bad = |msg: &str| Err(SolverError::InvalidHyperparams(msg.into()));
        if self.delta <= 0.0 || self.delta.is_nan() {
            return bad("delta must be strictly positive");
        }
        if self.q <= 0.0 || self.q.is_nan() {
            return bad("q must be strictly positive");
        }
        if self.gamma_n < 0.0 || self.gamma_p < 0.0 || self.lambda < 0.0 {
            return bad("penalty parameters must be nonnegative");
        }
        for v in [self.gamma_n, self.gamma_p, self.lambda] {
            if !v.is_finite() {
                return bad("penalty parameters must be finite");
            }
        }
        Ok(())
    }

    /// Descriptive label for the special case this parameter combination
    /// corresponds to.
    pub fn label(&self) -> String {
        let unit = self.gamma_n > 0.0;
        let feat = self.gamma_p > 0.0;
        let flavor = match self.fusion {
            Fusion::L1 => "l1",
            Fusion::L2 => "l2",
        };
        match (unit, feat) {
            (true, true) => format!("glm-funk-{flavor}"),
            (true, false) => {
                if self.lambda > 0.0 {
                    "rnc-lasso".into()
                } else {
                    "rnc".into()
                }
            }
            (false, true) => format!("grace-{flavor}"),
            (false, false) => {
                if self.lambda > 0.0 {
                    "lasso".into()
                } else {
                    "glm".into()
                }
            }
        }
    }
}

/// Solver controls. `kkt_tol` of `None` uses 1e-3·(1 + λ).
#[derive(Debug, Clone)]
pub struct FitOptions {
    pub step_size: f64,
    pub max_iter: usize,
    pub tol: f64,
    pub backtracking: bool,
    /// Nesterov momentum with monotone restarts for the ℓ2-fusion solver;
    /// badly conditioned curvature (wide Poisson count ranges) is
    /// impractical for the plain fixed-step iteration.
    pub accelerated: bool,
    pub kkt_tol: Option<f64>,
    /// Warm start: packed θ in the solver layout ([α; β] when γ_n > 0,
    /// plain β otherwise).
    pub init: Option<Array1<f64>>,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            step_size: 1e-3,
            max_iter: 50_000,
            tol: 1e-7,
            backtracking: false,
            accelerated: false,
            kkt_tol: None,
            init: None,
        }
    }
}

/// A fitting problem: outcomes, design, optional offsets and graphs.
#[derive(Debug, Clone, Copy)]
pub struct Problem<'a> {
    pub y: &'a Array1<f64>,
    pub x: &'a Array2<f64>,
    pub offsets: Option<&'a Array1<f64>>,
    pub unit_graph: Option<&'a Graph>,
    pub feature_graph: Option<&'a Graph>,
    pub family: Family,
}

/// Fitted intercepts and coefficients with convergence metadata.
#[derive(Debug, Clone)]
pub struct FitResult {
    pub alpha_hat: Array1<f64>,
    pub beta_hat: Array1<f64>,
    pub objective_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub hyperparams: Hyperparams,
    /// Subgradient optimality residual at the returned point.
    pub kkt_residual: f64,
    /// Whether per-unit intercepts were optimized (γ_n > 0).
    pub unit_effects: bool,
}

impl FitResult {
    /// Packed θ in the solver layout, usable as a warm start.
    pub fn packed_theta(&self) -> Array1<f64> {
        if self.unit_effects {
            let mut t = Array1::zeros(self.alpha_hat.len() + self.beta_hat.len());
            t.slice_mut(s![..self.alpha_hat.len()]).assign(&self.alpha_hat);
            t.slice_mut(s![self.alpha_hat.len()..]).assign(&self.beta_hat);
            t
        } else {
            self.beta_hat.clone()
        }
    }
}

/// Soft-thresholding S_t(x) = sign(x)·max(0, |x| − t).
pub fn soft_threshold(x: f64, t: f64) -> f64 {
    debug_assert!(t >= 0.0);
    if x > t {
        x - t
    } else if x < -t {
        x + t
    } else {
        0.0
    }
}

/// Element-wise projection onto the ℓ∞ unit ball: clamp to [−1, 1].
pub fn linf_project(x: f64) -> f64 {
    x.clamp(-1.0, 1.0)
}

/// Nesterov-smoothed fusion penalty
///   f_q(β) = max_{‖ν‖∞ ≤ 1} { νᵀJβ − (q/2)‖ν‖² },
/// evaluated in closed form per edge (the Huber function of (Jβ)_e with knee
/// q), together with its gradient Jᵀ S_∞(Jβ/q).
pub fn smoothed_fusion(
    beta: &Array1<f64>,
    j: &IncidenceView,
    q: f64,
) -> (f64, Array1<f64>) {
    assert!(q > 0.0, "smoothing parameter q must be positive");
    let z = j.matrix.matvec(beta.view());
    let mut value = 0.0;
    let nu = z.mapv(|ze| {
        value += if ze.abs() <= q {
            ze * ze / (2.0 * q)
        } else {
            ze.abs() - q / 2.0
        };
        linf_project(ze / q)
    });
    let grad = j.matrix.matvec_transpose(nu.view());
    (value, grad)
}

/// Full objective value at (α, β): loss + ½γ_n αᵀ(L_n+δI)α + γ_p P(G_p, β)
/// + λ‖β‖₁, with P the exact penalty of the configured fusion flavor.
pub fn objective(
    alpha: &Array1<f64>,
    beta: &Array1<f64>,
    prob: &Problem,
    h: &Hyperparams,
) -> Result<f64, SolverError> {
    h.validate()?;
    let n = prob.y.len();
    let p = prob.x.ncols();
    if alpha.len() != n || beta.len() != p || prob.x.nrows() != n {
        return Err(SolverError::Dimension(format!(
            "alpha {} / beta {} do not match data ({n} x {p})",
            alpha.len(),
            beta.len()
        )));
    }
    let mut eta = prob.x.dot(beta) + alpha;
    if let Some(off) = prob.offsets {
        if off.len() != n {
            return Err(SolverError::Dimension("offset length".into()));
        }
        eta += off;
    }
    let mut val = prob.family.loss(prob.y, &eta)?;
    if h.gamma_n > 0.0 {
        let quad = match prob.unit_graph {
            Some(g) => laplacian(g).quadratic_form(alpha),
            None => 0.0,
        };
        val += 0.5 * h.gamma_n * (quad + h.delta * alpha.dot(alpha));
    }
    if h.gamma_p > 0.0 {
        if let Some(g) = prob.feature_graph {
            match h.fusion {
                Fusion::L2 => val += 0.5 * h.gamma_p * laplacian(g).quadratic_form(beta),
                Fusion::L1 => {
                    let z = incidence(g).matrix.matvec(beta.view());
                    val += h.gamma_p * z.iter().map(|v| v.abs()).sum::<f64>();
                }
            }
        }
    }
    val += h.lambda * beta.iter().map(|v| v.abs()).sum::<f64>();
    Ok(val)
}

/// Proximal gradient descent for the ℓ2-fusion objective. The proximal step
/// soft-thresholds only the β coordinates with the step-scaled threshold.
pub fn fit_l2(prob: &Problem, h: &Hyperparams, opts: &FitOptions) -> Result<FitResult, SolverError> {
    if h.fusion != Fusion::L2 {
        return Err(SolverError::FusionMismatch { expected: "l2" });
    }
    let model = Model::new(prob, h)?;
    let kkt_tol = opts.kkt_tol.unwrap_or(1e-3 * (1.0 + h.lambda));
    if opts.accelerated {
        return fit_l2_accelerated(&model, opts, kkt_tol);
    }

    let mut theta = model.initial_theta(opts)?;
    let (mut smooth, mut grad) = model.smooth_eval(&theta)?;
    let mut obj = smooth + h.lambda * model.beta_l1(&theta);
    if !obj.is_finite() {
        return Err(SolverError::NonFinite {
            step: opts.step_size,
        });
    }
    let mut trace = vec![obj];
    let mut step = opts.step_size;
    let mut converged = false;
    let mut iterations = 0;

    for _ in 0..opts.max_iter {
        iterations += 1;
        let (theta_new, smooth_new, grad_new, obj_new) = loop {
            let cand = model.prox_step(&theta, &grad, step);
            let (smooth_c, grad_c) = model.smooth_eval(&cand)?;
            let obj_c = smooth_c + h.lambda * model.beta_l1(&cand);
            if obj_c.is_finite() {
                if !opts.backtracking {
                    break (cand, smooth_c, grad_c, obj_c);
                }
                // sufficient-decrease condition for the proximal step
                let diff = &cand - &theta;
                let bound =
                    smooth + grad.dot(&diff) + diff.dot(&diff) / (2.0 * step)
                        + 1e-12 * (1.0 + smooth.abs());
                if smooth_c <= bound {
                    break (cand, smooth_c, grad_c, obj_c);
                }
            } else if !opts.backtracking {
                return Err(SolverError::NonFinite { step });
            }
            step *= 0.5;
            if step < 1e-300 {
                return Err(SolverError::NonFinite { step });
            }
        };
        trace.push(obj_new);
        let rel_ok = (obj - obj_new).abs() <= opts.tol * (1.0 + obj.abs());
        theta = theta_new;
        smooth = smooth_new;
        grad = grad_new;
        obj = obj_new;
        if rel_ok && model.kkt_satisfied(&theta, &grad, kkt_tol) {
            converged = true;
            break;
        }
        if opts.backtracking {
            // let the step recover after conservative halvings, but freeze it
            // once the expected decrease falls near the floating-point noise
            // floor, where the sufficient-decrease test is no longer reliable
            let noise = 1e-12 * (1.0 + smooth.abs());
            if 0.5 * step * grad.dot(&grad) > 1e3 * noise {
                step = (step * 1.25).min(opts.step_size * 1e12);
            }
        }
    }

    Ok(model.finish(theta, grad, trace, iterations, converged))
}

/// Momentum variant of the ℓ2-fusion solver: Nesterov acceleration with a
/// monotone restart (a momentum candidate that fails to decrease the
/// objective is dropped and the iteration restarts from a plain descent
/// step), so the trace stays non-increasing.
fn fit_l2_accelerated(
    model: &Model,
    opts: &FitOptions,
    kkt_tol: f64,
) -> Result<FitResult, SolverError> {
    let lambda = model.h.lambda;
    let mut theta = model.initial_theta(opts)?;
    let (mut smooth_t, mut grad_t) = model.smooth_eval(&theta)?;
    let mut obj = smooth_t + lambda * model.beta_l1(&theta);
    if !obj.is_finite() {
        return Err(SolverError::NonFinite {
            step: opts.step_size,
        });
    }
    let mut trace = vec![obj];
    let mut w = theta.clone();
    let mut smooth_w = smooth_t;
    let mut grad_w = grad_t.clone();
    let mut t_mom = 1.0f64;
    let mut step = opts.step_size;
    let mut converged = false;
    let mut iterations = 0;

    for _ in 0..opts.max_iter {
        iterations += 1;
        let (cand, smooth_c, grad_c, obj_c) = loop {
            let cand = model.prox_step(&w, &grad_w, step);
            let (sc, gc) = model.smooth_eval(&cand)?;
            let oc = sc + lambda * model.beta_l1(&cand);
            if oc.is_finite() {
                let diff = &cand - &w;
                let bound = smooth_w
                    + grad_w.dot(&diff)
                    + diff.dot(&diff) / (2.0 * step)
                    + 1e-12 * (1.0 + smooth_w.abs());
                if sc <= bound {
                    break (cand, sc, gc, oc);
                }
            }
            step *= 0.5;
            if step < 1e-300 {
                return Err(SolverError::NonFinite { step });
            }
        };

        if obj_c <= obj + 1e-12 * (1.0 + obj.abs()) {
            let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t_mom * t_mom).sqrt());
            let coef = (t_mom - 1.0) / t_next;
            w = &cand + &((&cand - &theta) * coef);
            t_mom = t_next;
            theta = cand;
            smooth_t = smooth_c;
            grad_t = grad_c;
            let rel_ok = (obj - obj_c).abs() <= opts.tol * (1.0 + obj.abs());
            obj = obj_c.min(obj);
            trace.push(obj);
            if (rel_ok || iterations % 25 == 0)
                && model.kkt_satisfied(&theta, &grad_t, kkt_tol)
            {
                converged = true;
                break;
            }
            let eval = model.smooth_eval(&w)?;
            smooth_w = eval.0;
            grad_w = eval.1;
            let noise = 1e-12 * (1.0 + smooth_t.abs());
            if 0.5 * step * grad_t.dot(&grad_t) > 1e3 * noise {
                step = (step * 1.25).min(opts.step_size * 1e12);
            }
        } else {
            // momentum overshot: restart from the last accepted point
            w = theta.clone();
            smooth_w = smooth_t;
            grad_w = grad_t.clone();
            t_mom = 1.0;
        }
    }
    let _ = smooth_t;
    Ok(model.finish(theta, grad_t, trace, iterations, converged))
}

/// Accelerated proximal gradient (FISTA-style) for the ℓ1-fusion objective
/// with the Nesterov-smoothed penalty f_q. Gradients are evaluated at the
/// momentum point; the step is the inverse of an upper bound on the local
/// Lipschitz constant, refreshed every 25 iterations.
pub fn fit_l1(prob: &Problem, h: &Hyperparams, opts: &FitOptions) -> Result<FitResult, SolverError> {
    if h.fusion != Fusion::L1 {
        return Err(SolverError::FusionMismatch { expected: "l1" });
    }
    let model = Model::new(prob, h)?;
    let kkt_tol = opts.kkt_tol.unwrap_or(1e-3 * (1.0 + h.lambda));

    let mut theta = model.initial_theta(opts)?;
    let mut w = theta.clone();
    let mut s_t = 1.0f64;
    let obj0 = model.exact_objective(&theta)?;
    if !obj0.is_finite() {
        return Err(SolverError::NonFinite {
            step: opts.step_size,
        });
    }
    let mut trace = vec![obj0];
    let mut best_obj = obj0;
    let mut theta_best = theta.clone();

    let xtilde_sq = model.xtilde_norm_sq(50);
    let ln_max = model.ln_max_eig(50);
    let j_sq = model.j_norm_sq(50);
    let mut c_l = 0.0;
    let mut c_floor = 0.0;
    let mut escalations = 0usize;
    let mut converged = false;
    let mut iterations = 0;
    let mut final_grad: Option<Array1<f64>> = None;

    for t in 0..opts.max_iter {
        iterations = t + 1;
        if t % 25 == 0 {
            let eta_w = model.eta(&w);
            let wmax = model
                .family()
                .curvature_weights(&eta_w)
                .iter()
                .fold(0.0f64, |m, &v| m.max(v));
            let mut bound = xtilde_sq * wmax;
            if model.unit_mode {
                bound += h.gamma_n * (ln_max + h.delta);
            }
            if model.jp.is_some() && h.gamma_p > 0.0 {
                bound += h.gamma_p * j_sq / h.q;
            }
            c_l = if bound.is_finite() && bound > 0.0 {
                // power iteration converges from below; pad the bound
                bound * 1.05
            } else {
                // degenerate curvature: fall back to a fixed step of 0.001
                1.0 / 1e-3
            };
        }
        c_l = c_l.max(c_floor);

        let (_, grad_w) = model.smooth_eval(&w)?;
        let step = 1.0 / c_l;
        let theta_new = model.prox_step(&w, &grad_w, step);
        let obj_new = model.exact_objective(&theta_new)?;
        // a runaway but still-finite objective (clipped exponents) needs the
        // same treatment as a non-finite one
        let runaway = obj_new > best_obj + 1e3 * (1.0 + best_obj.abs());
        if !obj_new.is_finite() || runaway {
            escalations += 1;
            if escalations > 120 {
                return Err(SolverError::NonFinite { step });
            }
            c_floor = (c_l * 4.0).max(c_floor * 4.0);
            theta = theta_best.clone();
            w = theta.clone();
            s_t = 1.0;
            continue;
        }
        if obj_new < best_obj {
            best_obj = obj_new;
            theta_best = theta_new.clone();
        }
        trace.push(obj_new);

        let s_next = 2.0 / (t as f64 + 3.0);
        let momentum = (1.0 - s_t) / s_t * s_next;
        w = &theta_new + &((&theta_new - &theta) * momentum);
        s_t = s_next;

        let diff_max = theta_new
            .iter()
            .zip(theta.iter())
            .fold(0.0f64, |m, (&a, &b)| m.max((a - b).abs()));
        let scale = theta_new.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
        theta = theta_new;
        // momentum keeps θ moving long after optimality, so also certify
        // periodically instead of waiting for the step criterion alone
        if diff_max <= opts.tol * (1.0 + scale) || t % 25 == 24 {
            let (_, grad_theta) = model.smooth_eval(&theta)?;
            if model.kkt_satisfied(&theta, &grad_theta, kkt_tol) {
                final_grad = Some(grad_theta);
                converged = true;
                break;
            }
        }
    }

    // an unconverged run returns its best-seen iterate
    if !converged && model.exact_objective(&theta)? > best_obj {
        theta = theta_best;
        final_grad = None;
    }
    let grad = match final_grad {
        Some(g) => g,
        None => model.smooth_eval(&theta)?.1,
    };
    Ok(model.finish(theta, grad, trace, iterations, converged))
}

/// Optimality certificate for a candidate solution: the worst violation of
/// the first-order conditions of the solver's smooth-plus-ℓ1 objective.
#[derive(Debug, Clone)]
pub struct KktReport {
    /// max |∇_α| over optimized intercepts (0 when γ_n = 0).
    pub alpha_residual: f64,
    /// max over zero β_j of |∇_j| − λ.
    pub zero_residual: f64,
    /// max over nonzero β_j of |∇_j + λ·sign(β_j)|.
    pub active_residual: f64,
    pub satisfied: bool,
}

/// Evaluate the first-order optimality conditions at (α, β) with tolerance
/// ε: |∇_α| ≤ ε, |∇_j| ≤ λ(1+ε) for zero β_j, and |∇_j + λ·sign β_j| ≤ ε
/// otherwise. The smooth part follows the fusion flavor (f_q for ℓ1).
pub fn kkt_check(
    alpha: &Array1<f64>,
    beta: &Array1<f64>,
    prob: &Problem,
    h: &Hyperparams,
    eps: f64,
) -> Result<KktReport, SolverError> {
    let model = Model::new(prob, h)?;
    let theta = model.pack(alpha, beta)?;
    let (_, grad) = model.smooth_eval(&theta)?;
    Ok(model.kkt_report(&theta, &grad, eps))
}

// ---------------------------------------------------------------------------
// internal solver state
// ---------------------------------------------------------------------------

struct Model<'a> {
    prob: &'a Problem<'a>,
    h: Hyperparams,
    n: usize,
    p: usize,
    unit_mode: bool,
    ln: Option<CsrMatrix>,
    lp: Option<CsrMatrix>,
    jp: Option<IncidenceView>,
    offsets: Array1<f64>,
}

impl<'a> Model<'a> {
    fn new(prob: &'a Problem<'a>, h: &Hyperparams) -> Result<Self, SolverError> {
        h.validate()?;
        let n = prob.y.len();
        let p = prob.x.ncols();
        if prob.x.nrows() != n {
            return Err(SolverError::Dimension(format!(
                "design has {} rows but y has {n}",
                prob.x.nrows()
            )));
        }
        if let Some(off) = prob.offsets {
            if off.len() != n {
                return Err(SolverError::Dimension(format!(
                    "offsets have length {} but y has {n}",
                    off.len()
                )));
            }
        }
        if let Some(g) = prob.unit_graph {
            if g.node_count() != n {
                return Err(SolverError::Dimension(format!(
                    "unit graph has {} nodes but data has {n} observations",
                    g.node_count()
                )));
            }
        }
        if let Some(g) = prob.feature_graph {
            if g.node_count() != p {
                return Err(SolverError::Dimension(format!(
                    "feature graph has {} nodes but design has {p} columns",
                    g.node_count()
                )));
            }
        }
        prob.family.validate_outcomes(prob.y)?;

        let unit_mode = h.gamma_n > 0.0;
        let ln = match (unit_mode, prob.unit_graph) {
            (true, Some(g)) => Some(laplacian(g).matrix),
            _ => None,
        };
        let (lp, jp) = if h.gamma_p > 0.0 {
            match (h.fusion, prob.feature_graph) {
                (Fusion::L2, Some(g)) => (Some(laplacian(g).matrix), None),
                (Fusion::L1, Some(g)) => (None, Some(incidence(g))),
                _ => (None, None),
            }
        } else {
            (None, None)
        };
        let offsets = prob
            .offsets
            .cloned()
            .unwrap_or_else(|| Array1::zeros(n));
        Ok(Model {
            prob,
            h: *h,
            n,
            p,
            unit_mode,
            ln,
            lp,
            jp,
            offsets,
        })
    }

    fn family(&self) -> Family {
        self.prob.family
    }

    fn dim(&self) -> usize {
        if self.unit_mode {
            self.n + self.p
        } else {
            self.p
        }
    }

    fn beta_of<'t>(&self, theta: &'t Array1<f64>) -> ArrayView1<'t, f64> {
        if self.unit_mode {
            theta.slice(s![self.n..])
        } else {
            theta.view()
        }
    }

    fn pack(&self, alpha: &Array1<f64>, beta: &Array1<f64>) -> Result<Array1<f64>, SolverError> {
        if alpha.len() != self.n || beta.len() != self.p {
            return Err(SolverError::Dimension("pack: alpha/beta length".into()));
        }
        if self.unit_mode {
            let mut t = Array1::zeros(self.n + self.p);
            t.slice_mut(s![..self.n]).assign(alpha);
            t.slice_mut(s![self.n..]).assign(beta);
            Ok(t)
        } else {
            Ok(beta.clone())
        }
    }

    fn initial_theta(&self, opts: &FitOptions) -> Result<Array1<f64>, SolverError> {
        if let Some(init) = &opts.init {
            if init.len() != self.dim() {
                return Err(SolverError::Dimension(format!(
                    "warm start has length {} but solver layout needs {}",
                    init.len(),
                    self.dim()
                )));
            }
            return Ok(init.clone());
        }
        let mut theta = Array1::zeros(self.dim());
        if self.unit_mode {
            // common-intercept GLM as the starting surface; degenerate
            // outcomes (e.g. all-zero Poisson) start from zero instead
            if let Ok(a) = self
                .family()
                .common_intercept(self.prob.y, Some(&self.offsets))
            {
                theta.slice_mut(s![..self.n]).fill(a);
            }
        }
        Ok(theta)
    }

    fn eta(&self, theta: &Array1<f64>) -> Array1<f64> {
        let beta = self.beta_of(theta);
        let mut eta = self.prob.x.dot(&beta) + &self.offsets;
        if self.unit_mode {
            eta += &theta.slice(s![..self.n]);
        }
        eta
    }

    /// Value and gradient of the smooth part of the solver objective:
    /// loss + α-penalty + (ℓ2 quadratic | smoothed ℓ1) fusion penalty.
    fn smooth_eval(&self, theta: &Array1<f64>) -> Result<(f64, Array1<f64>), SolverError> {
        let eta = self.eta(theta);
        let mut value = self.family().loss(self.prob.y, &eta)?;
        let resid = self.family().gradient_eta(self.prob.y, &eta)?;

        // X̃ᵀ(μ − y)
        let mut grad = Array1::zeros(self.dim());
        let beta_grad = self.prob.x.t().dot(&resid);
        if self.unit_mode {
            grad.slice_mut(s![..self.n]).assign(&resid);
            grad.slice_mut(s![self.n..]).assign(&beta_grad);
        } else {
            grad.assign(&beta_grad);
        }

        if self.unit_mode {
            let alpha = theta.slice(s![..self.n]);
            let alpha_owned = alpha.to_owned();
            let mut pen_grad = match &self.ln {
                Some(ln) => ln.matvec(alpha),
                None => Array1::zeros(self.n),
            };
            let quad = pen_grad.dot(&alpha_owned);
            pen_grad += &(&alpha_owned * self.h.delta);
            value += 0.5 * self.h.gamma_n * (quad + self.h.delta * alpha_owned.dot(&alpha_owned));
            let mut g_alpha = grad.slice_mut(s![..self.n]);
            g_alpha += &(&pen_grad * self.h.gamma_n);
        }

        if self.h.gamma_p > 0.0 {
            let beta = self.beta_of(theta).to_owned();
            match (&self.lp, &self.jp) {
                (Some(lp), _) => {
                    let lb = lp.matvec(beta.view());
                    value += 0.5 * self.h.gamma_p * lb.dot(&beta);
                    let off = if self.unit_mode { self.n } else { 0 };
                    let mut g_beta = grad.slice_mut(s![off..]);
                    g_beta += &(&lb * self.h.gamma_p);
                }
                (None, Some(jp)) => {
                    let (fq, fq_grad) = smoothed_fusion(&beta, jp, self.h.q);
                    value += self.h.gamma_p * fq;
                    let off = if self.unit_mode { self.n } else { 0 };
                    let mut g_beta = grad.slice_mut(s![off..]);
                    g_beta += &(&fq_grad * self.h.gamma_p);
                }
                _ => {}
            }
        }

        Ok((value, grad))
    }

    /// Objective with the exact (non-smoothed) fusion penalty.
    fn exact_objective(&self, theta: &Array1<f64>) -> Result<f64, SolverError> {
        let eta = self.eta(theta);
        let mut value = self.family().loss(self.prob.y, &eta)?;
        if self.unit_mode {
            let alpha = theta.slice(s![..self.n]).to_owned();
            let quad = match &self.ln {
                Some(ln) => ln.quadratic_form(alpha.view()),
                None => 0.0,
            };
            value += 0.5 * self.h.gamma_n * (quad + self.h.delta * alpha.dot(&alpha));
        }
        let beta = self.beta_of(theta);
        if self.h.gamma_p > 0.0 {
            match (&self.lp, &self.jp) {
                (Some(lp), _) => value += 0.5 * self.h.gamma_p * lp.quadratic_form(beta),
                (None, Some(jp)) => {
                    let z = jp.matrix.matvec(beta);
                    value += self.h.gamma_p * z.iter().map(|v| v.abs()).sum::<f64>();
                }
                _ => {}
            }
        }
        value += self.h.lambda * beta.iter().map(|v| v.abs()).sum::<f64>();
        Ok(value)
    }

    fn beta_l1(&self, theta: &Array1<f64>) -> f64 {
        self.beta_of(theta).iter().map(|v| v.abs()).sum()
    }

    /// Gradient step followed by soft-thresholding of the β coordinates with
    /// the step-scaled threshold; intercepts are never thresholded.
    fn prox_step(&self, theta: &Array1<f64>, grad: &Array1<f64>, step: f64) -> Array1<f64> {
        let mut out = theta - &(grad * step);
        let t = step * self.h.lambda;
        if t > 0.0 {
            let off = if self.unit_mode { self.n } else { 0 };
            out.slice_mut(s![off..]).mapv_inplace(|v| soft_threshold(v, t));
        }
        out
    }

    fn kkt_report(&self, theta: &Array1<f64>, grad: &Array1<f64>, eps: f64) -> KktReport {
        let lambda = self.h.lambda;
        let mut alpha_residual = 0.0f64;
        if self.unit_mode {
            for &g in grad.slice(s![..self.n]).iter() {
                alpha_residual = alpha_residual.max(g.abs());
            }
        }
        let off = if self.unit_mode { self.n } else { 0 };
        let mut zero_residual = 0.0f64;
        let mut active_residual = 0.0f64;
        let mut zero_ok = true;
        for (b, g) in theta.slice(s![off..]).iter().zip(grad.slice(s![off..])) {
            if *b == 0.0 {
                zero_residual = zero_residual.max(g.abs() - lambda);
                if g.abs() > lambda * (1.0 + eps) {
                    zero_ok = false;
                }
            } else {
                active_residual = active_residual.max((g + lambda * b.signum()).abs());
            }
        }
        let satisfied = alpha_residual <= eps && active_residual <= eps && zero_ok;
        KktReport {
            alpha_residual,
            zero_residual,
            active_residual,
            satisfied,
        }
    }

    fn kkt_satisfied(&self, theta: &Array1<f64>, grad: &Array1<f64>, eps: f64) -> bool {
        self.kkt_report(theta, grad, eps).satisfied
    }

    fn finish(
        &self,
        theta: Array1<f64>,
        grad: Array1<f64>,
        trace: Vec<f64>,
        iterations: usize,
        converged: bool,
    ) -> FitResult {
        let report = self.kkt_report(&theta, &grad, 0.0);
        let kkt_residual = report
            .alpha_residual
            .max(report.zero_residual.max(0.0))
            .max(report.active_residual);
        let (alpha_hat, beta_hat) = if self.unit_mode {
            (
                theta.slice(s![..self.n]).to_owned(),
                theta.slice(s![self.n..]).to_owned(),
            )
        } else {
            (Array1::zeros(self.n), theta)
        };
        FitResult {
            alpha_hat,
            beta_hat,
            objective_trace: trace,
            iterations,
            converged,
            hyperparams: self.h,
            kkt_residual,
            unit_effects: self.unit_mode,
        }
    }

    /// ‖X̃‖₂² by power iteration, where X̃ = [I X] in unit mode and X
    /// otherwise.
    fn xtilde_norm_sq(&self, steps: usize) -> f64 {
        let d = self.dim();
        if d == 0 {
            return 0.0;
        }
        let mut v = crate::sparse::power_start(d);
        let mut lambda = 1.0;
        for _ in 0..steps {
            // w = X̃ᵀ(X̃ v)
            let beta = self.beta_of(&v);
            let mut xv = self.prob.x.dot(&beta);
            if self.unit_mode {
                xv += &v.slice(s![..self.n]);
            }
            let xtxv = self.prob.x.t().dot(&xv);
            let mut w = Array1::zeros(d);
            if self.unit_mode {
                w.slice_mut(s![..self.n]).assign(&xv);
                w.slice_mut(s![self.n..]).assign(&xtxv);
            } else {
                w.assign(&xtxv);
            }
            let norm = w.dot(&w).sqrt();
            if norm == 0.0 {
                return 0.0;
            }
            lambda = v.dot(&w);
            v = w / norm;
        }
        lambda.max(0.0)
    }

    fn ln_max_eig(&self, steps: usize) -> f64 {
        match &self.ln {
            Some(ln) => ln.spectral_norm_sq(steps).sqrt(),
            None => 0.0,
        }
    }

    fn j_norm_sq(&self, steps: usize) -> f64 {
        match &self.jp {
            Some(jp) => jp.matrix.spectral_norm_sq(steps),
            None => 0.0,
        }
    }
}
