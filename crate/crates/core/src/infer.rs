//! De-biased estimation and inference for the penalized fits: curvature
//! matrix Σ̂, constrained approximate inverse M, scaled-lasso noise
//! estimation for Gaussian models, de-biased coefficients, test statistics,
//! p-values, and confidence intervals.

use crate::family::Family;
use crate::solver::{fit_l2, soft_threshold, FitOptions, FitResult, Fusion, Hyperparams, Problem};
use crate::stats::{normal_cdf, normal_quantile, two_sided_p};
use nalgebra::DMatrix;
use ndarray::{Array1, Array2};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum InferError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("curvature weights are not finite")]
    NonFiniteWeights,
    #[error("column {column} of the inverse program is infeasible at q = {q:e} after {doublings} doublings")]
    Infeasible {
        column: usize,
        q: f64,
        doublings: usize,
    },
    #[error("degenerate noise estimate: residuals are exactly zero")]
    DegenerateNoise,
    #[error("confidence level must be in (0, 1), got {0}")]
    BadLevel(f64),
    #[error(transparent)]
    Family(#[from] crate::family::FamilyError),
    #[error(transparent)]
    Solver(#[from] crate::solver::SolverError),
}

/// Curvature matrix Σ̂ = (1/n)·XᵀWX / noise_var with W the diagonal of
/// μ′(η̂). `noise_var` is the Gaussian noise variance estimate (1 for the
/// other families, where the canonical-link curvature needs no scale).
pub fn sigma_hat(
    x: &Array2<f64>,
    eta_hat: &Array1<f64>,
    family: Family,
    noise_var: f64,
) -> Result<Array2<f64>, InferError> {
    let n = x.nrows();
    if eta_hat.len() != n {
        return Err(InferError::Dimension(format!(
            "eta has length {} but design has {n} rows",
            eta_hat.len()
        )));
    }
    let w = family.curvature_weights(eta_hat);
    if w.iter().any(|v| !v.is_finite()) {
        return Err(InferError::NonFiniteWeights);
    }
    let p = x.ncols();
    let mut sigma = Array2::zeros((p, p));
    for i in 0..n {
        let wi = w[i];
        if wi == 0.0 {
            continue;
        }
        for a in 0..p {
            let xa = x[[i, a]] * wi;
            if xa == 0.0 {
                continue;
            }
            for b in a..p {
                sigma[[a, b]] += xa * x[[i, b]];
            }
        }
    }
    let scale = 1.0 / (n as f64 * noise_var);
    for a in 0..p {
        for b in a..p {
            let v = sigma[[a, b]] * scale;
            sigma[[a, b]] = v;
            sigma[[b, a]] = v;
        }
    }
    Ok(sigma)
}

/// Controls for the column-wise constrained inverse program.
#[derive(Debug, Clone)]
pub struct MMatrixOptions {
    /// KKT tolerance per column.
    pub tol: f64,
    pub max_sweeps: usize,
    /// How many times the constraint radius is doubled when a column is
    /// infeasible before giving up.
    pub max_doublings: usize,
}

impl Default for MMatrixOptions {
    fn default() -> Self {
        MMatrixOptions {
            tol: 1e-6,
            max_sweeps: 20_000,
            max_doublings: 10,
        }
    }
}

/// Result of the constrained inverse computation.
#[derive(Debug, Clone)]
pub struct MMatrix {
    pub m: Array2<f64>,
    /// Constraint radius actually used per column (after any doubling).
    pub q_used: Vec<f64>,
    /// True when the dense ridged inverse was used instead of the
    /// column-wise programs.
    pub dense_inverse: bool,
}

/// Approximate inverse of Σ̂: column j solves
///   min_m mᵀΣ̂m  subject to  ‖Σ̂m − e_j‖∞ ≤ q.
///
/// Each column is obtained by coordinate descent on the equivalent
/// unconstrained dual min_v ½vᵀΣ̂v + e_jᵀv + q‖v‖₁ (whose soft-thresholding
/// steps project onto the box dual to the ℓ∞ constraint), with m_j = −v̂.
/// An infeasible column (detected by dual blow-up) doubles q for that
/// column, up to `max_doublings` times.
pub fn m_matrix(
    sigma: &Array2<f64>,
    q_constraint: f64,
    opts: &MMatrixOptions,
) -> Result<MMatrix, InferError> {
    let p = sigma.nrows();
    if sigma.ncols() != p {
        return Err(InferError::Dimension("sigma must be square".into()));
    }
    let mut m = Array2::zeros((p, p));
    let mut q_used = vec![0.0; p];
    for j in 0..p {
        let (col, q_col) = m_column(sigma, j, q_constraint, opts)?;
        for i in 0..p {
            m[[i, j]] = col[i];
        }
        q_used[j] = q_col;
    }
    Ok(MMatrix {
        m,
        q_used,
        dense_inverse: false,
    })
}

fn m_column(
    sigma: &Array2<f64>,
    j: usize,
    q0: f64,
    opts: &MMatrixOptions,
) -> Result<(Array1<f64>, f64), InferError> {
    let p = sigma.nrows();
    let scale = (0..p).map(|k| sigma[[k, k]]).fold(0.0f64, f64::max);
    let blowup = 1e9 * (1.0 + 1.0 / (scale + 1e-12));
    let mut q = q0;
    for doubling in 0..=opts.max_doublings {
        let mut v: Array1<f64> = Array1::zeros(p);
        let mut sv: Array1<f64> = Array1::zeros(p); // Σ v, maintained incrementally
        let mut feasible = true;
        let mut converged = false;
        for sweep in 0..opts.max_sweeps {
            let mut max_move = 0.0f64;
            for k in 0..p {
                let skk = sigma[[k, k]];
                let r = sv[k] - skk * v[k] + if k == j { 1.0 } else { 0.0 };
                let new_v = if skk > 0.0 {
                    soft_threshold(-r, q) / skk
                } else if r.abs() <= q {
                    0.0
                } else {
                    feasible = false;
                    break;
                };
                let delta = new_v - v[k];
                if delta != 0.0 {
                    for i in 0..p {
                        sv[i] += sigma[[i, k]] * delta;
                    }
                    v[k] = new_v;
                    max_move = max_move.max(delta.abs());
                }
            }
            if !feasible {
                break;
            }
            if v.iter().any(|&vi| vi.abs() > blowup) {
                feasible = false;
                break;
            }
            let stalled =
                max_move <= 1e-12 * (1.0 + v.iter().fold(0.0f64, |a, &b| a.max(b.abs())));
            if stalled || sweep % 64 == 63 {
                let mut worst = 0.0f64;
                for k in 0..p {
                    let g = sv[k] + if k == j { 1.0 } else { 0.0 };
                    let r = if v[k] == 0.0 {
                        (g.abs() - q).max(0.0)
                    } else {
                        (g + q * v[k].signum()).abs()
                    };
                    worst = worst.max(r);
                }
                if worst <= opts.tol {
                    converged = true;
                    break;
                }
                if stalled {
                    break;
                }
            }
        }
        if feasible && converged {
            return Ok((-v, q));
        }
        if feasible {
            // sweep budget exhausted; a feasible column is still a valid
            // (if suboptimal) estimator, since the constraint alone controls
            // the de-biasing error and the variance is reported from the
            // column actually used
            let m_col = -v;
            let mut worst = 0.0f64;
            for i in 0..p {
                let target = if i == j { 1.0 } else { 0.0 };
                let prod: f64 = (0..p).map(|k| sigma[[i, k]] * m_col[k]).sum();
                worst = worst.max((prod - target).abs());
            }
            if worst <= q * (1.0 + 1e-6) + 1e-9 {
                return Ok((m_col, q));
            }
            // otherwise indistinguishable from infeasibility: loosen q
        }
        if doubling == opts.max_doublings {
            return Err(InferError::Infeasible {
                column: j,
                q,
                doublings: doubling,
            });
        }
        q *= 2.0;
        if q == 0.0 {
            q = 1e-12;
        }
    }
    unreachable!()
}

/// M with the dense ridged-inverse shortcut: (Σ̂ + 1e−8 I)⁻¹ when p ≤ n/2
/// and the result stays inside the q-constraint, otherwise the column-wise
/// programs.
pub fn m_matrix_auto(
    sigma: &Array2<f64>,
    q_constraint: f64,
    n: usize,
    opts: &MMatrixOptions,
) -> Result<MMatrix, InferError> {
    let p = sigma.nrows();
    if p <= n / 2 {
        if let Some(minv) = ridged_inverse(sigma) {
            if constraint_ok(sigma, &minv, q_constraint) {
                return Ok(MMatrix {
                    m: minv,
                    q_used: vec![q_constraint; p],
                    dense_inverse: true,
                });
            }
        }
    }
    m_matrix(sigma, q_constraint, opts)
}

fn ridged_inverse(sigma: &Array2<f64>) -> Option<Array2<f64>> {
    let p = sigma.nrows();
    let mut a = DMatrix::<f64>::zeros(p, p);
    for i in 0..p {
        for j in 0..p {
            a[(i, j)] = sigma[[i, j]];
        }
        a[(i, i)] += 1e-8;
    }
    let inv = a.cholesky()?.inverse();
    let mut out = Array2::zeros((p, p));
    for i in 0..p {
        for j in 0..p {
            out[[i, j]] = inv[(i, j)];
        }
    }
    Some(out)
}

fn constraint_ok(sigma: &Array2<f64>, m: &Array2<f64>, q: f64) -> bool {
    let p = sigma.nrows();
    let prod = sigma.dot(m);
    let mut worst = 0.0f64;
    for i in 0..p {
        for j in 0..p {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((prod[[i, j]] - target).abs());
        }
    }
    worst <= q
}

/// Scaled-lasso estimate of the Gaussian noise standard deviation: jointly
/// iterates a lasso fit at penalty σ·λ₀ (λ₀ = √(2 log p / n)) with the
/// update σ² ← RSS/n until σ stabilizes.
pub fn scaled_lasso_sigma(
    y: &Array1<f64>,
    x: &Array2<f64>,
    offsets: Option<&Array1<f64>>,
) -> Result<f64, InferError> {
    let n = y.len();
    let p = x.ncols();
    if x.nrows() != n {
        return Err(InferError::Dimension(format!(
            "design has {} rows but y has {n}",
            x.nrows()
        )));
    }
    let yc = match offsets {
        Some(o) => y - o,
        None => y.clone(),
    };
    let lambda0 = (2.0 * (p.max(1) as f64).ln() / n as f64).sqrt();
    let mut sigma = {
        let mean = yc.mean().unwrap_or(0.0);
        (yc.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64).sqrt()
    };
    if sigma == 0.0 {
        return Err(InferError::DegenerateNoise);
    }
    let prob = Problem {
        y: &yc,
        x,
        offsets: None,
        unit_graph: None,
        feature_graph: None,
        family: Family::gaussian(),
    };
    let mut warm: Option<Array1<f64>> = None;
    for _ in 0..200 {
        // lasso at the current scale: ½‖yc − Xβ‖² + n·σ·λ₀·‖β‖₁
        let h = Hyperparams::new(0.0, 0.0, n as f64 * sigma * lambda0, Fusion::L2);
        let opts = FitOptions {
            tol: 1e-12,
            kkt_tol: Some(1e-8 * (1.0 + h.lambda)),
            backtracking: true,
            max_iter: 100_000,
            init: warm.take(),
            ..FitOptions::default()
        };
        let fit = fit_l2(&prob, &h, &opts)?;
        let resid = &yc - &x.dot(&fit.beta_hat);
        let rss: f64 = resid.dot(&resid);
        let sigma_new = (rss / n as f64).sqrt();
        warm = Some(fit.beta_hat);
        if sigma_new == 0.0 {
            return Err(InferError::DegenerateNoise);
        }
        if (sigma_new - sigma).abs() < 1e-6 {
            return Ok(sigma_new);
        }
        sigma = sigma_new;
    }
    Ok(sigma)
}

/// De-biased coefficients b̂ = β̂ − n⁻¹·M·Xᵀ(μ(η̂) − y)/noise_var together
/// with the variance core MΣ̂M (so Var(b̂_j) ≈ [MΣ̂M]_{jj}/n).
#[allow(clippy::too_many_arguments)]
pub fn debias(
    fit: &FitResult,
    x: &Array2<f64>,
    offsets: Option<&Array1<f64>>,
    y: &Array1<f64>,
    family: Family,
    m: &Array2<f64>,
    sigma: &Array2<f64>,
    noise_var: f64,
) -> Result<(Array1<f64>, Array2<f64>), InferError> {
    let n = y.len();
    let p = x.ncols();
    if fit.beta_hat.len() != p || fit.alpha_hat.len() != n || x.nrows() != n {
        return Err(InferError::Dimension("fit does not match data".into()));
    }
    if m.nrows() != p || m.ncols() != p || sigma.nrows() != p {
        return Err(InferError::Dimension("m/sigma must be p x p".into()));
    }
    let mut eta = x.dot(&fit.beta_hat) + &fit.alpha_hat;
    if let Some(o) = offsets {
        eta += o;
    }
    let resid = family.gradient_eta(y, &eta)?; // μ(η̂) − y
    let score = x.t().dot(&resid) / (n as f64 * noise_var);
    let b_hat = &fit.beta_hat - &m.dot(&score);
    let var_core = m.dot(sigma).dot(&m.t());
    Ok((b_hat, var_core))
}

/// Sandwich variance core M·[(1/n)Σ_i ∇ℓ_i ∇ℓ_iᵀ]·M as the alternative to
/// MΣ̂M.
pub fn sandwich_variance(
    fit: &FitResult,
    x: &Array2<f64>,
    offsets: Option<&Array1<f64>>,
    y: &Array1<f64>,
    family: Family,
    m: &Array2<f64>,
    noise_var: f64,
) -> Result<Array2<f64>, InferError> {
    let n = y.len();
    let p = x.ncols();
    let mut eta = x.dot(&fit.beta_hat) + &fit.alpha_hat;
    if let Some(o) = offsets {
        eta += o;
    }
    let resid = family.gradient_eta(y, &eta)?;
    let mut meat = Array2::zeros((p, p));
    for i in 0..n {
        let ri = resid[i] / noise_var;
        for a in 0..p {
            let xa = x[[i, a]] * ri;
            for b in a..p {
                meat[[a, b]] += xa * x[[i, b]] * ri;
            }
        }
    }
    for a in 0..p {
        for b in a..p {
            let v = meat[[a, b]] / n as f64;
            meat[[a, b]] = v;
            meat[[b, a]] = v;
        }
    }
    Ok(m.dot(&meat).dot(&m.t()))
}

/// Per-coefficient de-biased estimate with its test statistic and
/// confidence interval. Rows with a non-positive variance diagonal are
/// flagged and carry no test.
#[derive(Debug, Clone)]
pub struct InferenceRow {
    pub j: usize,
    pub b_hat: f64,
    pub se: f64,
    pub t_stat: f64,
    pub p_value: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub degenerate: bool,
}

impl InferenceRow {
    /// exp(b̂), the rate-ratio presentation for log-link models.
    pub fn rate_ratio(&self) -> f64 {
        self.b_hat.exp()
    }

    pub fn rate_ratio_ci(&self) -> (f64, f64) {
        (self.ci_low.exp(), self.ci_high.exp())
    }

    /// Significance stars at 0.05 / 0.01 / 0.001.
    pub fn stars(&self) -> &'static str {
        if self.degenerate || self.p_value.is_nan() {
            ""
        } else if self.p_value < 0.001 {
            "***"
        } else if self.p_value < 0.01 {
            "**"
        } else if self.p_value < 0.05 {
            "*"
        } else {
            ""
        }
    }
}

/// Which tail the reported p-value covers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Tail {
    #[default]
    TwoSided,
    Upper,
    Lower,
}

/// Build the inference table from the de-biased estimates and a variance
/// core V (= MΣ̂M or its sandwich alternative): se_j = √(V_jj/n),
/// T_j = √n·b̂_j/√V_jj, CI = b̂_j ∓ z·se.
pub fn rows_from_variance(
    b_hat: &Array1<f64>,
    var_core: &Array2<f64>,
    n: usize,
    level: f64,
    tail: Tail,
) -> Result<Vec<InferenceRow>, InferError> {
    if !(0.0 < level && level < 1.0) {
        return Err(InferError::BadLevel(level));
    }
    let z = normal_quantile(1.0 - (1.0 - level) / 2.0);
    let sqrt_n = (n as f64).sqrt();
    let mut rows = Vec::with_capacity(b_hat.len());
    for (j, &b) in b_hat.iter().enumerate() {
        let vjj = var_core[[j, j]];
        if vjj <= 0.0 || !vjj.is_finite() {
            rows.push(InferenceRow {
                j,
                b_hat: b,
                se: f64::NAN,
                t_stat: f64::NAN,
                p_value: f64::NAN,
                ci_low: f64::NAN,
                ci_high: f64::NAN,
                degenerate: true,
            });
            continue;
        }
        let sd = vjj.sqrt();
        let se = sd / sqrt_n;
        let t = sqrt_n * b / sd;
        let p = match tail {
            Tail::TwoSided => two_sided_p(t),
            Tail::Upper => 1.0 - normal_cdf(t),
            Tail::Lower => normal_cdf(t),
        };
        rows.push(InferenceRow {
            j,
            b_hat: b,
            se,
            t_stat: t,
            p_value: p,
            ci_low: b - z * se,
            ci_high: b + z * se,
            degenerate: false,
        });
    }
    Ok(rows)
}

/// Inference table per the Σ̂-based variance MΣ̂M.
pub fn inference_table(
    b_hat: &Array1<f64>,
    m: &Array2<f64>,
    sigma: &Array2<f64>,
    n: usize,
    level: f64,
) -> Result<Vec<InferenceRow>, InferError> {
    let var_core = m.dot(sigma).dot(&m.t());
    rows_from_variance(b_hat, &var_core, n, level, Tail::TwoSided)
}

/// Orchestration settings for `run_inference`.
#[derive(Debug, Clone)]
pub struct InferenceConfig {
    /// Constraint radius for M; defaults to √(log p / n).
    pub q_constraint: Option<f64>,
    pub level: f64,
    /// Use the sandwich variance instead of MΣ̂M.
    pub sandwich: bool,
    /// Inflate the variance by n/(n − df̂), where df̂ counts the active
    /// coefficients plus the effective intercept degrees of freedom.
    /// Fitted residuals understate the noise when the model is flexible
    /// relative to n.
    pub df_correction: bool,
    pub tail: Tail,
    /// Allow the dense ridged-inverse shortcut for low-dimensional,
    /// well-conditioned curvature.
    pub dense_fallback: bool,
    pub m_options: MMatrixOptions,
}

impl Default for InferenceConfig {
    fn default() -> Self {
        InferenceConfig {
            q_constraint: None,
            level: 0.95,
            sandwich: false,
            df_correction: false,
            tail: Tail::TwoSided,
            dense_fallback: true,
            m_options: MMatrixOptions::default(),
        }
    }
}

/// Effective model degrees of freedom: the count of distinct nonzero
/// coefficient levels plus, for per-unit intercept fits, the diagonal ridge
/// approximation of the intercept smoother trace
/// Σ_i w_i/(w_i + γ_n(d_i + δ)).
///
/// Under feature fusion a connected group sharing one fitted value spends
/// one degree of freedom, not one per member, and smoothing leaves tiny
/// nonzero drifts on inactive coordinates; levels are therefore clustered
/// per feature-graph component with a small gap tolerance.
pub fn effective_df(prob: &Problem, fit: &FitResult) -> f64 {
    let beta = &fit.beta_hat;
    let scale = beta.iter().fold(0.0f64, |m, &b| m.max(b.abs()));
    let tol = 1e-3 * (1.0 + scale);
    let mut df = match (fit.hyperparams.gamma_p > 0.0, prob.feature_graph) {
        (true, Some(g)) => {
            let comp = g.components();
            let n_comp = comp.iter().copied().max().map_or(0, |m| m + 1);
            let mut groups: Vec<Vec<f64>> = vec![Vec::new(); n_comp];
            for (j, &c) in comp.iter().enumerate() {
                groups[c].push(beta[j]);
            }
            let mut levels = 0usize;
            for mut values in groups {
                values.sort_by(|a, b| a.partial_cmp(b).unwrap());
                let mut cluster_start = 0;
                for k in 0..=values.len() {
                    let boundary =
                        k == values.len() || (k > 0 && values[k] - values[k - 1] > tol);
                    if boundary && k > cluster_start {
                        let mean: f64 = values[cluster_start..k].iter().sum::<f64>()
                            / (k - cluster_start) as f64;
                        if mean.abs() > tol {
                            levels += 1;
                        }
                        cluster_start = k;
                    }
                }
            }
            levels as f64
        }
        _ => beta.iter().filter(|&&b| b != 0.0).count() as f64,
    };
    if fit.unit_effects {
        let mut eta = prob.x.dot(&fit.beta_hat) + &fit.alpha_hat;
        if let Some(o) = prob.offsets {
            eta += o;
        }
        let w = prob.family.curvature_weights(&eta);
        let gamma_n = fit.hyperparams.gamma_n;
        let delta = fit.hyperparams.delta;
        let degrees = match prob.unit_graph {
            Some(g) => g.degrees(),
            None => Array1::zeros(prob.y.len()),
        };
        for (wi, di) in w.iter().zip(degrees.iter()) {
            df += wi / (wi + gamma_n * (di + delta));
        }
    }
    df
}

/// Full inference output.
#[derive(Debug, Clone)]
pub struct InferenceResult {
    pub rows: Vec<InferenceRow>,
    pub b_hat: Array1<f64>,
    pub m: MMatrix,
    pub sigma: Array2<f64>,
    /// Gaussian noise s.d. from the scaled lasso (1 otherwise).
    pub noise_sd: f64,
    pub q_constraint: f64,
}

/// End-to-end de-biased inference for a fitted model: estimates the noise
/// scale (Gaussian), builds Σ̂ at the fitted predictor treating α̂ as fixed,
/// solves the constrained inverse, de-biases, and tabulates tests.
pub fn run_inference(
    prob: &Problem,
    fit: &FitResult,
    cfg: &InferenceConfig,
) -> Result<InferenceResult, InferError> {
    let n = prob.y.len();
    let p = prob.x.ncols();
    let noise_sd = match prob.family {
        Family::Gaussian { .. } => {
            // noise scale on the residual surface left after the fitted
            // intercepts
            let y_adj = prob.y - &fit.alpha_hat;
            scaled_lasso_sigma(&y_adj, prob.x, prob.offsets)?
        }
        _ => 1.0,
    };
    let noise_var = noise_sd * noise_sd;
    let mut eta = prob.x.dot(&fit.beta_hat) + &fit.alpha_hat;
    if let Some(o) = prob.offsets {
        eta += o;
    }
    let sigma = sigma_hat(prob.x, &eta, prob.family, noise_var)?;
    let q = cfg
        .q_constraint
        .unwrap_or_else(|| ((p.max(2) as f64).ln() / n as f64).sqrt());
    let m = if cfg.dense_fallback {
        m_matrix_auto(&sigma, q, n, &cfg.m_options)?
    } else {
        m_matrix(&sigma, q, &cfg.m_options)?
    };
    let (b_hat, var_core) = debias(
        fit,
        prob.x,
        prob.offsets,
        prob.y,
        prob.family,
        &m.m,
        &sigma,
        noise_var,
    )?;
    let mut var_core = if cfg.sandwich {
        sandwich_variance(fit, prob.x, prob.offsets, prob.y, prob.family, &m.m, noise_var)?
    } else {
        var_core
    };
    if cfg.df_correction {
        let df = effective_df(prob, fit);
        let denom = (n as f64 - df).max(n as f64 / 10.0);
        var_core *= n as f64 / denom;
    }
    let rows = rows_from_variance(&b_hat, &var_core, n, cfg.level, cfg.tail)?;
    Ok(InferenceResult {
        rows,
        b_hat,
        m,
        sigma,
        noise_sd,
        q_constraint: q,
    })
}
