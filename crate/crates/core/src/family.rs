//! GLM family abstraction: loss, gradient, curvature weights, inverse link,
//! deviance, and offset handling for Gaussian, Binomial, and Poisson
//! outcomes, all with canonical links.

use ndarray::{Array1, Array2};
use thiserror::Error;

/// Largest exponent passed to `exp` in the Poisson mean; larger linear
/// predictors are clipped so intermediate objective values stay finite.
pub const EXP_CLIP: f64 = 700.0;

#[derive(Debug, Error)]
pub enum FamilyError {
    #[error("binomial outcomes must lie in [0, 1]; y[{index}] = {value}")]
    BinomialDomain { index: usize, value: f64 },
    #[error("poisson outcomes must be nonnegative integers; y[{index}] = {value}")]
    PoissonDomain { index: usize, value: f64 },
    #[error("outcome vector contains a non-finite value at index {0}")]
    NonFiniteOutcome(usize),
    #[error("composition entry at row {row}, column {col} is {value}; enable a pseudo-count to handle zeros")]
    NonPositiveComposition { row: usize, col: usize, value: f64 },
    #[error("reference column {reference} out of range for {cols} columns")]
    ReferenceOutOfRange { reference: usize, cols: usize },
    #[error("cannot fit a common intercept: {0}")]
    DegenerateIntercept(String),
}

/// Outcome distribution with its canonical link.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Family {
    Gaussian { dispersion: f64 },
    Binomial,
    Poisson,
}

impl Family {
    pub fn gaussian() -> Self {
        Family::Gaussian { dispersion: 1.0 }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Family::Gaussian { .. } => "gaussian",
            Family::Binomial => "binomial",
            Family::Poisson => "poisson",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "gaussian" => Some(Family::gaussian()),
            "binomial" => Some(Family::Binomial),
            "poisson" => Some(Family::Poisson),
            _ => None,
        }
    }

    /// Inverse canonical link μ(η).
    pub fn inverse_link(&self, eta: f64) -> f64 {
        match self {
            Family::Gaussian { .. } => eta,
            Family::Binomial => expit(eta),
            Family::Poisson => (eta.min(EXP_CLIP)).exp(),
        }
    }

    /// Per-observation mean μ(η_i).
    pub fn mean(&self, eta: &Array1<f64>) -> Array1<f64> {
        eta.mapv(|e| self.inverse_link(e))
    }

    /// Checks the outcome domain for this family.
    pub fn validate_outcomes(&self, y: &Array1<f64>) -> Result<(), FamilyError> {
        for (i, &v) in y.iter().enumerate() {
            if !v.is_finite() {
                return Err(FamilyError::NonFiniteOutcome(i));
            }
            match self {
                Family::Gaussian { .. } => {}
                Family::Binomial => {
                    if !(0.0..=1.0).contains(&v) {
                        return Err(FamilyError::BinomialDomain { index: i, value: v });
                    }
                }
                Family::Poisson => {
                    if v < 0.0 || v.fract() != 0.0 {
                        return Err(FamilyError::PoissonDomain { index: i, value: v });
                    }
                }
            }
        }
        Ok(())
    }

    /// Negative log-likelihood up to additive constants in y.
    ///
    /// Gaussian: ½Σ(y−η)²; Binomial: Σ[log(1+e^η) − yη]; Poisson: Σ[e^η − yη].
    /// Dispersion is treated as 1 here; noise-scale estimation is a separate
    /// concern of the inference module.
    pub fn loss(&self, y: &Array1<f64>, eta: &Array1<f64>) -> Result<f64, FamilyError> {
        self.validate_outcomes(y)?;
        assert_eq!(y.len(), eta.len(), "loss dimension mismatch");
        let total = match self {
            Family::Gaussian { .. } => {
                0.5 * y
                    .iter()
                    .zip(eta)
                    .map(|(&yi, &ei)| (yi - ei) * (yi - ei))
                    .sum::<f64>()
            }
            Family::Binomial => y
                .iter()
                .zip(eta)
                .map(|(&yi, &ei)| ei.max(0.0) + (-ei.abs()).exp().ln_1p() - yi * ei)
                .sum(),
            Family::Poisson => y
                .iter()
                .zip(eta)
                .map(|(&yi, &ei)| (ei.min(EXP_CLIP)).exp() - yi * ei)
                .sum(),
        };
        Ok(total)
    }

    /// Gradient of the loss in η: μ(η) − y.
    pub fn gradient_eta(&self, y: &Array1<f64>, eta: &Array1<f64>) -> Result<Array1<f64>, FamilyError> {
        self.validate_outcomes(y)?;
        assert_eq!(y.len(), eta.len(), "gradient dimension mismatch");
        Ok(self.mean(eta) - y)
    }

    /// Diagonal curvature μ′(η_i) per observation.
    pub fn curvature_weights(&self, eta: &Array1<f64>) -> Array1<f64> {
        match self {
            Family::Gaussian { .. } => Array1::ones(eta.len()),
            Family::Binomial => eta.mapv(|e| {
                let p = expit(e);
                p * (1.0 - p)
            }),
            Family::Poisson => eta.mapv(|e| (e.min(EXP_CLIP)).exp()),
        }
    }

    /// Family deviance: 2·(saturated log-lik − model log-lik).
    pub fn deviance(&self, y: &Array1<f64>, mu: &Array1<f64>) -> f64 {
        assert_eq!(y.len(), mu.len(), "deviance dimension mismatch");
        match self {
            Family::Gaussian { .. } => y
                .iter()
                .zip(mu)
                .map(|(&yi, &mi)| (yi - mi) * (yi - mi))
                .sum(),
            Family::Binomial => {
                2.0 * y
                    .iter()
                    .zip(mu)
                    .map(|(&yi, &mi)| {
                        let m = mi.clamp(1e-12, 1.0 - 1e-12);
                        xlogy(yi, yi / m) + xlogy(1.0 - yi, (1.0 - yi) / (1.0 - m))
                    })
                    .sum::<f64>()
            }
            Family::Poisson => {
                2.0 * y
                    .iter()
                    .zip(mu)
                    .map(|(&yi, &mi)| {
                        let m = mi.max(1e-12);
                        xlogy(yi, yi / m) - (yi - m)
                    })
                    .sum::<f64>()
            }
        }
    }

    /// Common-intercept MLE: the scalar a solving Σᵢ μ(a + offset_i) = Σᵢ yᵢ,
    /// used to initialize solvers and to calibrate intercept-free fits.
    pub fn common_intercept(
        &self,
        y: &Array1<f64>,
        offsets: Option<&Array1<f64>>,
    ) -> Result<f64, FamilyError> {
        self.validate_outcomes(y)?;
        let n = y.len();
        if n == 0 {
            return Err(FamilyError::DegenerateIntercept("empty outcome".into()));
        }
        let zeros;
        let off = match offsets {
            Some(o) => o,
            None => {
                zeros = Array1::zeros(n);
                &zeros
            }
        };
        let ybar = y.mean().unwrap();
        match self {
            Family::Gaussian { .. } => Ok(ybar - off.mean().unwrap()),
            Family::Poisson => {
                if y.sum() <= 0.0 {
                    return Err(FamilyError::DegenerateIntercept(
                        "all poisson outcomes are zero".into(),
                    ));
                }
                let denom: f64 = off.iter().map(|&o| (o.min(EXP_CLIP)).exp()).sum();
                Ok((y.sum() / denom).ln())
            }
            Family::Binomial => {
                if ybar <= 0.0 || ybar >= 1.0 {
                    return Err(FamilyError::DegenerateIntercept(format!(
                        "binomial outcomes all equal {ybar}"
                    )));
                }
                // scalar Newton on a ↦ Σ expit(a + offset) − Σ y
                let mut a = (ybar / (1.0 - ybar)).ln() - off.mean().unwrap();
                for _ in 0..100 {
                    let mut f = 0.0;
                    let mut fp = 0.0;
                    for (&yi, &oi) in y.iter().zip(off) {
                        let p = expit(a + oi);
                        f += p - yi;
                        fp += p * (1.0 - p);
                    }
                    if fp <= 1e-12 {
                        break;
                    }
                    let step = f / fp;
                    a -= step;
                    if step.abs() < 1e-12 {
                        break;
                    }
                }
                Ok(a)
            }
        }
    }
}

/// Numerically stable logistic function.
pub fn expit(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn xlogy(x: f64, y: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x * y.ln()
    }
}

/// Linear predictor η = offset + α + Xβ with its fixed offset kept alongside.
#[derive(Debug, Clone)]
pub struct LinearPredictor {
    pub eta: Array1<f64>,
    pub offset: Array1<f64>,
}

impl LinearPredictor {
    pub fn new(
        offset: Option<&Array1<f64>>,
        alpha: &Array1<f64>,
        x_beta: &Array1<f64>,
    ) -> Self {
        let n = alpha.len();
        assert_eq!(x_beta.len(), n, "linear predictor dimension mismatch");
        let offset = offset.cloned().unwrap_or_else(|| Array1::zeros(n));
        assert_eq!(offset.len(), n, "offset dimension mismatch");
        let eta = &offset + alpha + x_beta;
        LinearPredictor { eta, offset }
    }
}

/// Additive log-ratio transform of a composition matrix: drops the reference
/// column and returns log(x_j / x_ref) for the rest. When `pseudo_count` is
/// given it is added to every cell and rows are renormalized first.
pub fn alr_transform(
    composition: &Array2<f64>,
    reference: usize,
    pseudo_count: Option<f64>,
) -> Result<Array2<f64>, FamilyError> {
    let (n, c) = composition.dim();
    if reference >= c {
        return Err(FamilyError::ReferenceOutOfRange {
            reference,
            cols: c,
        });
    }
    let mut adjusted = composition.clone();
    if let Some(pc) = pseudo_count {
        adjusted.mapv_inplace(|v| v + pc);
    }
    for mut row in adjusted.rows_mut() {
        let s: f64 = row.sum();
        if s > 0.0 {
            row.mapv_inplace(|v| v / s);
        }
    }
    for ((r, col), &v) in adjusted.indexed_iter() {
        if v <= 0.0 {
            return Err(FamilyError::NonPositiveComposition {
                row: r,
                col,
                value: composition[[r, col]],
            });
        }
    }
    let mut out = Array2::zeros((n, c - 1));
    for r in 0..n {
        let denom = adjusted[[r, reference]];
        let mut k = 0;
        for col in 0..c {
            if col == reference {
                continue;
            }
            out[[r, k]] = (adjusted[[r, col]] / denom).ln();
            k += 1;
        }
    }
    Ok(out)
}
