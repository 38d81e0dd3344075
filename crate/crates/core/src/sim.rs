//! Data-generating processes for benchmarking the estimators: intrinsic CAR
//! spatial random effects, stochastic-block unit graphs, hub-structured
//! feature graphs, sparse two-sign coefficient patterns, outcome sampling,
//! and network perturbation.

use crate::family::{Family, EXP_CLIP};
use crate::graph::{laplacian, Graph, GraphError};
use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Bernoulli, Distribution, Normal, Poisson};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("tau must be strictly positive, got {0}")]
    BadTau(f64),
    #[error("blocks must be at least 1")]
    NoBlocks,
    #[error("sparsity s = {s} must be even and s/2 must divide p = {p}")]
    BadSparsity { s: usize, p: usize },
    #[error("poisson mean overflow at unit {unit}: mean {mean:e} exceeds 1e9")]
    PoissonOverflow { unit: usize, mean: f64 },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// Derive a child seed from a master seed and a tag (replicate index,
/// stream purpose) with a splitmix-style mix; stable across platforms.
pub fn derive_seed(master: u64, tag: u64) -> u64 {
    let mut z = master ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Draw one intrinsic-CAR (improper GMRF) sample with precision L/τ² under
/// a per-component sum-to-zero constraint, via the spectral decomposition:
/// α = Σ_{λ_k>0} (τ/√λ_k)·z_k·v_k with z_k standard normal.
pub fn sample_icar(g: &Graph, tau: f64, seed: u64) -> Result<Array1<f64>, SimError> {
    if tau <= 0.0 || tau.is_nan() {
        return Err(SimError::BadTau(tau));
    }
    let n = g.node_count();
    let lap = laplacian(g).matrix.to_dense();
    let mut dense = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            dense[(i, j)] = lap[[i, j]];
        }
    }
    let eig = SymmetricEigen::new(dense);
    let lambda_max = eig.eigenvalues.iter().fold(0.0f64, |m, &v| m.max(v));
    let cutoff = 1e-9 * lambda_max.max(1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let mut alpha = Array1::zeros(n);
    for k in 0..n {
        let lam = eig.eigenvalues[k];
        if lam <= cutoff {
            continue;
        }
        let z: f64 = normal.sample(&mut rng);
        let scale = tau / lam.sqrt() * z;
        for i in 0..n {
            alpha[i] += scale * eig.eigenvectors[(i, k)];
        }
    }
    Ok(alpha)
}

/// Stochastic block model with fully connected blocks: nodes are assigned
/// to `blocks` groups uniformly at random, each group becomes a clique, and
/// there are no cross-block edges. Returns the graph and block labels.
pub fn sbm_graph(n: usize, blocks: usize, seed: u64) -> Result<(Graph, Vec<usize>), SimError> {
    if blocks == 0 {
        return Err(SimError::NoBlocks);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..blocks)).collect();
    let mut edges = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            if labels[i] == labels[j] {
                edges.push((i, j, 1.0));
            }
        }
    }
    Ok((Graph::new(n, edges)?, labels))
}

/// Per-unit intercepts for a block-labeled graph: node i draws from
/// N(means[label_i], sd²).
pub fn sbm_intercepts(
    labels: &[usize],
    means: &[f64],
    sd: f64,
    seed: u64,
) -> Result<Array1<f64>, SimError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let mut out = Array1::zeros(labels.len());
    for (i, &b) in labels.iter().enumerate() {
        let mean = *means.get(b).ok_or_else(|| {
            SimError::Dimension(format!("block label {b} has no mean (got {})", means.len()))
        })?;
        out[i] = mean + sd * normal.sample(&mut rng);
    }
    Ok(out)
}

fn check_hub_shape(p: usize, s: usize) -> Result<(usize, usize), SimError> {
    let half = s / 2;
    if s == 0 || !s.is_multiple_of(2) || half == 0 || !p.is_multiple_of(half) {
        return Err(SimError::BadSparsity { s, p });
    }
    Ok((2 * p / s, half)) // (component count, component size)
}

/// Feature graph of 2p/s disconnected star components of size s/2: the
/// lowest feature index in each component is its hub, connected to every
/// other member.
pub fn hub_feature_graph(p: usize, s: usize) -> Result<Graph, SimError> {
    let (components, size) = check_hub_shape(p, s)?;
    let mut edges = Vec::with_capacity(p - components);
    for c in 0..components {
        let hub = c * size;
        for k in 1..size {
            edges.push((hub, hub + k, 1.0));
        }
    }
    Ok(Graph::new(p, edges)?)
}

/// Design matrix matching the hub component layout: hub columns are
/// N(0, 1), non-hub columns are 0.35·hub + N(0, 1); all columns are then
/// standardized to mean 0 and unit (population) variance.
pub fn gen_design(n: usize, p: usize, s: usize, seed: u64) -> Result<Array2<f64>, SimError> {
    let (components, size) = check_hub_shape(p, s)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let mut x = Array2::zeros((n, p));
    for c in 0..components {
        let hub = c * size;
        for i in 0..n {
            x[[i, hub]] = normal.sample(&mut rng);
        }
        for k in 1..size {
            for i in 0..n {
                x[[i, hub + k]] = 0.35 * x[[i, hub]] + normal.sample(&mut rng);
            }
        }
    }
    standardize_columns(&mut x);
    Ok(x)
}

/// In-place column standardization to mean 0 and unit population variance;
/// constant columns are left centered.
pub fn standardize_columns(x: &mut Array2<f64>) {
    let n = x.nrows() as f64;
    for mut col in x.columns_mut() {
        let mean = col.sum() / n;
        col.mapv_inplace(|v| v - mean);
        let var = col.iter().map(|v| v * v).sum::<f64>() / n;
        if var > 0.0 {
            let sd = var.sqrt();
            col.mapv_inplace(|v| v / sd);
        }
    }
}

/// Coefficient pattern: s/2 entries at +rho, s/2 at −rho, the rest zero.
pub fn gen_beta(p: usize, s: usize, rho: f64) -> Result<Array1<f64>, SimError> {
    check_hub_shape(p, s)?;
    let mut beta = Array1::zeros(p);
    for j in 0..s / 2 {
        beta[j] = rho;
    }
    for j in s / 2..s {
        beta[j] = -rho;
    }
    Ok(beta)
}

/// Sample outcomes with mean μ(offset + α + Xβ) per the family.
pub fn gen_outcomes(
    family: Family,
    alpha: &Array1<f64>,
    x: &Array2<f64>,
    beta: &Array1<f64>,
    offsets: Option<&Array1<f64>>,
    seed: u64,
) -> Result<Array1<f64>, SimError> {
    let n = alpha.len();
    if x.nrows() != n || x.ncols() != beta.len() {
        return Err(SimError::Dimension(format!(
            "design {}x{} does not match alpha ({}) / beta ({})",
            x.nrows(),
            x.ncols(),
            n,
            beta.len()
        )));
    }
    let mut eta = x.dot(beta) + alpha;
    if let Some(off) = offsets {
        if off.len() != n {
            return Err(SimError::Dimension("offset length".into()));
        }
        eta += off;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut y = Array1::zeros(n);
    match family {
        Family::Gaussian { dispersion } => {
            let normal = Normal::new(0.0, dispersion.sqrt()).unwrap();
            for i in 0..n {
                y[i] = eta[i] + normal.sample(&mut rng);
            }
        }
        Family::Binomial => {
            for i in 0..n {
                let prob = crate::family::expit(eta[i]);
                y[i] = if Bernoulli::new(prob).unwrap().sample(&mut rng) {
                    1.0
                } else {
                    0.0
                };
            }
        }
        Family::Poisson => {
            for i in 0..n {
                let mean = (eta[i].min(EXP_CLIP)).exp();
                if mean > 1e9 {
                    return Err(SimError::PoissonOverflow { unit: i, mean });
                }
                y[i] = Poisson::new(mean.max(1e-300)).unwrap().sample(&mut rng);
            }
        }
    }
    Ok(y)
}

/// Graph perturbation regimes.
#[derive(Debug, Clone, PartialEq)]
pub enum PerturbMode {
    /// Add each absent pair independently with the given probability; when
    /// `intra_component_only`, only pairs inside an existing component are
    /// eligible.
    AddRandom {
        prob: f64,
        intra_component_only: bool,
    },
    /// Remove every edge whose two endpoints both belong to the active set.
    DeleteActive { active: Vec<usize> },
}

/// Apply a perturbation, returning a new graph.
pub fn perturb_graph(g: &Graph, mode: &PerturbMode, seed: u64) -> Result<Graph, SimError> {
    let n = g.node_count();
    match mode {
        PerturbMode::AddRandom {
            prob,
            intra_component_only,
        } => {
            let mut present = std::collections::HashSet::new();
            for e in g.edges() {
                present.insert((e.i, e.j));
            }
            let comp = g.components();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut edges: Vec<(usize, usize, f64)> =
                g.edges().iter().map(|e| (e.i, e.j, e.w)).collect();
            for i in 0..n {
                for j in (i + 1)..n {
                    if present.contains(&(i, j)) {
                        continue;
                    }
                    if *intra_component_only && comp[i] != comp[j] {
                        continue;
                    }
                    if rng.random_range(0.0..1.0) < *prob {
                        edges.push((i, j, 1.0));
                    }
                }
            }
            Ok(Graph::new(n, edges)?)
        }
        PerturbMode::DeleteActive { active } => {
            let mut is_active = vec![false; n];
            for &a in active {
                if a >= n {
                    return Err(SimError::Dimension(format!(
                        "active feature {a} out of range for {n} nodes"
                    )));
                }
                is_active[a] = true;
            }
            let edges = g
                .edges()
                .iter()
                .filter(|e| !(is_active[e.i] && is_active[e.j]))
                .map(|e| (e.i, e.j, e.w));
            Ok(Graph::new(n, edges)?)
        }
    }
}
