//! Replicated simulation experiments: generate data, split train/test, tune
//! each method by cross-validation, fit, run inference, and score power,
//! Type I error, coverage, and test-set prediction quality.

use crate::commands::{build_scenario, Scenario};
use crate::config::ExperimentConfig;
use crate::error::AppError;
use crate::io::fmt_full;
use glmfunk::{
    coordinate_descent_tune, harmonic_extend, run_inference, FitOptions, FitResult,
    Fusion, Graph, Hyperparams, InferenceConfig, Problem, TuneSpec,
};
use ndarray::{Array1, Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::fs;
use std::path::Path;

/// A comparator estimator: which parts of the penalty are active and tuned.
#[derive(Debug, Clone)]
pub struct MethodSpec {
    pub name: String,
    pub fusion: Fusion,
    pub unit_effects: bool,
    pub feature_fusion: bool,
}

impl MethodSpec {
    pub fn from_name(name: &str) -> Result<MethodSpec, AppError> {
        let (fusion, unit_effects, feature_fusion) = match name {
            "glm-funk-l1" => (Fusion::L1, true, true),
            "glm-funk-l2" => (Fusion::L2, true, true),
            "rnc-lasso" => (Fusion::L2, true, false),
            "lasso" => (Fusion::L2, false, false),
            "grace-l1" => (Fusion::L1, false, true),
            "grace-l2" => (Fusion::L2, false, true),
            _ => {
                return Err(AppError::Config(format!(
                    "unknown method {name:?}; expected glm-funk-l1, glm-funk-l2, rnc-lasso, lasso, grace-l1, or grace-l2"
                )))
            }
        };
        Ok(MethodSpec {
            name: name.to_string(),
            fusion,
            unit_effects,
            feature_fusion,
        })
    }
}

/// Metrics from one (replicate, method) cell.
#[derive(Debug, Clone)]
pub struct ReplicateMetrics {
    pub replicate: usize,
    pub method: String,
    pub rho: f64,
    pub power: f64,
    pub type1: f64,
    pub coverage: f64,
    pub test_rmse: f64,
    pub test_deviance: f64,
    pub selected: Option<Hyperparams>,
    pub status: String,
}

fn nan_row(replicate: usize, method: &str, rho: f64, status: String) -> ReplicateMetrics {
    ReplicateMetrics {
        replicate,
        method: method.to_string(),
        rho,
        power: f64::NAN,
        type1: f64::NAN,
        coverage: f64::NAN,
        test_rmse: f64::NAN,
        test_deviance: f64::NAN,
        selected: None,
        status,
    }
}

fn take_rows(x: &Array2<f64>, rows: &[usize]) -> Array2<f64> {
    x.select(Axis(0), rows)
}

fn take(y: &Array1<f64>, rows: &[usize]) -> Array1<f64> {
    Array1::from_iter(rows.iter().map(|&i| y[i]))
}

struct Split {
    train: Vec<usize>,
    test: Vec<usize>,
}

fn split_units(n: usize, train_fraction: f64, seed: u64) -> Split {
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let n_train = ((n as f64) * train_fraction).round().max(1.0) as usize;
    let n_train = n_train.min(n - 1);
    let mut train: Vec<usize> = order[..n_train].to_vec();
    let mut test: Vec<usize> = order[n_train..].to_vec();
    train.sort_unstable();
    test.sort_unstable();
    Split { train, test }
}

fn method_tune_spec(cfg: &ExperimentConfig, m: &MethodSpec, x: &Array2<f64>, y: &Array1<f64>, seed: u64) -> TuneSpec {
    let mut spec = cfg.tune.to_spec(x, y, m.fusion, seed);
    if !m.unit_effects {
        spec.gamma_n_grid = vec![0.0];
    }
    if !m.feature_fusion {
        spec.gamma_p_grid = vec![0.0];
    }
    spec
}

#[allow(clippy::too_many_arguments)]
fn run_method(
    cfg: &ExperimentConfig,
    m: &MethodSpec,
    sc: &Scenario,
    split: &Split,
    g_train: &Graph,
    seed: u64,
    replicate: usize,
    rho: f64,
) -> Result<ReplicateMetrics, AppError> {
    let y_train = take(&sc.y, &split.train);
    let x_train = take_rows(&sc.x, &split.train);
    let y_test = take(&sc.y, &split.test);
    let x_test = take_rows(&sc.x, &split.test);
    let base_train = sc.offsets.as_ref().map(|o| take(o, &split.train));
    let base_test = sc.offsets.as_ref().map(|o| take(o, &split.test));

    // intercept-free comparators additionally get the null-model intercept
    // as an offset so their baseline stays calibrated
    let offsets_train;
    let (off_train_ref, off_test): (Option<&Array1<f64>>, Array1<f64>) = if m.unit_effects {
        (
            base_train.as_ref(),
            base_test
                .clone()
                .unwrap_or_else(|| Array1::zeros(split.test.len())),
        )
    } else {
        let a = sc
            .family
            .common_intercept(&y_train, base_train.as_ref())
            .map_err(|e| AppError::Numerical(e.to_string()))?;
        offsets_train = match &base_train {
            Some(b) => b + a,
            None => Array1::from_elem(split.train.len(), a),
        };
        let off_test = match &base_test {
            Some(b) => b + a,
            None => Array1::from_elem(split.test.len(), a),
        };
        (Some(&offsets_train), off_test)
    };

    let unit_graph = if m.unit_effects { Some(g_train) } else { None };
    let feature_graph = if m.feature_fusion {
        Some(&sc.feature_graph)
    } else {
        None
    };
    let prob = Problem {
        y: &y_train,
        x: &x_train,
        offsets: off_train_ref,
        unit_graph,
        feature_graph,
        family: sc.family,
    };
    let spec = method_tune_spec(cfg, m, &x_train, &y_train, seed);
    let mut cv_opts = cfg.solver_cv.to_options();
    cv_opts.accelerated = true;
    let tuned = coordinate_descent_tune(&prob, &spec, &cv_opts)?;
    let best = tuned.best;

    let mut final_opts: FitOptions = cfg.solver_final.to_options();
    final_opts.backtracking = true;
    final_opts.accelerated = true;
    let fit: FitResult = match best.fusion {
        Fusion::L2 => glmfunk::fit_l2(&prob, &best, &final_opts)?,
        Fusion::L1 => glmfunk::fit_l1(&prob, &best, &final_opts)?,
    };

    // inference on the training fit
    let inf = run_inference(
        &prob,
        &fit,
        &InferenceConfig {
            level: cfg.level,
            sandwich: cfg.sandwich,
            df_correction: true,
            ..InferenceConfig::default()
        },
    )?;
    let p = sc.beta.len();
    let mut rejections_active = 0usize;
    let mut rejections_null = 0usize;
    let mut covered = 0usize;
    let mut n_null = 0usize;
    for row in &inf.rows {
        let truth = sc.beta[row.j];
        let reject = !row.degenerate && row.p_value < 0.05;
        if truth != 0.0 {
            if reject {
                rejections_active += 1;
            }
        } else {
            n_null += 1;
            if reject {
                rejections_null += 1;
            }
        }
        if !row.degenerate && row.ci_low <= truth && truth <= row.ci_high {
            covered += 1;
        }
    }
    let n_active = sc.active.len();
    let power = if n_active > 0 {
        rejections_active as f64 / n_active as f64
    } else {
        f64::NAN
    };
    let type1 = if n_null > 0 {
        rejections_null as f64 / n_null as f64
    } else {
        f64::NAN
    };
    let coverage = covered as f64 / p as f64;

    // out-of-sample predictions via harmonic extension over the full graph
    let alpha_test = if fit.unit_effects {
        let alpha_train: Vec<f64> = fit.alpha_hat.iter().copied().collect();
        let ext = harmonic_extend(&sc.unit_graph, &split.train, &alpha_train)?;
        debug_assert_eq!(ext.test_nodes, split.test);
        Array1::from_vec(ext.values)
    } else {
        Array1::zeros(split.test.len())
    };
    let eta_test = x_test.dot(&fit.beta_hat) + &alpha_test + &off_test;
    let mu_test = sc.family.mean(&eta_test);
    let n_test = y_test.len() as f64;
    let test_rmse = (y_test
        .iter()
        .zip(mu_test.iter())
        .map(|(&a, &b)| (a - b) * (a - b))
        .sum::<f64>()
        / n_test)
        .sqrt();
    let test_deviance = sc.family.deviance(&y_test, &mu_test) / n_test;

    Ok(ReplicateMetrics {
        replicate,
        method: m.name.clone(),
        rho,
        power,
        type1,
        coverage,
        test_rmse,
        test_deviance,
        selected: Some(best),
        status: "ok".into(),
    })
}

fn one_replicate(
    cfg: &ExperimentConfig,
    methods: &[MethodSpec],
    master_seed: u64,
    rho_idx: usize,
    rho: f64,
    replicate: usize,
) -> Vec<ReplicateMetrics> {
    let rep_seed = glmfunk::derive_seed(
        master_seed,
        (rho_idx as u64) << 32 | replicate as u64,
    );
    let sc = match build_scenario(&cfg.sim, rep_seed, rho) {
        Ok(sc) => sc,
        Err(e) => {
            return methods
                .iter()
                .map(|m| nan_row(replicate, &m.name, rho, format!("error: {e}")))
                .collect()
        }
    };
    let split = split_units(
        sc.unit_graph.node_count(),
        cfg.train_fraction,
        glmfunk::derive_seed(rep_seed, 10),
    );
    let g_train = match sc.unit_graph.induced_subgraph(&split.train) {
        Ok(g) => g,
        Err(e) => {
            return methods
                .iter()
                .map(|m| nan_row(replicate, &m.name, rho, format!("error: {e}")))
                .collect()
        }
    };
    methods
        .iter()
        .map(|m| {
            run_method(cfg, m, &sc, &split, &g_train, rep_seed, replicate, rho).unwrap_or_else(
                |e| nan_row(replicate, &m.name, rho, format!("error: {e}")),
            )
        })
        .collect()
}

/// Run the full experiment. Replicates execute in parallel; results are
/// reduced in (rho, replicate, method) order so the output is independent
/// of scheduling.
pub fn run_experiment(
    cfg: &ExperimentConfig,
    seed: u64,
    threads: Option<usize>,
) -> Result<Vec<ReplicateMetrics>, AppError> {
    let methods: Vec<MethodSpec> = cfg
        .methods
        .iter()
        .map(|m| MethodSpec::from_name(m))
        .collect::<Result<_, _>>()?;
    if methods.is_empty() {
        return Err(AppError::Config("methods list is empty".into()));
    }
    if cfg.replicates == 0 {
        return Err(AppError::Config("replicates must be positive".into()));
    }
    if !(0.0 < cfg.train_fraction && cfg.train_fraction < 1.0) {
        return Err(AppError::Config("train_fraction must be in (0, 1)".into()));
    }
    let rhos: Vec<f64> = cfg
        .rho_values
        .clone()
        .unwrap_or_else(|| vec![cfg.sim.rho]);
    let cells: Vec<(usize, f64, usize)> = rhos
        .iter()
        .enumerate()
        .flat_map(|(ri, &rho)| (0..cfg.replicates).map(move |rep| (ri, rho, rep)))
        .collect();

    let work = || {
        cells
            .par_iter()
            .map(|&(ri, rho, rep)| one_replicate(cfg, &methods, seed, ri, rho, rep))
            .collect::<Vec<_>>()
    };
    let nested: Vec<Vec<ReplicateMetrics>> = match threads {
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| AppError::Config(e.to_string()))?
            .install(work),
        None => work(),
    };
    Ok(nested.into_iter().flatten().collect())
}

/// One summary row: (method, rho, metric, mean, standard error, count).
pub type SummaryRow = (String, f64, String, f64, f64, usize);

/// Aggregate means and standard errors per (method, rho, metric) over the
/// successful replicates.
pub fn summarize(rows: &[ReplicateMetrics]) -> Vec<SummaryRow> {
    let mut keys: Vec<(String, f64)> = Vec::new();
    for r in rows {
        if !keys.iter().any(|(m, rho)| m == &r.method && *rho == r.rho) {
            keys.push((r.method.clone(), r.rho));
        }
    }
    keys.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.partial_cmp(&b.1).unwrap()));
    type Getter = fn(&ReplicateMetrics) -> f64;
    let metrics: [(&str, Getter); 5] = [
        ("power", |r| r.power),
        ("type1", |r| r.type1),
        ("coverage", |r| r.coverage),
        ("test_rmse", |r| r.test_rmse),
        ("test_deviance", |r| r.test_deviance),
    ];
    let mut out = Vec::new();
    for (method, rho) in keys {
        for (name, get) in metrics {
            let values: Vec<f64> = rows
                .iter()
                .filter(|r| r.method == method && r.rho == rho && r.status == "ok")
                .map(get)
                .filter(|v| v.is_finite())
                .collect();
            let k = values.len();
            if k == 0 {
                out.push((method.clone(), rho, name.to_string(), f64::NAN, f64::NAN, 0));
                continue;
            }
            let mean = values.iter().sum::<f64>() / k as f64;
            let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
                / (k.max(2) - 1) as f64;
            let se = (var / k as f64).sqrt();
            out.push((method.clone(), rho, name.to_string(), mean, se, k));
        }
    }
    out
}

/// `experiment`: run and write metrics.csv plus summary.csv.
pub fn cmd_experiment(
    cfg: &ExperimentConfig,
    seed: u64,
    threads: Option<usize>,
    out_dir: &Path,
) -> Result<(), AppError> {
    let rows = run_experiment(cfg, seed, threads)?;
    fs::create_dir_all(out_dir)?;
    let mut csv = String::from(
        "replicate,method,rho,power,type1,coverage,test_rmse,test_deviance,gamma_n,gamma_p,lambda,status\n",
    );
    for r in &rows {
        let (gn, gp, lam) = match &r.selected {
            Some(h) => (fmt_full(h.gamma_n), fmt_full(h.gamma_p), fmt_full(h.lambda)),
            None => (String::new(), String::new(), String::new()),
        };
        csv.push_str(&format!(
            "{},{},{},{},{},{},{},{},{gn},{gp},{lam},{}\n",
            r.replicate,
            r.method,
            fmt_full(r.rho),
            fmt_full(r.power),
            fmt_full(r.type1),
            fmt_full(r.coverage),
            fmt_full(r.test_rmse),
            fmt_full(r.test_deviance),
            r.status
        ));
    }
    fs::write(out_dir.join("metrics.csv"), csv)?;

    let mut summary = String::from("method,rho,metric,mean,se,replicates\n");
    for (method, rho, metric, mean, se, k) in summarize(&rows) {
        summary.push_str(&format!(
            "{method},{},{metric},{},{},{k}\n",
            fmt_full(rho),
            fmt_full(mean),
            fmt_full(se)
        ));
    }
    fs::write(out_dir.join("summary.csv"), summary)?;
    Ok(())
}
