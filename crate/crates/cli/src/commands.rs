//! Implementations of the `fit`, `predict`, `cv`, `infer`, and `simulate`
//! subcommands: preprocessing, orchestration of the core library, and file
//! emission.

use crate::config::{AlphaModel, AlrConfig, RunConfig, SimCliConfig, UnitGraphModel};
use crate::error::AppError;
use crate::io::{
    self, fmt_full, read_graph, write_design_csv, write_graph, write_named_csv,
    write_outcome_csv, write_value_csv, Dataset,
};
use glmfunk::{
    alr_transform, coordinate_descent_tune, harmonic_extend, run_inference, sim, Family,
    FitResult, Fusion, Graph, Hyperparams, InferenceConfig, Problem, Tail,
};
use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::{Path, PathBuf};

/// Column scaling fitted on training data.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Scaler {
    pub means: Vec<f64>,
    pub sds: Vec<f64>,
}

impl Scaler {
    pub fn fit(x: &Array2<f64>) -> Scaler {
        let n = x.nrows() as f64;
        let mut means = Vec::with_capacity(x.ncols());
        let mut sds = Vec::with_capacity(x.ncols());
        for col in x.columns() {
            let m = col.sum() / n;
            let var = col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n;
            means.push(m);
            sds.push(if var > 0.0 { var.sqrt() } else { 1.0 });
        }
        Scaler { means, sds }
    }

    pub fn apply(&self, x: &mut Array2<f64>) {
        for (j, mut col) in x.columns_mut().into_iter().enumerate() {
            let (m, s) = (self.means[j], self.sds[j]);
            col.mapv_inplace(|v| (v - m) / s);
        }
    }
}

/// Apply the configured ALR transform: the group's columns are replaced by
/// log-ratios against the reference column, which is dropped.
pub fn apply_alr(data: &mut Dataset, cfg: &AlrConfig) -> Result<(), AppError> {
    let find = |name: &String| {
        data.feature_names
            .iter()
            .position(|f| f == name)
            .ok_or_else(|| AppError::Config(format!("alr column {name:?} not in design")))
    };
    if !cfg.columns.contains(&cfg.reference) {
        return Err(AppError::Config(
            "alr reference must be one of the alr columns".into(),
        ));
    }
    let group: Vec<usize> = cfg.columns.iter().map(find).collect::<Result<_, _>>()?;
    let ref_pos_in_group = cfg.columns.iter().position(|c| c == &cfg.reference).unwrap();
    let n = data.x.nrows();
    let mut comp = Array2::zeros((n, group.len()));
    for (k, &j) in group.iter().enumerate() {
        for i in 0..n {
            comp[[i, k]] = data.x[[i, j]];
        }
    }
    let transformed = alr_transform(&comp, ref_pos_in_group, cfg.pseudo_count)?;

    // rebuild the design: group columns become log-ratios (reference dropped)
    let mut new_names = Vec::new();
    let mut new_cols: Vec<Array1<f64>> = Vec::new();
    let mut t_idx = 0usize;
    for (j, name) in data.feature_names.iter().enumerate() {
        if name == &cfg.reference {
            continue;
        }
        if group.contains(&j) {
            new_names.push(format!("log({name}/{})", cfg.reference));
            new_cols.push(transformed.column(t_idx).to_owned());
            t_idx += 1;
        } else {
            new_names.push(name.clone());
            new_cols.push(data.x.column(j).to_owned());
        }
    }
    let mut x = Array2::zeros((n, new_cols.len()));
    for (j, col) in new_cols.iter().enumerate() {
        for i in 0..n {
            x[[i, j]] = col[i];
        }
    }
    data.x = x;
    data.feature_names = new_names;
    Ok(())
}

/// Fit metadata persisted alongside the coefficient files.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitMeta {
    pub label: String,
    pub family: String,
    pub hyperparams: Hyperparams,
    pub iterations: usize,
    pub converged: bool,
    pub kkt_residual: f64,
    pub n: usize,
    pub p: usize,
    pub feature_names: Vec<String>,
    pub standardize: bool,
    pub scaler: Option<Scaler>,
    pub alr: Option<AlrConfig>,
    pub seed: u64,
    pub objective_trace: Vec<f64>,
}

fn json_to_file<T: Serialize>(path: &Path, value: &T) -> Result<(), AppError> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn load_graphs(
    cfg: &RunConfig,
    n: usize,
    p: usize,
) -> Result<(Option<Graph>, Option<Graph>), AppError> {
    let unit = match &cfg.data.unit_graph {
        Some(path) => Some(read_graph(path, Some(n))?),
        None => None,
    };
    if let Some(g) = &unit {
        if g.node_count() != n {
            return Err(AppError::Data(format!(
                "unit graph has {} nodes but data has {n}",
                g.node_count()
            )));
        }
    }
    let feature = match &cfg.data.feature_graph {
        Some(path) => Some(read_graph(path, Some(p))?),
        None => None,
    };
    if let Some(g) = &feature {
        if g.node_count() != p {
            return Err(AppError::Data(format!(
                "feature graph has {} nodes but design has {p} columns",
                g.node_count()
            )));
        }
    }
    Ok((unit, feature))
}

/// Load, ALR-transform, and standardize the configured dataset.
pub fn prepare_dataset(cfg: &RunConfig) -> Result<(Dataset, Option<Scaler>), AppError> {
    cfg.require_files()?;
    let mut data = io::load_dataset(&cfg.data.design, &cfg.data.outcome)?;
    if let Some(alr) = &cfg.alr {
        apply_alr(&mut data, alr)?;
    }
    let scaler = if cfg.standardize {
        let s = Scaler::fit(&data.x);
        s.apply(&mut data.x);
        Some(s)
    } else {
        None
    };
    Ok((data, scaler))
}

fn fit_dispatch(
    prob: &Problem,
    h: &Hyperparams,
    opts: &glmfunk::FitOptions,
) -> Result<FitResult, AppError> {
    let fit = match h.fusion {
        Fusion::L2 => glmfunk::fit_l2(prob, h, opts)?,
        Fusion::L1 => glmfunk::fit_l1(prob, h, opts)?,
    };
    Ok(fit)
}

/// `fit`: estimate at fixed hyperparameters, writing alpha.csv, beta.csv,
/// and fit_meta.json.
pub fn cmd_fit(cfg: &RunConfig, out_dir: &Path) -> Result<(), AppError> {
    let h = cfg
        .hyperparams
        .ok_or_else(|| AppError::Config("fit requires fixed hyperparams (run cv to select them)".into()))?;
    if h.fusion != cfg.fusion {
        return Err(AppError::Config(
            "hyperparams.fusion must match the top-level fusion".into(),
        ));
    }
    let family = cfg.family()?;
    let (data, scaler) = prepare_dataset(cfg)?;
    let (unit_graph, feature_graph) = load_graphs(cfg, data.y.len(), data.x.ncols())?;
    let prob = Problem {
        y: &data.y,
        x: &data.x,
        offsets: data.offsets.as_ref(),
        unit_graph: unit_graph.as_ref(),
        feature_graph: feature_graph.as_ref(),
        family,
    };
    let fit = fit_dispatch(&prob, &h, &cfg.solver.to_options())?;

    fs::create_dir_all(out_dir)?;
    write_value_csv(
        &out_dir.join("alpha.csv"),
        "unit_id,alpha",
        &data.unit_ids,
        &fit.alpha_hat,
    )?;
    write_named_csv(
        &out_dir.join("beta.csv"),
        "feature,beta",
        &data.feature_names,
        &fit.beta_hat,
    )?;
    let meta = FitMeta {
        label: h.label(),
        family: family.name().into(),
        hyperparams: h,
        iterations: fit.iterations,
        converged: fit.converged,
        kkt_residual: fit.kkt_residual,
        n: data.y.len(),
        p: data.x.ncols(),
        feature_names: data.feature_names.clone(),
        standardize: cfg.standardize,
        scaler,
        alr: cfg.alr.clone(),
        seed: cfg.seed,
        objective_trace: fit.objective_trace,
    };
    json_to_file(&out_dir.join("fit_meta.json"), &meta)?;
    Ok(())
}

/// Saved fit reloaded from a fit directory.
pub struct SavedFit {
    pub meta: FitMeta,
    pub alpha: Array1<f64>,
    pub beta: Array1<f64>,
    pub train_units: Vec<usize>,
}

pub fn load_fit(fit_dir: &Path) -> Result<SavedFit, AppError> {
    let meta: FitMeta = serde_json::from_str(&fs::read_to_string(fit_dir.join("fit_meta.json"))?)?;
    let mut reader = csv::Reader::from_path(fit_dir.join("alpha.csv"))
        .map_err(|e| AppError::Data(e.to_string()))?;
    let mut train_units = Vec::new();
    let mut alpha = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| AppError::Data(e.to_string()))?;
        train_units.push(
            rec.get(0)
                .unwrap_or("")
                .trim()
                .parse()
                .map_err(|_| AppError::Data("alpha.csv: bad unit_id".into()))?,
        );
        alpha.push(
            rec.get(1)
                .unwrap_or("")
                .trim()
                .parse()
                .map_err(|_| AppError::Data("alpha.csv: bad alpha".into()))?,
        );
    }
    let mut reader = csv::Reader::from_path(fit_dir.join("beta.csv"))
        .map_err(|e| AppError::Data(e.to_string()))?;
    let mut beta = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| AppError::Data(e.to_string()))?;
        beta.push(
            rec.get(1)
                .unwrap_or("")
                .trim()
                .parse()
                .map_err(|_| AppError::Data("beta.csv: bad beta".into()))?,
        );
    }
    Ok(SavedFit {
        meta,
        alpha: Array1::from_vec(alpha),
        beta: Array1::from_vec(beta),
        train_units,
    })
}

#[derive(Debug, Serialize)]
struct PredictMeta {
    /// Test units in components with no training unit; their intercept
    /// extension is the zero convention.
    disconnected_test_units: Vec<usize>,
    fit_label: String,
}

/// `predict`: harmonic-extend the fitted intercepts over the full graph and
/// emit per-unit linear predictors and means for the test design.
pub fn cmd_predict(
    fit_dir: &Path,
    design_path: &Path,
    full_graph_path: Option<&Path>,
    train_nodes_path: Option<&Path>,
    out_dir: &Path,
) -> Result<(), AppError> {
    let saved = load_fit(fit_dir)?;
    let family = Family::parse(&saved.meta.family)
        .ok_or_else(|| AppError::Data("fit_meta.json has an unknown family".into()))?;
    let mut design = io::read_design(design_path)?;

    // mirror the training preprocessing
    if let Some(alr) = &saved.meta.alr {
        let mut tmp = Dataset {
            unit_ids: design.unit_ids.clone(),
            x: design.x.clone(),
            y: Array1::zeros(design.unit_ids.len()),
            offsets: design.offsets.clone(),
            feature_names: design.feature_names.clone(),
        };
        apply_alr(&mut tmp, alr)?;
        design.x = tmp.x;
        design.feature_names = tmp.feature_names;
    }
    if design.feature_names != saved.meta.feature_names {
        return Err(AppError::Data(
            "test design columns do not match the fitted model".into(),
        ));
    }
    if let Some(scaler) = &saved.meta.scaler {
        scaler.apply(&mut design.x);
    }

    // map training units into the full graph
    let unit_effects = saved.meta.hyperparams.gamma_n > 0.0;
    let (alpha_for, disconnected): (std::collections::HashMap<usize, f64>, Vec<usize>) =
        if unit_effects {
            let graph_path = full_graph_path.ok_or_else(|| {
                AppError::Config("predict requires --full-graph for a unit-effects model".into())
            })?;
            let g_full = read_graph(graph_path, None)?;
            let train_full: Vec<usize> = match train_nodes_path {
                Some(p) => fs::read_to_string(p)?
                    .lines()
                    .filter(|l| !l.trim().is_empty())
                    .map(|l| {
                        l.trim()
                            .parse()
                            .map_err(|_| AppError::Data("train-nodes: bad node index".into()))
                    })
                    .collect::<Result<_, _>>()?,
                None => saved.train_units.clone(),
            };
            if train_full.len() != saved.alpha.len() {
                return Err(AppError::Data(format!(
                    "train-nodes lists {} units but the fit has {}",
                    train_full.len(),
                    saved.alpha.len()
                )));
            }
            let alpha_train: Vec<f64> = saved.alpha.iter().copied().collect();
            let ext = harmonic_extend(&g_full, &train_full, &alpha_train)?;
            let mut map = std::collections::HashMap::new();
            let mut disc = Vec::new();
            // training units predict with their own fitted intercept
            for (&node, &a) in train_full.iter().zip(saved.alpha.iter()) {
                map.insert(node, a);
            }
            for ((&node, &value), &no_train) in ext
                .test_nodes
                .iter()
                .zip(ext.values.iter())
                .zip(ext.no_train_component.iter())
            {
                map.insert(node, value);
                if no_train {
                    disc.push(node);
                }
            }
            (map, disc)
        } else {
            (std::collections::HashMap::new(), Vec::new())
        };

    // score the test rows, sorted by unit id so row order never matters
    let mut rows: Vec<(usize, usize)> = design
        .unit_ids
        .iter()
        .copied()
        .enumerate()
        .map(|(pos, id)| (id, pos))
        .collect();
    rows.sort_unstable();
    let x_beta = design.x.dot(&saved.beta);
    let mut out = String::from("unit_id,eta,mean\n");
    for &(id, pos) in &rows {
        let alpha = if unit_effects {
            match alpha_for.get(&id) {
                Some(&a) => a,
                None => {
                    return Err(AppError::Data(format!(
                        "unknown unit id {id}: not a node of the full graph"
                    )))
                }
            }
        } else {
            0.0
        };
        let offset = design.offsets.as_ref().map(|o| o[pos]).unwrap_or(0.0);
        let eta = offset + alpha + x_beta[pos];
        let mean = family.inverse_link(eta);
        out.push_str(&format!("{id},{},{}\n", fmt_full(eta), fmt_full(mean)));
    }
    fs::create_dir_all(out_dir)?;
    fs::write(out_dir.join("predictions.csv"), out)?;
    json_to_file(
        &out_dir.join("predict_meta.json"),
        &PredictMeta {
            disconnected_test_units: disconnected
                .into_iter()
                .filter(|id| rows.binary_search_by_key(id, |r| r.0).is_ok())
                .collect(),
            fit_label: saved.meta.label.clone(),
        },
    )?;
    Ok(())
}

#[derive(Debug, Serialize)]
struct CvSelection {
    hyperparams: Hyperparams,
    score: f64,
    evaluations: usize,
    cycles: usize,
    fold_constraint_satisfied: bool,
}

/// `cv`: coordinate-descent tuning; emits the (candidate, fold, score)
/// table and the selected hyperparameters.
pub fn cmd_cv(cfg: &RunConfig, out_dir: &Path) -> Result<(), AppError> {
    let tune_cfg = cfg
        .tune
        .as_ref()
        .ok_or_else(|| AppError::Config("cv requires a tune section".into()))?;
    let family = cfg.family()?;
    let (data, _) = prepare_dataset(cfg)?;
    let (unit_graph, feature_graph) = load_graphs(cfg, data.y.len(), data.x.ncols())?;
    let prob = Problem {
        y: &data.y,
        x: &data.x,
        offsets: data.offsets.as_ref(),
        unit_graph: unit_graph.as_ref(),
        feature_graph: feature_graph.as_ref(),
        family,
    };
    let spec = tune_cfg.to_spec(&data.x, &data.y, cfg.fusion, cfg.seed);
    let result = coordinate_descent_tune(&prob, &spec, &cfg.solver.to_options())?;

    fs::create_dir_all(out_dir)?;
    let mut table = String::from("cycle,param,candidate,fold,score\n");
    for row in &result.trace {
        let score = row.score.map(fmt_full).unwrap_or_default();
        table.push_str(&format!(
            "{},{},{},{},{}\n",
            row.cycle,
            row.param,
            fmt_full(row.candidate),
            row.fold,
            score
        ));
    }
    fs::write(out_dir.join("cv_table.csv"), table)?;
    json_to_file(
        &out_dir.join("selected.json"),
        &CvSelection {
            hyperparams: result.best,
            score: result.best_score,
            evaluations: result.evaluations,
            cycles: result.cycles,
            fold_constraint_satisfied: result.folds.constraint_satisfied,
        },
    )?;
    Ok(())
}

#[derive(Debug, Serialize)]
struct InferMeta {
    noise_sd: f64,
    q_constraint: f64,
    dense_inverse: bool,
    level: f64,
    sandwich: bool,
}

/// `infer`: de-biased inference for a saved fit; emits the inference table.
pub fn cmd_infer(cfg: &RunConfig, fit_dir: &Path, out_dir: &Path) -> Result<(), AppError> {
    let saved = load_fit(fit_dir)?;
    let family = cfg.family()?;
    let (data, _) = prepare_dataset(cfg)?;
    if data.x.ncols() != saved.beta.len() || data.y.len() != saved.alpha.len() {
        return Err(AppError::Data(
            "fit directory does not match the configured data".into(),
        ));
    }
    let (unit_graph, feature_graph) = load_graphs(cfg, data.y.len(), data.x.ncols())?;
    let prob = Problem {
        y: &data.y,
        x: &data.x,
        offsets: data.offsets.as_ref(),
        unit_graph: unit_graph.as_ref(),
        feature_graph: feature_graph.as_ref(),
        family,
    };
    let fit = FitResult {
        alpha_hat: saved.alpha.clone(),
        beta_hat: saved.beta.clone(),
        objective_trace: Vec::new(),
        iterations: saved.meta.iterations,
        converged: saved.meta.converged,
        hyperparams: saved.meta.hyperparams,
        kkt_residual: saved.meta.kkt_residual,
        unit_effects: saved.meta.hyperparams.gamma_n > 0.0,
    };
    let inf_cfg = InferenceConfig {
        q_constraint: cfg.inference.q_constraint,
        level: cfg.inference.level,
        sandwich: cfg.inference.sandwich,
        tail: if cfg.inference.one_sided {
            Tail::Upper
        } else {
            Tail::TwoSided
        },
        ..InferenceConfig::default()
    };
    let result = run_inference(&prob, &fit, &inf_cfg)?;

    fs::create_dir_all(out_dir)?;
    let mut out = String::from("feature,estimate,rate_ratio,se,t,p,ci_low,ci_high,stars\n");
    for row in &result.rows {
        let name = &data.feature_names[row.j];
        if row.degenerate {
            out.push_str(&format!(
                "{name},{},{},,,,,,\n",
                fmt_full(row.b_hat),
                fmt_full(row.rate_ratio())
            ));
        } else {
            out.push_str(&format!(
                "{name},{},{},{},{},{},{},{},{}\n",
                fmt_full(row.b_hat),
                fmt_full(row.rate_ratio()),
                fmt_full(row.se),
                fmt_full(row.t_stat),
                fmt_full(row.p_value),
                fmt_full(row.ci_low),
                fmt_full(row.ci_high),
                row.stars()
            ));
        }
    }
    fs::write(out_dir.join("inference.csv"), out)?;
    json_to_file(
        &out_dir.join("infer_meta.json"),
        &InferMeta {
            noise_sd: result.noise_sd,
            q_constraint: result.q_constraint,
            dense_inverse: result.m.dense_inverse,
            level: inf_cfg.level,
            sandwich: inf_cfg.sandwich,
        },
    )?;
    Ok(())
}

#[derive(Debug, Serialize)]
struct Truth {
    alpha: Vec<f64>,
    beta: Vec<f64>,
    active: Vec<usize>,
    family: String,
    seed: u64,
}

/// Generated scenario: graphs, design, outcomes, and the ground truth.
pub struct Scenario {
    pub unit_graph: Graph,
    pub feature_graph: Graph,
    pub alpha: Array1<f64>,
    pub x: Array2<f64>,
    pub beta: Array1<f64>,
    pub y: Array1<f64>,
    pub offsets: Option<Array1<f64>>,
    pub active: Vec<usize>,
    pub family: Family,
}

/// Build one simulated scenario from the config and a seed.
pub fn build_scenario(cfg: &SimCliConfig, seed: u64, rho: f64) -> Result<Scenario, AppError> {
    let family = cfg.family()?;
    let (unit_graph, labels) = match &cfg.unit_graph {
        UnitGraphModel::LatticeFile { path } => (read_graph(path, None)?, None),
        UnitGraphModel::Sbm { n, blocks } => {
            let (g, l) = sim::sbm_graph(*n, *blocks, sim::derive_seed(seed, 0))?;
            (g, Some(l))
        }
    };
    let n = unit_graph.node_count();
    if n == 0 {
        return Err(AppError::Config("unit graph is empty".into()));
    }
    let alpha = match &cfg.alpha {
        AlphaModel::Icar { tau } => sim::sample_icar(&unit_graph, *tau, sim::derive_seed(seed, 1))?,
        AlphaModel::Iid { var } => {
            let labels = vec![0usize; n];
            sim::sbm_intercepts(&labels, &[0.0], var.sqrt(), sim::derive_seed(seed, 1))?
        }
        AlphaModel::Blocks { means, sd } => {
            let labels = labels.ok_or_else(|| {
                AppError::Config("alpha model 'blocks' requires an sbm unit graph".into())
            })?;
            sim::sbm_intercepts(&labels, means, *sd, sim::derive_seed(seed, 1))?
        }
    };
    let x = sim::gen_design(n, cfg.p, cfg.s, sim::derive_seed(seed, 2))?;
    let beta = sim::gen_beta(cfg.p, cfg.s, rho)?;
    let active: Vec<usize> = (0..cfg.p).filter(|&j| beta[j] != 0.0).collect();
    let offsets = if cfg.baseline != 0.0 {
        Some(Array1::from_elem(n, cfg.baseline))
    } else {
        None
    };
    let y = sim::gen_outcomes(
        family,
        &alpha,
        &x,
        &beta,
        offsets.as_ref(),
        sim::derive_seed(seed, 3),
    )?;

    let mut feature_graph = sim::hub_feature_graph(cfg.p, cfg.s)?;
    if let Some(perturb) = &cfg.perturb {
        if perturb.delete_active_edges {
            feature_graph = sim::perturb_graph(
                &feature_graph,
                &sim::PerturbMode::DeleteActive {
                    active: active.clone(),
                },
                sim::derive_seed(seed, 4),
            )?;
        }
        if let Some(prob) = perturb.add_prob {
            feature_graph = sim::perturb_graph(
                &feature_graph,
                &sim::PerturbMode::AddRandom {
                    prob,
                    intra_component_only: perturb.intra_component_only,
                },
                sim::derive_seed(seed, 5),
            )?;
        }
    }
    Ok(Scenario {
        unit_graph,
        feature_graph,
        alpha,
        x,
        beta,
        y,
        offsets,
        active,
        family,
    })
}

/// `simulate`: write one generated dataset (design, outcomes, both edge
/// lists, and the ground truth).
pub fn cmd_simulate(cfg: &SimCliConfig, out_dir: &Path) -> Result<(), AppError> {
    let sc = build_scenario(cfg, cfg.seed, cfg.rho)?;
    fs::create_dir_all(out_dir)?;
    let names: Vec<String> = (0..sc.x.ncols()).map(|j| format!("feat_{j}")).collect();
    write_design_csv(&out_dir.join("design.csv"), &names, &sc.x, sc.offsets.as_ref())?;
    write_outcome_csv(&out_dir.join("outcome.csv"), &sc.y)?;
    write_graph(&out_dir.join("unit_graph.tsv"), &sc.unit_graph)?;
    write_graph(&out_dir.join("feature_graph.tsv"), &sc.feature_graph)?;
    json_to_file(
        &out_dir.join("truth.json"),
        &Truth {
            alpha: sc.alpha.to_vec(),
            beta: sc.beta.to_vec(),
            active: sc.active.clone(),
            family: sc.family.name().into(),
            seed: cfg.seed,
        },
    )?;
    Ok(())
}

/// Resolve an output directory from the CLI flag or a config field.
pub fn resolve_out_dir(
    flag: Option<&Path>,
    config_value: Option<&PathBuf>,
    default_name: &str,
) -> PathBuf {
    flag.map(Path::to_path_buf)
        .or_else(|| config_value.cloned())
        .unwrap_or_else(|| PathBuf::from(default_name))
}
