//! Acceptance suite: one test per release criterion. Each test prints a
//! PASS line with the measured quantities when it succeeds.

use glmfunk::*;
use glmfunk_cli::config::{
    AlphaModel, ExperimentConfig, PerturbConfig, SimCliConfig, SolverConfig, TuneSection,
    UnitGraphModel,
};
use glmfunk_cli::experiment::{run_experiment, summarize};
use nalgebra::{DMatrix, DVector};
use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random_graph(rng: &mut ChaCha8Rng, n: usize, prob: f64) -> Graph {
    let mut edges = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            if rng.random_range(0.0..1.0) < prob {
                edges.push((i, j, 1.0));
            }
        }
    }
    Graph::new(n, edges).unwrap()
}

fn random_design(rng: &mut ChaCha8Rng, n: usize, p: usize) -> Array2<f64> {
    Array2::from_shape_fn((n, p), |_| rng.random_range(-1.0..1.0))
}

/// Dense oracle for the Gaussian λ = 0 problem: θ̂ = (X̃ᵀX̃ + L̃)⁻¹X̃ᵀy.
fn gaussian_closed_form(
    y: &Array1<f64>,
    x: &Array2<f64>,
    gn: &Graph,
    gp: Option<&Graph>,
    h: &Hyperparams,
) -> Array1<f64> {
    let n = y.len();
    let p = x.ncols();
    let d = n + p;
    let mut xt = DMatrix::<f64>::zeros(n, d);
    for i in 0..n {
        xt[(i, i)] = 1.0;
        for j in 0..p {
            xt[(i, n + j)] = x[[i, j]];
        }
    }
    let mut a = xt.transpose() * &xt;
    let ln = laplacian(gn).matrix.to_dense();
    for i in 0..n {
        for j in 0..n {
            a[(i, j)] += h.gamma_n * ln[[i, j]];
        }
        a[(i, i)] += h.gamma_n * h.delta;
    }
    if let Some(gp) = gp {
        let lp = laplacian(gp).matrix.to_dense();
        for i in 0..p {
            for j in 0..p {
                a[(n + i, n + j)] += h.gamma_p * lp[[i, j]];
            }
        }
    }
    let rhs = xt.transpose() * DVector::from_iterator(n, y.iter().copied());
    let sol = a.lu().solve(&rhs).unwrap();
    Array1::from_iter(sol.iter().copied())
}

#[test]
fn criterion_01_gaussian_closed_form_oracle() {
    let start = Instant::now();
    let mut r = rng(101);
    let mut worst = 0.0f64;
    for trial in 0..20 {
        let n = r.random_range(20..=100);
        let p = r.random_range(1..=30.min(n / 2));
        let x = random_design(&mut r, n, p);
        let y = Array1::from_shape_fn(n, |_| r.random_range(-2.0..2.0));
        let gn = random_graph(&mut r, n, 0.1);
        let gp = random_graph(&mut r, p, 0.3);
        let mut h = Hyperparams::new(
            r.random_range(0.2..2.0),
            r.random_range(0.0..1.5),
            0.0,
            Fusion::L2,
        );
        h.delta = r.random_range(0.05..0.5);
        let prob = Problem {
            y: &y,
            x: &x,
            offsets: None,
            unit_graph: Some(&gn),
            feature_graph: Some(&gp),
            family: Family::gaussian(),
        };
        let opts = FitOptions {
            tol: 1e-15,
            kkt_tol: Some(1e-9),
            backtracking: true,
            max_iter: 400_000,
            ..FitOptions::default()
        };
        let fit = fit_l2(&prob, &h, &opts).unwrap();
        assert!(fit.converged, "trial {trial} did not converge");
        let oracle = gaussian_closed_form(&y, &x, &gn, Some(&gp), &h);
        let theta = fit.packed_theta();
        let scale = 1.0 + oracle.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
        let err = theta
            .iter()
            .zip(oracle.iter())
            .fold(0.0f64, |m, (&a, &b)| m.max((a - b).abs()))
            / scale;
        worst = worst.max(err);
        assert!(err <= 1e-6, "trial {trial}: relative error {err}");
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 10.0, "took {elapsed:?}");
    println!("criterion 01 PASS: worst relative error {worst:.2e} in {elapsed:?}");
}

#[test]
fn criterion_02_mixed_model_equivalence() {
    let mut r = rng(202);
    let mut worst_closed = 0.0f64;
    let mut worst_gls = 0.0f64;
    for trial in 0..10 {
        let n = r.random_range(15..=50);
        let p = r.random_range(1..=5);
        let x = random_design(&mut r, n, p);
        let y = Array1::from_shape_fn(n, |_| r.random_range(-2.0..2.0));
        let gn = random_graph(&mut r, n, 0.2);
        let mut h = Hyperparams::new(r.random_range(0.3..2.0), 0.0, 0.0, Fusion::L2);
        h.delta = r.random_range(0.1..0.6);
        let prob = Problem {
            y: &y,
            x: &x,
            offsets: None,
            unit_graph: Some(&gn),
            feature_graph: None,
            family: Family::gaussian(),
        };
        let opts = FitOptions {
            tol: 1e-15,
            kkt_tol: Some(1e-9),
            backtracking: true,
            max_iter: 400_000,
            ..FitOptions::default()
        };
        let fit = fit_l2(&prob, &h, &opts).unwrap();
        assert!(fit.converged);

        // penalized closed form
        let oracle = gaussian_closed_form(&y, &x, &gn, None, &h);
        let theta = fit.packed_theta();
        let scale = 1.0 + oracle.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
        let err = theta
            .iter()
            .zip(oracle.iter())
            .fold(0.0f64, |m, (&a, &b)| m.max((a - b).abs()))
            / scale;
        worst_closed = worst_closed.max(err);
        assert!(err <= 1e-6, "trial {trial}: closed-form error {err}");

        // marginal GLS with phi = 1/gamma_n, sigma^2 = 1:
        // beta = argmin (y-Xb)' [phi (L+dI)^{-1} + I]^{-1} (y-Xb)
        let ln = laplacian(&gn).matrix.to_dense();
        let mut k = DMatrix::<f64>::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                k[(i, j)] = ln[[i, j]];
            }
            k[(i, i)] += h.delta;
        }
        let phi = 1.0 / h.gamma_n;
        let omega = k.clone().try_inverse().unwrap() * phi + DMatrix::<f64>::identity(n, n);
        let omega_inv = omega.try_inverse().unwrap();
        let mut xm = DMatrix::<f64>::zeros(n, p);
        for i in 0..n {
            for j in 0..p {
                xm[(i, j)] = x[[i, j]];
            }
        }
        let yv = DVector::from_iterator(n, y.iter().copied());
        let blk = (xm.transpose() * &omega_inv * &xm).try_inverse().unwrap();
        let beta_gls = blk * (xm.transpose() * &omega_inv * yv);
        for j in 0..p {
            let d = (fit.beta_hat[j] - beta_gls[j]).abs();
            worst_gls = worst_gls.max(d);
            assert!(d <= 1e-4, "trial {trial}: GLS deviation {d} at coefficient {j}");
        }
    }
    println!(
        "criterion 02 PASS: closed-form error {worst_closed:.2e}, GLS deviation {worst_gls:.2e}"
    );
}

#[test]
fn criterion_03_kkt_certification() {
    let mut r = rng(303);
    let mut checked = 0;
    while checked < 50 {
        let family = match checked % 3 {
            0 => Family::gaussian(),
            1 => Family::Binomial,
            _ => Family::Poisson,
        };
        let use_l1 = checked % 2 == 0;
        let n = r.random_range(15..=50);
        let p = r.random_range(2..=10);
        let x = random_design(&mut r, n, p);
        let gn = random_graph(&mut r, n, 0.2);
        let gp = random_graph(&mut r, p, 0.4);
        let beta_true = Array1::from_shape_fn(p, |_| r.random_range(-0.5..0.5));
        let eta = x.dot(&beta_true);
        let y = match family {
            Family::Gaussian { .. } => {
                Array1::from_shape_fn(n, |i| eta[i] + r.random_range(-0.5..0.5))
            }
            Family::Binomial => {
                Array1::from_shape_fn(n, |i| {
                    if r.random_range(0.0..1.0) < glmfunk::family::expit(eta[i]) {
                        1.0
                    } else {
                        0.0
                    }
                })
            }
            Family::Poisson => Array1::from_shape_fn(n, |i| {
                (eta[i].exp() + r.random_range(0.0..2.0)).floor()
            }),
        };
        let gamma_n = if checked % 5 == 0 {
            0.0
        } else {
            r.random_range(0.2..2.0)
        };
        let gamma_p = if checked % 7 == 0 {
            0.0
        } else {
            r.random_range(0.1..1.5)
        };
        let lambda = r.random_range(0.0..1.5);
        let fusion = if use_l1 { Fusion::L1 } else { Fusion::L2 };
        let mut h = Hyperparams::new(gamma_n, gamma_p, lambda, fusion);
        h.delta = 0.2;
        h.q = 0.01;
        let prob = Problem {
            y: &y,
            x: &x,
            offsets: None,
            unit_graph: Some(&gn),
            feature_graph: Some(&gp),
            family,
        };
        let eps = 1e-3 * (1.0 + h.lambda);
        let opts = FitOptions {
            tol: 1e-12,
            backtracking: true,
            accelerated: true,
            max_iter: 400_000,
            ..FitOptions::default()
        };
        let fit = match fusion {
            Fusion::L2 => fit_l2(&prob, &h, &opts).unwrap(),
            Fusion::L1 => fit_l1(&prob, &h, &opts).unwrap(),
        };
        assert!(fit.converged, "config {checked} did not converge");
        let report = kkt_check(&fit.alpha_hat, &fit.beta_hat, &prob, &h, eps).unwrap();
        assert!(
            report.satisfied,
            "config {checked} ({family:?}, {fusion:?}): KKT violated: {report:?}"
        );
        checked += 1;
    }
    println!("criterion 03 PASS: 50/50 random configurations KKT-certified");
}

#[test]
fn criterion_04_smoothing_bound() {
    let mut r = rng(404);
    let mut done = 0;
    let mut worst_ratio = 0.0f64;
    while done < 1000 {
        let p = r.random_range(2..=12);
        let prob_edge = r.random_range(0.2..0.8);
        let g = random_graph(&mut r, p, prob_edge);
        if g.edge_count() == 0 {
            continue;
        }
        let j = incidence(&g);
        let beta = Array1::from_shape_fn(p, |_| r.random_range(-3.0..3.0));
        let q = 10f64.powf(r.random_range(-4.0..-0.3));
        let (fq, _) = smoothed_fusion(&beta, &j, q);
        let exact: f64 = j.matrix.matvec(beta.view()).iter().map(|v| v.abs()).sum();
        let gap = (exact - fq).abs();
        let bound = q * g.edge_count() as f64 / 2.0;
        assert!(gap <= bound + 1e-12, "gap {gap} exceeds bound {bound}");
        worst_ratio = worst_ratio.max(gap / bound.max(1e-300));
        done += 1;
    }
    println!("criterion 04 PASS: 1000 pairs within q|E|/2 (max gap ratio {worst_ratio:.3})");
}

#[test]
fn criterion_05_cross_solver_agreement() {
    let mut r = rng(505);
    let mut worst = 0.0f64;
    for trial in 0..10 {
        let n = r.random_range(20..=40);
        let p = r.random_range(2..=6);
        let x = random_design(&mut r, n, p);
        let gn = random_graph(&mut r, n, 0.25);
        let beta_true = Array1::from_shape_fn(p, |_| r.random_range(-0.4..0.4));
        let eta = x.dot(&beta_true);
        let y = Array1::from_shape_fn(n, |i| (eta[i].exp() + r.random_range(0.0..1.5)).floor());
        let mut h2 = Hyperparams::new(r.random_range(0.5..2.0), 0.0, r.random_range(0.0..0.2), Fusion::L2);
        h2.delta = 0.5;
        let mut h1 = h2;
        h1.fusion = Fusion::L1;
        let prob = Problem {
            y: &y,
            x: &x,
            offsets: None,
            unit_graph: Some(&gn),
            feature_graph: None,
            family: Family::Poisson,
        };
        let opts = FitOptions {
            tol: 1e-12,
            kkt_tol: Some(1e-8),
            backtracking: true,
            accelerated: true,
            max_iter: 400_000,
            ..FitOptions::default()
        };
        let f2 = fit_l2(&prob, &h2, &opts).unwrap();
        let f1 = fit_l1(&prob, &h1, &opts).unwrap();
        assert!(f2.converged && f1.converged, "trial {trial} unconverged");
        let d = f1
            .packed_theta()
            .iter()
            .zip(f2.packed_theta().iter())
            .fold(0.0f64, |m, (&a, &b)| m.max((a - b).abs()));
        worst = worst.max(d);
        assert!(d <= 1e-4, "trial {trial}: solvers disagree by {d}");
    }
    println!("criterion 05 PASS: max cross-solver disagreement {worst:.2e}");
}

#[test]
fn criterion_06_gradient_and_curvature_checks() {
    let mut r = rng(606);
    for family in [Family::gaussian(), Family::Binomial, Family::Poisson] {
        for _ in 0..100 {
            let n = 3;
            let y = match family {
                Family::Gaussian { .. } => {
                    Array1::from_shape_fn(n, |_| r.random_range(-2.0..2.0))
                }
                Family::Binomial => {
                    Array1::from_shape_fn(n, |_| f64::from(r.random_range(0..2u8)))
                }
                Family::Poisson => {
                    Array1::from_shape_fn(n, |_| f64::from(r.random_range(0..8u8)))
                }
            };
            let eta = Array1::from_shape_fn(n, |_| r.random_range(-2.0..2.0));
            let grad = family.gradient_eta(&y, &eta).unwrap();
            let w = family.curvature_weights(&eta);
            let h = 1e-6;
            for i in 0..n {
                let mut up = eta.clone();
                up[i] += h;
                let mut dn = eta.clone();
                dn[i] -= h;
                let fd_g = (family.loss(&y, &up).unwrap() - family.loss(&y, &dn).unwrap())
                    / (2.0 * h);
                assert!(
                    (grad[i] - fd_g).abs() / grad[i].abs().max(1e-2) < 1e-5,
                    "{family:?} gradient mismatch: {} vs {fd_g}",
                    grad[i]
                );
                let fd_w = (family.inverse_link(eta[i] + h) - family.inverse_link(eta[i] - h))
                    / (2.0 * h);
                assert!(
                    (w[i] - fd_w).abs() / w[i].abs().max(1e-2) < 1e-5,
                    "{family:?} curvature mismatch: {} vs {fd_w}",
                    w[i]
                );
            }
        }
    }
    println!("criterion 06 PASS: 100 finite-difference points per family");
}

#[test]
fn criterion_07_harmonic_extension_exactness() {
    let mut r = rng(707);
    let mut worst = 0.0f64;
    for trial in 0..20 {
        let n = r.random_range(5..=40);
        let prob_edge = r.random_range(0.15..0.6);
        let g = random_graph(&mut r, n, prob_edge);
        let n_train = r.random_range(1..n);
        let mut nodes: Vec<usize> = (0..n).collect();
        for i in 0..n {
            let j = r.random_range(0..n);
            nodes.swap(i, j);
        }
        let mut train: Vec<usize> = nodes[..n_train].to_vec();
        train.sort_unstable();
        let alpha: Vec<f64> = (0..n_train).map(|_| r.random_range(-1.0..1.0)).collect();
        let ext = harmonic_extend(&g, &train, &alpha).unwrap();

        // residual of the optimality system L22 x + L21 a = 0
        let mut value = vec![0.0f64; n];
        let mut is_train = vec![false; n];
        for (&t, &a) in train.iter().zip(&alpha) {
            value[t] = a;
            is_train[t] = true;
        }
        for (&t, &v) in ext.test_nodes.iter().zip(&ext.values) {
            value[t] = v;
        }
        let lap = laplacian(&g);
        let resid = lap.matrix.matvec(Array1::from_vec(value.clone()).view());
        for &t in &ext.test_nodes {
            worst = worst.max(resid[t].abs());
            assert!(
                resid[t].abs() <= 1e-8,
                "trial {trial}: residual {} at node {t}",
                resid[t]
            );
        }
    }
    println!("criterion 07 PASS: max harmonic residual {worst:.2e}");
}

#[test]
fn criterion_08_inference_coverage() {
    let start = Instant::now();
    let n = 300;
    let p = 10;
    let reps = 500;
    let normal = Normal::new(0.0, 1.0).unwrap();
    let sigma_true = 1.4;
    let mut covered = vec![0usize; p];
    let mut rejections = 0usize;
    let mut tests = 0usize;
    for rep in 0..reps {
        let seed = derive_seed(808, rep);
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let mut x = Array2::from_shape_fn((n, p), |_| normal.sample(&mut r));
        standardize_columns(&mut x);
        let y = Array1::from_shape_fn(n, |_| sigma_true * normal.sample(&mut r));
        let prob = Problem {
            y: &y,
            x: &x,
            offsets: None,
            unit_graph: None,
            feature_graph: None,
            family: Family::gaussian(),
        };
        let lam = (n as f64) * 0.5 * (2.0 * (p as f64).ln() / n as f64).sqrt();
        let h = Hyperparams::new(0.0, 0.0, lam, Fusion::L2);
        let opts = FitOptions {
            tol: 1e-11,
            backtracking: true,
            max_iter: 100_000,
            ..FitOptions::default()
        };
        let fit = fit_l2(&prob, &h, &opts).unwrap();
        let inf = run_inference(&prob, &fit, &InferenceConfig::default()).unwrap();
        for row in &inf.rows {
            tests += 1;
            if row.ci_low <= 0.0 && 0.0 <= row.ci_high {
                covered[row.j] += 1;
            }
            if row.p_value < 0.05 {
                rejections += 1;
            }
        }
    }
    let type1 = rejections as f64 / tests as f64;
    let mut cov_min = 1.0f64;
    let mut cov_max = 0.0f64;
    for &c in &covered {
        let rate = c as f64 / reps as f64;
        cov_min = cov_min.min(rate);
        cov_max = cov_max.max(rate);
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 600.0, "took {elapsed:?}");
    assert!(
        (0.92..=0.98).contains(&cov_min) && (0.92..=0.98).contains(&cov_max),
        "per-coefficient coverage range [{cov_min:.3}, {cov_max:.3}] outside [0.92, 0.98]"
    );
    assert!(
        (0.02..=0.09).contains(&type1),
        "type I error {type1:.4} outside [0.02, 0.09]"
    );
    println!(
        "criterion 08 PASS: coverage in [{cov_min:.3}, {cov_max:.3}], type I {type1:.4}, {elapsed:?}"
    );
}

fn write_lattice(dir: &std::path::Path, rows: usize, cols: usize) -> PathBuf {
    let idx = |r: usize, c: usize| r * cols + c;
    let mut s = String::new();
    for r in 0..rows {
        for c in 0..cols {
            if c + 1 < cols {
                s.push_str(&format!("{}\t{}\t1\n", idx(r, c), idx(r, c + 1)));
            }
            if r + 1 < rows {
                s.push_str(&format!("{}\t{}\t1\n", idx(r, c), idx(r + 1, c)));
            }
        }
    }
    let path = dir.join("lattice_12x17.tsv");
    let mut f = std::fs::File::create(&path).unwrap();
    f.write_all(s.as_bytes()).unwrap();
    path
}

fn desk_scale_config(lattice: PathBuf, alpha: AlphaModel, perturb: Option<PerturbConfig>) -> ExperimentConfig {
    ExperimentConfig {
        sim: SimCliConfig {
            p: 150,
            s: 20,
            rho: 0.4,
            unit_graph: UnitGraphModel::LatticeFile { path: lattice },
            alpha,
            family: "poisson".into(),
            baseline: -3.5,
            seed: 0,
            perturb,
            out_dir: None,
        },
        methods: vec!["glm-funk-l1".into(), "glm-funk-l2".into(), "lasso".into()],
        replicates: 50,
        rho_values: None,
        train_fraction: 0.5,
        tune: TuneSection {
            lambda_grid: Some(vec![0.5, 2.0, 8.0]),
            gamma_n_grid: Some(vec![1.0, 10.0]),
            gamma_p_grid: Some(vec![0.5, 2.0]),
            k: 4,
            max_cycles: 2,
            score: Score::NegLogLik,
            adjacency_constraint: false,
            delta: 0.01,
            q: 0.005,
        },
        solver_cv: SolverConfig {
            step_size: 1e-3,
            max_iter: 1500,
            tol: 1e-5,
            backtracking: true,
        },
        solver_final: SolverConfig {
            step_size: 1e-3,
            max_iter: 60_000,
            tol: 1e-6,
            backtracking: true,
        },
        level: 0.95,
        sandwich: true,
        out_dir: None,
    }
}

fn metric(
    summary: &[(String, f64, String, f64, f64, usize)],
    method: &str,
    rho: f64,
    name: &str,
) -> f64 {
    summary
        .iter()
        .find(|(m, r, met, _, _, _)| m == method && *r == rho && met == name)
        .map(|row| row.3)
        .unwrap()
}

#[test]
fn criterion_09_desk_scale_power_ordering() {
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let lattice = write_lattice(dir.path(), 12, 17);
    let mut cfg = desk_scale_config(lattice, AlphaModel::Icar { tau: 0.4 }, None);
    cfg.rho_values = Some(vec![0.2, 0.4]);
    let rows = run_experiment(&cfg, 12345, Some(2)).unwrap();
    let failed = rows.iter().filter(|r| r.status != "ok").count();
    assert!(
        failed * 10 <= rows.len(),
        "{failed}/{} cells failed",
        rows.len()
    );
    let summary = summarize(&rows);
    let p_l1 = metric(&summary, "glm-funk-l1", 0.4, "power");
    let p_l2 = metric(&summary, "glm-funk-l2", 0.4, "power");
    let p_lasso = metric(&summary, "lasso", 0.4, "power");
    assert!(
        p_l1 >= p_l2 && p_l2 >= p_lasso,
        "power ordering violated: l1 {p_l1:.3}, l2 {p_l2:.3}, lasso {p_lasso:.3}"
    );
    for method in ["glm-funk-l1", "glm-funk-l2", "lasso"] {
        for rho in [0.2, 0.4] {
            let t1 = metric(&summary, method, rho, "type1");
            assert!(
                t1 <= 0.10,
                "{method} type I error {t1:.3} exceeds 0.10 at rho {rho}"
            );
        }
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 3600.0, "took {elapsed:?}");
    println!(
        "criterion 09 PASS: power l1 {p_l1:.3} >= l2 {p_l2:.3} >= lasso {p_lasso:.3}, \
         all type I <= 0.10, {elapsed:?}"
    );
}

#[test]
fn criterion_10_partially_informative_robustness() {
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let lattice = write_lattice(dir.path(), 12, 17);
    let mut cfg = desk_scale_config(
        lattice,
        AlphaModel::Iid { var: 0.24 },
        Some(PerturbConfig {
            add_prob: Some(0.002),
            intra_component_only: false,
            delete_active_edges: false,
        }),
    );
    cfg.methods = vec!["glm-funk-l1".into(), "lasso".into()];
    let rows = run_experiment(&cfg, 54321, Some(2)).unwrap();
    let failed = rows.iter().filter(|r| r.status != "ok").count();
    assert!(failed * 10 <= rows.len());
    let summary = summarize(&rows);
    let p_l1 = metric(&summary, "glm-funk-l1", 0.4, "power");
    let p_lasso = metric(&summary, "lasso", 0.4, "power");
    assert!(
        p_l1 >= p_lasso,
        "robustness ordering violated: l1 {p_l1:.3} < lasso {p_lasso:.3}"
    );
    println!(
        "criterion 10 PASS: perturbed-network power l1 {p_l1:.3} >= lasso {p_lasso:.3}, {:?}",
        start.elapsed()
    );
}

#[test]
fn criterion_11_cli_determinism() {
    let bin = env!("CARGO_BIN_EXE_glmfunk");
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();

    let sim_cfg = root.join("sim.json");
    std::fs::write(
        &sim_cfg,
        r#"{
  "p": 12, "s": 4, "rho": 0.5,
  "unit_graph": { "sbm": { "n": 40, "blocks": 2 } },
  "alpha": { "icar": { "tau": 0.4 } },
  "family": "poisson",
  "seed": 9
}"#,
    )
    .unwrap();

    let run = |args: &[&str]| {
        let out = std::process::Command::new(bin)
            .args(args)
            .current_dir(root)
            .output()
            .unwrap();
        assert!(
            out.status.success(),
            "command {args:?} failed: {}",
            String::from_utf8_lossy(&out.stderr)
        );
    };
    let dir_bytes = |name: &str| {
        let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(root.join(name))
            .unwrap()
            .map(|e| {
                let e = e.unwrap();
                (
                    e.file_name().to_string_lossy().into_owned(),
                    std::fs::read(e.path()).unwrap(),
                )
            })
            .collect();
        files.sort();
        files
    };

    run(&["simulate", "--config", "sim.json", "--seed", "7", "--out-dir", "data_a"]);
    run(&["simulate", "--config", "sim.json", "--seed", "7", "--out-dir", "data_b"]);
    assert_eq!(dir_bytes("data_a"), dir_bytes("data_b"), "simulate not deterministic");

    let fit_cfg = root.join("fit.json");
    std::fs::write(
        &fit_cfg,
        r#"{
  "family": "poisson",
  "fusion": "l2",
  "data": { "design": "data_a/design.csv", "outcome": "data_a/outcome.csv",
            "unit_graph": "data_a/unit_graph.tsv", "feature_graph": "data_a/feature_graph.tsv" },
  "hyperparams": { "gamma_n": 1.0, "gamma_p": 0.3, "lambda": 0.4, "fusion": "l2" },
  "solver": { "max_iter": 10000, "tol": 1e-7 },
  "seed": 5
}"#,
    )
    .unwrap();
    run(&["fit", "--config", "fit.json", "--out-dir", "fit_a"]);
    run(&["fit", "--config", "fit.json", "--out-dir", "fit_b"]);
    assert_eq!(dir_bytes("fit_a"), dir_bytes("fit_b"), "fit not deterministic");

    run(&["infer", "--config", "fit.json", "--fit-dir", "fit_a", "--out-dir", "inf_a"]);
    run(&["infer", "--config", "fit.json", "--fit-dir", "fit_a", "--out-dir", "inf_b"]);
    assert_eq!(dir_bytes("inf_a"), dir_bytes("inf_b"), "infer not deterministic");

    let cv_cfg = root.join("cv.json");
    std::fs::write(
        &cv_cfg,
        r#"{
  "family": "poisson",
  "fusion": "l2",
  "data": { "design": "data_a/design.csv", "outcome": "data_a/outcome.csv",
            "unit_graph": "data_a/unit_graph.tsv", "feature_graph": "data_a/feature_graph.tsv" },
  "tune": { "lambda_grid": [0.2, 1.0], "gamma_n_grid": [1.0], "gamma_p_grid": [0.0, 0.5],
            "k": 3, "max_cycles": 2, "score": "neg_log_lik", "adjacency_constraint": true },
  "solver": { "max_iter": 3000, "tol": 1e-6 },
  "seed": 3
}"#,
    )
    .unwrap();
    run(&["cv", "--config", "cv.json", "--out-dir", "cv_a"]);
    run(&["cv", "--config", "cv.json", "--out-dir", "cv_b"]);
    assert_eq!(dir_bytes("cv_a"), dir_bytes("cv_b"), "cv not deterministic");

    run(&[
        "predict", "--fit-dir", "fit_a", "--design", "data_a/design.csv",
        "--full-graph", "data_a/unit_graph.tsv", "--out-dir", "pred_a",
    ]);
    run(&[
        "predict", "--fit-dir", "fit_a", "--design", "data_a/design.csv",
        "--full-graph", "data_a/unit_graph.tsv", "--out-dir", "pred_b",
    ]);
    assert_eq!(dir_bytes("pred_a"), dir_bytes("pred_b"), "predict not deterministic");

    let exp_cfg = root.join("exp.json");
    std::fs::write(
        &exp_cfg,
        r#"{
  "sim": {
    "p": 12, "s": 4, "rho": 0.4,
    "unit_graph": { "sbm": { "n": 40, "blocks": 2 } },
    "alpha": { "icar": { "tau": 0.4 } },
    "family": "poisson",
    "baseline": -1.0,
    "seed": 9
  },
  "methods": ["glm-funk-l2", "lasso"],
  "replicates": 2,
  "tune": { "lambda_grid": [0.3, 1.0], "gamma_n_grid": [1.0], "gamma_p_grid": [0.3],
            "k": 3, "max_cycles": 1, "score": "neg_log_lik" },
  "solver_cv": { "max_iter": 800, "tol": 1e-5 },
  "solver_final": { "max_iter": 8000, "tol": 1e-6 }
}"#,
    )
    .unwrap();
    run(&["experiment", "--config", "exp.json", "--seed", "2", "--threads", "2", "--out-dir", "exp_a"]);
    run(&["experiment", "--config", "exp.json", "--seed", "2", "--threads", "2", "--out-dir", "exp_b"]);
    assert_eq!(dir_bytes("exp_a"), dir_bytes("exp_b"), "experiment not deterministic");

    println!("criterion 11 PASS: simulate/fit/infer/cv/predict/experiment byte-identical across runs");
}
