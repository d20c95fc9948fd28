//! Acceptance suite: one test per release criterion, each printing a
//! PASS/FAIL line (run with `-- --nocapture` to see them). Criteria cover
//! the closed-form fairness gap, the trained-run fairness ordering,
//! clustering convergence, the single-cluster reduction, gradient and
//! EM-update numerics, surrogate/analytic consistency, the cluster-count
//! sweep, and byte-level determinism of the CLI.

use std::process::Command;
use std::sync::{Mutex, MutexGuard, PoisonError};
use std::time::Instant;

/// Criteria with wall-clock budgets must not compete for the worker pool,
/// so the whole suite runs one criterion at a time.
static SUITE: Mutex<()> = Mutex::new(());

fn exclusive() -> MutexGuard<'static, ()> {
    SUITE.lock().unwrap_or_else(PoisonError::into_inner)
}

use focus_fl::check::{gradient_max_rel_error, smoothness_slack, strong_convexity_slack};
use focus_fl::config::DEFAULT_RIDGE_LAMBDA;
use focus_fl::data_synth::{gen_classification_dataset, gen_regression_dataset, generate_scenario};
use focus_fl::fairness::{
    closed_form_fairness, fairness_report, theorem3_bounds, ExcessMethod, Predictor, SURROGATE_BUDGET,
};
use focus_fl::fl_engine::{run_fedavg, write_round_log_csv, InitStrategy, ORACLE_INIT_DELTA};
use focus_fl::focus_em::{e_step, run_focus, SoftLabelMatrix};
use focus_fl::models::{ModelKind, ParamVector};
use focus_fl::rng::{standard_normal, Purpose, Streams};
use focus_fl::{ScenarioConfig, ScenarioKind};
use ndarray::{Array1, Array2};
use rand::Rng;

fn pass(id: u32, name: &str, detail: String) {
    println!("ACCEPTANCE {id} {name}: PASS ({detail})");
}

fn three_cluster_cfg(seed: u64) -> ScenarioConfig {
    ScenarioConfig {
        num_clusters: 3,
        scenario_kind: ScenarioKind::MultiCluster,
        seed,
        ..ScenarioConfig::default()
    }
}

/// Criterion 1: the fairness gap at the analytic converged weights matches
/// the closed-form outlier bounds with zero sampling, in under a second.
#[test]
fn criterion_1_closed_form_fairness_gap() {
    let _suite = exclusive();
    let started = Instant::now();
    let cfg = ScenarioConfig::default();
    let scenario = generate_scenario(&cfg).unwrap();
    let bounds = theorem3_bounds(cfg.num_agents, cfg.intra_radius, cfg.inter_distance, cfg.feature_std).unwrap();
    let closed = closed_form_fairness(&scenario, ModelKind::LinearRegression).unwrap();

    assert!(closed.faa_focus <= 1e-4, "faa_focus {} > 1e-4", closed.faa_focus);
    assert!(
        closed.faa_focus <= bounds.focus_upper,
        "faa_focus {} > bound {}",
        closed.faa_focus,
        bounds.focus_upper
    );
    assert!(closed.faa_fedavg >= 0.7981, "faa_fedavg {} < 0.7981", closed.faa_fedavg);
    assert!(
        closed.faa_fedavg >= bounds.fedavg_lower,
        "faa_fedavg {} < bound {}",
        closed.faa_fedavg,
        bounds.fedavg_lower
    );
    let elapsed = started.elapsed().as_secs_f64();
    assert!(elapsed < 1.0, "took {elapsed:.2}s, budget 1s");
    pass(
        1,
        "closed-form fairness gap",
        format!(
            "faa_focus {:.3e} <= {:.3e}, faa_fedavg {:.6} >= {:.6}, {:.3}s",
            closed.faa_focus, bounds.focus_upper, closed.faa_fedavg, bounds.fedavg_lower, elapsed
        ),
    );
}

/// Criterion 2: trained runs reproduce the qualitative synthetic-table
/// ordering across five seeds inside the stated loss/fairness bands.
#[test]
fn criterion_2_trained_fairness_ordering() {
    let _suite = exclusive();
    let mut detail = String::new();
    for seed in 1..=5u64 {
        let cfg = ScenarioConfig {
            seed,
            ..ScenarioConfig::default()
        };
        let scenario = generate_scenario(&cfg).unwrap();

        let started = Instant::now();
        let focus = run_focus(&scenario, &cfg, InitStrategy::LocalFit, 2).unwrap();
        let focus_report = fairness_report(
            Predictor::Ensemble {
                models: &focus.models,
                pi: &focus.pi,
            },
            &scenario,
            ModelKind::LinearRegression,
            ExcessMethod::Surrogate,
            SURROGATE_BUDGET,
        )
        .unwrap();
        let focus_secs = started.elapsed().as_secs_f64();

        let started = Instant::now();
        let fedavg = run_fedavg(&scenario, &cfg).unwrap();
        let fedavg_report = fairness_report(
            Predictor::Global(&fedavg.model),
            &scenario,
            ModelKind::LinearRegression,
            ExcessMethod::Surrogate,
            SURROGATE_BUDGET,
        )
        .unwrap();
        let fedavg_secs = started.elapsed().as_secs_f64();

        let avg = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let focus_loss = avg(&focus_report.per_agent_loss);
        let fedavg_loss = avg(&fedavg_report.per_agent_loss);

        assert!(focus_report.faa <= 0.01, "seed {seed}: focus faa {}", focus_report.faa);
        assert!(
            (focus_loss - 0.01).abs() <= 0.02,
            "seed {seed}: focus avg loss {focus_loss}"
        );
        assert!(fedavg_report.faa >= 0.7, "seed {seed}: fedavg faa {}", fedavg_report.faa);
        assert!(fedavg_loss >= 0.09, "seed {seed}: fedavg avg loss {fedavg_loss}");
        assert!(focus_secs < 10.0 && fedavg_secs < 10.0, "seed {seed}: {focus_secs:.1}s/{fedavg_secs:.1}s");
        detail = format!(
            "seed {seed}: focus faa {:.1e} loss {:.4}; fedavg faa {:.3} loss {:.3}",
            focus_report.faa, focus_loss, fedavg_report.faa, fedavg_loss
        );
    }
    pass(2, "trained fairness ordering (5 seeds)", detail);
}

/// Criterion 3: with oracle-perturbed initialization, soft labels converge
/// to the correct clusters and model weights contract toward the centers on
/// both reference scenarios.
#[test]
fn criterion_3_convergence_properties() {
    let _suite = exclusive();
    let started = Instant::now();
    let mut detail = String::new();
    for (name, cfg) in [
        ("outlier", ScenarioConfig::default()),
        ("3-cluster", three_cluster_cfg(1)),
    ] {
        let scenario = generate_scenario(&cfg).unwrap();
        let run = run_focus(&scenario, &cfg, InitStrategy::OraclePerturbed, cfg.num_clusters).unwrap();
        let min_pi = &run.history.min_correct_pi;
        let final_pi = *min_pi.last().unwrap();
        assert!(final_pi >= 0.99, "{name}: final min correct pi {final_pi}");
        for t in 1..min_pi.len() - 1 {
            assert!(
                min_pi[t + 1] >= min_pi[t] - 1e-6,
                "{name}: pi trend broke at round {t}: {} -> {}",
                min_pi[t],
                min_pi[t + 1]
            );
        }
        let first = &run.history.model_center_distances[0];
        let last = run.history.model_center_distances.last().unwrap();
        for (m, (&d0, &dt)) in first.iter().zip(last.iter()).enumerate() {
            assert!((d0 - ORACLE_INIT_DELTA).abs() < 1e-9);
            let bound = 0.1 * d0 + 2.0 * cfg.intra_radius;
            assert!(dt <= bound, "{name}: model {m} distance {dt} > {bound}");
        }
        detail += &format!("{name}: min pi {final_pi:.4}, max center dist {:.4}; ", last.iter().cloned().fold(0.0, f64::max));
    }
    let elapsed = started.elapsed().as_secs_f64();
    assert!(elapsed < 30.0, "took {elapsed:.1}s, budget 30s");
    pass(3, "convergence with oracle init", format!("{detail}{elapsed:.1}s"));
}

/// Criterion 4: with one cluster and equal sample counts, the EM algorithm's
/// round logs are byte-identical to FedAvg's.
#[test]
fn criterion_4_single_cluster_reduction() {
    let _suite = exclusive();
    for seed in 1..=3u64 {
        let cfg = ScenarioConfig {
            seed,
            ..ScenarioConfig::default()
        };
        let scenario = generate_scenario(&cfg).unwrap();
        let focus = run_focus(&scenario, &cfg, InitStrategy::LocalFit, 1).unwrap();
        let fedavg = run_fedavg(&scenario, &cfg).unwrap();
        let mut focus_csv = Vec::new();
        write_round_log_csv(&focus.logs, &mut focus_csv).unwrap();
        let mut fedavg_csv = Vec::new();
        write_round_log_csv(&fedavg.logs, &mut fedavg_csv).unwrap();
        assert_eq!(focus_csv, fedavg_csv, "seed {seed}: round logs differ");
        assert_eq!(focus.models.weights[0], fedavg.model, "seed {seed}: final models differ");
    }
    pass(4, "single-cluster reduction is bit-exact", "3 seeds, byte-identical round CSVs".into());
}

/// Criterion 5: numerics suite. Analytic gradients match central finite
/// differences; the ridge-logistic objective satisfies its strong-convexity
/// and smoothness witnesses; the EM update keeps rows stochastic.
#[test]
fn criterion_5_numerics_suite() {
    let _suite = exclusive();
    // Gradient check: 100 random cases per model kind.
    let streams = Streams::new(501);
    let mut worst = (0.0f64, 0.0f64);
    for case in 0..100u64 {
        let mut rng = streams.stream(Purpose::TrainData, case);
        let d = 12;
        let mu = Array1::from_vec((0..d).map(|_| standard_normal(&mut rng)).collect());
        let reg = gen_regression_dataset(&mu, 50, 1.0, 0.25, &mut rng);
        let cls = gen_classification_dataset(&mu, 50, 1.0, &mut rng);
        let w = ParamVector::from_vec((0..d).map(|_| standard_normal(&mut rng)).collect());
        let err_reg = gradient_max_rel_error(ModelKind::LinearRegression, &w, &reg).unwrap();
        let err_cls = gradient_max_rel_error(
            ModelKind::RidgeLogistic {
                ridge_lambda: DEFAULT_RIDGE_LAMBDA,
            },
            &w,
            &cls,
        )
        .unwrap();
        assert!(err_reg <= 1e-5, "case {case}: linear gradient rel err {err_reg}");
        assert!(err_cls <= 1e-5, "case {case}: logistic gradient rel err {err_cls}");
        worst = (worst.0.max(err_reg), worst.1.max(err_cls));
    }

    // Convexity and smoothness witnesses: 100 random pairs.
    let model = ModelKind::RidgeLogistic {
        ridge_lambda: DEFAULT_RIDGE_LAMBDA,
    };
    for case in 0..100u64 {
        let mut rng = streams.stream(Purpose::EvalData, case);
        let d = 8;
        let mu = Array1::from_vec((0..d).map(|_| standard_normal(&mut rng)).collect());
        let data = gen_classification_dataset(&mu, 80, 1.0, &mut rng);
        let w1 = ParamVector::from_vec((0..d).map(|_| standard_normal(&mut rng)).collect());
        let w2 = ParamVector::from_vec((0..d).map(|_| standard_normal(&mut rng)).collect());
        let convexity = strong_convexity_slack(model, DEFAULT_RIDGE_LAMBDA, &w1, &w2, &data).unwrap();
        assert!(convexity >= -1e-12, "case {case}: strong convexity slack {convexity}");
        let l_hat = focus_fl::models::smoothness_upper_bound(model, &data);
        let smooth = smoothness_slack(model, l_hat, &w1, &w2, &data).unwrap();
        assert!(smooth >= -1e-12, "case {case}: smoothness slack {smooth}");
    }

    // Soft-label update: 10^4 random rows stay row-stochastic within 1e-9.
    let mut rng = streams.stream(Purpose::Init, 0);
    let mut worst_row_error = 0.0f64;
    for _ in 0..10_000 {
        let m = rng.gen_range(2..6);
        let raw: Vec<f64> = (0..m).map(|_| rng.gen_range(1e-9..1.0)).collect();
        let total: f64 = raw.iter().sum();
        let row: Vec<f64> = raw.into_iter().map(|x| x / total).collect();
        let losses: Vec<f64> = (0..m).map(|_| rng.gen_range(-100.0..800.0)).collect();
        let pi = SoftLabelMatrix::from_rows(vec![row]).unwrap();
        let next = e_step(&pi, &Array2::from_shape_vec((1, m), losses).unwrap());
        let sum: f64 = next.row(0).iter().sum();
        assert!(next.row(0).iter().all(|&p| (0.0..=1.0).contains(&p)));
        worst_row_error = worst_row_error.max((sum - 1.0).abs());
    }
    assert!(worst_row_error <= 1e-9, "worst row-sum error {worst_row_error}");

    pass(
        5,
        "numerics suite",
        format!(
            "gradient rel err <= {:.1e}/{:.1e}; witnesses hold; worst row-sum error {:.1e}",
            worst.0, worst.1, worst_row_error
        ),
    );
}

/// Criterion 6: surrogate excess risks agree with the closed-form route,
/// per agent, averaged over ten seeds, for both trained algorithms.
#[test]
fn criterion_6_surrogate_analytic_consistency() {
    let _suite = exclusive();
    let seeds = 10u64;
    let agents = ScenarioConfig::default().num_agents;
    let mut sums = vec![[0.0f64; 4]; agents]; // focus surr/ana, fedavg surr/ana
    for seed in 1..=seeds {
        let cfg = ScenarioConfig {
            seed,
            ..ScenarioConfig::default()
        };
        let scenario = generate_scenario(&cfg).unwrap();
        let focus = run_focus(&scenario, &cfg, InitStrategy::LocalFit, 2).unwrap();
        let fedavg = run_fedavg(&scenario, &cfg).unwrap();
        let focus_predictor = Predictor::Ensemble {
            models: &focus.models,
            pi: &focus.pi,
        };
        let fedavg_predictor = Predictor::Global(&fedavg.model);
        let values = [
            focus_fl::fairness::excess_risks(focus_predictor, &scenario, ModelKind::LinearRegression, ExcessMethod::Surrogate, SURROGATE_BUDGET).unwrap(),
            focus_fl::fairness::excess_risks(focus_predictor, &scenario, ModelKind::LinearRegression, ExcessMethod::AnalyticLinear, SURROGATE_BUDGET).unwrap(),
            focus_fl::fairness::excess_risks(fedavg_predictor, &scenario, ModelKind::LinearRegression, ExcessMethod::Surrogate, SURROGATE_BUDGET).unwrap(),
            focus_fl::fairness::excess_risks(fedavg_predictor, &scenario, ModelKind::LinearRegression, ExcessMethod::AnalyticLinear, SURROGATE_BUDGET).unwrap(),
        ];
        for (slot, vector) in values.iter().enumerate() {
            for (agent, &x) in vector.per_agent.iter().enumerate() {
                sums[agent][slot] += x / seeds as f64;
            }
        }
    }
    let mut worst = 0.0f64;
    for (agent, [focus_surr, focus_ana, fedavg_surr, fedavg_ana]) in sums.iter().enumerate() {
        for (surr, ana, algo) in [(focus_surr, focus_ana, "focus"), (fedavg_surr, fedavg_ana, "fedavg")] {
            let tol = (0.02 * ana.abs()).max(0.002);
            let delta = (surr - ana).abs();
            assert!(delta <= tol, "agent {agent} ({algo}): |{surr:.5} - {ana:.5}| = {delta:.5} > {tol:.5}");
            worst = worst.max(delta / tol);
        }
    }
    pass(
        6,
        "surrogate/analytic excess-risk consistency",
        format!("10-seed averages within tolerance; worst delta at {:.0}% of budget", 100.0 * worst),
    );
}

/// Criterion 7: sweeping the trained cluster count on the 3-cluster
/// scenario, one model is strictly worst and three or four models tie.
#[test]
fn criterion_7_cluster_count_sweep() {
    let _suite = exclusive();
    let mut detail = String::new();
    for seed in 1..=2u64 {
        let cfg = three_cluster_cfg(seed);
        let scenario = generate_scenario(&cfg).unwrap();
        let mut faa_by_m = Vec::new();
        for num_models in 1..=4usize {
            let run = run_focus(&scenario, &cfg, InitStrategy::LocalFit, num_models).unwrap();
            let report = fairness_report(
                Predictor::Ensemble {
                    models: &run.models,
                    pi: &run.pi,
                },
                &scenario,
                ModelKind::LinearRegression,
                ExcessMethod::Surrogate,
                SURROGATE_BUDGET,
            )
            .unwrap();
            faa_by_m.push(report.faa);
        }
        for m in 1..4 {
            assert!(
                faa_by_m[0] > faa_by_m[m],
                "seed {seed}: M=1 not strictly worst: {faa_by_m:?}"
            );
        }
        assert!(
            (faa_by_m[2] - faa_by_m[3]).abs() <= 0.02,
            "seed {seed}: M=3 and M=4 differ: {faa_by_m:?}"
        );
        detail = format!("seed {seed}: faa by M {faa_by_m:?}");
    }
    pass(7, "cluster-count sweep pattern", detail);
}

/// Criterion 8: the CLI yields byte-identical summaries for identical
/// invocations, independent of worker-thread count.
#[test]
fn criterion_8_cli_determinism() {
    let _suite = exclusive();
    let tmp = tempfile::tempdir().unwrap();
    for (out, threads) in [("t1", "1"), ("t4", "4"), ("repeat", "1")] {
        let status = Command::new(env!("CARGO_BIN_EXE_focus-fl"))
            .args(["run", "--algo", "focus,fedavg", "--seed", "1", "--out"])
            .arg(tmp.path().join(out))
            .env("FOCUS_FL_THREADS", threads)
            .status()
            .unwrap();
        assert!(status.success());
    }
    for algo in ["focus", "fedavg"] {
        for artifact in ["summary.json", "rounds.csv"] {
            let name = format!("{algo}_seed1/{artifact}");
            let t1 = std::fs::read(tmp.path().join("t1").join(&name)).unwrap();
            let t4 = std::fs::read(tmp.path().join("t4").join(&name)).unwrap();
            let repeat = std::fs::read(tmp.path().join("repeat").join(&name)).unwrap();
            assert_eq!(t1, t4, "{name}: differs across thread counts");
            assert_eq!(t1, repeat, "{name}: differs across repeat invocations");
        }
    }
    pass(8, "CLI determinism", "summary.json and rounds.csv byte-identical across threads/repeats".into());
}
