//! Acceptance gate: the eight release criteria, each evaluated
//! independently and reported as a single `criterion N (<name>): PASS/FAIL`
//! line (run with `--nocapture` to watch them live). The test fails if any
//! criterion fails, but always prints every line first.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use linnet::dataset::{sample_schwefel, Dataset};
use linnet::line_search::LineSearchConfig;
use linnet::linsys::{build_increment_system, BlockKind, LinearSystem};
use linnet::mlp::MlpParams;
use linnet::model_file::{from_model_str, load_model, save_model, to_model_string, ModelFile};
use linnet::run_config::config_hash;
use linnet::solver::{solve_projection, solve_reference, ProjectionConfig};
use linnet::trainer::{train, train_loop, TrainConfig};
use linnet::trainer::{evaluate, StopReason};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Pass detail or failure explanation for one criterion.
type CheckResult = Result<String, String>;

// ---------------------------------------------------------------------------
// shared fixtures
// ---------------------------------------------------------------------------

fn tuned(
    hidden: usize,
    epochs: usize,
    n_samples: usize,
    ls_sweeps: usize,
    ep_sweeps: usize,
    seed: u64,
) -> TrainConfig {
    TrainConfig {
        hidden_units: hidden,
        max_epochs: epochs,
        seed,
        min_mse_delta: 0.0,
        line_search: LineSearchConfig {
            n_samples,
            bisection_iters: 20,
            ..LineSearchConfig::default()
        },
        solver_epoch: ProjectionConfig {
            max_sweeps: ep_sweeps,
            ..ProjectionConfig::default()
        },
        solver_linesearch: ProjectionConfig {
            max_sweeps: ls_sweeps,
            ..ProjectionConfig::for_line_search()
        },
        ..TrainConfig::default()
    }
}

fn sine_dataset(n: usize) -> Dataset {
    let inputs = DMatrix::from_fn(n, 1, |i, _| {
        -std::f64::consts::PI + 2.0 * std::f64::consts::PI * i as f64 / (n - 1) as f64
    });
    let targets = DVector::from_fn(n, |i, _| inputs[(i, 0)].sin());
    Dataset::new(inputs, targets, None).unwrap()
}

/// Random two-input, three-unit teacher and 300 samples drawn from it.
fn teacher_dataset(seed: u64) -> (MlpParams, Dataset) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let teacher = MlpParams::new(
        DMatrix::from_fn(3, 2, |_, _| rng.gen_range(-2.0..2.0)),
        DVector::from_fn(3, |_, _| rng.gen_range(-1.0..1.0)),
        DVector::from_fn(3, |_, _| rng.gen_range(-2.0..2.0)),
        rng.gen_range(-0.5..0.5),
    )
    .unwrap();
    let inputs = DMatrix::from_fn(300, 2, |_, _| rng.gen_range(-1.0..1.0));
    let targets = teacher.predict_all(&inputs);
    (teacher, Dataset::new(inputs, targets, None).unwrap())
}

/// m×k matrix with singular values log-spaced from 1 down to 1/cond.
fn conditioned_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, cond: f64) -> DMatrix<f64> {
    let gu = DMatrix::from_fn(rows, cols, |_, _| rng.gen_range(-1.0..1.0));
    let gv = DMatrix::from_fn(cols, cols, |_, _| rng.gen_range(-1.0..1.0));
    let qu = nalgebra::linalg::QR::new(gu).q();
    let qv = nalgebra::linalg::QR::new(gv).q();
    let sigma = DVector::from_fn(cols, |k, _| {
        if cols == 1 {
            1.0
        } else {
            cond.powf(-(k as f64) / (cols as f64 - 1.0))
        }
    });
    &qu * DMatrix::from_diagonal(&sigma) * qv.transpose()
}

// ---------------------------------------------------------------------------
// criterion 1: increment-system columns vs central finite differences
// ---------------------------------------------------------------------------

fn c1_jacobian() -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let mut worst = 0.0f64;
    let mut columns = 0usize;
    let configs = 120usize;
    for _ in 0..configs {
        let hidden = rng.gen_range(1..=5usize);
        let n_in = rng.gen_range(1..=3usize);
        let n_pts = rng.gen_range(8..=20usize);
        let params = MlpParams::new(
            DMatrix::from_fn(hidden, n_in, |_, _| rng.gen_range(-1.5..1.5)),
            DVector::from_fn(hidden, |_, _| rng.gen_range(-1.0..1.0)),
            DVector::from_fn(hidden, |_, _| {
                let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
                sign * rng.gen_range(0.3..2.0)
            }),
            rng.gen_range(-1.0..1.0),
        )
        .map_err(|e| e.to_string())?;
        let inputs = DMatrix::from_fn(n_pts, n_in, |_, _| rng.gen_range(-1.5..1.5));
        let targets = DVector::from_fn(n_pts, |_, _| rng.gen_range(-1.0..1.0));
        let sys = build_increment_system(&params, &inputs, &targets).map_err(|e| e.to_string())?;

        // Central difference of the network output along one parameter.
        let fd_col = |set: &dyn Fn(&mut MlpParams, f64), at: f64| -> DVector<f64> {
            let step = f64::EPSILON.cbrt() * (1.0 + at.abs());
            let mut plus = params.clone();
            set(&mut plus, step);
            let mut minus = params.clone();
            set(&mut minus, -step);
            (plus.predict_all(&inputs) - minus.predict_all(&inputs)) / (2.0 * step)
        };
        let mut check = |col: usize, fd: DVector<f64>| {
            let a = sys.matrix.column(col);
            let rel = (a - &fd).norm() / fd.norm().max(1e-8);
            worst = worst.max(rel);
            columns += 1;
        };

        let rs = sys.layout.range_of(BlockKind::DeltaOutputWeights).unwrap();
        let rb = sys.layout.range_of(BlockKind::DeltaIntercept).unwrap();
        let rw = sys.layout.range_of(BlockKind::DeltaWeights).unwrap();
        let rd = sys.layout.range_of(BlockKind::DeltaBias).unwrap();
        for k in 0..hidden {
            let at = params.output_weights[k];
            check(rs.start + k, fd_col(&|p, e| p.output_weights[k] += e, at));
        }
        check(rb.start, fd_col(&|p, e| p.output_bias += e, params.output_bias));
        for k in 0..hidden {
            for j in 0..n_in {
                let at = params.weights[(k, j)];
                check(rw.start + k * n_in + j, fd_col(&|p, e| p.weights[(k, j)] += e, at));
            }
            let at = params.bias[k];
            check(rd.start + k, fd_col(&|p, e| p.bias[k] += e, at));
        }
    }
    if worst < 1e-5 {
        Ok(format!("{configs} configs, {columns} columns, max rel err {worst:.2e}"))
    } else {
        Err(format!("max column rel err {worst:.2e} ≥ 1e-5"))
    }
}

// ---------------------------------------------------------------------------
// criterion 2: projection solver vs orthogonal-factorization reference
// ---------------------------------------------------------------------------

fn c2_solver_oracle() -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst_ratio = 0.0f64;
    let mut worst_rel = 0.0f64;
    let mut planted = 0usize;
    let mut inconsistent = 0usize;
    for i in 0..200usize {
        let cols = rng.gen_range(5..=50usize);
        let rows = rng.gen_range((cols + 5).max(20)..=200usize);
        let cond = 10f64.powf(rng.gen_range(0.0..3.0));
        let a = conditioned_matrix(&mut rng, rows, cols, cond);
        let cfg = ProjectionConfig {
            max_sweeps: 200,
            seed: i as u64,
            ..ProjectionConfig::default()
        };
        if i % 2 == 0 {
            // Full-column-rank planted system: the exact solution is unique.
            let x_true = DVector::from_fn(cols, |_, _| rng.gen_range(-1.0..1.0));
            let b = &a * &x_true;
            let sys = LinearSystem::unstructured(a, b).map_err(|e| e.to_string())?;
            let rep = solve_projection(&sys, &cfg, None).map_err(|e| e.to_string())?;
            let rel = (&rep.x - &x_true).norm() / x_true.norm();
            worst_rel = worst_rel.max(rel);
            planted += 1;
        } else {
            // Random right-hand side on a strictly overdetermined matrix:
            // the least-squares residual is large and genuinely attained.
            let b = DVector::from_fn(rows, |_, _| rng.gen_range(-1.0..1.0));
            let sys = LinearSystem::unstructured(a, b).map_err(|e| e.to_string())?;
            let rep = solve_projection(&sys, &cfg, None).map_err(|e| e.to_string())?;
            let x_ref = solve_reference(&sys).map_err(|e| e.to_string())?;
            let r_proj = (&sys.matrix * &rep.x - &sys.rhs).norm();
            let r_ref = (&sys.matrix * &x_ref - &sys.rhs).norm();
            worst_ratio = worst_ratio.max(r_proj / r_ref);
            inconsistent += 1;
        }
    }
    let detail = format!(
        "{inconsistent} residual checks (worst ratio {worst_ratio:.6}), \
         {planted} planted systems (worst rel err {worst_rel:.2e})"
    );
    if worst_ratio <= 1.01 && worst_rel <= 1e-6 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

// ---------------------------------------------------------------------------
// criterion 3: the error curve never increases
// ---------------------------------------------------------------------------

fn c3_monotone_curve() -> CheckResult {
    let mut checked = 0usize;
    for seed in 0..12u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(900 + seed);
        let inputs: DMatrix<f64> = DMatrix::from_fn(40, 2, |_, _| rng.gen_range(-1.0..1.0));
        let targets = DVector::from_fn(40, |i, _| {
            let (a, b) = (inputs[(i, 0)], inputs[(i, 1)]);
            (2.0 * a).sin() * b.cos() + 0.3 * a * b
        });
        let ds = Dataset::new(inputs, targets, None).map_err(|e| e.to_string())?;
        let cfg = tuned(6, 20, 40, 40, 200, seed);
        let out = train(&ds, &cfg).map_err(|e| e.to_string())?;
        for w in out.records.windows(2) {
            if w[1].mse > w[0].mse + 1e-12 {
                return Err(format!(
                    "seed {seed}: mse rose {:.17e} -> {:.17e} at epoch {}",
                    w[0].mse, w[1].mse, w[1].epoch
                ));
            }
            checked += 1;
        }
    }
    Ok(format!("12 seeds, {checked} consecutive epoch pairs non-increasing within 1e-12"))
}

// ---------------------------------------------------------------------------
// criterion 4: teacher-student recovery
// ---------------------------------------------------------------------------

fn c4_teacher_student() -> CheckResult {
    let mut hits = 0usize;
    let mut finals = Vec::new();
    for seed in 0..10u64 {
        let (_, ds) = teacher_dataset(1000 + seed);
        let mut cfg = tuned(10, 500, 150, 25, 150, seed);
        cfg.target_mse = Some(1e-6);
        let out = train(&ds, &cfg).map_err(|e| e.to_string())?;
        let last = out.records.last().unwrap();
        if last.mse <= 1e-6 {
            hits += 1;
        }
        finals.push(format!("{:.1e}", last.mse));
    }
    let detail = format!("{hits}/10 seeds reached mse ≤ 1e-6 (finals: {})", finals.join(" "));
    if hits >= 8 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

// ---------------------------------------------------------------------------
// criterion 5: one-dimensional sine regression
// ---------------------------------------------------------------------------

/// Attainable final error established by a pilot run of this exact
/// configuration (2.668e-9), pinned at twice that to absorb
/// platform-level floating-point variation.
const SINE_PINNED_FINAL_MSE: f64 = 5.336e-9;

fn c5_sine_regression() -> CheckResult {
    let ds = sine_dataset(200);
    let cfg = tuned(20, 300, 200, 30, 200, 0);
    let out = train(&ds, &cfg).map_err(|e| e.to_string())?;
    let last = out.records.last().unwrap();
    let first_below = out.records.iter().find(|r| r.mse < 1e-3).map(|r| r.epoch);
    let detail = format!(
        "mse < 1e-3 from epoch {:?}, final {:.3e} after {} epochs (pinned bound {SINE_PINNED_FINAL_MSE:.1e})",
        first_below, last.mse, last.epoch
    );
    if first_below.is_some() && last.mse <= SINE_PINNED_FINAL_MSE {
        Ok(detail)
    } else {
        Err(detail)
    }
}

// ---------------------------------------------------------------------------
// criterion 6: multimodal benchmark surface, early-epoch error reduction
// ---------------------------------------------------------------------------

fn c6_benchmark_surface() -> CheckResult {
    let ds = sample_schwefel(2000, 3, -500.0, 500.0, 1).map_err(|e| e.to_string())?;
    let cfg = TrainConfig {
        init_scale: 8.0,
        ..tuned(60, 200, 300, 16, 150, 0)
    };
    let out = train(&ds, &cfg).map_err(|e| e.to_string())?;
    let m1 = out
        .records
        .iter()
        .find(|r| r.epoch == 1)
        .ok_or("run stopped before epoch 1")?
        .mse;
    let last = out.records.last().unwrap();
    let detail = format!(
        "mse(1) {:.4e}, mse({}) {:.4e}, ratio {:.4}",
        m1,
        last.epoch,
        last.mse,
        last.mse / m1
    );
    if last.mse <= 0.1 * m1 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

// ---------------------------------------------------------------------------
// criterion 7: an exactly-fitting start stops immediately
// ---------------------------------------------------------------------------

fn c7_zero_increment_stop() -> CheckResult {
    let (teacher, ds) = teacher_dataset(77);
    let cfg = tuned(3, 50, 60, 40, 200, 0);
    let (_, records) = train_loop(&teacher, &ds.inputs, &ds.targets, &cfg).map_err(|e| e.to_string())?;
    let last = records.last().unwrap();
    let detail = format!(
        "stopped at epoch {} with {:?}, mse {:.3e}",
        last.epoch, last.stop_reason, last.mse
    );
    if last.epoch == 1 && last.stop_reason == Some(StopReason::ZeroStep) {
        Ok(detail)
    } else {
        Err(detail)
    }
}

// ---------------------------------------------------------------------------
// criterion 8: determinism and persistence
// ---------------------------------------------------------------------------

fn c8_determinism_persistence() -> CheckResult {
    use linnet::trainer::to_curve_string;
    let ds = sine_dataset(120);
    let cfg = tuned(8, 25, 60, 30, 200, 3);
    let hash = config_hash(&cfg).map_err(|e| e.to_string())?;

    let run = || -> Result<(String, String, linnet::trainer::TrainResult), String> {
        let out = train(&ds, &cfg).map_err(|e| e.to_string())?;
        let curve = to_curve_string(&out.records);
        let model = ModelFile::new(out.params.clone(), out.norm.clone(), cfg.seed, hash)
            .map_err(|e| e.to_string())?;
        Ok((curve, to_model_string(&model), out))
    };
    let (curve_a, model_a, out) = run()?;
    let (curve_b, model_b, _) = run()?;
    if curve_a != curve_b {
        return Err("curve CSV differs between identical runs".into());
    }
    if model_a != model_b {
        return Err("model file differs between identical runs".into());
    }
    // Round trip through text and disk, then re-evaluate.
    let reparsed = from_model_str(&model_a).map_err(|e| e.to_string())?;
    if to_model_string(&reparsed) != model_a {
        return Err("save -> load -> save is not byte-identical".into());
    }
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let path = dir.path().join("model.txt");
    save_model(&reparsed, &path).map_err(|e| e.to_string())?;
    let loaded = load_model(&path).map_err(|e| e.to_string())?;
    let metrics = evaluate(&loaded.params, &ds, &loaded.norm).map_err(|e| e.to_string())?;
    let trained_mse = out.records.last().unwrap().mse;
    let gap = (metrics.mse_normalized - trained_mse).abs();
    let detail = format!(
        "byte-identical reruns; reloaded eval mse {:.6e} vs trained {:.6e} (gap {gap:.2e})",
        metrics.mse_normalized, trained_mse
    );
    if gap <= 1e-12 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

// ---------------------------------------------------------------------------
// harness
// ---------------------------------------------------------------------------

#[test]
fn acceptance_criteria() {
    let checks: [(&str, fn() -> CheckResult, Option<f64>); 8] = [
        ("jacobian-vs-finite-differences", c1_jacobian, Some(10.0)),
        ("solver-oracle-equivalence", c2_solver_oracle, Some(30.0)),
        ("monotone-error-curve", c3_monotone_curve, None),
        ("teacher-student-recovery", c4_teacher_student, Some(120.0)),
        ("sine-regression", c5_sine_regression, Some(60.0)),
        ("benchmark-surface-reduction", c6_benchmark_surface, Some(600.0)),
        ("zero-increment-stop", c7_zero_increment_stop, None),
        ("determinism-and-persistence", c8_determinism_persistence, None),
    ];
    let mut failures = Vec::new();
    for (i, (name, check, budget)) in checks.iter().enumerate() {
        let t0 = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check))
            .unwrap_or_else(|p| Err(format!("panicked: {}", panic_text(&p))));
        let secs = t0.elapsed().as_secs_f64();
        let outcome = match (outcome, budget) {
            (Ok(d), Some(b)) if secs >= *b => {
                Err(format!("{d}; but took {secs:.1}s ≥ {b:.0}s budget"))
            }
            (other, _) => other,
        };
        match outcome {
            Ok(detail) => println!("criterion {} ({name}): PASS — {detail} [{secs:.1}s]", i + 1),
            Err(detail) => {
                println!("criterion {} ({name}): FAIL — {detail} [{secs:.1}s]", i + 1);
                failures.push(format!("criterion {} ({name}): {detail}", i + 1));
            }
        }
    }
    assert!(
        failures.is_empty(),
        "{} acceptance criteria failed:\n{}",
        failures.len(),
        failures.join("\n")
    );
}

fn panic_text(p: &(dyn std::any::Any + Send)) -> String {
    if let Some(s) = p.downcast_ref::<&str>() {
        (*s).into()
    } else if let Some(s) = p.downcast_ref::<String>() {
        s.clone()
    } else {
        "non-string panic payload".into()
    }
}
