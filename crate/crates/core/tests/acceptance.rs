//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any criterion fails.

use std::process::ExitCode;
use std::time::Instant;

use stacklstm::data::{
    apply_normalization, compute_norm_stats, format_f64, ingest_csv, kfold_indices, select, split_semi_supervised,
    synth_generate, write_csv, SynthSpec,
};
use stacklstm::gradcheck::{run_gradcheck, GradCheckConfig};
use stacklstm::metrics::write_history;
use stacklstm::objective::{classifying_loss, elastic_net_penalty, one_hot, predicting_loss, RegularizationSpec};
use stacklstm::optim::{AdamConfig, AdamState};
use stacklstm::pipeline::{load_model, predict_sequence, run_training, save_model, write_model, TrainConfig, TrainingRun};
use stacklstm::recurrent::StageParams;

struct Check {
    failures: Vec<String>,
}

impl Check {
    fn new() -> Self {
        Self { failures: Vec::new() }
    }

    fn that(&mut self, ok: bool, what: impl Into<String>) {
        if !ok {
            self.failures.push(what.into());
        }
    }

    fn close(&mut self, got: f64, want: f64, tol: f64, what: &str) {
        self.that((got - want).abs() <= tol, format!("{what}: got {got}, want {want} ± {tol}"));
    }
}

type Outcome = (bool, String);

fn finish(c: Check, detail: String) -> Outcome {
    if c.failures.is_empty() {
        (true, detail)
    } else {
        (false, format!("{detail}; {}", c.failures.join("; ")))
    }
}

fn gradient_correctness() -> Outcome {
    let mut c = Check::new();
    let start = Instant::now();
    let report = run_gradcheck(&GradCheckConfig::default()).expect("gradcheck runs");
    let secs = start.elapsed().as_secs_f64();
    c.that(report.passed(), format!("max relative error {:.3e}", report.max_error()));
    c.that(report.cases.len() == 8, "expected 8 loss/regularization cases");
    c.that(secs < 60.0, format!("took {secs:.1}s"));
    finish(c, format!("max relative error {:.3e} over {} cases in {secs:.2}s", report.max_error(), report.cases.len()))
}

fn loss_identities() -> Outcome {
    let mut c = Check::new();
    let w: Vec<f64> = vec![0.5, -1.25, 0.0, 2.0, -0.3];
    let u: Vec<f64> = vec![0.1, -0.2];
    let params: [&[f64]; 2] = [&w, &u];
    let l1: f64 = w.iter().chain(&u).map(|v| v.abs()).sum();
    let l2: f64 = w.iter().chain(&u).map(|v| v * v).sum();
    let none = RegularizationSpec::new(0.0, 0.5).unwrap();

    let x = [1.0, 0.0, -0.5];
    let xh = [0.25, 0.5, -0.5];
    let bare = ((0.75f64).powi(2) + 0.25) / 3.0;
    let p = predicting_loss(&x, &xh, &params, &none).unwrap();
    c.that(p.total == p.data_term && p.penalty_term == 0.0, "predicting loss at λ = 0 is not bare");
    c.close(p.total, bare, 0.0, "mse");
    let y = one_hot(1, 3);
    let yh = [0.2, 0.5, 0.3];
    let q = classifying_loss(&y, &yh, &params, &none).unwrap();
    c.that(q.total == q.data_term && q.penalty_term == 0.0, "classifying loss at λ = 0 is not bare");
    c.close(q.total, -(0.5f64).ln(), 0.0, "cross entropy");

    let lam = 0.3;
    c.close(elastic_net_penalty(&params, &RegularizationSpec::new(lam, 1.0).unwrap()), lam * l1, 1e-15, "lasso");
    c.close(elastic_net_penalty(&params, &RegularizationSpec::new(lam, 0.0).unwrap()), lam * l2, 1e-15, "ridge");

    let uniform = [1.0 / 6.0; 6];
    let ln6 = classifying_loss(&one_hot(4, 6), &uniform, &[], &none).unwrap().total;
    c.close(ln6, 1.791759469, 1e-9, "uniform 6-class cross entropy");

    c.close(elastic_net_penalty(&[&[2.0]], &RegularizationSpec::new(0.5, 0.25).unwrap()), 1.75, 1e-12, "penalty 1.75");
    c.close(elastic_net_penalty(&[&[2.0]], &RegularizationSpec::new(1.0, 1.0).unwrap()), 2.0, 1e-12, "penalty 2");
    let r = RegularizationSpec::new(0.1, 0.5).unwrap();
    c.close(predicting_loss(&[1.0, 0.0], &[0.0, 0.0], &[&[0.5]], &r).unwrap().total, 0.5375, 1e-12, "0.5375");
    c.close(
        classifying_loss(&[1.0, 0.0], &[0.75, 0.25], &[], &none).unwrap().total,
        0.2876821,
        1e-7,
        "-ln 0.75",
    );
    let g = stacklstm::objective::penalty_gradient(&[&[2.0, 0.0]], &RegularizationSpec::new(1.0, 0.5).unwrap());
    c.that(g[0] == vec![2.5, 0.0], format!("penalty gradient {:?}", g[0]));
    finish(c, format!("cross entropy of uniform 6-class = {ln6:.12}"))
}

fn stage_bytes(s: &StageParams) -> String {
    s.tensors()
        .iter()
        .map(|t| t.iter().map(|&v| format_f64(v)).collect::<Vec<_>>().join(" "))
        .collect::<Vec<_>>()
        .join("\n")
}

fn freeze_invariance(run: &TrainingRun) -> Outcome {
    let mut c = Check::new();
    let before = stage_bytes(&run.frozen_stage1);
    let after = stage_bytes(run.model.stage1());
    c.that(before == after, "stage-1 tensors changed during stage 2");
    c.that(run.model.is_stage1_frozen(), "stage 1 not marked frozen");
    c.that(!run.stage2_history.is_empty(), "stage 2 did not run");
    finish(c, format!("{} bytes of stage-1 tensors identical after {} stage-2 epochs", after.len(), run.stage2_history.len()))
}

fn synthetic_config() -> TrainConfig {
    TrainConfig {
        hidden_size: 32,
        epochs: 100,
        batch_size: 16,
        ..TrainConfig::default()
    }
}

fn synthetic_learning(run: &TrainingRun, secs: f64) -> Outcome {
    let mut c = Check::new();
    let acc = run.test.as_ref().map_or(f64::NAN, |e| e.accuracy);
    c.that(acc >= 0.90, format!("held-out accuracy {acc:.4} < 0.90"));
    c.that(secs < 300.0, format!("took {secs:.1}s"));
    let n = run.test.as_ref().map_or(0, |e| e.confusion.total());
    let kfold = run
        .kfold
        .as_ref()
        .map_or(String::new(), |k| format!(", {}-fold val {:.3} ± {:.3}", k.fold_accuracies.len(), k.mean, k.std));
    finish(c, format!("held-out accuracy {acc:.4} on {n} sequences{kfold} in {secs:.1}s"))
}

fn adam_oracle() -> Outcome {
    let mut c = Check::new();
    let cfg = AdamConfig::default();
    let mut w = vec![0.0];
    let mut st = AdamState::new(&[&w]);
    st.step(&mut [&mut w], &[&[2.0]], &cfg).unwrap();
    let want = -0.005 * 2.0 / (2.0 + 1e-8);
    c.close(w[0], want, 1e-9, "first step");
    let mut z = vec![0.7, -1.5];
    let mut st = AdamState::new(&[&z]);
    st.step(&mut [&mut z], &[&[0.0, 0.0]], &cfg).unwrap();
    c.that(z == vec![0.7, -1.5], "zero gradient moved parameters");
    finish(c, format!("first step {:.12e}, want {want:.12e}", w[0]))
}

fn data_pipeline() -> Outcome {
    let mut c = Check::new();
    let samples = synth_generate(&SynthSpec { n_sequences: 100, t_min: 8, t_max: 16, seed: 5, ..SynthSpec::default() })
        .unwrap();
    let split = split_semi_supervised(100, 9, false).unwrap();
    c.that(
        (split.predictor_set.len(), split.classifier_train_set.len(), split.classifier_val_set.len()) == (90, 5, 5),
        "100-sequence split is not 90/5/5",
    );
    let fit = select(&samples, &split.predictor_training_set());
    let stats = compute_norm_stats(&fit).unwrap();
    let normed = apply_normalization(&fit, &stats).unwrap();
    let frames: Vec<&Vec<f64>> = normed.iter().flat_map(|s| s.frames()).collect();
    let n = frames.len() as f64;
    let (mut worst_mu, mut worst_sd) = (0.0f64, 0.0f64);
    for j in 0..22 {
        let mu = frames.iter().map(|f| f[j]).sum::<f64>() / n;
        let sd = (frames.iter().map(|f| (f[j] - mu).powi(2)).sum::<f64>() / n).sqrt();
        worst_mu = worst_mu.max(mu.abs());
        worst_sd = worst_sd.max((sd - 1.0).abs());
    }
    c.that(worst_mu < 1e-9 && worst_sd < 1e-9, format!("normalization |mean| {worst_mu:e}, |std-1| {worst_sd:e}"));

    for (n, k) in [(10, 5), (11, 5), (37, 4), (100, 7)] {
        let folds = kfold_indices(n, k, 3).unwrap();
        let mut all: Vec<usize> = folds.iter().flatten().copied().collect();
        all.sort_unstable();
        let sizes: Vec<usize> = folds.iter().map(Vec::len).collect();
        let balanced = sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1;
        c.that(all == (0..n).collect::<Vec<_>>() && balanced, format!("k-fold n={n} k={k}: {sizes:?}"));
    }

    let mut buf = Vec::new();
    write_csv(&mut buf, &samples).unwrap();
    let back = ingest_csv(buf.as_slice()).unwrap();
    c.that(back == samples, "CSV round trip changed values");
    finish(c, format!("norm |mean| ≤ {worst_mu:.1e}, |std-1| ≤ {worst_sd:.1e}; split 90/5/5; CSV round trip exact"))
}

fn determinism_and_persistence() -> Outcome {
    let mut c = Check::new();
    let data = synth_generate(&SynthSpec { n_sequences: 60, t_min: 10, t_max: 20, seed: 2, ..SynthSpec::default() })
        .unwrap();
    let cfg = TrainConfig { hidden_size: 8, epochs: 5, batch_size: 8, k: 2, seed: 4, ..TrainConfig::default() };
    let bytes = |run: &TrainingRun| {
        let mut b = Vec::new();
        write_model(&mut b, &run.model).unwrap();
        b
    };
    let a = run_training(&data, &cfg).unwrap();
    let b = run_training(&data, &cfg).unwrap();
    c.that(bytes(&a) == bytes(&b), "model bytes differ between identical runs");

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.txt");
    save_model(&a.model, &path).unwrap();
    let loaded = load_model(&path).unwrap();
    let normed = a.model.normalize(&data).unwrap();
    let normed_loaded = loaded.normalize(&data).unwrap();
    let mut identical = 0;
    for (s, t) in normed.iter().zip(&normed_loaded) {
        let (la, da) = predict_sequence(&a.model, s.frames()).unwrap();
        let (lb, db) = predict_sequence(&loaded, t.frames()).unwrap();
        let same = la == lb && da.iter().zip(&db).all(|(x, y)| x.to_bits() == y.to_bits());
        identical += usize::from(same);
    }
    c.that(identical == data.len(), format!("{identical}/{} predictions bit-identical after reload", data.len()));
    finish(c, format!("{} model bytes identical across runs; {identical}/{} reloaded predictions bit-identical", bytes(&a).len(), data.len()))
}

fn history_emission(run: &TrainingRun, epochs: usize) -> Outcome {
    let mut c = Check::new();
    for (name, h, classify) in [("stage 1", &run.stage1_history, false), ("stage 2", &run.stage2_history, true)] {
        c.that(h.len() == epochs, format!("{name}: {} rows for {epochs} epochs", h.len()));
        for (i, r) in h.iter().enumerate() {
            c.that(r.epoch == i + 1, format!("{name}: epoch {} at row {i}", r.epoch));
            c.that(r.train_loss.is_finite() && r.val_loss.is_finite(), format!("{name}: non-finite loss"));
            let accs = [r.train_acc, r.val_acc];
            if classify {
                c.that(
                    accs.iter().all(|a| a.is_some_and(|v| (0.0..=1.0).contains(&v))),
                    format!("{name}: accuracy outside [0, 1] at epoch {}", r.epoch),
                );
            } else {
                c.that(accs.iter().all(Option::is_none), format!("{name}: unexpected accuracy"));
            }
        }
        let mut buf = Vec::new();
        write_history(&mut buf, h).unwrap();
        let lines = String::from_utf8(buf).unwrap().lines().count();
        c.that(lines == epochs + 1, format!("{name}: CSV has {lines} lines"));
    }
    finish(c, format!("{epochs} rows per stage, finite losses, accuracies in [0, 1]"))
}

fn main() -> ExitCode {
    let mut results: Vec<(&str, Outcome)> = Vec::new();
    results.push(("1 gradient correctness", gradient_correctness()));
    results.push(("2 loss identities", loss_identities()));

    let cfg = synthetic_config();
    let data = synth_generate(&SynthSpec::default()).unwrap();
    let start = Instant::now();
    let run = run_training(&data, &cfg).expect("synthetic training run");
    let secs = start.elapsed().as_secs_f64();

    results.push(("3 freeze invariance", freeze_invariance(&run)));
    results.push(("4 synthetic end-to-end learning", synthetic_learning(&run, secs)));
    results.push(("5 adam oracle", adam_oracle()));
    results.push(("6 data pipeline", data_pipeline()));
    results.push(("7 determinism and persistence", determinism_and_persistence()));
    results.push(("8 history emission", history_emission(&run, cfg.epochs)));

    let mut failed = 0;
    for (name, (ok, detail)) in &results {
        println!("criterion {name}: {} ({detail})", if *ok { "PASS" } else { "FAIL" });
        failed += usize::from(!ok);
    }
    println!("{} of {} acceptance criteria passed", results.len() - failed, results.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
