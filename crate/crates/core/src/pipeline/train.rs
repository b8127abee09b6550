use crate::data::{
    compute_norm_stats, kfold_indices, select, split_semi_supervised, NormStats, SequenceSample, SplitResult,
};
use crate::error::{ensure, Error, Result};
use crate::metrics::{evaluate, Evaluation};
use crate::objective::RegularizationSpec;
use crate::optim::{AdamConfig, AdamState};
use crate::recurrent::{run_sequence, DropoutSpec, ParamGradients, PenaltyScope, StageParams, Target};
use crate::seqcore::{argmax, SeededRng};

use super::config::TrainConfig;
use super::model::{freeze_stage1, streams, ModelState};

/// One row of a training history.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    /// Stage 2 only.
    pub train_acc: Option<f64>,
    pub val_acc: Option<f64>,
}

#[derive(Debug, Clone)]
enum ExampleTarget {
    Frames(Vec<Vec<f64>>),
    Label(usize),
}

#[derive(Debug, Clone)]
struct Example {
    inputs: Vec<Vec<f64>>,
    target: ExampleTarget,
}

impl Example {
    fn target(&self) -> Target<'_> {
        match &self.target {
            ExampleTarget::Frames(f) => Target::NextFrames(f),
            ExampleTarget::Label(c) => Target::Label(*c),
        }
    }

    /// Weight of this example in a set average: scored frames for regression, 1 for classification.
    fn mass(&self) -> f64 {
        match self.target {
            ExampleTarget::Frames(_) => self.inputs.len() as f64,
            ExampleTarget::Label(_) => 1.0,
        }
    }
}

struct FitOptions {
    epochs: usize,
    batch_size: usize,
    dropout: f64,
    reg: RegularizationSpec,
    scope: PenaltyScope,
    adam: AdamConfig,
    classify: bool,
}

struct SetScore {
    data_loss: f64,
    accuracy: Option<f64>,
}

fn score_set(stage: &StageParams, set: &[Example], classify: bool) -> Result<SetScore> {
    let total_mass: f64 = set.iter().map(Example::mass).sum();
    let mut loss = 0.0;
    let mut correct = 0usize;
    for ex in set {
        let eval = run_sequence(stage, &ex.inputs, ex.target(), &mut DropoutSpec::eval(), 1.0, None)?;
        loss += eval.data_loss * ex.mass() / total_mass;
        if let (Some(dist), ExampleTarget::Label(c)) = (&eval.mean_distribution, &ex.target) {
            correct += usize::from(argmax(dist) == *c);
        }
    }
    Ok(SetScore {
        data_loss: loss,
        accuracy: classify.then(|| correct as f64 / set.len() as f64),
    })
}

fn finite(v: f64, what: &str) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::contract(format!("{what} became non-finite")))
    }
}

/// Mini-batch Adam with best-validation checkpointing.
///
/// Batch gradients are accumulated sequentially in batch order, so a run is
/// reproducible bit for bit.
fn fit(
    stage: &mut StageParams,
    train: &[Example],
    val: &[Example],
    opts: &FitOptions,
    mut shuffle_rng: SeededRng,
    dropout_rng: SeededRng,
) -> Result<Vec<EpochRecord>> {
    ensure!(!train.is_empty(), "no training sequences");
    ensure!(!val.is_empty(), "no validation sequences");
    let mut history = Vec::with_capacity(opts.epochs);
    if opts.epochs == 0 {
        return Ok(history);
    }
    let mut adam = AdamState::new(&stage.tensors());
    let mut dropout = DropoutSpec::training(opts.dropout, dropout_rng)?;
    let mut best: Option<(f64, StageParams)> = None;
    let mut order: Vec<usize> = (0..train.len()).collect();
    let train_mass: f64 = train.iter().map(Example::mass).sum();

    for epoch in 1..=opts.epochs {
        shuffle_rng.shuffle(&mut order);
        let mut epoch_loss = 0.0;
        let mut correct = 0usize;
        for batch in order.chunks(opts.batch_size) {
            let batch_mass: f64 = batch.iter().map(|&i| train[i].mass()).sum();
            let mut grads = ParamGradients::zeros_like(stage);
            for &i in batch {
                let ex = &train[i];
                let w = ex.mass() / batch_mass;
                let eval = run_sequence(stage, &ex.inputs, ex.target(), &mut dropout, w, Some(&mut grads))?;
                epoch_loss += eval.data_loss * ex.mass() / train_mass;
                if let (Some(dist), ExampleTarget::Label(c)) = (&eval.mean_distribution, &ex.target) {
                    correct += usize::from(argmax(dist) == *c);
                }
            }
            grads.add_penalty(stage, &opts.reg, opts.scope);
            let g = grads.tensors();
            adam.step(&mut stage.tensors_mut(), &g, &opts.adam)?;
        }
        let penalty = stage.penalty(&opts.reg, opts.scope);
        let val_score = score_set(stage, val, opts.classify)?;
        let record = EpochRecord {
            epoch,
            train_loss: finite(epoch_loss + penalty, "training loss")?,
            val_loss: finite(val_score.data_loss + penalty, "validation loss")?,
            train_acc: opts.classify.then(|| correct as f64 / train.len() as f64),
            val_acc: val_score.accuracy,
        };
        if best.as_ref().is_none_or(|(b, _)| record.val_loss < *b) {
            best = Some((record.val_loss, stage.clone()));
        }
        history.push(record);
    }
    if let Some((_, params)) = best {
        *stage = params;
    }
    Ok(history)
}

fn check_samples(data: &[SequenceSample], dim: usize) -> Result<()> {
    for s in data {
        ensure!(
            s.dim() == dim,
            "sequence {:?} has {} features, expected {dim}",
            s.id,
            s.dim()
        );
    }
    Ok(())
}

/// Trains the next-frame predictor on normalized sequences.
///
/// Without a warm start the model gets identity normalization; callers
/// store the statistics they normalized with in `model.norm`. A warm start
/// continues from its stage-1 weights and discards its classifier, since
/// the classifier's inputs change. With zero epochs a warm start is returned
/// unchanged.
pub fn train_stage1(
    data: &[SequenceSample],
    cfg: &TrainConfig,
    warm_start: Option<&ModelState>,
) -> Result<(ModelState, Vec<EpochRecord>)> {
    ensure!(!data.is_empty(), "stage 1 needs at least one sequence");
    cfg.validate()?;
    let dim = data[0].dim();
    check_samples(data, dim)?;
    let mut model = match warm_start {
        Some(m) if cfg.epochs == 0 => return Ok((m.clone(), Vec::new())),
        Some(m) => {
            ensure!(
                m.dim() == dim,
                "warm-start model expects {} features, data has {dim}",
                m.dim()
            );
            let mut m = m.clone();
            m.reset_for_enrichment()?;
            m
        }
        None => ModelState::new(cfg, dim, NormStats::identity(dim))?,
    };

    let examples: Vec<Example> = data
        .iter()
        .map(|s| {
            let frames = s.frames();
            Example {
                inputs: model.stage1_inputs(&frames[..frames.len() - 1]),
                target: ExampleTarget::Frames(frames[1..].to_vec()),
            }
        })
        .collect();
    let (train, val) = if examples.len() < 2 {
        (examples.clone(), examples)
    } else {
        let mut order: Vec<usize> = (0..examples.len()).collect();
        SeededRng::derive(cfg.seed, streams::STAGE1_VAL_SPLIT).shuffle(&mut order);
        let n_val = ((examples.len() as f64 * 0.2).round() as usize).clamp(1, examples.len() - 1);
        let val = order[..n_val].iter().map(|&i| examples[i].clone()).collect::<Vec<_>>();
        let train = order[n_val..].iter().map(|&i| examples[i].clone()).collect::<Vec<_>>();
        (train, val)
    };
    let opts = FitOptions {
        epochs: cfg.epochs,
        batch_size: cfg.batch_size,
        dropout: cfg.dropout,
        reg: cfg.reg,
        scope: PenaltyScope::Recurrent,
        adam: AdamConfig {
            clip_norm: cfg.clip_norm,
            ..AdamConfig::with_lr(cfg.lr)
        },
        classify: false,
    };
    let history = fit(
        model.stage1_mut()?,
        &train,
        &val,
        &opts,
        SeededRng::derive(cfg.seed, streams::STAGE1_SHUFFLE),
        SeededRng::derive(cfg.seed, streams::STAGE1_DROPOUT),
    )?;
    Ok((model, history))
}

fn labeled_examples(model: &ModelState, data: &[SequenceSample], training: bool) -> Result<Vec<Example>> {
    data.iter()
        .map(|s| {
            let label = s
                .label
                .ok_or_else(|| Error::contract(format!("sequence {:?} has no terrain label", s.id)))?;
            let inputs = if training {
                model.training_features(s.frames())?
            } else {
                super::model::cascade_features(model, s.frames())?
            };
            Ok(Example {
                inputs,
                target: ExampleTarget::Label(label.code()),
            })
        })
        .collect()
}

fn stage2_fit(
    model: &ModelState,
    train: &[SequenceSample],
    val: &[SequenceSample],
    cfg: &TrainConfig,
    stream_offset: u64,
) -> Result<(ModelState, Vec<EpochRecord>)> {
    ensure!(model.is_stage1_frozen(), "stage 1 must be frozen before training stage 2");
    ensure!(!train.is_empty(), "stage 2 needs labeled training sequences");
    ensure!(!val.is_empty(), "stage 2 needs labeled validation sequences");
    cfg.validate()?;
    check_samples(train, model.dim())?;
    check_samples(val, model.dim())?;
    let train_ex = labeled_examples(model, train, true)?;
    let val_ex = labeled_examples(model, val, false)?;

    let mut out = model.clone();
    out.config = TrainConfig {
        seed: model.config.seed,
        hidden_size: model.config.hidden_size,
        cascade_mode: model.config.cascade_mode,
        input_relu: model.config.input_relu,
        ..cfg.clone()
    };
    let mut stage = ModelState::fresh_stage2(&out.config, out.dim())?;
    let opts = FitOptions {
        epochs: cfg.epochs,
        batch_size: cfg.batch_size,
        dropout: cfg.dropout,
        reg: cfg.reg,
        scope: if cfg.penalize_head {
            PenaltyScope::RecurrentAndHead
        } else {
            PenaltyScope::Recurrent
        },
        adam: AdamConfig {
            clip_norm: cfg.clip_norm,
            ..AdamConfig::with_lr(cfg.lr)
        },
        classify: true,
    };
    let history = fit(
        &mut stage,
        &train_ex,
        &val_ex,
        &opts,
        SeededRng::derive(cfg.seed, streams::STAGE2_SHUFFLE + stream_offset),
        SeededRng::derive(cfg.seed, streams::STAGE2_DROPOUT + stream_offset),
    )?;
    *out.stage2_mut() = stage;
    out.mark_stage2_trained();
    Ok((out, history))
}

/// Trains the terrain classifier through the frozen predictor.
///
/// The classifier is re-initialized from the configuration seed; the
/// structural settings (hidden size, cascade mode, input ReLU) are taken
/// from the model.
pub fn train_stage2(
    model: &ModelState,
    labeled_train: &[SequenceSample],
    labeled_val: &[SequenceSample],
    cfg: &TrainConfig,
) -> Result<(ModelState, Vec<EpochRecord>)> {
    stage2_fit(model, labeled_train, labeled_val, cfg, 0)
}

/// Cross-validated stage-2 accuracy.
#[derive(Debug, Clone, PartialEq)]
pub struct KFoldSummary {
    pub fold_accuracies: Vec<f64>,
    pub mean: f64,
    /// Population std over folds.
    pub std: f64,
}

/// Trains `cfg.k` classifiers, each validated on one fold of `labeled`.
pub fn kfold_stage2(model: &ModelState, labeled: &[SequenceSample], cfg: &TrainConfig) -> Result<KFoldSummary> {
    let folds = kfold_indices(labeled.len(), cfg.k, SeededRng::derive(cfg.seed, streams::KFOLD).next_u64())?;
    let mut accs = Vec::with_capacity(folds.len());
    for (i, fold) in folds.iter().enumerate() {
        let rest: Vec<usize> = folds
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != i)
            .flat_map(|(_, f)| f.iter().copied())
            .collect();
        let val = select(labeled, fold);
        let (trained, _) = stage2_fit(model, &select(labeled, &rest), &val, cfg, streams::FOLD_BASE + i as u64)?;
        accs.push(evaluate(&trained, &val)?.accuracy);
    }
    let n = accs.len() as f64;
    let mean = accs.iter().sum::<f64>() / n;
    let std = (accs.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / n).sqrt();
    Ok(KFoldSummary {
        fold_accuracies: accs,
        mean,
        std,
    })
}

/// Everything produced by [`run_training`].
#[derive(Debug, Clone)]
pub struct TrainingRun {
    pub model: ModelState,
    pub split: SplitResult,
    pub stage1_history: Vec<EpochRecord>,
    /// Snapshot of the stage-1 tensors taken right after freezing.
    pub frozen_stage1: StageParams,
    pub stage2_history: Vec<EpochRecord>,
    pub kfold: Option<KFoldSummary>,
    /// Evaluation on the test split, when every test sequence is labeled.
    pub test: Option<Evaluation>,
}

/// Split, normalize, train stage 1, freeze, cross-validate and train stage 2.
pub fn run_training(samples: &[SequenceSample], cfg: &TrainConfig) -> Result<TrainingRun> {
    cfg.validate()?;
    ensure!(!samples.is_empty(), "no sequences to train on");
    let dim = samples[0].dim();
    check_samples(samples, dim)?;
    let split = split_semi_supervised(samples.len(), cfg.seed, cfg.paper_literal_split)?;
    for &i in split.classifier_train_set.iter().chain(&split.classifier_val_set) {
        ensure!(
            samples[i].label.is_some(),
            "sequence {:?} in the classifier split has no terrain label",
            samples[i].id
        );
    }
    if cfg.k > 1 {
        ensure!(
            split.classifier_train_set.len() >= cfg.k,
            "{}-fold validation needs at least {} labeled training sequences, the split has {}",
            cfg.k,
            cfg.k,
            split.classifier_train_set.len()
        );
    }

    let predictor_idx = split.predictor_training_set();
    let norm = if cfg.global_normalization {
        compute_norm_stats(samples)?
    } else {
        compute_norm_stats(&select(samples, &predictor_idx))?
    };
    let normalized = crate::data::apply_normalization(samples, &norm)?;

    let (mut model, stage1_history) = train_stage1(&select(&normalized, &predictor_idx), cfg, None)?;
    model.norm = norm;
    let model = freeze_stage1(model);
    let frozen_stage1 = model.stage1().clone();

    let cls_train = select(&normalized, &split.classifier_train_set);
    let cls_val = select(&normalized, &split.classifier_val_set);
    let kfold = if cfg.k > 1 {
        Some(kfold_stage2(&model, &cls_train, cfg)?)
    } else {
        None
    };
    let (model, stage2_history) = train_stage2(&model, &cls_train, &cls_val, cfg)?;

    let test_samples = select(&normalized, &split.test_set);
    let test = if test_samples.iter().all(|s| s.label.is_some()) {
        Some(evaluate(&model, &test_samples)?)
    } else {
        None
    };
    Ok(TrainingRun {
        model,
        split,
        stage1_history,
        frozen_stage1,
        stage2_history,
        kfold,
        test,
    })
}
