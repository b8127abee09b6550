//! Finite-difference verification of the BPTT gradients.

use std::fmt;

use crate::error::Result;
use crate::objective::RegularizationSpec;
use crate::recurrent::{bptt, sequence_loss, DropoutSpec, ParamGradients, PenaltyScope, StageParams, Target, TENSOR_NAMES};
use crate::seqcore::SeededRng;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckConfig {
    pub hidden: usize,
    pub input: usize,
    pub steps: usize,
    pub classes: usize,
    pub fd_step: f64,
    pub tolerance: f64,
    /// Entries with `|w|` at or below this are skipped (ℓ1 kink).
    pub kink: f64,
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            hidden: 8,
            input: 4,
            steps: 5,
            classes: 3,
            fd_step: 1e-5,
            tolerance: 1e-5,
            kink: 1e-3,
            seed: 17,
        }
    }
}

/// Denominator floor for the relative error.
pub const RELATIVE_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    Predicting,
    Classifying,
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LossKind::Predicting => "predicting",
            LossKind::Classifying => "classifying",
        })
    }
}

#[derive(Debug, Clone)]
pub struct CaseReport {
    pub loss: LossKind,
    pub lambda: f64,
    pub gamma: f64,
    /// Max relative error per tensor, in `TENSOR_NAMES` order.
    pub per_tensor: Vec<(&'static str, f64)>,
    pub checked: usize,
    pub skipped: usize,
}

impl CaseReport {
    pub fn max_error(&self) -> f64 {
        self.per_tensor.iter().map(|&(_, e)| e).fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub cases: Vec<CaseReport>,
    pub tolerance: f64,
}

impl GradCheckReport {
    pub fn max_error(&self) -> f64 {
        self.cases.iter().map(CaseReport::max_error).fold(0.0, f64::max)
    }

    pub fn passed(&self) -> bool {
        self.max_error() < self.tolerance
    }
}

impl fmt::Display for GradCheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.cases {
            write!(f, "{:<11} lambda={} gamma={}", c.loss, c.lambda, c.gamma)?;
            for (name, e) in &c.per_tensor {
                write!(f, "  {name}={e:.3e}")?;
            }
            writeln!(f, "  ({} checked, {} skipped)", c.checked, c.skipped)?;
        }
        let verdict = if self.passed() { "PASS" } else { "FAIL" };
        write!(f, "max relative error {:.3e} (tolerance {:.0e}): {verdict}", self.max_error(), self.tolerance)
    }
}

fn toy_stage(cfg: &GradCheckConfig, outputs: usize, rng: &mut SeededRng) -> Result<StageParams> {
    let mut s = StageParams::init(cfg.input, cfg.hidden, outputs, rng)?;
    for b in s.lstm.b.iter_mut().chain(s.head.c.iter_mut()) {
        *b = rng.uniform(-0.5, 0.5)?;
    }
    Ok(s)
}

/// The full matrix of cases: both losses, `λ = 0.1` with `γ ∈ {0, 0.5, 1}`, and `λ = 0`.
pub fn run_gradcheck(cfg: &GradCheckConfig) -> Result<GradCheckReport> {
    run_gradcheck_with(cfg, |_| {})
}

/// As [`run_gradcheck`], with `tamper` applied to every analytic gradient
/// before comparison.
pub fn run_gradcheck_with(cfg: &GradCheckConfig, tamper: impl Fn(&mut ParamGradients)) -> Result<GradCheckReport> {
    let mut rng = SeededRng::new(cfg.seed);
    let xs: Vec<Vec<f64>> = (0..cfg.steps + 1)
        .map(|_| (0..cfg.input).map(|_| rng.gaussian(0.0, 1.0)).collect())
        .collect::<Result<_>>()?;
    let predictor = toy_stage(cfg, cfg.input, &mut rng)?;
    let classifier = toy_stage(cfg, cfg.classes, &mut rng)?;
    let label = rng.below(cfg.classes);

    let regs = [(0.1, 0.0), (0.1, 0.5), (0.1, 1.0), (0.0, 0.5)];
    let mut cases = Vec::new();
    for kind in [LossKind::Predicting, LossKind::Classifying] {
        let (stage, inputs, target, scope) = match kind {
            LossKind::Predicting => (
                &predictor,
                &xs[..cfg.steps],
                Target::NextFrames(&xs[1..]),
                PenaltyScope::Recurrent,
            ),
            LossKind::Classifying => (
                &classifier,
                &xs[..cfg.steps],
                Target::Label(label),
                PenaltyScope::RecurrentAndHead,
            ),
        };
        for &(lambda, gamma) in &regs {
            let reg = RegularizationSpec::new(lambda, gamma)?;
            cases.push(check_case(cfg, kind, stage, inputs, target, &reg, scope, &tamper)?);
        }
    }
    Ok(GradCheckReport {
        cases,
        tolerance: cfg.tolerance,
    })
}

#[allow(clippy::too_many_arguments)]
fn check_case(
    cfg: &GradCheckConfig,
    loss: LossKind,
    stage: &StageParams,
    xs: &[Vec<f64>],
    target: Target<'_>,
    reg: &RegularizationSpec,
    scope: PenaltyScope,
    tamper: &impl Fn(&mut ParamGradients),
) -> Result<CaseReport> {
    let (_, mut grads) = bptt(stage, xs, target, reg, scope, &mut DropoutSpec::eval())?;
    tamper(&mut grads);
    let analytic: Vec<Vec<f64>> = grads.tensors().iter().map(|t| t.to_vec()).collect();

    let mut probe = stage.clone();
    let mut per_tensor = Vec::new();
    let (mut checked, mut skipped) = (0, 0);
    for (ti, name) in TENSOR_NAMES.iter().enumerate() {
        let mut worst = 0.0f64;
        for j in 0..analytic[ti].len() {
            let w = stage.tensors()[ti][j];
            if w.abs() <= cfg.kink {
                skipped += 1;
                continue;
            }
            let mut at = |v: f64| -> Result<f64> {
                probe.tensors_mut()[ti][j] = v;
                Ok(sequence_loss(&probe, xs, target, reg, scope, &mut DropoutSpec::eval())?.total)
            };
            let numeric = (at(w + cfg.fd_step)? - at(w - cfg.fd_step)?) / (2.0 * cfg.fd_step);
            probe.tensors_mut()[ti][j] = w;
            let a = analytic[ti][j];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(RELATIVE_FLOOR);
            worst = worst.max(rel);
            checked += 1;
        }
        per_tensor.push((*name, worst));
    }
    Ok(CaseReport {
        loss,
        lambda: reg.lambda(),
        gamma: reg.gamma(),
        per_tensor,
        checked,
        skipped,
    })
}
