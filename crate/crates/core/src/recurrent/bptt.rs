use crate::error::{ensure, Result};
use crate::objective::{
    accumulate_penalty_gradient, cross_entropy, elastic_net_penalty, LossValue, RegularizationSpec,
};
use crate::seqcore::{argmax, softmax, Matrix, SeededRng};

use super::cell::{lstm_forward, DropoutSpec, LstmParams, LstmTrace};
use super::head::LinearHead;

/// One trainable stage: an LSTM layer and the head reading it out.
#[derive(Debug, Clone, PartialEq)]
pub struct StageParams {
    pub lstm: LstmParams,
    pub head: LinearHead,
}

/// Which tensors of a stage the elastic-net penalty covers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PenaltyScope {
    /// `W`, `U`, `B` only.
    Recurrent,
    /// `W`, `U`, `B` plus the head's `V` and `c`.
    RecurrentAndHead,
}

impl StageParams {
    pub fn init(input: usize, hidden: usize, outputs: usize, rng: &mut SeededRng) -> Result<Self> {
        let lstm = LstmParams::init(input, hidden, rng)?;
        let head = LinearHead::init(outputs, hidden, rng)?;
        Ok(Self { lstm, head })
    }

    pub fn new(lstm: LstmParams, head: LinearHead) -> Result<Self> {
        ensure!(
            head.hidden_size() == lstm.hidden_size(),
            "head reads {} hidden units but the LSTM has {}",
            head.hidden_size(),
            lstm.hidden_size()
        );
        Ok(Self { lstm, head })
    }

    /// `[W, U, B, V, c]`
    pub fn tensors(&self) -> Vec<&[f64]> {
        let [w, u, b] = self.lstm.tensors();
        let [v, c] = self.head.tensors();
        vec![w, u, b, v, c]
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let [w, u, b] = self.lstm.tensors_mut();
        let [v, c] = self.head.tensors_mut();
        vec![w, u, b, v, c]
    }

    pub fn penalized_tensors(&self, scope: PenaltyScope) -> Vec<&[f64]> {
        let mut t = self.tensors();
        if scope == PenaltyScope::Recurrent {
            t.truncate(3);
        }
        t
    }

    pub fn penalty(&self, reg: &RegularizationSpec, scope: PenaltyScope) -> f64 {
        elastic_net_penalty(&self.penalized_tensors(scope), reg)
    }
}

pub const TENSOR_NAMES: [&str; 5] = ["W", "U", "B", "V", "c"];

/// Gradients laid out like [`StageParams::tensors`].
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGradients {
    pub dw: Matrix,
    pub du: Matrix,
    pub db: Vec<f64>,
    pub dv: Matrix,
    pub dc: Vec<f64>,
}

impl ParamGradients {
    pub fn zeros_like(p: &StageParams) -> Self {
        Self {
            dw: Matrix::zeros(p.lstm.w.rows(), p.lstm.w.cols()),
            du: Matrix::zeros(p.lstm.u.rows(), p.lstm.u.cols()),
            db: vec![0.0; p.lstm.b.len()],
            dv: Matrix::zeros(p.head.v.rows(), p.head.v.cols()),
            dc: vec![0.0; p.head.c.len()],
        }
    }

    pub fn tensors(&self) -> Vec<&[f64]> {
        vec![
            self.dw.as_slice(),
            self.du.as_slice(),
            &self.db,
            self.dv.as_slice(),
            &self.dc,
        ]
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        vec![
            self.dw.as_mut_slice(),
            self.du.as_mut_slice(),
            &mut self.db,
            self.dv.as_mut_slice(),
            &mut self.dc,
        ]
    }

    pub(crate) fn add_penalty(&mut self, p: &StageParams, reg: &RegularizationSpec, scope: PenaltyScope) {
        let params = p.penalized_tensors(scope);
        let mut grads = self.tensors_mut();
        grads.truncate(params.len());
        accumulate_penalty_gradient(&params, &mut grads, reg);
    }
}

/// What a sequence is scored against.
#[derive(Debug, Clone, Copy)]
pub enum Target<'a> {
    /// Next-frame regression: `targets[t]` is the frame that should follow input `t`.
    NextFrames(&'a [Vec<f64>]),
    /// Whole-sequence class label, scored at every step.
    Label(usize),
}

/// Per-sequence results of a forward pass.
#[derive(Debug, Clone)]
pub struct SequenceEval {
    /// Data term averaged over the scored steps.
    pub data_loss: f64,
    pub steps: usize,
    /// Time-averaged class distribution (classification only).
    pub mean_distribution: Option<Vec<f64>>,
    /// Steps whose own argmax matched the label (classification only).
    pub correct_steps: usize,
}

/// Forward pass over one sequence, and when `grads` is given, backpropagation
/// of `weight · data_loss` into it.
pub(crate) fn run_sequence(
    stage: &StageParams,
    xs: &[Vec<f64>],
    target: Target<'_>,
    dropout: &mut DropoutSpec,
    weight: f64,
    grads: Option<&mut ParamGradients>,
) -> Result<SequenceEval> {
    let outputs_dim = stage.head.output_size();
    match target {
        Target::NextFrames(ts) => {
            ensure!(
                ts.len() == xs.len(),
                "{} inputs but {} next-frame targets",
                xs.len(),
                ts.len()
            );
            for t in ts {
                ensure!(
                    t.len() == outputs_dim,
                    "target frame has length {} but the head predicts {}",
                    t.len(),
                    outputs_dim
                );
            }
        }
        Target::Label(c) => ensure!(
            c < outputs_dim,
            "label {c} out of range for {outputs_dim} classes"
        ),
    }
    let trace = lstm_forward(&stage.lstm, xs, dropout)?;
    let steps = xs.len();
    let mut d_logits: Vec<Vec<f64>> = Vec::with_capacity(steps);
    let mut eval = SequenceEval {
        data_loss: 0.0,
        steps,
        mean_distribution: None,
        correct_steps: 0,
    };
    match target {
        Target::NextFrames(ts) => {
            let scale = 2.0 * weight / (outputs_dim * steps) as f64;
            let mut total = 0.0;
            for (out, x) in trace.outputs.iter().zip(ts) {
                let pred = stage.head.affine(out);
                let mut d = Vec::with_capacity(outputs_dim);
                for (p, x) in pred.iter().zip(x) {
                    let e = p - x;
                    total += e * e;
                    d.push(scale * e);
                }
                d_logits.push(d);
            }
            eval.data_loss = total / (outputs_dim * steps) as f64;
        }
        Target::Label(label) => {
            let scale = weight / steps as f64;
            let mut total = 0.0;
            let mut mean = vec![0.0; outputs_dim];
            for out in &trace.outputs {
                let p = softmax(&stage.head.affine(out))?;
                total += cross_entropy(label, &p)?;
                if argmax(&p) == label {
                    eval.correct_steps += 1;
                }
                for (m, v) in mean.iter_mut().zip(&p) {
                    *m += v;
                }
                let mut d: Vec<f64> = p.iter().map(|v| scale * v).collect();
                d[label] -= scale;
                d_logits.push(d);
            }
            for m in &mut mean {
                *m /= steps as f64;
            }
            eval.data_loss = total / steps as f64;
            eval.mean_distribution = Some(mean);
        }
    }
    if let Some(g) = grads {
        backward(stage, &trace, &d_logits, g);
    }
    Ok(eval)
}

/// Backpropagation through time given `dL/dlogits` at every step.
fn backward(stage: &StageParams, trace: &LstmTrace, d_logits: &[Vec<f64>], g: &mut ParamGradients) {
    let p = &stage.lstm;
    let h = p.hidden_size();
    let steps = trace.len();
    let mut dh_next = vec![0.0; h];
    let mut dc_next = vec![0.0; h];
    let mut d_pre = vec![0.0; 4 * h];
    let zeros = vec![0.0; h];
    for t in (0..steps).rev() {
        let dl = &d_logits[t];
        g.dv.add_outer(dl, &trace.outputs[t]);
        for (c, d) in g.dc.iter_mut().zip(dl) {
            *c += d;
        }
        let mut dh = vec![0.0; h];
        stage.head.v.matvec_t_acc(dl, &mut dh);
        if let Some(masks) = &trace.masks {
            for (d, m) in dh.iter_mut().zip(&masks[t]) {
                *d *= m;
            }
        }
        for (d, n) in dh.iter_mut().zip(&dh_next) {
            *d += n;
        }

        let gates = &trace.gates[t];
        let c = &trace.cells[t];
        let c_prev = if t > 0 { &trace.cells[t - 1] } else { &zeros };
        let h_prev = if t > 0 { &trace.hidden[t - 1] } else { &zeros };
        for j in 0..h {
            let (i, f, gg, o) = (gates[j], gates[h + j], gates[2 * h + j], gates[3 * h + j]);
            let tc = c[j].tanh();
            let d_o = dh[j] * tc;
            let dc = dh[j] * o * (1.0 - tc * tc) + dc_next[j];
            let d_i = dc * gg;
            let d_g = dc * i;
            let d_f = dc * c_prev[j];
            dc_next[j] = dc * f;
            d_pre[j] = d_i * i * (1.0 - i);
            d_pre[h + j] = d_f * f * (1.0 - f);
            d_pre[2 * h + j] = d_g * (1.0 - gg * gg);
            d_pre[3 * h + j] = d_o * o * (1.0 - o);
        }
        g.dw.add_outer(&d_pre, &trace.inputs[t]);
        g.du.add_outer(&d_pre, h_prev);
        for (b, d) in g.db.iter_mut().zip(&d_pre) {
            *b += d;
        }
        dh_next.fill(0.0);
        p.u.matvec_t_acc(&d_pre, &mut dh_next);
    }
}

/// Loss and exact gradients for one sequence, penalty included.
pub fn bptt(
    stage: &StageParams,
    xs: &[Vec<f64>],
    target: Target<'_>,
    reg: &RegularizationSpec,
    scope: PenaltyScope,
    dropout: &mut DropoutSpec,
) -> Result<(LossValue, ParamGradients)> {
    let mut grads = ParamGradients::zeros_like(stage);
    let eval = run_sequence(stage, xs, target, dropout, 1.0, Some(&mut grads))?;
    grads.add_penalty(stage, reg, scope);
    Ok((LossValue::new(eval.data_loss, stage.penalty(reg, scope)), grads))
}

/// Loss only; same value `bptt` reports.
pub fn sequence_loss(
    stage: &StageParams,
    xs: &[Vec<f64>],
    target: Target<'_>,
    reg: &RegularizationSpec,
    scope: PenaltyScope,
    dropout: &mut DropoutSpec,
) -> Result<LossValue> {
    let eval = run_sequence(stage, xs, target, dropout, 1.0, None)?;
    Ok(LossValue::new(eval.data_loss, stage.penalty(reg, scope)))
}
