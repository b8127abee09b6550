use std::fmt;
use std::str::FromStr;

use crate::error::{ensure, Error, Result};
use crate::seqcore::{sigmoid, Matrix, SeededRng};

/// One of the four LSTM gate blocks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Gate {
    Input,
    Forget,
    Cell,
    Output,
}

impl Gate {
    fn tag(self) -> char {
        match self {
            Gate::Input => 'i',
            Gate::Forget => 'f',
            Gate::Cell => 'g',
            Gate::Output => 'o',
        }
    }
}

/// Order of the gate blocks inside `W`, `U` and `B`.
///
/// Tensors held by [`LstmParams`] always use [`GateOrder::CANONICAL`]
/// (`i,f,g,o`); other orders only appear when importing foreign layouts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GateOrder(pub [Gate; 4]);

impl GateOrder {
    pub const CANONICAL: GateOrder = GateOrder([Gate::Input, Gate::Forget, Gate::Cell, Gate::Output]);

    fn position(&self, gate: Gate) -> usize {
        self.0.iter().position(|&g| g == gate).expect("gate order is a permutation")
    }
}

impl fmt::Display for GateOrder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tags: Vec<String> = self.0.iter().map(|g| g.tag().to_string()).collect();
        f.write_str(&tags.join(","))
    }
}

impl FromStr for GateOrder {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut gates = Vec::with_capacity(4);
        for part in s.split(',') {
            gates.push(match part.trim() {
                "i" => Gate::Input,
                "f" => Gate::Forget,
                "g" => Gate::Cell,
                "o" => Gate::Output,
                other => return Err(Error::Format(format!("unknown gate tag {other:?}"))),
            });
        }
        ensure!(gates.len() == 4, "gate order {s:?} must name four gates");
        let order = GateOrder([gates[0], gates[1], gates[2], gates[3]]);
        for g in [Gate::Input, Gate::Forget, Gate::Cell, Gate::Output] {
            ensure!(order.0.contains(&g), "gate order {s:?} is not a permutation");
        }
        Ok(order)
    }
}

/// Trainable tensors of one LSTM layer.
///
/// `w` is `4h × d`, `u` is `4h × h` and `b` has `4h` entries, each split
/// into gate blocks of `h` rows in canonical `i,f,g,o` order.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmParams {
    pub w: Matrix,
    pub u: Matrix,
    pub b: Vec<f64>,
    hidden: usize,
    input: usize,
}

impl LstmParams {
    pub fn zeros(input: usize, hidden: usize) -> Self {
        Self {
            w: Matrix::zeros(4 * hidden, input),
            u: Matrix::zeros(4 * hidden, hidden),
            b: vec![0.0; 4 * hidden],
            hidden,
            input,
        }
    }

    /// Glorot-uniform `W` and `U`, zero biases except forget-gate biases of 1.
    pub fn init(input: usize, hidden: usize, rng: &mut SeededRng) -> Result<Self> {
        ensure!(input > 0 && hidden > 0, "LSTM sizes must be positive");
        let w_bound = (6.0 / (input + hidden) as f64).sqrt();
        let u_bound = (6.0 / (2 * hidden) as f64).sqrt();
        let w = Matrix::uniform(4 * hidden, input, w_bound, rng)?;
        let u = Matrix::uniform(4 * hidden, hidden, u_bound, rng)?;
        let mut b = vec![0.0; 4 * hidden];
        b[hidden..2 * hidden].fill(1.0);
        Ok(Self {
            w,
            u,
            b,
            hidden,
            input,
        })
    }

    pub fn from_parts(w: Matrix, u: Matrix, b: Vec<f64>) -> Result<Self> {
        Self::from_parts_in_order(w, u, b, GateOrder::CANONICAL)
    }

    /// Builds parameters from tensors whose gate blocks are laid out in `order`.
    pub fn from_parts_in_order(w: Matrix, u: Matrix, b: Vec<f64>, order: GateOrder) -> Result<Self> {
        ensure!(
            w.rows().is_multiple_of(4) && w.rows() > 0,
            "W must have 4h rows, got {}",
            w.rows()
        );
        let hidden = w.rows() / 4;
        let input = w.cols();
        ensure!(
            u.rows() == 4 * hidden && u.cols() == hidden,
            "U must be {}x{hidden}, got {}x{}",
            4 * hidden,
            u.rows(),
            u.cols()
        );
        ensure!(
            b.len() == 4 * hidden,
            "B must have {} entries, got {}",
            4 * hidden,
            b.len()
        );
        ensure!(b.iter().all(|v| v.is_finite()), "B must be finite");
        let params = Self {
            w,
            u,
            b,
            hidden,
            input,
        };
        Ok(params.reorder(order, GateOrder::CANONICAL))
    }

    /// Copy of the tensors with gate blocks moved from `from` to `to` order.
    pub fn reorder(&self, from: GateOrder, to: GateOrder) -> Self {
        let h = self.hidden;
        let mut out = self.clone();
        for gate in from.0 {
            let src = from.position(gate) * h;
            let dst = to.position(gate) * h;
            for r in 0..h {
                for c in 0..self.input {
                    out.w.set(dst + r, c, self.w.get(src + r, c));
                }
                for c in 0..h {
                    out.u.set(dst + r, c, self.u.get(src + r, c));
                }
                out.b[dst + r] = self.b[src + r];
            }
        }
        out
    }

    pub fn hidden_size(&self) -> usize {
        self.hidden
    }

    pub fn input_size(&self) -> usize {
        self.input
    }

    /// `[W, U, B]`
    pub fn tensors(&self) -> [&[f64]; 3] {
        [self.w.as_slice(), self.u.as_slice(), &self.b]
    }

    pub fn tensors_mut(&mut self) -> [&mut [f64]; 3] {
        [self.w.as_mut_slice(), self.u.as_mut_slice(), &mut self.b]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmState {
    pub h: Vec<f64>,
    pub c: Vec<f64>,
}

impl LstmState {
    pub fn zeros(hidden: usize) -> Self {
        Self {
            h: vec![0.0; hidden],
            c: vec![0.0; hidden],
        }
    }
}

/// Inverted dropout on emitted hidden states.
///
/// In evaluation mode (or with rate 0) the mask is identically one and the
/// generator is never touched.
#[derive(Debug, Clone)]
pub struct DropoutSpec {
    rate: f64,
    training: bool,
    rng: SeededRng,
}

impl DropoutSpec {
    pub fn eval() -> Self {
        Self {
            rate: 0.0,
            training: false,
            rng: SeededRng::new(0),
        }
    }

    pub fn training(rate: f64, rng: SeededRng) -> Result<Self> {
        ensure!(
            (0.0..1.0).contains(&rate),
            "dropout rate must lie in [0, 1), got {rate}"
        );
        Ok(Self {
            rate,
            training: true,
            rng,
        })
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    pub fn is_training(&self) -> bool {
        self.training
    }

    /// Next mask of length `n`, or `None` when dropout is inactive.
    pub fn next_mask(&mut self, n: usize) -> Option<Vec<f64>> {
        if !self.training || self.rate == 0.0 {
            return None;
        }
        let keep = 1.0 / (1.0 - self.rate);
        Some(
            (0..n)
                .map(|_| if self.rng.next_f64() < self.rate { 0.0 } else { keep })
                .collect(),
        )
    }
}

/// Activated gates `[i | f | g | o]` and the new state for one step.
pub(crate) fn step_raw(p: &LstmParams, x: &[f64], h_prev: &[f64], c_prev: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let h = p.hidden;
    let mut gates = p.b.clone();
    p.w.matvec_acc(x, &mut gates);
    p.u.matvec_acc(h_prev, &mut gates);
    for (k, a) in gates.iter_mut().enumerate() {
        *a = if (2 * h..3 * h).contains(&k) { a.tanh() } else { sigmoid(*a) };
    }
    let mut c = vec![0.0; h];
    let mut hs = vec![0.0; h];
    for j in 0..h {
        let (i, f, g, o) = (gates[j], gates[h + j], gates[2 * h + j], gates[3 * h + j]);
        c[j] = f * c_prev[j] + i * g;
        hs[j] = o * c[j].tanh();
    }
    (gates, c, hs)
}

pub fn lstm_step(p: &LstmParams, x: &[f64], s: &LstmState) -> Result<LstmState> {
    ensure!(
        x.len() == p.input,
        "LSTM input has length {} but the layer expects {}",
        x.len(),
        p.input
    );
    ensure!(
        s.h.len() == p.hidden && s.c.len() == p.hidden,
        "LSTM state sizes ({}, {}) do not match hidden size {}",
        s.h.len(),
        s.c.len(),
        p.hidden
    );
    let (_, c, h) = step_raw(p, x, &s.h, &s.c);
    Ok(LstmState { h, c })
}

/// Cached forward pass over one sequence.
#[derive(Debug, Clone)]
pub struct LstmTrace {
    pub(crate) inputs: Vec<Vec<f64>>,
    pub(crate) gates: Vec<Vec<f64>>,
    pub(crate) cells: Vec<Vec<f64>>,
    pub(crate) hidden: Vec<Vec<f64>>,
    pub(crate) outputs: Vec<Vec<f64>>,
    pub(crate) masks: Option<Vec<Vec<f64>>>,
}

impl LstmTrace {
    pub fn len(&self) -> usize {
        self.hidden.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hidden.is_empty()
    }

    /// Hidden states after dropout, one per step.
    pub fn outputs(&self) -> &[Vec<f64>] {
        &self.outputs
    }

    /// Undropped states `s_1..s_T`.
    pub fn states(&self) -> Vec<LstmState> {
        self.hidden
            .iter()
            .zip(&self.cells)
            .map(|(h, c)| LstmState {
                h: h.clone(),
                c: c.clone(),
            })
            .collect()
    }

    pub fn into_outputs(self) -> Vec<Vec<f64>> {
        self.outputs
    }
}

/// Runs the layer from the zero state over `xs`.
pub fn lstm_forward(p: &LstmParams, xs: &[Vec<f64>], dropout: &mut DropoutSpec) -> Result<LstmTrace> {
    ensure!(!xs.is_empty(), "LSTM forward over an empty sequence");
    for (t, x) in xs.iter().enumerate() {
        ensure!(
            x.len() == p.input,
            "frame {t} has length {} but the layer expects {}",
            x.len(),
            p.input
        );
    }
    let h = p.hidden;
    let n = xs.len();
    let mut trace = LstmTrace {
        inputs: xs.to_vec(),
        gates: Vec::with_capacity(n),
        cells: Vec::with_capacity(n),
        hidden: Vec::with_capacity(n),
        outputs: Vec::with_capacity(n),
        masks: None,
    };
    let mut masks = Vec::new();
    let zeros = vec![0.0; h];
    for x in xs {
        let (h_prev, c_prev) = match (trace.hidden.last(), trace.cells.last()) {
            (Some(hp), Some(cp)) => (hp.as_slice(), cp.as_slice()),
            _ => (zeros.as_slice(), zeros.as_slice()),
        };
        let (gates, c, hs) = step_raw(p, x, h_prev, c_prev);
        let out = match dropout.next_mask(h) {
            Some(mask) => {
                let dropped = hs.iter().zip(&mask).map(|(a, m)| a * m).collect();
                masks.push(mask);
                dropped
            }
            None => hs.clone(),
        };
        trace.gates.push(gates);
        trace.cells.push(c);
        trace.hidden.push(hs);
        trace.outputs.push(out);
    }
    if !masks.is_empty() {
        trace.masks = Some(masks);
    }
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sig(x: f64) -> f64 {
        1.0 / (1.0 + (-x).exp())
    }

    /// Scalar transcription of the recurrence with explicit gate offsets.
    fn reference_step(p: &LstmParams, x: &[f64], h0: &[f64], c0: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let hs = p.hidden_size();
        let pre = |gate: usize, j: usize| {
            let row = gate * hs + j;
            let mut a = p.b[row];
            for k in 0..x.len() {
                a += p.w.get(row, k) * x[k];
            }
            for k in 0..hs {
                a += p.u.get(row, k) * h0[k];
            }
            a
        };
        let mut h = vec![0.0; hs];
        let mut c = vec![0.0; hs];
        for j in 0..hs {
            let i = sig(pre(0, j));
            let f = sig(pre(1, j));
            let g = pre(2, j).tanh();
            let o = sig(pre(3, j));
            c[j] = f * c0[j] + i * g;
            h[j] = o * c[j].tanh();
        }
        (h, c)
    }

    #[test]
    fn zero_params_zero_state_stays_zero() {
        let p = LstmParams::zeros(3, 2);
        let s = lstm_step(&p, &[4.0, -1.0, 9.0], &LstmState::zeros(2)).unwrap();
        assert_eq!(s, LstmState::zeros(2));
    }

    #[test]
    fn zero_params_unit_cell() {
        let p = LstmParams::zeros(1, 1);
        let s = lstm_step(&p, &[0.3], &LstmState { h: vec![0.0], c: vec![1.0] }).unwrap();
        assert_eq!(s.c, vec![0.5]);
        assert!((s.h[0] - 0.2310585786).abs() < 1e-10);
    }

    #[test]
    fn matches_scalar_reference() {
        let mut rng = SeededRng::new(17);
        let p = LstmParams::init(4, 5, &mut rng).unwrap();
        let x: Vec<f64> = (0..4).map(|_| rng.uniform(-1.0, 1.0).unwrap()).collect();
        let h0: Vec<f64> = (0..5).map(|_| rng.uniform(-1.0, 1.0).unwrap()).collect();
        let c0: Vec<f64> = (0..5).map(|_| rng.uniform(-1.0, 1.0).unwrap()).collect();
        let s = lstm_step(&p, &x, &LstmState { h: h0.clone(), c: c0.clone() }).unwrap();
        let (h, c) = reference_step(&p, &x, &h0, &c0);
        for j in 0..5 {
            assert!((s.h[j] - h[j]).abs() < 1e-14);
            assert!((s.c[j] - c[j]).abs() < 1e-14);
        }
    }

    #[test]
    fn step_dimension_errors() {
        let p = LstmParams::zeros(3, 2);
        assert!(lstm_step(&p, &[1.0], &LstmState::zeros(2)).is_err());
        assert!(lstm_step(&p, &[1.0, 2.0, 3.0], &LstmState::zeros(3)).is_err());
        assert!(lstm_forward(&p, &[], &mut DropoutSpec::eval()).is_err());
    }

    #[test]
    fn forward_of_one_step_is_a_step() {
        let mut rng = SeededRng::new(2);
        let p = LstmParams::init(3, 4, &mut rng).unwrap();
        let x = vec![0.5, -0.2, 0.1];
        let trace = lstm_forward(&p, &[x.clone()], &mut DropoutSpec::eval()).unwrap();
        let s = lstm_step(&p, &x, &LstmState::zeros(4)).unwrap();
        assert_eq!(trace.states(), vec![s]);
    }

    #[test]
    fn zero_params_give_zero_hidden_for_any_input() {
        let p = LstmParams::zeros(2, 3);
        let xs: Vec<Vec<f64>> = (0..6).map(|t| vec![t as f64, -(t as f64)]).collect();
        let trace = lstm_forward(&p, &xs, &mut DropoutSpec::eval()).unwrap();
        assert!(trace.outputs().iter().all(|h| h.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn zero_rate_training_equals_eval() {
        let mut rng = SeededRng::new(8);
        let p = LstmParams::init(3, 4, &mut rng).unwrap();
        let xs: Vec<Vec<f64>> = (0..5).map(|t| vec![t as f64 * 0.1, 0.2, -0.3]).collect();
        let a = lstm_forward(&p, &xs, &mut DropoutSpec::eval()).unwrap();
        let mut train = DropoutSpec::training(0.0, SeededRng::new(1)).unwrap();
        let b = lstm_forward(&p, &xs, &mut train).unwrap();
        assert_eq!(a.outputs(), b.outputs());
        let c = lstm_forward(&p, &xs, &mut DropoutSpec::eval()).unwrap();
        assert_eq!(a.outputs(), c.outputs());
    }

    #[test]
    fn inverted_dropout_preserves_expectation() {
        let mut spec = DropoutSpec::training(0.2, SeededRng::new(99)).unwrap();
        let n = 10_000;
        let mut sum = 0.0;
        for _ in 0..n {
            sum += spec.next_mask(1).unwrap()[0];
        }
        let mean = sum / n as f64;
        assert!((mean - 1.0).abs() < 0.02, "mean mask {mean}");
        assert!(DropoutSpec::training(1.0, SeededRng::new(0)).is_err());
    }

    #[test]
    fn gate_permutation_round_trips() {
        let mut rng = SeededRng::new(23);
        let p = LstmParams::init(3, 2, &mut rng).unwrap();
        let foreign: GateOrder = "o,g,i,f".parse().unwrap();
        let permuted = p.reorder(GateOrder::CANONICAL, foreign);
        assert_ne!(permuted, p);
        let back = LstmParams::from_parts_in_order(permuted.w, permuted.u, permuted.b, foreign).unwrap();
        let xs: Vec<Vec<f64>> = (0..4).map(|t| vec![0.1 * t as f64, -0.5, 0.3]).collect();
        let a = lstm_forward(&p, &xs, &mut DropoutSpec::eval()).unwrap();
        let b = lstm_forward(&back, &xs, &mut DropoutSpec::eval()).unwrap();
        assert_eq!(a.outputs(), b.outputs());
        assert_eq!(GateOrder::CANONICAL.to_string(), "i,f,g,o");
        assert!("i,f,g".parse::<GateOrder>().is_err());
        assert!("i,f,g,g".parse::<GateOrder>().is_err());
    }

    #[test]
    fn init_sets_forget_bias() {
        let p = LstmParams::init(5, 3, &mut SeededRng::new(4)).unwrap();
        assert_eq!(&p.b[0..3], &[0.0; 3]);
        assert_eq!(&p.b[3..6], &[1.0; 3]);
        assert_eq!(&p.b[6..12], &[0.0; 6]);
        let bound = (6.0f64 / 8.0).sqrt();
        assert!(p.w.as_slice().iter().all(|v| v.abs() <= bound));
    }
}
