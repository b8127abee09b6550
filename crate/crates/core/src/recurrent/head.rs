use crate::error::{ensure, Result};
use crate::seqcore::{softmax, Matrix, SeededRng};

/// Affine read-out `V·h + c` on top of an LSTM layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearHead {
    pub v: Matrix,
    pub c: Vec<f64>,
}

/// Linear head predicting the next `d`-dimensional frame.
pub type PredictionHead = LinearHead;
/// Linear head producing one logit per terrain class; softmax is applied on top.
pub type ClassificationHead = LinearHead;

impl LinearHead {
    pub fn zeros(outputs: usize, hidden: usize) -> Self {
        Self {
            v: Matrix::zeros(outputs, hidden),
            c: vec![0.0; outputs],
        }
    }

    pub fn init(outputs: usize, hidden: usize, rng: &mut SeededRng) -> Result<Self> {
        ensure!(outputs > 0 && hidden > 0, "head sizes must be positive");
        let bound = (6.0 / (outputs + hidden) as f64).sqrt();
        Ok(Self {
            v: Matrix::uniform(outputs, hidden, bound, rng)?,
            c: vec![0.0; outputs],
        })
    }

    pub fn from_parts(v: Matrix, c: Vec<f64>) -> Result<Self> {
        ensure!(
            v.rows() == c.len(),
            "head bias has {} entries but V has {} rows",
            c.len(),
            v.rows()
        );
        ensure!(c.iter().all(|x| x.is_finite()), "head bias must be finite");
        Ok(Self { v, c })
    }

    pub fn output_size(&self) -> usize {
        self.v.rows()
    }

    pub fn hidden_size(&self) -> usize {
        self.v.cols()
    }

    /// `[V, c]`
    pub fn tensors(&self) -> [&[f64]; 2] {
        [self.v.as_slice(), &self.c]
    }

    pub fn tensors_mut(&mut self) -> [&mut [f64]; 2] {
        [self.v.as_mut_slice(), &mut self.c]
    }

    pub(crate) fn affine(&self, h: &[f64]) -> Vec<f64> {
        let mut out = self.c.clone();
        self.v.matvec_acc(h, &mut out);
        out
    }

    fn check_input(&self, h: &[f64]) -> Result<()> {
        ensure!(
            h.len() == self.hidden_size(),
            "head expects a hidden vector of length {}, got {}",
            self.hidden_size(),
            h.len()
        );
        Ok(())
    }
}

pub fn apply_prediction_head(head: &PredictionHead, h: &[f64]) -> Result<Vec<f64>> {
    head.check_input(h)?;
    Ok(head.affine(h))
}

pub fn apply_classification_head(head: &ClassificationHead, h: &[f64]) -> Result<Vec<f64>> {
    head.check_input(h)?;
    softmax(&head.affine(h))
}
