//! Accuracy, confusion matrices and training-history files.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::data::{format_f64, SequenceSample, TerrainLabel};
use crate::error::{ensure, Error, Result};
use crate::pipeline::{predict_sequence, EpochRecord, ModelState};
use crate::seqcore::argmax;

/// Rows are true classes, columns predicted classes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    classes: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(classes: usize) -> Self {
        Self {
            classes,
            counts: vec![0; classes * classes],
        }
    }

    pub fn from_pairs(truth: &[usize], predicted: &[usize], classes: usize) -> Result<Self> {
        ensure!(
            truth.len() == predicted.len(),
            "{} true labels but {} predictions",
            truth.len(),
            predicted.len()
        );
        let mut cm = Self::new(classes);
        for (&t, &p) in truth.iter().zip(predicted) {
            cm.record(t, p)?;
        }
        Ok(cm)
    }

    pub fn record(&mut self, truth: usize, predicted: usize) -> Result<()> {
        ensure!(
            truth < self.classes && predicted < self.classes,
            "class index out of range for {} classes",
            self.classes
        );
        self.counts[truth * self.classes + predicted] += 1;
        Ok(())
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn get(&self, truth: usize, predicted: usize) -> u64 {
        self.counts[truth * self.classes + predicted]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.classes).map(|i| self.get(i, i)).sum()
    }

    pub fn row_sums(&self) -> Vec<u64> {
        self.counts.chunks(self.classes).map(|r| r.iter().sum()).collect()
    }

    /// `trace / total`; 0 for an empty matrix.
    pub fn accuracy(&self) -> f64 {
        match self.total() {
            0 => 0.0,
            n => self.trace() as f64 / n as f64,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    /// One vote per sequence.
    pub accuracy: f64,
    pub confusion: ConfusionMatrix,
    /// Fraction of individual time steps whose own argmax is correct.
    pub step_accuracy: f64,
}

/// Scores normalized, labeled sequences with [`predict_sequence`].
pub fn evaluate(model: &ModelState, samples: &[SequenceSample]) -> Result<Evaluation> {
    ensure!(!samples.is_empty(), "nothing to evaluate");
    let mut cm = ConfusionMatrix::new(TerrainLabel::COUNT);
    let (mut steps, mut step_hits) = (0usize, 0usize);
    for s in samples {
        let truth = s
            .label
            .ok_or_else(|| Error::contract(format!("sequence {:?} has no terrain label", s.id)))?;
        let (pred, _) = predict_sequence(model, s.frames())?;
        cm.record(truth.code(), pred.code())?;
        for p in model.step_distributions(s.frames())? {
            steps += 1;
            step_hits += usize::from(argmax(&p) == truth.code());
        }
    }
    Ok(Evaluation {
        accuracy: cm.accuracy(),
        confusion: cm,
        step_accuracy: step_hits as f64 / steps as f64,
    })
}

pub const HISTORY_HEADER: &str = "epoch,train_loss,val_loss,train_acc,val_acc";

fn opt(v: Option<f64>) -> String {
    v.map(format_f64).unwrap_or_default()
}

pub fn write_history<W: Write>(mut w: W, history: &[EpochRecord]) -> Result<()> {
    ensure!(!history.is_empty(), "history is empty");
    writeln!(w, "{HISTORY_HEADER}")?;
    for r in history {
        writeln!(
            w,
            "{},{},{},{},{}",
            r.epoch,
            format_f64(r.train_loss),
            format_f64(r.val_loss),
            opt(r.train_acc),
            opt(r.val_acc)
        )?;
    }
    w.flush()?;
    Ok(())
}

/// Writes the per-epoch loss/accuracy CSV.
pub fn emit_history(history: &[EpochRecord], path: &Path) -> Result<()> {
    ensure!(!history.is_empty(), "history is empty");
    write_history(BufWriter::new(File::create(path)?), history)
}

pub fn read_history<R: Read>(r: R) -> Result<Vec<EpochRecord>> {
    let mut lines = BufReader::new(r).lines();
    match lines.next() {
        Some(Ok(h)) if h.trim() == HISTORY_HEADER => {}
        _ => return Err(Error::parse(1, "missing history header")),
    }
    let mut out = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line?;
        let lineno = i + 2;
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 5 {
            return Err(Error::parse(lineno, format!("expected 5 fields, found {}", f.len())));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|_| Error::parse(lineno, format!("bad number {s:?}")));
        let opt_num = |s: &str| if s.is_empty() { Ok(None) } else { num(s).map(Some) };
        out.push(EpochRecord {
            epoch: f[0].parse().map_err(|_| Error::parse(lineno, "bad epoch"))?,
            train_loss: num(f[1])?,
            val_loss: num(f[2])?,
            train_acc: opt_num(f[3])?,
            val_acc: opt_num(f[4])?,
        });
    }
    Ok(out)
}

/// `true\predicted` matrix with terrain names on both axes.
pub fn write_confusion_csv<W: Write>(mut w: W, cm: &ConfusionMatrix) -> Result<()> {
    let names: Vec<&str> = (0..cm.classes())
        .map(|c| TerrainLabel::from_code(c).map_or("?", TerrainLabel::name))
        .collect();
    writeln!(w, "true\\predicted,{}", names.join(","))?;
    for (t, name) in names.iter().enumerate() {
        let row: Vec<String> = (0..cm.classes()).map(|p| cm.get(t, p).to_string()).collect();
        writeln!(w, "{name},{}", row.join(","))?;
    }
    w.flush()?;
    Ok(())
}
