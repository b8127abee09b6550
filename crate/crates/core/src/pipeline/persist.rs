//! Model files.
//!
//! Line-oriented text. After the magic line come `key = value` pairs grouped
//! under `[section]` headers, and a closing `end` line:
//!
//! ```text
//! stacklstm-model
//! format_version = 1
//! gate_order = i,f,g,o
//! stage1_frozen = true
//! stage2_trained = true
//! [config]
//! epochs = 300
//! ...
//! [norm]
//! mean = 22: <values>
//! std = 22: <values>
//! [stage1]
//! W = 800x22: <values>
//! U = 800x200: <values>
//! B = 800: <values>
//! V = 22x200: <values>
//! c = 22: <values>
//! [stage2]
//! ...
//! end
//! ```
//!
//! Tensor values are space-separated at 17 significant digits, which
//! round-trips every `f64` exactly. A file without the `end` line is
//! rejected as truncated.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use crate::data::{format_f64, NormStats};
use crate::error::{Error, Result};
use crate::objective::RegularizationSpec;
use crate::recurrent::{GateOrder, LinearHead, LstmParams, StageParams};
use crate::seqcore::Matrix;

use super::config::TrainConfig;
use super::model::ModelState;

pub const FORMAT_VERSION: u32 = 1;
const MAGIC: &str = "stacklstm-model";

fn fmt_vec(v: &[f64]) -> String {
    let mut s = format!("{}:", v.len());
    for x in v {
        s.push(' ');
        s.push_str(&format_f64(*x));
    }
    s
}

fn fmt_matrix(m: &Matrix) -> String {
    let mut s = format!("{}x{}:", m.rows(), m.cols());
    for x in m.as_slice() {
        s.push(' ');
        s.push_str(&format_f64(*x));
    }
    s
}

fn write_stage<W: Write>(w: &mut W, name: &str, s: &StageParams) -> std::io::Result<()> {
    writeln!(w, "[{name}]")?;
    writeln!(w, "W = {}", fmt_matrix(&s.lstm.w))?;
    writeln!(w, "U = {}", fmt_matrix(&s.lstm.u))?;
    writeln!(w, "B = {}", fmt_vec(&s.lstm.b))?;
    writeln!(w, "V = {}", fmt_matrix(&s.head.v))?;
    writeln!(w, "c = {}", fmt_vec(&s.head.c))
}

pub fn write_model<W: Write>(mut w: W, model: &ModelState) -> Result<()> {
    let c = &model.config;
    writeln!(w, "{MAGIC}")?;
    writeln!(w, "format_version = {FORMAT_VERSION}")?;
    writeln!(w, "gate_order = {}", GateOrder::CANONICAL)?;
    writeln!(w, "stage1_frozen = {}", model.is_stage1_frozen())?;
    writeln!(w, "stage2_trained = {}", model.is_stage2_trained())?;
    writeln!(w, "[config]")?;
    writeln!(w, "epochs = {}", c.epochs)?;
    writeln!(w, "batch_size = {}", c.batch_size)?;
    writeln!(w, "lr = {}", format_f64(c.lr))?;
    writeln!(w, "dropout = {}", format_f64(c.dropout))?;
    writeln!(w, "k = {}", c.k)?;
    writeln!(w, "hidden_size = {}", c.hidden_size)?;
    writeln!(w, "lambda = {}", format_f64(c.reg.lambda()))?;
    writeln!(w, "gamma = {}", format_f64(c.reg.gamma()))?;
    writeln!(w, "seed = {}", c.seed)?;
    writeln!(w, "input_relu = {}", c.input_relu)?;
    writeln!(w, "cascade_mode = {}", c.cascade_mode)?;
    writeln!(w, "paper_literal_split = {}", c.paper_literal_split)?;
    writeln!(w, "global_normalization = {}", c.global_normalization)?;
    writeln!(w, "penalize_head = {}", c.penalize_head)?;
    match c.clip_norm {
        Some(v) => writeln!(w, "clip_norm = {}", format_f64(v))?,
        None => writeln!(w, "clip_norm = none")?,
    }
    writeln!(w, "[norm]")?;
    writeln!(w, "mean = {}", fmt_vec(model.norm.mean()))?;
    writeln!(w, "std = {}", fmt_vec(model.norm.std()))?;
    write_stage(&mut w, "stage1", model.stage1())?;
    write_stage(&mut w, "stage2", model.stage2())?;
    writeln!(w, "end")?;
    w.flush()?;
    Ok(())
}

/// Writes the whole file or nothing: data goes to a sibling temp file first.
pub fn save_model(model: &ModelState, path: &Path) -> Result<()> {
    let tmp = path.with_extension("tmp-write");
    let result = (|| {
        let file = fs::File::create(&tmp)?;
        write_model(std::io::BufWriter::new(file), model)?;
        fs::rename(&tmp, path)?;
        Ok(())
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    result
}

struct Fields {
    map: BTreeMap<String, String>,
}

impl Fields {
    fn take(&mut self, key: &str) -> Result<String> {
        self.map
            .remove(key)
            .ok_or_else(|| Error::Format(format!("missing field {key}")))
    }

    fn parse<T: std::str::FromStr>(&mut self, key: &str) -> Result<T> {
        let raw = self.take(key)?;
        raw.parse()
            .map_err(|_| Error::Format(format!("field {key}: cannot parse {raw:?}")))
    }

    fn values(&mut self, key: &str) -> Result<(Vec<usize>, Vec<f64>)> {
        let raw = self.take(key)?;
        let (shape, body) = raw
            .split_once(':')
            .ok_or_else(|| Error::Format(format!("field {key}: missing shape prefix")))?;
        let dims = shape
            .split('x')
            .map(|d| d.trim().parse::<usize>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|_| Error::Format(format!("field {key}: bad shape {shape:?}")))?;
        let values = body
            .split_ascii_whitespace()
            .map(str::parse::<f64>)
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|_| Error::Format(format!("field {key}: bad number")))?;
        let expected: usize = dims.iter().product();
        if values.len() != expected {
            return Err(Error::Format(format!(
                "field {key}: shape {shape} needs {expected} values, found {}",
                values.len()
            )));
        }
        Ok((dims, values))
    }

    fn vector(&mut self, key: &str) -> Result<Vec<f64>> {
        match self.values(key)? {
            (d, v) if d.len() == 1 => Ok(v),
            _ => Err(Error::Format(format!("field {key} must be a vector"))),
        }
    }

    fn matrix(&mut self, key: &str) -> Result<Matrix> {
        match self.values(key)? {
            (d, v) if d.len() == 2 => Matrix::from_vec(d[0], d[1], v).map_err(|e| Error::Format(e.to_string())),
            _ => Err(Error::Format(format!("field {key} must be a matrix"))),
        }
    }

    fn stage(&mut self, name: &str, order: GateOrder) -> Result<StageParams> {
        let w = self.matrix(&format!("{name}.W"))?;
        let u = self.matrix(&format!("{name}.U"))?;
        let b = self.vector(&format!("{name}.B"))?;
        let v = self.matrix(&format!("{name}.V"))?;
        let c = self.vector(&format!("{name}.c"))?;
        let lstm = LstmParams::from_parts_in_order(w, u, b, order).map_err(|e| Error::Format(e.to_string()))?;
        let head = LinearHead::from_parts(v, c).map_err(|e| Error::Format(e.to_string()))?;
        StageParams::new(lstm, head).map_err(|e| Error::Format(e.to_string()))
    }
}

pub fn read_model<R: Read>(reader: R) -> Result<ModelState> {
    let mut lines = BufReader::new(reader).lines();
    match lines.next() {
        Some(Ok(l)) if l.trim() == MAGIC => {}
        Some(Err(e)) => return Err(e.into()),
        _ => return Err(Error::Format("not a stacklstm model file".into())),
    }
    let mut map = BTreeMap::new();
    let mut section = String::new();
    let mut ended = false;
    for (i, line) in lines.enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if ended {
            return Err(Error::Format("content after end marker".into()));
        }
        if line == "end" {
            ended = true;
        } else if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            section = name.to_string();
        } else {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Format(format!("line {}: expected key = value", i + 2)))?;
            let key = if section.is_empty() {
                k.trim().to_string()
            } else {
                format!("{section}.{}", k.trim())
            };
            if map.insert(key.clone(), v.trim().to_string()).is_some() {
                return Err(Error::Format(format!("duplicate field {key}")));
            }
        }
    }
    if !ended {
        return Err(Error::Format("file is truncated (no end marker)".into()));
    }
    let mut f = Fields { map };
    let version: u32 = f.parse("format_version")?;
    if version != FORMAT_VERSION {
        return Err(Error::Format(format!(
            "unsupported format version {version}, this build reads {FORMAT_VERSION}"
        )));
    }
    let order: GateOrder = f.take("gate_order")?.parse().map_err(|e: Error| Error::Format(e.to_string()))?;
    let frozen: bool = f.parse("stage1_frozen")?;
    let trained: bool = f.parse("stage2_trained")?;

    let lambda: f64 = f.parse("config.lambda")?;
    let gamma: f64 = f.parse("config.gamma")?;
    let clip = f.take("config.clip_norm")?;
    let config = TrainConfig {
        epochs: f.parse("config.epochs")?,
        batch_size: f.parse("config.batch_size")?,
        lr: f.parse("config.lr")?,
        dropout: f.parse("config.dropout")?,
        k: f.parse("config.k")?,
        hidden_size: f.parse("config.hidden_size")?,
        reg: RegularizationSpec::new(lambda, gamma).map_err(|e| Error::Format(e.to_string()))?,
        seed: f.parse("config.seed")?,
        input_relu: f.parse("config.input_relu")?,
        cascade_mode: f
            .take("config.cascade_mode")?
            .parse()
            .map_err(|e: Error| Error::Format(e.to_string()))?,
        paper_literal_split: f.parse("config.paper_literal_split")?,
        global_normalization: f.parse("config.global_normalization")?,
        penalize_head: f.parse("config.penalize_head")?,
        clip_norm: match clip.as_str() {
            "none" => None,
            v => Some(
                v.parse()
                    .map_err(|_| Error::Format(format!("field clip_norm: cannot parse {v:?}")))?,
            ),
        },
    };
    config.validate().map_err(|e| Error::Format(e.to_string()))?;
    let norm = NormStats::new(f.vector("norm.mean")?, f.vector("norm.std")?)
        .map_err(|e| Error::Format(e.to_string()))?;
    let stage1 = f.stage("stage1", order)?;
    let stage2 = f.stage("stage2", order)?;
    if let Some(extra) = f.map.keys().next() {
        return Err(Error::Format(format!("unknown field {extra}")));
    }
    ModelState::from_parts(stage1, stage2, norm, config, frozen, trained).map_err(|e| Error::Format(e.to_string()))
}

pub fn load_model(path: &Path) -> Result<ModelState> {
    read_model(fs::File::open(path)?)
}
