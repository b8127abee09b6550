//! Sensor CSV ingestion and emission.
//!
//! Canonical layout, one row per time step:
//!
//! ```text
//! seq_id,t,f0,...,f11,ax,ay,az,gx,gy,gz,qw,qx,qy,qz,label
//! ```
//!
//! `t` is a non-negative integer strictly increasing within a `seq_id`, and
//! `label` is a lowercase terrain name or empty. The label column may be
//! omitted entirely for unlabeled recordings. Feature sets other than the
//! canonical 22 channels use generic names `x0..x{n-1}`. Files with other
//! column names are read through a [`HeaderMap`].

use std::collections::HashMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

use super::frame::{SequenceSample, TerrainLabel, FRAME_DIM};

pub const CANONICAL_FEATURES: [&str; FRAME_DIM] = [
    "f0", "f1", "f2", "f3", "f4", "f5", "f6", "f7", "f8", "f9", "f10", "f11", "ax", "ay", "az", "gx", "gy",
    "gz", "qw", "qx", "qy", "qz",
];

/// Maps canonical column names to the names used by a foreign file.
///
/// Text form: one `canonical = source` pair per line; `#` starts a comment.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct HeaderMap {
    map: HashMap<String, String>,
}

impl HeaderMap {
    pub fn from_pairs<I, K, V>(pairs: I) -> Self
    where
        I: IntoIterator<Item = (K, V)>,
        K: Into<String>,
        V: Into<String>,
    {
        Self {
            map: pairs.into_iter().map(|(k, v)| (k.into(), v.into())).collect(),
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut map = HashMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::parse(i + 1, "header map lines look like `canonical = source`"))?;
            let k = k.trim();
            if !is_canonical_column(k) {
                return Err(Error::parse(i + 1, format!("{k:?} is not a canonical column")));
            }
            map.insert(k.to_string(), v.trim().to_string());
        }
        Ok(Self { map })
    }

    fn source<'a>(&'a self, canonical: &'a str) -> &'a str {
        self.map.get(canonical).map_or(canonical, String::as_str)
    }
}

fn is_canonical_column(name: &str) -> bool {
    matches!(name, "seq_id" | "t" | "label") || CANONICAL_FEATURES.contains(&name)
}

fn generic_names(dim: usize) -> Vec<String> {
    (0..dim).map(|i| format!("x{i}")).collect()
}

struct Layout {
    width: usize,
    seq: usize,
    t: usize,
    features: Vec<usize>,
    label: Option<usize>,
}

fn resolve_layout(header: &[&str], map: Option<&HeaderMap>) -> Result<Layout> {
    let find = |name: &str| header.iter().position(|h| *h == name);
    if let Some(map) = map {
        let need = |canonical: &str| {
            let src = map.source(canonical);
            find(src).ok_or_else(|| Error::parse(1, format!("column {src:?} (for {canonical}) not found in header")))
        };
        return Ok(Layout {
            width: header.len(),
            seq: need("seq_id")?,
            t: need("t")?,
            features: CANONICAL_FEATURES.iter().map(|c| need(c)).collect::<Result<_>>()?,
            label: find(map.source("label")),
        });
    }

    if header.len() < 3 || header[0] != "seq_id" || header[1] != "t" {
        return Err(Error::parse(1, "header must start with `seq_id,t`"));
    }
    let has_label = header.last() == Some(&"label");
    let end = if has_label { header.len() - 1 } else { header.len() };
    let names = &header[2..end];
    let canonical = names == CANONICAL_FEATURES;
    let generic = !names.is_empty() && names.iter().zip(generic_names(names.len())).all(|(a, b)| *a == b);
    if !canonical && !generic {
        return Err(Error::parse(
            1,
            "unrecognized feature columns; expected the canonical 22 channels, x0..x{n-1}, or a header map",
        ));
    }
    Ok(Layout {
        width: header.len(),
        seq: 0,
        t: 1,
        features: (2..end).collect(),
        label: has_label.then_some(header.len() - 1),
    })
}

struct Pending {
    first_line: usize,
    last_t: u64,
    frames: Vec<Vec<f64>>,
    label: Option<Option<TerrainLabel>>,
}

/// Reads a CSV in canonical or generic layout.
pub fn ingest_csv<R: Read>(reader: R) -> Result<Vec<SequenceSample>> {
    ingest(reader, None)
}

/// Reads a CSV whose columns are renamed per `map`.
pub fn ingest_csv_mapped<R: Read>(reader: R, map: &HeaderMap) -> Result<Vec<SequenceSample>> {
    ingest(reader, Some(map))
}

pub fn read_csv_file(path: &Path, map: Option<&HeaderMap>) -> Result<Vec<SequenceSample>> {
    ingest(File::open(path)?, map)
}

fn ingest<R: Read>(reader: R, map: Option<&HeaderMap>) -> Result<Vec<SequenceSample>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(reader);
    let mut records = rdr.records();
    let header = match records.next() {
        Some(r) => r.map_err(|e| Error::parse(1, e.to_string()))?,
        None => return Err(Error::parse(1, "empty file")),
    };
    let header: Vec<&str> = header.iter().map(str::trim).collect();
    let layout = resolve_layout(&header, map)?;
    let feature_count = layout.features.len();

    let mut order: Vec<String> = Vec::new();
    let mut pending: HashMap<String, Pending> = HashMap::new();
    for rec in records {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            Error::parse(line, e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        if rec.len() == 1 && rec.get(0).is_some_and(|f| f.trim().is_empty()) {
            continue;
        }
        if rec.len() != layout.width {
            let found = rec.len() as isize - (layout.width - feature_count) as isize;
            return Err(Error::parse(
                line,
                format!(
                    "expected {} fields ({feature_count} features), found {} ({} features)",
                    layout.width,
                    rec.len(),
                    found.max(0)
                ),
            ));
        }
        let seq = rec[layout.seq].trim().to_string();
        if seq.is_empty() {
            return Err(Error::parse(line, "empty seq_id"));
        }
        let t: u64 = rec[layout.t]
            .trim()
            .parse()
            .map_err(|_| Error::parse(line, format!("time index {:?} is not a non-negative integer", &rec[layout.t])))?;
        let mut frame = Vec::with_capacity(feature_count);
        for &c in &layout.features {
            let raw = rec[c].trim();
            let v: f64 = raw
                .parse()
                .map_err(|_| Error::parse(line, format!("column {:?}: {raw:?} is not a number", header[c])))?;
            if !v.is_finite() {
                return Err(Error::parse(line, format!("column {:?} is not finite", header[c])));
            }
            frame.push(v);
        }
        let label = match layout.label.map(|c| rec[c].trim()) {
            None | Some("") => None,
            Some(s) => Some(s.parse::<TerrainLabel>().map_err(|e| Error::parse(line, e))?),
        };

        let entry = pending.entry(seq.clone()).or_insert_with(|| {
            order.push(seq.clone());
            Pending {
                first_line: line,
                last_t: 0,
                frames: Vec::new(),
                label: None,
            }
        });
        if !entry.frames.is_empty() && t <= entry.last_t {
            return Err(Error::parse(
                line,
                format!("time index {t} of {seq:?} does not increase (previous {})", entry.last_t),
            ));
        }
        match entry.label {
            None => entry.label = Some(label),
            Some(prev) if prev != label => {
                return Err(Error::parse(line, format!("sequence {seq:?} changes label")));
            }
            Some(_) => {}
        }
        entry.last_t = t;
        entry.frames.push(frame);
    }

    order
        .into_iter()
        .map(|id| {
            let p = pending.remove(&id).expect("every ordered id is pending");
            let line = p.first_line;
            SequenceSample::new(id, p.frames, p.label.flatten()).map_err(|e| Error::parse(line, e.to_string()))
        })
        .collect()
}

/// Writes samples with `t = 0..T-1`, values at 17 significant digits.
///
/// 22-dimensional frames use canonical column names, anything else `x0..`.
pub fn write_csv<W: Write>(writer: W, samples: &[SequenceSample]) -> Result<()> {
    let dim = samples.first().map_or(FRAME_DIM, SequenceSample::dim);
    if let Some(bad) = samples.iter().find(|s| s.dim() != dim) {
        return Err(Error::contract(format!(
            "sequence {:?} has {} features, expected {dim}",
            bad.id,
            bad.dim()
        )));
    }
    let names: Vec<String> = if dim == FRAME_DIM {
        CANONICAL_FEATURES.iter().map(|s| s.to_string()).collect()
    } else {
        generic_names(dim)
    };
    let mut w = csv::Writer::from_writer(writer);
    let csv_err = |e: csv::Error| Error::Io(std::io::Error::other(e));
    let mut header = vec!["seq_id".to_string(), "t".to_string()];
    header.extend(names);
    header.push("label".to_string());
    w.write_record(&header).map_err(csv_err)?;
    let mut row: Vec<String> = Vec::with_capacity(header.len());
    for s in samples {
        for (t, frame) in s.frames().iter().enumerate() {
            row.clear();
            row.push(s.id.clone());
            row.push(t.to_string());
            row.extend(frame.iter().map(|v| format_f64(*v)));
            row.push(s.label.map_or(String::new(), |l| l.name().to_string()));
            w.write_record(&row).map_err(csv_err)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// 17 significant digits; parses back to the identical `f64`.
pub fn format_f64(v: f64) -> String {
    format!("{v:.16e}")
}
