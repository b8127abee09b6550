use std::fmt;
use std::str::FromStr;

use crate::error::{ensure, Error, Result};

/// Terrain classes with stable integer codes in declaration order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TerrainLabel {
    Concrete,
    Grassy,
    Gravel,
    Mulch,
    Dirt,
    Sandy,
}

impl TerrainLabel {
    pub const COUNT: usize = 6;
    pub const ALL: [TerrainLabel; 6] = [
        TerrainLabel::Concrete,
        TerrainLabel::Grassy,
        TerrainLabel::Gravel,
        TerrainLabel::Mulch,
        TerrainLabel::Dirt,
        TerrainLabel::Sandy,
    ];

    pub fn code(self) -> usize {
        self as usize
    }

    pub fn from_code(code: usize) -> Result<Self> {
        Self::ALL
            .get(code)
            .copied()
            .ok_or_else(|| Error::contract(format!("terrain code {code} out of range")))
    }

    pub fn name(self) -> &'static str {
        match self {
            TerrainLabel::Concrete => "concrete",
            TerrainLabel::Grassy => "grassy",
            TerrainLabel::Gravel => "gravel",
            TerrainLabel::Mulch => "mulch",
            TerrainLabel::Dirt => "dirt",
            TerrainLabel::Sandy => "sandy",
        }
    }
}

impl fmt::Display for TerrainLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TerrainLabel {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Self::ALL
            .iter()
            .copied()
            .find(|l| l.name() == s)
            .ok_or_else(|| format!("unknown terrain label {s:?}"))
    }
}

/// Feature count of one canonical frame.
pub const FRAME_DIM: usize = 22;

/// One time step of sensor readings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureFrame {
    /// Four feet × three force axes.
    pub force: [f64; 12],
    pub accel: [f64; 3],
    pub gyro: [f64; 3],
    /// Orientation quaternion `w, x, y, z`.
    pub orientation: [f64; 4],
}

impl FeatureFrame {
    /// Flattens in field order: force, accel, gyro, orientation.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(FRAME_DIM);
        v.extend_from_slice(&self.force);
        v.extend_from_slice(&self.accel);
        v.extend_from_slice(&self.gyro);
        v.extend_from_slice(&self.orientation);
        v
    }

    pub fn from_slice(v: &[f64]) -> Result<Self> {
        ensure!(
            v.len() == FRAME_DIM,
            "a feature frame has {FRAME_DIM} entries, got {}",
            v.len()
        );
        let mut f = FeatureFrame {
            force: [0.0; 12],
            accel: [0.0; 3],
            gyro: [0.0; 3],
            orientation: [0.0; 4],
        };
        f.force.copy_from_slice(&v[0..12]);
        f.accel.copy_from_slice(&v[12..15]);
        f.gyro.copy_from_slice(&v[15..18]);
        f.orientation.copy_from_slice(&v[18..22]);
        Ok(f)
    }
}

/// A variable-length run of frames with an optional terrain label.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceSample {
    pub id: String,
    frames: Vec<Vec<f64>>,
    pub label: Option<TerrainLabel>,
}

impl SequenceSample {
    pub fn new(id: impl Into<String>, frames: Vec<Vec<f64>>, label: Option<TerrainLabel>) -> Result<Self> {
        let id = id.into();
        ensure!(
            frames.len() >= 2,
            "sequence {id:?} has {} frames; at least 2 are required",
            frames.len()
        );
        let dim = frames[0].len();
        ensure!(dim > 0, "sequence {id:?} has empty frames");
        for (t, f) in frames.iter().enumerate() {
            ensure!(
                f.len() == dim,
                "sequence {id:?} frame {t} has {} entries, expected {dim}",
                f.len()
            );
            ensure!(
                f.iter().all(|v| v.is_finite()),
                "sequence {id:?} frame {t} has a non-finite value"
            );
        }
        Ok(Self { id, frames, label })
    }

    pub fn frames(&self) -> &[Vec<f64>] {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.frames[0].len()
    }

    pub(crate) fn map_frames(&self, f: impl Fn(&[f64]) -> Vec<f64>) -> Self {
        Self {
            id: self.id.clone(),
            frames: self.frames.iter().map(|x| f(x)).collect(),
            label: self.label,
        }
    }
}
