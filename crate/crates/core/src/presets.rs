//! Checked-in experiment configurations.
//!
//! A preset is a small TOML file naming the sources and the imaging
//! parameters. Unknown keys are rejected.

use std::path::Path;

use num_complex::Complex64;
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::microscopy::PsfModel;
use crate::model::ParameterSet;

const BUILTIN: &[(&str, &str)] = &[
    ("paper-3spot", include_str!("../presets/paper-3spot.toml")),
    ("sep-q283", include_str!("../presets/sep-q283.toml")),
    ("sep-q057", include_str!("../presets/sep-q057.toml")),
    ("real-like-8", include_str!("../presets/real-like-8.toml")),
];

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Preset {
    pub name: String,
    /// PSF sharpness in inverse squared torus lengths.
    pub b: f64,
    /// Pixels per side.
    pub pixels: usize,
    /// Sampling order.
    pub n: usize,
    pub snr: Option<f64>,
    /// Minimal node separation the sources were constructed for.
    pub target_q: Option<f64>,
    /// Constant offset added to rendered frames.
    pub background: Option<f64>,
    #[serde(rename = "source")]
    pub sources: Vec<Source>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Source {
    pub t: Vec<f64>,
    /// `[re, im]`; defaults to `1`.
    #[serde(default = "unit")]
    pub c: [f64; 2],
}

fn unit() -> [f64; 2] {
    [1.0, 0.0]
}

impl Preset {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse(format!("preset: {e}")))
    }

    /// A built-in preset by name, or a TOML file by path.
    pub fn load(name_or_path: &str) -> Result<Self> {
        if let Some((_, text)) = BUILTIN.iter().find(|(n, _)| *n == name_or_path) {
            return Self::parse(text);
        }
        let path = Path::new(name_or_path);
        if path.exists() {
            return Self::parse(&std::fs::read_to_string(path)?);
        }
        Err(Error::InvalidInput(format!(
            "unknown preset {name_or_path:?}; built-ins are {}",
            builtin_names().join(", ")
        )))
    }

    pub fn params(&self) -> Result<ParameterSet> {
        ParameterSet::new(
            self.sources.iter().map(|s| s.t.clone()).collect(),
            self.sources.iter().map(|s| Complex64::new(s.c[0], s.c[1])).collect(),
        )
    }

    pub fn psf(&self) -> Result<PsfModel> {
        PsfModel::new(self.b, self.sources.first().map_or(0, |s| s.t.len()))
    }
}

pub fn builtin_names() -> Vec<&'static str> {
    BUILTIN.iter().map(|(n, _)| *n).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtins_parse() {
        for name in builtin_names() {
            let p = Preset::load(name).unwrap();
            assert_eq!(p.name, name);
            p.params().unwrap();
            p.psf().unwrap();
        }
    }

    #[test]
    fn separation_presets_hit_target() {
        for name in ["sep-q283", "sep-q057"] {
            let p = Preset::load(name).unwrap();
            let q = crate::model::min_separation(&p.params().unwrap()).unwrap();
            let target = p.target_q.unwrap();
            assert!((q - target).abs() < 5e-4, "{name}: q = {q}");
        }
        let three = Preset::load("paper-3spot").unwrap();
        assert_eq!(three.sources.len(), 3);
        assert_eq!(three.snr, Some(2.554));
    }

    #[test]
    fn unknown_keys_rejected() {
        let text = "name = \"x\"\nb = 1.0\npixels = 8\nn = 1\nbogus = 3\n[[source]]\nt = [0.1]\n";
        assert!(Preset::parse(text).is_err());
        assert!(Preset::load("no-such-preset").is_err());
    }
}
