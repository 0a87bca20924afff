use std::path::{Path, PathBuf};

use basecal_core::basepose::OrThreshold;
use basecal_core::geometry::RigidTransform;
use basecal_core::registration::MatchParams;
use basecal_core::synth::SynthParams;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::formats::read_json;
use crate::io::Units;

/// Settings shared by every subcommand. Loaded from JSON, then overridden by flags.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SessionConfig {
    /// Reference model cloud of the robot base.
    pub model: Option<PathBuf>,
    /// `^Ref′_Ref T` of the model cloud, when it was moved away from the raw base frame.
    pub model_adjust: Option<RigidTransform>,
    pub dh: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
    pub match_params: MatchParams,
    pub synth: SynthParams,
    pub or_threshold: OrThreshold,
    /// Seed for every randomized step; replaces `synth.seed` when set.
    pub seed: Option<u64>,
    /// Units of input clouds that do not declare their own.
    pub units: Option<Units>,
}

impl SessionConfig {
    /// Reads a config file. Relative paths inside it are taken relative to the file.
    pub fn load(path: &Path) -> Result<Self> {
        let mut cfg: SessionConfig = read_json(path)?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut cfg.model, &mut cfg.dh, &mut cfg.output_dir].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Checks parameters and that every referenced input file exists.
    pub fn validate(&self) -> Result<()> {
        for (field, path) in [("model", &self.model), ("dh", &self.dh)] {
            if let Some(p) = path {
                if !p.is_file() {
                    return Err(Error::config(field, format!("{} does not exist", p.display())));
                }
            }
        }
        self.match_params
            .validate()
            .map_err(|e| Error::config("match_params", e.to_string()))?;
        if let Some(adjust) = &self.model_adjust {
            if !adjust.is_rigid(1e-9) {
                return Err(Error::config("model_adjust", "must be a rigid transform"));
            }
        }
        match self.or_threshold {
            OrThreshold::Relative(f) if !(f > 0.0 && f <= 1.0) => {
                Err(Error::config("or_threshold", "relative threshold must lie in (0, 1]"))
            }
            OrThreshold::Absolute(v) if !(0.0..=1.0).contains(&v) => {
                Err(Error::config("or_threshold", "absolute threshold must lie in [0, 1]"))
            }
            _ => Ok(()),
        }
    }

    /// Synthesis parameters with the session seed applied.
    pub fn synth_params(&self) -> SynthParams {
        let mut p = self.synth.clone();
        if let Some(seed) = self.seed {
            p.seed = seed;
        }
        p
    }

    /// The named path, or a config error naming the field.
    pub fn require<'a>(&self, field: &str, value: &'a Option<PathBuf>) -> Result<&'a Path> {
        value
            .as_deref()
            .ok_or_else(|| Error::config(field, "is required (set it in the config or pass the flag)"))
    }
}
