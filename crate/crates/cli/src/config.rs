//! Experiment configuration files.
//!
//! TOML with dotted sections. Angles are in degrees. Unknown keys anywhere are
//! rejected.
//!
//! ```toml
//! n_trials = 100000
//! seed = 42
//!
//! [model]
//! kind = "factorizable-instrument"   # bell-deterministic | factorizable-instrument
//!                                    # | time-tagged-anticorrelated | setting-pair-dependent
//! noise = 0.1                        # factorizable-instrument only
//!
//! [model.source]
//! kind = "uniform-discrete"          # uniform-angle | uniform-discrete | discrete
//! size = 16                          # uniform-discrete; discrete takes `weights = [...]`
//!
//! [quad]
//! a = 0.0
//! b = 45.0
//! c = 135.0
//! d = 90.0
//!
//! [outputs]                          # optional, relative to --out
//! trial_log = "trials.csv"
//! report = "report.json"
//! table = "table.json"
//! ```

use std::path::{Path, PathBuf};

use bell_lab::{HiddenVariableModel, ModelSpec, SettingQuad};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadDegrees {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

impl QuadDegrees {
    pub fn to_quad(self) -> SettingQuad {
        SettingQuad::from_degrees(self.a, self.b, self.c, self.d)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Outputs {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trial_log: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub table: Option<PathBuf>,
}

/// A 64-bit seed. TOML integers are signed, so seeds of 2^63 and above are
/// written as decimal strings.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Seed(pub u64);

impl Serialize for Seed {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match i64::try_from(self.0) {
            Ok(v) => s.serialize_i64(v),
            Err(_) => s.serialize_str(&self.0.to_string()),
        }
    }
}

impl<'de> Deserialize<'de> for Seed {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Int(i64),
            Str(String),
        }
        match Raw::deserialize(d)? {
            Raw::Int(v) => u64::try_from(v).map(Seed).map_err(|_| {
                serde::de::Error::custom(format!("seed must be non-negative, got {v}"))
            }),
            Raw::Str(s) => s.parse().map(Seed).map_err(|_| {
                serde::de::Error::custom(format!("seed {s:?} is not a 64-bit unsigned integer"))
            }),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub n_trials: u64,
    pub seed: Seed,
    pub model: ModelSpec,
    pub quad: QuadDegrees,
    #[serde(default, skip_serializing_if = "is_default_outputs")]
    pub outputs: Outputs,
}

fn is_default_outputs(o: &Outputs) -> bool {
    *o == Outputs::default()
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let config: Self = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            CliError::Config(msg) => CliError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    /// Structural checks (exit 2) followed by model checks (exit 3).
    pub fn validate(&self) -> Result<(), CliError> {
        if self.n_trials == 0 {
            return Err(CliError::Config("n_trials: must be at least 1".into()));
        }
        for (key, v) in [
            ("quad.a", self.quad.a),
            ("quad.b", self.quad.b),
            ("quad.c", self.quad.c),
            ("quad.d", self.quad.d),
        ] {
            if !v.is_finite() {
                return Err(CliError::Config(format!("{key}: angle must be finite")));
            }
        }
        if let Some(eps) = self.model.noise {
            if !eps.is_finite() {
                return Err(CliError::Config("model.noise: must be finite".into()));
            }
        }
        self.model.validate()?;
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// SHA-256 of the canonical re-serialization.
    pub fn digest(&self) -> String {
        bell_lab::sha256_hex(self.to_toml().as_bytes())
    }

    pub fn quad(&self) -> SettingQuad {
        self.quad.to_quad()
    }
}
