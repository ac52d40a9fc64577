//! Experiment configuration: a flat TOML table, `--set key=value`
//! overrides, defaults, and validation into core problem types.

use std::path::{Path, PathBuf};

use lrsg_core::krylov::{LevelChoice, Physics, PipelineConfig, PreconditionerKind, Problem, StretchRule, TruncationKind};
use lrsg_core::pgd::{PgdConfig, UpdatePolicy};
use lrsg_core::randfield::{KlTruncation, Rect};
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("bad override `{0}`: expected key=value")]
    Override(String),
    #[error("invalid value for `{key}`: {reason}")]
    Invalid { key: &'static str, reason: String },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProblemKind {
    Diffusion,
    ConvectionDiffusion,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TruncationName {
    Multilevel,
    Svd,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PreconditionerName {
    Mean,
    None,
}

/// `"auto"` or an explicit level.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LevelSetting {
    Fixed(usize),
    Named(String),
}

/// `"auto"`, `"none"` or an explicit geometric ratio.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum StretchSetting {
    Ratio(f64),
    Named(String),
}

/// `"never"`, `"at-end"` or an enrichment interval.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum UpdateSetting {
    Every(usize),
    Named(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    LrpMultilevel,
    LrpSvd,
    PgdDirect,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::LrpMultilevel => "lrp-multilevel",
            Variant::LrpSvd => "lrp-svd",
            Variant::PgdDirect => "pgd-direct",
        }
    }
}

/// One experiment. Every field has a default; unknown keys are rejected.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: ProblemKind,
    pub corr_len: f64,
    pub sigma: f64,
    pub mean: f64,
    pub degree: usize,
    /// Variance fraction for choosing `M`; ignored when `kl_terms` is set.
    pub capture: f64,
    pub kl_terms: Option<usize>,
    pub coarse_level: LevelSetting,
    pub points_per_halfwave: f64,
    pub fine_level: usize,
    pub eps: f64,
    pub restart: usize,
    pub max_cycles: usize,
    pub truncation: TruncationName,
    pub preconditioner: PreconditionerName,
    /// `[x_lo, x_hi, y_lo, y_hi]`; defaults to the unit square for diffusion
    /// and `[−1, 1]²` for convection-diffusion.
    pub domain: Option<[f64; 4]>,
    pub viscosity: f64,
    pub wind: [f64; 2],
    pub stretch: StretchSetting,
    /// Defaults to `at-end` for diffusion and every 5 enrichments otherwise.
    pub pgd_update: Option<UpdateSetting>,
    pub pgd_check_every: usize,
    pub max_rank: usize,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub dump_field: bool,
    pub variants: Vec<Variant>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            problem: ProblemKind::Diffusion,
            corr_len: 4.0,
            sigma: 0.05,
            mean: 1.0,
            degree: 3,
            capture: 0.95,
            kl_terms: None,
            coarse_level: LevelSetting::Named("auto".into()),
            points_per_halfwave: 8.0,
            fine_level: 6,
            eps: 1e-5,
            restart: 8,
            max_cycles: 20,
            truncation: TruncationName::Multilevel,
            preconditioner: PreconditionerName::Mean,
            domain: None,
            viscosity: 1.0 / 200.0,
            wind: [0.0, 1.0],
            stretch: StretchSetting::Named("auto".into()),
            pgd_update: None,
            pgd_check_every: 5,
            max_rank: 400,
            seed: 0,
            out_dir: PathBuf::from("out"),
            dump_field: false,
            variants: vec![Variant::LrpMultilevel, Variant::LrpSvd, Variant::PgdDirect],
        }
    }
}

/// Inputs gathered from the command line.
#[derive(Clone, Debug, Default)]
pub struct Sources<'a> {
    pub file: Option<&'a Path>,
    pub overrides: &'a [String],
    pub seed: Option<u64>,
    pub out_dir: Option<&'a Path>,
}

/// Parses an override value as a TOML value, falling back to a bare string.
fn parse_value(raw: &str) -> toml::Value {
    let doc = format!("v = {raw}");
    match doc.parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| toml::Value::String(raw.into())),
        Err(_) => toml::Value::String(raw.into()),
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let table: toml::Table = text.parse().map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
        Self::from_table(table)
    }

    fn from_table(table: toml::Table) -> Result<Self, ConfigError> {
        let cfg: Self = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// File, then `--set` overrides, then the dedicated flags; validated.
    pub fn load(src: &Sources<'_>) -> Result<Self, ConfigError> {
        let mut table = match src.file {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
                    path: path.to_path_buf(),
                    source,
                })?;
                text.parse::<toml::Table>()
                    .map_err(|e| ConfigError::Parse(format!("{}: {e}", path.display())))?
            }
            None => toml::Table::new(),
        };
        for item in src.overrides {
            let (k, v) = item.split_once('=').ok_or_else(|| ConfigError::Override(item.clone()))?;
            let k = k.trim();
            if k.is_empty() {
                return Err(ConfigError::Override(item.clone()));
            }
            table.insert(k.to_string(), parse_value(v.trim()));
        }
        if let Some(seed) = src.seed {
            table.insert("seed".into(), toml::Value::Integer(seed as i64));
        }
        if let Some(dir) = src.out_dir {
            table.insert("out_dir".into(), toml::Value::String(dir.display().to_string()));
        }
        Self::from_table(table)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        fn bad(key: &'static str, reason: impl Into<String>) -> ConfigError {
            ConfigError::Invalid {
                key,
                reason: reason.into(),
            }
        }
        let pos = |key: &'static str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(bad(key, format!("must be a positive finite number, got {v}")))
            }
        };
        pos("corr_len", self.corr_len)?;
        pos("eps", self.eps)?;
        pos("points_per_halfwave", self.points_per_halfwave)?;
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(bad("sigma", format!("must be >= 0, got {}", self.sigma)));
        }
        if !self.mean.is_finite() {
            return Err(bad("mean", "must be finite"));
        }
        if !(self.capture > 0.0 && self.capture < 1.0) {
            return Err(bad("capture", format!("must lie in (0, 1), got {}", self.capture)));
        }
        if self.eps >= 1.0 {
            return Err(bad("eps", format!("must be below 1, got {}", self.eps)));
        }
        if self.restart == 0 {
            return Err(bad("restart", "must be at least 1"));
        }
        if self.pgd_check_every == 0 {
            return Err(bad("pgd_check_every", "must be at least 1"));
        }
        if self.max_rank == 0 {
            return Err(bad("max_rank", "must be at least 1"));
        }
        if !(1..=12).contains(&self.fine_level) {
            return Err(bad("fine_level", format!("must lie in 1..=12, got {}", self.fine_level)));
        }
        match &self.coarse_level {
            LevelSetting::Fixed(l) if !(1..=self.fine_level).contains(l) => {
                return Err(bad("coarse_level", format!("must lie in 1..=fine_level, got {l}")));
            }
            LevelSetting::Named(s) if s != "auto" => {
                return Err(bad("coarse_level", format!("expected an integer or \"auto\", got {s:?}")));
            }
            _ => {}
        }
        let d = self.domain();
        if !(d.iter().all(|v| v.is_finite()) && d[1] > d[0] && d[3] > d[2]) {
            return Err(bad("domain", format!("need x_lo < x_hi and y_lo < y_hi, got {d:?}")));
        }
        if self.problem == ProblemKind::ConvectionDiffusion {
            pos("viscosity", self.viscosity)?;
            if !self.wind.iter().all(|w| w.is_finite()) || self.wind == [0.0, 0.0] {
                return Err(bad("wind", "must be a finite nonzero vector"));
            }
            match &self.stretch {
                StretchSetting::Ratio(r) if !(*r >= 1.0 && r.is_finite()) => {
                    return Err(bad("stretch", format!("ratio must be >= 1, got {r}")));
                }
                StretchSetting::Named(s) if s != "auto" && s != "none" => {
                    return Err(bad("stretch", format!("expected a ratio, \"auto\" or \"none\", got {s:?}")));
                }
                _ => {}
            }
        }
        if let Some(UpdateSetting::Named(s)) = &self.pgd_update {
            if s != "never" && s != "at-end" {
                return Err(bad("pgd_update", format!("expected an interval, \"never\" or \"at-end\", got {s:?}")));
            }
        }
        if let Some(UpdateSetting::Every(0)) = self.pgd_update {
            return Err(bad("pgd_update", "interval must be at least 1"));
        }
        if self.variants.is_empty() {
            return Err(bad("variants", "need at least one variant"));
        }
        Ok(())
    }

    pub fn domain(&self) -> [f64; 4] {
        self.domain.unwrap_or(match self.problem {
            ProblemKind::Diffusion => [0.0, 1.0, 0.0, 1.0],
            ProblemKind::ConvectionDiffusion => [-1.0, 1.0, -1.0, 1.0],
        })
    }

    pub fn problem(&self) -> Problem {
        let [x_lo, x_hi, y_lo, y_hi] = self.domain();
        let physics = match self.problem {
            ProblemKind::Diffusion => Physics::Diffusion,
            ProblemKind::ConvectionDiffusion => Physics::ConvectionDiffusion {
                nu: self.viscosity,
                wind: (self.wind[0], self.wind[1]),
                stretch: match &self.stretch {
                    StretchSetting::Ratio(r) => StretchRule::Ratio(*r),
                    StretchSetting::Named(s) if s == "none" => StretchRule::None,
                    StretchSetting::Named(_) => StretchRule::Auto,
                },
            },
        };
        Problem {
            physics,
            domain: Rect {
                x_lo,
                x_hi,
                y_lo,
                y_hi,
            },
            sigma: self.sigma,
            corr_len: self.corr_len,
            mean: self.mean,
            kl: match self.kl_terms {
                Some(m) => KlTruncation::Terms(m),
                None => KlTruncation::Capture(self.capture),
            },
            degree: self.degree,
            coarse_level: match &self.coarse_level {
                LevelSetting::Fixed(l) => LevelChoice::Fixed(*l),
                LevelSetting::Named(_) => LevelChoice::Auto {
                    points_per_halfwave: self.points_per_halfwave,
                },
            },
            fine_level: self.fine_level,
        }
    }

    pub fn pgd(&self) -> PgdConfig {
        let base = match self.problem {
            ProblemKind::Diffusion => PgdConfig::diffusion(self.eps),
            ProblemKind::ConvectionDiffusion => PgdConfig::convection_diffusion(self.eps),
        };
        let update = match &self.pgd_update {
            None => base.update,
            Some(UpdateSetting::Every(k)) => UpdatePolicy::Every(*k),
            Some(UpdateSetting::Named(s)) if s == "never" => UpdatePolicy::Never,
            Some(UpdateSetting::Named(_)) => UpdatePolicy::AtEnd,
        };
        PgdConfig {
            update,
            max_rank: self.max_rank,
            check_every: self.pgd_check_every,
            seed: self.seed,
            ..base
        }
    }

    pub fn pipeline(&self) -> PipelineConfig {
        PipelineConfig {
            eps: self.eps,
            m: self.restart,
            max_cycles: self.max_cycles,
            truncation: match self.truncation {
                TruncationName::Multilevel => TruncationKind::Multilevel,
                TruncationName::Svd => TruncationKind::Svd,
            },
            preconditioner: match self.preconditioner {
                PreconditionerName::Mean => PreconditionerKind::MeanExact,
                PreconditionerName::None => PreconditionerKind::None,
            },
            pgd: self.pgd(),
        }
    }
}
