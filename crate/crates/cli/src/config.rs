//! Run configuration as flat `key = value` text.
//!
//! Keys are the long flag names without the leading dashes. A config file
//! is read first, command-line flags override it, and the fully resolved
//! configuration is echoed next to the outputs so that `--config <echo>`
//! reproduces the run exactly.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use labelnorm::energy::{DualUpdate, LagrangianForm, ModelParams};
use labelnorm::exec::Exec;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("unknown config key {0:?}")]
    UnknownKey(String),
    #[error("invalid value {value:?} for {key}: {reason}")]
    Value {
        key: String,
        value: String,
        reason: String,
    },
    #[error("missing required setting {0:?}")]
    Missing(&'static str),
    #[error(transparent)]
    Params(#[from] labelnorm::energy::ParamError),
}

/// Parameter table a run starts from before individual overrides.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Preset {
    /// Sphere weights; the penalties follow `alpha` and `beta`.
    Sphere,
    Platonic,
    Skyline,
}

impl FromStr for Preset {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sphere" => Ok(Preset::Sphere),
            "platonic" => Ok(Preset::Platonic),
            "skyline" => Ok(Preset::Skyline),
            _ => Err("expected sphere, platonic or skyline".into()),
        }
    }
}

impl Preset {
    fn name(self) -> &'static str {
        match self {
            Preset::Sphere => "sphere",
            Preset::Platonic => "platonic",
            Preset::Skyline => "skyline",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    /// Mesh file, or a generator spec (`icosphere:S[:R]`, `cube:N[:SIZE]`,
    /// `skyline:SEED`).
    pub input: String,
    pub output: PathBuf,
    /// `file:PATH`, a plain path, `fibonacci:L`, `platonic:KIND` or `axes`.
    pub labels: String,
    pub labels_out: PathBuf,
    pub metrics_out: PathBuf,
    pub ground_truth: Option<PathBuf>,
    pub preset: Preset,
    pub params: ModelParams,
    pub noise_factor: f64,
    pub seed: u64,
}

pub const KEYS: &[&str] = &[
    "input",
    "output",
    "labels",
    "labels-out",
    "metrics-out",
    "ground-truth",
    "preset",
    "alpha",
    "beta",
    "mu",
    "rho1",
    "rho2",
    "rho3",
    "c-inner",
    "tol",
    "max-iters",
    "cg-rtol-phi",
    "cg-max-iters-phi",
    "newton-rtol",
    "newton-max-cg-iters",
    "newton-steps",
    "armijo-c1",
    "armijo-shrink",
    "armijo-max-trials",
    "dual-update",
    "lagrangian-form",
    "exec",
    "noise-factor",
    "seed",
];

/// Settings as raw strings, before resolution.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Settings(BTreeMap<String, String>);

impl Settings {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut map = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content
                .split_once('=')
                .ok_or(ConfigError::Syntax { line: i + 1 })?;
            let key = key.trim().replace('_', "-");
            if !KEYS.contains(&key.as_str()) {
                return Err(ConfigError::UnknownKey(key));
            }
            map.insert(key, value.trim().to_string());
        }
        Ok(Self(map))
    }

    pub fn read(path: &Path) -> Result<Self, anyhow::Error> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| anyhow::anyhow!("{}: {e}", path.display()))?;
        Ok(Self::parse(&text)?)
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        debug_assert!(KEYS.contains(&key), "{key}");
        self.0.insert(key.to_string(), value.to_string());
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.0.get(key).map(String::as_str)
    }

    fn typed<T: FromStr>(&self, key: &str) -> Result<Option<T>, ConfigError>
    where
        T::Err: std::fmt::Display,
    {
        self.get(key)
            .map(|v| {
                v.parse().map_err(|e: T::Err| ConfigError::Value {
                    key: key.into(),
                    value: v.into(),
                    reason: e.to_string(),
                })
            })
            .transpose()
    }

    fn override_with<T: FromStr>(&self, key: &str, slot: &mut T) -> Result<(), ConfigError>
    where
        T::Err: std::fmt::Display,
    {
        if let Some(v) = self.typed(key)? {
            *slot = v;
        }
        Ok(())
    }

    pub fn resolve(&self) -> Result<RunConfig, ConfigError> {
        let input = self
            .get("input")
            .ok_or(ConfigError::Missing("input"))?
            .to_string();
        let output = PathBuf::from(self.get("output").ok_or(ConfigError::Missing("output"))?);
        let preset = self.typed("preset")?.unwrap_or(Preset::Skyline);
        let mut params = match preset {
            Preset::Sphere => {
                let alpha = self.typed("alpha")?.unwrap_or(1.0);
                let beta = self.typed("beta")?.unwrap_or(0.01);
                ModelParams::sphere(alpha, beta)
            }
            Preset::Platonic => ModelParams::platonic(),
            Preset::Skyline => ModelParams::skyline(),
        };
        let p = &mut params;
        self.override_with("alpha", &mut p.alpha)?;
        self.override_with("beta", &mut p.beta)?;
        self.override_with("mu", &mut p.mu)?;
        self.override_with("rho1", &mut p.rho1)?;
        self.override_with("rho2", &mut p.rho2)?;
        self.override_with("rho3", &mut p.rho3)?;
        self.override_with("c-inner", &mut p.c_inner)?;
        self.override_with("tol", &mut p.admm_tol)?;
        self.override_with("max-iters", &mut p.admm_max_iters)?;
        self.override_with("cg-rtol-phi", &mut p.cg_rtol_phi)?;
        self.override_with("cg-max-iters-phi", &mut p.cg_max_iters_phi)?;
        self.override_with("newton-rtol", &mut p.newton_rtol)?;
        self.override_with("newton-max-cg-iters", &mut p.newton_max_cg_iters)?;
        self.override_with("newton-steps", &mut p.newton_steps)?;
        self.override_with("armijo-c1", &mut p.armijo_c1)?;
        self.override_with("armijo-shrink", &mut p.armijo_shrink)?;
        self.override_with("armijo-max-trials", &mut p.armijo_max_trials)?;
        if let Some(v) = self.get("dual-update") {
            p.dual_update = match v {
                "standard" => DualUpdate::Standard,
                "paper-literal" => DualUpdate::PaperLiteral,
                _ => {
                    return Err(bad_value(
                        "dual-update",
                        v,
                        "expected standard or paper-literal",
                    ))
                }
            };
        }
        if let Some(v) = self.get("lagrangian-form") {
            p.lagrangian_form = match v {
                "standard" => LagrangianForm::Standard,
                "scaled" => LagrangianForm::Scaled,
                _ => {
                    return Err(bad_value(
                        "lagrangian-form",
                        v,
                        "expected standard or scaled",
                    ))
                }
            };
        }
        if let Some(v) = self.get("exec") {
            p.exec = match v {
                "parallel" => Exec::Parallel,
                "sequential" => Exec::Sequential,
                _ => return Err(bad_value("exec", v, "expected parallel or sequential")),
            };
        }
        params.validate()?;

        let noise_factor: f64 = self.typed("noise-factor")?.unwrap_or(0.0);
        if !(noise_factor.is_finite() && noise_factor >= 0.0) {
            return Err(bad_value(
                "noise-factor",
                &noise_factor.to_string(),
                "must be nonnegative",
            ));
        }
        Ok(RunConfig {
            input,
            labels: self.get("labels").unwrap_or("axes").to_string(),
            labels_out: self
                .get("labels-out")
                .map(PathBuf::from)
                .unwrap_or_else(|| output.with_extension("labels.csv")),
            metrics_out: self
                .get("metrics-out")
                .map(PathBuf::from)
                .unwrap_or_else(|| output.with_extension("metrics.ndjson")),
            ground_truth: self.get("ground-truth").map(PathBuf::from),
            output,
            preset,
            params,
            noise_factor,
            seed: self.typed("seed")?.unwrap_or(0),
        })
    }
}

fn bad_value(key: &str, value: &str, reason: &str) -> ConfigError {
    ConfigError::Value {
        key: key.into(),
        value: value.into(),
        reason: reason.into(),
    }
}

impl RunConfig {
    /// Every setting, one `key = value` line each, except output paths
    /// that follow from `output`. Floats use shortest round-trip formatting.
    pub fn echo(&self) -> String {
        let p = &self.params;
        let mut s = String::new();
        let mut line = |k: &str, v: &dyn std::fmt::Display| {
            let _ = writeln!(s, "{k} = {v}");
        };
        line("input", &self.input);
        line("output", &self.output.display());
        line("labels", &self.labels);
        // Derived paths are left implicit so that overriding `output`
        // moves them along.
        if self.labels_out != self.output.with_extension("labels.csv") {
            line("labels-out", &self.labels_out.display());
        }
        if self.metrics_out != self.output.with_extension("metrics.ndjson") {
            line("metrics-out", &self.metrics_out.display());
        }
        if let Some(g) = &self.ground_truth {
            line("ground-truth", &g.display());
        }
        line("preset", &self.preset.name());
        line("alpha", &p.alpha);
        line("beta", &p.beta);
        line("mu", &p.mu);
        line("rho1", &p.rho1);
        line("rho2", &p.rho2);
        line("rho3", &p.rho3);
        line("c-inner", &p.c_inner);
        line("tol", &p.admm_tol);
        line("max-iters", &p.admm_max_iters);
        line("cg-rtol-phi", &p.cg_rtol_phi);
        line("cg-max-iters-phi", &p.cg_max_iters_phi);
        line("newton-rtol", &p.newton_rtol);
        line("newton-max-cg-iters", &p.newton_max_cg_iters);
        line("newton-steps", &p.newton_steps);
        line("armijo-c1", &p.armijo_c1);
        line("armijo-shrink", &p.armijo_shrink);
        line("armijo-max-trials", &p.armijo_max_trials);
        line(
            "dual-update",
            &match p.dual_update {
                DualUpdate::Standard => "standard",
                DualUpdate::PaperLiteral => "paper-literal",
            },
        );
        line(
            "lagrangian-form",
            &match p.lagrangian_form {
                LagrangianForm::Standard => "standard",
                LagrangianForm::Scaled => "scaled",
            },
        );
        line(
            "exec",
            &match p.exec {
                Exec::Parallel => "parallel",
                Exec::Sequential => "sequential",
            },
        );
        line("noise-factor", &self.noise_factor);
        line("seed", &self.seed);
        s
    }
}
