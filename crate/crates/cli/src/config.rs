//! Flat `key = value` run configuration with namespaced keys.
//!
//! Blank lines and lines starting with `#` are ignored. Unknown keys,
//! duplicates, unparsable values and out-of-range values are all rejected
//! with the line they came from.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use lasq_core::{
    ApplyMode, ChainConfig, DiffusionSchedule, EncoderConfig, GuidedFilterParams, HierarchyConfig, LaoParams,
    LasqError, LossWeights, PsiRounding, Result, TauSchedule, TrainConfig,
};

pub const SEED_ENV: &str = "LASQ_SEED";

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub guided: GuidedFilterParams,
    pub lao: LaoParams,
    pub mode: ApplyMode,
    pub sigma: Option<f64>,
    pub step_lambda: f64,
    pub levels: usize,
    pub t_steps: usize,
    pub beta_start: f64,
    pub beta_end: f64,
    pub tau: TauSchedule,
    pub psi: PsiRounding,
    pub lambda_d: f64,
    pub lambda_g: f64,
    pub ddim_steps: usize,
    pub encoder_k: usize,
    pub lr: f64,
    pub train_steps: usize,
    pub checkpoint: Option<String>,
    pub provenance: Option<String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let weights = LossWeights::default();
        Self {
            seed: 0,
            guided: GuidedFilterParams::default(),
            lao: LaoParams::default(),
            mode: ApplyMode::default(),
            sigma: None,
            step_lambda: ChainConfig::default().step_lambda,
            levels: ChainConfig::default().levels,
            t_steps: 1000,
            beta_start: 1e-4,
            beta_end: 0.02,
            tau: TauSchedule::default(),
            psi: PsiRounding::default(),
            lambda_d: weights.lambda_d,
            lambda_g: weights.lambda_g,
            ddim_steps: 20,
            encoder_k: EncoderConfig::default().k,
            lr: 1e-3,
            train_steps: 200,
            checkpoint: None,
            provenance: None,
        }
    }
}

const KEYS: &[&str] = &[
    "seed",
    "guided.radius",
    "guided.eps",
    "lao.alpha",
    "lao.eta",
    "lao.delta",
    "lao.mode",
    "sampler.sigma",
    "sampler.lambda",
    "sampler.levels",
    "diffusion.T",
    "diffusion.beta_start",
    "diffusion.beta_end",
    "diffusion.tau",
    "diffusion.psi",
    "diffusion.lambda_d",
    "diffusion.lambda_g",
    "diffusion.ddim_steps",
    "encoder.k",
    "train.lr",
    "train.steps",
    "paths.checkpoint",
    "paths.provenance",
];

fn config_err(line: usize, message: impl Into<String>) -> LasqError {
    LasqError::Config { line, message: message.into() }
}

fn parse_value<T: FromStr>(key: &str, value: &str, line: usize) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value.parse::<T>().map_err(|e| config_err(line, format!("{key}: cannot parse '{value}': {e}")))
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        let mut lines: HashMap<&'static str, usize> = HashMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let trimmed = raw.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let (key, value) = trimmed
                .split_once('=')
                .map(|(k, v)| (k.trim(), v.trim()))
                .ok_or_else(|| config_err(line, format!("expected 'key = value', got '{trimmed}'")))?;
            let key =
                *KEYS.iter().find(|k| **k == key).ok_or_else(|| config_err(line, format!("unknown key '{key}'")))?;
            if let Some(first) = lines.insert(key, line) {
                return Err(config_err(line, format!("duplicate key '{key}' (first set on line {first})")));
            }
            cfg.set(key, value, line)?;
        }
        cfg.validate_with(|key| lines.get(key).copied().unwrap_or(0))?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| {
            if source.kind() == std::io::ErrorKind::NotFound {
                LasqError::FileNotFound(path.to_path_buf())
            } else {
                LasqError::Io { path: path.to_path_buf(), source }
            }
        })?;
        Self::parse(&text)
    }

    fn set(&mut self, key: &str, v: &str, line: usize) -> Result<()> {
        let opt_string = |v: &str| if v.is_empty() { None } else { Some(v.to_string()) };
        match key {
            "seed" => self.seed = parse_value(key, v, line)?,
            "guided.radius" => self.guided.radius = parse_value(key, v, line)?,
            "guided.eps" => self.guided.eps = parse_value(key, v, line)?,
            "lao.alpha" => self.lao.alpha = parse_value(key, v, line)?,
            "lao.eta" => self.lao.eta = parse_value(key, v, line)?,
            "lao.delta" => self.lao.delta = parse_value(key, v, line)?,
            "lao.mode" => self.mode = parse_value(key, v, line)?,
            "sampler.sigma" => self.sigma = if v == "auto" { None } else { Some(parse_value(key, v, line)?) },
            "sampler.lambda" => self.step_lambda = parse_value(key, v, line)?,
            "sampler.levels" => self.levels = parse_value(key, v, line)?,
            "diffusion.T" => self.t_steps = parse_value(key, v, line)?,
            "diffusion.beta_start" => self.beta_start = parse_value(key, v, line)?,
            "diffusion.beta_end" => self.beta_end = parse_value(key, v, line)?,
            "diffusion.tau" => self.tau = parse_value(key, v, line)?,
            "diffusion.psi" => self.psi = parse_value(key, v, line)?,
            "diffusion.lambda_d" => self.lambda_d = parse_value(key, v, line)?,
            "diffusion.lambda_g" => self.lambda_g = parse_value(key, v, line)?,
            "diffusion.ddim_steps" => self.ddim_steps = parse_value(key, v, line)?,
            "encoder.k" => self.encoder_k = parse_value(key, v, line)?,
            "train.lr" => self.lr = parse_value(key, v, line)?,
            "train.steps" => self.train_steps = parse_value(key, v, line)?,
            "paths.checkpoint" => self.checkpoint = opt_string(v),
            "paths.provenance" => self.provenance = opt_string(v),
            _ => unreachable!("key list and setter disagree on '{key}'"),
        }
        Ok(())
    }

    /// Checks every component invariant; errors name the line that set the
    /// offending key (0 for defaults and command-line overrides).
    pub fn validate(&self) -> Result<()> {
        self.validate_with(|_| 0)
    }

    fn validate_with(&self, line_of: impl Fn(&str) -> usize) -> Result<()> {
        let at = |key: &str, e: LasqError| config_err(line_of(key), format!("{key}: {e}"));
        let bad = |key: &str, msg: String| config_err(line_of(key), format!("{key}: {msg}"));
        self.guided
            .validate()
            .map_err(|e| at(if self.guided.eps > 0.0 { "guided.radius" } else { "guided.eps" }, e))?;
        for (key, v, ok) in [
            ("lao.alpha", self.lao.alpha, self.lao.alpha > 0.0),
            ("lao.eta", self.lao.eta, self.lao.eta >= 0.0),
            ("lao.delta", self.lao.delta, self.lao.delta > 0.0),
            ("sampler.lambda", self.step_lambda, self.step_lambda > 0.0),
            ("diffusion.lambda_d", self.lambda_d, self.lambda_d >= 0.0),
            ("diffusion.lambda_g", self.lambda_g, self.lambda_g >= 0.0),
            ("train.lr", self.lr, self.lr >= 0.0),
        ] {
            if !(ok && v.is_finite()) {
                return Err(bad(key, format!("value {v} out of range")));
            }
        }
        if let Some(s) = self.sigma {
            if !(s > 0.0 && s.is_finite()) {
                return Err(bad("sampler.sigma", format!("must be positive or 'auto', got {s}")));
            }
        }
        self.chain().validate().map_err(|e| at("sampler.levels", e))?;
        if self.levels > self.t_steps {
            return Err(bad("sampler.levels", format!("{} levels exceed T = {}", self.levels, self.t_steps)));
        }
        self.schedule().map_err(|e| at("diffusion.T", e))?;
        if self.ddim_steps == 0 {
            return Err(bad("diffusion.ddim_steps", "must be at least 1".to_string()));
        }
        if self.encoder_k > 16 {
            return Err(bad("encoder.k", format!("{} downsampling stages is unreasonable", self.encoder_k)));
        }
        Ok(())
    }

    pub fn chain(&self) -> ChainConfig {
        ChainConfig { step_lambda: self.step_lambda, levels: self.levels }
    }

    pub fn hierarchy(&self) -> HierarchyConfig {
        HierarchyConfig {
            guided: self.guided,
            lao: self.lao,
            sigma_override: self.sigma,
            chain: self.chain(),
            mode: self.mode,
        }
    }

    pub fn schedule(&self) -> Result<DiffusionSchedule> {
        self.schedule_with(self.t_steps, self.tau)
    }

    pub fn schedule_with(&self, t_steps: usize, tau: TauSchedule) -> Result<DiffusionSchedule> {
        DiffusionSchedule::linear(t_steps, self.beta_start, self.beta_end, tau, self.psi)
    }

    pub fn encoder(&self) -> EncoderConfig {
        EncoderConfig { k: self.encoder_k }
    }

    pub fn train(&self) -> TrainConfig {
        TrainConfig {
            weights: LossWeights { lambda_d: self.lambda_d, lambda_g: self.lambda_g },
            encoder: self.encoder(),
        }
    }

    /// Every key with its current value, in canonical order.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let opt = |v: &Option<String>| v.clone().unwrap_or_default();
        KEYS.iter()
            .map(|&k| {
                let v = match k {
                    "seed" => self.seed.to_string(),
                    "guided.radius" => self.guided.radius.to_string(),
                    "guided.eps" => self.guided.eps.to_string(),
                    "lao.alpha" => self.lao.alpha.to_string(),
                    "lao.eta" => self.lao.eta.to_string(),
                    "lao.delta" => self.lao.delta.to_string(),
                    "lao.mode" => self.mode.to_string(),
                    "sampler.sigma" => self.sigma.map_or_else(|| "auto".to_string(), |s| s.to_string()),
                    "sampler.lambda" => self.step_lambda.to_string(),
                    "sampler.levels" => self.levels.to_string(),
                    "diffusion.T" => self.t_steps.to_string(),
                    "diffusion.beta_start" => self.beta_start.to_string(),
                    "diffusion.beta_end" => self.beta_end.to_string(),
                    "diffusion.tau" => self.tau.to_string(),
                    "diffusion.psi" => self.psi.to_string(),
                    "diffusion.lambda_d" => self.lambda_d.to_string(),
                    "diffusion.lambda_g" => self.lambda_g.to_string(),
                    "diffusion.ddim_steps" => self.ddim_steps.to_string(),
                    "encoder.k" => self.encoder_k.to_string(),
                    "train.lr" => self.lr.to_string(),
                    "train.steps" => self.train_steps.to_string(),
                    "paths.checkpoint" => opt(&self.checkpoint),
                    "paths.provenance" => opt(&self.provenance),
                    _ => unreachable!(),
                };
                (k, v)
            })
            .collect()
    }

    pub fn serialize(&self) -> String {
        let mut out = String::new();
        for (k, v) in self.entries() {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }
}

/// Seed precedence: command-line flag, then `LASQ_SEED`, then the config file.
pub fn resolve_seed(cfg_seed: u64, flag: Option<u64>, env: Option<&str>) -> Result<u64> {
    if let Some(s) = flag {
        return Ok(s);
    }
    match env {
        Some(v) => v.trim().parse().map_err(|e| config_err(0, format!("{SEED_ENV}: cannot parse '{v}': {e}"))),
        None => Ok(cfg_seed),
    }
}
