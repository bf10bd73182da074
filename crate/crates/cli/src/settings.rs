//! Tunable settings: preset, then `key = value` config file, then flags.

use std::fmt::Write as _;
use std::path::Path;

use anyhow::{bail, Context, Result};
use psd_core::{CorrectionParams, DepthClamp, PipelineConfig, PrefillParams, PropagationConfig, PropagationMode};

pub const PRESETS: [&str; 5] = ["default", "cityscapes", "vkitti2", "tofdc", "diml"];

#[derive(Clone, Debug, PartialEq)]
pub struct Settings {
    pub preset: String,
    pub k: usize,
    pub eta: f64,
    pub mode: PropagationMode,
    pub iterations_2d: usize,
    pub anchor_2d: bool,
    pub prefill_sigma: f64,
    pub prefill_rounds: usize,
    pub slices: usize,
    pub tau: f64,
    pub alpha_min: f64,
    pub alpha_max: f64,
    pub beta_min: f64,
    pub beta_max: f64,
    pub clamp_min: f64,
    pub clamp_max: f64,
    pub trimmed_fit: bool,
    pub scorer: String,
    pub seed: u64,
    pub workers: usize,
}

impl Default for Settings {
    fn default() -> Self {
        let prop = PropagationConfig::default();
        let corr = CorrectionParams::default();
        let clamp = DepthClamp::default();
        Settings {
            preset: "default".into(),
            k: prop.k,
            eta: prop.eta,
            mode: prop.mode,
            iterations_2d: prop.iterations_2d,
            anchor_2d: prop.anchor_2d,
            prefill_sigma: prop.prefill.sigma,
            prefill_rounds: prop.prefill.max_rounds,
            slices: corr.n,
            tau: corr.tau,
            alpha_min: corr.alpha_min,
            alpha_max: corr.alpha_max,
            beta_min: corr.beta_min,
            beta_max: corr.beta_max,
            clamp_min: clamp.min,
            clamp_max: clamp.max,
            trimmed_fit: false,
            scorer: "guided".into(),
            seed: 0,
            workers: 0,
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value
        .parse()
        .map_err(|e| anyhow::anyhow!("bad value '{value}' for {key}: {e}"))
}

impl Settings {
    pub fn preset(name: &str) -> Result<Self> {
        let mut s = Settings { preset: name.into(), ..Settings::default() };
        match name {
            "default" => {}
            "cityscapes" => s.k = 2,
            "vkitti2" => {
                s.k = 3;
                s.mode = PropagationMode::ParallelMean;
            }
            "tofdc" => s.k = 8,
            "diml" => s.k = 12,
            other => bail!("unknown preset '{other}', expected one of {}", PRESETS.join(", ")),
        }
        Ok(s)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "k" => self.k = parse(key, value)?,
            "eta" => self.eta = parse(key, value)?,
            "mode" => self.mode = parse(key, value)?,
            "iterations_2d" => self.iterations_2d = parse(key, value)?,
            "anchor_2d" => self.anchor_2d = parse(key, value)?,
            "prefill_sigma" => self.prefill_sigma = parse(key, value)?,
            "prefill_rounds" => self.prefill_rounds = parse(key, value)?,
            "slices" => self.slices = parse(key, value)?,
            "tau" => self.tau = parse(key, value)?,
            "alpha_min" => self.alpha_min = parse(key, value)?,
            "alpha_max" => self.alpha_max = parse(key, value)?,
            "beta_min" => self.beta_min = parse(key, value)?,
            "beta_max" => self.beta_max = parse(key, value)?,
            "clamp_min" => self.clamp_min = parse(key, value)?,
            "clamp_max" => self.clamp_max = parse(key, value)?,
            "trimmed_fit" => self.trimmed_fit = parse(key, value)?,
            "scorer" => self.scorer = value.to_string(),
            "seed" => self.seed = parse(key, value)?,
            "workers" => self.workers = parse(key, value)?,
            other => bail!("unknown setting '{other}'"),
        }
        Ok(())
    }

    /// Preset (flag wins over file), then file entries, then `overrides`.
    pub fn resolve(
        preset_flag: Option<&str>,
        config: Option<&Path>,
        overrides: &[(&str, String)],
    ) -> Result<Self> {
        let entries = match config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .with_context(|| format!("reading config {}", path.display()))?;
                parse_config(&text).with_context(|| format!("in config {}", path.display()))?
            }
            None => Vec::new(),
        };
        let file_preset = entries.iter().find(|(k, _)| k == "preset").map(|(_, v)| v.as_str());
        let mut s = Settings::preset(preset_flag.or(file_preset).unwrap_or("default"))?;
        for (k, v) in entries.iter().filter(|(k, _)| k != "preset") {
            s.set(k, v)?;
        }
        for (k, v) in overrides {
            s.set(k, v)?;
        }
        s.pipeline()?;
        Ok(s)
    }

    pub fn pipeline(&self) -> Result<PipelineConfig> {
        let mut prefill = PrefillParams::with_sigma(self.prefill_sigma);
        prefill.max_rounds = self.prefill_rounds;
        let cfg = PipelineConfig {
            propagation: PropagationConfig {
                k: self.k,
                eta: self.eta,
                iterations_2d: self.iterations_2d,
                mode: self.mode,
                anchor_2d: self.anchor_2d,
                prefill,
            },
            correction: CorrectionParams {
                alpha_min: self.alpha_min,
                alpha_max: self.alpha_max,
                beta_min: self.beta_min,
                beta_max: self.beta_max,
                n: self.slices,
                tau: self.tau,
            },
            clamp: DepthClamp::new(self.clamp_min, self.clamp_max)?,
            trimmed_fit: self.trimmed_fit,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// `key=value` lines, suitable for the run report and for re-reading as a config.
    pub fn to_lines(&self) -> String {
        let mut out = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(out, "{k}={v}");
        };
        put("preset", self.preset.clone());
        put("k", self.k.to_string());
        put("eta", self.eta.to_string());
        put("mode", self.mode.to_string());
        put("iterations_2d", self.iterations_2d.to_string());
        put("anchor_2d", self.anchor_2d.to_string());
        put("prefill_sigma", self.prefill_sigma.to_string());
        put("prefill_rounds", self.prefill_rounds.to_string());
        put("slices", self.slices.to_string());
        put("tau", self.tau.to_string());
        put("alpha_min", self.alpha_min.to_string());
        put("alpha_max", self.alpha_max.to_string());
        put("beta_min", self.beta_min.to_string());
        put("beta_max", self.beta_max.to_string());
        put("clamp_min", self.clamp_min.to_string());
        put("clamp_max", self.clamp_max.to_string());
        put("trimmed_fit", self.trimmed_fit.to_string());
        put("scorer", self.scorer.clone());
        put("seed", self.seed.to_string());
        put("workers", self.workers.to_string());
        out
    }
}

/// `key = value` lines; `#` starts a comment.
pub fn parse_config(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            bail!("line {}: expected key = value", n + 1);
        };
        out.push((k.trim().replace('-', "_"), v.trim().to_string()));
    }
    Ok(out)
}
