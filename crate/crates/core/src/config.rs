//! Pipeline configuration and its `key = value` text form.
//!
//! Lines look like `alpha = 10`; `#` starts a comment. Unknown keys are a
//! config error so typos do not silently fall back to defaults.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

/// Canny stage parameters. When `relative` is set, `low` and `high` are
/// fractions of the maximum gradient magnitude of the blurred input.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CannyParams {
    pub sigma: f32,
    pub low: f32,
    pub high: f32,
    pub relative: bool,
}

impl Default for CannyParams {
    fn default() -> Self {
        CannyParams {
            sigma: 1.4,
            low: 0.1,
            high: 0.3,
            relative: true,
        }
    }
}

impl CannyParams {
    pub fn absolute(sigma: f32, low: f32, high: f32) -> Self {
        CannyParams {
            sigma,
            low,
            high,
            relative: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma.is_finite() && self.sigma > 0.0) {
            return Err(Error::Config(format!("canny sigma must be > 0, got {}", self.sigma)));
        }
        if !(self.low.is_finite() && self.high.is_finite() && 0.0 < self.low && self.low < self.high)
        {
            return Err(Error::Config(format!(
                "canny thresholds need 0 < low < high, got low={} high={}",
                self.low, self.high
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BranchFlags {
    pub poly: bool,
    pub de: bool,
    pub dl_adapter: bool,
    pub fallback: bool,
}

impl Default for BranchFlags {
    fn default() -> Self {
        BranchFlags {
            poly: true,
            de: true,
            dl_adapter: true,
            fallback: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    /// Extra weight on occluded pixels in the content loss.
    pub alpha: f64,
    pub content: f64,
    pub perceptual: f64,
    pub adversarial: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            alpha: 10.0,
            content: 10.0,
            perceptual: 2.0,
            adversarial: 0.1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainSettings {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub steps: usize,
    pub batch_size: usize,
    /// Train the bundled discriminator alternately and include the
    /// adversarial term.
    pub adversarial: bool,
}

impl TrainSettings {
    pub fn validate(&self) -> Result<()> {
        let ok_beta = |b: f64| (0.0..1.0).contains(&b);
        if !(self.learning_rate > 0.0 && ok_beta(self.beta1) && ok_beta(self.beta2)) {
            return Err(Error::Config("training needs lr > 0 and betas in [0, 1)".into()));
        }
        if self.batch_size < 1 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        Ok(())
    }
}

impl Default for TrainSettings {
    fn default() -> Self {
        TrainSettings {
            learning_rate: 1e-4,
            beta1: 0.5,
            beta2: 0.999,
            steps: 2000,
            batch_size: 4,
            adversarial: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub disparity_gain: f32,
    pub disparity_shift: f32,
    pub expansion_radius: usize,
    pub expansion_threshold: f32,
    pub mirrored_polarity: bool,
    pub canny: CannyParams,
    pub branches: BranchFlags,
    pub weights: Option<PathBuf>,
    pub loss: LossWeights,
    pub train: TrainSettings,
    pub eval_stride: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            disparity_gain: 1.0,
            disparity_shift: 0.0,
            expansion_radius: 2,
            expansion_threshold: 4.0,
            mirrored_polarity: false,
            canny: CannyParams::default(),
            branches: BranchFlags::default(),
            weights: None,
            loss: LossWeights::default(),
            train: TrainSettings::default(),
            eval_stride: 20,
        }
    }
}

fn parse_value<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("cannot parse value {value:?} for key {key:?}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(Error::Config(format!("expected a boolean for {key:?}, got {value:?}"))),
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        let cfg_err = |m: String| Err(Error::Config(m));
        if !self.disparity_gain.is_finite() || !self.disparity_shift.is_finite() {
            return cfg_err("disparity gain and shift must be finite".into());
        }
        if self.expansion_radius < 1 {
            return cfg_err("expansion_radius must be >= 1".into());
        }
        if !(self.expansion_threshold.is_finite() && self.expansion_threshold > 0.0) {
            return cfg_err(format!(
                "expansion_threshold must be > 0, got {}",
                self.expansion_threshold
            ));
        }
        self.canny.validate()?;
        let l = &self.loss;
        for (name, v) in [
            ("alpha", l.alpha),
            ("lambda_content", l.content),
            ("lambda_perceptual", l.perceptual),
            ("lambda_adversarial", l.adversarial),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return cfg_err(format!("{name} must be a finite value >= 0, got {v}"));
            }
        }
        if self.eval_stride < 1 {
            return cfg_err("eval_stride must be >= 1".into());
        }
        self.train.validate()
    }

    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "disparity_gain" => self.disparity_gain = parse_value(key, value)?,
            "disparity_shift" => self.disparity_shift = parse_value(key, value)?,
            "expansion_radius" => self.expansion_radius = parse_value(key, value)?,
            "expansion_threshold" => self.expansion_threshold = parse_value(key, value)?,
            "mirrored_polarity" => self.mirrored_polarity = parse_bool(key, value)?,
            "canny_sigma" => self.canny.sigma = parse_value(key, value)?,
            "canny_low" => self.canny.low = parse_value(key, value)?,
            "canny_high" => self.canny.high = parse_value(key, value)?,
            "canny_relative" => self.canny.relative = parse_bool(key, value)?,
            "branch_poly" => self.branches.poly = parse_bool(key, value)?,
            "branch_de" => self.branches.de = parse_bool(key, value)?,
            "branch_dl" => self.branches.dl_adapter = parse_bool(key, value)?,
            "branch_fallback" => self.branches.fallback = parse_bool(key, value)?,
            "weights" => {
                self.weights = if value.is_empty() {
                    None
                } else {
                    Some(PathBuf::from(value))
                }
            }
            "alpha" => self.loss.alpha = parse_value(key, value)?,
            "lambda_content" => self.loss.content = parse_value(key, value)?,
            "lambda_perceptual" => self.loss.perceptual = parse_value(key, value)?,
            "lambda_adversarial" => self.loss.adversarial = parse_value(key, value)?,
            "learning_rate" => self.train.learning_rate = parse_value(key, value)?,
            "beta1" => self.train.beta1 = parse_value(key, value)?,
            "beta2" => self.train.beta2 = parse_value(key, value)?,
            "steps" => self.train.steps = parse_value(key, value)?,
            "batch_size" => self.train.batch_size = parse_value(key, value)?,
            "adversarial" => self.train.adversarial = parse_bool(key, value)?,
            "eval_stride" => self.eval_stride = parse_value(key, value)?,
            _ => return Err(Error::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    /// Parses config text on top of the defaults and validates the result.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = PipelineConfig::default();
        for (lineno, line) in text.lines().enumerate() {
            let line = match line.find('#') {
                Some(i) => &line[..i],
                None => line,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected `key = value`", lineno + 1))
            })?;
            cfg.set(key.trim(), value.trim())
                .map_err(|e| Error::Config(format!("line {}: {e}", lineno + 1)))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::MissingFile(path.to_path_buf()),
            _ => Error::Io(e),
        })?;
        Self::parse(&text)
    }

    /// Serializes every key; `parse(to_text())` reproduces the config.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("disparity_gain", self.disparity_gain.to_string());
        kv("disparity_shift", self.disparity_shift.to_string());
        kv("expansion_radius", self.expansion_radius.to_string());
        kv("expansion_threshold", self.expansion_threshold.to_string());
        kv("mirrored_polarity", self.mirrored_polarity.to_string());
        kv("canny_sigma", self.canny.sigma.to_string());
        kv("canny_low", self.canny.low.to_string());
        kv("canny_high", self.canny.high.to_string());
        kv("canny_relative", self.canny.relative.to_string());
        kv("branch_poly", self.branches.poly.to_string());
        kv("branch_de", self.branches.de.to_string());
        kv("branch_dl", self.branches.dl_adapter.to_string());
        kv("branch_fallback", self.branches.fallback.to_string());
        kv(
            "weights",
            self.weights
                .as_ref()
                .map(|p| p.display().to_string())
                .unwrap_or_default(),
        );
        kv("alpha", self.loss.alpha.to_string());
        kv("lambda_content", self.loss.content.to_string());
        kv("lambda_perceptual", self.loss.perceptual.to_string());
        kv("lambda_adversarial", self.loss.adversarial.to_string());
        kv("learning_rate", self.train.learning_rate.to_string());
        kv("beta1", self.train.beta1.to_string());
        kv("beta2", self.train.beta2.to_string());
        kv("steps", self.train.steps.to_string());
        kv("batch_size", self.train.batch_size.to_string());
        kv("adversarial", self.train.adversarial.to_string());
        kv("eval_stride", self.eval_stride.to_string());
        s
    }
}
