//! Experiment configuration: JSON schema, flag overlay, and resolution.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(rename_all = "kebab-case")]
pub enum LMode {
    /// Estimate the constant appropriate for the solver.
    Auto,
    /// Use the given value as-is.
    Fixed(f64),
    /// One run per `auto · 2^i` for `i` in the inclusive exponent range.
    Sweep { lo: i32, hi: i32 },
}

impl Default for LMode {
    fn default() -> Self {
        LMode::Auto
    }
}

impl LMode {
    pub fn parse(s: &str) -> Result<Self, String> {
        if s == "auto" {
            return Ok(LMode::Auto);
        }
        if let Some(range) = s.strip_prefix("sweep:") {
            let (lo, hi) = range
                .split_once("..")
                .ok_or_else(|| format!("expected sweep:LO..HI, got `{s}`"))?;
            let lo: i32 = lo.parse().map_err(|_| format!("bad sweep exponent `{lo}`"))?;
            let hi: i32 = hi.parse().map_err(|_| format!("bad sweep exponent `{hi}`"))?;
            if lo > hi {
                return Err(format!("empty sweep range {lo}..{hi}"));
            }
            return Ok(LMode::Sweep { lo, hi });
        }
        s.parse::<f64>()
            .map(LMode::Fixed)
            .map_err(|_| format!("expected `auto`, a number, or sweep:LO..HI, got `{s}`"))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub struct SyntheticSpec {
    /// `classification`, `sparse`, or `regression`.
    pub kind: String,
    pub n: usize,
    pub d: usize,
    #[serde(default = "default_density")]
    pub density: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_density() -> f64 {
    0.1
}

/// One benchmark experiment, as read from `--config` JSON (flags overlay
/// individual fields). Every default is pinned by [`ExperimentConfig::resolve`]
/// and echoed into the sidecar so runs are repeatable from artifacts alone.
#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub data: Option<String>,
    #[serde(default)]
    pub synthetic: Option<SyntheticSpec>,
    #[serde(default)]
    pub d_hint: Option<usize>,
    #[serde(default)]
    pub loss: Option<String>,
    #[serde(default)]
    pub reg: Option<String>,
    #[serde(default)]
    pub lambda1: Option<f64>,
    #[serde(default)]
    pub lambda2: Option<f64>,
    #[serde(default)]
    pub solver: Option<String>,
    #[serde(default)]
    pub l: Option<LMode>,
    #[serde(default)]
    pub block_size: Option<usize>,
    #[serde(default)]
    pub k_inner: Option<usize>,
    #[serde(default)]
    pub budget_iters: Option<usize>,
    #[serde(default)]
    pub budget_units: Option<f64>,
    #[serde(default)]
    pub wall_cap_s: Option<f64>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub normalize: Option<String>,
    #[serde(default)]
    pub reference: Option<String>,
    #[serde(default)]
    pub epoch1_literal_z: Option<bool>,
    #[serde(default)]
    pub out: Option<String>,
}

/// Fully resolved experiment settings.
#[derive(Debug, Clone, Serialize)]
pub struct ResolvedConfig {
    pub data: Option<String>,
    pub synthetic: Option<SyntheticSpec>,
    pub d_hint: Option<usize>,
    pub loss: String,
    pub reg: String,
    pub lambda1: f64,
    pub lambda2: f64,
    pub solver: String,
    pub l: LMode,
    pub block_size: usize,
    pub k_inner: Option<usize>,
    pub budget_iters: usize,
    pub budget_units: Option<f64>,
    pub wall_cap_s: Option<f64>,
    pub seed: u64,
    pub normalize: String,
    pub reference: Option<String>,
    pub epoch1_literal_z: bool,
    pub out: String,
}

pub const SOLVER_IDS: &[&str] = &[
    "acoder",
    "ada-acoder",
    "vr-acoder",
    "ada-vr-acoder",
    "proxgrad",
    "rcdm",
];

impl ExperimentConfig {
    pub fn resolve(self) -> Result<ResolvedConfig, String> {
        if self.data.is_none() && self.synthetic.is_none() {
            return Err("either a dataset path or a synthetic spec is required".into());
        }
        if self.data.is_some() && self.synthetic.is_some() {
            return Err("dataset path and synthetic spec are mutually exclusive".into());
        }
        let solver = self.solver.ok_or("solver id is required")?;
        if !SOLVER_IDS.contains(&solver.as_str()) {
            return Err(format!(
                "unknown solver id `{solver}`; valid ids: {}",
                SOLVER_IDS.join(", ")
            ));
        }
        let loss = self.loss.unwrap_or_else(|| "logistic".into());
        if !["logistic", "squared"].contains(&loss.as_str()) {
            return Err(format!("unknown loss `{loss}`; valid: logistic, squared"));
        }
        let reg = self.reg.unwrap_or_else(|| "zero".into());
        if !["zero", "l1", "ridge", "elastic-net"].contains(&reg.as_str()) {
            return Err(format!(
                "unknown regularizer `{reg}`; valid: zero, l1, ridge, elastic-net"
            ));
        }
        let lambda1 = self.lambda1.unwrap_or(0.0);
        let lambda2 = self.lambda2.unwrap_or(0.0);
        if lambda1 < 0.0 || lambda2 < 0.0 {
            return Err("penalty weights must be nonnegative".into());
        }
        let budget_iters = self.budget_iters.unwrap_or(100);
        if budget_iters == 0 {
            return Err("iteration/epoch budget must be positive".into());
        }
        let normalize = self.normalize.unwrap_or_else(|| "col-max-abs".into());
        if coder::data::NormalizationScheme::parse(&normalize).is_none() {
            return Err(format!(
                "unknown normalization `{normalize}`; valid: none, unit-row, col-max-abs"
            ));
        }
        let block_size = self.block_size.unwrap_or(1);
        if block_size == 0 {
            return Err("block size must be positive".into());
        }
        if let Some(LMode::Fixed(v)) = &self.l {
            if !(*v > 0.0) || !v.is_finite() {
                return Err(format!("fixed constant must be positive and finite, got {v}"));
            }
        }
        Ok(ResolvedConfig {
            data: self.data,
            synthetic: self.synthetic,
            d_hint: self.d_hint,
            loss,
            reg,
            lambda1,
            lambda2,
            solver,
            l: self.l.unwrap_or_default(),
            block_size,
            k_inner: self.k_inner,
            budget_iters,
            budget_units: self.budget_units,
            wall_cap_s: self.wall_cap_s,
            seed: self.seed.unwrap_or(0),
            normalize,
            reference: self.reference,
            epoch1_literal_z: self.epoch1_literal_z.unwrap_or(false),
            out: self.out.ok_or("output path prefix is required")?,
        })
    }
}
