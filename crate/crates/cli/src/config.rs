//! Experiment configuration, read from TOML.

use std::path::Path;

use scosara_core::{
    ArrayGeometry, AxisLayout, Error, ForwardModel, FrequencyGrid, Mode, PriorityWeights, PulseSpec, Result, Roi,
    TrainConfig,
};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const METHODS: [&str; 5] = ["scosara", "uniform", "greedy", "jdps", "dps_topk"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub out_dir: String,
    pub model: ModelSection,
    pub dataset: DatasetSection,
    pub train: TrainSection,
    pub sweep: SweepSection,
    pub recover: RecoverSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub tx: usize,
    pub rx: usize,
    pub freqs: usize,
    /// Hz.
    pub center_frequency: f64,
    pub fractional_bandwidth: f64,
    /// m/s.
    pub sound_speed: f64,
    /// Element pitch, m.
    pub pitch: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoiSection {
    pub x_min: f64,
    pub x_max: f64,
    pub z_min: f64,
    pub z_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSection {
    pub train_size: usize,
    pub eval_size: usize,
    pub amplitude_min: f64,
    pub amplitude_max: f64,
    pub roi: RoiSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub budget: usize,
    pub steps: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub tau_start: f64,
    pub tau_end: f64,
    pub reg_weight: f64,
    pub sigma: f64,
    pub mode: String,
    pub min_per_axis: usize,
    /// One weight per axis, expanded over that axis' logits.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub priority: Option<Vec<f64>>,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub budgets: Vec<usize>,
    pub methods: Vec<String>,
    pub jitter: f64,
    /// "product" compares the flat selector at `prod M_i` samples, "sum" at `M_Sigma`.
    pub flat_budget: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RecoverSection {
    pub budget: usize,
    pub separations: Vec<usize>,
    pub iterations: usize,
    pub lambda_factor: f64,
    pub noise_sigma: f64,
    pub zero_threshold: f64,
    /// "full" plus any of the sweep methods.
    pub methods: Vec<String>,
    pub roi: RoiSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            out_dir: "out".into(),
            model: ModelSection::default(),
            dataset: DatasetSection::default(),
            train: TrainSection::default(),
            sweep: SweepSection::default(),
            recover: RecoverSection::default(),
        }
    }
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            tx: 8,
            rx: 8,
            freqs: 16,
            center_frequency: 5.0e6,
            fractional_bandwidth: 0.6,
            sound_speed: 1540.0,
            pitch: 0.3e-3,
        }
    }
}

impl Default for DatasetSection {
    fn default() -> Self {
        let roi = Roi::desk_default();
        Self {
            train_size: 256,
            eval_size: 256,
            amplitude_min: 0.5,
            amplitude_max: 1.5,
            roi: RoiSection {
                x_min: roi.x_min,
                x_max: roi.x_max,
                z_min: roi.z_min,
                z_max: roi.z_max,
            },
        }
    }
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            budget: t.budget,
            steps: t.steps,
            batch_size: t.batch_size,
            learning_rate: t.learning_rate,
            tau_start: t.tau_start,
            tau_end: t.tau_end,
            reg_weight: t.reg_weight,
            sigma: t.sigma,
            mode: t.mode.to_string(),
            min_per_axis: t.min_per_axis,
            priority: None,
            beta1: t.beta1,
            beta2: t.beta2,
            epsilon: t.epsilon,
        }
    }
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            budgets: (6..=24).step_by(2).collect(),
            methods: METHODS.iter().map(|s| s.to_string()).collect(),
            jitter: 1e-10,
            flat_budget: "product".into(),
        }
    }
}

impl Default for RecoverSection {
    fn default() -> Self {
        Self {
            budget: 12,
            separations: vec![2, 3, 4],
            iterations: 2000,
            lambda_factor: scosara_core::recovery::DEFAULT_LAMBDA_FACTOR,
            noise_sigma: 0.0,
            zero_threshold: 1e-3,
            methods: std::iter::once("full").chain(METHODS).map(String::from).collect(),
            roi: RoiSection {
                x_min: -1.5e-3,
                x_max: 1.5e-3,
                z_min: 12.5e-3,
                z_max: 15.5e-3,
            },
        }
    }
}

impl RoiSection {
    pub fn roi(&self) -> Result<Roi> {
        let roi = Roi {
            x_min: self.x_min,
            x_max: self.x_max,
            z_min: self.z_min,
            z_max: self.z_max,
        };
        roi.validate()?;
        Ok(roi)
    }
}

impl ModelSection {
    pub fn build(&self) -> Result<ForwardModel> {
        let pulse = PulseSpec::new(self.center_frequency, self.fractional_bandwidth, self.sound_speed)?;
        let geometry = ArrayGeometry::new(self.tx, self.rx, self.pitch)?;
        let freqs = FrequencyGrid::band(&pulse, self.freqs)?;
        ForwardModel::new(geometry, pulse, freqs)
    }
}

impl TrainSection {
    pub fn to_train_config(&self, layout: &AxisLayout, budget: usize, seed: u64) -> Result<TrainConfig> {
        let priority = match &self.priority {
            Some(w) => Some(PriorityWeights::per_axis(layout, w)?),
            None => None,
        };
        Ok(TrainConfig {
            budget,
            steps: self.steps,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            tau_start: self.tau_start,
            tau_end: self.tau_end,
            reg_weight: self.reg_weight,
            priority,
            sigma: self.sigma,
            seed,
            mode: self.mode.parse::<Mode>()?,
            min_per_axis: self.min_per_axis,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
        })
    }
}

fn check_methods(methods: &[String], extra: &[&str]) -> Result<()> {
    for m in methods {
        if !METHODS.contains(&m.as_str()) && !extra.contains(&m.as_str()) {
            return Err(Error::InvalidArgument(format!("unknown method `{m}`")));
        }
    }
    Ok(())
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Hex SHA-256 of the canonical serialization.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_toml_string().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Checks everything that does not need the model built. Budget
    /// feasibility is checked per budget by the sweep.
    pub fn validate(&self) -> Result<()> {
        let model = self.model.build()?;
        self.dataset.roi.roi()?;
        self.recover.roi.roi()?;
        if self.dataset.train_size == 0 || self.dataset.eval_size == 0 {
            return Err(Error::InvalidArgument("dataset sizes must be positive".into()));
        }
        let layout = model.layout();
        self.train.to_train_config(&layout, self.train.budget, self.seed)?.validate(&layout)?;
        if self.sweep.budgets.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidArgument("sweep budgets must be strictly increasing".into()));
        }
        check_methods(&self.sweep.methods, &[])?;
        check_methods(&self.recover.methods, &["full"])?;
        self.flat_budget()?;
        if !(self.sweep.jitter >= 0.0) {
            return Err(Error::InvalidArgument("jitter must be nonnegative".into()));
        }
        let r = &self.recover;
        if r.iterations == 0 || !(r.lambda_factor >= 0.0) || !(r.noise_sigma >= 0.0) || !(r.zero_threshold > 0.0) {
            return Err(Error::InvalidArgument("invalid recovery settings".into()));
        }
        if r.separations.is_empty() || r.separations.contains(&0) {
            return Err(Error::InvalidArgument("separations must be positive".into()));
        }
        Ok(())
    }

    pub fn flat_budget(&self) -> Result<scosara_core::baselines::FlatBudget> {
        use scosara_core::baselines::FlatBudget;
        match self.sweep.flat_budget.as_str() {
            "product" => Ok(FlatBudget::Product),
            "sum" => Ok(FlatBudget::Sum),
            other => Err(Error::InvalidArgument(format!("flat_budget must be `product` or `sum`, got `{other}`"))),
        }
    }
}

/// Seed for one cell of an experiment, derived from the run seed so cells are
/// independent of evaluation order.
pub fn derive_seed(seed: u64, tag: &str, budget: usize) -> u64 {
    let digest = Sha256::digest(format!("{seed}/{tag}/{budget}").as_bytes());
    u64::from_le_bytes(digest[..8].try_into().expect("digest is 32 bytes"))
}
