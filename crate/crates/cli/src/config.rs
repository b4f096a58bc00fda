//! Run configuration: a JSON file, overridden by command-line flags.
//!
//! Precedence, highest first: flags, config file, `COVLAB_OUT` (output
//! directory only), built-in defaults. [`RunConfig::resolved`] fills every
//! default so the manifest echo can be parsed back into the same run.

use std::path::{Path, PathBuf};

use covlab::experiments::{StudyOptions, DEFAULT_SEED, DEFAULT_SERIES_TOL};
use covlab::nets::{Architecture, WeightSampler, DEFAULT_BETA};
use covlab::theory::DEFAULT_FLOW_STEP;
use covlab::{InputPair, ScalingSequence};
use serde::{Deserialize, Serialize};

/// Environment variable naming the default output directory.
pub const OUT_ENV: &str = "COVLAB_OUT";
pub const DEFAULT_OUT: &str = "covlab-out";

#[derive(Debug, thiserror::Error)]
#[error("configuration error in `{key}`: {reason}")]
pub struct ConfigError {
    pub key: String,
    pub reason: String,
}

impl ConfigError {
    pub fn new(key: impl Into<String>, reason: impl Into<String>) -> Self {
        ConfigError {
            key: key.into(),
            reason: reason.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Study {
    Theory,
    Simulate,
    Grid,
    DepthRate,
    WidthRate,
    Joint,
}

impl Study {
    pub fn name(self) -> &'static str {
        match self {
            Study::Theory => "theory",
            Study::Simulate => "simulate",
            Study::Grid => "grid",
            Study::DepthRate => "depth-rate",
            Study::WidthRate => "width-rate",
            Study::Joint => "joint",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ArchName {
    ScaledResnet,
    Mlp,
    ShapedMlp,
    ShapedResnet,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SamplerName {
    Projected,
    Streaming,
}

/// Every key is optional in a file; `resolved` fills the rest.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub study: Option<Study>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub arch: Option<ArchName>,
    /// Architectures of the joint study.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub archs: Option<Vec<ArchName>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scaling: Option<ScalingSequence>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_list: Option<Vec<usize>>,
    #[serde(rename = "L_list", skip_serializing_if = "Option::is_none")]
    pub l_list: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub d: Option<usize>,
    /// Input correlation. With it the pair is the two-dimensional unit pair
    /// with this correlation (and `d` must be 2); without it two unit vectors
    /// are drawn from `N(0, I_d)` with `input_seed`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c0: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub input_seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trials: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub master_seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub step: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sampler: Option<SamplerName>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub block_rows: Option<usize>,
    /// Co-propagate the auxiliary process (simulate study, scaled ResNet).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub auxiliary: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub drop_fraction: Option<f64>,
}

fn powers_of_two(lo: u32, hi: u32) -> Vec<usize> {
    (lo..=hi).map(|k| 1usize << k).collect()
}

fn default_lists(study: Study) -> (Vec<usize>, Vec<usize>) {
    match study {
        Study::Theory => (vec![], vec![4, 16, 64, 256]),
        Study::Simulate => (vec![256], vec![64]),
        Study::Grid => (vec![8, 256, 4096], vec![2, 8, 64]),
        Study::DepthRate => (vec![], powers_of_two(3, 13)),
        Study::WidthRate => (powers_of_two(5, 12), vec![64]),
        Study::Joint => (vec![64, 256, 1024], vec![]),
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let msg = e.inner().to_string();
            let key = offending_key(&msg)
                .or_else(|| (path != ".").then(|| path.clone()))
                .unwrap_or_else(|| "config".into());
            ConfigError::new(key, msg)
        })
    }

    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::new("config", format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Fields set in `over` replace those in `self`.
    pub fn overlay(mut self, over: RunConfig) -> Result<Self, ConfigError> {
        if let (Some(a), Some(b)) = (self.study, over.study) {
            if a != b {
                return Err(ConfigError::new(
                    "study",
                    format!("config file asks for `{}` but the command is `{}`", a.name(), b.name()),
                ));
            }
        }
        macro_rules! take {
            ($($f:ident),*) => { $( if over.$f.is_some() { self.$f = over.$f; } )* };
        }
        take!(
            study, arch, archs, scaling, beta, n_list, l_list, d, c0, input_seed, trials, master_seed, step, tol,
            output_dir, workers, sampler, block_rows, auxiliary, drop_fraction
        );
        Ok(self)
    }

    /// Every default filled in, then validated.
    pub fn resolved(&self, env_out: Option<PathBuf>) -> Result<RunConfig, ConfigError> {
        let study = self.study.ok_or_else(|| ConfigError::new("study", "no study given"))?;
        let (n_def, l_def) = default_lists(study);
        let master_seed = self.master_seed.unwrap_or(DEFAULT_SEED);
        let c0 = self.c0;
        let d = self.d.unwrap_or(if c0.is_some() { 2 } else { 30 });
        let trials = self.trials.unwrap_or(match study {
            Study::Joint => 200,
            _ => 100,
        });
        let sampler = self.sampler.unwrap_or(SamplerName::Projected);
        let r = RunConfig {
            study: Some(study),
            arch: Some(self.arch.unwrap_or(ArchName::ScaledResnet)),
            archs: Some(self.archs.clone().unwrap_or_else(|| {
                vec![ArchName::ScaledResnet, ArchName::ShapedMlp, ArchName::ShapedResnet]
            })),
            scaling: Some(self.scaling.clone().unwrap_or_else(ScalingSequence::normalized_uniform)),
            beta: Some(self.beta.unwrap_or(DEFAULT_BETA)),
            n_list: Some(self.n_list.clone().unwrap_or(n_def)),
            l_list: Some(self.l_list.clone().unwrap_or(l_def)),
            d: Some(d),
            c0: if study == Study::Theory { Some(c0.unwrap_or(0.5)) } else { c0 },
            input_seed: Some(self.input_seed.unwrap_or(master_seed)),
            trials: Some(trials),
            master_seed: Some(master_seed),
            step: Some(self.step.unwrap_or(DEFAULT_FLOW_STEP)),
            tol: Some(self.tol.unwrap_or(DEFAULT_SERIES_TOL)),
            output_dir: Some(
                self.output_dir
                    .clone()
                    .or(env_out)
                    .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT)),
            ),
            workers: Some(self.workers.unwrap_or(1)),
            sampler: Some(sampler),
            block_rows: Some(self.block_rows.unwrap_or(1)),
            auxiliary: Some(self.auxiliary.unwrap_or(false)),
            drop_fraction: Some(self.drop_fraction.unwrap_or(covlab::experiments::DEFAULT_DROP_FRACTION)),
        };
        r.validate()?;
        Ok(r)
    }

    fn validate(&self) -> Result<(), ConfigError> {
        let study = self.study.expect("resolved");
        let nonempty = |key: &str, v: &Option<Vec<usize>>| -> Result<(), ConfigError> {
            let v = v.as_deref().unwrap_or(&[]);
            if v.is_empty() {
                return Err(ConfigError::new(key, "must be a nonempty list"));
            }
            if v.contains(&0) {
                return Err(ConfigError::new(key, "entries must be positive"));
            }
            Ok(())
        };
        match study {
            Study::Theory | Study::DepthRate => nonempty("L_list", &self.l_list)?,
            Study::Joint => nonempty("n_list", &self.n_list)?,
            Study::Simulate | Study::Grid | Study::WidthRate => {
                nonempty("n_list", &self.n_list)?;
                nonempty("L_list", &self.l_list)?;
            }
        }
        if self.archs.as_ref().is_some_and(|a| a.is_empty()) {
            return Err(ConfigError::new("archs", "must be a nonempty list"));
        }
        let positive = |key: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(ConfigError::new(key, format!("must be positive, got {v}")))
            }
        };
        positive("step", self.step.unwrap())?;
        positive("tol", self.tol.unwrap())?;
        let beta = self.beta.unwrap();
        if !(beta > 0.0 && beta < 1.0) {
            return Err(ConfigError::new("beta", format!("must lie in (0, 1), got {beta}")));
        }
        if !(0.0..1.0).contains(&self.drop_fraction.unwrap()) {
            return Err(ConfigError::new("drop_fraction", "must lie in [0, 1)"));
        }
        for (key, v) in [("d", self.d), ("trials", self.trials), ("workers", self.workers), ("block_rows", self.block_rows)] {
            if v == Some(0) {
                return Err(ConfigError::new(key, "must be at least 1"));
            }
        }
        if self.trials.unwrap() < 2 && study != Study::Theory {
            return Err(ConfigError::new("trials", "need at least 2 trials"));
        }
        if let Some(c0) = self.c0 {
            if !(c0.abs() <= 1.0) {
                return Err(ConfigError::new("c0", format!("must lie in [-1, 1], got {c0}")));
            }
            if study != Study::Theory {
                if self.d != Some(2) {
                    return Err(ConfigError::new("d", "a pair given by `c0` lives in d = 2"));
                }
                if c0 == 0.0 {
                    return Err(ConfigError::new("c0", "inputs must have a nonzero inner product"));
                }
            }
        }
        if self.auxiliary == Some(true) && self.arch != Some(ArchName::ScaledResnet) {
            return Err(ConfigError::new("auxiliary", "the auxiliary process needs arch = scaled-resnet"));
        }
        Ok(())
    }

    // accessors for resolved configs

    pub fn study(&self) -> Study {
        self.study.expect("resolved")
    }

    pub fn n_list(&self) -> &[usize] {
        self.n_list.as_deref().unwrap_or(&[])
    }

    pub fn l_list(&self) -> &[usize] {
        self.l_list.as_deref().unwrap_or(&[])
    }

    pub fn scaling(&self) -> &ScalingSequence {
        self.scaling.as_ref().expect("resolved")
    }

    pub fn out_dir(&self) -> &Path {
        self.output_dir.as_deref().expect("resolved")
    }

    pub fn architecture(&self, name: ArchName) -> Result<Architecture, ConfigError> {
        Ok(match name {
            ArchName::ScaledResnet => Architecture::scaled_resnet(self.scaling().clone()),
            ArchName::Mlp => Architecture::Mlp,
            ArchName::ShapedMlp => Architecture::ShapedMlp,
            ArchName::ShapedResnet => Architecture::shaped_resnet(self.beta.unwrap())
                .map_err(|e| ConfigError::new("beta", e.to_string()))?,
        })
    }

    pub fn pair(&self) -> Result<InputPair, ConfigError> {
        let d = self.d.unwrap();
        match self.c0 {
            Some(c0) => InputPair::with_correlation(c0).map_err(|e| ConfigError::new("c0", e.to_string())),
            None => InputPair::sample_unit(d, self.input_seed.unwrap()).map_err(|e| ConfigError::new("d", e.to_string())),
        }
    }

    pub fn options(&self) -> StudyOptions {
        StudyOptions {
            master_seed: self.master_seed.unwrap(),
            workers: self.workers.unwrap(),
            flow_step: self.step.unwrap(),
            series_tol: self.tol.unwrap(),
            sampler: match self.sampler.unwrap() {
                SamplerName::Projected => WeightSampler::Projected,
                SamplerName::Streaming => WeightSampler::Streaming {
                    block_rows: self.block_rows.unwrap(),
                },
            },
            drop_fraction: self.drop_fraction.unwrap(),
        }
    }
}

/// Picks the key out of "unknown field `foo`" and "invalid parameter `gamma`"
/// messages; other errors are located by their path instead.
fn offending_key(msg: &str) -> Option<String> {
    if !(msg.starts_with("unknown field") || msg.starts_with("invalid parameter")) {
        return None;
    }
    let start = msg.find('`')? + 1;
    let len = msg[start..].find('`')?;
    Some(msg[start..start + len].to_string())
}
