use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::adversarial::{AttackConfig, Norm};
use crate::attack_models::AttackerTrainConfig;
use crate::error::{Error, Result};
use crate::evaluation::ProtocolConfig;
use crate::nn::{EarlyStop, Optimizer, TrainConfig};
use crate::scores::Strategy;

/// Every accepted key with its default value. Empty means "unset"; `auto`
/// means "derive from the data".
pub const SCHEMA: &[(&str, &str)] = &[
    ("seed", "0"),
    ("data.source", "synthetic"),
    ("data.train_path", ""),
    ("data.heldout_path", ""),
    ("data.n_per_class", "50"),
    ("data.classes", "10"),
    ("data.dim", "32"),
    ("data.separation", "0.3"),
    ("target.layer_dims", "32,256,10"),
    ("target.checkpoint", ""),
    ("train.epochs", "300"),
    ("train.batch_size", "32"),
    ("train.learning_rate", "0.01"),
    ("train.optimizer", "adam"),
    ("train.early_stop_patience", "0"),
    ("train.early_stop_min_delta", "0"),
    ("attack.norm", "inf"),
    ("attack.epsilon", "1.0"),
    ("attack.n_iter", "100"),
    ("attack.n_restarts", "0"),
    ("attack.step_fraction", "2.0"),
    ("attack.momentum", "0.75"),
    (
        "strategies",
        "softmax,mentr,loss,grad_w_norm,grad_x_norm,adv_dist",
    ),
    ("attacker.train_fraction", "0.4"),
    ("attacker.max_epochs", "300"),
    ("attacker.batch_size", "32"),
    ("attacker.learning_rate", "0.001"),
    ("attacker.patience", "20"),
    ("attacker.min_delta", "1e-6"),
    ("protocol.member_pool_size", "auto"),
    ("protocol.nonmember_pool_size", "auto"),
    ("protocol.member_subset_size", "auto"),
    ("protocol.repeats", "20"),
    ("protocol.holdout_fraction", "0.8"),
    ("protocol.fpr_grid_points", "201"),
    ("protocol.histogram_bins", "50"),
    ("protocol.ratios", "5:1,1:1,1:5"),
    ("protocol.ratio_nonmembers", "auto"),
    ("protocol.ratio_repeats", "100"),
    ("protocol.ratio_strategies", "adv_dist"),
    ("output.dir", "out"),
    ("output.dump_scores", "true"),
    ("output.dump_features", "false"),
    ("output.trace_samples", "0"),
];

/// Keys that do not affect results and are left out of the report echo.
const NON_SCIENTIFIC: &[&str] = &["output.dir"];

/// A trained membership attacker selectable in `strategies`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackerSpec {
    GradW,
    GradX,
    IntOuts,
    Wb,
    Ensemble,
}

impl AttackerSpec {
    pub const ALL: [AttackerSpec; 5] = [
        AttackerSpec::GradW,
        AttackerSpec::GradX,
        AttackerSpec::IntOuts,
        AttackerSpec::Wb,
        AttackerSpec::Ensemble,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            AttackerSpec::GradW => "grad_w",
            AttackerSpec::GradX => "grad_x",
            AttackerSpec::IntOuts => "int_outs",
            AttackerSpec::Wb => "wb",
            AttackerSpec::Ensemble => "ensemble",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|a| a.name() == name)
    }
}

/// One entry of the `strategies` list.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AuditStrategy {
    Score(Strategy),
    Attacker(AttackerSpec),
}

impl AuditStrategy {
    pub fn name(&self) -> &'static str {
        match self {
            AuditStrategy::Score(s) => s.name(),
            AuditStrategy::Attacker(a) => a.name(),
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Strategy::from_name(name)
            .map(AuditStrategy::Score)
            .or_else(|| AttackerSpec::from_name(name).map(AuditStrategy::Attacker))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    Synthetic {
        n_per_class: usize,
        classes: usize,
        dim: usize,
        separation: f64,
    },
    Csv {
        train: PathBuf,
        heldout: PathBuf,
        classes: usize,
    },
    Binary {
        train: PathBuf,
        heldout: PathBuf,
    },
}

/// Fully resolved experiment settings.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub data: DataSource,
    pub layer_dims: Vec<usize>,
    pub target_checkpoint: Option<PathBuf>,
    pub train: TrainConfig,
    pub attack: AttackConfig,
    pub strategies: Vec<AuditStrategy>,
    pub attacker_train_fraction: f64,
    pub attacker: AttackerTrainConfig,
    pub protocol: ProtocolConfig,
    pub ratio_strategies: Vec<Strategy>,
    pub out_dir: PathBuf,
    pub dump_scores: bool,
    pub dump_features: bool,
    pub trace_samples: usize,
    values: BTreeMap<String, String>,
}

/// Parses `key = value` lines; `#` starts a comment.
pub fn parse_key_values(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", i + 1)))?;
        let k = k.trim();
        if out.insert(k.to_string(), v.trim().to_string()).is_some() {
            return Err(Error::Config(format!(
                "line {}: duplicate key `{k}`",
                i + 1
            )));
        }
    }
    Ok(out)
}

fn parse<T: FromStr>(values: &BTreeMap<String, String>, key: &str) -> Result<T> {
    let raw = &values[key];
    raw.parse()
        .map_err(|_| Error::Config(format!("`{key}`: cannot parse `{raw}`")))
}

fn parse_auto(values: &BTreeMap<String, String>, key: &str) -> Result<Option<usize>> {
    if values[key] == "auto" {
        Ok(None)
    } else {
        parse(values, key).map(Some)
    }
}

fn parse_list<T>(
    values: &BTreeMap<String, String>,
    key: &str,
    f: impl Fn(&str) -> Option<T>,
) -> Result<Vec<T>> {
    values[key]
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| f(s).ok_or_else(|| Error::Config(format!("`{key}`: unknown entry `{s}`"))))
        .collect()
}

fn parse_bool(values: &BTreeMap<String, String>, key: &str) -> Result<bool> {
    parse(values, key)
}

fn existing_path(values: &BTreeMap<String, String>, key: &str) -> Result<PathBuf> {
    let p = PathBuf::from(&values[key]);
    if values[key].is_empty() || !p.exists() {
        return Err(Error::Config(format!(
            "`{key}`: path `{}` does not exist",
            p.display()
        )));
    }
    Ok(p)
}

impl ExperimentConfig {
    /// Defaults overlaid by `text`, then by `overrides`.
    pub fn from_text(text: &str, overrides: &[(String, String)]) -> Result<Self> {
        let mut values: BTreeMap<String, String> = SCHEMA
            .iter()
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect();
        let file = parse_key_values(text)?;
        for (k, v) in file.into_iter().chain(overrides.iter().cloned()) {
            match values.get_mut(&k) {
                Some(slot) => *slot = v,
                None => return Err(Error::Config(format!("unknown key `{k}`"))),
            }
        }
        Self::from_values(values)
    }

    pub fn load(path: &Path, overrides: &[(String, String)]) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_text(&text, overrides)
    }

    pub fn defaults() -> Self {
        Self::from_text("", &[]).expect("built-in defaults are valid")
    }

    /// Settings echoed into reports (paths of outputs excluded).
    pub fn echo(&self) -> BTreeMap<String, String> {
        self.values
            .iter()
            .filter(|(k, _)| !NON_SCIENTIFIC.contains(&k.as_str()))
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect()
    }

    pub fn value(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    fn from_values(values: BTreeMap<String, String>) -> Result<Self> {
        let seed: u64 = parse(&values, "seed")?;
        let data = match values["data.source"].as_str() {
            "synthetic" => DataSource::Synthetic {
                n_per_class: parse(&values, "data.n_per_class")?,
                classes: parse(&values, "data.classes")?,
                dim: parse(&values, "data.dim")?,
                separation: parse(&values, "data.separation")?,
            },
            "csv" => DataSource::Csv {
                train: existing_path(&values, "data.train_path")?,
                heldout: existing_path(&values, "data.heldout_path")?,
                classes: parse(&values, "data.classes")?,
            },
            "binary" => DataSource::Binary {
                train: existing_path(&values, "data.train_path")?,
                heldout: existing_path(&values, "data.heldout_path")?,
            },
            other => return Err(Error::Config(format!("unknown data.source `{other}`"))),
        };
        let layer_dims = parse_list(&values, "target.layer_dims", |s| s.parse().ok())?;
        let target_checkpoint = if values["target.checkpoint"].is_empty() {
            None
        } else {
            Some(existing_path(&values, "target.checkpoint")?)
        };
        let patience: usize = parse(&values, "train.early_stop_patience")?;
        let train = TrainConfig {
            epochs: parse(&values, "train.epochs")?,
            batch_size: parse(&values, "train.batch_size")?,
            learning_rate: parse(&values, "train.learning_rate")?,
            optimizer: values["train.optimizer"]
                .parse::<Optimizer>()
                .map_err(|_| {
                    Error::Config(format!("unknown optimizer `{}`", values["train.optimizer"]))
                })?,
            seed: 0,
            early_stop: (patience > 0)
                .then(|| -> Result<EarlyStop> {
                    Ok(EarlyStop {
                        patience,
                        min_delta: parse(&values, "train.early_stop_min_delta")?,
                    })
                })
                .transpose()?,
            ..TrainConfig::default()
        };
        let attack = AttackConfig {
            norm: values["attack.norm"]
                .parse::<Norm>()
                .map_err(|_| Error::Config(format!("unknown norm `{}`", values["attack.norm"])))?,
            epsilon: parse(&values, "attack.epsilon")?,
            n_iter: parse(&values, "attack.n_iter")?,
            n_restarts: parse(&values, "attack.n_restarts")?,
            seed: 0,
            initial_step_fraction: parse(&values, "attack.step_fraction")?,
            momentum: parse(&values, "attack.momentum")?,
        };
        attack.validate()?;
        let strategies = parse_list(&values, "strategies", AuditStrategy::from_name)?;
        let mut seen = std::collections::BTreeSet::new();
        if let Some(dup) = strategies.iter().find(|s| !seen.insert(**s)) {
            return Err(Error::Config(format!(
                "strategy `{}` listed twice",
                dup.name()
            )));
        }
        let ratios = parse_list(&values, "protocol.ratios", |s| {
            let (a, b) = s.split_once(':')?;
            Some((a.trim().parse().ok()?, b.trim().parse().ok()?))
        })?;
        let protocol = ProtocolConfig {
            member_pool_size: parse_auto(&values, "protocol.member_pool_size")?,
            nonmember_pool_size: parse_auto(&values, "protocol.nonmember_pool_size")?,
            member_subset_size: parse_auto(&values, "protocol.member_subset_size")?,
            repeats: parse(&values, "protocol.repeats")?,
            ratios,
            ratio_nonmembers: parse_auto(&values, "protocol.ratio_nonmembers")?,
            ratio_repeats: parse(&values, "protocol.ratio_repeats")?,
            holdout_fraction: parse(&values, "protocol.holdout_fraction")?,
            fpr_grid_points: parse(&values, "protocol.fpr_grid_points")?,
            histogram_bins: parse(&values, "protocol.histogram_bins")?,
            seed: 0,
        };
        protocol.validate()?;
        let attacker_train_fraction: f64 = parse(&values, "attacker.train_fraction")?;
        if !(attacker_train_fraction > 0.0 && attacker_train_fraction < 1.0) {
            return Err(Error::Config(
                "attacker.train_fraction must lie in (0, 1)".into(),
            ));
        }
        let attacker = AttackerTrainConfig {
            max_epochs: parse(&values, "attacker.max_epochs")?,
            batch_size: parse(&values, "attacker.batch_size")?,
            learning_rate: parse(&values, "attacker.learning_rate")?,
            patience: parse(&values, "attacker.patience")?,
            min_delta: parse(&values, "attacker.min_delta")?,
            seed: 0,
        };
        Ok(Self {
            seed,
            data,
            layer_dims,
            target_checkpoint,
            train,
            attack,
            strategies,
            attacker_train_fraction,
            attacker,
            protocol,
            ratio_strategies: parse_list(
                &values,
                "protocol.ratio_strategies",
                Strategy::from_name,
            )?,
            out_dir: PathBuf::from(&values["output.dir"]),
            dump_scores: parse_bool(&values, "output.dump_scores")?,
            dump_features: parse_bool(&values, "output.dump_features")?,
            trace_samples: parse(&values, "output.trace_samples")?,
            values,
        })
    }
}
