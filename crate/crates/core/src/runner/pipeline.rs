use std::collections::BTreeMap;

use rayon::prelude::*;

use super::config::{AttackerSpec, AuditStrategy, DataSource, ExperimentConfig};
use super::data::{generate_synthetic_dataset, load_binary_dataset, load_csv_dataset, Dataset};
use super::export::{export_report, ExportExtras};
use super::seeds::{sample_seed, stage_seed};
use crate::adversarial::{apgd_maximize_loss, AttackConfig, AttackTrace};
use crate::attack_models::{
    attacker_score, build_and_train_ensemble, extract_grad_w_stats, extract_grad_x_stats,
    extract_intermediate_outputs, extract_wb_features, fit_logistic_attacker, fit_mlp_attacker,
    AttackerTrainConfig, WB_HIDDEN,
};
use crate::error::{Error, Result};
use crate::evaluation::{
    auroc, averaged_roc_on_grid, balanced_analysis, best_threshold_accuracy, default_fpr_grid,
    fixed_threshold_eval, histogram_range, holdout_threshold_eval, ratio_robustness_experiment,
    roc_curve, sample_indices, score_histogram, EvalReport, LabeledScoreSet, MeanStd,
    ProtocolConfig, StrategyReport, TargetSummary,
};
use crate::nn::{build_mlp, checkpoint::load_model, train, LabeledSample, MlpClassifier};
use crate::scores::{score_sample, ScoreRecord, Strategy};

/// Threshold scores of every member (ids `0..M`) and non-member (ids
/// `M..M+N`); column `j` belongs to `strategies[j]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreTable {
    pub strategies: Vec<Strategy>,
    pub members: Vec<Vec<f64>>,
    pub nonmembers: Vec<Vec<f64>>,
}

impl ScoreTable {
    pub fn column(&self, s: Strategy) -> Option<usize> {
        self.strategies.iter().position(|t| *t == s)
    }

    pub fn member_column(&self, s: Strategy) -> Vec<f64> {
        let j = self.column(s).expect("strategy present");
        self.members.iter().map(|r| r[j]).collect()
    }

    pub fn nonmember_column(&self, s: Strategy) -> Vec<f64> {
        let j = self.column(s).expect("strategy present");
        self.nonmembers.iter().map(|r| r[j]).collect()
    }

    pub fn records(&self, s: Strategy) -> Vec<ScoreRecord> {
        let j = self.column(s).expect("strategy present");
        self.members
            .iter()
            .map(|r| (r[j], true))
            .chain(self.nonmembers.iter().map(|r| (r[j], false)))
            .enumerate()
            .map(|(i, (score, is_member))| ScoreRecord {
                sample_id: i as u64,
                strategy: s.name().to_string(),
                score,
                is_member,
            })
            .collect()
    }

    /// Rebuilds a table from score dumps; every strategy must cover the same
    /// samples.
    pub fn from_records(records: &[ScoreRecord]) -> Result<Self> {
        let mut by_strategy: BTreeMap<Strategy, BTreeMap<u64, (f64, bool)>> = BTreeMap::new();
        for r in records {
            let s = Strategy::from_name(&r.strategy)
                .ok_or_else(|| Error::Validation(format!("unknown strategy `{}`", r.strategy)))?;
            if by_strategy
                .entry(s)
                .or_default()
                .insert(r.sample_id, (r.score, r.is_member))
                .is_some()
            {
                return Err(Error::Validation(format!(
                    "sample {} appears twice for {}",
                    r.sample_id, r.strategy
                )));
            }
        }
        let strategies: Vec<Strategy> = by_strategy.keys().copied().collect();
        let Some(first) = by_strategy.values().next() else {
            return Ok(Self {
                strategies,
                members: Vec::new(),
                nonmembers: Vec::new(),
            });
        };
        let ids: Vec<(u64, bool)> = first.iter().map(|(id, (_, m))| (*id, *m)).collect();
        let (mut members, mut nonmembers) = (Vec::new(), Vec::new());
        for (id, is_member) in ids {
            let row = by_strategy
                .values()
                .map(|col| match col.get(&id) {
                    Some((score, m)) if *m == is_member => Ok(*score),
                    _ => Err(Error::Validation(format!(
                        "sample {id} is missing or inconsistent"
                    ))),
                })
                .collect::<Result<Vec<f64>>>()?;
            if is_member {
                members.push(row)
            } else {
                nonmembers.push(row)
            }
        }
        if by_strategy.values().any(|col| col.len() != first.len()) {
            return Err(Error::Validation(
                "strategies cover different samples".into(),
            ));
        }
        Ok(Self {
            strategies,
            members,
            nonmembers,
        })
    }
}

/// Everything an audit produced, before export.
#[derive(Debug, Clone)]
pub struct AuditOutput {
    pub report: EvalReport,
    pub scores: ScoreTable,
    pub traces: Vec<(u64, AttackTrace)>,
    pub features: BTreeMap<String, Vec<(u64, Vec<f64>, bool)>>,
}

fn stage<T>(name: &'static str, r: Result<T>) -> Result<T> {
    r.map_err(|e| e.in_stage(name))
}

pub fn load_or_generate_data(config: &ExperimentConfig) -> Result<Dataset> {
    match &config.data {
        DataSource::Synthetic {
            n_per_class,
            classes,
            dim,
            separation,
        } => generate_synthetic_dataset(
            *n_per_class,
            *classes,
            *dim,
            *separation,
            stage_seed(config.seed, "data"),
        ),
        DataSource::Csv {
            train,
            heldout,
            classes,
        } => load_csv_dataset(train, heldout, *classes),
        DataSource::Binary { train, heldout } => load_binary_dataset(train, heldout),
    }
}

/// Trains the configured target on the member split.
pub fn train_target(config: &ExperimentConfig, data: &Dataset) -> Result<MlpClassifier> {
    check_target_dims(&config.layer_dims, data)?;
    let mut model = build_mlp(&config.layer_dims, stage_seed(config.seed, "target_init"))?;
    let cfg = crate::nn::TrainConfig {
        seed: stage_seed(config.seed, "target_train"),
        ..config.train.clone()
    };
    train(&mut model, &data.train, &cfg)?;
    Ok(model)
}

fn check_target_dims(dims: &[usize], data: &Dataset) -> Result<()> {
    let (d, k) = (data.manifest.dim, data.manifest.classes);
    let out = *dims.last().unwrap_or(&0);
    let out_classes = if out == 1 { 2 } else { out };
    if dims.first() != Some(&d) || out_classes != k {
        return Err(Error::Config(format!(
            "target.layer_dims {dims:?} do not fit data with {d} features and {k} classes"
        )));
    }
    Ok(())
}

/// Scores every sample under `strategies`; per-sample attack seeds depend
/// only on the sample id.
pub fn compute_score_table(
    model: &MlpClassifier,
    data: &Dataset,
    strategies: &[Strategy],
    attack: &AttackConfig,
    seed: u64,
) -> Result<ScoreTable> {
    let all: Vec<&LabeledSample> = data.train.iter().chain(&data.heldout).collect();
    let rows = all
        .par_iter()
        .enumerate()
        .map(|(id, s)| {
            let cfg = AttackConfig {
                seed: sample_seed(seed, id as u64),
                ..attack.clone()
            };
            score_sample(model, &s.features, s.label, strategies, &cfg)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut members = rows;
    let nonmembers = members.split_off(data.train.len());
    Ok(ScoreTable {
        strategies: strategies.to_vec(),
        members,
        nonmembers,
    })
}

/// Balanced analysis, threshold-holdout analysis, ratio robustness and
/// histograms for every column of `table`.
pub fn evaluate_score_table(
    table: &ScoreTable,
    protocol: &ProtocolConfig,
    ratio_strategies: &[Strategy],
    master_seed: u64,
) -> Result<BTreeMap<String, StrategyReport>> {
    let mut out = BTreeMap::new();
    if table.strategies.is_empty() {
        return Ok(out);
    }
    let names: Vec<String> = table
        .strategies
        .iter()
        .map(|s| s.name().to_string())
        .collect();
    let balanced_protocol = ProtocolConfig {
        seed: stage_seed(master_seed, "analysis1"),
        ..protocol.clone()
    };
    let balanced = balanced_analysis(
        &names,
        &table.members,
        &table.nonmembers,
        &balanced_protocol,
    )?;
    let ratio_protocol = ProtocolConfig {
        seed: stage_seed(master_seed, "ratio"),
        ..protocol.clone()
    };
    for (s, name) in table.strategies.iter().zip(&names) {
        let ms = table.member_column(*s);
        let ns = table.nonmember_column(*s);
        let full = LabeledScoreSet::from_split(name.clone(), &ms, &ns)?;
        let threshold = holdout_threshold_eval(
            &full,
            protocol.holdout_fraction,
            stage_seed(master_seed, &format!("analysis2/{name}")),
        )?;
        let ratios = if ratio_strategies.contains(s) {
            Some(ratio_robustness_experiment(&ms, &ns, &ratio_protocol)?)
        } else {
            None
        };
        let hist = score_histogram(&full, protocol.histogram_bins, histogram_range(&full))?;
        let b = &balanced[name];
        out.insert(
            name.clone(),
            StrategyReport {
                auroc: b.auroc,
                accuracy: b.accuracy,
                threshold,
                roc: b.roc.clone(),
                ratios,
                histogram: Some(hist),
            },
        );
    }
    Ok(out)
}

/// Ids used to train and to evaluate trained attackers. A balanced member
/// subset is drawn, then each class is split by `train_fraction`.
#[derive(Debug, Clone, PartialEq)]
pub struct AttackerSplit {
    pub train: Vec<(usize, bool)>,
    pub eval: Vec<(usize, bool)>,
}

pub fn attacker_split(
    members: usize,
    nonmembers: usize,
    train_fraction: f64,
    seed: u64,
) -> Result<AttackerSplit> {
    let per_class = members.min(nonmembers);
    let chosen_m = sample_indices(members, per_class, seed)?;
    let chosen_n = sample_indices(nonmembers, per_class, seed.wrapping_add(1))?;
    let k = (train_fraction * per_class as f64).round() as usize;
    if k == 0 || k == per_class {
        return Err(Error::Config(format!(
            "attacker split of {per_class} samples per class leaves an empty side"
        )));
    }
    let order_m = sample_indices(per_class, k, seed.wrapping_add(2))?;
    let order_n = sample_indices(per_class, k, seed.wrapping_add(3))?;
    let mut split = AttackerSplit {
        train: Vec::new(),
        eval: Vec::new(),
    };
    for (chosen, order, is_member) in [(&chosen_m, &order_m, true), (&chosen_n, &order_n, false)] {
        let mut in_train = vec![false; per_class];
        order.iter().for_each(|i| in_train[*i] = true);
        for (pos, id) in chosen.iter().enumerate() {
            let dst = if in_train[pos] {
                &mut split.train
            } else {
                &mut split.eval
            };
            dst.push((*id, is_member));
        }
    }
    Ok(split)
}

fn attacker_features(
    spec: AttackerSpec,
    model: &MlpClassifier,
    sample: &LabeledSample,
    six: Option<&[f64]>,
) -> Result<Vec<f64>> {
    let (x, y) = (&sample.features, sample.label);
    Ok(match spec {
        AttackerSpec::GradW => extract_grad_w_stats(model, x, y)?.values,
        AttackerSpec::GradX => extract_grad_x_stats(model, x, y)?.values,
        AttackerSpec::IntOuts => extract_intermediate_outputs(model, x)?.values,
        AttackerSpec::Wb => extract_wb_features(model, x, y)?.values,
        AttackerSpec::Ensemble => six
            .ok_or_else(|| Error::Config("ensemble attacker needs all six scores".into()))?
            .to_vec(),
    })
}

/// Trains one attacker on the split's training part and evaluates it on the
/// rest: AUROC and best accuracy of its score, plus the fixed 0.5 threshold.
#[allow(clippy::too_many_arguments)]
pub fn run_attacker(
    spec: AttackerSpec,
    model: &MlpClassifier,
    data: &Dataset,
    table: &ScoreTable,
    split: &AttackerSplit,
    train_cfg: &AttackerTrainConfig,
    protocol: &ProtocolConfig,
    seed: u64,
) -> Result<(StrategyReport, Vec<(u64, Vec<f64>, bool)>)> {
    let m = data.train.len();
    let six_row = |id: usize, member: bool| -> Option<Vec<f64>> {
        let row = if member {
            &table.members[id]
        } else {
            &table.nonmembers[id]
        };
        Strategy::ALL
            .iter()
            .map(|s| table.column(*s).map(|j| row[j]))
            .collect()
    };
    let featurize = |ids: &[(usize, bool)]| -> Result<Vec<(u64, Vec<f64>, bool)>> {
        ids.par_iter()
            .map(|(id, member)| {
                let sample = if *member {
                    &data.train[*id]
                } else {
                    &data.heldout[*id]
                };
                let six = six_row(*id, *member);
                let f = attacker_features(spec, model, sample, six.as_deref())?;
                let global = if *member { *id } else { m + id };
                Ok((global as u64, f, *member))
            })
            .collect()
    };
    let train_rows = featurize(&split.train)?;
    let eval_rows = featurize(&split.eval)?;
    let xs: Vec<Vec<f64>> = train_rows.iter().map(|r| r.1.clone()).collect();
    let ys: Vec<bool> = train_rows.iter().map(|r| r.2).collect();
    let cfg = AttackerTrainConfig {
        seed,
        ..train_cfg.clone()
    };
    let attacker = match spec {
        AttackerSpec::GradW | AttackerSpec::GradX => fit_logistic_attacker(&xs, &ys)?,
        AttackerSpec::IntOuts | AttackerSpec::Wb => fit_mlp_attacker(&xs, &ys, &WB_HIDDEN, &cfg)?,
        AttackerSpec::Ensemble => build_and_train_ensemble(&xs, &ys, seed, &cfg)?,
    };
    let entries = eval_rows
        .iter()
        .map(|(_, f, member)| Ok((attacker_score(&attacker, f)?, *member)))
        .collect::<Result<Vec<_>>>()?;
    let set = LabeledScoreSet::new(spec.name(), entries)?;
    let curve = roc_curve(&set)?;
    let report = StrategyReport {
        auroc: MeanStd::exact(auroc(&set)?),
        accuracy: MeanStd::exact(best_threshold_accuracy(&set)?.1),
        threshold: fixed_threshold_eval(&set, 0.5)?,
        roc: averaged_roc_on_grid(&[curve], &default_fpr_grid(protocol.fpr_grid_points))?,
        ratios: None,
        histogram: Some(score_histogram(&set, protocol.histogram_bins, (0.0, 1.0))?),
    };
    Ok((report, train_rows.into_iter().chain(eval_rows).collect()))
}

/// Threshold strategies whose scores the audit must compute.
fn required_scores(config: &ExperimentConfig) -> Vec<Strategy> {
    let needs_all = config
        .strategies
        .contains(&AuditStrategy::Attacker(AttackerSpec::Ensemble));
    Strategy::ALL
        .into_iter()
        .filter(|s| needs_all || config.strategies.contains(&AuditStrategy::Score(*s)))
        .collect()
}

/// Runs every stage in memory.
pub fn audit(config: &ExperimentConfig) -> Result<AuditOutput> {
    let data = stage("data", load_or_generate_data(config))?;
    let model = stage(
        "target",
        match &config.target_checkpoint {
            Some(p) => {
                load_model(p).and_then(|m| check_target_dims(m.layer_dims(), &data).map(|_| m))
            }
            None => train_target(config, &data),
        },
    )?;
    let target = stage(
        "target",
        (|| {
            Ok(TargetSummary {
                layer_dims: model.layer_dims().to_vec(),
                train_accuracy: model.accuracy(&data.train)?,
                heldout_accuracy: model.accuracy(&data.heldout)?,
                members: data.train.len(),
                nonmembers: data.heldout.len(),
            })
        })(),
    )?;

    let score_strategies = required_scores(config);
    let attack_seed = stage_seed(config.seed, "attack");
    let table = stage(
        "scoring",
        compute_score_table(
            &model,
            &data,
            &score_strategies,
            &config.attack,
            attack_seed,
        ),
    )?;

    let traces = stage(
        "scoring",
        trace_ids(config.trace_samples, data.train.len(), data.heldout.len())
            .into_par_iter()
            .map(|id| {
                let s = if id < data.train.len() {
                    &data.train[id]
                } else {
                    &data.heldout[id - data.train.len()]
                };
                let cfg = AttackConfig {
                    seed: sample_seed(attack_seed, id as u64),
                    ..config.attack.clone()
                };
                Ok((
                    id as u64,
                    apgd_maximize_loss(&model, &s.features, s.label, &cfg)?,
                ))
            })
            .collect::<Result<Vec<_>>>(),
    )?;

    let mut report = EvalReport::new(config.seed, config.echo());
    report.target = Some(target);

    let listed: Vec<Strategy> = config
        .strategies
        .iter()
        .filter_map(|s| match s {
            AuditStrategy::Score(t) => Some(*t),
            AuditStrategy::Attacker(_) => None,
        })
        .collect();
    let listed_table = ScoreTable {
        strategies: listed.clone(),
        members: select_columns(&table, &table.members, &listed),
        nonmembers: select_columns(&table, &table.nonmembers, &listed),
    };
    report.strategies = stage(
        "evaluation",
        evaluate_score_table(
            &listed_table,
            &config.protocol,
            &config.ratio_strategies,
            config.seed,
        ),
    )?;

    let mut features = BTreeMap::new();
    let attackers: Vec<AttackerSpec> = config
        .strategies
        .iter()
        .filter_map(|s| match s {
            AuditStrategy::Attacker(a) => Some(*a),
            AuditStrategy::Score(_) => None,
        })
        .collect();
    if !attackers.is_empty() {
        let split = stage(
            "attackers",
            attacker_split(
                data.train.len(),
                data.heldout.len(),
                config.attacker_train_fraction,
                stage_seed(config.seed, "attacker_split"),
            ),
        )?;
        for spec in attackers {
            let (r, rows) = stage(
                "attackers",
                run_attacker(
                    spec,
                    &model,
                    &data,
                    &table,
                    &split,
                    &config.attacker,
                    &config.protocol,
                    stage_seed(config.seed, &format!("attacker/{}", spec.name())),
                ),
            )?;
            report.strategies.insert(spec.name().to_string(), r);
            if config.dump_features {
                features.insert(spec.name().to_string(), rows);
            }
        }
    }

    Ok(AuditOutput {
        report,
        scores: listed_table,
        traces,
        features,
    })
}

fn select_columns(table: &ScoreTable, rows: &[Vec<f64>], wanted: &[Strategy]) -> Vec<Vec<f64>> {
    let cols: Vec<usize> = wanted
        .iter()
        .map(|s| table.column(*s).expect("computed"))
        .collect();
    rows.iter()
        .map(|r| cols.iter().map(|j| r[*j]).collect())
        .collect()
}

/// The first `k` members and the first `k` non-members.
fn trace_ids(k: usize, members: usize, nonmembers: usize) -> Vec<usize> {
    (0..k.min(members))
        .chain((0..k.min(nonmembers)).map(|j| members + j))
        .collect()
}

/// Runs [`audit`] on `workers` threads (all cores when `None`) and exports
/// the artifacts to the configured output directory.
pub fn run_pipeline(config: &ExperimentConfig, workers: Option<usize>) -> Result<EvalReport> {
    let out = with_workers(workers, || audit(config))?;
    stage(
        "export",
        export_report(
            &out.report,
            &config.out_dir,
            &ExportExtras {
                scores: config.dump_scores.then_some(&out.scores),
                traces: &out.traces,
                features: &out.features,
            },
        ),
    )?;
    Ok(out.report)
}

/// Runs `f` inside a dedicated thread pool.
pub fn with_workers<T: Send>(
    workers: Option<usize>,
    f: impl FnOnce() -> Result<T> + Send,
) -> Result<T> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = workers {
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::Config(format!("cannot start {workers:?} workers: {e}")))?;
    pool.install(f)
}
