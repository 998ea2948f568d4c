//! End-to-end driver: configuration, the per-seed pipeline, the multi-seed
//! experiment harness and its reports.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::clustering::{
    discretized_accuracy, search_epsilon, ClusterModel, ClusterSearchConfig, ClusterSearchOutcome,
};
use crate::data::{
    discretize_inputs, load_dataset_files, split_dataset, CutPolicy, Dataset, DiscretizationScheme,
    EncodedSet, Encoder, Imputer, SplitSpec,
};
use crate::error::{Error, Result, Stage};
use crate::network::Network;
use crate::pruning::{prune_network, remove_dead_nodes, DeadNodeReport, PruneConfig, PruneOutcome};
use crate::rulegen::{
    compose_rules, evaluate_ruleset, extract_hidden_rules, extract_output_rules, prune_rules,
    FeatureSpace, RuleSet, Table,
};
use crate::training::{constructive_train, ConstructiveOutcome, TrainConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RuleConfig {
    /// Train accuracy the rule set must keep while rules are deleted.
    /// `None` means the discretized network's train accuracy minus `floor_margin`.
    pub accuracy_floor: Option<f64>,
    pub floor_margin: f64,
    /// Run the rule-deletion loop after composition.
    pub refine: bool,
}

impl Default for RuleConfig {
    fn default() -> Self {
        RuleConfig {
            accuracy_floor: None,
            floor_margin: 0.01,
            refine: true,
        }
    }
}

fn default_seeds() -> Vec<u64> {
    (1..=10).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// CSV file; relative paths are resolved against the config file.
    pub data: PathBuf,
    pub schema: PathBuf,
    /// File-order split; absent means every pattern trains and nothing is held out.
    #[serde(default)]
    pub split: Option<SplitSpec>,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub prune: PruneConfig,
    #[serde(default)]
    pub cluster: ClusterSearchConfig,
    #[serde(default)]
    pub discretize: CutPolicy,
    #[serde(default)]
    pub rules: RuleConfig,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
}

impl RunConfig {
    pub fn from_toml(text: &str, base: &Path, overrides: &[String]) -> Result<RunConfig> {
        let mut value: toml::Value =
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        for o in overrides {
            apply_override(&mut value, o)?;
        }
        let mut cfg: RunConfig = value
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        for p in [&mut cfg.data, &mut cfg.schema] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: impl AsRef<Path>, overrides: &[String]) -> Result<RunConfig> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        RunConfig::from_toml(&text, path.parent().unwrap_or(Path::new(".")), overrides)
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        self.prune.validate()?;
        self.cluster.validate()?;
        if self.seeds.is_empty() {
            return Err(Error::Config("seed list is empty".into()));
        }
        if self.discretize.max_intervals == 0 {
            return Err(Error::Config(
                "discretize: max_intervals must be positive".into(),
            ));
        }
        if self
            .rules
            .accuracy_floor
            .is_some_and(|f| !(0.0..=1.0).contains(&f))
            || self.rules.floor_margin < 0.0
        {
            return Err(Error::Config(
                "rules: floor must lie in [0, 1] and margin be non-negative".into(),
            ));
        }
        Ok(())
    }
}

/// Sets `a.b.c = value` in a TOML tree. The value is read as a TOML literal
/// and falls back to a bare string.
pub fn apply_override(root: &mut toml::Value, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override `{assignment}` is not key=value")))?;
    let key = key.trim();
    let raw = raw.trim();
    let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::Config(format!("malformed override key `{key}`")));
    }
    let mut node = root;
    for part in &parts[..parts.len() - 1] {
        let table = node
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("override `{key}`: `{part}` is not a table")))?;
        node = table
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
    }
    node.as_table_mut()
        .ok_or_else(|| Error::Config(format!("override `{key}`: parent is not a table")))?
        .insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

/// Everything derived from the data before any network exists.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub name: String,
    /// Imputed train block (train plus validation) and test set.
    pub block: Dataset,
    pub test: Dataset,
    pub encoder: Encoder,
    pub scheme: DiscretizationScheme,
    pub space: FeatureSpace,
    pub train: EncodedSet,
    pub validation: EncodedSet,
    pub block_set: EncodedSet,
    pub test_set: EncodedSet,
    pub block_table: Table,
    pub test_table: Table,
}

pub fn prepare(cfg: &RunConfig) -> Result<Prepared> {
    let load = || -> Result<Prepared> {
        let ds = load_dataset_files(&cfg.data, &cfg.schema)?;
        let spec = cfg.split.unwrap_or(SplitSpec {
            train: ds.len(),
            test: 0,
            validation_fraction: 0.0,
        });
        let split = split_dataset(&ds, &spec)?;
        let raw_block = split.train_block();
        if raw_block.is_empty() {
            return Err(Error::Empty);
        }
        let imputer = Imputer::fit(&raw_block);
        let train = imputer.apply(&split.train);
        let validation = imputer.apply(&split.validation);
        let block = imputer.apply(&raw_block);
        let test = imputer.apply(&split.test);
        let encoder = Encoder::fit(&block);
        let scheme = discretize_inputs(&block, cfg.discretize)?;
        let space = FeatureSpace::for_attributes(&block, &scheme, &encoder);
        Ok(Prepared {
            name: ds.name.clone(),
            train: encoder.encode_set(&train),
            validation: encoder.encode_set(&validation),
            block_set: encoder.encode_set(&block),
            test_set: encoder.encode_set(&test),
            block_table: Table::from_dataset(&block, &scheme),
            test_table: Table::from_dataset(&test, &scheme),
            block,
            test,
            encoder,
            scheme,
            space,
        })
    };
    load().map_err(|e| e.in_stage(Stage::Load))
}

pub fn train_stage(prep: &Prepared, cfg: &RunConfig, seed: u64) -> Result<ConstructiveOutcome> {
    constructive_train(&prep.train, &prep.validation, &cfg.train, seed)
        .map_err(|e| e.in_stage(Stage::Train))
}

#[derive(Debug, Clone)]
pub struct PruneStage {
    pub outcome: PruneOutcome,
    /// Pruned network with dead nodes removed.
    pub network: Network,
    /// `None` when no hidden node survived; the network output is then constant.
    pub dead: Option<DeadNodeReport>,
}

pub fn prune_stage(net: &Network, prep: &Prepared, cfg: &RunConfig) -> Result<PruneStage> {
    let outcome = prune_network(net, &prep.block_set, &cfg.prune, &cfg.train)
        .map_err(|e| e.in_stage(Stage::Prune))?;
    let mut network = outcome.network.clone();
    let dead = match remove_dead_nodes(&mut network) {
        Ok(report) => Some(report),
        Err(Error::DegenerateNetwork) => {
            network = outcome.network.clone();
            None
        }
        Err(e) => return Err(e.in_stage(Stage::Prune)),
    };
    Ok(PruneStage {
        outcome,
        network,
        dead,
    })
}

pub fn cluster_stage(
    net: &Network,
    prep: &Prepared,
    cfg: &RunConfig,
) -> Result<ClusterSearchOutcome> {
    search_epsilon(net, &prep.block_set, &cfg.cluster).map_err(|e| e.in_stage(Stage::Cluster))
}

#[derive(Debug, Clone)]
pub struct Extraction {
    pub output: RuleSet,
    pub hidden: Vec<RuleSet>,
    /// Composed rules before the deletion loop.
    pub composed: RuleSet,
    pub rules: RuleSet,
    pub deletions: usize,
    pub floor: f64,
}

/// Three-phase extraction and the deletion loop.
pub fn extract_stage(
    net: &Network,
    model: &ClusterModel,
    prep: &Prepared,
    cfg: &RunConfig,
) -> Result<Extraction> {
    let run = || -> Result<Extraction> {
        let output = extract_output_rules(net, model, &prep.block_set);
        let hidden = extract_hidden_rules(
            net,
            model,
            &prep.block_set,
            &prep.block_table,
            &prep.encoder,
        );
        let net_labels: Vec<usize> = prep
            .block_set
            .inputs
            .iter()
            .map(|x| model.classify(net, x))
            .collect();
        let net_table = prep
            .block_table
            .with_labels(net_labels, prep.block_table.label_count);
        let composed = compose_rules(&output, &hidden, &net_table)?;
        let floor = cfg.rules.accuracy_floor.unwrap_or_else(|| {
            discretized_accuracy(net, model, &prep.block_set) - cfg.rules.floor_margin
        });
        let (rules, deletions) = if cfg.rules.refine {
            refine_rules(&composed, &prep.block_table, floor)
        } else {
            (composed.clone(), 0)
        };
        Ok(Extraction {
            output,
            hidden,
            composed,
            rules,
            deletions,
            floor,
        })
    };
    run().map_err(|e| e.in_stage(Stage::Extract))
}

/// Default-only extraction for a network whose output does not depend on its input.
fn constant_extraction(net: &Network, prep: &Prepared) -> Extraction {
    let class = prep.block_set.inputs.first().map_or(0, |x| net.classify(x));
    let rs = RuleSet::default_only(class, crate::rulegen::Provenance::Merged);
    Extraction {
        output: RuleSet::default_only(class, crate::rulegen::Provenance::OutputLayer),
        hidden: Vec::new(),
        composed: rs.clone(),
        rules: rs,
        deletions: 0,
        floor: 0.0,
    }
}

/// Repeatedly deletes the rule whose removal keeps the highest accuracy on
/// `table`, re-prunes, and stops before the accuracy would fall below `floor`.
/// Terminates because every accepted step removes at least one rule.
pub fn refine_rules(rs: &RuleSet, table: &Table, floor: f64) -> (RuleSet, usize) {
    let mut current = rs.clone();
    let mut deletions = 0;
    while !current.rules.is_empty() {
        let best = (0..current.rules.len())
            .map(|i| {
                let mut trial = current.clone();
                trial.rules.remove(i);
                let trial = prune_rules(&trial, table);
                let acc = evaluate_ruleset(&trial, table).accuracy;
                (acc, i, trial)
            })
            .max_by(|a, b| a.0.total_cmp(&b.0).then(b.1.cmp(&a.1)));
        match best {
            Some((acc, _, trial)) if acc >= floor => {
                current = trial;
                current.refresh_support(table);
                deletions += 1;
            }
            _ => break,
        }
    }
    (current, deletions)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRow {
    pub seed: u64,
    pub initial_nodes: usize,
    pub initial_connections: usize,
    pub intermediate_hidden: usize,
    pub intermediate_nodes: usize,
    pub intermediate_connections: usize,
    pub final_hidden: usize,
    pub final_nodes: usize,
    pub final_connections: usize,
    pub relevant_attributes: Vec<String>,
    /// Epochs of the constructive phase.
    pub epochs: usize,
    /// Constructive plus pruning retraining epochs.
    pub total_epochs: usize,
    pub hit_hidden_cap: bool,
    pub degenerate: bool,
    pub net_train_accuracy: f64,
    pub net_test_accuracy: Option<f64>,
    pub discretized_train_accuracy: f64,
    pub discretized_test_accuracy: Option<f64>,
    pub clusters: Vec<usize>,
    pub epsilons: Vec<f64>,
    pub fallback_nodes: Vec<usize>,
    pub output_rule_count: usize,
    pub composed_rule_count: usize,
    /// Rules including the default.
    pub rule_count: usize,
    pub rule_deletions: usize,
    pub mean_conditions: f64,
    pub rule_train_accuracy: f64,
    pub rule_test_accuracy: Option<f64>,
    pub rule_train_coverage: f64,
    pub ambiguous_train: usize,
    /// Agreement of rules with the discretized network on the train block.
    pub fidelity: f64,
}

impl RunRow {
    /// Numeric columns that enter the aggregates.
    pub fn metrics(&self) -> Vec<(&'static str, Option<f64>)> {
        vec![
            ("initial_nodes", Some(self.initial_nodes as f64)),
            ("initial_connections", Some(self.initial_connections as f64)),
            ("intermediate_hidden", Some(self.intermediate_hidden as f64)),
            ("intermediate_nodes", Some(self.intermediate_nodes as f64)),
            (
                "intermediate_connections",
                Some(self.intermediate_connections as f64),
            ),
            ("final_hidden", Some(self.final_hidden as f64)),
            ("final_nodes", Some(self.final_nodes as f64)),
            ("final_connections", Some(self.final_connections as f64)),
            ("epochs", Some(self.epochs as f64)),
            ("total_epochs", Some(self.total_epochs as f64)),
            ("net_train_accuracy", Some(self.net_train_accuracy)),
            ("net_test_accuracy", self.net_test_accuracy),
            (
                "discretized_train_accuracy",
                Some(self.discretized_train_accuracy),
            ),
            ("discretized_test_accuracy", self.discretized_test_accuracy),
            ("rule_count", Some(self.rule_count as f64)),
            ("mean_conditions", Some(self.mean_conditions)),
            ("rule_train_accuracy", Some(self.rule_train_accuracy)),
            ("rule_test_accuracy", self.rule_test_accuracy),
            ("fidelity", Some(self.fidelity)),
        ]
    }
}

/// All artifacts of one seeded run.
#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub constructive: ConstructiveOutcome,
    pub pruned: PruneStage,
    pub clusters: ClusterModel,
    pub cluster_search: Option<ClusterSearchOutcome>,
    pub extraction: Extraction,
    pub row: RunRow,
}

impl RunArtifacts {
    pub fn network(&self) -> &Network {
        &self.pruned.network
    }
}

fn accuracy_or_none(set: &EncodedSet, f: impl Fn(&[f64]) -> usize) -> Option<f64> {
    (!set.is_empty()).then(|| {
        let ok = set
            .inputs
            .iter()
            .zip(&set.labels)
            .filter(|(x, &y)| f(x) == y)
            .count();
        ok as f64 / set.len() as f64
    })
}

pub fn run_pipeline(cfg: &RunConfig, prep: &Prepared, seed: u64) -> Result<RunArtifacts> {
    let constructive = train_stage(prep, cfg, seed)?;
    let intermediate = &constructive.network;
    let pruned = prune_stage(intermediate, prep, cfg)?;
    let net = &pruned.network;

    let (clusters, cluster_search, extraction) = if pruned.dead.is_some() {
        let search = cluster_stage(net, prep, cfg)?;
        let extraction = extract_stage(net, &search.model, prep, cfg)?;
        (search.model.clone(), Some(search), extraction)
    } else {
        (
            ClusterModel { nodes: Vec::new() },
            None,
            constant_extraction(net, prep),
        )
    };

    let discretized = |x: &[f64]| {
        if clusters.nodes.is_empty() {
            net.classify(x)
        } else {
            clusters.classify(net, x)
        }
    };
    let rules = &extraction.rules;
    let train_metrics = evaluate_ruleset(rules, &prep.block_table);
    let test_metrics =
        (!prep.test_table.is_empty()).then(|| evaluate_ruleset(rules, &prep.test_table));
    let label_count = prep.block_table.label_count;
    let agree = prep
        .block_set
        .inputs
        .iter()
        .zip(&prep.block_table.rows)
        .filter(|(x, row)| rules.classify(row, label_count) == discretized(x))
        .count();
    let start = Network::new(prep.encoder.input_width(), prep.encoder.class_count(), seed);
    let relevant = net.relevant_inputs();
    let mut relevant_attributes: Vec<String> = Vec::new();
    for (slot, &r) in prep.encoder.slots.iter().zip(&relevant) {
        let name = &prep.block.attributes[slot.attribute()].name;
        if r && !relevant_attributes.contains(name) {
            relevant_attributes.push(name.clone());
        }
    }

    let row = RunRow {
        seed,
        initial_nodes: start.node_count(),
        initial_connections: start.connection_count(),
        intermediate_hidden: intermediate.hidden(),
        intermediate_nodes: intermediate.node_count(),
        intermediate_connections: intermediate.connection_count(),
        final_hidden: if pruned.dead.is_some() {
            net.hidden()
        } else {
            0
        },
        final_nodes: net.node_count(),
        final_connections: net.connection_count(),
        relevant_attributes,
        epochs: constructive.trace.epochs(),
        total_epochs: constructive.trace.epochs() + pruned.outcome.trace.epochs(),
        hit_hidden_cap: constructive.hit_hidden_cap,
        degenerate: pruned.dead.is_none(),
        net_train_accuracy: net.accuracy(&prep.block_set),
        net_test_accuracy: accuracy_or_none(&prep.test_set, |x| net.classify(x)),
        discretized_train_accuracy: accuracy_or_none(&prep.block_set, discretized).unwrap_or(0.0),
        discretized_test_accuracy: accuracy_or_none(&prep.test_set, discretized),
        clusters: clusters.nodes.iter().map(|n| n.len()).collect(),
        epsilons: clusters.nodes.iter().map(|n| n.epsilon).collect(),
        fallback_nodes: cluster_search
            .as_ref()
            .map_or(Vec::new(), |s| s.fallback_nodes.clone()),
        output_rule_count: extraction.output.rule_count(),
        composed_rule_count: extraction.composed.rule_count(),
        rule_count: rules.rule_count(),
        rule_deletions: extraction.deletions,
        mean_conditions: rules.mean_conditions(),
        rule_train_accuracy: train_metrics.accuracy,
        rule_test_accuracy: test_metrics.map(|m| m.accuracy),
        rule_train_coverage: train_metrics.coverage,
        ambiguous_train: train_metrics.ambiguous,
        fidelity: if prep.block_set.is_empty() {
            0.0
        } else {
            agree as f64 / prep.block_set.len() as f64
        },
    };
    Ok(RunArtifacts {
        constructive,
        pruned,
        clusters,
        cluster_search,
        extraction,
        row,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    pub mean: f64,
    pub min: f64,
    pub max: f64,
}

impl Stats {
    pub fn of(values: &[f64]) -> Option<Stats> {
        if values.is_empty() {
            return None;
        }
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Some(Stats {
            mean: values.iter().sum::<f64>() / values.len() as f64,
            min,
            max,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunFailure {
    pub seed: u64,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub dataset: String,
    pub runs: Vec<RunRow>,
    /// Failed runs; excluded from the aggregates.
    pub failures: Vec<RunFailure>,
    pub aggregate: BTreeMap<String, Stats>,
    /// Highest rule train accuracy, then fewest rules, then lowest seed.
    pub best_seed: Option<u64>,
}

impl RunReport {
    pub fn new(dataset: String, runs: Vec<RunRow>, failures: Vec<RunFailure>) -> RunReport {
        let aggregate = aggregate(&runs);
        let best_seed = runs
            .iter()
            .max_by(|a, b| {
                a.rule_train_accuracy
                    .total_cmp(&b.rule_train_accuracy)
                    .then(b.rule_count.cmp(&a.rule_count))
                    .then(b.seed.cmp(&a.seed))
            })
            .map(|r| r.seed);
        RunReport {
            dataset,
            runs,
            failures,
            aggregate,
            best_seed,
        }
    }

    pub fn best(&self) -> Option<&RunRow> {
        self.best_seed
            .and_then(|s| self.runs.iter().find(|r| r.seed == s))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    pub fn from_json(text: &str) -> Result<RunReport> {
        serde_json::from_str(text).map_err(|e| Error::Parse {
            line: e.line(),
            message: e.to_string(),
        })
    }

    pub fn to_csv(&self) -> String {
        let names: Vec<&str> = self
            .runs
            .first()
            .map_or(Vec::new(), |r| r.metrics().iter().map(|m| m.0).collect());
        let mut out = format!("seed,{}\n", names.join(","));
        for r in &self.runs {
            let cells: Vec<String> = r
                .metrics()
                .iter()
                .map(|(_, v)| v.map_or(String::new(), |v| format!("{v}")))
                .collect();
            let _ = writeln!(out, "{},{}", r.seed, cells.join(","));
        }
        out
    }

    /// Architecture, epochs and accuracies per run with mean/min/max rows.
    pub fn table(&self) -> String {
        let pct = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{:.2}", 100.0 * v));
        let mut out = String::new();
        let _ = writeln!(out, "dataset: {}", self.dataset);
        let _ = writeln!(
            out,
            "{:>6} {:>11} {:>11} {:>11} {:>7} {:>9} {:>9} {:>9} {:>9} {:>6}",
            "seed",
            "initial",
            "interm.",
            "final",
            "epochs",
            "net tr%",
            "net te%",
            "rule tr%",
            "rule te%",
            "rules"
        );
        for r in &self.runs {
            let _ = writeln!(
                out,
                "{:>6} {:>11} {:>11} {:>11} {:>7} {:>9} {:>9} {:>9} {:>9} {:>6}",
                r.seed,
                format!("{}/{}", r.initial_nodes, r.initial_connections),
                format!("{}/{}", r.intermediate_nodes, r.intermediate_connections),
                format!("{}/{}", r.final_nodes, r.final_connections),
                r.epochs,
                pct(Some(r.net_train_accuracy)),
                pct(r.net_test_accuracy),
                pct(Some(r.rule_train_accuracy)),
                pct(r.rule_test_accuracy),
                r.rule_count
            );
        }
        for (label, pick) in [
            ("mean", (|s: &Stats| s.mean) as fn(&Stats) -> f64),
            ("min", |s: &Stats| s.min),
            ("max", |s: &Stats| s.max),
        ] {
            let get = |k: &str| self.aggregate.get(k).map(pick);
            let pair = |n: &str, c: &str| match (get(n), get(c)) {
                (Some(a), Some(b)) => format!("{a:.1}/{b:.1}"),
                _ => "-".into(),
            };
            let _ = writeln!(
                out,
                "{:>6} {:>11} {:>11} {:>11} {:>7} {:>9} {:>9} {:>9} {:>9} {:>6}",
                label,
                pair("initial_nodes", "initial_connections"),
                pair("intermediate_nodes", "intermediate_connections"),
                pair("final_nodes", "final_connections"),
                get("epochs").map_or("-".into(), |v| format!("{v:.1}")),
                pct(get("net_train_accuracy")),
                pct(get("net_test_accuracy")),
                pct(get("rule_train_accuracy")),
                pct(get("rule_test_accuracy")),
                get("rule_count").map_or("-".into(), |v| format!("{v:.1}"))
            );
        }
        for f in &self.failures {
            let _ = writeln!(out, "failed seed {}: {}", f.seed, f.error);
        }
        if let Some(b) = self.best_seed {
            let _ = writeln!(out, "best seed: {b}");
        }
        out
    }
}

/// Mean/min/max per metric over the rows where it is defined.
pub fn aggregate(runs: &[RunRow]) -> BTreeMap<String, Stats> {
    let mut columns: BTreeMap<&'static str, Vec<f64>> = BTreeMap::new();
    for r in runs {
        for (name, v) in r.metrics() {
            let col = columns.entry(name).or_default();
            if let Some(v) = v {
                col.push(v);
            }
        }
    }
    columns
        .into_iter()
        .filter_map(|(k, v)| Stats::of(&v).map(|s| (k.to_string(), s)))
        .collect()
}

/// Runs every seed (in parallel), keeping input order in the report.
pub fn run_experiment(cfg: &RunConfig, prep: &Prepared) -> (RunReport, Vec<Option<RunArtifacts>>) {
    let results: Vec<(u64, Result<RunArtifacts>)> = cfg
        .seeds
        .par_iter()
        .map(|&seed| (seed, run_pipeline(cfg, prep, seed)))
        .collect();
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    let mut artifacts = Vec::new();
    for (seed, r) in results {
        match r {
            Ok(a) => {
                rows.push(a.row.clone());
                artifacts.push(Some(a));
            }
            Err(e) => {
                failures.push(RunFailure {
                    seed,
                    error: e.to_string(),
                });
                artifacts.push(None);
            }
        }
    }
    (RunReport::new(prep.name.clone(), rows, failures), artifacts)
}

/// Writes the artifacts of one run under `dir`.
pub fn write_run_artifacts(dir: &Path, prep: &Prepared, run: &RunArtifacts) -> Result<()> {
    use crate::rulegen::Units;
    fs::create_dir_all(dir)?;
    fs::write(
        dir.join("network_constructive.txt"),
        run.constructive.network.to_text(),
    )?;
    fs::write(dir.join("network.txt"), run.network().to_text())?;
    fs::write(dir.join("train_trace.csv"), run.constructive.trace.to_csv())?;
    fs::write(
        dir.join("prune_trace.csv"),
        run.pruned.outcome.trace.to_csv(),
    )?;
    fs::write(dir.join("prune_log.csv"), run.pruned.outcome.log_text())?;
    fs::write(dir.join("clusters.txt"), run.clusters.report())?;
    fs::write(
        dir.join("clusters.json"),
        serde_json::to_string_pretty(&run.clusters).expect("cluster model serializes") + "\n",
    )?;
    let ex = &run.extraction;
    if !run.clusters.nodes.is_empty() {
        let cluster_space = FeatureSpace::for_clusters(&run.clusters, prep.space.labels.clone());
        fs::write(
            dir.join("rules_output.txt"),
            cluster_space.render(&ex.output, Units::Raw),
        )?;
        let mut hidden = String::new();
        for (m, rs) in ex.hidden.iter().enumerate() {
            hidden.push_str(
                &prep
                    .space
                    .with_cluster_labels(&run.clusters, m)
                    .render(rs, Units::Raw),
            );
        }
        fs::write(dir.join("rules_hidden.txt"), hidden)?;
    }
    fs::write(
        dir.join("rules_composed.txt"),
        prep.space.render(&ex.composed, Units::Raw),
    )?;
    fs::write(
        dir.join("rules.txt"),
        prep.space.render(&ex.rules, Units::Raw),
    )?;
    fs::write(
        dir.join("rules_scaled.txt"),
        prep.space.render(&ex.rules, Units::Scaled),
    )?;
    fs::write(
        dir.join("run.json"),
        serde_json::to_string_pretty(&run.row).expect("row serializes") + "\n",
    )?;
    Ok(())
}

pub fn write_report(dir: &Path, report: &RunReport) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("report.json"), report.to_json())?;
    fs::write(dir.join("report.csv"), report.to_csv())?;
    fs::write(dir.join("report.txt"), report.table())?;
    Ok(())
}
