use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};

use rgann::clustering::{discretized_accuracy, ClusterModel};
use rgann::network::Network;
use rgann::pipeline::{
    cluster_stage, extract_stage, prepare, prune_stage, run_experiment, run_pipeline, train_stage,
    write_report, write_run_artifacts, Prepared, RunConfig, RunReport,
};
use rgann::rulegen::{evaluate_ruleset, FeatureSpace, Units};
use rgann::{Error, Stage};

#[derive(Parser)]
#[command(
    name = "rgann",
    version,
    about = "Rules from constructively trained, pruned networks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Run configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Override a configuration value, e.g. `--set train.learning_rate=0.5`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Constructive training; writes the trained network and its trace.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Prunes a trained network and removes dead nodes.
    Prune {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        network: PathBuf,
    },
    /// Discretizes hidden activations of a pruned network.
    Cluster {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        network: PathBuf,
    },
    /// Three-phase rule extraction from a pruned network and its clusters.
    Extract {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        network: PathBuf,
        #[arg(long)]
        clusters: PathBuf,
    },
    /// Scores a rule file on the train block and the test set.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        rules: PathBuf,
    },
    /// All stages for one seed.
    Pipeline {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// All stages for every configured seed, with aggregate reports.
    Experiment {
        #[command(flatten)]
        common: Common,
        /// Comma-separated seeds; replaces the configured list.
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
    },
}

fn load(common: &Common) -> anyhow::Result<(RunConfig, Prepared)> {
    let cfg = RunConfig::from_path(&common.config, &common.overrides)?;
    let prep = prepare(&cfg)?;
    Ok((cfg, prep))
}

/// Reads an artifact consumed by `stage`; failures count as stage failures.
fn read_input(path: &Path, stage: Stage) -> anyhow::Result<String> {
    fs::read_to_string(path).map_err(|e| {
        anyhow::Error::new(Error::Io(e).in_stage(stage))
            .context(format!("reading {}", path.display()))
    })
}

fn load_network(path: &Path, stage: Stage, prep: &Prepared) -> anyhow::Result<Network> {
    let net = Network::from_text(&read_input(path, stage)?).map_err(|e| e.in_stage(stage))?;
    if net.inputs() != prep.encoder.input_width() || net.outputs() != prep.encoder.class_count() {
        let shape = Error::Config(format!(
            "network has {} inputs and {} outputs; the data needs {} and {}",
            net.inputs(),
            net.outputs(),
            prep.encoder.input_width(),
            prep.encoder.class_count()
        ));
        return Err(shape.in_stage(stage).into());
    }
    Ok(net)
}

fn write(dir: &Path, name: &str, text: &str) -> anyhow::Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let path = dir.join(name);
    fs::write(&path, text).with_context(|| format!("writing {}", path.display()))
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Train { common, seed } => {
            let (cfg, prep) = load(&common)?;
            let out = train_stage(&prep, &cfg, seed)?;
            write(
                &common.out,
                "network_constructive.txt",
                &out.network.to_text(),
            )?;
            write(&common.out, "train_trace.csv", &out.trace.to_csv())?;
            println!(
                "trained {} hidden node(s) in {} epochs; validation error {:.4} (target {:.4}){}",
                out.network.hidden(),
                out.trace.epochs(),
                out.validation_errors.last().copied().unwrap_or(f64::NAN),
                out.target,
                if out.hit_hidden_cap {
                    "; hidden-node cap reached"
                } else {
                    ""
                }
            );
        }
        Command::Prune { common, network } => {
            let (cfg, prep) = load(&common)?;
            let net = load_network(&network, Stage::Prune, &prep)?;
            let stage = prune_stage(&net, &prep, &cfg)?;
            write(&common.out, "network.txt", &stage.network.to_text())?;
            write(&common.out, "prune_log.csv", &stage.outcome.log_text())?;
            write(
                &common.out,
                "prune_trace.csv",
                &stage.outcome.trace.to_csv(),
            )?;
            println!(
                "{} -> {} connections, {} hidden node(s); train accuracy {:.4} (floor {:.4})",
                net.connection_count(),
                stage.network.connection_count(),
                stage.network.hidden(),
                stage.network.accuracy(&prep.block_set),
                stage.outcome.floor
            );
            if stage.dead.is_none() {
                println!("no hidden node survived; the network output is constant");
            }
        }
        Command::Cluster { common, network } => {
            let (cfg, prep) = load(&common)?;
            let net = load_network(&network, Stage::Cluster, &prep)?;
            let search = cluster_stage(&net, &prep, &cfg)?;
            write(&common.out, "clusters.txt", &search.model.report())?;
            write(
                &common.out,
                "clusters.json",
                &(serde_json::to_string_pretty(&search.model)? + "\n"),
            )?;
            print!("{}", search.model.report());
            println!(
                "train accuracy: continuous {:.4}, discretized {:.4} (required {:.4})",
                search.continuous_accuracy, search.discretized_accuracy, search.required_accuracy
            );
        }
        Command::Extract {
            common,
            network,
            clusters,
        } => {
            let (cfg, prep) = load(&common)?;
            let net = load_network(&network, Stage::Extract, &prep)?;
            let model: ClusterModel = serde_json::from_str(&read_input(&clusters, Stage::Extract)?)
                .map_err(|e| {
                    Error::Parse {
                        line: e.line(),
                        message: e.to_string(),
                    }
                    .in_stage(Stage::Extract)
                })?;
            if model.nodes.len() != net.hidden() {
                let mismatch = Error::Config(format!(
                    "cluster model has {} node(s), network has {}",
                    model.nodes.len(),
                    net.hidden()
                ));
                return Err(mismatch.in_stage(Stage::Extract).into());
            }
            let ex = extract_stage(&net, &model, &prep, &cfg)?;
            let cluster_space = FeatureSpace::for_clusters(&model, prep.space.labels.clone());
            write(
                &common.out,
                "rules_output.txt",
                &cluster_space.render(&ex.output, Units::Raw),
            )?;
            let hidden: String = ex
                .hidden
                .iter()
                .enumerate()
                .map(|(m, rs)| {
                    prep.space
                        .with_cluster_labels(&model, m)
                        .render(rs, Units::Raw)
                })
                .collect();
            write(&common.out, "rules_hidden.txt", &hidden)?;
            write(
                &common.out,
                "rules_composed.txt",
                &prep.space.render(&ex.composed, Units::Raw),
            )?;
            write(
                &common.out,
                "rules.txt",
                &prep.space.render(&ex.rules, Units::Raw),
            )?;
            write(
                &common.out,
                "rules_scaled.txt",
                &prep.space.render(&ex.rules, Units::Scaled),
            )?;
            print!("{}", prep.space.render(&ex.rules, Units::Raw));
            println!(
                "discretized network train accuracy {:.4}; rule deletions {}",
                discretized_accuracy(&net, &model, &prep.block_set),
                ex.deletions
            );
        }
        Command::Evaluate { common, rules } => {
            let (_, prep) = load(&common)?;
            let rs = prep
                .space
                .parse(&read_input(&rules, Stage::Evaluate)?)
                .map_err(|e| e.in_stage(Stage::Evaluate))?;
            let mut text = String::new();
            for (name, table) in [("train", &prep.block_table), ("test", &prep.test_table)] {
                if table.is_empty() {
                    continue;
                }
                let m = evaluate_ruleset(&rs, table);
                text.push_str(&format!(
                    "{name}: accuracy {:.4} coverage {:.4} rules {} mean conditions {:.2} ambiguous {}\n",
                    m.accuracy, m.coverage, m.rule_count, m.mean_conditions, m.ambiguous
                ));
            }
            write(&common.out, "evaluation.txt", &text)?;
            print!("{text}");
        }
        Command::Pipeline { common, seed } => {
            let (cfg, prep) = load(&common)?;
            let run = run_pipeline(&cfg, &prep, seed)?;
            write_run_artifacts(&common.out, &prep, &run)?;
            let report = RunReport::new(prep.name.clone(), vec![run.row.clone()], Vec::new());
            write_report(&common.out, &report)?;
            print!("{}", prep.space.render(&run.extraction.rules, Units::Raw));
            print!("{}", report.table());
        }
        Command::Experiment { common, seeds } => {
            let (mut cfg, prep) = load(&common)?;
            if let Some(seeds) = seeds {
                if seeds.is_empty() {
                    return Err(Error::Config("seed list is empty".into()).into());
                }
                cfg.seeds = seeds;
            }
            let (report, artifacts) = run_experiment(&cfg, &prep);
            for (seed, run) in cfg.seeds.iter().zip(&artifacts) {
                if let Some(run) = run {
                    write_run_artifacts(&common.out.join(format!("seed_{seed}")), &prep, run)?;
                }
            }
            write_report(&common.out, &report)?;
            print!("{}", report.table());
            if report.runs.is_empty() {
                return Err(Error::Stage {
                    stage: Stage::Train,
                    cause: Box::new(Error::Config("every run failed".into())),
                }
                .into());
            }
        }
    }
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Error>() {
        Some(Error::Config(_)) => 1,
        Some(e) if e.is_data_error() => 2,
        _ => 3,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
