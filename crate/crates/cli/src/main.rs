use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use phishlayer::content_fetcher::{FetchLimits, HttpFetcher};
use phishlayer::harness::datasets::{TextDataset, UrlDataset};
use phishlayer::harness::evaluate::{evaluate_end_to_end, ModelMetadata};
use phishlayer::harness::fixtures::MANIFEST_FILE;
use phishlayer::harness::synthetic::{synthetic_text_dataset, synthetic_url_dataset};
use phishlayer::harness::training::{
    prepare_split, train_text_model, train_url_model, TextTrainingConfig, UrlTrainingConfig,
};
use phishlayer::harness::{
    generate_fixtures, load_fixtures, load_text_dataset, load_url_dataset, serve_fixtures,
    ConfigFile,
};
use phishlayer::lstm::{LstmModel, TrainConfig};
use phishlayer::media::Transcribers;
use phishlayer::orchestrator::{scan_batch, Models, ScanConfig, ScanTarget};
use phishlayer::random_forest::{depth_seed_study, study_table, ForestModel, ForestParams};
use phishlayer::url_features::SelectionPool;

const SYNTHETIC_URL_ROWS: usize = 2000;
const SYNTHETIC_TEXT_ROWS: usize = 5572;

/// Keys accepted in a `--config` file. Each mirrors the long flag of the
/// same name with `-` written as `_`.
const CONFIG_KEYS: &[&str] = &[
    "url_dataset",
    "text_dataset",
    "forest",
    "lstm",
    "fixtures",
    "port",
    "seed",
    "k",
    "pool",
    "trees",
    "max_depth",
    "random_state",
    "split_seed",
    "epochs",
    "batch_size",
    "learning_rate",
    "d_embed",
    "d_hidden",
    "sequence_length",
    "max_features",
    "threshold",
    "short_circuit",
    "insecure",
    "timeout_ms",
];

#[derive(Parser)]
#[command(
    name = "phishlayer",
    version,
    about = "Layered phishing detection: URL forest, page text, media transcripts, LSTM"
)]
struct Cli {
    /// Flat `key = value` settings file; flags override it
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the six fixture sites with media and sidecars
    GenFixtures {
        #[arg(long)]
        out: PathBuf,
        /// Fixture text seed [default: 42]
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Serve a fixture directory over localhost HTTP until interrupted
    Serve {
        #[arg(long)]
        dir: Option<PathBuf>,
        /// [default: 8000]
        #[arg(long)]
        port: Option<u16>,
    },
    /// Select features and train the URL forest
    TrainUrlModel {
        #[command(flatten)]
        data: UrlData,
        #[command(flatten)]
        selection: SelectionArgs,
        #[command(flatten)]
        forest: ForestArgs,
        /// Where to write the model JSON
        #[arg(long)]
        out: PathBuf,
    },
    /// Build the vocabulary and train the LSTM text model
    TrainTextModel {
        #[command(flatten)]
        data: TextData,
        #[command(flatten)]
        lstm: LstmArgs,
        /// Model JSON; the vocabulary goes to `<stem>.vocab.json` beside it
        #[arg(long)]
        out: PathBuf,
        /// Per-epoch metrics as JSON lines (default: stdout)
        #[arg(long)]
        metrics: Option<PathBuf>,
    },
    /// Score features with chi-squared and print the top k
    SelectFeatures {
        #[command(flatten)]
        data: UrlData,
        #[command(flatten)]
        selection: SelectionArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Scan URLs through all layers
    Scan {
        urls: Vec<String>,
        #[command(flatten)]
        models: ModelArgs,
        #[command(flatten)]
        scan: ScanArgs,
        /// One JSON verdict per line instead of a table
        #[arg(long)]
        json: bool,
    },
    /// Scan the fixture sites and check every expected verdict
    Evaluate {
        /// Fixture tree; generated here first when it has no manifest
        #[arg(long)]
        fixtures: Option<PathBuf>,
        /// Seed for freshly generated fixtures [default: 42]
        #[arg(long)]
        seed: Option<u64>,
        /// Use an already running server instead of an embedded one
        #[arg(long)]
        base_url: Option<String>,
        #[command(flatten)]
        models: ModelArgs,
        /// Train fresh models when no model files are given
        #[command(flatten)]
        url_data: UrlData,
        #[command(flatten)]
        text_data: TextData,
        #[command(flatten)]
        scan: ScanArgs,
        /// JSON report path
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Held-out accuracy over a grid of (max_depth, random_state)
    DepthStudy {
        #[command(flatten)]
        data: UrlData,
        #[command(flatten)]
        selection: SelectionArgs,
        #[arg(long)]
        trees: Option<usize>,
        #[arg(long)]
        split_seed: Option<u64>,
        /// Comma-separated `depth:seed` cells; `none` for an unbounded depth
        #[arg(long, default_value = "30:0,20:0,10:0,40:1,50:1,60:1")]
        grid: String,
        #[arg(long)]
        json: bool,
    },
}

#[derive(Args)]
struct UrlData {
    /// Feature table CSV with a `status` column
    #[arg(long)]
    url_dataset: Option<PathBuf>,
    /// Use generated stand-in data when no dataset is given
    #[arg(long)]
    synthetic: bool,
}

#[derive(Args)]
struct TextData {
    /// ham/spam message CSV
    #[arg(long)]
    text_dataset: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Pool {
    All,
    LiveOnly,
}

impl From<Pool> for SelectionPool {
    fn from(p: Pool) -> Self {
        match p {
            Pool::All => SelectionPool::All,
            Pool::LiveOnly => SelectionPool::LiveOnly,
        }
    }
}

#[derive(Args)]
struct SelectionArgs {
    /// Number of features to keep
    #[arg(long)]
    k: Option<usize>,
    /// Candidate columns (train-url-model defaults to live-only, others to all)
    #[arg(long, value_enum)]
    pool: Option<Pool>,
}

#[derive(Args)]
struct ForestArgs {
    #[arg(long)]
    trees: Option<usize>,
    #[arg(long)]
    max_depth: Option<usize>,
    #[arg(long)]
    random_state: Option<u64>,
    #[arg(long)]
    split_seed: Option<u64>,
}

#[derive(Args)]
struct LstmArgs {
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    d_embed: Option<usize>,
    #[arg(long)]
    d_hidden: Option<usize>,
    #[arg(long)]
    sequence_length: Option<usize>,
    #[arg(long)]
    max_features: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct ModelArgs {
    /// URL forest JSON from train-url-model
    #[arg(long)]
    forest: Option<PathBuf>,
    /// Text model JSON from train-text-model
    #[arg(long)]
    lstm: Option<PathBuf>,
}

#[derive(Args)]
struct ScanArgs {
    /// Text-layer probability at or above which a page is phishing
    #[arg(long)]
    threshold: Option<f64>,
    /// Skip fetching when the URL layer already flags phishing
    #[arg(long)]
    short_circuit: bool,
    /// Accept invalid TLS certificates
    #[arg(long)]
    insecure: bool,
    /// Per-request timeout [default: 10000]
    #[arg(long)]
    timeout_ms: Option<u64>,
}

enum Failure {
    /// Bad flags, settings, or input files.
    Config(String),
    /// Evaluation ran but an expectation did not hold.
    Assertion(String),
}

type Res<T> = Result<T, Failure>;

fn config_err(e: impl std::fmt::Display) -> Failure {
    Failure::Config(e.to_string())
}

/// Flag value if given, else the config value, else `None`.
struct Settings(ConfigFile);

impl Settings {
    fn pick<T: FromStr>(&self, flag: Option<T>, key: &str) -> Res<Option<T>> {
        match flag {
            Some(v) => Ok(Some(v)),
            None => self
                .0
                .parsed(key, "a value of the expected type")
                .map_err(config_err),
        }
    }

    fn or<T: FromStr>(&self, flag: Option<T>, key: &str, default: T) -> Res<T> {
        Ok(self.pick(flag, key)?.unwrap_or(default))
    }

    fn switch(&self, flag: bool, key: &str) -> Res<bool> {
        Ok(flag || self.pick(None, key)?.unwrap_or(false))
    }

    fn pool(&self, flag: Option<Pool>, default: SelectionPool) -> Res<SelectionPool> {
        if let Some(p) = flag {
            return Ok(p.into());
        }
        match self.0.get("pool") {
            None => Ok(default),
            Some(v) => Pool::from_str(v, true).map(Into::into).map_err(|_| {
                Failure::Config(format!("key `pool`: expected all or live-only, got `{v}`"))
            }),
        }
    }
}

fn url_dataset(s: &Settings, data: &UrlData) -> Res<UrlDataset> {
    match s.pick(data.url_dataset.clone(), "url_dataset")? {
        Some(p) => {
            let d = load_url_dataset(&p).map_err(config_err)?;
            eprintln!(
                "loaded {} rows x {} features from {}",
                d.vectors.len(),
                d.schema.len(),
                p.display()
            );
            Ok(d)
        }
        None if data.synthetic => {
            eprintln!("using {SYNTHETIC_URL_ROWS} synthetic URL rows");
            Ok(synthetic_url_dataset(SYNTHETIC_URL_ROWS, 0.03, 11))
        }
        None => Err(Failure::Config(
            "no URL dataset: pass --url-dataset or --synthetic".into(),
        )),
    }
}

fn text_dataset(s: &Settings, data: &TextData, synthetic: bool) -> Res<TextDataset> {
    match s.pick(data.text_dataset.clone(), "text_dataset")? {
        Some(p) => {
            let d = load_text_dataset(&p).map_err(config_err)?;
            eprintln!(
                "loaded {} messages ({} unique, {} spam) from {}",
                d.total(),
                d.unique(),
                d.spam_count(),
                p.display()
            );
            Ok(d)
        }
        None if synthetic => {
            eprintln!("using {SYNTHETIC_TEXT_ROWS} synthetic messages");
            Ok(synthetic_text_dataset(SYNTHETIC_TEXT_ROWS, 0.134, 5))
        }
        None => Err(Failure::Config(
            "no text dataset: pass --text-dataset or --synthetic".into(),
        )),
    }
}

fn url_training(s: &Settings, sel: &SelectionArgs, f: &ForestArgs) -> Res<UrlTrainingConfig> {
    let d = UrlTrainingConfig::default();
    Ok(UrlTrainingConfig {
        k: s.or(sel.k, "k", d.k)?,
        pool: s.pool(sel.pool, SelectionPool::LiveOnly)?,
        train_fraction: d.train_fraction,
        split_seed: s.or(f.split_seed, "split_seed", d.split_seed)?,
        forest: ForestParams {
            n_trees: s.or(f.trees, "trees", d.forest.n_trees)?,
            max_depth: s.pick(f.max_depth, "max_depth")?,
            random_state: s.or(f.random_state, "random_state", d.forest.random_state)?,
        },
    })
}

fn text_training(s: &Settings, a: &LstmArgs) -> Res<TextTrainingConfig> {
    let d = TextTrainingConfig::default();
    let seed = s.or(a.seed, "seed", 0)?;
    Ok(TextTrainingConfig {
        max_features: s.or(a.max_features, "max_features", d.max_features)?,
        sequence_length: s.or(a.sequence_length, "sequence_length", d.sequence_length)?,
        d_embed: s.or(a.d_embed, "d_embed", d.d_embed)?,
        d_hidden: s.or(a.d_hidden, "d_hidden", d.d_hidden)?,
        init_seed: seed,
        train: TrainConfig {
            epochs: s.or(a.epochs, "epochs", d.train.epochs)?,
            batch_size: s.or(a.batch_size, "batch_size", d.train.batch_size)?,
            learning_rate: s.or(a.learning_rate, "learning_rate", d.train.learning_rate)?,
            seed,
            ..d.train
        },
    })
}

fn scan_config(s: &Settings, a: &ScanArgs) -> Res<(ScanConfig, bool)> {
    let d = ScanConfig::default();
    let timeout = s.pick(a.timeout_ms, "timeout_ms")?;
    let with_timeout = |l: FetchLimits| FetchLimits {
        timeout_ms: timeout.unwrap_or(l.timeout_ms),
        ..l
    };
    let threshold = s.or(a.threshold, "threshold", d.layer4_threshold)?;
    if !(0.0..=1.0).contains(&threshold) {
        return Err(Failure::Config(format!(
            "threshold must be in [0, 1], got {threshold}"
        )));
    }
    Ok((
        ScanConfig {
            layer4_threshold: threshold,
            short_circuit: s.switch(a.short_circuit, "short_circuit")?,
            page_limits: with_timeout(d.page_limits),
            media_limits: with_timeout(d.media_limits),
        },
        s.switch(a.insecure, "insecure")?,
    ))
}

fn write_file(path: &Path, contents: &str) -> Res<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)
            .map_err(|e| Failure::Config(format!("{}: {e}", parent.display())))?;
    }
    std::fs::write(path, contents).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))
}

fn load_models(s: &Settings, m: &ModelArgs) -> Res<Option<(Models, ModelMetadata)>> {
    let forest_path = s.pick(m.forest.clone(), "forest")?;
    let lstm_path = s.pick(m.lstm.clone(), "lstm")?;
    let (fp, lp) = match (forest_path, lstm_path) {
        (Some(f), Some(l)) => (f, l),
        (None, None) => return Ok(None),
        _ => {
            return Err(Failure::Config(
                "give both --forest and --lstm, or neither".into(),
            ))
        }
    };
    let text = std::fs::read_to_string(&fp)
        .map_err(|e| Failure::Config(format!("{}: {e}", fp.display())))?;
    let forest = ForestModel::from_json(&text)
        .map_err(|e| Failure::Config(format!("{}: {e}", fp.display())))?;
    let lstm =
        LstmModel::load(&lp).map_err(|e| Failure::Config(format!("{}: {e}", lp.display())))?;
    let models = Models::new(forest, lstm).map_err(config_err)?;
    let meta = ModelMetadata::from_files(&models, &fp, &lp).map_err(config_err)?;
    Ok(Some((models, meta)))
}

fn parse_grid(grid: &str) -> Res<Vec<(Option<usize>, u64)>> {
    grid.split(',')
        .map(|cell| {
            let bad = || Failure::Config(format!("grid cell `{cell}`: expected depth:seed"));
            let (d, r) = cell.trim().split_once(':').ok_or_else(bad)?;
            let depth = match d.trim() {
                "none" => None,
                x => Some(x.parse().map_err(|_| bad())?),
            };
            Ok((depth, r.trim().parse().map_err(|_| bad())?))
        })
        .collect()
}

fn run(cli: Cli) -> Res<()> {
    let file = match &cli.config {
        Some(p) => ConfigFile::load(p).map_err(config_err)?,
        None => ConfigFile::default(),
    };
    file.check_known(CONFIG_KEYS).map_err(config_err)?;
    let s = Settings(file);

    match cli.command {
        Command::GenFixtures { out, seed } => {
            let seed = s.or(seed, "seed", 42)?;
            let sites = generate_fixtures(&out, seed).map_err(config_err)?;
            for site in &sites {
                println!(
                    "{:<13} {:<11} {} media  {}",
                    site.category.as_str(),
                    format!("{:?}", site.expected_label).to_lowercase(),
                    site.media_files.len(),
                    site.directory.display()
                );
            }
        }
        Command::Serve { dir, port } => {
            let dir = s
                .pick(dir, "fixtures")?
                .ok_or_else(|| Failure::Config("no directory: pass --dir".into()))?;
            let port = s.or(port, "port", 8000)?;
            let server = serve_fixtures(&dir, port)
                .map_err(|e| Failure::Config(format!("cannot serve on port {port}: {e}")))?;
            println!("serving {} at {}", dir.display(), server.base_url());
            server.wait();
        }
        Command::TrainUrlModel {
            data,
            selection,
            forest,
            out,
        } => {
            let cfg = url_training(&s, &selection, &forest)?;
            let dataset = url_dataset(&s, &data)?;
            let outcome = train_url_model(&dataset, &cfg).map_err(config_err)?;
            write_file(&out, &outcome.model.to_json())?;
            let names = dataset.schema.names();
            let chosen: Vec<&str> = outcome
                .selection
                .selected_indices
                .iter()
                .map(|&i| names[i])
                .collect();
            println!("features: {}", chosen.join(", "));
            println!(
                "held-out accuracy {:.2}% ({} train / {} test rows, tree depth {})",
                outcome.test_accuracy,
                outcome.train_rows,
                outcome.test_rows,
                outcome.model.depth()
            );
            if outcome.clamped > 0 {
                eprintln!(
                    "{} negative cells treated as 0 for scoring",
                    outcome.clamped
                );
            }
            println!("wrote {}", out.display());
        }
        Command::TrainTextModel {
            data,
            lstm,
            out,
            metrics,
        } => {
            let cfg = text_training(&s, &lstm)?;
            let corpus = text_dataset(&s, &data, false)?;
            let outcome = train_text_model(&corpus, &cfg).map_err(config_err)?;
            outcome.model.save(&out).map_err(config_err)?;
            let jsonl = outcome.report.metrics_jsonl();
            match metrics {
                Some(p) => write_file(&p, &jsonl)?,
                None => print!("{jsonl}"),
            }
            eprintln!(
                "vocabulary {} of {} distinct words; {} rows, {} unique; wrote {}",
                outcome.vocabulary_size(),
                outcome.distinct_words,
                outcome.total_rows,
                outcome.unique_rows,
                out.display()
            );
        }
        Command::SelectFeatures {
            data,
            selection,
            out,
        } => {
            let k = s.or(selection.k, "k", 19)?;
            let pool = s.pool(selection.pool, SelectionPool::All)?;
            let dataset = url_dataset(&s, &data)?;
            let split = prepare_split(&dataset, k, pool, 0.8, s.or(None, "split_seed", 0)?)
                .map_err(config_err)?;
            let names = dataset.schema.names();
            for &i in &split.selection.selected_indices {
                println!("{:>3} {:<32} {:.4}", i, names[i], split.selection.scores[i]);
            }
            if let Some(p) = out {
                write_file(
                    &p,
                    &serde_json::to_string_pretty(&split.selection).expect("selection serializes"),
                )?;
            }
        }
        Command::Scan {
            urls,
            models,
            scan,
            json,
        } => {
            if urls.is_empty() {
                return Err(Failure::Config("no URLs given".into()));
            }
            let (models, _) = load_models(&s, &models)?
                .ok_or_else(|| Failure::Config("scan needs --forest and --lstm".into()))?;
            let (cfg, insecure) = scan_config(&s, &scan)?;
            let fetcher = HttpFetcher::new(insecure).map_err(config_err)?;
            let targets: Vec<ScanTarget> = urls.into_iter().map(ScanTarget::new).collect();
            let report = scan_batch(&targets, &models, &fetcher, &Transcribers::mock(), &cfg);
            if json {
                for v in &report.verdicts {
                    println!("{}", serde_json::to_string(v).expect("verdict serializes"));
                }
            } else {
                print!("{}", report.table());
            }
        }
        Command::Evaluate {
            fixtures,
            seed,
            base_url,
            models,
            url_data,
            text_data,
            scan,
            report,
        } => {
            let (cfg, insecure) = scan_config(&s, &scan)?;
            let (models, meta) = match load_models(&s, &models)? {
                Some(m) => m,
                None => {
                    let urls = url_dataset(&s, &url_data)?;
                    let texts = text_dataset(&s, &text_data, url_data.synthetic)?;
                    eprintln!("training URL model");
                    let forest = train_url_model(&urls, &UrlTrainingConfig::default())
                        .map_err(config_err)?;
                    eprintln!("training text model");
                    let lstm = train_text_model(&texts, &TextTrainingConfig::default())
                        .map_err(config_err)?;
                    let m = Models::new(forest.model, lstm.model).map_err(config_err)?;
                    let meta = ModelMetadata::from_models(&m);
                    (m, meta)
                }
            };
            let tmp;
            let dir = match s.pick(fixtures, "fixtures")? {
                Some(d) => d,
                None => {
                    tmp = tempfile::tempdir().map_err(config_err)?;
                    tmp.path().to_path_buf()
                }
            };
            let sites = if dir.join(MANIFEST_FILE).is_file() {
                load_fixtures(&dir).map_err(config_err)?
            } else {
                generate_fixtures(&dir, s.or(seed, "seed", 42)?).map_err(config_err)?
            };
            let server;
            let base = match base_url {
                Some(b) => b,
                None => {
                    server = serve_fixtures(&dir, s.or(None, "port", 0)?).map_err(config_err)?;
                    server.base_url()
                }
            };
            let fetcher = HttpFetcher::new(insecure).map_err(config_err)?;
            let result = evaluate_end_to_end(
                &sites,
                &base,
                &models,
                meta,
                &fetcher,
                &Transcribers::mock(),
                &cfg,
            )
            .map_err(config_err)?;
            print!("{}", result.table());
            if let Some(p) = report {
                write_file(&p, &result.to_json())?;
            }
            if !result.passed {
                return Err(Failure::Assertion(result.problems.join("; ")));
            }
        }
        Command::DepthStudy {
            data,
            selection,
            trees,
            split_seed,
            grid,
            json,
        } => {
            let grid = parse_grid(&grid)?;
            let k = s.or(selection.k, "k", 19)?;
            let pool = s.pool(selection.pool, SelectionPool::All)?;
            let trees = s.or(trees, "trees", 100)?;
            let dataset = url_dataset(&s, &data)?;
            let split = prepare_split(&dataset, k, pool, 0.8, s.or(split_seed, "split_seed", 0)?)
                .map_err(config_err)?;
            let rows = depth_seed_study(&split.train, &split.test, &split.selection, trees, &grid)
                .map_err(config_err)?;
            if json {
                println!(
                    "{}",
                    serde_json::to_string_pretty(&rows).expect("rows serialize")
                );
            } else {
                print!("{}", study_table(&rows));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Assertion(msg)) => {
            eprintln!("evaluation failed: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
