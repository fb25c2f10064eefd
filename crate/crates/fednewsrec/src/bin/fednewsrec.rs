//! Command-line front end: synthetic data generation, federated or
//! centralized training, evaluation, and privacy reporting.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use fednewsrec::checkpoint;
use fednewsrec::config::load_config;
use fednewsrec::data::{
    build_client_stores, load_behaviors, load_catalog, write_behaviors, write_catalog, Catalog,
    Impression,
};
use fednewsrec::fed::{train_centralized, train_federated, TrainOptions};
use fednewsrec::ldp::PrivacyConfig;
use fednewsrec::metrics::{evaluate, MetricsReport};
use fednewsrec::model::{user_loss, HyperParams, ModelParams, TrainingSample, UserModelMode};
use fednewsrec::synth::{generate_synthetic, SynthSpec};
use fednewsrec::{Error, Result, RngState};

#[derive(Parser)]
#[command(name = "fednewsrec", version, about = "Privacy-preserving federated news recommendation simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic news catalog and click logs.
    GenSynth(GenSynthArgs),
    /// Train a model, federated or centralized.
    Train(TrainArgs),
    /// Evaluate a checkpoint on a behavior file.
    Evaluate(EvaluateArgs),
    /// Print the privacy parameters and the per-upload budget bound.
    PrivacyReport(PrivacyReportArgs),
}

#[derive(Args)]
struct GenSynthArgs {
    #[arg(long, default_value_t = 200)]
    users: usize,
    #[arg(long, default_value_t = 500)]
    news: usize,
    #[arg(long, default_value_t = 8)]
    topics: usize,
    #[arg(long, default_value_t = 0.1)]
    noise: f64,
    #[arg(long, default_value_t = 6)]
    title_len: usize,
    #[arg(long, default_value_t = 40)]
    impressions_per_user: usize,
    #[arg(long, default_value_t = 6)]
    candidates: usize,
    /// Generation seed; required so runs are always reproducible.
    #[arg(long)]
    seed: u64,
    /// Output directory for news.tsv, train.tsv, test.tsv.
    #[arg(long)]
    out: PathBuf,
    /// Overwrite existing output files.
    #[arg(long)]
    force: bool,
    /// Accepted for interface uniformity; generation is single-threaded
    /// and the output never depends on it.
    #[arg(long, default_value_t = 1)]
    workers: usize,
}

#[derive(Copy, Clone, PartialEq, ValueEnum)]
enum Mode {
    Federated,
    Central,
}

#[derive(Copy, Clone, PartialEq, ValueEnum)]
enum OutputFormat {
    Csv,
    Json,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long, value_enum, default_value_t = Mode::Federated)]
    mode: Mode,
    /// Optional `key = value` hyperparameter file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    news: PathBuf,
    /// Training behavior TSV.
    #[arg(long)]
    train: PathBuf,
    /// Held-out behavior TSV for periodic evaluation.
    #[arg(long)]
    test: Option<PathBuf>,
    #[arg(long, default_value_t = 300)]
    rounds: usize,
    #[arg(long, default_value_t = 2)]
    epochs: usize,
    #[arg(long, default_value_t = 32)]
    batch: usize,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    lr: Option<f64>,
    /// Laplace noise scale; 0 disables noise.
    #[arg(long)]
    lambda: Option<f64>,
    /// Clip scale; `inf` disables clipping.
    #[arg(long)]
    delta: Option<String>,
    /// Fraction of clients sampled per round.
    #[arg(long)]
    fraction: Option<f64>,
    /// Evaluate on the test split every N rounds (federated mode).
    #[arg(long, default_value_t = 50)]
    eval_every: usize,
    #[arg(long)]
    metrics_out: Option<PathBuf>,
    #[arg(long)]
    checkpoint_out: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    workers: usize,
    /// Ablation: user encoder uses only the long-term branch.
    #[arg(long)]
    disable_short_term: bool,
    /// Ablation: user encoder uses only the short-term branch.
    #[arg(long)]
    disable_long_term: bool,
    /// Cap samples per client per round (random subset).
    #[arg(long)]
    max_samples_per_round: Option<usize>,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    news: PathBuf,
    /// Behavior TSV to evaluate on.
    #[arg(long)]
    behaviors: PathBuf,
    #[arg(long, value_enum, default_value_t = OutputFormat::Csv)]
    format: OutputFormat,
}

#[derive(Args)]
struct PrivacyReportArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::GenSynth(args) => cmd_gen_synth(args),
        Command::Train(args) => cmd_train(args),
        Command::Evaluate(args) => cmd_evaluate(args),
        Command::PrivacyReport(args) => cmd_privacy_report(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn cmd_gen_synth(args: GenSynthArgs) -> Result<()> {
    let spec = SynthSpec {
        num_users: args.users,
        num_news: args.news,
        num_topics: args.topics,
        click_noise: args.noise,
        title_len: args.title_len,
        impressions_per_user: args.impressions_per_user,
        candidates_per_impression: args.candidates,
        ..Default::default()
    };
    let out = &args.out;
    std::fs::create_dir_all(out)?;
    let paths = [
        out.join("news.tsv"),
        out.join("train.tsv"),
        out.join("test.tsv"),
    ];
    if !args.force {
        for p in &paths {
            if p.exists() {
                return Err(Error::Config(format!(
                    "{} already exists; pass --force to overwrite",
                    p.display()
                )));
            }
        }
    }
    let (catalog, train, test, _) = generate_synthetic(&spec, &RngState::new(args.seed))?;
    write_catalog(&paths[0], &catalog)?;
    write_behaviors(&paths[1], &train)?;
    write_behaviors(&paths[2], &test)?;
    println!(
        "wrote {} articles, {} train and {} test impressions to {}",
        catalog.articles.len(),
        train.len(),
        test.len(),
        out.display()
    );
    Ok(())
}

fn load_hp(config: Option<&Path>) -> Result<HyperParams> {
    match config {
        Some(path) => load_config(path),
        None => {
            // desk-scale defaults; the full-size model is configured
            // explicitly via --config
            let mut hp = HyperParams::desk(0);
            hp.vocab_size = 0;
            Ok(hp)
        }
    }
}

struct Dataset {
    catalog: Catalog,
    train: Vec<Impression>,
    test: Option<Vec<Impression>>,
}

fn load_dataset(
    hp: &mut HyperParams,
    news: &Path,
    train: &Path,
    test: Option<&Path>,
) -> Result<Dataset> {
    let catalog = load_catalog(news, hp.title_len)?;
    if hp.vocab_size == 0 {
        hp.vocab_size = catalog.vocab_size();
    } else if hp.vocab_size < catalog.vocab_size() {
        return Err(Error::Config(format!(
            "configured vocab_size {} is smaller than the catalog vocabulary {}",
            hp.vocab_size,
            catalog.vocab_size()
        )));
    }
    hp.validate()?;
    let train = load_behaviors(train, &catalog, hp)?;
    let test = test.map(|p| load_behaviors(p, &catalog, hp)).transpose()?;
    Ok(Dataset {
        catalog,
        train,
        test,
    })
}

fn cmd_train(args: TrainArgs) -> Result<()> {
    let mut hp = load_hp(args.config.as_deref())?;
    if let Some(lr) = args.lr {
        hp.learning_rate = lr;
    }
    if let Some(lambda) = args.lambda {
        hp.noise_scale = lambda;
    }
    if let Some(delta) = &args.delta {
        hp.clip_scale = parse_delta(delta)?;
    }
    if let Some(fraction) = args.fraction {
        hp.client_fraction = fraction;
    }
    match (args.disable_short_term, args.disable_long_term) {
        (true, true) => {
            return Err(Error::Config(
                "cannot disable both user-encoder branches".into(),
            ))
        }
        (true, false) => hp.user_mode = UserModelMode::LongTermOnly,
        (false, true) => hp.user_mode = UserModelMode::ShortTermOnly,
        (false, false) => {}
    }

    let data = load_dataset(&mut hp, &args.news, &args.train, args.test.as_deref())?;
    let root = RngState::new(args.seed);
    let init = ModelParams::init(&hp, &root)?;
    let clients = build_client_stores(&data.train, &data.catalog, &hp, &root.split(1))?;
    if clients.is_empty() {
        return Err(Error::Data("no client has any training sample".into()));
    }

    let mut csv = vec![MetricsReport::CSV_HEADER.to_string()];
    let mut eval_round = |params: &ModelParams, round: usize, loss: f64| -> Result<()> {
        if let Some(test) = &data.test {
            let report = evaluate(params, test, &data.catalog)?;
            println!("{}", report.csv_row(round, loss));
            csv.push(report.csv_row(round, loss));
        }
        Ok(())
    };

    let final_params = match args.mode {
        Mode::Federated => {
            let privacy = PrivacyConfig::new(hp.clip_scale, hp.noise_scale)?;
            let opts = TrainOptions {
                sample_cap: args.max_samples_per_round,
                workers: args.workers,
            };
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(args.workers.max(1))
                .build()
                .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
            let mut pending: Result<()> = Ok(());
            let (params, _) = pool.install(|| {
                train_federated(
                    &init,
                    &clients,
                    &privacy,
                    args.rounds,
                    &root.split(2),
                    &opts,
                    |params, report| {
                        let r = report.round + 1;
                        if pending.is_ok()
                            && (r % args.eval_every.max(1) == 0 || r == args.rounds)
                        {
                            pending = eval_round(params, r, report.post_loss);
                        }
                    },
                )
            })?;
            pending?;
            params
        }
        Mode::Central => {
            let samples: Vec<TrainingSample> = clients
                .iter()
                .flat_map(|c| c.samples.iter().cloned())
                .collect();
            let trng = root.split(2);
            let mut params = init.clone();
            for epoch in 0..args.epochs {
                // one epoch at a time so we can evaluate between epochs
                let stage = train_centralized(&params, &samples, 1, args.batch, &trng.split(epoch as u64))?;
                params = stage;
                let loss = user_loss(&params, &samples, &trng.split(1_000_000 + epoch as u64), false)?
                    / samples.len() as f64;
                eval_round(&params, epoch + 1, loss)?;
            }
            params
        }
    };

    if let Some(path) = &args.metrics_out {
        std::fs::write(path, csv.join("\n") + "\n")?;
    }
    if let Some(path) = &args.checkpoint_out {
        checkpoint::save(&final_params, path)?;
        println!("checkpoint written to {}", path.display());
    }
    Ok(())
}

fn parse_delta(s: &str) -> Result<f64> {
    if s.eq_ignore_ascii_case("inf") || s.eq_ignore_ascii_case("infinity") {
        return Ok(f64::INFINITY);
    }
    s.parse()
        .map_err(|_| Error::Config(format!("bad clip scale {s:?}")))
}

fn cmd_evaluate(args: EvaluateArgs) -> Result<()> {
    let params = checkpoint::load(&args.checkpoint)?;
    let catalog = load_catalog(&args.news, params.hp.title_len)?;
    if catalog.vocab_size() > params.hp.vocab_size {
        return Err(Error::Checkpoint(format!(
            "catalog vocabulary {} exceeds the checkpoint's vocab_size {}",
            catalog.vocab_size(),
            params.hp.vocab_size
        )));
    }
    let impressions = load_behaviors(&args.behaviors, &catalog, &params.hp)?;
    let report = evaluate(&params, &impressions, &catalog)?;
    match args.format {
        OutputFormat::Csv => {
            println!("auc,mrr,ndcg5,ndcg10,skipped");
            println!(
                "{:.4},{:.4},{:.4},{:.4},{}",
                report.auc, report.mrr, report.ndcg5, report.ndcg10, report.skipped
            );
        }
        OutputFormat::Json => {
            let value = serde_json::json!({
                "auc": format!("{:.4}", report.auc).parse::<f64>().unwrap(),
                "mrr": format!("{:.4}", report.mrr).parse::<f64>().unwrap(),
                "ndcg5": format!("{:.4}", report.ndcg5).parse::<f64>().unwrap(),
                "ndcg10": format!("{:.4}", report.ndcg10).parse::<f64>().unwrap(),
                "skipped": report.skipped,
            });
            println!("{}", serde_json::to_string_pretty(&value).unwrap());
        }
    }
    Ok(())
}

fn cmd_privacy_report(args: PrivacyReportArgs) -> Result<()> {
    let hp = load_hp(args.config.as_deref())?;
    let delta = args.delta.unwrap_or(hp.clip_scale);
    let lambda = args.lambda.unwrap_or(hp.noise_scale);
    let cfg = PrivacyConfig::new(delta, lambda)?;
    println!("clip scale delta     = {delta}");
    println!("noise scale lambda   = {lambda}");
    println!("noise stddev         = {:.6}", cfg.noise_stddev());
    match cfg.budget() {
        Ok(eps) => println!("privacy budget bound = {eps:.4} (epsilon <= 2*delta/lambda per upload)"),
        Err(Error::UndefinedBudget) => println!("privacy budget undefined (no noise)"),
        Err(e) => return Err(e),
    }
    Ok(())
}
