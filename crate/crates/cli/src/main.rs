use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use gemrec_core::config::{Preset, RunConfig};
use gemrec_core::decoder::{decode_next, DecodeConfig, DecodeRequest, FlagMode};
use gemrec_core::eval::audit::Fault;
use gemrec_core::eval::{
    audit_suite, lambda_sweep, shock_experiment, write_csv, write_plot_data, write_shock_csv, AuditInput, AuditOptions,
};
use gemrec_core::io::{read_jsonl, write_jsonl, BidRecord, ItemRecord, SidRecord};
use gemrec_core::marketplace::Trajectory;
use gemrec_core::pipeline::{
    build_corpus, heldout_nll, inventory_from_records, sids_from_records, train_model, Dataset,
};
use gemrec_core::rng::{rng_for, streams};
use gemrec_core::seq_model::{read_model, write_model, CountModel, Scorer};

const ITEMS: &str = "items.jsonl";
const SIDS: &str = "sid_map.jsonl";
const BIDS: &str = "bids.jsonl";
const TRAJECTORIES: &str = "trajectories.jsonl";
const MODEL: &str = "model.bin";
const RESOLVED: &str = "config.resolved.toml";

/// Bid-aware generative recommendation on a synthetic marketplace.
#[derive(Debug, Parser)]
#[command(name = "gemrec", version)]
struct Cli {
    /// TOML run configuration; unknown keys are rejected.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory for every artifact a command reads or writes.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Ad-density regime of the logging policy.
    #[arg(long, global = true)]
    preset: Option<PresetArg>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum PresetArg {
    Main,
    High,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Synthesize items, semantic IDs, bids and logged trajectories.
    GenData,
    /// Fit the count scorer on the training prefixes.
    Train(TrainArgs),
    /// Decode the next slot for one context.
    Decode(DecodeArgs),
    /// Evaluate over a lambda grid.
    Sweep(SweepArgs),
    /// Shock a subset of bids and re-decode without retraining.
    Shock(ShockArgs),
    /// Run the invariant audits; exits with status 2 on any failure.
    Audit(AuditArgs),
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    order: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
}

#[derive(Debug, Args)]
struct DecodeArgs {
    /// JSON decode request.
    #[arg(long)]
    context: PathBuf,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    beam: Option<usize>,
    #[arg(long)]
    flag_mode: Option<FlagMode>,
}

#[derive(Debug, Args)]
struct SweepArgs {
    /// Comma-separated lambda values.
    #[arg(long, value_delimiter = ',')]
    grid: Option<Vec<f64>>,
    #[arg(long)]
    max_cases: Option<usize>,
    /// Decode without the trie constraint and report raw validity.
    #[arg(long)]
    unconstrained: bool,
}

#[derive(Debug, Args)]
struct ShockArgs {
    #[arg(long, value_delimiter = ',')]
    grid: Option<Vec<f64>>,
    #[arg(long)]
    fraction: Option<f64>,
    #[arg(long)]
    multiplier: Option<f64>,
    #[arg(long)]
    max_cases: Option<usize>,
}

#[derive(Debug, Args)]
struct AuditArgs {
    /// Break the mechanism on purpose to check that the audits notice.
    #[arg(long)]
    fault: Option<FaultArg>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FaultArg {
    ModulateOrganic,
    NegateBoost,
}

fn resolve(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            RunConfig::from_toml(&text).with_context(|| format!("in {}", path.display()))?
        }
        None => RunConfig::default(),
    };
    if let Some(p) = cli.preset {
        cfg.apply_preset(match p {
            PresetArg::Main => Preset::Main,
            PresetArg::High => Preset::High,
        });
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.out = out.clone();
    }
    Ok(cfg)
}

fn echo_config(cfg: &RunConfig) -> Result<()> {
    fs::create_dir_all(&cfg.out).with_context(|| format!("creating {}", cfg.out.display()))?;
    fs::write(cfg.out.join(RESOLVED), cfg.to_toml()?)?;
    Ok(())
}

fn load_dataset(cfg: &RunConfig) -> Result<Dataset> {
    let dir = &cfg.out;
    let items: Vec<ItemRecord> = read_jsonl(&dir.join(ITEMS))?;
    let sids: Vec<SidRecord> = read_jsonl(&dir.join(SIDS))?;
    let bids: Vec<BidRecord> = read_jsonl(&dir.join(BIDS))?;
    let trajectories: Vec<Trajectory> = read_jsonl(&dir.join(TRAJECTORIES))?;
    let c = cfg.index.codebook_size;
    if let Some(bad) = sids.iter().find(|s| s.codes.iter().any(|&v| v as usize >= c)) {
        bail!("item {} has a code outside the configured codebook size {c}", bad.item_id);
    }
    let inventory = inventory_from_records(&items, &sids, &bids)?;
    Ok(Dataset::new(c, &sids_from_records(&sids), inventory, &trajectories)?)
}

fn load_model(cfg: &RunConfig, data: &Dataset) -> Result<CountModel> {
    let path = cfg.out.join(MODEL);
    let file =
        fs::File::open(&path).with_context(|| format!("opening {} (run `gemrec train` first)", path.display()))?;
    let model = read_model(std::io::BufReader::new(file)).with_context(|| format!("reading {}", path.display()))?;
    if model.vocab() != &data.vocab {
        bail!("{} was trained on a different vocabulary than the data in {}", path.display(), cfg.out.display());
    }
    Ok(model)
}

fn gen_data(cfg: &RunConfig) -> Result<()> {
    let corpus = build_corpus(cfg)?;
    let dir = &cfg.out;
    write_jsonl(&dir.join(ITEMS), &corpus.item_records())?;
    write_jsonl(&dir.join(SIDS), &corpus.sid_records())?;
    write_jsonl(&dir.join(BIDS), &corpus.bid_records())?;
    write_jsonl(&dir.join(TRAJECTORIES), &corpus.trajectories)?;
    println!(
        "{} items ({} sponsored), {} trajectories written to {}",
        corpus.inventory.len(),
        corpus.inventory.sponsored_count(),
        corpus.trajectories.len(),
        dir.display()
    );
    println!("train ad fraction: {:.2}%", 100.0 * corpus.ad_fraction);
    Ok(())
}

fn train(cfg: &mut RunConfig, args: &TrainArgs) -> Result<()> {
    if let Some(m) = args.order {
        cfg.model.order = m;
    }
    if let Some(a) = args.alpha {
        cfg.model.alpha = a;
    }
    cfg.validate()?;
    let data = load_dataset(cfg)?;
    let model = train_model(&data, cfg.model.order, cfg.model.alpha)?;
    let mut bytes = Vec::new();
    write_model(&model, &mut bytes)?;
    fs::write(cfg.out.join(MODEL), bytes)?;
    println!("order {} alpha {}: {} training trajectories", cfg.model.order, cfg.model.alpha, data.train.len());
    println!("held-out NLL per token: {:.4}", heldout_nll(&model, &data)?);
    Ok(())
}

fn decode(cfg: &mut RunConfig, args: &DecodeArgs, explicit_seed: bool) -> Result<()> {
    let text = fs::read_to_string(&args.context).with_context(|| format!("reading {}", args.context.display()))?;
    let request: DecodeRequest =
        serde_json::from_str(&text).with_context(|| format!("malformed decode request {}", args.context.display()))?;
    let mut config: DecodeConfig = request.config(&cfg.decode);
    if let Some(l) = args.lambda {
        config.lambda = l;
    }
    if let Some(k) = args.beam {
        config.beam_width = k;
    }
    if let Some(f) = args.flag_mode {
        config.flag_mode = f;
    }
    config.validate()?;
    if !explicit_seed {
        cfg.seed = request.seed;
    }
    cfg.decode = config.clone();
    let data = load_dataset(cfg)?;
    let model = load_model(cfg, &data)?;
    let mut rng = rng_for(cfg.seed, streams::FLAGS);
    let result = decode_next(&model, &request.context, &config, data.market(), &mut rng)?;
    println!("{}", serde_json::to_string(&result)?);
    Ok(())
}

fn sweep(cfg: &mut RunConfig, args: &SweepArgs) -> Result<()> {
    if let Some(g) = &args.grid {
        cfg.eval.lambda_grid = g.clone();
    }
    if args.max_cases.is_some() {
        cfg.eval.max_cases = args.max_cases;
    }
    if args.unconstrained {
        cfg.decode.constrained = false;
    }
    cfg.validate()?;
    let data = load_dataset(cfg)?;
    let model = load_model(cfg, &data)?;
    let cases = data.eval_cases(cfg.eval.max_cases);
    let rows =
        lambda_sweep(&model, cases, data.market(), &cfg.eval.lambda_grid, &cfg.decode, cfg.eval.k, cfg.seed, None)?;
    let mut csv = Vec::new();
    write_csv(&rows, &mut csv)?;
    fs::write(cfg.out.join("sweep.csv"), &csv)?;
    write_plot_data(&rows, &cfg.out)?;
    print!("{}", String::from_utf8(csv)?);
    Ok(())
}

fn shock(cfg: &mut RunConfig, args: &ShockArgs) -> Result<()> {
    if let Some(g) = &args.grid {
        cfg.eval.shock_grid = g.clone();
    }
    if let Some(f) = args.fraction {
        cfg.market.shock_fraction = f;
    }
    if let Some(m) = args.multiplier {
        cfg.market.shock_multiplier = m;
    }
    if args.max_cases.is_some() {
        cfg.eval.max_cases = args.max_cases;
    }
    cfg.validate()?;
    let data = load_dataset(cfg)?;
    let model = load_model(cfg, &data)?;
    let report = shock_experiment(
        &model,
        data.eval_cases(cfg.eval.max_cases),
        &data.trie,
        &data.inventory,
        &cfg.eval.shock_grid,
        cfg.market.shock_fraction,
        cfg.market.shock_multiplier,
        &cfg.decode,
        cfg.eval.k,
        cfg.seed,
    )?;
    let mut csv = Vec::new();
    write_shock_csv(&report, &mut csv)?;
    fs::write(cfg.out.join("shock.csv"), &csv)?;
    println!("{} shocked items, {:.2}% of the eligible inventory", report.shocked.len(), 100.0 * report.natural_share);
    print!("{}", String::from_utf8(csv)?);
    Ok(())
}

fn audit(cfg: &RunConfig, args: &AuditArgs) -> Result<bool> {
    let data = load_dataset(cfg)?;
    let model = load_model(cfg, &data)?;
    let options = AuditOptions {
        fault: match args.fault {
            None => Fault::None,
            Some(FaultArg::ModulateOrganic) => Fault::ModulateOrganic,
            Some(FaultArg::NegateBoost) => Fault::NegateBoost,
        },
        ..AuditOptions::default()
    };
    let input = AuditInput {
        model: &model,
        train: &data.train,
        vocab: &data.vocab,
        order: model.order(),
        alpha: model.alpha(),
        cases: &data.cases,
        market: data.market(),
        config: &cfg.decode,
        seed: cfg.seed,
    };
    let report = audit_suite(&input, &options)?;
    let text = format!("{report}\n");
    fs::write(cfg.out.join("audit.txt"), &text)?;
    print!("{text}");
    Ok(report.passed())
}

fn run(cli: Cli) -> Result<ExitCode> {
    let mut cfg = resolve(&cli)?;
    echo_config(&cfg)?;
    match &cli.command {
        Command::GenData => gen_data(&cfg)?,
        Command::Train(a) => train(&mut cfg, a)?,
        Command::Decode(a) => decode(&mut cfg, a, cli.seed.is_some())?,
        Command::Sweep(a) => sweep(&mut cfg, a)?,
        Command::Shock(a) => shock(&mut cfg, a)?,
        Command::Audit(a) => {
            if !audit(&cfg, a)? {
                return Ok(ExitCode::from(2));
            }
        }
    }
    // Overrides from subcommand flags are part of the run.
    echo_config(&cfg)?;
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
