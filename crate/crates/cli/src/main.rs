use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use adlift::gibbs::{run_chain, GibbsConfig, GibbsError};
use adlift::identity::{
    diluted_atl, multidevice_skew_factor, ContaminationError, ContaminationScenario, IdGraph,
    IdentityError,
};
use adlift::model::{validate_count_table, CampaignLogs, CountTable, LogRecord};
use adlift::simulator::{simulate, SimConfig, SimError};
use adlift_cli::analysis::{analyze_logs, analyze_table, AnalysisError};
use adlift_cli::config::{
    campaign_config_text, parse_assign_by, parse_count_mode, parse_flat, parse_split, set_sim,
    AnalysisSettings, ConfigFileError, Grain,
};
use adlift_cli::logs::{read_bid_opps, read_events, read_impressions, write_log, LogError};
use adlift_cli::report::{table_row, to_json, TABLE_HEADER};
use anyhow::{anyhow, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Parser)]
#[command(
    name = "adlift",
    version,
    about = "Causal ad-lift measurement from bidder logs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Attribute logs (or read a count table) and estimate lift.
    Analyze(Box<AnalyzeArgs>),
    /// Generate a synthetic campaign with known ground truth.
    Simulate(SimulateArgs),
    /// Gibbs intervals for a count table.
    Ci(CiArgs),
    /// Closed-form cross-device dilution and multi-device skew.
    Contamination(ContaminationArgs),
}

#[derive(Args)]
struct GibbsFlags {
    #[arg(long)]
    burn_in: Option<usize>,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    chains: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// `posterior` or `response-weighted`.
    #[arg(long, value_parser = parse_split)]
    split: Option<adlift::gibbs::NonResponderSplit>,
}

impl GibbsFlags {
    fn apply(&self, g: &mut GibbsConfig) {
        if let Some(v) = self.burn_in {
            g.burn_in = v;
        }
        if let Some(v) = self.samples {
            g.samples = v;
        }
        if let Some(v) = self.chains {
            g.chains = v;
        }
        if let Some(v) = self.seed {
            g.seed = v;
        }
        if let Some(v) = self.split {
            g.split = v;
        }
    }
}

#[derive(Args)]
struct AnalyzeArgs {
    /// Flat key = value campaign config.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, conflicts_with = "counts")]
    impressions: Option<PathBuf>,
    #[arg(long, requires = "impressions")]
    events: Option<PathBuf>,
    #[arg(long, requires = "impressions")]
    bidopps: Option<PathBuf>,
    /// A count table JSON instead of logs.
    #[arg(long)]
    counts: Option<PathBuf>,
    #[arg(long)]
    campaign_id: Option<String>,
    #[arg(long)]
    pv_window_seconds: Option<u64>,
    #[arg(long)]
    holdout_fraction: Option<f64>,
    #[arg(long)]
    hash_digits: Option<u32>,
    #[arg(long)]
    salt: Option<String>,
    /// `user` or `cid`.
    #[arg(long)]
    grain: Option<Grain>,
    #[arg(long)]
    cid_graph: Option<PathBuf>,
    #[arg(long)]
    min_degree: Option<usize>,
    /// `conversions` or `responders`.
    #[arg(long, value_parser = parse_count_mode)]
    count_mode: Option<adlift::estimators::CountMode>,
    #[command(flatten)]
    gibbs: GibbsFlags,
    #[arg(long)]
    no_gibbs: bool,
    /// Write the report JSON here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write the one-line results table (with header) here.
    #[arg(long)]
    table: Option<PathBuf>,
    /// Row id for the results table; defaults to the campaign id.
    #[arg(long)]
    id: Option<String>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    ContaminationToy,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, value_enum)]
    preset: Option<Preset>,
    /// Devices per consumer for the contamination preset.
    #[arg(long, default_value_t = 3)]
    k: u32,
    #[arg(long)]
    p: Option<f64>,
    #[arg(long)]
    a: Option<f64>,
    #[arg(long)]
    n: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    /// `user` or `consumer`.
    #[arg(long, value_parser = parse_assign_by)]
    assign_by: Option<adlift::simulator::AssignBy>,
    /// Extra `key=value` settings, applied last.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Args)]
struct CiArgs {
    /// Count table JSON.
    #[arg(long)]
    counts: PathBuf,
    #[command(flatten)]
    gibbs: GibbsFlags,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write every retained draw as CSV.
    #[arg(long)]
    draws: Option<PathBuf>,
}

#[derive(Args)]
struct ContaminationArgs {
    #[arg(long)]
    k: u32,
    #[arg(long)]
    p: f64,
    #[arg(long)]
    a: f64,
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => write_text(path, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn read_table(path: &Path) -> Result<CountTable> {
    serde_json::from_str(&read_text(path)?)
        .with_context(|| format!("parsing count table {}", path.display()))
}

fn analyze(args: AnalyzeArgs) -> Result<()> {
    let mut s = match &args.config {
        Some(path) => AnalysisSettings::from_text(&read_text(path)?)?,
        None => AnalysisSettings::default(),
    };
    if let Some(v) = &args.campaign_id {
        s.campaign_id = Some(v.clone());
    }
    if let Some(v) = args.pv_window_seconds {
        s.pv_window_seconds = v;
    }
    if let Some(v) = args.holdout_fraction {
        s.holdout_fraction = v;
    }
    if let Some(v) = args.hash_digits {
        s.hash_digits = v;
    }
    if let Some(v) = &args.salt {
        s.salt = Some(v.clone());
    }
    if let Some(v) = args.grain {
        s.grain = v;
    }
    if let Some(v) = args.min_degree {
        s.min_degree = v;
    }
    if let Some(v) = args.count_mode {
        s.count_mode = v;
    }
    args.gibbs.apply(&mut s.gibbs);

    let report = if let Some(path) = &args.counts {
        if s.campaign_id.is_none() {
            s.campaign_id = Some(args.id.clone().unwrap_or_else(|| "table".into()));
        }
        analyze_table(&read_table(path)?, &s, !args.no_gibbs)?
    } else {
        let imp_path = args
            .impressions
            .as_ref()
            .ok_or_else(|| anyhow!("analyze needs --impressions or --counts"))?;
        let logs = CampaignLogs {
            impressions: read_impressions(imp_path)?,
            events: match &args.events {
                Some(p) => read_events(p)?,
                None => Vec::new(),
            },
            bid_opps: match &args.bidopps {
                Some(p) => read_bid_opps(p)?,
                None => Vec::new(),
            },
        };
        let graph = match &args.cid_graph {
            Some(p) => {
                let file = fs::File::open(p).with_context(|| format!("reading {}", p.display()))?;
                Some(IdGraph::from_csv_reader(file)?)
            }
            None => None,
        };
        analyze_logs(&logs, &s, graph.as_ref(), !args.no_gibbs)?
    };

    if let Some(path) = &args.table {
        let id = args.id.as_deref().unwrap_or(&report.campaign_id);
        write_text(
            path,
            &format!("{TABLE_HEADER}\n{}\n", table_row(id, &report)),
        )?;
    }
    emit(args.out.as_deref(), &to_json(&report))
}

fn simulate_cmd(args: SimulateArgs) -> Result<()> {
    let mut cfg = match args.preset {
        Some(Preset::ContaminationToy) => SimConfig::contamination_toy(
            args.k,
            args.p.unwrap_or(0.9),
            args.a.unwrap_or(1.0),
            args.n.unwrap_or(100_000),
            args.seed.unwrap_or(0),
        ),
        None => SimConfig::default(),
    };
    if let Some(path) = &args.config {
        for (line, key, value) in parse_flat(&read_text(path)?)? {
            set_sim(&mut cfg, line, &key, &value)?;
        }
    }
    if let Some(v) = args.n {
        cfg.n_consumers = v;
    }
    if let Some(v) = args.seed {
        cfg.seed = v;
    }
    if let Some(v) = args.p {
        cfg.holdout = v;
    }
    if let Some(v) = args.a {
        cfg.true_lift = v;
    }
    if let Some(v) = args.assign_by {
        cfg.assign_by = v;
    }
    for (i, kv) in args.set.iter().enumerate() {
        let (key, value) = kv
            .split_once('=')
            .ok_or(ConfigFileError::Syntax { line: i + 1 })?;
        set_sim(&mut cfg, i + 1, key.trim(), value.trim())?;
    }

    let out = simulate(&cfg)?;
    let dir = &args.out_dir;
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    write_log(
        &dir.join("bidopps.jsonl"),
        out.logs.bid_opps.into_iter().map(LogRecord::BidOpp),
    )?;
    write_log(
        &dir.join("impressions.jsonl"),
        out.logs.impressions.into_iter().map(LogRecord::Impression),
    )?;
    write_log(
        &dir.join("events.jsonl"),
        out.logs.events.into_iter().map(LogRecord::Event),
    )?;

    let mut truth = Vec::new();
    out.truth.write_csv(&mut truth)?;
    fs::write(dir.join("truth.csv"), truth).context("writing truth.csv")?;
    let mut graph = Vec::new();
    out.truth.id_graph()?.write_csv(&mut graph)?;
    fs::write(dir.join("graph.csv"), graph).context("writing graph.csv")?;
    write_text(&dir.join("campaign.conf"), &campaign_config_text(&cfg))?;

    #[derive(Serialize)]
    struct Summary<'a> {
        config: &'a SimConfig,
        truth: &'a adlift::simulator::TruthSummary,
    }
    let summary = to_json(&Summary {
        config: &cfg,
        truth: &out.truth.summary,
    });
    write_text(&dir.join("truth_summary.json"), &summary)?;
    print!("{summary}");
    Ok(())
}

fn ci(args: CiArgs) -> Result<()> {
    let table = read_table(&args.counts)?;
    validate_count_table(&table).map_err(AnalysisError::InvalidTable)?;
    let mut cfg = GibbsConfig::default();
    args.gibbs.apply(&mut cfg);
    let result = run_chain(&table, &cfg)?;
    if let Some(path) = &args.draws {
        write_text(path, &result.draws_csv())?;
    }
    emit(args.out.as_deref(), &to_json(&result))
}

fn contamination(args: ContaminationArgs) -> Result<()> {
    #[derive(Serialize)]
    struct Out {
        k: u32,
        p: f64,
        a: f64,
        diluted_atl: f64,
        multidevice_skew_factor: f64,
    }
    let scenario = ContaminationScenario::new(args.k, args.p, args.a)?;
    let out = Out {
        k: args.k,
        p: args.p,
        a: args.a,
        diluted_atl: diluted_atl(&scenario)?,
        multidevice_skew_factor: multidevice_skew_factor(args.p)?,
    };
    print!("{}", to_json(&out));
    Ok(())
}

fn error_kind(err: &anyhow::Error) -> &'static str {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<AnalysisError>() {
            return e.kind();
        }
        if cause.is::<ConfigFileError>() || cause.is::<SimError>() {
            return "config";
        }
        if let Some(e) = cause.downcast_ref::<LogError>() {
            return match e {
                LogError::Io { .. } => "io",
                LogError::Parse { .. } => "parse",
            };
        }
        if cause.is::<IdentityError>() {
            return "identity";
        }
        if cause.is::<ContaminationError>() {
            return "domain";
        }
        if cause.is::<GibbsError>() {
            return "gibbs";
        }
        if cause.is::<serde_json::Error>() {
            return "parse";
        }
        if cause.is::<std::io::Error>() {
            return "io";
        }
    }
    "error"
}

fn report_error(kind: &str, message: String) -> ExitCode {
    let body = serde_json::json!({ "error": { "kind": kind, "message": message } });
    eprintln!("{body}");
    ExitCode::FAILURE
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Analyze(a) => analyze(*a),
        Command::Simulate(a) => simulate_cmd(a),
        Command::Ci(a) => ci(a),
        Command::Contamination(a) => contamination(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => return report_error("usage", e.to_string().trim_end().to_string()),
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => report_error(error_kind(&e), format!("{e:#}")),
    }
}
