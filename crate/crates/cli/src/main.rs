mod config;

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand};
use prefattach::diagnostics::{self, GeometricBins};
use prefattach::hierarchical::{fit_hier, HierOptions};
use prefattach::mcmc::{fit_single, ChainConfig, ChainResult};
use prefattach::preference::PreferenceKind;
use prefattach::priors::HyperConfig;
use prefattach::selection::{run_selection, Linking, SelectionPlan};
use prefattach::simulator::{simulate_with_draws, Allocation, SimConfig};
use prefattach::store::{
    read_events, read_timeline, write_timeline, Category, EvolutionLog, IncrementPanel, PeriodScheme, SufficientStats,
    KNOWN_DEP_TYPES,
};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{config_hash, RunConfig};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{}", .0.join("\n"))]
    Invalid(Vec<String>),
    #[error(transparent)]
    Core(#[from] prefattach::Error),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl CliError {
    fn exit_code(&self) -> u8 {
        use prefattach::Error as E;
        match self {
            CliError::Usage(_) | CliError::Invalid(_) => 2,
            CliError::Core(E::InvalidConfig(_) | E::InvalidParams(_) | E::InvalidPeriod(_) | E::SinglePeriod(_)) => 2,
            _ => 1,
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "prefattach", version, about = "Bayesian preferential attachment from network evolution logs")]
struct Cli {
    /// Repeat for more log output.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Read an event log and write increments and sufficient statistics.
    Ingest(IngestArgs),
    /// Sample the posterior of one preference function.
    Fit(FitArgs),
    /// Compare the power and piecewise preference functions.
    Select(SelectArgs),
    /// Generate a synthetic event log.
    Simulate(SimulateArgs),
    /// Write smoothed averages, survival and degree correlation tables.
    Diagnose(DiagnoseArgs),
}

#[derive(Debug, Args)]
struct IngestArgs {
    #[arg(long)]
    events: PathBuf,
    /// Comma-separated dependency types to keep.
    #[arg(long, value_delimiter = ',', default_value = "Imports")]
    types: Vec<String>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct StatsArgs {
    /// Output directory of `ingest`, or a single statistics file.
    #[arg(long)]
    stats: PathBuf,
    #[arg(long)]
    category: Category,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Fix δ = 0; defaults to true for deletions.
    #[arg(long)]
    delta_fixed: Option<bool>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct FitArgs {
    #[command(flatten)]
    common: StatsArgs,
    #[arg(long, default_value = "power")]
    pref: PreferenceKind,
    #[arg(long, conflicts_with = "single")]
    hier: bool,
    #[arg(long)]
    single: bool,
    /// `monthly` or `fixed:<steps>`; hierarchical fits only.
    #[arg(long)]
    periods: Option<String>,
    /// Independent chains run in parallel with consecutive seeds.
    #[arg(long)]
    chains: Option<usize>,
}

#[derive(Debug, Args)]
struct SelectArgs {
    #[command(flatten)]
    common: StatsArgs,
    /// Prior probability of the piecewise function.
    #[arg(long)]
    p: Option<f64>,
    #[arg(long)]
    pilot_draws: Option<usize>,
    /// Retune `p` when short runs only visit one model.
    #[arg(long)]
    auto_p: Option<bool>,
    /// `separate` parameter vectors per model, or `shared` α and δ.
    #[arg(long)]
    linking: Option<Linking>,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_parser = ["poisson", "multinomial"], default_value = "poisson")]
    allocation: String,
    /// Event CSV to write.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct DiagnoseArgs {
    #[arg(long)]
    events: PathBuf,
    /// Comma-separated dependency types; all types in the file when omitted.
    #[arg(long, value_delimiter = ',')]
    types: Option<Vec<String>>,
    /// Snapshot date; the last change on or before it is used.
    #[arg(long)]
    date: Option<NaiveDate>,
    #[arg(long, default_value = "external")]
    category: Category,
    #[arg(long, default_value_t = 1.5)]
    bin_ratio: f64,
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let outcome = match cli.command {
        Command::Ingest(a) => ingest(a),
        Command::Fit(a) => fit(a),
        Command::Select(a) => select(a),
        Command::Simulate(a) => simulate(a),
        Command::Diagnose(a) => diagnose(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn require_file(path: &Path) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(CliError::Usage(format!("no such file: {}", path.display())))
    }
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|source| CliError::Io { path: path.into(), source })
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|source| CliError::Io { path: path.into(), source })
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|source| CliError::Io { path: path.into(), source })
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(prefattach::Error::from)?;
    text.push('\n');
    write_text(path, &text)
}

fn check_types(path: &Path, types: &[String]) -> Result<BTreeSet<String>> {
    let file = File::open(path).map_err(|source| CliError::Io { path: path.into(), source })?;
    let present: BTreeSet<String> =
        read_events(std::io::BufReader::new(file))?.into_iter().map(|(_, e)| e.dep_type).collect();
    let mut known: BTreeSet<String> = KNOWN_DEP_TYPES.iter().map(|s| s.to_string()).collect();
    known.extend(present);
    let unknown: Vec<&String> = types.iter().filter(|t| !known.contains(*t)).collect();
    if !unknown.is_empty() {
        let list: Vec<&str> = known.iter().map(String::as_str).collect();
        return Err(CliError::Usage(format!("unknown dependency type(s) {unknown:?}; known types: {}", list.join(", "))));
    }
    Ok(types.iter().cloned().collect())
}

fn ingest(args: IngestArgs) -> Result<()> {
    require_file(&args.events)?;
    let types = check_types(&args.events, &args.types)?;
    let log = EvolutionLog::ingest(&args.events, &types)?;
    let panel = IncrementPanel::extract(&log);
    create_dir(&args.out)?;
    write_timeline(create(&args.out.join("timeline.csv"))?, log.timeline())?;
    for cat in Category::ALL {
        SufficientStats::summarize(&panel, cat).save(args.out.join(format!("stats_{cat}.csv")))?;
    }

    let mut w = create(&args.out.join("panel.csv"))?;
    let io = |source| CliError::Io { path: args.out.join("panel.csv"), source };
    writeln!(w, "t,vertex,k_prev,x,y,z,k").map_err(io)?;
    let mut result = Ok(());
    panel.for_each_step(|r| {
        for v in 0..r.n_prev() {
            if result.is_ok() && (r.x[v] | r.y[v] | r.z[v]) != 0 {
                result = writeln!(
                    w,
                    "{},{},{},{},{},{},{}",
                    r.t,
                    log.vertex_name(v as u32),
                    r.k_prev[v],
                    r.x[v],
                    r.y[v],
                    r.z[v],
                    r.k_curr[v]
                );
            }
        }
    });
    result.and_then(|_| w.flush()).map_err(io)?;
    log::info!("{} steps, {} vertices", log.num_steps(), log.num_vertices());
    Ok(())
}

/// Statistics plus the timeline when one is available next to them.
fn load_stats(path: &Path, category: Category) -> Result<SufficientStats> {
    let (file, timeline_path) = if path.is_dir() {
        (path.join(format!("stats_{category}.csv")), path.join("timeline.csv"))
    } else {
        (path.to_path_buf(), path.with_file_name("timeline.csv"))
    };
    require_file(&file)?;
    let timeline = if timeline_path.exists() {
        let f = File::open(&timeline_path).map_err(|source| CliError::Io { path: timeline_path.clone(), source })?;
        Some(read_timeline(std::io::BufReader::new(f))?)
    } else {
        None
    };
    Ok(SufficientStats::load(&file, category, timeline.as_deref())?)
}

/// Resolved settings of a `fit` or `select` run; serialised, hashed and
/// written next to the outputs.
#[derive(Debug, Serialize)]
struct Resolved<'a> {
    command: &'a str,
    stats: String,
    category: Category,
    delta_fixed: bool,
    seed: u64,
    #[serde(flatten)]
    extra: BTreeMap<&'a str, Value>,
    chain: ChainConfig,
    hyper: HyperConfig,
}

impl Resolved<'_> {
    /// Writes `config.toml` to `out` and returns its hash.
    fn record(&self, out: &Path) -> Result<String> {
        let value = serde_json::to_value(self).map_err(prefattach::Error::from)?;
        let text = toml::to_string(&value).map_err(|e| CliError::Usage(format!("cannot render config: {e}")))?;
        write_text(&out.join("config.toml"), &text)?;
        Ok(config_hash(&text))
    }
}

fn fit(args: FitArgs) -> Result<()> {
    let c = &args.common;
    let cfg = RunConfig::load(c.config.as_deref())?;
    let stats = load_stats(&c.stats, c.category)?;
    let seed = c.seed.or(cfg.seed).unwrap_or(0);
    let delta_fixed = c.delta_fixed.or(cfg.delta_fixed).unwrap_or(c.category == Category::Deletion);
    let hyper = cfg.hyper_for(&stats);
    let chains = args.chains.or(cfg.chains).unwrap_or(1);
    let hier = args.hier;
    let chain = if hier {
        cfg.hier_chain.resolve(ChainConfig::hierarchical_default(seed), seed)
    } else {
        cfg.chain.resolve(ChainConfig::single_default(seed), seed)
    };
    let scheme_text = args.periods.clone().or(cfg.periods.clone()).unwrap_or_else(|| "monthly".into());

    let mut problems = Vec::new();
    if let Err(e) = chain.validate() {
        problems.push(e.to_string());
    }
    if let Err(e) = hyper.validate() {
        problems.push(e.to_string());
    }
    if chains == 0 {
        problems.push("--chains must be at least 1".into());
    }
    if stats.num_steps() == 0 {
        problems.push("the statistics contain no informative steps".into());
    }
    let mut split = None;
    if hier {
        match scheme_text.parse::<PeriodScheme>().and_then(|s| stats.split_periods(s)) {
            Ok((periods, _)) if periods.len() < 2 => {
                problems.push(prefattach::Error::SinglePeriod(periods.len()).to_string())
            }
            Ok(parts) => split = Some(parts),
            Err(e) => problems.push(e.to_string()),
        }
    }
    if !problems.is_empty() {
        return Err(CliError::Invalid(problems));
    }

    create_dir(&c.out)?;
    let mut extra = BTreeMap::new();
    extra.insert("model", json!(if hier { "hierarchical" } else { "single" }));
    extra.insert("pref", json!(args.pref.to_string()));
    extra.insert("chains", json!(chains));
    if hier {
        extra.insert("periods", json!(scheme_text));
    }
    let resolved = Resolved {
        command: "fit",
        stats: c.stats.display().to_string(),
        category: c.category,
        delta_fixed,
        seed,
        extra,
        chain: chain.clone(),
        hyper,
    };
    let hash = resolved.record(&c.out)?;

    let seeds: Vec<u64> = (0..chains as u64).map(|i| seed.wrapping_add(i)).collect();
    let runs: Vec<ChainResult> = seeds
        .par_iter()
        .map(|&s| {
            let chain = ChainConfig { seed: s, ..chain.clone() };
            match &split {
                Some((_, parts)) => fit_hier(parts, args.pref, delta_fixed, &hyper, &chain, HierOptions::default()),
                None => fit_single(&stats, args.pref, delta_fixed, &hyper, &chain),
            }
        })
        .collect::<prefattach::Result<_>>()?;

    for (i, run) in runs.iter().enumerate() {
        let name = if chains == 1 { "trace.csv".to_string() } else { format!("trace_chain{}.csv", i + 1) };
        run.write_trace_csv(create(&c.out.join(name))?)?;
    }
    let merged = ChainResult::merge(&runs)?;
    let mut parameters = merged.summary();
    for (name, s) in parameters.iter_mut() {
        s.ess = merged.ess.get(name).copied().flatten();
    }
    let mut summary = json!({
        "command": "fit",
        "model": if hier { "hierarchical" } else { "single" },
        "category": c.category,
        "pref": args.pref.to_string(),
        "delta_fixed": delta_fixed,
        "config_hash": hash,
        "seeds": seeds,
        "draws": merged.len(),
        "parameters": parameters,
        "acceptance": merged.acceptance,
        "warnings": merged.warnings,
    });
    if let Some((periods, parts)) = &split {
        let rows: Vec<Value> = periods
            .iter()
            .zip(parts)
            .map(|(p, st)| {
                let dates: Vec<_> = st.steps().iter().filter_map(|s| s.date).collect();
                json!({
                    "period": p.index + 1,
                    "first_t": p.time_indices.first(),
                    "last_t": p.time_indices.last(),
                    "first_date": dates.first(),
                    "last_date": dates.last(),
                    "steps": st.num_steps(),
                })
            })
            .collect();
        summary["periods"] = json!(rows);
    }
    write_json(&c.out.join("summary.json"), &summary)
}

fn select(args: SelectArgs) -> Result<()> {
    let c = &args.common;
    let cfg = RunConfig::load(c.config.as_deref())?;
    let stats = load_stats(&c.stats, c.category)?;
    let seed = c.seed.or(cfg.seed).unwrap_or(0);
    let delta_fixed = c.delta_fixed.or(cfg.delta_fixed).unwrap_or(c.category == Category::Deletion);
    let hyper = cfg.hyper_for(&stats);
    let chain = cfg.chain.resolve(ChainConfig::single_default(seed), seed);
    let p = args.p.or(cfg.selection.p).unwrap_or(0.5);
    let auto_p = args.auto_p.or(cfg.selection.auto_p).unwrap_or(false);
    let pilot_draws = args.pilot_draws.or(cfg.selection.pilot_draws).unwrap_or(1000);
    let linking = args.linking.or(cfg.selection.linking).unwrap_or_default();

    let mut problems = Vec::new();
    if !(p > 0.0 && p < 1.0) {
        problems.push(format!("p must lie in (0, 1), got {p}"));
    }
    if pilot_draws < 100 {
        problems.push(format!("the pilot needs at least 100 draws, got {pilot_draws}"));
    }
    for e in [chain.validate().err(), hyper.validate().err()].into_iter().flatten() {
        problems.push(e.to_string());
    }
    if stats.num_steps() == 0 {
        problems.push("the statistics contain no informative steps".into());
    }
    if !problems.is_empty() {
        return Err(CliError::Invalid(problems));
    }

    create_dir(&c.out)?;
    let mut plan = SelectionPlan::new(p, auto_p, delta_fixed, pilot_draws, chain.clone());
    plan.linking = linking;
    let mut extra = BTreeMap::new();
    extra.insert("p", json!(p));
    extra.insert("auto_p", json!(auto_p));
    extra.insert("pilot_draws", json!(pilot_draws));
    extra.insert("linking", json!(linking));
    let resolved = Resolved {
        command: "select",
        stats: c.stats.display().to_string(),
        category: c.category,
        delta_fixed,
        seed,
        extra,
        chain,
        hyper,
    };
    let hash = resolved.record(&c.out)?;

    let run = run_selection(&stats, &plan, &hyper)?;
    let res = &run.result;
    let mut w = create(&c.out.join("r_trace.csv"))?;
    let io = |source| CliError::Io { path: c.out.join("r_trace.csv"), source };
    writeln!(w, "draw,r").map_err(io)?;
    for (i, r) in res.r_trace.iter().enumerate() {
        writeln!(w, "{},{r}", i + 1).map_err(io)?;
    }
    w.flush().map_err(io)?;
    res.power.write_trace_csv(create(&c.out.join("trace_power.csv"))?)?;
    res.piecewise.write_trace_csv(create(&c.out.join("trace_piecewise.csv"))?)?;
    run.pilot_piecewise.write_trace_csv(create(&c.out.join("trace_pilot_piecewise.csv"))?)?;
    run.pilot_power.write_trace_csv(create(&c.out.join("trace_pilot_power.csv"))?)?;

    let report = json!({
        "command": "select",
        "category": c.category,
        "delta_fixed": delta_fixed,
        "config_hash": hash,
        "posterior_prob_r0": res.posterior_prob_r0(),
        "posterior_prob_r1": res.posterior_prob_r1,
        "bayes_factor": res.bayes_factor.value(),
        "bound_flag": res.bayes_factor.bound_flag(),
        "bayes_factor_text": res.bayes_factor.to_string(),
        "mc_interval_95": res.mc_interval.map(|(lo, hi)| json!([lo, hi])),
        "r_ess": res.r_ess,
        "p": res.p,
        "p_history": run.p_history,
        "pseudoprior": res.pseudoprior,
        "draws": res.r_trace.len(),
        "linking": linking,
        "seeds": {
            "pilot_piecewise": plan.pilot.seed,
            "pilot_power": plan.pilot.seed.wrapping_add(1),
            "tuning": plan.tuning.seed,
            "chain": plan.chain.seed,
        },
        "warnings": res.warnings,
    });
    write_json(&c.out.join("selection.json"), &report)
}

fn simulate(args: SimulateArgs) -> Result<()> {
    require_file(&args.config)?;
    let text = fs::read_to_string(&args.config).map_err(|source| CliError::Io { path: args.config.clone(), source })?;
    let mut cfg: SimConfig =
        toml::from_str(&text).map_err(|e| CliError::Usage(format!("config {}: {e}", args.config.display())))?;
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    let allocation =
        if args.allocation == "multinomial" { Allocation::Multinomial } else { Allocation::IndependentPoisson };
    let (log, _) = simulate_with_draws(&cfg, allocation)?;
    if let Some(dir) = args.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    log.write_csv(&args.out)?;
    log::info!("{} events over {} steps", log.events().len(), log.num_steps());
    Ok(())
}

fn diagnose(args: DiagnoseArgs) -> Result<()> {
    require_file(&args.events)?;
    let bins = GeometricBins::new(args.bin_ratio)?;
    let types = match &args.types {
        Some(t) => check_types(&args.events, t)?,
        None => {
            let file = File::open(&args.events).map_err(|source| CliError::Io { path: args.events.clone(), source })?;
            read_events(std::io::BufReader::new(file))?.into_iter().map(|(_, e)| e.dep_type).collect()
        }
    };
    if types.is_empty() {
        return Err(CliError::Usage(format!("{} contains no events", args.events.display())));
    }
    let log = EvolutionLog::ingest(&args.events, &types)?;
    if log.num_steps() == 0 {
        return Err(CliError::Usage("the log has no changes to diagnose".into()));
    }
    let t = match args.date {
        Some(d) => log
            .time_index_at_or_before(d)
            .filter(|&t| t > 0)
            .ok_or_else(|| CliError::Usage(format!("no change on or before {d} after the first snapshot")))?,
        None => log.num_steps(),
    };
    let panel = IncrementPanel::extract(&log);
    create_dir(&args.out)?;

    let table = diagnostics::smoothed_averages(&panel, args.category, t, bins)?;
    diagnostics::write_bins_csv(create(&args.out.join("smoothed.csv"))?, &table)?;
    let free = diagnostics::free_fit(&table).ok();
    let slope1 = diagnostics::slope1_intercept(&table).ok();
    let residuals: Option<Vec<f64>> = slope1.map(|c| {
        table.iter().filter(|r| !r.zero_mean).map(|r| r.mean_increment.ln() - r.k.ln() - c).collect()
    });

    let (in_deg, out_deg) = log.degrees_at(t);
    let survival = diagnostics::survival_plot_data(&in_deg);
    if let Ok(s) = &survival {
        diagnostics::write_survival_csv(create(&args.out.join("survival.csv"))?, s)?;
    }
    let correlation = diagnostics::degree_correlation(&in_deg, &out_deg);

    let summary = json!({
        "command": "diagnose",
        "date": log.timeline()[t],
        "t": t,
        "category": args.category,
        "bin_ratio": args.bin_ratio,
        "bins": table.len(),
        "zero_mean_bins": table.iter().filter(|r| r.zero_mean).count(),
        "free_fit": free.map(|(slope, intercept)| json!({"slope": slope, "intercept": intercept})),
        "slope1_intercept": slope1,
        "slope1_residuals": residuals.map(|r| {
            let n = r.len() as f64;
            let rms = (r.iter().map(|v| v * v).sum::<f64>() / n).sqrt();
            json!({"count": r.len(), "rms": rms, "max_abs": r.iter().fold(0.0f64, |m, v| m.max(v.abs()))})
        }),
        "survival_fit": survival.as_ref().ok().and_then(|s| s.fit.clone()),
        "survival_error": survival.as_ref().err().map(|e| e.to_string()),
        "pearson_in_out": correlation.as_ref().ok(),
        "correlation_error": correlation.as_ref().err().map(|e| e.to_string()),
    });
    write_json(&args.out.join("summary.json"), &summary)
}
