//! `playerkern` command-line interface.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.

use std::ffi::OsString;
use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand, ValueEnum};

use playerkern::baselines::{parse_odds, EloModel, EloState, DEFAULT_HOME_ADVANTAGE, DEFAULT_K_FACTOR, DEFAULT_RATING};
use playerkern::data::{parse_dataset, share_registry, write_dataset, Dataset};
use playerkern::eval::{self, GpPredictor, OddsPredictor, Predictor, UniformPredictor};
use playerkern::gp::{self, FitSettings, Hyperparams, LaplacePosterior};
use playerkern::kernel::{export_heatmap, KernelParams};
use playerkern::sim::{simulate_dataset, SimConfig};

#[derive(Parser, Debug)]
#[command(name = "playerkern", version, about = "Player-kernel GP classification for win/draw/loss prediction")]
struct Cli {
    /// TOML file of default flags for the subcommand (`sigma2 = 0.5`,
    /// `optimize = true`, ...). Command-line flags take precedence.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// More diagnostics on standard error (repeat for more).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fit the GP classifier to a match file and save the posterior.
    Train(TrainArgs),
    /// Predict win/draw/loss probabilities with a saved model.
    Predict(PredictArgs),
    /// Score models on a test set by average log loss.
    Evaluate(EvaluateArgs),
    /// Generate a synthetic league with known player skills.
    Simulate(SimulateArgs),
    /// Export the kernel-matrix magnitude grid of a match file.
    Heatmap(HeatmapArgs),
    /// Run Elo over a match file and report ratings and the draw margin.
    EloFit(EloArgs),
}

#[derive(Args, Debug, Clone)]
struct GpArgs {
    /// Player-skill variance.
    #[arg(long, default_value_t = 1.0)]
    sigma2: f64,
    /// Home-advantage variance.
    #[arg(long, default_value_t = 1.0)]
    sigma2_home: f64,
    /// Rao–Kupper draw margin.
    #[arg(long, default_value_t = 0.5)]
    alpha: f64,
    /// Maximize the Laplace evidence over the three values above, starting from them.
    #[arg(long)]
    optimize: bool,
    /// Evidence evaluations allowed to the search.
    #[arg(long, default_value_t = 200)]
    budget: usize,
    /// Worker threads for kernel assembly.
    #[arg(long, default_value_t = 1)]
    threads: usize,
}

#[derive(Args, Debug, Clone)]
struct EloFlags {
    /// Elo k-factor.
    #[arg(long, default_value_t = DEFAULT_K_FACTOR)]
    k_factor: f64,
    /// Rating points added to the home side.
    #[arg(long, default_value_t = DEFAULT_HOME_ADVANTAGE)]
    home_advantage: f64,
    /// Rating of a team before its first match.
    #[arg(long, default_value_t = DEFAULT_RATING)]
    initial_rating: f64,
}

#[derive(Args, Debug)]
struct TrainArgs {
    /// Training matches (CSV).
    #[arg(long)]
    train: PathBuf,
    /// Where to write the fitted model.
    #[arg(long)]
    model_out: PathBuf,
    #[command(flatten)]
    gp: GpArgs,
}

#[derive(Args, Debug)]
struct PredictArgs {
    /// Model written by `train`.
    #[arg(long)]
    model: PathBuf,
    /// Matches to predict (CSV); the outcome column is ignored.
    #[arg(long)]
    test: PathBuf,
    /// Output CSV (default: standard output).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum ModelKind {
    Gp,
    Elo,
    Odds,
    Random,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    test: PathBuf,
    /// Models to score, comma separated.
    #[arg(long, value_enum, value_delimiter = ',', default_value = "gp,elo,random")]
    models: Vec<ModelKind>,
    /// Betting odds (`match_id,odds_w,odds_d,odds_l`), required for the odds model.
    #[arg(long)]
    odds: Option<PathBuf>,
    /// Floor zero probabilities at 1e-15 instead of failing.
    #[arg(long)]
    clip: bool,
    /// Write per-match predictions and losses to this CSV.
    #[arg(long)]
    per_match: Option<PathBuf>,
    /// Write the summary table as CSV to this path.
    #[arg(long)]
    summary: Option<PathBuf>,
    #[command(flatten)]
    gp: GpArgs,
    #[command(flatten)]
    elo: EloFlags,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[arg(long, default_value_t = SimConfig::default().seed)]
    seed: u64,
    /// Output CSV (default: standard output).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write the true player skills (`player,skill`).
    #[arg(long)]
    truth_out: Option<PathBuf>,
    #[arg(long, default_value_t = SimConfig::default().num_players)]
    num_players: usize,
    #[arg(long, default_value_t = SimConfig::default().num_teams)]
    num_teams: usize,
    #[arg(long, default_value_t = SimConfig::default().matches_per_team)]
    matches_per_team: usize,
    /// Variance of the true player skills.
    #[arg(long, default_value_t = SimConfig::default().true_sigma2)]
    true_sigma2: f64,
    #[arg(long, default_value_t = SimConfig::default().true_alpha)]
    true_alpha: f64,
    /// Latent bonus of the home side.
    #[arg(long, default_value_t = SimConfig::default().true_home)]
    true_home: f64,
    /// Date of the first round (YYYY-MM-DD).
    #[arg(long, default_value_t = SimConfig::default().start_date)]
    start_date: NaiveDate,
}

#[derive(Args, Debug)]
struct HeatmapArgs {
    /// Matches (CSV).
    #[arg(long)]
    data: PathBuf,
    /// Grid of |K| values.
    #[arg(long)]
    out: PathBuf,
    /// Competition blocks (`competition,start_row,end_row`, end exclusive).
    #[arg(long)]
    blocks: PathBuf,
    #[arg(long, default_value_t = 1.0)]
    sigma2: f64,
    #[arg(long, default_value_t = 1.0)]
    sigma2_home: f64,
}

#[derive(Args, Debug)]
struct EloArgs {
    #[arg(long)]
    train: PathBuf,
    /// Ratings CSV (default: standard output).
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    elo: EloFlags,
}

/// Failure that is the caller's fault rather than the data's.
#[derive(Debug)]
struct Usage(String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn usage<T>(msg: impl Into<String>) -> Result<T> {
    Err(Usage(msg.into()).into())
}

fn main() -> ExitCode {
    let argv: Vec<OsString> = std::env::args_os().collect();
    let argv = match with_config_flags(argv) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(1);
        }
    };
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    init_logging(cli.verbose);

    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => tracing::Level::WARN,
        1 => tracing::Level::INFO,
        _ => tracing::Level::DEBUG,
    };
    tracing_subscriber::fmt()
        .with_writer(io::stderr)
        .with_max_level(level)
        .with_target(false)
        .init();
}

fn exit_code(e: &anyhow::Error) -> u8 {
    if e.downcast_ref::<Usage>().is_some() {
        return 1;
    }
    match e.downcast_ref::<playerkern::Error>() {
        Some(err) if err.is_numerical() => 3,
        Some(playerkern::Error::InvalidParameter(_)) => 1,
        _ => 2,
    }
}

/// Splices the flags from `--config FILE` in right after the subcommand, so
/// anything given on the command line overrides them.
fn with_config_flags(mut argv: Vec<OsString>) -> Result<Vec<OsString>> {
    let mut path = None;
    for (i, a) in argv.iter().enumerate() {
        let s = a.to_string_lossy();
        if s == "--config" {
            path = argv.get(i + 1).map(PathBuf::from);
        } else if let Some(p) = s.strip_prefix("--config=") {
            path = Some(PathBuf::from(p));
        }
    }
    let Some(path) = path else { return Ok(argv) };
    let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    let table: toml::Table = text.parse().with_context(|| format!("parsing {}", path.display()))?;

    let mut flags = Vec::new();
    for (key, value) in table {
        let flag = format!("--{}", key.replace('_', "-"));
        match value {
            toml::Value::Boolean(true) => flags.push(flag),
            toml::Value::Boolean(false) => {}
            toml::Value::String(s) => flags.extend([flag, s]),
            toml::Value::Integer(i) => flags.extend([flag, i.to_string()]),
            toml::Value::Float(f) => flags.extend([flag, f.to_string()]),
            toml::Value::Array(items) => {
                let joined: Vec<String> = items
                    .iter()
                    .map(|v| v.as_str().map_or_else(|| v.to_string(), str::to_owned))
                    .collect();
                flags.extend([flag, joined.join(",")]);
            }
            other => bail!("{}: unsupported value for `{key}`: {other}", path.display()),
        }
    }

    let subcommand = argv
        .iter()
        .enumerate()
        .skip(1)
        .find(|(_, a)| !a.to_string_lossy().starts_with('-') && a.as_os_str() != path.as_os_str())
        .map(|(i, _)| i);
    if let Some(i) = subcommand {
        argv.splice(i + 1..i + 1, flags.into_iter().map(OsString::from));
    }
    Ok(argv)
}

fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Train(a) => train(a),
        Command::Predict(a) => predict(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Simulate(a) => simulate(a),
        Command::Heatmap(a) => heatmap(a),
        Command::EloFit(a) => elo_fit(a),
    }
}

fn read_dataset(path: &Path) -> Result<Dataset> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    parse_dataset(BufReader::new(file)).with_context(|| format!("reading {}", path.display()))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(file))
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(create(p)?),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

impl GpArgs {
    fn validate(&self) -> Result<(Hyperparams, FitSettings)> {
        if self.threads == 0 {
            return usage("--threads must be at least 1");
        }
        if self.optimize && self.budget == 0 {
            return usage("--budget must be at least 1");
        }
        let hyper = Hyperparams::new(self.sigma2, self.sigma2_home, self.alpha)
            .map_err(|e| Usage(format!("bad GP hyperparameters: {e}")))?;
        let settings = FitSettings {
            threads: self.threads,
            ..FitSettings::default()
        };
        Ok((hyper, settings))
    }

    fn fit(&self, train: &Dataset) -> Result<LaplacePosterior> {
        let (mut hyper, settings) = self.validate()?;
        if self.optimize {
            hyper = gp::optimize_hyperparams_with(train, &hyper, self.budget, &settings)?;
            tracing::info!(
                "selected sigma2 = {:.6}, sigma2_home = {:.6}, alpha = {:.6}",
                hyper.kernel.sigma2,
                hyper.kernel.sigma2_home,
                hyper.draw.alpha()
            );
        }
        let post = gp::fit_with(train, &hyper, &settings)?;
        tracing::info!(
            "fitted {} matches in {} Newton steps, log evidence {:.6}",
            train.n(),
            post.iterations(),
            post.log_marginal()
        );
        Ok(post)
    }
}

impl EloFlags {
    fn state(&self) -> Result<EloState> {
        if !(self.k_factor.is_finite() && self.k_factor > 0.0) {
            return usage("--k-factor must be positive");
        }
        if !(self.home_advantage.is_finite() && self.home_advantage >= 0.0) {
            return usage("--home-advantage must be non-negative");
        }
        if !self.initial_rating.is_finite() {
            return usage("--initial-rating must be finite");
        }
        let mut state = EloState::new(self.k_factor, self.home_advantage);
        state.initial_rating = self.initial_rating;
        Ok(state)
    }
}

fn train(a: TrainArgs) -> Result<()> {
    a.gp.validate()?;
    let train = read_dataset(&a.train)?;
    let post = a.gp.fit(&train)?;
    gp::save_model(&post, train.registry(), create(&a.model_out)?)?;
    Ok(())
}

fn predict(a: PredictArgs) -> Result<()> {
    let file = File::open(&a.model).with_context(|| format!("opening {}", a.model.display()))?;
    let (post, registry) = gp::load_model(BufReader::new(file))?;
    let test = read_dataset(&a.test)?;
    let mut out = output(a.out.as_deref())?;
    writeln!(out, "match_id,p_w,p_d,p_l,mu,var")?;
    for rec in test.records() {
        let v = gp::vector_for_prediction(rec, &registry);
        let (mu, var) = post.predict_latent(&v);
        let p = gp::predictive_distribution(mu, var, &post.hyper().draw);
        writeln!(out, "{},{},{},{},{},{}", rec.match_id, p.p_w, p.p_d, p.p_l, mu, var)?;
    }
    out.flush()?;
    Ok(())
}

fn evaluate(a: EvaluateArgs) -> Result<()> {
    a.gp.validate()?;
    let elo_state = a.elo.state()?;
    if a.models.is_empty() {
        return usage("--models is empty");
    }
    let wants = |m: ModelKind| a.models.contains(&m);
    if wants(ModelKind::Odds) && a.odds.is_none() {
        return usage("the odds model needs --odds");
    }
    if !wants(ModelKind::Odds) && a.odds.is_some() {
        return usage("--odds given but the odds model is not in --models");
    }

    let (train, test) = share_registry(read_dataset(&a.train)?, read_dataset(&a.test)?);
    let mut models: Vec<Box<dyn Predictor>> = Vec::new();
    let mut seen = Vec::new();
    for &kind in &a.models {
        if seen.contains(&kind) {
            continue;
        }
        seen.push(kind);
        models.push(match kind {
            ModelKind::Gp => Box::new(GpPredictor {
                name: "gp".into(),
                posterior: a.gp.fit(&train)?,
                registry: train.registry().clone(),
            }),
            ModelKind::Elo => Box::new(EloModel::fit_from(&train, elo_state.clone())?),
            ModelKind::Odds => {
                let path = a.odds.as_ref().expect("checked above");
                let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
                let probs = parse_odds(BufReader::new(file)).with_context(|| format!("reading {}", path.display()))?;
                Box::new(OddsPredictor { probs })
            }
            ModelKind::Random => Box::new(UniformPredictor),
        });
    }
    let refs: Vec<&dyn Predictor> = models.iter().map(|m| m.as_ref()).collect();
    let reports = eval::evaluate(&refs, &train, &test, a.clip)?;

    let mut stdout = io::stdout().lock();
    stdout.write_all(eval::format_table(&reports).as_bytes())?;
    stdout.flush()?;
    if let Some(p) = &a.summary {
        eval::write_summary_csv(&reports, create(p)?)?;
    }
    if let Some(p) = &a.per_match {
        eval::write_per_match_csv(&reports, create(p)?)?;
    }
    Ok(())
}

fn simulate(a: SimulateArgs) -> Result<()> {
    let cfg = SimConfig {
        seed: a.seed,
        num_players: a.num_players,
        num_teams: a.num_teams,
        matches_per_team: a.matches_per_team,
        true_sigma2: a.true_sigma2,
        true_alpha: a.true_alpha,
        true_home: a.true_home,
        start_date: a.start_date,
    };
    cfg.validate().map_err(|e| Usage(e.to_string()))?;
    let sim = simulate_dataset(&cfg)?;
    let mut out = output(a.out.as_deref())?;
    write_dataset(&sim.dataset, &mut out)?;
    out.flush()?;

    if let Some(p) = &a.truth_out {
        let mut skills: Vec<_> = sim.truth.skills.iter().collect();
        skills.sort_by(|x, y| x.0.cmp(y.0));
        let mut w = create(p)?;
        writeln!(w, "player,skill")?;
        for (id, s) in skills {
            writeln!(w, "{},{}", id.as_str(), s)?;
        }
        w.flush()?;
    }
    tracing::info!("simulated {} matches", sim.dataset.n());
    Ok(())
}

fn heatmap(a: HeatmapArgs) -> Result<()> {
    let params = KernelParams::new(a.sigma2, a.sigma2_home).with_jitter(0.0);
    params.validate().map_err(|e| Usage(e.to_string()))?;
    let ds = read_dataset(&a.data)?;
    let mut grid = create(&a.out)?;
    let mut blocks = create(&a.blocks)?;
    export_heatmap(&ds, &params, &mut grid, &mut blocks)?;
    grid.flush()?;
    blocks.flush()?;
    Ok(())
}

fn elo_fit(a: EloArgs) -> Result<()> {
    let state = a.elo.state()?;
    let train = read_dataset(&a.train)?;
    let model = EloModel::fit_from(&train, state)?;
    let mut out = output(a.out.as_deref())?;
    writeln!(out, "team,rating")?;
    for (team, r) in model.state.ratings() {
        writeln!(out, "{team},{r}")?;
    }
    out.flush()?;
    eprintln!("draw margin alpha = {:.6}", model.draw.alpha());
    Ok(())
}
