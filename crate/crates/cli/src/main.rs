use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use tutorsim::analytics::{
    accuracy_table, learning_curve, posttest_effect, tutor_effect, write_curve_csv, CurveAxis, Interval,
    RegressionSummary,
};
use tutorsim::experiment::{
    plan_study, read_problem_set, run_plans, write_problem_set, Condition, ExperimentConfig, Phase, Study,
    TransactionLog,
};

/// Simulated-student experiments on fraction and box-and-arrows tutors.
#[derive(Parser)]
#[command(name = "tutorsim", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a study and write transactions, curves, regressions, and a manifest.
    Run {
        #[command(flatten)]
        study: StudyArgs,
        /// Worker threads (output does not depend on this).
        #[arg(long)]
        jobs: Option<usize>,
        /// Output directory. Defaults to $TUTORSIM_OUT/<study>-seed<seed>.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Replay a problem set written by gen-problems instead of generating one.
        #[arg(long)]
        problems: Option<PathBuf>,
        /// Interval used for learning-curve CIs.
        #[arg(long, value_parser = ["normal", "wilson"], default_value = "normal")]
        interval: String,
    },
    /// Summarize a transactions CSV.
    Report { log: PathBuf },
    /// Generate the problem set a run would use, one JSON record per line.
    GenProblems {
        #[command(flatten)]
        study: StudyArgs,
        /// Destination file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct StudyArgs {
    /// `fractions`, `box-arrows`, or a path to a TOML config or run manifest.
    study: String,
    /// TOML config or manifest.json applied before command-line flags.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    agents: Option<usize>,
    #[arg(long)]
    replications: Option<usize>,
}

/// Failure classes mapped to exit codes.
enum Failure {
    Usage(anyhow::Error),
    Simulation(anyhow::Error),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Simulation(_) => 2,
        }
    }
}

fn usage(e: anyhow::Error) -> Failure {
    Failure::Usage(e)
}

fn sim(e: anyhow::Error) -> Failure {
    Failure::Simulation(e)
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    seed: u64,
    jobs: Option<usize>,
    config: &'a ExperimentConfig,
    problems: Option<String>,
    outputs: Vec<String>,
    duration_secs: f64,
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
    let result = match cli.command {
        Command::Run {
            study,
            jobs,
            out,
            problems,
            interval,
        } => cmd_run(&study, jobs, out, problems, &interval),
        Command::Report { log } => cmd_report(&log),
        Command::GenProblems { study, out } => cmd_gen_problems(&study, out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let code = f.code();
            let (Failure::Usage(e) | Failure::Simulation(e)) = f;
            eprintln!("error: {e:#}");
            ExitCode::from(code)
        }
    }
}

/// Deep-merges `over` into `base`; tables merge key by key, anything else
/// is replaced.
fn merge(base: &mut toml::Value, over: toml::Value) {
    match (base, over) {
        (toml::Value::Table(b), toml::Value::Table(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

/// Reads a TOML config, or the `config` table of a JSON run manifest.
fn read_config_file(path: &Path) -> Result<toml::Value> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    if path.extension().is_some_and(|e| e == "json") {
        let manifest: serde_json::Value =
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        let config = manifest
            .get("config")
            .ok_or_else(|| anyhow!("{} has no `config` entry", path.display()))?;
        let value: toml::Value = serde_json::from_value(config.clone())?;
        Ok(value)
    } else {
        Ok(toml::from_str::<toml::Table>(&text)
            .with_context(|| format!("parsing {}", path.display()))?
            .into())
    }
}

fn resolve_config(args: &StudyArgs) -> Result<ExperimentConfig> {
    let mut files = Vec::new();
    let study = match args.study.parse::<Study>() {
        Ok(s) => Some(s),
        Err(_) if Path::new(&args.study).exists() => {
            files.push(read_config_file(Path::new(&args.study))?);
            None
        }
        Err(e) => bail!(e),
    };
    if let Some(path) = &args.config {
        files.push(read_config_file(path)?);
    }
    let study = match study {
        Some(s) => s,
        None => files
            .iter()
            .rev()
            .find_map(|f| f.get("study").and_then(|v| v.as_str()).map(str::to_string))
            .ok_or_else(|| anyhow!("config does not name a study"))?
            .parse::<Study>()
            .map_err(|e| anyhow!(e))?,
    };
    let mut value = toml::Value::try_from(ExperimentConfig::recipe(study))?;
    for f in files {
        merge(&mut value, f);
    }
    let mut cfg: ExperimentConfig = value.try_into().context("invalid config")?;
    if cfg.study != study {
        bail!("config is for {}, but {} was requested", cfg.study, study);
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(n) = args.agents {
        cfg.n_agents = n;
    }
    if let Some(r) = args.replications {
        cfg.replications = r;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn default_out(cfg: &ExperimentConfig) -> PathBuf {
    let root = std::env::var_os("TUTORSIM_OUT")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("runs"));
    root.join(format!("{}-seed{}", cfg.study, cfg.seed))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

fn cmd_run(
    args: &StudyArgs,
    jobs: Option<usize>,
    out: Option<PathBuf>,
    problems: Option<PathBuf>,
    interval: &str,
) -> Result<(), Failure> {
    let started = Instant::now();
    let cfg = resolve_config(args).map_err(usage)?;
    if jobs == Some(0) {
        return Err(usage(anyhow!("--jobs must be at least 1")));
    }
    let interval = if interval == "wilson" {
        Interval::Wilson
    } else {
        Interval::Normal
    };
    let plans = match &problems {
        Some(path) => {
            let file = File::open(path)
                .with_context(|| format!("opening {}", path.display()))
                .map_err(usage)?;
            read_problem_set(BufReader::new(file)).map_err(|e| usage(e.into()))?
        }
        None => plan_study(&cfg).map_err(|e| sim(e.into()))?,
    };
    let log = run_plans(&plans, &cfg.agent, jobs).map_err(|e| sim(e.into()))?;

    let dir = out.unwrap_or_else(|| default_out(&cfg));
    fs::create_dir_all(&dir)
        .with_context(|| format!("creating {}", dir.display()))
        .map_err(sim)?;
    let write_all = || -> Result<Vec<String>> {
        let mut outputs = Vec::new();
        let path = dir.join("transactions.csv");
        log.write_csv(create(&path)?)?;
        outputs.push("transactions.csv".to_string());

        let (phase_log, axis) = match cfg.study {
            Study::Fractions => (log.clone(), CurveAxis::Position),
            Study::BoxArrows => (log.hard_only(), CurveAxis::Opportunity),
        };
        let curve = learning_curve(&phase_log, Phase::Tutor, axis, interval);
        write_curve_csv(&curve, create(&dir.join("curves.csv"))?)?;
        outputs.push("curves.csv".to_string());

        let summaries = regressions(&log, cfg.study);
        let mut text = String::new();
        let mut fitted = Vec::new();
        for (rep, kind, s) in &summaries {
            match s {
                Ok(s) => {
                    text.push_str(&format!("replication {rep}, "));
                    text.push_str(&s.to_text());
                    let mut s = s.clone();
                    s.model = format!("rep{rep}:{kind}");
                    fitted.push(s);
                }
                Err(e) => text.push_str(&format!("replication {rep}, {kind}: not estimable: {e}\n")),
            }
            text.push('\n');
        }
        fs::write(dir.join("regression.txt"), text)?;
        RegressionSummary::write_csv(&fitted, create(&dir.join("regression.csv"))?)?;
        outputs.push("regression.txt".to_string());
        outputs.push("regression.csv".to_string());
        Ok(outputs)
    };
    let outputs = write_all().map_err(sim)?;
    let manifest = Manifest {
        tool: "tutorsim",
        version: env!("CARGO_PKG_VERSION"),
        seed: cfg.seed,
        jobs,
        config: &cfg,
        problems: problems.map(|p| p.display().to_string()),
        outputs,
        duration_secs: started.elapsed().as_secs_f64(),
    };
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| sim(e.into()))?;
    fs::write(dir.join("manifest.json"), text + "\n").map_err(|e| sim(e.into()))?;
    println!("{}", dir.display());
    Ok(())
}

type Fits = Vec<(
    usize,
    &'static str,
    Result<RegressionSummary, tutorsim::analytics::RegressionError>,
)>;

/// Per-replication tutor and assessment models.
fn regressions(log: &TransactionLog, study: Study) -> Fits {
    let mut out = Vec::new();
    for rep in log.replications() {
        let part = log.replication(rep);
        out.push((rep, "tutor", tutor_effect(&part, study)));
        let kind = match study {
            Study::Fractions => "posttest",
            Study::BoxArrows => "hard",
        };
        out.push((rep, kind, posttest_effect(&part, study)));
    }
    out
}

fn infer_study(log: &TransactionLog) -> Result<Study> {
    let first = log.records.first().ok_or_else(|| anyhow!("the log has no rows"))?;
    Ok(match first.condition {
        Condition::Blocked | Condition::Interleaved => Study::Fractions,
        Condition::Constrained | Condition::Unconstrained => Study::BoxArrows,
    })
}

fn cmd_report(path: &Path) -> Result<(), Failure> {
    let file = File::open(path)
        .with_context(|| format!("opening {}", path.display()))
        .map_err(usage)?;
    let log = TransactionLog::read_csv(BufReader::new(file))
        .with_context(|| format!("reading {}", path.display()))
        .map_err(usage)?;
    let study = infer_study(&log).map_err(usage)?;
    let stdout = std::io::stdout();
    let mut w = stdout.lock();
    let mut emit = || -> std::io::Result<()> {
        writeln!(w, "study: {study}")?;
        writeln!(w, "replications: {}", log.replications().len())?;
        if study == Study::BoxArrows {
            writeln!(w, "scoring: hard problems only")?;
        }
        writeln!(w)?;
        writeln!(w, "{:<14} {:<9} {:>8} {:>9}", "condition", "phase", "n", "accuracy")?;
        for row in accuracy_table(&log, study) {
            writeln!(
                w,
                "{:<14} {:<9} {:>8} {:>8.1}%",
                row.condition,
                row.phase,
                row.n,
                100.0 * row.accuracy
            )?;
        }
        writeln!(w)?;
        let fits = regressions(&log, study);
        for kind in ["tutor", "posttest", "hard"] {
            let of_kind: Vec<_> = fits.iter().filter(|(_, k, _)| *k == kind).collect();
            if of_kind.is_empty() {
                continue;
            }
            let (mut below, mut above, mut sig, mut failed) = (0, 0, 0, 0);
            let mut term = format!("Condition ({})", Condition::pair(study).1.label());
            for (_, _, s) in &of_kind {
                match s.as_ref().ok().and_then(|s| s.condition().cloned()) {
                    Some(t) => {
                        if t.odds_ratio < 1.0 {
                            below += 1;
                        } else {
                            above += 1;
                        }
                        if t.p_value < 0.05 {
                            sig += 1;
                        }
                        term = t.term;
                    }
                    None => failed += 1,
                }
            }
            writeln!(
                w,
                "{kind} model, {term}: OR < 1 in {below}, OR > 1 in {above}, p < .05 in {sig} of {} replications{}",
                of_kind.len(),
                if failed > 0 {
                    format!(" ({failed} not estimable)")
                } else {
                    String::new()
                }
            )?;
        }
        Ok(())
    };
    emit().map_err(|e| sim(e.into()))
}

fn cmd_gen_problems(args: &StudyArgs, out: Option<PathBuf>) -> Result<(), Failure> {
    let cfg = resolve_config(args).map_err(usage)?;
    let plans = plan_study(&cfg).map_err(|e| sim(e.into()))?;
    let result = match out {
        Some(path) => create(&path).and_then(|w| {
            let mut w = w;
            write_problem_set(&plans, &mut w)?;
            w.flush()?;
            Ok(())
        }),
        None => {
            let stdout = std::io::stdout();
            let mut w = BufWriter::new(stdout.lock());
            write_problem_set(&plans, &mut w)
                .and_then(|_| w.flush())
                .map_err(Into::into)
        }
    };
    result.map_err(sim)
}
