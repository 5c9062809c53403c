//! `flagsim`: run, sweep, and diagnose ribbon and flag coloring experiments.
//!
//! Settings come from an optional flat `key = value` file (`--config`) and
//! are overridden by flags. Exit status: 0 all assertions held, 1 usage
//! error, 2 validation failure, 3 timeout present.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use flagsim::experiment::{
    aggregate_csv, cmd_run, cmd_sweep, cmd_witness, diagnose_grid, diagnose_lowerbound, parse_settings,
    sweep_exit_code, tradeoff_csv, RunConfig, Settings, SweepConfig, EXIT_INVALID, EXIT_OK,
};

const EXIT_USAGE: u8 = 1;

#[derive(Parser, Debug)]
#[command(name = "flagsim", version, about = "Distributed ribbon and flag coloring experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run trials of one configuration and write a CSV report.
    Run(Flags),
    /// Run the Cartesian product of ranged settings (`8,16,32` or `2..5`).
    Sweep(Flags),
    /// Build the concentration-model witness pair (uses --a, --b, --eps, --alpha).
    Witness(Flags),
    /// Lower-bound scenario checks: line with --n/--k, grid with --a/--b/--k.
    Diagnose(Flags),
}

#[derive(Args, Debug, Default)]
struct Flags {
    /// Flat key = value settings file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    algo: Option<String>,
    #[arg(long)]
    n: Option<String>,
    #[arg(long)]
    a: Option<String>,
    #[arg(long)]
    b: Option<String>,
    #[arg(long)]
    k: Option<String>,
    #[arg(long)]
    alpha: Option<String>,
    #[arg(long)]
    eps: Option<String>,
    #[arg(long)]
    delta: Option<String>,
    #[arg(long)]
    sigma: Option<String>,
    /// Agent id, `sweep` (trial i starts at agent i mod n), or `random`.
    #[arg(long)]
    start: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    trials: Option<String>,
    #[arg(long)]
    jobs: Option<String>,
    /// Output file (run, witness, diagnose) or directory (sweep); stdout when absent.
    #[arg(long)]
    out: Option<String>,
    /// Also write `<out>.deliveries.jsonl` with every delivery.
    #[arg(long)]
    log_deliveries: bool,
}

impl Flags {
    fn settings(&self) -> Result<Settings, String> {
        let mut s = match &self.config {
            Some(p) => {
                let text = fs::read_to_string(p).map_err(|e| format!("cannot read {}: {e}", p.display()))?;
                parse_settings(&text).map_err(|e| e.to_string())?
            }
            None => Settings::new(),
        };
        let pairs = [
            ("model", &self.model),
            ("algo", &self.algo),
            ("n", &self.n),
            ("a", &self.a),
            ("b", &self.b),
            ("k", &self.k),
            ("alpha", &self.alpha),
            ("eps", &self.eps),
            ("delta", &self.delta),
            ("sigma", &self.sigma),
            ("start", &self.start),
            ("seed", &self.seed),
            ("trials", &self.trials),
            ("jobs", &self.jobs),
            ("out", &self.out),
        ];
        for (key, v) in pairs {
            if let Some(v) = v {
                s.insert(key.to_string(), v.clone());
            }
        }
        if self.log_deliveries {
            s.insert("log-deliveries".into(), "true".into());
        }
        Ok(s)
    }
}

enum Failure {
    Usage(String),
    Io(String),
}

impl From<flagsim::Error> for Failure {
    fn from(e: flagsim::Error) -> Self {
        Failure::Usage(e.to_string())
    }
}

fn io(path: &Path) -> impl Fn(std::io::Error) -> Failure + '_ {
    move |e| Failure::Io(format!("{}: {e}", path.display()))
}

fn emit(out: Option<&str>, text: &str) -> Result<(), Failure> {
    match out {
        Some(p) => fs::write(p, text).map_err(io(Path::new(p))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn get<T: std::str::FromStr>(s: &Settings, key: &str, default: T) -> Result<T, Failure> {
    match s.get(key) {
        Some(v) => v.parse().map_err(|_| Failure::Usage(format!("cannot parse {key} = {v:?}"))),
        None => Ok(default),
    }
}

fn run(flags: &Flags) -> Result<i32, Failure> {
    let s = flags.settings().map_err(Failure::Usage)?;
    let out = s.get("out").cloned();
    let cfg = RunConfig::from_settings(&s)?;
    if cfg.log_deliveries && out.is_none() {
        return Err(Failure::Usage("--log-deliveries needs --out".into()));
    }
    let report = cmd_run(&cfg)?;
    emit(out.as_deref(), &report.to_csv()?)?;
    if let (true, Some(o)) = (cfg.log_deliveries, &out) {
        let path = PathBuf::from(format!("{o}.deliveries.jsonl"));
        fs::write(&path, report.deliveries_jsonl()).map_err(io(&path))?;
    }
    Ok(report.exit_code())
}

fn sweep(flags: &Flags) -> Result<i32, Failure> {
    let mut s = flags.settings().map_err(Failure::Usage)?;
    let dir = PathBuf::from(s.remove("out").ok_or_else(|| Failure::Usage("sweep needs --out <dir>".into()))?);
    let cfg = SweepConfig::from_settings(&s)?;
    fs::create_dir_all(&dir).map_err(io(&dir))?;
    let cells = cmd_sweep(&cfg)?;
    for cell in &cells {
        let path = dir.join(format!("{}.csv", cell.name));
        fs::write(&path, cell.report.to_csv()?).map_err(io(&path))?;
    }
    let agg = dir.join("aggregate.csv");
    fs::write(&agg, aggregate_csv(&cells)?).map_err(io(&agg))?;
    if let Some(t) = tradeoff_csv(&cells)? {
        let path = dir.join("tradeoff.csv");
        fs::write(&path, t).map_err(io(&path))?;
    }
    Ok(sweep_exit_code(&cells))
}

fn witness(flags: &Flags) -> Result<i32, Failure> {
    let s = flags.settings().map_err(Failure::Usage)?;
    let report = cmd_witness(get(&s, "a", 3.0)?, get(&s, "b", 1.0)?, get(&s, "eps", 0.0833)?, get(&s, "alpha", 1.0)?)?;
    let json = serde_json::to_string_pretty(&report).map_err(|e| Failure::Io(e.to_string()))? + "\n";
    emit(s.get("out").map(String::as_str), &json)?;
    Ok(if report.max_residual < 1e-9 { EXIT_OK } else { EXIT_INVALID })
}

fn diagnose(flags: &Flags) -> Result<i32, Failure> {
    let s = flags.settings().map_err(Failure::Usage)?;
    let k: u8 = get(&s, "k", 3)?;
    let (json, pass) = if s.contains_key("a") || s.contains_key("b") {
        let r = diagnose_grid(get(&s, "a", 8)?, get(&s, "b", 8)?, k)?;
        (serde_json::to_string_pretty(&r), r.pass)
    } else {
        let r = diagnose_lowerbound(get(&s, "n", 30)?, k)?;
        (serde_json::to_string_pretty(&r), r.pass)
    };
    let json = json.map_err(|e| Failure::Io(e.to_string()))? + "\n";
    emit(s.get("out").map(String::as_str), &json)?;
    Ok(if pass { EXIT_OK } else { EXIT_INVALID })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { 0 });
        }
    };
    let result = match &cli.command {
        Command::Run(f) => run(f),
        Command::Sweep(f) => sweep(f),
        Command::Witness(f) => witness(f),
        Command::Diagnose(f) => diagnose(f),
    };
    match result {
        Ok(code) => ExitCode::from(code as u8),
        Err(Failure::Usage(m)) => {
            eprintln!("flagsim: {m}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(Failure::Io(m)) => {
            eprintln!("flagsim: {m}");
            ExitCode::from(EXIT_USAGE)
        }
    }
}
