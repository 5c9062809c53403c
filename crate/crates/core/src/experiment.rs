//! Experiment runner: configurations, trial fan-out, per-trial validation,
//! CSV reports, sweeps, and the lower-bound diagnostics.
//!
//! Exit codes: 0 when every bound and validity assertion held, 2 when one
//! failed, 3 when some trial timed out.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::concentration::{
    construct_witness, exact_concentration_color, run_concentration_ribbon, witness_certificate, Certificate,
    Measurement, WitnessPair,
};
use crate::error::{Error, Result};
use crate::flag::{Boost, UpDown};
use crate::hybrid::{tradeoff_trial, NoisyGradient, TradeoffRow, UncertaintyRule};
use crate::ribbon::{ApproxCount, BubbleSort, ExactCount, SilentCount};
use crate::sim::{simulate, trial_seed, Delivery, Program, RunOptions, Trace, Wake};
use crate::topology::{build_grid, build_line, Topology};
use crate::validate::{canonical_color, validate_eps_flag, validate_exact_flag, Coloring, FlagSpec};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 2;
pub const EXIT_TIMEOUT: i32 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Model {
    Message,
    Concentration,
    Hybrid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algo {
    ExactCount,
    SilentCount,
    BubbleSort,
    ApproxCount,
    UpDown,
    Boost,
    Concentration,
    Repair,
}

impl Algo {
    pub const ALL: [Algo; 8] = [
        Algo::ExactCount,
        Algo::SilentCount,
        Algo::BubbleSort,
        Algo::ApproxCount,
        Algo::UpDown,
        Algo::Boost,
        Algo::Concentration,
        Algo::Repair,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algo::ExactCount => "exact-count",
            Algo::SilentCount => "silent-count",
            Algo::BubbleSort => "bubble-sort",
            Algo::ApproxCount => "approx-count",
            Algo::UpDown => "up-down",
            Algo::Boost => "boost",
            Algo::Concentration => "concentration",
            Algo::Repair => "repair",
        }
    }

    pub fn model(self) -> Model {
        match self {
            Algo::Concentration => Model::Concentration,
            Algo::Repair => Model::Hybrid,
            _ => Model::Message,
        }
    }

    pub fn is_grid(self) -> bool {
        matches!(self, Algo::UpDown | Algo::Boost)
    }

    /// Whether the algorithm promises an exact coloring.
    pub fn is_exact(self) -> bool {
        matches!(self, Algo::ExactCount | Algo::SilentCount | Algo::BubbleSort | Algo::UpDown | Algo::Concentration)
    }
}

impl fmt::Display for Algo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algo {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Algo::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown algorithm {s:?}")))
    }
}

impl FromStr for Model {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "message" => Ok(Model::Message),
            "concentration" => Ok(Model::Concentration),
            "hybrid" => Ok(Model::Hybrid),
            _ => Err(Error::InvalidParameter(format!("unknown model {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum StartSpec {
    Agent(usize),
    /// Trial `i` starts at agent `i mod n`.
    Sweep,
    /// Drawn from the trial seed.
    Random,
}

impl FromStr for StartSpec {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sweep" => Ok(StartSpec::Sweep),
            "random" => Ok(StartSpec::Random),
            _ => s.parse().map(StartSpec::Agent).map_err(|_| {
                Error::InvalidParameter(format!("start must be an agent id, sweep, or random; got {s:?}"))
            }),
        }
    }
}

impl fmt::Display for StartSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StartSpec::Agent(i) => write!(f, "{i}"),
            StartSpec::Sweep => f.write_str("sweep"),
            StartSpec::Random => f.write_str("random"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub model: Model,
    pub algo: Algo,
    /// Line length; grids use `a × b`.
    pub n: usize,
    /// Grid columns, or the domain length for the concentration model.
    pub a: usize,
    /// Grid rows.
    pub b: usize,
    pub k: u8,
    pub alpha: f64,
    pub eps: Option<f64>,
    pub delta: Option<f64>,
    /// Hybrid noise level, absolute on a unit domain.
    pub sigma: f64,
    pub start: StartSpec,
    pub seed: u64,
    pub trials: u64,
    pub jobs: usize,
    pub log_deliveries: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            model: Model::Message,
            algo: Algo::ExactCount,
            n: 9,
            a: 1,
            b: 1,
            k: 3,
            alpha: 1.0,
            eps: None,
            delta: None,
            sigma: 0.0,
            start: StartSpec::Agent(0),
            seed: 0,
            trials: 1,
            jobs: 1,
            log_deliveries: false,
        }
    }
}

/// Flat `key = value` settings, as read from a config file or flags.
pub type Settings = BTreeMap<String, String>;

/// Parse a config file: one `key = value` per line, `#` starts a comment.
pub fn parse_settings(text: &str) -> Result<Settings> {
    let mut out = Settings::new();
    for (no, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::InvalidParameter(format!("line {}: expected key = value", no + 1)))?;
        out.insert(k.trim().replace('_', "-"), v.trim().to_string());
    }
    Ok(out)
}

const KEYS: [&str; 16] = [
    "model",
    "algo",
    "n",
    "a",
    "b",
    "k",
    "alpha",
    "eps",
    "delta",
    "sigma",
    "start",
    "seed",
    "trials",
    "jobs",
    "out",
    "log-deliveries",
];

fn parse_one<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.trim().parse().map_err(|_| Error::InvalidParameter(format!("cannot parse {key} = {v:?}")))
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v.trim() {
        "true" | "1" | "yes" | "" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(Error::InvalidParameter(format!("cannot parse {key} = {v:?} as a boolean"))),
    }
}

/// Comma-separated list, or an inclusive range `lo..hi` for integers.
pub fn parse_list<T: FromStr>(key: &str, v: &str) -> Result<Vec<T>> {
    let v = v.trim();
    if let Some((lo, hi)) = v.split_once("..") {
        let lo: u64 = parse_one(key, lo)?;
        let hi: u64 = parse_one(key, hi.trim_start_matches('='))?;
        return (lo..=hi).map(|x| parse_one(key, &x.to_string())).collect();
    }
    v.split(',').filter(|s| !s.trim().is_empty()).map(|s| parse_one(key, s)).collect()
}

impl RunConfig {
    /// Build from settings; unknown keys are rejected, `out` is ignored here.
    pub fn from_settings(s: &Settings) -> Result<Self> {
        for key in s.keys() {
            if !KEYS.contains(&key.as_str()) {
                return Err(Error::InvalidParameter(format!("unknown setting {key:?}")));
            }
        }
        let mut c = RunConfig::default();
        if let Some(v) = s.get("algo") {
            c.algo = v.parse()?;
        }
        c.model = match s.get("model") {
            Some(v) => v.parse()?,
            None => c.algo.model(),
        };
        for (key, v) in s {
            match key.as_str() {
                "n" => c.n = parse_one(key, v)?,
                "a" => c.a = parse_one(key, v)?,
                "b" => c.b = parse_one(key, v)?,
                "k" => c.k = parse_one(key, v)?,
                "alpha" => c.alpha = parse_one(key, v)?,
                "eps" => c.eps = Some(parse_one(key, v)?),
                "delta" => c.delta = Some(parse_one(key, v)?),
                "sigma" => c.sigma = parse_one(key, v)?,
                "start" => c.start = v.parse()?,
                "seed" => c.seed = parse_one(key, v)?,
                "trials" => c.trials = parse_one(key, v)?,
                "jobs" => c.jobs = parse_one(key, v)?,
                "log-deliveries" => c.log_deliveries = parse_bool(key, v)?,
                _ => {}
            }
        }
        if c.algo.is_grid() {
            c.n = c.a * c.b;
        }
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if self.algo.model() != self.model {
            return Err(Error::InvalidParameter(format!("{} does not run in the {:?} model", self.algo, self.model)));
        }
        if self.n == 0 || self.a == 0 || self.b == 0 {
            return Err(Error::InvalidSize("sizes must be positive".into()));
        }
        if self.k < 1 || (self.k < 2 && matches!(self.algo, Algo::ApproxCount | Algo::Boost)) {
            return Err(Error::InvalidParameter(format!("k = {} too small for {}", self.k, self.algo)));
        }
        if self.algo == Algo::Repair && self.k != 3 {
            return Err(Error::InvalidParameter("the hybrid model uses k = 3".into()));
        }
        if self.trials == 0 {
            return Err(Error::InvalidParameter("trials must be at least 1".into()));
        }
        if matches!(self.algo, Algo::ApproxCount | Algo::Boost) {
            let eps = self.eps.ok_or_else(|| Error::InvalidParameter(format!("{} needs eps", self.algo)))?;
            let limit = 1.0 / (2.0 * f64::from(self.k - 1));
            if !(eps > 0.0 && eps < limit) {
                return Err(Error::InvalidParameter(format!("eps must lie in (0, {limit}) for k = {}", self.k)));
            }
        }
        if let StartSpec::Agent(s) = self.start {
            if s >= self.agents() {
                return Err(Error::IndexOutOfRange { index: s, len: self.agents() });
            }
        }
        if !(self.sigma >= 0.0) {
            return Err(Error::InvalidParameter("sigma must be non-negative".into()));
        }
        Ok(())
    }

    pub fn agents(&self) -> usize {
        if self.algo.is_grid() {
            self.a * self.b
        } else {
            self.n
        }
    }

    fn start_for(&self, trial: u64, seed: u64) -> usize {
        match self.start {
            StartSpec::Agent(s) => s,
            StartSpec::Sweep => (trial % self.agents() as u64) as usize,
            StartSpec::Random => ChaCha8Rng::seed_from_u64(seed ^ 0x5eed).gen_range(0..self.agents()),
        }
    }

    /// Round bound the algorithm must meet, from the complexity table.
    pub fn round_bound(&self) -> Option<f64> {
        let (n, k) = (self.n as f64, f64::from(self.k));
        Some(match self.algo {
            Algo::ExactCount => (2.0 - 1.0 / k) * n + 2.0 * k,
            Algo::SilentCount | Algo::BubbleSort => 3.0 * n,
            Algo::ApproxCount => 2.0 * n,
            Algo::UpDown => self.b as f64 + (2.0 - 1.0 / k) * self.a as f64 + 2.0 * k,
            Algo::Boost => 3.0 * (self.a * self.b) as f64,
            Algo::Concentration => 0.0,
            Algo::Repair => return None,
        })
    }

    pub fn msg_bits_bound(&self) -> Option<f64> {
        match self.algo {
            Algo::SilentCount => Some(6.0 * self.n as f64),
            Algo::Concentration => Some(0.0),
            _ => None,
        }
    }

    pub fn memory_bound(&self) -> Option<f64> {
        let (l, lk) = ((self.n.max(1) as f64).log2(), f64::from(self.k).log2());
        match self.algo {
            Algo::ExactCount => Some(3.0 * l + lk + 16.0),
            Algo::SilentCount => Some(2.0 * l + lk + 16.0),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Ok,
    Timeout,
}

/// Outcome of one message, concentration, or grid trial.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialResult {
    pub trial: u64,
    pub start: usize,
    pub rounds: u64,
    pub msg_bits: u64,
    pub messages: u64,
    pub peak_mem_bits: u64,
    pub valid_exact: bool,
    pub valid_eps: Option<bool>,
    pub frac_correct: f64,
    pub status: Status,
    pub bounds_ok: bool,
    #[serde(skip)]
    pub deliveries: Vec<Delivery>,
}

fn run_program<P: Program>(p: &P, topo: &Topology, start: usize, opts: &RunOptions) -> Result<(Trace, Status)> {
    match simulate(p, topo, Wake::Start(start), opts) {
        Ok(out) => Ok((out.trace, Status::Ok)),
        Err(Error::Timeout { trace, .. }) => Ok((*trace, Status::Timeout)),
        Err(e) => Err(e),
    }
}

/// Run trial `trial` of a non-hybrid configuration.
pub fn run_trial(cfg: &RunConfig, trial: u64) -> Result<TrialResult> {
    let seed = trial_seed(cfg.seed, trial);
    let start = cfg.start_for(trial, seed);
    let (k, log) = (cfg.k, cfg.log_deliveries);
    let opts = if log { RunOptions::seeded(seed).logged() } else { RunOptions::seeded(seed) };
    let opts = &opts;
    let (trace, status) = match cfg.algo {
        Algo::ExactCount => run_program(&ExactCount::new(k, cfg.n), &build_line(cfg.n)?, start, opts)?,
        Algo::SilentCount => run_program(&SilentCount::new(k, cfg.n), &build_line(cfg.n)?, start, opts)?,
        Algo::BubbleSort => run_program(&BubbleSort::new(k), &build_line(cfg.n)?, start, opts)?,
        Algo::ApproxCount => {
            let p = ApproxCount::new(k, cfg.eps.unwrap_or(0.0), cfg.delta, cfg.n)?;
            run_program(&p, &build_line(cfg.n)?, start, opts)?
        }
        Algo::UpDown => {
            let p = UpDown::new(ExactCount::new(k, cfg.a), k);
            run_program(&p, &build_grid(cfg.a, cfg.b)?, start, opts)?
        }
        Algo::Boost => {
            let row = ApproxCount::new(k, cfg.eps.unwrap_or(0.0), cfg.delta, cfg.a)?;
            let p = Boost::new(row, k, cfg.a * cfg.b);
            run_program(&p, &build_grid(cfg.a, cfg.b)?, start, opts)?
        }
        Algo::Concentration => (run_concentration_ribbon(cfg.n, cfg.a as f64, cfg.alpha, k)?.1, Status::Ok),
        Algo::Repair => return Err(Error::InvalidParameter("repair trials produce tradeoff rows".into())),
    };
    let (cols, rows) = if cfg.algo.is_grid() { (cfg.a, cfg.b) } else { (cfg.n, 1) };
    let coloring = Coloring::new(k, trace.colors.clone());
    let complete = coloring.complete().is_ok();
    let valid_exact = complete && validate_exact_flag(&coloring, cols)?.is_ok();
    let valid_eps = match cfg.eps {
        Some(eps) if complete => Some(validate_eps_flag(&coloring, &FlagSpec { k, a: cols, b: rows, eps })?.is_ok()),
        Some(_) => Some(false),
        None => None,
    };
    let correct = (0..trace.n)
        .filter(|&i| trace.colors[i] == Some(canonical_color(i % cols, cols, k).expect("in range")))
        .count();
    let rounds_seen =
        if cfg.algo == Algo::BubbleSort { trace.quiescent_round.unwrap_or(trace.rounds) } else { trace.rounds };
    let mut bounds_ok = status == Status::Ok;
    if let Some(b) = cfg.round_bound() {
        bounds_ok &= rounds_seen as f64 <= b;
    }
    if let Some(b) = cfg.msg_bits_bound() {
        bounds_ok &= trace.total_message_bits as f64 <= b;
    }
    if cfg.algo.is_exact() {
        bounds_ok &= valid_exact;
    }
    if log {
        bounds_ok &= trace.recount_bits() == trace.total_message_bits;
    }
    Ok(TrialResult {
        trial,
        start,
        rounds: rounds_seen,
        msg_bits: trace.total_message_bits,
        messages: trace.message_count,
        peak_mem_bits: trace.peak_memory_bits,
        valid_exact,
        valid_eps,
        frac_correct: correct as f64 / trace.n as f64,
        status,
        bounds_ok,
        deliveries: trace.deliveries,
    })
}

fn pool(jobs: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::InvalidParameter(format!("cannot start {jobs} workers: {e}")))
}

#[derive(Debug, Clone, PartialEq)]
pub enum Report {
    Trials { config: RunConfig, rows: Vec<TrialResult> },
    Tradeoff { config: RunConfig, rows: Vec<TradeoffRow> },
}

impl Report {
    pub fn config(&self) -> &RunConfig {
        match self {
            Report::Trials { config, .. } | Report::Tradeoff { config, .. } => config,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            Report::Trials { rows, .. } => {
                if rows.iter().any(|r| r.status == Status::Timeout) {
                    EXIT_TIMEOUT
                } else if rows.iter().all(|r| r.bounds_ok) {
                    EXIT_OK
                } else {
                    EXIT_INVALID
                }
            }
            Report::Tradeoff { rows, .. } => {
                if rows.iter().all(tradeoff_bounds_ok) {
                    EXIT_OK
                } else {
                    EXIT_INVALID
                }
            }
        }
    }

    /// CSV text; trial reports end with a summary row.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        match self {
            Report::Trials { config: c, rows } => {
                w.write_record([
                    "trial",
                    "n",
                    "a",
                    "b",
                    "k",
                    "start",
                    "rounds",
                    "msg_bits",
                    "peak_mem_bits",
                    "valid_exact",
                    "valid_eps",
                    "frac_correct",
                    "status",
                ])
                .map_err(csv_err)?;
                let (a, b) = if c.algo.is_grid() { (c.a, c.b) } else { (c.n, 1) };
                let fixed = [c.agents().to_string(), a.to_string(), b.to_string(), c.k.to_string()];
                for r in rows {
                    let mut rec = vec![r.trial.to_string()];
                    rec.extend(fixed.iter().cloned());
                    rec.extend([
                        r.start.to_string(),
                        r.rounds.to_string(),
                        r.msg_bits.to_string(),
                        r.peak_mem_bits.to_string(),
                        r.valid_exact.to_string(),
                        r.valid_eps.map_or(String::new(), |v| v.to_string()),
                        format!("{:.6}", r.frac_correct),
                        if r.status == Status::Ok { "ok".into() } else { "timeout".into() },
                    ]);
                    w.write_record(&rec).map_err(csv_err)?;
                }
                let s = Summary::of(rows);
                let mut rec = vec!["summary".to_string()];
                rec.extend(fixed.iter().cloned());
                rec.extend([
                    c.start.to_string(),
                    s.max_rounds.to_string(),
                    s.max_msg_bits.to_string(),
                    s.max_peak_mem_bits.to_string(),
                    format!("{:.6}", s.exact_fraction),
                    s.eps_fraction.map_or(String::new(), |f| format!("{f:.6}")),
                    format!("{:.6}", s.mean_frac_correct),
                    format!("exit={}", self.exit_code()),
                ]);
                w.write_record(&rec).map_err(csv_err)?;
            }
            Report::Tradeoff { rows, .. } => {
                w.write_record([
                    "sigma",
                    "trial",
                    "s_T1",
                    "s_T2",
                    "repair_rounds",
                    "frac_correct_norepair",
                    "frac_correct_repair",
                    "overlap",
                ])
                .map_err(csv_err)?;
                for r in rows {
                    w.write_record([
                        format!("{}", r.sigma),
                        r.trial.to_string(),
                        r.s_t1.to_string(),
                        r.s_t2.to_string(),
                        r.repair_rounds.to_string(),
                        format!("{:.6}", r.frac_correct_norepair),
                        format!("{:.6}", r.frac_correct_repair),
                        r.overlap.to_string(),
                    ])
                    .map_err(csv_err)?;
                }
            }
        }
        let bytes = w.into_inner().map_err(|e| Error::InvalidParameter(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv is utf-8"))
    }

    /// Delivery log as JSON lines, one object per delivery, tagged by trial.
    pub fn deliveries_jsonl(&self) -> String {
        #[derive(Serialize)]
        struct Line<'a> {
            trial: u64,
            #[serde(flatten)]
            d: &'a Delivery,
        }
        let mut out = String::new();
        if let Report::Trials { rows, .. } = self {
            for r in rows {
                for d in &r.deliveries {
                    out.push_str(&serde_json::to_string(&Line { trial: r.trial, d }).expect("delivery serializes"));
                    out.push('\n');
                }
            }
        }
        out
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::InvalidParameter(format!("csv: {e}"))
}

/// Per-interval repair rounds stay within `2s + 2`.
pub fn tradeoff_bounds_ok(r: &TradeoffRow) -> bool {
    [r.s_t1, r.s_t2].into_iter().zip(r.interval_rounds).all(|(s, x)| x.unwrap_or(0) <= 2 * s as u64 + 2)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub trials: usize,
    pub max_rounds: u64,
    pub max_msg_bits: u64,
    pub max_messages: u64,
    pub max_peak_mem_bits: u64,
    pub exact_fraction: f64,
    pub eps_fraction: Option<f64>,
    pub mean_frac_correct: f64,
    pub timeouts: usize,
}

impl Summary {
    pub fn of(rows: &[TrialResult]) -> Self {
        let t = rows.len().max(1) as f64;
        let eps: Vec<bool> = rows.iter().filter_map(|r| r.valid_eps).collect();
        Summary {
            trials: rows.len(),
            max_rounds: rows.iter().map(|r| r.rounds).max().unwrap_or(0),
            max_msg_bits: rows.iter().map(|r| r.msg_bits).max().unwrap_or(0),
            max_messages: rows.iter().map(|r| r.messages).max().unwrap_or(0),
            max_peak_mem_bits: rows.iter().map(|r| r.peak_mem_bits).max().unwrap_or(0),
            exact_fraction: rows.iter().filter(|r| r.valid_exact).count() as f64 / t,
            eps_fraction: (!eps.is_empty()).then(|| eps.iter().filter(|&&v| v).count() as f64 / eps.len() as f64),
            mean_frac_correct: rows.iter().map(|r| r.frac_correct).sum::<f64>() / t,
            timeouts: rows.iter().filter(|r| r.status == Status::Timeout).count(),
        }
    }
}

/// Run every trial of `cfg` on `cfg.jobs` workers; rows come back in trial order.
pub fn cmd_run(cfg: &RunConfig) -> Result<Report> {
    cfg.validate()?;
    let workers = pool(cfg.jobs)?;
    if cfg.algo == Algo::Repair {
        let g = NoisyGradient::thirds(cfg.sigma);
        let rows = workers.install(|| {
            (0..cfg.trials)
                .into_par_iter()
                .map(|t| tradeoff_trial(cfg.n, &g, UncertaintyRule::default(), cfg.seed, t))
                .collect::<Result<Vec<_>>>()
        })?;
        return Ok(Report::Tradeoff { config: cfg.clone(), rows });
    }
    let rows =
        workers.install(|| (0..cfg.trials).into_par_iter().map(|t| run_trial(cfg, t)).collect::<Result<Vec<_>>>())?;
    Ok(Report::Trials { config: cfg.clone(), rows })
}

/// Ranged settings: every key may hold a list; the sweep is their product.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub cells: Vec<RunConfig>,
}

const SWEEPABLE: [&str; 9] = ["algo", "n", "a", "b", "k", "alpha", "eps", "sigma", "start"];

impl SweepConfig {
    pub fn from_settings(s: &Settings) -> Result<Self> {
        let mut ranged = false;
        let mut cells: Vec<Settings> = vec![Settings::new()];
        for (key, v) in s {
            let values: Vec<String> = if SWEEPABLE.contains(&key.as_str()) && (v.contains(',') || v.contains("..")) {
                ranged = true;
                if matches!(key.as_str(), "algo" | "alpha" | "eps" | "sigma" | "start") {
                    parse_list::<String>(key, v)?
                } else {
                    parse_list::<u64>(key, v)?.into_iter().map(|x| x.to_string()).collect()
                }
            } else {
                vec![v.clone()]
            };
            if values.is_empty() {
                return Err(Error::InvalidParameter(format!("empty range for {key}")));
            }
            cells = cells
                .into_iter()
                .flat_map(|c| {
                    values.iter().map(move |v| {
                        let mut c = c.clone();
                        c.insert(key.clone(), v.clone());
                        c
                    })
                })
                .collect();
        }
        if !ranged {
            return Err(Error::InvalidParameter("a sweep needs at least one ranged setting".into()));
        }
        let cells = cells.iter().map(RunConfig::from_settings).collect::<Result<Vec<_>>>()?;
        Ok(SweepConfig { cells })
    }
}

/// One cell of a sweep with its report.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepCell {
    pub name: String,
    pub report: Report,
}

pub fn cell_name(c: &RunConfig) -> String {
    let mut name = format!("{}_n{}_k{}", c.algo, c.agents(), c.k);
    if c.algo.is_grid() {
        name = format!("{}_a{}_b{}_k{}", c.algo, c.a, c.b, c.k);
    }
    if c.algo == Algo::Repair {
        name.push_str(&format!("_sigma{}", c.sigma));
    }
    if let Some(eps) = c.eps {
        name.push_str(&format!("_eps{eps}"));
    }
    if c.algo == Algo::Concentration {
        name.push_str(&format!("_alpha{}_a{}", c.alpha, c.a));
    }
    if matches!(c.start, StartSpec::Agent(_)) {
        name.push_str(&format!("_start{}", c.start));
    }
    name
}

pub fn cmd_sweep(sweep: &SweepConfig) -> Result<Vec<SweepCell>> {
    sweep.cells.iter().map(|c| Ok(SweepCell { name: cell_name(c), report: cmd_run(c)? })).collect()
}

pub fn sweep_exit_code(cells: &[SweepCell]) -> i32 {
    let codes: Vec<i32> = cells.iter().map(|c| c.report.exit_code()).collect();
    if codes.contains(&EXIT_TIMEOUT) {
        EXIT_TIMEOUT
    } else if codes.contains(&EXIT_INVALID) {
        EXIT_INVALID
    } else {
        EXIT_OK
    }
}

fn table_entry(algo: Algo) -> (&'static str, &'static str, &'static str, &'static str, bool) {
    match algo {
        Algo::ExactCount => ("(2-1/k)n", "3log n+O(1)", "O(n)", "O(log n)", true),
        Algo::SilentCount => ("3n", "2log n+O(1)", "O(n)", "O(1)", true),
        Algo::BubbleSort => ("3n", "O(log k)", "O(n^2)", "O(log k)", true),
        Algo::ApproxCount => ("2n", "2loglog n+O(1)", "O(n)", "O(loglog n)", false),
        Algo::UpDown => ("b+(2-1/k)a", "", "", "", true),
        Algo::Boost => ("3n", "", "", "", false),
        Algo::Concentration => ("0", "", "0", "0", true),
        Algo::Repair => ("2s+2", "", "", "", false),
    }
}

/// Aggregate of the non-hybrid cells: measured values beside the complexity
/// table's entries and the numeric bounds checked per trial.
pub fn aggregate_csv(cells: &[SweepCell]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "algo",
        "n",
        "a",
        "b",
        "k",
        "trials",
        "max_rounds",
        "rounds_per_n",
        "table_rounds",
        "round_bound",
        "max_msgs",
        "table_msgs",
        "max_msg_bits",
        "msg_bits_bound",
        "max_peak_mem_bits",
        "table_memory",
        "mem_bound",
        "table_exact",
        "exact_fraction",
        "eps_fraction",
        "exit",
    ])
    .map_err(csv_err)?;
    let opt = |x: Option<f64>| x.map_or(String::new(), |v| format!("{v:.3}"));
    for cell in cells {
        let Report::Trials { config: c, rows } = &cell.report else { continue };
        let s = Summary::of(rows);
        let (tr, tm, tmsg, _, exact) = table_entry(c.algo);
        w.write_record([
            c.algo.to_string(),
            c.agents().to_string(),
            c.a.to_string(),
            c.b.to_string(),
            c.k.to_string(),
            s.trials.to_string(),
            s.max_rounds.to_string(),
            format!("{:.4}", s.max_rounds as f64 / c.agents() as f64),
            tr.to_string(),
            opt(c.round_bound()),
            s.max_messages.to_string(),
            tmsg.to_string(),
            s.max_msg_bits.to_string(),
            opt(c.msg_bits_bound()),
            s.max_peak_mem_bits.to_string(),
            tm.to_string(),
            opt(c.memory_bound()),
            exact.to_string(),
            format!("{:.6}", s.exact_fraction),
            s.eps_fraction.map_or(String::new(), |f| format!("{f:.6}")),
            cell.report.exit_code().to_string(),
        ])
        .map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::InvalidParameter(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv is utf-8"))
}

/// All hybrid rows of a sweep, in cell order.
pub fn tradeoff_csv(cells: &[SweepCell]) -> Result<Option<String>> {
    let rows: Vec<TradeoffRow> = cells
        .iter()
        .filter_map(|c| match &c.report {
            Report::Tradeoff { rows, .. } => Some(rows.clone()),
            _ => None,
        })
        .flatten()
        .collect();
    if rows.is_empty() {
        return Ok(None);
    }
    let config = cells[0].report.config().clone();
    Report::Tradeoff { config, rows }.to_csv().map(Some)
}

/// Witness pair for the concentration impossibility, with a certificate from
/// a colorer that reads the two bottom corners as a 1D measurement.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WitnessReport {
    pub witness: WitnessPair,
    pub max_residual: f64,
    pub certificate: Certificate,
}

pub fn cmd_witness(a: f64, b: f64, eps: f64, alpha: f64) -> Result<WitnessReport> {
    let witness = construct_witness(a, b, eps)?;
    let colorer = |m: &Measurement| {
        exact_concentration_color(&Measurement(vec![m.0[0], m.0[1]]), alpha, 3).expect("corner readings are positive")
    };
    let certificate = witness_certificate(&witness, alpha, colorer)?;
    let max_residual = witness.residual_d1.max(witness.residual_d2);
    Ok(WitnessReport { witness, max_residual, certificate })
}

/// Prefix-indistinguishability check for Exact Count on lines of `n` and
/// `n + k` agents started at the left end.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LowerBoundReport {
    pub n: usize,
    pub k: u8,
    /// Leftmost agent of color 2 in the canonical `n`-coloring.
    pub agent: usize,
    /// `floor((2 − 1/k)·n − k)`.
    pub bound_round: u64,
    pub decided_short: Option<u64>,
    pub decided_long: Option<u64>,
    /// First round at which the agent's transcripts differ.
    pub first_divergence: Option<u64>,
    /// False when `n = 2k`: the run is reported but not asserted.
    pub asserted: bool,
    pub pass: bool,
}

fn transcript_key(d: &Delivery) -> (u64, usize, usize, crate::topology::Direction, u32, &str) {
    (d.round, d.from, d.to, d.dir, d.width, d.payload.as_str())
}

pub fn diagnose_lowerbound(n: usize, k: u8) -> Result<LowerBoundReport> {
    if k < 2 || n < 2 * usize::from(k) {
        return Err(Error::InvalidParameter(format!("need k >= 2 and n >= 2k, got n={n} k={k}")));
    }
    // Both runs share one width parameter so message sizes alone cannot tell them apart.
    let program = ExactCount::new(k, n + usize::from(k));
    let run = |len: usize| -> Result<Trace> {
        let topo = build_line(len)?;
        Ok(simulate(&program, &topo, Wake::Start(0), &RunOptions::seeded(0).logged())?.trace)
    };
    let short = run(n)?;
    let long = run(n + usize::from(k))?;
    let agent =
        (0..n).find(|&i| canonical_color(i, n, k).expect("in range") == 2).expect("k >= 2 gives a color-2 agent");
    let kf = f64::from(k);
    let bound_round = ((2.0 - 1.0 / kf) * n as f64 - kf).floor() as u64;
    let involving = |t: &Trace| -> Vec<Delivery> { t.deliveries.iter().filter(|d| d.to == agent).cloned().collect() };
    let (ts, tl) = (involving(&short), involving(&long));
    let horizon = ts.iter().chain(&tl).map(|d| d.round).max().unwrap_or(0);
    let first_divergence = (0..=horizon).find(|&r| {
        let a: Vec<_> = ts.iter().filter(|d| d.round == r).map(transcript_key).collect();
        let b: Vec<_> = tl.iter().filter(|d| d.round == r).map(transcript_key).collect();
        a != b
    });
    let (decided_short, decided_long) = (short.decided_round[agent], long.decided_round[agent]);
    let asserted = n > 2 * usize::from(k);
    let late = |d: Option<u64>| d.is_some_and(|r| r >= bound_round);
    let pass =
        !asserted || (late(decided_short) && late(decided_long) && first_divergence.is_none_or(|r| r > bound_round));
    Ok(LowerBoundReport { n, k, agent, bound_round, decided_short, decided_long, first_divergence, asserted, pass })
}

/// Distance check on an `a × b` grid: with the start in the top-left corner
/// the bottom-right agent cannot decide before round `a + b − 2`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridBoundReport {
    pub a: usize,
    pub b: usize,
    pub k: u8,
    pub agent: usize,
    pub bound_round: u64,
    pub decided: Option<u64>,
    pub pass: bool,
}

pub fn diagnose_grid(a: usize, b: usize, k: u8) -> Result<GridBoundReport> {
    let topo = build_grid(a, b)?;
    let p = UpDown::new(ExactCount::new(k, a), k);
    let trace = simulate(&p, &topo, Wake::Start(0), &RunOptions::seeded(0))?.trace;
    let agent = a * b - 1;
    let bound_round = (a + b - 2) as u64;
    let decided = trace.decided_round[agent];
    Ok(GridBoundReport { a, b, k, agent, bound_round, decided, pass: decided.is_some_and(|r| r >= bound_round) })
}
