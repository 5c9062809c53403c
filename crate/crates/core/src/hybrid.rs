//! Hybrid model: agents on a line read a noisy, monotone gradient, color
//! themselves by two thresholds, then repair the uncertain stretches around
//! each threshold by message passing.
//!
//! Agent `i` of `n` sits at the cell center `(i + 0.5)·a/n`. Uncertain
//! agents yield to the first color that reaches them from outside their
//! interval.

use rand::Rng;
use rand_distr::{Distribution, Normal as Gaussian};
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::sim::{
    color_bits, simulate, trial_seed, LocalView, MemoryLayout, MessageSchema, Program, RunOptions, SchemaError,
    StepCtx, Trace, Wake,
};
use crate::topology::{build_line, AgentId, Direction};

/// Shape of the mean concentration over `[0, a]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Profile {
    /// `M(x) = x/a`.
    Linear,
    /// `M(x) = (x/a)^p`, `p > 0`.
    Power(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NoisyGradient {
    pub profile: Profile,
    pub a: f64,
    pub sigma: f64,
    pub t1: f64,
    pub t2: f64,
}

impl NoisyGradient {
    pub fn new(profile: Profile, a: f64, sigma: f64, t1: f64, t2: f64) -> Result<Self> {
        if !(a > 0.0 && a.is_finite()) {
            return Err(Error::InvalidParameter(format!("domain length must be positive, got {a}")));
        }
        if !(sigma >= 0.0 && sigma.is_finite()) {
            return Err(Error::InvalidParameter(format!("sigma must be non-negative, got {sigma}")));
        }
        if !(t1 < t2) {
            return Err(Error::InvalidParameter(format!("need T1 < T2, got {t1} and {t2}")));
        }
        if let Profile::Power(p) = profile {
            if !(p > 0.0 && p.is_finite()) {
                return Err(Error::InvalidParameter(format!("power profile needs p > 0, got {p}")));
            }
        }
        Ok(NoisyGradient { profile, a, sigma, t1, t2 })
    }

    /// Linear profile on `[0, 1]` with thresholds at one and two thirds.
    pub fn thirds(sigma: f64) -> Self {
        NoisyGradient { profile: Profile::Linear, a: 1.0, sigma, t1: 1.0 / 3.0, t2: 2.0 / 3.0 }
    }

    pub fn mean(&self, x: f64) -> f64 {
        let u = x / self.a;
        match self.profile {
            Profile::Linear => u,
            Profile::Power(p) => u.max(0.0).powf(p),
        }
    }

    /// Position with mean concentration `m`, clamped to `[0, a]`.
    pub fn inverse(&self, m: f64) -> f64 {
        let u = match self.profile {
            Profile::Linear => m,
            Profile::Power(p) => m.max(0.0).powf(1.0 / p),
        };
        (u * self.a).clamp(0.0, self.a)
    }

    pub fn position(&self, i: usize, n: usize) -> f64 {
        (i as f64 + 0.5) * self.a / n as f64
    }

    pub fn noiseless_colors(&self, n: usize) -> Vec<u8> {
        (0..n).map(|i| threshold_color(self.mean(self.position(i, n)), self.t1, self.t2)).collect()
    }
}

pub fn sample_measurement<R: Rng + ?Sized>(x: f64, g: &NoisyGradient, rng: &mut R) -> Result<f64> {
    if !(0.0..=g.a).contains(&x) {
        return Err(Error::InvalidMeasurement(format!("position {x} outside [0, {}]", g.a)));
    }
    let mu = g.mean(x);
    if g.sigma == 0.0 {
        return Ok(mu);
    }
    let d = Gaussian::new(mu, g.sigma).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    Ok(d.sample(rng))
}

/// 1 (blue) up to `T1`, 2 (white) up to `T2`, 3 (red) above.
pub fn threshold_color(m: f64, t1: f64, t2: f64) -> u8 {
    if m <= t1 {
        1
    } else if m <= t2 {
        2
    } else {
        3
    }
}

/// `Φ(hi) − Φ(lo)`, taken from the upper tail when both are positive.
fn gauss_mass(lo: f64, hi: f64) -> f64 {
    let std = Normal::new(0.0, 1.0).expect("standard normal");
    if lo > 0.0 {
        std.sf(lo) - std.sf(hi)
    } else {
        std.cdf(hi) - std.cdf(lo)
    }
}

fn simpson(f: impl Fn(f64) -> f64, lo: f64, hi: f64, steps: usize) -> f64 {
    if hi <= lo {
        return 0.0;
    }
    let h = (hi - lo) / steps as f64;
    let mut sum = f(lo) + f(hi);
    for i in 1..steps {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        sum += w * f(lo + i as f64 * h);
    }
    sum * h / 3.0
}

fn indicator(c: u8) -> [f64; 3] {
    let mut p = [0.0; 3];
    p[usize::from(c - 1)] = 1.0;
    p
}

/// Posterior `(p_blue, p_white, p_red)` of the position band given reading
/// `m`, under a uniform prior on `[0, a]`.
pub fn posterior(m: f64, g: &NoisyGradient) -> [f64; 3] {
    let lo_m = g.mean(0.0);
    let hi_m = g.mean(g.a);
    if g.sigma == 0.0 {
        return indicator(threshold_color(m.clamp(lo_m, hi_m), g.t1, g.t2));
    }
    let edges = [0.0, g.inverse(g.t1), g.inverse(g.t2), g.a];
    let masses: [f64; 3] = match g.profile {
        Profile::Linear => {
            let z = |x: f64| (x / g.a - m) / g.sigma;
            [0, 1, 2].map(|b| gauss_mass(z(edges[b]), z(edges[b + 1])).max(0.0))
        }
        Profile::Power(_) => {
            let w = 12.0 * g.sigma;
            let (from, to) = (g.inverse(m - w), g.inverse(m + w));
            let like = |x: f64| {
                let d = (m - g.mean(x)) / g.sigma;
                (-0.5 * d * d).exp()
            };
            [0, 1, 2].map(|b| simpson(like, edges[b].max(from), edges[b + 1].min(to), 2048))
        }
    };
    let total: f64 = masses.iter().sum();
    if !(total > 0.0) || !total.is_finite() {
        return indicator(threshold_color(m.clamp(lo_m, hi_m), g.t1, g.t2));
    }
    masses.map(|p| p / total)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum UncertaintyRule {
    /// Uncertain when the reading is within `z·σ` of the nearest threshold.
    ZScore(f64),
    /// Uncertain when the largest posterior falls below the floor.
    Posterior(f64),
}

impl Default for UncertaintyRule {
    fn default() -> Self {
        UncertaintyRule::ZScore(3.0)
    }
}

impl UncertaintyRule {
    pub fn is_uncertain(&self, m: f64, g: &NoisyGradient) -> bool {
        match *self {
            UncertaintyRule::ZScore(z) => {
                let gap = (m - g.t1).abs().min((m - g.t2).abs());
                gap < z * g.sigma
            }
            UncertaintyRule::Posterior(c) => posterior(m, g).into_iter().fold(0.0, f64::max) < c,
        }
    }
}

/// Uncertain agents and, per threshold, the smallest interval covering the
/// uncertain agents nearest that threshold.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Marking {
    pub uncertain: Vec<bool>,
    pub intervals: [Option<(usize, usize)>; 2],
}

impl Marking {
    /// Interval sizes `s` per threshold, 0 when none.
    pub fn sizes(&self) -> [usize; 2] {
        self.intervals.map(|iv| iv.map_or(0, |(i, j)| j - i + 1))
    }

    /// Every agent inside some interval.
    pub fn marked(&self) -> Vec<bool> {
        let mut m = vec![false; self.uncertain.len()];
        for (i, j) in self.intervals.iter().flatten() {
            m[*i..=*j].iter_mut().for_each(|x| *x = true);
        }
        m
    }
}

fn nearest_threshold(m: f64, g: &NoisyGradient) -> usize {
    usize::from((m - g.t2).abs() < (m - g.t1).abs())
}

pub fn mark_uncertain(measurements: &[f64], g: &NoisyGradient, rule: UncertaintyRule) -> Result<Marking> {
    let uncertain: Vec<bool> = measurements.iter().map(|&m| rule.is_uncertain(m, g)).collect();
    let mut intervals: [Option<(usize, usize)>; 2] = [None, None];
    for (i, &m) in measurements.iter().enumerate() {
        if uncertain[i] {
            let slot = &mut intervals[nearest_threshold(m, g)];
            *slot = Some(slot.map_or((i, i), |(lo, hi)| (lo.min(i), hi.max(i))));
        }
    }
    if let [Some(x), Some(y)] = intervals {
        if x.1 >= y.0 && y.1 >= x.0 {
            return Err(Error::OverlappingUncertainty(x, y));
        }
    }
    Ok(Marking { uncertain, intervals })
}

/// Repair protocol over a fixed initial coloring. Every agent is awake from
/// round 0 and knows whether it and each neighbor is marked.
#[derive(Debug, Clone)]
pub struct Repair {
    colors: Vec<u8>,
    marked: Vec<bool>,
    k: u8,
}

impl Repair {
    pub fn new(colors: Vec<u8>, marked: Vec<bool>, k: u8) -> Result<Self> {
        if colors.len() != marked.len() {
            return Err(Error::InvalidParameter(format!("{} colors but {} marks", colors.len(), marked.len())));
        }
        Ok(Repair { colors, marked, k })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RepairState {
    pub color: u8,
    pub marked: bool,
    /// Marks of the left and right neighbors.
    pub marked_nb: [bool; 2],
    pub adopted: bool,
}

impl Program for Repair {
    type State = RepairState;
    type Msg = u8;

    fn schema(&self) -> MessageSchema {
        MessageSchema::new(vec![("color", color_bits(self.k))])
    }

    fn init(&self, agent: AgentId, view: &LocalView) -> RepairState {
        let nb = |d: Direction, j: Option<usize>| view.has_neighbor(d) && j.is_some_and(|j| self.marked[j]);
        RepairState {
            color: self.colors[agent],
            marked: self.marked[agent],
            marked_nb: [nb(Direction::Left, agent.checked_sub(1)), nb(Direction::Right, Some(agent + 1))],
            adopted: false,
        }
    }

    fn step(&self, s: &mut RepairState, ctx: &mut StepCtx<'_, u8>) {
        let sides = [Direction::Left, Direction::Right];
        if !s.marked {
            if ctx.local_round() == 0 {
                for (i, d) in sides.into_iter().enumerate() {
                    if s.marked_nb[i] {
                        ctx.send(d, s.color);
                    }
                }
            }
            return;
        }
        if s.adopted {
            return;
        }
        let from = sides.into_iter().find(|&d| ctx.received(d).is_some());
        if let Some(from) = from {
            let c = *ctx.received(from).expect("present");
            s.color = c;
            s.adopted = true;
            let onward = from.opposite();
            let slot = usize::from(onward == Direction::Right);
            if s.marked_nb[slot] && ctx.received(onward).is_none() {
                ctx.send(onward, c);
            }
        }
    }

    fn width(&self, _: &u8) -> u32 {
        color_bits(self.k)
    }

    fn color(&self, s: &RepairState) -> Option<u8> {
        Some(s.color)
    }

    fn is_halted(&self, _: &RepairState) -> bool {
        false
    }

    fn needs_tick(&self, _: &RepairState) -> bool {
        false
    }

    fn memory_bits(&self, s: &RepairState) -> std::result::Result<u64, SchemaError> {
        Ok(MemoryLayout::new().color("color", Some(s.color), self.k)?.flags(4).bits())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RepairOutcome {
    pub colors: Vec<u8>,
    /// Rounds until the last change inside each interval, per threshold.
    pub interval_rounds: [Option<u64>; 2],
    pub trace: Trace,
}

/// Run the repair protocol for `marking` over `colors`.
pub fn repair(colors: &[u8], marking: &Marking, k: u8) -> Result<RepairOutcome> {
    let n = colors.len();
    let topo = build_line(n)?;
    let program = Repair::new(colors.to_vec(), marking.marked(), k)?;
    let out = simulate(&program, &topo, Wake::All, &RunOptions::seeded(0).logged())?;
    let trace = out.trace;
    let interval_rounds = marking
        .intervals
        .map(|iv| iv.map(|(i, j)| (i..=j).filter_map(|a| trace.last_change_round[a]).max().unwrap_or(0)));
    let colors = trace.colors.iter().map(|c| c.expect("repair agents always hold a color")).collect();
    Ok(RepairOutcome { colors, interval_rounds, trace })
}

/// Distributed marking: each uncertain agent floods a flag for its threshold
/// both ways along the line; an agent is marked for a threshold when it is
/// uncertain for it or has heard that threshold's flag from both sides.
#[derive(Debug, Clone)]
pub struct FloodMark {
    /// Threshold slot of each uncertain agent.
    seeds: Vec<Option<usize>>,
}

impl FloodMark {
    pub fn new(measurements: &[f64], g: &NoisyGradient, rule: UncertaintyRule) -> Self {
        let seeds = measurements.iter().map(|&m| rule.is_uncertain(m, g).then(|| nearest_threshold(m, g))).collect();
        FloodMark { seeds }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FloodState {
    pub seed: Option<usize>,
    /// `heard[side][threshold]`: a flag came from that side.
    pub heard: [[bool; 2]; 2],
    /// `sent[side][threshold]`: the flag was passed on toward that side.
    pub sent: [[bool; 2]; 2],
}

impl FloodState {
    pub fn marked_for(&self, t: usize) -> bool {
        self.seed == Some(t) || (self.heard[0][t] && self.heard[1][t])
    }
}

impl Program for FloodMark {
    type State = FloodState;
    /// Flags per threshold.
    type Msg = [bool; 2];

    fn schema(&self) -> MessageSchema {
        MessageSchema::new(vec![("flags", 2)])
    }

    fn init(&self, agent: AgentId, _: &LocalView) -> FloodState {
        FloodState { seed: self.seeds[agent], heard: [[false; 2]; 2], sent: [[false; 2]; 2] }
    }

    fn step(&self, s: &mut FloodState, ctx: &mut StepCtx<'_, [bool; 2]>) {
        let sides = [Direction::Left, Direction::Right];
        for (i, d) in sides.into_iter().enumerate() {
            if let Some(f) = ctx.take(d) {
                for (h, x) in s.heard[i].iter_mut().zip(f) {
                    *h |= x;
                }
            }
        }
        for (i, d) in sides.into_iter().enumerate() {
            if !ctx.has_neighbor(d) {
                continue;
            }
            // Pass on what arrived from the far side, plus this agent's own flag.
            let mut out = [false; 2];
            for (t, o) in out.iter_mut().enumerate() {
                let want = s.heard[1 - i][t] || s.seed == Some(t);
                if want && !s.sent[i][t] {
                    *o = true;
                    s.sent[i][t] = true;
                }
            }
            if out.iter().any(|&b| b) {
                ctx.send(d, out);
            }
        }
    }

    fn width(&self, _: &[bool; 2]) -> u32 {
        2
    }

    fn color(&self, _: &FloodState) -> Option<u8> {
        None
    }

    fn is_halted(&self, _: &FloodState) -> bool {
        false
    }

    fn needs_tick(&self, _: &FloodState) -> bool {
        false
    }

    fn memory_bits(&self, s: &FloodState) -> std::result::Result<u64, SchemaError> {
        Ok(MemoryLayout::new().opt_counter("seed", s.seed.map(|t| t as u64), 1)?.flags(8).bits())
    }
}

/// Marking computed by [`FloodMark`], in the same shape as [`mark_uncertain`].
pub fn flood_mark(measurements: &[f64], g: &NoisyGradient, rule: UncertaintyRule) -> Result<(Marking, Trace)> {
    let n = measurements.len();
    let topo = build_line(n)?;
    let program = FloodMark::new(measurements, g, rule);
    let out = simulate(&program, &topo, Wake::All, &RunOptions::seeded(0))?;
    let states: Vec<FloodState> = out.states.into_iter().map(|s| s.expect("all awake")).collect();
    let intervals: [Option<(usize, usize)>; 2] = [0, 1].map(|t| {
        let lo = (0..n).find(|&i| states[i].marked_for(t))?;
        let hi = (0..n).rfind(|&i| states[i].marked_for(t))?;
        Some((lo, hi))
    });
    if let [Some(x), Some(y)] = intervals {
        if x.1 >= y.0 && y.1 >= x.0 {
            return Err(Error::OverlappingUncertainty(x, y));
        }
    }
    let uncertain = states.iter().map(|s| s.seed.is_some()).collect();
    Ok((Marking { uncertain, intervals }, out.trace))
}

/// One row of the robustness-versus-time experiment.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TradeoffRow {
    pub sigma: f64,
    pub trial: u64,
    pub s_t1: usize,
    pub s_t2: usize,
    pub repair_rounds: u64,
    pub frac_correct_norepair: f64,
    pub frac_correct_repair: f64,
    /// Intervals overlapped; the run was not repaired.
    pub overlap: bool,
    #[serde(skip)]
    pub interval_rounds: [Option<u64>; 2],
}

fn frac_equal(a: &[u8], b: &[u8]) -> f64 {
    a.iter().zip(b).filter(|(x, y)| x == y).count() as f64 / a.len() as f64
}

/// Sample, color, mark, and repair one line of `n` agents.
pub fn tradeoff_trial(
    n: usize,
    g: &NoisyGradient,
    rule: UncertaintyRule,
    master: u64,
    trial: u64,
) -> Result<TradeoffRow> {
    let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(trial_seed(master, trial));
    let truth = g.noiseless_colors(n);
    let ms: Vec<f64> = (0..n).map(|i| sample_measurement(g.position(i, n), g, &mut rng)).collect::<Result<_>>()?;
    let initial: Vec<u8> = ms.iter().map(|&m| threshold_color(m, g.t1, g.t2)).collect();
    let before = frac_equal(&initial, &truth);
    let mut row = TradeoffRow {
        sigma: g.sigma,
        trial,
        s_t1: 0,
        s_t2: 0,
        repair_rounds: 0,
        frac_correct_norepair: before,
        frac_correct_repair: before,
        overlap: false,
        interval_rounds: [None, None],
    };
    let marking = match mark_uncertain(&ms, g, rule) {
        Ok(m) => m,
        Err(Error::OverlappingUncertainty(..)) => {
            row.overlap = true;
            return Ok(row);
        }
        Err(e) => return Err(e),
    };
    [row.s_t1, row.s_t2] = marking.sizes();
    let out = repair(&initial, &marking, 3)?;
    row.interval_rounds = out.interval_rounds;
    row.repair_rounds = out.interval_rounds.iter().flatten().copied().max().unwrap_or(0);
    row.frac_correct_repair = frac_equal(&out.colors, &truth);
    Ok(row)
}
