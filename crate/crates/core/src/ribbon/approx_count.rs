//! Approximate Count: like Exact Count, but each side count travels as a
//! Flajolet counter, so messages and memory shrink to O(log log n + δ) bits
//! at the price of an ε-approximate coloring.

use crate::counter::{beta, counter_width, FlajoletCounter};
use crate::error::{Error, Result};
use crate::sim::{LocalView, MemoryLayout, MessageSchema, Program, SchemaError, StepCtx};
use crate::topology::{AgentId, Direction};

const LR: [Direction; 2] = [Direction::Left, Direction::Right];

/// How an agent turns its two counters into a color.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DecisionRule {
    /// First `i` with `est_l·(k−i) <= i·est_r`, using the unbiased estimates.
    #[default]
    Estimate,
    /// First `i` with `c_l − c_r <= log_β(i/(k−i))` on the raw exponents.
    /// Only meaningful once `(β−1)·n` dwarfs `β`.
    ExponentDifference,
}

#[derive(Debug, Clone)]
pub struct ApproxCount {
    k: u8,
    delta: f64,
    width: u32,
    rule: DecisionRule,
}

/// `log2(1/ε) + 2·log2(k) + 8`.
pub fn default_delta(eps: f64, k: u8) -> f64 {
    (1.0 / eps).log2() + 2.0 * f64::from(k).log2() + 8.0
}

impl ApproxCount {
    /// `n_max` sizes the counter field and message width.
    pub fn new(k: u8, eps: f64, delta: Option<f64>, n_max: usize) -> Result<Self> {
        if k < 2 {
            return Err(Error::InvalidParameter(format!("k must be at least 2, got {k}")));
        }
        let limit = 1.0 / (2.0 * f64::from(k - 1));
        if !(eps > 0.0 && eps < limit) {
            return Err(Error::InvalidParameter(format!("eps must lie in (0, {limit}) for k={k}, got {eps}")));
        }
        let delta = delta.unwrap_or_else(|| default_delta(eps, k));
        if !(delta >= 0.0) {
            return Err(Error::InvalidParameter(format!("delta must be non-negative, got {delta}")));
        }
        Ok(ApproxCount { k, delta, width: counter_width(delta, n_max as u64), rule: DecisionRule::Estimate })
    }

    pub fn with_rule(mut self, rule: DecisionRule) -> Self {
        self.rule = rule;
        self
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn counter_width(&self) -> u32 {
        self.width
    }

    /// Color for raw exponents `c_left`, `c_right`; `k` when no threshold fits.
    pub fn decide(&self, c_left: u32, c_right: u32) -> u8 {
        let k = self.k;
        let ratio = |i: u8| f64::from(i) / f64::from(k - i);
        let hit: Box<dyn Fn(u8) -> bool> = match self.rule {
            DecisionRule::Estimate => {
                let l = FlajoletCounter::from_raw(c_left, self.delta).estimate();
                let r = FlajoletCounter::from_raw(c_right, self.delta).estimate();
                Box::new(move |i| l * f64::from(k - i) <= f64::from(i) * r)
            }
            DecisionRule::ExponentDifference => {
                let diff = f64::from(c_left) - f64::from(c_right);
                let ln_b = beta(self.delta).ln();
                Box::new(move |i| diff <= ratio(i).ln() / ln_b)
            }
        };
        (1..k).find(|&i| hit(i)).unwrap_or(k)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ApproxMsg {
    Wake,
    /// Raw counter exponent.
    Count(u32),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ApproxState {
    pub c_left: Option<FlajoletCounter>,
    pub c_right: Option<FlajoletCounter>,
    pub color: Option<u8>,
    pub halted: bool,
}

impl ApproxState {
    fn set(&mut self, d: Direction, c: FlajoletCounter) {
        match d {
            Direction::Left => self.c_left = Some(c),
            _ => self.c_right = Some(c),
        }
    }
}

impl Program for ApproxCount {
    type State = ApproxState;
    type Msg = ApproxMsg;

    fn schema(&self) -> MessageSchema {
        MessageSchema::new(vec![("wake", 1), ("counter", self.width)])
    }

    fn init(&self, _: AgentId, _: &LocalView) -> ApproxState {
        ApproxState { c_left: None, c_right: None, color: None, halted: false }
    }

    fn step(&self, s: &mut ApproxState, ctx: &mut StepCtx<'_, ApproxMsg>) {
        let zero = FlajoletCounter::new(self.delta);
        if ctx.local_round() == 0 && ctx.view().is_start() {
            for d in LR {
                if !ctx.has_neighbor(d) {
                    s.set(d, zero);
                }
            }
            for d in LR {
                if !ctx.has_neighbor(d) {
                    continue;
                }
                if ctx.has_neighbor(d.opposite()) {
                    ctx.send(d, ApproxMsg::Wake);
                } else {
                    let c = zero.incremented(ctx.rng());
                    ctx.send(d, ApproxMsg::Count(c.raw()));
                }
            }
        } else {
            for from in LR {
                let Some(msg) = ctx.take(from) else { continue };
                let away = from.opposite();
                if let ApproxMsg::Count(raw) = msg {
                    let c = FlajoletCounter::from_raw(raw, self.delta);
                    s.set(from, c);
                    if ctx.has_neighbor(away) {
                        let next = c.incremented(ctx.rng());
                        ctx.send(away, ApproxMsg::Count(next.raw()));
                    }
                } else if ctx.has_neighbor(away) {
                    ctx.send(away, ApproxMsg::Wake);
                }
                if ctx.local_round() == 0 && !ctx.has_neighbor(away) {
                    s.set(away, zero);
                    let c = zero.incremented(ctx.rng());
                    ctx.send(from, ApproxMsg::Count(c.raw()));
                }
            }
        }
        if let (Some(l), Some(r)) = (s.c_left, s.c_right) {
            s.color = Some(self.decide(l.raw(), r.raw()));
            s.halted = true;
        }
    }

    fn width(&self, m: &ApproxMsg) -> u32 {
        match m {
            ApproxMsg::Wake => 1,
            ApproxMsg::Count(_) => self.width,
        }
    }

    fn color(&self, s: &ApproxState) -> Option<u8> {
        s.color
    }

    fn is_halted(&self, s: &ApproxState) -> bool {
        s.halted
    }

    fn needs_tick(&self, _: &ApproxState) -> bool {
        false
    }

    fn memory_bits(&self, s: &ApproxState) -> std::result::Result<u64, SchemaError> {
        let top = (1u64 << self.width) - 1;
        Ok(MemoryLayout::new()
            .opt_counter("c_left", s.c_left.map(|c| u64::from(c.raw())), top)?
            .opt_counter("c_right", s.c_right.map(|c| u64::from(c.raw())), top)?
            .color("color", s.color, self.k)?
            .flag()
            .bits())
    }
}
