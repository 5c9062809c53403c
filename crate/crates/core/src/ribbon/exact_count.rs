//! Exact Count: a wake wave carries hop distances from the start, then each
//! endpoint launches a counter back across the line. An agent that knows
//! both side counts picks its color; an agent that has one count and can
//! bound the other from the silence so far may settle on an extreme color
//! early.

use crate::sim::{bits_for, LocalView, MemoryLayout, MessageSchema, Program, SchemaError, StepCtx};
use crate::topology::{AgentId, Direction};

use super::color_from_counts;

const LR: [Direction; 2] = [Direction::Left, Direction::Right];

#[derive(Debug, Clone)]
pub struct ExactCount {
    k: u8,
    n: u64,
}

impl ExactCount {
    /// `n` fixes the message width and the state schema; agents never read it.
    pub fn new(k: u8, n: usize) -> Self {
        ExactCount { k, n: n as u64 }
    }

    fn t_max(&self) -> u64 {
        2 * self.n + 2 * u64::from(self.k)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CountState {
    /// Direction of the starting agent; `None` at the start itself.
    pub side: Option<Direction>,
    pub n_mid: u64,
    pub n_left: Option<u64>,
    pub n_right: Option<u64>,
    pub t: u64,
    pub color: Option<u8>,
    /// A start sitting at an endpoint owes its own count one round late.
    pub pending: Option<Direction>,
    pub halted: bool,
}

impl CountState {
    fn count(&self, d: Direction) -> Option<u64> {
        match d {
            Direction::Left => self.n_left,
            _ => self.n_right,
        }
    }

    fn set_count(&mut self, d: Direction, v: u64) {
        match d {
            Direction::Left => self.n_left = Some(v),
            _ => self.n_right = Some(v),
        }
    }

    /// Smallest count on side `d` consistent with no count having arrived
    /// from there by the current round.
    fn lower_bound(&self, d: Direction) -> u64 {
        let (t, m) = (self.t, self.n_mid);
        match self.side {
            Some(s) if s == d => {
                if t > m {
                    (t + m) / 2 + 1
                } else {
                    m
                }
            }
            _ => (t - m) / 2 + 1,
        }
    }

    fn decide(&mut self, k: u8) {
        if self.color.is_some() {
            return;
        }
        let k64 = u64::from(k);
        self.color = match (self.n_left, self.n_right) {
            (Some(l), Some(r)) => Some(color_from_counts(l, r, k)),
            (Some(l), None) if self.lower_bound(Direction::Right) >= (k64 - 1) * l => Some(1),
            (None, Some(r)) if self.lower_bound(Direction::Left) >= (k64 - 1) * (r + 1) => Some(k),
            _ => None,
        };
    }
}

impl Program for ExactCount {
    type State = CountState;
    type Msg = u64;

    fn schema(&self) -> MessageSchema {
        MessageSchema::new(vec![("count", bits_for(self.n))])
    }

    fn init(&self, _: AgentId, _: &LocalView) -> CountState {
        CountState {
            side: None,
            n_mid: 0,
            n_left: None,
            n_right: None,
            t: 0,
            color: None,
            pending: None,
            halted: false,
        }
    }

    fn step(&self, s: &mut CountState, ctx: &mut StepCtx<'_, u64>) {
        if ctx.local_round() == 0 {
            if ctx.view().is_start() {
                let present: Vec<Direction> = LR.into_iter().filter(|&d| ctx.has_neighbor(d)).collect();
                for d in LR {
                    if ctx.has_neighbor(d) {
                        ctx.send(d, 1);
                    } else {
                        s.set_count(d, 0);
                    }
                }
                if let [only] = present[..] {
                    s.pending = Some(only);
                }
            } else {
                let from = LR.into_iter().find(|&d| ctx.received(d).is_some()).expect("woken by a message");
                let v = ctx.take(from).expect("wake message");
                s.side = Some(from);
                s.n_mid = v;
                s.t = v;
                let away = from.opposite();
                if ctx.has_neighbor(away) {
                    ctx.send(away, v + 1);
                } else {
                    s.set_count(away, 0);
                    ctx.send(from, 1);
                }
            }
        } else {
            s.t += 1;
            if let Some(d) = s.pending.take() {
                ctx.send(d, 1);
            }
            for d in LR {
                if let Some(v) = ctx.take(d) {
                    s.set_count(d, v);
                    if ctx.has_neighbor(d.opposite()) {
                        ctx.send(d.opposite(), v + 1);
                    }
                }
            }
        }
        s.decide(self.k);
        if s.color.is_some() && s.pending.is_none() {
            s.halted = true;
        }
    }

    fn width(&self, _: &u64) -> u32 {
        bits_for(self.n)
    }

    fn color(&self, s: &CountState) -> Option<u8> {
        s.color
    }

    fn is_halted(&self, s: &CountState) -> bool {
        s.halted
    }

    fn memory_bits(&self, s: &CountState) -> Result<u64, SchemaError> {
        let top = self.n.saturating_sub(1);
        Ok(MemoryLayout::new()
            .counter("n_mid", s.n_mid, top)?
            .opt_counter("n_left", s.n_left, top)?
            .opt_counter("n_right", s.n_right, top)?
            .counter("t", s.t, self.t_max())?
            .color("color", s.color, self.k)?
            .flags(3)
            .bits())
    }
}

impl CountState {
    /// Both side counts, once known.
    pub fn counts(&self) -> Option<(u64, u64)> {
        Some((self.count(Direction::Left)?, self.count(Direction::Right)?))
    }
}
