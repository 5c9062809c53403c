//! Exact Silent Count: the start releases a 0-token to the left and a
//! 1-token to the right. Tokens bounce off the line ends and agents time the
//! gaps between passes of the token that travels their side first.
//!
//! Token 0 visits the left end, then the right end, then the left end again
//! where it stops; token 1 does the mirror trip. A start at an endpoint
//! bounces its own token at once and sends both in one 2-bit message.

use crate::sim::{LocalView, MemoryLayout, MessageSchema, Program, SchemaError, StepCtx};
use crate::topology::{AgentId, Direction};

use super::color_from_counts;

const LR: [Direction; 2] = [Direction::Left, Direction::Right];

#[derive(Debug, Clone)]
pub struct SilentCount {
    k: u8,
    n: u64,
}

impl SilentCount {
    /// `n` fixes the state schema only.
    pub fn new(k: u8, n: usize) -> Self {
        SilentCount { k, n: n as u64 }
    }
}

/// One or both tokens travelling together.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Tokens {
    pub zero: bool,
    pub one: bool,
}

impl Tokens {
    fn add(slot: &mut Option<Tokens>, token: u8) {
        let t = slot.get_or_insert(Tokens { zero: false, one: false });
        if token == 0 {
            t.zero = true;
        } else {
            t.one = true;
        }
    }

    fn list(self) -> impl Iterator<Item = u8> {
        [(self.zero, 0u8), (self.one, 1u8)].into_iter().filter(|p| p.0).map(|p| p.1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Count {
    Idle,
    Running(u64),
    Final(u64),
}

impl Count {
    fn value(self) -> Option<u64> {
        match self {
            Count::Final(v) => Some(v),
            _ => None,
        }
    }

    fn tick(&mut self) {
        if let Count::Running(c) = self {
            *c += 1;
        }
    }

    fn raw(self) -> u64 {
        match self {
            Count::Idle => 0,
            Count::Running(c) | Count::Final(c) => c,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SilentState {
    /// Direction of the starting agent; `None` at the start.
    pub side: Option<Direction>,
    pub left: Count,
    pub right: Count,
    pub sent_zero_left: u8,
    pub sent_one_right: u8,
    pub color: Option<u8>,
    pub halted: bool,
}

impl SilentState {
    fn count_mut(&mut self, d: Direction) -> &mut Count {
        match d {
            Direction::Left => &mut self.left,
            _ => &mut self.right,
        }
    }

    /// Receipt of the token this agent times.
    fn on_tracked(&mut self, endpoint: bool) {
        let own = self.side.expect("non-start agent").opposite();
        let other = own.opposite();
        if endpoint {
            let c = self.count_mut(other);
            *c = match *c {
                Count::Idle => Count::Running(0),
                Count::Running(v) => Count::Final(v / 2),
                done => done,
            };
            return;
        }
        match (*self.count_mut(own), *self.count_mut(other)) {
            (Count::Idle, _) => *self.count_mut(own) = Count::Running(0),
            (Count::Running(v), Count::Idle) => {
                *self.count_mut(own) = Count::Final(v / 2);
                *self.count_mut(other) = Count::Running(0);
            }
            (Count::Final(_), Count::Running(v)) => *self.count_mut(other) = Count::Final(v / 2),
            _ => {}
        }
    }
}

fn tracked_token(side: Direction) -> u8 {
    // Agents left of the start (start lies to their right) time token 0.
    if side == Direction::Right {
        0
    } else {
        1
    }
}

impl Program for SilentCount {
    type State = SilentState;
    type Msg = Tokens;

    fn schema(&self) -> MessageSchema {
        MessageSchema::new(vec![("token", 1), ("both", 2)])
    }

    fn init(&self, _: AgentId, _: &LocalView) -> SilentState {
        SilentState {
            side: None,
            left: Count::Idle,
            right: Count::Idle,
            sent_zero_left: 0,
            sent_one_right: 0,
            color: None,
            halted: false,
        }
    }

    fn step(&self, s: &mut SilentState, ctx: &mut StepCtx<'_, Tokens>) {
        let has_left = ctx.has_neighbor(Direction::Left);
        let has_right = ctx.has_neighbor(Direction::Right);
        let mut out: [Option<Tokens>; 2] = [None, None];
        let slot = |d: Direction| if d == Direction::Left { 0 } else { 1 };

        s.left.tick();
        s.right.tick();

        if ctx.local_round() == 0 && ctx.view().is_start() {
            s.left = if has_left { Count::Running(0) } else { Count::Final(0) };
            s.right = if has_right { Count::Running(0) } else { Count::Final(0) };
            match (has_left, has_right) {
                (true, true) => {
                    Tokens::add(&mut out[0], 0);
                    Tokens::add(&mut out[1], 1);
                }
                (false, true) => {
                    Tokens::add(&mut out[1], 0);
                    Tokens::add(&mut out[1], 1);
                }
                (true, false) => {
                    Tokens::add(&mut out[0], 0);
                    Tokens::add(&mut out[0], 1);
                }
                (false, false) => {}
            }
        } else if ctx.local_round() == 0 {
            let from = LR.into_iter().find(|&d| ctx.received(d).is_some()).expect("woken by a message");
            s.side = Some(from);
            if !ctx.has_neighbor(from.opposite()) {
                *s.count_mut(from.opposite()) = Count::Final(0);
            }
        }

        for from in LR {
            let Some(tokens) = ctx.take(from) else { continue };
            let travel = from.opposite();
            for token in tokens.list() {
                let at_end = !ctx.has_neighbor(travel);
                match s.side {
                    None => {
                        if token == 0 && from == Direction::Left {
                            if let Count::Running(v) = s.left {
                                s.left = Count::Final(v / 2);
                            }
                        }
                        if token == 1 && from == Direction::Right {
                            if let Count::Running(v) = s.right {
                                s.right = Count::Final(v / 2);
                            }
                        }
                        // A start at an end stops its own returning token
                        // and bounces the other one.
                        let own_end_token = if has_left { 1 } else { 0 };
                        if !at_end {
                            Tokens::add(&mut out[slot(travel)], token);
                        } else if token != own_end_token {
                            Tokens::add(&mut out[slot(from)], token);
                        }
                    }
                    Some(side) => {
                        let tracked = token == tracked_token(side);
                        let first_pass = tracked && *s.count_mut(side) == Count::Idle;
                        if tracked {
                            s.on_tracked(at_end);
                        }
                        if !at_end {
                            Tokens::add(&mut out[slot(travel)], token);
                        } else if !tracked || first_pass {
                            Tokens::add(&mut out[slot(from)], token);
                        }
                    }
                }
            }
        }

        for d in LR {
            if let Some(t) = out[slot(d)] {
                if d == Direction::Left && t.zero {
                    s.sent_zero_left += 1;
                }
                if d == Direction::Right && t.one {
                    s.sent_one_right += 1;
                }
                ctx.send(d, t);
            }
        }

        if s.color.is_none() {
            if let (Some(l), Some(r)) = (s.left.value(), s.right.value()) {
                s.color = Some(color_from_counts(l, r, self.k));
            }
        }
        let start_side = |d: Direction| s.side.is_none_or(|x| x == d);
        let need_zero_left = if !has_left {
            0
        } else if start_side(Direction::Right) {
            2
        } else {
            1
        };
        let need_one_right = if !has_right {
            0
        } else if start_side(Direction::Left) {
            2
        } else {
            1
        };
        if s.color.is_some() && s.sent_zero_left >= need_zero_left && s.sent_one_right >= need_one_right {
            s.halted = true;
        }
    }

    fn width(&self, t: &Tokens) -> u32 {
        u32::from(t.zero) + u32::from(t.one)
    }

    fn color(&self, s: &SilentState) -> Option<u8> {
        s.color
    }

    fn is_halted(&self, s: &SilentState) -> bool {
        s.halted
    }

    fn needs_tick(&self, s: &SilentState) -> bool {
        matches!(s.left, Count::Running(_)) || matches!(s.right, Count::Running(_))
    }

    fn memory_bits(&self, s: &SilentState) -> Result<u64, SchemaError> {
        let top = 2 * self.n.saturating_sub(1);
        Ok(MemoryLayout::new()
            .counter("left", s.left.raw(), top)?
            .counter("right", s.right.raw(), top)?
            .flags(4)
            .counter("sent_zero_left", u64::from(s.sent_zero_left), 2)?
            .counter("sent_one_right", u64::from(s.sent_one_right), 2)?
            .color("color", s.color, self.k)?
            .flags(2)
            .bits())
    }
}
