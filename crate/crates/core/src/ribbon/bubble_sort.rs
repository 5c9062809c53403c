//! Bubble Sort: the wake wave hands each agent a cyclic label and its
//! position parity relative to the start; agents then run odd-even
//! transposition on their labels until the line is sorted.
//!
//! In a round where agent p pairs with its neighbor, both send their current
//! value (unless the partner already holds it), and on the next round the
//! left one keeps the minimum and the right one the maximum. The run is
//! silent: nothing detects the end; the harness observes quiescence.

use crate::sim::{color_bits, LocalView, MemoryLayout, MessageSchema, Program, SchemaError, StepCtx};
use crate::topology::{AgentId, Direction};

const LR: [Direction; 2] = [Direction::Left, Direction::Right];

#[derive(Debug, Clone)]
pub struct BubbleSort {
    k: u8,
}

impl BubbleSort {
    pub fn new(k: u8) -> Self {
        BubbleSort { k }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SortMsg {
    /// Label and position parity for the receiver.
    Wake {
        label: u8,
        parity: u8,
    },
    Value(u8),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SortState {
    pub value: u8,
    pub parity: u8,
    /// Direction of the starting agent; `None` at the start.
    pub side: Option<Direction>,
    pub neighbors: [bool; 2],
    pub last_sent: [Option<u8>; 2],
    pub cache: [Option<u8>; 2],
    /// Partner of last round's exchange, if this agent sent in it.
    pub pending: Option<Direction>,
}

fn slot(d: Direction) -> usize {
    if d == Direction::Left {
        0
    } else {
        1
    }
}

impl SortState {
    fn partner(&self, round_parity: u8) -> Direction {
        if self.parity == round_parity {
            Direction::Right
        } else {
            Direction::Left
        }
    }

    /// Whether the pair with the neighbor in `d` exchanges at local round `l`.
    fn pair_active(&self, d: Direction, l: u64) -> bool {
        self.neighbors[slot(d)] && (self.side == Some(d) || l >= 1)
    }
}

impl Program for BubbleSort {
    type State = SortState;
    type Msg = SortMsg;

    fn schema(&self) -> MessageSchema {
        let w = color_bits(self.k);
        MessageSchema::new(vec![("value", w), ("wake", w + 1)])
    }

    fn init(&self, _: AgentId, view: &LocalView) -> SortState {
        SortState {
            value: 1,
            parity: 0,
            side: None,
            neighbors: [view.has_neighbor(Direction::Left), view.has_neighbor(Direction::Right)],
            last_sent: [None, None],
            cache: [None, None],
            pending: None,
        }
    }

    fn step(&self, s: &mut SortState, ctx: &mut StepCtx<'_, SortMsg>) {
        let l = ctx.local_round();
        if l == 0 {
            let (label, parity) = if ctx.view().is_start() {
                (0u8, 0u8)
            } else {
                let from = LR.into_iter().find(|&d| ctx.received(d).is_some()).expect("woken by a message");
                s.side = Some(from);
                match ctx.take(from) {
                    Some(SortMsg::Wake { label, parity }) => (label, parity),
                    other => panic!("expected a wake message, got {other:?}"),
                }
            };
            s.value = label + 1;
            s.parity = parity;
            for d in LR {
                if ctx.has_neighbor(d) && s.side != Some(d) {
                    let next = if d == Direction::Right { (label + 1) % self.k } else { (label + self.k - 1) % self.k };
                    ctx.send(d, SortMsg::Wake { label: next, parity: 1 - parity });
                }
            }
        } else {
            let round_parity = ((u64::from(s.parity) + l) % 2) as u8;
            let prev = s.partner(1 - round_parity);
            if s.pair_active(prev, l - 1) {
                if let Some(SortMsg::Value(v)) = ctx.take(prev) {
                    s.cache[slot(prev)] = Some(v);
                }
                if let Some(v) = s.cache[slot(prev)] {
                    s.value = if prev == Direction::Right { s.value.min(v) } else { s.value.max(v) };
                }
            }
            s.pending = None;
        }
        let round_parity = ((u64::from(s.parity) + l) % 2) as u8;
        let d = s.partner(round_parity);
        if s.pair_active(d, l) && s.last_sent[slot(d)] != Some(s.value) {
            ctx.send(d, SortMsg::Value(s.value));
            s.last_sent[slot(d)] = Some(s.value);
            s.pending = Some(d);
        }
    }

    fn width(&self, m: &SortMsg) -> u32 {
        let w = color_bits(self.k);
        match m {
            SortMsg::Wake { .. } => w + 1,
            SortMsg::Value(_) => w,
        }
    }

    fn color(&self, s: &SortState) -> Option<u8> {
        Some(s.value)
    }

    fn is_halted(&self, _: &SortState) -> bool {
        false
    }

    fn needs_tick(&self, s: &SortState) -> bool {
        s.pending.is_some() || LR.into_iter().any(|d| s.neighbors[slot(d)] && s.last_sent[slot(d)] != Some(s.value))
    }

    fn memory_bits(&self, s: &SortState) -> Result<u64, SchemaError> {
        let mut m = MemoryLayout::new().color("value", Some(s.value), self.k)?.flags(1 + 2 + 2 + 2);
        for i in 0..2 {
            m = m.color("last_sent", s.last_sent[i], self.k)?.flag();
            m = m.color("cache", s.cache[i], self.k)?.flag();
        }
        Ok(m.bits())
    }
}
