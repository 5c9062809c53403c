//! Up & Down: the starting agent's row runs a ribbon program; every row
//! agent copies its color up and down its column, and column agents adopt
//! and forward it.

use crate::sim::{color_bits, LocalView, MemoryLayout, MessageSchema, Program, SchemaError, StepCtx};
use crate::topology::{AgentId, Direction};

#[derive(Debug, Clone)]
pub struct UpDown<P> {
    inner: P,
    k: u8,
    /// Column agents halt after forwarding. Off for stabilizing rows whose
    /// colors may change after first being sent.
    halting: bool,
}

impl<P: Program> UpDown<P> {
    pub fn new(inner: P, k: u8) -> Self {
        UpDown { inner, k, halting: true }
    }

    /// For rows that never halt (Bubble Sort): re-send on every change and
    /// keep column agents listening.
    pub fn stabilizing(inner: P, k: u8) -> Self {
        UpDown { inner, k, halting: false }
    }

    pub fn inner(&self) -> &P {
        &self.inner
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum UpDownState<S> {
    /// Woken but role not yet known; holds the id for the inner `init`.
    Unknown(AgentId),
    Row {
        inner: S,
        sent: Option<u8>,
    },
    Column {
        color: Option<u8>,
        halted: bool,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub enum UpDownMsg<M> {
    Row(M),
    Color(u8),
}

impl<P: Program> Program for UpDown<P> {
    type State = UpDownState<P::State>;
    type Msg = UpDownMsg<P::Msg>;

    fn schema(&self) -> MessageSchema {
        let mut s = self.inner.schema();
        s.kinds.push(("color", color_bits(self.k)));
        s
    }

    fn init(&self, agent: AgentId, view: &LocalView) -> Self::State {
        if view.is_start() {
            UpDownState::Row { inner: self.inner.init(agent, &view.horizontal()), sent: None }
        } else {
            UpDownState::Unknown(agent)
        }
    }

    fn step(&self, s: &mut Self::State, ctx: &mut StepCtx<'_, Self::Msg>) {
        if let UpDownState::Unknown(agent) = *s {
            let vertical = [Direction::Up, Direction::Down].into_iter().any(|d| ctx.received(d).is_some());
            *s = if vertical {
                UpDownState::Column { color: None, halted: false }
            } else {
                UpDownState::Row { inner: self.inner.init(agent, &ctx.view().horizontal()), sent: None }
            };
        }
        match s {
            UpDownState::Row { inner, sent } => {
                let mut inbox = [None, None, None, None];
                for d in [Direction::Left, Direction::Right] {
                    if let Some(UpDownMsg::Row(m)) = ctx.take(d) {
                        inbox[d.index()] = Some(m);
                    }
                }
                if !self.inner.is_halted(inner) {
                    let view = ctx.view().horizontal();
                    let round = ctx.local_round();
                    let ((), out) = ctx.nest(inbox, view, round, |c| self.inner.step(inner, c));
                    for d in [Direction::Left, Direction::Right] {
                        if let Some(m) = out[d.index()].clone() {
                            ctx.send(d, UpDownMsg::Row(m));
                        }
                    }
                }
                if let Some(c) = self.inner.color(inner) {
                    if *sent != Some(c) {
                        for d in [Direction::Up, Direction::Down] {
                            if ctx.has_neighbor(d) {
                                ctx.send(d, UpDownMsg::Color(c));
                            }
                        }
                        *sent = Some(c);
                    }
                }
            }
            UpDownState::Column { color, halted } => {
                for from in [Direction::Up, Direction::Down] {
                    if let Some(UpDownMsg::Color(c)) = ctx.take(from) {
                        *color = Some(c);
                        if ctx.has_neighbor(from.opposite()) {
                            ctx.send(from.opposite(), UpDownMsg::Color(c));
                        }
                        *halted = self.halting;
                    }
                }
            }
            UpDownState::Unknown(_) => unreachable!("role fixed above"),
        }
    }

    fn width(&self, m: &Self::Msg) -> u32 {
        match m {
            UpDownMsg::Row(m) => self.inner.width(m),
            UpDownMsg::Color(_) => color_bits(self.k),
        }
    }

    fn color(&self, s: &Self::State) -> Option<u8> {
        match s {
            UpDownState::Unknown(_) => None,
            UpDownState::Row { inner, .. } => self.inner.color(inner),
            UpDownState::Column { color, .. } => *color,
        }
    }

    fn is_halted(&self, s: &Self::State) -> bool {
        match s {
            UpDownState::Unknown(_) => false,
            UpDownState::Row { inner, sent } => {
                self.inner.is_halted(inner) && self.inner.color(inner).is_some() && *sent == self.inner.color(inner)
            }
            UpDownState::Column { halted, .. } => *halted,
        }
    }

    fn needs_tick(&self, s: &Self::State) -> bool {
        match s {
            UpDownState::Unknown(_) => true,
            UpDownState::Row { inner, .. } => !self.inner.is_halted(inner) && self.inner.needs_tick(inner),
            UpDownState::Column { .. } => false,
        }
    }

    fn memory_bits(&self, s: &Self::State) -> Result<u64, SchemaError> {
        let m = MemoryLayout::new().flags(2);
        Ok(match s {
            UpDownState::Unknown(_) => m.bits(),
            UpDownState::Row { inner, sent } => {
                m.raw(self.inner.memory_bits(inner)?).color("sent", *sent, self.k)?.flag().bits()
            }
            UpDownState::Column { color, .. } => m.color("color", *color, self.k)?.flag().bits(),
        })
    }
}
