//! Boost: every row runs a randomized ribbon program; each column then takes
//! a vote. A token descends the column tallying row colors, the first color
//! to reach `T` wins, and the winner is broadcast through the column.
//!
//! A vertical wake wave runs along the starting column first; each agent it
//! reaches starts its own row. If the token reaches the bottom with no color
//! at `T`, the plurality color wins, ties going to the lowest color.

use crate::sim::{bits_for, color_bits, LocalView, MemoryLayout, MessageSchema, Program, SchemaError, StepCtx};
use crate::topology::{AgentId, Direction};

const TAG_BITS: u32 = 2;

/// `ceil(72·log2 n)`.
pub fn winner_threshold(n: usize) -> u32 {
    (72.0 * (n.max(1) as f64).log2()).ceil() as u32
}

#[derive(Debug, Clone)]
pub struct Boost<P> {
    inner: P,
    k: u8,
    n: usize,
    t: u32,
}

impl<P: Program> Boost<P> {
    /// `n` is the total agent count, used for `T` and the schema bounds.
    pub fn new(inner: P, k: u8, n: usize) -> Self {
        Boost { inner, k, n, t: winner_threshold(n).max(1) }
    }

    /// Override `T`.
    pub fn with_threshold(mut self, t: u32) -> Self {
        self.t = t.max(1);
        self
    }

    pub fn threshold(&self) -> u32 {
        self.t
    }

    fn tally_bits(&self) -> u32 {
        u32::from(self.k) * bits_for(u64::from(self.t))
    }

    /// Winner of a finished tally: the first color at `T`, else plurality.
    fn verdict(&self, counts: &[u32], at_bottom: bool) -> Option<u8> {
        if let Some(i) = counts.iter().position(|&c| c >= self.t) {
            return Some(i as u8 + 1);
        }
        if !at_bottom {
            return None;
        }
        let best = *counts.iter().max()?;
        counts.iter().position(|&c| c == best).map(|i| i as u8 + 1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoostState<S> {
    pub agent: AgentId,
    pub inner: Option<S>,
    /// This agent starts its row.
    pub row_start: bool,
    /// Local round at which the row program started.
    pub inner_born: u64,
    /// Tally held while waiting for this agent's own row color.
    pub token: Option<Vec<u32>>,
    /// This agent's row color has been added to the column tally.
    pub tallied: bool,
    pub winner: Option<u8>,
    /// Vertical messages waiting for a free link, indexed up then down.
    pub queued: [Option<BoostMsg<()>>; 2],
    pub halted: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub enum BoostMsg<M> {
    Row(M),
    Wake,
    Tally(Vec<u32>),
    Winner(u8),
}

impl<P: Program> Boost<P> {
    fn start_row(&self, s: &mut BoostState<P::State>, view: &LocalView, at: u64) {
        if s.inner.is_none() {
            s.inner = Some(self.inner.init(s.agent, view));
            s.row_start = view.is_start();
            s.inner_born = at;
        }
    }

    fn announce(
        &self,
        s: &mut BoostState<P::State>,
        ctx: &mut StepCtx<'_, BoostMsg<P::Msg>>,
        c: u8,
        skip: Option<Direction>,
    ) {
        s.winner = Some(c);
        for d in [Direction::Up, Direction::Down] {
            if Some(d) != skip && ctx.has_neighbor(d) {
                send_vertical(s, ctx, d, BoostMsg::Winner(c));
            }
        }
    }
}

fn vslot(d: Direction) -> usize {
    usize::from(d == Direction::Down)
}

/// Send now if the link is free, else queue for the next round.
fn send_vertical<S, M>(s: &mut BoostState<S>, ctx: &mut StepCtx<'_, BoostMsg<M>>, d: Direction, msg: BoostMsg<()>) {
    if ctx.sent(d) || s.queued[vslot(d)].is_some() {
        assert!(s.queued[vslot(d)].is_none(), "vertical queue overflow");
        s.queued[vslot(d)] = Some(msg);
    } else {
        ctx.send(d, lift(msg));
    }
}

fn lift<M>(m: BoostMsg<()>) -> BoostMsg<M> {
    match m {
        BoostMsg::Wake => BoostMsg::Wake,
        BoostMsg::Tally(t) => BoostMsg::Tally(t),
        BoostMsg::Winner(c) => BoostMsg::Winner(c),
        BoostMsg::Row(()) => unreachable!("row messages are never queued"),
    }
}

impl<P: Program> Program for Boost<P> {
    type State = BoostState<P::State>;
    type Msg = BoostMsg<P::Msg>;

    fn schema(&self) -> MessageSchema {
        let mut s = self.inner.schema();
        s.kinds.push(("wake", TAG_BITS));
        s.kinds.push(("tally", TAG_BITS + self.tally_bits()));
        s.kinds.push(("winner", TAG_BITS + color_bits(self.k)));
        s
    }

    fn init(&self, agent: AgentId, view: &LocalView) -> Self::State {
        let mut s = BoostState {
            agent,
            inner: None,
            row_start: false,
            inner_born: 0,
            token: None,
            tallied: false,
            winner: None,
            queued: [None, None],
            halted: false,
        };
        if view.is_start() {
            self.start_row(&mut s, &view.horizontal(), 0);
        }
        s
    }

    fn step(&self, s: &mut Self::State, ctx: &mut StepCtx<'_, Self::Msg>) {
        let round = ctx.local_round();
        let hview = ctx.view().horizontal();
        for d in [Direction::Up, Direction::Down] {
            if let Some(m) = s.queued[vslot(d)].take() {
                ctx.send(d, lift(m));
            }
        }
        if round == 0 && ctx.view().is_start() {
            for d in [Direction::Up, Direction::Down] {
                if ctx.has_neighbor(d) {
                    ctx.send(d, BoostMsg::Wake);
                }
            }
        }

        let mut row_inbox = [None, None, None, None];
        for d in [Direction::Left, Direction::Right] {
            if let Some(BoostMsg::Row(m)) = ctx.take(d) {
                row_inbox[d.index()] = Some(m);
            }
        }
        if row_inbox.iter().any(Option::is_some) {
            self.start_row(s, &hview.with_start(false), round);
        }
        for from in [Direction::Up, Direction::Down] {
            match ctx.take(from) {
                Some(BoostMsg::Wake) => {
                    if ctx.has_neighbor(from.opposite()) {
                        send_vertical(s, ctx, from.opposite(), BoostMsg::Wake);
                    }
                    self.start_row(s, &hview.with_start(true), round);
                }
                Some(BoostMsg::Tally(t)) => s.token = Some(t),
                Some(BoostMsg::Winner(c)) => self.announce(s, ctx, c, Some(from)),
                Some(BoostMsg::Row(_)) => {}
                None => {}
            }
        }

        if let Some(inner) = s.inner.as_mut() {
            if !self.inner.is_halted(inner) {
                let local = round - s.inner_born;
                let view = hview.with_start(s.row_start);
                let ((), out) = ctx.nest(row_inbox, view, local, |c| self.inner.step(inner, c));
                for d in [Direction::Left, Direction::Right] {
                    if let Some(m) = out[d.index()].clone() {
                        ctx.send(d, BoostMsg::Row(m));
                    }
                }
            }
        }

        let row_color = s.inner.as_ref().and_then(|i| self.inner.color(i));
        if !s.tallied && s.winner.is_none() && !ctx.has_neighbor(Direction::Up) && row_color.is_some() {
            s.token = Some(vec![0; usize::from(self.k)]);
        }
        if let (Some(c), Some(mut tally)) = (row_color, s.token.take()) {
            s.tallied = true;
            tally[usize::from(c - 1)] += 1;
            let at_bottom = !ctx.has_neighbor(Direction::Down);
            match self.verdict(&tally, at_bottom) {
                Some(w) => self.announce(s, ctx, w, None),
                None => send_vertical(s, ctx, Direction::Down, BoostMsg::Tally(tally)),
            }
        }

        let inner_done = s.inner.as_ref().is_some_and(|i| self.inner.is_halted(i));
        s.halted = inner_done && s.winner.is_some() && s.queued.iter().all(Option::is_none);
    }

    fn width(&self, m: &Self::Msg) -> u32 {
        match m {
            BoostMsg::Row(m) => self.inner.width(m),
            BoostMsg::Wake => TAG_BITS,
            BoostMsg::Tally(_) => TAG_BITS + self.tally_bits(),
            BoostMsg::Winner(_) => TAG_BITS + color_bits(self.k),
        }
    }

    fn color(&self, s: &Self::State) -> Option<u8> {
        s.winner
    }

    fn is_halted(&self, s: &Self::State) -> bool {
        s.halted
    }

    fn needs_tick(&self, s: &Self::State) -> bool {
        s.queued.iter().any(Option::is_some)
            || s.inner.as_ref().is_some_and(|i| !self.inner.is_halted(i) && self.inner.needs_tick(i))
    }

    fn memory_bits(&self, s: &Self::State) -> Result<u64, SchemaError> {
        let inner = match &s.inner {
            Some(i) => self.inner.memory_bits(i)?,
            None => 0,
        };
        let mut m = MemoryLayout::new()
            .raw(inner)
            .counter("inner_born", s.inner_born, 10 * self.n as u64)?
            .color("winner", s.winner, self.k)?
            .flags(5);
        for q in s.queued.iter().flatten() {
            m = m.raw(u64::from(self.width(&lift::<P::Msg>(q.clone()))));
        }
        m = m.flags(2);
        let top = u64::from(self.t);
        for i in 0..usize::from(self.k) {
            m = m.counter("tally", s.token.as_ref().map_or(0, |t| u64::from(t[i])), top)?;
        }
        Ok(m.bits())
    }
}

/// Harness row program that colors agent `i` with `colors[i]`. It forwards a
/// one-bit wake along the row and halts at once.
#[derive(Debug, Clone)]
pub struct InjectedRow {
    colors: Vec<u8>,
    k: u8,
}

impl InjectedRow {
    pub fn new(colors: Vec<u8>, k: u8) -> Self {
        InjectedRow { colors, k }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InjectedState {
    pub color: u8,
    pub done: bool,
}

impl Program for InjectedRow {
    type State = InjectedState;
    type Msg = ();

    fn schema(&self) -> MessageSchema {
        MessageSchema::new(vec![("wake", 1)])
    }

    fn init(&self, agent: AgentId, _: &LocalView) -> InjectedState {
        InjectedState { color: self.colors[agent], done: false }
    }

    fn step(&self, s: &mut InjectedState, ctx: &mut StepCtx<'_, ()>) {
        for d in [Direction::Left, Direction::Right] {
            if ctx.has_neighbor(d) && ctx.received(d).is_none() && (ctx.view().is_start() || ctx.has_mail()) {
                ctx.send(d, ());
            }
        }
        s.done = true;
    }

    fn width(&self, _: &()) -> u32 {
        1
    }

    fn color(&self, s: &InjectedState) -> Option<u8> {
        s.done.then_some(s.color)
    }

    fn is_halted(&self, s: &InjectedState) -> bool {
        s.done
    }

    fn memory_bits(&self, s: &InjectedState) -> Result<u64, SchemaError> {
        Ok(MemoryLayout::new().color("color", Some(s.color), self.k)?.flag().bits())
    }
}
