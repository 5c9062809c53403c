//! Deterministic synchronous scheduler.
//!
//! Each round has three phases: envelopes sent in the previous round are
//! delivered (waking sleeping recipients), every awake agent with mail or a
//! pending tick runs one step in ascending id order, and the step's outgoing
//! envelopes are queued for the next round.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Debug;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::topology::{AgentId, Direction, Topology};

/// What an agent can see of its surroundings: which neighbors exist and
/// whether it is the starting agent.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LocalView {
    neighbors: [bool; 4],
    is_start: bool,
}

impl LocalView {
    pub fn new(neighbors: [bool; 4], is_start: bool) -> Self {
        LocalView { neighbors, is_start }
    }

    pub fn has_neighbor(&self, dir: Direction) -> bool {
        self.neighbors[dir.index()]
    }

    pub fn is_start(&self) -> bool {
        self.is_start
    }

    /// A copy restricted to the left/right axis.
    pub fn horizontal(&self) -> LocalView {
        let mut nb = self.neighbors;
        nb[Direction::Up.index()] = false;
        nb[Direction::Down.index()] = false;
        LocalView { neighbors: nb, is_start: self.is_start }
    }

    pub fn with_start(&self, is_start: bool) -> LocalView {
        LocalView { neighbors: self.neighbors, is_start }
    }
}

/// Permitted payload widths, by message kind.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MessageSchema {
    pub kinds: Vec<(&'static str, u32)>,
}

impl MessageSchema {
    pub fn new(kinds: Vec<(&'static str, u32)>) -> Self {
        MessageSchema { kinds }
    }

    pub fn allows(&self, width: u32) -> bool {
        self.kinds.iter().any(|&(_, w)| w == width)
    }
}

/// A state field exceeded its declared range.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SchemaError {
    pub field: &'static str,
    pub value: u64,
    pub max: u64,
}

/// Bits needed to store any value in `0..=max`.
pub fn bits_for(max: u64) -> u32 {
    64 - max.leading_zeros()
}

/// Bits needed for a color in `1..=k`.
pub fn color_bits(k: u8) -> u32 {
    bits_for(u64::from(k.max(1)) - 1)
}

/// Accumulates the declared size of an agent state.
#[derive(Debug, Clone, Copy, Default)]
pub struct MemoryLayout {
    bits: u64,
}

impl MemoryLayout {
    pub fn new() -> Self {
        MemoryLayout { bits: 0 }
    }

    pub fn counter(self, field: &'static str, value: u64, max: u64) -> std::result::Result<Self, SchemaError> {
        if value > max {
            return Err(SchemaError { field, value, max });
        }
        Ok(MemoryLayout { bits: self.bits + u64::from(bits_for(max)) })
    }

    pub fn opt_counter(
        self,
        field: &'static str,
        value: Option<u64>,
        max: u64,
    ) -> std::result::Result<Self, SchemaError> {
        self.counter(field, value.unwrap_or(0), max)
    }

    pub fn color(self, field: &'static str, value: Option<u8>, k: u8) -> std::result::Result<Self, SchemaError> {
        if let Some(c) = value {
            if c == 0 || c > k {
                return Err(SchemaError { field, value: u64::from(c), max: u64::from(k) });
            }
        }
        Ok(MemoryLayout { bits: self.bits + u64::from(color_bits(k)) })
    }

    pub fn flag(self) -> Self {
        self.flags(1)
    }

    pub fn flags(self, count: u64) -> Self {
        MemoryLayout { bits: self.bits + count }
    }

    pub fn raw(self, bits: u64) -> Self {
        MemoryLayout { bits: self.bits + bits }
    }

    pub fn bits(self) -> u64 {
        self.bits
    }
}

/// A per-agent state machine run by the simulator.
///
/// `init` receives the agent id so that harness-input programs (synthetic
/// rows, repair inputs) can look up injected data. Algorithms proper must
/// not depend on it.
pub trait Program {
    type State: Clone + PartialEq + Debug;
    type Msg: Clone + Debug;

    fn schema(&self) -> MessageSchema;
    fn init(&self, agent: AgentId, view: &LocalView) -> Self::State;
    fn step(&self, state: &mut Self::State, ctx: &mut StepCtx<'_, Self::Msg>);
    fn width(&self, msg: &Self::Msg) -> u32;
    fn color(&self, state: &Self::State) -> Option<u8>;
    fn is_halted(&self, state: &Self::State) -> bool;
    fn memory_bits(&self, state: &Self::State) -> std::result::Result<u64, SchemaError>;

    /// Whether the agent must be stepped in a round where it has no mail.
    fn needs_tick(&self, _state: &Self::State) -> bool {
        true
    }
}

/// Everything an agent may touch during one step.
pub struct StepCtx<'a, M> {
    inbox: [Option<M>; 4],
    outbox: [Option<M>; 4],
    view: LocalView,
    local_round: u64,
    rng: &'a mut ChaCha8Rng,
    violation: Option<String>,
}

impl<'a, M> StepCtx<'a, M> {
    pub fn new(inbox: [Option<M>; 4], view: LocalView, local_round: u64, rng: &'a mut ChaCha8Rng) -> Self {
        StepCtx { inbox, outbox: [None, None, None, None], view, local_round, rng, violation: None }
    }

    /// Message that arrived from the neighbor in direction `from`.
    pub fn received(&self, from: Direction) -> Option<&M> {
        self.inbox[from.index()].as_ref()
    }

    pub fn take(&mut self, from: Direction) -> Option<M> {
        self.inbox[from.index()].take()
    }

    pub fn has_mail(&self) -> bool {
        self.inbox.iter().any(Option::is_some)
    }

    pub fn send(&mut self, dir: Direction, msg: M) {
        if !self.view.has_neighbor(dir) {
            self.violation.get_or_insert_with(|| format!("send {dir:?} with no neighbor"));
            return;
        }
        if self.outbox[dir.index()].is_some() {
            self.violation.get_or_insert_with(|| format!("two sends {dir:?} in one round"));
            return;
        }
        self.outbox[dir.index()] = Some(msg);
    }

    pub fn sent(&self, dir: Direction) -> bool {
        self.outbox[dir.index()].is_some()
    }

    pub fn view(&self) -> &LocalView {
        &self.view
    }

    pub fn has_neighbor(&self, dir: Direction) -> bool {
        self.view.has_neighbor(dir)
    }

    /// Rounds elapsed since this agent woke.
    pub fn local_round(&self) -> u64 {
        self.local_round
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        self.rng
    }

    /// Run a nested program step with its own inbox and view, sharing this
    /// step's RNG. Returns the nested outbox.
    pub fn nest<N, R>(
        &mut self,
        inbox: [Option<N>; 4],
        view: LocalView,
        local_round: u64,
        f: impl FnOnce(&mut StepCtx<'_, N>) -> R,
    ) -> (R, [Option<N>; 4]) {
        let mut inner = StepCtx::new(inbox, view, local_round, &mut *self.rng);
        let r = f(&mut inner);
        if let Some(v) = inner.violation.take() {
            self.violation.get_or_insert(v);
        }
        (r, inner.outbox)
    }
}

/// One delivered envelope, as recorded in the delivery log.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Delivery {
    pub round: u64,
    pub from: AgentId,
    pub to: AgentId,
    /// Direction of travel.
    pub dir: Direction,
    pub width: u32,
    pub payload: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trace {
    pub n: usize,
    pub rounds: u64,
    pub total_message_bits: u64,
    pub message_count: u64,
    pub peak_memory_bits: u64,
    pub agent_peak_memory_bits: Vec<u64>,
    pub colors: Vec<Option<u8>>,
    pub halted: Vec<bool>,
    pub quiescent_round: Option<u64>,
    pub woke_round: Vec<Option<u64>>,
    pub decided_round: Vec<Option<u64>>,
    pub last_change_round: Vec<Option<u64>>,
    pub deliveries: Vec<Delivery>,
}

/// The compact serialized form of a trace.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceRecord {
    pub rounds: u64,
    pub msg_bits: u64,
    pub peak_mem_bits: u64,
    pub colors: Vec<Option<u8>>,
    pub quiescent_round: Option<u64>,
}

impl Trace {
    pub fn record(&self) -> TraceRecord {
        TraceRecord {
            rounds: self.rounds,
            msg_bits: self.total_message_bits,
            peak_mem_bits: self.peak_memory_bits,
            colors: self.colors.clone(),
            quiescent_round: self.quiescent_round,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.record()).expect("trace record serializes")
    }

    /// Sum of widths in the delivery log.
    pub fn recount_bits(&self) -> u64 {
        self.deliveries.iter().map(|d| u64::from(d.width)).sum()
    }

    /// Deliveries received by `agent` up to and including `until`.
    pub fn transcript(&self, agent: AgentId, until: u64) -> Vec<&Delivery> {
        self.deliveries.iter().filter(|d| d.to == agent && d.round <= until).collect()
    }

    /// Round at which the last agent woke.
    pub fn all_awake_round(&self) -> Option<u64> {
        self.woke_round.iter().copied().collect::<Option<Vec<_>>>()?.into_iter().max()
    }
}

/// Which agents are awake at round 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Wake {
    Start(AgentId),
    All,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunOptions {
    pub seed: u64,
    /// Defaults to `10 * n` when `None`.
    pub max_rounds: Option<u64>,
    pub log_deliveries: bool,
}

impl RunOptions {
    pub fn seeded(seed: u64) -> Self {
        RunOptions { seed, max_rounds: None, log_deliveries: false }
    }

    pub fn logged(mut self) -> Self {
        self.log_deliveries = true;
        self
    }

    pub fn max_rounds(mut self, max: u64) -> Self {
        self.max_rounds = Some(max);
        self
    }
}

/// Final trace plus the agents' final states (`None` for agents that never woke).
#[derive(Debug, Clone)]
pub struct Outcome<S> {
    pub trace: Trace,
    pub states: Vec<Option<S>>,
}

/// Seed for trial `index` of a run with master seed `master`: the first word
/// of the ChaCha8 stream `index` keyed by `master`.
pub fn trial_seed(master: u64, index: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(index);
    rng.next_u64()
}

pub fn default_max_rounds(n: usize) -> u64 {
    10 * n as u64
}

/// Run `program` from a single starting agent.
pub fn run<P: Program>(program: &P, topo: &Topology, start: AgentId, seed: u64, max_rounds: u64) -> Result<Trace> {
    let opts = RunOptions::seeded(seed).max_rounds(max_rounds);
    simulate(program, topo, Wake::Start(start), &opts).map(|o| o.trace)
}

pub fn simulate<P: Program>(program: &P, topo: &Topology, wake: Wake, opts: &RunOptions) -> Result<Outcome<P::State>> {
    simulate_observed(program, topo, wake, opts, |_, _| {})
}

struct Envelope<M> {
    from: AgentId,
    to: AgentId,
    dir: Direction,
    width: u32,
    msg: M,
}

/// Like [`simulate`], calling `observer(round, states)` after each compute phase.
pub fn simulate_observed<P, F>(
    program: &P,
    topo: &Topology,
    wake: Wake,
    opts: &RunOptions,
    mut observer: F,
) -> Result<Outcome<P::State>>
where
    P: Program,
    F: FnMut(u64, &[Option<P::State>]),
{
    let n = topo.len();
    let max_rounds = opts.max_rounds.unwrap_or_else(|| default_max_rounds(n));
    if max_rounds == 0 {
        return Err(Error::InvalidParameter("max_rounds must be at least 1".into()));
    }
    let start = match wake {
        Wake::Start(s) => {
            topo.check(s)?;
            Some(s)
        }
        Wake::All => None,
    };
    let schema = program.schema();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let view_of = |id: AgentId| {
        let mut nb = [false; 4];
        for d in Direction::ALL {
            nb[d.index()] = topo.neighbor(id, d).is_some();
        }
        LocalView::new(nb, start == Some(id))
    };

    let mut states: Vec<Option<P::State>> = vec![None; n];
    let mut trace = Trace {
        n,
        rounds: 0,
        total_message_bits: 0,
        message_count: 0,
        peak_memory_bits: 0,
        agent_peak_memory_bits: vec![0; n],
        colors: vec![None; n],
        halted: vec![false; n],
        quiescent_round: None,
        woke_round: vec![None; n],
        decided_round: vec![None; n],
        last_change_round: vec![None; n],
        deliveries: Vec::new(),
    };
    let mut halted_count = 0usize;
    let mut ticking: BTreeSet<AgentId> = BTreeSet::new();
    let mut in_flight: Vec<Envelope<P::Msg>> = Vec::new();

    let charge = |trace: &mut Trace, id: AgentId, state: &P::State| -> Result<()> {
        let bits = program.memory_bits(state).map_err(|e| Error::SchemaViolation {
            agent: id,
            field: e.field,
            value: e.value,
            max: e.max,
        })?;
        let slot = &mut trace.agent_peak_memory_bits[id];
        *slot = (*slot).max(bits);
        trace.peak_memory_bits = trace.peak_memory_bits.max(bits);
        Ok(())
    };

    let initial: Vec<AgentId> = match start {
        Some(s) => vec![s],
        None => (0..n).collect(),
    };
    for id in initial {
        let st = program.init(id, &view_of(id));
        charge(&mut trace, id, &st)?;
        trace.woke_round[id] = Some(0);
        ticking.insert(id);
        states[id] = Some(st);
    }

    let mut round: u64 = 0;
    let mut last_active: Option<u64> = None;
    let mut quiet_rounds = 0u32;
    loop {
        let mut active = false;

        // Deliver.
        let mut inboxes: BTreeMap<AgentId, [Option<P::Msg>; 4]> = BTreeMap::new();
        for env in in_flight.drain(..) {
            trace.total_message_bits += u64::from(env.width);
            trace.message_count += 1;
            if opts.log_deliveries {
                trace.deliveries.push(Delivery {
                    round,
                    from: env.from,
                    to: env.to,
                    dir: env.dir,
                    width: env.width,
                    payload: format!("{:?}", env.msg),
                });
            }
            if trace.halted[env.to] {
                continue;
            }
            if states[env.to].is_none() {
                let st = program.init(env.to, &view_of(env.to));
                charge(&mut trace, env.to, &st)?;
                states[env.to] = Some(st);
                trace.woke_round[env.to] = Some(round);
                active = true;
            }
            let slot = inboxes.entry(env.to).or_insert_with(|| [None, None, None, None]);
            slot[env.dir.opposite().index()] = Some(env.msg);
        }

        // Compute.
        let mut order: Vec<AgentId> = inboxes.keys().copied().chain(ticking.iter().copied()).collect();
        order.sort_unstable();
        order.dedup();
        for id in order {
            if trace.halted[id] {
                continue;
            }
            let inbox = inboxes.remove(&id).unwrap_or([None, None, None, None]);
            let woke = trace.woke_round[id].expect("stepped agent is awake");
            let state = states[id].as_mut().expect("stepped agent has state");
            let before = state.clone();
            let mut ctx = StepCtx::new(inbox, view_of(id), round - woke, &mut rng);
            program.step(state, &mut ctx);
            if let Some(reason) = ctx.violation.take() {
                return Err(Error::Protocol { agent: id, reason });
            }
            for d in Direction::ALL {
                if let Some(msg) = ctx.outbox[d.index()].take() {
                    let width = program.width(&msg);
                    if !schema.allows(width) {
                        return Err(Error::Protocol {
                            agent: id,
                            reason: format!("payload width {width} not in schema {:?}", schema.kinds),
                        });
                    }
                    let to = topo.neighbor(id, d).expect("send checked neighbor");
                    in_flight.push(Envelope { from: id, to, dir: d, width, msg });
                    active = true;
                }
            }
            if *state != before {
                active = true;
                trace.last_change_round[id] = Some(round);
            }
            let state = states[id].as_ref().expect("state present");
            charge(&mut trace, id, state)?;
            let color = program.color(state);
            if color.is_some() && trace.decided_round[id].is_none() {
                trace.decided_round[id] = Some(round);
            }
            trace.colors[id] = color;
            if program.is_halted(state) {
                trace.halted[id] = true;
                halted_count += 1;
                ticking.remove(&id);
            } else if program.needs_tick(state) {
                ticking.insert(id);
            } else {
                ticking.remove(&id);
            }
        }

        observer(round, &states);

        if active {
            last_active = Some(round);
            quiet_rounds = 0;
            if round > max_rounds {
                trace.rounds = round;
                return Err(Error::Timeout { max_rounds, trace: Box::new(trace) });
            }
        } else {
            quiet_rounds += 1;
        }

        let finished_halted = halted_count == n && in_flight.is_empty();
        let finished_quiet = quiet_rounds >= 2 && in_flight.is_empty();
        if finished_halted || finished_quiet {
            trace.rounds = last_active.unwrap_or(0);
            if !finished_halted {
                trace.quiescent_round = Some(trace.rounds);
            }
            return Ok(Outcome { trace, states });
        }
        round += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::build_line;

    struct Idle;

    impl Program for Idle {
        type State = ();
        type Msg = ();
        fn schema(&self) -> MessageSchema {
            MessageSchema::new(vec![])
        }
        fn init(&self, _: AgentId, _: &LocalView) {}
        fn step(&self, _: &mut (), _: &mut StepCtx<'_, ()>) {}
        fn width(&self, _: &()) -> u32 {
            0
        }
        fn color(&self, _: &()) -> Option<u8> {
            None
        }
        fn is_halted(&self, _: &()) -> bool {
            false
        }
        fn memory_bits(&self, _: &()) -> std::result::Result<u64, SchemaError> {
            Ok(0)
        }
    }

    /// Forwards a one-bit wake away from its source; optionally endpoints
    /// echo once back toward the start.
    struct WakeWave {
        echo: bool,
    }

    #[derive(Debug, Clone, PartialEq)]
    struct WaveState {
        done: bool,
    }

    impl Program for WakeWave {
        type State = WaveState;
        type Msg = ();
        fn schema(&self) -> MessageSchema {
            MessageSchema::new(vec![("wake", 1)])
        }
        fn init(&self, _: AgentId, _: &LocalView) -> WaveState {
            WaveState { done: false }
        }
        fn step(&self, s: &mut WaveState, ctx: &mut StepCtx<'_, ()>) {
            if s.done {
                return;
            }
            s.done = true;
            if ctx.view().is_start() {
                for d in [Direction::Left, Direction::Right] {
                    if ctx.has_neighbor(d) {
                        ctx.send(d, ());
                    }
                }
                return;
            }
            let from = [Direction::Left, Direction::Right]
                .into_iter()
                .find(|&d| ctx.received(d).is_some())
                .expect("woken by a message");
            let onward = from.opposite();
            if ctx.has_neighbor(onward) {
                ctx.send(onward, ());
            } else if self.echo {
                ctx.send(from, ());
            }
        }
        fn width(&self, _: &()) -> u32 {
            1
        }
        fn color(&self, _: &WaveState) -> Option<u8> {
            None
        }
        fn is_halted(&self, _: &WaveState) -> bool {
            false
        }
        fn memory_bits(&self, _: &WaveState) -> std::result::Result<u64, SchemaError> {
            Ok(MemoryLayout::new().flag().bits())
        }
        fn needs_tick(&self, s: &WaveState) -> bool {
            !s.done
        }
    }

    #[test]
    fn idle_program_quiesces_immediately() {
        let topo = build_line(3).unwrap();
        let t = run(&Idle, &topo, 0, 1, 30).unwrap();
        assert_eq!(t.rounds, 0);
        assert_eq!(t.total_message_bits, 0);
        assert_eq!(t.quiescent_round, Some(0));
    }

    #[test]
    fn wake_wave_reaches_ends_by_round_two() {
        let topo = build_line(5).unwrap();
        let opts = RunOptions::seeded(0).logged();
        let plain = simulate(&WakeWave { echo: false }, &topo, Wake::Start(2), &opts).unwrap().trace;
        assert_eq!(plain.all_awake_round(), Some(2));
        assert_eq!(plain.total_message_bits, 4);
        let echo = simulate(&WakeWave { echo: true }, &topo, Wake::Start(2), &opts).unwrap().trace;
        assert_eq!(echo.all_awake_round(), Some(2));
        assert_eq!(echo.total_message_bits, 6);
        assert_eq!(echo.recount_bits(), 6);
    }

    #[test]
    fn start_out_of_range() {
        let topo = build_line(3).unwrap();
        assert!(matches!(run(&Idle, &topo, 3, 0, 10), Err(Error::IndexOutOfRange { .. })));
    }

    #[test]
    fn memory_layout_arithmetic() {
        assert_eq!(bits_for(0), 0);
        assert_eq!(bits_for(1), 1);
        assert_eq!(bits_for(8), 4);
        assert_eq!(color_bits(3), 2);
        assert_eq!(color_bits(2), 1);
        let m = MemoryLayout::new().color("c", Some(2), 3).unwrap();
        assert_eq!(m.bits(), 2);
        let m = MemoryLayout::new()
            .counter("nl", 5, 8)
            .and_then(|m| m.counter("nr", 8, 8))
            .and_then(|m| m.color("c", Some(1), 3))
            .unwrap();
        assert_eq!(m.bits(), 10);
        assert!(MemoryLayout::new().counter("x", 9, 8).is_err());
        assert!(MemoryLayout::new().color("c", Some(4), 3).is_err());
    }

    #[test]
    fn trace_record_json_fields() {
        let topo = build_line(3).unwrap();
        let t = run(&Idle, &topo, 1, 0, 10).unwrap();
        let v: serde_json::Value = serde_json::from_str(&t.to_json()).unwrap();
        for key in ["rounds", "msg_bits", "peak_mem_bits", "colors", "quiescent_round"] {
            assert!(v.get(key).is_some(), "{key}");
        }
    }
}
