//! Two-phase lockstep simulator for 2-d and 3-d mesh-connected computers.
//!
//! Every processor owns a bounded register file and one single-word link to
//! each grid neighbor (4 in 2-d, 6 in 3-d). A global step has a communication
//! sub-step — words queued on outgoing links last step arrive — followed by a
//! compute sub-step in which each processor reads its registers and arrived
//! words, then rewrites registers and queues at most one outgoing word per
//! link. Sends are double-buffered: a word queued in step `t` is observable
//! at the neighbor in step `t + 1`. The engine meters every run into a
//! [`StepLedger`] and enforces the register budget and link bandwidth,
//! reporting violations with the offending processor and step.

mod ledger;
mod route;

pub use ledger::StepLedger;
pub use route::{BlockMove, Region, WordMove};

use thiserror::Error;

use crate::algebra::Word;

/// Processor coordinate; `z` is always 0 on 2-d meshes.
pub type Coord = (usize, usize, usize);

/// Registers per processor when not configured otherwise.
pub const DEFAULT_WORD_BUDGET: usize = 32;

/// Smallest register budget any configuration may use.
pub const MIN_WORD_BUDGET: usize = 4;

/// Default runaway-program guard; override with `MESHGRAIN_STEP_CAP`.
pub const DEFAULT_STEP_CAP: u64 = 100_000_000;

/// Errors surfaced by the engine while validating or running a program.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EngineError {
    #[error("processor ({},{},{}) exceeded its register budget at step {step}: slot {slot} with budget {budget}", coord.0, coord.1, coord.2)]
    BudgetExceeded { coord: Coord, step: u64, slot: usize, budget: usize },
    #[error("processor ({},{},{}) queued two words on one link at step {step}", coord.0, coord.1, coord.2)]
    BandwidthViolation { coord: Coord, step: u64 },
    #[error("program still running after {0} steps; raise MESHGRAIN_STEP_CAP if intended")]
    NonHalting(u64),
    #[error("word budget must be at least {MIN_WORD_BUDGET}, got {0}")]
    BadBudget(usize),
    #[error("mesh edge must be positive")]
    BadEdge,
    #[error("cell programs may hold at most {max} state words, got {words}")]
    StateTooWide { words: usize, max: usize },
}

/// Mesh dimensionality: square (4 neighbors) or cubic (6 neighbors).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MeshDim {
    Two,
    Three,
}

impl MeshDim {
    pub fn axes(self) -> usize {
        match self {
            MeshDim::Two => 2,
            MeshDim::Three => 3,
        }
    }

    pub fn neighbor_count(self) -> usize {
        2 * self.axes()
    }
}

/// One of the six axis-aligned link directions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Dir {
    XPlus,
    XMinus,
    YPlus,
    YMinus,
    ZPlus,
    ZMinus,
}

impl Dir {
    pub const ALL: [Dir; 6] = [
        Dir::XPlus,
        Dir::XMinus,
        Dir::YPlus,
        Dir::YMinus,
        Dir::ZPlus,
        Dir::ZMinus,
    ];

    #[inline]
    pub fn index(self) -> usize {
        match self {
            Dir::XPlus => 0,
            Dir::XMinus => 1,
            Dir::YPlus => 2,
            Dir::YMinus => 3,
            Dir::ZPlus => 4,
            Dir::ZMinus => 5,
        }
    }

    #[inline]
    pub fn opposite(self) -> Dir {
        match self {
            Dir::XPlus => Dir::XMinus,
            Dir::XMinus => Dir::XPlus,
            Dir::YPlus => Dir::YMinus,
            Dir::YMinus => Dir::YPlus,
            Dir::ZPlus => Dir::ZMinus,
            Dir::ZMinus => Dir::ZPlus,
        }
    }

    /// Unit coordinate offset of this direction.
    pub fn offset(self) -> (isize, isize, isize) {
        match self {
            Dir::XPlus => (1, 0, 0),
            Dir::XMinus => (-1, 0, 0),
            Dir::YPlus => (0, 1, 0),
            Dir::YMinus => (0, -1, 0),
            Dir::ZPlus => (0, 0, 1),
            Dir::ZMinus => (0, 0, -1),
        }
    }

    pub fn axis(self) -> usize {
        self.index() / 2
    }

    /// The `+` (1) and `-` (-1) directions along `axis`.
    pub fn along(axis: usize, sign: isize) -> Dir {
        let d = Dir::ALL[axis * 2 + usize::from(sign < 0)];
        debug_assert_eq!(d.axis(), axis);
        d
    }
}

/// Shape and resource limits of one simulated mesh.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MeshConfig {
    pub dim: MeshDim,
    pub edge: usize,
    pub word_budget: usize,
    /// Words one link carries per step and direction; always 1.
    pub link_width: usize,
}

impl MeshConfig {
    pub fn mesh_2d(edge: usize) -> Self {
        MeshConfig { dim: MeshDim::Two, edge, word_budget: DEFAULT_WORD_BUDGET, link_width: 1 }
    }

    pub fn mesh_3d(edge: usize) -> Self {
        MeshConfig { dim: MeshDim::Three, edge, word_budget: DEFAULT_WORD_BUDGET, link_width: 1 }
    }

    pub fn with_word_budget(mut self, words: usize) -> Self {
        self.word_budget = words;
        self
    }

    pub fn processors(&self) -> usize {
        self.edge.pow(self.dim.axes() as u32)
    }

    #[inline]
    pub fn contains(&self, c: Coord) -> bool {
        let zmax = if self.dim == MeshDim::Two { 1 } else { self.edge };
        c.0 < self.edge && c.1 < self.edge && c.2 < zmax
    }

    #[inline]
    pub fn index(&self, c: Coord) -> usize {
        debug_assert!(self.contains(c));
        (c.2 * self.edge + c.1) * self.edge + c.0
    }

    pub fn coord(&self, index: usize) -> Coord {
        let x = index % self.edge;
        let y = (index / self.edge) % self.edge;
        let z = index / (self.edge * self.edge);
        (x, y, z)
    }

    /// Neighbor coordinate in direction `d`, or `None` at the mesh boundary.
    pub fn neighbor(&self, c: Coord, d: Dir) -> Option<Coord> {
        if d.axis() >= self.dim.axes() {
            return None;
        }
        let (dx, dy, dz) = d.offset();
        let n = (
            c.0.checked_add_signed(dx)?,
            c.1.checked_add_signed(dy)?,
            c.2.checked_add_signed(dz)?,
        );
        self.contains(n).then_some(n)
    }

    fn validate(&self) -> Result<(), EngineError> {
        if self.edge == 0 {
            return Err(EngineError::BadEdge);
        }
        if self.word_budget < MIN_WORD_BUDGET {
            return Err(EngineError::BadBudget(self.word_budget));
        }
        assert_eq!(self.link_width, 1, "links are fixed at one word per step");
        Ok(())
    }
}

/// Whether a processor wants more steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProcStatus {
    Active,
    Done,
}

/// When a run stops.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HaltRule {
    /// Stop after the first step in which every processor reports `Done`.
    WhenAllDone,
    /// Run exactly this many steps.
    AfterSteps(u64),
}

/// The per-processor behavior of a mesh computation.
///
/// One instance serves all processors; any per-processor state must live in
/// the registers exposed through [`ProcCtx`], which is what the budget is
/// enforced against.
pub trait MeshProgram {
    /// Free pre-placement of inputs; may also queue step-1 sends.
    fn init(&mut self, ctx: &mut ProcCtx<'_>);

    /// One compute sub-step: arrived words are in the inbox, sends queued
    /// here arrive next step.
    fn step(&mut self, ctx: &mut ProcCtx<'_>) -> ProcStatus;
}

/// A processor's view of itself during one compute sub-step.
pub struct ProcCtx<'a> {
    coord: Coord,
    step: u64,
    budget: usize,
    regs: &'a mut [Word],
    len: &'a mut u16,
    resident: &'a mut u64,
    inbox: [Option<Word>; 6],
    outbox: &'a mut [Word],
    outbox_full: &'a mut [bool],
    has_neighbor: [bool; 6],
    error: &'a mut Option<EngineError>,
}

impl<'a> ProcCtx<'a> {
    pub fn coord(&self) -> Coord {
        self.coord
    }

    /// Global step being executed; 0 during `init`.
    pub fn step(&self) -> u64 {
        self.step
    }

    /// Word that arrived over the `d` link this step, if any.
    pub fn recv(&self, d: Dir) -> Option<Word> {
        self.inbox[d.index()]
    }

    /// Queue one word on the `d` link; it arrives next step.
    pub fn send(&mut self, d: Dir, w: Word) {
        assert!(
            self.has_neighbor[d.index()],
            "processor {:?} sent off-mesh toward {:?}",
            self.coord,
            d
        );
        let i = d.index();
        if self.outbox_full[i] {
            if self.error.is_none() {
                *self.error = Some(EngineError::BandwidthViolation {
                    coord: self.coord,
                    step: self.step,
                });
            }
            return;
        }
        self.outbox[i] = w;
        self.outbox_full[i] = true;
    }

    /// Register `slot`, or 0 if the slot has never been written.
    pub fn reg(&self, slot: usize) -> Word {
        assert!(slot < self.budget, "register slot {} out of range", slot);
        self.regs[slot]
    }

    /// Write register `slot`; writing past the budget is a violation.
    pub fn set_reg(&mut self, slot: usize, w: Word) {
        if slot >= self.budget {
            if self.error.is_none() {
                *self.error = Some(EngineError::BudgetExceeded {
                    coord: self.coord,
                    step: self.step,
                    slot,
                    budget: self.budget,
                });
            }
            return;
        }
        self.regs[slot] = w;
        let held = (slot + 1) as u16;
        if held > *self.len {
            *self.resident += u64::from(held - *self.len);
            *self.len = held;
        }
    }

    /// Words this processor currently holds (length of the used prefix).
    pub fn reg_count(&self) -> usize {
        usize::from(*self.len)
    }

    /// Drop registers from `keep` on; their slots read as 0 afterwards.
    pub fn truncate_regs(&mut self, keep: usize) {
        let keep = keep.min(usize::from(*self.len));
        for slot in keep..usize::from(*self.len) {
            self.regs[slot] = 0;
        }
        *self.resident -= u64::from(*self.len) - keep as u64;
        *self.len = keep as u16;
    }

    pub fn word_budget(&self) -> usize {
        self.budget
    }

    /// Whether a link exists toward `d` (false at mesh faces).
    pub fn has_neighbor(&self, d: Dir) -> bool {
        self.has_neighbor[d.index()]
    }
}

/// Full simulated mesh: processor registers, link buffers, and the ledger.
pub struct MeshState {
    config: MeshConfig,
    regs: Vec<Word>,
    reg_len: Vec<u16>,
    outbox: Vec<Word>,
    outbox_full: Vec<bool>,
    inbox: Vec<Word>,
    inbox_full: Vec<bool>,
    resident: u64,
    step: u64,
    ledger: StepLedger,
    phase: Option<String>,
    /// Block-move shapes already schedule-checked; replays skip the check.
    route_shapes: std::collections::HashSet<(u64, u64)>,
    /// Word-permutation routings already simulated: key -> (steps, word-hops).
    perm_cache: std::collections::HashMap<u64, (u64, u64)>,
}

impl MeshState {
    pub fn new(config: MeshConfig) -> Result<Self, EngineError> {
        config.validate()?;
        let p = config.processors();
        Ok(MeshState {
            config,
            regs: vec![0; p * config.word_budget],
            reg_len: vec![0; p],
            outbox: vec![0; p * 6],
            outbox_full: vec![false; p * 6],
            inbox: vec![0; p * 6],
            inbox_full: vec![false; p * 6],
            resident: 0,
            step: 0,
            ledger: StepLedger::new(p as u64),
            phase: None,
            route_shapes: std::collections::HashSet::new(),
            perm_cache: std::collections::HashMap::new(),
        })
    }

    pub fn config(&self) -> &MeshConfig {
        &self.config
    }

    pub fn ledger(&self) -> &StepLedger {
        &self.ledger
    }

    pub fn ledger_mut(&mut self) -> &mut StepLedger {
        &mut self.ledger
    }

    /// Attribute subsequent steps to this phase label (`None` clears it).
    pub fn set_phase(&mut self, label: Option<&str>) {
        self.phase = label.map(str::to_string);
    }

    fn note_steps(&mut self, steps: u64) {
        if let Some(label) = &self.phase {
            let label = label.clone();
            self.ledger.note_phase_steps(&label, steps);
        }
    }

    /// Host-side placement of one word before (or between) runs; free of
    /// step cost but budget-checked.
    pub fn load(&mut self, c: Coord, slot: usize, w: Word) -> Result<(), EngineError> {
        if slot >= self.config.word_budget {
            return Err(EngineError::BudgetExceeded {
                coord: c,
                step: self.step,
                slot,
                budget: self.config.word_budget,
            });
        }
        let p = self.config.index(c);
        self.regs[p * self.config.word_budget + slot] = w;
        let held = (slot + 1) as u16;
        if held > self.reg_len[p] {
            self.resident += u64::from(held - self.reg_len[p]);
            self.reg_len[p] = held;
        }
        self.ledger.peak_words = self.ledger.peak_words.max(self.resident);
        Ok(())
    }

    /// Host-side read of one register; unset slots read as 0.
    pub fn read(&self, c: Coord, slot: usize) -> Word {
        assert!(slot < self.config.word_budget);
        let p = self.config.index(c);
        self.regs[p * self.config.word_budget + slot]
    }

    pub fn reg_count(&self, c: Coord) -> usize {
        usize::from(self.reg_len[self.config.index(c)])
    }

    /// Drop every register on every processor (ledger is kept).
    pub fn clear_all_regs(&mut self) {
        self.regs.iter_mut().for_each(|w| *w = 0);
        self.reg_len.iter_mut().for_each(|l| *l = 0);
        self.resident = 0;
    }

    pub fn steps_executed(&self) -> u64 {
        self.step
    }

    /// Run `program.init` on every processor (step 0, free of step cost).
    pub fn init_program<P: MeshProgram>(&mut self, program: &mut P) -> Result<(), EngineError> {
        let mut error = None;
        let budget = self.config.word_budget;
        for p in 0..self.config.processors() {
            let coord = self.config.coord(p);
            let mut has_neighbor = [false; 6];
            for d in Dir::ALL {
                has_neighbor[d.index()] = self.config.neighbor(coord, d).is_some();
            }
            let mut ctx = ProcCtx {
                coord,
                step: self.step,
                budget,
                regs: &mut self.regs[p * budget..(p + 1) * budget],
                len: &mut self.reg_len[p],
                resident: &mut self.resident,
                inbox: [None; 6],
                outbox: &mut self.outbox[p * 6..(p + 1) * 6],
                outbox_full: &mut self.outbox_full[p * 6..(p + 1) * 6],
                has_neighbor,
                error: &mut error,
            };
            program.init(&mut ctx);
            if let Some(e) = error {
                return Err(e);
            }
        }
        self.ledger.peak_words = self.ledger.peak_words.max(self.resident);
        Ok(())
    }

    /// Execute one global step; returns whether every processor was `Done`.
    pub fn step_once<P: MeshProgram>(&mut self, program: &mut P) -> Result<bool, EngineError> {
        self.step += 1;
        let budget = self.config.word_budget;
        let procs = self.config.processors();

        // Communication sub-step: deliver every queued word to the facing
        // neighbor's inbox. All reads see last step's outboxes, so order
        // does not matter.
        let mut inflight = 0u64;
        for p in 0..procs {
            let coord = self.config.coord(p);
            for d in Dir::ALL.iter().take(self.config.dim.neighbor_count()) {
                if let Some(nc) = self.config.neighbor(coord, *d) {
                    let np = self.config.index(nc);
                    let facing = d.opposite().index();
                    if self.outbox_full[np * 6 + facing] {
                        self.inbox[p * 6 + d.index()] = self.outbox[np * 6 + facing];
                        self.inbox_full[p * 6 + d.index()] = true;
                        inflight += 1;
                    }
                }
            }
        }
        self.outbox_full.iter_mut().for_each(|f| *f = false);
        if inflight > 0 {
            self.ledger.comm_steps += 1;
            self.ledger.words_moved += inflight;
        }
        self.ledger.peak_words = self.ledger.peak_words.max(self.resident + inflight);

        // Compute sub-step.
        let mut all_done = true;
        let mut error = None;
        for p in 0..procs {
            let coord = self.config.coord(p);
            let mut inbox = [None; 6];
            for (i, slot) in inbox.iter_mut().enumerate() {
                if self.inbox_full[p * 6 + i] {
                    *slot = Some(self.inbox[p * 6 + i]);
                    self.inbox_full[p * 6 + i] = false;
                }
            }
            let mut has_neighbor = [false; 6];
            for d in Dir::ALL {
                has_neighbor[d.index()] = self.config.neighbor(coord, d).is_some();
            }
            let mut ctx = ProcCtx {
                coord,
                step: self.step,
                budget,
                regs: &mut self.regs[p * budget..(p + 1) * budget],
                len: &mut self.reg_len[p],
                resident: &mut self.resident,
                inbox,
                outbox: &mut self.outbox[p * 6..(p + 1) * 6],
                outbox_full: &mut self.outbox_full[p * 6..(p + 1) * 6],
                has_neighbor,
                error: &mut error,
            };
            if program.step(&mut ctx) == ProcStatus::Active {
                all_done = false;
            }
            if let Some(e) = error {
                return Err(e);
            }
        }
        self.ledger.peak_words = self.ledger.peak_words.max(self.resident);
        self.ledger.total_steps += 1;
        self.ledger.compute_steps += 1;
        self.note_steps(1);
        Ok(all_done)
    }

    /// Run a program under `halt`, guarded by the global step cap.
    pub fn run<P: MeshProgram>(&mut self, program: &mut P, halt: HaltRule) -> Result<(), EngineError> {
        let cap = std::env::var("MESHGRAIN_STEP_CAP")
            .ok()
            .and_then(|v| v.parse().ok())
            .unwrap_or(DEFAULT_STEP_CAP);
        self.run_capped(program, halt, cap)
    }

    pub fn run_capped<P: MeshProgram>(
        &mut self,
        program: &mut P,
        halt: HaltRule,
        cap: u64,
    ) -> Result<(), EngineError> {
        self.init_program(program)?;
        let mut executed = 0u64;
        loop {
            if let HaltRule::AfterSteps(n) = halt {
                if executed == n {
                    return Ok(());
                }
            }
            if executed >= cap {
                return Err(EngineError::NonHalting(cap));
            }
            let all_done = self.step_once(program)?;
            executed += 1;
            if halt == HaltRule::WhenAllDone && all_done {
                return Ok(());
            }
        }
    }

    /// Advance the clock through steps where every processor is known idle.
    ///
    /// Used by schedules padded to a fixed deterministic length: the steps
    /// count as executed (compute sub-steps still burn the cycles) but no
    /// per-processor work is dispatched.
    pub fn skip_idle_steps(&mut self, steps: u64) {
        self.step += steps;
        self.ledger.total_steps += steps;
        self.ledger.compute_steps += steps;
        self.note_steps(steps);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Corner processor floods a value right along row 0.
    struct RowBroadcast {
        value: Word,
    }

    impl MeshProgram for RowBroadcast {
        fn init(&mut self, ctx: &mut ProcCtx<'_>) {
            if ctx.coord() == (0, 0, 0) {
                ctx.set_reg(0, self.value);
                ctx.send(Dir::XPlus, self.value);
            }
        }

        fn step(&mut self, ctx: &mut ProcCtx<'_>) -> ProcStatus {
            if ctx.coord().1 > 0 {
                return ProcStatus::Done;
            }
            if let Some(w) = ctx.recv(Dir::XMinus) {
                ctx.set_reg(0, w);
                if ctx.has_neighbor(Dir::XPlus) {
                    ctx.send(Dir::XPlus, w);
                }
            }
            if ctx.reg(0) == self.value {
                ProcStatus::Done
            } else {
                ProcStatus::Active
            }
        }
    }

    #[test]
    fn broadcast_along_a_row_takes_edge_minus_one_steps() {
        let mut mesh = MeshState::new(MeshConfig::mesh_2d(8)).unwrap();
        let mut prog = RowBroadcast { value: 42 };
        mesh.run(&mut prog, HaltRule::AfterSteps(7)).unwrap();
        for x in 0..8 {
            assert_eq!(mesh.read((x, 0, 0), 0), 42);
        }
        let l = mesh.ledger();
        assert_eq!(l.total_steps, 7);
        assert_eq!(l.compute_steps, 7);
        assert_eq!(l.comm_steps, 7, "one word is in flight every step");
        assert_eq!(l.words_moved, 7);
    }

    #[test]
    fn halting_rule_stops_when_every_processor_is_done() {
        let mut mesh = MeshState::new(MeshConfig::mesh_2d(5)).unwrap();
        let mut prog = RowBroadcast { value: 9 };
        mesh.run(&mut prog, HaltRule::WhenAllDone).unwrap();
        // the wavefront reaches (4, 0) in step 4 and everything else reports
        // done immediately, so the run stops right there.
        assert_eq!(mesh.steps_executed(), 4);
        assert_eq!(mesh.read((4, 0, 0), 0), 9);
    }

    struct DoubleSend;

    impl MeshProgram for DoubleSend {
        fn init(&mut self, _ctx: &mut ProcCtx<'_>) {}

        fn step(&mut self, ctx: &mut ProcCtx<'_>) -> ProcStatus {
            if ctx.coord() == (1, 1, 0) && ctx.step() == 3 {
                ctx.send(Dir::XPlus, 1);
                ctx.send(Dir::XPlus, 2);
            }
            ProcStatus::Active
        }
    }

    #[test]
    fn queuing_two_words_on_one_link_is_reported() {
        let mut mesh = MeshState::new(MeshConfig::mesh_2d(4)).unwrap();
        let err = mesh.run(&mut DoubleSend, HaltRule::AfterSteps(5)).unwrap_err();
        assert_eq!(
            err,
            EngineError::BandwidthViolation { coord: (1, 1, 0), step: 3 }
        );
    }

    struct Hoarder;

    impl MeshProgram for Hoarder {
        fn init(&mut self, _ctx: &mut ProcCtx<'_>) {}

        fn step(&mut self, ctx: &mut ProcCtx<'_>) -> ProcStatus {
            if ctx.coord() == (2, 0, 0) {
                let slot = (ctx.step() - 1) as usize;
                ctx.set_reg(slot, 7);
            }
            ProcStatus::Active
        }
    }

    #[test]
    fn writing_past_the_register_budget_is_reported() {
        let cfg = MeshConfig::mesh_2d(4).with_word_budget(4);
        let mut mesh = MeshState::new(cfg).unwrap();
        let err = mesh.run(&mut Hoarder, HaltRule::AfterSteps(10)).unwrap_err();
        assert_eq!(
            err,
            EngineError::BudgetExceeded { coord: (2, 0, 0), step: 5, slot: 4, budget: 4 }
        );
    }

    struct Spinner;

    impl MeshProgram for Spinner {
        fn init(&mut self, _ctx: &mut ProcCtx<'_>) {}
        fn step(&mut self, _ctx: &mut ProcCtx<'_>) -> ProcStatus {
            ProcStatus::Active
        }
    }

    #[test]
    fn run_gives_up_at_the_step_cap() {
        let mut mesh = MeshState::new(MeshConfig::mesh_2d(2)).unwrap();
        let err = mesh
            .run_capped(&mut Spinner, HaltRule::WhenAllDone, 50)
            .unwrap_err();
        assert_eq!(err, EngineError::NonHalting(50));
    }

    #[test]
    fn small_budgets_are_rejected() {
        let cfg = MeshConfig::mesh_2d(4).with_word_budget(3);
        assert!(matches!(MeshState::new(cfg), Err(EngineError::BadBudget(3))));
    }

    #[test]
    fn identical_runs_produce_identical_ledgers() {
        let run = || {
            let mut mesh = MeshState::new(MeshConfig::mesh_2d(8)).unwrap();
            mesh.set_phase(Some("flood"));
            mesh.run(&mut RowBroadcast { value: 5 }, HaltRule::AfterSteps(9))
                .unwrap();
            mesh.ledger().clone()
        };
        let a = run();
        let b = run();
        assert_eq!(a, b);
        assert_eq!(a.emit(), b.emit());
        assert_eq!(a.phase_steps("flood"), 9);
    }

    #[test]
    fn peak_counts_registers_plus_words_in_flight() {
        let mut mesh = MeshState::new(MeshConfig::mesh_2d(4)).unwrap();
        mesh.run(&mut RowBroadcast { value: 3 }, HaltRule::AfterSteps(3))
            .unwrap();
        // after 3 steps procs (0..=3, 0) hold one word each and the last
        // flight delivered one word: peak = residents-before-compute + flight.
        assert_eq!(mesh.ledger().peak_words, 4);
    }

    #[test]
    fn three_d_neighbors_cover_six_directions() {
        let cfg = MeshConfig::mesh_3d(3);
        let c = (1, 1, 1);
        let n: Vec<_> = Dir::ALL.iter().filter_map(|d| cfg.neighbor(c, *d)).collect();
        assert_eq!(n.len(), 6);
        let corner: Vec<_> = Dir::ALL
            .iter()
            .filter_map(|d| cfg.neighbor((0, 0, 0), *d))
            .collect();
        assert_eq!(corner.len(), 3);
        assert!(cfg.neighbor((2, 2, 2), Dir::ZPlus).is_none());
    }

    #[test]
    fn two_d_meshes_have_no_z_links() {
        let cfg = MeshConfig::mesh_2d(4);
        assert!(cfg.neighbor((1, 1, 0), Dir::ZPlus).is_none());
        assert!(cfg.neighbor((1, 1, 0), Dir::ZMinus).is_none());
        assert_eq!(cfg.processors(), 16);
    }
}
