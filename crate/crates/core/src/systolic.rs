//! Output-stationary systolic matrix product on a 2-d mesh.
//!
//! The mesh emulates an n x n torus: ring index `k` lives at physical line
//! position `f(k)` under the interleaved folding `f(k) = 2k` for the first
//! half and `f(k) = 2(n-1-k)+1` for the second, so every ring neighbor is at
//! physical distance at most 2 and one torus step costs a bounded number of
//! mesh steps. Matrix entries `A(i,j)`/`B(i,j)` start at processor
//! `(row i, column j)` and the product lands with `C(i,j)` on the same
//! processor; the folding is invisible from outside because relabeling input
//! indices by `f` un-relabels the output positions.
//!
//! The run has two phases. Alignment reflects each row ring (for `A`) and
//! column ring (for `B`): the word starting at ring position `j` of a ring
//! with row/column constant `c` moves along the shortest arc to position
//! `(c - j) mod n`, forward movers first, backward movers second, each word
//! advancing one ring hop per torus step. Then n multiply steps run: the cell
//! at torus coordinates `(i, j)` consumes index `k` at the multiply step
//! given by [`SystolicSchedule::arrival_time`], accumulating into a resident
//! `c` word while `a` words rotate ring-forward along rows and `b` words
//! along columns. All routing decisions are pure functions of position and
//! step, so links carry data words only.
//!
//! Entries are `width` words wide (see [`PairAlgebra`]); a torus step then
//! takes `2 * width` mesh steps and cell state is `9 * width` registers:
//! a, b, c plus landing, hold-over, and relay buffers for each moving plane.

use crate::algebra::{Matrix, PairAlgebra, Word};
use crate::engine::{
    Dir, EngineError, HaltRule, MeshConfig, MeshProgram, MeshState, ProcCtx, ProcStatus,
    StepLedger,
};

/// The torus timetable: when each index reaches each cell.
#[derive(Debug, Clone, Copy)]
pub struct SystolicSchedule {
    pub n: usize,
}

impl SystolicSchedule {
    /// Multiply step (0-based) at which torus cell `(i, j)` consumes `k`.
    pub fn arrival_time(&self, i: usize, j: usize, k: usize) -> usize {
        (i + j + k) % self.n
    }
}

/// A synchronous 2-d cell automaton with a fixed, data-independent length.
///
/// One instance describes every cell. Per-cell state is `state_words()`
/// registers; at step `t` (1-based) every cell first offers one outgoing
/// word per direction via `message` (computed from the state after step
/// `t - 1`), then `update` consumes the words that arrived. Programs run
/// directly on a 2-d mesh (one cell per processor, one cell step per mesh
/// step) or through the 3-d stacked simulator.
pub trait CellProgram {
    fn edge(&self) -> usize;
    fn state_words(&self) -> usize;
    fn total_cell_steps(&self) -> u64;
    fn init(&self, x: usize, y: usize, state: &mut [Word]);
    /// Word to push toward `dir` at step `t`, if any. Only queried for
    /// directions with a neighbor.
    fn message(&self, x: usize, y: usize, t: u64, state: &[Word], dir: Dir) -> Option<Word>;
    fn update(&self, x: usize, y: usize, t: u64, state: &mut [Word], inbox: &[Option<Word>; 4]);
}

/// Runs a [`CellProgram`] one-cell-per-processor on a 2-d mesh.
pub struct CellAdapter<'a, P: CellProgram> {
    pub program: &'a P,
}

impl<P: CellProgram> CellAdapter<'_, P> {
    fn queue(&self, ctx: &mut ProcCtx<'_>, state: &[Word], t: u64) {
        let (x, y, _) = ctx.coord();
        for d in Dir::ALL.iter().take(4) {
            if ctx.has_neighbor(*d) {
                if let Some(w) = self.program.message(x, y, t, state, *d) {
                    ctx.send(*d, w);
                }
            }
        }
    }
}

impl<P: CellProgram> MeshProgram for CellAdapter<'_, P> {
    fn init(&mut self, ctx: &mut ProcCtx<'_>) {
        let (x, y, _) = ctx.coord();
        let mut state = vec![0; self.program.state_words()];
        self.program.init(x, y, &mut state);
        for (slot, v) in state.iter().enumerate() {
            ctx.set_reg(slot, *v);
        }
        if self.program.total_cell_steps() >= 1 {
            self.queue(ctx, &state, 1);
        }
    }

    fn step(&mut self, ctx: &mut ProcCtx<'_>) -> ProcStatus {
        let t = ctx.step();
        let total = self.program.total_cell_steps();
        if t > total {
            return ProcStatus::Done;
        }
        let (x, y, _) = ctx.coord();
        let k = self.program.state_words();
        let mut state: Vec<Word> = (0..k).map(|s| ctx.reg(s)).collect();
        let inbox = [
            ctx.recv(Dir::XPlus),
            ctx.recv(Dir::XMinus),
            ctx.recv(Dir::YPlus),
            ctx.recv(Dir::YMinus),
        ];
        self.program.update(x, y, t, &mut state, &inbox);
        for (slot, v) in state.iter().enumerate() {
            ctx.set_reg(slot, *v);
        }
        if t < total {
            self.queue(ctx, &state, t + 1);
        }
        if t >= total {
            ProcStatus::Done
        } else {
            ProcStatus::Active
        }
    }
}

/// Run a cell program on its own 2-d mesh and return the finished mesh.
pub fn run_cell_program<P: CellProgram>(
    program: &P,
    phase: Option<&str>,
) -> Result<MeshState, EngineError> {
    let mut mesh = MeshState::new(MeshConfig::mesh_2d(program.edge()))?;
    mesh.set_phase(phase);
    let mut adapter = CellAdapter { program };
    mesh.run(&mut adapter, HaltRule::AfterSteps(program.total_cell_steps()))?;
    Ok(mesh)
}

/// Ring-to-line folding with dilation 2 and its inverse.
fn interleave(n: usize) -> (Vec<usize>, Vec<usize>) {
    let mut f = vec![0; n];
    for (k, slot) in f.iter_mut().enumerate() {
        *slot = if k < n.div_ceil(2) { 2 * k } else { 2 * (n - 1 - k) + 1 };
    }
    let mut finv = vec![0; n];
    for (k, &pos) in f.iter().enumerate() {
        finv[pos] = k;
    }
    (f, finv)
}

/// Mesh steps a full product takes for the given matrix size and entry width.
pub fn systolic_total_steps(n: usize, width: usize) -> u64 {
    if n <= 1 {
        return 1;
    }
    let w = width as u64;
    let r = (n / 2) as u64;
    4 * w * r + 2 * w * (n as u64 - 1)
}

/// Which movement window a step belongs to, with its 1-based window index.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Win {
    /// Alignment, forward movers (ring-increasing arcs).
    Fwd(u64),
    /// Alignment, backward movers.
    Bwd(u64),
    /// Multiply rotation window (only `n - 1` of these move data).
    Mac(u64),
}

/// Register layout of one moving plane (`a` along x or `b` along y).
struct Plane {
    axis: usize,
    val: usize,
    new: usize,
    hold: usize,
    rel: usize,
}

/// The systolic product as a cell program.
pub struct SystolicCells<'m> {
    n: usize,
    w: usize,
    r: usize,
    alg: PairAlgebra,
    f: Vec<usize>,
    finv: Vec<usize>,
    /// Per physical line position: ring source of the stretched (distance-2)
    /// edge relayed through here, for forward and backward movement.
    relay_fwd: Vec<Option<usize>>,
    relay_bwd: Vec<Option<usize>>,
    a: Vec<&'m Matrix>,
    b: Vec<&'m Matrix>,
}

impl<'m> SystolicCells<'m> {
    pub fn new(a: Vec<&'m Matrix>, b: Vec<&'m Matrix>, alg: PairAlgebra) -> Self {
        let w = alg.width();
        assert_eq!(a.len(), w);
        assert_eq!(b.len(), w);
        let n = a[0].n();
        assert!(n >= 2, "single-entry products are handled without a mesh");
        for m in a.iter().chain(b.iter()) {
            assert_eq!(m.n(), n, "all planes must be n x n");
        }
        let (f, finv) = interleave(n);
        let mut relay_fwd = vec![None; n];
        let mut relay_bwd = vec![None; n];
        for p in 0..n {
            let span = f[(p + 1) % n] as isize - f[p] as isize;
            if span.abs() == 2 {
                let mid = (f[p] as isize + span / 2) as usize;
                assert!(relay_fwd[mid].is_none(), "one relay per cell and direction");
                relay_fwd[mid] = Some(p);
            }
            let span = f[(p + n - 1) % n] as isize - f[p] as isize;
            if span.abs() == 2 {
                let mid = (f[p] as isize + span / 2) as usize;
                assert!(relay_bwd[mid].is_none(), "one relay per cell and direction");
                relay_bwd[mid] = Some(p);
            }
        }
        SystolicCells { n, w, r: n / 2, alg, f, finv, relay_fwd, relay_bwd, a, b }
    }

    fn planes(&self) -> [Plane; 2] {
        let w = self.w;
        [
            Plane { axis: 0, val: 0, new: 3 * w, hold: 5 * w, rel: 7 * w },
            Plane { axis: 1, val: w, new: 4 * w, hold: 6 * w, rel: 8 * w },
        ]
    }

    /// State offset where a cell's finished product words sit.
    pub fn c_slot(&self) -> usize {
        2 * self.w
    }

    fn window(&self, t: u64) -> (Win, usize) {
        let w2 = 2 * self.w as u64;
        let phase = w2 * self.r as u64;
        let (win, t0) = if t <= phase {
            (Win::Fwd((t - 1) / w2 + 1), t)
        } else if t <= 2 * phase {
            (Win::Bwd((t - phase - 1) / w2 + 1), t - phase)
        } else {
            (Win::Mac((t - 2 * phase - 1) / w2 + 1), t - 2 * phase)
        };
        (win, ((t0 - 1) % w2 + 1) as usize)
    }

    /// Ring position of this cell on the given plane's movement axis.
    fn ring_pos(&self, pl: &Plane, x: usize, y: usize) -> usize {
        self.finv[if pl.axis == 0 { x } else { y }]
    }

    /// Reflection constant of the ring this cell belongs to.
    fn ring_const(&self, pl: &Plane, x: usize, y: usize) -> usize {
        let cross = self.finv[if pl.axis == 0 { y } else { x }];
        (self.n - cross) % self.n
    }

    /// Alignment distance of origin `j` if it moves in the given direction.
    fn move_dist(&self, c: usize, j: usize, fwd: bool) -> Option<usize> {
        let target = (c + self.n - j) % self.n;
        let df = (target + self.n - j) % self.n;
        if df == 0 {
            None
        } else if df <= self.r {
            fwd.then_some(df)
        } else if fwd {
            None
        } else {
            Some(self.n - df)
        }
    }

    /// Word poised to hop from ring position `p` in alignment window `tau`.
    fn mover_active(&self, c: usize, p: usize, tau: u64, fwd: bool) -> bool {
        let back = (tau - 1) as usize % self.n;
        let j = if fwd { (p + self.n - back) % self.n } else { (p + back) % self.n };
        self.move_dist(c, j, fwd).is_some_and(|d| d as u64 >= tau)
    }

    /// Word finishing a hop onto ring position `p` in window `tau`:
    /// `Some(true)` lands here, `Some(false)` continues next window.
    fn arrival(&self, c: usize, p: usize, tau: u64, fwd: bool) -> Option<bool> {
        let hops = tau as usize % self.n;
        let j = if fwd { (p + self.n - hops) % self.n } else { (p + hops) % self.n };
        let d = self.move_dist(c, j, fwd)?;
        if (d as u64) < tau {
            None
        } else {
            Some(d as u64 == tau)
        }
    }

    /// Physical span (from, to) of the ring edge leaving `p`.
    fn edge_span(&self, p: usize, fwd: bool) -> (usize, usize) {
        let q = if fwd { (p + 1) % self.n } else { (p + self.n - 1) % self.n };
        (self.f[p], self.f[q])
    }

    /// Direction the in-edge's final hop arrives from.
    fn entry_side(&self, pl: &Plane, p: usize, fwd: bool) -> Dir {
        let src = if fwd { (p + self.n - 1) % self.n } else { (p + 1) % self.n };
        let (from, to) = (self.f[src] as isize, self.f[p] as isize);
        let step = if (from - to).abs() == 2 { (from - to) / 2 } else { from - to };
        Dir::along(pl.axis, step.signum())
    }

    /// Slot the outgoing word is read from in window `tau`.
    fn outgoing_slot(&self, pl: &Plane, tau: u64, mac: bool) -> usize {
        if mac || tau == 1 {
            pl.val
        } else {
            pl.hold
        }
    }
}

impl CellProgram for SystolicCells<'_> {
    fn edge(&self) -> usize {
        self.n
    }

    fn state_words(&self) -> usize {
        9 * self.w
    }

    fn total_cell_steps(&self) -> u64 {
        systolic_total_steps(self.n, self.w)
    }

    fn init(&self, x: usize, y: usize, state: &mut [Word]) {
        for pl in self.planes() {
            let planes = if pl.axis == 0 { &self.a } else { &self.b };
            for (psi, m) in planes.iter().enumerate() {
                state[pl.val + psi] = m.get(y, x);
            }
            let p = self.ring_pos(&pl, x, y);
            let c = self.ring_const(&pl, x, y);
            // words already on target pre-fill their landing slot.
            if (c + self.n - p) % self.n == p {
                for psi in 0..self.w {
                    state[pl.new + psi] = state[pl.val + psi];
                }
            }
        }
        for (psi, z) in self.alg.zero().into_iter().enumerate() {
            state[self.c_slot() + psi] = z;
        }
    }

    fn message(&self, x: usize, y: usize, t: u64, state: &[Word], dir: Dir) -> Option<Word> {
        let axis = dir.axis();
        if axis >= 2 {
            return None;
        }
        let pl = &self.planes()[axis];
        let (win, q) = self.window(t);
        let (fwd, tau, mac) = match win {
            Win::Fwd(tau) => (true, tau, false),
            Win::Bwd(tau) => (false, tau, false),
            Win::Mac(tau) => (true, tau, true),
        };
        let p = self.ring_pos(pl, x, y);
        let c = self.ring_const(pl, x, y);
        let active = mac || self.mover_active(c, p, tau, fwd);
        let (from, to) = self.edge_span(p, fwd);
        let delta = to as isize - from as isize;
        let mut out = None;
        if q <= self.w {
            // stretched edges start their first hop.
            let comp = q - 1;
            if active && delta.abs() == 2 && dir == Dir::along(axis, delta.signum()) {
                out = Some(state[self.outgoing_slot(pl, tau, mac) + comp]);
            }
        } else {
            let comp = q - self.w - 1;
            if active && delta.abs() == 1 && dir == Dir::along(axis, delta.signum()) {
                out = Some(state[self.outgoing_slot(pl, tau, mac) + comp]);
            }
            // forward a word relayed through this cell mid-edge.
            let table = if fwd { &self.relay_fwd } else { &self.relay_bwd };
            let pos = if pl.axis == 0 { x } else { y };
            if let Some(src) = table[pos] {
                let edge_runs = mac || self.mover_active(c, src, tau, fwd);
                if edge_runs {
                    let (efrom, eto) = self.edge_span(src, fwd);
                    let sign = ((eto as isize - efrom as isize) / 2).signum();
                    if dir == Dir::along(axis, sign) {
                        assert!(out.is_none(), "one word per link per step");
                        out = Some(state[pl.rel + comp]);
                    }
                }
            }
        }
        out
    }

    fn update(&self, x: usize, y: usize, t: u64, state: &mut [Word], inbox: &[Option<Word>; 4]) {
        let (win, q) = self.window(t);
        let (fwd, tau, mac) = match win {
            Win::Fwd(tau) => (true, tau, false),
            Win::Bwd(tau) => (false, tau, false),
            Win::Mac(tau) => (true, tau, true),
        };
        for pl in self.planes() {
            let p = self.ring_pos(&pl, x, y);
            let c = self.ring_const(&pl, x, y);
            if q <= self.w {
                // take in a word to relay onward next half-window.
                let comp = q - 1;
                let table = if fwd { &self.relay_fwd } else { &self.relay_bwd };
                let pos = if pl.axis == 0 { x } else { y };
                if let Some(src) = table[pos] {
                    if mac || self.mover_active(c, src, tau, fwd) {
                        let (efrom, _) = self.edge_span(src, fwd);
                        let side = Dir::along(pl.axis, (efrom as isize - pos as isize).signum());
                        state[pl.rel + comp] =
                            inbox[side.index()].expect("relayed word is due this step");
                    }
                }
            } else {
                let comp = q - self.w - 1;
                if mac {
                    if (tau as usize) < self.n {
                        let side = self.entry_side(&pl, p, true);
                        state[pl.val + comp] =
                            inbox[side.index()].expect("rotation word is due this step");
                    }
                } else if let Some(landed) = self.arrival(c, p, tau, fwd) {
                    let side = self.entry_side(&pl, p, fwd);
                    let v = inbox[side.index()].expect("alignment word is due this step");
                    state[if landed { pl.new } else { pl.hold } + comp] = v;
                }
            }
        }
        // phase boundaries: adopt landed words, then accumulate.
        let w2 = 2 * self.w as u64;
        let align_end = 2 * w2 * self.r as u64;
        if t == align_end {
            for pl in self.planes() {
                for psi in 0..self.w {
                    state[pl.val + psi] = state[pl.new + psi];
                }
            }
        }
        if t >= align_end && (t - align_end).is_multiple_of(w2) {
            let mult = (t - align_end) / w2 + 1;
            if mult <= self.n as u64 {
                let (ab, rest) = state.split_at_mut(2 * self.w);
                let (a, b) = ab.split_at(self.w);
                self.alg.mac(&mut rest[..self.w], a, b);
            }
        }
    }
}

/// Mesh product of plane-split matrices; entries start and finish at
/// `(row, column)` processors. Returns result planes and the run's ledger.
pub fn systolic_matmul_pairs(
    a: &[&Matrix],
    b: &[&Matrix],
    alg: PairAlgebra,
) -> Result<(Vec<Matrix>, StepLedger), EngineError> {
    let w = alg.width();
    assert_eq!(a.len(), w);
    assert_eq!(b.len(), w);
    let n = a[0].n();
    if n == 1 {
        let mut acc = alg.zero();
        let av: Vec<Word> = a.iter().map(|m| m.get(0, 0)).collect();
        let bv: Vec<Word> = b.iter().map(|m| m.get(0, 0)).collect();
        alg.mac(&mut acc, &av, &bv);
        let out = alg
            .plane_semirings()
            .into_iter()
            .zip(&acc)
            .map(|(s, v)| Matrix::from_rows(s, &[vec![*v]]))
            .collect();
        let mut ledger = StepLedger::new(1);
        ledger.total_steps = 1;
        ledger.compute_steps = 1;
        ledger.peak_words = 3 * w as u64;
        ledger.note_phase_steps("systolic", 1);
        return Ok((out, ledger));
    }
    let cells = SystolicCells::new(a.to_vec(), b.to_vec(), alg);
    let mesh = run_cell_program(&cells, Some("systolic"))?;
    let mut out: Vec<Matrix> = alg
        .plane_semirings()
        .into_iter()
        .map(|s| Matrix::zeros(n, s))
        .collect();
    for y in 0..n {
        for x in 0..n {
            for (psi, plane) in out.iter_mut().enumerate() {
                plane.set(y, x, mesh.read((x, y, 0), cells.c_slot() + psi));
            }
        }
    }
    Ok((out, mesh.ledger().clone()))
}

/// Single-semiring mesh product (see [`systolic_matmul_pairs`]).
pub fn systolic_matmul(a: &Matrix, b: &Matrix) -> Result<(Matrix, StepLedger), EngineError> {
    assert_eq!(a.semiring(), b.semiring());
    let (mut planes, ledger) =
        systolic_matmul_pairs(&[a], &[b], PairAlgebra::Plain(a.semiring()))?;
    Ok((planes.remove(0), ledger))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::{
        serial_matmul, serial_pair_matmul, tag_with_index, Semiring, ALL_SEMIRINGS,
    };
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn consumption_times_follow_the_diagonal_wavefront() {
        let s = SystolicSchedule { n: 4 };
        let times: Vec<usize> = (0..4).map(|k| s.arrival_time(1, 2, k)).collect();
        assert_eq!(times, vec![3, 0, 1, 2]);
    }

    #[test]
    fn interleave_is_a_dilation_two_ring_embedding() {
        for n in 2..20 {
            let (f, finv) = interleave(n);
            for k in 0..n {
                assert_eq!(finv[f[k]], k);
                let d = (f[(k + 1) % n] as isize - f[k] as isize).abs();
                assert!(d <= 2, "ring edge stretched to {} at n={}", d, n);
            }
        }
    }

    #[test]
    fn product_matches_serial_oracle_on_all_semirings() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for s in ALL_SEMIRINGS {
            for n in [2usize, 3, 4, 5, 8] {
                let a = Matrix::random(n, s, &mut rng);
                let b = Matrix::random(n, s, &mut rng);
                let want = serial_matmul(&a, &b).unwrap();
                let (got, ledger) = systolic_matmul(&a, &b).unwrap();
                assert_eq!(got, want, "semiring {} n {}", s, n);
                assert_eq!(ledger.total_steps, systolic_total_steps(n, 1));
            }
        }
    }

    #[test]
    fn identity_product_is_a_fixed_point() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = Matrix::random(6, Semiring::PlusMul, &mut rng);
        let i = Matrix::identity(6, Semiring::PlusMul);
        let (got, _) = systolic_matmul(&a, &i).unwrap();
        assert_eq!(got, a);
    }

    #[test]
    fn sixteen_by_sixteen_run_is_exact_and_on_schedule() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let a = Matrix::random(16, Semiring::PlusMul, &mut rng);
        let b = Matrix::random(16, Semiring::PlusMul, &mut rng);
        let want = serial_matmul(&a, &b).unwrap();
        let (got, ledger) = systolic_matmul(&a, &b).unwrap();
        assert_eq!(got, want);
        assert_eq!(ledger.total_steps, 62);
        assert_eq!(ledger.processors, 256);
        assert!(ledger.total_steps <= 8 * 16, "linear-time budget");
    }

    #[test]
    fn doubling_the_size_roughly_doubles_the_steps() {
        let t8 = systolic_total_steps(8, 1) as f64;
        let t16 = systolic_total_steps(16, 1) as f64;
        let t32 = systolic_total_steps(32, 1) as f64;
        for ratio in [t16 / t8, t32 / t16] {
            assert!((1.8..=2.2).contains(&ratio), "ratio {}", ratio);
        }
    }

    #[test]
    fn tagged_product_tracks_witnesses_through_the_mesh() {
        let w = Matrix::from_rows(
            Semiring::MinPlus,
            &[
                vec![0, 1, 1, crate::algebra::INF],
                vec![crate::algebra::INF, 0, crate::algebra::INF, 1],
                vec![crate::algebra::INF, crate::algebra::INF, 0, 1],
                vec![crate::algebra::INF, crate::algebra::INF, crate::algebra::INF, 0],
            ],
        );
        let (vals, tags) = tag_with_index(&w);
        let want = serial_pair_matmul(&[&vals, &tags], &[&vals, &tags], PairAlgebra::MinPlusTagged)
            .unwrap();
        let (got, ledger) =
            systolic_matmul_pairs(&[&vals, &tags], &[&vals, &tags], PairAlgebra::MinPlusTagged)
                .unwrap();
        assert_eq!(got, want);
        assert_eq!(got[0].get(0, 3), 2);
        assert_eq!(got[1].get(0, 3), 1, "equal-cost tie takes the smaller tag");
        assert_eq!(ledger.total_steps, systolic_total_steps(4, 2));
    }

    #[test]
    fn tagged_product_matches_oracle_on_random_graphs() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for n in [3usize, 5, 8] {
            let w = Matrix::random(n, Semiring::MinPlus, &mut rng);
            let (vals, tags) = tag_with_index(&w);
            let want =
                serial_pair_matmul(&[&vals, &tags], &[&vals, &tags], PairAlgebra::MinPlusTagged)
                    .unwrap();
            let (got, _) =
                systolic_matmul_pairs(&[&vals, &tags], &[&vals, &tags], PairAlgebra::MinPlusTagged)
                    .unwrap();
            assert_eq!(got, want, "n {}", n);
        }
    }

    #[test]
    fn single_entry_products_skip_the_mesh() {
        let a = Matrix::from_rows(Semiring::PlusMul, &[vec![6]]);
        let b = Matrix::from_rows(Semiring::PlusMul, &[vec![7]]);
        let (c, ledger) = systolic_matmul(&a, &b).unwrap();
        assert_eq!(c.get(0, 0), 42);
        assert_eq!(ledger.total_steps, 1);
    }

    #[test]
    fn repeated_runs_emit_identical_ledgers() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = Matrix::random(8, Semiring::MinPlus, &mut rng);
        let b = Matrix::random(8, Semiring::MinPlus, &mut rng);
        let (c1, l1) = systolic_matmul(&a, &b).unwrap();
        let (c2, l2) = systolic_matmul(&a, &b).unwrap();
        assert_eq!(c1, c2);
        assert_eq!(l1, l2);
        assert_eq!(l1.emit(), l2.emit());
    }
}
