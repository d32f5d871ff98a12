//! Scripted data movement with exact, schedule-checked step charges.
//!
//! Two movers are provided. [`MeshState::route_block`] slides a congruent
//! block of registers rigidly by a fixed displacement. Words follow
//! dimension-ordered (x, then y, then z) paths; departures along the first
//! displaced axis are staggered one per step, so a block of extent `L` along
//! that axis moving a total Manhattan distance `D` finishes in exactly
//! `D + L - 1` steps. The first time a (size, displacement) shape runs, the
//! whole schedule is simulated word by word and checked to use every link at
//! most once per step and direction; replays of a checked shape copy
//! endpoint-to-endpoint and charge the same (deterministic) numbers.
//!
//! [`MeshState::route_words`] routes an arbitrary word permutation with
//! greedy dimension-ordered store-and-forward routing through FIFO link
//! queues, one word per link per step. Its step count is measured by the
//! simulation and memoized per routing pattern.
//!
//! Both movers copy (sources keep their values), relay words in transit are
//! exempt from register budgets but charged to `peak_words`, and all charges
//! land in the mesh ledger.

use std::collections::BTreeMap;

use super::{Coord, Dir, EngineError, MeshState};

/// Axis-aligned box of processors, `lo` inclusive, `size` per axis.
///
/// 2-d regions use `lo.2 = 0`, `size.2 = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Region {
    pub lo: Coord,
    pub size: (usize, usize, usize),
}

impl Region {
    pub fn new(lo: Coord, size: (usize, usize, usize)) -> Self {
        Region { lo, size }
    }

    pub fn volume(&self) -> usize {
        self.size.0 * self.size.1 * self.size.2
    }

    pub fn contains(&self, c: Coord) -> bool {
        c.0 >= self.lo.0
            && c.0 < self.lo.0 + self.size.0
            && c.1 >= self.lo.1
            && c.1 < self.lo.1 + self.size.1
            && c.2 >= self.lo.2
            && c.2 < self.lo.2 + self.size.2
    }

    /// All cells, x varying fastest, then y, then z.
    pub fn cells(&self) -> impl Iterator<Item = Coord> + '_ {
        let lo = self.lo;
        let (sx, sy, sz) = self.size;
        (0..sz).flat_map(move |z| {
            (0..sy).flat_map(move |y| (0..sx).map(move |x| (lo.0 + x, lo.1 + y, lo.2 + z)))
        })
    }

    /// The same box shifted by `disp`; panics on underflow.
    pub fn translated(&self, disp: (isize, isize, isize)) -> Region {
        Region {
            lo: (
                self.lo.0.checked_add_signed(disp.0).expect("region slides below 0"),
                self.lo.1.checked_add_signed(disp.1).expect("region slides below 0"),
                self.lo.2.checked_add_signed(disp.2).expect("region slides below 0"),
            ),
            size: self.size,
        }
    }

    pub fn intersects(&self, other: &Region) -> bool {
        let overlap = |a0: usize, al: usize, b0: usize, bl: usize| a0 < b0 + bl && b0 < a0 + al;
        overlap(self.lo.0, self.size.0, other.lo.0, other.size.0)
            && overlap(self.lo.1, self.size.1, other.lo.1, other.size.1)
            && overlap(self.lo.2, self.size.2, other.lo.2, other.size.2)
    }

    /// Smallest box containing this region and its translate.
    fn envelope(&self, disp: (isize, isize, isize)) -> Region {
        let dst = self.translated(disp);
        let lo = (
            self.lo.0.min(dst.lo.0),
            self.lo.1.min(dst.lo.1),
            self.lo.2.min(dst.lo.2),
        );
        let hi = (
            (self.lo.0 + self.size.0).max(dst.lo.0 + dst.size.0),
            (self.lo.1 + self.size.1).max(dst.lo.1 + dst.size.1),
            (self.lo.2 + self.size.2).max(dst.lo.2 + dst.size.2),
        );
        Region { lo, size: (hi.0 - lo.0, hi.1 - lo.1, hi.2 - lo.2) }
    }
}

/// One rigid block slide: every processor in `src` contributes the listed
/// `(src_slot, dst_slot)` register pairs, moved in sequential passes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockMove {
    pub src: Region,
    pub disp: (isize, isize, isize),
    pub slots: Vec<(usize, usize)>,
}

impl BlockMove {
    pub fn single(src: Region, disp: (isize, isize, isize), src_slot: usize, dst_slot: usize) -> Self {
        BlockMove { src, disp, slots: vec![(src_slot, dst_slot)] }
    }

    /// Steps one slot pass takes: Manhattan distance plus pipeline fill.
    fn pass_steps(&self) -> u64 {
        let d = manhattan(self.disp);
        if d == 0 {
            return 0;
        }
        let axis = first_axis(self.disp);
        let l = [self.src.size.0, self.src.size.1, self.src.size.2][axis] as u64;
        d + l - 1
    }

    /// Total charged steps for all slot passes.
    pub fn steps(&self) -> u64 {
        self.pass_steps() * self.slots.len() as u64
    }
}

/// One relocated word for the permutation mover.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WordMove {
    pub src: Coord,
    pub src_slot: usize,
    pub dst: Coord,
    pub dst_slot: usize,
}

fn manhattan(d: (isize, isize, isize)) -> u64 {
    (d.0.unsigned_abs() + d.1.unsigned_abs() + d.2.unsigned_abs()) as u64
}

/// First axis (x before y before z) with nonzero displacement.
fn first_axis(d: (isize, isize, isize)) -> usize {
    if d.0 != 0 {
        0
    } else if d.1 != 0 {
        1
    } else {
        2
    }
}

/// Dimension-ordered hop list for one displacement.
fn hops(disp: (isize, isize, isize)) -> Vec<Dir> {
    let mut path = Vec::with_capacity(manhattan(disp) as usize);
    for (axis, delta) in [disp.0, disp.1, disp.2].into_iter().enumerate() {
        let dir = Dir::along(axis, delta.signum());
        for _ in 0..delta.unsigned_abs() {
            path.push(dir);
        }
    }
    path
}

fn step_coord(c: Coord, d: Dir) -> Coord {
    let (dx, dy, dz) = d.offset();
    (
        c.0.checked_add_signed(dx).unwrap(),
        c.1.checked_add_signed(dy).unwrap(),
        c.2.checked_add_signed(dz).unwrap(),
    )
}

/// FNV-1a over a word stream; used for deterministic routing-pattern keys.
fn fnv1a(words: impl Iterator<Item = u64>) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for w in words {
        for b in w.to_le_bytes() {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x100000001b3);
        }
    }
    h
}

impl MeshState {
    /// Slide one block; returns the charged step count.
    pub fn route_block(&mut self, mv: &BlockMove) -> Result<u64, EngineError> {
        self.route_batch(&[vec![mv.clone()]])
    }

    /// Run move groups concurrently: moves inside a group run in order,
    /// groups run side by side and must touch disjoint processor envelopes.
    ///
    /// Returns the charged steps: the longest group's sequential total.
    pub fn route_batch(&mut self, groups: &[Vec<BlockMove>]) -> Result<u64, EngineError> {
        let envelopes: Vec<Vec<Region>> = groups
            .iter()
            .map(|g| g.iter().map(|mv| mv.src.envelope(mv.disp)).collect())
            .collect();
        for (i, a) in envelopes.iter().enumerate() {
            for b in envelopes.iter().skip(i + 1) {
                for ra in a {
                    for rb in b {
                        assert!(
                            !ra.intersects(rb),
                            "concurrent block moves overlap: {:?} vs {:?}",
                            ra,
                            rb
                        );
                    }
                }
            }
        }

        let resident_before = self.resident;
        let mut max_steps = 0u64;
        let mut moved = 0u64;
        let mut flight = 0u64;
        for group in groups {
            let mut group_steps = 0u64;
            for mv in group {
                group_steps += self.apply_block_move(mv)?;
                moved += manhattan(mv.disp) * (mv.src.volume() * mv.slots.len()) as u64;
                flight += (mv.src.volume() * mv.slots.len()) as u64;
            }
            max_steps = max_steps.max(group_steps);
        }

        self.step += max_steps;
        self.ledger.total_steps += max_steps;
        self.ledger.compute_steps += max_steps;
        if moved > 0 {
            self.ledger.comm_steps += max_steps;
            self.ledger.words_moved += moved;
        }
        self.ledger.peak_words = self.ledger.peak_words.max(resident_before + flight);
        self.ledger.peak_words = self.ledger.peak_words.max(self.resident);
        self.note_steps(max_steps);
        Ok(max_steps)
    }

    /// Copy data for one block move and (first time per shape) verify the
    /// staggered schedule is collision-free and meets its step formula.
    fn apply_block_move(&mut self, mv: &BlockMove) -> Result<u64, EngineError> {
        let dst_region = mv.src.translated(mv.disp);
        let cfg = self.config;
        for r in [&mv.src, &dst_region] {
            let far = (
                r.lo.0 + r.size.0 - 1,
                r.lo.1 + r.size.1 - 1,
                r.lo.2 + r.size.2 - 1,
            );
            assert!(
                cfg.contains(r.lo) && cfg.contains(far),
                "block move leaves the mesh: {:?}",
                r
            );
        }
        for &(s, d) in &mv.slots {
            assert!(s < cfg.word_budget, "source slot {} out of range", s);
            if d >= cfg.word_budget {
                return Err(EngineError::BudgetExceeded {
                    coord: dst_region.lo,
                    step: self.step,
                    slot: d,
                    budget: cfg.word_budget,
                });
            }
        }

        let shape_key = shape_key(mv);
        if manhattan(mv.disp) > 0 && !self.route_shapes.contains(&shape_key) {
            check_block_schedule(mv);
            self.route_shapes.insert(shape_key);
        }

        // Copy semantics: read a full pass before writing it, so moves whose
        // source overlaps their destination still see pre-move values.
        for &(src_slot, dst_slot) in &mv.slots {
            let values: Vec<i64> = mv.src.cells().map(|c| self.read(c, src_slot)).collect();
            for (c, v) in mv.src.cells().zip(values) {
                let t = (
                    c.0.checked_add_signed(mv.disp.0).unwrap(),
                    c.1.checked_add_signed(mv.disp.1).unwrap(),
                    c.2.checked_add_signed(mv.disp.2).unwrap(),
                );
                self.write_raw(t, dst_slot, v);
            }
        }
        Ok(mv.steps())
    }

    /// Route an arbitrary set of word relocations; returns measured steps.
    ///
    /// Every word departs at once and follows its dimension-ordered path
    /// through per-link FIFO queues. The first run of a routing pattern is
    /// simulated to measure its finish time; identical patterns replay the
    /// memoized charge.
    pub fn route_words(&mut self, moves: &[WordMove]) -> Result<u64, EngineError> {
        let cfg = self.config;
        for mv in moves {
            assert!(cfg.contains(mv.src) && cfg.contains(mv.dst), "word move leaves the mesh");
            assert!(mv.src_slot < cfg.word_budget);
            if mv.dst_slot >= cfg.word_budget {
                return Err(EngineError::BudgetExceeded {
                    coord: mv.dst,
                    step: self.step,
                    slot: mv.dst_slot,
                    budget: cfg.word_budget,
                });
            }
        }
        let mut dsts: Vec<u64> = moves
            .iter()
            .map(|m| (cfg.index(m.dst) * cfg.word_budget + m.dst_slot) as u64)
            .collect();
        dsts.sort_unstable();
        assert!(dsts.windows(2).all(|w| w[0] != w[1]), "two words share a destination slot");

        let key = fnv1a(moves.iter().flat_map(|m| {
            [
                cfg.index(m.src) as u64,
                m.src_slot as u64,
                cfg.index(m.dst) as u64,
                m.dst_slot as u64,
            ]
        }));
        let (steps, hops_total) = match self.perm_cache.get(&key) {
            Some(&cached) => cached,
            None => {
                let measured = simulate_word_routing(&cfg, moves);
                self.perm_cache.insert(key, measured);
                measured
            }
        };

        let resident_before = self.resident;
        let values: Vec<i64> = moves.iter().map(|m| self.read(m.src, m.src_slot)).collect();
        for (m, v) in moves.iter().zip(values) {
            self.write_raw(m.dst, m.dst_slot, v);
        }

        self.step += steps;
        self.ledger.total_steps += steps;
        self.ledger.compute_steps += steps;
        if hops_total > 0 {
            self.ledger.comm_steps += steps;
            self.ledger.words_moved += hops_total;
        }
        self.ledger.peak_words = self.ledger.peak_words.max(resident_before + moves.len() as u64);
        self.ledger.peak_words = self.ledger.peak_words.max(self.resident);
        self.note_steps(steps);
        Ok(steps)
    }

    fn write_raw(&mut self, c: Coord, slot: usize, v: i64) {
        let p = self.config.index(c);
        self.regs[p * self.config.word_budget + slot] = v;
        let held = (slot + 1) as u16;
        if held > self.reg_len[p] {
            self.resident += u64::from(held - self.reg_len[p]);
            self.reg_len[p] = held;
        }
    }
}

fn shape_key(mv: &BlockMove) -> (u64, u64) {
    let s = mv.src.size;
    let d = mv.disp;
    let size_key = ((s.0 as u64) << 40) | ((s.1 as u64) << 20) | s.2 as u64;
    let enc = |v: isize| (v + (1 << 19)) as u64;
    let disp_key = (enc(d.0) << 40) | (enc(d.1) << 20) | enc(d.2);
    (size_key, disp_key)
}

/// Word-by-word check of the staggered slide: every word leaves after its
/// stagger delay, travels nonstop, arrives at `D + L - 1` at the latest, and
/// no directed link carries two words in one step.
fn check_block_schedule(mv: &BlockMove) {
    let d = manhattan(mv.disp);
    let axis = first_axis(mv.disp);
    let l = [mv.src.size.0, mv.src.size.1, mv.src.size.2][axis] as u64;
    let expect = d + l - 1;
    let path = hops(mv.disp);
    let positive = [mv.disp.0, mv.disp.1, mv.disp.2][axis] > 0;

    let mut events: Vec<u64> = Vec::with_capacity(mv.src.volume() * d as usize);
    let mut latest = 0u64;
    for c in mv.src.cells() {
        let a = ([c.0, c.1, c.2][axis] - [mv.src.lo.0, mv.src.lo.1, mv.src.lo.2][axis]) as u64;
        let wait = if positive { l - 1 - a } else { a };
        let mut pos = c;
        for (i, dir) in path.iter().enumerate() {
            let t = wait + i as u64 + 1;
            // directed link id (tail coordinate + direction) packed with the
            // step into one u64: 11 bits per axis, 3 for direction, 24 for t.
            assert!(pos.0 < 2048 && pos.1 < 2048 && pos.2 < 2048 && t < 1 << 24);
            let link =
                (((pos.0 as u64) << 22 | (pos.1 as u64) << 11 | pos.2 as u64) << 3) | dir.index() as u64;
            events.push(link << 24 | t);
            pos = step_coord(pos, *dir);
            latest = latest.max(t);
        }
        let want = (
            c.0.checked_add_signed(mv.disp.0).unwrap(),
            c.1.checked_add_signed(mv.disp.1).unwrap(),
            c.2.checked_add_signed(mv.disp.2).unwrap(),
        );
        assert_eq!(pos, want, "path must end at the translated cell");
    }
    assert_eq!(latest, expect, "staggered slide must finish in D + L - 1 steps");
    events.sort_unstable();
    assert!(
        events.windows(2).all(|w| w[0] != w[1]),
        "two words crossed one link in the same step"
    );
}

/// Event-driven store-and-forward routing; returns (finish step, word-hops).
fn simulate_word_routing(cfg: &super::MeshConfig, moves: &[WordMove]) -> (u64, u64) {
    // Per-word remaining path and position.
    struct Flight {
        pos: Coord,
        path: Vec<Dir>,
        next: usize,
    }
    let mut flights: Vec<Flight> = Vec::with_capacity(moves.len());
    let mut total_hops = 0u64;
    let link_id = |c: Coord, d: Dir| ((cfg.index(c) * 6) + d.index()) as u64;
    let mut queues: BTreeMap<u64, std::collections::VecDeque<usize>> = BTreeMap::new();
    for (i, m) in moves.iter().enumerate() {
        let disp = (
            m.dst.0 as isize - m.src.0 as isize,
            m.dst.1 as isize - m.src.1 as isize,
            m.dst.2 as isize - m.src.2 as isize,
        );
        let path = hops(disp);
        total_hops += path.len() as u64;
        if !path.is_empty() {
            queues.entry(link_id(m.src, path[0])).or_default().push_back(i);
        }
        flights.push(Flight { pos: m.src, path, next: 0 });
    }

    let mut t = 0u64;
    while !queues.is_empty() {
        t += 1;
        // One word crosses each busy link; links drain in fixed id order.
        let crossing: Vec<(u64, usize)> = queues
            .iter_mut()
            .map(|(link, q)| (*link, q.pop_front().expect("queues are never empty")))
            .collect();
        queues.retain(|_, q| !q.is_empty());
        for (_, w) in crossing {
            let f = &mut flights[w];
            f.pos = step_coord(f.pos, f.path[f.next]);
            f.next += 1;
            if f.next < f.path.len() {
                let next_link = link_id(f.pos, f.path[f.next]);
                queues.entry(next_link).or_default().push_back(w);
            }
        }
    }
    (t, total_hops)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::MeshConfig;

    fn mesh_2d(edge: usize) -> MeshState {
        MeshState::new(MeshConfig::mesh_2d(edge)).unwrap()
    }

    fn mesh_3d(edge: usize) -> MeshState {
        MeshState::new(MeshConfig::mesh_3d(edge)).unwrap()
    }

    #[test]
    fn four_block_sliding_eight_right_takes_eleven_steps() {
        let mut mesh = mesh_2d(16);
        let src = Region::new((0, 0, 0), (4, 4, 1));
        for (i, c) in src.cells().enumerate() {
            mesh.load(c, 0, i as i64 + 100).unwrap();
        }
        let mv = BlockMove::single(src, (8, 0, 0), 0, 0);
        let steps = mesh.route_block(&mv).unwrap();
        assert_eq!(steps, 11, "distance 8 plus extent 4 minus 1");
        for (i, c) in src.cells().enumerate() {
            assert_eq!(mesh.read((c.0 + 8, c.1, c.2), 0), i as i64 + 100);
            assert_eq!(mesh.read(c, 0), i as i64 + 100, "sources are kept");
        }
        let l = mesh.ledger();
        assert_eq!(l.total_steps, 11);
        assert_eq!(l.comm_steps, 11);
        assert_eq!(l.words_moved, 16 * 8);
        assert_eq!(l.peak_words, 32, "16 originals plus 16 words in flight");
    }

    #[test]
    fn zero_displacement_costs_nothing() {
        let mut mesh = mesh_2d(4);
        mesh.load((1, 1, 0), 0, 5).unwrap();
        let mv = BlockMove::single(Region::new((0, 0, 0), (2, 2, 1)), (0, 0, 0), 0, 1);
        let steps = mesh.route_block(&mv).unwrap();
        assert_eq!(steps, 0);
        assert_eq!(mesh.ledger().total_steps, 0);
        assert_eq!(mesh.read((1, 1, 0), 1), 5);
    }

    #[test]
    fn diagonal_three_d_move_uses_first_axis_extent() {
        let mut mesh = mesh_3d(8);
        let src = Region::new((0, 2, 1), (2, 2, 2));
        for (i, c) in src.cells().enumerate() {
            mesh.load(c, 2, i as i64).unwrap();
        }
        let mv = BlockMove::single(src, (3, -1, 2), 2, 3);
        let steps = mesh.route_block(&mv).unwrap();
        assert_eq!(steps, 6 + 2 - 1);
        for (i, c) in src.cells().enumerate() {
            let t = (c.0 + 3, c.1 - 1, c.2 + 2);
            assert_eq!(mesh.read(t, 3), i as i64);
        }
    }

    #[test]
    fn multi_slot_moves_charge_one_pass_per_slot() {
        let mut mesh = mesh_2d(8);
        let src = Region::new((0, 0, 0), (2, 1, 1));
        for c in src.cells() {
            mesh.load(c, 0, 1).unwrap();
            mesh.load(c, 1, 2).unwrap();
        }
        let mv = BlockMove { src, disp: (4, 0, 0), slots: vec![(0, 0), (1, 1)] };
        let steps = mesh.route_block(&mv).unwrap();
        assert_eq!(steps, 2 * (4 + 2 - 1));
    }

    #[test]
    fn overlapping_slide_keeps_pre_move_values() {
        let mut mesh = mesh_2d(8);
        let src = Region::new((0, 0, 0), (4, 1, 1));
        for (i, c) in src.cells().enumerate() {
            mesh.load(c, 0, 10 + i as i64).unwrap();
        }
        // destination x in 2..6 overlaps source x in 0..4.
        mesh.route_block(&BlockMove::single(src, (2, 0, 0), 0, 0)).unwrap();
        for i in 0..4 {
            assert_eq!(mesh.read((i + 2, 0, 0), 0), 10 + i as i64);
        }
    }

    #[test]
    fn batch_groups_run_concurrently() {
        let mut mesh = mesh_2d(16);
        let a = Region::new((0, 0, 0), (2, 2, 1));
        let b = Region::new((0, 8, 0), (2, 2, 1));
        for c in a.cells().chain(b.cells()) {
            mesh.load(c, 0, 1).unwrap();
        }
        let steps = mesh
            .route_batch(&[
                vec![BlockMove::single(a, (6, 0, 0), 0, 0)],
                vec![
                    BlockMove::single(b, (2, 0, 0), 0, 0),
                    BlockMove::single(b.translated((2, 0, 0)), (2, 0, 0), 0, 1),
                ],
            ])
            .unwrap();
        // group 1: 6 + 2 - 1 = 7; group 2: (2 + 2 - 1) * 2 = 6 sequential.
        assert_eq!(steps, 7);
        assert_eq!(mesh.ledger().total_steps, 7);
        assert_eq!(mesh.ledger().words_moved, 4 * 6 + 4 * 2 + 4 * 2);
    }

    #[test]
    #[should_panic(expected = "overlap")]
    fn batch_rejects_touching_envelopes() {
        let mut mesh = mesh_2d(8);
        let a = Region::new((0, 0, 0), (2, 2, 1));
        let b = Region::new((3, 0, 0), (2, 2, 1));
        let _ = mesh.route_batch(&[
            vec![BlockMove::single(a, (2, 0, 0), 0, 0)],
            vec![BlockMove::single(b, (2, 0, 0), 0, 0)],
        ]);
    }

    #[test]
    fn word_routing_reverses_a_row_in_distance_steps() {
        let mut mesh = mesh_2d(4);
        for x in 0..4 {
            mesh.load((x, 0, 0), 0, x as i64).unwrap();
        }
        let moves: Vec<WordMove> = (0..4)
            .map(|x| WordMove {
                src: (x, 0, 0),
                src_slot: 0,
                dst: (3 - x, 0, 0),
                dst_slot: 1,
            })
            .collect();
        let steps = mesh.route_words(&moves).unwrap();
        assert_eq!(steps, 3, "opposite directions never share a directed link");
        for x in 0..4 {
            assert_eq!(mesh.read((x, 0, 0), 1), 3 - x as i64);
        }
        assert_eq!(mesh.ledger().words_moved, 3 + 1 + 1 + 3);
    }

    #[test]
    fn word_routing_pipelines_a_shared_sink() {
        let mut mesh = mesh_2d(4);
        for x in 1..4 {
            mesh.load((x, 0, 0), 0, 10 + x as i64).unwrap();
        }
        let moves: Vec<WordMove> = (1..4)
            .map(|x| WordMove {
                src: (x, 0, 0),
                src_slot: 0,
                dst: (0, 0, 0),
                dst_slot: x,
            })
            .collect();
        let steps = mesh.route_words(&moves).unwrap();
        assert_eq!(steps, 3, "the shared link pipelines one word per step");
        assert_eq!(mesh.ledger().words_moved, 1 + 2 + 3);
    }

    #[test]
    fn word_routing_serializes_a_shared_source_link() {
        let mut mesh = mesh_2d(4);
        mesh.load((0, 0, 0), 0, 7).unwrap();
        mesh.load((0, 0, 0), 1, 8).unwrap();
        let moves = [
            WordMove { src: (0, 0, 0), src_slot: 0, dst: (2, 0, 0), dst_slot: 0 },
            WordMove { src: (0, 0, 0), src_slot: 1, dst: (3, 0, 0), dst_slot: 0 },
        ];
        let steps = mesh.route_words(&moves).unwrap();
        assert_eq!(steps, 4, "second word waits one step at the shared link");
        assert_eq!(mesh.read((2, 0, 0), 0), 7);
        assert_eq!(mesh.read((3, 0, 0), 0), 8);
    }

    #[test]
    fn repeated_routpaths_replay_identical_charges() {
        let run = || {
            let mut mesh = mesh_2d(8);
            let src = Region::new((1, 1, 0), (3, 2, 1));
            for c in src.cells() {
                mesh.load(c, 0, 3).unwrap();
            }
            mesh.route_block(&BlockMove::single(src, (4, 2, 0), 0, 1)).unwrap();
            mesh.route_block(&BlockMove::single(src, (4, 2, 0), 0, 1)).unwrap();
            mesh.ledger().clone()
        };
        let a = run();
        let b = run();
        assert_eq!(a, b);
        assert_eq!(a.total_steps, 2 * (6 + 3 - 1));
    }
}
