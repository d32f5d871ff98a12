//! Graph path problems solved by repeated matrix squaring on the cube.
//!
//! Transitive closure, all-pairs shortest paths, and all-pairs bottleneck
//! paths all reduce to `ceil(lg n)` squarings of an `n x n` matrix: after
//! `r` squarings every entry covers the best path of at most `2^r` edges.
//! The squarings run on the mesh multipliers from [`crate::meshmul`], so
//! every solve carries an exact step bill, and each squaring is recorded
//! under the ledger phase `squarings`.
//!
//! Shortest paths additionally carry witnesses: each squaring runs over
//! value/tag entry pairs, where the tag names the column the winning product
//! came through, and the host keeps the most recent strictly improving tag
//! per pair. Walking the witnesses backwards reconstructs an explicit
//! optimal path without ever storing more than one intermediate per pair.

use thiserror::Error;

use crate::algebra::{
    tag_with_index, AlgebraError, Matrix, PairAlgebra, Semiring, Word, INF, NO_TAG,
};
use crate::engine::StepLedger;
use crate::meshmul::{
    general_matmul_3d, general_matmul_3d_pairs, plan_alg_b, ring_matmul_3d, MulError,
};

/// Failures of the path solvers.
#[derive(Debug, Error)]
pub enum PathsError {
    #[error("bad input: {0}")]
    Input(String),
    #[error("negative cycle through vertex {0}")]
    NegativeCycle(usize),
    #[error(transparent)]
    Mul(#[from] MulError),
    #[error(transparent)]
    Algebra(#[from] AlgebraError),
}

/// Which algebra carries the closure squarings.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClosureMode {
    /// Or-and squarings of the boolean adjacency matrix.
    Boolean,
    /// Wrapping-ring squarings (path counting) with entries clamped back to
    /// 0/1 after every round, so counts never grow past `n + 1`.
    Ring,
}

/// Squarings needed to cover paths of up to `n - 1` edges: `ceil(lg n)`.
pub fn squarings_needed(n: usize) -> u32 {
    let mut r = 0;
    while (1usize << r) < n {
        r += 1;
    }
    r
}

fn check_boolean(adj: &Matrix) -> Result<(), PathsError> {
    if adj.semiring() != Semiring::BoolOr {
        return Err(PathsError::Input(
            "transitive closure needs a boolean or-and adjacency matrix".into(),
        ));
    }
    if adj.entries().iter().any(|&e| e != 0 && e != 1) {
        return Err(PathsError::Input("adjacency entries must be 0 or 1".into()));
    }
    Ok(())
}

/// Reflexive-transitive closure of a boolean adjacency matrix by repeated
/// squaring; `alpha` sizes the cube for the boolean mode.
pub fn transitive_closure(
    adj: &Matrix,
    mode: ClosureMode,
    alpha: f64,
) -> Result<(Matrix, StepLedger), PathsError> {
    check_boolean(adj)?;
    let n = adj.n();
    let rounds = squarings_needed(n);
    let mut ledger = StepLedger::new(1);
    let closed = match mode {
        ClosureMode::Boolean => {
            let mut m = adj.clone();
            for i in 0..n {
                m.set(i, i, 1);
            }
            for _ in 0..rounds {
                let (sq, bill) = general_matmul_3d(&m, &m, alpha)?;
                m = sq;
                ledger.add_sequential(&bill);
                ledger.note_phase_steps("squarings", 1);
            }
            m
        }
        ClosureMode::Ring => {
            // pad with isolated self-looped vertices so the ring multiplier
            // sees a power-of-two side
            let np = n.next_power_of_two().max(2);
            let mut m = Matrix::zeros(np, Semiring::PlusMul);
            for i in 0..n {
                for j in 0..n {
                    m.set(i, j, adj.get(i, j));
                }
            }
            for i in 0..np {
                m.set(i, i, 1);
            }
            let sched = plan_alg_b(np, 7.0, 2.0, Some(1))?;
            for _ in 0..rounds {
                let (sq, bill) = ring_matmul_3d(&m, &m, &sched)?;
                m = sq;
                for i in 0..np {
                    for j in 0..np {
                        m.set(i, j, (m.get(i, j) != 0) as Word);
                    }
                }
                ledger.add_sequential(&bill);
                ledger.note_phase_steps("squarings", 1);
            }
            let mut out = Matrix::zeros(n, Semiring::BoolOr);
            for i in 0..n {
                for j in 0..n {
                    out.set(i, j, m.get(i, j));
                }
            }
            out
        }
    };
    Ok((closed, ledger))
}

/// One remembered intermediate per vertex pair, with the squaring round that
/// set it; enough to reconstruct a full optimal path recursively.
#[derive(Debug, Clone)]
pub struct WitnessTable {
    n: usize,
    mid: Vec<Option<usize>>,
    round: Vec<u32>,
}

impl WitnessTable {
    /// Intermediate vertex of the remembered split, `None` when the direct
    /// edge was never improved on.
    pub fn mid(&self, i: usize, j: usize) -> Option<usize> {
        self.mid[i * self.n + j]
    }

    /// Squaring round (1-based) of the last strict improvement, 0 if none.
    pub fn round(&self, i: usize, j: usize) -> u32 {
        self.round[i * self.n + j]
    }
}

/// All-pairs shortest paths result: distances, witnesses, step bill.
#[derive(Debug, Clone)]
pub struct ApspResult {
    pub dist: Matrix,
    pub witnesses: WitnessTable,
    pub ledger: StepLedger,
}

/// All-pairs shortest paths by tagged min-plus squaring on roughly
/// `n^alpha` processors. Negative edges are fine; negative cycles error.
pub fn apsp(w: &Matrix, alpha: f64) -> Result<ApspResult, PathsError> {
    if w.semiring() != Semiring::MinPlus {
        return Err(PathsError::Input("shortest paths need min-plus weights".into()));
    }
    let n = w.n();
    let mut d = w.clone();
    for i in 0..n {
        d.set(i, i, 0);
    }
    let mut mid = vec![None; n * n];
    let mut round = vec![0u32; n * n];
    let mut ledger = StepLedger::new(1);
    for r in 1..=squarings_needed(n) {
        let (vals, tags) = tag_with_index(&d);
        // the tag of a product comes from the left plane, so the right tag
        // plane only has to exist
        let b_tags = d.clone().with_semiring(Semiring::PlusMul);
        let (mut res, bill) = general_matmul_3d_pairs(
            &[&vals, &tags],
            &[&d, &b_tags],
            PairAlgebra::MinPlusTagged,
            alpha,
        )?;
        let new_tags = res.pop().expect("tag plane");
        let new_d = res.pop().expect("value plane");
        for i in 0..n {
            for j in 0..n {
                if new_d.get(i, j) < d.get(i, j) {
                    let t = new_tags.get(i, j);
                    debug_assert!(t != NO_TAG, "a strict improvement names its column");
                    mid[i * n + j] = Some(t as usize);
                    round[i * n + j] = r;
                }
            }
        }
        d = new_d;
        ledger.add_sequential(&bill);
        ledger.note_phase_steps("squarings", 1);
    }
    for i in 0..n {
        if d.get(i, i) < 0 {
            return Err(PathsError::NegativeCycle(i));
        }
    }
    Ok(ApspResult { dist: d, witnesses: WitnessTable { n, mid, round }, ledger })
}

/// Explicit optimal path from `i` to `j` as a vertex list, `None` when `j`
/// is unreachable. Terminates because every remembered split was set in a
/// strictly earlier round than the pair it splits.
pub fn reconstruct_path(
    dist: &Matrix,
    wit: &WitnessTable,
    i: usize,
    j: usize,
) -> Option<Vec<usize>> {
    if dist.get(i, j) >= INF {
        return None;
    }
    if i == j {
        return Some(vec![i]);
    }
    match wit.mid(i, j) {
        None => Some(vec![i, j]),
        Some(m) => {
            let mut left = reconstruct_path(dist, wit, i, m)?;
            let right = reconstruct_path(dist, wit, m, j)?;
            left.extend_from_slice(&right[1..]);
            Some(left)
        }
    }
}

/// All-pairs widest-bottleneck paths by max-min squaring on roughly
/// `n^alpha` processors.
pub fn bottleneck_apsp(w: &Matrix, alpha: f64) -> Result<(Matrix, StepLedger), PathsError> {
    if w.semiring() != Semiring::MaxMin {
        return Err(PathsError::Input("bottleneck paths need max-min capacities".into()));
    }
    let n = w.n();
    let mut d = w.clone();
    for i in 0..n {
        d.set(i, i, Semiring::MaxMin.one());
    }
    let mut ledger = StepLedger::new(1);
    for _ in 0..squarings_needed(n) {
        let (sq, bill) = general_matmul_3d(&d, &d, alpha)?;
        d = sq;
        ledger.add_sequential(&bill);
        ledger.note_phase_steps("squarings", 1);
    }
    Ok((d, ledger))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::{bounded_edge_paths, floyd_warshall, reachability_oracle};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn random_digraph(n: usize, density: f64, r: &mut ChaCha8Rng) -> Matrix {
        let mut m = Matrix::zeros(n, Semiring::BoolOr);
        for i in 0..n {
            for j in 0..n {
                if i != j && r.gen_bool(density) {
                    m.set(i, j, 1);
                }
            }
        }
        m
    }

    fn random_weights(n: usize, density: f64, hi: i64, r: &mut ChaCha8Rng) -> Matrix {
        let mut m = Matrix::filled(n, Semiring::MinPlus, INF);
        for i in 0..n {
            for j in 0..n {
                if i != j && r.gen_bool(density) {
                    m.set(i, j, r.gen_range(0..hi));
                }
            }
        }
        m
    }

    #[test]
    fn closure_matches_reachability_in_both_modes() {
        for n in [5usize, 8, 13] {
            for seed in 0..3u64 {
                let mut r = rng(seed * 7 + n as u64);
                let adj = random_digraph(n, 0.25, &mut r);
                let want = reachability_oracle(&adj);
                for mode in [ClosureMode::Boolean, ClosureMode::Ring] {
                    let (got, ledger) = transitive_closure(&adj, mode, 2.25).unwrap();
                    assert_eq!(got, want, "n={n} seed={seed} {mode:?}");
                    let squarings = ledger
                        .per_phase
                        .iter()
                        .find(|(k, _)| k == "squarings")
                        .map(|(_, v)| *v);
                    assert_eq!(squarings, Some(squarings_needed(n) as u64));
                }
            }
        }
    }

    #[test]
    fn closure_rejects_non_boolean_input() {
        let weights = Matrix::zeros(4, Semiring::MinPlus);
        assert!(matches!(
            transitive_closure(&weights, ClosureMode::Boolean, 2.25),
            Err(PathsError::Input(_))
        ));
        let mut bad = Matrix::zeros(4, Semiring::BoolOr);
        bad.set(0, 1, 2);
        assert!(matches!(
            transitive_closure(&bad, ClosureMode::Ring, 2.25),
            Err(PathsError::Input(_))
        ));
    }

    #[test]
    fn closure_is_idempotent_and_monotone() {
        let mut r = rng(11);
        let adj = random_digraph(8, 0.2, &mut r);
        let (once, _) = transitive_closure(&adj, ClosureMode::Boolean, 2.25).unwrap();
        let (twice, _) = transitive_closure(&once, ClosureMode::Boolean, 2.25).unwrap();
        assert_eq!(once, twice);
        // adding edges can only add reachable pairs
        let mut more = adj.clone();
        more.set(1, 6, 1);
        more.set(3, 0, 1);
        let (bigger, _) = transitive_closure(&more, ClosureMode::Boolean, 2.25).unwrap();
        for (a, b) in once.entries().iter().zip(bigger.entries()) {
            assert!(*a <= *b);
        }
    }

    #[test]
    fn shortest_paths_match_floyd_warshall() {
        for n in [6usize, 8, 11] {
            for seed in 0..3u64 {
                let mut r = rng(seed * 31 + n as u64);
                let w = random_weights(n, 0.4, 100, &mut r);
                let (want, _) = floyd_warshall(&w).unwrap();
                let got = apsp(&w, 2.25).unwrap();
                assert_eq!(got.dist, want, "n={n} seed={seed}");
            }
        }
    }

    #[test]
    fn negative_edges_work_and_negative_cycles_are_reported() {
        // a negative edge on an acyclic detour changes the optimum
        let mut w = Matrix::filled(5, Semiring::MinPlus, INF);
        w.set(0, 1, 10);
        w.set(0, 2, 2);
        w.set(2, 3, -5);
        w.set(3, 1, 4);
        let (want, _) = floyd_warshall(&w).unwrap();
        let got = apsp(&w, 2.25).unwrap();
        assert_eq!(got.dist, want);
        assert_eq!(got.dist.get(0, 1), 1);

        // a -1 cycle must be flagged by both solvers
        let mut c = Matrix::filled(4, Semiring::MinPlus, INF);
        c.set(0, 1, 1);
        c.set(1, 2, -1);
        c.set(2, 0, -1);
        assert!(floyd_warshall(&c).is_err());
        assert!(matches!(apsp(&c, 2.25), Err(PathsError::NegativeCycle(_))));
    }

    #[test]
    fn reconstructed_paths_are_genuine_optimal_walks() {
        for seed in 0..4u64 {
            let n = 9;
            let mut r = rng(seed + 100);
            let w = random_weights(n, 0.35, 50, &mut r);
            let mut w0 = w.clone();
            for i in 0..n {
                w0.set(i, i, 0);
            }
            let res = apsp(&w, 2.25).unwrap();
            for i in 0..n {
                for j in 0..n {
                    let d = res.dist.get(i, j);
                    let path = reconstruct_path(&res.dist, &res.witnesses, i, j);
                    if d >= INF {
                        assert!(path.is_none());
                        continue;
                    }
                    let path = path.unwrap();
                    assert_eq!(*path.first().unwrap(), i);
                    assert_eq!(*path.last().unwrap(), j);
                    let total: i64 =
                        path.windows(2).map(|uv| w0.get(uv[0], uv[1])).sum();
                    assert!(path.windows(2).all(|uv| w0.get(uv[0], uv[1]) < INF));
                    assert_eq!(total, d, "walk weight equals the distance");
                }
            }
        }
    }

    #[test]
    fn each_squaring_covers_exactly_doubled_edge_counts() {
        let n = 8;
        let mut r = rng(77);
        let w = random_weights(n, 0.3, 40, &mut r);
        let mut d = w.clone();
        for i in 0..n {
            d.set(i, i, 0);
        }
        for round in 1..=squarings_needed(n) {
            let b_tags = d.clone().with_semiring(Semiring::PlusMul);
            let (vals, tags) = tag_with_index(&d);
            let (mut res, _) = general_matmul_3d_pairs(
                &[&vals, &tags],
                &[&d, &b_tags],
                PairAlgebra::MinPlusTagged,
                2.25,
            )
            .unwrap();
            res.pop();
            d = res.pop().unwrap();
            assert_eq!(d, bounded_edge_paths(&w, 1 << round), "round {round}");
        }
    }

    #[test]
    fn bottleneck_paths_match_floyd_warshall() {
        for seed in 0..3u64 {
            let n = 8;
            let mut r = rng(seed * 5 + 2);
            let mut w = Matrix::filled(n, Semiring::MaxMin, Semiring::MaxMin.zero());
            for i in 0..n {
                for j in 0..n {
                    if i != j && r.gen_bool(0.4) {
                        w.set(i, j, r.gen_range(1..100));
                    }
                }
            }
            let (want, _) = floyd_warshall(&w).unwrap();
            let (got, ledger) = bottleneck_apsp(&w, 2.25).unwrap();
            assert_eq!(got, want, "seed={seed}");
            assert!(ledger.per_phase.iter().any(|(k, v)| k == "squarings" && *v == 3));
        }
    }
}
