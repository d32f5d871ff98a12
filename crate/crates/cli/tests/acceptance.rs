//! Acceptance gate: every release criterion as one test with one printed
//! pass/fail line. The criteria check the mesh algorithms against their
//! serial oracles at stated sizes and tolerances, the charge accounting
//! against its scaling claims, and the binary against its output and exit
//! contracts.

use std::panic::{catch_unwind, UnwindSafe};
use std::process::{Command, Output};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use meshgrain::algebra::{
    floyd_warshall, reachability_oracle, serial_matmul, serial_strassen, Matrix, Semiring, Word,
    ALL_SEMIRINGS, INF,
};
use meshgrain::engine::Dir;
use meshgrain::maze::{charge_plan, random_maze, solve_recursive, wave_bfs};
use meshgrain::meshmul::{
    bounds, general_matmul_3d, plan_alg_b, ring_matmul_3d, Binding, Exponent, Frac, MeshSpec,
};
use meshgrain::paths::{apsp, reconstruct_path, squarings_needed, transitive_closure, ClosureMode};
use meshgrain::stacked::{replay_2d, simulate_2d_on_3d};
use meshgrain::algebra::PairAlgebra;
use meshgrain::systolic::{systolic_matmul, CellProgram, SystolicCells};

/// Prints the criterion verdict line, then propagates any failure.
fn report(name: &str, body: impl FnOnce() -> String + UnwindSafe) {
    match catch_unwind(body) {
        Ok(detail) => println!("{name}: PASS ({detail})"),
        Err(cause) => {
            let msg = cause
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| cause.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            println!("{name}: FAIL ({msg})");
            panic!("{name} failed");
        }
    }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[test]
fn c01_systolic_matches_the_serial_oracle() {
    report("c01 systolic-vs-serial", || {
        let start = Instant::now();
        let mut runs = 0u32;
        for &semiring in ALL_SEMIRINGS.iter() {
            for n in [2usize, 4, 8, 16, 32] {
                for seed in 0..50u64 {
                    let mut r = rng(seed * 1009 + n as u64);
                    let a = Matrix::random(n, semiring, &mut r);
                    let b = Matrix::random(n, semiring, &mut r);
                    let (got, ledger) = systolic_matmul(&a, &b).unwrap();
                    assert_eq!(got, serial_matmul(&a, &b).unwrap(), "{semiring} n={n} seed={seed}");
                    assert_eq!(ledger.processors, (n * n) as u64);
                    runs += 1;
                }
            }
        }
        let secs = start.elapsed().as_secs_f64();
        assert!(secs < 30.0, "budget blown: {secs:.1}s");
        format!("{runs} runs, all four semirings, {secs:.1}s")
    });
}

#[test]
fn c02_cube_product_matches_the_serial_oracle() {
    report("c02 cube-vs-serial", || {
        let start = Instant::now();
        let mut runs = 0u32;
        for &(n, alpha) in &[(16usize, 2.25), (256, 2.25), (8, 2.0), (64, 2.0)] {
            for &semiring in ALL_SEMIRINGS.iter() {
                for seed in 0..20u64 {
                    let mut r = rng(seed * 7919 + n as u64);
                    let a = Matrix::random(n, semiring, &mut r);
                    let b = Matrix::random(n, semiring, &mut r);
                    let (got, _) = general_matmul_3d(&a, &b, alpha).unwrap();
                    assert_eq!(
                        got,
                        serial_matmul(&a, &b).unwrap(),
                        "{semiring} n={n} alpha={alpha} seed={seed}"
                    );
                    runs += 1;
                }
            }
        }
        let secs = start.elapsed().as_secs_f64();
        assert!(secs < 180.0, "budget blown: {secs:.1}s");
        format!("{runs} runs at both exponent extremes, {secs:.1}s")
    });
}

#[test]
fn c03_ring_product_matches_both_serial_oracles() {
    report("c03 ring-vs-serial", || {
        let start = Instant::now();
        let mut runs = 0u32;
        for n in [8usize, 16, 32] {
            let sched = plan_alg_b(n, 7.0, 2.0, Some(1)).unwrap();
            // structure: one grid set per thinning step plus the first, all
            // shrinking, and a leaf small enough to multiply directly
            assert_eq!(sched.grids.len(), sched.steps + 1);
            for pair in sched.grids.windows(2) {
                assert!(pair[1].workers() < pair[0].workers());
            }
            assert!(sched.leaf_dim <= 8);
            assert!(sched.memory_factor >= 1.0);
            for seed in 0..20u64 {
                let mut r = rng(seed * 31 + n as u64);
                let a = Matrix::random(n, Semiring::PlusMul, &mut r);
                let b = Matrix::random(n, Semiring::PlusMul, &mut r);
                let (got, ledger) = ring_matmul_3d(&a, &b, &sched).unwrap();
                let classic = serial_matmul(&a, &b).unwrap();
                assert_eq!(got, classic, "n={n} seed={seed}");
                assert_eq!(got, serial_strassen(&a, &b, 4).unwrap(), "n={n} seed={seed}");
                assert_eq!(ledger.phase_steps("top-subproblems"), 7);
                assert!(ledger.phase_steps("ring-sync") > 0);
                runs += 1;
            }
        }
        let secs = start.elapsed().as_secs_f64();
        assert!(secs < 60.0, "budget blown: {secs:.1}s");
        format!("{runs} runs against both oracles, {secs:.1}s")
    });
}

fn charged_total(n: usize, alpha: f64) -> f64 {
    let mut r = rng(n as u64);
    let a = Matrix::random(n, Semiring::PlusMul, &mut r);
    let b = Matrix::random(n, Semiring::PlusMul, &mut r);
    let (_, ledger) = general_matmul_3d(&a, &b, alpha).unwrap();
    ledger.total_steps as f64
}

#[test]
fn c04_step_counts_scale_as_charged() {
    report("c04 scaling-ratios", || {
        let mut details = Vec::new();
        for n in [8usize, 16, 32] {
            let mut r = rng(n as u64);
            let a = Matrix::random(n, Semiring::PlusMul, &mut r);
            let b = Matrix::random(n, Semiring::PlusMul, &mut r);
            let t1 = systolic_matmul(&a, &b).unwrap().1.total_steps as f64;
            let mut r = rng(2 * n as u64);
            let a = Matrix::random(2 * n, Semiring::PlusMul, &mut r);
            let b = Matrix::random(2 * n, Semiring::PlusMul, &mut r);
            let t2 = systolic_matmul(&a, &b).unwrap().1.total_steps as f64;
            let ratio = t2 / t1;
            assert!(
                (1.8..=2.2).contains(&ratio),
                "systolic doubling at n={n} gave {ratio:.3}"
            );
        }
        details.push("systolic doublings in [1.8, 2.2]".to_string());

        let balanced = charged_total(256, 2.25) / charged_total(16, 2.25);
        assert!(
            (5.0..=13.0).contains(&balanced),
            "balanced-exponent growth 16->256 gave {balanced:.2}"
        );
        details.push(format!("16->256 at 9/4: {balanced:.2}"));

        let floor = charged_total(64, 2.0) / charged_total(8, 2.0);
        assert!((6.0..=10.0).contains(&floor), "floor-exponent growth 8->64 gave {floor:.2}");
        details.push(format!("8->64 at 2: {floor:.2}"));
        details.join("; ")
    });
}

#[test]
fn c05_path_solvers_match_their_oracles() {
    report("c05 paths-vs-oracles", || {
        let start = Instant::now();
        let sizes = [5usize, 8, 11, 16, 23, 32];

        // transitive closure in both algebras against reflexive reachability
        for case in 0..100u64 {
            let n = sizes[case as usize % sizes.len()];
            let mut r = rng(case);
            let mut adj = Matrix::zeros(n, Semiring::BoolOr);
            for i in 0..n {
                for j in 0..n {
                    if i != j && r.gen_bool(0.2) {
                        adj.set(i, j, 1);
                    }
                }
            }
            let want = reachability_oracle(&adj);
            for mode in [ClosureMode::Boolean, ClosureMode::Ring] {
                let (got, ledger) = transitive_closure(&adj, mode, 2.25).unwrap();
                assert_eq!(got, want, "case={case} {mode:?}");
                assert_eq!(
                    ledger.phase_steps("squarings"),
                    squarings_needed(n) as u64,
                    "case={case} {mode:?}"
                );
            }
        }

        // shortest paths against the cubic-time reference, with witnesses
        for case in 0..100u64 {
            let n = sizes[case as usize % sizes.len()];
            let mut r = rng(1000 + case);
            let mut w = Matrix::filled(n, Semiring::MinPlus, INF);
            for i in 0..n {
                for j in 0..n {
                    if i != j && r.gen_bool(0.35) {
                        w.set(i, j, r.gen_range(0..100));
                    }
                }
            }
            let (want, _) = floyd_warshall(&w).unwrap();
            let res = apsp(&w, 2.25).unwrap();
            assert_eq!(res.dist, want, "case={case}");
            assert_eq!(res.ledger.phase_steps("squarings"), squarings_needed(n) as u64);
            let mut w0 = w.clone();
            for i in 0..n {
                w0.set(i, i, 0);
            }
            for i in 0..n {
                let j = (i + 1 + (case as usize % (n - 1))) % n;
                let d = res.dist.get(i, j);
                match reconstruct_path(&res.dist, &res.witnesses, i, j) {
                    None => assert!(d >= INF, "case={case} {i}->{j}"),
                    Some(path) => {
                        assert_eq!(path[0], i);
                        assert_eq!(*path.last().unwrap(), j);
                        let total: Word =
                            path.windows(2).map(|uv| w0.get(uv[0], uv[1])).sum();
                        assert_eq!(total, d, "case={case} {i}->{j}");
                    }
                }
            }
        }

        // widest-bottleneck paths against the same reference in its other
        // algebra
        for case in 0..30u64 {
            let n = sizes[case as usize % sizes.len()];
            let mut r = rng(2000 + case);
            let mut w = Matrix::filled(n, Semiring::MaxMin, Semiring::MaxMin.zero());
            for i in 0..n {
                for j in 0..n {
                    if i != j && r.gen_bool(0.3) {
                        w.set(i, j, r.gen_range(1..1000));
                    }
                }
            }
            let (want, _) = floyd_warshall(&w).unwrap();
            let (got, _) = meshgrain::paths::bottleneck_apsp(&w, 2.25).unwrap();
            assert_eq!(got, want, "case={case}");
        }
        format!("230 graphs, {:.1}s", start.elapsed().as_secs_f64())
    });
}

/// Toy wave automaton: cells flood their maximum toward +x/+y.
struct RippleMax {
    edge: usize,
}

impl CellProgram for RippleMax {
    fn edge(&self) -> usize {
        self.edge
    }

    fn state_words(&self) -> usize {
        2
    }

    fn total_cell_steps(&self) -> u64 {
        2 * self.edge as u64
    }

    fn init(&self, x: usize, y: usize, state: &mut [Word]) {
        state[0] = (x * 31 + y * 7 + 3) as Word;
    }

    fn message(&self, _x: usize, _y: usize, _t: u64, state: &[Word], dir: Dir) -> Option<Word> {
        let (dx, dy, _) = dir.offset();
        (dx == 1 || dy == 1).then_some(state[0])
    }

    fn update(&self, _x: usize, _y: usize, _t: u64, state: &mut [Word], inbox: &[Option<Word>; 4]) {
        for w in inbox.iter().flatten() {
            state[0] = state[0].max(*w);
        }
        state[1] += 1;
    }
}

/// Toy mixing automaton with a time-dependent send pattern and an edge that
/// needs padding inside the cube.
struct ParityWave {
    edge: usize,
}

impl CellProgram for ParityWave {
    fn edge(&self) -> usize {
        self.edge
    }

    fn state_words(&self) -> usize {
        3
    }

    fn total_cell_steps(&self) -> u64 {
        3 * self.edge as u64
    }

    fn init(&self, x: usize, y: usize, state: &mut [Word]) {
        state[0] = ((x + 2 * y) % 5) as Word;
    }

    fn message(&self, x: usize, y: usize, t: u64, state: &[Word], dir: Dir) -> Option<Word> {
        let (dx, dy, _) = dir.offset();
        let outward = dx == -1 || dy == -1;
        (outward && (t as usize + x + y).is_multiple_of(2)).then_some(state[0] + t as Word)
    }

    fn update(&self, _x: usize, _y: usize, _t: u64, state: &mut [Word], inbox: &[Option<Word>; 4]) {
        let mut sum = 0i64;
        let mut count = 0i64;
        for w in inbox.iter().flatten() {
            sum = sum.wrapping_add(*w);
            count += 1;
        }
        state[1] = state[1].wrapping_add(sum);
        state[0] = (state[0] + state[1].rem_euclid(97)) % 97;
        state[2] ^= count;
    }
}

fn slowdown_of_edge(edge: usize) -> f64 {
    let mut r = rng(edge as u64);
    let a = Matrix::random(edge, Semiring::PlusMul, &mut r);
    let b = Matrix::random(edge, Semiring::PlusMul, &mut r);
    let cells = SystolicCells::new(vec![&a], vec![&b], PairAlgebra::Plain(Semiring::PlusMul));
    let (_, ledger) = simulate_2d_on_3d(&cells).unwrap();
    let direct = systolic_matmul(&a, &b).unwrap().1.total_steps as f64;
    ledger.total_steps as f64 / direct
}

#[test]
fn c06_stacked_simulation_is_deterministic_and_constant_factor() {
    report("c06 stacked-simulation", || {
        let start = Instant::now();
        let mut r = rng(77);
        let a = Matrix::random(16, Semiring::MinPlus, &mut r);
        let b = Matrix::random(16, Semiring::MinPlus, &mut r);
        let cells =
            SystolicCells::new(vec![&a], vec![&b], PairAlgebra::Plain(Semiring::MinPlus));
        let ripple = RippleMax { edge: 8 };
        let parity = ParityWave { edge: 6 };

        fn check<P: CellProgram>(prog: &P, label: &str) {
            let (first, ledger_a) = simulate_2d_on_3d(prog).unwrap();
            let (second, ledger_b) = simulate_2d_on_3d(prog).unwrap();
            assert_eq!(first, second, "{label}: repeated runs diverge");
            assert_eq!(ledger_a.emit(), ledger_b.emit(), "{label}: charges diverge");
            assert_eq!(first, replay_2d(prog), "{label}: cube result differs from the flat run");
        }
        check(&cells, "torus-multiplier");
        check(&ripple, "ripple");
        check(&parity, "parity");

        let small = slowdown_of_edge(8);
        let large = slowdown_of_edge(64);
        let drift = (large - small).abs() / small;
        assert!(
            drift <= 0.25,
            "slowdown factor moved {drift:.3} between 64 and 4096 cells"
        );
        format!(
            "three programs bit-identical; slowdowns {small:.0}x vs {large:.0}x, {:.1}s",
            start.elapsed().as_secs_f64()
        )
    });
}

#[test]
fn c07_maze_solvers_agree_and_charge_as_planned() {
    report("c07 maze-solvers", || {
        let start = Instant::now();
        let mut solved = 0u32;
        for &(dim, side) in &[(2usize, 8usize), (2, 16), (2, 32), (3, 4), (3, 8), (3, 16)] {
            for seed in 0..100u64 {
                let m = random_maze(dim, side, 0.35, seed * 3 + dim as u64);
                let wave = wave_bfs(&m);
                let rec = solve_recursive(&m, None).unwrap();
                assert_eq!(rec.reachable, wave.reachable, "dim={dim} side={side} seed={seed}");
                assert_eq!(rec.distance, wave.distance, "dim={dim} side={side} seed={seed}");
                if let Some(path) = &rec.path {
                    assert_eq!(path[0], m.start());
                    assert_eq!(*path.last().unwrap(), m.finish());
                    assert_eq!(path.len() as u64, rec.distance.unwrap() + 1);
                    for uv in path.windows(2) {
                        assert!(m.is_open(uv[1]), "blocked cell on path");
                        let (a, b) = (uv[0], uv[1]);
                        let step = a.0.abs_diff(b.0) + a.1.abs_diff(b.1) + a.2.abs_diff(b.2);
                        assert_eq!(step, 1, "non-adjacent path cells");
                    }
                    solved += 1;
                }
            }
        }
        // growing the cubical mesh within its exponent range only lowers the
        // charge
        for side in [16usize, 32] {
            let mut last = u128::MAX;
            for exp in [Frac::new(4, 1), Frac::new(17, 4), Frac::new(9, 2)] {
                let total = charge_plan(3, side, exp).unwrap().total();
                assert!(total < last, "side={side} exponent={exp}");
                last = total;
            }
        }
        format!(
            "600 mazes, {solved} reachable with validated paths, {:.1}s",
            start.elapsed().as_secs_f64()
        )
    });
}

#[test]
fn c08_bound_reports_are_exactly_rational() {
    report("c08 rational-bounds", || {
        let r = bounds(4096, 3, MeshSpec::Alpha(Frac::new(9, 4))).unwrap();
        assert_eq!(r.mesh_size, 1 << 27);
        assert_eq!(r.edge, 512);
        assert_eq!(r.diameter_time, 3 * 511);
        assert_eq!(r.speedup_time, 512);
        assert_eq!(r.diameter_exponent, Exponent::Exact(Frac::new(3, 4)));
        assert_eq!(r.speedup_exponent, Exponent::Exact(Frac::new(3, 4)));
        assert_eq!(r.binding, Binding::Tie);
        assert_eq!(r.optimal_alpha, Frac::new(9, 4));
        assert_eq!(r.ring_exponent, Frac::new(2, 3));

        let by_size = bounds(4096, 3, MeshSpec::Size(1 << 27)).unwrap();
        assert_eq!(by_size.diameter_exponent, Exponent::Exact(Frac::new(3, 4)));
        assert_eq!(by_size.binding, Binding::Tie);

        let square = bounds(256, 2, MeshSpec::Alpha(Frac::new(2, 1))).unwrap();
        assert_eq!(square.mesh_size, 65536);
        assert_eq!(square.diameter_time, 2 * 255);
        assert_eq!(square.speedup_time, 256);
        assert_eq!(square.diameter_exponent, Exponent::Exact(Frac::new(1, 1)));
        assert_eq!(square.binding, Binding::Tie);
        assert_eq!(square.ring_exponent, Frac::new(1, 1));

        let skewed = bounds(4096, 3, MeshSpec::Alpha(Frac::new(2, 1))).unwrap();
        assert_eq!(skewed.speedup_time, 4096);
        assert_eq!(skewed.binding, Binding::Speedup);
        "balanced, explicit-size, square, and skewed reports all exact".into()
    });
}

fn run_binary(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_meshgrain"))
        .args(args)
        .output()
        .expect("binary runs")
}

#[test]
fn c09_budget_enforcement_names_the_culprit() {
    report("c09 enforcement-probe", || {
        let o = run_binary(&["engine-probe"]);
        assert_eq!(o.status.code(), Some(2), "probe must exit 2");
        let err = String::from_utf8(o.stderr).unwrap();
        assert!(err.contains("processor (2,0,0)"), "missing processor: {err}");
        assert!(err.contains("step 5"), "missing step: {err}");
        "violation names processor (2,0,0) at step 5 and exits 2".into()
    });
}

#[test]
fn c10_cli_output_is_deterministic() {
    report("c10 cli-determinism", || {
        let cases: [&[&str]; 3] = [
            &["matmul", "--algo", "cube", "--n", "16", "--alpha", "9/4", "--seed", "5"],
            &["scaling", "--algo", "systolic", "--sizes", "8,16,32", "--seeds", "2"],
            &["maze", "--random", "2,16", "--seed", "3", "--solver", "both"],
        ];
        for args in cases {
            let first = run_binary(args);
            let second = run_binary(args);
            assert_eq!(first.status.code(), second.status.code(), "{args:?}");
            assert_eq!(first.stdout, second.stdout, "{args:?}");
            assert_eq!(first.stderr, second.stderr, "{args:?}");
        }
        "three command lines byte-identical across runs".into()
    });
}
