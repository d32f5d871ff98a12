//! End-to-end checks of the command-line binary: output contracts, exit
//! codes, and agreement with the serial oracles.

use std::io::Write as _;
use std::process::{Command, Output};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use meshgrain::algebra::{reachability_oracle, serial_matmul, Matrix, Semiring};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_meshgrain"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout_of(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr_of(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

#[test]
fn bounds_reports_exact_rationals() {
    let o = run(&["bounds", "--n", "4096", "--dim", "3", "--alpha", "9/4"]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout_of(&o);
    assert!(out.contains("alpha=9/4"), "{out}");
    assert!(out.contains("mesh_size=134217728"), "{out}");
    assert!(out.contains("diameter_exponent=3/4"), "{out}");
    assert!(out.contains("speedup_exponent=3/4"), "{out}");
    assert!(out.contains("binding=tie"), "{out}");
    assert!(out.contains("optimal_alpha=9/4"), "{out}");
}

#[test]
fn matmul_output_matches_the_serial_oracle() {
    let o = run(&["matmul", "--algo", "systolic", "--n", "8", "--semiring", "maxmin", "--seed", "7"]);
    assert_eq!(o.status.code(), Some(0));
    let got = Matrix::parse(&stdout_of(&o), Semiring::MaxMin).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let a = Matrix::random(8, Semiring::MaxMin, &mut rng);
    let b = Matrix::random(8, Semiring::MaxMin, &mut rng);
    assert_eq!(got, serial_matmul(&a, &b).unwrap());
}

#[test]
fn identical_invocations_are_byte_identical() {
    let args = ["matmul", "--algo", "cube", "--n", "16", "--alpha", "9/4", "--seed", "5"];
    let first = run(&args);
    let second = run(&args);
    assert_eq!(first.status.code(), Some(0));
    assert_eq!(first.stdout, second.stdout);
    assert_eq!(first.stderr, second.stderr);
}

#[test]
fn closure_of_a_graph_file_matches_the_reachability_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut adj = Matrix::zeros(9, Semiring::BoolOr);
    for i in 0..9 {
        for j in 0..9 {
            if i != j && rand::Rng::gen_bool(&mut rng, 0.2) {
                adj.set(i, j, 1);
            }
        }
    }
    let mut file = tempfile::NamedTempFile::new().unwrap();
    file.write_all(adj.emit().as_bytes()).unwrap();
    let path = file.path().to_str().unwrap();
    let o = run(&["paths", "--problem", "closure", "--input", path]);
    assert_eq!(o.status.code(), Some(0));
    let got = Matrix::parse(&stdout_of(&o), Semiring::BoolOr).unwrap();
    assert_eq!(got, reachability_oracle(&adj));
}

#[test]
fn unreachable_maze_exits_three() {
    let mut file = tempfile::NamedTempFile::new().unwrap();
    file.write_all(b"2 4\nS.#.\n##.#\n.#.#\n###F\n").unwrap();
    let path = file.path().to_str().unwrap();
    let o = run(&["maze", "--input", path, "--solver", "both"]);
    assert_eq!(o.status.code(), Some(3));
    let out = stdout_of(&o);
    assert_eq!(out.matches("reachable=false").count(), 2, "{out}");
}

#[test]
fn solvable_maze_reports_both_solvers() {
    let o = run(&["maze", "--random", "2,8", "--seed", "1", "--density", "0.2", "--emit-maze"]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout_of(&o);
    assert!(out.starts_with("2 8\n"), "{out}");
    assert!(out.contains("solver=wave"), "{out}");
    assert!(out.contains("solver=recursive"), "{out}");
    let err = stderr_of(&o);
    assert!(err.contains("level: edge=8"), "{err}");
}

#[test]
fn scaling_emits_the_contract_header_and_fit() {
    let o = run(&["scaling", "--algo", "systolic", "--sizes", "32,8,16", "--seeds", "2"]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout_of(&o);
    let mut lines = out.lines();
    assert_eq!(
        lines.next(),
        Some("algo,n,alpha,comm_steps,compute_steps,total_steps,processors,seed")
    );
    let keys: Vec<(u64, u64)> = lines
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[1].parse().unwrap(), f[7].parse().unwrap())
        })
        .collect();
    let mut sorted = keys.clone();
    sorted.sort_unstable();
    assert_eq!(keys, sorted, "rows come out sorted by size then seed");
    assert_eq!(keys.len(), 6);
    let err = stderr_of(&o);
    let fit_line = err.lines().find(|l| l.starts_with("fit_exponent=")).unwrap();
    let fit: f64 = fit_line.trim_start_matches("fit_exponent=").parse().unwrap();
    assert!((0.8..=1.3).contains(&fit), "systolic time grows linearly, got {fit}");
}

#[test]
fn scaling_skips_infeasible_sizes_but_still_fits() {
    let o = run(&[
        "scaling", "--algo", "cube", "--sizes", "8,64,128", "--alpha", "2", "--seeds", "1",
    ]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout_of(&o);
    assert!(out.contains("\ncube,8,"), "{out}");
    assert!(out.contains("\ncube,64,"), "{out}");
    assert!(!out.contains(",128,"), "{out}");
    let err = stderr_of(&o);
    assert!(err.contains("note: skipped n=128"), "{err}");
    assert!(err.contains("fit_exponent="), "{err}");
}

#[test]
fn step_cap_drops_rows_and_fails_the_fit() {
    let o = Command::new(env!("CARGO_BIN_EXE_meshgrain"))
        .args(["scaling", "--algo", "systolic", "--sizes", "8,16", "--seeds", "1"])
        .env("MESHGRAIN_STEP_CAP", "40")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(1));
    // the capped size may die inside the metered run or at the row filter;
    // both name the guard variable
    let err = stderr_of(&o);
    assert!(err.contains("note: skipped n=16"), "{err}");
    assert!(err.contains("MESHGRAIN_STEP_CAP"), "{err}");
}

#[test]
fn probe_names_the_processor_and_step() {
    let o = run(&["engine-probe"]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr_of(&o);
    assert!(err.contains("processor (2,0,0)"), "{err}");
    assert!(err.contains("step 5"), "{err}");
}

#[test]
fn bad_input_exits_one() {
    // an exponent outside the feasible band is an input error
    let o = run(&["matmul", "--algo", "cube", "--n", "8", "--alpha", "3"]);
    assert_eq!(o.status.code(), Some(1));
    // so is a malformed flag set
    let o = run(&["paths", "--problem", "apsp"]);
    assert_eq!(o.status.code(), Some(1));
    // and a nonexistent input file
    let o = run(&["maze", "--input", "/nonexistent/maze.txt"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn undersized_maze_mesh_exits_two() {
    let o = run(&["maze", "--random", "3,64", "--density", "0.3", "--solver", "recursive",
        "--exponent", "4"]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr_of(&o);
    assert!(err.contains("fourth power"), "{err}");
}
