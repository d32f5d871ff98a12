//! Command-line front end for the mesh-computer simulator.
//!
//! Subcommands cover matrix products on simulated meshes (`matmul`), graph
//! path problems by repeated squaring (`paths`), charged maze solving
//! (`maze`), exact lower-bound reports (`bounds`), and a scaling harness
//! that sweeps problem sizes and fits a log-log growth exponent
//! (`scaling`). Results go to stdout; step ledgers, fit lines, and
//! diagnostics go to stderr.
//!
//! Exit codes: 0 success, 1 bad input or an infeasible plan, 2 a violated
//! structural or physical constraint, 3 a requested path that does not
//! exist.
//!
//! The environment variable `MESHGRAIN_STEP_CAP` guards every metered
//! engine run against runaway programs and, in `scaling`, drops rows whose
//! charged step count exceeds it.

use std::fmt::Display;
use std::io::Write;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use meshgrain::algebra::{AlgebraError, Matrix, Semiring, INF};
use meshgrain::engine::{
    EngineError, HaltRule, MeshConfig, MeshProgram, MeshState, ProcCtx, ProcStatus, StepLedger,
};
use meshgrain::maze::{
    charge_plan, random_maze, solve_recursive, wave_bfs, Maze, MazeError, PathResult,
};
use meshgrain::meshmul::{
    bounds, general_matmul_3d, plan_alg_b, ring_matmul_3d, Frac, MeshSpec, MulError,
};
use meshgrain::paths::{
    apsp, bottleneck_apsp, reconstruct_path, transitive_closure, ClosureMode, PathsError,
};
use meshgrain::systolic::systolic_matmul;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 1;
pub const EXIT_CONSTRAINT: i32 = 2;
pub const EXIT_NO_PATH: i32 = 3;

/// A failed command: exit code plus the message for stderr.
struct Failure {
    code: i32,
    message: String,
}

impl Failure {
    fn input(msg: impl Display) -> Failure {
        Failure { code: EXIT_INPUT, message: msg.to_string() }
    }

    fn constraint(msg: impl Display) -> Failure {
        Failure { code: EXIT_CONSTRAINT, message: msg.to_string() }
    }
}

impl From<MulError> for Failure {
    fn from(e: MulError) -> Failure {
        match e {
            MulError::Plan(_) | MulError::Schedule(_) => Failure::input(e),
            _ => Failure::constraint(e),
        }
    }
}

impl From<PathsError> for Failure {
    fn from(e: PathsError) -> Failure {
        match e {
            PathsError::Input(_) | PathsError::NegativeCycle(_) => Failure::input(e),
            PathsError::Mul(m) => m.into(),
            PathsError::Algebra(_) => Failure::constraint(e),
        }
    }
}

impl From<MazeError> for Failure {
    fn from(e: MazeError) -> Failure {
        match e {
            MazeError::Format(_) | MazeError::Input(_) => Failure::input(e),
            MazeError::Size(_) => Failure::constraint(e),
        }
    }
}

impl From<EngineError> for Failure {
    fn from(e: EngineError) -> Failure {
        Failure::constraint(e)
    }
}

impl From<AlgebraError> for Failure {
    fn from(e: AlgebraError) -> Failure {
        Failure::input(e)
    }
}

#[derive(Parser)]
#[command(
    name = "meshgrain",
    about = "Simulate fine-grained mesh computers and report exact step charges",
    after_help = "Environment:\n  MESHGRAIN_STEP_CAP   step guard for metered engine runs, and the row\n                       cutoff for `scaling` (default 100000000)"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Report the diameter and speedup lower bounds for a mesh matrix product
    Bounds(BoundsArgs),
    /// Multiply two seeded random matrices on a simulated mesh
    Matmul(MatmulArgs),
    /// Transitive closure, shortest paths, or bottleneck paths of a graph
    Paths(PathsArgs),
    /// Solve a maze by wavefront or by recursive region summaries
    Maze(MazeArgs),
    /// Sweep problem sizes and fit the growth exponent of the step counts
    Scaling(ScalingArgs),
    /// Run a program that must trip the register-budget enforcement
    #[command(hide = true)]
    EngineProbe,
}

#[derive(Args)]
struct BoundsArgs {
    /// Matrix side
    #[arg(long)]
    n: usize,
    /// Mesh dimensionality, 2 or 3
    #[arg(long, default_value_t = 3)]
    dim: usize,
    /// Processor-count exponent, e.g. 9/4 or 2.25
    #[arg(long, conflicts_with = "mesh_size")]
    alpha: Option<String>,
    /// Explicit processor count instead of an exponent
    #[arg(long)]
    mesh_size: Option<u128>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Algo {
    /// Rotating torus on an n-by-n square
    Systolic,
    /// Cube product between the diameter-bound and speedup-bound extremes
    Cube,
    /// Fast ring product on thinning worker grids
    Ring,
}

impl Algo {
    fn name(self) -> &'static str {
        match self {
            Algo::Systolic => "systolic",
            Algo::Cube => "cube",
            Algo::Ring => "ring",
        }
    }
}

#[derive(Args)]
struct MatmulArgs {
    /// Which multiplier to run
    #[arg(long, value_enum)]
    algo: Algo,
    /// Matrix side
    #[arg(long)]
    n: usize,
    /// plusmul, minplus, maxmin, or boolor
    #[arg(long, default_value = "plusmul")]
    semiring: String,
    /// Cube processor-count exponent in [2, 9/4]
    #[arg(long, default_value = "9/4")]
    alpha: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Problem {
    Closure,
    Apsp,
    Bottleneck,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Mode {
    /// Or-and squarings
    Boolean,
    /// Wrapping-ring squarings with 0/1 clamping
    Ring,
}

#[derive(Args)]
struct PathsArgs {
    #[arg(long, value_enum)]
    problem: Problem,
    /// Matrix file: a side line, then rows (INF marks a missing edge)
    #[arg(long, conflicts_with_all = ["n"])]
    input: Option<std::path::PathBuf>,
    /// Random graph size instead of an input file
    #[arg(long)]
    n: Option<usize>,
    /// Edge probability of the random graph
    #[arg(long, default_value_t = 0.4)]
    density: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Cube processor-count exponent for the squarings
    #[arg(long, default_value = "9/4")]
    alpha: String,
    /// Closure algebra
    #[arg(long, value_enum, default_value_t = Mode::Boolean)]
    mode: Mode,
    /// Also print one reconstructed shortest path (apsp only)
    #[arg(long, requires = "target")]
    source: Option<usize>,
    #[arg(long, requires = "source")]
    target: Option<usize>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Solver {
    Wave,
    Recursive,
    Both,
}

#[derive(Args)]
struct MazeArgs {
    /// Maze file: a `dim side` header, then #/./S/F rows
    #[arg(long, conflicts_with = "random")]
    input: Option<std::path::PathBuf>,
    /// Random maze as `dim,side`
    #[arg(long)]
    random: Option<String>,
    /// Blocking probability of the random maze
    #[arg(long, default_value_t = 0.35)]
    density: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = Solver::Both)]
    solver: Solver,
    /// Processor-count exponent for the recursive solver (3-d mazes accept
    /// 4 through 9/2)
    #[arg(long)]
    exponent: Option<String>,
    /// Print the maze itself before the solutions
    #[arg(long)]
    emit_maze: bool,
}

#[derive(Args)]
struct ScalingArgs {
    #[arg(long, value_enum)]
    algo: Algo,
    /// Comma-separated matrix sides, e.g. 8,16,32
    #[arg(long)]
    sizes: String,
    /// Cube processor-count exponent
    #[arg(long, default_value = "9/4")]
    alpha: String,
    /// Seeds 0..seeds for every size
    #[arg(long, default_value_t = 2)]
    seeds: u64,
    #[arg(long, default_value = "plusmul")]
    semiring: String,
}

/// Runs the whole command line; `argv` includes the program name.
pub fn run_cli<I, S>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
            let _ = if code == EXIT_OK {
                write!(out, "{e}")
            } else {
                write!(err, "{e}")
            };
            return code;
        }
    };
    let result = match &cli.command {
        Command::Bounds(a) => cmd_bounds(a, out),
        Command::Matmul(a) => cmd_matmul(a, out, err),
        Command::Paths(a) => cmd_paths(a, out, err),
        Command::Maze(a) => cmd_maze(a, out, err),
        Command::Scaling(a) => cmd_scaling(a, out, err),
        Command::EngineProbe => cmd_engine_probe(err),
    };
    match result {
        Ok(code) => code,
        Err(f) => {
            let _ = writeln!(err, "error: {}", f.message);
            f.code
        }
    }
}

fn parse_frac(text: &str) -> Result<Frac, Failure> {
    text.parse::<Frac>().map_err(Failure::input)
}

fn parse_semiring(name: &str) -> Result<Semiring, Failure> {
    Semiring::from_name(name).map_err(Failure::input)
}

fn cmd_bounds(args: &BoundsArgs, out: &mut dyn Write) -> Result<i32, Failure> {
    let spec = match (&args.alpha, args.mesh_size) {
        (Some(a), None) => MeshSpec::Alpha(parse_frac(a)?),
        (None, Some(s)) => MeshSpec::Size(s),
        _ => return Err(Failure::input("give exactly one of --alpha and --mesh-size")),
    };
    let report = bounds(args.n, args.dim, spec)?;
    let _ = writeln!(out, "n={}", report.n);
    let _ = writeln!(out, "dim={}", report.dim);
    let _ = writeln!(out, "alpha={}", report.alpha);
    let _ = writeln!(out, "mesh_size={}", report.mesh_size);
    let _ = writeln!(out, "edge={}", report.edge);
    let _ = writeln!(out, "diameter_time={}", report.diameter_time);
    let _ = writeln!(out, "speedup_time={}", report.speedup_time);
    let _ = writeln!(out, "diameter_exponent={}", report.diameter_exponent);
    let _ = writeln!(out, "speedup_exponent={}", report.speedup_exponent);
    let _ = writeln!(out, "binding={}", report.binding);
    let _ = writeln!(out, "optimal_alpha={}", report.optimal_alpha);
    let _ = writeln!(out, "ring_exponent={}", report.ring_exponent);
    Ok(EXIT_OK)
}

/// One product under the chosen multiplier.
fn run_product(
    algo: Algo,
    a: &Matrix,
    b: &Matrix,
    alpha: f64,
) -> Result<(Matrix, StepLedger), Failure> {
    match algo {
        Algo::Systolic => Ok(systolic_matmul(a, b)?),
        Algo::Cube => Ok(general_matmul_3d(a, b, alpha)?),
        Algo::Ring => {
            if a.semiring() != Semiring::PlusMul {
                return Err(Failure::input(
                    "the ring multiplier needs the wrapping plusmul semiring",
                ));
            }
            let sched = plan_alg_b(a.n(), 7.0, 2.0, Some(1))?;
            Ok(ring_matmul_3d(a, b, &sched)?)
        }
    }
}

fn cmd_matmul(args: &MatmulArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32, Failure> {
    let semiring = parse_semiring(&args.semiring)?;
    let alpha = parse_frac(&args.alpha)?.to_f64();
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let a = Matrix::random(args.n, semiring, &mut rng);
    let b = Matrix::random(args.n, semiring, &mut rng);
    let (product, ledger) = run_product(args.algo, &a, &b, alpha)?;
    let _ = write!(out, "{}", product.emit());
    let _ = write!(err, "{}", ledger.emit());
    Ok(EXIT_OK)
}

fn random_graph(problem: Problem, n: usize, density: f64, seed: u64) -> Matrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (semiring, absent) = match problem {
        Problem::Closure => (Semiring::BoolOr, 0),
        Problem::Apsp => (Semiring::MinPlus, INF),
        Problem::Bottleneck => (Semiring::MaxMin, Semiring::MaxMin.zero()),
    };
    let mut m = Matrix::filled(n, semiring, absent);
    for i in 0..n {
        for j in 0..n {
            if i != j && rng.gen_bool(density) {
                let w = match problem {
                    Problem::Closure => 1,
                    _ => rng.gen_range(1..100),
                };
                m.set(i, j, w);
            }
        }
    }
    m
}

fn cmd_paths(args: &PathsArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32, Failure> {
    let semiring = match args.problem {
        Problem::Closure => Semiring::BoolOr,
        Problem::Apsp => Semiring::MinPlus,
        Problem::Bottleneck => Semiring::MaxMin,
    };
    let graph = match (&args.input, args.n) {
        (Some(path), None) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Failure::input(format!("{}: {e}", path.display())))?;
            Matrix::parse(&text, semiring)?
        }
        (None, Some(n)) => random_graph(args.problem, n, args.density, args.seed),
        _ => return Err(Failure::input("give exactly one of --input and --n")),
    };
    let alpha = parse_frac(&args.alpha)?.to_f64();
    match args.problem {
        Problem::Closure => {
            let mode = match args.mode {
                Mode::Boolean => ClosureMode::Boolean,
                Mode::Ring => ClosureMode::Ring,
            };
            let (closed, ledger) = transitive_closure(&graph, mode, alpha)?;
            let _ = write!(out, "{}", closed.emit());
            let _ = write!(err, "{}", ledger.emit());
            Ok(EXIT_OK)
        }
        Problem::Bottleneck => {
            let (widths, ledger) = bottleneck_apsp(&graph, alpha)?;
            let _ = write!(out, "{}", widths.emit());
            let _ = write!(err, "{}", ledger.emit());
            Ok(EXIT_OK)
        }
        Problem::Apsp => {
            let result = apsp(&graph, alpha)?;
            let _ = write!(out, "{}", result.dist.emit());
            let _ = write!(err, "{}", result.ledger.emit());
            if let (Some(s), Some(t)) = (args.source, args.target) {
                if s >= graph.n() || t >= graph.n() {
                    return Err(Failure::input("path endpoints must be vertex indices"));
                }
                match reconstruct_path(&result.dist, &result.witnesses, s, t) {
                    Some(path) => {
                        let _ = writeln!(out, "distance={}", result.dist.get(s, t));
                        let words: Vec<String> =
                            path.iter().map(|v| v.to_string()).collect();
                        let _ = writeln!(out, "path={}", words.join(" "));
                    }
                    None => {
                        let _ = writeln!(out, "distance=unreachable");
                        return Ok(EXIT_NO_PATH);
                    }
                }
            }
            Ok(EXIT_OK)
        }
    }
}

fn print_maze_result(maze: &Maze, label: &str, r: &PathResult, out: &mut dyn Write) {
    let _ = writeln!(out, "solver={label}");
    let _ = writeln!(out, "reachable={}", r.reachable);
    if let Some(d) = r.distance {
        let _ = writeln!(out, "distance={d}");
    }
    if let Some(path) = &r.path {
        let cells: Vec<String> = path
            .iter()
            .map(|&(x, y, z)| {
                if maze.dim() == 2 {
                    format!("{x},{y}")
                } else {
                    format!("{x},{y},{z}")
                }
            })
            .collect();
        let _ = writeln!(out, "path={}", cells.join(" "));
    }
    let _ = writeln!(out, "charged_time={}", r.charged_time);
    let _ = writeln!(out, "mesh_size={}", r.mesh_size_used);
}

fn cmd_maze(args: &MazeArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32, Failure> {
    let maze = match (&args.input, &args.random) {
        (Some(path), None) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Failure::input(format!("{}: {e}", path.display())))?;
            Maze::parse(&text)?
        }
        (None, Some(spec)) => {
            let (dim, side) = spec
                .split_once(',')
                .and_then(|(d, s)| Some((d.trim().parse().ok()?, s.trim().parse().ok()?)))
                .ok_or_else(|| Failure::input("--random wants `dim,side`, e.g. 2,16"))?;
            if !(0.0..=1.0).contains(&args.density) {
                return Err(Failure::input("--density must be a probability"));
            }
            if dim != 2 && dim != 3 {
                return Err(Failure::input("maze dimension must be 2 or 3"));
            }
            if side < 2 {
                return Err(Failure::input("maze side must be at least 2"));
            }
            random_maze(dim, side, args.density, args.seed)
        }
        _ => return Err(Failure::input("give exactly one of --input and --random")),
    };
    if args.emit_maze {
        let _ = write!(out, "{}", maze.emit());
    }
    let exponent = args.exponent.as_deref().map(parse_frac).transpose()?;
    let mut reachable = true;
    if matches!(args.solver, Solver::Wave | Solver::Both) {
        let r = wave_bfs(&maze);
        reachable &= r.reachable;
        print_maze_result(&maze, "wave", &r, out);
    }
    if matches!(args.solver, Solver::Recursive | Solver::Both) {
        let r = solve_recursive(&maze, exponent)?;
        reachable &= r.reachable;
        print_maze_result(&maze, "recursive", &r, out);
        let _ = write!(
            err,
            "{}",
            charge_plan_note(&maze, exponent).unwrap_or_default()
        );
    }
    Ok(if reachable { EXIT_OK } else { EXIT_NO_PATH })
}

/// Level-by-level charge lines for the recursive solver, as a diagnostic.
fn charge_plan_note(maze: &Maze, exponent: Option<Frac>) -> Option<String> {
    let exponent = exponent.unwrap_or(if maze.dim() == 2 {
        Frac::new(9, 4)
    } else {
        Frac::new(9, 2)
    });
    let side = maze.side().next_power_of_two().max(4);
    let plan = charge_plan(maze.dim(), side, exponent).ok()?;
    let mut s = String::new();
    for level in &plan.levels {
        s.push_str(&format!(
            "level: edge={} share={} working_cells={} rounds={} steps={}\n",
            level.region_edge, level.share, level.working_cells, level.rounds, level.step_charge
        ));
    }
    Some(s)
}

/// Ordinary least squares slope of `ln y` against `ln x`.
pub fn fit_exponent(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let (mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0);
    for &(x, y) in points {
        let (lx, ly) = (x.ln(), y.ln());
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
    }
    (n * sxy - sx * sy) / (n * sxx - sx * sx)
}

fn step_cap() -> u64 {
    std::env::var("MESHGRAIN_STEP_CAP")
        .ok()
        .and_then(|v| v.parse().ok())
        .unwrap_or(meshgrain::engine::DEFAULT_STEP_CAP)
}

fn cmd_scaling(
    args: &ScalingArgs,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> Result<i32, Failure> {
    let semiring = parse_semiring(&args.semiring)?;
    let alpha = parse_frac(&args.alpha)?.to_f64();
    let mut sizes = Vec::new();
    for tok in args.sizes.split(',') {
        let n: usize = tok
            .trim()
            .parse()
            .map_err(|_| Failure::input(format!("bad size {:?}", tok.trim())))?;
        sizes.push(n);
    }
    if sizes.is_empty() || args.seeds == 0 {
        return Err(Failure::input("need at least one size and one seed"));
    }
    sizes.sort_unstable();
    sizes.dedup();
    let shown_alpha = match args.algo {
        Algo::Systolic => 2.0,
        Algo::Cube => alpha,
        Algo::Ring => 8.0 / 3.0,
    };
    let cap = step_cap();
    let mut rows = Vec::new();
    for &n in &sizes {
        let mut size_rows = Vec::new();
        let mut skip: Option<String> = None;
        for seed in 0..args.seeds {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = Matrix::random(n, semiring, &mut rng);
            let b = Matrix::random(n, semiring, &mut rng);
            match run_product(args.algo, &a, &b, alpha) {
                Ok((_, ledger)) => {
                    if ledger.total_steps > cap {
                        skip = Some(format!(
                            "{} steps exceed MESHGRAIN_STEP_CAP={cap}",
                            ledger.total_steps
                        ));
                        break;
                    }
                    size_rows.push((n, seed, ledger));
                }
                Err(f) => {
                    skip = Some(f.message);
                    break;
                }
            }
        }
        match skip {
            Some(reason) => {
                let _ = writeln!(err, "note: skipped n={n} ({reason})");
            }
            None => rows.extend(size_rows),
        }
    }
    rows.sort_by_key(|&(n, seed, _)| (n, seed));
    let _ = writeln!(out, "algo,n,alpha,comm_steps,compute_steps,total_steps,processors,seed");
    for (n, seed, ledger) in &rows {
        let _ = writeln!(
            out,
            "{},{},{:.4},{},{},{},{},{}",
            args.algo.name(),
            n,
            shown_alpha,
            ledger.comm_steps,
            ledger.compute_steps,
            ledger.total_steps,
            ledger.processors,
            seed
        );
    }
    let mut fitted: Vec<usize> = rows.iter().map(|&(n, _, _)| n).collect();
    fitted.dedup();
    if fitted.len() < 2 {
        return Err(Failure::input("need successful runs at two sizes or more for a fit"));
    }
    let points: Vec<(f64, f64)> =
        rows.iter().map(|&(n, _, ref l)| (n as f64, l.total_steps as f64)).collect();
    let _ = writeln!(err, "fit_exponent={:.3}", fit_exponent(&points));
    Ok(EXIT_OK)
}

/// Writes one register past the budget on a fixed processor and step.
struct BudgetTrip;

impl MeshProgram for BudgetTrip {
    fn init(&mut self, _ctx: &mut ProcCtx<'_>) {}

    fn step(&mut self, ctx: &mut ProcCtx<'_>) -> ProcStatus {
        if ctx.coord() == (2, 0, 0) {
            ctx.set_reg(ctx.step() as usize - 1, 7);
        }
        ProcStatus::Active
    }
}

fn cmd_engine_probe(err: &mut dyn Write) -> Result<i32, Failure> {
    let cfg = MeshConfig::mesh_2d(4).with_word_budget(4);
    let mut mesh = MeshState::new(cfg)?;
    match mesh.run(&mut BudgetTrip, HaltRule::AfterSteps(10)) {
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            Ok(EXIT_CONSTRAINT)
        }
        Ok(()) => Err(Failure::input("the probe program failed to trip enforcement")),
    }
}
