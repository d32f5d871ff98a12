//! Matrix products on 3-d meshes whose processor count interpolates between
//! the two classical extremes: just enough processors to finish within the
//! diameter bound, and enough to reach full serial-work speedup.
//!
//! Two multipliers live here. [`general_matmul_3d`] runs any semiring product
//! on a cube of roughly `n^alpha` processors (`2 <= alpha <= 9/4`) by
//! recursively splitting the product into octants, shipping quadrant blocks
//! between subcubes with measured block routes, and finishing the base blocks
//! with the rotating systolic program hosted on a stacked cube.
//! [`ring_matmul_3d`] multiplies over the wrapping integer ring faster than
//! the semiring speedup limit by running a subcubic recursion on worker grids
//! that thin out at every recursion step, so deeper levels trade idle
//! processors for extra traffic instead of extra time.
//!
//! [`bounds`] reports the matching lower-bound arithmetic — diameter time
//! versus speedup time — exactly, in rational arithmetic where possible.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use std::sync::{Mutex, OnceLock};

use thiserror::Error;

use crate::algebra::{serial_pair_matmul, AlgebraError, Matrix, PairAlgebra, Semiring, Word};
use crate::engine::{
    BlockMove, Coord, EngineError, MeshConfig, MeshState, Region, StepLedger, WordMove,
};
use crate::stacked::{charged_ledger_for, patch_slot, simulate_2d_on_3d, StackedLayout};
use crate::systolic::{run_cell_program, CellProgram, SystolicCells};

/// Failures of planning, scheduling, or execution on the cube.
#[derive(Debug, Error)]
pub enum MulError {
    /// No processor layout satisfies the requested size and exponent.
    #[error("infeasible plan: {0}")]
    Plan(String),
    /// No worker-thinning schedule exists for the requested recursion.
    #[error("infeasible schedule: {0}")]
    Schedule(String),
    /// An internal placement or disjointness invariant failed to hold.
    #[error("structure violation: {0}")]
    Structure(String),
    /// The run would need more per-processor memory than planned.
    #[error("memory budget violation: {0}")]
    Budget(String),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Algebra(#[from] AlgebraError),
}

// ---------------------------------------------------------------------------
// Exact rational arithmetic for exponent bookkeeping.
// ---------------------------------------------------------------------------

/// A reduced fraction with a positive denominator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Frac {
    pub num: i64,
    pub den: i64,
}

fn gcd(a: i64, b: i64) -> i64 {
    let (mut a, mut b) = (a.abs(), b.abs());
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a.max(1)
}

impl Frac {
    pub fn new(num: i64, den: i64) -> Frac {
        assert!(den != 0, "fraction denominator must be nonzero");
        let sign = if den < 0 { -1 } else { 1 };
        let g = gcd(num, den);
        Frac { num: sign * num / g, den: sign * den / g }
    }

    pub fn from_int(v: i64) -> Frac {
        Frac { num: v, den: 1 }
    }

    pub fn to_f64(self) -> f64 {
        self.num as f64 / self.den as f64
    }

    pub fn is_integer(self) -> bool {
        self.den == 1
    }
}

impl std::ops::Add for Frac {
    type Output = Frac;
    fn add(self, o: Frac) -> Frac {
        Frac::new(self.num * o.den + o.num * self.den, self.den * o.den)
    }
}

impl std::ops::Sub for Frac {
    type Output = Frac;
    fn sub(self, o: Frac) -> Frac {
        Frac::new(self.num * o.den - o.num * self.den, self.den * o.den)
    }
}

impl std::ops::Mul for Frac {
    type Output = Frac;
    fn mul(self, o: Frac) -> Frac {
        Frac::new(self.num * o.num, self.den * o.den)
    }
}

impl std::ops::Div for Frac {
    type Output = Frac;
    fn div(self, o: Frac) -> Frac {
        assert!(o.num != 0, "division by zero fraction");
        Frac::new(self.num * o.den, self.den * o.num)
    }
}

impl PartialOrd for Frac {
    fn partial_cmp(&self, other: &Frac) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Frac {
    fn cmp(&self, other: &Frac) -> std::cmp::Ordering {
        (self.num as i128 * other.den as i128).cmp(&(other.num as i128 * self.den as i128))
    }
}

impl fmt::Display for Frac {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.den == 1 {
            write!(f, "{}", self.num)
        } else {
            write!(f, "{}/{}", self.num, self.den)
        }
    }
}

impl FromStr for Frac {
    type Err = MulError;

    /// Accepts `"9/4"`, `"2.25"`, and `"2"`.
    fn from_str(s: &str) -> Result<Frac, MulError> {
        let bad = || MulError::Plan(format!("cannot parse `{s}` as a fraction"));
        if let Some((a, b)) = s.split_once('/') {
            let num: i64 = a.trim().parse().map_err(|_| bad())?;
            let den: i64 = b.trim().parse().map_err(|_| bad())?;
            if den == 0 {
                return Err(bad());
            }
            return Ok(Frac::new(num, den));
        }
        if let Some((int, dec)) = s.split_once('.') {
            if dec.len() > 12 || dec.is_empty() || !dec.bytes().all(|b| b.is_ascii_digit()) {
                return Err(bad());
            }
            let neg = int.trim().starts_with('-');
            let whole: i64 = int.trim().parse().map_err(|_| bad())?;
            let frac: i64 = dec.parse().map_err(|_| bad())?;
            let den = 10i64.pow(dec.len() as u32);
            let num = whole.abs() * den + frac;
            return Ok(Frac::new(if neg { -num } else { num }, den));
        }
        s.trim().parse::<i64>().map(Frac::from_int).map_err(|_| bad())
    }
}

/// An exponent that is a known fraction when the inputs allow it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Exponent {
    Exact(Frac),
    Approx(f64),
}

impl Exponent {
    pub fn to_f64(self) -> f64 {
        match self {
            Exponent::Exact(f) => f.to_f64(),
            Exponent::Approx(x) => x,
        }
    }
}

impl fmt::Display for Exponent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Exponent::Exact(fr) => write!(f, "{fr}"),
            Exponent::Approx(x) => write!(f, "{x:.6}"),
        }
    }
}

/// Which of the two lower bounds dominates the running time.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Binding {
    Diameter,
    Speedup,
    Tie,
}

impl fmt::Display for Binding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Binding::Diameter => write!(f, "diameter"),
            Binding::Speedup => write!(f, "speedup"),
            Binding::Tie => write!(f, "tie"),
        }
    }
}

/// How the mesh size is specified when asking for bounds.
#[derive(Debug, Clone, Copy)]
pub enum MeshSpec {
    /// Processor count `n^alpha`.
    Alpha(Frac),
    /// Explicit processor count.
    Size(u128),
}

/// The two lower bounds for an `n x n` product on a `dim`-dimensional mesh,
/// with the exponent arithmetic kept exact whenever the inputs are rational.
#[derive(Debug, Clone)]
pub struct BoundReport {
    pub n: usize,
    pub dim: usize,
    pub alpha: Exponent,
    pub mesh_size: u128,
    pub edge: u128,
    /// Steps forced by signal travel across the mesh: `dim * (edge - 1)`.
    pub diameter_time: u128,
    /// Steps forced by dividing the `n^3` serial work among all processors.
    pub speedup_time: u128,
    pub diameter_exponent: Exponent,
    pub speedup_exponent: Exponent,
    pub binding: Binding,
    /// Exponent where the two bounds balance: `3 * dim / (dim + 1)`.
    pub optimal_alpha: Frac,
    /// Achievable time exponent for wrapping-ring products at size `n^2`.
    pub ring_exponent: Frac,
}

/// Largest `r` with `r^k <= x`.
pub fn nth_root(x: u128, k: u32) -> u128 {
    assert!(k >= 1);
    if x <= 1 || k == 1 {
        return x;
    }
    let (mut lo, mut hi) = (0u128, 1u128 << (128 / k + 1).min(127));
    while lo < hi {
        let mid = (lo + hi).div_ceil(2);
        match mid.checked_pow(k) {
            Some(p) if p <= x => lo = mid,
            _ => hi = mid - 1,
        }
    }
    lo
}

/// Diameter and speedup lower bounds for an `n x n` product on a mesh of
/// `dim` dimensions whose size is given by `spec`.
pub fn bounds(n: usize, dim: usize, spec: MeshSpec) -> Result<BoundReport, MulError> {
    if n < 2 {
        return Err(MulError::Plan(format!("matrix side must be at least 2, got {n}")));
    }
    if !(2..=3).contains(&dim) {
        return Err(MulError::Plan(format!("mesh dimension must be 2 or 3, got {dim}")));
    }
    let alpha: Exponent = match spec {
        MeshSpec::Alpha(f) => Exponent::Exact(f),
        MeshSpec::Size(s) => {
            if s == 0 {
                return Err(MulError::Plan("mesh size must be positive".into()));
            }
            if n.is_power_of_two() && s.is_power_of_two() {
                Exponent::Exact(Frac::new(s.trailing_zeros() as i64, n.trailing_zeros() as i64))
            } else {
                Exponent::Approx((s as f64).ln() / (n as f64).ln())
            }
        }
    };
    let lo = if dim == 3 { 2.0 } else { 1.0 };
    let hi = dim as f64;
    let af = alpha.to_f64();
    if !(lo - 1e-9..=hi + 1e-9).contains(&af) {
        return Err(MulError::Plan(format!(
            "processor exponent {af} must lie in [{lo}, {hi}] for a {dim}-d mesh"
        )));
    }
    let mesh_size: u128 = match spec {
        MeshSpec::Size(s) => s,
        MeshSpec::Alpha(f) => {
            let p = u32::try_from(f.num)
                .map_err(|_| MulError::Plan("exponent numerator out of range".into()))?;
            let powed = (n as u128)
                .checked_pow(p)
                .ok_or_else(|| MulError::Plan(format!("n^{} overflows the bound arithmetic", f.num)))?;
            nth_root(powed, f.den as u32)
        }
    };
    let edge = nth_root(mesh_size, dim as u32);
    let diameter_time = dim as u128 * (edge - 1);
    let speedup_time = (n as u128).pow(3) / mesh_size;
    let (diameter_exponent, speedup_exponent) = match alpha {
        Exponent::Exact(f) => (
            Exponent::Exact(f / Frac::from_int(dim as i64)),
            Exponent::Exact(Frac::from_int(3) - f),
        ),
        Exponent::Approx(x) => (Exponent::Approx(x / dim as f64), Exponent::Approx(3.0 - x)),
    };
    let binding = match (diameter_exponent, speedup_exponent) {
        (Exponent::Exact(d), Exponent::Exact(s)) => match d.cmp(&s) {
            std::cmp::Ordering::Greater => Binding::Diameter,
            std::cmp::Ordering::Less => Binding::Speedup,
            std::cmp::Ordering::Equal => Binding::Tie,
        },
        (d, s) => {
            let (d, s) = (d.to_f64(), s.to_f64());
            if (d - s).abs() < 1e-9 {
                Binding::Tie
            } else if d > s {
                Binding::Diameter
            } else {
                Binding::Speedup
            }
        }
    };
    // balance point of edge-crossing time n^(a/dim) against work-sharing
    // time n^(3-a): a/dim = 3 - a.
    let optimal_alpha = Frac::new(3 * dim as i64, dim as i64 + 1);
    let ring_exponent = if dim == 3 { Frac::new(2, 3) } else { Frac::from_int(1) };
    Ok(BoundReport {
        n,
        dim,
        alpha,
        mesh_size,
        edge,
        diameter_time,
        speedup_time,
        diameter_exponent,
        speedup_exponent,
        binding,
        optimal_alpha,
        ring_exponent,
    })
}

// ---------------------------------------------------------------------------
// Planning the octant recursion on the cube.
// ---------------------------------------------------------------------------

/// Geometry of one octant-recursion run: a cube of `edge^3` processors split
/// `levels` times into eight subcubes, with base blocks of side `base_m`
/// hosted on subcubes of edge `leaf_edge`.
#[derive(Debug, Clone)]
pub struct AlgAPlan {
    pub n: usize,
    pub alpha: f64,
    /// Cube edge: the smallest power of two with `edge^3 >= n^alpha`.
    pub edge: usize,
    /// Recursion depth before base blocks are multiplied directly.
    pub levels: usize,
    /// Matrix entries folded onto each processor column: `n / edge`.
    pub fold: usize,
    /// Side of the base-case blocks, `n >> levels`.
    pub base_m: usize,
    /// Edge of the subcubes hosting base blocks, `edge >> levels`.
    pub leaf_edge: usize,
    /// Ratio `edge^3 / n^alpha`, always below 8.
    pub slack: f64,
    /// Whether base blocks run on a stacked cube (`true`) or directly on a
    /// mesh face small enough to hold the systolic program (`false`).
    pub leaf_stacked: bool,
}

impl AlgAPlan {
    pub fn mesh_size(&self) -> u64 {
        (self.edge as u64).pow(3)
    }

    /// All `8^level` subcube regions at a recursion level, in a fixed order
    /// (row octant, then depth octant, then column octant).
    pub fn subcubes(&self, level: usize) -> Vec<Region> {
        assert!(level <= self.levels);
        let mut regions = vec![Region::new((0, 0, 0), (self.edge, self.edge, self.edge))];
        for _ in 0..level {
            let mut next = Vec::with_capacity(regions.len() * 8);
            for r in &regions {
                let h = r.size.0 / 2;
                for bi in 0..2 {
                    for bk in 0..2 {
                        for bj in 0..2 {
                            next.push(Region::new(
                                (r.lo.0 + bj * h, r.lo.1 + bi * h, r.lo.2 + bk * h),
                                (h, h, h),
                            ));
                        }
                    }
                }
            }
            regions = next;
        }
        regions
    }
}

/// Whether a `base_m` block product fits a subcube of edge `leaf_edge`, and
/// if so whether it needs the stacked hosting or fits a mesh face directly.
fn leaf_fits(base_m: usize, leaf_edge: usize, fold: usize) -> (bool, bool) {
    if fold * fold > leaf_edge {
        return (false, false);
    }
    if base_m <= 1 {
        return (true, false);
    }
    if base_m <= leaf_edge {
        return (true, false);
    }
    let s = StackedLayout::for_edge(base_m).s;
    (s <= leaf_edge, true)
}

/// Chooses cube edge and split depth for an `n x n` product on `n^alpha`
/// processors, `2 <= alpha <= 9/4`.
pub fn plan_alg_a(n: usize, alpha: f64) -> Result<AlgAPlan, MulError> {
    if n < 2 || !n.is_power_of_two() {
        return Err(MulError::Plan(format!(
            "matrix side must be a power of two of at least 2, got {n}"
        )));
    }
    if !(2.0 - 1e-9..=2.25 + 1e-9).contains(&alpha) {
        return Err(MulError::Plan(format!(
            "processor exponent must lie in [2, 9/4], got {alpha}"
        )));
    }
    let ideal = (n as f64).powf(alpha / 3.0);
    let edge = (ideal.ceil() as usize).next_power_of_two();
    let slack = edge.pow(3) as f64 / (n as f64).powf(alpha);
    debug_assert!(slack < 8.0 + 1e-9, "rounding to a power of two stays under 8x");
    let fold = n / edge;
    let mut levels = ((alpha - 2.0) * (n as f64).log2() - 1e-9).ceil().max(0.0) as usize;
    levels = levels.min(edge.trailing_zeros() as usize).min(n.trailing_zeros() as usize);
    loop {
        let leaf_edge = edge >> levels;
        let base_m = n >> levels;
        let (fits, stacked) = leaf_fits(base_m, leaf_edge, fold);
        if fits {
            let plan = AlgAPlan {
                n,
                alpha,
                edge,
                levels,
                fold,
                base_m,
                leaf_edge,
                slack,
                leaf_stacked: stacked,
            };
            // Exhaustive placement check: subcubes at every level must tile
            // without overlap, or concurrent routing would be unsound.
            for level in 0..=plan.levels {
                let regions = plan.subcubes(level);
                for (i, a) in regions.iter().enumerate() {
                    for b in regions.iter().skip(i + 1) {
                        if a.intersects(b) {
                            return Err(MulError::Structure(format!(
                                "subcubes at level {level} overlap: {a:?} and {b:?}"
                            )));
                        }
                    }
                }
            }
            return Ok(plan);
        }
        if levels == 0 {
            let need = if base_m >= 2 { StackedLayout::for_edge(base_m).s } else { 1 };
            return Err(MulError::Plan(format!(
                "no feasible split depth for n={n} at exponent {alpha}: a {base_m}x{base_m} \
                 block needs a subcube of edge {need} (stacked) or {base_m} (direct), and the \
                 fold depth {fold} needs z extent {}, but only edge {leaf_edge} is available",
                fold * fold
            )));
        }
        levels -= 1;
    }
}

/// Processor holding matrix entry `(i, j)` of a block, with `fold^2` entries
/// stacked per processor column: `fold x fold` tiles map along z.
pub fn brick_position(fold: usize, i: usize, j: usize) -> Coord {
    (j / fold, i / fold, (i % fold) * fold + (j % fold))
}

// ---------------------------------------------------------------------------
// Block routing between subcubes.
// ---------------------------------------------------------------------------

/// The sixteen quadrant shipments that stock one parent's eight children,
/// minus the ones that are already in place. Quadrants headed for the upper
/// z half go first: their destinations overlap no sources, and they free the
/// quadrants that in-plane shipments would otherwise overwrite.
fn scatter_moves(parent: &Region, fold: usize, w: usize) -> Vec<BlockMove> {
    let e = parent.size.0;
    let h = e / 2;
    let zext = fold * fold;
    let (px, py, pz) = parent.lo;
    let mut moves = Vec::new();
    for bk in [1usize, 0] {
        for bi in 0..2usize {
            for bj in 0..2usize {
                // left-operand quadrant (bi, bk) feeds child (bi, bk, bj)
                let disp =
                    ((bj as isize - bk as isize) * h as isize, 0, (bk * h) as isize);
                if disp != (0, 0, 0) {
                    moves.push(BlockMove {
                        src: Region::new((px + bk * h, py + bi * h, pz), (h, h, zext)),
                        disp,
                        slots: (0..w).map(|q| (q, q)).collect(),
                    });
                }
                // right-operand quadrant (bk, bj) feeds the same child
                let disp =
                    (0, (bi as isize - bk as isize) * h as isize, (bk * h) as isize);
                if disp != (0, 0, 0) {
                    moves.push(BlockMove {
                        src: Region::new((px + bj * h, py + bk * h, pz), (h, h, zext)),
                        disp,
                        slots: (0..w).map(|q| (w + q, w + q)).collect(),
                    });
                }
            }
        }
    }
    moves
}

/// Four concurrent shipments pulling the upper-z octant products down onto
/// the lower-z products they must merge with, landing in scratch slots.
fn combine_moves(parent: &Region, fold: usize, w: usize) -> Vec<Vec<BlockMove>> {
    let e = parent.size.0;
    let h = e / 2;
    let zext = fold * fold;
    let (px, py, pz) = parent.lo;
    (0..4usize)
        .map(|t| {
            let (bi, bj) = (t / 2, t % 2);
            vec![BlockMove {
                src: Region::new((px + bj * h, py + bi * h, pz + h), (h, h, zext)),
                disp: (0, 0, -(h as isize)),
                slots: (0..w).map(|q| (2 * w + q, 3 * w + q)).collect(),
            }]
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Base-case products and their step bills.
// ---------------------------------------------------------------------------

/// How base blocks are executed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LeafMode {
    /// Data computed serially; the step bill replays a metered run of the
    /// same shape, measured once and cached.
    Charged,
    /// Every base block runs on the metered engine, and all bills are
    /// checked to be identical before being merged.
    Engine,
}

type ConvKey = (usize, usize, usize, usize, bool);
static CONV_CACHE: OnceLock<Mutex<HashMap<ConvKey, (StepLedger, StepLedger)>>> = OnceLock::new();
static FLAT_CACHE: OnceLock<Mutex<HashMap<(usize, usize), StepLedger>>> = OnceLock::new();

/// Word permutations repositioning a block between its folded storage
/// pattern and the layout the systolic cells expect, going in and out.
fn conversion_moves(
    m: usize,
    fold: usize,
    w: usize,
    stacked: bool,
) -> (Vec<WordMove>, Vec<WordMove>) {
    let mut into = Vec::new();
    let mut out = Vec::new();
    for i in 0..m {
        for j in 0..m {
            let brick = brick_position(fold, i, j);
            let (cx, cy) = (j, i);
            if stacked {
                let layout = StackedLayout::for_edge(m);
                let k = 9 * w;
                for layer in 0..layout.s {
                    if let Some(((hx, hy), patch)) = layout.host_in_layer(layer, cx, cy) {
                        let base = patch_slot(k, patch);
                        for q in 0..2 * w {
                            into.push(WordMove {
                                src: brick,
                                src_slot: q,
                                dst: (hx, hy, layer),
                                dst_slot: base + q,
                            });
                        }
                    }
                }
                let own = layout.layer_of(cx, cy);
                let ((hx, hy), patch) =
                    layout.host_in_layer(own, cx, cy).expect("owner layer hosts its cell");
                let base = patch_slot(k, patch);
                for q in 0..w {
                    out.push(WordMove {
                        src: (hx, hy, own),
                        src_slot: base + 2 * w + q,
                        dst: brick,
                        dst_slot: 2 * w + q,
                    });
                }
            } else {
                let face = (cx, cy, 0);
                if face == brick {
                    continue;
                }
                for q in 0..2 * w {
                    into.push(WordMove { src: brick, src_slot: q, dst: face, dst_slot: q });
                }
                for q in 0..w {
                    out.push(WordMove {
                        src: face,
                        src_slot: 2 * w + q,
                        dst: brick,
                        dst_slot: 2 * w + q,
                    });
                }
            }
        }
    }
    (into, out)
}

/// Measured cost of the two repositioning permutations for one block shape,
/// computed once per shape on a scratch mesh and cached.
fn conversion_bills(
    m: usize,
    fold: usize,
    scratch_edge: usize,
    w: usize,
    stacked: bool,
) -> Result<(StepLedger, StepLedger), MulError> {
    let key: ConvKey = (m, fold, scratch_edge, w, stacked);
    let cache = CONV_CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(hit) = cache.lock().unwrap().get(&key).cloned() {
        return Ok(hit);
    }
    let budget = if stacked { (81 * w + 16).max(32) } else { (9 * w).max(32) };
    let (into, out) = conversion_moves(m, fold, w, stacked);
    let bill = |moves: &[WordMove]| -> Result<StepLedger, MulError> {
        let mut mesh =
            MeshState::new(MeshConfig::mesh_3d(scratch_edge).with_word_budget(budget))?;
        mesh.set_phase(Some("leaf"));
        mesh.route_words(moves)?;
        Ok(mesh.ledger().clone())
    };
    let pair = (bill(&into)?, bill(&out)?);
    cache.lock().unwrap().insert(key, pair.clone());
    Ok(pair)
}

/// Multiplies one base block pair and returns its products together with the
/// full step bill: repositioning in, the hosted systolic run, repositioning
/// back out.
fn leaf_product(
    a: &[Matrix],
    b: &[Matrix],
    alg: PairAlgebra,
    fold: usize,
    scratch_edge: usize,
    stacked: bool,
    mode: LeafMode,
) -> Result<(Vec<Matrix>, StepLedger), MulError> {
    let w = alg.width();
    let m = a[0].n();
    let semirings = alg.plane_semirings();
    if m == 1 {
        let mut acc = alg.zero();
        let av: Vec<Word> = a.iter().map(|p| p.get(0, 0)).collect();
        let bv: Vec<Word> = b.iter().map(|p| p.get(0, 0)).collect();
        alg.mac(&mut acc, &av, &bv);
        let out = semirings
            .iter()
            .zip(&acc)
            .map(|(&s, &v)| {
                let mut plane = Matrix::zeros(1, s);
                plane.set(0, 0, v);
                plane
            })
            .collect();
        let mut bill = StepLedger::new(1);
        bill.total_steps = 1;
        bill.compute_steps = 1;
        bill.peak_words = 3 * w as u64;
        bill.note_phase_steps("leaf", 1);
        return Ok((out, bill));
    }
    let refs_a: Vec<&Matrix> = a.iter().collect();
    let refs_b: Vec<&Matrix> = b.iter().collect();
    let cells = SystolicCells::new(refs_a.clone(), refs_b.clone(), alg);
    let c_base = cells.c_slot();
    let (conv_in, conv_out) = conversion_bills(m, fold, scratch_edge, w, stacked)?;
    let (states, run_bill): (Option<Vec<Vec<Word>>>, StepLedger) = match (mode, stacked) {
        (LeafMode::Engine, true) => {
            let (st, lg) = simulate_2d_on_3d(&cells)?;
            (Some(st), lg)
        }
        (LeafMode::Charged, true) => {
            let key = format!("leaf-cube-m{m}-w{w}");
            (None, charged_ledger_for(&cells, &key)?)
        }
        (LeafMode::Engine, false) => {
            let mesh = run_cell_program(&cells, Some("leaf"))?;
            let st = (0..m * m)
                .map(|p| {
                    (0..cells.state_words()).map(|s| mesh.read((p % m, p / m, 0), s)).collect()
                })
                .collect();
            (Some(st), mesh.ledger().clone())
        }
        (LeafMode::Charged, false) => {
            let cache = FLAT_CACHE.get_or_init(|| Mutex::new(HashMap::new()));
            let hit = cache.lock().unwrap().get(&(m, w)).cloned();
            let lg = match hit {
                Some(lg) => lg,
                None => {
                    let mesh = run_cell_program(&cells, Some("leaf"))?;
                    let lg = mesh.ledger().clone();
                    cache.lock().unwrap().insert((m, w), lg.clone());
                    lg
                }
            };
            (None, lg)
        }
    };
    let out = match states {
        Some(st) => semirings
            .iter()
            .enumerate()
            .map(|(psi, &s)| {
                let mut plane = Matrix::zeros(m, s);
                for y in 0..m {
                    for x in 0..m {
                        plane.set(y, x, st[y * m + x][c_base + psi]);
                    }
                }
                plane
            })
            .collect(),
        None => serial_pair_matmul(&refs_a, &refs_b, alg)?,
    };
    let mut bill = conv_in;
    bill.add_sequential(&run_bill);
    bill.add_sequential(&conv_out);
    Ok((out, bill))
}

// ---------------------------------------------------------------------------
// The octant-recursion multiplier.
// ---------------------------------------------------------------------------

fn read_leaf_inputs(
    mesh: &MeshState,
    leaf: &Region,
    base_m: usize,
    fold: usize,
    a_pad: &[Matrix],
    b_pad: &[Matrix],
) -> (Vec<Matrix>, Vec<Matrix>) {
    let w = a_pad.len();
    let mut a_sub: Vec<Matrix> =
        a_pad.iter().map(|p| Matrix::zeros(base_m, p.semiring())).collect();
    let mut b_sub: Vec<Matrix> =
        b_pad.iter().map(|p| Matrix::zeros(base_m, p.semiring())).collect();
    for i in 0..base_m {
        for j in 0..base_m {
            let p = brick_position(fold, i, j);
            let c = (leaf.lo.0 + p.0, leaf.lo.1 + p.1, leaf.lo.2 + p.2);
            for q in 0..w {
                a_sub[q].set(i, j, mesh.read(c, q));
                b_sub[q].set(i, j, mesh.read(c, w + q));
            }
        }
    }
    (a_sub, b_sub)
}

fn write_leaf_output(
    mesh: &mut MeshState,
    leaf: &Region,
    c_sub: &[Matrix],
    fold: usize,
) -> Result<(), MulError> {
    let w = c_sub.len();
    let base_m = c_sub[0].n();
    for i in 0..base_m {
        for j in 0..base_m {
            let p = brick_position(fold, i, j);
            let c = (leaf.lo.0 + p.0, leaf.lo.1 + p.1, leaf.lo.2 + p.2);
            for (q, plane) in c_sub.iter().enumerate() {
                mesh.load(c, 2 * w + q, plane.get(i, j))?;
            }
        }
    }
    Ok(())
}

/// Entrywise merge of the shipped upper-z octant product into the resident
/// one, for all four quadrant bricks of a parent.
fn host_combine(
    mesh: &mut MeshState,
    parent: &Region,
    fold: usize,
    alg: PairAlgebra,
) -> Result<(), MulError> {
    let w = alg.width();
    let h = parent.size.0 / 2;
    let zext = fold * fold;
    for bi in 0..2usize {
        for bj in 0..2usize {
            let quad = Region::new(
                (parent.lo.0 + bj * h, parent.lo.1 + bi * h, parent.lo.2),
                (h, h, zext),
            );
            for cell in quad.cells() {
                let mut acc: Vec<Word> = (0..w).map(|q| mesh.read(cell, 2 * w + q)).collect();
                let other: Vec<Word> = (0..w).map(|q| mesh.read(cell, 3 * w + q)).collect();
                alg.combine(&mut acc, &other);
                for (q, &v) in acc.iter().enumerate() {
                    mesh.load(cell, 2 * w + q, v)?;
                }
            }
        }
    }
    Ok(())
}

/// Multi-plane product on roughly `n^alpha` processors with an explicit
/// base-block back end. [`general_matmul_3d_pairs`] is the cached-bill entry
/// point; tests use [`LeafMode::Engine`] to run every base block on the
/// metered engine.
pub fn general_matmul_3d_pairs_in(
    a: &[&Matrix],
    b: &[&Matrix],
    alg: PairAlgebra,
    alpha: f64,
    mode: LeafMode,
) -> Result<(Vec<Matrix>, StepLedger), MulError> {
    let w = alg.width();
    assert_eq!(a.len(), w, "one left plane per algebra slot");
    assert_eq!(b.len(), w, "one right plane per algebra slot");
    let n0 = a[0].n();
    if n0 == 0 {
        return Err(MulError::Plan("matrices must be nonempty".into()));
    }
    if a.iter().chain(b.iter()).any(|m| m.n() != n0) {
        return Err(MulError::Structure("input planes differ in size".into()));
    }
    let n = n0.next_power_of_two().max(2);
    let fills = alg.zero();
    let a_pad: Vec<Matrix> =
        a.iter().enumerate().map(|(q, m)| m.padded(n, fills[q])).collect();
    let b_pad: Vec<Matrix> =
        b.iter().enumerate().map(|(q, m)| m.padded(n, fills[q])).collect();
    let plan = plan_alg_a(n, alpha)?;
    let fold = plan.fold;
    let mut mesh = MeshState::new(MeshConfig::mesh_3d(plan.edge))?;
    for i in 0..n {
        for j in 0..n {
            let c = brick_position(fold, i, j);
            for q in 0..w {
                mesh.load(c, q, a_pad[q].get(i, j))?;
                mesh.load(c, w + q, b_pad[q].get(i, j))?;
            }
        }
    }
    mesh.set_phase(Some("scatter"));
    for level in 0..plan.levels {
        let groups: Vec<Vec<BlockMove>> =
            plan.subcubes(level).iter().map(|r| scatter_moves(r, fold, w)).collect();
        mesh.route_batch(&groups)?;
    }
    let leaves = plan.subcubes(plan.levels);
    let mut bills: Vec<StepLedger> = Vec::with_capacity(leaves.len());
    for leaf in &leaves {
        let (a_sub, b_sub) = read_leaf_inputs(&mesh, leaf, plan.base_m, fold, &a_pad, &b_pad);
        let (c_sub, bill) = leaf_product(
            &a_sub,
            &b_sub,
            alg,
            fold,
            plan.leaf_edge,
            plan.leaf_stacked,
            mode,
        )?;
        write_leaf_output(&mut mesh, leaf, &c_sub, fold)?;
        bills.push(bill);
    }
    if mode == LeafMode::Engine {
        let first = bills[0].emit();
        if bills.iter().skip(1).any(|b| b.emit() != first) {
            return Err(MulError::Structure(
                "identical base blocks produced different step bills".into(),
            ));
        }
    }
    let mut together = bills[0].clone();
    for b in &bills[1..] {
        together.add_concurrent(b);
    }
    mesh.ledger_mut().add_sequential(&together);
    mesh.set_phase(Some("combine"));
    for level in (0..plan.levels).rev() {
        let parents = plan.subcubes(level);
        let mut groups = Vec::with_capacity(parents.len() * 4);
        for r in &parents {
            groups.extend(combine_moves(r, fold, w));
        }
        mesh.route_batch(&groups)?;
        for r in &parents {
            host_combine(&mut mesh, r, fold, alg)?;
        }
        // the merge itself is one fully parallel step
        mesh.skip_idle_steps(1);
    }
    mesh.set_phase(None);
    let semirings = alg.plane_semirings();
    let out = semirings
        .iter()
        .enumerate()
        .map(|(q, &s)| {
            let mut plane = Matrix::zeros(n0, s);
            for i in 0..n0 {
                for j in 0..n0 {
                    plane.set(i, j, mesh.read(brick_position(fold, i, j), 2 * w + q));
                }
            }
            plane
        })
        .collect();
    Ok((out, mesh.ledger().clone()))
}

/// Multi-plane product on roughly `n^alpha` processors.
pub fn general_matmul_3d_pairs(
    a: &[&Matrix],
    b: &[&Matrix],
    alg: PairAlgebra,
    alpha: f64,
) -> Result<(Vec<Matrix>, StepLedger), MulError> {
    general_matmul_3d_pairs_in(a, b, alg, alpha, LeafMode::Charged)
}

/// Single-plane semiring product on roughly `n^alpha` processors.
pub fn general_matmul_3d(
    a: &Matrix,
    b: &Matrix,
    alpha: f64,
) -> Result<(Matrix, StepLedger), MulError> {
    if a.semiring() != b.semiring() {
        return Err(MulError::Structure("operands use different semirings".into()));
    }
    let alg = PairAlgebra::Plain(a.semiring());
    let (mut planes, ledger) = general_matmul_3d_pairs(&[a], &[b], alg, alpha)?;
    Ok((planes.remove(0), ledger))
}

// ---------------------------------------------------------------------------
// Worker-thinning schedules for fast ring products.
// ---------------------------------------------------------------------------

/// One regular subgrid of workers inside the cube.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridSpec {
    pub offset: usize,
    pub stride: usize,
    pub per_axis: usize,
}

impl GridSpec {
    pub fn workers(&self) -> u64 {
        (self.per_axis as u64).pow(3)
    }
}

/// Plan for running an `a`-way recursion that cuts the side by `b`, on a
/// cube of edge `2 * ceil(n^(2/3))`, using worker grids that thin out by 8x
/// at each of `steps` scheduling steps.
#[derive(Debug, Clone)]
pub struct AlgBSchedule {
    pub n: usize,
    /// Subproblems per recursion node.
    pub subproblems: f64,
    /// Factor by which each recursion cuts the matrix side.
    pub cut: f64,
    /// Serial recursion exponent `log_cut(subproblems)`.
    pub alpha_serial: f64,
    /// Headroom below the `8/3` schedulability threshold.
    pub delta: f64,
    /// Number of grid-thinning steps.
    pub steps: usize,
    /// Recursion rounds assigned to each step: `ceil(log_cut(n) / steps)`.
    pub rounds: usize,
    /// Rounds before the per-worker memory growth factor is capped at 64.
    pub rounds_capped: usize,
    /// Per-worker working-set growth, `(subproblems / cut)^rounds_capped`.
    pub memory_factor: f64,
    pub mesh_edge: usize,
    /// Worker grids for steps `0..=steps`; grid `i` keeps processors at
    /// coordinates `2^i - 1 (mod 2^(i+1))` on every axis, so the grids are
    /// pairwise disjoint.
    pub grids: Vec<GridSpec>,
    /// Side at which recursion stops and blocks go to the stacked cube.
    pub leaf_dim: usize,
}

fn grid_sets_disjoint(grids: &[GridSpec], mesh_edge: usize) -> Result<(), MulError> {
    // the grids are axis-aligned products of 1-d sets, so checking the 1-d
    // sets pairwise is exhaustive
    for (i, a) in grids.iter().enumerate() {
        for (jj, b) in grids.iter().enumerate().skip(i + 1) {
            for x in 0..mesh_edge {
                let in_a = x >= a.offset && (x - a.offset) % a.stride == 0 && x < a.offset + a.stride * a.per_axis;
                let in_b = x >= b.offset && (x - b.offset) % b.stride == 0 && x < b.offset + b.stride * b.per_axis;
                if in_a && in_b {
                    return Err(MulError::Structure(format!(
                        "worker grids {i} and {jj} share axis coordinate {x}"
                    )));
                }
            }
        }
    }
    Ok(())
}

/// Builds the worker-thinning schedule. Without `forced_steps` the recursion
/// exponent must leave headroom below 8/3; with it, any recursion can be
/// forced through a fixed number of thinning steps.
pub fn plan_alg_b(
    n: usize,
    subproblems: f64,
    cut: f64,
    forced_steps: Option<usize>,
) -> Result<AlgBSchedule, MulError> {
    if n < 2 || !n.is_power_of_two() {
        return Err(MulError::Schedule(format!(
            "matrix side must be a power of two of at least 2, got {n}"
        )));
    }
    if subproblems <= 1.0 || cut <= 1.0 {
        return Err(MulError::Schedule(
            "the recursion needs more than one subproblem and a real cut".into(),
        ));
    }
    let alpha_serial = subproblems.ln() / cut.ln();
    let delta = 8.0 / 3.0 - alpha_serial;
    let natural = ((delta * (n as f64).log2() / 6.0) + 1e-9).floor().max(0.0) as usize;
    let steps = match (forced_steps, delta > 1e-12) {
        (None, false) => {
            return Err(MulError::Schedule(format!(
                "serial recursion exponent {alpha_serial:.4} is not below 8/3, so thinning \
                 worker grids gains nothing; force a step count to run anyway"
            )));
        }
        (None, true) => natural.max(1),
        (Some(f), true) => f.min(natural.max(1)).max(1),
        (Some(f), false) => f.max(1),
    };
    let rounds =
        (((n as f64).log2() / cut.log2()) / steps as f64 - 1e-9).ceil().max(1.0) as usize;
    let growth = subproblems / cut;
    let cap = if growth > 1.0 + 1e-12 {
        ((64f64.ln() / growth.ln()) + 1e-9).floor() as usize
    } else {
        rounds
    };
    let rounds_capped = rounds.min(cap);
    let memory_factor = growth.powi(rounds_capped as i32);
    let half = {
        let sq = (n as u128) * (n as u128);
        let r = nth_root(sq, 3);
        if r * r * r == sq {
            r as usize
        } else {
            r as usize + 1
        }
    };
    let mesh_edge = 2 * half;
    let mut grids = Vec::with_capacity(steps + 1);
    for i in 0..=steps {
        let offset = (1usize << i) - 1;
        let stride = 1usize << (i + 1);
        if offset >= mesh_edge {
            return Err(MulError::Schedule(format!(
                "mesh edge {mesh_edge} is too small to host the step-{i} worker grid"
            )));
        }
        let per_axis = (mesh_edge - offset).div_ceil(stride);
        grids.push(GridSpec { offset, stride, per_axis });
    }
    grid_sets_disjoint(&grids, mesh_edge)?;
    let leaf_dim = if n >= 16 { 8 } else { n.min(4) };
    Ok(AlgBSchedule {
        n,
        subproblems,
        cut,
        alpha_serial,
        delta,
        steps,
        rounds,
        rounds_capped,
        memory_factor,
        mesh_edge,
        grids,
        leaf_dim,
    })
}

// ---------------------------------------------------------------------------
// The fast ring multiplier.
// ---------------------------------------------------------------------------

fn quadrant(m: &Matrix, bi: usize, bj: usize) -> Matrix {
    let h = m.n() / 2;
    let mut out = Matrix::zeros(h, m.semiring());
    for i in 0..h {
        for j in 0..h {
            out.set(i, j, m.get(bi * h + i, bj * h + j));
        }
    }
    out
}

fn block_add(a: &Matrix, b: &Matrix, sub: bool) -> Matrix {
    let n = a.n();
    let mut out = Matrix::zeros(n, a.semiring());
    for i in 0..n {
        for j in 0..n {
            let v = if sub {
                a.get(i, j).wrapping_sub(b.get(i, j))
            } else {
                a.get(i, j).wrapping_add(b.get(i, j))
            };
            out.set(i, j, v);
        }
    }
    out
}

struct RingExec<'s> {
    sched: &'s AlgBSchedule,
    ledger: StepLedger,
    /// Words currently resident across the whole cube.
    live: u64,
    peak: u64,
    top_count: u64,
}

impl RingExec<'_> {
    fn alloc(&mut self, words: u64) {
        self.live += words;
        self.peak = self.peak.max(self.live);
    }

    fn free(&mut self, words: u64) {
        self.live -= words;
    }

    fn charge_compute(&mut self, steps: u64, label: &str) {
        self.ledger.total_steps += steps;
        self.ledger.compute_steps += steps;
        self.ledger.note_phase_steps(label, steps);
    }

    fn charge_comm(&mut self, steps: u64, words: u64, label: &str) {
        self.ledger.total_steps += steps;
        self.ledger.comm_steps += steps;
        self.ledger.words_moved += words;
        self.ledger.note_phase_steps(label, steps);
    }

    fn multiply(&mut self, a: &Matrix, b: &Matrix, depth: usize) -> Result<Matrix, MulError> {
        let m = a.n();
        let sched = self.sched;
        if m <= sched.leaf_dim {
            if depth == 0 {
                self.top_count = 1;
            }
            let scratch = m.max(StackedLayout::for_edge(m).s);
            let (out, bill) = leaf_product(
                std::slice::from_ref(a),
                std::slice::from_ref(b),
                PairAlgebra::Plain(Semiring::PlusMul),
                1,
                scratch,
                true,
                LeafMode::Charged,
            )?;
            self.ledger.add_sequential(&bill);
            self.alloc((m * m) as u64);
            return Ok(out.into_iter().next().unwrap());
        }
        if depth == 0 {
            self.top_count = 7;
        }
        let h = m / 2;
        let q = (h * h) as u64;
        let band = depth.min(sched.steps);
        let workers = sched.grids[band].workers();
        // each extra recursion step hands work to the next, 8x-sparser grid;
        // depths beyond the planned steps stay on the last grid
        if band < sched.steps {
            let next = &sched.grids[band + 1];
            let steps = 6 * next.stride as u64 + (21 * q).div_ceil(next.workers());
            self.charge_comm(steps, 21 * q, "ring-transfer");
        }
        // synchronization waves fanning the seven calls out and back
        self.charge_comm(1 << (sched.steps + 1), 0, "ring-sync");
        let a11 = quadrant(a, 0, 0);
        let a12 = quadrant(a, 0, 1);
        let a21 = quadrant(a, 1, 0);
        let a22 = quadrant(a, 1, 1);
        let b11 = quadrant(b, 0, 0);
        let b12 = quadrant(b, 0, 1);
        let b21 = quadrant(b, 1, 0);
        let b22 = quadrant(b, 1, 1);
        // ten operand-forming additions, eight assembling ones
        self.charge_compute(18 * q.div_ceil(workers), "ring-adds");
        let pairs: [(Matrix, Matrix); 7] = [
            (block_add(&a11, &a22, false), block_add(&b11, &b22, false)),
            (block_add(&a21, &a22, false), b11.clone()),
            (a11.clone(), block_add(&b12, &b22, true)),
            (a22.clone(), block_add(&b21, &b11, true)),
            (block_add(&a11, &a12, false), b22.clone()),
            (block_add(&a21, &a11, true), block_add(&b11, &b12, false)),
            (block_add(&a12, &a22, true), block_add(&b21, &b22, false)),
        ];
        let mut prods = Vec::with_capacity(7);
        for (sa, sb) in &pairs {
            self.alloc(2 * q);
            let p = self.multiply(sa, sb, depth + 1)?;
            self.free(2 * q);
            prods.push(p);
        }
        let [m1, m2, m3, m4, m5, m6, m7]: [Matrix; 7] = prods.try_into().unwrap();
        let c11 = block_add(&block_add(&block_add(&m1, &m4, false), &m5, true), &m7, false);
        let c12 = block_add(&m3, &m5, false);
        let c21 = block_add(&m2, &m4, false);
        let c22 = block_add(&block_add(&block_add(&m1, &m2, true), &m3, false), &m6, false);
        self.alloc(4 * q);
        self.free(7 * q);
        let mut c = Matrix::zeros(m, Semiring::PlusMul);
        for i in 0..h {
            for j in 0..h {
                c.set(i, j, c11.get(i, j));
                c.set(i, j + h, c12.get(i, j));
                c.set(i + h, j, c21.get(i, j));
                c.set(i + h, j + h, c22.get(i, j));
            }
        }
        Ok(c)
    }
}

/// Wrapping-ring product running a subcubic recursion over thinning worker
/// grids, with base blocks priced on the stacked cube.
pub fn ring_matmul_3d(
    a: &Matrix,
    b: &Matrix,
    sched: &AlgBSchedule,
) -> Result<(Matrix, StepLedger), MulError> {
    if a.semiring() != Semiring::PlusMul || b.semiring() != Semiring::PlusMul {
        return Err(MulError::Structure(
            "the fast recursion needs subtraction: inputs must use the wrapping ring".into(),
        ));
    }
    let n = a.n();
    if b.n() != n {
        return Err(MulError::Structure("operands differ in size".into()));
    }
    if n != sched.n {
        return Err(MulError::Plan(format!(
            "schedule was planned for side {}, got {n}",
            sched.n
        )));
    }
    grid_sets_disjoint(&sched.grids, sched.mesh_edge)?;
    let mut ledger = StepLedger::new((sched.mesh_edge as u64).pow(3));
    for (i, g) in sched.grids.iter().enumerate() {
        ledger.note_phase_steps(&format!("workers-step{i}"), g.workers());
    }
    let input_words = 2 * (n * n) as u64;
    let mut exec = RingExec { sched, ledger, live: input_words, peak: input_words, top_count: 0 };
    let c = exec.multiply(a, b, 0)?;
    exec.alloc(0);
    let per_worker = exec.peak.div_ceil(sched.grids[0].workers());
    let allowed = (sched.memory_factor * 32.0).ceil() as u64;
    if per_worker > allowed {
        return Err(MulError::Budget(format!(
            "peak working set needs {per_worker} words per worker, above the planned {allowed} \
             ({:.3}x the base budget of 32)",
            sched.memory_factor
        )));
    }
    let mut ledger = exec.ledger;
    ledger.peak_words = ledger.peak_words.max(per_worker);
    ledger.note_phase_steps("top-subproblems", exec.top_count);
    Ok((c, ledger))
}
