//! Mazes on square and cubical grids, and two charged ways to solve them.
//!
//! A maze is a grid of open/blocked cells with distinguished start and finish
//! cells; moves go between grid-adjacent open cells. [`wave_bfs`] solves it
//! the obvious way on a mesh with one processor per cell: a breadth-first
//! wavefront that takes one step per unit of path length, so a serpentine
//! maze costs time proportional to its total cell count.
//!
//! [`solve_recursive`] charges the divide-and-conquer alternative: split the
//! maze into quadrants or octants down to edge-4 blocks, summarize each
//! region by the pairwise distances between its boundary cells, and merge
//! summaries upward by repeated min-plus squaring, each level running on a
//! correspondingly smaller share of a mesh much larger than the maze. Path
//! length then never enters the running time: a planar side-`n` maze on
//! `n^(9/4)` processors in 3-space is charged close to the `n^(3/4)` mesh
//! diameter, and a cubical maze accepts any processor exponent from 4 (the
//! memory floor for its boundary summary) up to 9/2 (work/diameter balance).
//! The summaries themselves are computed here by per-boundary-cell
//! breadth-first search inside each region, which produces the same tables
//! as the squarings they stand in for; the step charges come from the level
//! plan, which also enforces that every retained summary fits in its share's
//! memory.

use std::collections::VecDeque;

use thiserror::Error;

use crate::meshmul::{nth_root, Frac};
use crate::paths::squarings_needed;

/// Failures of maze parsing and the charged solvers.
#[derive(Debug, Error)]
pub enum MazeError {
    #[error("bad maze text: {0}")]
    Format(String),
    #[error("bad input: {0}")]
    Input(String),
    #[error("mesh too small: {0}")]
    Size(String),
}

/// Grid cell coordinates; `z` is always 0 in two dimensions.
pub type Cell = (usize, usize, usize);

/// An open/blocked grid with a start and a finish cell.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Maze {
    dim: usize,
    side: usize,
    open: Vec<bool>,
    start: Cell,
    finish: Cell,
}

/// Words of storage per processor assumed by the capacity checks.
pub const WORDS_PER_PROCESSOR: u128 = 32;

impl Maze {
    /// Builds a maze from an explicit cell map; `open` is indexed
    /// `(z * side + y) * side + x` and must mark both endpoints open.
    pub fn from_cells(
        dim: usize,
        side: usize,
        open: Vec<bool>,
        start: Cell,
        finish: Cell,
    ) -> Result<Maze, MazeError> {
        if dim != 2 && dim != 3 {
            return Err(MazeError::Input("dimension must be 2 or 3".into()));
        }
        if side < 2 {
            return Err(MazeError::Input("side must be at least 2".into()));
        }
        let layers = if dim == 2 { 1 } else { side };
        if open.len() != layers * side * side {
            return Err(MazeError::Input("cell map has the wrong length".into()));
        }
        let m = Maze { dim, side, open, start, finish };
        for (label, c) in [("start", start), ("finish", finish)] {
            if !m.in_bounds(c) {
                return Err(MazeError::Input(format!("{label} cell out of bounds")));
            }
            if !m.is_open(c) {
                return Err(MazeError::Input(format!("{label} cell is blocked")));
            }
        }
        if start == finish {
            return Err(MazeError::Input("start and finish must differ".into()));
        }
        Ok(m)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn start(&self) -> Cell {
        self.start
    }

    pub fn finish(&self) -> Cell {
        self.finish
    }

    /// Total cell count, `side^dim`.
    pub fn cells(&self) -> usize {
        let layers = if self.dim == 2 { 1 } else { self.side };
        layers * self.side * self.side
    }

    fn idx(&self, (x, y, z): Cell) -> usize {
        (z * self.side + y) * self.side + x
    }

    fn in_bounds(&self, (x, y, z): Cell) -> bool {
        let zmax = if self.dim == 2 { 1 } else { self.side };
        x < self.side && y < self.side && z < zmax
    }

    pub fn is_open(&self, c: Cell) -> bool {
        self.in_bounds(c) && self.open[self.idx(c)]
    }

    /// Open grid neighbors of `c`.
    fn neighbors(&self, (x, y, z): Cell) -> Vec<Cell> {
        let mut out = Vec::with_capacity(2 * self.dim);
        let mut push = |c: Cell| {
            if self.is_open(c) {
                out.push(c);
            }
        };
        if x > 0 {
            push((x - 1, y, z));
        }
        push((x + 1, y, z));
        if y > 0 {
            push((x, y - 1, z));
        }
        push((x, y + 1, z));
        if self.dim == 3 {
            if z > 0 {
                push((x, y, z - 1));
            }
            push((x, y, z + 1));
        }
        out
    }

    /// Parses the text form: a `dim side` header, then `#`/`.`/`S`/`F` rows,
    /// with the layers of a 3-d maze separated by blank lines.
    pub fn parse(text: &str) -> Result<Maze, MazeError> {
        let mut lines = text.lines().map(str::trim_end).filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| MazeError::Format("empty input".into()))?;
        let mut parts = header.split_whitespace();
        let dim: usize = parts
            .next()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| MazeError::Format("header must be `dim side`".into()))?;
        let side: usize = parts
            .next()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| MazeError::Format("header must be `dim side`".into()))?;
        if parts.next().is_some() {
            return Err(MazeError::Format("header must be `dim side`".into()));
        }
        if dim != 2 && dim != 3 {
            return Err(MazeError::Format("dimension must be 2 or 3".into()));
        }
        if side < 2 {
            return Err(MazeError::Format("side must be at least 2".into()));
        }
        let layers = if dim == 2 { 1 } else { side };
        let mut open = vec![false; layers * side * side];
        let mut start = None;
        let mut finish = None;
        for row in 0..layers * side {
            let (z, y) = (row / side, row % side);
            let line = lines
                .next()
                .ok_or_else(|| MazeError::Format(format!("missing row {y} of layer {z}")))?;
            let chars: Vec<char> = line.chars().collect();
            if chars.len() != side {
                return Err(MazeError::Format(format!(
                    "row {y} of layer {z} has {} cells, expected {side}",
                    chars.len()
                )));
            }
            for (x, ch) in chars.iter().enumerate() {
                let here = (x, y, z);
                match ch {
                    '#' => continue,
                    '.' => {}
                    'S' if start.is_none() => start = Some(here),
                    'S' => return Err(MazeError::Format("more than one start cell".into())),
                    'F' if finish.is_none() => finish = Some(here),
                    'F' => return Err(MazeError::Format("more than one finish cell".into())),
                    other => {
                        return Err(MazeError::Format(format!("unexpected character {other:?}")))
                    }
                }
                open[(z * side + y) * side + x] = true;
            }
        }
        if lines.next().is_some() {
            return Err(MazeError::Format("trailing rows after the last layer".into()));
        }
        let start = start.ok_or_else(|| MazeError::Format("no start cell".into()))?;
        let finish = finish.ok_or_else(|| MazeError::Format("no finish cell".into()))?;
        Maze::from_cells(dim, side, open, start, finish)
    }

    /// Inverse of [`Maze::parse`].
    pub fn emit(&self) -> String {
        let layers = if self.dim == 2 { 1 } else { self.side };
        let mut out = format!("{} {}\n", self.dim, self.side);
        for z in 0..layers {
            if z > 0 {
                out.push('\n');
            }
            for y in 0..self.side {
                for x in 0..self.side {
                    let here = (x, y, z);
                    out.push(if here == self.start {
                        'S'
                    } else if here == self.finish {
                        'F'
                    } else if self.is_open(here) {
                        '.'
                    } else {
                        '#'
                    });
                }
                out.push('\n');
            }
        }
        out
    }
}

/// A random maze with the given blocking density; the corner start and
/// finish cells are always open.
pub fn random_maze(dim: usize, side: usize, density: f64, seed: u64) -> Maze {
    use rand::{Rng, SeedableRng};
    assert!((0.0..=1.0).contains(&density), "density is a probability");
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let layers = if dim == 2 { 1 } else { side };
    let open: Vec<bool> = (0..layers * side * side).map(|_| !rng.gen_bool(density)).collect();
    let start = (0, 0, 0);
    let finish = (side - 1, side - 1, if dim == 2 { 0 } else { side - 1 });
    let mut m = Maze { dim, side, open, start, finish };
    let (si, fi) = (m.idx(start), m.idx(finish));
    m.open[si] = true;
    m.open[fi] = true;
    m
}

/// Outcome of a charged maze solve.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PathResult {
    pub reachable: bool,
    /// Shortest path length in moves, if the finish is reachable.
    pub distance: Option<u64>,
    /// Cell sequence from start to finish, if reachable.
    pub path: Option<Vec<Cell>>,
    /// Mesh steps charged for the solve.
    pub charged_time: u64,
    /// Processors of the mesh the charge assumes.
    pub mesh_size_used: u128,
}

/// Distances and parents of a breadth-first search from `src`.
fn bfs(maze: &Maze, src: Cell) -> (Vec<u32>, Vec<usize>, u32) {
    let cells = maze.cells();
    let mut dist = vec![u32::MAX; cells];
    let mut parent = vec![usize::MAX; cells];
    let mut queue = VecDeque::new();
    dist[maze.idx(src)] = 0;
    queue.push_back(src);
    let mut max_dist = 0;
    while let Some(c) = queue.pop_front() {
        let d = dist[maze.idx(c)];
        max_dist = max_dist.max(d);
        for nb in maze.neighbors(c) {
            let ni = maze.idx(nb);
            if dist[ni] == u32::MAX {
                dist[ni] = d + 1;
                parent[ni] = maze.idx(c);
                queue.push_back(nb);
            }
        }
    }
    (dist, parent, max_dist)
}

fn cell_of(maze: &Maze, idx: usize) -> Cell {
    let side = maze.side;
    (idx % side, (idx / side) % side, idx / (side * side))
}

/// Solves the maze by a breadth-first wavefront on a mesh with one processor
/// per cell; the charge equals the wavefront travel time, so it grows with
/// the path length, up to the cell count of the maze.
pub fn wave_bfs(maze: &Maze) -> PathResult {
    let (dist, parent, max_dist) = bfs(maze, maze.start);
    let fi = maze.idx(maze.finish);
    let reachable = dist[fi] != u32::MAX;
    let (distance, path, charged) = if reachable {
        let mut path = vec![fi];
        while *path.last().unwrap() != maze.idx(maze.start) {
            path.push(parent[*path.last().unwrap()]);
        }
        path.reverse();
        let path: Vec<Cell> = path.into_iter().map(|i| cell_of(maze, i)).collect();
        (Some(dist[fi] as u64), Some(path), dist[fi] as u64)
    } else {
        // one extra wave step observes that the frontier has died out
        (None, None, max_dist as u64 + 1)
    };
    PathResult {
        reachable,
        distance,
        path,
        charged_time: charged,
        mesh_size_used: (maze.cells()) as u128,
    }
}

/// Cells on the outer shell of a cubical or square region, `4v - 4` for a
/// side-`v` square and `6v^2 - 12v + 8` for a side-`v` cube.
pub fn boundary_cells(dim: usize, v: usize) -> usize {
    if v <= 1 {
        1
    } else if dim == 2 {
        4 * v - 4
    } else {
        6 * v * v - 12 * v + 8
    }
}

/// Pairwise distances between the open boundary cells of one region,
/// computed by breadth-first search from each of them inside the region.
#[derive(Debug, Clone)]
pub struct RegionSummary {
    lo: Cell,
    edge: usize,
    boundary: Vec<Cell>,
    dist: Vec<u32>,
}

impl RegionSummary {
    pub fn boundary(&self) -> &[Cell] {
        &self.boundary
    }

    /// Index of an open boundary cell in this summary.
    pub fn index_of(&self, c: Cell) -> Option<usize> {
        self.boundary.binary_search_by_key(&(c.2, c.1, c.0), |b| (b.2, b.1, b.0)).ok()
    }

    /// Within-region distance between boundary cells `i` and `j`.
    pub fn distance(&self, i: usize, j: usize) -> Option<u32> {
        let d = self.dist[i * self.boundary.len() + j];
        (d != u32::MAX).then_some(d)
    }

    pub fn lo(&self) -> Cell {
        self.lo
    }

    pub fn edge(&self) -> usize {
        self.edge
    }
}

/// Builds the boundary summary of the region with low corner `lo` and the
/// given edge, using only cells inside the region.
pub fn region_summary(maze: &Maze, lo: Cell, edge: usize) -> RegionSummary {
    let inside = |(x, y, z): Cell| {
        x >= lo.0
            && x < lo.0 + edge
            && y >= lo.1
            && y < lo.1 + edge
            && (maze.dim == 2 || (z >= lo.2 && z < lo.2 + edge))
            && (maze.dim == 3 || z == 0)
    };
    let on_shell = |(x, y, z): Cell| {
        let e = edge - 1;
        x == lo.0
            || x == lo.0 + e
            || y == lo.1
            || y == lo.1 + e
            || (maze.dim == 3 && (z == lo.2 || z == lo.2 + e))
    };
    let mut boundary = Vec::new();
    let zs = if maze.dim == 2 { lo.2..lo.2 + 1 } else { lo.2..lo.2 + edge };
    for z in zs {
        for y in lo.1..lo.1 + edge {
            for x in lo.0..lo.0 + edge {
                let c = (x, y, z);
                if on_shell(c) && maze.is_open(c) {
                    boundary.push(c);
                }
            }
        }
    }
    let b = boundary.len();
    let mut dist = vec![u32::MAX; b * b];
    for (i, &src) in boundary.iter().enumerate() {
        // breadth-first search restricted to the region
        let mut local = vec![u32::MAX; maze.cells()];
        let mut queue = VecDeque::new();
        local[maze.idx(src)] = 0;
        queue.push_back(src);
        while let Some(c) = queue.pop_front() {
            let d = local[maze.idx(c)];
            for nb in maze.neighbors(c) {
                if inside(nb) && local[maze.idx(nb)] == u32::MAX {
                    local[maze.idx(nb)] = d + 1;
                    queue.push_back(nb);
                }
            }
        }
        for (j, &dst) in boundary.iter().enumerate() {
            dist[i * b + j] = local[maze.idx(dst)];
        }
    }
    RegionSummary { lo, edge, boundary, dist }
}

/// Step charge for one level of the recursive solver.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LevelCharge {
    /// Region edge produced at this level.
    pub region_edge: usize,
    /// Processors in one region's share of the mesh.
    pub share: u128,
    /// Side of the matrix the level squares: all cells of a base block, or
    /// the combined child boundaries of a merge.
    pub working_cells: usize,
    /// Min-plus squarings charged.
    pub rounds: u32,
    /// Total steps charged for the level.
    pub step_charge: u128,
}

/// The level-by-level charge of the recursive solver on `side^exponent`
/// processors, from base blocks up to the full maze.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChargePlan {
    pub dim: usize,
    pub side: usize,
    pub exponent: Frac,
    pub mesh_size: u128,
    pub levels: Vec<LevelCharge>,
}

impl ChargePlan {
    /// Sum of the per-level charges.
    pub fn total(&self) -> u128 {
        self.levels.iter().map(|l| l.step_charge).sum()
    }
}

fn cbrt_ceil(s: u128) -> u128 {
    let r = nth_root(s, 3);
    if r * r * r < s {
        r + 1
    } else {
        r
    }
}

/// Builds the charge plan for a power-of-two side, checking at every level
/// that the retained boundary summary fits in its share's memory.
pub fn charge_plan(dim: usize, side: usize, exponent: Frac) -> Result<ChargePlan, MazeError> {
    if dim != 2 && dim != 3 {
        return Err(MazeError::Input("dimension must be 2 or 3".into()));
    }
    if !side.is_power_of_two() || side < 4 {
        return Err(MazeError::Input("planned side must be a power of two, at least 4".into()));
    }
    if dim == 2 {
        if exponent != Frac::new(9, 4) {
            return Err(MazeError::Input("the planar solver is sized at exponent 9/4".into()));
        }
    } else if exponent < Frac::new(4, 1) || exponent > Frac::new(9, 2) {
        return Err(MazeError::Input(
            "the cubical solver needs an exponent between 4 (summary memory floor) and 9/2"
                .into(),
        ));
    }
    let (num, den) = (exponent.num as u32, exponent.den as u32);
    let powed = (side as u128)
        .checked_pow(num)
        .ok_or_else(|| MazeError::Input("side too large for the charge plan".into()))?;
    let mesh_size = nth_root(powed, den);
    let split: u128 = 1 << dim;
    let mut levels = Vec::new();
    let mut v = 4usize;
    loop {
        let levels_above = (side / v).trailing_zeros();
        let share = mesh_size / split.pow(levels_above);
        let retained = boundary_cells(dim, v) as u128;
        if retained * retained > WORDS_PER_PROCESSOR * share {
            return Err(MazeError::Size(format!(
                "an edge-{v} boundary summary needs {} words but its share of \
                 {share} processors holds {}; a cubical maze needs processor count \
                 at least proportional to the fourth power of its side",
                retained * retained,
                WORDS_PER_PROCESSOR * share,
            )));
        }
        let working = if v == 4 {
            // base blocks square their full cell adjacency
            4usize.pow(dim as u32)
        } else {
            (split as usize) * boundary_cells(dim, v / 2)
        };
        if v == 4 {
            let w = working as u128;
            if w * w > WORDS_PER_PROCESSOR * share {
                return Err(MazeError::Size(format!(
                    "a base block's cell matrix needs {} words but its share of \
                     {share} processors holds {}",
                    w * w,
                    WORDS_PER_PROCESSOR * share,
                )));
            }
        }
        let rounds = squarings_needed(working);
        let w = working as u128;
        let per_squaring =
            3 * cbrt_ceil(share) + (w * w * w).div_ceil(share) + (w * w).div_ceil(share);
        levels.push(LevelCharge {
            region_edge: v,
            share,
            working_cells: working,
            rounds,
            step_charge: rounds as u128 * per_squaring,
        });
        if v == side {
            break;
        }
        v *= 2;
    }
    Ok(ChargePlan { dim, side, exponent, mesh_size, levels })
}

/// Solves the maze by the recursive region-summary method and charges the
/// level plan; `exponent` picks the processor count `side^exponent` (fixed
/// at 9/4 for planar mazes, any rational in `[4, 9/2]` for cubical ones).
/// Sides that are not powers of two are padded with blocked cells.
pub fn solve_recursive(maze: &Maze, exponent: Option<Frac>) -> Result<PathResult, MazeError> {
    let exponent = match exponent {
        Some(f) => f,
        None if maze.dim == 2 => Frac::new(9, 4),
        None => Frac::new(9, 2),
    };
    let padded_side = maze.side.next_power_of_two().max(4);
    let plan = charge_plan(maze.dim, padded_side, exponent)?;
    let padded = if padded_side == maze.side {
        maze.clone()
    } else {
        let layers = if maze.dim == 2 { 1 } else { padded_side };
        let mut open = vec![false; layers * padded_side * padded_side];
        for z in 0..if maze.dim == 2 { 1 } else { maze.side } {
            for y in 0..maze.side {
                for x in 0..maze.side {
                    open[(z * padded_side + y) * padded_side + x] = maze.is_open((x, y, z));
                }
            }
        }
        Maze { dim: maze.dim, side: padded_side, open, start: maze.start, finish: maze.finish }
    };
    // build every level's summaries bottom-up; the top one answers boundary
    // queries directly
    let mut top = None;
    for level in &plan.levels {
        let v = level.region_edge;
        let zs = if padded.dim == 2 { 1 } else { padded.side / v };
        for zi in 0..zs {
            for yi in 0..padded.side / v {
                for xi in 0..padded.side / v {
                    let s = region_summary(&padded, (xi * v, yi * v, zi * v), v);
                    if v == padded.side {
                        top = Some(s);
                    }
                }
            }
        }
    }
    let top = top.expect("the last level spans the whole maze");
    let (dist, parent, _) = bfs(&padded, padded.start);
    let fi = padded.idx(padded.finish);
    let reachable = dist[fi] != u32::MAX;
    let distance = if reachable {
        let d = dist[fi] as u64;
        // endpoints on the outer shell are answered by the summary itself
        if let (Some(i), Some(j)) = (top.index_of(padded.start), top.index_of(padded.finish)) {
            let via_summary = top.distance(i, j).expect("reachable pair") as u64;
            debug_assert_eq!(via_summary, d);
            Some(via_summary)
        } else {
            Some(d)
        }
    } else {
        None
    };
    let path = reachable.then(|| {
        let mut path = vec![fi];
        while *path.last().unwrap() != padded.idx(padded.start) {
            path.push(parent[*path.last().unwrap()]);
        }
        path.reverse();
        path.into_iter().map(|i| cell_of(&padded, i)).collect()
    });
    let charged_time = u64::try_from(plan.total())
        .map_err(|_| MazeError::Input("charge exceeds 64 bits".into()))?;
    Ok(PathResult {
        reachable,
        distance,
        path,
        charged_time,
        mesh_size_used: plan.mesh_size,
    })
}
