//! Semirings over 64-bit words, dense square matrices, and the serial
//! reference algorithms that mesh runs are checked against.
//!
//! All mesh data is a `Word` (64-bit two's complement). Path-style semirings
//! reserve `INF = 2^62` and `NEG_INF = -2^62` as sentinels so that saturating
//! arithmetic keeps `INF + INF` representable and order-correct.

use std::fmt;

use rand::Rng;
use thiserror::Error;

/// Payload carried by one processor register or one link transfer.
pub type Word = i64;

/// Unreachable / no-edge sentinel for MINPLUS, top element for MAXMIN.
pub const INF: Word = 1 << 62;

/// Bottom element for MAXMIN (no path has capacity this low).
pub const NEG_INF: Word = -(1 << 62);

/// Errors from parsing or combining algebra values.
#[derive(Debug, Error)]
pub enum AlgebraError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("matrix dimensions differ: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("semirings differ: {0} vs {1}")]
    SemiringMismatch(Semiring, Semiring),
    #[error("operation requires a ring; {0} is not one")]
    NotARing(Semiring),
    #[error("negative cycle through vertex {0}")]
    NegativeCycle(usize),
    #[error("unknown semiring name {0:?}")]
    UnknownSemiring(String),
}

/// One of the four fixed scalar algebras mesh programs compute over.
///
/// `PlusMul` is the only true ring (wrapping arithmetic mod 2^64); the other
/// three are idempotent path semirings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Semiring {
    /// Wrapping (+, *) mod 2^64.
    PlusMul,
    /// (min, saturating +) with `INF` absorbing for +.
    MinPlus,
    /// (max, min) with `NEG_INF` bottom and `INF` top.
    MaxMin,
    /// Boolean (or, and) over {0, 1}.
    BoolOr,
}

pub const ALL_SEMIRINGS: [Semiring; 4] = [
    Semiring::PlusMul,
    Semiring::MinPlus,
    Semiring::MaxMin,
    Semiring::BoolOr,
];

impl Semiring {
    /// Identity of the combining operation (the "sum").
    pub fn zero(self) -> Word {
        match self {
            Semiring::PlusMul => 0,
            Semiring::MinPlus => INF,
            Semiring::MaxMin => NEG_INF,
            Semiring::BoolOr => 0,
        }
    }

    /// Identity of the extending operation (the "product").
    pub fn one(self) -> Word {
        match self {
            Semiring::PlusMul => 1,
            Semiring::MinPlus => 0,
            Semiring::MaxMin => INF,
            Semiring::BoolOr => 1,
        }
    }

    /// Combine two alternatives (matrix-sum operation).
    #[inline]
    pub fn plus(self, a: Word, b: Word) -> Word {
        match self {
            Semiring::PlusMul => a.wrapping_add(b),
            Semiring::MinPlus => a.min(b),
            Semiring::MaxMin => a.max(b),
            Semiring::BoolOr => a | b,
        }
    }

    /// Extend a partial result (matrix-product operation).
    #[inline]
    pub fn times(self, a: Word, b: Word) -> Word {
        match self {
            Semiring::PlusMul => a.wrapping_mul(b),
            Semiring::MinPlus => sat_add(a, b),
            Semiring::MaxMin => a.min(b),
            Semiring::BoolOr => a & b,
        }
    }

    /// Whether subtraction exists (enables Strassen-style recursion).
    pub fn is_ring(self) -> bool {
        matches!(self, Semiring::PlusMul)
    }

    /// True when `b` is a strictly better alternative than `a`.
    ///
    /// Only meaningful for the ordered path semirings; used for witness
    /// tracking. For the unordered algebras any change counts.
    pub fn improves(self, old: Word, new: Word) -> bool {
        match self {
            Semiring::MinPlus => new < old,
            Semiring::MaxMin => new > old,
            Semiring::PlusMul | Semiring::BoolOr => new != old,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Semiring::PlusMul => "plusmul",
            Semiring::MinPlus => "minplus",
            Semiring::MaxMin => "maxmin",
            Semiring::BoolOr => "boolor",
        }
    }

    pub fn from_name(name: &str) -> Result<Self, AlgebraError> {
        match name {
            "plusmul" => Ok(Semiring::PlusMul),
            "minplus" => Ok(Semiring::MinPlus),
            "maxmin" => Ok(Semiring::MaxMin),
            "boolor" => Ok(Semiring::BoolOr),
            other => Err(AlgebraError::UnknownSemiring(other.to_string())),
        }
    }

    /// Draw a plausible random entry for tests and scaling runs.
    pub fn random_entry<R: Rng>(self, rng: &mut R) -> Word {
        match self {
            Semiring::PlusMul => rng.gen::<i64>(),
            Semiring::MinPlus => {
                if rng.gen_ratio(1, 8) {
                    INF
                } else {
                    rng.gen_range(0..100)
                }
            }
            Semiring::MaxMin => {
                if rng.gen_ratio(1, 8) {
                    NEG_INF
                } else {
                    rng.gen_range(0..100)
                }
            }
            Semiring::BoolOr => rng.gen_range(0..2),
        }
    }
}

impl fmt::Display for Semiring {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Saturating addition where `INF` absorbs and finite sums stay in range.
#[inline]
fn sat_add(a: Word, b: Word) -> Word {
    if a >= INF || b >= INF {
        INF
    } else {
        a.saturating_add(b).clamp(NEG_INF + 1, INF)
    }
}

/// Dense square matrix over one semiring, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Matrix {
    n: usize,
    semiring: Semiring,
    data: Vec<Word>,
}

impl Matrix {
    pub fn filled(n: usize, semiring: Semiring, value: Word) -> Self {
        Matrix { n, semiring, data: vec![value; n * n] }
    }

    pub fn zeros(n: usize, semiring: Semiring) -> Self {
        Self::filled(n, semiring, semiring.zero())
    }

    /// Multiplicative identity: `one()` on the diagonal, `zero()` elsewhere.
    pub fn identity(n: usize, semiring: Semiring) -> Self {
        let mut m = Self::zeros(n, semiring);
        for i in 0..n {
            m.set(i, i, semiring.one());
        }
        m
    }

    pub fn from_rows(semiring: Semiring, rows: &[Vec<Word>]) -> Self {
        let n = rows.len();
        let mut data = Vec::with_capacity(n * n);
        for row in rows {
            assert_eq!(row.len(), n, "matrix rows must all have length n");
            data.extend_from_slice(row);
        }
        Matrix { n, semiring, data }
    }

    pub fn random<R: Rng>(n: usize, semiring: Semiring, rng: &mut R) -> Self {
        let data = (0..n * n).map(|_| semiring.random_entry(rng)).collect();
        Matrix { n, semiring, data }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn semiring(&self) -> Semiring {
        self.semiring
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> Word {
        self.data[i * self.n + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: Word) {
        self.data[i * self.n + j] = v;
    }

    pub fn entries(&self) -> &[Word] {
        &self.data
    }

    /// Re-tag the matrix with a different semiring, keeping entries.
    pub fn with_semiring(mut self, semiring: Semiring) -> Self {
        self.semiring = semiring;
        self
    }

    /// Copy into the top-left corner of a larger matrix, rest `fill`.
    pub fn padded(&self, m: usize, fill: Word) -> Matrix {
        assert!(m >= self.n);
        let mut out = Matrix::filled(m, self.semiring, fill);
        for i in 0..self.n {
            for j in 0..self.n {
                out.set(i, j, self.get(i, j));
            }
        }
        out
    }

    /// Top-left `m x m` corner.
    pub fn cropped(&self, m: usize) -> Matrix {
        assert!(m <= self.n);
        let mut out = Matrix::zeros(m, self.semiring);
        for i in 0..m {
            for j in 0..m {
                out.set(i, j, self.get(i, j));
            }
        }
        out
    }

    /// Parse the text format: first line `n`, then `n` rows of `n` tokens.
    ///
    /// Tokens are decimal integers or the sentinels `INF` / `-INF`.
    pub fn parse(text: &str, semiring: Semiring) -> Result<Matrix, AlgebraError> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (lno, first) = lines.next().ok_or(AlgebraError::Parse {
            line: 1,
            msg: "empty input".into(),
        })?;
        let n: usize = first.trim().parse().map_err(|_| AlgebraError::Parse {
            line: lno + 1,
            msg: format!("expected matrix size, got {:?}", first.trim()),
        })?;
        if n == 0 {
            return Err(AlgebraError::Parse { line: lno + 1, msg: "matrix size must be positive".into() });
        }
        let mut data = Vec::with_capacity(n * n);
        for _ in 0..n {
            let (lno, line) = lines.next().ok_or(AlgebraError::Parse {
                line: 0,
                msg: format!("expected {} matrix rows", n),
            })?;
            let mut count = 0;
            for tok in line.split_whitespace() {
                let v = parse_token(tok, semiring).ok_or_else(|| AlgebraError::Parse {
                    line: lno + 1,
                    msg: format!("bad entry {:?}", tok),
                })?;
                if semiring == Semiring::BoolOr && !(v == 0 || v == 1) {
                    return Err(AlgebraError::Parse {
                        line: lno + 1,
                        msg: format!("boolor entries must be 0 or 1, got {}", v),
                    });
                }
                data.push(v);
                count += 1;
            }
            if count != n {
                return Err(AlgebraError::Parse {
                    line: lno + 1,
                    msg: format!("expected {} entries, got {}", n, count),
                });
            }
        }
        Ok(Matrix { n, semiring, data })
    }

    /// Emit the text format accepted by [`Matrix::parse`].
    pub fn emit(&self) -> String {
        let mut out = String::new();
        out.push_str(&self.n.to_string());
        out.push('\n');
        for i in 0..self.n {
            for j in 0..self.n {
                if j > 0 {
                    out.push(' ');
                }
                out.push_str(&emit_token(self.get(i, j), self.semiring));
            }
            out.push('\n');
        }
        out
    }
}

/// Sentinel tokens only exist in the ordered path semirings; the ring and
/// boolean formats are plain integers over their full domains.
fn uses_sentinels(s: Semiring) -> bool {
    matches!(s, Semiring::MinPlus | Semiring::MaxMin)
}

fn parse_token(tok: &str, s: Semiring) -> Option<Word> {
    match tok {
        "INF" if uses_sentinels(s) => Some(INF),
        "-INF" if uses_sentinels(s) => Some(NEG_INF),
        _ => tok.parse().ok(),
    }
}

fn emit_token(v: Word, s: Semiring) -> String {
    if uses_sentinels(s) && v >= INF {
        "INF".into()
    } else if uses_sentinels(s) && v <= NEG_INF {
        "-INF".into()
    } else {
        v.to_string()
    }
}

/// Tag value meaning "no witness": the identity for lexicographic minima.
pub const NO_TAG: Word = i64::MAX;

/// Scalar algebra for matrix entries that are one word or a (value, tag)
/// pair moved as two words.
///
/// The tagged variant runs MINPLUS on the value and carries the left
/// operand's tag through products; sums take the lexicographic minimum of
/// (value, tag), so equal-value alternatives resolve to the smallest tag no
/// matter how partial sums are grouped. Entries with value `INF` normalize
/// their tag to [`NO_TAG`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PairAlgebra {
    Plain(Semiring),
    MinPlusTagged,
}

impl PairAlgebra {
    /// Words per matrix entry.
    pub fn width(&self) -> usize {
        match self {
            PairAlgebra::Plain(_) => 1,
            PairAlgebra::MinPlusTagged => 2,
        }
    }

    /// Identity of the combining operation, one word per plane.
    pub fn zero(&self) -> Vec<Word> {
        match self {
            PairAlgebra::Plain(s) => vec![s.zero()],
            PairAlgebra::MinPlusTagged => vec![INF, NO_TAG],
        }
    }

    /// `acc = acc (+) x`.
    pub fn combine(&self, acc: &mut [Word], x: &[Word]) {
        match self {
            PairAlgebra::Plain(s) => acc[0] = s.plus(acc[0], x[0]),
            PairAlgebra::MinPlusTagged => {
                if (x[0], x[1]) < (acc[0], acc[1]) {
                    acc.copy_from_slice(x);
                }
            }
        }
    }

    /// `acc = acc (+) (a (x) b)`.
    pub fn mac(&self, acc: &mut [Word], a: &[Word], b: &[Word]) {
        match self {
            PairAlgebra::Plain(s) => acc[0] = s.plus(acc[0], s.times(a[0], b[0])),
            PairAlgebra::MinPlusTagged => {
                let v = Semiring::MinPlus.times(a[0], b[0]);
                let tag = if v >= INF { NO_TAG } else { a[1] };
                self.combine(acc, &[v, tag]);
            }
        }
    }

    /// Per-plane matrix semirings for inputs and results.
    pub fn plane_semirings(&self) -> Vec<Semiring> {
        match self {
            PairAlgebra::Plain(s) => vec![*s],
            PairAlgebra::MinPlusTagged => vec![Semiring::MinPlus, Semiring::PlusMul],
        }
    }
}

/// Reference product over plane-split entries (see [`PairAlgebra`]).
pub fn serial_pair_matmul(
    a: &[&Matrix],
    b: &[&Matrix],
    alg: PairAlgebra,
) -> Result<Vec<Matrix>, AlgebraError> {
    let w = alg.width();
    assert_eq!(a.len(), w);
    assert_eq!(b.len(), w);
    let n = a[0].n;
    for m in a.iter().chain(b.iter()) {
        if m.n != n {
            return Err(AlgebraError::DimensionMismatch(n, m.n));
        }
    }
    let mut out: Vec<Matrix> = alg
        .plane_semirings()
        .into_iter()
        .map(|s| Matrix::zeros(n, s))
        .collect();
    let mut av = vec![0; w];
    let mut bv = vec![0; w];
    let mut acc = vec![0; w];
    for i in 0..n {
        for j in 0..n {
            acc.copy_from_slice(&alg.zero());
            for k in 0..n {
                for p in 0..w {
                    av[p] = a[p].get(i, k);
                    bv[p] = b[p].get(k, j);
                }
                alg.mac(&mut acc, &av, &bv);
            }
            for p in 0..w {
                out[p].set(i, j, acc[p]);
            }
        }
    }
    Ok(out)
}

/// Attach per-column (for the left factor) index tags to a MINPLUS matrix.
///
/// `tagged_planes(w).0[i][k] = w[i][k]` with tag `k`; squaring the result
/// yields, per entry, the best two-edge value and the smallest optimal
/// intermediate index.
pub fn tag_with_index(w: &Matrix) -> (Matrix, Matrix) {
    let n = w.n;
    let mut tags = Matrix::zeros(n, Semiring::PlusMul);
    for i in 0..n {
        for k in 0..n {
            let t = if w.get(i, k) >= INF { NO_TAG } else { k as Word };
            tags.set(i, k, t);
        }
    }
    (w.clone(), tags)
}

/// Reference product: the cubic triple loop, no cleverness.
pub fn serial_matmul(a: &Matrix, b: &Matrix) -> Result<Matrix, AlgebraError> {
    if a.n != b.n {
        return Err(AlgebraError::DimensionMismatch(a.n, b.n));
    }
    if a.semiring != b.semiring {
        return Err(AlgebraError::SemiringMismatch(a.semiring, b.semiring));
    }
    let n = a.n;
    let s = a.semiring;
    let mut c = Matrix::zeros(n, s);
    for i in 0..n {
        for j in 0..n {
            let mut acc = s.zero();
            for k in 0..n {
                acc = s.plus(acc, s.times(a.get(i, k), b.get(k, j)));
            }
            c.set(i, j, acc);
        }
    }
    Ok(c)
}

/// Strassen product over the wrapping ring, recursing down to `threshold`.
///
/// Inputs are padded to the next power of two; the returned matrix is cropped
/// back. Exact over PLUSMUL because wrapping add/sub/mul form a ring.
pub fn serial_strassen(a: &Matrix, b: &Matrix, threshold: usize) -> Result<Matrix, AlgebraError> {
    serial_strassen_counting(a, b, threshold).map(|(c, _)| c)
}

/// Same as [`serial_strassen`] but also reports how many base-case products
/// of `threshold`-sized blocks were performed.
pub fn serial_strassen_counting(
    a: &Matrix,
    b: &Matrix,
    threshold: usize,
) -> Result<(Matrix, u64), AlgebraError> {
    if a.n != b.n {
        return Err(AlgebraError::DimensionMismatch(a.n, b.n));
    }
    if a.semiring != b.semiring {
        return Err(AlgebraError::SemiringMismatch(a.semiring, b.semiring));
    }
    if !a.semiring.is_ring() {
        return Err(AlgebraError::NotARing(a.semiring));
    }
    let threshold = threshold.max(1);
    let n = a.n;
    let m = n.next_power_of_two();
    let ap = Block::from_matrix(&a.padded(m, 0));
    let bp = Block::from_matrix(&b.padded(m, 0));
    let mut count = 0;
    let cp = strassen_rec(&ap, &bp, threshold, &mut count);
    let mut c = Matrix::zeros(n, a.semiring);
    for i in 0..n {
        for j in 0..n {
            c.set(i, j, cp.get(i, j));
        }
    }
    Ok((c, count))
}

/// Plain power-of-two square block used inside the Strassen recursion.
struct Block {
    m: usize,
    data: Vec<Word>,
}

impl Block {
    fn from_matrix(a: &Matrix) -> Block {
        Block { m: a.n, data: a.data.clone() }
    }

    fn zero(m: usize) -> Block {
        Block { m, data: vec![0; m * m] }
    }

    #[inline]
    fn get(&self, i: usize, j: usize) -> Word {
        self.data[i * self.m + j]
    }

    fn quadrant(&self, qi: usize, qj: usize) -> Block {
        let h = self.m / 2;
        let mut q = Block::zero(h);
        for i in 0..h {
            for j in 0..h {
                q.data[i * h + j] = self.get(qi * h + i, qj * h + j);
            }
        }
        q
    }

    fn add(&self, other: &Block) -> Block {
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(x, y)| x.wrapping_add(*y))
            .collect();
        Block { m: self.m, data }
    }

    fn sub(&self, other: &Block) -> Block {
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(x, y)| x.wrapping_sub(*y))
            .collect();
        Block { m: self.m, data }
    }

    fn naive_mul(&self, other: &Block) -> Block {
        let m = self.m;
        let mut c = Block::zero(m);
        for i in 0..m {
            for k in 0..m {
                let aik = self.get(i, k);
                if aik == 0 {
                    continue;
                }
                for j in 0..m {
                    c.data[i * m + j] =
                        c.data[i * m + j].wrapping_add(aik.wrapping_mul(other.get(k, j)));
                }
            }
        }
        c
    }

    fn assemble(c11: Block, c12: Block, c21: Block, c22: Block) -> Block {
        let h = c11.m;
        let m = h * 2;
        let mut c = Block::zero(m);
        for i in 0..h {
            for j in 0..h {
                c.data[i * m + j] = c11.get(i, j);
                c.data[i * m + j + h] = c12.get(i, j);
                c.data[(i + h) * m + j] = c21.get(i, j);
                c.data[(i + h) * m + j + h] = c22.get(i, j);
            }
        }
        c
    }
}

fn strassen_rec(a: &Block, b: &Block, threshold: usize, count: &mut u64) -> Block {
    if a.m <= threshold {
        *count += 1;
        return a.naive_mul(b);
    }
    let a11 = a.quadrant(0, 0);
    let a12 = a.quadrant(0, 1);
    let a21 = a.quadrant(1, 0);
    let a22 = a.quadrant(1, 1);
    let b11 = b.quadrant(0, 0);
    let b12 = b.quadrant(0, 1);
    let b21 = b.quadrant(1, 0);
    let b22 = b.quadrant(1, 1);

    let m1 = strassen_rec(&a11.add(&a22), &b11.add(&b22), threshold, count);
    let m2 = strassen_rec(&a21.add(&a22), &b11, threshold, count);
    let m3 = strassen_rec(&a11, &b12.sub(&b22), threshold, count);
    let m4 = strassen_rec(&a22, &b21.sub(&b11), threshold, count);
    let m5 = strassen_rec(&a11.add(&a12), &b22, threshold, count);
    let m6 = strassen_rec(&a21.sub(&a11), &b11.add(&b12), threshold, count);
    let m7 = strassen_rec(&a12.sub(&a22), &b21.add(&b22), threshold, count);

    let c11 = m1.add(&m4).sub(&m5).add(&m7);
    let c12 = m3.add(&m5);
    let c21 = m2.add(&m4);
    let c22 = m1.sub(&m2).add(&m3).add(&m6);
    Block::assemble(c11, c12, c21, c22)
}

/// All-pairs reference solver with witnesses.
///
/// Runs over MINPLUS (shortest paths) or MAXMIN (bottleneck paths). The
/// diagonal is forced to the multiplicative identity first. Returns the
/// solved matrix and, per pair, the smallest intermediate vertex achieving
/// the optimum (`None` when the direct edge is already optimal).
pub fn floyd_warshall(w: &Matrix) -> Result<(Matrix, Vec<Option<usize>>), AlgebraError> {
    let s = w.semiring;
    assert!(
        matches!(s, Semiring::MinPlus | Semiring::MaxMin),
        "floyd_warshall runs over minplus or maxmin"
    );
    let n = w.n;
    let mut d = w.clone();
    for i in 0..n {
        d.set(i, i, s.one());
    }
    let base = d.clone();
    for k in 0..n {
        for i in 0..n {
            let dik = d.get(i, k);
            for j in 0..n {
                let cand = s.times(dik, d.get(k, j));
                if s.improves(d.get(i, j), cand) {
                    d.set(i, j, cand);
                }
            }
        }
    }
    if s == Semiring::MinPlus {
        for i in 0..n {
            if d.get(i, i) < 0 {
                return Err(AlgebraError::NegativeCycle(i));
            }
        }
    }
    let mut wit = vec![None; n * n];
    for i in 0..n {
        for j in 0..n {
            if base.get(i, j) == d.get(i, j) {
                continue;
            }
            for k in 0..n {
                if k == i || k == j {
                    continue;
                }
                if s.times(d.get(i, k), d.get(k, j)) == d.get(i, j) {
                    wit[i * n + j] = Some(k);
                    break;
                }
            }
        }
    }
    Ok((d, wit))
}

/// Reflexive-transitive reachability by depth-first search from every vertex.
pub fn reachability_oracle(adj: &Matrix) -> Matrix {
    let n = adj.n;
    let mut out = Matrix::zeros(n, Semiring::BoolOr);
    let mut stack = Vec::new();
    let mut seen = vec![false; n];
    for src in 0..n {
        seen.iter_mut().for_each(|v| *v = false);
        stack.push(src);
        seen[src] = true;
        while let Some(u) = stack.pop() {
            for (v, was) in seen.iter_mut().enumerate() {
                if !*was && adj.get(u, v) != 0 {
                    *was = true;
                    stack.push(v);
                }
            }
        }
        for (v, _) in seen.iter().enumerate().filter(|(_, s)| **s) {
            out.set(src, v, 1);
        }
    }
    out
}

/// Optimal path values restricted to at most `max_edges` edges.
///
/// Bellman-Ford style table, used to cross-check intermediate squaring
/// rounds. Diagonal counts as a zero-edge path.
pub fn bounded_edge_paths(w: &Matrix, max_edges: u64) -> Matrix {
    let s = w.semiring;
    let n = w.n;
    let mut d = Matrix::identity(n, s);
    for i in 0..n {
        for j in 0..n {
            if i != j {
                d.set(i, j, s.zero());
            }
        }
    }
    for _ in 0..max_edges {
        let mut next = d.clone();
        for i in 0..n {
            for j in 0..n {
                let mut acc = d.get(i, j);
                for k in 0..n {
                    acc = s.plus(acc, s.times(d.get(i, k), w.get(k, j)));
                }
                next.set(i, j, acc);
            }
        }
        d = next;
    }
    d
}
