//! Routing matrices and network topologies.
//!
//! A routing matrix `A` (m counters x n origin-destination routes) maps the
//! latent per-route traffic vector `x` to the observed counter vector
//! `y = A x`. The matrix is rank deficient in every interesting case, so the
//! central object here is its rank decomposition: a set of independent rows,
//! a column permutation putting an invertible block `A1` first, and the
//! cached products `A1^-1` and `C = A1^-1 A2` that the polytope sampler
//! consumes.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

/// Relative pivot tolerance used for rank decisions.
const RANK_TOL: f64 = 1e-10;

/// Entries may drift this far outside [0, 1] before validation rejects them.
const ENTRY_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum NetworkError {
    #[error("routing matrix must have at least one row and one column")]
    Empty,
    #[error("entry ({row}, {col}) = {value} is outside [0, 1]")]
    EntryOutOfRange { row: usize, col: usize, value: f64 },
    #[error("column {col} is all zero: route is observed by no counter")]
    ZeroColumn { col: usize },
    #[error("need at least {min} nodes, got {got}")]
    TooFewNodes { min: usize, got: usize },
    #[error("vector length {got} does not match expected {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("matrix entries must be integers for the unimodularity check")]
    NonIntegerEntries,
    #[error("matrix must have full row rank for the unimodularity check (rank {rank} < rows {rows})")]
    RowRankDeficient { rank: usize, rows: usize },
    #[error("unimodularity check would enumerate {required} submatrices, over the cap {cap}")]
    EnumerationCap { required: u128, cap: u128 },
    #[error("integer overflow while evaluating a subdeterminant")]
    DeterminantOverflow,
    #[error("name count {got} does not match dimension {expected}")]
    NameCountMismatch { expected: usize, got: usize },
}

/// A validated, decomposed routing matrix.
///
/// Redundant rows are kept (data files list every counter) but excluded from
/// the invertible block; `row_basis` records which counters were selected.
#[derive(Debug, Clone)]
pub struct RoutingMatrix {
    entries: DMatrix<f64>,
    row_names: Vec<String>,
    col_names: Vec<String>,
    rank: usize,
    row_basis: Vec<usize>,
    col_perm: Vec<usize>,
    a1_inv: DMatrix<f64>,
    c: DMatrix<f64>,
}

impl RoutingMatrix {
    /// Validate entries and compute the rank decomposition.
    pub fn from_entries(entries: DMatrix<f64>) -> Result<Self, NetworkError> {
        let row_names = (0..entries.nrows()).map(|i| format!("counter_{i}")).collect();
        let col_names = (0..entries.ncols()).map(|j| format!("od_{j}")).collect();
        Self::with_names(entries, row_names, col_names)
    }

    /// Same as [`RoutingMatrix::from_entries`] but with counter/route names
    /// (used by the CSV schema, where names carry the layout).
    pub fn with_names(
        entries: DMatrix<f64>,
        row_names: Vec<String>,
        col_names: Vec<String>,
    ) -> Result<Self, NetworkError> {
        let (m, n) = entries.shape();
        if m == 0 || n == 0 {
            return Err(NetworkError::Empty);
        }
        if row_names.len() != m {
            return Err(NetworkError::NameCountMismatch { expected: m, got: row_names.len() });
        }
        if col_names.len() != n {
            return Err(NetworkError::NameCountMismatch { expected: n, got: col_names.len() });
        }
        for i in 0..m {
            for j in 0..n {
                let v = entries[(i, j)];
                if !v.is_finite() || v < -ENTRY_TOL || v > 1.0 + ENTRY_TOL {
                    return Err(NetworkError::EntryOutOfRange { row: i, col: j, value: v });
                }
            }
        }
        for j in 0..n {
            if (0..m).all(|i| entries[(i, j)] == 0.0) {
                return Err(NetworkError::ZeroColumn { col: j });
            }
        }
        let decomp = decompose_entries(&entries);
        Ok(Self {
            entries,
            row_names,
            col_names,
            rank: decomp.rank,
            row_basis: decomp.row_basis,
            col_perm: decomp.col_perm,
            a1_inv: decomp.a1_inv,
            c: decomp.c,
        })
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    /// Number of counters (rows).
    pub fn m(&self) -> usize {
        self.entries.nrows()
    }

    /// Number of OD routes (columns).
    pub fn n(&self) -> usize {
        self.entries.ncols()
    }

    /// Effective row rank.
    pub fn rank(&self) -> usize {
        self.rank
    }

    /// Dimension of the solution polytope for a generic consistent `y`.
    pub fn polytope_dim(&self) -> usize {
        self.n() - self.rank
    }

    /// Indices of the independent rows selected for `A1`, in pivot order.
    pub fn row_basis(&self) -> &[usize] {
        &self.row_basis
    }

    /// Column permutation; the first `rank` entries are the pivot columns.
    pub fn col_perm(&self) -> &[usize] {
        &self.col_perm
    }

    /// Inverse of the pivot block `A1`.
    pub fn a1_inv(&self) -> &DMatrix<f64> {
        &self.a1_inv
    }

    /// `C = A1^-1 A2`, the chord-walk matrix.
    pub fn c(&self) -> &DMatrix<f64> {
        &self.c
    }

    pub fn row_names(&self) -> &[String] {
        &self.row_names
    }

    pub fn col_names(&self) -> &[String] {
        &self.col_names
    }

    /// The independent rows of `A` as a dense matrix (rank x n, original
    /// column order).
    pub fn independent_rows(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.rank, self.n(), |i, j| self.entries[(self.row_basis[i], j)])
    }

    /// Restrict `y` to the independent rows, in basis order.
    pub fn reduce_y(&self, y: &DVector<f64>) -> Result<DVector<f64>, NetworkError> {
        if y.len() != self.m() {
            return Err(NetworkError::LengthMismatch { expected: self.m(), got: y.len() });
        }
        Ok(DVector::from_fn(self.rank, |i, _| y[self.row_basis[i]]))
    }

    /// True iff every maximal square submatrix of the independent-row matrix
    /// has determinant in {-1, 0, +1}. Entries must be integers. Refuses to
    /// enumerate more than `cap` submatrices.
    pub fn check_unimodular(&self, cap: u128) -> Result<UnimodularReport, NetworkError> {
        check_unimodular_entries(&self.independent_rows(), cap)
    }

    /// True iff the moment matrix `B` (rows of `A` plus all pairwise
    /// componentwise products of rows) has full column rank, which makes the
    /// mean/scale parameters of the calibration model identifiable.
    pub fn check_identifiability(&self) -> bool {
        let m = self.m();
        let n = self.n();
        let mut rows: Vec<DVector<f64>> = Vec::with_capacity(m + m * (m + 1) / 2);
        for i in 0..m {
            rows.push(self.entries.row(i).transpose());
        }
        for i in 0..m {
            for j in i..m {
                let prod = DVector::from_fn(n, |k, _| self.entries[(i, k)] * self.entries[(j, k)]);
                rows.push(prod);
            }
        }
        let b = DMatrix::from_fn(rows.len(), n, |i, j| rows[i][j]);
        rank_of(&b) == n
    }
}

/// Apply the mixing map: `y = A x`.
pub fn aggregate(a: &RoutingMatrix, x: &DVector<f64>) -> Result<DVector<f64>, NetworkError> {
    if x.len() != a.n() {
        return Err(NetworkError::LengthMismatch { expected: a.n(), got: x.len() });
    }
    Ok(a.entries() * x)
}

struct Decomposition {
    rank: usize,
    row_basis: Vec<usize>,
    col_perm: Vec<usize>,
    a1_inv: DMatrix<f64>,
    c: DMatrix<f64>,
}

/// Gaussian elimination with full pivoting on absolute value. Returns the
/// selected rows, the column permutation (pivot columns first), and the
/// cached `A1^-1`, `C` blocks.
fn decompose_entries(entries: &DMatrix<f64>) -> Decomposition {
    let (m, n) = entries.shape();
    let mut work = entries.clone();
    let mut rows: Vec<usize> = (0..m).collect();
    let mut cols: Vec<usize> = (0..n).collect();
    let scale = entries.amax().max(1e-300);
    let tol = RANK_TOL * scale;

    let mut rank = 0;
    for step in 0..m.min(n) {
        // Largest remaining entry becomes the pivot.
        let mut best = (step, step, 0.0f64);
        for i in step..m {
            for j in step..n {
                let v = work[(rows[i], cols[j])].abs();
                if v > best.2 {
                    best = (i, j, v);
                }
            }
        }
        if best.2 <= tol {
            break;
        }
        rows.swap(step, best.0);
        cols.swap(step, best.1);
        let pivot = work[(rows[step], cols[step])];
        for i in (step + 1)..m {
            let factor = work[(rows[i], cols[step])] / pivot;
            if factor != 0.0 {
                for j in step..n {
                    let upd = work[(rows[step], cols[j])] * factor;
                    work[(rows[i], cols[j])] -= upd;
                }
            }
        }
        rank = step + 1;
    }

    let row_basis: Vec<usize> = rows[..rank].to_vec();
    // Pivot columns first, the rest in original order for readability.
    let mut col_perm: Vec<usize> = cols[..rank].to_vec();
    let mut tail: Vec<usize> = cols[rank..].to_vec();
    tail.sort_unstable();
    col_perm.extend_from_slice(&tail);

    let a1 = DMatrix::from_fn(rank, rank, |i, j| entries[(row_basis[i], col_perm[j])]);
    let a1_inv = a1
        .clone()
        .try_inverse()
        .expect("pivot block is invertible by construction");
    let a2 = DMatrix::from_fn(rank, n - rank, |i, j| entries[(row_basis[i], col_perm[rank + j])]);
    let c = &a1_inv * a2;

    Decomposition { rank, row_basis, col_perm, a1_inv, c }
}

/// Row rank by plain Gaussian elimination with partial pivoting.
pub fn rank_of(m: &DMatrix<f64>) -> usize {
    let (rows, cols) = m.shape();
    if rows == 0 || cols == 0 {
        return 0;
    }
    let scale = m.amax().max(1e-300);
    let tol = RANK_TOL * scale;
    let mut work = m.clone();
    let mut rank = 0;
    let mut row = 0;
    for col in 0..cols {
        if row >= rows {
            break;
        }
        let mut pivot_row = row;
        let mut pivot_val = work[(row, col)].abs();
        for i in (row + 1)..rows {
            let v = work[(i, col)].abs();
            if v > pivot_val {
                pivot_row = i;
                pivot_val = v;
            }
        }
        if pivot_val <= tol {
            continue;
        }
        work.swap_rows(row, pivot_row);
        let pivot = work[(row, col)];
        for i in (row + 1)..rows {
            let factor = work[(i, col)] / pivot;
            if factor != 0.0 {
                for j in col..cols {
                    let upd = work[(row, j)] * factor;
                    work[(i, j)] -= upd;
                }
            }
        }
        row += 1;
        rank += 1;
    }
    rank
}

/// Outcome of the unimodularity check.
#[derive(Debug, Clone, PartialEq)]
pub enum UnimodularReport {
    Unimodular,
    /// First maximal square submatrix whose determinant falls outside
    /// {-1, 0, +1}: the selected column indices and the offending value.
    Violation { cols: Vec<usize>, det: i128 },
}

impl UnimodularReport {
    pub fn is_unimodular(&self) -> bool {
        matches!(self, UnimodularReport::Unimodular)
    }
}

/// Unimodularity check on a raw integer matrix (desk scale: enumerates all
/// maximal square submatrices, refusing if there are more than `cap`).
pub fn check_unimodular_entries(
    entries: &DMatrix<f64>,
    cap: u128,
) -> Result<UnimodularReport, NetworkError> {
    let (r, n) = entries.shape();
    if r == 0 || n == 0 {
        return Err(NetworkError::Empty);
    }
    let mut int_entries = vec![0i128; r * n];
    for i in 0..r {
        for j in 0..n {
            let v = entries[(i, j)];
            let rounded = v.round();
            if (v - rounded).abs() > 1e-9 {
                return Err(NetworkError::NonIntegerEntries);
            }
            int_entries[i * n + j] = rounded as i128;
        }
    }
    let rank = rank_of(entries);
    if rank < r {
        return Err(NetworkError::RowRankDeficient { rank, rows: r });
    }
    let count = binomial(n as u128, r as u128);
    if count > cap {
        return Err(NetworkError::EnumerationCap { required: count, cap });
    }

    let mut sel: Vec<usize> = (0..r).collect();
    let mut sub = vec![0i128; r * r];
    loop {
        for (si, &col) in sel.iter().enumerate() {
            for i in 0..r {
                sub[i * r + si] = int_entries[i * n + col];
            }
        }
        let det = bareiss_det(&mut sub.clone(), r).ok_or(NetworkError::DeterminantOverflow)?;
        if det.abs() > 1 {
            return Ok(UnimodularReport::Violation { cols: sel.clone(), det });
        }
        if !next_combination(&mut sel, n) {
            break;
        }
    }
    Ok(UnimodularReport::Unimodular)
}

fn binomial(n: u128, k: u128) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc.saturating_mul(n - i) / (i + 1);
    }
    acc
}

/// Advance `sel` to the next k-combination of {0..n}; false when exhausted.
fn next_combination(sel: &mut [usize], n: usize) -> bool {
    let k = sel.len();
    let mut i = k;
    while i > 0 {
        i -= 1;
        if sel[i] < n - (k - i) {
            sel[i] += 1;
            for j in (i + 1)..k {
                sel[j] = sel[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// Fraction-free (Bareiss) integer determinant; None on overflow.
fn bareiss_det(m: &mut [i128], k: usize) -> Option<i128> {
    if k == 0 {
        return Some(1);
    }
    let mut sign = 1i128;
    let mut prev = 1i128;
    for i in 0..k {
        if m[i * k + i] == 0 {
            let mut swap_row = None;
            for r in (i + 1)..k {
                if m[r * k + i] != 0 {
                    swap_row = Some(r);
                    break;
                }
            }
            match swap_row {
                Some(r) => {
                    for c in 0..k {
                        m.swap(i * k + c, r * k + c);
                    }
                    sign = -sign;
                }
                None => return Some(0),
            }
        }
        let pivot = m[i * k + i];
        for r in (i + 1)..k {
            for c in (i + 1)..k {
                let num = m[r * k + c]
                    .checked_mul(pivot)?
                    .checked_sub(m[r * k + i].checked_mul(m[i * k + c])?)?;
                m[r * k + c] = num / prev;
            }
            m[r * k + i] = 0;
        }
        prev = pivot;
    }
    Some(sign * m[(k - 1) * k + (k - 1)])
}

/// Network topology descriptor; the star/chain/two-router builders are
/// deterministic given the node counts.
#[derive(Debug, Clone)]
pub enum Topology {
    Star { nodes: usize },
    Chain { nodes: usize },
    TwoRouter { left: usize, right: usize },
    /// Arbitrary routing supplied by the user (e.g. loaded from CSV).
    Custom { routing: Box<RoutingMatrix> },
}

impl Topology {
    pub fn node_count(&self) -> Option<usize> {
        match self {
            Topology::Star { nodes } | Topology::Chain { nodes } => Some(*nodes),
            Topology::TwoRouter { left, right } => Some(left + right),
            Topology::Custom { .. } => None,
        }
    }

    pub fn routing_matrix(&self) -> Result<RoutingMatrix, NetworkError> {
        match self {
            Topology::Star { nodes } => build_star(*nodes),
            Topology::Chain { nodes } => build_chain(*nodes),
            Topology::TwoRouter { left, right } => build_two_router(*left, *right),
            Topology::Custom { routing } => Ok((**routing).clone()),
        }
    }
}

fn od_names(d: usize) -> Vec<String> {
    let mut names = Vec::with_capacity(d * d);
    for o in 0..d {
        for dest in 0..d {
            names.push(format!("od_{o}_{dest}"));
        }
    }
    names
}

fn access_counter_names(d: usize) -> Vec<String> {
    let mut names: Vec<String> = (0..d).map(|i| format!("out_{i}")).collect();
    names.extend((0..d).map(|j| format!("in_{j}")));
    names
}

/// Star topology: one router, `d` access subnets. Counters are one egress
/// (origin) and one ingress (destination) per node; every route (o, d) hits
/// exactly counters `out_o` and `in_d`.
pub fn build_star(node_count: usize) -> Result<RoutingMatrix, NetworkError> {
    if node_count < 2 {
        return Err(NetworkError::TooFewNodes { min: 2, got: node_count });
    }
    let d = node_count;
    let n = d * d;
    let m = 2 * d;
    let mut entries = DMatrix::zeros(m, n);
    for o in 0..d {
        for dest in 0..d {
            let j = o * d + dest;
            entries[(o, j)] = 1.0;
            entries[(d + dest, j)] = 1.0;
        }
    }
    RoutingMatrix::with_names(entries, access_counter_names(d), od_names(d))
}

/// Bidirectional chain of `k` nodes: per-node access counters plus two
/// directed counters per inter-node link.
pub fn build_chain(node_count: usize) -> Result<RoutingMatrix, NetworkError> {
    if node_count < 2 {
        return Err(NetworkError::TooFewNodes { min: 2, got: node_count });
    }
    let k = node_count;
    let n = k * k;
    let m = 2 * k + 2 * (k - 1);
    let mut entries = DMatrix::zeros(m, n);
    let mut names = access_counter_names(k);
    for o in 0..k {
        for dest in 0..k {
            let j = o * k + dest;
            entries[(o, j)] = 1.0;
            entries[(k + dest, j)] = 1.0;
        }
    }
    // Link counters: edge e sits between nodes e and e+1; a route crosses it
    // forward iff it starts at or left of e and ends right of e.
    let mut row = 2 * k;
    for e in 0..(k - 1) {
        for o in 0..k {
            for dest in 0..k {
                let j = o * k + dest;
                if o <= e && dest > e {
                    entries[(row, j)] = 1.0;
                }
                if o > e && dest <= e {
                    entries[(row + 1, j)] = 1.0;
                }
            }
        }
        names.push(format!("fwd_{e}_{}", e + 1));
        names.push(format!("bwd_{}_{e}", e + 1));
        row += 2;
    }
    RoutingMatrix::with_names(entries, names, od_names(k))
}

/// Two routers joined by a single link; `left` nodes on the first router and
/// `right` on the second. Per-node access counters plus the two directed
/// inter-router counters.
pub fn build_two_router(left: usize, right: usize) -> Result<RoutingMatrix, NetworkError> {
    if left < 1 {
        return Err(NetworkError::TooFewNodes { min: 1, got: left });
    }
    if right < 1 {
        return Err(NetworkError::TooFewNodes { min: 1, got: right });
    }
    let d = left + right;
    let n = d * d;
    let m = 2 * d + 2;
    let mut entries = DMatrix::zeros(m, n);
    for o in 0..d {
        for dest in 0..d {
            let j = o * d + dest;
            entries[(o, j)] = 1.0;
            entries[(d + dest, j)] = 1.0;
            if o < left && dest >= left {
                entries[(2 * d, j)] = 1.0;
            }
            if o >= left && dest < left {
                entries[(2 * d + 1, j)] = 1.0;
            }
        }
    }
    let mut names = access_counter_names(d);
    names.push("link_r1_r2".to_string());
    names.push("link_r2_r1".to_string());
    RoutingMatrix::with_names(entries, names, od_names(d))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Independent rank oracle: row echelon without column pivoting,
    /// deliberately distinct from the implementation path.
    fn rank_oracle(m: &DMatrix<f64>) -> usize {
        let mut a: Vec<Vec<f64>> = (0..m.nrows())
            .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
            .collect();
        let rows = a.len();
        let cols = if rows > 0 { a[0].len() } else { 0 };
        let mut rank = 0;
        for c in 0..cols {
            let pivot = (rank..rows).find(|&r| a[r][c].abs() > 1e-9);
            if let Some(p) = pivot {
                a.swap(rank, p);
                for r in 0..rows {
                    if r != rank && a[r][c].abs() > 0.0 {
                        let f = a[r][c] / a[rank][c];
                        for j in 0..cols {
                            a[r][j] -= f * a[rank][j];
                        }
                    }
                }
                rank += 1;
            }
        }
        rank
    }

    #[test]
    fn star_4_dimensions() {
        let a = build_star(4).unwrap();
        assert_eq!(a.m(), 8);
        assert_eq!(a.n(), 16);
        assert_eq!(a.rank(), 7);
        assert_eq!(a.polytope_dim(), 9);
    }

    #[test]
    fn star_2_structure() {
        let a = build_star(2).unwrap();
        assert_eq!(a.m(), 4);
        assert_eq!(a.n(), 4);
        for j in 0..4 {
            let ones: f64 = (0..4).map(|i| a.entries()[(i, j)]).sum();
            assert_eq!(ones, 2.0);
        }
    }

    #[test]
    fn star_3_rank_matches_oracle() {
        let a = build_star(3).unwrap();
        assert_eq!(a.m(), 6);
        assert_eq!(a.n(), 9);
        assert_eq!(rank_oracle(a.entries()), 5);
        assert_eq!(a.rank(), 5);
        assert_eq!(a.c().shape(), (5, 4));
    }

    #[test]
    fn two_router_cmu_shape() {
        let a = build_two_router(4, 8).unwrap();
        assert_eq!(a.m(), 26);
        assert_eq!(a.n(), 144);
        assert_eq!(a.rank(), 24);
    }

    #[test]
    fn two_router_1_1_access_block_is_star_2() {
        let two = build_two_router(1, 1).unwrap();
        let star = build_star(2).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(two.entries()[(i, j)], star.entries()[(i, j)]);
            }
        }
    }

    #[test]
    fn chain_3_polytope_dimension() {
        let a = build_chain(3).unwrap();
        assert_eq!(a.n(), 9);
        assert_eq!(a.rank(), rank_oracle(a.entries()));
        assert_eq!(a.polytope_dim(), 2);
    }

    #[test]
    fn builders_reject_too_few_nodes() {
        assert!(build_star(1).is_err());
        assert!(build_chain(1).is_err());
        assert!(build_two_router(0, 3).is_err());
    }

    #[test]
    fn decompose_identity() {
        let a = RoutingMatrix::from_entries(DMatrix::identity(3, 3)).unwrap();
        assert_eq!(a.rank(), 3);
        assert_eq!(a.polytope_dim(), 0);
        assert_eq!(a.c().ncols(), 0);
    }

    #[test]
    fn a1_inv_is_inverse() {
        for builder in [build_star(3).unwrap(), build_chain(4).unwrap(), build_two_router(2, 3).unwrap()] {
            let r = builder.rank();
            let a1 = DMatrix::from_fn(r, r, |i, j| {
                builder.entries()[(builder.row_basis()[i], builder.col_perm()[j])]
            });
            let prod = builder.a1_inv() * a1;
            let err = (&prod - DMatrix::<f64>::identity(r, r)).amax();
            assert!(err < 1e-10, "a1_inv * a1 deviates from identity by {err}");
        }
    }

    #[test]
    fn aggregate_identity_and_star() {
        let id = RoutingMatrix::from_entries(DMatrix::identity(3, 3)).unwrap();
        let y = aggregate(&id, &DVector::from_vec(vec![1.0, 2.0, 3.0])).unwrap();
        assert_eq!(y.as_slice(), &[1.0, 2.0, 3.0]);

        // Self-traffic only on a 2-node star: each node's in and out read its
        // own self pair.
        let star = build_star(2).unwrap();
        let y = aggregate(&star, &DVector::from_vec(vec![1.0, 0.0, 0.0, 1.0])).unwrap();
        assert_eq!(y.as_slice(), &[1.0, 1.0, 1.0, 1.0]);

        // All-ones through star(3): every counter reads the row sum 3.
        let star3 = build_star(3).unwrap();
        let y = aggregate(&star3, &DVector::from_element(9, 1.0)).unwrap();
        for i in 0..6 {
            let row_sum: f64 = (0..9).map(|j| star3.entries()[(i, j)]).sum();
            assert_eq!(row_sum, 3.0);
            assert_eq!(y[i], 3.0);
        }
    }

    #[test]
    fn aggregate_length_mismatch() {
        let star = build_star(2).unwrap();
        assert!(aggregate(&star, &DVector::zeros(5)).is_err());
    }

    #[test]
    fn unimodular_identity_and_star() {
        let id = RoutingMatrix::from_entries(DMatrix::identity(4, 4)).unwrap();
        assert!(id.check_unimodular(1_000_000).unwrap().is_unimodular());

        let star3 = build_star(3).unwrap();
        assert!(star3.check_unimodular(1_000_000).unwrap().is_unimodular());
    }

    #[test]
    fn unimodular_counterexample() {
        let m = DMatrix::from_row_slice(2, 3, &[1.0, 1.0, 0.0, 1.0, 0.0, 2.0]);
        match check_unimodular_entries(&m, 1_000_000).unwrap() {
            UnimodularReport::Violation { det, .. } => assert_eq!(det.abs(), 2),
            UnimodularReport::Unimodular => panic!("expected a violation"),
        }
    }

    #[test]
    fn unimodular_row_and_column_permutations_do_not_change_verdict() {
        let star3 = build_star(3).unwrap().independent_rows();
        let (r, n) = star3.shape();
        let mut perm_rows: Vec<usize> = (0..r).rev().collect();
        perm_rows.swap(0, 2);
        let mut perm_cols: Vec<usize> = (0..n).rev().collect();
        perm_cols.swap(1, 5);
        let permuted = DMatrix::from_fn(r, n, |i, j| star3[(perm_rows[i], perm_cols[j])]);
        assert!(check_unimodular_entries(&permuted, 1_000_000).unwrap().is_unimodular());
    }

    #[test]
    fn unimodular_cap_refuses_large_enumerations() {
        let a = build_two_router(4, 8).unwrap();
        // C(144, 24) is astronomically over any sane cap.
        assert!(matches!(
            a.check_unimodular(1_000_000),
            Err(NetworkError::EnumerationCap { .. })
        ));
    }

    #[test]
    fn identifiability_star_and_identity() {
        assert!(build_star(4).unwrap().check_identifiability());
        let id = RoutingMatrix::from_entries(DMatrix::identity(5, 5)).unwrap();
        assert!(id.check_identifiability());
    }

    #[test]
    fn identifiability_single_counter_fails() {
        let a = RoutingMatrix::from_entries(DMatrix::from_row_slice(1, 2, &[1.0, 1.0])).unwrap();
        assert!(!a.check_identifiability());
        // Oracle: B has rows [1,1] only, so rank 1 < 2.
        assert_eq!(rank_oracle(&DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0])), 1);
    }

    #[test]
    fn identifiability_invariant_under_row_permutation() {
        let a = build_star(3).unwrap();
        let m = a.m();
        let perm: Vec<usize> = (0..m).rev().collect();
        let permuted = DMatrix::from_fn(m, a.n(), |i, j| a.entries()[(perm[i], j)]);
        let b = RoutingMatrix::from_entries(permuted).unwrap();
        assert_eq!(a.check_identifiability(), b.check_identifiability());
    }

    #[test]
    fn rejects_zero_column_and_out_of_range() {
        let mut e = DMatrix::identity(2, 3);
        assert!(matches!(
            RoutingMatrix::from_entries(e.clone()),
            Err(NetworkError::ZeroColumn { col: 2 })
        ));
        e[(0, 2)] = 1.5;
        assert!(matches!(
            RoutingMatrix::from_entries(e),
            Err(NetworkError::EntryOutOfRange { .. })
        ));
    }

    #[test]
    fn decompose_reconstruction_identity() {
        // A1 (A1^-1 y - C x2) + A2 x2 == y for y in range(A).
        let a = build_star(3).unwrap();
        let r = a.rank();
        let n = a.n();
        let x_true = DVector::from_fn(n, |j, _| 0.3 + (j as f64) * 0.17);
        let y = aggregate(&a, &x_true).unwrap();
        let y_red = a.reduce_y(&y).unwrap();
        let x2 = DVector::from_fn(n - r, |j, _| 0.05 + (j as f64) * 0.11);
        let x1 = a.a1_inv() * &y_red - a.c() * &x2;
        let a1 = DMatrix::from_fn(r, r, |i, j| a.entries()[(a.row_basis()[i], a.col_perm()[j])]);
        let a2 = DMatrix::from_fn(r, n - r, |i, j| {
            a.entries()[(a.row_basis()[i], a.col_perm()[r + j])]
        });
        let recon = &a1 * &x1 + &a2 * &x2;
        assert!((&recon - &y_red).amax() < 1e-10);
    }
}
