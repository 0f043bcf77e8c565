//! Least-squares solvers: the projection-sweep iteration used everywhere in
//! training, and a dense factorization-based reference used as an oracle.
//!
//! [`solve_projection`] never factorizes or inverts the system matrix. It
//! touches `A` only through row and column projections:
//!
//! 1. **Deflation stage** — column projections drive an auxiliary vector
//!    toward the component of the right-hand side that no solution can
//!    reach (the part orthogonal to the column space). Subtracting it makes
//!    the remaining problem consistent, which is what lets row projections
//!    approach the least-squares point instead of orbiting it. The stage
//!    starts from the warm-start residual, so a good warm start makes it
//!    nearly free.
//! 2. **Row stage** — relaxed row projections against the deflated
//!    right-hand side.
//!
//! Raw sweeps of either kind contract slowly on ill-conditioned systems —
//! the per-sweep factor degrades with the *squared* condition number — so
//! both stages pass their iterates through a deterministic Anderson-type
//! extrapolation ([`Accel`]): a window of recent sweep outputs is combined
//! through a small least-squares fit on sweep differences, which recovers
//! Krylov-like convergence (roughly one sweep per independent direction)
//! while the underlying operator stays a pure projection sweep. The
//! extrapolation needs the sweep operator to stay fixed while a history
//! accumulates, so under randomized ordering a fresh seeded permutation is
//! drawn whenever the history restarts, not on every sweep. A best-iterate
//! guard tracks the true residual and guarantees the returned solution is
//! never worse than the warm start — the trainer's monotone error curve
//! leans on that.

use crate::error::{Error, Result};
use crate::linsys::LinearSystem;
use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Order in which rows (and columns, in the deflation stage) are visited
/// within one sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RowOrder {
    /// Ascending index order every sweep.
    Cyclic,
    /// Visit order is a random permutation drawn from a stream seeded by
    /// `ProjectionConfig::seed`; deterministic for a given seed. The
    /// permutation refreshes whenever the extrapolation history restarts
    /// (the extrapolation requires a fixed sweep operator in between).
    SeededRandomPermutationPerSweep,
}

/// Configuration of the projection solver.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProjectionConfig {
    /// Total sweep budget (deflation passes + row passes).
    pub max_sweeps: usize,
    /// Projection relaxation factor, in (0, 2].
    pub relaxation: f64,
    pub row_order: RowOrder,
    /// Stop once sweeps stop improving the tracked residual norm by at
    /// least this much (scaled by the right-hand side, with a short
    /// patience window since extrapolated iterates plateau briefly before
    /// dropping).
    pub tol_residual_delta: f64,
    /// Seed for the randomized visit order.
    pub seed: u64,
}

impl Default for ProjectionConfig {
    fn default() -> Self {
        ProjectionConfig {
            max_sweeps: 500,
            relaxation: 1.0,
            row_order: RowOrder::SeededRandomPermutationPerSweep,
            tol_residual_delta: 1e-12,
            seed: 0,
        }
    }
}

impl ProjectionConfig {
    /// Budget suited to the many warm-started re-solves inside a line
    /// search.
    pub fn for_line_search() -> Self {
        ProjectionConfig {
            max_sweeps: 100,
            ..ProjectionConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_sweeps == 0 {
            return Err(Error::InvalidConfig("max_sweeps must be >= 1".into()));
        }
        if !(self.relaxation > 0.0 && self.relaxation <= 2.0) {
            return Err(Error::InvalidConfig(format!(
                "relaxation must lie in (0, 2], got {}",
                self.relaxation
            )));
        }
        if !(self.tol_residual_delta >= 0.0 && self.tol_residual_delta.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "tol_residual_delta must be finite and >= 0, got {}",
                self.tol_residual_delta
            )));
        }
        Ok(())
    }
}

/// Outcome of a projection solve.
#[derive(Debug, Clone)]
pub struct SolveReport {
    pub x: DVector<f64>,
    /// Full passes actually performed (deflation + row).
    pub sweeps_used: usize,
    /// True residual norm ‖rhs − A·x‖ of the returned solution.
    pub final_residual_norm: f64,
    /// Whether the iteration stopped at its tolerance rather than running
    /// out of budget.
    pub converged: bool,
}

/// Cap on the sweep-subspace window accumulated between restarts.
const KRYLOV_WINDOW: usize = 64;

#[inline]
fn givens(a: f64, b: f64) -> (f64, f64) {
    if b == 0.0 {
        (1.0, 0.0)
    } else {
        let r = a.hypot(b);
        (a / r, b / r)
    }
}

/// One restarted cycle of sweep-subspace extrapolation.
///
/// The sweep is an affine fixed-point map `S(v) = G·v + c`; the cycle runs
/// a Krylov iteration (GMRES-type, Arnoldi basis with Givens-rotated
/// Hessenberg) on the equation `(I − G)·x = c`, touching the system only
/// through sweep applications: the linear part is extracted as
/// `G·q = S(x0 + q) − S(x0)`, one sweep per subspace direction. Returns
/// `(x, sweeps_spent, fixed_point_residual_estimate, reached_tol)`; the
/// returned x minimizes the fixed-point residual over the accumulated
/// subspace, so the estimate never exceeds the starting one.
fn krylov_cycle<F: FnMut(&DVector<f64>) -> DVector<f64>>(
    mut sweep: F,
    x0: &DVector<f64>,
    budget: usize,
    tol: f64,
) -> (DVector<f64>, usize, f64, bool) {
    if budget == 0 {
        return (x0.clone(), 0, f64::INFINITY, false);
    }
    let mut spent = 0usize;
    let sx0 = sweep(x0);
    spent += 1;
    let r0 = &sx0 - x0;
    let beta = r0.norm();
    if beta <= tol || !beta.is_finite() {
        return (x0.clone(), spent, beta, beta <= tol);
    }
    let width = KRYLOV_WINDOW.min(budget - spent).min(x0.len());
    if width == 0 {
        return (x0.clone(), spent, beta, false);
    }
    let mut q: Vec<DVector<f64>> = vec![&r0 / beta];
    // Rotated Hessenberg columns (upper-triangular part only).
    let mut rcols: Vec<Vec<f64>> = Vec::new();
    let mut rotations: Vec<(f64, f64)> = Vec::new();
    let mut g = vec![beta];
    let mut est = beta;
    let mut reached = false;
    for j in 0..width {
        let arg = x0 + &q[j];
        let sq = sweep(&arg);
        spent += 1;
        // (I − G)·q_j with G·q_j = S(x0 + q_j) − S(x0).
        let mut v = &q[j] - (&sq - &sx0);
        // Two-pass modified Gram-Schmidt keeps the basis orthonormal.
        let mut h = vec![0.0; j + 2];
        for _ in 0..2 {
            for (i, qi) in q.iter().enumerate() {
                let p = qi.dot(&v);
                h[i] += p;
                v.axpy(-p, qi, 1.0);
            }
        }
        h[j + 1] = v.norm();
        let subdiag = h[j + 1];
        for (i, &(c, s)) in rotations.iter().enumerate() {
            let t = c * h[i] + s * h[i + 1];
            h[i + 1] = -s * h[i] + c * h[i + 1];
            h[i] = t;
        }
        let (c, s) = givens(h[j], h[j + 1]);
        h[j] = c * h[j] + s * h[j + 1];
        rotations.push((c, s));
        let gj = g[j];
        g[j] = c * gj;
        g.push(-s * gj);
        est = g[j + 1].abs();
        rcols.push(h[..=j].to_vec());
        if subdiag <= 1e-14 * beta {
            // The subspace became invariant: the minimizer inside it is as
            // far as this operator can go.
            reached = true;
            break;
        }
        q.push(v / subdiag);
        if est <= tol {
            reached = true;
            break;
        }
        if spent >= budget {
            break;
        }
    }
    let cols = rcols.len();
    let mut y = g[..cols].to_vec();
    for i in (0..cols).rev() {
        for jj in i + 1..cols {
            y[i] -= rcols[jj][i] * y[jj];
        }
        y[i] = if rcols[i][i] != 0.0 { y[i] / rcols[i][i] } else { 0.0 };
    }
    let mut x = x0.clone();
    for (i, yi) in y.iter().enumerate() {
        x.axpy(*yi, &q[i], 1.0);
    }
    if x.iter().all(|t| t.is_finite()) {
        (x, spent, est, reached)
    } else {
        (x0.clone(), spent, beta, false)
    }
}

/// Four-lane accumulation dot product: deterministic fixed summation tree,
/// fast enough for the sweep inner loops.
#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let mut chunks_a = a.chunks_exact(4);
    let mut chunks_b = b.chunks_exact(4);
    for (ca, cb) in (&mut chunks_a).zip(&mut chunks_b) {
        acc[0] += ca[0] * cb[0];
        acc[1] += ca[1] * cb[1];
        acc[2] += ca[2] * cb[2];
        acc[3] += ca[3] * cb[3];
    }
    let mut tail = 0.0;
    for (x, y) in chunks_a.remainder().iter().zip(chunks_b.remainder()) {
        tail += x * y;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

#[inline]
fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

/// Column slice `j` of a column-major matrix stored in `data` with `nrows`
/// rows.
#[inline]
fn col(data: &[f64], nrows: usize, j: usize) -> &[f64] {
    &data[j * nrows..(j + 1) * nrows]
}

/// The compacted sweep state: matrix storage without zero rows/columns,
/// visit permutations, and norms.
struct Sweeper {
    /// A, column-major (columns contiguous).
    a_data: Vec<f64>,
    /// Aᵀ, column-major — i.e. the rows of A, each contiguous.
    at_data: Vec<f64>,
    nrows: usize,
    ncols: usize,
    row_norm2: Vec<f64>,
    col_norm2: Vec<f64>,
    relaxation: f64,
    randomize: bool,
    rng: ChaCha8Rng,
    row_perm: Vec<usize>,
    col_perm: Vec<usize>,
}

impl Sweeper {
    fn new(a: DMatrix<f64>, relaxation: f64, order: RowOrder, seed: u64) -> Self {
        let (m, k) = (a.nrows(), a.ncols());
        let at = a.transpose();
        let a_data = a.as_slice().to_vec();
        let at_data = at.as_slice().to_vec();
        let col_norm2: Vec<f64> = (0..k).map(|j| {
            let c = col(&a_data, m, j);
            dot(c, c)
        }).collect();
        let row_norm2: Vec<f64> = (0..m).map(|i| {
            let r = col(&at_data, k, i);
            dot(r, r)
        }).collect();
        let mut s = Sweeper {
            a_data,
            at_data,
            nrows: m,
            ncols: k,
            row_norm2,
            col_norm2,
            relaxation,
            randomize: order == RowOrder::SeededRandomPermutationPerSweep,
            rng: ChaCha8Rng::seed_from_u64(seed),
            row_perm: (0..m).collect(),
            col_perm: (0..k).collect(),
        };
        s.reshuffle();
        s
    }

    /// Draws fresh visit permutations (no-op under cyclic order).
    fn reshuffle(&mut self) {
        if self.randomize {
            self.row_perm.shuffle(&mut self.rng);
            self.col_perm.shuffle(&mut self.rng);
        }
    }

    /// One column-projection pass over `z`.
    fn col_pass(&self, z: &mut DVector<f64>) {
        let omega = self.relaxation;
        let zs = z.as_mut_slice();
        for &j in &self.col_perm {
            let cj = col(&self.a_data, self.nrows, j);
            let d = dot(cj, zs);
            axpy(zs, -omega * d / self.col_norm2[j], cj);
        }
    }

    /// One row-projection pass over `x` against `rhs`.
    fn row_pass(&self, x: &mut DVector<f64>, rhs: &DVector<f64>) {
        let omega = self.relaxation;
        let xs = x.as_mut_slice();
        for &i in &self.row_perm {
            let ri = col(&self.at_data, self.ncols, i);
            let d = dot(ri, xs);
            let upd = omega * (rhs[i] - d) / self.row_norm2[i];
            axpy(xs, upd, ri);
        }
    }

    /// ‖rhs − A·x‖ with a fixed accumulation order.
    fn residual_norm(&self, x: &DVector<f64>, rhs: &DVector<f64>) -> f64 {
        let mut acc = 0.0;
        for i in 0..self.nrows {
            let ri = col(&self.at_data, self.ncols, i);
            let r = rhs[i] - dot(ri, x.as_slice());
            acc += r * r;
        }
        acc.sqrt()
    }
}

fn check_finite_system(sys: &LinearSystem) -> Result<()> {
    if sys.rhs.len() != sys.matrix.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "system has {} rows but rhs has {} entries",
            sys.matrix.nrows(),
            sys.rhs.len()
        )));
    }
    if !sys.matrix.iter().all(|v| v.is_finite()) || !sys.rhs.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite("linear system entries".into()));
    }
    Ok(())
}

/// Approximate least-squares solve by accelerated projection sweeps.
///
/// Deterministic: identical `(sys, cfg, warm_start)` always produce a
/// bit-identical report. The returned solution's true residual never
/// exceeds the warm start's. Zero rows and zero columns are dropped before
/// iterating, so inserting them never changes the returned solution
/// entries.
pub fn solve_projection(
    sys: &LinearSystem,
    cfg: &ProjectionConfig,
    warm_start: Option<&DVector<f64>>,
) -> Result<SolveReport> {
    cfg.validate()?;
    check_finite_system(sys)?;
    let (m, k) = (sys.matrix.nrows(), sys.matrix.ncols());
    if let Some(w) = warm_start {
        if w.len() != k {
            return Err(Error::DimensionMismatch(format!(
                "warm start has {} entries, system has {k} columns",
                w.len()
            )));
        }
        if !w.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("warm start".into()));
        }
    }
    let x_full = warm_start.cloned().unwrap_or_else(|| DVector::zeros(k));

    // Degenerate shapes first.
    if m == 0 {
        return Ok(SolveReport {
            x: x_full,
            sweeps_used: 0,
            final_residual_norm: 0.0,
            converged: true,
        });
    }
    if k == 0 {
        return Ok(SolveReport {
            x: x_full,
            sweeps_used: 0,
            final_residual_norm: sys.rhs.norm(),
            converged: true,
        });
    }

    // Compact away zero rows and columns: they contribute nothing to the
    // iteration, and working on compacted storage makes the result exactly
    // independent of their presence. Classification by computed norm also
    // shields the projections from dividing by an underflowed norm.
    let nz_rows: Vec<usize> = (0..m)
        .filter(|&i| sys.matrix.row(i).iter().any(|v| v * v > 0.0))
        .collect();
    let nz_cols: Vec<usize> = (0..k)
        .filter(|&j| sys.matrix.column(j).iter().any(|v| v * v > 0.0))
        .collect();
    // Right-hand-side weight on dropped rows: a constant, unreachable
    // residual floor.
    let dropped_rhs_sq: f64 = (0..m)
        .filter(|i| !nz_rows.contains(i))
        .map(|i| sys.rhs[i] * sys.rhs[i])
        .sum();

    if nz_rows.is_empty() {
        // All-zero matrix: every x gives the same residual; hand the warm
        // start (or zero) back and report no convergence.
        return Ok(SolveReport {
            final_residual_norm: sys.rhs.norm(),
            x: x_full,
            sweeps_used: 0,
            converged: false,
        });
    }

    let (m_c, k_c) = (nz_rows.len(), nz_cols.len());
    let a_c = DMatrix::from_fn(m_c, k_c, |i, j| sys.matrix[(nz_rows[i], nz_cols[j])]);
    let b_c = DVector::from_fn(m_c, |i, _| sys.rhs[nz_rows[i]]);
    let x0_c = DVector::from_fn(k_c, |t, _| x_full[nz_cols[t]]);

    let sweeper = &mut Sweeper::new(a_c, cfg.relaxation, cfg.row_order, cfg.seed);
    let core = solve_core(sweeper, &b_c, x0_c, cfg);

    let mut x = x_full;
    for (t, &j) in nz_cols.iter().enumerate() {
        x[j] = core.x[t];
    }
    Ok(SolveReport {
        x,
        sweeps_used: core.sweeps_used,
        final_residual_norm: (core.final_residual_norm * core.final_residual_norm
            + dropped_rhs_sq)
            .sqrt(),
        converged: core.converged,
    })
}

/// The two-stage iteration on compacted storage.
fn solve_core(
    sweeper: &mut Sweeper,
    b: &DVector<f64>,
    x0: DVector<f64>,
    cfg: &ProjectionConfig,
) -> SolveReport {
    let tol = cfg.tol_residual_delta * (1.0 + b.norm());
    let r0 = {
        let mut r = b.clone();
        for (i, ri) in r.iter_mut().enumerate() {
            *ri -= dot(
                col(&sweeper.at_data, sweeper.ncols, i),
                x0.as_slice(),
            );
        }
        r
    };
    let res0 = r0.norm();
    let mut sweeps_used = 0usize;

    // Warm start already at the tolerance floor: nothing to do.
    if res0 <= tol {
        return SolveReport {
            x: x0,
            sweeps_used: 0,
            final_residual_norm: res0,
            converged: true,
        };
    }

    // Stage 1: deflate the unreachable right-hand-side component. The
    // auxiliary vector starts at the warm-start residual (which shares its
    // unreachable component with the rhs), so warm solves need few cycles.
    // The column sweep is linear with the orthogonal complement of the
    // column space as its fixed points, so the extrapolated iterate
    // converges to exactly the component of the start vector that no
    // solution can reach.
    let stage1_cap = cfg.max_sweeps / 2;
    let mut z = r0;
    let mut prev_est = f64::INFINITY;
    while sweeps_used < stage1_cap {
        let (zc, spent, est, reached) = krylov_cycle(
            |v| {
                let mut t = v.clone();
                sweeper.col_pass(&mut t);
                t
            },
            &z,
            stage1_cap - sweeps_used,
            tol,
        );
        sweeps_used += spent;
        z = zc;
        log::trace!("deflation cycle: sweeps {sweeps_used}, estimate {est:e}");
        if reached || prev_est - est < tol {
            break;
        }
        prev_est = est;
        sweeper.reshuffle();
    }
    let deflated_rhs = b - &z;

    // Stage 2: row projections toward the deflated system's solution,
    // guarded by the true residual against the original rhs.
    let mut x = x0;
    let mut best_x = x.clone();
    let mut best_res = res0;
    let mut converged = false;
    sweeper.reshuffle();
    while sweeps_used < cfg.max_sweeps {
        let cycle_start_best = best_res;
        let (xc, spent, est, reached) = krylov_cycle(
            |v| {
                let mut t = v.clone();
                sweeper.row_pass(&mut t, &deflated_rhs);
                t
            },
            &x,
            cfg.max_sweeps - sweeps_used,
            tol,
        );
        sweeps_used += spent;
        let res = sweeper.residual_norm(&xc, b);
        if res < best_res {
            best_res = res;
            best_x.clone_from(&xc);
        }
        log::trace!(
            "row cycle: sweeps {sweeps_used}, residual {res:e}, best {best_res:e}, estimate {est:e}"
        );
        if reached {
            converged = true;
            break;
        }
        if cycle_start_best - best_res < tol {
            // A whole restart cycle without measurable progress.
            converged = true;
            break;
        }
        x = xc;
        sweeper.reshuffle();
    }

    SolveReport {
        x: best_x,
        sweeps_used,
        final_residual_norm: best_res,
        converged,
    }
}

/// Exact dense least-squares solve by singular value decomposition, used as
/// the independent reference for `solve_projection`. Returns the
/// minimum-norm solution when the system is rank deficient (singular values
/// below a machine-scaled cutoff are dropped).
pub fn solve_reference(sys: &LinearSystem) -> Result<DVector<f64>> {
    check_finite_system(sys)?;
    let (m, k) = (sys.matrix.nrows(), sys.matrix.ncols());
    if k == 0 {
        return Ok(DVector::zeros(0));
    }
    if m == 0 {
        return Ok(DVector::zeros(k));
    }
    let svd = sys.matrix.clone().svd(true, true);
    let sigma_max = svd.singular_values.max();
    let cutoff = sigma_max * (m.max(k) as f64) * f64::EPSILON;
    let x = svd
        .solve(&sys.rhs, cutoff)
        .map_err(|e| Error::SolverFailure(format!("reference solve failed: {e}")))?;
    Ok(DVector::from_column_slice(x.as_slice()))
}
