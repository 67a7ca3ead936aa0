//! Randomized multivariate matrix pencil reconstruction.
//!
//! From samples `f(k)`, `k ∈ {−n,…,n+1}^d`, the pipeline builds the
//! multilevel Toeplitz matrix `T = (f(k−l))` and its shifts
//! `T_ℓ = (f(k−l+e_ℓ))` over `I_n = {0,…,n}^d`, truncates the SVD of `T` to
//! its numerical rank `M`, and forms `S_ℓ = U*·T_ℓ·V·Σ⁻¹`. The `S_ℓ` share an
//! eigenbasis whose eigenvalues are the node coordinates `z_{j,ℓ}`. A single
//! random combination `C_μ = Σ conj(μ_ℓ)·S_ℓ` has simple spectrum almost
//! surely, so its eigenvectors diagonalize every `S_ℓ` at once and keep the
//! coordinates of each node paired. Locations follow from the phase of the
//! nodes, coefficients from a least-squares fit against all samples.
//!
//! With `A_{j,k} = z_j^k` and `D = diag(c)`, the exact-data factorization
//! reads `T = Aᵀ·D·conj(A)`; under this convention the eigenvalues of `S_ℓ`
//! are `z_{j,ℓ}` themselves, not their conjugates.

mod eig;
mod grid;
mod svd;

use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result, Stage, StageExt};
use crate::model::{wrap_unit, ParameterSet, SampleTable};
use crate::randsphere::draw_complex_sphere;

pub use eig::{eig_general, Eigen};
pub use grid::GridOrder;
pub use svd::{jacobi_svd, Svd};

pub type CMatrix = DMatrix<Complex64>;

/// Absolute floor on `σ_1` below which the data is treated as zero.
pub const ZERO_DATA_FLOOR: f64 = 1e-14;
/// Eigenvector condition number above which a warning is attached.
pub const COND_WARN: f64 = 1e8;
/// Eigenvector condition number treated as numerical singularity.
pub const COND_FAIL: f64 = 1e14;

/// Knobs for [`reconstruct`].
#[derive(Debug, Clone, PartialEq)]
pub struct ReconConfig {
    /// Relative singular-value threshold for rank detection.
    pub rank_tol: f64,
    /// Use this model order instead of detecting it.
    pub m_override: Option<usize>,
    /// Relative eigenvalue-gap threshold for accepting a random direction.
    pub gap_tol: f64,
    pub max_retries: usize,
    pub seed: u64,
}

impl Default for ReconConfig {
    fn default() -> Self {
        Self {
            rank_tol: 1e-6,
            m_override: None,
            gap_tol: 1e-6,
            max_retries: 8,
            seed: 0,
        }
    }
}

impl ReconConfig {
    /// Defaults for noisy samples and real images (`rank_tol = 1e-2`).
    pub fn noisy() -> Self {
        Self {
            rank_tol: 1e-2,
            ..Self::default()
        }
    }
}

/// Assembles `T = (f(k−l))` and `T_ℓ = (f(k−l+e_ℓ))`, `k,l ∈ I_n`.
pub fn assemble_pencil_matrices(samples: &SampleTable, order: GridOrder) -> Result<(CMatrix, Vec<CMatrix>)> {
    let d = order.dim();
    if samples.dim() != d {
        return Err(Error::InvalidInput(format!(
            "sample table has dimension {}, grid order has {d}",
            samples.dim()
        )));
    }
    let idx = order.indices();
    let size = idx.len();
    let fill = |shift: Option<usize>| -> Result<CMatrix> {
        let mut m = CMatrix::zeros(size, size);
        let mut key = vec![0i64; d];
        for (r, k) in idx.iter().enumerate() {
            for (c, l) in idx.iter().enumerate() {
                for pos in 0..d {
                    key[pos] = k[pos] - l[pos];
                }
                if let Some(s) = shift {
                    key[s] += 1;
                }
                m[(r, c)] = samples.require(&key)?;
            }
        }
        Ok(m)
    };
    let t = fill(None)?;
    let shifts = (0..d).map(|l| fill(Some(l))).collect::<Result<Vec<_>>>()?;
    Ok((t, shifts))
}

/// Multivariate Vandermonde matrix `A_{j,k} = Π_ℓ z_{j,ℓ}^{k_ℓ}`, `M × N`.
pub fn vandermonde(nodes: &[Vec<Complex64>], order: GridOrder) -> CMatrix {
    let idx = order.indices();
    CMatrix::from_fn(nodes.len(), idx.len(), |j, c| {
        nodes[j].iter().zip(&idx[c]).map(|(z, &k)| z.powi(k as i32)).product()
    })
}

/// Rank-truncated SVD `T ≈ U·Σ·V*`.
#[derive(Debug, Clone)]
pub struct ReducedSvd {
    pub u: CMatrix,
    pub sigma: Vec<f64>,
    pub v: CMatrix,
    pub rank: usize,
    /// Full spectrum of `T`, nonincreasing.
    pub singular_values: Vec<f64>,
    /// Set when detection found no drop at all (`M = N`), which usually
    /// means `n` is too small for the number of sources.
    pub no_drop: bool,
}

pub fn reduced_svd_rank(t: &CMatrix, rank_tol: f64, m_override: Option<usize>) -> Result<ReducedSvd> {
    if !t.is_square() {
        return Err(Error::InvalidInput(format!(
            "T must be square, got {}x{}",
            t.nrows(),
            t.ncols()
        )));
    }
    if !(rank_tol > 0.0 && rank_tol < 1.0) {
        return Err(Error::InvalidInput(format!(
            "rank_tol must lie in (0,1), got {rank_tol}"
        )));
    }
    let size = t.nrows();
    if t.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidInput("T has non-finite entries".into()));
    }
    let svd = jacobi_svd(t);
    let singular_values = svd.sigma;

    let sigma_1 = singular_values.first().copied().unwrap_or(0.0);
    if sigma_1 < ZERO_DATA_FLOOR {
        return Err(Error::ZeroData(sigma_1));
    }
    let rank = match m_override {
        Some(0) => return Err(Error::InvalidInput("M override must be >= 1".into())),
        Some(m) if m > size => {
            return Err(Error::InvalidInput(format!(
                "M override {m} exceeds matrix size N = {size}"
            )))
        }
        Some(m) => m,
        None => singular_values
            .iter()
            .rposition(|&s| s >= rank_tol * sigma_1)
            .map_or(1, |i| i + 1),
    };
    if singular_values[rank - 1] <= 0.0 {
        return Err(Error::InvalidInput(format!(
            "singular value {rank} vanishes; cannot truncate to rank {rank}"
        )));
    }
    let u = svd.u.columns(0, rank).into_owned();
    let v = svd.v.columns(0, rank).into_owned();
    Ok(ReducedSvd {
        u,
        sigma: singular_values[..rank].to_vec(),
        v,
        rank,
        no_drop: m_override.is_none() && rank == size,
        singular_values,
    })
}

/// `S_ℓ = U*·T_ℓ·V·Σ⁻¹` for every shift.
pub fn build_pencil(svd: &ReducedSvd, shifts: &[CMatrix]) -> Vec<CMatrix> {
    let uh = svd.u.adjoint();
    shifts
        .iter()
        .map(|tl| {
            let mut s = &uh * tl * &svd.v;
            for (j, sigma) in svd.sigma.iter().enumerate() {
                s.column_mut(j).unscale_mut(*sigma);
            }
            s
        })
        .collect()
}

/// `C_μ = Σ_ℓ conj(μ_ℓ)·S_ℓ`.
pub fn combine(pencil: &[CMatrix], mu: &[Complex64]) -> CMatrix {
    let m = pencil.first().map_or(0, |s| s.nrows());
    pencil
        .iter()
        .zip(mu)
        .fold(CMatrix::zeros(m, m), |acc, (s, w)| acc + s * w.conj())
}

/// Smallest pairwise distance within `values`; `None` for fewer than two.
pub fn min_pairwise_gap(values: &[Complex64]) -> Option<f64> {
    let mut best: Option<f64> = None;
    for i in 0..values.len() {
        for j in 0..i {
            let g = (values[i] - values[j]).norm();
            best = Some(best.map_or(g, |b| b.min(g)));
        }
    }
    best
}

/// The random direction that was accepted together with the
/// eigendecomposition of its combination.
#[derive(Debug, Clone)]
pub struct RandomDirection {
    pub mu: Vec<Complex64>,
    pub lambdas: Vec<Complex64>,
    pub w: CMatrix,
    /// `min_{i≠j} |λ_i − λ_j|`; `None` when `M = 1`.
    pub min_gap: Option<f64>,
    /// Number of redraws before acceptance.
    pub retries: usize,
}

/// Draws `μ` uniformly from the complex unit sphere, diagonalizes `C_μ`, and
/// redraws while the spectrum is clustered below
/// `gap_tol·(max|λ| + 1)`, at most `max_retries` times.
pub fn sample_direction_and_combine(
    pencil: &[CMatrix],
    seed: u64,
    gap_tol: f64,
    max_retries: usize,
) -> Result<RandomDirection> {
    let d = pencil.len();
    if d == 0 {
        return Err(Error::InvalidInput("pencil is empty (d = 0)".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best_rel = 0.0f64;
    for attempt in 0..=max_retries {
        let mu = draw_complex_sphere(&mut rng, d);
        let c = combine(pencil, &mu);
        let eig = eig_general(&c)?;
        let gap = min_pairwise_gap(&eig.values);
        let scale = eig.values.iter().map(|v| v.norm()).fold(0.0, f64::max) + 1.0;
        let accepted = gap.is_none_or(|g| g >= gap_tol * scale);
        if accepted {
            return Ok(RandomDirection {
                mu,
                lambdas: eig.values,
                w: eig.vectors,
                min_gap: gap,
                retries: attempt,
            });
        }
        best_rel = best_rel.max(gap.unwrap_or(0.0) / scale);
    }
    Err(Error::EigenvalueClustering {
        best_gap: best_rel,
        attempts: max_retries + 1,
    })
}

/// Nodes extracted from a joint diagonalization.
#[derive(Debug, Clone)]
pub struct Diagonalized {
    /// `M` rows of `d` node coordinates.
    pub nodes: Vec<Vec<Complex64>>,
    /// Largest off-diagonal magnitude of `W⁻¹·S_ℓ·W`, relative to its norm.
    pub offdiag_max: f64,
    pub cond_w: f64,
}

/// Applies `W⁻¹·S_ℓ·W` for every `ℓ` and reads node coordinates off the
/// diagonals.
pub fn simultaneous_diagonalize(w: &CMatrix, pencil: &[CMatrix]) -> Result<Diagonalized> {
    let m = w.nrows();
    let sv = jacobi_svd(w).sigma;
    let smax = sv[0];
    let smin = sv[m - 1];
    let cond_w = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if !(cond_w < COND_FAIL) {
        return Err(Error::SingularEigenvectors(cond_w));
    }
    let lu = w.clone().lu();
    let mut nodes = vec![vec![Complex64::new(0.0, 0.0); pencil.len()]; m];
    let mut offdiag_max = 0.0f64;
    for (l, s) in pencil.iter().enumerate() {
        let y = lu.solve(&(s * w)).ok_or(Error::SingularEigenvectors(cond_w))?;
        let ynorm = y.norm();
        for i in 0..m {
            nodes[i][l] = y[(i, i)];
            for j in 0..m {
                if i != j && ynorm > 0.0 {
                    offdiag_max = offdiag_max.max(y[(i, j)].norm() / ynorm);
                }
            }
        }
    }
    Ok(Diagonalized {
        nodes,
        offdiag_max,
        cond_w,
    })
}

/// Locations `t = −arg(z)/(2π)` wrapped into `[0,1)`, `arg ∈ (−π, π]`.
///
/// Only the phase of each node matters; an off-torus modulus (from noise)
/// does not move the recovered location.
pub fn principal_log(nodes: &[Vec<Complex64>]) -> Result<Vec<Vec<f64>>> {
    nodes
        .iter()
        .enumerate()
        .map(|(row, z)| {
            z.iter()
                .enumerate()
                .map(|(col, v)| {
                    if v.norm() == 0.0 || !v.is_finite() {
                        return Err(Error::ZeroNode { row, col });
                    }
                    let unit = v / v.norm();
                    Ok(wrap_unit(-unit.arg() / (2.0 * std::f64::consts::PI)))
                })
                .collect()
        })
        .collect()
}

/// Relative threshold on `|R_ii|` of the QR factor below which the
/// least-squares matrix is declared rank deficient.
const LSQ_RANK_TOL: f64 = 1e-12;

/// Least-squares coefficients for known locations against every sample in
/// the table, via Householder QR. Returns `(c, ‖G·c − f‖₂)`.
pub fn solve_coefficients(locations: &[Vec<f64>], samples: &SampleTable) -> Result<(Vec<Complex64>, f64)> {
    let m = locations.len();
    let rows = samples.len();
    if m == 0 {
        return Err(Error::InvalidInput("no locations to fit".into()));
    }
    if rows < m {
        return Err(Error::InvalidInput(format!(
            "{rows} samples cannot determine {m} coefficients"
        )));
    }
    let keys: Vec<&Vec<i64>> = samples.iter().map(|(k, _)| k).collect();
    let g = CMatrix::from_fn(rows, m, |r, j| {
        let phase: f64 = locations[j].iter().zip(keys[r]).map(|(t, &k)| t * k as f64).sum();
        Complex64::from_polar(1.0, -2.0 * std::f64::consts::PI * phase)
    });
    let f = DVector::from_iterator(rows, samples.iter().map(|(_, v)| *v));

    let qr = g.clone().qr();
    let r = qr.r();
    let diag: Vec<f64> = (0..m).map(|i| r[(i, i)].norm()).collect();
    let rmax = diag.iter().copied().fold(0.0, f64::max);
    let rmin = diag.iter().copied().fold(f64::INFINITY, f64::min);
    if !(rmin > LSQ_RANK_TOL * rmax) {
        return Err(Error::CoincidentNodes(if rmax > 0.0 { rmin / rmax } else { 0.0 }));
    }
    let rhs = qr.q().adjoint() * &f;
    let c = r
        .solve_upper_triangular(&rhs)
        .ok_or(Error::CoincidentNodes(rmin / rmax))?;
    let residual = (&g * &c - &f).norm();
    Ok((c.iter().copied().collect(), residual))
}

/// Output of a full reconstruction.
#[derive(Debug, Clone)]
pub struct ReconstructionResult {
    /// Recovered model, in the order induced by the eigenvalue sort.
    pub params: ParameterSet,
    pub residual: f64,
    pub singular_values: Vec<f64>,
    pub m_detected: usize,
    pub mu_used: Vec<Complex64>,
    pub min_gap: Option<f64>,
    pub offdiag_max: f64,
    pub retries: usize,
    pub cond_w: f64,
    /// Largest `| |z| − 1 |` over recovered node coordinates.
    pub max_modulus_deviation: f64,
    /// Wall time spent from the SVD to the coefficient solve.
    pub solve_time: Duration,
    pub warnings: Vec<String>,
}

/// Runs the full pipeline on a complete sample table of order `n`
/// (inferred from the table).
pub fn reconstruct(samples: &SampleTable, config: &ReconConfig) -> Result<ReconstructionResult> {
    let order = GridOrder::new(samples.dim(), samples.order());
    let (t, shifts) = assemble_pencil_matrices(samples, order).stage(Stage::Assemble)?;

    let started = Instant::now();
    let svd = reduced_svd_rank(&t, config.rank_tol, config.m_override).stage(Stage::Svd)?;
    let mut warnings = Vec::new();
    if svd.no_drop {
        warnings.push(format!(
            "no singular-value drop: detected M = N = {}; the sampling order n may be too small",
            svd.rank
        ));
    }
    let pencil = build_pencil(&svd, &shifts);
    let dir = sample_direction_and_combine(&pencil, config.seed, config.gap_tol, config.max_retries)
        .stage(Stage::Direction)?;
    let diag = simultaneous_diagonalize(&dir.w, &pencil).stage(Stage::Diagonalize)?;
    if diag.cond_w > COND_WARN {
        warnings.push(format!(
            "eigenvector matrix is ill-conditioned (cond {:.3e})",
            diag.cond_w
        ));
    }
    let max_modulus_deviation = diag
        .nodes
        .iter()
        .flatten()
        .map(|z| (z.norm() - 1.0).abs())
        .fold(0.0, f64::max);
    let locations = principal_log(&diag.nodes).stage(Stage::Log)?;
    if has_duplicates(&locations) {
        warnings.push("recovered locations are not pairwise distinct".into());
    }
    let (coefficients, residual) = solve_coefficients(&locations, samples).stage(Stage::Coefficients)?;
    let solve_time = started.elapsed();
    let params = ParameterSet::new(locations, coefficients).stage(Stage::Coefficients)?;

    for w in &warnings {
        log::warn!("{w}");
    }
    Ok(ReconstructionResult {
        params,
        residual,
        singular_values: svd.singular_values,
        m_detected: svd.rank,
        mu_used: dir.mu,
        min_gap: dir.min_gap,
        offdiag_max: diag.offdiag_max,
        retries: dir.retries,
        cond_w: diag.cond_w,
        max_modulus_deviation,
        solve_time,
        warnings,
    })
}

fn has_duplicates(locations: &[Vec<f64>]) -> bool {
    (0..locations.len()).any(|i| (0..i).any(|j| locations[i] == locations[j]))
}

/// Matches recovered locations to true ones (bijectively, by minimizing the
/// largest torus distance) and returns that largest distance. `None` if the
/// counts differ.
pub fn max_location_error(truth: &ParameterSet, recovered: &ParameterSet) -> Option<f64> {
    let m = truth.order();
    if recovered.order() != m || truth.dim() != recovered.dim() {
        return None;
    }
    let dist: Vec<Vec<f64>> = truth
        .locations()
        .iter()
        .map(|a| recovered.locations().iter().map(|b| torus_distance(a, b)).collect())
        .collect();
    Some(bottleneck_assignment(&dist))
}

/// Euclidean distance on the flat torus `ℝ^d / ℤ^d`.
pub fn torus_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let diff = (x - y).rem_euclid(1.0);
            let wrapped = diff.min(1.0 - diff);
            wrapped * wrapped
        })
        .sum::<f64>()
        .sqrt()
}

/// Minimal achievable maximum cost over perfect matchings of a square cost
/// matrix: binary search on the threshold plus bipartite matching.
fn bottleneck_assignment(cost: &[Vec<f64>]) -> f64 {
    let m = cost.len();
    let mut candidates: Vec<f64> = cost.iter().flatten().copied().collect();
    candidates.sort_by(f64::total_cmp);
    let feasible = |limit: f64| -> bool {
        let mut owner: Vec<Option<usize>> = vec![None; m];
        (0..m).all(|row| {
            let mut seen = vec![false; m];
            augment(row, limit, cost, &mut seen, &mut owner)
        })
    };
    let (mut lo, mut hi) = (0usize, candidates.len() - 1);
    while lo < hi {
        let mid = (lo + hi) / 2;
        if feasible(candidates[mid]) {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    candidates[lo]
}

fn augment(row: usize, limit: f64, cost: &[Vec<f64>], seen: &mut [bool], owner: &mut [Option<usize>]) -> bool {
    for col in 0..cost.len() {
        if cost[row][col] <= limit && !seen[col] {
            seen[col] = true;
            if owner[col].is_none_or(|r| augment(r, limit, cost, seen, owner)) {
                owner[col] = Some(row);
                return true;
            }
        }
    }
    false
}
