//! Random directions on the complex unit sphere and the probability that a
//! random combination separates two nodes poorly.
//!
//! For a unit vector `y ∈ ℂ^d` and `μ` uniform on the complex sphere,
//! `|⟨y, μ⟩|²` follows Beta(1, d−1), so
//! `P(|⟨y, μ⟩| < ε) = 1 − (1 − ε²)^{d−1}` for `d ≥ 2`. The coarser event
//! `|Re⟨y, μ⟩| ≤ ε` is an equatorial band of the real sphere `S^{2d−1}` with
//! measure `I_{ε²}(1/2, d−1/2)`, which in turn is bounded by
//! `2ε / B(1/2, d−1/2) ≤ 2√(d/π)·ε`.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::model::{node_distance, ParameterSet};
use crate::pencil::{combine, eig_general, min_pairwise_gap, CMatrix};

/// One uniform draw from `{μ ∈ ℂ^d : ‖μ‖ = 1}` using `rng`.
pub fn draw_complex_sphere<R: Rng + ?Sized>(rng: &mut R, d: usize) -> Vec<Complex64> {
    loop {
        let raw: Vec<Complex64> = (0..d)
            .map(|_| Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
            .collect();
        let norm = raw.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if norm > 0.0 {
            return raw.into_iter().map(|z| z / norm).collect();
        }
    }
}

/// Seeded convenience wrapper around [`draw_complex_sphere`].
pub fn sample_complex_sphere(d: usize, seed: u64) -> Vec<Complex64> {
    draw_complex_sphere(&mut ChaCha8Rng::seed_from_u64(seed), d)
}

const BETA_EPS: f64 = 1e-16;
const BETA_MAX_ITER: usize = 10_000;

/// Regularized incomplete beta function `I_x(a, b)`.
///
/// Continued fraction (modified Lentz), evaluated on whichever side of the
/// mean converges fastest.
pub fn reg_incomplete_beta(x: f64, a: f64, b: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&x) || !(a > 0.0) || !(b > 0.0) || !a.is_finite() || !b.is_finite() {
        return Err(Error::InvalidInput(format!(
            "incomplete beta needs x in [0,1], a > 0, b > 0; got x={x}, a={a}, b={b}"
        )));
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    if x == 1.0 {
        return Ok(1.0);
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    let front = ln_front.exp();
    let value = if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_continued_fraction(x, a, b)? / a
    } else {
        1.0 - front * beta_continued_fraction(1.0 - x, b, a)? / b
    };
    Ok(value.clamp(0.0, 1.0))
}

fn beta_continued_fraction(x: f64, a: f64, b: f64) -> Result<f64> {
    let tiny = 1e-300;
    let mut c = 1.0;
    let mut d = 1.0 - (a + b) * x / (a + 1.0);
    if d.abs() < tiny {
        d = tiny;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=BETA_MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;
        let even = m * (b - m) * x / ((a + m2 - 1.0) * (a + m2));
        for coeff in [even, -(a + m) * (a + b + m) * x / ((a + m2) * (a + m2 + 1.0))] {
            d = 1.0 + coeff * d;
            if d.abs() < tiny {
                d = tiny;
            }
            c = 1.0 + coeff / c;
            if c.abs() < tiny {
                c = tiny;
            }
            d = 1.0 / d;
            h *= d * c;
        }
        if (d * c - 1.0).abs() < BETA_EPS {
            return Ok(h);
        }
    }
    Err(Error::InvalidInput(format!(
        "incomplete beta continued fraction did not converge (x={x}, a={a}, b={b})"
    )))
}

/// Complete beta function `B(a, b)`.
pub fn beta(a: f64, b: f64) -> f64 {
    (ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)).exp()
}

fn check_eps_dim(epsilon: f64, d: usize) -> Result<()> {
    if !(0.0..=1.0).contains(&epsilon) {
        return Err(Error::InvalidInput(format!("epsilon must lie in [0,1], got {epsilon}")));
    }
    if d == 0 {
        return Err(Error::InvalidInput("dimension d must be >= 1".into()));
    }
    Ok(())
}

/// Measure of the band `|Re μ₁| ≤ ε` on `S^{2d−1}`: `I_{ε²}(1/2, d − 1/2)`.
pub fn band_measure(epsilon: f64, d: usize) -> Result<f64> {
    check_eps_dim(epsilon, d)?;
    reg_incomplete_beta(epsilon * epsilon, 0.5, d as f64 - 0.5)
}

/// Closed form of [`band_measure`] as arcsine plus a finite sum:
/// `(2/π)[arcsin ε + ε Σ_{k=2}^{d} 4^{k−2}((k−2)!)² / ((2k−3)(2k−4)!) · (1−ε²)^{k−3/2}]`.
pub fn band_measure_series(epsilon: f64, d: usize) -> Result<f64> {
    check_eps_dim(epsilon, d)?;
    let one_minus = 1.0 - epsilon * epsilon;
    let mut sum = 0.0;
    // a_k = 4^{k−2}((k−2)!)²/(2k−4)!, with a_2 = 1 and
    // a_{k+1}/a_k = 4(k−1)² / ((2k−3)(2k−2)) = 2(k−1)/(2k−3).
    let mut a_k = 1.0;
    for k in 2..=d {
        if k > 2 {
            let kk = (k - 1) as f64;
            a_k *= 2.0 * (kk - 1.0) / (2.0 * kk - 3.0);
        }
        let kf = k as f64;
        sum += a_k / (2.0 * kf - 3.0) * one_minus.powf(kf - 1.5);
    }
    Ok(2.0 / PI * (epsilon.asin() + epsilon * sum))
}

/// Failure bound for a single pair: `2√(d/π)·ε`.
pub fn theorem_bound(epsilon: f64, d: usize) -> f64 {
    2.0 * (d as f64 / PI).sqrt() * epsilon
}

/// Union bound over all `C(M,2)` pairs.
pub fn union_bound(epsilon: f64, d: usize, m: usize) -> f64 {
    let pairs = (m * m.saturating_sub(1) / 2) as f64;
    pairs * theorem_bound(epsilon, d)
}

/// Intermediate bound `2ε / B(1/2, d − 1/2)`.
pub fn beta_bound(epsilon: f64, d: usize) -> f64 {
    2.0 * epsilon / beta(0.5, d as f64 - 0.5)
}

/// `P(|⟨y, μ⟩| < ε) = 1 − (1 − ε²)^{d−1}`; for `d = 1` the gap never shrinks.
pub fn exact_event_probability(epsilon: f64, d: usize) -> f64 {
    if d <= 1 {
        if epsilon > 1.0 {
            1.0
        } else {
            0.0
        }
    } else {
        1.0 - (1.0 - epsilon * epsilon).powi(d as i32 - 1)
    }
}

/// Which gap an experiment measures.
#[derive(Debug, Clone, PartialEq)]
pub enum GapTarget {
    /// One designated pair of nodes.
    Pair(Vec<Complex64>, Vec<Complex64>),
    /// The smallest normalized gap over every pair of a node set.
    AllPairs(Vec<Vec<Complex64>>),
}

impl GapTarget {
    pub fn pair_of(params: &ParameterSet, i: usize, j: usize) -> Result<Self> {
        let nodes = params.nodes();
        match (nodes.get(i), nodes.get(j)) {
            (Some(a), Some(b)) => Ok(GapTarget::Pair(a.clone(), b.clone())),
            _ => Err(Error::InvalidInput(format!("pair ({i}, {j}) out of range"))),
        }
    }

    pub fn all_pairs(params: &ParameterSet) -> Self {
        GapTarget::AllPairs(params.nodes())
    }

    fn dim(&self) -> usize {
        match self {
            GapTarget::Pair(a, _) => a.len(),
            GapTarget::AllPairs(nodes) => nodes.first().map_or(0, Vec::len),
        }
    }

    fn pair_count(&self) -> usize {
        match self {
            GapTarget::Pair(..) => 1,
            GapTarget::AllPairs(nodes) => nodes.len() * nodes.len().saturating_sub(1) / 2,
        }
    }

    /// Unit differences `(z_i − z_j)/‖z_i − z_j‖` and the norms.
    fn directions(&self) -> Result<Vec<(Vec<Complex64>, f64)>> {
        let pairs: Vec<(&Vec<Complex64>, &Vec<Complex64>)> = match self {
            GapTarget::Pair(a, b) => vec![(a, b)],
            GapTarget::AllPairs(nodes) => (0..nodes.len())
                .flat_map(|i| (0..i).map(move |j| (&nodes[i], &nodes[j])))
                .collect(),
        };
        if pairs.is_empty() {
            return Err(Error::InvalidInput("gap experiment needs at least one pair".into()));
        }
        pairs
            .into_iter()
            .map(|(a, b)| {
                if a.len() != b.len() {
                    return Err(Error::InvalidInput("nodes have different dimensions".into()));
                }
                let norm = node_distance(a, b);
                if norm == 0.0 {
                    return Err(Error::InvalidInput("degenerate pair: z_i = z_j".into()));
                }
                let y = a.iter().zip(b).map(|(x, w)| (x - w) / norm).collect();
                Ok((y, norm))
            })
            .collect()
    }
}

/// Outcome of a Monte Carlo gap experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct GapExperimentReport {
    pub d: usize,
    pub epsilon: f64,
    pub trials: usize,
    pub seed: u64,
    pub workers: usize,
    pub pairs: usize,
    /// Fraction of draws with normalized gap `< ε`.
    pub empirical_freq: f64,
    /// Binomial standard error of `empirical_freq`.
    pub freq_stderr: f64,
    pub bound: f64,
    pub union_bound: f64,
    pub band_measure: f64,
    /// Exact single-pair law; only meaningful for [`GapTarget::Pair`].
    pub exact_law_freq: f64,
    /// Mean of `|λ_i − λ_j|²` (unnormalized) for the first pair.
    pub mean_sq_gap: f64,
    /// Mean of `d·|λ_i − λ_j|²/‖z_i − z_j‖²` for the first pair (→ 1).
    pub normalized_sq_gap: f64,
    pub normalized_sq_gap_stderr: f64,
}

#[derive(Default, Clone, Copy)]
struct Tally {
    hits: u64,
    sq_sum: f64,
    norm_sq_sum: f64,
    norm_sq_sq_sum: f64,
}

/// Draws `trials` directions and records how often the normalized gap
/// `|⟨z_i − z_j, μ⟩| / ‖z_i − z_j‖` (minimum over pairs for
/// [`GapTarget::AllPairs`]) falls below `epsilon`.
///
/// Trials are split into `workers` contiguous blocks, each with its own
/// ChaCha stream of the master seed; block tallies are reduced in block
/// order, so the report is a function of `(seed, workers)` only.
pub fn mc_gap_experiment(
    target: &GapTarget,
    epsilon: f64,
    trials: usize,
    seed: u64,
    workers: usize,
) -> Result<GapExperimentReport> {
    let d = target.dim();
    check_eps_dim(epsilon, d)?;
    if trials == 0 {
        return Err(Error::InvalidInput("trials must be >= 1".into()));
    }
    let workers = workers.clamp(1, trials);
    let dirs = target.directions()?;
    let first_norm = dirs[0].1;

    let block = trials.div_ceil(workers);
    let tallies: Vec<Tally> = (0..workers)
        .into_par_iter()
        .map(|w| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(w as u64);
            let count = block.min(trials.saturating_sub(w * block));
            let mut t = Tally::default();
            for _ in 0..count {
                let mu = draw_complex_sphere(&mut rng, d);
                let mut worst = f64::INFINITY;
                for (i, (y, _)) in dirs.iter().enumerate() {
                    let g = inner(y, &mu).norm();
                    worst = worst.min(g);
                    if i == 0 {
                        let normalized = d as f64 * g * g;
                        t.sq_sum += (g * first_norm).powi(2);
                        t.norm_sq_sum += normalized;
                        t.norm_sq_sq_sum += normalized * normalized;
                    }
                }
                if worst < epsilon {
                    t.hits += 1;
                }
            }
            t
        })
        .collect();
    let total = tallies.iter().fold(Tally::default(), |acc, t| Tally {
        hits: acc.hits + t.hits,
        sq_sum: acc.sq_sum + t.sq_sum,
        norm_sq_sum: acc.norm_sq_sum + t.norm_sq_sum,
        norm_sq_sq_sum: acc.norm_sq_sq_sum + t.norm_sq_sq_sum,
    });
    let n = trials as f64;
    let freq = total.hits as f64 / n;
    let mean_norm = total.norm_sq_sum / n;
    let var_norm = (total.norm_sq_sq_sum / n - mean_norm * mean_norm).max(0.0) * n / (n - 1.0).max(1.0);
    Ok(GapExperimentReport {
        d,
        epsilon,
        trials,
        seed,
        workers,
        pairs: target.pair_count(),
        empirical_freq: freq,
        freq_stderr: (freq * (1.0 - freq) / n).sqrt(),
        bound: theorem_bound(epsilon, d),
        union_bound: target.pair_count() as f64 * theorem_bound(epsilon, d),
        band_measure: band_measure(epsilon, d)?,
        exact_law_freq: exact_event_probability(epsilon, d),
        mean_sq_gap: total.sq_sum / n,
        normalized_sq_gap: mean_norm,
        normalized_sq_gap_stderr: (var_norm / n).sqrt(),
    })
}

/// `⟨y, μ⟩ = Σ y_ℓ·conj(μ_ℓ)`, which equals `λ(μ)` for node `y`.
pub fn inner(y: &[Complex64], mu: &[Complex64]) -> Complex64 {
    y.iter().zip(mu).map(|(a, b)| a * b.conj()).sum()
}

/// Parametrization of the sphere used by a gap map.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GapMapMode {
    /// `d = 2`, complex `μ = (cos(θ/2), e^{iφ} sin(θ/2))`: each point of
    /// `S²` stands for a Hopf fiber of directions equal up to global phase.
    HopfD2,
    /// `d = 3`, real `μ = (sin θ cos φ, sin θ sin φ, cos θ)`.
    RealSphereD3,
}

impl GapMapMode {
    pub fn dim(self) -> usize {
        match self {
            GapMapMode::HopfD2 => 2,
            GapMapMode::RealSphereD3 => 3,
        }
    }

    /// Direction for polar angle `theta ∈ [0,π]` and azimuth `phi`.
    pub fn direction(self, theta: f64, phi: f64) -> Vec<Complex64> {
        match self {
            GapMapMode::HopfD2 => vec![
                Complex64::new((theta / 2.0).cos(), 0.0),
                Complex64::from_polar((theta / 2.0).sin(), phi),
            ],
            GapMapMode::RealSphereD3 => vec![
                Complex64::new(theta.sin() * phi.cos(), 0.0),
                Complex64::new(theta.sin() * phi.sin(), 0.0),
                Complex64::new(theta.cos(), 0.0),
            ],
        }
    }

    /// The point of `S² ⊂ ℝ³` a grid cell is drawn at.
    pub fn sphere_point(self, theta: f64, phi: f64) -> [f64; 3] {
        [theta.sin() * phi.cos(), theta.sin() * phi.sin(), theta.cos()]
    }
}

impl std::str::FromStr for GapMapMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hopf-d2" => Ok(GapMapMode::HopfD2),
            "real-sphere-d3" => Ok(GapMapMode::RealSphereD3),
            other => Err(Error::InvalidInput(format!(
                "unknown gap-map mode {other:?} (expected hopf-d2 or real-sphere-d3)"
            ))),
        }
    }
}

impl std::fmt::Display for GapMapMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            GapMapMode::HopfD2 => "hopf-d2",
            GapMapMode::RealSphereD3 => "real-sphere-d3",
        })
    }
}

/// What the eigenvalues of `C_μ` are computed from.
#[derive(Debug, Clone)]
pub enum GapSource {
    /// Pencil matrices `S_1..S_d`; eigenvalues by dense decomposition.
    Pencil(Vec<CMatrix>),
    /// Exact nodes; `λ_j(μ) = ⟨z_j, μ⟩`.
    Nodes(Vec<Vec<Complex64>>),
}

impl GapSource {
    fn dim(&self) -> usize {
        match self {
            GapSource::Pencil(s) => s.len(),
            GapSource::Nodes(z) => z.first().map_or(0, Vec::len),
        }
    }

    fn order(&self) -> usize {
        match self {
            GapSource::Pencil(s) => s.first().map_or(0, |m| m.nrows()),
            GapSource::Nodes(z) => z.len(),
        }
    }

    fn min_gap(&self, mu: &[Complex64]) -> Result<Option<f64>> {
        match self {
            GapSource::Pencil(s) => {
                let eig = eig_general(&combine(s, mu))?;
                Ok(min_pairwise_gap(&eig.values))
            }
            GapSource::Nodes(z) => {
                let lambdas: Vec<Complex64> = z.iter().map(|zj| inner(zj, mu)).collect();
                Ok(min_pairwise_gap(&lambdas))
            }
        }
    }
}

/// Value written in place of the gap when `M = 1`.
pub const GAP_SENTINEL: f64 = -1.0;

/// A latitude–longitude table of minimal eigenvalue gaps of `C_μ`.
///
/// Cells are centered: `θ_i = (i + ½)π/rows`, `φ_j = 2π j/cols`.
#[derive(Debug, Clone)]
pub struct GapMap {
    pub mode: GapMapMode,
    pub rows: usize,
    pub cols: usize,
    /// Row-major `rows × cols`; [`GAP_SENTINEL`] when undefined.
    pub gaps: Vec<f64>,
    pub undefined: bool,
}

impl GapMap {
    pub fn theta(&self, i: usize) -> f64 {
        (i as f64 + 0.5) * PI / self.rows as f64
    }

    pub fn phi(&self, j: usize) -> f64 {
        2.0 * PI * j as f64 / self.cols as f64
    }

    pub fn gap(&self, i: usize, j: usize) -> f64 {
        self.gaps[i * self.cols + j]
    }

    /// Cells whose gap is below `threshold` and strictly smaller than all
    /// eight neighbors (azimuth wraps; the polar rows have no neighbors
    /// across the pole).
    pub fn local_minima(&self, threshold: f64) -> Vec<(usize, usize)> {
        if self.undefined {
            return Vec::new();
        }
        let mut out = Vec::new();
        for i in 0..self.rows {
            for j in 0..self.cols {
                let g = self.gap(i, j);
                if g >= threshold {
                    continue;
                }
                let mut is_min = true;
                'nbr: for di in [-1i64, 0, 1] {
                    let ii = i as i64 + di;
                    if ii < 0 || ii >= self.rows as i64 {
                        continue;
                    }
                    for dj in [-1i64, 0, 1] {
                        if di == 0 && dj == 0 {
                            continue;
                        }
                        let jj = (j as i64 + dj).rem_euclid(self.cols as i64) as usize;
                        if self.gap(ii as usize, jj) <= g {
                            is_min = false;
                            break 'nbr;
                        }
                    }
                }
                if is_min {
                    out.push((i, j));
                }
            }
        }
        out
    }
}

/// Evaluates the minimal eigenvalue gap of `C_μ` over a `rows × cols`
/// latitude–longitude grid.
pub fn emit_gap_map(source: &GapSource, mode: GapMapMode, rows: usize, cols: usize) -> Result<GapMap> {
    if source.dim() != mode.dim() {
        return Err(Error::InvalidInput(format!(
            "mode {mode} needs d = {}, got d = {}",
            mode.dim(),
            source.dim()
        )));
    }
    if rows == 0 || cols == 0 {
        return Err(Error::InvalidInput("gap-map resolution must be positive".into()));
    }
    if source.order() < 2 {
        log::warn!("gap map with M < 2: pairwise gaps are undefined, emitting sentinel");
        return Ok(GapMap {
            mode,
            rows,
            cols,
            gaps: vec![GAP_SENTINEL; rows * cols],
            undefined: true,
        });
    }
    let mut map = GapMap {
        mode,
        rows,
        cols,
        gaps: Vec::new(),
        undefined: false,
    };
    let gaps = (0..rows * cols)
        .into_par_iter()
        .map(|cell| {
            let mu = mode.direction(map.theta(cell / cols), map.phi(cell % cols));
            source.min_gap(&mu).map(|g| g.unwrap_or(GAP_SENTINEL))
        })
        .collect::<Result<Vec<f64>>>()?;
    map.gaps = gaps;
    Ok(map)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sphere_draws_are_unit() {
        for d in 1..6 {
            for seed in 0..20 {
                let mu = sample_complex_sphere(d, seed);
                let n: f64 = mu.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
                assert!((n - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn incomplete_beta_edges() {
        for (a, b) in [(0.5, 0.5), (2.0, 3.0), (0.5, 7.5)] {
            assert_eq!(reg_incomplete_beta(1.0, a, b).unwrap(), 1.0);
            assert_eq!(reg_incomplete_beta(0.0, a, b).unwrap(), 0.0);
        }
        assert!(reg_incomplete_beta(1.5, 1.0, 1.0).is_err());
        assert!(reg_incomplete_beta(0.5, 0.0, 1.0).is_err());
        assert!(reg_incomplete_beta(0.5, 1.0, -1.0).is_err());
        // I_x(1,1) = x
        assert!((reg_incomplete_beta(0.3, 1.0, 1.0).unwrap() - 0.3).abs() < 1e-14);
    }

    #[test]
    fn arcsine_law() {
        for i in 0..=20 {
            let x = i as f64 / 20.0;
            let expected = 2.0 / PI * x.sqrt().asin();
            assert!((reg_incomplete_beta(x, 0.5, 0.5).unwrap() - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn band_edges() {
        for d in 1..6 {
            assert_eq!(band_measure(0.0, d).unwrap(), 0.0);
            assert_eq!(band_measure(1.0, d).unwrap(), 1.0);
        }
        assert!((band_measure(0.5, 1).unwrap() - 1.0 / 3.0).abs() < 1e-12);
        assert!(band_measure(1.1, 2).is_err());
        assert!(band_measure(0.5, 0).is_err());
    }

    #[test]
    fn series_low_orders() {
        let eps: f64 = 0.3;
        let d1 = band_measure_series(eps, 1).unwrap();
        assert!((d1 - 2.0 / PI * eps.asin()).abs() < 1e-15);
        let d2 = band_measure_series(eps, 2).unwrap();
        let expected = 2.0 / PI * (eps.asin() + eps * (1.0 - eps * eps).sqrt());
        assert!((d2 - expected).abs() < 1e-15);
        // k = 3 coefficient: 4·1/(3·2!) = 2/3
        let d3 = band_measure_series(eps, 3).unwrap();
        let expected3 = expected + 2.0 / PI * eps * (2.0 / 3.0) * (1.0 - eps * eps).powf(1.5);
        assert!((d3 - expected3).abs() < 1e-15);
    }

    #[test]
    fn bounds_at_zero() {
        assert_eq!(theorem_bound(0.0, 4), 0.0);
        assert_eq!(union_bound(0.1, 2, 1), 0.0);
        assert!((union_bound(0.1, 2, 5) - 10.0 * theorem_bound(0.1, 2)).abs() < 1e-15);
    }

    #[test]
    fn one_dimensional_gap_never_shrinks() {
        let target = GapTarget::Pair(vec![Complex64::new(1.0, 0.0)], vec![Complex64::new(-1.0, 0.0)]);
        let r = mc_gap_experiment(&target, 0.999, 2_000, 1, 2).unwrap();
        assert_eq!(r.empirical_freq, 0.0);
        assert!((r.normalized_sq_gap - 1.0).abs() < 1e-12);
        assert!((r.mean_sq_gap - 4.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_pair_rejected() {
        let z = vec![Complex64::new(1.0, 0.0), Complex64::new(0.0, 1.0)];
        let target = GapTarget::Pair(z.clone(), z);
        assert!(mc_gap_experiment(&target, 0.1, 10, 1, 1).is_err());
    }

    #[test]
    fn reproducible_per_worker_count() {
        let target = GapTarget::Pair(
            vec![Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)],
            vec![Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0)],
        );
        let a = mc_gap_experiment(&target, 0.2, 5_000, 3, 4).unwrap();
        let b = mc_gap_experiment(&target, 0.2, 5_000, 3, 4).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn gap_map_dimension_mismatch() {
        let src = GapSource::Nodes(vec![vec![Complex64::new(1.0, 0.0); 3]; 2]);
        assert!(emit_gap_map(&src, GapMapMode::HopfD2, 4, 8).is_err());
    }

    #[test]
    fn gap_map_single_source_sentinel() {
        let src = GapSource::Nodes(vec![vec![Complex64::new(1.0, 0.0); 2]]);
        let map = emit_gap_map(&src, GapMapMode::HopfD2, 4, 8).unwrap();
        assert!(map.undefined);
        assert!(map.gaps.iter().all(|&g| g == GAP_SENTINEL));
        assert!(map.local_minima(1e-2).is_empty());
    }

    #[test]
    fn mode_parsing() {
        assert_eq!("hopf-d2".parse::<GapMapMode>().unwrap(), GapMapMode::HopfD2);
        assert_eq!(
            "real-sphere-d3".parse::<GapMapMode>().unwrap().to_string(),
            "real-sphere-d3"
        );
        assert!("flat".parse::<GapMapMode>().is_err());
    }
}
