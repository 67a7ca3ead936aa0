//! Sparse multivariate exponential sums: evaluation, synthetic ground
//! truth, sampling on the difference grid, and additive noise.
//!
//! Throughout the crate an exponential sum is
//!
//! ```text
//! f(k) = Σ_j c_j · exp(−2πi ⟨t_j, k⟩),   k ∈ ℤ^d,
//! ```
//!
//! with locations `t_j ∈ [0,1)^d` and nonzero coefficients `c_j`. The nodes
//! `z_j = exp(−2πi t_j)` (componentwise) carry the same information as the
//! locations.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Upper bound on whole-set redraws in [`random_params`].
const REJECTION_BUDGET: usize = 100_000;

/// Ground-truth or recovered model of an exponential sum.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterSet {
    d: usize,
    locations: Vec<Vec<f64>>,
    coefficients: Vec<Complex64>,
}

impl ParameterSet {
    /// Builds a validated parameter set.
    ///
    /// Locations must lie in `[0,1)^d` and be pairwise distinct; every
    /// coefficient must be nonzero.
    pub fn new(locations: Vec<Vec<f64>>, coefficients: Vec<Complex64>) -> Result<Self> {
        if locations.is_empty() {
            return Err(Error::InvalidInput("parameter set needs M >= 1 sources".into()));
        }
        if locations.len() != coefficients.len() {
            return Err(Error::InvalidInput(format!(
                "{} locations but {} coefficients",
                locations.len(),
                coefficients.len()
            )));
        }
        let d = locations[0].len();
        if d == 0 {
            return Err(Error::InvalidInput("dimension d must be >= 1".into()));
        }
        for (j, t) in locations.iter().enumerate() {
            if t.len() != d {
                return Err(Error::InvalidInput(format!(
                    "location {j} has dimension {}, expected {d}",
                    t.len()
                )));
            }
            if let Some(x) = t.iter().find(|x| !(0.0..1.0).contains(*x)) {
                return Err(Error::InvalidInput(format!(
                    "location {j} has coordinate {x} outside [0,1)"
                )));
            }
        }
        if let Some(j) = coefficients.iter().position(|c| c.norm() == 0.0 || !c.is_finite()) {
            return Err(Error::InvalidInput(format!("coefficient {j} is zero or not finite")));
        }
        for i in 0..locations.len() {
            for j in 0..i {
                if locations[i] == locations[j] {
                    return Err(Error::InvalidInput(format!("locations {j} and {i} coincide")));
                }
            }
        }
        Ok(Self {
            d,
            locations,
            coefficients,
        })
    }

    /// Builds a parameter set with unit coefficients.
    pub fn with_unit_coefficients(locations: Vec<Vec<f64>>) -> Result<Self> {
        let m = locations.len();
        Self::new(locations, vec![Complex64::new(1.0, 0.0); m])
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn order(&self) -> usize {
        self.locations.len()
    }

    pub fn locations(&self) -> &[Vec<f64>] {
        &self.locations
    }

    pub fn coefficients(&self) -> &[Complex64] {
        &self.coefficients
    }

    /// Nodes `z_j = exp(−2πi t_j)`, one row per source.
    pub fn nodes(&self) -> Vec<Vec<Complex64>> {
        self.locations.iter().map(|t| node_of(t)).collect()
    }

    /// Same locations, coefficients multiplied by `factor`.
    pub fn scaled(&self, factor: Complex64) -> Result<Self> {
        Self::new(
            self.locations.clone(),
            self.coefficients.iter().map(|c| c * factor).collect(),
        )
    }

    /// Translates every location by `delta`, wrapping back into `[0,1)`.
    pub fn translated(&self, delta: &[f64]) -> Result<Self> {
        if delta.len() != self.d {
            return Err(Error::InvalidInput("translation has wrong dimension".into()));
        }
        let locations = self
            .locations
            .iter()
            .map(|t| t.iter().zip(delta).map(|(x, dx)| wrap_unit(x + dx)).collect())
            .collect();
        Self::new(locations, self.coefficients.clone())
    }
}

/// Maps a real number onto `[0,1)`.
pub fn wrap_unit(x: f64) -> f64 {
    let r = x.rem_euclid(1.0);
    // rem_euclid can round up to exactly 1.0 for tiny negative inputs
    if r >= 1.0 {
        0.0
    } else {
        r
    }
}

/// `exp(−2πi t)` componentwise.
pub fn node_of(t: &[f64]) -> Vec<Complex64> {
    t.iter().map(|&x| Complex64::from_polar(1.0, -2.0 * PI * x)).collect()
}

/// Evaluates `Σ_j c_j exp(−2πi⟨t_j, k⟩)` for raw, unvalidated parameters.
pub fn exp_sum(locations: &[Vec<f64>], coefficients: &[Complex64], k: &[i64]) -> Complex64 {
    locations
        .iter()
        .zip(coefficients)
        .map(|(t, c)| {
            let phase: f64 = t.iter().zip(k).map(|(x, &ki)| x * ki as f64).sum();
            c * Complex64::from_polar(1.0, -2.0 * PI * phase)
        })
        .sum()
}

/// Evaluates the exponential sum of `params` at the integer point `k`.
pub fn eval_exponential_sum(params: &ParameterSet, k: &[i64]) -> Complex64 {
    exp_sum(&params.locations, &params.coefficients, k)
}

/// Complex samples `f(k)` keyed by integer multi-index.
///
/// A table produced by [`sample_grid`] covers exactly `{−n,…,n+1}^d`; tables
/// read from disk may be incomplete, which is only detected when the pencil
/// matrices are assembled.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleTable {
    d: usize,
    n: usize,
    values: BTreeMap<Vec<i64>, Complex64>,
}

impl SampleTable {
    /// Builds a table from explicit entries. `n` is inferred from the most
    /// negative coordinate of any key.
    pub fn from_entries(d: usize, entries: impl IntoIterator<Item = (Vec<i64>, Complex64)>) -> Result<Self> {
        if d == 0 {
            return Err(Error::InvalidInput("dimension d must be >= 1".into()));
        }
        let mut values = BTreeMap::new();
        for (k, v) in entries {
            if k.len() != d {
                return Err(Error::InvalidInput(format!(
                    "multi-index {k:?} has dimension {}, expected {d}",
                    k.len()
                )));
            }
            if values.insert(k.clone(), v).is_some() {
                return Err(Error::InvalidInput(format!("duplicate multi-index {k:?}")));
            }
        }
        if values.is_empty() {
            return Err(Error::InvalidInput("sample table is empty".into()));
        }
        let lowest = values.keys().flatten().copied().min().unwrap_or(0);
        let n = usize::try_from(-lowest.min(0)).unwrap_or(0);
        Ok(Self { d, n, values })
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    /// Sampling order `n`: the grid is `{−n,…,n+1}^d`.
    pub fn order(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, k: &[i64]) -> Option<Complex64> {
        self.values.get(k).copied()
    }

    /// Like [`SampleTable::get`] but reports the absent key.
    pub fn require(&self, k: &[i64]) -> Result<Complex64> {
        self.get(k).ok_or_else(|| Error::MissingSample(k.to_vec()))
    }

    /// Entries in lexicographic key order.
    pub fn iter(&self) -> impl Iterator<Item = (&Vec<i64>, &Complex64)> {
        self.values.iter()
    }

    /// Euclidean norm over all samples.
    pub fn norm(&self) -> f64 {
        self.values.values().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Applies `f` to every value, keeping keys.
    pub fn map_values(&self, mut f: impl FnMut(&[i64], Complex64) -> Complex64) -> Self {
        Self {
            d: self.d,
            n: self.n,
            values: self.values.iter().map(|(k, v)| (k.clone(), f(k, *v))).collect(),
        }
    }
}

/// All multi-indices of the box `{lo,…,hi}^d` in lexicographic order
/// (first coordinate slowest).
pub fn box_indices(d: usize, lo: i64, hi: i64) -> Vec<Vec<i64>> {
    let side = (hi - lo + 1).max(0) as usize;
    let total = side.pow(d as u32);
    let mut out = Vec::with_capacity(total);
    let mut k = vec![lo; d];
    for _ in 0..total {
        out.push(k.clone());
        for pos in (0..d).rev() {
            k[pos] += 1;
            if k[pos] <= hi {
                break;
            }
            k[pos] = lo;
        }
    }
    out
}

/// Samples `params` on `{−n,…,n+1}^d`, the difference set needed to build
/// the pencil matrices of order `n`.
pub fn sample_grid(params: &ParameterSet, n: usize) -> SampleTable {
    let n_i = n as i64;
    let values = box_indices(params.d, -n_i, n_i + 1)
        .into_iter()
        .map(|k| {
            let v = eval_exponential_sum(params, &k);
            (k, v)
        })
        .collect();
    SampleTable { d: params.d, n, values }
}

/// Smallest Euclidean distance `‖z_i − z_j‖` between two nodes.
pub fn min_separation(params: &ParameterSet) -> Result<f64> {
    if params.order() < 2 {
        return Err(Error::SeparationUndefined);
    }
    let nodes = params.nodes();
    let mut best = f64::INFINITY;
    for i in 0..nodes.len() {
        for j in 0..i {
            best = best.min(node_distance(&nodes[i], &nodes[j]));
        }
    }
    Ok(best)
}

pub(crate) fn node_distance(a: &[Complex64], b: &[Complex64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum::<f64>().sqrt()
}

/// Ranges for random coefficients `c = r·exp(iθ)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoefficientRange {
    pub magnitude: (f64, f64),
    pub phase: (f64, f64),
}

impl Default for CoefficientRange {
    /// Unit coefficients.
    fn default() -> Self {
        Self {
            magnitude: (1.0, 1.0),
            phase: (0.0, 0.0),
        }
    }
}

/// Random locations, i.i.d. uniform on `[0,1)^d`, with unit coefficients.
pub fn random_params(m: usize, d: usize, seed: u64, min_sep: Option<f64>) -> Result<ParameterSet> {
    random_params_with(m, d, seed, min_sep, CoefficientRange::default())
}

/// As [`random_params`], drawing coefficients from `coeffs`.
///
/// The whole set is redrawn until `min_separation >= min_sep`.
pub fn random_params_with(
    m: usize,
    d: usize,
    seed: u64,
    min_sep: Option<f64>,
    coeffs: CoefficientRange,
) -> Result<ParameterSet> {
    if m == 0 || d == 0 {
        return Err(Error::InvalidInput("random_params needs M >= 1 and d >= 1".into()));
    }
    let (mag_lo, mag_hi) = coeffs.magnitude;
    if !(mag_lo > 0.0 && mag_hi >= mag_lo) {
        return Err(Error::InvalidInput(
            "coefficient magnitude range must satisfy 0 < lo <= hi".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..REJECTION_BUDGET {
        let locations: Vec<Vec<f64>> = (0..m).map(|_| (0..d).map(|_| rng.random::<f64>()).collect()).collect();
        let coefficients = (0..m)
            .map(|_| {
                let r = uniform(&mut rng, coeffs.magnitude);
                let theta = uniform(&mut rng, coeffs.phase);
                Complex64::from_polar(r, theta)
            })
            .collect();
        let Ok(params) = ParameterSet::new(locations, coefficients) else {
            continue;
        };
        match min_sep {
            Some(q) if m >= 2 && min_separation(&params)? < q => continue,
            _ => return Ok(params),
        }
    }
    Err(Error::RejectionBudget {
        attempts: REJECTION_BUDGET,
        min_sep: min_sep.unwrap_or(0.0),
        m,
    })
}

fn uniform(rng: &mut impl Rng, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.random_range(lo..hi)
    } else {
        lo
    }
}

/// Additive white Gaussian noise at a prescribed signal-to-noise ratio,
/// where SNR is the norm ratio `‖signal‖₂ / ‖noise‖₂`.
pub trait AddNoise: Sized {
    /// Returns a noisy copy. The noise is rescaled so the norm ratio equals
    /// `snr` exactly; the realization is a pure function of `seed`.
    fn add_noise(&self, snr: f64, seed: u64) -> Result<Self>;
}

pub(crate) fn check_snr(snr: f64, signal_norm: f64) -> Result<()> {
    if !(snr > 0.0) || !snr.is_finite() {
        return Err(Error::InvalidInput(format!("snr must be positive, got {snr}")));
    }
    if signal_norm == 0.0 {
        return Err(Error::InvalidInput("cannot set an SNR on an all-zero signal".into()));
    }
    Ok(())
}

/// Draws `len` standard normals and rescales them to norm `target`.
pub(crate) fn scaled_gaussian(len: usize, target: f64, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let raw: Vec<f64> = (0..len).map(|_| rng.sample(StandardNormal)).collect();
    let norm = raw.iter().map(|x| x * x).sum::<f64>().sqrt();
    raw.into_iter().map(|x| x * target / norm).collect()
}

impl AddNoise for SampleTable {
    /// Independent real Gaussians on the real and imaginary parts.
    fn add_noise(&self, snr: f64, seed: u64) -> Result<Self> {
        let signal = self.norm();
        check_snr(snr, signal)?;
        let noise = scaled_gaussian(2 * self.len(), signal / snr, seed);
        let mut it = noise.chunks_exact(2);
        Ok(self.map_values(|_, v| {
            let e = it.next().expect("one noise pair per sample");
            v + Complex64::new(e[0], e[1])
        }))
    }
}
