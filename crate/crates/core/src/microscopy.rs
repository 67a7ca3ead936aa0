//! Point sources blurred by a Gaussian point spread function, sampled on a
//! periodic pixel grid, and localized at subpixel accuracy.
//!
//! A measurement `g = Σ_j c_j φ(· − t_j)` with `φ(x) = exp(−b‖x‖²)` is
//! periodized onto the torus `[0,1)^d`. By Poisson summation the Fourier
//! coefficients of the periodization equal samples of the continuous Fourier
//! transform, so
//!
//! ```text
//! ĝ_per(k) / F(φ)(k) = Σ_j c_j exp(−2πi⟨t_j, k⟩),
//! ```
//!
//! which is an exponential sum the pencil module can invert. `ĝ_per(k)` is
//! approximated by a DFT of the pixels.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result, Stage, StageExt};
use crate::model::{box_indices, check_snr, scaled_gaussian, AddNoise, ParameterSet, SampleTable};
use crate::pencil::{reconstruct, ReconConfig, ReconstructionResult};

/// Gaussian point spread function `φ(x) = exp(−b‖x‖²)` on `ℝ^d`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PsfModel {
    b: f64,
    d: usize,
}

impl PsfModel {
    /// `b` is in inverse squared torus lengths.
    pub fn new(b: f64, d: usize) -> Result<Self> {
        if !(b > 0.0) || !b.is_finite() {
            return Err(Error::InvalidInput(format!(
                "PSF parameter b must be positive, got {b}"
            )));
        }
        if d == 0 {
            return Err(Error::InvalidInput("dimension d must be >= 1".into()));
        }
        Ok(Self { b, d })
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    /// `φ(x)`.
    pub fn eval(&self, x: &[f64]) -> f64 {
        (-self.b * x.iter().map(|v| v * v).sum::<f64>()).exp()
    }
}

/// `F(φ)(ξ) = (π/b)^{d/2}·exp(−π²‖ξ‖²/b)`, the Fourier transform of `φ`
/// under the kernel `exp(−2πi⟨ξ, x⟩)`. Strictly positive.
pub fn gaussian_psf_ft(psf: &PsfModel, xi: &[f64]) -> f64 {
    let b = psf.b;
    let norm_sq: f64 = xi.iter().map(|v| v * v).sum();
    (PI / b).powf(psf.d as f64 / 2.0) * (-PI * PI * norm_sq / b).exp()
}

/// Pixel samples of a periodized measurement on `{0,…,P−1}^d`.
///
/// `pixels[p]` is the value at the torus point `p/P`; the first coordinate
/// varies slowest, so for `d = 2` rows index `t_1` and columns `t_2`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageGrid {
    d: usize,
    side: usize,
    pixels: Vec<f64>,
}

impl ImageGrid {
    pub fn new(d: usize, side: usize, pixels: Vec<f64>) -> Result<Self> {
        if d == 0 {
            return Err(Error::InvalidInput("dimension d must be >= 1".into()));
        }
        if side < 2 {
            return Err(Error::InvalidInput(format!(
                "image needs at least 2 pixels per side, got {side}"
            )));
        }
        let expected = side.pow(d as u32);
        if pixels.len() != expected {
            return Err(Error::InvalidInput(format!(
                "{} pixel values for a {side}^{d} grid (expected {expected})",
                pixels.len()
            )));
        }
        if pixels.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("image contains non-finite pixels".into()));
        }
        Ok(Self { d, side, pixels })
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    /// Pixels per dimension `P`.
    pub fn side(&self) -> usize {
        self.side
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn norm(&self) -> f64 {
        self.pixels.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Multi-index of the pixel at flat position `pos`.
    pub fn pixel_index(&self, mut pos: usize) -> Vec<usize> {
        let mut p = vec![0; self.d];
        for slot in p.iter_mut().rev() {
            *slot = pos % self.side;
            pos /= self.side;
        }
        p
    }

    /// Median pixel value.
    pub fn median(&self) -> f64 {
        let mut sorted = self.pixels.clone();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len();
        if n % 2 == 1 {
            sorted[n / 2]
        } else {
            0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
        }
    }

    /// Copy with `offset` subtracted from every pixel.
    pub fn minus(&self, offset: f64) -> Self {
        Self {
            d: self.d,
            side: self.side,
            pixels: self.pixels.iter().map(|v| v - offset).collect(),
        }
    }
}

impl AddNoise for ImageGrid {
    /// Real Gaussian noise in the spatial domain.
    fn add_noise(&self, snr: f64, seed: u64) -> Result<Self> {
        let signal = self.norm();
        check_snr(snr, signal)?;
        let noise = scaled_gaussian(self.pixels.len(), signal / snr, seed);
        Ok(Self {
            d: self.d,
            side: self.side,
            pixels: self.pixels.iter().zip(noise).map(|(v, e)| v + e).collect(),
        })
    }
}

/// Renders `Σ_j Σ_{‖l‖∞ ≤ r} Re(c_j)·φ(p/P − t_j + l)` on the pixel grid.
///
/// The periodization is truncated at `shift_radius = r`. Every dropped
/// image lies at distance at least `r` from the pixel, so each contributes
/// less than `exp(−b·r²)`.
pub fn render_image(params: &ParameterSet, psf: &PsfModel, side: usize, shift_radius: usize) -> Result<ImageGrid> {
    let d = params.dim();
    if psf.dim() != d {
        return Err(Error::InvalidInput(format!(
            "PSF has dimension {}, parameters have {d}",
            psf.dim()
        )));
    }
    if side < 2 {
        return Err(Error::InvalidInput(format!(
            "image needs at least 2 pixels per side, got {side}"
        )));
    }
    if params.coefficients().iter().any(|c| c.im != 0.0) {
        log::warn!("complex coefficients: only the real parts are rendered");
    }
    let r = shift_radius as i64;
    let shifts = box_indices(d, -r, r);
    let total = side.pow(d as u32);
    let mut pixels = vec![0.0; total];
    let mut x = vec![0.0; d];
    let scratch = ImageGrid {
        d,
        side,
        pixels: Vec::new(),
    };
    for (pos, value) in pixels.iter_mut().enumerate() {
        let p = scratch.pixel_index(pos);
        let mut acc = 0.0;
        for (t, c) in params.locations().iter().zip(params.coefficients()) {
            for l in &shifts {
                for i in 0..d {
                    x[i] = p[i] as f64 / side as f64 - t[i] + l[i] as f64;
                }
                acc += c.re * psf.eval(&x);
            }
        }
        *value = acc;
    }
    ImageGrid::new(d, side, pixels)
}

/// Approximates the Fourier coefficients of the periodized measurement,
/// `ĝ_per(k) ≈ P^{−d} Σ_p pixels[p]·exp(−2πi⟨k, p⟩/P)`, for each `k` in
/// `indices`.
///
/// Every `k` must satisfy `‖k‖∞ < P/2`.
pub fn dft_fourier_coeffs(image: &ImageGrid, indices: &[Vec<i64>]) -> Result<SampleTable> {
    let d = image.d;
    let side = image.side;
    for k in indices {
        if k.len() != d {
            return Err(Error::InvalidInput(format!("frequency {k:?} has wrong dimension")));
        }
        if k.iter().any(|&ki| 2 * ki.unsigned_abs() as usize >= side) {
            return Err(Error::Nyquist {
                k: k.clone(),
                pixels: side,
            });
        }
    }
    // twiddle[m] = exp(−2πi m/P); the exponent k·p is reduced mod P.
    let twiddle: Vec<Complex64> = (0..side)
        .map(|m| Complex64::from_polar(1.0, -2.0 * PI * m as f64 / side as f64))
        .collect();
    let scale = (side as f64).powi(d as i32).recip();
    let coords: Vec<Vec<usize>> = (0..image.pixels.len()).map(|pos| image.pixel_index(pos)).collect();
    let entries = indices.iter().map(|k| {
        let mut acc = Complex64::new(0.0, 0.0);
        for (p, v) in coords.iter().zip(&image.pixels) {
            let phase: i64 = k.iter().zip(p).map(|(&ki, &pi)| ki * pi as i64).sum();
            acc += twiddle[phase.rem_euclid(side as i64) as usize] * v;
        }
        (k.clone(), acc * scale)
    });
    SampleTable::from_entries(d, entries.collect::<Vec<_>>())
}

/// Noise-amplification summary of a spectral division.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RatioReport {
    /// `max_k 1/F(φ)(k)` over the band.
    pub max_amplification: f64,
    /// The same, relative to `1/F(φ)(0)`.
    pub relative_amplification: f64,
}

/// Divides each coefficient by `F(φ)(k)`.
pub fn frequency_ratio(coeffs: &SampleTable, psf: &PsfModel) -> (SampleTable, RatioReport) {
    let mut max_amp = 0.0f64;
    let ratio = coeffs.map_values(|k, v| {
        let xi: Vec<f64> = k.iter().map(|&x| x as f64).collect();
        let ft = gaussian_psf_ft(psf, &xi);
        max_amp = max_amp.max(ft.recip());
        v / ft
    });
    let at_zero = gaussian_psf_ft(psf, &vec![0.0; psf.d]).recip();
    (
        ratio,
        RatioReport {
            max_amplification: max_amp,
            relative_amplification: max_amp / at_zero,
        },
    )
}

/// Settings for [`localize`].
#[derive(Debug, Clone, PartialEq)]
pub struct LocalizeConfig {
    /// Sampling order; the band is `{−n,…,n+1}^d`.
    pub n: usize,
    pub recon: ReconConfig,
    /// Subtract the median pixel before the DFT (constant background).
    pub subtract_background: bool,
}

impl Default for LocalizeConfig {
    fn default() -> Self {
        Self {
            n: 4,
            recon: ReconConfig::default(),
            subtract_background: false,
        }
    }
}

/// Localization output: the reconstruction plus the spectral division
/// report and the background that was removed.
#[derive(Debug, Clone)]
pub struct Localization {
    pub result: ReconstructionResult,
    pub ratio: RatioReport,
    pub background: f64,
}

/// DFT → spectral division → pencil reconstruction.
pub fn localize(image: &ImageGrid, psf: &PsfModel, config: &LocalizeConfig) -> Result<Localization> {
    if psf.dim() != image.dim() {
        return Err(Error::InvalidInput(format!(
            "PSF has dimension {}, image has {}",
            psf.dim(),
            image.dim()
        )));
    }
    let background = if config.subtract_background {
        image.median()
    } else {
        0.0
    };
    let work = if background != 0.0 {
        image.minus(background)
    } else {
        image.clone()
    };
    let n = config.n as i64;
    let band = box_indices(image.dim(), -n, n + 1);
    let coeffs = dft_fourier_coeffs(&work, &band).stage(Stage::Fourier)?;
    let (samples, ratio) = frequency_ratio(&coeffs, psf);
    let result = reconstruct(&samples, &config.recon)?;
    Ok(Localization {
        result,
        ratio,
        background,
    })
}

/// Repeated noisy localization of one rendered frame.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialConfig {
    pub pixels: usize,
    pub shift_radius: usize,
    pub snr: f64,
    /// Noise seeds are `first_seed..first_seed + trials`; the same seed
    /// drives the random direction of that trial.
    pub first_seed: u64,
    pub trials: usize,
    pub localize: LocalizeConfig,
    /// A trial fails if its max location error exceeds this.
    pub fail_above: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trial {
    pub seed: u64,
    /// Max location error, `None` if the pipeline errored or the detected
    /// order differs from the truth.
    pub error: Option<f64>,
    pub m_detected: Option<usize>,
    pub failed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialSummary {
    pub trials: Vec<Trial>,
}

impl TrialSummary {
    /// Errors with failed pipelines and order mismatches counted as `+∞`,
    /// sorted ascending.
    pub fn sorted_errors(&self) -> Vec<f64> {
        let mut e: Vec<f64> = self.trials.iter().map(|t| t.error.unwrap_or(f64::INFINITY)).collect();
        e.sort_by(f64::total_cmp);
        e
    }

    /// Lower median for even counts.
    pub fn median_error(&self) -> f64 {
        let e = self.sorted_errors();
        e[(e.len() - 1) / 2]
    }

    pub fn max_error(&self) -> f64 {
        self.sorted_errors().last().copied().unwrap_or(f64::NAN)
    }

    pub fn failure_rate(&self) -> f64 {
        self.trials.iter().filter(|t| t.failed).count() as f64 / self.trials.len() as f64
    }
}

/// Renders `truth`, then for each seed adds noise at the given SNR and
/// localizes. Trials run in parallel; results are in seed order.
pub fn noisy_trials(truth: &ParameterSet, psf: &PsfModel, config: &TrialConfig) -> Result<TrialSummary> {
    use rayon::prelude::*;
    if config.trials == 0 {
        return Err(Error::InvalidInput("need at least one trial".into()));
    }
    let clean = render_image(truth, psf, config.pixels, config.shift_radius)?;
    let trials = (0..config.trials as u64)
        .into_par_iter()
        .map(|i| {
            let seed = config.first_seed + i;
            let noisy = clean.add_noise(config.snr, seed)?;
            let mut loc = config.localize.clone();
            loc.recon.seed = seed;
            let trial = match localize(&noisy, psf, &loc) {
                Ok(l) => {
                    let error = crate::pencil::max_location_error(truth, &l.result.params);
                    Trial {
                        seed,
                        error,
                        m_detected: Some(l.result.m_detected),
                        failed: error.is_none_or(|e| e > config.fail_above),
                    }
                }
                Err(e) => {
                    log::debug!("trial {seed}: {e}");
                    Trial {
                        seed,
                        error: None,
                        m_detected: None,
                        failed: true,
                    }
                }
            };
            Ok(trial)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TrialSummary { trials })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn psf_ft_normalization() {
        let psf = PsfModel::new(PI, 1).unwrap();
        assert!((gaussian_psf_ft(&psf, &[0.0]) - 1.0).abs() < 1e-15);
        let psf2 = PsfModel::new(150.0, 2).unwrap();
        assert!((gaussian_psf_ft(&psf2, &[0.0, 0.0]) - PI / 150.0).abs() < 1e-15);
        assert!(PsfModel::new(0.0, 2).is_err());
        assert!(PsfModel::new(-3.0, 2).is_err());
    }

    #[test]
    fn constant_image_spectrum() {
        let img = ImageGrid::new(2, 8, vec![2.5; 64]).unwrap();
        let band = box_indices(2, -3, 3);
        let c = dft_fourier_coeffs(&img, &band).unwrap();
        for (k, v) in c.iter() {
            if k.iter().all(|&x| x == 0) {
                assert!((v - Complex64::new(2.5, 0.0)).norm() < 1e-12);
            } else {
                assert!(v.norm() <= 1e-12 * 2.5);
            }
        }
    }

    #[test]
    fn impulse_spectrum_is_flat() {
        let mut px = vec![0.0; 8];
        px[0] = 1.0;
        let img = ImageGrid::new(1, 8, px).unwrap();
        let band = box_indices(1, -3, 3);
        let c = dft_fourier_coeffs(&img, &band).unwrap();
        for (_, v) in c.iter() {
            assert!((v - Complex64::new(0.125, 0.0)).norm() < 1e-15);
        }
    }

    #[test]
    fn nyquist_guard() {
        let img = ImageGrid::new(2, 8, vec![0.0; 64]).unwrap();
        assert!(matches!(
            dft_fourier_coeffs(&img, &[vec![4, 0]]),
            Err(Error::Nyquist { .. })
        ));
        assert!(dft_fourier_coeffs(&img, &[vec![3, -3]]).is_ok());
    }

    #[test]
    fn peak_on_grid_point() {
        let p = ParameterSet::with_unit_coefficients(vec![vec![10.0 / 31.0, 20.0 / 31.0]]).unwrap();
        let psf = PsfModel::new(2000.0, 2).unwrap();
        let img = render_image(&p, &psf, 31, 1).unwrap();
        let argmax = img
            .pixels()
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .unwrap()
            .0;
        assert_eq!(img.pixel_index(argmax), vec![10, 20]);
    }

    #[test]
    fn ratio_at_zero_frequency() {
        let psf = PsfModel::new(150.0, 2).unwrap();
        let t = SampleTable::from_entries(2, vec![(vec![0, 0], Complex64::new(1.0, 0.0))]).unwrap();
        let (r, rep) = frequency_ratio(&t, &psf);
        assert!((r.get(&[0, 0]).unwrap().re - 150.0 / PI).abs() < 1e-12);
        assert!((rep.relative_amplification - 1.0).abs() < 1e-15);
    }

    #[test]
    fn image_validation() {
        assert!(ImageGrid::new(2, 1, vec![0.0]).is_err());
        assert!(ImageGrid::new(2, 3, vec![0.0; 8]).is_err());
        assert!(ImageGrid::new(1, 3, vec![0.0, f64::NAN, 1.0]).is_err());
        let img = ImageGrid::new(1, 4, vec![4.0, 1.0, 3.0, 2.0]).unwrap();
        assert_eq!(img.median(), 2.5);
    }

    #[test]
    fn image_noise_norm_ratio() {
        let p = ParameterSet::with_unit_coefficients(vec![vec![0.3, 0.6]]).unwrap();
        let psf = PsfModel::new(150.0, 2).unwrap();
        let img = render_image(&p, &psf, 31, 1).unwrap();
        let noisy = img.add_noise(2.554, 17).unwrap();
        let e: f64 = img
            .pixels()
            .iter()
            .zip(noisy.pixels())
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt();
        assert!((img.norm() / e - 2.554).abs() < 1e-10);
        assert_eq!(noisy, img.add_noise(2.554, 17).unwrap());
    }
}
