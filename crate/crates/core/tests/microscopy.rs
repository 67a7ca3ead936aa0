use std::f64::consts::PI;

use mvprony::microscopy::*;
use mvprony::model::{box_indices, sample_grid, AddNoise, ParameterSet};
use mvprony::pencil::{max_location_error, ReconConfig};
use num_complex::Complex64;

fn three_sources() -> ParameterSet {
    ParameterSet::with_unit_coefficients(vec![vec![0.4, 0.4], vec![0.4, 0.6], vec![0.6, 0.4]]).unwrap()
}

fn composite_simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, panels: usize) -> f64 {
    let h = (b - a) / panels as f64;
    let inner: f64 = (1..panels)
        .map(|i| f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 })
        .sum();
    h / 3.0 * (f(a) + inner + f(b))
}

/// `∫ e^{−b x²} e^{−2πiξx} dx` over `[−1, 1]`; the tail beyond is below
/// `e^{−150}`, and the odd part cancels.
fn ft_1d(b: f64, xi: f64) -> f64 {
    composite_simpson(|x| (-b * x * x).exp() * (2.0 * PI * xi * x).cos(), -1.0, 1.0, 20_000)
}

#[test]
fn psf_transform_against_quadrature() {
    let psf = PsfModel::new(150.0, 2).unwrap();
    let at_zero = ft_1d(150.0, 0.0).powi(2);
    assert!((at_zero - PI / 150.0).abs() < 1e-12);
    assert!((gaussian_psf_ft(&psf, &[0.0, 0.0]) - at_zero).abs() < 1e-12);

    let q = ft_1d(150.0, 0.0) * ft_1d(150.0, 15.0);
    let v = gaussian_psf_ft(&psf, &[0.0, 15.0]);
    assert!((v - q).abs() <= 1e-8 * v, "{v} vs {q}");
    assert!((v - PI / 150.0 * (-PI * PI * 225.0 / 150.0).exp()).abs() < 1e-18);

    let one = PsfModel::new(PI, 1).unwrap();
    assert!((gaussian_psf_ft(&one, &[0.0]) - 1.0).abs() < 1e-15);
}

#[test]
fn single_source_ratio_is_a_pure_exponential() {
    let t = [0.3, 0.7];
    let p = ParameterSet::with_unit_coefficients(vec![t.to_vec()]).unwrap();
    let psf = PsfModel::new(150.0, 2).unwrap();
    let img = render_image(&p, &psf, 31, 1).unwrap();
    let band = box_indices(2, -4, 5);
    let (ratio, _) = frequency_ratio(&dft_fourier_coeffs(&img, &band).unwrap(), &psf);
    for (k, v) in ratio.iter() {
        let phase = -2.0 * PI * (t[0] * k[0] as f64 + t[1] * k[1] as f64);
        assert!((v - Complex64::from_polar(1.0, phase)).norm() <= 1e-6, "k = {k:?}");
    }
}

#[test]
fn impulse_has_flat_spectrum() {
    let mut px = vec![0.0; 8];
    px[0] = 1.0;
    let img = ImageGrid::new(1, 8, px).unwrap();
    let c = dft_fourier_coeffs(&img, &box_indices(1, -3, 3)).unwrap();
    for (_, v) in c.iter() {
        assert!((v - Complex64::new(0.125, 0.0)).norm() < 1e-15);
    }
}

#[test]
fn ratio_table_matches_exact_samples() {
    let p = three_sources();
    let psf = PsfModel::new(150.0, 2).unwrap();
    let img = render_image(&p, &psf, 31, 1).unwrap();
    let (ratio, rep) = frequency_ratio(&dft_fourier_coeffs(&img, &box_indices(2, -4, 5)).unwrap(), &psf);
    let exact = sample_grid(&p, 4);
    for ((k, a), (l, b)) in ratio.iter().zip(exact.iter()) {
        assert_eq!(k, l);
        assert!((a - b).norm() <= 1e-6);
    }
    // largest ‖k‖² on {−4,…,5}² is 50, at k = (5, 5)
    assert!((rep.relative_amplification - (PI * PI * 50.0 / 150.0).exp()).abs() < 1e-9);
    assert!((rep.max_amplification - 150.0 / PI * (PI * PI * 50.0 / 150.0).exp()).abs() < 1e-7);
}

#[test]
fn rendered_image_values() {
    let p = three_sources();
    let psf = PsfModel::new(150.0, 2).unwrap();
    let img = render_image(&p, &psf, 31, 1).unwrap();
    assert!(img.pixels().iter().all(|&v| v > 0.0 && v <= 3.0));
    let wide = render_image(&p, &psf, 31, 2).unwrap();
    let diff = img
        .pixels()
        .iter()
        .zip(wide.pixels())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    assert!(diff <= 1e-12);
}

#[test]
fn noiseless_localization() {
    let p = three_sources();
    let psf = PsfModel::new(150.0, 2).unwrap();
    let img = render_image(&p, &psf, 31, 1).unwrap();
    let loc = localize(&img, &psf, &LocalizeConfig::default()).unwrap();
    assert_eq!(loc.result.m_detected, 3);
    assert!(max_location_error(&p, &loc.result.params).unwrap() <= 1e-6);
    assert_eq!(loc.background, 0.0);
}

/// Local maxima of `φ(x − 0.44) + φ(x − 0.56)` by golden-section search on
/// each half.
fn blurred_maxima(b: f64) -> (f64, f64) {
    let g = |x: f64| (-b * (x - 0.44f64).powi(2)).exp() + (-b * (x - 0.56f64).powi(2)).exp();
    let golden = |mut lo: f64, mut hi: f64| {
        let r = (5f64.sqrt() - 1.0) / 2.0;
        for _ in 0..200 {
            let (a, c) = (hi - r * (hi - lo), lo + r * (hi - lo));
            if g(a) < g(c) {
                lo = a;
            } else {
                hi = c;
            }
        }
        0.5 * (lo + hi)
    };
    (golden(0.3, 0.5), golden(0.5, 0.7))
}

#[test]
fn subpixel_recovery_beats_blurred_maxima() {
    let b = 150.0;
    let (m1, m2) = blurred_maxima(b);
    assert!(
        m1 > 0.44 + 1e-3 && m2 < 0.56 - 1e-3,
        "maxima {m1}, {m2} are not biased inward"
    );

    let truth = ParameterSet::with_unit_coefficients(vec![vec![0.44], vec![0.56]]).unwrap();
    let psf = PsfModel::new(b, 1).unwrap();
    let img = render_image(&truth, &psf, 31, 1).unwrap();
    let loc = localize(&img, &psf, &LocalizeConfig::default()).unwrap();
    let mut t: Vec<f64> = loc.result.params.locations().iter().map(|x| x[0]).collect();
    t.sort_by(f64::total_cmp);
    assert!((t[0] - 0.44).abs() <= 1e-3 && (t[1] - 0.56).abs() <= 1e-3, "{t:?}");
    assert!((t[0] - m1).abs() > 1e-3 && (t[1] - m2).abs() > 1e-3);
}

#[test]
fn shift_covariance() {
    let p = three_sources();
    let psf = PsfModel::new(150.0, 2).unwrap();
    let base = localize(
        &render_image(&p, &psf, 31, 1).unwrap(),
        &psf,
        &LocalizeConfig::default(),
    )
    .unwrap();
    for shift in [[3, 0], [-5, 7], [31, 12]] {
        let delta: Vec<f64> = shift.iter().map(|&s| s as f64 / 31.0).collect();
        let moved = p.translated(&delta).unwrap();
        let loc = localize(
            &render_image(&moved, &psf, 31, 1).unwrap(),
            &psf,
            &LocalizeConfig::default(),
        )
        .unwrap();
        let expected = base.result.params.translated(&delta).unwrap();
        assert!(max_location_error(&expected, &loc.result.params).unwrap() <= 1e-6);
    }
}

#[test]
fn linearity_in_coefficients() {
    let p = three_sources();
    let psf = PsfModel::new(150.0, 2).unwrap();
    let cfg = LocalizeConfig::default();
    let one = localize(&render_image(&p, &psf, 31, 1).unwrap(), &psf, &cfg).unwrap();
    let doubled = p.scaled(Complex64::new(2.0, 0.0)).unwrap();
    let two = localize(&render_image(&doubled, &psf, 31, 1).unwrap(), &psf, &cfg).unwrap();
    assert!(max_location_error(&one.result.params, &two.result.params).unwrap() <= 1e-8);
    // same seed and a scaled pencil give the same eigenvalue order
    for (a, b) in one
        .result
        .params
        .coefficients()
        .iter()
        .zip(two.result.params.coefficients())
    {
        assert!((2.0 * a - b).norm() <= 1e-8);
    }
}

#[test]
fn band_limitation_is_necessary() {
    let p = three_sources();
    let psf = PsfModel::new(150.0, 2).unwrap();
    let noisy = render_image(&p, &psf, 31, 1).unwrap().add_noise(2.554, 3).unwrap();
    let line: Vec<Vec<i64>> = (-15..=15).map(|k| vec![0, k]).collect();
    let (ratio, _) = frequency_ratio(&dft_fourier_coeffs(&noisy, &line).unwrap(), &psf);
    let at = |k: i64| ratio.get(&[0, k]).unwrap().norm();
    assert!(at(15) > at(0), "|ratio(15)| = {} vs |ratio(0)| = {}", at(15), at(0));
    assert!(at(-15) > at(0));

    let cfg = LocalizeConfig {
        recon: ReconConfig {
            m_override: Some(3),
            ..ReconConfig::noisy()
        },
        ..Default::default()
    };
    let loc = localize(&noisy, &psf, &cfg).unwrap();
    assert!(max_location_error(&p, &loc.result.params).unwrap() < 0.05);
}

#[test]
fn band_must_respect_nyquist() {
    let p = three_sources();
    let psf = PsfModel::new(150.0, 2).unwrap();
    let img = render_image(&p, &psf, 9, 1).unwrap();
    let err = localize(&img, &psf, &LocalizeConfig::default()).unwrap_err();
    assert!(matches!(err.root(), mvprony::Error::Nyquist { .. }));
    assert_eq!(err.stage(), Some(mvprony::Stage::Fourier));
}

#[test]
fn background_is_removed() {
    let p = three_sources();
    let psf = PsfModel::new(150.0, 2).unwrap();
    let img = render_image(&p, &psf, 31, 1).unwrap();
    let offset = ImageGrid::new(2, 31, img.pixels().iter().map(|v| v + 0.25).collect()).unwrap();
    let cfg = LocalizeConfig {
        subtract_background: true,
        recon: ReconConfig::noisy(),
        ..Default::default()
    };
    let loc = localize(&offset, &psf, &cfg).unwrap();
    assert_eq!(loc.result.m_detected, 3);
    assert!((loc.background - 0.25 - img.median()).abs() < 1e-12);
    // the median of a sparse frame is almost the true offset
    assert!(max_location_error(&p, &loc.result.params).unwrap() <= 1e-3);
}

#[test]
fn blank_frame_is_zero_data() {
    let psf = PsfModel::new(150.0, 2).unwrap();
    let img = ImageGrid::new(2, 31, vec![0.0; 961]).unwrap();
    let err = localize(&img, &psf, &LocalizeConfig::default()).unwrap_err();
    assert!(matches!(err.root(), mvprony::Error::ZeroData(_)));
    assert!(err.is_numerical());
}

#[test]
fn trials_are_reproducible() {
    let p = three_sources();
    let psf = PsfModel::new(150.0, 2).unwrap();
    let cfg = TrialConfig {
        pixels: 31,
        shift_radius: 1,
        snr: 2.554,
        first_seed: 0,
        trials: 6,
        localize: LocalizeConfig {
            recon: ReconConfig {
                m_override: Some(3),
                ..ReconConfig::noisy()
            },
            ..Default::default()
        },
        fail_above: 0.05,
    };
    let a = noisy_trials(&p, &psf, &cfg).unwrap();
    let b = noisy_trials(&p, &psf, &cfg).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.trials.len(), 6);
    assert!(a.trials.windows(2).all(|w| w[0].seed + 1 == w[1].seed));
    assert!(a.median_error() <= a.max_error());
}
