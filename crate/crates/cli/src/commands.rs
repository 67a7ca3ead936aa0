use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::time::Instant;

use log::{info, warn};
use mvprony::io::{self, PgmFormat, Table};
use mvprony::microscopy::{
    localize as run_localize, noisy_trials, render_image, ImageGrid, LocalizeConfig, PsfModel, TrialConfig,
};
use mvprony::model::{min_separation, random_params, sample_grid, AddNoise, ParameterSet};
use mvprony::pencil::{
    assemble_pencil_matrices, build_pencil, max_location_error, reduced_svd_rank, GridOrder, ReconConfig,
    ReconstructionResult,
};
use mvprony::presets::Preset;
use mvprony::randsphere::{
    band_measure, beta_bound, emit_gap_map, mc_gap_experiment, GapMapMode, GapSource, GapTarget,
};
use mvprony::{Error, Result};
use num_complex::Complex64;

use crate::{GapMapArgs, ImageFormat, LocalizeArgs, McBoundArgs, ReconArgs, ReconstructArgs, SweepArgs, SynthArgs};

fn num(x: f64) -> String {
    format!("{x:e}")
}

fn recon_config(args: &ReconArgs, default_rank_tol: f64) -> Result<ReconConfig> {
    let rank_tol = args.rank_tol.unwrap_or(default_rank_tol);
    if !(rank_tol > 0.0 && rank_tol < 1.0) {
        return Err(Error::InvalidInput(format!(
            "--rank-tol must lie in (0,1), got {rank_tol}"
        )));
    }
    if !(args.gap_tol > 0.0) {
        return Err(Error::InvalidInput(format!(
            "--gap-tol must be positive, got {}",
            args.gap_tol
        )));
    }
    Ok(ReconConfig {
        rank_tol,
        m_override: args.m,
        gap_tol: args.gap_tol,
        max_retries: args.retries,
        seed: args.seed,
    })
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    Ok(())
}

fn write_csv<F>(path: &Path, f: F) -> Result<()>
where
    F: FnOnce(&mut Vec<u8>) -> Result<()>,
{
    let mut buf = Vec::new();
    f(&mut buf)?;
    fs::write(path, buf)?;
    Ok(())
}

fn truth_lines(truth: Option<&Path>, result: &ReconstructionResult) -> Result<String> {
    let Some(path) = truth else {
        return Ok(String::new());
    };
    let truth = io::read_params(fs::File::open(path)?)?;
    Ok(match max_location_error(&truth, &result.params) {
        Some(e) => format!("max_location_error: {e:e}\n"),
        None => format!(
            "max_location_error: undefined (truth has {} sources, result {})\n",
            truth.order(),
            result.params.order()
        ),
    })
}

pub fn synth(args: SynthArgs) -> Result<()> {
    let preset = args.preset.as_deref().map(Preset::load).transpose()?;
    let params = match &preset {
        Some(p) => p.params()?,
        None => random_params(args.m, args.d, args.seed, args.min_sep)?,
    };
    let n = args.n.or(preset.as_ref().map(|p| p.n)).unwrap_or(4);
    ensure_dir(&args.out)?;
    write_csv(&args.out.join("params.csv"), |b| io::write_params(b, &params))?;
    write_csv(&args.out.join("samples.csv"), |b| {
        io::write_samples(b, &sample_grid(&params, n))
    })?;

    let pixels = args.pixels.or(preset.as_ref().map(|p| p.pixels));
    let Some(pixels) = pixels else {
        info!("no --P given, skipping image");
        return Ok(());
    };
    let b = args
        .b
        .or(preset.as_ref().map(|p| p.b))
        .ok_or_else(|| Error::InvalidInput("rendering an image needs --b".into()))?;
    if params.coefficients().iter().any(|c| c.im != 0.0) {
        warn!("complex coefficients: only the real part is rendered");
    }
    let psf = PsfModel::new(b, params.dim())?;
    let mut image = render_image(&params, &psf, pixels, args.shift_radius)?;
    let snr = if args.clean {
        None
    } else {
        args.snr.or(preset.as_ref().and_then(|p| p.snr))
    };
    if let Some(snr) = snr {
        image = image.add_noise(snr, args.seed)?;
    }
    if let Some(offset) = args.background.or(preset.as_ref().and_then(|p| p.background)) {
        image = ImageGrid::new(
            image.dim(),
            image.side(),
            image.pixels().iter().map(|v| v + offset).collect(),
        )?;
    }
    if matches!(args.image_format, ImageFormat::Csv | ImageFormat::Both) {
        write_csv(&args.out.join("image.csv"), |buf| io::write_image_csv(buf, &image))?;
    }
    if matches!(args.image_format, ImageFormat::Pgm | ImageFormat::Both) {
        if image.dim() != 2 {
            return Err(Error::InvalidInput("PGM output needs d = 2".into()));
        }
        write_csv(&args.out.join("image.pgm"), |buf| {
            io::write_pgm(buf, &image, PgmFormat::Binary, 65535)
        })?;
    }
    Ok(())
}

pub fn reconstruct(args: ReconstructArgs) -> Result<()> {
    let samples = io::read_samples(fs::File::open(&args.input)?)?;
    let cfg = recon_config(&args.recon, 1e-6)?;
    let result = mvprony::reconstruct(&samples, &cfg)?;
    let extra = truth_lines(args.truth.as_deref(), &result)?;
    io::write_result(&args.out, &result, &extra)
}

pub fn localize(args: LocalizeArgs) -> Result<()> {
    let image = io::read_image(&args.input)?;
    let preset = args.preset.as_deref().map(Preset::load).transpose()?;
    let b = args
        .b
        .or(preset.as_ref().map(|p| p.b))
        .ok_or_else(|| Error::InvalidInput("--b (PSF sharpness) is required".into()))?;
    let psf = PsfModel::new(b, image.dim())?;
    let is_pgm = args.input.extension().is_some_and(|e| e.eq_ignore_ascii_case("pgm"));
    let subtract_background = if args.background {
        true
    } else if args.no_background {
        false
    } else {
        is_pgm
    };
    let cfg = LocalizeConfig {
        n: args.n,
        recon: recon_config(&args.recon, 1e-2)?,
        subtract_background,
    };
    let loc = run_localize(&image, &psf, &cfg)?;
    let mut extra = String::new();
    let _ = writeln!(extra, "background: {:e}", loc.background);
    let _ = writeln!(extra, "max_amplification: {:e}", loc.ratio.max_amplification);
    let _ = writeln!(extra, "relative_amplification: {:e}", loc.ratio.relative_amplification);
    extra.push_str(&truth_lines(args.truth.as_deref(), &loc.result)?);
    io::write_result(&args.out, &loc.result, &extra)
}

pub fn mc_bound(args: McBoundArgs) -> Result<()> {
    let mut table = Table::new(&[
        "d",
        "epsilon",
        "trials",
        "empirical_freq",
        "freq_stderr",
        "exact_law",
        "band_measure",
        "beta_bound",
        "theorem_bound",
        "normalized_sq_gap",
        "normalized_sq_gap_stderr",
    ])
    .meta("command", "mc-bound")
    .meta("seed", args.seed)
    .meta("trials", args.trials)
    .meta("workers", args.workers);
    for &d in &args.d {
        if d == 0 {
            return Err(Error::InvalidInput("--d must be >= 1".into()));
        }
        // rotation invariance: the first basis vector stands for any unit y
        let mut a = vec![Complex64::new(0.0, 0.0); d];
        a[0] = Complex64::new(1.0, 0.0);
        let target = GapTarget::Pair(a, vec![Complex64::new(0.0, 0.0); d]);
        for &eps in &args.epsilon {
            let r = mc_gap_experiment(&target, eps, args.trials, args.seed, args.workers)?;
            table.push(vec![
                d.to_string(),
                num(eps),
                args.trials.to_string(),
                num(r.empirical_freq),
                num(r.freq_stderr),
                num(r.exact_law_freq),
                num(band_measure(eps, d)?),
                num(beta_bound(eps, d)),
                num(r.bound),
                num(r.normalized_sq_gap),
                num(r.normalized_sq_gap_stderr),
            ]);
        }
    }
    table.save(&args.out)
}

pub fn gap_map(args: GapMapArgs) -> Result<()> {
    let mode: GapMapMode = args.mode.parse()?;
    let d = mode.dim();
    let params = random_params(args.m, d, args.seed, None)?;
    let source = if args.from_nodes {
        GapSource::Nodes(params.nodes())
    } else {
        let order = GridOrder::new(d, args.n);
        let (t, shifts) = assemble_pencil_matrices(&sample_grid(&params, args.n), order)?;
        let svd = reduced_svd_rank(&t, 1e-8, Some(args.m))?;
        GapSource::Pencil(build_pencil(&svd, &shifts))
    };
    let map = emit_gap_map(&source, mode, args.rows, args.cols)?;
    let minima = map.local_minima(args.threshold);
    let mut table = Table::new(&["theta", "phi", "x", "y", "z", "min_gap"])
        .meta("command", "gap-map")
        .meta("mode", mode)
        .meta("seed", args.seed)
        .meta("M", args.m)
        .meta("rows", args.rows)
        .meta("cols", args.cols)
        .meta("threshold", num(args.threshold))
        .meta("local_minima_below_threshold", minima.len());
    for i in 0..map.rows {
        for j in 0..map.cols {
            let (theta, phi) = (map.theta(i), map.phi(j));
            let p = mode.sphere_point(theta, phi);
            table.push(vec![
                num(theta),
                num(phi),
                num(p[0]),
                num(p[1]),
                num(p[2]),
                num(map.gap(i, j)),
            ]);
        }
    }
    table.save(&args.out)
}

pub fn sweep_separation(args: SweepArgs) -> Result<()> {
    if args.trials == 0 {
        return Err(Error::InvalidInput("--trials must be >= 1".into()));
    }
    let mut cells = Table::new(&[
        "preset",
        "q",
        "n",
        "trials",
        "median_error",
        "max_error",
        "failure_rate",
        "majority_failed",
    ])
    .meta("command", "sweep-separation")
    .meta("seed", args.seed)
    .meta("trials", args.trials)
    .meta("fail_above", num(args.fail_above))
    .meta(
        "order",
        if args.detect_rank {
            "detected"
        } else {
            "preset source count"
        },
    );
    let mut per_trial = Table::new(&["preset", "n", "seed", "max_error", "m_detected", "failed"]);
    for name in &args.preset {
        let preset = Preset::load(name)?;
        let truth: ParameterSet = preset.params()?;
        let psf = preset.psf()?;
        let snr = args
            .snr
            .or(preset.snr)
            .ok_or_else(|| Error::InvalidInput(format!("preset {name} has no snr; pass --snr")))?;
        let q = min_separation(&truth)?;
        for &n in &args.n {
            let started = Instant::now();
            let cfg = TrialConfig {
                pixels: preset.pixels,
                shift_radius: args.shift_radius,
                snr,
                first_seed: args.seed,
                trials: args.trials,
                localize: LocalizeConfig {
                    n,
                    recon: ReconConfig {
                        rank_tol: args.rank_tol,
                        m_override: (!args.detect_rank).then_some(truth.order()),
                        ..ReconConfig::default()
                    },
                    subtract_background: false,
                },
                fail_above: args.fail_above,
            };
            let summary = noisy_trials(&truth, &psf, &cfg)?;
            info!("{name} n={n}: {:.2?}", started.elapsed());
            let rate = summary.failure_rate();
            cells.push(vec![
                preset.name.clone(),
                num(q),
                n.to_string(),
                args.trials.to_string(),
                num(summary.median_error()),
                num(summary.max_error()),
                num(rate),
                (rate > 0.5).to_string(),
            ]);
            for t in &summary.trials {
                per_trial.push(vec![
                    preset.name.clone(),
                    n.to_string(),
                    t.seed.to_string(),
                    t.error.map_or("inf".to_string(), num),
                    t.m_detected.map_or("none".to_string(), |m| m.to_string()),
                    t.failed.to_string(),
                ]);
            }
        }
    }
    cells.save(&args.out)?;
    let mut trials_path = args.out.clone().into_os_string();
    trials_path.push(".trials.csv");
    per_trial.save(Path::new(&trials_path))
}
