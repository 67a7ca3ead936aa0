//! File formats: parameter and sample-table CSV, reconstruction results and
//! their text report, experiment tables with `#` comment headers, and
//! images as CSV matrices or PGM (P2/P5).

use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::microscopy::ImageGrid;
use crate::model::{ParameterSet, SampleTable};
use crate::pencil::ReconstructionResult;

fn parse_f64(field: &str, what: &str, line: u64) -> Result<f64> {
    field
        .trim()
        .parse::<f64>()
        .map_err(|_| Error::Parse(format!("line {line}: {what} {field:?} is not a number")))
}

fn parse_i64(field: &str, what: &str, line: u64) -> Result<i64> {
    field
        .trim()
        .parse::<i64>()
        .map_err(|_| Error::Parse(format!("line {line}: {what} {field:?} is not an integer")))
}

fn reader<R: Read>(input: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(input)
}

fn expect_header(headers: &csv::StringRecord, prefix: char, tail: [&str; 2]) -> Result<usize> {
    let cols: Vec<&str> = headers.iter().collect();
    if cols.len() < 3 {
        return Err(Error::Parse(format!("header {cols:?} has too few columns")));
    }
    let d = cols.len() - 2;
    for (i, name) in cols[..d].iter().enumerate() {
        let expected = format!("{prefix}{}", i + 1);
        if *name != expected {
            return Err(Error::Parse(format!(
                "header column {} is {name:?}, expected {expected:?}",
                i + 1
            )));
        }
    }
    if cols[d..] != tail {
        return Err(Error::Parse(format!(
            "header ends with {:?}, expected {tail:?}",
            &cols[d..]
        )));
    }
    Ok(d)
}

fn header_line(prefix: char, d: usize, tail: [&str; 2]) -> String {
    let mut cols: Vec<String> = (1..=d).map(|i| format!("{prefix}{i}")).collect();
    cols.extend(tail.iter().map(|s| s.to_string()));
    cols.join(",")
}

/// Parameter CSV: header `t1,…,td,c_re,c_im`, one row per source.
pub fn write_params<W: Write>(mut out: W, params: &ParameterSet) -> Result<()> {
    writeln!(out, "{}", header_line('t', params.dim(), ["c_re", "c_im"]))?;
    for (t, c) in params.locations().iter().zip(params.coefficients()) {
        let mut row: Vec<String> = t.iter().map(|x| format!("{x:e}")).collect();
        row.push(format!("{:e}", c.re));
        row.push(format!("{:e}", c.im));
        writeln!(out, "{}", row.join(","))?;
    }
    Ok(())
}

pub fn read_params<R: Read>(input: R) -> Result<ParameterSet> {
    let mut rdr = reader(input);
    let d = expect_header(rdr.headers()?, 't', ["c_re", "c_im"])?;
    let mut locations = Vec::new();
    let mut coefficients = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let t = (0..d)
            .map(|i| parse_f64(&rec[i], "coordinate", line))
            .collect::<Result<Vec<_>>>()?;
        locations.push(t);
        coefficients.push(Complex64::new(
            parse_f64(&rec[d], "c_re", line)?,
            parse_f64(&rec[d + 1], "c_im", line)?,
        ));
    }
    ParameterSet::new(locations, coefficients)
}

/// Sample-table CSV: header `k1,…,kd,re,im`.
pub fn write_samples<W: Write>(mut out: W, samples: &SampleTable) -> Result<()> {
    writeln!(out, "{}", header_line('k', samples.dim(), ["re", "im"]))?;
    for (k, v) in samples.iter() {
        let mut row: Vec<String> = k.iter().map(|x| x.to_string()).collect();
        row.push(format!("{:e}", v.re));
        row.push(format!("{:e}", v.im));
        writeln!(out, "{}", row.join(","))?;
    }
    Ok(())
}

pub fn read_samples<R: Read>(input: R) -> Result<SampleTable> {
    let mut rdr = reader(input);
    let d = expect_header(rdr.headers()?, 'k', ["re", "im"])?;
    let mut entries = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let k = (0..d)
            .map(|i| parse_i64(&rec[i], "index", line))
            .collect::<Result<Vec<_>>>()?;
        let v = Complex64::new(parse_f64(&rec[d], "re", line)?, parse_f64(&rec[d + 1], "im", line)?);
        entries.push((k, v));
    }
    SampleTable::from_entries(d, entries)
}

/// Human-readable diagnostics that accompany a result CSV.
pub fn result_report(result: &ReconstructionResult) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "M_detected: {}", result.m_detected);
    let _ = writeln!(s, "residual: {:e}", result.residual);
    match result.min_gap {
        Some(g) => {
            let _ = writeln!(s, "min_gap: {g:e}");
        }
        None => {
            let _ = writeln!(s, "min_gap: undefined");
        }
    }
    let _ = writeln!(s, "offdiag_max: {:e}", result.offdiag_max);
    let _ = writeln!(s, "retries: {}", result.retries);
    let _ = writeln!(s, "cond_W: {:e}", result.cond_w);
    let _ = writeln!(s, "max_modulus_deviation: {:e}", result.max_modulus_deviation);
    let _ = writeln!(s, "solve_time_ms: {:.3}", result.solve_time.as_secs_f64() * 1e3);
    let mu: Vec<String> = result
        .mu_used
        .iter()
        .map(|z| format!("{:e}{:+e}i", z.re, z.im))
        .collect();
    let _ = writeln!(s, "mu: {}", mu.join(" "));
    let sv: Vec<String> = result.singular_values.iter().map(|x| format!("{x:e}")).collect();
    let _ = writeln!(s, "singular_values: {}", sv.join(" "));
    for w in &result.warnings {
        let _ = writeln!(s, "warning: {w}");
    }
    s
}

/// Writes `<path>` (parameter CSV) and `<path>.report.txt`.
pub fn write_result(path: &Path, result: &ReconstructionResult, extra_report: &str) -> Result<()> {
    let mut body = Vec::new();
    write_params(&mut body, &result.params)?;
    fs::write(path, body)?;
    let mut report = result_report(result);
    report.push_str(extra_report);
    fs::write(report_path(path), report)?;
    Ok(())
}

pub fn report_path(path: &Path) -> std::path::PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(".report.txt");
    name.into()
}

/// A CSV table preceded by `# key: value` comment lines.
#[derive(Debug, Clone, Default)]
pub struct Table {
    pub meta: Vec<(String, String)>,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Self {
            meta: Vec::new(),
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn meta(mut self, key: &str, value: impl ToString) -> Self {
        self.meta.push((key.to_string(), value.to_string()));
        self
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn write<W: Write>(&self, mut out: W) -> Result<()> {
        for (k, v) in &self.meta {
            writeln!(out, "# {k}: {v}")?;
        }
        let mut w = csv::Writer::from_writer(out);
        w.write_record(&self.header)?;
        for row in &self.rows {
            w.write_record(row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        self.write(&mut buf)?;
        fs::write(path, buf)?;
        Ok(())
    }

    pub fn read<R: Read>(input: R) -> Result<Self> {
        let mut text = String::new();
        BufReader::new(input).read_to_string(&mut text)?;
        let meta = text
            .lines()
            .take_while(|l| l.starts_with('#'))
            .filter_map(|l| {
                let (k, v) = l.trim_start_matches('#').split_once(':')?;
                Some((k.trim().to_string(), v.trim().to_string()))
            })
            .collect();
        let mut rdr = reader(text.as_bytes());
        let header = rdr.headers()?.iter().map(String::from).collect();
        let rows = rdr
            .records()
            .map(|r| r.map(|rec| rec.iter().map(String::from).collect()))
            .collect::<std::result::Result<_, _>>()?;
        Ok(Self { meta, header, rows })
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }
}

/// 2-D image as a row-major CSV matrix without header.
pub fn write_image_csv<W: Write>(mut out: W, image: &ImageGrid) -> Result<()> {
    if image.dim() != 2 {
        return Err(Error::InvalidInput("CSV images must be two-dimensional".into()));
    }
    for row in image.pixels().chunks(image.side()) {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:e}")).collect();
        writeln!(out, "{}", cells.join(","))?;
    }
    Ok(())
}

pub fn read_image_csv<R: Read>(input: R) -> Result<ImageGrid> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, line) in BufReader::new(input).lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let row = line
            .split(',')
            .map(|f| parse_f64(f, "pixel", i as u64 + 1))
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    let side = rows.len();
    if let Some(bad) = rows.iter().position(|r| r.len() != side) {
        return Err(Error::Parse(format!(
            "image must be square: row {} has {} values for {side} rows",
            bad + 1,
            rows[bad].len()
        )));
    }
    ImageGrid::new(2, side, rows.into_iter().flatten().collect())
}

/// PGM flavor for [`write_pgm`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PgmFormat {
    /// P2, ASCII samples.
    Ascii,
    /// P5, binary samples (1 byte if maxval < 256, else 2 bytes big-endian).
    Binary,
}

/// Writes a 2-D image, linearly quantized from `[min, max]` onto
/// `{0,…,maxval}`.
pub fn write_pgm<W: Write>(mut out: W, image: &ImageGrid, format: PgmFormat, maxval: u16) -> Result<()> {
    if image.dim() != 2 {
        return Err(Error::InvalidInput("PGM images must be two-dimensional".into()));
    }
    if maxval == 0 {
        return Err(Error::InvalidInput("PGM maxval must be positive".into()));
    }
    let px = image.pixels();
    let lo = px.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = px.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = if hi > lo { hi - lo } else { 1.0 };
    let levels: Vec<u16> = px
        .iter()
        .map(|v| ((v - lo) / span * maxval as f64).round() as u16)
        .collect();
    write_pgm_levels(&mut out, image.side(), image.side(), &levels, format, maxval)
}

/// Writes raw gray levels.
pub fn write_pgm_levels<W: Write>(
    mut out: W,
    width: usize,
    height: usize,
    levels: &[u16],
    format: PgmFormat,
    maxval: u16,
) -> Result<()> {
    if levels.len() != width * height {
        return Err(Error::InvalidInput("level count does not match dimensions".into()));
    }
    if let Some(v) = levels.iter().find(|&&v| v > maxval) {
        return Err(Error::InvalidInput(format!("level {v} exceeds maxval {maxval}")));
    }
    match format {
        PgmFormat::Ascii => {
            writeln!(out, "P2\n{width} {height}\n{maxval}")?;
            for row in levels.chunks(width) {
                let cells: Vec<String> = row.iter().map(u16::to_string).collect();
                writeln!(out, "{}", cells.join(" "))?;
            }
        }
        PgmFormat::Binary => {
            write!(out, "P5\n{width} {height}\n{maxval}\n")?;
            let mut bytes = Vec::with_capacity(levels.len() * 2);
            for &v in levels {
                if maxval < 256 {
                    bytes.push(v as u8);
                } else {
                    bytes.extend_from_slice(&v.to_be_bytes());
                }
            }
            out.write_all(&bytes)?;
        }
    }
    Ok(())
}

/// Raw PGM contents: gray levels and the declared maxval.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pgm {
    pub width: usize,
    pub height: usize,
    pub maxval: u16,
    pub levels: Vec<u16>,
}

impl Pgm {
    /// Square frames only. Pixel values are the raw levels divided by
    /// `maxval`, so intensities are comparable across bit depths.
    pub fn to_image(&self) -> Result<ImageGrid> {
        if self.width != self.height {
            return Err(Error::InvalidInput(format!(
                "frame is {}x{}; only square frames map onto the torus",
                self.width, self.height
            )));
        }
        let scale = self.maxval as f64;
        ImageGrid::new(2, self.width, self.levels.iter().map(|&v| v as f64 / scale).collect())
    }
}

/// Parses P2 or P5 PGM, 8- or 16-bit.
pub fn read_pgm(bytes: &[u8]) -> Result<Pgm> {
    let mut pos = 0usize;
    let token = |pos: &mut usize| -> Result<String> {
        loop {
            while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
                *pos += 1;
            }
            if *pos < bytes.len() && bytes[*pos] == b'#' {
                while *pos < bytes.len() && bytes[*pos] != b'\n' {
                    *pos += 1;
                }
                continue;
            }
            break;
        }
        let start = *pos;
        while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if start == *pos {
            return Err(Error::Parse("unexpected end of PGM header".into()));
        }
        Ok(String::from_utf8_lossy(&bytes[start..*pos]).into_owned())
    };
    let magic = token(&mut pos)?;
    let num = |s: String, what: &str| -> Result<usize> {
        s.parse::<usize>()
            .map_err(|_| Error::Parse(format!("PGM {what} {s:?} is not a number")))
    };
    let width = num(token(&mut pos)?, "width")?;
    let height = num(token(&mut pos)?, "height")?;
    let maxval = num(token(&mut pos)?, "maxval")?;
    if maxval == 0 || maxval > 65535 {
        return Err(Error::Parse(format!("PGM maxval {maxval} out of range 1..=65535")));
    }
    let count = width * height;
    let levels: Vec<u16> = match magic.as_str() {
        "P2" => (0..count)
            .map(|_| {
                let v = num(token(&mut pos)?, "sample")?;
                if v > maxval {
                    return Err(Error::Parse(format!("PGM sample {v} exceeds maxval {maxval}")));
                }
                Ok(v as u16)
            })
            .collect::<Result<_>>()?,
        "P5" => {
            // exactly one whitespace byte separates maxval from the raster
            pos += 1;
            let width_bytes = if maxval < 256 { 1 } else { 2 };
            let raster = bytes
                .get(pos..pos + count * width_bytes)
                .ok_or_else(|| Error::Parse("PGM raster is truncated".into()))?;
            let levels: Vec<u16> = if width_bytes == 1 {
                raster.iter().map(|&b| b as u16).collect()
            } else {
                raster
                    .chunks_exact(2)
                    .map(|c| u16::from_be_bytes([c[0], c[1]]))
                    .collect()
            };
            if let Some(v) = levels.iter().find(|&&v| v as usize > maxval) {
                return Err(Error::Parse(format!("PGM sample {v} exceeds maxval {maxval}")));
            }
            levels
        }
        other => return Err(Error::Parse(format!("unsupported PGM magic {other:?}"))),
    };
    Ok(Pgm {
        width,
        height,
        maxval: maxval as u16,
        levels,
    })
}

/// Reads an image by extension: `.pgm` or CSV otherwise.
pub fn read_image(path: &Path) -> Result<ImageGrid> {
    let is_pgm = path
        .extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("pgm"));
    if is_pgm {
        read_pgm(&fs::read(path)?)?.to_image()
    } else {
        read_image_csv(fs::File::open(path)?)
    }
}
