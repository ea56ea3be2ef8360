//! Matrix files (CSV and a small binary format), PGM mosaics and trace CSVs.
//!
//! Binary layout: the 6 bytes `DBNMF1`, rows and columns as little-endian
//! `u64`, then `rows * cols` little-endian `f64` values in row-major order.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;
use crate::model::{ConvergenceTrace, DeepState, SweepRecord};

pub const MAGIC: &[u8; 6] = b"DBNMF1";
const HEADER_LEN: usize = 6 + 8 + 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatrixFormat {
    Csv,
    Binary,
}

impl MatrixFormat {
    /// Binary when the file starts with the magic bytes, CSV otherwise.
    pub fn detect(path: &Path) -> Result<Self> {
        let bytes = fs::read(path)?;
        Ok(if bytes.starts_with(MAGIC) {
            MatrixFormat::Binary
        } else {
            MatrixFormat::Csv
        })
    }
}

fn parse_error(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

fn format_error(path: &Path, message: impl Into<String>) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

pub fn read_matrix(path: &Path, format: MatrixFormat) -> Result<DenseMatrix> {
    let m = match format {
        MatrixFormat::Csv => read_csv(path)?,
        MatrixFormat::Binary => read_binary(path)?,
    };
    let negatives = m.count_negative();
    if negatives > 0 {
        log::warn!("{} has {negatives} negative entries", path.display());
    }
    Ok(m)
}

/// Reads either format, chosen by [`MatrixFormat::detect`].
pub fn read_matrix_auto(path: &Path) -> Result<DenseMatrix> {
    read_matrix(path, MatrixFormat::detect(path)?)
}

pub fn write_matrix(m: &DenseMatrix, path: &Path, format: MatrixFormat) -> Result<()> {
    match format {
        MatrixFormat::Csv => write_csv(m, path),
        MatrixFormat::Binary => write_binary(m, path),
    }
}

/// One row per line, comma-separated; blank lines and lines starting with
/// `#` are skipped.
pub fn parse_csv(text: &str, path: &Path) -> Result<DenseMatrix> {
    let mut data = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut count = 0;
        for field in line.split(',') {
            let field = field.trim();
            let v: f64 = field
                .parse()
                .map_err(|_| parse_error(path, line_no, format!("invalid number {field:?}")))?;
            if !v.is_finite() {
                return Err(parse_error(path, line_no, format!("non-finite value {field:?}")));
            }
            data.push(v);
            count += 1;
        }
        match cols {
            None => cols = Some(count),
            Some(c) if c != count => {
                return Err(parse_error(
                    path,
                    line_no,
                    format!("ragged row: {count} values, expected {c}"),
                ))
            }
            _ => {}
        }
        rows += 1;
    }
    let cols = cols.ok_or_else(|| format_error(path, "no data rows"))?;
    DenseMatrix::from_row_major(rows, cols, data)
}

fn read_csv(path: &Path) -> Result<DenseMatrix> {
    parse_csv(&fs::read_to_string(path)?, path)
}

/// 17 significant digits, enough to round-trip every double.
pub fn format_value(v: f64) -> String {
    format!("{v:.16e}")
}

fn write_csv(m: &DenseMatrix, path: &Path) -> Result<()> {
    let mut out = BufWriter::new(fs::File::create(path)?);
    for i in 0..m.rows() {
        let line: Vec<String> = m.row(i).iter().map(|&v| format_value(v)).collect();
        writeln!(out, "{}", line.join(","))?;
    }
    out.flush()?;
    Ok(())
}

pub fn encode_binary(m: &DenseMatrix) -> Vec<u8> {
    let mut bytes = Vec::with_capacity(HEADER_LEN + 8 * m.as_slice().len());
    bytes.extend_from_slice(MAGIC);
    bytes.extend_from_slice(&(m.rows() as u64).to_le_bytes());
    bytes.extend_from_slice(&(m.cols() as u64).to_le_bytes());
    for v in m.as_slice() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    bytes
}

pub fn decode_binary(bytes: &[u8], path: &Path) -> Result<DenseMatrix> {
    if bytes.len() < HEADER_LEN || &bytes[..6] != MAGIC {
        return Err(format_error(path, "missing DBNMF1 header"));
    }
    let word = |at: usize| u64::from_le_bytes(bytes[at..at + 8].try_into().expect("8 bytes"));
    let (rows, cols) = (word(6), word(14));
    let count = rows
        .checked_mul(cols)
        .and_then(|n| usize::try_from(n).ok())
        .ok_or_else(|| format_error(path, "matrix size overflows"))?;
    let payload = &bytes[HEADER_LEN..];
    if Some(payload.len()) != count.checked_mul(8) {
        return Err(format_error(
            path,
            format!("payload has {} bytes, header declares {rows}x{cols}", payload.len()),
        ));
    }
    let data = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    DenseMatrix::from_row_major(rows as usize, cols as usize, data)
}

fn read_binary(path: &Path) -> Result<DenseMatrix> {
    decode_binary(&fs::read(path)?, path)
}

fn write_binary(m: &DenseMatrix, path: &Path) -> Result<()> {
    fs::write(path, encode_binary(m))?;
    Ok(())
}

/// Grayscale mosaic of feature rows; see [`write_mosaic_pgm`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mosaic {
    pub height: usize,
    pub width: usize,
    pub pixels: Vec<u8>,
}

/// Tiles each row of `features` as a `tile_h x tile_w` image, `grid_cols`
/// tiles per grid row, separated by 1-pixel lines of value 255. Each tile is
/// min-max scaled to `[0, 255]` on its own; a constant tile maps to 0.
pub fn render_mosaic(
    features: &DenseMatrix,
    tile_h: usize,
    tile_w: usize,
    grid_cols: usize,
) -> Result<Mosaic> {
    if tile_h == 0 || tile_w == 0 || grid_cols == 0 {
        return Err(Error::Config("tile sizes and grid columns must be positive".into()));
    }
    if features.cols() != tile_h * tile_w {
        return Err(Error::Dimension(format!(
            "features have {} entries, tile is {tile_h}x{tile_w}",
            features.cols()
        )));
    }
    let count = features.rows();
    let grid_cols = grid_cols.min(count.max(1));
    let grid_rows = count.div_ceil(grid_cols).max(1);
    let height = grid_rows * tile_h + grid_rows - 1;
    let width = grid_cols * tile_w + grid_cols - 1;
    let mut pixels = vec![255u8; height * width];
    for f in 0..count {
        let row = features.row(f);
        let lo = row.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let (gr, gc) = (f / grid_cols, f % grid_cols);
        let (y0, x0) = (gr * (tile_h + 1), gc * (tile_w + 1));
        for y in 0..tile_h {
            for x in 0..tile_w {
                let v = row[y * tile_w + x];
                let p = if hi > lo {
                    ((v - lo) / (hi - lo) * 255.0).round().clamp(0.0, 255.0) as u8
                } else {
                    0
                };
                pixels[(y0 + y) * width + x0 + x] = p;
            }
        }
    }
    Ok(Mosaic {
        height,
        width,
        pixels,
    })
}

/// Writes [`render_mosaic`] as a binary PGM (P5, maxval 255).
pub fn write_mosaic_pgm(
    features: &DenseMatrix,
    tile_h: usize,
    tile_w: usize,
    grid_cols: usize,
    path: &Path,
) -> Result<Mosaic> {
    let mosaic = render_mosaic(features, tile_h, tile_w, grid_cols)?;
    let mut out = BufWriter::new(fs::File::create(path)?);
    write!(out, "P5\n{} {}\n255\n", mosaic.width, mosaic.height)?;
    out.write_all(&mosaic.pixels)?;
    out.flush()?;
    Ok(mosaic)
}

pub fn trace_header(num_layers: usize) -> String {
    let mut cols = vec!["sweep".to_string(), "total_objective".to_string()];
    cols.extend((1..=num_layers).map(|l| format!("layer_err_{l}")));
    cols.extend((1..=num_layers).map(|l| format!("logdet_{l}")));
    cols.push("max_residual".into());
    cols.push("seconds".into());
    cols.join(",")
}

pub fn format_trace(trace: &ConvergenceTrace) -> String {
    let mut out = trace_header(trace.num_layers);
    out.push('\n');
    for r in &trace.records {
        let mut fields = vec![r.sweep.to_string(), format_value(r.total_objective)];
        fields.extend(r.layer_errors.iter().map(|&v| format_value(v)));
        fields.extend(r.logdets.iter().map(|&v| format_value(v)));
        fields.push(format_value(r.max_residual));
        fields.push(format_value(r.seconds));
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    out
}

pub fn write_trace(trace: &ConvergenceTrace, path: &Path) -> Result<()> {
    fs::write(path, format_trace(trace))?;
    Ok(())
}

pub fn read_trace(path: &Path) -> Result<ConvergenceTrace> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| format_error(path, "empty trace file"))?;
    let columns = header.split(',').count();
    if columns < 4 || (columns - 4) % 2 != 0 {
        return Err(parse_error(path, 1, "unexpected trace header"));
    }
    let layers = (columns - 4) / 2;
    if header != trace_header(layers) {
        return Err(parse_error(path, 1, "unexpected trace header"));
    }
    let mut trace = ConvergenceTrace::new(layers);
    for (idx, line) in lines {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != columns {
            return Err(parse_error(
                path,
                line_no,
                format!("{} fields, expected {columns}", fields.len()),
            ));
        }
        let sweep = fields[0]
            .parse()
            .map_err(|_| parse_error(path, line_no, "invalid sweep index"))?;
        let values: Vec<f64> = fields[1..]
            .iter()
            .map(|f| f.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| parse_error(path, line_no, "invalid number"))?;
        trace.push(SweepRecord {
            sweep,
            total_objective: values[0],
            layer_errors: values[1..1 + layers].to_vec(),
            logdets: values[1 + layers..1 + 2 * layers].to_vec(),
            max_residual: values[1 + 2 * layers],
            seconds: values[2 + 2 * layers],
        })?;
    }
    Ok(trace)
}

/// Reads a hyperspectral sidecar holding a single `width,height` pair.
pub fn read_image_sidecar(path: &Path) -> Result<(usize, usize)> {
    let text = fs::read_to_string(path)?;
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let parts: Vec<&str> = line.split(',').map(str::trim).collect();
        if parts.len() != 2 {
            return Err(parse_error(path, idx + 1, "expected width,height"));
        }
        let parse = |s: &str| {
            s.parse::<usize>()
                .map_err(|_| parse_error(path, idx + 1, format!("invalid size {s:?}")))
        };
        return Ok((parse(parts[0])?, parse(parts[1])?));
    }
    Err(format_error(path, "empty sidecar"))
}

pub fn factor_path(dir: &Path, kind: char, layer: usize) -> PathBuf {
    dir.join(format!("{kind}_{layer}.bin"))
}

/// Writes `W_0.bin` (the data), `W_l.bin` and `H_l.bin` for every layer.
pub fn write_factors(dir: &Path, state: &DeepState) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_binary(&state.x, &factor_path(dir, 'W', 0))?;
    for l in 0..state.num_layers() {
        write_binary(&state.w[l], &factor_path(dir, 'W', l + 1))?;
        write_binary(&state.h[l], &factor_path(dir, 'H', l + 1))?;
    }
    Ok(())
}

/// Inverse of [`write_factors`]; the layer count is inferred from the files.
pub fn read_factors(dir: &Path) -> Result<DeepState> {
    let x = read_binary(&factor_path(dir, 'W', 0))?;
    let (mut w, mut h) = (Vec::new(), Vec::new());
    let mut l = 1;
    while factor_path(dir, 'W', l).exists() {
        w.push(read_binary(&factor_path(dir, 'W', l))?);
        h.push(read_binary(&factor_path(dir, 'H', l))?);
        l += 1;
    }
    if w.is_empty() {
        return Err(format_error(dir, "no factor files W_1.bin found"));
    }
    DeepState::new(x, w, h)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p() -> PathBuf {
        PathBuf::from("test.csv")
    }

    #[test]
    fn parses_simple_csv() {
        let m = parse_csv("1,2\n3,4\n", &p()).unwrap();
        assert_eq!(m, DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap());
        let m = parse_csv("# comment\n1, 2\n\n3,4", &p()).unwrap();
        assert_eq!(m.shape(), (2, 2));
    }

    #[test]
    fn ragged_csv_reports_line() {
        match parse_csv("1,2\n3\n", &p()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
        match parse_csv("1,x\n", &p()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 1),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn binary_round_trip_is_exact() {
        let m = DenseMatrix::from_rows(&[vec![0.1, 1.0 / 3.0, 1e-300], vec![2.5e10, 0.0, -0.0]]).unwrap();
        let back = decode_binary(&encode_binary(&m), &p()).unwrap();
        assert_eq!(
            back.as_slice().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            m.as_slice().iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
    }

    #[test]
    fn truncated_binary_is_rejected() {
        let m = DenseMatrix::filled(2, 2, 1.0);
        let bytes = encode_binary(&m);
        assert!(decode_binary(&bytes[..bytes.len() - 1], &p()).is_err());
        assert!(decode_binary(b"DBNMF", &p()).is_err());
    }

    #[test]
    fn csv_text_round_trips_values() {
        let m = DenseMatrix::from_rows(&[vec![0.1, 1.0 / 3.0], vec![std::f64::consts::PI, 1e-17]]).unwrap();
        let text: String = (0..m.rows())
            .map(|i| {
                m.row(i).iter().map(|&v| format_value(v)).collect::<Vec<_>>().join(",") + "\n"
            })
            .collect();
        assert_eq!(parse_csv(&text, &p()).unwrap(), m);
    }

    #[test]
    fn mosaic_examples() {
        let f = DenseMatrix::from_rows(&[vec![0.0, 1.0, 2.0, 3.0]]).unwrap();
        let m = render_mosaic(&f, 2, 2, 1).unwrap();
        assert_eq!(m.pixels, vec![0, 85, 170, 255]);

        let c = DenseMatrix::filled(1, 4, 7.0);
        assert_eq!(render_mosaic(&c, 2, 2, 1).unwrap().pixels, vec![0; 4]);

        let four = DenseMatrix::from_fn(4, 4, |i, j| (i + j) as f64);
        let m = render_mosaic(&four, 2, 2, 2).unwrap();
        assert_eq!((m.height, m.width), (5, 5));
        for k in 0..5 {
            assert_eq!(m.pixels[2 * 5 + k], 255);
            assert_eq!(m.pixels[k * 5 + 2], 255);
        }

        assert!(render_mosaic(&f, 3, 2, 1).is_err());
    }

    #[test]
    fn trace_header_layout() {
        assert_eq!(
            trace_header(2),
            "sweep,total_objective,layer_err_1,layer_err_2,logdet_1,logdet_2,max_residual,seconds"
        );
    }
}
