//! LLD CSV files: ingestion of externally computed descriptor tables and the
//! per-clip vector files written by the feature command.

use std::fs;
use std::io::Write;
use std::path::Path;

use super::{AudioError, LldMatrix, LldVector, HOP_SECONDS, WINDOW_SECONDS};

struct LldTable {
    timestamps: Vec<f64>,
    matrix: LldMatrix,
}

fn detect_delimiter(text: &str) -> u8 {
    let header = text.lines().next().unwrap_or("");
    if header.contains(';') {
        b';'
    } else {
        b','
    }
}

fn parse_cell(cell: &str, row: usize) -> Result<f64, AudioError> {
    cell.trim()
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| AudioError::NonNumeric { row, cell: cell.to_owned() })
}

/// Reads `timestamp` + D descriptor columns. Row numbers in errors are
/// 1-based file lines (the header is line 1).
fn read_table(path: &Path) -> Result<LldTable, AudioError> {
    let text = fs::read_to_string(path)?;
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(detect_delimiter(&text))
        .has_headers(true)
        .flexible(true)
        .from_reader(text.as_bytes());
    let width = reader.headers()?.len();
    if width < 2 {
        return Err(AudioError::NoDescriptors);
    }
    let dim = width - 1;
    let mut timestamps = Vec::new();
    let mut values = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec?;
        let row = i + 2;
        if rec.len() != width {
            return Err(AudioError::RaggedRow { row, expected: width, found: rec.len() });
        }
        timestamps.push(parse_cell(&rec[0], row)?);
        for cell in rec.iter().skip(1) {
            values.push(parse_cell(cell, row)?);
        }
    }
    Ok(LldTable { timestamps, matrix: LldMatrix::new(dim, values) })
}

/// Groups precomputed LLD rows by video frame and keeps the first two rows of
/// each frame. Frame `k` starts at `max(0, k−1)/fps`; near the end of the
/// table the last two rows are used as long as they lie within one analysis
/// region of the frame start.
pub fn ingest_precomputed(
    path: &Path,
    fps: f64,
    n_video_frames: usize,
) -> Result<Vec<LldVector>, AudioError> {
    if !(fps.is_finite() && fps > 0.0) {
        return Err(AudioError::BadFps(fps));
    }
    let table = read_table(path)?;
    let ts = &table.timestamps;
    let rows = ts.len();
    let eps = 1e-6;
    (0..n_video_frames)
        .map(|k| {
            if rows < 2 {
                return Err(AudioError::FrameNotCovered { frame: k });
            }
            let start = (k.saturating_sub(1)) as f64 / fps;
            let mut i = ts.iter().position(|&t| t >= start - eps).unwrap_or(rows);
            if i + 1 >= rows {
                i = rows - 2;
                if ts[i] < start - (WINDOW_SECONDS + HOP_SECONDS) - eps {
                    return Err(AudioError::FrameNotCovered { frame: k });
                }
            }
            let mut v = table.matrix.row(i).to_vec();
            v.extend_from_slice(table.matrix.row(i + 1));
            LldVector::new(v)
        })
        .collect()
}

/// Writes a descriptor table in the precomputed-LLD format.
pub fn write_lld_csv(
    path: &Path,
    descriptor_names: &[&str],
    timestamps: &[f64],
    matrix: &LldMatrix,
) -> Result<(), AudioError> {
    let mut out = String::from("timestamp");
    for name in descriptor_names {
        out.push(';');
        out.push_str(name);
    }
    out.push('\n');
    for (r, t) in timestamps.iter().enumerate() {
        out.push_str(&format!("{t}"));
        for v in matrix.row(r) {
            out.push_str(&format!(";{v}"));
        }
        out.push('\n');
    }
    fs::File::create(path)?.write_all(out.as_bytes())?;
    Ok(())
}

/// Writes one LLD vector per video frame: header `frame,lld_0,…`.
pub fn write_lld_vectors(path: &Path, vectors: &[LldVector]) -> Result<(), AudioError> {
    let dim = super::check_uniform_dimension(vectors)?;
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["frame".to_owned()];
    header.extend((0..dim).map(|i| format!("lld_{i}")));
    w.write_record(&header)?;
    for (k, v) in vectors.iter().enumerate() {
        let mut rec = vec![k.to_string()];
        rec.extend(v.values().iter().map(|x| format!("{x}")));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_lld_vectors(path: &Path) -> Result<Vec<LldVector>, AudioError> {
    let table = read_table(path)?;
    let out: Vec<LldVector> = (0..table.matrix.n_rows())
        .map(|r| LldVector::new(table.matrix.row(r).to_vec()))
        .collect::<Result<_, _>>()?;
    super::check_uniform_dimension(&out)?;
    Ok(out)
}
