//! On-disk formats.
//!
//! Trajectory container (`.cdyn`), all little-endian:
//!
//! | bytes | content                 |
//! |-------|-------------------------|
//! | 4     | magic `CDYN`            |
//! | 4     | format version (u32)    |
//! | 4     | grid size H (u32)       |
//! | 4     | frame count (u32)       |
//! | 8     | dt (f64)                |
//! | ...   | frames, row-major f64   |
//!
//! Model file (`.cdym`): magic `CDYM`, version, H, W, K (u32 each) followed
//! by `H*H*W` complex coefficients as interleaved `(re, im)` f64 pairs,
//! mode-major with the window position varying fastest.
//!
//! Manifests are plain `key = value` lines.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use rustfft::num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::{Field, Trajectory};

pub const TRAJECTORY_MAGIC: &[u8; 4] = b"CDYN";
pub const MODEL_MAGIC: &[u8; 4] = b"CDYM";
pub const FORMAT_VERSION: u32 = 1;

const TRAJECTORY_HEADER_LEN: usize = 24;
const MODEL_HEADER_LEN: usize = 20;

pub fn encode_trajectory(traj: &Trajectory) -> Vec<u8> {
    let h = traj.size();
    let mut out = Vec::with_capacity(TRAJECTORY_HEADER_LEN + traj.len() * h * h * 8);
    out.extend_from_slice(TRAJECTORY_MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(h as u32).to_le_bytes());
    out.extend_from_slice(&(traj.len() as u32).to_le_bytes());
    out.extend_from_slice(&traj.dt().to_le_bytes());
    for frame in traj.frames() {
        for v in frame.values() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

fn u32_at(bytes: &[u8], offset: usize) -> u32 {
    u32::from_le_bytes(bytes[offset..offset + 4].try_into().unwrap())
}

fn f64_at(bytes: &[u8], offset: usize) -> f64 {
    f64::from_le_bytes(bytes[offset..offset + 8].try_into().unwrap())
}

pub fn decode_trajectory(bytes: &[u8], origin: &Path) -> Result<Trajectory> {
    if bytes.len() < TRAJECTORY_HEADER_LEN {
        return Err(Error::format(origin, "truncated header"));
    }
    if &bytes[0..4] != TRAJECTORY_MAGIC {
        return Err(Error::format(origin, "bad magic, expected CDYN"));
    }
    let version = u32_at(bytes, 4);
    if version != FORMAT_VERSION {
        return Err(Error::format(
            origin,
            format!("unsupported version {version}"),
        ));
    }
    let h = u32_at(bytes, 8) as usize;
    let count = u32_at(bytes, 12) as usize;
    let dt = f64_at(bytes, 16);
    let expected = TRAJECTORY_HEADER_LEN + count * h * h * 8;
    if bytes.len() != expected {
        return Err(Error::format(
            origin,
            format!("expected {expected} bytes, found {}", bytes.len()),
        ));
    }
    let mut frames = Vec::with_capacity(count);
    let mut offset = TRAJECTORY_HEADER_LEN;
    for _ in 0..count {
        let values = (0..h * h).map(|c| f64_at(bytes, offset + 8 * c)).collect();
        offset += h * h * 8;
        frames.push(Field::new(h, values).map_err(|e| Error::format(origin, e.to_string()))?);
    }
    Trajectory::new(frames, dt).map_err(|e| Error::format(origin, e.to_string()))
}

pub fn write_trajectory(path: &Path, traj: &Trajectory) -> Result<()> {
    fs::write(path, encode_trajectory(traj))?;
    Ok(())
}

pub fn read_trajectory(path: &Path) -> Result<Trajectory> {
    let bytes = read_existing(path)?;
    decode_trajectory(&bytes, path)
}

fn read_existing(path: &Path) -> Result<Vec<u8>> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let mut bytes = Vec::new();
    fs::File::open(path)?.read_to_end(&mut bytes)?;
    Ok(bytes)
}

/// Raw contents of a model file.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelRecord {
    pub size: usize,
    pub window: usize,
    pub cutoff: usize,
    pub coeffs: Vec<Complex64>,
}

pub fn encode_model(rec: &ModelRecord) -> Vec<u8> {
    let mut out = Vec::with_capacity(MODEL_HEADER_LEN + rec.coeffs.len() * 16);
    out.extend_from_slice(MODEL_MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    for v in [rec.size, rec.window, rec.cutoff] {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    for c in &rec.coeffs {
        out.extend_from_slice(&c.re.to_le_bytes());
        out.extend_from_slice(&c.im.to_le_bytes());
    }
    out
}

pub fn decode_model(bytes: &[u8], origin: &Path) -> Result<ModelRecord> {
    if bytes.len() < MODEL_HEADER_LEN {
        return Err(Error::format(origin, "truncated header"));
    }
    if &bytes[0..4] != MODEL_MAGIC {
        return Err(Error::format(origin, "bad magic, expected CDYM"));
    }
    let version = u32_at(bytes, 4);
    if version != FORMAT_VERSION {
        return Err(Error::format(
            origin,
            format!("unsupported version {version}"),
        ));
    }
    let size = u32_at(bytes, 8) as usize;
    let window = u32_at(bytes, 12) as usize;
    let cutoff = u32_at(bytes, 16) as usize;
    let n = size * size * window;
    if bytes.len() != MODEL_HEADER_LEN + 16 * n {
        return Err(Error::format(
            origin,
            format!(
                "expected {} bytes, found {}",
                MODEL_HEADER_LEN + 16 * n,
                bytes.len()
            ),
        ));
    }
    let coeffs = (0..n)
        .map(|c| {
            let off = MODEL_HEADER_LEN + 16 * c;
            Complex64::new(f64_at(bytes, off), f64_at(bytes, off + 8))
        })
        .collect();
    Ok(ModelRecord {
        size,
        window,
        cutoff,
        coeffs,
    })
}

pub fn write_model(path: &Path, rec: &ModelRecord) -> Result<()> {
    fs::write(path, encode_model(rec))?;
    Ok(())
}

pub fn read_model(path: &Path) -> Result<ModelRecord> {
    let bytes = read_existing(path)?;
    decode_model(&bytes, path)
}

/// One CSV row per grid row.
pub fn field_to_csv(field: &Field) -> String {
    let h = field.size();
    let mut out = String::new();
    for row in field.values().chunks(h) {
        let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

/// Frames stacked vertically; the first column is the frame index.
pub fn trajectory_to_csv(traj: &Trajectory) -> String {
    let h = traj.size();
    let mut out = String::from("frame");
    for j in 0..h {
        out.push_str(&format!(",c{j}"));
    }
    out.push('\n');
    for (t, frame) in traj.frames().iter().enumerate() {
        for row in frame.values().chunks(h) {
            out.push_str(&t.to_string());
            for v in row {
                out.push(',');
                out.push_str(&v.to_string());
            }
            out.push('\n');
        }
    }
    out
}

pub type Manifest = BTreeMap<String, String>;

pub fn write_manifest(path: &Path, entries: &Manifest) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    for (k, v) in entries {
        writeln!(w, "{k} = {v}")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_manifest(path: &Path) -> Result<Manifest> {
    let text = String::from_utf8(read_existing(path)?)
        .map_err(|_| Error::format(path, "manifest is not UTF-8"))?;
    let mut out = Manifest::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::format(path, format!("line {}: expected key = value", n + 1)))?;
        out.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn traj(h: usize, n: usize, seed: f64) -> Trajectory {
        let frames = (0..n)
            .map(|t| {
                Field::from_fn(h, |i, j| seed * (i as f64 - j as f64) + t as f64 * 0.25).unwrap()
            })
            .collect();
        Trajectory::new(frames, 0.1).unwrap()
    }

    #[test]
    fn header_layout() {
        let bytes = encode_trajectory(&traj(4, 3, 1.0));
        assert_eq!(&bytes[0..4], b"CDYN");
        assert_eq!(u32_at(&bytes, 4), 1);
        assert_eq!(u32_at(&bytes, 8), 4);
        assert_eq!(u32_at(&bytes, 12), 3);
        assert_eq!(f64_at(&bytes, 16), 0.1);
        assert_eq!(bytes.len(), 24 + 3 * 16 * 8);
        // First value of frame 1 sits right after frame 0.
        assert_eq!(f64_at(&bytes, 24 + 16 * 8), 0.25);
    }

    #[test]
    fn rejects_corrupt_trajectory() {
        let mut bytes = encode_trajectory(&traj(4, 2, 1.0));
        let p = Path::new("x.cdyn");
        assert!(decode_trajectory(&bytes[..10], p).is_err());
        bytes.pop();
        assert!(matches!(
            decode_trajectory(&bytes, p),
            Err(Error::Format { .. })
        ));
        let mut bad = encode_trajectory(&traj(4, 2, 1.0));
        bad[0] = b'X';
        assert!(decode_trajectory(&bad, p).is_err());
    }

    #[test]
    fn missing_file_is_reported() {
        let err = read_trajectory(Path::new("/nonexistent/a.cdyn")).unwrap_err();
        assert!(matches!(err, Error::MissingFile(_)));
    }

    #[test]
    fn csv_shapes() {
        let f = Field::from_fn(4, |i, j| (i * 4 + j) as f64).unwrap();
        let csv = field_to_csv(&f);
        assert_eq!(csv.lines().count(), 4);
        assert_eq!(csv.lines().next().unwrap(), "0,1,2,3");
        assert_eq!(trajectory_to_csv(&traj(4, 2, 1.0)).lines().count(), 1 + 8);
    }

    #[test]
    fn manifest_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("manifest.txt");
        let mut m = Manifest::new();
        m.insert("seed".into(), "7".into());
        m.insert("solver".into(), "navier-stokes".into());
        write_manifest(&p, &m).unwrap();
        assert_eq!(read_manifest(&p).unwrap(), m);
    }

    proptest! {
        #[test]
        fn trajectory_round_trip(seed in -5.0f64..5.0, n in 2usize..5) {
            let t = traj(8, n, seed);
            prop_assert_eq!(decode_trajectory(&encode_trajectory(&t), Path::new("t")).unwrap(), t);
        }

        #[test]
        fn model_round_trip(re in proptest::collection::vec(-1e3f64..1e3, 32)) {
            let coeffs = re.chunks(2).map(|c| Complex64::new(c[0], c[1])).collect::<Vec<_>>();
            let rec = ModelRecord { size: 4, window: 1, cutoff: 1, coeffs };
            prop_assert_eq!(decode_model(&encode_model(&rec), Path::new("m")).unwrap(), rec);
        }
    }
}
