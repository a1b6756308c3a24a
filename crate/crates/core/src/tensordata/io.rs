use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use super::SnapshotSet;
use crate::error::{Error, Result};

const KTO1_MAGIC: &[u8; 4] = b"KTO1";

/// On-disk representations of a [`SnapshotSet`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    /// One snapshot per row, comma separated, optionally with a header line.
    Csv { header: bool },
    /// `KTO1` little-endian binary tensor file.
    Kto1,
    /// Directory of binary grayscale PGM (P5) frames.
    Pgm,
    /// Directory of binary RGB PPM (P6) frames.
    Ppm,
}

impl Format {
    /// Guesses the format from the path: `.kto`/`.kto1` files, `.csv` files,
    /// single `.pgm`/`.ppm` files, or a directory holding frames.
    pub fn infer(path: &Path) -> Result<Self> {
        if path.is_dir() {
            let entries = frame_files(path, "pgm")?;
            if !entries.is_empty() {
                return Ok(Format::Pgm);
            }
            if !frame_files(path, "ppm")?.is_empty() {
                return Ok(Format::Ppm);
            }
            return Err(Error::parse(path, "directory holds no .pgm or .ppm frames"));
        }
        let ext = path
            .extension()
            .and_then(|e| e.to_str())
            .map(str::to_ascii_lowercase);
        match ext.as_deref() {
            Some("kto") | Some("kto1") | Some("bin") => Ok(Format::Kto1),
            Some("csv") => Ok(Format::Csv { header: false }),
            Some("pgm") => Ok(Format::Pgm),
            Some("ppm") => Ok(Format::Ppm),
            _ => Err(Error::parse(path, "cannot infer format from file name")),
        }
    }
}

pub fn load(path: &Path, format: Format) -> Result<SnapshotSet> {
    match format {
        Format::Csv { header } => {
            let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            parse_csv(path, &text, header)
        }
        Format::Kto1 => {
            let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
            from_kto1_bytes(&bytes).map_err(|e| match e {
                Error::Parse { message, .. } => Error::parse(path, message),
                other => other,
            })
        }
        Format::Pgm => load_frames(path, "pgm"),
        Format::Ppm => load_frames(path, "ppm"),
    }
}

/// Writes `set` to `path`. Image formats write one file per frame into the
/// directory `path`, which is created if needed.
pub fn save(set: &SnapshotSet, path: &Path, format: Format) -> Result<()> {
    match format {
        Format::Csv { header } => {
            let text = format_csv(set, header);
            fs::write(path, text).map_err(|e| Error::io(path, e))
        }
        Format::Kto1 => fs::write(path, to_kto1_bytes(set)).map_err(|e| Error::io(path, e)),
        Format::Pgm => save_frames(set, path, false),
        Format::Ppm => save_frames(set, path, true),
    }
}

pub fn to_kto1_bytes(set: &SnapshotSet) -> Vec<u8> {
    let shape = set.shape();
    let mut out = Vec::with_capacity(4 + 4 + 8 * shape.len() + 8 + 8 * set.data().len());
    out.extend_from_slice(KTO1_MAGIC);
    out.extend_from_slice(&(shape.len() as u32).to_le_bytes());
    for &d in shape {
        out.extend_from_slice(&(d as u64).to_le_bytes());
    }
    out.extend_from_slice(&(set.count() as u64).to_le_bytes());
    for v in set.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn from_kto1_bytes(bytes: &[u8]) -> Result<SnapshotSet> {
    let err = |m: &str| Error::parse("<kto1>", m);
    let mut cursor = bytes;
    let mut take = |n: usize| -> Result<&[u8]> {
        if cursor.len() < n {
            return Err(err("truncated KTO1 data"));
        }
        let (head, tail) = cursor.split_at(n);
        cursor = tail;
        Ok(head)
    };
    if take(4)? != KTO1_MAGIC {
        return Err(err("missing KTO1 magic"));
    }
    let rank = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
    if rank == 0 || rank > 32 {
        return Err(err("implausible tensor rank"));
    }
    let mut shape = Vec::with_capacity(rank);
    for _ in 0..rank {
        shape.push(u64::from_le_bytes(take(8)?.try_into().unwrap()) as usize);
    }
    let count = u64::from_le_bytes(take(8)?.try_into().unwrap()) as usize;
    let total = shape
        .iter()
        .try_fold(count, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| err("tensor size overflows"))?;
    let body = take(total.checked_mul(8).ok_or_else(|| err("tensor size overflows"))?)?;
    if !cursor.is_empty() {
        return Err(err("trailing bytes after KTO1 payload"));
    }
    let data = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    SnapshotSet::new(shape, data)
}

/// Hex SHA-256 of the canonical KTO1 encoding of `set`.
pub fn content_hash(set: &SnapshotSet) -> String {
    let digest = Sha256::digest(to_kto1_bytes(set));
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

fn parse_csv(path: &Path, text: &str, header: bool) -> Result<SnapshotSet> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    if header {
        lines.next();
    }
    for (lineno, line) in lines {
        let row = line
            .split(',')
            .map(|field| {
                field.trim().parse::<f64>().map_err(|e| {
                    Error::parse(path, format!("line {}: {:?}: {e}", lineno + 1, field.trim()))
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(Error::ShapeMismatch(format!(
                    "{}: line {} has {} fields, expected {}",
                    path.display(),
                    lineno + 1,
                    row.len(),
                    first.len()
                )));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::parse(path, "no data rows"));
    }
    SnapshotSet::from_rows(&rows)
}

fn format_csv(set: &SnapshotSet, header: bool) -> String {
    let mut out = String::new();
    if header {
        let names: Vec<String> = (0..set.dim()).map(|i| format!("c{i}")).collect();
        out.push_str(&names.join(","));
        out.push('\n');
    }
    for snap in set.iter() {
        let fields: Vec<String> = snap.iter().map(|v| v.to_string()).collect();
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    out
}

fn frame_files(dir: &Path, ext: &str) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let p = entry.map_err(|e| Error::io(dir, e))?.path();
        let matches = p
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| e.eq_ignore_ascii_case(ext));
        if matches && p.is_file() {
            files.push(p);
        }
    }
    files.sort();
    Ok(files)
}

fn load_frames(path: &Path, ext: &str) -> Result<SnapshotSet> {
    let files = if path.is_dir() {
        frame_files(path, ext)?
    } else {
        vec![path.to_path_buf()]
    };
    if files.is_empty() {
        return Err(Error::parse(path, format!("no .{ext} frames found")));
    }
    let mut shape: Option<Vec<usize>> = None;
    let mut data = Vec::new();
    for file in &files {
        let bytes = fs::read(file).map_err(|e| Error::io(file, e))?;
        let (frame_shape, values) = decode_netpbm(file, &bytes)?;
        match &shape {
            None => shape = Some(frame_shape),
            Some(s) if *s != frame_shape => {
                return Err(Error::ShapeMismatch(format!(
                    "{} has shape {frame_shape:?}, earlier frames {s:?}",
                    file.display()
                )))
            }
            _ => {}
        }
        data.extend(values);
    }
    SnapshotSet::new(shape.unwrap(), data)
}

fn decode_netpbm(path: &Path, bytes: &[u8]) -> Result<(Vec<usize>, Vec<f64>)> {
    let channels = match bytes.get(..2) {
        Some(b"P5") => 1,
        Some(b"P6") => 3,
        _ => return Err(Error::parse(path, "not a binary PGM (P5) or PPM (P6) file")),
    };
    let mut pos = 2;
    let mut header = [0usize; 3];
    for slot in header.iter_mut() {
        // whitespace and comments
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                _ => break,
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        let token = std::str::from_utf8(&bytes[start..pos]).unwrap_or("");
        *slot = token
            .parse()
            .map_err(|_| Error::parse(path, "malformed netpbm header"))?;
    }
    let [width, height, maxval] = header;
    if width == 0 || height == 0 || maxval == 0 || maxval > 65535 {
        return Err(Error::parse(path, "invalid netpbm dimensions or maxval"));
    }
    if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(Error::parse(path, "missing whitespace after netpbm header"));
    }
    pos += 1;
    let samples = width * height * channels;
    let bps = if maxval < 256 { 1 } else { 2 };
    let raster = bytes
        .get(pos..pos + samples * bps)
        .ok_or_else(|| Error::parse(path, "truncated netpbm raster"))?;
    let values = if bps == 1 {
        raster.iter().map(|&b| b as f64).collect()
    } else {
        raster
            .chunks_exact(2)
            .map(|c| u16::from_be_bytes([c[0], c[1]]) as f64)
            .collect()
    };
    let shape = if channels == 1 {
        vec![height, width]
    } else {
        vec![height, width, 3]
    };
    Ok((shape, values))
}

fn save_frames(set: &SnapshotSet, dir: &Path, rgb: bool) -> Result<()> {
    let shape = set.shape();
    let (height, width) = match (rgb, shape) {
        (false, [h, w]) => (*h, *w),
        (true, [h, w, 3]) => (*h, *w),
        _ => {
            return Err(Error::UnsupportedShape(format!(
                "{} export needs shape {}, got {shape:?}",
                if rgb { "PPM" } else { "PGM" },
                if rgb { "[h, w, 3]" } else { "[h, w]" }
            )))
        }
    };
    if let Some(v) = set.data().iter().find(|v| !(0.0..=255.0).contains(*v)) {
        return Err(Error::UnsupportedShape(format!(
            "image export needs values in [0, 255], found {v}"
        )));
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let digits = set.count().to_string().len().max(5);
    let (magic, ext) = if rgb { ("P6", "ppm") } else { ("P5", "pgm") };
    for (i, frame) in set.iter().enumerate() {
        let mut bytes = format!("{magic}\n{width} {height}\n255\n").into_bytes();
        bytes.extend(frame.iter().map(|v| v.round() as u8));
        let file = dir.join(format!("frame_{i:0digits$}.{ext}"));
        fs::write(&file, bytes).map_err(|e| Error::io(&file, e))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn csv_rows_become_snapshots() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.csv");
        fs::write(&p, "1,2\n3,4\n5,6\n7,8\n").unwrap();
        let set = load(&p, Format::Csv { header: false }).unwrap();
        assert_eq!(set.count(), 4);
        assert_eq!(set.shape(), &[2]);
        assert_eq!(set.snapshot(3), &[7.0, 8.0]);
    }

    #[test]
    fn csv_header_and_errors() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("h.csv");
        fs::write(&p, "a,b\n1,2\n").unwrap();
        assert_eq!(load(&p, Format::Csv { header: true }).unwrap().count(), 1);
        assert!(matches!(
            load(&p, Format::Csv { header: false }),
            Err(Error::Parse { .. })
        ));
        fs::write(&p, "1,2\n3\n").unwrap();
        assert!(matches!(
            load(&p, Format::Csv { header: false }),
            Err(Error::ShapeMismatch(_))
        ));
        fs::write(&p, "1,nan\n").unwrap();
        assert!(matches!(
            load(&p, Format::Csv { header: false }),
            Err(Error::NonFinite { .. })
        ));
    }

    #[test]
    fn scalar_series_csv_has_one_column() {
        let set = SnapshotSet::from_scalars(&[0.1, -2.5, 3.0]).unwrap();
        let text = format_csv(&set, false);
        assert_eq!(text, "0.1\n-2.5\n3\n");
    }

    #[test]
    fn pgm_sequence_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let data: Vec<f64> = (0..3 * 64).map(|i| (i % 256) as f64).collect();
        let set = SnapshotSet::new(vec![8, 8], data).unwrap();
        save(&set, dir.path(), Format::Pgm).unwrap();
        let back = load(dir.path(), Format::Pgm).unwrap();
        assert_eq!(back.count(), 3);
        assert_eq!(back.shape(), &[8, 8]);
        assert_eq!(back.data(), set.data());
        assert_eq!(Format::infer(dir.path()).unwrap(), Format::Pgm);
    }

    #[test]
    fn ppm_frame_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let data: Vec<f64> = (0..2 * 4 * 5 * 3).map(|i| (i * 7 % 256) as f64).collect();
        let set = SnapshotSet::new(vec![4, 5, 3], data).unwrap();
        save(&set, dir.path(), Format::Ppm).unwrap();
        assert_eq!(load(dir.path(), Format::Ppm).unwrap(), set);
    }

    #[test]
    fn pgm_header_comments() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.pgm");
        let mut bytes = b"P5\n# comment\n2 1\n255\n".to_vec();
        bytes.extend([10u8, 20]);
        fs::write(&p, bytes).unwrap();
        let set = load(&p, Format::Pgm).unwrap();
        assert_eq!(set.shape(), &[1, 2]);
        assert_eq!(set.data(), &[10.0, 20.0]);
    }

    #[test]
    fn image_export_contract() {
        let dir = tempfile::tempdir().unwrap();
        let bad = SnapshotSet::new(vec![2, 2], vec![0.0, 1.0, 300.0, 4.0]).unwrap();
        assert!(matches!(
            save(&bad, dir.path(), Format::Pgm),
            Err(Error::UnsupportedShape(_))
        ));
        let flat = SnapshotSet::from_scalars(&[1.0]).unwrap();
        assert!(matches!(
            save(&flat, dir.path(), Format::Pgm),
            Err(Error::UnsupportedShape(_))
        ));
        assert!(matches!(
            save(&bad, dir.path(), Format::Ppm),
            Err(Error::UnsupportedShape(_))
        ));
    }

    #[test]
    fn kto1_layout() {
        let set = SnapshotSet::new(vec![2], vec![1.0, 2.0]).unwrap();
        let bytes = to_kto1_bytes(&set);
        assert_eq!(&bytes[..4], b"KTO1");
        assert_eq!(&bytes[4..8], &1u32.to_le_bytes());
        assert_eq!(&bytes[8..16], &2u64.to_le_bytes());
        assert_eq!(&bytes[16..24], &1u64.to_le_bytes());
        assert_eq!(&bytes[24..32], &1.0f64.to_le_bytes());
        assert_eq!(bytes.len(), 40);
        assert!(from_kto1_bytes(&bytes[..39]).is_err());
        let mut wrong = bytes.clone();
        wrong[0] = b'X';
        assert!(from_kto1_bytes(&wrong).is_err());
    }

    #[test]
    fn kto1_rejects_nan() {
        let set = SnapshotSet::new(vec![1], vec![1.0]).unwrap();
        let mut bytes = to_kto1_bytes(&set);
        let n = bytes.len();
        bytes[n - 8..].copy_from_slice(&f64::NAN.to_le_bytes());
        assert!(matches!(from_kto1_bytes(&bytes), Err(Error::NonFinite { .. })));
    }

    #[test]
    fn hash_tracks_content() {
        let a = SnapshotSet::from_scalars(&[1.0, 2.0]).unwrap();
        let b = SnapshotSet::from_scalars(&[1.0, 2.000001]).unwrap();
        assert_eq!(content_hash(&a).len(), 64);
        assert_ne!(content_hash(&a), content_hash(&b));
        assert_eq!(content_hash(&a), content_hash(&a.clone()));
    }

    fn snapshot_sets() -> impl Strategy<Value = SnapshotSet> {
        (prop::collection::vec(1usize..4, 1..4), 1usize..5).prop_flat_map(|(shape, count)| {
            let len = shape.iter().product::<usize>() * count;
            prop::collection::vec(-1e300f64..1e300, len)
                .prop_map(move |data| SnapshotSet::new(shape.clone(), data).unwrap())
        })
    }

    proptest! {
        #[test]
        fn kto1_round_trip_is_bit_exact(set in snapshot_sets()) {
            let dir = tempfile::tempdir().unwrap();
            let p = dir.path().join("s.kto");
            save(&set, &p, Format::Kto1).unwrap();
            let bytes = fs::read(&p).unwrap();
            let back = load(&p, Format::Kto1).unwrap();
            prop_assert_eq!(&back, &set);
            prop_assert_eq!(to_kto1_bytes(&back), bytes);
        }

        #[test]
        fn csv_round_trip_keeps_full_precision(values in prop::collection::vec(-1e12f64..1e12, 1..20)) {
            let set = SnapshotSet::from_scalars(&values).unwrap();
            let back = parse_csv(Path::new("mem"), &format_csv(&set, true), true).unwrap();
            prop_assert_eq!(back, set);
        }
    }
}
