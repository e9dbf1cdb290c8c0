//! `.elfv`: one ASCII header line `ELFV1 nx ny nz sx sy sz` followed by
//! `nx·ny·nz` whitespace-separated decimal values, x-fastest.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::volume::ElfVolume;
use crate::error::{MmmError, Result};

pub const ELFV_MAGIC: &str = "ELFV1";

/// Shortest round-trip decimal formatting, one x-row per line.
pub fn render_elfv(vol: &ElfVolume) -> String {
    let [nx, ny, nz] = vol.dims();
    let [sx, sy, sz] = vol.spacing();
    let mut out = String::with_capacity(16 * nx * ny * nz + 64);
    let _ = writeln!(out, "{ELFV_MAGIC} {nx} {ny} {nz} {sx} {sy} {sz}");
    for row in vol.values().chunks(nx) {
        let mut first = true;
        for v in row {
            if !first {
                out.push(' ');
            }
            first = false;
            let _ = write!(out, "{v}");
        }
        out.push('\n');
    }
    out
}

pub fn parse_elfv(text: &str, context: &str) -> Result<ElfVolume> {
    let (header, body) = text.split_once('\n').unwrap_or((text, ""));
    let fields: Vec<&str> = header.split_whitespace().collect();
    if fields.first() != Some(&ELFV_MAGIC) {
        return Err(MmmError::format(context, "missing ELFV1 magic"));
    }
    if fields.len() != 7 {
        return Err(MmmError::format(
            context,
            format!("header needs 7 fields, found {}", fields.len()),
        ));
    }
    let mut dims = [0usize; 3];
    for (d, f) in dims.iter_mut().zip(&fields[1..4]) {
        *d = f
            .parse()
            .map_err(|_| MmmError::format(context, format!("bad dimension {f:?}")))?;
    }
    let mut spacing = [0.0f64; 3];
    for (s, f) in spacing.iter_mut().zip(&fields[4..7]) {
        *s = f
            .parse()
            .map_err(|_| MmmError::format(context, format!("bad spacing {f:?}")))?;
    }
    let n = dims.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d));
    let n = n.ok_or_else(|| MmmError::format(context, "dimensions overflow"))?;
    let mut values = Vec::with_capacity(n);
    for tok in body.split_whitespace() {
        if values.len() == n {
            return Err(MmmError::format(context, "trailing data after payload"));
        }
        let v: f64 = tok
            .parse()
            .map_err(|_| MmmError::format(context, format!("bad value {tok:?}")))?;
        values.push(v);
    }
    if values.len() != n {
        return Err(MmmError::format(
            context,
            format!("truncated payload: expected {n} values, found {}", values.len()),
        ));
    }
    ElfVolume::new(dims, spacing, values)
}

pub fn write_elfv(path: impl AsRef<Path>, vol: &ElfVolume) -> Result<()> {
    let path = path.as_ref();
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| MmmError::io(parent, e))?;
    }
    fs::write(path, render_elfv(vol)).map_err(|e| MmmError::io(path, e))
}

pub fn read_elfv(path: impl AsRef<Path>) -> Result<ElfVolume> {
    let path = path.as_ref();
    if !path.is_file() {
        return Err(MmmError::MissingFile(path.to_path_buf()));
    }
    let text = fs::read_to_string(path).map_err(|e| MmmError::io(path, e))?;
    parse_elfv(&text, &path.display().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn file_round_trip() {
        let vol = ElfVolume::new([3, 2, 2], [0.3, 0.2, 0.25], vec![0.0, 1.0, 0.1, 0.2, 1.0 / 3.0, 0.5, 0.9, 0.25, 1e-12, 0.75, 0.123456789, 0.0]).unwrap();
        let tmp = tempfile::tempdir().unwrap();
        let path = tmp.path().join("elf/0.elfv");
        write_elfv(&path, &vol).unwrap();
        assert_eq!(read_elfv(&path).unwrap(), vol);
    }

    #[test]
    fn corrupt_header() {
        assert!(matches!(parse_elfv("ELFX 1 1 1 0.25 0.25 0.25\n0.5\n", "t"), Err(MmmError::Format { .. })));
        assert!(matches!(parse_elfv("ELFV1 1 1\n0.5\n", "t"), Err(MmmError::Format { .. })));
    }

    #[test]
    fn truncated_and_overlong_payload() {
        assert!(matches!(parse_elfv("ELFV1 2 1 1 0.25 0.25 0.25\n0.5\n", "t"), Err(MmmError::Format { .. })));
        assert!(matches!(parse_elfv("ELFV1 1 1 1 0.25 0.25 0.25\n0.5 0.5\n", "t"), Err(MmmError::Format { .. })));
    }

    #[test]
    fn out_of_range_value_is_validation_error() {
        assert!(matches!(parse_elfv("ELFV1 1 1 1 0.25 0.25 0.25\n1.5\n", "t"), Err(MmmError::Validation(_))));
    }

    #[test]
    fn missing_file() {
        assert!(matches!(read_elfv("/nonexistent/x.elfv"), Err(MmmError::MissingFile(_))));
    }

    proptest! {
        #[test]
        fn text_round_trip_is_bit_exact(vals in prop::collection::vec(0.0f64..=1.0, 12), sx in 0.01f64..2.0) {
            let vol = ElfVolume::new([2, 3, 2], [sx, 0.25, 0.25], vals).unwrap();
            let back = parse_elfv(&render_elfv(&vol), "t").unwrap();
            prop_assert_eq!(back.checksum(), vol.checksum());
        }
    }
}
