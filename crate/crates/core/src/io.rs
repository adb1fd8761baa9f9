//! Image and table output: 16-bit binary PGM and plain CSV.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::fields::{Grid, Image};

const PGM_MAXVAL: u16 = 65535;

/// Write `img` as a binary PGM (`P5`, maxval 65535, big-endian samples).
///
/// Values are mapped affinely from the window `[lo, hi]` onto `[0, 65535]`
/// and clamped; reading the file back with the same window recovers each
/// value to within `(hi - lo) / 65535`.
pub fn write_pgm(img: &Image, path: impl AsRef<Path>, window: (f64, f64)) -> Result<()> {
    let (lo, hi) = window;
    if !(hi > lo) {
        return Err(Error::InvalidParameter(format!(
            "pgm window must satisfy lo < hi, got [{lo}, {hi}]"
        )));
    }
    if !img.data().iter().all(|v| v.is_finite()) {
        return Err(Error::InvalidParameter("image contains non-finite values".into()));
    }
    let mut w = BufWriter::new(File::create(path)?);
    write!(w, "P5\n{} {}\n{}\n", img.grid().nx(), img.grid().ny(), PGM_MAXVAL)?;
    let scale = PGM_MAXVAL as f64 / (hi - lo);
    for &v in img.data() {
        let s = ((v - lo) * scale).round().clamp(0.0, PGM_MAXVAL as f64) as u16;
        w.write_all(&s.to_be_bytes())?;
    }
    w.flush()?;
    Ok(())
}

/// Read a 16-bit binary PGM written by [`write_pgm`], mapping samples back
/// through the window `[lo, hi]`. The grid is reconstructed over the default
/// `[-1, 1]^2` domain (PGM carries no physical extent).
pub fn read_pgm(path: impl AsRef<Path>, window: (f64, f64)) -> Result<Image> {
    let (lo, hi) = window;
    if !(hi > lo) {
        return Err(Error::InvalidParameter(format!(
            "pgm window must satisfy lo < hi, got [{lo}, {hi}]"
        )));
    }
    let mut r = BufReader::new(File::open(path)?);
    let magic = next_token(&mut r)?;
    if magic != "P5" {
        return Err(Error::MalformedImage(format!("expected P5 magic, got {magic:?}")));
    }
    let nx: usize = parse_token(&mut r, "width")?;
    let ny: usize = parse_token(&mut r, "height")?;
    let maxval: u32 = parse_token(&mut r, "maxval")?;
    if maxval != PGM_MAXVAL as u32 {
        return Err(Error::MalformedImage(format!("expected maxval 65535, got {maxval}")));
    }
    if nx < 2 || ny < 2 {
        return Err(Error::MalformedImage(format!("unsupported size {nx} x {ny}")));
    }
    let mut raw = vec![0u8; 2 * nx * ny];
    r.read_exact(&mut raw)
        .map_err(|e| Error::MalformedImage(format!("truncated sample data: {e}")))?;
    let scale = (hi - lo) / PGM_MAXVAL as f64;
    let data: Vec<f64> = raw
        .chunks_exact(2)
        .map(|c| lo + u16::from_be_bytes([c[0], c[1]]) as f64 * scale)
        .collect();
    // Physical extent is not stored; square pixels require matching aspect.
    let half_h = ny as f64 / nx as f64;
    let grid = Grid::new(nx, ny, (-1.0, 1.0), (-half_h, half_h))
        .map_err(|e| Error::MalformedImage(format!("cannot rebuild grid: {e}")))?;
    Image::from_vec(grid, data)
}

fn next_token(r: &mut impl BufRead) -> Result<String> {
    let mut tok = String::new();
    let mut in_comment = false;
    loop {
        let mut byte = [0u8; 1];
        match r.read_exact(&mut byte) {
            Ok(()) => {}
            Err(e) => {
                if tok.is_empty() {
                    return Err(Error::MalformedImage(format!("unexpected end of header: {e}")));
                }
                return Ok(tok);
            }
        }
        let c = byte[0] as char;
        if in_comment {
            if c == '\n' {
                in_comment = false;
            }
            continue;
        }
        if c == '#' {
            in_comment = true;
            continue;
        }
        if c.is_ascii_whitespace() {
            if !tok.is_empty() {
                return Ok(tok);
            }
            continue;
        }
        tok.push(c);
    }
}

fn parse_token<T: std::str::FromStr>(r: &mut impl BufRead, what: &str) -> Result<T> {
    let tok = next_token(r)?;
    tok.parse()
        .map_err(|_| Error::MalformedImage(format!("cannot parse {what} from {tok:?}")))
}

/// Write a CSV table: comma separator, `.` decimal point, LF line endings.
pub fn write_csv(
    path: impl AsRef<Path>,
    header: &[&str],
    rows: impl IntoIterator<Item = Vec<String>>,
) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "{}", header.join(","))?;
    for row in rows {
        writeln!(w, "{}", row.join(","))?;
    }
    w.flush()?;
    Ok(())
}

/// Format a float for CSV output (shortest round-trip representation).
pub fn fmt_f64(v: f64) -> String {
    if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{v}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;

    #[test]
    fn constant_images_hit_window_ends() {
        let dir = tempfile::tempdir().unwrap();
        let g = Grid::square(4).unwrap();

        let p0 = dir.path().join("zero.pgm");
        write_pgm(&Image::constant(g, 0.0), &p0, (0.0, 1.0)).unwrap();
        let bytes = std::fs::read(&p0).unwrap();
        let header_len = bytes.len() - 2 * 16;
        assert!(bytes[header_len..].iter().all(|&b| b == 0));

        let p1 = dir.path().join("one.pgm");
        write_pgm(&Image::constant(g, 1.0), &p1, (0.0, 1.0)).unwrap();
        let bytes = std::fs::read(&p1).unwrap();
        assert!(bytes[header_len..].iter().all(|&b| b == 0xff));
    }

    #[test]
    fn round_trip_error_bound() {
        let dir = tempfile::tempdir().unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let g = Grid::square(8).unwrap();
        for t in 0..100 {
            let img = Image::from_fn(g, |_, _| rng.random::<f64>() * 3.0 - 1.0);
            let (lo, hi) = (img.min(), img.max());
            let path = dir.path().join(format!("r{t}.pgm"));
            write_pgm(&img, &path, (lo, hi)).unwrap();
            let back = read_pgm(&path, (lo, hi)).unwrap();
            let bound = (hi - lo) / 65535.0;
            for (a, b) in img.data().iter().zip(back.data()) {
                assert!((a - b).abs() <= bound, "round-trip error {} > {}", (a - b).abs(), bound);
            }
        }
    }

    #[test]
    fn malformed_header_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.pgm");
        std::fs::write(&path, b"P2\n4 4\n255\n").unwrap();
        assert!(matches!(read_pgm(&path, (0.0, 1.0)), Err(Error::MalformedImage(_))));
        let path2 = dir.path().join("trunc.pgm");
        std::fs::write(&path2, b"P5\n4 4\n65535\n\x00\x01").unwrap();
        assert!(read_pgm(&path2, (0.0, 1.0)).is_err());
    }

    #[test]
    fn unwritable_path_errors() {
        let g = Grid::square(2).unwrap();
        let img = Image::zeros(g);
        assert!(write_pgm(&img, "/nonexistent-dir/x.pgm", (0.0, 1.0)).is_err());
    }
}
