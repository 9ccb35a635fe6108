//! Portable float map I/O.
//!
//! Scanlines are stored bottom-to-top as in the reference format. Writes are
//! always little-endian (scale `-1.0`); reads accept either byte order.
//! Four-channel grids are split into `<base>.rgb.pfm` and `<base>.nir.pfm`.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use super::ImageGrid;
use crate::error::{ensure, Error, Result};

/// Largest accepted sample count, guards allocations driven by headers.
const MAX_SAMPLES: usize = 1 << 30;

/// Paths used for the RGB and NIR halves of a four-channel grid.
pub(crate) fn split_paths(path: &Path) -> (PathBuf, PathBuf) {
    let s = path.to_string_lossy();
    let base = s.strip_suffix(".pfm").unwrap_or(&s);
    let base = base
        .strip_suffix(".rgb")
        .or_else(|| base.strip_suffix(".nir"))
        .unwrap_or(base);
    (
        PathBuf::from(format!("{base}.rgb.pfm")),
        PathBuf::from(format!("{base}.nir.pfm")),
    )
}

pub fn write_pfm(path: impl AsRef<Path>, grid: &ImageGrid) -> Result<()> {
    let path = path.as_ref();
    match grid.channels() {
        1 | 3 => write_single(path, grid),
        4 => {
            let (rgb, nir) = split_paths(path);
            write_single(&rgb, &grid.select_channels(&[0, 1, 2])?)?;
            write_single(&nir, &grid.select_channels(&[3])?)
        }
        _ => unreachable!("grids always have 1, 3 or 4 channels"),
    }
}

/// Reads a PFM file. If `path` does not exist but its `.rgb.pfm`/`.nir.pfm`
/// pair does, the pair is merged into a four-channel grid.
pub fn read_pfm(path: impl AsRef<Path>) -> Result<ImageGrid> {
    let path = path.as_ref();
    if path.exists() {
        return read_single(path);
    }
    let (rgb_path, nir_path) = split_paths(path);
    if !(rgb_path.exists() && nir_path.exists()) {
        return Err(Error::io(
            path,
            std::io::Error::new(
                std::io::ErrorKind::NotFound,
                "no such PFM file or RGB/NIR pair",
            ),
        ));
    }
    let rgb = read_single(&rgb_path)?;
    let nir = read_single(&nir_path)?;
    ensure!(
        rgb.channels() == 3 && nir.channels() == 1 && rgb.same_shape(&nir),
        Error::Pfm(format!(
            "{} and {} do not form an RGB+NIR pair",
            rgb_path.display(),
            nir_path.display()
        ))
    );
    let mut out = ImageGrid::zeros(rgb.width(), rgb.height(), 4);
    for i in 0..out.len_pixels() {
        let p = out.pixel_mut(i);
        p[..3].copy_from_slice(rgb.pixel(i));
        p[3] = nir.pixel(i)[0];
    }
    Ok(out)
}

fn write_single(path: &Path, grid: &ImageGrid) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    encode(&mut w, grid).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

fn read_single(path: &Path) -> Result<ImageGrid> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    decode(&mut BufReader::new(file))
}

pub(crate) fn encode(w: &mut impl Write, grid: &ImageGrid) -> std::io::Result<()> {
    let magic = if grid.channels() == 3 { "PF" } else { "Pf" };
    write!(w, "{magic}\n{} {}\n-1.0\n", grid.width(), grid.height())?;
    let row_len = grid.width() * grid.channels();
    for row in grid.data().chunks_exact(row_len.max(1)).rev() {
        for v in row {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

fn header_token(r: &mut impl BufRead, what: &str) -> Result<String> {
    // Tokens are whitespace separated; the last header token is followed by
    // exactly one whitespace byte before the payload.
    let mut token = Vec::new();
    let mut byte = [0u8; 1];
    loop {
        let n = r
            .read(&mut byte)
            .map_err(|e| Error::Pfm(format!("reading {what}: {e}")))?;
        if n == 0 {
            return Err(Error::Pfm(format!(
                "unexpected end of header reading {what}"
            )));
        }
        if byte[0].is_ascii_whitespace() {
            if token.is_empty() {
                continue;
            }
            break;
        }
        token.push(byte[0]);
        if token.len() > 64 {
            return Err(Error::Pfm(format!("{what} token too long")));
        }
    }
    String::from_utf8(token).map_err(|_| Error::Pfm(format!("{what} is not ASCII")))
}

pub(crate) fn decode(r: &mut impl BufRead) -> Result<ImageGrid> {
    let channels = match header_token(r, "magic")?.as_str() {
        "PF" => 3,
        "Pf" => 1,
        other => return Err(Error::Pfm(format!("unknown magic {other:?}"))),
    };
    let width: usize = header_token(r, "width")?
        .parse()
        .map_err(|_| Error::Pfm("width is not an integer".into()))?;
    let height: usize = header_token(r, "height")?
        .parse()
        .map_err(|_| Error::Pfm("height is not an integer".into()))?;
    let scale: f64 = header_token(r, "scale")?
        .parse()
        .map_err(|_| Error::Pfm("scale is not a number".into()))?;
    ensure!(
        scale != 0.0 && scale.is_finite(),
        Error::Pfm("scale must be nonzero".into())
    );
    let little_endian = scale < 0.0;

    let samples = width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(channels))
        .filter(|&n| n <= MAX_SAMPLES)
        .ok_or_else(|| Error::Pfm(format!("dimensions {width}x{height} overflow")))?;
    let mut bytes = vec![0u8; samples * 4];
    r.read_exact(&mut bytes)
        .map_err(|_| Error::Pfm(format!("truncated payload, expected {} bytes", samples * 4)))?;

    let row_len = width * channels;
    let mut data = vec![0f32; samples];
    for (src_row, raw) in bytes.chunks_exact((row_len * 4).max(1)).enumerate() {
        let dst_row = height - 1 - src_row;
        for (k, b) in raw.chunks_exact(4).enumerate() {
            let b = [b[0], b[1], b[2], b[3]];
            data[dst_row * row_len + k] = if little_endian {
                f32::from_le_bytes(b)
            } else {
                f32::from_be_bytes(b)
            };
        }
    }
    ensure!(
        data.iter().all(|v| v.is_finite()),
        Error::Pfm("payload contains non-finite samples".into())
    );
    ImageGrid::from_vec(width, height, channels, data)
}
