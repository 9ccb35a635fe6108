use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use super::{ImageGrid, NormalMap};
use crate::error::{ensure, Error, Result};

pub const DEFAULT_GAMMA: f64 = 2.2;

/// 8-bit code for a linear value: clamp to [0, 1], apply `v^(1/gamma)`, round.
#[inline]
pub fn encode_byte(value: f64, gamma: f64) -> u8 {
    let v = value.clamp(0.0, 1.0);
    (255.0 * v.powf(1.0 / gamma)).round() as u8
}

/// Gamma-encoded 8-bit preview. One-channel grids become grayscale; three-
/// and four-channel grids become RGB (the NIR channel is not shown).
pub fn write_png_preview(path: impl AsRef<Path>, grid: &ImageGrid, gamma: f64) -> Result<()> {
    ensure!(
        gamma > 0.0 && gamma.is_finite(),
        Error::InvalidArgument(format!("gamma must be positive, got {gamma}"))
    );
    let (color, shown) = match grid.channels() {
        1 => (png::ColorType::Grayscale, 1),
        _ => (png::ColorType::Rgb, 3),
    };
    let mut bytes = Vec::with_capacity(grid.len_pixels() * shown);
    for i in 0..grid.len_pixels() {
        for &v in &grid.pixel(i)[..shown] {
            bytes.push(encode_byte(v as f64, gamma));
        }
    }
    write_bytes(path.as_ref(), grid.width(), grid.height(), color, &bytes)
}

/// Normal map preview with each component encoded as `(n + 1) / 2`; invalid
/// pixels are black.
pub fn write_normal_preview(path: impl AsRef<Path>, normals: &NormalMap) -> Result<()> {
    let mut bytes = Vec::with_capacity(normals.width() * normals.height() * 3);
    for i in 0..normals.width() * normals.height() {
        match normals.get_index(i) {
            Some(n) => bytes.extend(n.iter().map(|&c| encode_byte((c + 1.0) / 2.0, 1.0))),
            None => bytes.extend([0, 0, 0]),
        }
    }
    write_bytes(
        path.as_ref(),
        normals.width(),
        normals.height(),
        png::ColorType::Rgb,
        &bytes,
    )
}

fn write_bytes(
    path: &Path,
    width: usize,
    height: usize,
    color: png::ColorType,
    bytes: &[u8],
) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut encoder = png::Encoder::new(BufWriter::new(file), width as u32, height as u32);
    encoder.set_color(color);
    encoder.set_depth(png::BitDepth::Eight);
    let mut writer = encoder
        .write_header()
        .map_err(|e| Error::Png(e.to_string()))?;
    writer
        .write_image_data(bytes)
        .map_err(|e| Error::Png(e.to_string()))?;
    writer.finish().map_err(|e| Error::Png(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn encoding_endpoints_and_midpoint() {
        assert_eq!(encode_byte(1.0, 2.2), 255);
        assert_eq!(encode_byte(0.0, 2.2), 0);
        assert_eq!(encode_byte(0.5, 2.2), 186);
        assert_eq!(encode_byte(7.0, 2.2), 255);
        assert_eq!(encode_byte(-1.0, 2.2), 0);
    }

    #[test]
    fn writes_decodable_png() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.png");
        let g = ImageGrid::from_vec(2, 1, 3, vec![0.0, 0.5, 1.0, 1.0, 1.0, 1.0]).unwrap();
        write_png_preview(&path, &g, 2.2).unwrap();
        let decoder = png::Decoder::new(std::io::BufReader::new(File::open(&path).unwrap()));
        let mut reader = decoder.read_info().unwrap();
        let mut buf = vec![0; reader.output_buffer_size().unwrap()];
        let info = reader.next_frame(&mut buf).unwrap();
        assert_eq!(&buf[..info.buffer_size()], &[0, 186, 255, 255, 255, 255]);
        assert!(write_png_preview(&path, &g, 0.0).is_err());
    }
}
