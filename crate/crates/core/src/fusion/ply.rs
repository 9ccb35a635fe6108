use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::imaging::{Camera, DepthMap};

/// ASCII PLY mesh: one vertex per valid pixel, two triangles per 2x2 block
/// (each emitted only if its three corners are valid).
pub fn write_ply(path: impl AsRef<Path>, depth: &DepthMap, camera: &Camera) -> Result<()> {
    let path = path.as_ref();
    let (w, h) = (depth.width(), depth.height());
    if camera.width != w || camera.height != h {
        return Err(Error::Dimensions("camera and depth map differ".into()));
    }
    let mut index = vec![usize::MAX; w * h];
    let mut vertices = Vec::new();
    for i in 0..w * h {
        if let Some(d) = depth.get_index(i) {
            index[i] = vertices.len();
            vertices.push(camera.ray((i % w) as f64, (i / w) as f64) * d);
        }
    }
    let mut faces = Vec::new();
    for y in 0..h.saturating_sub(1) {
        for x in 0..w.saturating_sub(1) {
            let (a, b, c, d) = (
                y * w + x,
                y * w + x + 1,
                (y + 1) * w + x,
                (y + 1) * w + x + 1,
            );
            // Counter-clockwise as seen from the camera.
            for tri in [[a, c, b], [b, c, d]] {
                if tri.iter().all(|&p| index[p] != usize::MAX) {
                    faces.push(tri.map(|p| index[p]));
                }
            }
        }
    }
    let io = |e| Error::io(path, e);
    let mut f = std::io::BufWriter::new(std::fs::File::create(path).map_err(io)?);
    write!(
        f,
        "ply\nformat ascii 1.0\nelement vertex {}\nproperty float x\nproperty float y\nproperty float z\n\
         element face {}\nproperty list uchar int vertex_indices\nend_header\n",
        vertices.len(),
        faces.len()
    )
    .map_err(io)?;
    for v in &vertices {
        writeln!(f, "{} {} {}", v.x, v.y, v.z).map_err(io)?;
    }
    for t in &faces {
        writeln!(f, "3 {} {} {}", t[0], t[1], t[2]).map_err(io)?;
    }
    f.flush().map_err(io)
}
