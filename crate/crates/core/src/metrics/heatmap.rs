use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::volume::Volume;

/// DSSIM value mapped to pure red; 0 maps to pure blue.
pub const DSSIM_RAMP_MAX: f32 = 0.5;

/// Linear blue-to-red ramp over `[0, DSSIM_RAMP_MAX]`, clamped.
pub fn dssim_color(d: f32) -> [u8; 3] {
    let t = (d / DSSIM_RAMP_MAX).clamp(0.0, 1.0);
    [
        (255.0 * t).round() as u8,
        0,
        (255.0 * (1.0 - t)).round() as u8,
    ]
}

fn write_png(path: &Path, w: usize, h: usize, pixel: impl Fn(usize, usize) -> f32) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut enc = png::Encoder::new(BufWriter::new(file), w as u32, h as u32);
    enc.set_color(png::ColorType::Rgb);
    enc.set_depth(png::BitDepth::Eight);
    let mut writer = enc.write_header()?;
    let mut buf = Vec::with_capacity(w * h * 3);
    // Row 0 at the top of the image shows the highest second coordinate.
    for r in (0..h).rev() {
        for c in 0..w {
            buf.extend_from_slice(&dssim_color(pixel(c, r)));
        }
    }
    writer.write_image_data(&buf)?;
    writer.finish()?;
    Ok(())
}

/// Render the central axial (xy), coronal (xz) and sagittal (yz) planes of a
/// DSSIM map to `{stem}_dssim_{plane}.png` in `dir`.
pub fn write_dssim_pngs(map: &Volume, dir: &Path, stem: &str) -> Result<Vec<PathBuf>> {
    let [nx, ny, nz] = map.dims();
    let (cx, cy, cz) = (nx / 2, ny / 2, nz / 2);
    let axial = dir.join(format!("{stem}_dssim_axial.png"));
    write_png(&axial, nx, ny, |x, y| map.get(x, y, cz))?;
    let sagittal = dir.join(format!("{stem}_dssim_sagittal.png"));
    write_png(&sagittal, ny, nz, |y, z| map.get(cx, y, z))?;
    let coronal = dir.join(format!("{stem}_dssim_coronal.png"));
    write_png(&coronal, nx, nz, |x, z| map.get(x, cy, z))?;
    Ok(vec![axial, sagittal, coronal])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ramp_endpoints() {
        assert_eq!(dssim_color(0.0), [0, 0, 255]);
        assert_eq!(dssim_color(0.5), [255, 0, 0]);
        assert_eq!(dssim_color(0.9), [255, 0, 0]);
        assert_eq!(dssim_color(0.25), [128, 0, 128]);
    }

    #[test]
    fn writes_three_planes() {
        let dir = tempfile::tempdir().unwrap();
        let m = Volume::from_fn([6, 5, 4], [1.0; 3], |x, _, _| x as f32 / 10.0).unwrap();
        let files = write_dssim_pngs(&m, dir.path(), "case").unwrap();
        assert_eq!(files.len(), 3);
        for f in files {
            assert!(std::fs::metadata(&f).unwrap().len() > 0);
        }
    }
}
