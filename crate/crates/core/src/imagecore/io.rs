use std::io::Write;
use std::path::Path;

use image::{DynamicImage, ImageError};

use crate::error::{Error, Result};
use crate::imagecore::{ImageTensor, RegionPartition};

/// Writes `bytes` to a temporary file next to `path`, then renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(path, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    tmp.flush().map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

pub(crate) fn write_png(path: &Path, img: &DynamicImage) -> Result<()> {
    let mut buf = std::io::Cursor::new(Vec::new());
    img.write_to(&mut buf, image::ImageFormat::Png)
        .map_err(|e| Error::Format(e.to_string()))?;
    write_atomic(path, buf.get_ref())
}

fn open(path: &Path) -> Result<DynamicImage> {
    let reader = image::ImageReader::open(path)
        .map_err(|e| Error::io(path, e))?
        .with_guessed_format()
        .map_err(|e| Error::io(path, e))?;
    reader.decode().map_err(|e| match e {
        ImageError::IoError(io) => Error::io(path, io),
        other => Error::Format(format!("{}: {other}", path.display())),
    })
}

/// Reads a PNG or JPEG into `[0, 1]` RGB. Grayscale is replicated across the
/// three channels and any alpha channel is dropped.
pub fn load_image(path: impl AsRef<Path>) -> Result<ImageTensor> {
    let rgb = open(path.as_ref())?.to_rgb8();
    let (w, h) = rgb.dimensions();
    let data = rgb
        .into_raw()
        .into_iter()
        .map(|b| f64::from(b) / 255.0)
        .collect();
    ImageTensor::new(h as usize, w as usize, data)
}

pub fn to_rgb8_bytes(image: &ImageTensor) -> Vec<u8> {
    image
        .data()
        .iter()
        .map(|&v| (v * 255.0).round().clamp(0.0, 255.0) as u8)
        .collect()
}

/// Writes an 8-bit PNG, storing each value `v` as `round(v * 255)`.
pub fn save_image(image: &ImageTensor, path: impl AsRef<Path>) -> Result<()> {
    let buf = image::RgbImage::from_raw(
        image.width() as u32,
        image.height() as u32,
        to_rgb8_bytes(image),
    )
    .expect("buffer length matches dimensions");
    write_png(path.as_ref(), &DynamicImage::ImageRgb8(buf))
}

/// Reads a segmentation label map from an 8- or 16-bit grayscale PNG.
/// Every distinct gray level becomes one region; regions are numbered in
/// ascending gray-level order.
pub fn load_label_map(path: impl AsRef<Path>) -> Result<RegionPartition> {
    let path = path.as_ref();
    let (w, h, raw): (u32, u32, Vec<u32>) = match open(path)? {
        DynamicImage::ImageLuma8(img) => {
            let (w, h) = img.dimensions();
            (w, h, img.into_raw().into_iter().map(u32::from).collect())
        }
        DynamicImage::ImageLuma16(img) => {
            let (w, h) = img.dimensions();
            (w, h, img.into_raw().into_iter().map(u32::from).collect())
        }
        other => {
            return Err(Error::Format(format!(
                "{}: label map must be 8- or 16-bit grayscale, found {:?}",
                path.display(),
                other.color()
            )))
        }
    };
    RegionPartition::from_raw_labels(h as usize, w as usize, &raw)
}
