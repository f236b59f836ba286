//! Image, label-map and JSON files.

use std::fs;
use std::io::{BufWriter, Cursor};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::forge::{parse_synthetic_source, synthetic_image};
use crate::grid::LabelGrid;
use crate::jpeg::LumaImage;

/// Palette of label maps: background black, then red, green, blue.
pub const PALETTE: [[u8; 3]; 4] = [[0, 0, 0], [255, 0, 0], [0, 255, 0], [0, 64, 255]];

fn codec(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Image(format!("{}: {e}", path.display()))
}

/// Reads any supported raster as BT.601 luma, cropped to multiples of 8.
pub fn read_luma(path: &Path) -> Result<LumaImage> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let img = image::load_from_memory(&bytes).map_err(|e| codec(path, e))?;
    let (cols, rows) = (img.width() as usize, img.height() as usize);
    let samples: Vec<u8> = match img {
        image::DynamicImage::ImageLuma8(g) => g.into_raw(),
        other => other
            .to_rgb8()
            .pixels()
            .map(|p| {
                let [r, g, b] = p.0.map(f64::from);
                (0.299 * r + 0.587 * g + 0.114 * b).round().clamp(0.0, 255.0) as u8
            })
            .collect(),
    };
    if rows < 8 || cols < 8 {
        return Err(Error::invalid(format!(
            "{}: image {rows}x{cols} is too small",
            path.display()
        )));
    }
    LumaImage::from_u8_cropped(rows, cols, &samples)
}

/// `synth:SEED:HxW` or an image path.
pub fn load_source(spec: &str) -> Result<LumaImage> {
    match parse_synthetic_source(spec) {
        Some(parsed) => {
            let (seed, h, w) = parsed?;
            synthetic_image(seed, h, w)
        }
        None => read_luma(Path::new(spec)),
    }
}

fn create(path: &Path) -> Result<BufWriter<fs::File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    Ok(BufWriter::new(fs::File::create(path).map_err(|e| Error::io(path, e))?))
}

fn write_png(path: &Path, width: usize, height: usize, data: &[u8], palette: Option<Vec<u8>>) -> Result<()> {
    let mut enc = png::Encoder::new(create(path)?, width as u32, height as u32);
    match palette {
        Some(p) => {
            enc.set_color(png::ColorType::Indexed);
            enc.set_palette(p);
        }
        None => enc.set_color(png::ColorType::Grayscale),
    }
    enc.set_depth(png::BitDepth::Eight);
    let mut w = enc.write_header().map_err(|e| codec(path, e))?;
    w.write_image_data(data).map_err(|e| codec(path, e))?;
    w.finish().map_err(|e| codec(path, e))
}

/// Writes an 8-bit greyscale PNG.
pub fn write_luma_png(img: &LumaImage, path: &Path) -> Result<()> {
    write_png(path, img.cols(), img.rows(), &img.to_u8(), None)
}

/// Writes a label map as an indexed-palette PNG, one pixel per block.
pub fn write_label_png(labels: &LabelGrid, path: &Path) -> Result<()> {
    if let Some(&bad) = labels.as_slice().iter().find(|&&l| l as usize >= PALETTE.len()) {
        return Err(Error::invalid(format!("label {bad} has no palette entry")));
    }
    let palette = PALETTE.iter().flatten().copied().collect();
    write_png(path, labels.cols(), labels.rows(), labels.as_slice(), Some(palette))
}

/// Reads the palette indices of an indexed PNG.
pub fn read_label_png(path: &Path) -> Result<LabelGrid> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut dec = png::Decoder::new(Cursor::new(bytes));
    dec.set_transformations(png::Transformations::IDENTITY);
    let mut reader = dec.read_info().map_err(|e| codec(path, e))?;
    let mut buf = vec![
        0;
        reader
            .output_buffer_size()
            .ok_or_else(|| codec(path, "image too large"))?
    ];
    let info = reader.next_frame(&mut buf).map_err(|e| codec(path, e))?;
    if info.color_type != png::ColorType::Indexed || info.bit_depth != png::BitDepth::Eight {
        return Err(codec(path, "expected an 8-bit indexed PNG"));
    }
    let (w, h) = (info.width as usize, info.height as usize);
    let mut data = Vec::with_capacity(w * h);
    for row in buf.chunks(info.line_size).take(h) {
        data.extend_from_slice(&row[..w]);
    }
    LabelGrid::from_vec(h, w, data)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_slice(&bytes)?)
}

pub fn write_json<T: Serialize + ?Sized>(value: &T, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn label_png_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.png");
        let g = LabelGrid::from_vec(3, 5, vec![0, 1, 2, 3, 0, 1, 1, 1, 0, 0, 3, 3, 2, 2, 0]).unwrap();
        write_label_png(&g, &p).unwrap();
        assert_eq!(read_label_png(&p).unwrap(), g);
        let bad = LabelGrid::filled(2, 2, 4);
        assert!(write_label_png(&bad, &p).is_err());
    }

    #[test]
    fn luma_png_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.png");
        let img = synthetic_image(3, 16, 24).unwrap();
        write_luma_png(&img, &p).unwrap();
        assert_eq!(read_luma(&p).unwrap(), img);
    }

    #[test]
    fn rgb_uses_bt601_and_crops() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.ppm");
        let mut body = b"P6\n10 9\n255\n".to_vec();
        for _ in 0..90 {
            body.extend_from_slice(&[200, 100, 50]);
        }
        fs::write(&p, body).unwrap();
        let img = read_luma(&p).unwrap();
        assert_eq!((img.rows(), img.cols()), (8, 8));
        // 0.299*200 + 0.587*100 + 0.114*50 = 124.2
        assert_eq!(img.get(0, 0), 124.0 - 128.0);
    }

    #[test]
    fn missing_file_names_path() {
        let e = read_luma(Path::new("/nonexistent/x.png")).unwrap_err().to_string();
        assert!(e.contains("/nonexistent/x.png"));
        assert!(load_source("synth:1:bad").is_err());
        assert_eq!(load_source("synth:1:16x8").unwrap().rows(), 16);
    }
}
