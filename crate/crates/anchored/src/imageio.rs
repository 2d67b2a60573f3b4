//! PNG encoding of raster buffers: 8-bit RGB images, 8-bit masks and 16-bit
//! millimetre depth (0 marks invalid).

use std::io::Cursor;
use std::path::Path;

use anchored_core::{AlphaMask, DepthMap, RgbImage};
use image::{DynamicImage, GrayImage, ImageBuffer, ImageFormat, Luma, RgbImage as Rgb8};

use crate::error::{Error, Result};

/// Largest depth a 16-bit millimetre PNG can hold.
pub const MAX_DEPTH_MM: u16 = u16::MAX;

fn to_u8(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

fn encode(img: DynamicImage) -> Vec<u8> {
    let mut out = Cursor::new(Vec::new());
    img.write_to(&mut out, ImageFormat::Png).expect("PNG encoding into memory cannot fail");
    out.into_inner()
}

fn decode(bytes: &[u8]) -> std::result::Result<DynamicImage, String> {
    image::load_from_memory_with_format(bytes, ImageFormat::Png).map_err(|e| e.to_string())
}

pub fn encode_rgb(img: &RgbImage) -> Vec<u8> {
    let raw = img.as_slice().iter().map(|v| to_u8(*v)).collect();
    let buf = Rgb8::from_raw(img.width() as u32, img.height() as u32, raw).expect("buffer size matches");
    encode(DynamicImage::ImageRgb8(buf))
}

/// Decodes any PNG colour type to RGB.
pub fn decode_rgb(bytes: &[u8]) -> std::result::Result<RgbImage, String> {
    let img = decode(bytes)?.to_rgb8();
    let data = img.as_raw().iter().map(|v| *v as f64 / 255.0).collect();
    RgbImage::from_vec(img.width() as usize, img.height() as usize, data).map_err(|e| e.to_string())
}

/// 255 where the mask value is 1.
pub fn encode_mask(mask: &AlphaMask) -> Vec<u8> {
    let raw = mask.values().iter().map(|v| to_u8(*v)).collect();
    let buf = GrayImage::from_raw(mask.width() as u32, mask.height() as u32, raw).expect("buffer size matches");
    encode(DynamicImage::ImageLuma8(buf))
}

pub fn decode_mask(bytes: &[u8]) -> std::result::Result<AlphaMask, String> {
    let img = decode(bytes)?.to_luma8();
    let data = img.as_raw().iter().map(|v| *v as f64 / 255.0).collect();
    AlphaMask::from_vec(img.width() as usize, img.height() as usize, data).map_err(|e| e.to_string())
}

/// Depth in whole millimetres; invalid pixels are 0 and depths beyond the
/// 16-bit range saturate.
pub fn encode_depth_mm(depth: &DepthMap) -> Vec<u8> {
    let raw: Vec<u16> = (0..depth.len_pixels())
        .map(|i| match depth.get_at(i) {
            Some(d) => (d * 1000.0).round().clamp(1.0, MAX_DEPTH_MM as f64) as u16,
            None => 0,
        })
        .collect();
    let buf: ImageBuffer<Luma<u16>, Vec<u16>> =
        ImageBuffer::from_raw(depth.width() as u32, depth.height() as u32, raw).expect("buffer size matches");
    encode(DynamicImage::ImageLuma16(buf))
}

pub fn decode_depth_mm(bytes: &[u8]) -> std::result::Result<DepthMap, String> {
    let img = match decode(bytes)? {
        DynamicImage::ImageLuma16(b) => b,
        other => return Err(format!("depth PNG must be 16-bit grayscale, got {:?}", other.color())),
    };
    let (w, h) = (img.width() as usize, img.height() as usize);
    let raw = img.as_raw();
    Ok(DepthMap::from_fn(w, h, |u, v| match raw[v * w + u] {
        0 => None,
        mm => Some(mm as f64 / 1000.0),
    }))
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_rgb(path: &Path) -> Result<RgbImage> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let img = image::load_from_memory(&bytes).map_err(|e| Error::format(path, e.to_string()))?.to_rgb8();
    let data = img.as_raw().iter().map(|v| *v as f64 / 255.0).collect();
    Ok(RgbImage::from_vec(img.width() as usize, img.height() as usize, data)?)
}

pub fn write_rgb(path: &Path, img: &RgbImage) -> Result<()> {
    write_bytes(path, &encode_rgb(img))
}

pub fn write_depth_mm(path: &Path, depth: &DepthMap) -> Result<()> {
    write_bytes(path, &encode_depth_mm(depth))
}
