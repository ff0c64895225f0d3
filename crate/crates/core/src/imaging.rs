//! Image and annotation ingestion.
//!
//! Rasters are plain row-major byte buffers; decoding goes through the
//! `image` crate (PNG and binary PPM). Annotation files stand in for the
//! output of an object detector: each entry names an image, a device class
//! and the bounding box the rest of the pipeline works on.

use std::fs;
use std::io::{self, BufWriter};
use std::path::Path;

use image::{DynamicImage, ImageReader};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Smallest accepted ROI side, in pixels.
pub const MIN_ROI_SIDE: u32 = 8;

#[derive(Debug, Error)]
pub enum ImagingError {
    #[error("file not found: {0}")]
    FileNotFound(String),
    #[error("unsupported image format: {0}")]
    UnsupportedFormat(String),
    #[error("corrupt image: {0}")]
    CorruptImage(String),
    #[error("bounding box {bbox:?} exceeds {width}x{height} image")]
    BboxOutOfBounds { bbox: Bbox, width: u32, height: u32 },
    #[error("annotation parse error: {0}")]
    ParseError(String),
    #[error("annotation schema error: {0}")]
    SchemaError(String),
    #[error("invalid raster: {0}")]
    InvalidRaster(String),
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
}

/// 8-bit RGB raster, row-major, three bytes per pixel.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct RgbImage {
    width: u32,
    height: u32,
    data: Vec<u8>,
}

impl RgbImage {
    pub fn new(width: u32, height: u32, data: Vec<u8>) -> Result<Self, ImagingError> {
        if width == 0 || height == 0 {
            return Err(ImagingError::InvalidRaster(format!(
                "dimensions must be positive, got {width}x{height}"
            )));
        }
        let expected = width as usize * height as usize * 3;
        if data.len() != expected {
            return Err(ImagingError::InvalidRaster(format!(
                "expected {expected} bytes, got {}",
                data.len()
            )));
        }
        Ok(Self { width, height, data })
    }

    /// Solid-color image.
    pub fn filled(width: u32, height: u32, rgb: [u8; 3]) -> Self {
        Self::from_fn(width, height, |_, _| rgb)
    }

    /// Builds an image by evaluating `f(x, y)` at every pixel.
    ///
    /// Panics if either dimension is zero.
    pub fn from_fn(width: u32, height: u32, mut f: impl FnMut(u32, u32) -> [u8; 3]) -> Self {
        assert!(width > 0 && height > 0, "image dimensions must be positive");
        let mut data = Vec::with_capacity(width as usize * height as usize * 3);
        for y in 0..height {
            for x in 0..width {
                data.extend_from_slice(&f(x, y));
            }
        }
        Self { width, height, data }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn pixel_count(&self) -> usize {
        self.width as usize * self.height as usize
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn pixel(&self, x: u32, y: u32) -> [u8; 3] {
        let i = (y as usize * self.width as usize + x as usize) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn put_pixel(&mut self, x: u32, y: u32, rgb: [u8; 3]) {
        let i = (y as usize * self.width as usize + x as usize) * 3;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    /// Pixels in row-major order.
    pub fn pixels(&self) -> impl Iterator<Item = [u8; 3]> + '_ {
        self.data.chunks_exact(3).map(|c| [c[0], c[1], c[2]])
    }

    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<(), ImagingError> {
        let buf = image::RgbImage::from_raw(self.width, self.height, self.data.clone())
            .expect("buffer length checked at construction");
        buf.save_with_format(path.as_ref(), image::ImageFormat::Png)
            .map_err(|e| ImagingError::Io(io::Error::other(e)))
    }
}

/// CIELAB raster (D65 white point).
#[derive(Debug, Clone, PartialEq)]
pub struct LabImage {
    width: u32,
    height: u32,
    data: Vec<[f64; 3]>,
}

impl LabImage {
    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn data(&self) -> &[[f64; 3]] {
        &self.data
    }

    pub fn get(&self, x: u32, y: u32) -> [f64; 3] {
        self.data[y as usize * self.width as usize + x as usize]
    }

    pub fn from_raw(width: u32, height: u32, data: Vec<[f64; 3]>) -> Result<Self, ImagingError> {
        if width == 0 || height == 0 || data.len() != width as usize * height as usize {
            return Err(ImagingError::InvalidRaster(format!(
                "lab raster {width}x{height} with {} samples",
                data.len()
            )));
        }
        Ok(Self { width, height, data })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeviceClass {
    Line,
    Insulator,
}

impl DeviceClass {
    pub fn as_str(self) -> &'static str {
        match self {
            DeviceClass::Line => "line",
            DeviceClass::Insulator => "insulator",
        }
    }
}

/// Ground-truth condition of a device; doubles as the verdict vocabulary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TruthLabel {
    Normal,
    ForeignObject,
    InsulatorMissing,
    LightningBreakage,
    BrokenWire,
}

impl TruthLabel {
    pub const DEFECTS: [TruthLabel; 4] = [
        TruthLabel::ForeignObject,
        TruthLabel::InsulatorMissing,
        TruthLabel::LightningBreakage,
        TruthLabel::BrokenWire,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TruthLabel::Normal => "normal",
            TruthLabel::ForeignObject => "foreign_object",
            TruthLabel::InsulatorMissing => "insulator_missing",
            TruthLabel::LightningBreakage => "lightning_breakage",
            TruthLabel::BrokenWire => "broken_wire",
        }
    }

    /// Device class a defect type can occur on; `None` for `Normal`.
    pub fn device_class(self) -> Option<DeviceClass> {
        match self {
            TruthLabel::Normal => None,
            TruthLabel::ForeignObject | TruthLabel::BrokenWire => Some(DeviceClass::Line),
            TruthLabel::InsulatorMissing | TruthLabel::LightningBreakage => {
                Some(DeviceClass::Insulator)
            }
        }
    }
}

/// Axis-aligned box `(x, y, w, h)` in pixels; serialized as a 4-element array.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(from = "[u32; 4]", into = "[u32; 4]")]
pub struct Bbox {
    pub x: u32,
    pub y: u32,
    pub w: u32,
    pub h: u32,
}

impl Bbox {
    pub fn new(x: u32, y: u32, w: u32, h: u32) -> Self {
        Self { x, y, w, h }
    }

    pub fn area(&self) -> u64 {
        u64::from(self.w) * u64::from(self.h)
    }

    pub fn fits(&self, width: u32, height: u32) -> bool {
        u64::from(self.x) + u64::from(self.w) <= u64::from(width)
            && u64::from(self.y) + u64::from(self.h) <= u64::from(height)
    }
}

impl From<[u32; 4]> for Bbox {
    fn from(v: [u32; 4]) -> Self {
        Bbox::new(v[0], v[1], v[2], v[3])
    }
}

impl From<Bbox> for [u32; 4] {
    fn from(b: Bbox) -> Self {
        [b.x, b.y, b.w, b.h]
    }
}

/// One device detection: where it is, what it is, and optionally what is
/// known to be wrong with it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoiAnnotation {
    #[serde(rename = "image")]
    pub image_path: String,
    #[serde(rename = "class")]
    pub device_class: DeviceClass,
    pub bbox: Bbox,
    #[serde(rename = "truth", default, skip_serializing_if = "Option::is_none")]
    pub truth_label: Option<TruthLabel>,
}

impl RoiAnnotation {
    pub fn validate(&self) -> Result<(), ImagingError> {
        if self.bbox.w < MIN_ROI_SIDE || self.bbox.h < MIN_ROI_SIDE {
            return Err(ImagingError::SchemaError(format!(
                "bbox {:?} smaller than {MIN_ROI_SIDE}x{MIN_ROI_SIDE}",
                <[u32; 4]>::from(self.bbox)
            )));
        }
        Ok(())
    }
}

fn decode(dynamic: DynamicImage, origin: &str) -> Result<RgbImage, ImagingError> {
    let (w, h) = (dynamic.width(), dynamic.height());
    let data = match dynamic {
        DynamicImage::ImageRgb8(buf) => buf.into_raw(),
        // alpha is dropped
        DynamicImage::ImageRgba8(buf) => buf.pixels().flat_map(|p| [p[0], p[1], p[2]]).collect(),
        other => {
            return Err(ImagingError::UnsupportedFormat(format!(
                "{origin}: color type {:?} is not 8-bit RGB",
                other.color()
            )))
        }
    };
    RgbImage::new(w, h, data).map_err(|e| ImagingError::CorruptImage(format!("{origin}: {e}")))
}

fn open_dynamic(path: &Path) -> Result<DynamicImage, ImagingError> {
    let origin = path.display().to_string();
    let reader = ImageReader::open(path).map_err(|e| match e.kind() {
        io::ErrorKind::NotFound => ImagingError::FileNotFound(origin.clone()),
        _ => ImagingError::Io(e),
    })?;
    let reader = reader.with_guessed_format()?;
    match reader.format() {
        Some(image::ImageFormat::Png) | Some(image::ImageFormat::Pnm) => {}
        Some(f) => return Err(ImagingError::UnsupportedFormat(format!("{origin}: {f:?}"))),
        None => {
            return Err(ImagingError::UnsupportedFormat(format!(
                "{origin}: unrecognized container"
            )))
        }
    }
    reader.decode().map_err(|e| match e {
        image::ImageError::Unsupported(u) => {
            ImagingError::UnsupportedFormat(format!("{origin}: {u}"))
        }
        other => ImagingError::CorruptImage(format!("{origin}: {other}")),
    })
}

/// Loads an 8-bit RGB(A) PNG or binary PPM.
pub fn load_image(path: impl AsRef<Path>) -> Result<RgbImage, ImagingError> {
    let path = path.as_ref();
    decode(open_dynamic(path)?, &path.display().to_string())
}

/// Loads a binary mask; any pixel with luma above 127 is set.
pub fn load_mask(path: impl AsRef<Path>) -> Result<(u32, u32, Vec<bool>), ImagingError> {
    let path = path.as_ref();
    let dynamic = open_dynamic(path)?;
    let luma = dynamic.to_luma8();
    let (w, h) = luma.dimensions();
    Ok((w, h, luma.into_raw().into_iter().map(|v| v > 127).collect()))
}

/// Writes a binary mask as an 8-bit grayscale PNG (0 / 255).
pub fn save_mask(
    width: u32,
    height: u32,
    bits: &[bool],
    path: impl AsRef<Path>,
) -> Result<(), ImagingError> {
    let data = bits.iter().map(|&b| if b { 255 } else { 0 }).collect();
    let buf = image::GrayImage::from_raw(width, height, data)
        .ok_or_else(|| ImagingError::InvalidRaster("mask length mismatch".into()))?;
    buf.save_with_format(path.as_ref(), image::ImageFormat::Png)
        .map_err(|e| ImagingError::Io(io::Error::other(e)))
}

/// Writes integer ids as a grayscale PNG, 8-bit when every id fits, else 16-bit.
pub fn save_id_png(
    width: u32,
    height: u32,
    ids: &[u32],
    path: impl AsRef<Path>,
) -> Result<(), ImagingError> {
    let max = ids.iter().copied().max().unwrap_or(0);
    if max > u32::from(u16::MAX) {
        return Err(ImagingError::InvalidRaster(format!("id {max} exceeds 16 bits")));
    }
    let file = fs::File::create(path.as_ref())?;
    let mut enc = png::Encoder::new(BufWriter::new(file), width, height);
    enc.set_color(png::ColorType::Grayscale);
    let bytes: Vec<u8> = if max <= 255 {
        enc.set_depth(png::BitDepth::Eight);
        ids.iter().map(|&v| v as u8).collect()
    } else {
        enc.set_depth(png::BitDepth::Sixteen);
        ids.iter().flat_map(|&v| (v as u16).to_be_bytes()).collect()
    };
    let mut writer = enc.write_header().map_err(io::Error::other)?;
    writer.write_image_data(&bytes).map_err(io::Error::other)?;
    Ok(())
}

/// Fixed 256-entry palette: a few saturated colors, then a golden-angle hue walk.
pub fn label_palette() -> Vec<[u8; 3]> {
    const HEAD: [[u8; 3]; 8] = [
        [0, 0, 0],
        [230, 25, 75],
        [60, 180, 75],
        [255, 225, 25],
        [0, 130, 200],
        [245, 130, 48],
        [145, 30, 180],
        [70, 240, 240],
    ];
    let mut pal: Vec<[u8; 3]> = HEAD.to_vec();
    let mut hue = 0.0_f64;
    while pal.len() < 256 {
        hue = (hue + 137.507_764) % 360.0;
        pal.push(hsv_to_rgb(hue, 0.75, 0.9));
    }
    pal
}

fn hsv_to_rgb(h: f64, s: f64, v: f64) -> [u8; 3] {
    let c = v * s;
    let hp = h / 60.0;
    let x = c * (1.0 - (hp % 2.0 - 1.0).abs());
    let (r, g, b) = match hp as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = v - c;
    [
        ((r + m) * 255.0).round() as u8,
        ((g + m) * 255.0).round() as u8,
        ((b + m) * 255.0).round() as u8,
    ]
}

/// Writes ids (< 256) as an indexed-color PNG using [`label_palette`].
pub fn save_paletted_png(
    width: u32,
    height: u32,
    ids: &[u32],
    path: impl AsRef<Path>,
) -> Result<(), ImagingError> {
    if ids.len() != width as usize * height as usize {
        return Err(ImagingError::InvalidRaster("id buffer length mismatch".into()));
    }
    if let Some(&bad) = ids.iter().find(|&&v| v > 255) {
        return Err(ImagingError::InvalidRaster(format!("id {bad} exceeds palette")));
    }
    let file = fs::File::create(path.as_ref())?;
    let mut enc = png::Encoder::new(BufWriter::new(file), width, height);
    enc.set_color(png::ColorType::Indexed);
    enc.set_depth(png::BitDepth::Eight);
    enc.set_palette(label_palette().concat());
    let mut writer = enc.write_header().map_err(io::Error::other)?;
    let bytes: Vec<u8> = ids.iter().map(|&v| v as u8).collect();
    writer.write_image_data(&bytes).map_err(io::Error::other)?;
    Ok(())
}

fn srgb_to_linear(c: u8) -> f64 {
    let v = f64::from(c) / 255.0;
    if v <= 0.040_45 {
        v / 12.92
    } else {
        ((v + 0.055) / 1.055).powf(2.4)
    }
}

fn lab_f(t: f64) -> f64 {
    const DELTA: f64 = 6.0 / 29.0;
    if t > DELTA * DELTA * DELTA {
        t.cbrt()
    } else {
        t / (3.0 * DELTA * DELTA) + 4.0 / 29.0
    }
}

/// sRGB → CIELAB for one pixel, D65 reference white.
pub fn rgb_pixel_to_lab(rgb: [u8; 3]) -> [f64; 3] {
    const WHITE: [f64; 3] = [0.950_47, 1.0, 1.088_83];
    let r = srgb_to_linear(rgb[0]);
    let g = srgb_to_linear(rgb[1]);
    let b = srgb_to_linear(rgb[2]);
    let x = 0.412_456_4 * r + 0.357_576_1 * g + 0.180_437_5 * b;
    let y = 0.212_672_9 * r + 0.715_152_2 * g + 0.072_175_0 * b;
    let z = 0.019_333_9 * r + 0.119_192_0 * g + 0.950_304_1 * b;
    let fx = lab_f(x / WHITE[0]);
    let fy = lab_f(y / WHITE[1]);
    let fz = lab_f(z / WHITE[2]);
    let l = (116.0 * fy - 16.0).clamp(0.0, 100.0);
    [l, 500.0 * (fx - fy), 200.0 * (fy - fz)]
}

pub fn rgb_to_lab(img: &RgbImage) -> LabImage {
    LabImage {
        width: img.width,
        height: img.height,
        data: img.pixels().map(rgb_pixel_to_lab).collect(),
    }
}

/// Copies the annotated box out of `img`.
pub fn crop_roi(img: &RgbImage, bbox: Bbox) -> Result<RgbImage, ImagingError> {
    if bbox.w == 0 || bbox.h == 0 || !bbox.fits(img.width, img.height) {
        return Err(ImagingError::BboxOutOfBounds {
            bbox,
            width: img.width,
            height: img.height,
        });
    }
    let mut data = Vec::with_capacity(bbox.area() as usize * 3);
    let stride = img.width as usize * 3;
    for row in bbox.y..bbox.y + bbox.h {
        let start = row as usize * stride + bbox.x as usize * 3;
        data.extend_from_slice(&img.data[start..start + bbox.w as usize * 3]);
    }
    Ok(RgbImage {
        width: bbox.w,
        height: bbox.h,
        data,
    })
}

pub fn parse_annotations(json: &str) -> Result<Vec<RoiAnnotation>, ImagingError> {
    let value: serde_json::Value =
        serde_json::from_str(json).map_err(|e| ImagingError::ParseError(e.to_string()))?;
    if !value.is_array() {
        return Err(ImagingError::SchemaError("top level must be an array".into()));
    }
    let anns: Vec<RoiAnnotation> =
        serde_json::from_value(value).map_err(|e| ImagingError::SchemaError(e.to_string()))?;
    for ann in &anns {
        ann.validate()?;
    }
    Ok(anns)
}

pub fn load_annotations(path: impl AsRef<Path>) -> Result<Vec<RoiAnnotation>, ImagingError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| match e.kind() {
        io::ErrorKind::NotFound => ImagingError::FileNotFound(path.display().to_string()),
        _ => ImagingError::Io(e),
    })?;
    parse_annotations(&text)
}

pub fn save_annotations(
    anns: &[RoiAnnotation],
    path: impl AsRef<Path>,
) -> Result<(), ImagingError> {
    let text = serde_json::to_string_pretty(anns).map_err(io::Error::other)?;
    fs::write(path, text + "\n")?;
    Ok(())
}
