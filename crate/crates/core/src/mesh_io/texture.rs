//! Floating-point texture maps with a typed channel role.

use std::fmt;
use std::io::Cursor;
use std::path::Path;
use std::str::FromStr;

use image::{DynamicImage, ImageBuffer, ImageFormat, Luma, Rgb};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TextureError {
    #[error("unsupported texture format: {0}")]
    UnsupportedFormat(String),
    #[error("role {role} needs {expected} channel(s), file has {found}")]
    ChannelMismatch {
        role: Role,
        expected: usize,
        found: usize,
    },
    #[error("invalid texture layout: {0}")]
    InvalidLayout(String),
    #[error("texture io: {0}")]
    Io(#[from] std::io::Error),
    #[error("image codec: {0}")]
    Codec(String),
}

/// What a texture map encodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Diffuse,
    #[serde(alias = "basecolor")]
    Albedo,
    Normal,
    Roughness,
    Metalness,
    Height,
    Specular,
}

impl Role {
    pub const ALL: [Role; 7] = [
        Role::Diffuse,
        Role::Albedo,
        Role::Normal,
        Role::Roughness,
        Role::Metalness,
        Role::Height,
        Role::Specular,
    ];

    /// The five channels synthesized for every asset.
    pub const SVBRDF: [Role; 5] = [
        Role::Normal,
        Role::Roughness,
        Role::Metalness,
        Role::Height,
        Role::Specular,
    ];

    pub fn channels(self) -> usize {
        match self {
            Role::Diffuse | Role::Albedo | Role::Normal => 3,
            Role::Roughness | Role::Metalness | Role::Height | Role::Specular => 1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Role::Diffuse => "diffuse",
            Role::Albedo => "albedo",
            Role::Normal => "normal",
            Role::Roughness => "roughness",
            Role::Metalness => "metalness",
            Role::Height => "height",
            Role::Specular => "specular",
        }
    }

    /// Neutral value used when a material lacks the map and on unoccupied texels.
    pub fn default_value(self) -> &'static [f32] {
        match self {
            Role::Normal => &[0.5, 0.5, 1.0],
            Role::Roughness => &[0.5],
            Role::Metalness => &[0.0],
            Role::Height => &[0.5],
            Role::Specular => &[0.5],
            Role::Diffuse | Role::Albedo => &[0.5, 0.5, 0.5],
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Role {
    type Err = TextureError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "diffuse" => Ok(Role::Diffuse),
            "albedo" | "basecolor" => Ok(Role::Albedo),
            "normal" => Ok(Role::Normal),
            "roughness" => Ok(Role::Roughness),
            "metalness" | "metallic" => Ok(Role::Metalness),
            "height" => Ok(Role::Height),
            "specular" => Ok(Role::Specular),
            other => Err(TextureError::InvalidLayout(format!("unknown role {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BitDepth {
    #[default]
    Eight,
    Sixteen,
}

/// Row-major image with values in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct TextureMap {
    width: usize,
    height: usize,
    channels: usize,
    role: Role,
    data: Vec<f32>,
}

impl TextureMap {
    pub fn new(
        width: usize,
        height: usize,
        channels: usize,
        role: Role,
        data: Vec<f32>,
    ) -> Result<Self, TextureError> {
        if width == 0 || height == 0 {
            return Err(TextureError::InvalidLayout(format!(
                "empty texture {width}x{height}"
            )));
        }
        if channels != role.channels() {
            return Err(TextureError::ChannelMismatch {
                role,
                expected: role.channels(),
                found: channels,
            });
        }
        if data.len() != width * height * channels {
            return Err(TextureError::InvalidLayout(format!(
                "{} values for {width}x{height}x{channels}",
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            channels,
            role,
            data,
        })
    }

    /// A texture where every texel holds `value`.
    pub fn filled(width: usize, height: usize, role: Role, value: &[f32]) -> Self {
        assert_eq!(value.len(), role.channels(), "fill value arity");
        assert!(width > 0 && height > 0, "empty texture");
        let data = value
            .iter()
            .copied()
            .cycle()
            .take(width * height * value.len())
            .collect();
        Self {
            width,
            height,
            channels: value.len(),
            role,
            data,
        }
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        role: Role,
        mut f: impl FnMut(usize, usize) -> Vec<f32>,
    ) -> Self {
        assert!(width > 0 && height > 0, "empty texture");
        let channels = role.channels();
        let mut data = Vec::with_capacity(width * height * channels);
        for y in 0..height {
            for x in 0..width {
                let px = f(x, y);
                assert_eq!(px.len(), channels, "pixel arity");
                data.extend_from_slice(&px);
            }
        }
        Self {
            width,
            height,
            channels,
            role,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn role(&self) -> Role {
        self.role
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn len_pixels(&self) -> usize {
        self.width * self.height
    }

    /// Reinterprets the texture under another role with the same channel count.
    pub fn with_role(mut self, role: Role) -> Result<Self, TextureError> {
        if role.channels() != self.channels {
            return Err(TextureError::ChannelMismatch {
                role,
                expected: role.channels(),
                found: self.channels,
            });
        }
        self.role = role;
        Ok(self)
    }

    pub fn pixel(&self, index: usize) -> &[f32] {
        &self.data[index * self.channels..(index + 1) * self.channels]
    }

    pub fn pixel_mut(&mut self, index: usize) -> &mut [f32] {
        let c = self.channels;
        &mut self.data[index * c..(index + 1) * c]
    }

    pub fn get(&self, x: usize, y: usize) -> &[f32] {
        self.pixel(y * self.width + x)
    }

    /// RGB triple of a 3-channel texture; scalar textures are broadcast.
    pub fn rgb(&self, index: usize) -> [f32; 3] {
        let p = self.pixel(index);
        if p.len() == 3 {
            [p[0], p[1], p[2]]
        } else {
            [p[0]; 3]
        }
    }

    /// Nearest-texel lookup with repeat addressing.
    pub fn sample_nearest(&self, uv: [f32; 2]) -> &[f32] {
        let (x, y) = uv_to_texel(uv, self.width, self.height);
        self.get(x, y)
    }

    pub fn channel_means(&self) -> Vec<f32> {
        let mut sums = vec![0f64; self.channels];
        for px in self.data.chunks_exact(self.channels) {
            for (s, v) in sums.iter_mut().zip(px) {
                *s += *v as f64;
            }
        }
        let n = self.len_pixels() as f64;
        sums.into_iter().map(|s| (s / n) as f32).collect()
    }

    pub fn mean_luminance(&self) -> f32 {
        let m = self.channel_means();
        if m.len() == 3 {
            crate::math::luminance([m[0], m[1], m[2]])
        } else {
            m[0]
        }
    }

    /// Bilinear resize under wrap addressing, preserving tileability. Normal maps are
    /// renormalized after filtering.
    pub fn resize_bilinear_wrap(&self, width: usize, height: usize) -> TextureMap {
        if (width, height) == (self.width, self.height) {
            return self.clone();
        }
        let c = self.channels;
        let sx = self.width as f64 / width as f64;
        let sy = self.height as f64 / height as f64;
        let mut data = vec![0f32; width * height * c];
        for y in 0..height {
            let fy = (y as f64 + 0.5) * sy - 0.5;
            let y0 = fy.floor();
            let ty = fy - y0;
            let ya = (y0 as i64).rem_euclid(self.height as i64) as usize;
            let yb = (y0 as i64 + 1).rem_euclid(self.height as i64) as usize;
            for x in 0..width {
                let fx = (x as f64 + 0.5) * sx - 0.5;
                let x0 = fx.floor();
                let tx = fx - x0;
                let xa = (x0 as i64).rem_euclid(self.width as i64) as usize;
                let xb = (x0 as i64 + 1).rem_euclid(self.width as i64) as usize;
                let out = &mut data[(y * width + x) * c..(y * width + x + 1) * c];
                for k in 0..c {
                    let v00 = self.get(xa, ya)[k] as f64;
                    let v10 = self.get(xb, ya)[k] as f64;
                    let v01 = self.get(xa, yb)[k] as f64;
                    let v11 = self.get(xb, yb)[k] as f64;
                    let top = v00 + (v10 - v00) * tx;
                    let bottom = v01 + (v11 - v01) * tx;
                    out[k] = (top + (bottom - top) * ty) as f32;
                }
                if self.role == Role::Normal {
                    renormalize_encoded_normal(out);
                }
            }
        }
        TextureMap {
            width,
            height,
            channels: c,
            role: self.role,
            data,
        }
    }

    /// Encodes as PNG: grayscale for scalar maps, RGB otherwise.
    pub fn encode_png(&self, depth: BitDepth) -> Result<Vec<u8>, TextureError> {
        let w = self.width as u32;
        let h = self.height as u32;
        let img: DynamicImage = match (self.channels, depth) {
            (1, BitDepth::Eight) => {
                let buf: Vec<u8> = self.data.iter().map(|&v| quantize8(v)).collect();
                DynamicImage::ImageLuma8(ImageBuffer::<Luma<u8>, _>::from_raw(w, h, buf).unwrap())
            }
            (1, BitDepth::Sixteen) => {
                let buf: Vec<u16> = self.data.iter().map(|&v| quantize16(v)).collect();
                DynamicImage::ImageLuma16(ImageBuffer::<Luma<u16>, _>::from_raw(w, h, buf).unwrap())
            }
            (_, BitDepth::Eight) => {
                let buf: Vec<u8> = self.data.iter().map(|&v| quantize8(v)).collect();
                DynamicImage::ImageRgb8(ImageBuffer::<Rgb<u8>, _>::from_raw(w, h, buf).unwrap())
            }
            (_, BitDepth::Sixteen) => {
                let buf: Vec<u16> = self.data.iter().map(|&v| quantize16(v)).collect();
                DynamicImage::ImageRgb16(ImageBuffer::<Rgb<u16>, _>::from_raw(w, h, buf).unwrap())
            }
        };
        let mut out = Cursor::new(Vec::new());
        img.write_to(&mut out, ImageFormat::Png)
            .map_err(|e| TextureError::Codec(e.to_string()))?;
        Ok(out.into_inner())
    }

    pub fn save_png(&self, path: &Path, depth: BitDepth) -> Result<(), TextureError> {
        std::fs::write(path, self.encode_png(depth)?)?;
        Ok(())
    }

    /// Writes the texture as a float EXR with one channel per component (Y, or R/G/B).
    pub fn save_exr(&self, path: &Path) -> Result<(), TextureError> {
        use exr::prelude::*;
        let names: &[&str] = if self.channels == 1 { &["Y"] } else { &["R", "G", "B"] };
        let mut list = SmallVec::new();
        for (k, name) in names.iter().enumerate() {
            let samples: Vec<f32> = self
                .data
                .iter()
                .skip(k)
                .step_by(self.channels)
                .copied()
                .collect();
            list.push(AnyChannel::new(*name, FlatSamples::F32(samples)));
        }
        let layer = Layer::new(
            (self.width, self.height),
            LayerAttributes::default(),
            Encoding::FAST_LOSSLESS,
            AnyChannels::sort(list),
        );
        Image::from_layer(layer)
            .write()
            .to_file(path)
            .map_err(|e| TextureError::Codec(e.to_string()))
    }
}

fn renormalize_encoded_normal(px: &mut [f32]) {
    let v = [px[0] * 2.0 - 1.0, px[1] * 2.0 - 1.0, px[2] * 2.0 - 1.0];
    let len = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    if len > 1e-6 {
        for k in 0..3 {
            px[k] = (v[k] / len) * 0.5 + 0.5;
        }
    } else {
        px.copy_from_slice(&[0.5, 0.5, 1.0]);
    }
}

pub fn quantize8(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

pub fn quantize16(v: f32) -> u16 {
    (v.clamp(0.0, 1.0) * 65535.0).round() as u16
}

/// Texel containing a UV coordinate. V runs bottom-to-top, rows top-to-bottom.
pub fn uv_to_texel(uv: [f32; 2], width: usize, height: usize) -> (usize, usize) {
    let u = super::obj::wrap_uv(uv[0]);
    let v = super::obj::wrap_uv(uv[1]);
    let x = ((u as f64 * width as f64).floor() as usize).min(width - 1);
    let y = (((1.0 - v as f64) * height as f64).floor() as usize).min(height - 1);
    (x, y)
}

/// UV coordinate of a texel center.
pub fn texel_center_uv(x: usize, y: usize, width: usize, height: usize) -> [f64; 2] {
    [
        (x as f64 + 0.5) / width as f64,
        1.0 - (y as f64 + 0.5) / height as f64,
    ]
}

fn conform(
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f32>,
    role: Role,
) -> Result<TextureMap, TextureError> {
    let want = role.channels();
    if channels == want {
        return TextureMap::new(width, height, channels, role, data);
    }
    if channels == 1 && want == 3 && role == Role::Diffuse {
        let data = data.iter().flat_map(|&v| [v, v, v]).collect();
        return TextureMap::new(width, height, 3, role, data);
    }
    Err(TextureError::ChannelMismatch {
        role,
        expected: want,
        found: channels,
    })
}

/// Decodes PNG bytes into a texture for `role`.
pub fn decode_png(bytes: &[u8], role: Role) -> Result<TextureMap, TextureError> {
    let format = image::guess_format(bytes).map_err(|e| TextureError::UnsupportedFormat(e.to_string()))?;
    if format != ImageFormat::Png {
        return Err(TextureError::UnsupportedFormat(format!("{format:?}")));
    }
    let img = image::load_from_memory_with_format(bytes, ImageFormat::Png)
        .map_err(|e| TextureError::Codec(e.to_string()))?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let (channels, data): (usize, Vec<f32>) = match img {
        DynamicImage::ImageLuma8(b) => (1, b.into_raw().into_iter().map(|v| v as f32 / 255.0).collect()),
        DynamicImage::ImageLumaA8(b) => (1, b.pixels().map(|p| p[0] as f32 / 255.0).collect()),
        DynamicImage::ImageLuma16(b) => (1, b.into_raw().into_iter().map(|v| v as f32 / 65535.0).collect()),
        DynamicImage::ImageLumaA16(b) => (1, b.pixels().map(|p| p[0] as f32 / 65535.0).collect()),
        DynamicImage::ImageRgb8(b) => (3, b.into_raw().into_iter().map(|v| v as f32 / 255.0).collect()),
        DynamicImage::ImageRgba8(b) => (
            3,
            b.pixels().flat_map(|p| [p[0], p[1], p[2]]).map(|v| v as f32 / 255.0).collect(),
        ),
        DynamicImage::ImageRgb16(b) => (3, b.into_raw().into_iter().map(|v| v as f32 / 65535.0).collect()),
        DynamicImage::ImageRgba16(b) => (
            3,
            b.pixels().flat_map(|p| [p[0], p[1], p[2]]).map(|v| v as f32 / 65535.0).collect(),
        ),
        other => {
            return Err(TextureError::UnsupportedFormat(format!(
                "{:?}",
                other.color()
            )))
        }
    };
    conform(w, h, channels, data, role)
}

fn load_exr(path: &Path, role: Role) -> Result<TextureMap, TextureError> {
    use exr::prelude::*;
    let image = read()
        .no_deep_data()
        .largest_resolution_level()
        .all_channels()
        .first_valid_layer()
        .all_attributes()
        .from_file(path)
        .map_err(|e| TextureError::Codec(e.to_string()))?;
    let layer = image.layer_data;
    let (w, h) = (layer.size.width(), layer.size.height());
    let list = &layer.channel_data.list;
    let find = |name: &str| {
        list.iter()
            .find(|c| c.name.to_string().eq_ignore_ascii_case(name))
            .map(|c| c.sample_data.values_as_f32().collect::<Vec<f32>>())
    };
    let planes: Vec<Vec<f32>> = match (find("R"), find("G"), find("B")) {
        (Some(r), Some(g), Some(b)) => vec![r, g, b],
        _ => {
            let scalar: Vec<&_> = list
                .iter()
                .filter(|c| !c.name.to_string().eq_ignore_ascii_case("A"))
                .collect();
            if scalar.len() != 1 {
                return Err(TextureError::UnsupportedFormat(format!(
                    "EXR with {} non-alpha channels",
                    scalar.len()
                )));
            }
            vec![scalar[0].sample_data.values_as_f32().collect()]
        }
    };
    let channels = planes.len();
    let mut data = Vec::with_capacity(w * h * channels);
    for i in 0..w * h {
        for plane in &planes {
            let v = plane[i];
            data.push(if v.is_finite() { v.clamp(0.0, 1.0) } else { 0.0 });
        }
    }
    conform(w, h, channels, data, role)
}

/// Loads a PNG (8/16-bit) or EXR file as a texture for `role`.
pub fn load_texture(path: &Path, role: Role) -> Result<TextureMap, TextureError> {
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase());
    match ext.as_deref() {
        Some("exr") => load_exr(path, role),
        Some("png") => decode_png(&std::fs::read(path)?, role),
        other => Err(TextureError::UnsupportedFormat(format!(
            "extension {:?}",
            other.unwrap_or("")
        ))),
    }
}
