//! RGB channel separation and per-channel color histograms.
//!
//! A feature vector is the concatenation of three normalized intensity
//! histograms (red, green, blue), each with `bins_per_channel` bins. Pixel
//! intensity `v` falls in bin `floor(v * B / 256)`, and every channel
//! segment is divided by the pixel count so that it sums to one.

use std::path::Path;

use image::DynamicImage;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_BINS: usize = 16;
pub const MIN_BINS: usize = 2;
pub const MAX_BINS: usize = 256;
pub const CHANNELS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractionParams {
    bins_per_channel: usize,
}

impl ExtractionParams {
    pub fn new(bins_per_channel: usize) -> Result<Self> {
        if !(MIN_BINS..=MAX_BINS).contains(&bins_per_channel) {
            return Err(Error::InvalidParams(format!(
                "bins_per_channel must be in [{MIN_BINS}, {MAX_BINS}], got {bins_per_channel}"
            )));
        }
        Ok(Self { bins_per_channel })
    }

    pub fn bins_per_channel(&self) -> usize {
        self.bins_per_channel
    }

    /// Length of every vector produced with these parameters.
    pub fn vector_len(&self) -> usize {
        CHANNELS * self.bins_per_channel
    }

    #[inline]
    pub fn bin_of(&self, intensity: u8) -> usize {
        usize::from(intensity) * self.bins_per_channel / 256
    }
}

impl Default for ExtractionParams {
    fn default() -> Self {
        Self {
            bins_per_channel: DEFAULT_BINS,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    values: Vec<f64>,
    params: ExtractionParams,
}

impl FeatureVector {
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn params(&self) -> ExtractionParams {
        self.params
    }

    /// Segment `c` (0 = red, 1 = green, 2 = blue).
    pub fn channel(&self, c: usize) -> &[f64] {
        let b = self.params.bins_per_channel;
        &self.values[c * b..(c + 1) * b]
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
}

/// Three 8-bit planes of identical dimensions, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChannelPlanes {
    pub width: u32,
    pub height: u32,
    pub red: Vec<u8>,
    pub green: Vec<u8>,
    pub blue: Vec<u8>,
}

impl ChannelPlanes {
    pub fn pixel_count(&self) -> usize {
        self.red.len()
    }

    pub fn planes(&self) -> [&[u8]; CHANNELS] {
        [&self.red, &self.green, &self.blue]
    }
}

/// Decodes a PNG or JPEG file. The format is sniffed from content, not the
/// extension.
pub fn decode_image(path: &Path) -> Result<DynamicImage> {
    let decode_err = |reason: String| Error::Decode {
        path: path.to_path_buf(),
        reason,
    };
    let img = image::ImageReader::open(path)
        .map_err(|e| decode_err(e.to_string()))?
        .with_guessed_format()
        .map_err(|e| decode_err(e.to_string()))?
        .decode()
        .map_err(|e| decode_err(e.to_string()))?;
    if img.width() == 0 || img.height() == 0 {
        return Err(decode_err("image has no pixels".into()));
    }
    Ok(img)
}

/// Separates an image into red, green and blue planes. Grayscale is
/// replicated into all three channels and alpha is dropped.
pub fn split_channels(image: &DynamicImage) -> Result<ChannelPlanes> {
    let rgb = image.to_rgb8();
    let (width, height) = rgb.dimensions();
    if width == 0 || height == 0 {
        return Err(Error::Decode {
            path: "<memory>".into(),
            reason: "image has no pixels".into(),
        });
    }
    let n = (width as usize) * (height as usize);
    let mut planes = ChannelPlanes {
        width,
        height,
        red: Vec::with_capacity(n),
        green: Vec::with_capacity(n),
        blue: Vec::with_capacity(n),
    };
    for px in rgb.pixels() {
        planes.red.push(px[0]);
        planes.green.push(px[1]);
        planes.blue.push(px[2]);
    }
    Ok(planes)
}

pub fn histogram_features(planes: &ChannelPlanes, params: ExtractionParams) -> FeatureVector {
    let b = params.bins_per_channel;
    let mut counts = vec![0u64; CHANNELS * b];
    for (c, plane) in planes.planes().into_iter().enumerate() {
        let segment = &mut counts[c * b..(c + 1) * b];
        for &v in plane {
            segment[params.bin_of(v)] += 1;
        }
    }
    let total = planes.pixel_count() as f64;
    FeatureVector {
        values: counts.into_iter().map(|n| n as f64 / total).collect(),
        params,
    }
}

pub fn extract_features(image: &DynamicImage, params: ExtractionParams) -> Result<FeatureVector> {
    let planes = split_channels(image)?;
    Ok(histogram_features(&planes, params))
}

pub fn extract_features_from_path(path: &Path, params: ExtractionParams) -> Result<FeatureVector> {
    let img = decode_image(path)?;
    extract_features(&img, params)
}
