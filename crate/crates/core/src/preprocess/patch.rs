use rand::Rng;
use serde::{Deserialize, Serialize};

use super::hsv::hsv_bytes;
use super::image::RasterImage;
use super::otsu::OtsuResult;
use crate::bagdata::{Bag, Instance, Origin};
use crate::error::{MilError, Result};
use crate::scalar::Scalar;

/// Square tile of an image; samples are row-major with interleaved channels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Patch {
    pub side: usize,
    pub channels: usize,
    pub data: Vec<u8>,
    /// (row, col) of the top-left pixel in the parent image.
    pub source_offset: (usize, usize),
}

impl Patch {
    pub fn new(
        side: usize,
        channels: usize,
        data: Vec<u8>,
        source_offset: (usize, usize),
    ) -> Result<Self> {
        if side == 0 || data.len() != side * side * channels {
            return Err(MilError::Image(format!(
                "patch of side {side} with {channels} channels cannot hold {} samples",
                data.len()
            )));
        }
        Ok(Patch {
            side,
            channels,
            data,
            source_offset,
        })
    }

    pub fn pixels(&self) -> impl Iterator<Item = &[u8]> {
        self.data.chunks_exact(self.channels)
    }

    fn channel(&self, ch: usize) -> impl Iterator<Item = u8> + '_ {
        self.data.iter().skip(ch).step_by(self.channels).copied()
    }
}

/// Non-overlapping grid from the top-left; partial border tiles are dropped.
pub fn tile_image(img: &RasterImage, patch_side: usize) -> Result<Vec<Patch>> {
    if patch_side == 0 {
        return Err(MilError::Precondition("patch_side must be >= 1".into()));
    }
    let (rows, cols) = (img.height / patch_side, img.width / patch_side);
    let mut patches = Vec::with_capacity(rows * cols);
    for tr in 0..rows {
        for tc in 0..cols {
            let (r0, c0) = (tr * patch_side, tc * patch_side);
            let mut data = Vec::with_capacity(patch_side * patch_side * img.channels);
            for r in r0..r0 + patch_side {
                let start = (r * img.width + c0) * img.channels;
                data.extend_from_slice(&img.data[start..start + patch_side * img.channels]);
            }
            patches.push(Patch::new(patch_side, img.channels, data, (r0, c0))?);
        }
    }
    Ok(patches)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HsvChannel {
    Hue = 0,
    Saturation = 1,
    Value = 2,
}

/// Which side of the channel threshold counts as tissue.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarity {
    Above,
    Below,
}

/// Tissue test applied to every pixel of a patch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KeepRule {
    pub channel: HsvChannel,
    pub polarity: Polarity,
    /// A patch is kept iff its tissue fraction is strictly greater than this.
    pub tissue_fraction: f64,
}

impl Default for KeepRule {
    fn default() -> Self {
        KeepRule {
            channel: HsvChannel::Saturation,
            polarity: Polarity::Above,
            tissue_fraction: 0.25,
        }
    }
}

impl KeepRule {
    pub fn tissue_fraction_of(&self, patch: &Patch, thresholds: &[OtsuResult; 3]) -> f64 {
        let t = thresholds[self.channel as usize].threshold;
        let n = patch.side * patch.side;
        let tissue = patch
            .pixels()
            .filter(|px| {
                let hsv = pixel_hsv(px);
                let value = hsv[self.channel as usize];
                match self.polarity {
                    Polarity::Above => value > t,
                    Polarity::Below => value < t,
                }
            })
            .count();
        tissue as f64 / n as f64
    }

    pub fn keeps(&self, patch: &Patch, thresholds: &[OtsuResult; 3]) -> bool {
        self.tissue_fraction_of(patch, thresholds) > self.tissue_fraction
    }
}

fn pixel_hsv(px: &[u8]) -> [u8; 3] {
    match *px {
        [g] => hsv_bytes(g, g, g),
        [r, g, b] => hsv_bytes(r, g, b),
        _ => unreachable!("patches have 1 or 3 channels"),
    }
}

/// Per-channel Otsu thresholds of the image in quantized HSV.
pub fn hsv_thresholds(img: &RasterImage) -> Result<[OtsuResult; 3]> {
    let mut hists = [[0u64; 256]; 3];
    for px in img.data.chunks_exact(img.channels) {
        for (ch, v) in pixel_hsv(px).into_iter().enumerate() {
            hists[ch][v as usize] += 1;
        }
    }
    Ok([
        super::otsu_threshold(&hists[0])?,
        super::otsu_threshold(&hists[1])?,
        super::otsu_threshold(&hists[2])?,
    ])
}

pub fn filter_patches(
    patches: Vec<Patch>,
    thresholds: &[OtsuResult; 3],
    rule: &KeepRule,
) -> Vec<Patch> {
    patches
        .into_iter()
        .filter(|p| rule.keeps(p, thresholds))
        .collect()
}

/// Per-channel histogram equalization:
/// `round(255 * (cdf(v) - cdf_min) / (N - cdf_min))`; constant channels are unchanged.
pub fn histogram_equalize(patch: &Patch) -> Patch {
    let n = (patch.side * patch.side) as u64;
    let mut out = patch.clone();
    for ch in 0..patch.channels {
        let hist = super::otsu::histogram(patch.channel(ch));
        let mut cdf = [0u64; 256];
        let mut acc = 0;
        for (v, &c) in hist.iter().enumerate() {
            acc += c;
            cdf[v] = acc;
        }
        let cdf_min = hist
            .iter()
            .position(|&c| c > 0)
            .map(|v| cdf[v])
            .unwrap_or(0);
        if n == cdf_min {
            continue;
        }
        let denom = (n - cdf_min) as f64;
        for s in out.data.iter_mut().skip(ch).step_by(patch.channels) {
            let mapped = 255.0 * (cdf[*s as usize] - cdf_min) as f64 / denom;
            *s = mapped.round() as u8;
        }
    }
    out
}

/// One element of the dihedral group of the square: optional horizontal
/// flip followed by clockwise quarter turns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Dihedral {
    pub quarter_turns: u8,
    pub flip: bool,
}

impl Dihedral {
    pub const IDENTITY: Dihedral = Dihedral {
        quarter_turns: 0,
        flip: false,
    };

    pub fn all() -> impl Iterator<Item = Dihedral> {
        (0..8u8).map(|i| Dihedral {
            quarter_turns: i % 4,
            flip: i >= 4,
        })
    }

    pub fn sample<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let i = rng.random_range(0..8u8);
        Dihedral {
            quarter_turns: i % 4,
            flip: i >= 4,
        }
    }

    pub fn inverse(self) -> Self {
        if self.flip {
            self
        } else {
            Dihedral {
                quarter_turns: (4 - self.quarter_turns) % 4,
                flip: false,
            }
        }
    }

    /// Source pixel for output pixel (r, c) in an n×n grid.
    fn source(self, r: usize, c: usize, n: usize) -> (usize, usize) {
        // undo the rotation: a clockwise turn maps (r, c) <- (n-1-c, r)
        let (mut r, mut c) = (r, c);
        for _ in 0..self.quarter_turns % 4 {
            (r, c) = (n - 1 - c, r);
        }
        if self.flip {
            c = n - 1 - c;
        }
        (r, c)
    }

    /// Permutes an n×n grid of `channels`-sample pixels stored interleaved.
    pub fn apply_interleaved<S: Copy>(self, data: &[S], side: usize, channels: usize) -> Vec<S> {
        let mut out = Vec::with_capacity(data.len());
        for r in 0..side {
            for c in 0..side {
                let (sr, sc) = self.source(r, c, side);
                let at = (sr * side + sc) * channels;
                out.extend_from_slice(&data[at..at + channels]);
            }
        }
        out
    }

    /// Permutes an n×n grid stored channel-planar (each channel row-major).
    pub fn apply_planar<S: Copy>(self, data: &[S], side: usize, channels: usize) -> Vec<S> {
        let plane = side * side;
        let mut out = Vec::with_capacity(data.len());
        for ch in 0..channels {
            for r in 0..side {
                for c in 0..side {
                    let (sr, sc) = self.source(r, c, side);
                    out.push(data[ch * plane + sr * side + sc]);
                }
            }
        }
        out
    }

    pub fn apply(self, patch: &Patch) -> Patch {
        Patch {
            data: self.apply_interleaved(&patch.data, patch.side, patch.channels),
            ..patch.clone()
        }
    }
}

/// Applies a uniformly drawn dihedral transform.
pub fn augment<R: Rng + ?Sized>(patch: &Patch, rng: &mut R) -> Patch {
    Dihedral::sample(rng).apply(patch)
}

/// Sample order of a flattened patch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Flattening {
    /// Each channel row-major, channels concatenated.
    #[default]
    Planar,
    /// Pixels row-major, channels interleaved per pixel.
    Interleaved,
}

/// Flattens each patch to a [0, 1]-scaled feature vector.
pub fn patches_to_bag<T: Scalar>(
    bag_id: impl Into<String>,
    patches: &[Patch],
    label: u8,
    flattening: Flattening,
) -> Result<Bag<T>> {
    let bag_id = bag_id.into();
    if patches.is_empty() {
        return Err(MilError::EmptyBag(bag_id));
    }
    let scale = T::of(255.0);
    let instances = patches
        .iter()
        .map(|p| {
            let samples: Vec<u8> = match flattening {
                Flattening::Interleaved => p.data.clone(),
                Flattening::Planar => (0..p.channels).flat_map(|ch| p.channel(ch)).collect(),
            };
            Instance::new(
                samples
                    .into_iter()
                    .map(|s| T::of(f64::from(s)) / scale)
                    .collect(),
            )
        })
        .collect();
    Bag::new(bag_id, label, instances, Origin::Natural)
}
