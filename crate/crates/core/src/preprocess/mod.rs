//! Image-to-bag preprocessing: tiling, HSV Otsu filtering, histogram
//! equalization and dihedral augmentation.

mod hsv;
mod image;
mod otsu;
mod patch;

pub use hsv::{hsv_bytes, rgb_to_hsv};
pub use image::RasterImage;
pub use otsu::{histogram, otsu_threshold, OtsuResult};
pub use patch::{
    augment, filter_patches, histogram_equalize, hsv_thresholds, patches_to_bag, tile_image,
    Dihedral, Flattening, HsvChannel, KeepRule, Patch, Polarity,
};

use serde::{Deserialize, Serialize};

use crate::bagdata::Bag;
use crate::error::Result;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PreprocessConfig {
    pub patch_side: usize,
    pub keep_rule: KeepRule,
    pub flattening: Flattening,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig {
            patch_side: 27,
            keep_rule: KeepRule::default(),
            flattening: Flattening::Planar,
        }
    }
}

/// Summary of one image's trip through [`image_to_bag`].
#[derive(Debug, Clone, Serialize)]
pub struct PreprocessSummary {
    pub tiles: usize,
    pub kept: usize,
    pub thresholds: [OtsuResult; 3],
}

/// Tile, drop background tiles by the per-image HSV Otsu test, equalize,
/// and flatten the survivors into one bag.
pub fn image_to_bag<T: Scalar>(
    img: &RasterImage,
    bag_id: &str,
    label: u8,
    config: &PreprocessConfig,
) -> Result<(Bag<T>, PreprocessSummary)> {
    let thresholds = hsv_thresholds(img)?;
    let tiles = tile_image(img, config.patch_side)?;
    let n_tiles = tiles.len();
    let kept: Vec<Patch> = filter_patches(tiles, &thresholds, &config.keep_rule)
        .iter()
        .map(histogram_equalize)
        .collect();
    let summary = PreprocessSummary {
        tiles: n_tiles,
        kept: kept.len(),
        thresholds,
    };
    let bag = patches_to_bag(bag_id, &kept, label, config.flattening)?;
    Ok((bag, summary))
}
