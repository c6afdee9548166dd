//! 8-bit indexed PNG views of label, pseudo-label, diff and entropy maps.
//!
//! Class maps and diffs share one palette:
//!
//! | index     | colour                                   |
//! |-----------|------------------------------------------|
//! | 0..=249   | class colours, cycling through 20 entries |
//! | 250       | diff: both modes agree (white)           |
//! | 251       | diff: softmax only (red)                 |
//! | 252       | diff: entropy only (blue)                |
//! | 253       | diff: modes disagree (yellow)            |
//! | 254       | panel separator (grey)                   |
//! | 255       | null, void, or neither mode (black)      |
//!
//! Entropy maps use a separate 256-level greyscale palette, 0 black to 1 white.

use std::io::BufWriter;
use std::path::Path;

use crate::error::{Error, Result};
use crate::extraction::{pseudo_label_diff, DiffCategory, PseudoLabelDiff};
use crate::mapcore::{same_shape, ClassMap, EntropyMap, LabelMap, PseudoLabelMap, NULL};

pub const AGREE: u8 = 250;
pub const SSL_ONLY: u8 = 251;
pub const ESL_ONLY: u8 = 252;
pub const CONFLICT: u8 = 253;
pub const SEPARATOR: u8 = 254;
pub const BLACK: u8 = NULL;
/// Class ids at or above this do not have a distinct colour.
pub const MAX_RENDER_CLASSES: usize = 250;
pub const SEPARATOR_WIDTH: usize = 2;

const CLASS_COLOURS: [[u8; 3]; 20] = [
    [128, 64, 128],
    [244, 35, 232],
    [70, 70, 70],
    [102, 102, 156],
    [190, 153, 153],
    [153, 153, 153],
    [250, 170, 30],
    [220, 220, 0],
    [107, 142, 35],
    [152, 251, 152],
    [70, 130, 180],
    [220, 20, 60],
    [255, 0, 0],
    [0, 0, 142],
    [0, 0, 70],
    [0, 60, 100],
    [0, 80, 100],
    [0, 0, 230],
    [119, 11, 32],
    [81, 0, 81],
];

/// The shared class and diff palette.
pub fn palette() -> Vec<[u8; 3]> {
    let mut p: Vec<[u8; 3]> = (0..MAX_RENDER_CLASSES)
        .map(|i| CLASS_COLOURS[i % CLASS_COLOURS.len()])
        .collect();
    p.extend([
        [255, 255, 255],
        [230, 25, 25],
        [30, 90, 255],
        [255, 225, 25],
        [128, 128, 128],
        [0, 0, 0],
    ]);
    p
}

pub fn grey_palette() -> Vec<[u8; 3]> {
    (0..=255u8).map(|v| [v, v, v]).collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndexedImage {
    pub width: usize,
    pub height: usize,
    pub indices: Vec<u8>,
    pub palette: Vec<[u8; 3]>,
}

fn class_image<M: ClassMap>(map: &M) -> Result<IndexedImage> {
    if map.num_classes() > MAX_RENDER_CLASSES {
        return Err(Error::InvalidArgument(format!(
            "cannot render {} classes, at most {MAX_RENDER_CLASSES}",
            map.num_classes()
        )));
    }
    Ok(IndexedImage {
        width: map.width(),
        height: map.height(),
        indices: map.raw().to_vec(),
        palette: palette(),
    })
}

pub fn render_labels(map: &LabelMap) -> Result<IndexedImage> {
    class_image(map)
}

pub fn render_pseudolabels(map: &PseudoLabelMap) -> Result<IndexedImage> {
    class_image(map)
}

pub fn diff_index(category: DiffCategory) -> u8 {
    match category {
        DiffCategory::BothNull => BLACK,
        DiffCategory::Agree => AGREE,
        DiffCategory::SslOnly => SSL_ONLY,
        DiffCategory::EslOnly => ESL_ONLY,
        DiffCategory::Conflict => CONFLICT,
    }
}

pub fn render_diff(diff: &PseudoLabelDiff) -> IndexedImage {
    IndexedImage {
        width: diff.width,
        height: diff.height,
        indices: diff.categories.iter().map(|&c| diff_index(c)).collect(),
        palette: palette(),
    }
}

pub fn render_entropy(map: &EntropyMap) -> IndexedImage {
    IndexedImage {
        width: map.width(),
        height: map.height(),
        indices: map
            .values()
            .iter()
            .map(|&e| (e.clamp(0.0, 1.0) * 255.0).round() as u8)
            .collect(),
        palette: grey_palette(),
    }
}

/// Places images side by side, separated by `SEPARATOR_WIDTH` separator columns.
pub fn hstack(images: &[IndexedImage]) -> Result<IndexedImage> {
    let Some(first) = images.first() else {
        return Err(Error::InvalidArgument("nothing to stack".into()));
    };
    for img in images {
        if img.height != first.height || img.palette != first.palette {
            return Err(Error::DimensionMismatch(
                "stacked images need equal heights and palettes".into(),
            ));
        }
    }
    let width = images.iter().map(|i| i.width).sum::<usize>()
        + SEPARATOR_WIDTH * (images.len() - 1);
    let mut indices = Vec::with_capacity(width * first.height);
    for y in 0..first.height {
        for (k, img) in images.iter().enumerate() {
            if k > 0 {
                indices.extend(std::iter::repeat_n(SEPARATOR, SEPARATOR_WIDTH));
            }
            indices.extend_from_slice(&img.indices[y * img.width..(y + 1) * img.width]);
        }
    }
    Ok(IndexedImage {
        width,
        height: first.height,
        indices,
        palette: first.palette.clone(),
    })
}

/// Four columns: ground truth, softmax pseudo-labels, entropy pseudo-labels,
/// and their difference.
pub fn comparison_panel(
    gt: &LabelMap,
    ssl: &PseudoLabelMap,
    esl: &PseudoLabelMap,
) -> Result<IndexedImage> {
    same_shape("panel", (gt.height(), gt.width()), (ssl.height(), ssl.width()))?;
    let diff = pseudo_label_diff(ssl, esl)?;
    hstack(&[
        render_labels(gt)?,
        render_pseudolabels(ssl)?,
        render_pseudolabels(esl)?,
        render_diff(&diff),
    ])
}

pub fn encode_png(img: &IndexedImage) -> Result<Vec<u8>> {
    if img.indices.len() != img.width * img.height {
        return Err(Error::DimensionMismatch(format!(
            "{} indices for a {}x{} image",
            img.indices.len(),
            img.width,
            img.height
        )));
    }
    let to_u32 = |v: usize| {
        u32::try_from(v).map_err(|_| Error::DimensionOverflow(format!("image side {v}")))
    };
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, to_u32(img.width)?, to_u32(img.height)?);
        enc.set_color(png::ColorType::Indexed);
        enc.set_depth(png::BitDepth::Eight);
        enc.set_palette(img.palette.iter().flatten().copied().collect::<Vec<u8>>());
        let mut writer = enc.write_header()?;
        writer.write_image_data(&img.indices)?;
        writer.finish()?;
    }
    Ok(out)
}

pub fn write_png(img: &IndexedImage, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_png(img)?;
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    std::io::Write::write_all(&mut w, &bytes).map_err(|e| Error::io(path, e))
}
