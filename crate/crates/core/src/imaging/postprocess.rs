use super::morphology::{label_components, open};
use super::{GridSpec, HeatImage, PixelPosition};
use crate::error::{Error, Result};
use crate::eval::BoundingBox;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PostProcessConfig {
    /// Structuring element is `(2r + 1)` pixels square.
    pub element_radius: usize,
    /// Erosion rounds, matched by the same number of dilations.
    pub passes: usize,
    /// Pixels of the opened image strictly above this form regions.
    pub threshold: f32,
    /// Regions with fewer pixels are dropped.
    pub min_area: usize,
    /// Minimum Chebyshev distance between retained maxima of one region.
    pub min_separation: usize,
    /// Half-width of the per-maximum box used when a region splits.
    pub box_half: usize,
}

impl Default for PostProcessConfig {
    fn default() -> Self {
        Self {
            element_radius: 1,
            passes: 1,
            threshold: 0.05,
            min_area: 4,
            min_separation: 3,
            box_half: 2,
        }
    }
}

impl PostProcessConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.threshold.is_finite() && self.threshold >= 0.0 && self.threshold < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "threshold must lie in [0, 1), got {}",
                self.threshold
            )));
        }
        if self.min_separation == 0 {
            return Err(Error::InvalidParameter("min_separation must be positive".into()));
        }
        Ok(())
    }
}

/// One recovered nucleus.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detection {
    pub a_par: f64,
    pub a_perp: f64,
    /// Weighted centroid in full-image pixel coordinates.
    pub position: PixelPosition,
    pub bbox: BoundingBox,
    /// Value of the unsmoothed image at the strongest pixel.
    pub peak: f32,
}

fn is_local_max(img: &HeatImage, row: usize, col: usize) -> bool {
    let v = img.get(row, col);
    let mut strictly = false;
    for dr in -1i64..=1 {
        for dc in -1i64..=1 {
            if dr == 0 && dc == 0 {
                continue;
            }
            if let Some(n) = img.get_checked(row as i64 + dr, col as i64 + dc) {
                if n > v {
                    return false;
                }
                strictly |= v > n;
            }
        }
    }
    strictly
}

fn centroid(
    smooth: &HeatImage,
    pixels: impl Iterator<Item = (usize, usize)>,
) -> Option<PixelPosition> {
    let (mut sw, mut sr, mut sc) = (0.0f64, 0.0f64, 0.0f64);
    for (r, c) in pixels {
        let wgt = smooth.get(r, c) as f64;
        sw += wgt;
        sr += wgt * r as f64;
        sc += wgt * c as f64;
    }
    (sw > 0.0).then(|| PixelPosition {
        row: sr / sw,
        col: sc / sw,
    })
}

/// Turns a predicted heat map into coupling estimates.
///
/// The image is opened, thresholded and split into 8-connected regions.
/// Inside each region the local maxima of the unsmoothed image are found
/// and greedily thinned to `min_separation`. A region with a single maximum
/// yields one detection at its weighted centroid; otherwise each maximum
/// yields one detection from the pixels of its box.
pub fn post_process(
    img: &HeatImage,
    grid: &GridSpec,
    cfg: &PostProcessConfig,
) -> Result<Vec<Detection>> {
    cfg.validate()?;
    if img.height() != grid.height() || img.width() != grid.width() {
        return Err(Error::LengthMismatch {
            expected: grid.height() * grid.width(),
            actual: img.height() * img.width(),
        });
    }
    let (h, w) = (img.height(), img.width());
    let smooth = open(img, cfg.element_radius, cfg.passes);
    let mask: Vec<bool> = smooth.data().iter().map(|v| *v > cfg.threshold).collect();
    let mut out = Vec::new();
    let mut in_region = vec![false; h * w];

    for region in label_components(&mask, h, w) {
        if region.len() < cfg.min_area {
            continue;
        }
        for &(r, c) in &region {
            in_region[r * w + c] = true;
        }

        let mut maxima: Vec<(usize, usize)> = region
            .iter()
            .copied()
            .filter(|&(r, c)| is_local_max(img, r, c))
            .collect();
        maxima.sort_by(|a, b| {
            img.get(b.0, b.1)
                .total_cmp(&img.get(a.0, a.1))
                .then(a.0.cmp(&b.0))
                .then(a.1.cmp(&b.1))
        });
        let sep = cfg.min_separation;
        let mut kept: Vec<(usize, usize)> = Vec::new();
        for m in maxima {
            if kept
                .iter()
                .all(|k| k.0.abs_diff(m.0).max(k.1.abs_diff(m.1)) >= sep)
            {
                kept.push(m);
            }
        }

        if kept.len() <= 1 {
            let (mut r0, mut c0, mut r1, mut c1) = (usize::MAX, usize::MAX, 0, 0);
            let mut peak = f32::NEG_INFINITY;
            for &(r, c) in &region {
                r0 = r0.min(r);
                c0 = c0.min(c);
                r1 = r1.max(r);
                c1 = c1.max(c);
                peak = peak.max(img.get(r, c));
            }
            if let Some(pos) = centroid(&smooth, region.iter().copied()) {
                out.push(detection(
                    grid,
                    pos,
                    BoundingBox::new(r0 as i64, c0 as i64, r1 as i64, c1 as i64),
                    peak,
                ));
            }
        } else {
            let half = cfg.box_half as i64;
            for (mr, mc) in kept {
                let bbox = BoundingBox::around(mr as i64, mc as i64, half);
                let pixels = (bbox.r0..=bbox.r1)
                    .flat_map(|r| (bbox.c0..=bbox.c1).map(move |c| (r, c)))
                    .filter(|&(r, c)| r >= 0 && c >= 0 && r < h as i64 && c < w as i64)
                    .map(|(r, c)| (r as usize, c as usize))
                    .filter(|&(r, c)| in_region[r * w + c]);
                if let Some(pos) = centroid(&smooth, pixels) {
                    out.push(detection(grid, pos, bbox, img.get(mr, mc)));
                }
            }
        }

        for &(r, c) in &region {
            in_region[r * w + c] = false;
        }
    }
    Ok(out)
}

fn detection(grid: &GridSpec, pos: PixelPosition, bbox: BoundingBox, peak: f32) -> Detection {
    let (a, b) = grid.position_to_coupling(pos);
    let (a_par, a_perp) = grid.clamp_coupling(a, b);
    Detection {
        a_par,
        a_perp,
        position: pos,
        bbox,
        peak,
    }
}
