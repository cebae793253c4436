use super::{GridSpec, HeatImage};
use crate::error::Result;
use crate::signal::Nucleus;

/// Half-width of the square patch each nucleus paints.
pub const PATCH_HALF: i64 = 2;

/// Paints one unit-height Gaussian (sigma = 1 px) per nucleus on the patch
/// around its nearest pixel. Overlaps add and the sum is clamped to 1.
pub fn render_target(nuclei: &[Nucleus], grid: &GridSpec) -> Result<HeatImage> {
    let (h, w) = (grid.height(), grid.width());
    let mut acc = vec![0.0f64; h * w];
    for n in nuclei {
        let (r0, c0) = grid.nearest_pixel(n.a_par, n.a_perp)?;
        let center = grid.coupling_to_pixel(n.a_par, n.a_perp);
        for dr in -PATCH_HALF..=PATCH_HALF {
            for dc in -PATCH_HALF..=PATCH_HALF {
                let (r, c) = (r0 as i64 + dr, c0 as i64 + dc);
                if r < 0 || c < 0 || r >= h as i64 || c >= w as i64 {
                    continue;
                }
                let dy = r as f64 - center.row;
                let dx = c as f64 - center.col;
                acc[r as usize * w + c as usize] += (-(dx * dx + dy * dy) / 2.0).exp();
            }
        }
    }
    HeatImage::from_vec(h, w, acc.into_iter().map(|v| v.min(1.0) as f32).collect())
}
