use crate::error::Result;
use crate::imaging::{post_process, render_target, GridSpec, PostProcessConfig};
use crate::signal::Nucleus;

/// Reference nucleus of the close-pair scan, kHz.
pub const SELECTIVITY_BASE_KHZ: (f64, f64) = (50.0, 59.77);

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelectivityPoint {
    /// `(d a_par, d a_perp)` of the second nucleus, Hz.
    pub offset: (f64, f64),
    pub detections: usize,
}

/// Counts detections for a pair made of `base` and `base + offset`, using
/// rendered targets in place of predicted maps.
pub fn selectivity_scan(
    base: Nucleus,
    offsets: &[(f64, f64)],
    grid: &GridSpec,
    cfg: &PostProcessConfig,
) -> Result<Vec<SelectivityPoint>> {
    offsets
        .iter()
        .map(|&(dp, dq)| {
            let second = Nucleus::new(base.a_par + dp, base.a_perp + dq)?;
            let img = render_target(&[base, second], grid)?;
            Ok(SelectivityPoint {
                offset: (dp, dq),
                detections: post_process(&img, grid, cfg)?.len(),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_pair_is_one_nucleus() {
        let base = Nucleus::from_khz(SELECTIVITY_BASE_KHZ.0, SELECTIVITY_BASE_KHZ.1).unwrap();
        let pts = selectivity_scan(
            base,
            &[(0.0, 0.0), (20e3, 20e3)],
            &GridSpec::default(),
            &PostProcessConfig::default(),
        )
        .unwrap();
        assert_eq!(pts[0].detections, 1);
        assert_eq!(pts[1].detections, 2);
    }
}
