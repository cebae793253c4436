use crate::error::{Error, Result};

/// Pixel geometry of the heat-map images.
///
/// Rows carry `a_par`, columns carry `a_perp`. The effective `rows x cols`
/// pixel centers span the coupling ranges endpoint to endpoint (so the
/// pitches are `range / (n - 1)`), and a border of `border` pixels on every
/// side extends the same affine map.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub rows: usize,
    pub cols: usize,
    pub border: usize,
    /// `a_par` at the first and last effective row, Hz.
    pub a_par_range: (f64, f64),
    /// `a_perp` at the first and last effective column, Hz.
    pub a_perp_range: (f64, f64),
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            rows: 200,
            cols: 100,
            border: 2,
            a_par_range: (-100e3, 100e3),
            a_perp_range: (2e3, 102e3),
        }
    }
}

/// Real-valued position in full-image pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PixelPosition {
    pub row: f64,
    pub col: f64,
}

impl PixelPosition {
    /// Nearest pixel center (halves round up).
    pub fn nearest(&self) -> (i64, i64) {
        ((self.row + 0.5).floor() as i64, (self.col + 0.5).floor() as i64)
    }
}

impl GridSpec {
    pub fn height(&self) -> usize {
        self.rows + 2 * self.border
    }

    pub fn width(&self) -> usize {
        self.cols + 2 * self.border
    }

    /// `a_par` per row, Hz.
    pub fn pitch_par(&self) -> f64 {
        (self.a_par_range.1 - self.a_par_range.0) / (self.rows - 1) as f64
    }

    /// `a_perp` per column, Hz.
    pub fn pitch_perp(&self) -> f64 {
        (self.a_perp_range.1 - self.a_perp_range.0) / (self.cols - 1) as f64
    }

    /// Couplings at a (possibly fractional) full-image position.
    pub fn position_to_coupling(&self, pos: PixelPosition) -> (f64, f64) {
        let b = self.border as f64;
        (
            self.a_par_range.0 + (pos.row - b) * self.pitch_par(),
            self.a_perp_range.0 + (pos.col - b) * self.pitch_perp(),
        )
    }

    /// Couplings at the center of full-image pixel `(row, col)`.
    pub fn pixel_to_coupling(&self, row: usize, col: usize) -> Result<(f64, f64)> {
        if row >= self.height() || col >= self.width() {
            return Err(Error::PixelOutOfBounds {
                row: row as i64,
                col: col as i64,
                height: self.height(),
                width: self.width(),
            });
        }
        Ok(self.position_to_coupling(PixelPosition {
            row: row as f64,
            col: col as f64,
        }))
    }

    pub fn coupling_to_pixel(&self, a_par: f64, a_perp: f64) -> PixelPosition {
        let b = self.border as f64;
        PixelPosition {
            row: b + (a_par - self.a_par_range.0) / self.pitch_par(),
            col: b + (a_perp - self.a_perp_range.0) / self.pitch_perp(),
        }
    }

    /// Nearest full-image pixel, or an error when it falls off the image.
    pub fn nearest_pixel(&self, a_par: f64, a_perp: f64) -> Result<(usize, usize)> {
        let (r, c) = self.coupling_to_pixel(a_par, a_perp).nearest();
        if r < 0 || c < 0 || r >= self.height() as i64 || c >= self.width() as i64 {
            return Err(Error::OutsideGrid {
                a_par_hz: a_par,
                a_perp_hz: a_perp,
            });
        }
        Ok((r as usize, c as usize))
    }

    /// Clamps couplings to the declared ranges.
    pub fn clamp_coupling(&self, a_par: f64, a_perp: f64) -> (f64, f64) {
        (
            a_par.clamp(self.a_par_range.0, self.a_par_range.1),
            a_perp.clamp(self.a_perp_range.0, self.a_perp_range.1),
        )
    }
}
