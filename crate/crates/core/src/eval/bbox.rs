/// Axis-aligned pixel box with inclusive corners.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BoundingBox {
    pub r0: i64,
    pub c0: i64,
    pub r1: i64,
    pub c1: i64,
}

impl BoundingBox {
    pub fn new(r0: i64, c0: i64, r1: i64, c1: i64) -> Self {
        Self { r0, c0, r1, c1 }
    }

    /// Square box of side `2 * half + 1` centered on a pixel.
    pub fn around(row: i64, col: i64, half: i64) -> Self {
        Self::new(row - half, col - half, row + half, col + half)
    }

    /// Restricts the box to an `h x w` image.
    pub fn clip(&self, h: usize, w: usize) -> Self {
        Self::new(
            self.r0.max(0),
            self.c0.max(0),
            self.r1.min(h as i64 - 1),
            self.c1.min(w as i64 - 1),
        )
    }

    pub fn area(&self) -> i64 {
        if self.r1 < self.r0 || self.c1 < self.c0 {
            0
        } else {
            (self.r1 - self.r0 + 1) * (self.c1 - self.c0 + 1)
        }
    }

    pub fn intersection(&self, other: &Self) -> Self {
        Self::new(
            self.r0.max(other.r0),
            self.c0.max(other.c0),
            self.r1.min(other.r1),
            self.c1.min(other.c1),
        )
    }

    pub fn iou(&self, other: &Self) -> f64 {
        let inter = self.intersection(other).area();
        let union = self.area() + other.area() - inter;
        if union == 0 {
            0.0
        } else {
            inter as f64 / union as f64
        }
    }
}
