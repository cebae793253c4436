//! Grey-scale morphology with a square structuring element and 8-connected
//! component labeling. Neighborhoods are truncated at the image edge.

use super::HeatImage;

fn square_filter(img: &HeatImage, radius: usize, pick: fn(f32, f32) -> f32) -> HeatImage {
    let (h, w) = (img.height(), img.width());
    let r = radius as i64;
    let mut out = HeatImage::zeros(h, w);
    for row in 0..h {
        for col in 0..w {
            let mut acc = img.get(row, col);
            for dr in -r..=r {
                for dc in -r..=r {
                    if let Some(v) = img.get_checked(row as i64 + dr, col as i64 + dc) {
                        acc = pick(acc, v);
                    }
                }
            }
            out.set(row, col, acc);
        }
    }
    out
}

pub fn erode(img: &HeatImage, radius: usize) -> HeatImage {
    square_filter(img, radius, f32::min)
}

pub fn dilate(img: &HeatImage, radius: usize) -> HeatImage {
    square_filter(img, radius, f32::max)
}

/// `passes` rounds of erosion followed by as many dilations.
pub fn open(img: &HeatImage, radius: usize, passes: usize) -> HeatImage {
    let mut cur = img.clone();
    for _ in 0..passes {
        cur = erode(&cur, radius);
    }
    for _ in 0..passes {
        cur = dilate(&cur, radius);
    }
    cur
}

/// 8-connected components of `mask` (row-major, `h x w`). Components are
/// listed in raster order of their first pixel; pixels inside a component
/// are in visit order.
pub fn label_components(mask: &[bool], h: usize, w: usize) -> Vec<Vec<(usize, usize)>> {
    let mut seen = vec![false; h * w];
    let mut regions = Vec::new();
    for start in 0..h * w {
        if !mask[start] || seen[start] {
            continue;
        }
        seen[start] = true;
        let mut stack = vec![start];
        let mut pixels = Vec::new();
        while let Some(idx) = stack.pop() {
            let (row, col) = (idx / w, idx % w);
            pixels.push((row, col));
            for dr in -1i64..=1 {
                for dc in -1i64..=1 {
                    let (r, c) = (row as i64 + dr, col as i64 + dc);
                    if r < 0 || c < 0 || r >= h as i64 || c >= w as i64 {
                        continue;
                    }
                    let j = r as usize * w + c as usize;
                    if mask[j] && !seen[j] {
                        seen[j] = true;
                        stack.push(j);
                    }
                }
            }
        }
        regions.push(pixels);
    }
    regions
}
