use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Detection, GridSpec};
use crate::error::{Error, Result};
use crate::eval::BoundingBox;

/// One line of a detection table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionRow {
    pub sample_id: u64,
    pub a_par_hz: f64,
    pub a_perp_hz: f64,
    pub peak: f32,
    pub box_r0: i64,
    pub box_c0: i64,
    pub box_r1: i64,
    pub box_c1: i64,
}

impl DetectionRow {
    pub fn new(sample_id: u64, d: &Detection) -> Self {
        Self {
            sample_id,
            a_par_hz: d.a_par,
            a_perp_hz: d.a_perp,
            peak: d.peak,
            box_r0: d.bbox.r0,
            box_c0: d.bbox.c0,
            box_r1: d.bbox.r1,
            box_c1: d.bbox.c1,
        }
    }

    pub fn to_detection(&self, grid: &GridSpec) -> Detection {
        Detection {
            a_par: self.a_par_hz,
            a_perp: self.a_perp_hz,
            position: grid.coupling_to_pixel(self.a_par_hz, self.a_perp_hz),
            bbox: BoundingBox::new(self.box_r0, self.box_c0, self.box_r1, self.box_c1),
            peak: self.peak,
        }
    }
}

pub fn write_detections<'a>(
    path: &Path,
    rows: impl IntoIterator<Item = &'a DetectionRow>,
) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::format(path, e.to_string()))?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads a detection table grouped by sample. Samples without rows are absent.
pub fn read_detections(path: &Path, grid: &GridSpec) -> Result<BTreeMap<u64, Vec<Detection>>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::format(path, e.to_string()))?;
    let mut out: BTreeMap<u64, Vec<Detection>> = BTreeMap::new();
    for row in r.deserialize() {
        let row: DetectionRow = row?;
        out.entry(row.sample_id)
            .or_default()
            .push(row.to_detection(grid));
    }
    Ok(out)
}
