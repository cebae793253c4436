//! Heat-map targets over the coupling plane and their inverse, the
//! post-processing that turns a predicted map back into nuclei.

mod detections;
mod grid;
mod image;
pub mod morphology;
mod postprocess;
mod render;

pub use detections::{read_detections, write_detections, DetectionRow};
pub use grid::{GridSpec, PixelPosition};
pub use image::{
    image_file_name, parse_image_file_name, HeatImage, SIMG_MAGIC, SIMG_VERSION,
};
pub use postprocess::{post_process, Detection, PostProcessConfig};
pub use render::{render_target, PATCH_HALF};
