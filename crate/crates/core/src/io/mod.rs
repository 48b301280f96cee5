//! File formats: event streams, pose files, calibration, DSI volumes, PFM
//! depth maps, pixel lists, pseudo-color renders, and dataset manifests.

mod calib;
mod dsi_file;
mod events;
mod manifest;
mod pfm;
mod pixels;
mod poses;
mod render;

pub use calib::{read_calibration, write_calibration, Calibration, PoseRecord};
pub use dsi_file::{read_dsi, write_dsi, DSI_FORMAT_VERSION};
pub use events::{
    read_events, read_events_bin, read_events_csv, write_events_bin, write_events_csv,
};
pub use manifest::{CameraFiles, GtEntry, SequenceManifest};
pub use pfm::{read_pfm, write_pfm};
pub use pixels::{read_pixel_list, write_pixel_list};
pub use poses::{read_trajectory, write_trajectory};
pub use render::render_depth;
