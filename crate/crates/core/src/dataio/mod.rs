//! Data handling: the HSRC cube container, RGB projection through spectral
//! response functions, synthetic scene generation, and dataset splitting.

mod cube;
mod response;
mod split;
mod synth;

pub use cube::{load_cube, load_rgb, save_cube, save_rgb, write_pgm, HsiCube};
pub use response::{project_rgb, SpectralResponse};
pub use split::{split_dataset, DatasetSplit};
pub use synth::{synth_metameric_scene, synth_scene};
