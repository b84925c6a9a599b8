pub mod dataset;
pub mod scene;
pub mod tensorfile;
pub mod wald;

pub use dataset::{generate_dataset, load_split, make_sample, DatasetSpec, ManifestEntry, Split};
pub use scene::{generate_scene, Scene, SceneContent, SceneSpec};
pub use tensorfile::{read_tensor_file, write_tensor_file, Record, RecordData, TensorFile};
pub use wald::{band_mean, blur_decimate, jitter_scale, wald_degrade, wald_sigma};
