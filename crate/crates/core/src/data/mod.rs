//! Synthetic shapes, mesh loading and sampling, and point-set persistence.

mod dataset;
mod mesh;
mod off;
mod pset;
mod shapes;

pub use dataset::{
    generate, into_datasets, normalize, write_dataset, Dataset, GenConfig, GeneratedSample,
    Manifest, ManifestEntry, Split,
};
pub use mesh::{sample_mesh, sample_surface, TriangleMesh, Vec3};
pub use off::{load_off, parse_off};
pub use pset::{decode_pset, encode_pset, load_pset, save_pset};
pub use shapes::{make_shape, ShapeFamily, ShapeSpec};
