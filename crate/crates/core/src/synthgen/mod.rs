//! Ray-cast synthetic LiDAR scenes with configurable sensor and object
//! statistics, used to build source and target domains.

mod profile;
pub mod raycast;
mod scene;
mod stats;

pub use profile::DomainProfile;
pub use raycast::{cast_ray, cast_scan, HitTarget, RayHit};
pub use scene::{generate_dataset, generate_indexed, generate_scene, Domain, Scene};
pub use stats::{dataset_stats, object_records, stats_from_records, ClassStats, DatasetStats, ObjectRecord};
