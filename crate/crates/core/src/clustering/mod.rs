//! Mini-batch k-means quantization and discrete mutual information between
//! cluster ids and segment labels.

mod kmeans;
mod mi;

pub use kmeans::{assign, column_means, fit_kmeans, load_kmeans, save_kmeans, KMeansConfig, KMeansModel};
pub use mi::{mi_probe, mutual_information, ContingencyTable, MiProbe, MutualInformation};
