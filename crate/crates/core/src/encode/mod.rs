//! Dictionary learning and sequence-level encodings: diagonal GMM, Fisher
//! Vectors, PCA, bag-of-words and the spatial pyramid over person boxes.

mod bow;
mod eigen;
mod fisher;
mod gmm;
mod kmeans;
mod pca;
mod pyramid;

pub use bow::{bow_encode, fit_codebook, Codebook};
pub use eigen::symmetric_eigen;
pub use fisher::{fisher_dim, fisher_statistics, fisher_vector, power_normalize};
pub use gmm::{fit_gmm, fit_gmm_with, EmParams, GmmFit, GmmModel};
pub use kmeans::{kmeans, nearest_centroid};
pub use pca::{apply_pca, fit_pca, PcaBlock, PcaModel, PcaScope, PcaTarget};
pub use pyramid::{
    pfm_encode, pfm_encode_with, pyramid_encode, subsequence_windows, CellLayout, Dictionary,
    LowLevelTransform, PfmDescriptor, PyramidConfig, SubtypeMask,
};
