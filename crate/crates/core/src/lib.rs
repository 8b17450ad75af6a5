//! ReLU activation patterns as bit vectors: Hamming dissimilarity matrices,
//! Fiedler partitioning of their similarity graphs, and adversarial-input
//! detection with a linear SVM on chi-square-selected bits.

pub mod bitvec;
pub mod data;
pub mod error;
pub mod featsel;
pub mod formats;
pub mod matrix;
pub mod net;
pub mod pipeline;
pub mod rdm;
pub mod spectral;
pub mod svm;

pub use bitvec::{hamming, hamming_matrix, select_columns, BitMatrix, BitRow};
pub use error::{Error, Result};
pub use matrix::Matrix;
pub use net::{AttackConfig, AttackKind, MlpNetwork};
pub use rdm::{DissimMatrix, LaplacianMatrix, Metric};
pub use spectral::{EigenResult, Partition};
pub use svm::{SvmModel, SvmParams};
