//! Customer segmentation from receipt-level retail transactions.
//!
//! Three segmentations are provided: recency / frequency / monetary value
//! (RFM), purchased product structure (PPS), and a two-stage shopping-mission
//! (SM) segmentation that first clusters baskets and then clusters customers
//! by the mix of basket clusters they buy. All clustering goes through one
//! seeded k-means engine, and segmentations are compared with purity and
//! crosstabs.

pub mod config;
pub mod error;
pub mod features;
pub mod kmeans;
pub mod matrix;
pub mod pipeline;
pub mod syngen;
pub mod txmodel;
pub mod validity;

pub use config::Config;
pub use error::{Error, Result};
pub use kmeans::{assign, kmeans_fit, Assignment, ClusterModel, FitResult, KMeansConfig};
pub use matrix::FeatureMatrix;
pub use pipeline::{run_pps, run_rfm, run_sm, score, RfmMode, SegmentationReport, SmPipelineModel};
pub use txmodel::{
    build_histories, ingest_receipts, AnalysisWindow, Basket, Category, CustomerHistory, Dataset, Money,
};
pub use validity::{between_variance_ratio, crosstab, davies_bouldin, purity, select_k, SelectionPolicy};
