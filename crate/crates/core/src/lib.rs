//! Two-stage silhouette retrieval.
//!
//! Stage I filters gallery clusters that are irrelevant to a query by
//! combining a random-forest vote on global shape features with the cluster
//! votes of the query's nearest neighbors in a local (inner-distance shape
//! context) feature space. Stage II ranks the surviving shapes by local
//! matching distance, optionally refined by a locally constrained diffusion
//! process.

pub mod cluster;
pub mod diffusion;
pub mod error;
pub mod eval;
pub mod forest;
pub mod geom;
pub mod globalfeat;
pub mod localfeat;
pub mod pipeline;
pub mod preprocess;
pub mod raster;
pub mod relevance;
pub mod shapeio;
pub mod synth;

pub use error::{Result, TsrError};
pub use shapeio::BinaryShape;
