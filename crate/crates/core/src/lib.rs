//! attrank: a self-contained pairwise learning-to-rank engine for visual
//! attributes. A small trainable ConvNet maps each image to a feature vector,
//! a linear ranking layer turns features into a scalar rank estimate, and
//! pairs are supervised through a logistic posterior with a clipped binary
//! cross-entropy loss. The crate also ships evaluation (ordered-pair
//! accuracy, global rankings, Kendall tau), input-gradient saliency maps,
//! and a synthetic benchmark with known ground truth.

pub mod autodiff;
pub mod checkpoint;
pub mod data;
pub mod error;
pub mod eval;
pub mod nn;
pub mod optim;
pub mod ranking;
pub mod saliency;
pub mod train;

pub use error::{Error, Result};
