//! Engine for a user-guided logistic regression workbench.
//!
//! The pipeline runs in four stages:
//!
//! 1. [`data`] loads a delimited table and splits a target attribute into
//!    per-label presence vectors; [`correlation`] correlates every numeric
//!    attribute with each presence vector, and [`radviz`] lays the result out
//!    around label anchors to guide attribute selection.
//! 2. [`logit`] fits binary models and multinomial models made of k−1
//!    one-vs-reference submodels combined with softmax. [`chart`] ties a
//!    chart definition (target, labels, attributes) to a trained model.
//! 3. [`evaluation`] computes ROC curves, AUC, Youden cutoffs, confusion
//!    matrices and the holdout split.
//! 4. [`store`] packs trained charts into a versioned panorama file and
//!    [`query`] answers profile, history, similar-case and batch queries
//!    against it.

pub mod chart;
pub mod correlation;
pub mod data;
pub mod error;
pub mod evaluation;
pub mod logit;
pub mod query;
pub mod radviz;
pub mod store;

pub use error::{Error, Result};
