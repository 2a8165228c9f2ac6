//! Vulnerability detection for C functions with code property graphs and a
//! graph attention network.
//!
//! The pipeline runs source text through [`frontend`] (lexer and parser),
//! [`flow`] (control flow and dependence analyses) and [`cpg`] (the merged
//! graph and its class-erased form), turns graphs into tensors in
//! [`featurize`], classifies them with the layers in [`gnn`], trains and
//! scores models in [`train`], and ranks edges by attention in [`explain`].

pub mod checkpoint;
pub mod config;
pub mod cpg;
pub mod dataset;
pub mod error;
pub mod explain;
pub mod featurize;
pub mod flow;
pub mod frontend;
pub mod gnn;
pub mod pipeline;
pub mod seed;
pub mod synth;
pub mod train;

pub use error::{Error, Result};
