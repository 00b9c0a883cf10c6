//! Form understanding from word boxes alone.
//!
//! Words of a scanned form are nodes; a small graph attention network scores
//! a label for every candidate word pair, and an exact 0-1 program picks the
//! most probable labeling that is a well-formed word-relation graph. That
//! graph converts one-to-one into entities (questions, answers, headers) and
//! the relations between them.
//!
//! ```no_run
//! use formgraph::prelude::*;
//!
//! let split = formgraph::ingest::funsd_split("data/funsd".as_ref())?;
//! let cfg = ModelConfig::default();
//! let (params, _log) = formgraph::gnn::train(&split.train, &split.validation, &cfg)?;
//! let scores = formgraph::eval::evaluate(&split.test, &params, &cfg, &DecodeOptions::default())?;
//! println!("relation F1 {:.3}", scores.relations.f1);
//! # Ok::<(), formgraph::Error>(())
//! ```

pub mod convert;
pub mod error;
pub mod eval;
pub mod features;
pub mod gnn;
pub mod graph;
pub mod ilp;
pub mod ingest;
pub mod synthetic;

pub use error::{Error, Result};

use std::fs;
use std::path::Path;

/// Writes through a temporary file and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".tmp");
    let tmp = path.with_file_name(name);
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub mod prelude {
    pub use crate::convert::{erg_to_wrg, verify_constraints, wrg_to_erg, ViolationCounts};
    pub use crate::eval::{DecodeOptions, Decoder, PrfReport};
    pub use crate::gnn::{ModelConfig, ModelParams, ScoreTable};
    pub use crate::graph::{
        Document, Edge, EntityRelationGraph, EntityRelationLabel, EntityType, WordRelationGraph,
        WordRelationLabel,
    };
    pub use crate::ilp::{ConstraintConfig, SolverOptions};
    pub use crate::ingest::{build_neighborhood, AnnotatedDocument, DatasetSplit, Neighborhood};
}
