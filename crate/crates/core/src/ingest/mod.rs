//! Loading annotated forms, reading order, proximate relations and
//! candidate neighborhoods.

mod load;
mod neighborhood;
mod proximate;
mod reading;

pub use load::{
    annotate, annotated_to_json, annotation_dir, funsd_split, load_corpus_dir, load_funsd, load_funsd_dir, load_funsd_value,
    load_xfund, load_xfund_value, read_annotated, split_training, write_annotated, PageSize,
    FUNSD_VALIDATION,
};
pub use neighborhood::{build_neighborhood, Coverage, Neighborhood, DEFAULT_K};
pub use proximate::augment_proximate;
pub use reading::{line_index, reading_order_permutation, sort_reading_order};

use serde::{Deserialize, Serialize};

use crate::graph::{Document, EntityRelationGraph, WordRelationGraph};

/// What ingest removed or guessed for one document.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestFlags {
    pub raw_entities: usize,
    pub raw_words: usize,
    pub dropped_other_entities: usize,
    pub dropped_other_words: usize,
    /// Entities with no question-answer or header-question link.
    pub dropped_unlinked_entities: usize,
    pub dropped_unlinked_words: usize,
    /// Linking pairs whose label combination is not question-answer or
    /// header-question, or which touch a dropped entity.
    pub ignored_links: usize,
    /// No size in the file or image header; taken from the word extents.
    pub page_size_inferred: bool,
}

/// A document with its regenerated gold graphs.
#[derive(Clone, Debug, PartialEq)]
pub struct AnnotatedDocument {
    pub document: Document,
    pub gold_erg: EntityRelationGraph,
    pub gold_wrg: WordRelationGraph,
    pub flags: IngestFlags,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct DatasetSplit {
    pub train: Vec<AnnotatedDocument>,
    pub validation: Vec<AnnotatedDocument>,
    pub test: Vec<AnnotatedDocument>,
}
