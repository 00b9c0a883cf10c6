//! FUNSD / XFUND annotation files and the canonical annotated-document
//! format.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::convert::erg_to_wrg;
use crate::error::{Error, Result};
use crate::graph::{
    BoundingBox, Document, Edge, Entity, EntityRelationGraph, EntityRelationLabel, EntityType,
    Word, WordRelationGraph, WordRelationLabel,
};
use crate::ingest::proximate::augment_proximate;
use crate::ingest::reading::reading_order_permutation;
use crate::ingest::{AnnotatedDocument, DatasetSplit, IngestFlags};

/// Validation documents taken from the end of the FUNSD training folder.
pub const FUNSD_VALIDATION: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PageSize {
    pub width: f64,
    pub height: f64,
}

struct RawEntity {
    id: i64,
    label: String,
    words: Vec<(String, BoundingBox)>,
    links: Vec<(i64, i64)>,
}

fn field<'a>(doc: &str, v: &'a Value, key: &str, ctx: &str) -> Result<&'a Value> {
    v.get(key)
        .ok_or_else(|| Error::parse(doc, format!("{ctx}: missing key \"{key}\"")))
}

fn parse_box(doc: &str, v: &Value, ctx: &str) -> Result<BoundingBox> {
    let arr = v
        .as_array()
        .filter(|a| a.len() == 4)
        .ok_or_else(|| Error::parse(doc, format!("{ctx}: box must be an array of 4 numbers")))?;
    let mut c = [0.0; 4];
    for (k, x) in arr.iter().enumerate() {
        c[k] = x
            .as_f64()
            .ok_or_else(|| Error::parse(doc, format!("{ctx}: box must be an array of 4 numbers")))?;
    }
    Ok(BoundingBox::from_corners(c[0], c[1], c[2], c[3]))
}

fn parse_entities(doc: &str, items: &[Value]) -> Result<Vec<RawEntity>> {
    items
        .iter()
        .enumerate()
        .map(|(k, item)| {
            let id = field(doc, item, "id", &format!("entity #{k}"))?
                .as_i64()
                .ok_or_else(|| Error::parse(doc, format!("entity #{k}: id is not an integer")))?;
            let ctx = format!("entity {id}");
            let label = field(doc, item, "label", &ctx)?
                .as_str()
                .ok_or_else(|| Error::parse(doc, format!("{ctx}: label is not a string")))?
                .to_string();
            let words = field(doc, item, "words", &ctx)?
                .as_array()
                .ok_or_else(|| Error::parse(doc, format!("{ctx}: words is not an array")))?;
            if words.is_empty() {
                return Err(Error::parse(doc, format!("{ctx}: empty \"words\"")));
            }
            let words = words
                .iter()
                .map(|w| {
                    let text = field(doc, w, "text", &ctx)?.as_str().unwrap_or_default().to_string();
                    Ok((text, parse_box(doc, field(doc, w, "box", &ctx)?, &ctx)?))
                })
                .collect::<Result<Vec<_>>>()?;
            let links = match item.get("linking") {
                None | Some(Value::Null) => Vec::new(),
                Some(v) => v
                    .as_array()
                    .ok_or_else(|| Error::parse(doc, format!("{ctx}: linking is not an array")))?
                    .iter()
                    .map(|pair| {
                        let p = pair.as_array().filter(|p| p.len() == 2);
                        let ends = p.and_then(|p| Some((p[0].as_i64()?, p[1].as_i64()?)));
                        ends.ok_or_else(|| {
                            Error::parse(doc, format!("{ctx}: linking entries must be [from, to]"))
                        })
                    })
                    .collect::<Result<Vec<_>>>()?,
            };
            Ok(RawEntity {
                id,
                label,
                words,
                links,
            })
        })
        .collect()
}

fn sidecar_size(v: &Value) -> Option<PageSize> {
    let get = |o: &Value| -> Option<PageSize> {
        Some(PageSize {
            width: o.get("width")?.as_f64()?,
            height: o.get("height")?.as_f64()?,
        })
    };
    get(v).or_else(|| v.get("img").and_then(get))
}

fn inferred_size(entities: &[RawEntity]) -> PageSize {
    let mut w: f64 = 1.0;
    let mut h: f64 = 1.0;
    for e in entities {
        for (_, b) in &e.words {
            w = w.max(b.x_right);
            h = h.max(b.y_bottom);
        }
    }
    PageSize {
        width: w.ceil(),
        height: h.ceil(),
    }
}

/// Adds proximate relations to a question-answer / header-question graph
/// and derives the word-level gold graph.
pub fn annotate(document: Document, base: &EntityRelationGraph) -> Result<AnnotatedDocument> {
    let base = base.canonicalize()?;
    let gold_erg = augment_proximate(&base, &document).canonicalize()?;
    let gold_wrg = erg_to_wrg(&gold_erg)?;
    Ok(AnnotatedDocument {
        document,
        gold_erg,
        gold_wrg,
        flags: IngestFlags::default(),
    })
}

fn build(
    doc_id: &str,
    language: &str,
    size: PageSize,
    page_size_inferred: bool,
    raw: Vec<RawEntity>,
) -> Result<AnnotatedDocument> {
    if !(size.width > 0.0 && size.height > 0.0) {
        return Err(Error::parse(doc_id, format!("invalid page size {} x {}", size.width, size.height)));
    }
    let mut flags = IngestFlags {
        raw_entities: raw.len(),
        raw_words: raw.iter().map(|e| e.words.len()).sum(),
        page_size_inferred,
        ..Default::default()
    };
    let mut index: BTreeMap<i64, usize> = BTreeMap::new();
    for (k, e) in raw.iter().enumerate() {
        if index.insert(e.id, k).is_some() {
            return Err(Error::parse(doc_id, format!("duplicate entity id {}", e.id)));
        }
        for (_, b) in &e.words {
            if !b.is_well_formed() || !b.fits_in(size.width, size.height) {
                return Err(Error::parse(
                    doc_id,
                    format!(
                        "entity {}: box {:?} outside the {} x {} page",
                        e.id,
                        <[f64; 4]>::from(*b),
                        size.width,
                        size.height
                    ),
                ));
            }
        }
    }

    let mut kinds: Vec<Option<EntityType>> = Vec::with_capacity(raw.len());
    for e in &raw {
        let label = e.label.to_ascii_lowercase();
        if label == "other" {
            flags.dropped_other_entities += 1;
            flags.dropped_other_words += e.words.len();
            kinds.push(None);
            continue;
        }
        let kind = EntityType::from_label(&label)
            .ok_or_else(|| Error::parse(doc_id, format!("entity {}: unknown label {:?}", e.id, e.label)))?;
        kinds.push(Some(kind));
    }

    let mut pairs: BTreeSet<(usize, usize)> = BTreeSet::new();
    for e in &raw {
        for &(a, b) in &e.links {
            let ia = *index
                .get(&a)
                .ok_or_else(|| Error::parse(doc_id, format!("entity {}: link to unknown id {a}", e.id)))?;
            let ib = *index
                .get(&b)
                .ok_or_else(|| Error::parse(doc_id, format!("entity {}: link to unknown id {b}", e.id)))?;
            if ia != ib {
                pairs.insert((ia.min(ib), ia.max(ib)));
            }
        }
    }
    let mut edges: Vec<Edge<EntityRelationLabel>> = Vec::new();
    for &(a, b) in &pairs {
        use EntityType::*;
        let edge = match (kinds[a], kinds[b]) {
            (Some(Question), Some(Answer)) => Edge::new(a, EntityRelationLabel::QuestionAnswer, b),
            (Some(Answer), Some(Question)) => Edge::new(b, EntityRelationLabel::QuestionAnswer, a),
            (Some(Header), Some(Question)) => Edge::new(a, EntityRelationLabel::HeaderQuestion, b),
            (Some(Question), Some(Header)) => Edge::new(b, EntityRelationLabel::HeaderQuestion, a),
            _ => {
                flags.ignored_links += 1;
                continue;
            }
        };
        edges.push(edge);
    }
    let linked: BTreeSet<usize> = edges.iter().flat_map(|e| [e.src, e.dst]).collect();
    for (k, e) in raw.iter().enumerate() {
        if kinds[k].is_some() && !linked.contains(&k) {
            flags.dropped_unlinked_entities += 1;
            flags.dropped_unlinked_words += e.words.len();
        }
    }

    // Words of the kept entities, in reading order.
    let mut words = Vec::new();
    let mut owner = Vec::new();
    for &k in &linked {
        for (text, b) in &raw[k].words {
            words.push(Word {
                id: words.len(),
                text: text.clone(),
                bbox: *b,
            });
            owner.push(k);
        }
    }
    let perm = reading_order_permutation(&words);
    let mut entity_words: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    let ordered: Vec<Word> = perm
        .iter()
        .enumerate()
        .map(|(new_id, &old)| {
            entity_words.entry(owner[old]).or_default().push(new_id);
            Word {
                id: new_id,
                ..words[old].clone()
            }
        })
        .collect();
    let entities = entity_words
        .into_iter()
        .map(|(k, word_ids)| Entity {
            id: k,
            kind: kinds[k].expect("linked entities are typed"),
            word_ids,
        })
        .collect();
    let document = Document {
        doc_id: doc_id.to_string(),
        width: size.width,
        height: size.height,
        words: ordered,
        language: language.to_string(),
    };
    if raw.is_empty() {
        warn!("{doc_id}: empty form");
    }
    let base = EntityRelationGraph { entities, edges };
    let mut out = annotate(document, &base).map_err(|e| Error::parse(doc_id, e.to_string()))?;
    out.flags = flags;
    Ok(out)
}

fn entity_items<'a>(doc: &str, v: &'a Value) -> Result<&'a [Value]> {
    v.get("form")
        .or_else(|| v.get("document"))
        .ok_or_else(|| Error::parse(doc, "missing key \"form\""))?
        .as_array()
        .map(|a| a.as_slice())
        .ok_or_else(|| Error::parse(doc, "\"form\" is not an array"))
}

/// Parses one FUNSD-format annotation. `size` overrides any size found in
/// the value itself.
pub fn load_funsd_value(
    doc_id: &str,
    v: &Value,
    size: Option<PageSize>,
    language: &str,
) -> Result<AnnotatedDocument> {
    let raw = parse_entities(doc_id, entity_items(doc_id, v)?)?;
    let (size, inferred) = match size.or_else(|| sidecar_size(v)) {
        Some(s) => (s, false),
        None => (inferred_size(&raw), true),
    };
    build(doc_id, language, size, inferred, raw)
}

fn read_json(path: &Path) -> Result<Value> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::parse(path.display().to_string(), e.to_string()))
}

/// Reads only the header of an image next to the annotation: the same stem
/// in `../images/` or in the annotation's own folder.
fn companion_image_size(path: &Path) -> Option<PageSize> {
    let stem = path.file_stem()?;
    let dir = path.parent()?;
    let mut dirs = vec![dir.to_path_buf()];
    if let Some(up) = dir.parent() {
        dirs.insert(0, up.join("images"));
    }
    for d in dirs {
        for ext in ["png", "jpg", "jpeg", "PNG", "JPG"] {
            let cand = d.join(stem).with_extension(ext);
            if cand.is_file() {
                if let Ok((w, h)) = image::image_dimensions(&cand) {
                    return Some(PageSize {
                        width: w as f64,
                        height: h as f64,
                    });
                }
            }
        }
    }
    None
}

pub fn load_funsd(path: &Path) -> Result<AnnotatedDocument> {
    let doc_id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let v = read_json(path)?;
    let size = sidecar_size(&v).or_else(|| companion_image_size(path));
    load_funsd_value(&doc_id, &v, size, "en")
}

/// Parses an XFUND bundle (`{"documents": [...]}`, each with `id`,
/// `document` and `img`) or a single FUNSD-style document.
pub fn load_xfund_value(name: &str, v: &Value, language: &str) -> Result<Vec<AnnotatedDocument>> {
    let Some(docs) = v.get("documents") else {
        return Ok(vec![load_funsd_value(name, v, None, language)?]);
    };
    let docs = docs
        .as_array()
        .ok_or_else(|| Error::parse(name, "\"documents\" is not an array"))?;
    docs.par_iter()
        .enumerate()
        .map(|(k, d)| {
            let id = d
                .get("id")
                .and_then(Value::as_str)
                .map(str::to_string)
                .unwrap_or_else(|| format!("{name}_{k}"));
            load_funsd_value(&id, d, None, language)
        })
        .collect()
}

pub fn load_xfund(path: &Path, language: &str) -> Result<Vec<AnnotatedDocument>> {
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    load_xfund_value(&name, &read_json(path)?, language)
}

fn json_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let p = entry.map_err(|e| Error::io(dir, e))?.path();
        if p.extension().is_some_and(|x| x == "json") && p.is_file() {
            out.push(p);
        }
    }
    out.sort();
    Ok(out)
}

/// Every annotation file in `dir`, in file-name order, with its result.
pub fn load_funsd_dir(dir: &Path) -> Result<Vec<(PathBuf, Result<AnnotatedDocument>)>> {
    let files = json_files(dir)?;
    Ok(files
        .into_par_iter()
        .map(|p| {
            let r = load_funsd(&p);
            (p, r)
        })
        .collect())
}

/// First `n - n_val` documents for training, the rest for validation.
pub fn split_training(
    mut docs: Vec<AnnotatedDocument>,
    n_val: usize,
) -> (Vec<AnnotatedDocument>, Vec<AnnotatedDocument>) {
    let n_val = n_val.min(docs.len().saturating_sub(1));
    let val = docs.split_off(docs.len() - n_val);
    (docs, val)
}

/// Where one part (`training_data`, `testing_data`) of a FUNSD tree keeps its
/// annotation files; accepts an optional `dataset/` level and a missing
/// `annotations/` level.
pub fn annotation_dir(root: &Path, part: &str) -> PathBuf {
    let base = if root.join("dataset").is_dir() {
        root.join("dataset")
    } else {
        root.to_path_buf()
    };
    let d = base.join(part);
    if d.join("annotations").is_dir() {
        d.join("annotations")
    } else {
        d
    }
}

fn load_all(dir: &Path) -> Result<Vec<AnnotatedDocument>> {
    load_funsd_dir(dir)?
        .into_iter()
        .map(|(_, r)| r)
        .collect()
}

/// The FUNSD layout (`training_data/annotations`, `testing_data/annotations`)
/// split into train / validation / test.
pub fn funsd_split(root: &Path) -> Result<DatasetSplit> {
    let train_dir = annotation_dir(root, "training_data");
    let test_dir = annotation_dir(root, "testing_data");
    let (train, validation) = split_training(load_all(&train_dir)?, FUNSD_VALIDATION);
    let test = if test_dir.is_dir() {
        load_all(&test_dir)?
    } else {
        Vec::new()
    };
    Ok(DatasetSplit {
        train,
        validation,
        test,
    })
}

#[derive(Serialize, Deserialize)]
struct StoredWrg {
    edges: Vec<Edge<WordRelationLabel>>,
}

#[derive(Serialize, Deserialize)]
struct StoredDocument {
    doc_id: String,
    width: f64,
    height: f64,
    language: String,
    words: Vec<Word>,
    erg: EntityRelationGraph,
    wrg: StoredWrg,
    #[serde(default)]
    flags: IngestFlags,
}

pub fn annotated_to_json(doc: &AnnotatedDocument) -> Result<String> {
    let stored = StoredDocument {
        doc_id: doc.document.doc_id.clone(),
        width: doc.document.width,
        height: doc.document.height,
        language: doc.document.language.clone(),
        words: doc.document.words.clone(),
        erg: doc.gold_erg.clone(),
        wrg: StoredWrg {
            edges: doc.gold_wrg.edges.clone(),
        },
        flags: doc.flags.clone(),
    };
    let mut s = serde_json::to_string_pretty(&stored)?;
    s.push('\n');
    Ok(s)
}

pub fn write_annotated(doc: &AnnotatedDocument, path: &Path) -> Result<()> {
    crate::write_atomic(path, annotated_to_json(doc)?.as_bytes())
}

pub fn read_annotated(path: &Path) -> Result<AnnotatedDocument> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let s: StoredDocument = serde_json::from_str(&text)
        .map_err(|e| Error::parse(path.display().to_string(), e.to_string()))?;
    let n = s.words.len();
    if s.words.iter().enumerate().any(|(k, w)| w.id != k) {
        return Err(Error::parse(&s.doc_id, "word ids must be 0..n in order"));
    }
    let gold_wrg = WordRelationGraph {
        word_ids: (0..n).collect(),
        edges: s.wrg.edges,
    }
    .canonicalize()?;
    Ok(AnnotatedDocument {
        document: Document {
            doc_id: s.doc_id,
            width: s.width,
            height: s.height,
            words: s.words,
            language: s.language,
        },
        gold_erg: s.erg.canonicalize()?,
        gold_wrg,
        flags: s.flags,
    })
}

/// Every canonical document file in `dir` except the manifest, in file-name
/// order.
pub fn load_corpus_dir(dir: &Path) -> Result<Vec<AnnotatedDocument>> {
    json_files(dir)?
        .into_iter()
        .filter(|p| p.file_name().is_some_and(|n| n != "manifest.json"))
        .collect::<Vec<_>>()
        .par_iter()
        .map(|p| read_annotated(p))
        .collect()
}
