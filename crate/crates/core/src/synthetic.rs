//! Seeded generator of FUNSD-format forms.
//!
//! Pages are laid out as sections: an optional header, then rows of one or
//! two question/answer fields. Answers sit to the right of their question or
//! on the line below it. Some questions are left unanswered and some pages
//! carry "other" entities, so the loader's drop rules are exercised too.
//! Output goes through the same parser as real annotation files.

use rand::{Rng, SeedableRng};
use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::ingest::{load_funsd_value, AnnotatedDocument};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticConfig {
    pub language: String,
    pub min_sections: usize,
    pub max_sections: usize,
    pub max_rows: usize,
    /// Probability that an answer goes on the line below its question.
    pub answer_below: f64,
    /// Probability that a question has no answer.
    pub unanswered: f64,
    /// Vertical jitter of word boxes, in pixels.
    pub jitter: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            language: "en".into(),
            min_sections: 2,
            max_sections: 4,
            max_rows: 3,
            answer_below: 0.25,
            unanswered: 0.1,
            jitter: 2.0,
        }
    }
}

fn syllables(language: &str) -> &'static [&'static str] {
    match language {
        "zh" | "ja" => &["名", "称", "日", "期", "地", "址", "号", "码", "金", "额"],
        "de" => &["na", "me", "da", "tum", "str", "aße", "ort", "be", "trag"],
        "fr" => &["no", "m", "da", "te", "ru", "e", "vil", "le", "mon", "tant"],
        "es" => &["nom", "bre", "fe", "cha", "ca", "lle", "ciu", "dad"],
        "it" => &["no", "me", "da", "ta", "vi", "a", "cit", "tà"],
        "pt" => &["no", "me", "da", "ta", "ru", "a", "ci", "da", "de"],
        _ => &["na", "me", "da", "te", "ad", "dr", "ess", "to", "tal", "amo", "unt"],
    }
}

pub struct FormGenerator {
    cfg: SyntheticConfig,
}

struct Layout<'a> {
    rng: ChaCha8Rng,
    syl: &'a [&'a str],
    char_w: f64,
    line_h: f64,
    gap: f64,
    jitter: f64,
    entities: Vec<Value>,
    links: Vec<(usize, usize)>,
    right: f64,
}

impl Layout<'_> {
    fn token(&mut self) -> String {
        let n = self.rng.random_range(1..=3);
        (0..n)
            .map(|_| self.syl[self.rng.random_range(0..self.syl.len())])
            .collect()
    }

    /// Places `n` words starting at `x` on the line at `y`; returns the
    /// entity id and the x after the last word.
    fn place(&mut self, label: &str, n: usize, x: f64, y: f64, colon: bool) -> (usize, f64) {
        let mut words = Vec::new();
        let mut cx = x;
        for k in 0..n {
            let mut text = self.token();
            if colon && k + 1 == n {
                text.push(':');
            }
            let w = (text.chars().count().max(2) as f64) * self.char_w;
            let dy = self.rng.random_range(-self.jitter..=self.jitter);
            let b = [cx.round(), (y + dy).round(), (cx + w).round(), (y + dy + self.line_h).round()];
            words.push(json!({"text": text, "box": b}));
            self.right = self.right.max(b[2]);
            cx += w + self.char_w;
        }
        let id = self.entities.len();
        let first = words[0]["box"].clone();
        let last = words[words.len() - 1]["box"].clone();
        let bbox = json!([first[0], first[1], last[2], last[3]]);
        let text: Vec<String> = words.iter().map(|w| w["text"].as_str().unwrap().to_string()).collect();
        self.entities.push(json!({
            "id": id, "label": label, "box": bbox, "text": text.join(" "), "words": words,
        }));
        (id, cx)
    }
}

impl FormGenerator {
    pub fn new(cfg: SyntheticConfig) -> Self {
        FormGenerator { cfg }
    }

    /// A FUNSD-format annotation value with `width` / `height` fields.
    pub fn raw(&self, seed: u64, doc_id: &str) -> Value {
        let cfg = &self.cfg;
        let mut l = Layout {
            rng: ChaCha8Rng::seed_from_u64(seed),
            syl: syllables(&cfg.language),
            char_w: 0.0,
            line_h: 0.0,
            gap: 0.0,
            jitter: cfg.jitter,
            entities: Vec::new(),
            links: Vec::new(),
            right: 0.0,
        };
        l.char_w = l.rng.random_range(6.0..8.0);
        l.line_h = l.rng.random_range(12.0..18.0);
        l.gap = l.rng.random_range(8.0..16.0);
        let width: f64 = l.rng.random_range(950.0..1050.0f64).round();
        let margin = 40.0;
        let col2 = (width / 2.0).round() + 10.0;
        let step = l.line_h + l.gap;
        let mut y = margin;

        if l.rng.random_bool(0.5) {
            let n = l.rng.random_range(1..=3);
            l.place("other", n, width / 3.0, y, false);
            y += 2.0 * step;
        }
        let sections = l.rng.random_range(cfg.min_sections..=cfg.max_sections);
        for _ in 0..sections {
            let header = if l.rng.random_bool(0.7) {
                let n = l.rng.random_range(1..=3);
                let (h, _) = l.place("header", n, margin, y, false);
                y += step;
                Some(h)
            } else {
                None
            };
            let rows = l.rng.random_range(1..=cfg.max_rows);
            for _ in 0..rows {
                let cols = if l.rng.random_bool(0.5) { 2 } else { 1 };
                let mut below = false;
                for c in 0..cols {
                    let x0 = if c == 0 { margin } else { col2 };
                    let nq = l.rng.random_range(1..=3);
                    let (q, qx) = l.place("question", nq, x0, y, true);
                    if let Some(h) = header {
                        l.links.push((h, q));
                    }
                    if l.rng.random_bool(cfg.unanswered) {
                        continue;
                    }
                    let na = l.rng.random_range(1..=3);
                    let a = if l.rng.random_bool(cfg.answer_below) {
                        below = true;
                        l.place("answer", na, x0 + 2.0 * l.char_w, y + step, false).0
                    } else {
                        l.place("answer", na, qx + l.char_w, y, false).0
                    };
                    l.links.push((q, a));
                }
                y += if below { 2.0 * step } else { step };
            }
            y += l.gap;
        }
        if l.rng.random_bool(0.5) {
            l.place("other", 1, width - margin - 30.0, y + step, false);
            y += 2.0 * step;
        }
        let height = (y + margin + step).round();
        let width = width.max((l.right + margin).round());

        let mut links: Vec<Vec<[usize; 2]>> = vec![Vec::new(); l.entities.len()];
        for &(a, b) in &l.links {
            links[a].push([a, b]);
            links[b].push([a, b]);
        }
        let mut form: Vec<Value> = l
            .entities
            .into_iter()
            .zip(links)
            .map(|(mut e, lk)| {
                e["linking"] = json!(lk);
                e
            })
            .collect();
        form.shuffle(&mut l.rng);
        json!({"doc_id": doc_id, "width": width, "height": height, "form": form})
    }

    pub fn generate(&self, seed: u64, doc_id: &str) -> AnnotatedDocument {
        load_funsd_value(doc_id, &self.raw(seed, doc_id), None, &self.cfg.language)
            .expect("generated forms are well formed")
    }

    /// `n` documents named `{prefix}{k:04}` with seeds `seed + k`.
    pub fn corpus(&self, n: usize, seed: u64, prefix: &str) -> Vec<AnnotatedDocument> {
        (0..n)
            .map(|k| self.generate(seed.wrapping_add(k as u64), &format!("{prefix}{k:04}")))
            .collect()
    }
}
