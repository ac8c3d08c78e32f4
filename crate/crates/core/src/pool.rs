//! Question pool, embeddings, and offline response matrices.
//!
//! Everything here is immutable after load and safe to share across
//! concurrently running sessions. Loading is single-threaded. File formats:
//!
//! - `questions.jsonl`: one object per line:
//!   `{"id", "text", "image_ref"?, "options"?: [{"label","text"}], "answer_key"?, "category"?}`
//! - `embeddings.jsonl`: one object per line: `{"id", "vector": [..]}`,
//!   all vectors the same length; vectors are L2-normalized on ingestion.
//! - `responses.csv`: header `model_id,question_id,correct`, `correct` in {0,1}.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Questions and embeddings must be unit-norm within this tolerance after load.
pub const NORM_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionOption {
    pub label: String,
    pub text: String,
}

/// One benchmark item. `difficulty` is empty until a calibration is applied.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Question {
    pub id: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_ref: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub options: Option<Vec<QuestionOption>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answer_key: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub difficulty: Option<f64>,
}

#[derive(Debug, Deserialize)]
struct EmbeddingRecord {
    id: String,
    vector: Vec<f64>,
}

/// The full benchmark: questions in file order plus an id index.
#[derive(Debug, Clone, PartialEq)]
pub struct QuestionPool {
    questions: Vec<Question>,
    embedding_dim: Option<usize>,
    index: HashMap<String, usize>,
}

impl QuestionPool {
    /// Build a pool from already-parsed questions, enforcing the pool
    /// invariants (unique nonempty ids, consistent embedding dimension,
    /// unit-norm embeddings, answer keys matching exactly one option).
    pub fn from_questions(questions: Vec<Question>) -> Result<Self> {
        if questions.is_empty() {
            return Err(Error::InvalidConfig("question pool is empty".into()));
        }
        let mut index = HashMap::with_capacity(questions.len());
        let mut embedding_dim = None;
        for (pos, q) in questions.iter().enumerate() {
            if q.id.is_empty() {
                return Err(Error::Malformed {
                    path: "<questions>".into(),
                    line: pos + 1,
                    msg: "empty question id".into(),
                });
            }
            if index.insert(q.id.clone(), pos).is_some() {
                return Err(Error::DuplicateId {
                    id: q.id.clone(),
                    line: pos + 1,
                });
            }
            if let (Some(options), Some(key)) = (&q.options, &q.answer_key) {
                let matches = options.iter().filter(|o| o.label == *key).count();
                if matches != 1 {
                    return Err(Error::BadAnswerKey {
                        id: q.id.clone(),
                        key: key.clone(),
                    });
                }
            }
            if let Some(e) = &q.embedding {
                match embedding_dim {
                    None => embedding_dim = Some(e.len()),
                    Some(dim) if dim != e.len() => {
                        return Err(Error::DimensionMismatch {
                            id: q.id.clone(),
                            expected: dim,
                            got: e.len(),
                        })
                    }
                    _ => {}
                }
                if e.iter().any(|x| !x.is_finite()) {
                    return Err(Error::NonFinite(format!("embedding for {:?}", q.id)));
                }
                let norm = l2_norm(e);
                if (norm - 1.0).abs() > NORM_TOL {
                    return Err(Error::Other(format!(
                        "embedding for {:?} is not unit norm (‖v‖ = {norm})",
                        q.id
                    )));
                }
            }
        }
        Ok(QuestionPool {
            questions,
            embedding_dim,
            index,
        })
    }

    pub fn len(&self) -> usize {
        self.questions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.questions.is_empty()
    }

    pub fn embedding_dim(&self) -> Option<usize> {
        self.embedding_dim
    }

    pub fn contains(&self, id: &str) -> bool {
        self.index.contains_key(id)
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn get(&self, id: &str) -> Option<&Question> {
        self.index.get(id).map(|&i| &self.questions[i])
    }

    /// Iterate questions in file order.
    pub fn iter(&self) -> impl Iterator<Item = &Question> {
        self.questions.iter()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.questions.iter().map(|q| q.id.as_str())
    }

    pub fn embedding(&self, id: &str) -> Result<&[f64]> {
        let q = self.get(id).ok_or_else(|| Error::UnknownQuestion {
            id: id.into(),
            line: 0,
        })?;
        q.embedding
            .as_deref()
            .ok_or_else(|| Error::MissingEmbedding { id: id.into() })
    }

    pub fn difficulty(&self, id: &str) -> Result<f64> {
        let q = self.get(id).ok_or_else(|| Error::UnknownQuestion {
            id: id.into(),
            line: 0,
        })?;
        q.difficulty
            .ok_or_else(|| Error::Uncalibrated { id: id.into() })
    }

    /// Attach calibrated difficulties (question id → difficulty mean).
    /// Ids absent from the map keep their current difficulty.
    pub fn apply_difficulties(&mut self, difficulties: &BTreeMap<String, f64>) {
        for q in &mut self.questions {
            if let Some(&d) = difficulties.get(&q.id) {
                q.difficulty = Some(d);
            }
        }
    }

    /// Skip validation; geometry tests want raw (non-unit-norm) embeddings.
    #[cfg(test)]
    pub(crate) fn from_questions_unchecked(questions: Vec<Question>) -> Self {
        let index = questions
            .iter()
            .enumerate()
            .map(|(i, q)| (q.id.clone(), i))
            .collect();
        let embedding_dim = questions
            .iter()
            .find_map(|q| q.embedding.as_ref().map(|e| e.len()));
        QuestionPool {
            questions,
            embedding_dim,
            index,
        }
    }
}

fn l2_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Parse the questions JSONL format. Line numbers are 1-based in errors.
pub fn parse_questions(text: &str, path: &str) -> Result<Vec<Question>> {
    let mut out = Vec::new();
    let mut seen = HashMap::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let q: Question = serde_json::from_str(line).map_err(|e| Error::Malformed {
            path: path.into(),
            line: line_no,
            msg: e.to_string(),
        })?;
        if q.id.is_empty() {
            return Err(Error::Malformed {
                path: path.into(),
                line: line_no,
                msg: "empty question id".into(),
            });
        }
        if seen.insert(q.id.clone(), line_no).is_some() {
            return Err(Error::DuplicateId {
                id: q.id.clone(),
                line: line_no,
            });
        }
        out.push(q);
    }
    Ok(out)
}

/// Parse the embeddings JSONL format and attach vectors (L2-normalized)
/// to the given questions. Every record id must exist among the questions;
/// questions without a record simply keep no embedding.
pub fn parse_and_attach_embeddings(
    questions: &mut [Question],
    text: &str,
    path: &str,
) -> Result<()> {
    let index: HashMap<String, usize> = questions
        .iter()
        .enumerate()
        .map(|(i, q)| (q.id.clone(), i))
        .collect();
    let mut dim: Option<usize> = None;
    let mut seen: HashSet<String> = HashSet::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let rec: EmbeddingRecord = serde_json::from_str(line).map_err(|e| Error::Malformed {
            path: path.into(),
            line: line_no,
            msg: e.to_string(),
        })?;
        let &pos = index
            .get(rec.id.as_str())
            .ok_or_else(|| Error::UnknownQuestion {
                id: rec.id.clone(),
                line: line_no,
            })?;
        if !seen.insert(rec.id.clone()) {
            return Err(Error::DuplicateId {
                id: rec.id,
                line: line_no,
            });
        }
        match dim {
            None => dim = Some(rec.vector.len()),
            Some(d) if d != rec.vector.len() => {
                return Err(Error::DimensionMismatch {
                    id: rec.id,
                    expected: d,
                    got: rec.vector.len(),
                })
            }
            _ => {}
        }
        if rec.vector.iter().any(|x| !x.is_finite()) {
            return Err(Error::Malformed {
                path: path.into(),
                line: line_no,
                msg: format!("non-finite embedding component for {:?}", rec.id),
            });
        }
        let norm = l2_norm(&rec.vector);
        if norm < 1e-12 {
            return Err(Error::ZeroNormEmbedding { id: rec.id });
        }
        questions[pos].embedding = Some(rec.vector.iter().map(|x| x / norm).collect());
    }
    Ok(())
}

/// Load and validate a question pool, optionally attaching embeddings.
pub fn load_pool(path: &Path, embeddings_path: Option<&Path>) -> Result<QuestionPool> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut questions = parse_questions(&text, &path.display().to_string())?;
    if let Some(ep) = embeddings_path {
        let etext = fs::read_to_string(ep).map_err(|e| Error::io(ep, e))?;
        parse_and_attach_embeddings(&mut questions, &etext, &ep.display().to_string())?;
    }
    QuestionPool::from_questions(questions)
}

/// Sparse binary (model × question) correctness records.
#[derive(Debug, Clone, PartialEq)]
pub struct ResponseMatrix {
    model_ids: Vec<String>,
    question_ids: Vec<String>,
    model_index: HashMap<String, usize>,
    question_index: HashMap<String, usize>,
    // (model index, question index, correct) in file order
    entries: Vec<(u32, u32, bool)>,
}

impl ResponseMatrix {
    pub fn model_ids(&self) -> &[String] {
        &self.model_ids
    }

    pub fn question_ids(&self) -> &[String] {
        &self.question_ids
    }

    pub fn n_models(&self) -> usize {
        self.model_ids.len()
    }

    pub fn n_questions(&self) -> usize {
        self.question_ids.len()
    }

    pub fn n_entries(&self) -> usize {
        self.entries.len()
    }

    pub fn entries(&self) -> &[(u32, u32, bool)] {
        &self.entries
    }

    /// Look up one cell by ids.
    pub fn get(&self, model: &str, question: &str) -> Option<bool> {
        let m = *self.model_index.get(model)? as u32;
        let q = *self.question_index.get(question)? as u32;
        self.entries
            .iter()
            .find(|&&(em, eq, _)| em == m && eq == q)
            .map(|&(_, _, c)| c)
    }

    /// All (question id, correct) records for one model, in file order.
    pub fn responses_of(&self, model: &str) -> Vec<(&str, bool)> {
        match self.model_index.get(model) {
            None => Vec::new(),
            Some(&m) => self
                .entries
                .iter()
                .filter(|&&(em, _, _)| em as usize == m)
                .map(|&(_, q, c)| (self.question_ids[q as usize].as_str(), c))
                .collect(),
        }
    }

    /// Build from explicit records; enforces the at-most-once invariant.
    pub fn from_records(records: &[(String, String, bool)]) -> Result<Self> {
        let mut m = ResponseMatrix {
            model_ids: Vec::new(),
            question_ids: Vec::new(),
            model_index: HashMap::new(),
            question_index: HashMap::new(),
            entries: Vec::new(),
        };
        let mut seen = HashSet::new();
        for (line, (model, question, correct)) in records.iter().enumerate() {
            let mi = m.intern_model(model);
            let qi = m.intern_question(question);
            if !seen.insert((mi, qi)) {
                return Err(Error::DuplicateResponse {
                    model: model.clone(),
                    question: question.clone(),
                    line: line + 1,
                });
            }
            m.entries.push((mi, qi, *correct));
        }
        Ok(m)
    }

    fn intern_model(&mut self, id: &str) -> u32 {
        match self.model_index.get(id) {
            Some(&i) => i as u32,
            None => {
                let i = self.model_ids.len();
                self.model_ids.push(id.to_string());
                self.model_index.insert(id.to_string(), i);
                i as u32
            }
        }
    }

    fn intern_question(&mut self, id: &str) -> u32 {
        match self.question_index.get(id) {
            Some(&i) => i as u32,
            None => {
                let i = self.question_ids.len();
                self.question_ids.push(id.to_string());
                self.question_index.insert(id.to_string(), i);
                i as u32
            }
        }
    }
}

/// Parse the responses CSV against a pool. Strictly binary correctness;
/// every question id must exist in the pool.
pub fn parse_responses(text: &str, path: &str, pool: &QuestionPool) -> Result<ResponseMatrix> {
    let mut lines = text.lines().enumerate();
    let header = lines
        .next()
        .map(|(_, l)| l.trim_end_matches('\r'))
        .unwrap_or("");
    if header != "model_id,question_id,correct" {
        return Err(Error::Malformed {
            path: path.into(),
            line: 1,
            msg: format!("expected header `model_id,question_id,correct`, got {header:?}"),
        });
    }
    let mut matrix = ResponseMatrix {
        model_ids: Vec::new(),
        question_ids: Vec::new(),
        model_index: HashMap::new(),
        question_index: HashMap::new(),
        entries: Vec::new(),
    };
    let mut seen = HashSet::new();
    for (i, raw) in lines {
        let line_no = i + 1;
        let line = raw.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        let mut parts = line.splitn(3, ',');
        let (model, question, correct) = match (parts.next(), parts.next(), parts.next()) {
            (Some(m), Some(q), Some(c)) if !m.is_empty() && !q.is_empty() => (m, q, c),
            _ => {
                return Err(Error::Malformed {
                    path: path.into(),
                    line: line_no,
                    msg: format!("expected `model_id,question_id,correct`, got {line:?}"),
                })
            }
        };
        if !pool.contains(question) {
            return Err(Error::UnknownQuestion {
                id: question.into(),
                line: line_no,
            });
        }
        let correct = match correct {
            "0" => false,
            "1" => true,
            other => {
                return Err(Error::NonBinaryCorrectness {
                    value: other.into(),
                    line: line_no,
                })
            }
        };
        let mi = matrix.intern_model(model);
        let qi = matrix.intern_question(question);
        if !seen.insert((mi, qi)) {
            return Err(Error::DuplicateResponse {
                model: model.into(),
                question: question.into(),
                line: line_no,
            });
        }
        matrix.entries.push((mi, qi, correct));
    }
    Ok(matrix)
}

pub fn load_responses(path: &Path, pool: &QuestionPool) -> Result<ResponseMatrix> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_responses(&text, &path.display().to_string(), pool)
}

/// Fraction of correct entries per model over that model's answered
/// questions. This defines the reference (full-benchmark) ranking.
pub fn accuracy_per_model(matrix: &ResponseMatrix) -> BTreeMap<String, f64> {
    let mut correct = vec![0usize; matrix.n_models()];
    let mut total = vec![0usize; matrix.n_models()];
    for &(m, _, c) in matrix.entries() {
        total[m as usize] += 1;
        if c {
            correct[m as usize] += 1;
        }
    }
    matrix
        .model_ids()
        .iter()
        .enumerate()
        .filter(|&(i, _)| total[i] > 0)
        .map(|(i, id)| (id.clone(), correct[i] as f64 / total[i] as f64))
        .collect()
}
