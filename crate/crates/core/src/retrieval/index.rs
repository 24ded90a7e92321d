use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::embed::{embed_caption, Embedder, EmbedderDescriptor};
use super::RetrievalError;

pub const INDEX_FORMAT: &str = "stepkit-caption-index";
pub const INDEX_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaptionEntry {
    pub caption: String,
    /// Path to a STEP file, or the STEP text itself.
    pub step_ref: String,
    pub embedding: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RetrievalHit {
    /// Insertion position of the entry in the index.
    pub row: usize,
    pub entry: CaptionEntry,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct IndexHeader {
    format: String,
    version: u32,
    dimension: usize,
    embedder: EmbedderDescriptor,
    rows: usize,
}

/// Which entries a query must skip.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Exclude {
    #[default]
    Nothing,
    Row(usize),
    /// Every entry whose caption equals the query text exactly.
    SameCaption,
}

/// Exact cosine-similarity index over unit caption embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct Index {
    dimension: usize,
    embedder: EmbedderDescriptor,
    entries: Vec<CaptionEntry>,
}

fn dot(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| x as f64 * y as f64).sum()
}

/// Embeds every `(caption, step_ref)` pair, keeping input order.
pub fn build_index(entries: &[(String, String)], embedder: &Embedder) -> Result<Index, RetrievalError> {
    if entries.is_empty() {
        return Err(RetrievalError::EmptyIndex);
    }
    let texts: Vec<&str> = entries.iter().map(|(c, _)| c.as_str()).collect();
    let vectors = embedder.embed_batch(&texts)?;
    let dimension = vectors[0].len();
    let mut rows = Vec::with_capacity(entries.len());
    for ((caption, step_ref), embedding) in entries.iter().zip(vectors) {
        if embedding.len() != dimension {
            return Err(RetrievalError::DimensionMismatch {
                expected: dimension,
                found: embedding.len(),
            });
        }
        rows.push(CaptionEntry {
            caption: caption.clone(),
            step_ref: step_ref.clone(),
            embedding,
        });
    }
    Ok(Index {
        dimension,
        embedder: embedder.descriptor(dimension),
        entries: rows,
    })
}

impl Index {
    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn embedder(&self) -> &EmbedderDescriptor {
        &self.embedder
    }

    pub fn entries(&self) -> &[CaptionEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Top `k` entries by cosine similarity to `query`, descending, ties in
    /// insertion order.
    pub fn search(&self, query: &[f32], k: usize, exclude: Exclude, query_text: Option<&str>) -> Result<Vec<RetrievalHit>, RetrievalError> {
        if self.entries.is_empty() {
            return Err(RetrievalError::EmptyIndex);
        }
        if query.len() != self.dimension {
            return Err(RetrievalError::DimensionMismatch {
                expected: self.dimension,
                found: query.len(),
            });
        }
        let mut scored: Vec<(usize, f64)> = self
            .entries
            .iter()
            .enumerate()
            .filter(|(row, e)| match exclude {
                Exclude::Nothing => true,
                Exclude::Row(r) => *row != r,
                Exclude::SameCaption => query_text != Some(e.caption.as_str()),
            })
            .map(|(row, e)| (row, dot(&e.embedding, query)))
            .collect();
        scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        scored.truncate(k);
        Ok(scored
            .into_iter()
            .map(|(row, score)| RetrievalHit {
                row,
                entry: self.entries[row].clone(),
                score,
            })
            .collect())
    }

    pub fn write_to<W: Write>(&self, w: W) -> Result<(), RetrievalError> {
        let mut w = BufWriter::new(w);
        let header = IndexHeader {
            format: INDEX_FORMAT.to_string(),
            version: INDEX_VERSION,
            dimension: self.dimension,
            embedder: self.embedder.clone(),
            rows: self.entries.len(),
        };
        let io = |e: std::io::Error| RetrievalError::Io(e.to_string());
        serde_json::to_writer(&mut w, &header).map_err(|e| RetrievalError::Io(e.to_string()))?;
        w.write_all(b"\n").map_err(io)?;
        for entry in &self.entries {
            serde_json::to_writer(&mut w, entry).map_err(|e| RetrievalError::Io(e.to_string()))?;
            w.write_all(b"\n").map_err(io)?;
        }
        w.flush().map_err(io)
    }

    pub fn read_from<R: Read>(r: R) -> Result<Index, RetrievalError> {
        let mut lines = BufReader::new(r).lines();
        let bad = |msg: String| RetrievalError::InvalidIndex(msg);
        let first = lines
            .next()
            .ok_or_else(|| bad("missing header line".into()))?
            .map_err(|e| RetrievalError::Io(e.to_string()))?;
        let header: IndexHeader = serde_json::from_str(&first).map_err(|e| bad(format!("header: {e}")))?;
        if header.format != INDEX_FORMAT {
            return Err(bad(format!("unknown format {:?}", header.format)));
        }
        if header.version != INDEX_VERSION {
            return Err(bad(format!("unsupported version {}", header.version)));
        }
        if header.embedder.dimension() != header.dimension {
            return Err(bad("embedder dimension disagrees with index dimension".into()));
        }
        let mut entries = Vec::with_capacity(header.rows);
        for (i, line) in lines.enumerate() {
            let line = line.map_err(|e| RetrievalError::Io(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let entry: CaptionEntry = serde_json::from_str(&line).map_err(|e| bad(format!("row {}: {e}", i + 1)))?;
            if entry.embedding.len() != header.dimension {
                return Err(RetrievalError::DimensionMismatch {
                    expected: header.dimension,
                    found: entry.embedding.len(),
                });
            }
            entries.push(entry);
        }
        if entries.len() != header.rows {
            return Err(bad(format!("header announces {} rows, found {}", header.rows, entries.len())));
        }
        Ok(Index {
            dimension: header.dimension,
            embedder: header.embedder,
            entries,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), RetrievalError> {
        let file = std::fs::File::create(path).map_err(|e| RetrievalError::Io(format!("{}: {e}", path.display())))?;
        self.write_to(file)
    }

    pub fn load(path: &Path) -> Result<Index, RetrievalError> {
        let file = std::fs::File::open(path).map_err(|e| RetrievalError::Io(format!("{}: {e}", path.display())))?;
        Index::read_from(file)
    }
}

/// Embeds `caption` and returns the `k` nearest entries.
pub fn query_nearest(index: &Index, caption: &str, embedder: &Embedder, k: usize, exclude: Exclude) -> Result<Vec<RetrievalHit>, RetrievalError> {
    if k == 0 {
        return Err(RetrievalError::InvalidConfig("k must be at least 1".into()));
    }
    if index.is_empty() {
        return Err(RetrievalError::EmptyIndex);
    }
    let v = embed_caption(caption, embedder)?;
    index.search(&v, k, exclude, Some(caption))
}

/// Reads a caption file: one JSON object per line with `caption` and
/// `step_ref` (or `step`) fields. Relative `step_ref` paths are resolved
/// against the caption file's directory.
pub fn read_caption_file(path: &Path) -> Result<Vec<(String, String)>, RetrievalError> {
    #[derive(Deserialize)]
    #[serde(deny_unknown_fields)]
    struct Line {
        caption: String,
        #[serde(alias = "step")]
        step_ref: String,
    }
    let text = std::fs::read_to_string(path).map_err(|e| RetrievalError::Io(format!("{}: {e}", path.display())))?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let l: Line = serde_json::from_str(line)
            .map_err(|e| RetrievalError::InvalidConfig(format!("{}:{}: {e}", path.display(), i + 1)))?;
        let step_ref = if is_inline_step(&l.step_ref) || Path::new(&l.step_ref).is_absolute() {
            l.step_ref
        } else {
            base.join(&l.step_ref).to_string_lossy().into_owned()
        };
        out.push((l.caption, step_ref));
    }
    Ok(out)
}

pub(crate) fn is_inline_step(step_ref: &str) -> bool {
    step_ref.trim_start().starts_with("ISO-10303-21;")
}

/// STEP text behind a `step_ref`: inline text as-is, otherwise the file
/// contents, with relative paths taken from `base`.
pub fn resolve_step_ref(step_ref: &str, base: Option<&Path>) -> Result<String, RetrievalError> {
    if is_inline_step(step_ref) {
        return Ok(step_ref.to_string());
    }
    let mut path = PathBuf::from(step_ref);
    if path.is_relative() {
        if let Some(b) = base {
            path = b.join(path);
        }
    }
    std::fs::read_to_string(&path).map_err(|e| RetrievalError::MissingStepFile(format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entries() -> Vec<(String, String)> {
        ["a flat rectangular plate", "a hex bolt with thread", "a round flat washer"]
            .iter()
            .enumerate()
            .map(|(i, c)| (c.to_string(), format!("part{i}.step")))
            .collect()
    }

    #[test]
    fn self_retrieval_and_round_trip() {
        let e = Embedder::default();
        let index = build_index(&entries(), &e).unwrap();
        assert_eq!(index.len(), 3);
        let hits = query_nearest(&index, "a hex bolt with thread", &e, 1, Exclude::Nothing).unwrap();
        assert_eq!(hits[0].row, 1);
        assert!(hits[0].score >= 0.999);

        let mut buf = Vec::new();
        index.write_to(&mut buf).unwrap();
        let loaded = Index::read_from(buf.as_slice()).unwrap();
        assert_eq!(loaded, index);
        let mut again = Vec::new();
        build_index(&entries(), &e).unwrap().write_to(&mut again).unwrap();
        assert_eq!(buf, again);
    }

    #[test]
    fn k_and_exclusion() {
        let e = Embedder::default();
        let index = build_index(&entries(), &e).unwrap();
        assert_eq!(query_nearest(&index, "flat", &e, 10, Exclude::Nothing).unwrap().len(), 3);
        let hits = query_nearest(&index, "a hex bolt with thread", &e, 3, Exclude::SameCaption).unwrap();
        assert!(hits.iter().all(|h| h.row != 1));
        let hits = query_nearest(&index, "a hex bolt with thread", &e, 3, Exclude::Row(1)).unwrap();
        assert_eq!(hits.len(), 2);
        assert!(query_nearest(&index, "x", &e, 0, Exclude::Nothing).is_err());
    }

    #[test]
    fn ties_follow_insertion_order() {
        let e = Embedder::default();
        let dup = vec![
            ("same words".to_string(), "a".to_string()),
            ("other".to_string(), "b".to_string()),
            ("words same".to_string(), "c".to_string()),
        ];
        let index = build_index(&dup, &e).unwrap();
        let rows: Vec<usize> = query_nearest(&index, "same words", &e, 3, Exclude::Nothing)
            .unwrap()
            .iter()
            .map(|h| h.row)
            .collect();
        assert_eq!(rows, vec![0, 2, 1]);
    }

    #[test]
    fn empty_inputs() {
        assert_eq!(build_index(&[], &Embedder::default()), Err(RetrievalError::EmptyIndex));
        assert!(Index::read_from(&b""[..]).is_err());
    }
}
