use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::RetrievalError;
use crate::fnv::hash_bytes;

pub const DEFAULT_LOCAL_DIMENSION: usize = 512;
pub const LOCAL_HASHING: &str = "fnv1a64-lowercase-alnum-words";
pub const API_KEY_ENV: &str = "STEPKIT_EMBED_API_KEY";

/// Serializable description of how an index's vectors were produced.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EmbedderDescriptor {
    LocalHash { dimension: usize, hashing: String },
    Remote { endpoint: String, model: String, dimension: usize },
}

impl EmbedderDescriptor {
    pub fn dimension(&self) -> usize {
        match self {
            EmbedderDescriptor::LocalHash { dimension, .. } | EmbedderDescriptor::Remote { dimension, .. } => *dimension,
        }
    }
}

/// Hashed bag of words: lowercase alphanumeric runs, each counted in bucket
/// `fnv1a64(token) mod dimension`, then L2-normalized.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LocalEmbedder {
    pub dimension: usize,
}

impl Default for LocalEmbedder {
    fn default() -> Self {
        LocalEmbedder {
            dimension: DEFAULT_LOCAL_DIMENSION,
        }
    }
}

pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

fn normalize(v: &[f64]) -> Option<Vec<f32>> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    (norm > 0.0 && norm.is_finite()).then(|| v.iter().map(|x| (x / norm) as f32).collect())
}

impl LocalEmbedder {
    pub fn new(dimension: usize) -> Result<Self, RetrievalError> {
        if dimension == 0 {
            return Err(RetrievalError::InvalidConfig("embedding dimension must be positive".into()));
        }
        Ok(LocalEmbedder { dimension })
    }

    pub fn embed(&self, text: &str) -> Result<Vec<f32>, RetrievalError> {
        let mut v = vec![0.0f64; self.dimension];
        let tokens = tokenize(text);
        if tokens.is_empty() {
            return Err(RetrievalError::EmptyText);
        }
        for t in tokens {
            v[(hash_bytes(t.as_bytes()) % self.dimension as u64) as usize] += 1.0;
        }
        Ok(normalize(&v).expect("at least one token was counted"))
    }
}

/// HTTP JSON embedding service: `POST endpoint` with
/// `{"model": .., "texts": [..]}` answered by `{"vectors": [[..], ..]}`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RemoteEmbedder {
    pub endpoint: String,
    pub model: String,
    pub api_key: Option<String>,
    pub timeout: Duration,
    pub max_retries: u32,
    pub retry_backoff: Duration,
}

#[derive(Serialize)]
struct RemoteRequest<'a> {
    model: &'a str,
    texts: &'a [&'a str],
}

#[derive(Deserialize)]
struct RemoteResponse {
    vectors: Vec<Vec<f64>>,
}

impl RemoteEmbedder {
    pub fn new(endpoint: impl Into<String>, model: impl Into<String>) -> Self {
        RemoteEmbedder {
            endpoint: endpoint.into(),
            model: model.into(),
            api_key: std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty()),
            timeout: Duration::from_secs(30),
            max_retries: 3,
            retry_backoff: Duration::from_millis(250),
        }
    }

    fn request_once(&self, agent: &ureq::Agent, texts: &[&str]) -> Result<RemoteResponse, String> {
        let mut req = agent.post(&self.endpoint);
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", format!("Bearer {key}"));
        }
        let mut resp = req
            .send_json(RemoteRequest {
                model: &self.model,
                texts,
            })
            .map_err(|e| e.to_string())?;
        resp.body_mut().read_json::<RemoteResponse>().map_err(|e| e.to_string())
    }

    pub fn embed_batch(&self, texts: &[&str]) -> Result<Vec<Vec<f32>>, RetrievalError> {
        if texts.iter().any(|t| t.trim().is_empty()) {
            return Err(RetrievalError::EmptyText);
        }
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(self.timeout))
            .build()
            .into();
        let mut last_error = String::new();
        for attempt in 0..=self.max_retries {
            if attempt > 0 {
                std::thread::sleep(self.retry_backoff * 2u32.saturating_pow(attempt - 1));
            }
            match self.request_once(&agent, texts) {
                Ok(resp) => return self.check_response(resp, texts.len()),
                Err(e) => last_error = e,
            }
        }
        Err(RetrievalError::RemoteUnavailable(format!(
            "{} after {} attempts: {last_error}",
            self.endpoint,
            self.max_retries + 1
        )))
    }

    fn check_response(&self, resp: RemoteResponse, expected: usize) -> Result<Vec<Vec<f32>>, RetrievalError> {
        if resp.vectors.len() != expected {
            return Err(RetrievalError::RemoteUnavailable(format!(
                "service returned {} vectors for {expected} texts",
                resp.vectors.len()
            )));
        }
        let dim = resp.vectors.first().map_or(0, Vec::len);
        resp.vectors
            .iter()
            .map(|v| {
                if v.len() != dim {
                    return Err(RetrievalError::DimensionMismatch {
                        expected: dim,
                        found: v.len(),
                    });
                }
                normalize(v).ok_or_else(|| RetrievalError::RemoteUnavailable("service returned a zero or non-finite vector".into()))
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Embedder {
    Local(LocalEmbedder),
    Remote(RemoteEmbedder),
}

impl Default for Embedder {
    fn default() -> Self {
        Embedder::Local(LocalEmbedder::default())
    }
}

impl Embedder {
    pub fn embed_batch(&self, texts: &[&str]) -> Result<Vec<Vec<f32>>, RetrievalError> {
        match self {
            Embedder::Local(e) => texts.iter().map(|t| e.embed(t)).collect(),
            Embedder::Remote(e) => e.embed_batch(texts),
        }
    }

    /// `dimension` is the length of the vectors this embedder produced.
    pub fn descriptor(&self, dimension: usize) -> EmbedderDescriptor {
        match self {
            Embedder::Local(e) => EmbedderDescriptor::LocalHash {
                dimension: e.dimension,
                hashing: LOCAL_HASHING.to_string(),
            },
            Embedder::Remote(e) => EmbedderDescriptor::Remote {
                endpoint: e.endpoint.clone(),
                model: e.model.clone(),
                dimension,
            },
        }
    }

    /// Recreates the embedder an index was built with. Remote embedders pick
    /// up the API key from the environment.
    pub fn from_descriptor(d: &EmbedderDescriptor) -> Result<Embedder, RetrievalError> {
        match d {
            EmbedderDescriptor::LocalHash { dimension, hashing } => {
                if hashing != LOCAL_HASHING {
                    return Err(RetrievalError::InvalidIndex(format!("unknown hashing scheme {hashing:?}")));
                }
                Ok(Embedder::Local(LocalEmbedder::new(*dimension)?))
            }
            EmbedderDescriptor::Remote { endpoint, model, .. } => Ok(Embedder::Remote(RemoteEmbedder::new(endpoint, model))),
        }
    }
}

/// Unit-length embedding of one caption.
pub fn embed_caption(text: &str, embedder: &Embedder) -> Result<Vec<f32>, RetrievalError> {
    Ok(embedder.embed_batch(&[text])?.pop().expect("one vector per text"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn norm(v: &[f32]) -> f64 {
        v.iter().map(|&x| (x as f64) * (x as f64)).sum::<f64>().sqrt()
    }

    #[test]
    fn bag_of_words() {
        let e = Embedder::default();
        let a = embed_caption("a flat plate", &e).unwrap();
        assert_eq!(a, embed_caption("flat plate a", &e).unwrap());
        assert_eq!(a, embed_caption("A  FLAT, plate!", &e).unwrap());
        assert_eq!(a.len(), 512);
        assert!((norm(&a) - 1.0).abs() < 1e-6);
        assert_ne!(a, embed_caption("a round plate", &e).unwrap());
    }

    #[test]
    fn empty_text() {
        assert_eq!(embed_caption("  ,.; ", &Embedder::default()), Err(RetrievalError::EmptyText));
    }

    #[test]
    fn tokens() {
        assert_eq!(tokenize("M6 bolt-hole, 12mm"), vec!["m6", "bolt", "hole", "12mm"]);
    }
}
