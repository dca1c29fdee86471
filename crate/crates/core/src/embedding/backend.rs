use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Deserialize;
use sha2::{Digest, Sha256};
use std::time::Duration;

use super::{EmbedError, EmbeddingVec};
use crate::retry::RetryPolicy;

/// Text-to-vector backend. Implementations must tolerate concurrent calls.
pub trait Embedder: Send + Sync {
    fn dim(&self) -> usize;

    /// Stable identity of the backend and its settings, used to key caches.
    fn fingerprint(&self) -> String;

    fn embed(&self, text: &str) -> Result<EmbeddingVec, EmbedError>;

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<EmbeddingVec>, EmbedError> {
        texts.iter().map(|t| self.embed(t)).collect()
    }
}

impl<T: Embedder + ?Sized> Embedder for Box<T> {
    fn dim(&self) -> usize {
        (**self).dim()
    }

    fn fingerprint(&self) -> String {
        (**self).fingerprint()
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVec, EmbedError> {
        (**self).embed(text)
    }

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<EmbeddingVec>, EmbedError> {
        (**self).embed_batch(texts)
    }
}

fn require_text(text: &str) -> Result<(), EmbedError> {
    if text.trim().is_empty() {
        return Err(EmbedError::InvalidArgument("empty text".into()));
    }
    Ok(())
}

/// Deterministic embedder: each lowercase token seeds a Gaussian vector, the
/// token vectors are summed and the result scaled to unit length.
///
/// Texts that share tokens land close together, which is enough structure
/// for retrieval and for news-signal tests.
#[derive(Clone, Debug)]
pub struct MockEmbedder {
    dim: usize,
    seed: u64,
}

impl MockEmbedder {
    pub fn new(dim: usize, seed: u64) -> Self {
        assert!(dim > 0, "embedding dimension must be positive");
        Self { dim, seed }
    }

    fn token_vector(&self, token: &str, acc: &mut [f64]) {
        let mut h = Sha256::new();
        h.update(self.seed.to_le_bytes());
        h.update(token.as_bytes());
        let digest = h.finalize();
        let mut seed = [0u8; 32];
        seed.copy_from_slice(&digest);
        let mut rng = ChaCha8Rng::from_seed(seed);
        for a in acc.iter_mut() {
            let z: f64 = StandardNormal.sample(&mut rng);
            *a += z;
        }
    }
}

pub(crate) fn tokenize(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !(c.is_alphanumeric() || c == '#' || c == '_'))
        .filter(|t| !t.is_empty())
        .map(|t| t.to_lowercase())
}

impl Embedder for MockEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn fingerprint(&self) -> String {
        format!("mock:{}:{}", self.dim, self.seed)
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVec, EmbedError> {
        require_text(text)?;
        let mut acc = vec![0.0; self.dim];
        let mut any = false;
        for tok in tokenize(text) {
            self.token_vector(&tok, &mut acc);
            any = true;
        }
        if !any {
            self.token_vector(text.trim(), &mut acc);
        }
        let norm = acc.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            acc.iter_mut().for_each(|v| *v /= norm);
        }
        EmbeddingVec::new(acc)
    }
}

type EmbedFn = dyn Fn(&str) -> Result<Vec<f64>, String> + Send + Sync;

/// Hook for an in-process model: any closure mapping text to a vector.
pub struct LocalEmbedder {
    name: String,
    dim: usize,
    f: Box<EmbedFn>,
}

impl LocalEmbedder {
    pub fn new(
        name: impl Into<String>,
        dim: usize,
        f: impl Fn(&str) -> Result<Vec<f64>, String> + Send + Sync + 'static,
    ) -> Self {
        Self {
            name: name.into(),
            dim,
            f: Box::new(f),
        }
    }
}

impl Embedder for LocalEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn fingerprint(&self) -> String {
        format!("local:{}:{}", self.name, self.dim)
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVec, EmbedError> {
        require_text(text)?;
        let v = EmbeddingVec::new((self.f)(text).map_err(EmbedError::Protocol)?)?;
        v.check_dim(self.dim)?;
        Ok(v)
    }
}

#[derive(Deserialize)]
struct EmbeddingResponse {
    data: Vec<EmbeddingDatum>,
}

#[derive(Deserialize)]
struct EmbeddingDatum {
    embedding: Vec<f64>,
}

/// OpenAI-compatible embedding endpoint.
///
/// Sends `{"input": [texts], "model": ...}` and reads `data[i].embedding`.
pub struct HttpEmbedder {
    url: String,
    key: Option<String>,
    model: Option<String>,
    dim: usize,
    retry: RetryPolicy,
    client: reqwest::blocking::Client,
}

impl HttpEmbedder {
    /// Connect and probe the endpoint once to learn the embedding dimension.
    pub fn connect(
        url: impl Into<String>,
        key: Option<String>,
        model: Option<String>,
        retry: RetryPolicy,
    ) -> Result<Self, EmbedError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(120))
            .build()
            .map_err(|e| EmbedError::Transport {
                attempts: 0,
                msg: e.to_string(),
            })?;
        let mut this = Self {
            url: url.into(),
            key,
            model,
            dim: 0,
            retry,
            client,
        };
        let probe = this.request(&["dimension probe"])?;
        this.dim = probe[0].len();
        if this.dim == 0 {
            return Err(EmbedError::Protocol("endpoint returned empty vector".into()));
        }
        Ok(this)
    }

    /// Read `AAPM_EMB_URL` / `AAPM_EMB_KEY`; `None` when the URL is unset.
    pub fn from_env(model: Option<String>, retry: RetryPolicy) -> Option<Result<Self, EmbedError>> {
        let url = std::env::var("AAPM_EMB_URL").ok().filter(|u| !u.is_empty())?;
        let key = std::env::var("AAPM_EMB_KEY").ok().filter(|k| !k.is_empty());
        Some(Self::connect(url, key, model, retry))
    }

    fn request(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>, EmbedError> {
        let mut body = serde_json::json!({ "input": texts });
        if let Some(m) = &self.model {
            body["model"] = serde_json::Value::String(m.clone());
        }
        let outcome = self.retry.run(|| {
            let mut req = self.client.post(&self.url).json(&body);
            if let Some(k) = &self.key {
                req = req.bearer_auth(k);
            }
            let resp = req.send().map_err(|e| e.to_string())?;
            let status = resp.status();
            if status.is_server_error() || status.as_u16() == 429 {
                return Err(format!("HTTP {status}"));
            }
            Ok(resp)
        });
        let resp = outcome.map_err(|(attempts, msg)| EmbedError::Transport { attempts, msg })?;
        if !resp.status().is_success() {
            return Err(EmbedError::Protocol(format!("HTTP {}", resp.status())));
        }
        let parsed: EmbeddingResponse = resp.json().map_err(|e| EmbedError::Protocol(e.to_string()))?;
        if parsed.data.len() != texts.len() {
            return Err(EmbedError::Protocol(format!(
                "asked for {} embeddings, got {}",
                texts.len(),
                parsed.data.len()
            )));
        }
        Ok(parsed.data.into_iter().map(|d| d.embedding).collect())
    }
}

impl Embedder for HttpEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn fingerprint(&self) -> String {
        format!(
            "http:{}:{}:{}",
            self.url,
            self.model.as_deref().unwrap_or("-"),
            self.dim
        )
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVec, EmbedError> {
        Ok(self.embed_batch(&[text])?.remove(0))
    }

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<EmbeddingVec>, EmbedError> {
        for t in texts {
            require_text(t)?;
        }
        self.request(texts)?
            .into_iter()
            .map(|v| {
                let v = EmbeddingVec::new(v)?;
                v.check_dim(self.dim)?;
                Ok(v)
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mock_is_deterministic_and_unit_norm() {
        let e = MockEmbedder::new(16, 3);
        let a = e.embed("Fed raises rates").unwrap();
        let b = e.embed("Fed raises rates").unwrap();
        assert_eq!(a, b);
        assert!((a.norm() - 1.0).abs() < 1e-12);
        assert_eq!(a.dim(), 16);
    }

    #[test]
    fn mock_separates_different_texts() {
        let e = MockEmbedder::new(16, 3);
        let a = e.embed("inflation surges").unwrap();
        let b = e.embed("tech rally continues").unwrap();
        let cos = a.cosine(&b);
        assert!(cos < 1.0 - 1e-9, "cosine {cos}");
        // Shared tokens pull vectors together.
        let c = e.embed("inflation surges again").unwrap();
        assert!(a.cosine(&c) > cos);
    }

    #[test]
    fn empty_text_rejected() {
        let e = MockEmbedder::new(4, 0);
        assert!(matches!(e.embed(""), Err(EmbedError::InvalidArgument(_))));
        assert!(matches!(e.embed("   "), Err(EmbedError::InvalidArgument(_))));
    }

    #[test]
    fn local_hook_validates_dimension() {
        let e = LocalEmbedder::new("const", 3, |_| Ok(vec![1.0, 2.0]));
        assert!(matches!(e.embed("x"), Err(EmbedError::Dimension { .. })));
    }
}
