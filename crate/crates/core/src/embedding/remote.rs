//! Embedding provider backed by an OpenAI-compatible `/embeddings` endpoint.

use serde_json::{json, Value};

use crate::net::{with_retries, RetryPolicy};

use super::{EmbedError, EmbeddingProvider, EmbeddingVector};

pub struct RemoteEmbedder {
    client: reqwest::blocking::Client,
    base_url: String,
    api_key: String,
    model: String,
    dimension: usize,
    retry: RetryPolicy,
    id: String,
}

impl RemoteEmbedder {
    /// `dimension` must match what the remote model emits; a mismatch is
    /// surfaced on the first call rather than poisoning the index.
    pub fn new(base_url: &str, api_key: &str, model: &str, dimension: usize) -> RemoteEmbedder {
        RemoteEmbedder {
            client: reqwest::blocking::Client::new(),
            base_url: base_url.trim_end_matches('/').to_string(),
            api_key: api_key.to_string(),
            model: model.to_string(),
            dimension,
            retry: RetryPolicy::default(),
            id: format!("remote:{model}"),
        }
    }

    pub fn request_body(&self, text: &str) -> Value {
        json!({ "model": self.model, "input": text })
    }

    pub fn parse_response(&self, body: &Value) -> Result<Vec<f64>, EmbedError> {
        let values: Vec<f64> = body
            .pointer("/data/0/embedding")
            .and_then(Value::as_array)
            .map(|a| a.iter().filter_map(Value::as_f64).collect())
            .unwrap_or_default();
        if values.len() != self.dimension {
            return Err(EmbedError::DimensionMismatch {
                expected: self.dimension,
                got: values.len(),
            });
        }
        Ok(values)
    }
}

impl EmbeddingProvider for RemoteEmbedder {
    fn id(&self) -> &str {
        &self.id
    }

    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector, EmbedError> {
        if text.trim().is_empty() {
            return Ok(EmbeddingVector { values: vec![0.0; self.dimension], is_zero: true });
        }
        let url = format!("{}/embeddings", self.base_url);
        let body = self.request_body(text);
        let value = with_retries(&self.retry, || {
            let response = self
                .client
                .post(&url)
                .bearer_auth(&self.api_key)
                .json(&body)
                .send()
                .map_err(|e| (e.to_string(), None))?;
            let status = response.status().as_u16();
            if status != 200 {
                let text = response.text().unwrap_or_default();
                return Err((format!("status {status}: {text}"), Some(status)));
            }
            response.json::<Value>().map_err(|e| (e.to_string(), None))
        })
        .map_err(|(attempts, message)| EmbedError::Transport { attempts, message })?;
        Ok(EmbeddingVector::normalized(self.parse_response(&value)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn request_body_shape() {
        let e = RemoteEmbedder::new("https://api.example.com/v1", "k", "text-embedding-3-small", 4);
        let body = e.request_body("hello");
        assert_eq!(body["model"], "text-embedding-3-small");
        assert_eq!(body["input"], "hello");
    }

    #[test]
    fn response_parsing_and_dimension_check() {
        let e = RemoteEmbedder::new("https://api.example.com/v1", "k", "m", 3);
        let good = json!({"data": [{"embedding": [3.0, 0.0, 4.0]}]});
        assert_eq!(e.parse_response(&good).unwrap(), vec![3.0, 0.0, 4.0]);
        let bad = json!({"data": [{"embedding": [1.0]}]});
        assert!(matches!(
            e.parse_response(&bad),
            Err(EmbedError::DimensionMismatch { expected: 3, got: 1 })
        ));
    }
}
