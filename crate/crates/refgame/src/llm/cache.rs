//! Disk cache for completion responses, keyed by request content hash.
//!
//! One file per request: `{sha256(request)}.json` holding the request and
//! its response. With an inner transport the cache is write-through; without
//! one it replays recorded fixtures and treats any miss as an error. Writes
//! go through a temp file and rename, so concurrent readers always see
//! complete entries.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use super::http::Transport;
use super::LlmError;

#[derive(Serialize, Deserialize)]
struct CacheEntry {
    request: Value,
    response: Value,
}

pub struct CachingTransport {
    dir: PathBuf,
    inner: Option<Box<dyn Transport>>,
}

impl CachingTransport {
    pub fn new(dir: PathBuf, inner: Option<Box<dyn Transport>>) -> Result<Self, LlmError> {
        fs::create_dir_all(&dir)?;
        Ok(Self { dir, inner })
    }

    /// Content hash of the request body. serde_json maps serialize with
    /// sorted keys, so equal requests always hash equally.
    pub fn request_key(body: &Value) -> String {
        let mut hasher = Sha256::new();
        hasher.update(body.to_string().as_bytes());
        format!("{:x}", hasher.finalize())
    }

    /// Records one request/response pair; used to build replay fixtures.
    pub fn store(dir: &Path, request: &Value, response: &Value) -> Result<PathBuf, LlmError> {
        fs::create_dir_all(dir)?;
        let key = Self::request_key(request);
        let path = dir.join(format!("{key}.json"));
        let entry = CacheEntry {
            request: request.clone(),
            response: response.clone(),
        };
        let tmp = dir.join(format!(".tmp-{key}-{}", std::process::id()));
        fs::write(
            &tmp,
            serde_json::to_vec_pretty(&entry).expect("serializable entry"),
        )?;
        fs::rename(&tmp, &path)?;
        Ok(path)
    }

    fn lookup(&self, key: &str) -> Result<Option<Value>, LlmError> {
        let path = self.dir.join(format!("{key}.json"));
        if !path.exists() {
            return Ok(None);
        }
        let bytes = fs::read(&path)?;
        let entry: CacheEntry = serde_json::from_slice(&bytes).map_err(|e| LlmError::Protocol {
            message: format!("corrupt cache entry {}: {e}", path.display()),
        })?;
        Ok(Some(entry.response))
    }
}

impl Transport for CachingTransport {
    fn post_completions(&self, body: &Value) -> Result<Value, LlmError> {
        let key = Self::request_key(body);
        if let Some(response) = self.lookup(&key)? {
            return Ok(response);
        }
        match &self.inner {
            None => Err(LlmError::Protocol {
                message: format!(
                    "no recorded response for request {key} (replay mode; re-run with a live \
                     endpoint to record it)"
                ),
            }),
            Some(transport) => {
                let response = transport.post_completions(body)?;
                Self::store(&self.dir, body, &response)?;
                Ok(response)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::sync::Arc;

    struct CountingTransport {
        calls: Arc<AtomicUsize>,
    }

    impl Transport for CountingTransport {
        fn post_completions(&self, body: &Value) -> Result<Value, LlmError> {
            self.calls.fetch_add(1, Ordering::SeqCst);
            Ok(json!({"echo": body["prompt"]}))
        }
    }

    #[test]
    fn second_request_is_served_from_disk() {
        let dir = tempfile::tempdir().unwrap();
        let calls = Arc::new(AtomicUsize::new(0));
        let cache = CachingTransport::new(
            dir.path().to_path_buf(),
            Some(Box::new(CountingTransport {
                calls: Arc::clone(&calls),
            })),
        )
        .unwrap();
        let body = json!({"prompt": "p", "model": "m"});
        let first = cache.post_completions(&body).unwrap();
        let second = cache.post_completions(&body).unwrap();
        assert_eq!(first, second);
        assert_eq!(calls.load(Ordering::SeqCst), 1);
    }

    #[test]
    fn replay_mode_errors_on_miss_and_serves_recorded_entries() {
        let dir = tempfile::tempdir().unwrap();
        let request = json!({"prompt": "recorded", "model": "m"});
        let response = json!({"choices": [{"text": "hi"}]});
        CachingTransport::store(dir.path(), &request, &response).unwrap();

        let replay = CachingTransport::new(dir.path().to_path_buf(), None).unwrap();
        assert_eq!(replay.post_completions(&request).unwrap(), response);
        match replay.post_completions(&json!({"prompt": "other", "model": "m"})) {
            Err(LlmError::Protocol { message }) => assert!(message.contains("replay mode")),
            other => panic!("expected replay miss, got {other:?}"),
        }
    }

    #[test]
    fn request_key_ignores_field_order() {
        let a: Value = serde_json::from_str(r#"{"a": 1, "b": 2}"#).unwrap();
        let b: Value = serde_json::from_str(r#"{"b": 2, "a": 1}"#).unwrap();
        assert_eq!(
            CachingTransport::request_key(&a),
            CachingTransport::request_key(&b)
        );
    }
}
