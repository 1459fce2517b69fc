use std::collections::BTreeMap;
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Duration;

use log::warn;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{summarize_template, LocationDescription, SummaryContext};
use crate::error::{Error, Result};
use crate::io;

pub const URL_ENV: &str = "GEOREASON_LLM_URL";
pub const KEY_ENV: &str = "GEOREASON_LLM_KEY";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RemoteConfig {
    pub url: String,
    pub key: Option<String>,
    pub timeout: Duration,
}

impl RemoteConfig {
    /// Reads the endpoint from the environment; `None` if no URL is set.
    pub fn from_env() -> Option<Self> {
        let url = std::env::var(URL_ENV).ok().filter(|u| !u.is_empty())?;
        Some(RemoteConfig {
            url,
            key: std::env::var(KEY_ENV).ok().filter(|k| !k.is_empty()),
            timeout: Duration::from_secs(30),
        })
    }
}

/// Where a description came from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SummarySource {
    Remote,
    Cache,
    Fallback(String),
}

/// Fixed prompt listing the neighborhood and the linguistic sentences.
pub fn render_prompt(ctx: &SummaryContext) -> String {
    let p = &ctx.pseudo;
    let mut out = format!(
        "Write a concise location description of \"{}\" that mentions it by name.\n\nNearby places:\n",
        p.anchor_name
    );
    for (name, d) in p.neighbor_names.iter().zip(&p.distances_km) {
        out.push_str(&format!("- {name} ({d:.2} km)\n"));
    }
    out.push_str("\nKnown facts:\n");
    for s in &ctx.linguistic_sentences {
        out.push_str(&format!("- {}\n", s.trim()));
    }
    out
}

#[derive(Debug, Serialize, Deserialize)]
struct CacheLine {
    key: String,
    text: String,
}

/// Append-only on-disk cache of remote responses.
#[derive(Debug)]
pub struct SummaryCache {
    path: PathBuf,
    entries: BTreeMap<String, String>,
}

impl SummaryCache {
    pub fn open(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join("summaries.jsonl");
        let mut entries = BTreeMap::new();
        if path.exists() {
            for (_, line) in io::read_jsonl::<CacheLine>(&path)? {
                entries.insert(line.key, line.text);
            }
        }
        Ok(SummaryCache { path, entries })
    }

    pub fn key(anchor_id: &str, prompt: &str) -> String {
        format!("{anchor_id}:{}", hex::encode(Sha256::digest(prompt.as_bytes())))
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn insert(&mut self, key: String, text: String) -> Result<()> {
        let mut line = serde_json::to_vec(&CacheLine {
            key: key.clone(),
            text: text.clone(),
        })?;
        line.push(b'\n');
        let mut f = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&self.path)
            .map_err(|e| Error::io(&self.path, e))?;
        f.write_all(&line).map_err(|e| Error::io(&self.path, e))?;
        self.entries.insert(key, text);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[derive(Deserialize)]
struct RemoteResponse {
    text: String,
}

/// Summarizer backed by an HTTP text-generation endpoint, falling back to
/// the template engine on any failure.
#[derive(Debug)]
pub struct RemoteSummarizer {
    config: Option<RemoteConfig>,
    cache: Option<SummaryCache>,
    max_sentences: usize,
}

impl RemoteSummarizer {
    pub fn new(config: Option<RemoteConfig>, cache: Option<SummaryCache>, max_sentences: usize) -> Self {
        RemoteSummarizer {
            config,
            cache,
            max_sentences,
        }
    }

    pub fn summarize(&mut self, ctx: &SummaryContext) -> Result<(LocationDescription, SummarySource)> {
        ctx.validate()?;
        let prompt = render_prompt(ctx);
        let key = SummaryCache::key(&ctx.pseudo.anchor_id, &prompt);
        if let Some(text) = self.cache.as_ref().and_then(|c| c.get(&key)) {
            if let Ok(d) = LocationDescription::locate(&ctx.pseudo.anchor_id, &ctx.pseudo.anchor_name, text.to_string()) {
                return Ok((d, SummarySource::Cache));
            }
        }
        let reason = match self.request(&prompt) {
            Ok(text) => match LocationDescription::locate(&ctx.pseudo.anchor_id, &ctx.pseudo.anchor_name, text.clone()) {
                Ok(d) => {
                    if let Some(cache) = self.cache.as_mut() {
                        cache.insert(key, text)?;
                    }
                    return Ok((d, SummarySource::Remote));
                }
                Err(_) => "response does not mention the anchor".to_string(),
            },
            Err(e) => e,
        };
        warn!(
            "remote summary for {} fell back to template: {reason}",
            ctx.pseudo.anchor_id
        );
        let d = summarize_template(ctx, self.max_sentences)?;
        Ok((d, SummarySource::Fallback(reason)))
    }

    fn request(&self, prompt: &str) -> std::result::Result<String, String> {
        let cfg = self.config.as_ref().ok_or_else(|| "no endpoint configured".to_string())?;
        let mut req = ureq::post(&cfg.url).timeout(cfg.timeout);
        if let Some(key) = &cfg.key {
            req = req.set("Authorization", &format!("Bearer {key}"));
        }
        let resp = req
            .send_json(serde_json::json!({ "prompt": prompt }))
            .map_err(|e| e.to_string())?;
        let body: RemoteResponse = resp.into_json().map_err(|e| e.to_string())?;
        Ok(body.text)
    }
}
