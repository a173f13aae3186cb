//! Client for an OpenAI-compatible vision-chat endpoint acting as judge.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Duration;

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine;
use image::RgbaImage;
use serde_json::{json, Value};

use super::{compare_heuristic, judge_prompt, parse_decision, truncate, Judge, JudgeDecision, JudgeError};
use crate::layout::Layout;
use crate::render::{encode_png, render, AssetResolver, RenderMode, RenderStyle};

/// Environment variable holding the bearer token.
pub const API_KEY_ENV: &str = "JUDGE_API_KEY";

#[derive(Debug, Clone, PartialEq)]
pub struct JudgeConfig {
    /// Base URL; requests go to `{endpoint}/chat/completions`.
    pub endpoint: String,
    pub model_name: String,
    pub timeout: Duration,
    /// Extra attempts after the first one fails.
    pub max_retries: u32,
    pub temperature: f64,
    pub swap_and_vote: bool,
    /// Sleep before retry `n` is `retry_backoff * 2^(n-1)`.
    pub retry_backoff: Duration,
}

impl Default for JudgeConfig {
    fn default() -> Self {
        Self {
            endpoint: "http://127.0.0.1:8000/v1".to_string(),
            model_name: "judge".to_string(),
            timeout: Duration::from_secs(60),
            max_retries: 3,
            temperature: 0.0,
            swap_and_vote: false,
            retry_backoff: Duration::from_millis(500),
        }
    }
}

fn data_url(png: &[u8]) -> String {
    format!("data:image/png;base64,{}", BASE64.encode(png))
}

/// Chat-completion request: the judge prompt followed by both images in order.
pub fn build_request_body(cfg: &JudgeConfig, png1: &[u8], png2: &[u8]) -> Value {
    json!({
        "model": cfg.model_name,
        "temperature": cfg.temperature,
        "messages": [{
            "role": "user",
            "content": [
                {"type": "text", "text": judge_prompt()},
                {"type": "image_url", "image_url": {"url": data_url(png1)}},
                {"type": "image_url", "image_url": {"url": data_url(png2)}},
            ],
        }],
    })
}

/// `choices[0].message.content` when present, otherwise the raw body.
pub fn extract_content(body: &str) -> String {
    serde_json::from_str::<Value>(body)
        .ok()
        .and_then(|v| v.pointer("/choices/0/message/content").and_then(Value::as_str).map(str::to_string))
        .unwrap_or_else(|| body.to_string())
}

pub struct RemoteJudge {
    cfg: JudgeConfig,
    client: reqwest::blocking::Client,
    api_key: Option<String>,
    style: RenderStyle,
    assets: Arc<dyn AssetResolver>,
    requests: AtomicUsize,
}

impl std::fmt::Debug for RemoteJudge {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RemoteJudge")
            .field("cfg", &self.cfg)
            .field("api_key", &self.api_key.as_ref().map(|_| "<redacted>"))
            .field("style", &self.style)
            .finish()
    }
}

impl RemoteJudge {
    /// Reads the bearer token from the environment.
    pub fn new(cfg: JudgeConfig, style: RenderStyle, assets: Arc<dyn AssetResolver>) -> Result<Self, JudgeError> {
        if cfg.endpoint.is_empty() {
            return Err(JudgeError::Config("empty endpoint".into()));
        }
        let client = reqwest::blocking::Client::builder()
            .timeout(cfg.timeout)
            .build()
            .map_err(|e| JudgeError::Config(e.to_string()))?;
        let api_key = std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty());
        Ok(Self { cfg, client, api_key, style, assets, requests: AtomicUsize::new(0) })
    }

    pub fn with_api_key(mut self, key: Option<String>) -> Self {
        self.api_key = key;
        self
    }

    pub fn config(&self) -> &JudgeConfig {
        &self.cfg
    }

    /// HTTP requests issued so far, including failed attempts.
    pub fn requests(&self) -> usize {
        self.requests.load(Ordering::SeqCst)
    }

    fn url(&self) -> String {
        format!("{}/chat/completions", self.cfg.endpoint.trim_end_matches('/'))
    }

    fn attempt(&self, body: &str) -> Result<(u8, String), String> {
        self.requests.fetch_add(1, Ordering::SeqCst);
        let mut req = self.client.post(self.url()).header("content-type", "application/json").body(body.to_string());
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| format!("transport: {e}"))?;
        let status = resp.status();
        let text = resp.text().map_err(|e| format!("reading body: {e}"))?;
        if !status.is_success() {
            return Err(format!("HTTP {status}: {}", truncate(&text, 200)));
        }
        let content = extract_content(&text);
        let d = parse_decision(&content).map_err(|e| e.to_string())?;
        Ok((d, content))
    }

    /// One ordered query, retried on transport failures and unparsable verdicts.
    pub fn query(&self, png1: &[u8], png2: &[u8]) -> Result<(u8, String), JudgeError> {
        let body = build_request_body(&self.cfg, png1, png2).to_string();
        let attempts = self.cfg.max_retries + 1;
        let mut last = String::new();
        for n in 0..attempts {
            if n > 0 {
                let backoff = self.cfg.retry_backoff.saturating_mul(1u32 << (n - 1).min(16));
                std::thread::sleep(backoff);
            }
            match self.attempt(&body) {
                Ok(v) => return Ok(v),
                Err(e) => {
                    log::warn!("judge attempt {}/{attempts} failed: {e}", n + 1);
                    last = e;
                }
            }
        }
        Err(JudgeError::Unavailable { attempts, last })
    }

    /// Judges two rendered images. With swap-and-vote a second query runs in
    /// reversed order; if the two verdicts disagree, `fallback` decides.
    pub fn compare_images<F>(&self, img1: &RgbaImage, img2: &RgbaImage, fallback: F) -> Result<JudgeDecision, JudgeError>
    where
        F: FnOnce() -> Result<u8, JudgeError>,
    {
        if img1.width() == 0 || img1.height() == 0 || img2.width() == 0 || img2.height() == 0 {
            return Err(JudgeError::Config("empty image".into()));
        }
        let (png1, png2) = (encode_png(img1), encode_png(img2));
        let (d, raw) = self.query(&png1, &png2)?;
        if !self.cfg.swap_and_vote {
            return Ok(JudgeDecision { d, judge_id: self.id(), raw_response: Some(raw), swapped: false });
        }
        let (d_rev, raw_rev) = self.query(&png2, &png1)?;
        let raw_both = format!("{raw}\n---swapped---\n{raw_rev}");
        let d = if d_rev == 3 - d {
            d
        } else {
            log::info!("swapped verdicts disagree; using the fallback judge");
            fallback()?
        };
        Ok(JudgeDecision { d, judge_id: self.id(), raw_response: Some(raw_both), swapped: true })
    }
}

impl Judge for RemoteJudge {
    fn id(&self) -> String {
        let mode = match self.style.mode {
            RenderMode::Boxes => "boxes",
            RenderMode::Composite => "composite",
        };
        let swap = if self.cfg.swap_and_vote { "+swap" } else { "" };
        format!("remote:{}:{mode}{swap}", self.cfg.model_name)
    }

    fn compare(&self, g1: &Layout, g2: &Layout) -> Result<JudgeDecision, JudgeError> {
        let img1 = render(g1, &self.style, self.assets.as_ref())?;
        let img2 = render(g2, &self.style, self.assets.as_ref())?;
        self.compare_images(&img1, &img2, || Ok(compare_heuristic(g1, g2)?.d))
    }
}
