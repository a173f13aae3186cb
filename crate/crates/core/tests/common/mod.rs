//! Minimal HTTP/1.1 stub standing in for a chat-completion judge.

#![allow(dead_code)]

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread;

#[derive(Debug, Clone)]
pub struct Recorded {
    pub authorization: Option<String>,
    pub path: String,
    pub body: String,
}

pub struct Stub {
    pub endpoint: String,
    hits: Arc<AtomicUsize>,
    requests: Arc<Mutex<Vec<Recorded>>>,
}

impl Stub {
    pub fn hits(&self) -> usize {
        self.hits.load(Ordering::SeqCst)
    }

    pub fn requests(&self) -> Vec<Recorded> {
        self.requests.lock().unwrap().clone()
    }
}

/// Wraps assistant text in a chat-completion envelope.
pub fn chat_reply(content: &str) -> (u16, String) {
    let body = serde_json::json!({
        "choices": [{"index": 0, "message": {"role": "assistant", "content": content}}]
    });
    (200, body.to_string())
}

/// Serves `script` in order, one response per request; the last entry
/// repeats once the script runs out. `script_fn`, when given, overrides
/// the script and sees the request body.
pub fn spawn(script: Vec<(u16, String)>) -> Stub {
    spawn_with(move |n, _| script[n.min(script.len() - 1)].clone())
}

pub fn spawn_with<F>(respond: F) -> Stub
where
    F: Fn(usize, &str) -> (u16, String) + Send + Sync + 'static,
{
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let endpoint = format!("http://{}/v1", listener.local_addr().unwrap());
    let hits = Arc::new(AtomicUsize::new(0));
    let requests = Arc::new(Mutex::new(Vec::new()));
    let respond = Arc::new(respond);
    let (h, r) = (hits.clone(), requests.clone());
    thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(stream) = stream else { continue };
            let (h, r, respond) = (h.clone(), r.clone(), respond.clone());
            thread::spawn(move || serve(stream, &h, &r, respond.as_ref()));
        }
    });
    Stub { endpoint, hits, requests }
}

fn serve<F>(stream: TcpStream, hits: &AtomicUsize, log: &Mutex<Vec<Recorded>>, respond: &F)
where
    F: Fn(usize, &str) -> (u16, String) + ?Sized,
{
    let mut reader = BufReader::new(stream.try_clone().unwrap());
    let mut line = String::new();
    if reader.read_line(&mut line).unwrap_or(0) == 0 {
        return;
    }
    let path = line.split_whitespace().nth(1).unwrap_or("").to_string();
    let mut len = 0usize;
    let mut authorization = None;
    loop {
        let mut h = String::new();
        reader.read_line(&mut h).unwrap();
        let h = h.trim_end();
        if h.is_empty() {
            break;
        }
        if let Some((k, v)) = h.split_once(':') {
            match k.trim().to_ascii_lowercase().as_str() {
                "content-length" => len = v.trim().parse().unwrap(),
                "authorization" => authorization = Some(v.trim().to_string()),
                _ => {}
            }
        }
    }
    let mut body = vec![0u8; len];
    reader.read_exact(&mut body).unwrap();
    let body = String::from_utf8(body).unwrap();
    let n = hits.fetch_add(1, Ordering::SeqCst);
    let (status, reply) = respond(n, &body);
    log.lock().unwrap().push(Recorded { authorization, path, body });
    let mut stream = stream;
    let head = format!(
        "HTTP/1.1 {status} X\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n",
        reply.len()
    );
    let _ = stream.write_all(head.as_bytes());
    let _ = stream.write_all(reply.as_bytes());
    let _ = stream.flush();
}
