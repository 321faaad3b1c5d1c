#![allow(dead_code)]

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::{Arc, Mutex};
use std::thread;

/// (method, path, body) -> (status, body)
pub type Handler = dyn Fn(&str, &str, &str) -> (u16, String) + Send + Sync;

/// Minimal HTTP/1.1 server answering one request per connection.
pub struct MockServer {
    pub addr: SocketAddr,
    pub requests: Arc<Mutex<Vec<(String, String)>>>,
}

impl MockServer {
    pub fn start(handler: impl Fn(&str, &str, &str) -> (u16, String) + Send + Sync + 'static) -> Self {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let requests = Arc::new(Mutex::new(Vec::new()));
        let log = Arc::clone(&requests);
        let handler: Arc<Handler> = Arc::new(handler);
        thread::spawn(move || {
            for stream in listener.incoming() {
                let Ok(stream) = stream else { break };
                let log = Arc::clone(&log);
                let handler = Arc::clone(&handler);
                thread::spawn(move || serve(stream, &*handler, &log));
            }
        });
        MockServer { addr, requests }
    }

    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn paths(&self) -> Vec<String> {
        self.requests.lock().unwrap().iter().map(|(_, p)| p.clone()).collect()
    }
}

fn serve(stream: TcpStream, handler: &Handler, log: &Mutex<Vec<(String, String)>>) {
    let mut reader = BufReader::new(stream.try_clone().unwrap());
    let mut request_line = String::new();
    if reader.read_line(&mut request_line).is_err() {
        return;
    }
    let mut parts = request_line.split_whitespace();
    let method = parts.next().unwrap_or("").to_string();
    let path = parts.next().unwrap_or("").to_string();
    let mut content_length = 0;
    loop {
        let mut line = String::new();
        if reader.read_line(&mut line).unwrap_or(0) == 0 || line == "\r\n" {
            break;
        }
        if let Some((k, v)) = line.split_once(':') {
            if k.eq_ignore_ascii_case("content-length") {
                content_length = v.trim().parse().unwrap_or(0);
            }
        }
    }
    let mut body = vec![0; content_length];
    let _ = reader.read_exact(&mut body);
    let body = String::from_utf8_lossy(&body).into_owned();
    log.lock().unwrap().push((method.clone(), path.clone()));
    let (status, answer) = handler(&method, &path, &body);
    let mut stream = stream;
    let _ = write!(
        stream,
        "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{answer}",
        answer.len()
    );
}

/// Deterministic pseudo-encoder: a unit vector derived from the bytes.
pub fn fake_vector(input: &str, dim: usize) -> Vec<f64> {
    let mut h: u64 = 1469598103934665603;
    for b in input.bytes() {
        h = (h ^ u64::from(b)).wrapping_mul(1099511628211);
    }
    let raw: Vec<f64> = (0..dim)
        .map(|k| {
            h = h.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407 + k as u64);
            ((h >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        })
        .collect();
    let norm = raw.iter().map(|x| x * x).sum::<f64>().sqrt();
    raw.into_iter().map(|x| x / norm).collect()
}

/// Handler of a well-behaved service of the given dim.
pub fn encoder(dim: usize) -> impl Fn(&str, &str, &str) -> (u16, String) + Send + Sync + 'static {
    move |method, path, body| match (method, path) {
        ("GET", "/healthz") => (200, format!(r#"{{"status":"ok","dim":{dim},"model":"mock"}}"#)),
        ("POST", "/v1/embed_text") => {
            let req: serde_json::Value = match serde_json::from_str(body) {
                Ok(v) => v,
                Err(_) => return (400, r#"{"error":"bad json"}"#.into()),
            };
            let vectors: Vec<Vec<f64>> = req["texts"]
                .as_array()
                .unwrap()
                .iter()
                .map(|t| fake_vector(t.as_str().unwrap(), dim))
                .collect();
            (200, serde_json::json!({ "dim": dim, "vectors": vectors }).to_string())
        }
        ("POST", "/v1/embed_image") => {
            let req: serde_json::Value = serde_json::from_str(body).unwrap();
            let b64 = req["image_b64"].as_str().unwrap_or("");
            (200, serde_json::json!({ "dim": dim, "vectors": [fake_vector(b64, dim)] }).to_string())
        }
        _ => (404, r#"{"error":"not found"}"#.into()),
    }
}
