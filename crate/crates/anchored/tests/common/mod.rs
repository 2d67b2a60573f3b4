#![allow(dead_code)]

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::{Arc, Mutex};

use anchored::core::adapters::{
    DenoiseRequest, Denoiser, DepthEstimator, DepthRequest, DescribeRequest, Describer, InpaintRequest, Inpainter,
    StubDenoiser, StubDepthEstimator, StubDescriber, StubInpainter,
};
use anchored::wire::{self, *};
use base64::Engine;

pub type Handler = dyn Fn(&str, &str) -> (u16, String) + Send + Sync;

/// Minimal HTTP/1.1 server on a loopback port; one request per connection.
pub struct MockServer {
    pub url: String,
    pub requests: Arc<Mutex<Vec<(String, String)>>>,
}

impl MockServer {
    pub fn paths(&self) -> Vec<String> {
        self.requests.lock().unwrap().iter().map(|(p, _)| p.clone()).collect()
    }
}

pub fn spawn(handler: Box<Handler>) -> MockServer {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}", listener.local_addr().unwrap());
    let requests = Arc::new(Mutex::new(Vec::new()));
    let log = requests.clone();
    std::thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(mut stream) = stream else { continue };
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut line = String::new();
            if reader.read_line(&mut line).is_err() {
                continue;
            }
            let path = line.split_whitespace().nth(1).unwrap_or("").to_string();
            let mut len = 0;
            loop {
                let mut h = String::new();
                reader.read_line(&mut h).unwrap();
                let h = h.trim_end();
                if h.is_empty() {
                    break;
                }
                if let Some((k, v)) = h.split_once(':') {
                    if k.eq_ignore_ascii_case("content-length") {
                        len = v.trim().parse().unwrap();
                    }
                }
            }
            let mut body = vec![0; len];
            reader.read_exact(&mut body).unwrap();
            let body = String::from_utf8(body).unwrap();
            let (status, reply) = handler(&path, &body);
            log.lock().unwrap().push((path, body));
            let head = format!(
                "HTTP/1.1 {status} X\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n",
                reply.len()
            );
            let _ = stream.write_all(head.as_bytes());
            let _ = stream.write_all(reply.as_bytes());
        }
    });
    MockServer { url, requests }
}

fn b64(bytes: Vec<u8>) -> String {
    base64::engine::general_purpose::STANDARD.encode(bytes)
}

fn bad(msg: String) -> (u16, String) {
    (400, serde_json::to_string(&ErrorBody { error: msg }).unwrap())
}

/// Serves every endpoint with the in-process stubs, decoding and encoding
/// through the wire schemas.
pub fn stub_service(path: &str, body: &str) -> (u16, String) {
    let r = (|| -> Result<String, String> {
        Ok(match path {
            "/inpaint" => {
                let b: InpaintBody = serde_json::from_str(body).map_err(|e| e.to_string())?;
                let image = wire::rgb_from_b64("image", &b.image)?;
                let depth = wire::depth_from_b64("depth", &b.depth)?;
                let mask = anchored::imageio::decode_mask(&base64::engine::general_purpose::STANDARD.decode(&b.mask).unwrap())?;
                let req = InpaintRequest { image: &image, depth: &depth, generate: &mask, prompt: &b.prompt, gamma: b.gamma, seed: b.seed };
                let out = StubInpainter.inpaint(&req).map_err(|e| e.to_string())?;
                serde_json::to_string(&InpaintResponse { image: wire::b64_png_rgb(&out) }).unwrap()
            }
            "/depth" => {
                let b: DepthBody = serde_json::from_str(body).map_err(|e| e.to_string())?;
                let image = wire::rgb_from_b64("image", &b.image)?;
                let d = StubDepthEstimator::default()
                    .estimate_depth(&DepthRequest { image: &image, reference: None })
                    .map_err(|e| e.to_string())?;
                serde_json::to_string(&DepthResponse { depth: b64(anchored::imageio::encode_depth_mm(&d)) }).unwrap()
            }
            "/describe" => {
                let b: DescribeBody = serde_json::from_str(body).map_err(|e| e.to_string())?;
                let image = wire::rgb_from_b64("image", &b.image)?;
                let text = StubDescriber
                    .describe(&DescribeRequest { image: &image, question: &b.question })
                    .map_err(|e| e.to_string())?;
                serde_json::to_string(&DescribeResponse { text }).unwrap()
            }
            "/denoise" => {
                let b: DenoiseBody = serde_json::from_str(body).map_err(|e| e.to_string())?;
                let x = wire::decode_tensor("x", &b.x)?;
                let req = DenoiseRequest { x: &x, t: b.t, total: b.total, prompt: &b.prompt, seed: b.seed, reference: None };
                let mu = StubDenoiser::default().denoise(&req).map_err(|e| e.to_string())?;
                serde_json::to_string(&DenoiseResponse { mu: wire::encode_tensor(&mu) }).unwrap()
            }
            other => return Err(format!("no route {other}")),
        })
    })();
    match r {
        Ok(body) => (200, body),
        Err(m) if m.starts_with("no route") => (404, serde_json::to_string(&ErrorBody { error: m }).unwrap()),
        Err(m) => bad(m),
    }
}
