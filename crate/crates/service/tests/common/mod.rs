#![allow(dead_code)]

use std::time::Duration;

use futures::{SinkExt, StreamExt};
use handcue_core::config::Settings;
use handcue_core::corpus::{neutral_placement, place};
use handcue_core::gateway::RuleGesture;
use handcue_core::landmark::LandmarkFrame;
use handcue_service::{serve_on, AppState, Event};
use serde_json::Value;
use tokio::net::{TcpListener, TcpStream};
use tokio_tungstenite::tungstenite::Message;
use tokio_tungstenite::{connect_async, MaybeTlsStream, WebSocketStream};

pub type Ws = WebSocketStream<MaybeTlsStream<TcpStream>>;

pub const FRAME_US: u64 = 33_333;

/// One NDJSON record of `gesture` held still, wrist nudged by `dx`.
pub fn hand_line(gesture: RuleGesture, t_us: u64, confidence: f64, dx: f64) -> String {
    let mut p = neutral_placement(gesture, 0.2);
    p.wrist.0 += dx;
    LandmarkFrame::new(t_us, p.handedness, confidence, place(gesture, &p))
        .unwrap()
        .to_ndjson()
}

/// `n` frames of a held gesture starting at `t0`.
pub fn held(gesture: RuleGesture, t0: u64, n: usize) -> Vec<String> {
    (0..n)
        .map(|i| hand_line(gesture, t0 + i as u64 * FRAME_US, 0.9, 0.0))
        .collect()
}

pub struct Harness {
    pub http: String,
    pub ws: String,
    pub state: AppState,
}

impl Harness {
    pub async fn start(settings: Settings) -> Self {
        let listener = TcpListener::bind("127.0.0.1:0").await.unwrap();
        let state = AppState::new(settings).unwrap();
        let addr = serve_on(listener, state.clone()).await.unwrap();
        Self {
            http: format!("http://{addr}"),
            ws: format!("ws://{addr}"),
            state,
        }
    }

    pub async fn post(&self, path: &str, body: &str) -> (u16, Value) {
        let (url, body) = (format!("{}{path}", self.http), body.to_string());
        tokio::task::spawn_blocking(move || {
            let agent: ureq::Agent = ureq::Agent::config_builder()
                .http_status_as_error(false)
                .build()
                .into();
            let mut resp = agent
                .post(&url)
                .header("content-type", "application/json")
                .send(body)
                .unwrap();
            let status = resp.status().as_u16();
            let text = resp.body_mut().read_to_string().unwrap();
            (status, serde_json::from_str(&text).unwrap_or(Value::Null))
        })
        .await
        .unwrap()
    }

    pub async fn get(&self, path: &str) -> (u16, Value) {
        let url = format!("{}{path}", self.http);
        tokio::task::spawn_blocking(move || {
            let mut resp = ureq::get(&url).call().unwrap();
            let status = resp.status().as_u16();
            let text = resp.body_mut().read_to_string().unwrap();
            (status, serde_json::from_str(&text).unwrap())
        })
        .await
        .unwrap()
    }

    pub async fn create(&self, mode: Option<&str>) -> String {
        let body = match mode {
            Some(m) => format!(r#"{{"mode": "{m}"}}"#),
            None => String::new(),
        };
        let (status, v) = self.post("/v1/sessions", &body).await;
        assert_eq!(status, 201, "{v}");
        v["id"].as_str().unwrap().to_string()
    }

    /// Event stream from the first event of the session.
    pub async fn events(&self, id: &str) -> Ws {
        connect_async(format!("{}/v1/sessions/{id}/events?since=0", self.ws))
            .await
            .unwrap()
            .0
    }

    pub async fn frames(&self, id: &str) -> Ws {
        connect_async(format!("{}/v1/sessions/{id}/frames", self.ws))
            .await
            .unwrap()
            .0
    }

    /// Sends `lines` on a fresh frames connection and waits for the server
    /// to hang up or for the lines to run out.
    pub async fn send_frames(&self, id: &str, lines: &[String]) {
        let mut ws = self.frames(id).await;
        for l in lines {
            if ws.send(Message::Text(l.clone().into())).await.is_err() {
                return;
            }
        }
        let _ = ws.close(None).await;
        while let Ok(Some(Ok(_))) = tokio::time::timeout(Duration::from_secs(5), ws.next()).await {}
    }
}

/// Reads events until `done` holds for the collected list.
pub async fn collect_until(ws: &mut Ws, done: impl Fn(&[Event]) -> bool) -> Vec<Event> {
    let mut out = Vec::new();
    while !done(&out) {
        let msg = tokio::time::timeout(Duration::from_secs(10), ws.next())
            .await
            .unwrap_or_else(|_| panic!("timed out after {} events", out.len()))
            .expect("stream open")
            .unwrap();
        if let Message::Text(t) = msg {
            out.push(serde_json::from_str(&t).unwrap());
        }
    }
    out
}

pub fn count(events: &[Event], name: &str) -> usize {
    events.iter().filter(|e| e.kind.name() == name).count()
}

pub fn assert_gapless(events: &[Event]) {
    for (i, e) in events.iter().enumerate() {
        assert_eq!(e.seq, i as u64 + 1, "gap or reorder at position {i}");
    }
}

/// Settings pointing at a chat-completions stand-in that answers "stop" to
/// every prompt after `delay`. Keep the returned guard alive.
pub fn stub_backend(delay: Duration) -> (Settings, std::thread::JoinHandle<()>) {
    use std::io::{BufRead, BufReader, Read, Write};

    let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let server = std::thread::spawn(move || {
        for conn in listener.incoming() {
            let Ok(conn) = conn else { break };
            std::thread::spawn(move || {
                let mut reader = BufReader::new(conn.try_clone().unwrap());
                let mut out = conn;
                loop {
                    let mut length = 0;
                    let mut first = true;
                    loop {
                        let mut line = String::new();
                        if reader.read_line(&mut line).unwrap_or(0) == 0 {
                            return;
                        }
                        if !first && line.trim().is_empty() {
                            break;
                        }
                        first = false;
                        if let Some((k, v)) = line.split_once(':') {
                            if k.eq_ignore_ascii_case("content-length") {
                                length = v.trim().parse().unwrap_or(0);
                            }
                        }
                    }
                    let mut body = vec![0; length];
                    if reader.read_exact(&mut body).is_err() {
                        return;
                    }
                    std::thread::sleep(delay);
                    let text = r#"{"choices":[{"message":{"role":"assistant","content":"stop"}}]}"#;
                    let reply = format!(
                        "HTTP/1.1 200 OK\r\nContent-Type: application/json\r\nContent-Length: {}\r\n\r\n{text}",
                        text.len()
                    );
                    if out.write_all(reply.as_bytes()).is_err() {
                        return;
                    }
                }
            });
        }
    });
    let mut settings = Settings::default();
    settings.backend.kind = handcue_core::config::BackendChoice::Remote;
    settings.backend.remote.endpoint = format!("http://{addr}/v1/chat/completions");
    settings.backend.remote.timeout_ms = 5_000;
    settings.backend.remote.max_retries = 0;
    (settings, server)
}
