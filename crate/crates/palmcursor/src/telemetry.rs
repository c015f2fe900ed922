//! Telemetry and control channel, version 1.
//!
//! Every message is one JSON object with `"v": 1` and a `type`. The pipeline
//! sends one `frame` event per processed frame:
//!
//! ```json
//! {
//!   "v": 1, "type": "frame", "seq": 41, "timestamp_ms": 1718000123456, "frame_timestamp_ms": 2706,
//!   "mode": "on",
//!   "decision": {
//!     "label": "palm", "classifier_label": "palm", "nearest": "palm",
//!     "nearest_distance": 0.41, "accepted": true, "disagreement": false,
//!     "distances": [2.1, 0.41, 1.9, 2.6], "effective_thresholds": [1.0, 1.0, 1.0, 1.0]
//!   },
//!   "bbox": { "x": 120, "y": 80, "w": 60, "h": 60, "score": 0.95 },
//!   "center": [150.0, 110.0],
//!   "command": { "kind": "move", "x": 960, "y": 704 },
//!   "fps": 15.2,
//!   "thumbnail": "<base64 JPEG>"
//! }
//! ```
//!
//! Per-class arrays follow the class order fist, palm, point_left,
//! point_right. `decision`, `bbox` and `center` are `null` on frames without
//! a hand; `thumbnail` is present only on some frames.
//!
//! Clients may send control messages (`v` optional, `id` optional and echoed
//! in the reply):
//!
//! ```json
//! { "type": "set_threshold_scale", "value": 1.5 }
//! { "type": "set_dry_run", "value": true }
//! { "type": "set_debounce", "frames": 4, "cooldown_ms": 500 }
//! { "type": "snapshot", "class": "palm" }
//! { "type": "rebuild_references" }
//! ```
//!
//! Each is answered with `{"v":1,"type":"ack","request":...}` or
//! `{"v":1,"type":"error","request":...,"message":...}`. Replies are sent once
//! the pipeline has applied the change, between two frames.

use std::collections::BTreeMap;
use std::io::ErrorKind;
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::mpsc::{self, Receiver, Sender, SyncSender, TrySendError};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};
use std::time::Duration;

use palmcursor_core::{BoxRect, CursorCommand, Gesture, GestureDecision, Mode};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use tungstenite::{Message, WebSocket};

pub const PROTOCOL_VERSION: u32 = 1;
/// Events buffered per client before further events are dropped for it.
pub const CLIENT_QUEUE: usize = 256;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecisionView {
    pub label: String,
    pub classifier_label: String,
    pub nearest: String,
    pub nearest_distance: f64,
    pub accepted: bool,
    pub disagreement: bool,
    pub distances: [f64; 4],
    pub effective_thresholds: [f64; 4],
}

impl From<&GestureDecision> for DecisionView {
    fn from(d: &GestureDecision) -> Self {
        Self {
            label: d.label.name().into(),
            classifier_label: d.classifier_label.name().into(),
            nearest: d.nearest.name().into(),
            nearest_distance: d.nearest_distance,
            accepted: d.accepted,
            disagreement: d.disagrees(),
            distances: d.distances,
            effective_thresholds: d.effective_thresholds,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxView {
    pub x: i32,
    pub y: i32,
    pub w: i32,
    pub h: i32,
    pub score: f32,
}

impl BoxView {
    pub fn new(bbox: BoxRect, score: f32) -> Self {
        Self { x: bbox.x, y: bbox.y, w: bbox.w, h: bbox.h, score }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CommandView {
    Move { x: u32, y: u32 },
    Click,
    RightClick,
    None,
}

impl From<CursorCommand> for CommandView {
    fn from(c: CursorCommand) -> Self {
        match c {
            CursorCommand::Move { x, y } => CommandView::Move { x, y },
            CursorCommand::Click => CommandView::Click,
            CursorCommand::RightClick => CommandView::RightClick,
            CursorCommand::None => CommandView::None,
        }
    }
}

/// A `frame` event.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TelemetryEvent {
    pub seq: u64,
    /// Wall-clock time the frame finished processing, Unix milliseconds.
    pub timestamp_ms: u64,
    /// Capture timestamp of the frame.
    pub frame_timestamp_ms: u64,
    pub mode: String,
    pub decision: Option<DecisionView>,
    pub bbox: Option<BoxView>,
    pub center: Option<[f64; 2]>,
    pub command: CommandView,
    pub fps: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub thumbnail: Option<String>,
}

impl TelemetryEvent {
    pub fn mode(mode: Mode) -> String {
        mode.name().into()
    }

    /// Event as it goes on the wire.
    pub fn to_json(&self) -> String {
        let mut value = serde_json::to_value(self).expect("events always serialize");
        let map = value.as_object_mut().expect("events serialize to objects");
        map.insert("v".into(), PROTOCOL_VERSION.into());
        map.insert("type".into(), "frame".into());
        value.to_string()
    }

    /// Copy with the wall-clock fields zeroed, for comparing runs.
    pub fn without_timing(&self) -> Self {
        Self { timestamp_ms: 0, fps: 0.0, ..self.clone() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ControlMessage {
    SetThresholdScale { value: f64 },
    SetDryRun { value: bool },
    SetDebounce {
        #[serde(default)]
        frames: Option<u32>,
        #[serde(default)]
        cooldown_ms: Option<u64>,
    },
    Snapshot {
        #[serde(with = "gesture_name")]
        class: Gesture,
    },
    RebuildReferences,
}

mod gesture_name {
    use palmcursor_core::Gesture;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(g: &Gesture, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(g.name())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Gesture, D::Error> {
        let name = String::deserialize(d)?;
        name.parse().map_err(serde::de::Error::custom)
    }
}

impl ControlMessage {
    pub fn kind(&self) -> &'static str {
        match self {
            ControlMessage::SetThresholdScale { .. } => "set_threshold_scale",
            ControlMessage::SetDryRun { .. } => "set_dry_run",
            ControlMessage::SetDebounce { .. } => "set_debounce",
            ControlMessage::Snapshot { .. } => "snapshot",
            ControlMessage::RebuildReferences => "rebuild_references",
        }
    }
}

/// A control message as received, before the pipeline acts on it.
#[derive(Clone, Debug, PartialEq)]
pub struct ControlRequest {
    pub client: u64,
    /// The request's `id`, echoed in the reply.
    pub id: Option<Value>,
    /// `type` of the request when it could be read.
    pub kind: Option<String>,
    pub message: Result<ControlMessage, String>,
}

pub fn parse_control(client: u64, text: &str) -> ControlRequest {
    let mut request = ControlRequest { client, id: None, kind: None, message: Err(String::new()) };
    let value: Value = match serde_json::from_str(text) {
        Ok(v) => v,
        Err(e) => {
            request.message = Err(format!("invalid JSON: {e}"));
            return request;
        }
    };
    let Some(map) = value.as_object() else {
        request.message = Err("message must be a JSON object".into());
        return request;
    };
    request.id = map.get("id").cloned();
    request.kind = map.get("type").and_then(Value::as_str).map(str::to_string);
    request.message = match map.get("v") {
        Some(v) if v.as_u64() != Some(u64::from(PROTOCOL_VERSION)) => Err(format!("unsupported protocol version {v}")),
        _ => serde_json::from_value::<ControlMessage>(value.clone())
            .map_err(|e| e.to_string())
            .and_then(validate_control),
    };
    request
}

fn validate_control(message: ControlMessage) -> Result<ControlMessage, String> {
    match &message {
        ControlMessage::SetThresholdScale { value } if !(value.is_finite() && *value >= 0.0) => {
            Err(format!("threshold scale must be a finite number >= 0, got {value}"))
        }
        ControlMessage::SetDebounce { frames: Some(0), .. } => Err("debounce frames must be at least 1".into()),
        _ => Ok(message),
    }
}

fn reply_base(kind: &str, request: &ControlRequest) -> serde_json::Map<String, Value> {
    let mut map = serde_json::Map::new();
    map.insert("v".into(), PROTOCOL_VERSION.into());
    map.insert("type".into(), kind.into());
    map.insert("request".into(), request.kind.clone().map_or(Value::Null, Value::String));
    if let Some(id) = &request.id {
        map.insert("id".into(), id.clone());
    }
    map
}

pub fn ack_json(request: &ControlRequest, detail: Option<Value>) -> String {
    let mut map = reply_base("ack", request);
    if let Some(detail) = detail {
        map.insert("detail".into(), detail);
    }
    Value::Object(map).to_string()
}

pub fn error_json(request: &ControlRequest, message: &str) -> String {
    let mut map = reply_base("error", request);
    map.insert("message".into(), message.into());
    Value::Object(map).to_string()
}

/// Where the pipeline publishes events and picks up control requests.
pub trait TelemetryHub {
    fn publish(&mut self, event: &TelemetryEvent);
    /// Control requests received since the last call, in arrival order.
    fn poll_control(&mut self) -> Vec<ControlRequest>;
    fn reply(&mut self, client: u64, text: String);
}

/// In-process hub: keeps every event and reply, and hands out scripted
/// control messages just before a given frame.
#[derive(Debug, Default)]
pub struct MemoryHub {
    pub events: Vec<TelemetryEvent>,
    pub replies: Vec<(u64, String)>,
    /// `(seq, raw JSON)` pairs; each is delivered before frame `seq` is
    /// processed.
    pub script: Vec<(u64, String)>,
    next_seq: u64,
}

impl MemoryHub {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_script(script: Vec<(u64, String)>) -> Self {
        Self { script, ..Self::default() }
    }
}

impl TelemetryHub for MemoryHub {
    fn publish(&mut self, event: &TelemetryEvent) {
        self.next_seq = event.seq + 1;
        self.events.push(event.clone());
    }

    fn poll_control(&mut self) -> Vec<ControlRequest> {
        let due = self.next_seq;
        let (now, later) = self.script.drain(..).partition(|(seq, _)| *seq <= due);
        self.script = later;
        now.into_iter().map(|(_, text)| parse_control(0, &text)).collect()
    }

    fn reply(&mut self, client: u64, text: String) {
        self.replies.push((client, text));
    }
}

#[derive(Debug, thiserror::Error)]
pub enum TelemetryError {
    #[error("telemetry port {port} is already in use")]
    PortInUse { port: u16 },
    #[error("cannot start telemetry server: {0}")]
    Io(#[from] std::io::Error),
}

type Clients = Arc<Mutex<BTreeMap<u64, SyncSender<Arc<str>>>>>;

/// WebSocket server fanning events out to every connected client.
pub struct TelemetryServer {
    addr: SocketAddr,
    clients: Clients,
    control: Receiver<ControlRequest>,
    stop: Arc<AtomicBool>,
    dropped: Arc<AtomicU64>,
    acceptor: Option<JoinHandle<()>>,
}

impl TelemetryServer {
    /// Listens on loopback.
    pub fn bind(port: u16) -> Result<Self, TelemetryError> {
        Self::bind_addr(SocketAddr::from(([127, 0, 0, 1], port)))
    }

    pub fn bind_addr(addr: SocketAddr) -> Result<Self, TelemetryError> {
        let listener = TcpListener::bind(addr).map_err(|e| match e.kind() {
            ErrorKind::AddrInUse => TelemetryError::PortInUse { port: addr.port() },
            _ => TelemetryError::Io(e),
        })?;
        listener.set_nonblocking(true)?;
        let addr = listener.local_addr()?;
        let clients: Clients = Arc::default();
        let stop = Arc::new(AtomicBool::new(false));
        let (control_tx, control) = mpsc::channel();
        let acceptor = {
            let (clients, stop) = (Arc::clone(&clients), Arc::clone(&stop));
            thread::spawn(move || accept_loop(listener, clients, control_tx, stop))
        };
        Ok(Self { addr, clients, control, stop, dropped: Arc::default(), acceptor: Some(acceptor) })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn client_count(&self) -> usize {
        self.clients.lock().unwrap().len()
    }

    /// Events discarded because a client's queue was full.
    pub fn dropped_events(&self) -> u64 {
        self.dropped.load(Ordering::Relaxed)
    }

    fn send_to(&self, client: Option<u64>, text: Arc<str>) {
        let mut clients = self.clients.lock().unwrap();
        clients.retain(|id, tx| {
            if client.is_some_and(|c| c != *id) {
                return true;
            }
            match tx.try_send(Arc::clone(&text)) {
                Ok(()) => true,
                Err(TrySendError::Full(_)) => {
                    self.dropped.fetch_add(1, Ordering::Relaxed);
                    true
                }
                Err(TrySendError::Disconnected(_)) => false,
            }
        });
    }
}

impl TelemetryHub for TelemetryServer {
    fn publish(&mut self, event: &TelemetryEvent) {
        self.send_to(None, event.to_json().into());
    }

    fn poll_control(&mut self) -> Vec<ControlRequest> {
        self.control.try_iter().collect()
    }

    fn reply(&mut self, client: u64, text: String) {
        self.send_to(Some(client), text.into());
    }
}

impl Drop for TelemetryServer {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::Relaxed);
        self.clients.lock().unwrap().clear();
        if let Some(acceptor) = self.acceptor.take() {
            let _ = acceptor.join();
        }
    }
}

const POLL: Duration = Duration::from_millis(10);

fn accept_loop(listener: TcpListener, clients: Clients, control: Sender<ControlRequest>, stop: Arc<AtomicBool>) {
    let mut next_id = 0u64;
    let mut workers = Vec::new();
    while !stop.load(Ordering::Relaxed) {
        match listener.accept() {
            Ok((stream, peer)) => {
                let id = next_id;
                next_id += 1;
                let (tx, rx) = mpsc::sync_channel(CLIENT_QUEUE);
                let (control, stop) = (control.clone(), Arc::clone(&stop));
                let clients = Arc::clone(&clients);
                workers.push(thread::spawn(move || match handshake(stream) {
                    Ok(ws) => {
                        log::info!("telemetry client {id} connected from {peer}");
                        clients.lock().unwrap().insert(id, tx);
                        serve_client(id, ws, rx, control, stop);
                        clients.lock().unwrap().remove(&id);
                        log::info!("telemetry client {id} disconnected");
                    }
                    Err(e) => log::warn!("telemetry handshake with {peer} failed: {e}"),
                }));
            }
            Err(e) if e.kind() == ErrorKind::WouldBlock => thread::sleep(POLL),
            Err(e) => {
                log::warn!("telemetry accept failed: {e}");
                thread::sleep(POLL);
            }
        }
        workers.retain(|w: &JoinHandle<()>| !w.is_finished());
    }
    for w in workers {
        let _ = w.join();
    }
}

fn handshake(stream: TcpStream) -> Result<WebSocket<TcpStream>, String> {
    stream.set_nonblocking(false).map_err(|e| e.to_string())?;
    stream.set_read_timeout(Some(Duration::from_secs(5))).map_err(|e| e.to_string())?;
    let ws = tungstenite::accept(stream).map_err(|e| e.to_string())?;
    ws.get_ref().set_read_timeout(Some(POLL)).map_err(|e| e.to_string())?;
    Ok(ws)
}

fn would_block(e: &tungstenite::Error) -> bool {
    matches!(e, tungstenite::Error::Io(io) if matches!(io.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut))
}

fn serve_client(
    id: u64,
    mut ws: WebSocket<TcpStream>,
    outbound: Receiver<Arc<str>>,
    control: Sender<ControlRequest>,
    stop: Arc<AtomicBool>,
) {
    while !stop.load(Ordering::Relaxed) {
        loop {
            match outbound.try_recv() {
                Ok(text) => {
                    if let Err(e) = ws.write(Message::text(text.as_ref())) {
                        if !would_block(&e) {
                            return;
                        }
                    }
                }
                Err(mpsc::TryRecvError::Empty) => break,
                Err(mpsc::TryRecvError::Disconnected) => {
                    let _ = ws.close(None);
                    let _ = ws.flush();
                    return;
                }
            }
        }
        match ws.flush() {
            Ok(()) => {}
            Err(e) if would_block(&e) => {}
            Err(_) => return,
        }
        match ws.read() {
            Ok(Message::Text(text)) => {
                if control.send(parse_control(id, text.as_str())).is_err() {
                    return;
                }
            }
            Ok(Message::Binary(_)) => {
                let request = ControlRequest { client: id, id: None, kind: None, message: Err(String::new()) };
                let _ = ws.send(Message::text(error_json(&request, "binary messages are not supported")));
            }
            Ok(Message::Close(_)) => {
                let _ = ws.flush();
                return;
            }
            Ok(_) => {}
            Err(e) if would_block(&e) => {}
            Err(_) => return,
        }
    }
}
