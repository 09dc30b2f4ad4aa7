//! Threaded TCP + WebSocket front end around [`ServerCore`].
//!
//! Each connection gets a reader that decodes lines and forwards them over a
//! channel to the single frame-loop thread. Outbound traffic goes through a
//! per-session [`Outbox`] so a slow peer never blocks the loop.

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use crossbeam::channel::{self, Receiver, Sender};
use log::{debug, info, warn};
use thiserror::Error;

use super::clock::{Clock, ClockMode};
use super::core::{frame_log_row, CoreError, CoreStats, ServerCore, FRAME_LOG_HEADER};
use super::protocol::{decode, encode_line, DeviceKind, Message, PROTO_VERSION};
use super::session::{Outbox, SessionId, SessionRegistry};
use crate::config::Config;

const POLL: Duration = Duration::from_millis(10);
const WS_READ_TIMEOUT: Duration = Duration::from_millis(5);

#[derive(Debug, Error)]
pub enum ServeError {
    #[error("port {port} is already in use")]
    PortInUse { port: u16 },
    #[error("cannot bind {addr}: {source}")]
    Bind { addr: String, source: io::Error },
    #[error("cannot open frame log {path}: {source}")]
    FrameLog { path: String, source: io::Error },
    #[error(transparent)]
    Core(#[from] CoreError),
}

#[derive(Debug, Clone)]
pub struct ServeOptions {
    pub config: Config,
    pub clock: ClockMode,
    /// Stop after this many frames.
    pub ticks: Option<u64>,
    pub frame_log: Option<PathBuf>,
}

impl ServeOptions {
    pub fn new(config: Config) -> Self {
        Self {
            config,
            clock: ClockMode::Wall,
            ticks: None,
            frame_log: None,
        }
    }
}

/// Counters shared between the frame loop and the handle.
#[derive(Debug, Clone, Default)]
pub struct ServerStats {
    pub frames: u64,
    pub last_seq: u64,
    /// Wall seconds since start at which each frame completed.
    pub frame_times: Vec<f64>,
    /// Wall seconds since start at which each heart-rate update arrived.
    pub hr_arrivals: Vec<f64>,
    pub focal_commands_sent: u64,
    pub decode_errors: u64,
    pub rejected_handshakes: u64,
    pub sessions_opened: u64,
    pub core: CoreStats,
}

enum Event {
    Registered {
        id: SessionId,
        kind: DeviceKind,
        outbox: Arc<Outbox>,
    },
    Message {
        id: SessionId,
        msg: Message,
        arrived: f64,
    },
    Closed {
        id: SessionId,
    },
}

struct Shared {
    registry: Mutex<SessionRegistry>,
    events: Sender<Event>,
    shutdown: AtomicBool,
    next_id: AtomicU64,
    stats: Mutex<ServerStats>,
    start: Instant,
}

impl Shared {
    fn elapsed(&self) -> f64 {
        self.start.elapsed().as_secs_f64()
    }

    fn stopping(&self) -> bool {
        self.shutdown.load(Ordering::SeqCst)
    }
}

#[derive(Clone)]
pub struct Stopper(Arc<Shared>);

impl Stopper {
    pub fn stop(&self) {
        self.0.shutdown.store(true, Ordering::SeqCst);
    }
}

pub struct ServerHandle {
    tcp_addr: SocketAddr,
    ws_addr: SocketAddr,
    shared: Arc<Shared>,
    frame_loop: Option<JoinHandle<()>>,
    acceptors: Vec<JoinHandle<()>>,
}

impl ServerHandle {
    pub fn tcp_addr(&self) -> SocketAddr {
        self.tcp_addr
    }

    pub fn ws_addr(&self) -> SocketAddr {
        self.ws_addr
    }

    pub fn stats(&self) -> ServerStats {
        self.shared.stats.lock().unwrap().clone()
    }

    /// A cloneable stop switch, usable from a signal handler.
    pub fn stopper(&self) -> Stopper {
        Stopper(Arc::clone(&self.shared))
    }

    pub fn shutdown(&self) {
        self.shared.shutdown.store(true, Ordering::SeqCst);
    }

    pub fn is_finished(&self) -> bool {
        self.frame_loop.as_ref().is_none_or(|h| h.is_finished())
    }

    /// Waits for the frame loop to end (tick budget or shutdown), then stops
    /// the listeners.
    pub fn join(mut self) -> ServerStats {
        if let Some(h) = self.frame_loop.take() {
            let _ = h.join();
        }
        self.shared.shutdown.store(true, Ordering::SeqCst);
        for h in self.acceptors.drain(..) {
            let _ = h.join();
        }
        self.stats()
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        self.shared.shutdown.store(true, Ordering::SeqCst);
    }
}

fn bind(host: &str, port: u16) -> Result<TcpListener, ServeError> {
    let addr = format!("{host}:{port}");
    TcpListener::bind(&addr).map_err(|source| {
        if source.kind() == io::ErrorKind::AddrInUse {
            ServeError::PortInUse { port }
        } else {
            ServeError::Bind { addr, source }
        }
    })
}

/// Binds both ports and starts the frame loop.
pub fn start(opts: ServeOptions) -> Result<ServerHandle, ServeError> {
    let cfg = &opts.config;
    let core = ServerCore::new(cfg)?;
    let tcp = bind(&cfg.server.bind, cfg.server.tcp_port)?;
    let ws = bind(&cfg.server.bind, cfg.server.ws_port)?;
    let tcp_addr = tcp.local_addr().map_err(|source| ServeError::Bind {
        addr: cfg.server.bind.clone(),
        source,
    })?;
    let ws_addr = ws.local_addr().map_err(|source| ServeError::Bind {
        addr: cfg.server.bind.clone(),
        source,
    })?;
    let frame_log = match &opts.frame_log {
        Some(p) => {
            let f = File::create(p).map_err(|source| ServeError::FrameLog {
                path: p.display().to_string(),
                source,
            })?;
            Some(BufWriter::new(f))
        }
        None => None,
    };

    let (tx, rx) = channel::unbounded();
    let shared = Arc::new(Shared {
        registry: Mutex::new(SessionRegistry::default()),
        events: tx,
        shutdown: AtomicBool::new(false),
        next_id: AtomicU64::new(1),
        stats: Mutex::new(ServerStats::default()),
        start: Instant::now(),
    });
    info!("listening on tcp {tcp_addr}, websocket {ws_addr}");

    let acceptors = vec![
        spawn_acceptor(tcp, Arc::clone(&shared), Transport::Tcp),
        spawn_acceptor(ws, Arc::clone(&shared), Transport::WebSocket),
    ];
    let loop_shared = Arc::clone(&shared);
    let clock = Clock::new(opts.clock, cfg.server.tick_hz);
    let ticks = opts.ticks;
    let frame_loop = thread::Builder::new()
        .name("frame-loop".into())
        .spawn(move || frame_loop(core, clock, ticks, rx, frame_log, loop_shared))
        .expect("spawn frame loop");

    Ok(ServerHandle {
        tcp_addr,
        ws_addr,
        shared,
        frame_loop: Some(frame_loop),
        acceptors,
    })
}

struct Peer {
    kind: DeviceKind,
    outbox: Arc<Outbox>,
}

fn frame_loop(
    mut core: ServerCore,
    mut clock: Clock,
    ticks: Option<u64>,
    rx: Receiver<Event>,
    mut frame_log: Option<BufWriter<File>>,
    shared: Arc<Shared>,
) {
    let mut peers: std::collections::BTreeMap<SessionId, Peer> = Default::default();
    if let Some(w) = frame_log.as_mut() {
        if let Err(e) = writeln!(w, "{FRAME_LOG_HEADER}") {
            warn!("frame log: {e}");
        }
    }
    while !shared.stopping() && ticks.is_none_or(|n| clock.ticks() < n) {
        let now = clock.tick();
        let mut hr_arrivals = Vec::new();
        for ev in rx.try_iter() {
            match ev {
                Event::Registered { id, kind, outbox } => {
                    peers.insert(id, Peer { kind, outbox });
                }
                Event::Message { id, msg, arrived } => {
                    if matches!(msg, Message::HrUpdate(_)) {
                        hr_arrivals.push(arrived);
                    }
                    if let Some(reply) = core.submit(msg, now) {
                        if let Some(p) = peers.get(&id) {
                            p.outbox.push_control(&reply);
                        }
                    }
                }
                Event::Closed { id } => {
                    peers.remove(&id);
                }
            }
        }
        let out = core.frame_tick(now);
        let line = encode_line(&Message::FrameState(out.frame.clone()));
        let n_commands = out.focal.commands.len() as u64;
        let mut focal = Some(out.focal);
        for p in peers.values() {
            if p.kind == DeviceKind::HapticDevice {
                if let Some(b) = focal.take() {
                    p.outbox.push_focal(b);
                }
            } else {
                p.outbox.offer_frame(line.clone());
            }
        }
        if let Some(w) = frame_log.as_mut() {
            if let Err(e) = writeln!(w, "{}", frame_log_row(&out.frame)) {
                warn!("frame log: {e}");
                frame_log = None;
            }
        }
        let mut st = shared.stats.lock().unwrap();
        st.frames += 1;
        st.last_seq = out.frame.seq;
        st.frame_times.push(shared.elapsed());
        st.hr_arrivals.extend(hr_arrivals);
        if focal.is_none() {
            st.focal_commands_sent += n_commands;
        }
        st.core = core.stats();
    }
    if let Some(mut w) = frame_log {
        let _ = w.flush();
    }
    for p in peers.values() {
        p.outbox.close();
    }
    info!("frame loop stopped after {} frames", clock.ticks());
    shared.shutdown.store(true, Ordering::SeqCst);
}

#[derive(Debug, Clone, Copy)]
enum Transport {
    Tcp,
    WebSocket,
}

fn spawn_acceptor(listener: TcpListener, shared: Arc<Shared>, transport: Transport) -> JoinHandle<()> {
    thread::Builder::new()
        .name(format!("accept-{transport:?}").to_lowercase())
        .spawn(move || {
            if let Err(e) = listener.set_nonblocking(true) {
                warn!("listener: {e}");
                return;
            }
            let mut conns = Vec::new();
            while !shared.stopping() {
                match listener.accept() {
                    Ok((stream, peer)) => {
                        debug!("{transport:?} connection from {peer}");
                        let id = shared.next_id.fetch_add(1, Ordering::SeqCst);
                        let shared = Arc::clone(&shared);
                        let h = thread::Builder::new().name(format!("session-{id}")).spawn(move || {
                            let _ = stream.set_nonblocking(false);
                            let _ = stream.set_nodelay(true);
                            match transport {
                                Transport::Tcp => serve_tcp(id, stream, &shared),
                                Transport::WebSocket => serve_ws(id, stream, &shared),
                            }
                        });
                        match h {
                            Ok(h) => conns.push(h),
                            Err(e) => warn!("cannot spawn session thread: {e}"),
                        }
                    }
                    Err(e) if e.kind() == io::ErrorKind::WouldBlock => thread::sleep(POLL),
                    Err(e) => {
                        warn!("accept: {e}");
                        thread::sleep(POLL);
                    }
                }
                conns.retain(|h: &JoinHandle<()>| !h.is_finished());
            }
            for h in conns {
                let _ = h.join();
            }
        })
        .expect("spawn acceptor")
}

/// Per-connection protocol state shared by both transports.
struct SessionState {
    id: SessionId,
    outbox: Arc<Outbox>,
    registered: bool,
}

enum LineOutcome {
    Continue,
    Close,
}

impl SessionState {
    fn new(id: SessionId) -> Self {
        Self {
            id,
            outbox: Arc::new(Outbox::new()),
            registered: false,
        }
    }

    fn handle_line(&mut self, line: &str, shared: &Shared) -> LineOutcome {
        if line.trim().is_empty() {
            return LineOutcome::Continue;
        }
        let arrived = shared.elapsed();
        let decoded = decode(line);
        if !self.registered {
            let msg = match decoded {
                Ok(m) => m,
                Err(e) => {
                    shared.stats.lock().unwrap().rejected_handshakes += 1;
                    self.outbox.push_control(&Message::error(e.code(), e.to_string()));
                    return LineOutcome::Close;
                }
            };
            let result = shared.registry.lock().unwrap().handshake(self.id, &msg, arrived);
            match result {
                Ok(kind) => {
                    self.registered = true;
                    shared.stats.lock().unwrap().sessions_opened += 1;
                    self.outbox.push_control(&Message::Welcome {
                        session: self.id,
                        proto: PROTO_VERSION,
                    });
                    let _ = shared.events.send(Event::Registered {
                        id: self.id,
                        kind,
                        outbox: Arc::clone(&self.outbox),
                    });
                    LineOutcome::Continue
                }
                Err(e) => {
                    shared.stats.lock().unwrap().rejected_handshakes += 1;
                    self.outbox.push_control(&Message::error(e.code(), e.to_string()));
                    LineOutcome::Close
                }
            }
        } else {
            shared.registry.lock().unwrap().touch(self.id, arrived);
            match decoded {
                Ok(msg) => {
                    let _ = shared.events.send(Event::Message {
                        id: self.id,
                        msg,
                        arrived,
                    });
                }
                Err(e) => {
                    shared.stats.lock().unwrap().decode_errors += 1;
                    self.outbox.push_control(&Message::error(e.code(), e.to_string()));
                }
            }
            LineOutcome::Continue
        }
    }

    fn finish(&self, shared: &Shared) {
        if self.registered {
            shared.registry.lock().unwrap().remove(self.id);
            let _ = shared.events.send(Event::Closed { id: self.id });
        }
        self.outbox.close();
    }
}

fn serve_tcp(id: SessionId, stream: TcpStream, shared: &Arc<Shared>) {
    let mut state = SessionState::new(id);
    let writer = match stream.try_clone() {
        Ok(w) => w,
        Err(e) => {
            warn!("session {id}: {e}");
            return;
        }
    };
    let outbox = Arc::clone(&state.outbox);
    let writer_shared = Arc::clone(shared);
    let writer_thread = thread::spawn(move || write_loop(writer, &outbox, &writer_shared));

    let _ = stream.set_read_timeout(Some(Duration::from_millis(100)));
    let mut reader = BufReader::new(stream);
    let mut buf = Vec::new();
    loop {
        if shared.stopping() {
            break;
        }
        match reader.read_until(b'\n', &mut buf) {
            Ok(0) => break,
            Ok(_) if buf.last() != Some(&b'\n') => continue,
            Ok(_) => {
                let line = String::from_utf8_lossy(&buf).into_owned();
                buf.clear();
                if let LineOutcome::Close = state.handle_line(&line, shared) {
                    break;
                }
            }
            Err(e) if matches!(e.kind(), io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut) => {}
            Err(e) => {
                debug!("session {id}: {e}");
                break;
            }
        }
    }
    state.finish(shared);
    let _ = writer_thread.join();
    let _ = reader.get_ref().shutdown(std::net::Shutdown::Both);
}

fn write_loop(mut w: TcpStream, outbox: &Outbox, shared: &Shared) {
    loop {
        let pending = outbox.wait_take(Duration::from_millis(100));
        for line in &pending.lines {
            if w.write_all(line.as_bytes()).is_err() {
                outbox.close();
                return;
            }
        }
        if pending.closed || (shared.stopping() && pending.lines.is_empty()) {
            let _ = w.flush();
            let _ = w.shutdown(std::net::Shutdown::Write);
            return;
        }
    }
}

fn serve_ws(id: SessionId, stream: TcpStream, shared: &Arc<Shared>) {
    let mut ws = match tungstenite::accept(stream) {
        Ok(ws) => ws,
        Err(e) => {
            debug!("session {id}: websocket handshake failed: {e}");
            return;
        }
    };
    let _ = ws.get_ref().set_read_timeout(Some(WS_READ_TIMEOUT));
    let mut state = SessionState::new(id);
    let mut closing = false;
    'session: loop {
        if shared.stopping() {
            closing = true;
        }
        if !closing {
            match ws.read() {
                Ok(tungstenite::Message::Text(text)) => {
                    for line in text.as_str().lines() {
                        if let LineOutcome::Close = state.handle_line(line, shared) {
                            closing = true;
                            break;
                        }
                    }
                }
                Ok(tungstenite::Message::Close(_)) => break 'session,
                Ok(_) => {}
                Err(tungstenite::Error::Io(e))
                    if matches!(e.kind(), io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut) => {}
                Err(e) => {
                    debug!("session {id}: {e}");
                    break 'session;
                }
            }
        }
        let pending = state.outbox.take();
        for line in pending.lines {
            let text = line.trim_end_matches('\n').to_string();
            if ws.send(tungstenite::Message::text(text)).is_err() {
                break 'session;
            }
        }
        if closing || pending.closed {
            let _ = ws.close(None);
            let _ = ws.flush();
            break;
        }
    }
    state.finish(shared);
}
