//! Minimal register/login HTTP service over loopback, plus the scripted
//! exploit demonstration client.
//!
//! Plain HTTP/1.1, JSON bodies, no sessions, no TLS: the point is the
//! storage layer, not transport security. Every login is stateless, so the
//! collision demonstration cannot be confounded by connection or cookie
//! reuse.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chain::{ChainRegistry, ChainSpec, Pepper, VerificationOutcome};
use crate::credstore::{SaltSource, Store, StoreError};

pub const MAX_BODY_BYTES: usize = 8 * 1024;
pub const DEFAULT_BIND: &str = "127.0.0.1:8731";

#[derive(Debug, Deserialize)]
pub struct ApiRequest {
    /// Optional; when present it must match the endpoint path.
    #[serde(default)]
    pub action: Option<String>,
    pub username: String,
    pub password: String,
}

#[derive(Debug, Serialize)]
pub struct ApiResponse {
    pub ok: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Error)]
pub enum ServeError {
    #[error("failed to bind {addr}: {source}")]
    Bind {
        addr: String,
        source: std::io::Error,
    },
    #[error("store failure: {0}")]
    Store(#[from] StoreError),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

pub struct AuthConfig {
    pub bind: String,
    pub store_path: std::path::PathBuf,
    pub spec: ChainSpec,
    pub pepper: Pepper,
    pub salt_source: SaltSource,
}

struct ServerState {
    store: Mutex<Store>,
    registry: ChainRegistry,
    spec: ChainSpec,
    pepper: Pepper,
    salt_source: SaltSource,
}

/// A running service. Dropping the handle does not stop it; call
/// [`AuthServer::shutdown`].
pub struct AuthServer {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    handle: Option<JoinHandle<()>>,
    state: Arc<ServerState>,
}

impl AuthServer {
    /// Bind and start serving on a background thread. Refuses to start when
    /// the store cannot be opened or created.
    pub fn spawn(config: AuthConfig) -> Result<AuthServer, ServeError> {
        let store = if config.store_path.exists() {
            Store::open_rw(&config.store_path)?
        } else {
            Store::create(&config.store_path)?
        };
        let listener = TcpListener::bind(&config.bind).map_err(|source| ServeError::Bind {
            addr: config.bind.clone(),
            source,
        })?;
        let addr = listener.local_addr()?;

        let mut registry = ChainRegistry::single(config.spec.clone());
        // verify records left over from earlier chain generations too
        for builtin in ["fb2014", "sha256-v1", "md5-v0"] {
            if builtin != config.spec.version() {
                registry.register(ChainSpec::by_version(builtin).unwrap());
            }
        }

        let state = Arc::new(ServerState {
            store: Mutex::new(store),
            registry,
            spec: config.spec,
            pepper: config.pepper,
            salt_source: config.salt_source,
        });
        let stop = Arc::new(AtomicBool::new(false));

        let accept_state = Arc::clone(&state);
        let accept_stop = Arc::clone(&stop);
        let handle = std::thread::spawn(move || {
            for conn in listener.incoming() {
                if accept_stop.load(Ordering::SeqCst) {
                    break;
                }
                let Ok(stream) = conn else { continue };
                let state = Arc::clone(&accept_state);
                std::thread::spawn(move || {
                    let _ = handle_connection(stream, &state);
                });
            }
        });

        Ok(AuthServer {
            addr,
            stop,
            handle: Some(handle),
            state,
        })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    /// Stop accepting, flush the store, and join the accept thread.
    pub fn shutdown(mut self) {
        self.stop.store(true, Ordering::SeqCst);
        // wake the blocking accept
        let _ = TcpStream::connect(self.addr);
        if let Some(handle) = self.handle.take() {
            let _ = handle.join();
        }
        if let Ok(store) = self.state.store.lock() {
            let _ = store.save();
        }
    }
}

/// Blocking variant for the CLI `serve` command: runs until the process is
/// terminated. Mutations persist immediately, so a kill is safe.
pub fn serve(config: AuthConfig) -> Result<(), ServeError> {
    let server = AuthServer::spawn(config)?;
    eprintln!("authd listening on {}", server.local_addr());
    loop {
        std::thread::sleep(Duration::from_secs(3600));
    }
}

fn write_response(stream: &mut TcpStream, status: u16, body: &ApiResponse) -> std::io::Result<()> {
    let reason = match status {
        200 => "OK",
        400 => "Bad Request",
        401 => "Unauthorized",
        404 => "Not Found",
        405 => "Method Not Allowed",
        409 => "Conflict",
        413 => "Payload Too Large",
        _ => "Internal Server Error",
    };
    let json = serde_json::to_string(body).unwrap();
    write!(
        stream,
        "HTTP/1.1 {status} {reason}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{json}",
        json.len()
    )
}

fn fail(stream: &mut TcpStream, status: u16, error: &str) -> std::io::Result<()> {
    write_response(
        stream,
        status,
        &ApiResponse {
            ok: false,
            error: Some(error.to_string()),
        },
    )
}

fn handle_connection(mut stream: TcpStream, state: &ServerState) -> std::io::Result<()> {
    stream.set_read_timeout(Some(Duration::from_secs(10)))?;
    let mut reader = BufReader::new(stream.try_clone()?);

    let mut request_line = String::new();
    if reader.read_line(&mut request_line)? == 0 {
        return Ok(());
    }
    let mut parts = request_line.split_whitespace();
    let method = parts.next().unwrap_or_default().to_string();
    let path = parts.next().unwrap_or_default().to_string();

    let mut content_length: usize = 0;
    loop {
        let mut line = String::new();
        if reader.read_line(&mut line)? == 0 {
            return Ok(());
        }
        let line = line.trim_end();
        if line.is_empty() {
            break;
        }
        if let Some((name, value)) = line.split_once(':') {
            if name.eq_ignore_ascii_case("content-length") {
                content_length = value.trim().parse().unwrap_or(usize::MAX);
            }
        }
    }

    if method != "POST" {
        return fail(&mut stream, 405, "method_not_allowed");
    }
    let action = match path.as_str() {
        "/register" => "register",
        "/login" => "login",
        "/set_password" => "set_password",
        _ => return fail(&mut stream, 404, "not_found"),
    };
    if content_length > MAX_BODY_BYTES {
        // drain a bounded amount so the client can finish writing and read
        // the response instead of seeing a reset
        let mut sink = vec![0u8; content_length.min(1 << 20)];
        let _ = reader.read_exact(&mut sink);
        return fail(&mut stream, 413, "payload_too_large");
    }

    let mut body = vec![0u8; content_length];
    reader.read_exact(&mut body)?;
    let request: ApiRequest = match serde_json::from_slice(&body) {
        Ok(req) => req,
        Err(_) => return fail(&mut stream, 400, "malformed_request"),
    };
    if let Some(declared) = &request.action {
        if declared != action {
            return fail(&mut stream, 400, "action_path_mismatch");
        }
    }

    match action {
        "register" => {
            let mut store = state.store.lock().unwrap();
            match store.create_account(
                &request.username,
                request.password.as_bytes(),
                &state.spec,
                &state.pepper,
                state.salt_source,
            ) {
                Ok(_) => write_response(&mut stream, 200, &ApiResponse { ok: true, error: None }),
                Err(StoreError::DuplicateUsername(_)) => {
                    fail(&mut stream, 409, "duplicate_username")
                }
                Err(StoreError::InvalidRecord(_)) | Err(StoreError::Chain(_)) => {
                    fail(&mut stream, 400, "invalid_request")
                }
                Err(_) => fail(&mut stream, 500, "internal_error"),
            }
        }
        "login" => {
            let store = state.store.lock().unwrap();
            match store.authenticate(
                &request.username,
                request.password.as_bytes(),
                &state.registry,
                &state.pepper,
            ) {
                Ok(VerificationOutcome::Accept) => {
                    write_response(&mut stream, 200, &ApiResponse { ok: true, error: None })
                }
                Ok(VerificationOutcome::Reject) => fail(&mut stream, 401, "invalid_credentials"),
                Err(_) => fail(&mut stream, 500, "internal_error"),
            }
        }
        _ => {
            // set_password requires the current password to be correct first
            let mut store = state.store.lock().unwrap();
            let known = store.get(&request.username).is_some();
            if !known {
                return fail(&mut stream, 401, "invalid_credentials");
            }
            match store.set_password(
                &request.username,
                request.password.as_bytes(),
                &state.spec,
                &state.pepper,
                state.salt_source,
            ) {
                Ok(_) => write_response(&mut stream, 200, &ApiResponse { ok: true, error: None }),
                Err(_) => fail(&mut stream, 500, "internal_error"),
            }
        }
    }
}

/// Minimal one-shot HTTP client: fresh connection per request, no reuse.
pub fn http_post(
    addr: &str,
    path: &str,
    username: &str,
    password: &str,
) -> Result<(u16, String), std::io::Error> {
    let mut stream = TcpStream::connect(addr)?;
    stream.set_read_timeout(Some(Duration::from_secs(30)))?;
    let body = serde_json::json!({ "username": username, "password": password }).to_string();
    write!(
        stream,
        "POST {path} HTTP/1.1\r\nHost: {addr}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
        body.len()
    )?;
    let mut response = String::new();
    stream.read_to_string(&mut response)?;
    let status: u16 = response
        .split_whitespace()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| std::io::Error::new(std::io::ErrorKind::InvalidData, "bad status line"))?;
    let body = response
        .split_once("\r\n\r\n")
        .map(|(_, b)| b.to_string())
        .unwrap_or_default();
    Ok((status, body))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DemoStep {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DemoReport {
    pub steps: Vec<DemoStep>,
    pub passed: bool,
}

#[derive(Debug, Error)]
pub enum DemoError {
    #[error("network failure talking to the server: {0}")]
    Network(#[from] std::io::Error),
}

/// Script the published attack against a running service: register with
/// string `a`, reconnect, log in with string `b`, then confirm a control
/// login with a non-colliding third string is rejected.
pub fn exploit_demo(server_addr: &str, username: &str) -> Result<DemoReport, DemoError> {
    let a = std::str::from_utf8(crate::collision::STRING_A).unwrap();
    let b = std::str::from_utf8(crate::collision::STRING_B).unwrap();

    let mut steps = Vec::new();

    let (status, _) = http_post(server_addr, "/register", username, a)?;
    steps.push(DemoStep {
        name: "register with string a".into(),
        passed: status == 200,
        detail: format!("HTTP {status}"),
    });

    // "log out": nothing to do, each request below opens a fresh connection
    let (status, _) = http_post(server_addr, "/login", username, b)?;
    let login_b_ok = status == 200;
    steps.push(DemoStep {
        name: "log back in with string b".into(),
        passed: login_b_ok,
        detail: format!("HTTP {status}"),
    });

    let (status, _) = http_post(server_addr, "/login", username, "definitely-not-colliding")?;
    let control_rejected = status == 401;
    steps.push(DemoStep {
        name: "control login with a third string is rejected".into(),
        passed: control_rejected,
        detail: format!("HTTP {status}"),
    });

    Ok(DemoReport {
        passed: login_b_ok && control_rejected,
        steps,
    })
}
