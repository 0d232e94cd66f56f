//! Local HTTP service behind the review UI.
//!
//! `GET /v1/proposals`, `GET /v1/proposals/{rank}`, `POST /v1/verdicts` and
//! `GET /v1/summary`, all JSON. The verdict ledger is the only file the
//! service ever writes.

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use tiny_http::{Header, Method, Request, Response, Server};

use crate::audit::{build_packet, AuditProposal, Ledger, VerdictRequest};
use crate::error::{Error, Result};
use crate::ingest::DatasetManifest;

pub const PORT_ENV: &str = "LIDAR_META_PORT";
pub const DEFAULT_PORT: u16 = 8731;

/// Port from `--port`, else the environment, else the default.
pub fn resolve_port(flag: Option<u16>) -> Result<u16> {
    if let Some(p) = flag {
        return Ok(p);
    }
    match std::env::var(PORT_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| Error::usage(format!("{PORT_ENV}={v:?} is not a port number"))),
        Err(_) => Ok(DEFAULT_PORT),
    }
}

pub struct ReviewService {
    proposals: Vec<AuditProposal>,
    manifest: DatasetManifest,
    ledger_path: PathBuf,
    ledger: Mutex<Ledger>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Reply {
    pub status: u16,
    pub body: String,
}

impl Reply {
    fn json<T: Serialize>(status: u16, value: &T) -> Self {
        Self {
            status,
            body: serde_json::to_string(value).expect("reply serializes"),
        }
    }

    fn error(status: u16, message: impl Into<String>) -> Self {
        Self::json(status, &serde_json::json!({ "error": message.into() }))
    }
}

#[derive(Serialize)]
struct ProposalList<'a> {
    proposals: &'a [AuditProposal],
    next_unreviewed: Option<usize>,
}

fn now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_secs())
}

impl ReviewService {
    pub fn new(proposals: Vec<AuditProposal>, manifest: DatasetManifest, ledger_path: PathBuf) -> Result<Self> {
        let ledger = Ledger::load(&ledger_path)?;
        Ok(Self {
            proposals,
            manifest,
            ledger_path,
            ledger: Mutex::new(ledger),
        })
    }

    /// Routes one request; independent of the transport.
    pub fn handle(&self, method: &str, url: &str, body: &str) -> Reply {
        let path = url.split('?').next().unwrap_or("");
        let parts: Vec<&str> = path.trim_matches('/').split('/').collect();
        match (method, parts.as_slice()) {
            ("GET", ["v1", "proposals"]) => {
                let ledger = self.ledger.lock().expect("ledger lock");
                Reply::json(
                    200,
                    &ProposalList {
                        proposals: &self.proposals,
                        next_unreviewed: ledger.next_unreviewed(&self.proposals),
                    },
                )
            }
            ("GET", ["v1", "proposals", rank]) => {
                let Some(p) = rank
                    .parse::<usize>()
                    .ok()
                    .and_then(|r| self.proposals.iter().find(|p| p.rank == r))
                else {
                    return Reply::error(404, format!("no proposal with rank {rank}"));
                };
                match build_packet(p, &self.manifest) {
                    Ok(packet) => Reply::json(200, &packet),
                    Err(e) => Reply::error(500, e.to_string()),
                }
            }
            ("POST", ["v1", "verdicts"]) => {
                let req: VerdictRequest = match serde_json::from_str(body) {
                    Ok(r) => r,
                    Err(e) => return Reply::error(400, format!("malformed verdict: {e}")),
                };
                if !self.proposals.iter().any(|p| p.rank == req.rank) {
                    return Reply::error(404, format!("no proposal with rank {}", req.rank));
                }
                // one writer at a time: record and append under the lock
                let mut ledger = self.ledger.lock().expect("ledger lock");
                let verdict = match ledger.record(&self.proposals, &req, now()) {
                    Ok(v) => v,
                    Err(e) => return Reply::error(422, e.to_string()),
                };
                if let Err(e) = Ledger::append_to(&self.ledger_path, &verdict) {
                    ledger.entries.pop();
                    return Reply::error(500, e.to_string());
                }
                Reply::json(201, &verdict)
            }
            ("GET", ["v1", "summary"]) => {
                let ledger = self.ledger.lock().expect("ledger lock");
                Reply::json(200, &ledger.summarize())
            }
            (_, ["v1", "proposals"] | ["v1", "proposals", _] | ["v1", "verdicts"] | ["v1", "summary"]) => {
                Reply::error(405, format!("{method} not allowed on {path}"))
            }
            _ => Reply::error(404, format!("no route for {path}")),
        }
    }

    fn respond(&self, mut request: Request) {
        let mut body = String::new();
        let reply = match request.as_reader().read_to_string(&mut body) {
            Ok(_) => {
                let method = match request.method() {
                    Method::Get => "GET",
                    Method::Post => "POST",
                    other => other.as_str(),
                };
                self.handle(method, request.url(), &body)
            }
            Err(e) => Reply::error(400, format!("unreadable body: {e}")),
        };
        log::info!("{} {} -> {}", request.method(), request.url(), reply.status);
        let header = Header::from_bytes("Content-Type", "application/json").expect("static header");
        let response = Response::from_string(reply.body)
            .with_status_code(reply.status)
            .with_header(header)
            .with_chunked_threshold(usize::MAX);
        if let Err(e) = request.respond(response) {
            log::warn!("failed to send response: {e}");
        }
    }
}

/// A service running on a background thread.
pub struct RunningServer {
    pub addr: SocketAddr,
    server: Arc<Server>,
    thread: Option<JoinHandle<()>>,
}

impl RunningServer {
    /// Blocks until the server stops.
    pub fn join(mut self) {
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }

    pub fn stop(mut self) {
        self.server.unblock();
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

impl Drop for RunningServer {
    fn drop(&mut self) {
        if self.thread.is_some() {
            self.server.unblock();
        }
    }
}

/// Binds `addr` (port 0 picks a free port) and starts serving.
pub fn start(service: ReviewService, addr: &str) -> Result<RunningServer> {
    let server = Server::http(addr).map_err(|e| {
        Error::io(
            addr,
            std::io::Error::new(std::io::ErrorKind::AddrNotAvailable, e.to_string()),
        )
    })?;
    let bound = server
        .server_addr()
        .to_ip()
        .ok_or_else(|| Error::usage("service must bind an IP address"))?;
    let server = Arc::new(server);
    let service = Arc::new(service);
    let srv = Arc::clone(&server);
    let thread = std::thread::spawn(move || {
        for request in srv.incoming_requests() {
            service.respond(request);
        }
    });
    Ok(RunningServer {
        addr: bound,
        server,
        thread: Some(thread),
    })
}
