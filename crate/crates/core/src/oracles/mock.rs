//! In-process HTTP server speaking the remote oracle protocol, backed by any
//! local [`Oracle`]. Used as a test fixture and for differential runs.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::Duration;

use log::debug;
use tiny_http::{Header, Response, Server};

use super::http::{decode_request, encode_verdict};
use super::Oracle;

/// Fault injection knobs for the mock server.
#[derive(Debug, Clone, Default)]
pub struct MockBehavior {
    /// Answer the first `fail_first` requests with HTTP 503.
    pub fail_first: usize,
    /// Sleep this long before answering every request.
    pub delay: Option<Duration>,
    /// Reply with this body verbatim instead of consulting the oracle.
    pub fixed_body: Option<String>,
}

pub struct MockServer {
    server: Arc<Server>,
    url: String,
    requests: Arc<AtomicUsize>,
    handle: Option<JoinHandle<()>>,
}

impl MockServer {
    /// Bind an ephemeral localhost port and start serving.
    pub fn start(oracle: Arc<dyn Oracle>, behavior: MockBehavior) -> std::io::Result<Self> {
        let server = Server::http("127.0.0.1:0").map_err(std::io::Error::other)?;
        let addr = server
            .server_addr()
            .to_ip()
            .ok_or_else(|| std::io::Error::other("mock server has no IP address"))?;
        let server = Arc::new(server);
        let requests = Arc::new(AtomicUsize::new(0));
        let handle = {
            let server = Arc::clone(&server);
            let requests = Arc::clone(&requests);
            thread::spawn(move || serve(&server, oracle.as_ref(), &behavior, &requests))
        };
        Ok(Self {
            server,
            url: format!("http://{addr}/query"),
            requests,
            handle: Some(handle),
        })
    }

    pub fn url(&self) -> &str {
        &self.url
    }

    /// HTTP requests received, including injected failures.
    pub fn requests(&self) -> usize {
        self.requests.load(Ordering::SeqCst)
    }
}

impl Drop for MockServer {
    fn drop(&mut self) {
        self.server.unblock();
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

fn json_header() -> Header {
    Header::from_bytes("content-type", "application/json").expect("static header")
}

fn serve(server: &Server, oracle: &dyn Oracle, behavior: &MockBehavior, requests: &AtomicUsize) {
    for mut request in server.incoming_requests() {
        let n = requests.fetch_add(1, Ordering::SeqCst);
        if let Some(d) = behavior.delay {
            thread::sleep(d);
        }
        let response = if n < behavior.fail_first {
            Response::from_string("{\"error\":\"injected failure\"}").with_status_code(503)
        } else if let Some(body) = &behavior.fixed_body {
            Response::from_string(body.clone())
        } else {
            let mut body = Vec::new();
            match request.as_reader().read_to_end(&mut body) {
                Err(e) => Response::from_string(e.to_string()).with_status_code(400),
                Ok(_) => match decode_request(&body) {
                    Err(e) => Response::from_string(e.to_string()).with_status_code(400),
                    Ok(img) => match oracle.query(&img) {
                        Ok(label) => Response::from_string(encode_verdict(label)),
                        Err(e) => Response::from_string(e.to_string()).with_status_code(500),
                    },
                },
            }
        };
        debug!("mock oracle answered request {n}");
        // The client may have timed out and hung up already.
        let _ = request.respond(response.with_header(json_header()));
    }
}
