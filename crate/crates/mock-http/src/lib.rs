//! Minimal in-process HTTP/1.1 server for offline tests.
//!
//! Binds to an ephemeral loopback port, dispatches each request to a
//! user-supplied handler and closes the connection after every response.
//! Good enough for exercising HTTP clients against canned payloads; not a
//! web server.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;

/// A parsed inbound request.
#[derive(Debug, Clone)]
pub struct Request {
    pub method: String,
    /// Path without the query string.
    pub path: String,
    /// Raw query string (no leading '?'), empty if absent.
    pub query: String,
    pub headers: Vec<(String, String)>,
    pub body: Vec<u8>,
}

impl Request {
    /// First value of a query parameter, percent-decoding not applied.
    pub fn query_param(&self, name: &str) -> Option<&str> {
        self.query.split('&').find_map(|pair| {
            let (k, v) = pair.split_once('=')?;
            (k == name).then_some(v)
        })
    }
}

/// Response returned by a handler.
#[derive(Debug, Clone)]
pub struct Response {
    pub status: u16,
    pub content_type: String,
    pub body: Vec<u8>,
}

impl Response {
    pub fn ok(content_type: &str, body: Vec<u8>) -> Self {
        Response {
            status: 200,
            content_type: content_type.to_string(),
            body,
        }
    }

    pub fn json(body: &str) -> Self {
        Self::ok("application/json", body.as_bytes().to_vec())
    }

    pub fn status(status: u16) -> Self {
        Response {
            status,
            content_type: "text/plain".to_string(),
            body: Vec::new(),
        }
    }
}

pub type Handler = dyn Fn(&Request) -> Response + Send + Sync;

/// A running mock server. Shuts down when dropped.
pub struct MockServer {
    addr: std::net::SocketAddr,
    stop: Arc<AtomicBool>,
    hits: Arc<AtomicU64>,
    accept_thread: Option<JoinHandle<()>>,
}

impl MockServer {
    /// Start a server on an ephemeral loopback port.
    pub fn start<F>(handler: F) -> std::io::Result<MockServer>
    where
        F: Fn(&Request) -> Response + Send + Sync + 'static,
    {
        let listener = TcpListener::bind("127.0.0.1:0")?;
        let addr = listener.local_addr()?;
        let stop = Arc::new(AtomicBool::new(false));
        let hits = Arc::new(AtomicU64::new(0));
        let handler: Arc<Handler> = Arc::new(handler);

        let stop2 = Arc::clone(&stop);
        let hits2 = Arc::clone(&hits);
        let accept_thread = std::thread::spawn(move || {
            for conn in listener.incoming() {
                if stop2.load(Ordering::SeqCst) {
                    break;
                }
                let Ok(stream) = conn else { continue };
                let handler = Arc::clone(&handler);
                let hits = Arc::clone(&hits2);
                std::thread::spawn(move || {
                    if serve_one(stream, &handler).is_ok() {
                        hits.fetch_add(1, Ordering::SeqCst);
                    }
                });
            }
        });

        Ok(MockServer {
            addr,
            stop,
            hits,
            accept_thread: Some(accept_thread),
        })
    }

    /// Base URL of the server, e.g. `http://127.0.0.1:34127`.
    pub fn base_url(&self) -> String {
        format!("http://{}", self.addr)
    }

    /// Number of requests served so far.
    pub fn hit_count(&self) -> u64 {
        self.hits.load(Ordering::SeqCst)
    }
}

impl Drop for MockServer {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        // unblock the accept loop
        let _ = TcpStream::connect(self.addr);
        if let Some(t) = self.accept_thread.take() {
            let _ = t.join();
        }
    }
}

fn serve_one(stream: TcpStream, handler: &Arc<Handler>) -> std::io::Result<()> {
    let mut reader = BufReader::new(stream.try_clone()?);

    let mut request_line = String::new();
    reader.read_line(&mut request_line)?;
    let mut parts = request_line.split_whitespace();
    let method = parts.next().unwrap_or("").to_string();
    let target = parts.next().unwrap_or("").to_string();
    if method.is_empty() || target.is_empty() {
        return Err(std::io::Error::new(
            std::io::ErrorKind::InvalidData,
            "bad request line",
        ));
    }

    let mut headers = Vec::new();
    let mut content_length = 0usize;
    loop {
        let mut line = String::new();
        reader.read_line(&mut line)?;
        let line = line.trim_end().to_string();
        if line.is_empty() {
            break;
        }
        if let Some((k, v)) = line.split_once(':') {
            let k = k.trim().to_string();
            let v = v.trim().to_string();
            if k.eq_ignore_ascii_case("content-length") {
                content_length = v.parse().unwrap_or(0);
            }
            headers.push((k, v));
        }
    }

    let mut body = vec![0u8; content_length];
    if content_length > 0 {
        reader.read_exact(&mut body)?;
    }

    let (path, query) = match target.split_once('?') {
        Some((p, q)) => (p.to_string(), q.to_string()),
        None => (target, String::new()),
    };

    let request = Request {
        method,
        path,
        query,
        headers,
        body,
    };
    let response = handler(&request);

    let mut stream = reader.into_inner();
    let head = format!(
        "HTTP/1.1 {} {}\r\nContent-Type: {}\r\nContent-Length: {}\r\nConnection: close\r\n\r\n",
        response.status,
        status_text(response.status),
        response.content_type,
        response.body.len()
    );
    stream.write_all(head.as_bytes())?;
    stream.write_all(&response.body)?;
    stream.flush()?;
    Ok(())
}

fn status_text(status: u16) -> &'static str {
    match status {
        200 => "OK",
        204 => "No Content",
        400 => "Bad Request",
        403 => "Forbidden",
        404 => "Not Found",
        429 => "Too Many Requests",
        500 => "Internal Server Error",
        502 => "Bad Gateway",
        503 => "Service Unavailable",
        _ => "Unknown",
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn serves_and_counts() {
        let server = MockServer::start(|req| {
            assert_eq!(req.method, "GET");
            Response::ok("text/plain", format!("path={}", req.path).into_bytes())
        })
        .unwrap();

        let mut stream = TcpStream::connect(server.base_url().trim_start_matches("http://")).unwrap();
        stream
            .write_all(b"GET /hello?a=1 HTTP/1.1\r\nHost: x\r\n\r\n")
            .unwrap();
        let mut out = String::new();
        stream.read_to_string(&mut out).unwrap();
        assert!(out.contains("200 OK"), "{out}");
        assert!(out.contains("path=/hello"), "{out}");
    }

    #[test]
    fn query_param_lookup() {
        let req = Request {
            method: "GET".into(),
            path: "/".into(),
            query: "size=640x640&heading=90".into(),
            headers: vec![],
            body: vec![],
        };
        assert_eq!(req.query_param("heading"), Some("90"));
        assert_eq!(req.query_param("missing"), None);
    }
}
