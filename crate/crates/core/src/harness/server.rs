//! Minimal static file server for fixture trees. One thread per
//! connection, `Connection: close`, GET and HEAD only.

use std::io::{BufRead, BufReader, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::path::{Component, Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::Duration;

use serde::Serialize;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AccessEntry {
    pub method: String,
    pub path: String,
    pub status: u16,
    pub bytes: usize,
}

pub struct FixtureServer {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    log: Arc<Mutex<Vec<AccessEntry>>>,
    thread: Option<JoinHandle<()>>,
}

impl FixtureServer {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn port(&self) -> u16 {
        self.addr.port()
    }

    /// `http://localhost:PORT/`
    pub fn base_url(&self) -> String {
        format!("http://localhost:{}/", self.addr.port())
    }

    pub fn access_log(&self) -> Vec<AccessEntry> {
        self.log.lock().unwrap().clone()
    }

    /// Blocks until [`stop`](Self::stop) is called from another handle or
    /// the process exits.
    pub fn wait(mut self) {
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }

    pub fn stop(&mut self) {
        if self.stop.swap(true, Ordering::SeqCst) {
            return;
        }
        // wake the accept loop
        let _ = TcpStream::connect_timeout(&self.addr, Duration::from_secs(1));
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

impl Drop for FixtureServer {
    fn drop(&mut self) {
        self.stop();
    }
}

/// Serves `root` on 127.0.0.1. Port 0 picks a free port.
pub fn serve_fixtures(root: &Path, port: u16) -> std::io::Result<FixtureServer> {
    let root = root.canonicalize()?;
    let listener = TcpListener::bind(("127.0.0.1", port))?;
    let addr = listener.local_addr()?;
    let stop = Arc::new(AtomicBool::new(false));
    let log = Arc::new(Mutex::new(Vec::new()));
    let thread = {
        let stop = stop.clone();
        let log = log.clone();
        std::thread::spawn(move || {
            for conn in listener.incoming() {
                if stop.load(Ordering::SeqCst) {
                    break;
                }
                let Ok(stream) = conn else { continue };
                let root = root.clone();
                let log = log.clone();
                std::thread::spawn(move || {
                    if let Some(entry) = handle(stream, &root) {
                        log.lock().unwrap().push(entry);
                    }
                });
            }
        })
    };
    Ok(FixtureServer {
        addr,
        stop,
        log,
        thread: Some(thread),
    })
}

fn content_type(path: &Path) -> &'static str {
    match path
        .extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase())
        .as_deref()
    {
        Some("html") | Some("htm") => "text/html; charset=utf-8",
        Some("txt") => "text/plain; charset=utf-8",
        Some("json") => "application/json",
        Some("png") => "image/png",
        Some("jpg") | Some("jpeg") => "image/jpeg",
        Some("gif") => "image/gif",
        Some("bmp") => "image/bmp",
        Some("webp") => "image/webp",
        Some("mp4") => "video/mp4",
        Some("webm") => "video/webm",
        Some("mov") => "video/quicktime",
        Some("avi") => "video/x-msvideo",
        Some("mkv") => "video/x-matroska",
        _ => "application/octet-stream",
    }
}

fn percent_decode(s: &str) -> Option<String> {
    let bytes = s.as_bytes();
    let mut out = Vec::with_capacity(bytes.len());
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'%' {
            let hex = std::str::from_utf8(bytes.get(i + 1..i + 3)?).ok()?;
            out.push(u8::from_str_radix(hex, 16).ok()?);
            i += 3;
        } else {
            out.push(bytes[i]);
            i += 1;
        }
    }
    String::from_utf8(out).ok()
}

enum Resolved {
    File(PathBuf),
    Redirect(String),
    Missing,
}

fn resolve(root: &Path, raw_path: &str) -> Resolved {
    let path = raw_path.split(['?', '#']).next().unwrap_or("/");
    let Some(decoded) = percent_decode(path) else {
        return Resolved::Missing;
    };
    let rel = Path::new(decoded.trim_start_matches('/'));
    if rel.components().any(|c| !matches!(c, Component::Normal(_))) {
        return Resolved::Missing;
    }
    let full = root.join(rel);
    if full.is_dir() {
        if !path.ends_with('/') {
            return Resolved::Redirect(format!("{path}/"));
        }
        let index = full.join("index.html");
        return if index.is_file() {
            Resolved::File(index)
        } else {
            Resolved::Missing
        };
    }
    if full.is_file() {
        Resolved::File(full)
    } else {
        Resolved::Missing
    }
}

fn handle(stream: TcpStream, root: &Path) -> Option<AccessEntry> {
    stream
        .set_read_timeout(Some(Duration::from_secs(10)))
        .ok()?;
    let mut reader = BufReader::new(stream.try_clone().ok()?);
    let mut request_line = String::new();
    reader.read_line(&mut request_line).ok()?;
    if request_line.trim().is_empty() {
        return None;
    }
    loop {
        let mut line = String::new();
        match reader.read_line(&mut line) {
            Ok(0) => break,
            Ok(_) if line == "\r\n" || line == "\n" => break,
            Ok(_) => {}
            Err(_) => return None,
        }
    }
    let mut parts = request_line.split_whitespace();
    let method = parts.next().unwrap_or("").to_string();
    let path = parts.next().unwrap_or("/").to_string();

    let (status, reason, body, ctype, location) = if method != "GET" && method != "HEAD" {
        (
            405,
            "Method Not Allowed",
            b"method not allowed\n".to_vec(),
            "text/plain; charset=utf-8",
            None,
        )
    } else {
        match resolve(root, &path) {
            Resolved::File(f) => match std::fs::read(&f) {
                Ok(bytes) => (200, "OK", bytes, content_type(&f), None),
                Err(_) => (
                    500,
                    "Internal Server Error",
                    b"read error\n".to_vec(),
                    "text/plain; charset=utf-8",
                    None,
                ),
            },
            Resolved::Redirect(to) => (
                301,
                "Moved Permanently",
                Vec::new(),
                "text/plain; charset=utf-8",
                Some(to),
            ),
            Resolved::Missing => (
                404,
                "Not Found",
                b"not found\n".to_vec(),
                "text/plain; charset=utf-8",
                None,
            ),
        }
    };

    let mut head = format!(
        "HTTP/1.1 {status} {reason}\r\nContent-Type: {ctype}\r\nContent-Length: {}\r\nConnection: close\r\n",
        body.len()
    );
    if status == 405 {
        head += "Allow: GET, HEAD\r\n";
    }
    if let Some(to) = location {
        head += &format!("Location: {to}\r\n");
    }
    head += "\r\n";
    let mut stream = stream;
    let sent = if method == "HEAD" { 0 } else { body.len() };
    let _ = stream.write_all(head.as_bytes());
    if sent > 0 {
        let _ = stream.write_all(&body);
    }
    let _ = stream.flush();
    Some(AccessEntry {
        method,
        path,
        status,
        bytes: sent,
    })
}
