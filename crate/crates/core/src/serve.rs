//! Static file server for exported map directories.

use std::fs;
use std::path::{Component, Path, PathBuf};
use std::sync::Arc;
use std::thread;

use tiny_http::{Header, Response, Server};

use crate::error::{Error, Result};

const WORKERS: usize = 4;

pub fn content_type(path: &Path) -> &'static str {
    match path.extension().and_then(|e| e.to_str()) {
        Some("json") => "application/json",
        Some("html") | Some("htm") => "text/html; charset=utf-8",
        Some("js") | Some("mjs") => "text/javascript",
        Some("css") => "text/css",
        Some("svg") => "image/svg+xml",
        Some("png") => "image/png",
        Some("txt") => "text/plain; charset=utf-8",
        _ => "application/octet-stream",
    }
}

/// File under `root` named by a request URL; `None` if the URL leaves the
/// root.
fn resolve(root: &Path, url: &str) -> Option<PathBuf> {
    let path = url.split(['?', '#']).next().unwrap_or("");
    let rel = Path::new(path.trim_start_matches('/'));
    if rel.components().any(|c| !matches!(c, Component::Normal(_))) {
        return None;
    }
    let mut full = root.join(rel);
    if full.is_dir() {
        full.push("index.html");
    }
    Some(full)
}

/// A bound server over one directory.
pub struct StaticServer {
    server: Arc<Server>,
    root: PathBuf,
}

impl StaticServer {
    /// Binds `addr` (e.g. `127.0.0.1:8000`, port 0 for any free port).
    pub fn bind(dir: impl AsRef<Path>, addr: &str) -> Result<StaticServer> {
        let root = dir.as_ref().to_path_buf();
        if !root.is_dir() {
            return Err(Error::io(
                &root,
                std::io::Error::new(std::io::ErrorKind::NotFound, "not a directory"),
            ));
        }
        let server = Server::http(addr).map_err(|e| Error::Server(format!("cannot bind {addr}: {e}")))?;
        Ok(StaticServer {
            server: Arc::new(server),
            root,
        })
    }

    pub fn port(&self) -> u16 {
        self.server
            .server_addr()
            .to_ip()
            .map(|a| a.port())
            .unwrap_or_default()
    }

    /// Serves requests until the process exits.
    pub fn run(self) {
        let handles: Vec<_> = (0..WORKERS)
            .map(|_| {
                let server = Arc::clone(&self.server);
                let root = self.root.clone();
                thread::spawn(move || {
                    for req in server.incoming_requests() {
                        let found = resolve(&root, req.url()).and_then(|p| fs::read(&p).ok().map(|b| (p, b)));
                        let res = match found {
                            Some((path, bytes)) => {
                                let ct = Header::from_bytes("Content-Type", content_type(&path)).expect("static header");
                                req.respond(Response::from_data(bytes).with_header(ct))
                            }
                            None => req.respond(Response::from_string("not found").with_status_code(404)),
                        };
                        if let Err(e) = res {
                            log::warn!("response failed: {e}");
                        }
                    }
                })
            })
            .collect();
        for h in handles {
            let _ = h.join();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::{Read, Write};
    use std::net::TcpStream;

    fn get(port: u16, path: &str) -> (u16, String, Vec<u8>) {
        let mut s = TcpStream::connect(("127.0.0.1", port)).unwrap();
        write!(s, "GET {path} HTTP/1.1\r\nHost: localhost\r\nConnection: close\r\n\r\n").unwrap();
        let mut buf = Vec::new();
        s.read_to_end(&mut buf).unwrap();
        let split = buf.windows(4).position(|w| w == b"\r\n\r\n").unwrap();
        let head = String::from_utf8_lossy(&buf[..split]).to_string();
        let status = head.split_whitespace().nth(1).unwrap().parse().unwrap();
        (status, head, buf[split + 4..].to_vec())
    }

    #[test]
    fn serves_files_and_404s() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("map.json"), b"{\"a\": 1}").unwrap();
        fs::write(dir.path().join("index.html"), b"<html></html>").unwrap();
        let server = StaticServer::bind(dir.path(), "127.0.0.1:0").unwrap();
        let port = server.port();
        thread::spawn(move || server.run());

        let (status, head, body) = get(port, "/map.json");
        assert_eq!(status, 200);
        assert!(head.to_ascii_lowercase().contains("content-type: application/json"));
        assert_eq!(body, b"{\"a\": 1}");
        let (status, head, _) = get(port, "/");
        assert_eq!(status, 200);
        assert!(head.contains("text/html"));
        assert_eq!(get(port, "/missing").0, 404);
        assert_eq!(get(port, "/../etc/passwd").0, 404);

        let bodies: Vec<Vec<u8>> = (0..8)
            .map(|_| thread::spawn(move || get(port, "/map.json").2))
            .collect::<Vec<_>>()
            .into_iter()
            .map(|h| h.join().unwrap())
            .collect();
        assert!(bodies.iter().all(|b| b == &bodies[0]));
    }

    #[test]
    fn missing_dir_is_an_error() {
        assert!(StaticServer::bind("/nonexistent/carto", "127.0.0.1:0").is_err());
    }
}
