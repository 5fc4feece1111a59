//! ReqwestTransport and the live clients against a loopback server.

use std::io::{Read, Write};
use std::net::TcpListener;
use std::sync::Arc;
use std::thread;

use flate2::write::GzEncoder;
use flate2::Compression;

use omprag_core::generate::{generate, GenerationError, GenerationRequest, LiveChatConfig, LiveChatProvider};
use omprag_core::http::{HttpRequest, HttpTransport, ReqwestTransport, RetryPolicy};

type Reply = (u16, Vec<(&'static str, &'static str)>, Vec<u8>);

/// Serves `replies.len()` connections, one canned response each, and returns
/// the base URL plus a handle yielding the raw requests.
fn serve(replies: Vec<Reply>) -> (String, thread::JoinHandle<Vec<String>>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}", listener.local_addr().unwrap());
    let handle = thread::spawn(move || {
        let mut seen = Vec::new();
        for (status, headers, body) in replies {
            let (mut stream, _) = listener.accept().unwrap();
            let mut buf = Vec::new();
            let mut chunk = [0u8; 4096];
            // read headers, then the declared body length
            loop {
                let n = stream.read(&mut chunk).unwrap();
                buf.extend_from_slice(&chunk[..n]);
                if let Some(end) = buf.windows(4).position(|w| w == b"\r\n\r\n") {
                    let head = String::from_utf8_lossy(&buf[..end]).to_ascii_lowercase();
                    let len = head
                        .lines()
                        .find_map(|l| l.strip_prefix("content-length:").map(|v| v.trim().parse::<usize>().unwrap()))
                        .unwrap_or(0);
                    while buf.len() < end + 4 + len {
                        let n = stream.read(&mut chunk).unwrap();
                        buf.extend_from_slice(&chunk[..n]);
                    }
                    break;
                }
                if n == 0 {
                    break;
                }
            }
            seen.push(String::from_utf8_lossy(&buf).into_owned());
            let mut resp = format!("HTTP/1.1 {status} X\r\ncontent-length: {}\r\nconnection: close\r\n", body.len());
            for (k, v) in headers {
                resp.push_str(&format!("{k}: {v}\r\n"));
            }
            resp.push_str("\r\n");
            stream.write_all(resp.as_bytes()).unwrap();
            stream.write_all(&body).unwrap();
        }
        seen
    });
    (url, handle)
}

#[test]
fn unauthorized_is_reported_without_retry() {
    let (url, server) = serve(vec![(401, vec![], br#"{"error":"invalid api key"}"#.to_vec())]);
    let config = LiveChatConfig {
        endpoint: format!("{url}/v1/chat/completions"),
        retry: RetryPolicy::default(),
        ..LiveChatConfig::default()
    };
    let provider = LiveChatProvider::with_key(config, Arc::new(ReqwestTransport::new().unwrap()), Some("sk-bad".into()));
    let err = generate(&GenerationRequest::new("case1", "parallelize this"), &provider).unwrap_err();
    match err {
        GenerationError::Provider { status, message } => {
            assert_eq!(status, Some(401));
            assert!(message.contains("invalid api key"));
        }
        other => panic!("unexpected {other:?}"),
    }
    let requests = server.join().unwrap();
    assert_eq!(requests.len(), 1, "401 must not be retried");
    assert!(requests[0].to_ascii_lowercase().contains("authorization: bearer sk-bad"));
    assert!(requests[0].contains("\"parallelize this\""));
}

#[test]
fn gzip_bodies_are_decoded() {
    let mut enc = GzEncoder::new(Vec::new(), Compression::default());
    enc.write_all(br#"{"items":[],"has_more":false}"#).unwrap();
    let (url, server) = serve(vec![(200, vec![("content-encoding", "gzip")], enc.finish().unwrap())]);
    let resp = ReqwestTransport::new().unwrap().send(&HttpRequest::get(format!("{url}/x"))).unwrap();
    assert_eq!(resp.status, 200);
    assert_eq!(resp.body, r#"{"items":[],"has_more":false}"#);
    server.join().unwrap();
}
