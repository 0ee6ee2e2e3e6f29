//! Response generation against a local one-shot HTTP server.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::thread::JoinHandle;

use triage_core::respond::{generate_response, GenerationConfig, ResponseSource};
use triage_core::Error;

/// Serves one request and hands back what it received.
fn serve_once(status: u16, body: &'static str) -> (String, JoinHandle<(String, String)>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/generate", listener.local_addr().unwrap());
    let handle = std::thread::spawn(move || {
        let (stream, _) = listener.accept().unwrap();
        let mut reader = BufReader::new(stream.try_clone().unwrap());
        let mut head = String::new();
        let mut len = 0;
        loop {
            let mut line = String::new();
            reader.read_line(&mut line).unwrap();
            if line == "\r\n" || line.is_empty() {
                break;
            }
            if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                len = v.trim().parse().unwrap();
            }
            head.push_str(&line);
        }
        let mut payload = vec![0; len];
        reader.read_exact(&mut payload).unwrap();
        let mut stream = stream;
        write!(
            stream,
            "HTTP/1.1 {status} X\r\nContent-Type: text/plain\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
            body.len()
        )
        .unwrap();
        (head, String::from_utf8(payload).unwrap())
    });
    (url, handle)
}

#[test]
fn external_reply_is_truncated_to_limit() {
    let (url, server) = serve_once(200, "Sorry about the wait. We spoke to the team. Hope to see you again!");
    let cfg = GenerationConfig { endpoint: Some(url), auth_token: Some("k3y".into()), ..Default::default() };
    let draft = generate_response("the prompt", &[], &cfg).unwrap();
    let (head, payload) = server.join().unwrap();

    assert_eq!(draft.source, ResponseSource::External);
    assert_eq!(draft.response, "Sorry about the wait. We spoke to the team.");
    assert!(draft.truncated);
    assert_eq!(draft.sentence_count, 2);
    assert!(head.to_ascii_lowercase().contains("authorization: bearer k3y"));
    let json: serde_json::Value = serde_json::from_str(&payload).unwrap();
    assert_eq!(json["prompt"], "the prompt");
    assert_eq!(json["max_sentences"], 2);
}

#[test]
fn error_status_surfaces_without_fallback() {
    let (url, server) = serve_once(502, "upstream down");
    let cfg = GenerationConfig { endpoint: Some(url), fallback_enabled: false, ..Default::default() };
    let err = generate_response("p", &[], &cfg).unwrap_err();
    server.join().unwrap();
    assert!(matches!(err, Error::Endpoint { status: Some(502), .. }), "{err:?}");
}

#[test]
fn error_status_falls_back_to_template() {
    let (url, server) = serve_once(500, "boom");
    let cfg = GenerationConfig { endpoint: Some(url), ..Default::default() };
    let draft = generate_response("p", &["waiter".into(), "noise".into()], &cfg).unwrap();
    server.join().unwrap();
    assert_eq!(draft.source, ResponseSource::Template);
    assert!(draft.response.contains("waiter and noise"));
    assert!(draft.sentence_count <= 2);
}
