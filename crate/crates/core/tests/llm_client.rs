use hindsight::llm::*;
use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::{Arc, Mutex};

/// Serves one scripted `(status, body)` reply per connection and records
/// request bodies.
fn stub(replies: Vec<(u16, String)>) -> (String, Arc<Mutex<Vec<String>>>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let seen = Arc::new(Mutex::new(Vec::new()));
    let log = seen.clone();
    std::thread::spawn(move || {
        for (status, body) in replies {
            let Ok((stream, _)) = listener.accept() else { return };
            let mut reader = BufReader::new(stream);
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
            }
            let mut req = vec![0; len];
            reader.read_exact(&mut req).unwrap();
            log.lock().unwrap().push(String::from_utf8(req).unwrap());
            let mut stream = reader.into_inner();
            let resp = format!(
                "HTTP/1.1 {status} X\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
                body.len()
            );
            stream.write_all(resp.as_bytes()).unwrap();
        }
    });
    (format!("http://{addr}/v1"), seen)
}

fn ok(text: &str) -> (u16, String) {
    (200, serde_json::json!({"choices": [{"message": {"role": "assistant", "content": text}}]}).to_string())
}

fn client(base_url: String) -> ChatClient {
    ChatClient::new(EndpointConfig {
        base_url,
        api_key_env: "HRL_TEST_UNSET_KEY".into(),
        model: "stub-model".into(),
        backoff_ms: 1,
        max_backoff_ms: 4,
        timeout_secs: 5,
        ..Default::default()
    })
    .unwrap()
}

fn exchange() -> ChatExchange {
    ChatExchange { messages: vec![ChatMessage::system("s"), ChatMessage::user("u")], temperature: 0.0, max_tokens: 16, model: String::new() }
}

#[test]
fn echoes_assistant_text_verbatim() {
    let (url, seen) = stub(vec![ok("Final Donation Amount: 1.0")]);
    let text = client(url).chat(&exchange()).unwrap();
    assert_eq!(text, "Final Donation Amount: 1.0");
    let body: serde_json::Value = serde_json::from_str(&seen.lock().unwrap()[0]).unwrap();
    assert_eq!(body["model"], "stub-model");
    assert_eq!(body["messages"][0]["role"], "system");
    assert_eq!(body["temperature"], 0.0);
}

#[test]
fn retries_after_rate_limit() {
    let (url, seen) = stub(vec![(429, "{}".into()), ok("done")]);
    let c = client(url);
    assert_eq!(c.chat(&exchange()).unwrap(), "done");
    assert_eq!(seen.lock().unwrap().len(), 2);
}

#[test]
fn gives_up_after_five_server_errors() {
    let (url, seen) = stub(vec![(500, "boom".into()); 5]);
    match client(url).chat(&exchange()) {
        Err(LlmError::Http { status: 500, attempts: 5, .. }) => {}
        other => panic!("unexpected {other:?}"),
    }
    assert_eq!(seen.lock().unwrap().len(), 5);
}

#[test]
fn client_errors_are_not_retried() {
    let (url, seen) = stub(vec![(400, "bad".into()), ok("never")]);
    assert!(matches!(client(url).chat(&exchange()), Err(LlmError::Http { status: 400, attempts: 1, .. })));
    assert_eq!(seen.lock().unwrap().len(), 1);
}

#[test]
fn malformed_body_is_reported() {
    let (url, _) = stub(vec![(200, "{\"nope\": 1}".into())]);
    assert!(matches!(client(url).chat(&exchange()), Err(LlmError::MalformedResponse(_))));
}

#[test]
fn exchange_must_start_with_system() {
    let (url, _) = stub(vec![]);
    let mut ex = exchange();
    ex.messages.remove(0);
    assert!(matches!(client(url).chat(&ex), Err(LlmError::Config(_))));
}
