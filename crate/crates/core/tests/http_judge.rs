//! Exercises the real HTTP transport against a local mock chat server:
//! request shape, bearer auth, image parts, and timeout-driven fallback.

use std::io::{Read, Write};
use std::net::TcpListener;
use std::sync::mpsc;
use std::time::Duration;

use proctor_core::judge::transport::{ChatRequest, ChatTransport, HttpTransport};
use proctor_core::judge::{Judge, JudgeConfig, JudgePolicy};
use proctor_core::pool::Question;
use proctor_core::selection::CandidateSet;

struct Received {
    request_line: String,
    authorization: Option<String>,
    body: serde_json::Value,
}

/// One-shot HTTP server: answers `n` requests with the given behavior and
/// reports what it saw.
fn spawn_server(
    n: usize,
    delay: Duration,
    status_body: (u16, String),
) -> (String, mpsc::Receiver<Received>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!(
        "http://{}/v1/chat/completions",
        listener.local_addr().unwrap()
    );
    let (tx, rx) = mpsc::channel();
    std::thread::spawn(move || {
        for _ in 0..n {
            let Ok((mut stream, _)) = listener.accept() else {
                return;
            };
            let mut buffer = Vec::new();
            let mut chunk = [0u8; 4096];
            let (request_line, authorization, body) = loop {
                let read = stream.read(&mut chunk).unwrap_or(0);
                if read == 0 {
                    break (String::new(), None, serde_json::Value::Null);
                }
                buffer.extend_from_slice(&chunk[..read]);
                if let Some(header_end) = find_header_end(&buffer) {
                    let headers = String::from_utf8_lossy(&buffer[..header_end]).into_owned();
                    let content_length = headers
                        .lines()
                        .find(|l| l.to_ascii_lowercase().starts_with("content-length:"))
                        .and_then(|l| l.split(':').nth(1))
                        .and_then(|v| v.trim().parse::<usize>().ok())
                        .unwrap_or(0);
                    while buffer.len() < header_end + 4 + content_length {
                        let read = stream.read(&mut chunk).unwrap_or(0);
                        if read == 0 {
                            break;
                        }
                        buffer.extend_from_slice(&chunk[..read]);
                    }
                    let request_line = headers.lines().next().unwrap_or("").to_string();
                    let authorization = headers
                        .lines()
                        .find(|l| l.to_ascii_lowercase().starts_with("authorization:"))
                        .map(|l| l.splitn(2, ':').nth(1).unwrap().trim().to_string());
                    let body: serde_json::Value = serde_json::from_slice(
                        &buffer[header_end + 4..header_end + 4 + content_length],
                    )
                    .unwrap_or(serde_json::Value::Null);
                    break (request_line, authorization, body);
                }
            };
            std::thread::sleep(delay);
            let (status, reply) = (&status_body.0, &status_body.1);
            let response = format!(
                "HTTP/1.1 {status} OK\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{reply}",
                reply.len()
            );
            let _ = stream.write_all(response.as_bytes());
            let _ = tx.send(Received {
                request_line,
                authorization,
                body,
            });
        }
    });
    (url, rx)
}

fn find_header_end(buffer: &[u8]) -> Option<usize> {
    buffer.windows(4).position(|w| w == b"\r\n\r\n")
}

fn assistant_reply(text: &str) -> String {
    serde_json::json!({
        "choices": [{"message": {"role": "assistant", "content": text}}]
    })
    .to_string()
}

#[test]
fn http_transport_posts_openai_shape_with_bearer_auth() {
    let (url, rx) = spawn_server(1, Duration::ZERO, (200, assistant_reply("hello")));
    std::env::set_var("TEST_JUDGE_KEY_A", "sekrit-token");
    let transport = HttpTransport::new(&url, "TEST_JUDGE_KEY_A", 5.0);
    let reply = transport
        .complete(&ChatRequest {
            model: "judge-1".into(),
            text: "pick a question".into(),
            images: vec!["https://img.example/q.png".into()],
            temperature: 0.0,
        })
        .unwrap();
    assert_eq!(reply, "hello");

    let seen = rx.recv_timeout(Duration::from_secs(5)).unwrap();
    assert!(seen.request_line.starts_with("POST /v1/chat/completions"));
    assert_eq!(seen.authorization.as_deref(), Some("Bearer sekrit-token"));
    assert_eq!(seen.body["model"], "judge-1");
    assert_eq!(seen.body["temperature"], 0.0);
    let content = &seen.body["messages"][0]["content"];
    assert_eq!(content[0]["type"], "text");
    assert_eq!(content[1]["image_url"]["url"], "https://img.example/q.png");
}

#[test]
fn llm_judge_round_trip_over_real_http() {
    let reply = assistant_reply(r#"{"summary":"s","think":"t","question_index":"q1"}"#);
    let (url, _rx) = spawn_server(1, Duration::ZERO, (200, reply));
    let judge = Judge::from_config(JudgeConfig {
        policy: JudgePolicy::Llm,
        endpoint: Some(url),
        model_name: Some("judge-1".into()),
        max_retries: 0,
        timeout_s: 5.0,
        ..JudgeConfig::default()
    })
    .unwrap();
    let candidates = CandidateSet {
        ids: vec!["q1".into(), "q2".into()],
        difficulties: vec![0.1, -0.3],
        min_distances: vec![0.2, 0.9],
        band_relaxed: false,
    };
    let questions: Vec<Question> = candidates
        .ids
        .iter()
        .map(|id| Question {
            id: id.clone(),
            text: format!("about {id}"),
            image_ref: None,
            options: None,
            answer_key: None,
            category: None,
            embedding: None,
            difficulty: None,
        })
        .collect();
    let refs: Vec<&Question> = questions.iter().collect();
    let decision = judge
        .select_question("(empty)", 0.0, &candidates, &refs, 1)
        .unwrap();
    assert_eq!(decision.chosen_id, "q1");
    assert!(!decision.fallback_used);
    assert_eq!(decision.summary, "s");
}

#[test]
fn timeout_falls_back_to_farthest() {
    let reply = assistant_reply(r#"{"question_index":"q1"}"#);
    let (url, _rx) = spawn_server(1, Duration::from_secs(3), (200, reply));
    let judge = Judge::from_config(JudgeConfig {
        policy: JudgePolicy::Llm,
        endpoint: Some(url),
        model_name: Some("judge-1".into()),
        max_retries: 0,
        timeout_s: 0.2,
        ..JudgeConfig::default()
    })
    .unwrap();
    let candidates = CandidateSet {
        ids: vec!["q1".into(), "q2".into()],
        difficulties: vec![0.1, -0.3],
        min_distances: vec![0.2, 0.9],
        band_relaxed: false,
    };
    let questions: Vec<Question> = candidates
        .ids
        .iter()
        .map(|id| Question {
            id: id.clone(),
            text: String::new(),
            image_ref: None,
            options: None,
            answer_key: None,
            category: None,
            embedding: None,
            difficulty: None,
        })
        .collect();
    let refs: Vec<&Question> = questions.iter().collect();
    let decision = judge
        .select_question("(empty)", 0.0, &candidates, &refs, 1)
        .unwrap();
    assert!(decision.fallback_used);
    assert_eq!(decision.chosen_id, "q2"); // farthest by min distance
}

#[test]
fn http_error_status_falls_back() {
    let (url, _rx) = spawn_server(1, Duration::ZERO, (500, "{}".into()));
    let judge = Judge::from_config(JudgeConfig {
        policy: JudgePolicy::Llm,
        endpoint: Some(url),
        model_name: Some("judge-1".into()),
        max_retries: 0,
        timeout_s: 5.0,
        ..JudgeConfig::default()
    })
    .unwrap();
    let candidates = CandidateSet {
        ids: vec!["a".into()],
        difficulties: vec![0.0],
        min_distances: vec![0.0],
        band_relaxed: false,
    };
    let question = Question {
        id: "a".into(),
        text: String::new(),
        image_ref: None,
        options: None,
        answer_key: None,
        category: None,
        embedding: None,
        difficulty: None,
    };
    let decision = judge
        .select_question("(empty)", 0.0, &candidates, &[&question], 1)
        .unwrap();
    assert!(decision.fallback_used);
    assert_eq!(decision.chosen_id, "a");
}
