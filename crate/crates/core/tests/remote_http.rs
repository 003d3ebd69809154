//! Remote-backend behavior against a real (local) HTTP server.
//!
//! A minimal hand-rolled HTTP/1.1 responder on a loopback socket serves a
//! scripted sequence of responses and records every request it saw, so the
//! tests can assert retry counts, request bodies, header contents, and
//! batch splits without any network or external service. Each response
//! closes its connection, forcing the client to reconnect per attempt.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::Mutex;
use std::thread;
use std::time::Duration;

use hyde_core::encoder::{embed_texts, EncoderBackend, EncoderConfig};
use hyde_core::generator::{
    builtin_template, generate_hypotheticals, GenerationConfig, GeneratorBackend, RemoteApi,
};
use hyde_core::types::QueryRecord;
use hyde_core::HydeError;

/// One scripted response.
struct Exchange {
    status: u16,
    body: String,
}

fn json_response(status: u16, body: serde_json::Value) -> Exchange {
    Exchange {
        status,
        body: body.to_string(),
    }
}

/// What the server observed for one request.
struct Received {
    path: String,
    auth: Option<String>,
    body: serde_json::Value,
}

fn read_request(stream: &mut TcpStream) -> Received {
    stream
        .set_read_timeout(Some(Duration::from_secs(10)))
        .unwrap();
    let mut reader = BufReader::new(stream);
    let mut request_line = String::new();
    reader.read_line(&mut request_line).unwrap();
    let path = request_line
        .split_whitespace()
        .nth(1)
        .unwrap_or("?")
        .to_string();

    let mut content_length = 0usize;
    let mut auth = None;
    loop {
        let mut line = String::new();
        reader.read_line(&mut line).unwrap();
        let line = line.trim_end();
        if line.is_empty() {
            break;
        }
        if let Some((name, value)) = line.split_once(':') {
            let name = name.trim().to_ascii_lowercase();
            let value = value.trim();
            if name == "content-length" {
                content_length = value.parse().unwrap();
            } else if name == "authorization" {
                auth = Some(value.to_string());
            }
        }
    }
    let mut body = vec![0u8; content_length];
    reader.read_exact(&mut body).unwrap();
    let body = serde_json::from_slice(&body).unwrap_or(serde_json::Value::Null);
    Received { path, auth, body }
}

/// Serve the scripted exchanges in order (one connection each), returning
/// the recorded requests once all have been consumed.
fn spawn_server(responses: Vec<Exchange>) -> (String, thread::JoinHandle<Vec<Received>>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let handle = thread::spawn(move || {
        let mut received = Vec::new();
        for exchange in responses {
            let (mut stream, _) = listener.accept().unwrap();
            received.push(read_request(&mut stream));
            let response = format!(
                "HTTP/1.1 {} STATUS\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{}",
                exchange.status,
                exchange.body.len(),
                exchange.body
            );
            stream.write_all(response.as_bytes()).unwrap();
            stream.flush().unwrap();
        }
        received
    });
    (format!("http://{addr}/v1/embed"), handle)
}

/// Serializes tests that mutate process-global environment variables.
static ENV_LOCK: Mutex<()> = Mutex::new(());

fn remote_encoder(url: &str, dim: usize, max_attempts: u32) -> EncoderConfig {
    let mut cfg = EncoderConfig {
        backend: EncoderBackend::Remote,
        endpoint_url: Some(url.to_string()),
        model_name: Some("test-encoder".to_string()),
        dim,
        parallelism: 1,
        ..EncoderConfig::default()
    };
    cfg.retry.max_attempts = max_attempts;
    cfg.retry.base_delay_ms = 1;
    cfg
}

fn rows(values: &[Vec<f64>]) -> serde_json::Value {
    serde_json::json!(values)
}

#[test]
fn encoder_retries_server_errors_then_succeeds() {
    let (url, server) = spawn_server(vec![
        Exchange {
            status: 500,
            body: "boom".to_string(),
        },
        json_response(429, serde_json::json!({"error": "slow down"})),
        json_response(200, rows(&[vec![1.0, 2.0]])),
    ]);
    let cfg = remote_encoder(&url, 2, 5);
    let vectors = embed_texts(&cfg, &["hello".to_string()]).unwrap();
    assert_eq!(vectors.len(), 1);
    assert_eq!(vectors[0].values(), &[1.0, 2.0]);

    let seen = server.join().unwrap();
    assert_eq!(seen.len(), 3, "two failures then one success");
    // Every attempt must carry the identical request body.
    assert_eq!(seen[0].body, seen[1].body);
    assert_eq!(seen[1].body, seen[2].body);
    assert_eq!(seen[0].body["model"], "test-encoder");
    assert_eq!(seen[0].body["input"], serde_json::json!(["hello"]));
    assert!(seen[0].path.ends_with("/v1/embed"));
}

#[test]
fn encoder_reports_attempt_count_when_budget_exhausted() {
    let (url, server) = spawn_server(vec![
        Exchange {
            status: 503,
            body: "down".to_string(),
        },
        Exchange {
            status: 503,
            body: "down".to_string(),
        },
        Exchange {
            status: 503,
            body: "down".to_string(),
        },
    ]);
    let cfg = remote_encoder(&url, 2, 3);
    match embed_texts(&cfg, &["hello".to_string()]).unwrap_err() {
        HydeError::Remote { attempts, message } => {
            assert_eq!(attempts, 3);
            assert!(message.contains("503"), "message: {message}");
        }
        other => panic!("unexpected error {other:?}"),
    }
    assert_eq!(server.join().unwrap().len(), 3);
}

#[test]
fn encoder_client_errors_are_fatal_without_retry() {
    let (url, server) = spawn_server(vec![json_response(
        400,
        serde_json::json!({"error": "bad model"}),
    )]);
    let cfg = remote_encoder(&url, 2, 5);
    match embed_texts(&cfg, &["hello".to_string()]).unwrap_err() {
        HydeError::Remote { attempts, message } => {
            assert_eq!(attempts, 1, "a 4xx other than 429 must not retry");
            assert!(message.contains("400"), "message: {message}");
        }
        other => panic!("unexpected error {other:?}"),
    }
    assert_eq!(server.join().unwrap().len(), 1);
}

#[test]
fn encoder_rejects_wrong_dimension_without_retry() {
    let (url, server) = spawn_server(vec![json_response(200, rows(&[vec![1.0, 2.0, 3.0]]))]);
    let cfg = remote_encoder(&url, 2, 5);
    match embed_texts(&cfg, &["hello".to_string()]).unwrap_err() {
        HydeError::Remote { attempts, message } => {
            assert_eq!(attempts, 1);
            assert!(message.contains("dim"), "message: {message}");
        }
        other => panic!("unexpected error {other:?}"),
    }
    assert_eq!(server.join().unwrap().len(), 1);
}

#[test]
fn encoder_rejects_row_count_mismatch() {
    let (url, server) = spawn_server(vec![json_response(
        200,
        rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]),
    )]);
    let cfg = remote_encoder(&url, 2, 5);
    let err = embed_texts(&cfg, &["only one text".to_string()]).unwrap_err();
    assert!(
        matches!(err, HydeError::Remote { attempts: 1, .. }),
        "{err:?}"
    );
    assert_eq!(server.join().unwrap().len(), 1);
}

#[test]
fn encoder_rejects_non_json_success_body() {
    let (url, server) = spawn_server(vec![Exchange {
        status: 200,
        body: "here are your embeddings, good luck".to_string(),
    }]);
    let cfg = remote_encoder(&url, 2, 5);
    let err = embed_texts(&cfg, &["hello".to_string()]).unwrap_err();
    assert!(
        matches!(err, HydeError::Remote { attempts: 1, .. }),
        "{err:?}"
    );
    assert_eq!(server.join().unwrap().len(), 1);
}

#[test]
fn encoder_splits_batches_and_preserves_order() {
    // Five texts, batch size two: requests [t0,t1], [t2,t3], [t4] in order
    // (parallelism is 1), each answered in a different response shape.
    let (url, server) = spawn_server(vec![
        json_response(
            200,
            serde_json::json!({
                "data": [
                    { "embedding": [3.0, 4.0], "index": 1 },
                    { "embedding": [1.0, 2.0], "index": 0 }
                ]
            }),
        ),
        json_response(
            200,
            serde_json::json!({ "embeddings": [[5.0, 6.0], [7.0, 8.0]] }),
        ),
        json_response(200, rows(&[vec![9.0, 10.0]])),
    ]);
    let mut cfg = remote_encoder(&url, 2, 1);
    cfg.batch_size = 2;
    let texts: Vec<String> = (0..5).map(|i| format!("text {i}")).collect();
    let vectors = embed_texts(&cfg, &texts).unwrap();
    let flat: Vec<f32> = vectors.iter().flat_map(|v| v.values().to_vec()).collect();
    assert_eq!(flat, [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0, 10.0]);

    let seen = server.join().unwrap();
    assert_eq!(seen.len(), 3);
    assert_eq!(
        seen[0].body["input"],
        serde_json::json!(["text 0", "text 1"])
    );
    assert_eq!(
        seen[1].body["input"],
        serde_json::json!(["text 2", "text 3"])
    );
    assert_eq!(seen[2].body["input"], serde_json::json!(["text 4"]));
}

#[test]
fn bearer_token_comes_from_environment_only() {
    let _guard = ENV_LOCK.lock().unwrap();

    // With the variable set, requests carry the bearer header.
    std::env::set_var("HYDE_ENCODER_API_KEY", "sekrit-token");
    let (url, server) = spawn_server(vec![json_response(200, rows(&[vec![1.0, 2.0]]))]);
    let cfg = remote_encoder(&url, 2, 1);
    embed_texts(&cfg, &["hello".to_string()]).unwrap();
    let seen = server.join().unwrap();
    assert_eq!(seen[0].auth.as_deref(), Some("Bearer sekrit-token"));

    // Without it, no Authorization header at all.
    std::env::remove_var("HYDE_ENCODER_API_KEY");
    let (url, server) = spawn_server(vec![json_response(200, rows(&[vec![1.0, 2.0]]))]);
    let cfg = remote_encoder(&url, 2, 1);
    embed_texts(&cfg, &["hello".to_string()]).unwrap();
    let seen = server.join().unwrap();
    assert_eq!(seen[0].auth, None);
}

fn remote_generator(url: &str, api: RemoteApi, n_samples: usize) -> GenerationConfig {
    let mut cfg = GenerationConfig {
        backend: GeneratorBackend::Remote,
        endpoint_url: Some(url.to_string()),
        model_name: Some("test-llm".to_string()),
        api,
        n_samples,
        parallelism: 1,
        seed: Some(11),
        ..GenerationConfig::default()
    };
    cfg.retry.max_attempts = 3;
    cfg.retry.base_delay_ms = 1;
    cfg
}

fn chat_response(id: &str, content: &str) -> Exchange {
    json_response(
        200,
        serde_json::json!({
            "id": id,
            "choices": [{ "message": { "role": "assistant", "content": content } }]
        }),
    )
}

#[test]
fn generator_chat_sends_rendered_instruction_and_collects_samples() {
    let (url, server) = spawn_server(vec![
        chat_response("resp-0", "Paris is the capital of France."),
        chat_response("resp-1", "The capital city of France is Paris."),
        chat_response("resp-2", "France's capital is Paris."),
    ]);
    let cfg = remote_generator(&url, RemoteApi::Chat, 3);
    let template = builtin_template("web").unwrap();
    let query = QueryRecord::new("q1", "what is the capital of france").unwrap();
    let set = generate_hypotheticals(&cfg, &template, &query).unwrap();

    assert_eq!(set.samples.len(), 3);
    assert_eq!(set.samples[0], "Paris is the capital of France.");
    assert_eq!(set.provenance.request_ids, ["resp-0", "resp-1", "resp-2"]);
    assert_eq!(set.provenance.model_name, "test-llm");
    assert!(set.degenerate_indices().is_empty());

    let seen = server.join().unwrap();
    assert_eq!(seen.len(), 3);
    let expected_prompt = "Please write a passage to answer the question\nQuestion: what is the capital of france\nPassage:";
    for req in &seen {
        assert_eq!(req.body["model"], "test-llm");
        assert_eq!(req.body["messages"][0]["role"], "user");
        assert_eq!(req.body["messages"][0]["content"], expected_prompt);
        assert_eq!(req.body["seed"], 11);
        assert!(
            req.body.get("prompt").is_none(),
            "chat shape must not carry a prompt field"
        );
    }
}

#[test]
fn generator_completions_api_uses_prompt_field() {
    let (url, server) = spawn_server(vec![json_response(
        200,
        serde_json::json!({ "id": "c-1", "choices": [{ "text": "A passage." }] }),
    )]);
    let cfg = remote_generator(&url, RemoteApi::Completions, 1);
    let template = builtin_template("web").unwrap();
    let query = QueryRecord::new("q1", "what is dns").unwrap();
    let set = generate_hypotheticals(&cfg, &template, &query).unwrap();
    assert_eq!(set.samples, ["A passage."]);

    let seen = server.join().unwrap();
    assert!(seen[0].body["prompt"]
        .as_str()
        .unwrap()
        .contains("what is dns"));
    assert!(seen[0].body.get("messages").is_none());
}

#[test]
fn generator_retries_rate_limit_then_succeeds() {
    let (url, server) = spawn_server(vec![
        json_response(429, serde_json::json!({"error": "rate limited"})),
        chat_response("resp-0", "After a pause, success."),
    ]);
    let cfg = remote_generator(&url, RemoteApi::Chat, 1);
    let template = builtin_template("web").unwrap();
    let query = QueryRecord::new("q1", "anything").unwrap();
    let set = generate_hypotheticals(&cfg, &template, &query).unwrap();
    assert_eq!(set.samples, ["After a pause, success."]);
    assert_eq!(server.join().unwrap().len(), 2);
}

#[test]
fn generator_retries_empty_completion_once_then_keeps_it() {
    // Both attempts come back empty: the sample is kept (flagged degenerate)
    // rather than looping forever, and exactly two requests are made.
    let (url, server) = spawn_server(vec![
        chat_response("resp-0", ""),
        chat_response("resp-1", "   "),
    ]);
    let cfg = remote_generator(&url, RemoteApi::Chat, 1);
    let template = builtin_template("web").unwrap();
    let query = QueryRecord::new("q1", "hard question").unwrap();
    let set = generate_hypotheticals(&cfg, &template, &query).unwrap();

    assert_eq!(set.samples.len(), 1);
    assert_eq!(set.degenerate_indices(), vec![0]);
    assert_eq!(set.provenance.request_ids, ["resp-1"]);
    assert_eq!(server.join().unwrap().len(), 2);
}

#[test]
fn generator_recovers_nonempty_on_empty_retry() {
    let (url, server) = spawn_server(vec![
        chat_response("resp-0", ""),
        chat_response("resp-1", "Second try has content."),
    ]);
    let cfg = remote_generator(&url, RemoteApi::Chat, 1);
    let template = builtin_template("web").unwrap();
    let query = QueryRecord::new("q1", "hard question").unwrap();
    let set = generate_hypotheticals(&cfg, &template, &query).unwrap();
    assert_eq!(set.samples, ["Second try has content."]);
    assert!(set.degenerate_indices().is_empty());
    assert_eq!(server.join().unwrap().len(), 2);
}

#[test]
fn generator_unrecognized_response_is_fatal() {
    let (url, server) = spawn_server(vec![json_response(
        200,
        serde_json::json!({ "surprise": true }),
    )]);
    let cfg = remote_generator(&url, RemoteApi::Chat, 1);
    let template = builtin_template("web").unwrap();
    let query = QueryRecord::new("q1", "anything").unwrap();
    let err = generate_hypotheticals(&cfg, &template, &query).unwrap_err();
    assert!(
        matches!(err, HydeError::Remote { attempts: 1, .. }),
        "{err:?}"
    );
    assert_eq!(server.join().unwrap().len(), 1);
}
