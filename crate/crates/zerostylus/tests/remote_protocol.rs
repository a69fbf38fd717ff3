//! Wire-format tests for the remote backends against a local HTTP server:
//! request shape, order preservation, retry-on-5xx, and response validation.

use std::io::{Read, Write};
use std::net::TcpListener;
use std::time::Duration;

use zerostylus::embedding::{
    EmbeddingBackend, EmbeddingBackendSpec, RemoteEmbeddingBackend,
};
use zerostylus::embedding::backend::BackendKind;
use zerostylus::evaluation::judge::RemoteJudgeBackend;
use zerostylus::evaluation::{JudgeBackend, JudgeBackendSpec, JudgeMargins};
use zerostylus::transfer::{
    GenerationBackend, GenerationBackendSpec, GenerationRequest, PromptStage,
    RemoteGenerationBackend, RequestMeta,
};

/// One canned exchange: inspect the request body, produce (status, body).
type Responder = Box<dyn FnMut(&str) -> (u16, String) + Send>;

/// Serve `responders.len()` requests on a fresh port, then stop.
fn serve(mut responders: Vec<Responder>) -> (String, std::thread::JoinHandle<Vec<String>>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let handle = std::thread::spawn(move || {
        let mut seen = Vec::new();
        for responder in responders.iter_mut() {
            let (mut stream, _) = listener.accept().unwrap();
            let mut buf = Vec::new();
            let mut chunk = [0u8; 4096];
            let body_start;
            loop {
                let n = stream.read(&mut chunk).unwrap();
                buf.extend_from_slice(&chunk[..n]);
                if let Some(pos) = find_header_end(&buf) {
                    body_start = pos;
                    break;
                }
            }
            let headers = String::from_utf8_lossy(&buf[..body_start]).to_string();
            let content_length: usize = headers
                .lines()
                .find_map(|l| {
                    let (name, value) = l.split_once(':')?;
                    name.eq_ignore_ascii_case("content-length")
                        .then(|| value.trim().parse().ok())?
                })
                .unwrap_or(0);
            while buf.len() < body_start + content_length {
                let n = stream.read(&mut chunk).unwrap();
                buf.extend_from_slice(&chunk[..n]);
            }
            let body = String::from_utf8_lossy(&buf[body_start..body_start + content_length])
                .to_string();
            let (status, response_body) = responder(&body);
            seen.push(body);
            let reason = if status == 200 { "OK" } else { "ERR" };
            let response = format!(
                "HTTP/1.1 {status} {reason}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{response_body}",
                response_body.len()
            );
            stream.write_all(response.as_bytes()).unwrap();
        }
        seen
    });
    (format!("http://{addr}/v1"), handle)
}

fn find_header_end(buf: &[u8]) -> Option<usize> {
    buf.windows(4).position(|w| w == b"\r\n\r\n").map(|p| p + 4)
}

fn embeddings_json(vectors: &[Vec<f64>]) -> String {
    let data: Vec<serde_json::Value> = vectors
        .iter()
        .map(|v| serde_json::json!({ "embedding": v }))
        .collect();
    serde_json::json!({ "data": data }).to_string()
}

fn remote_embed_spec(endpoint: &str, dim: usize) -> EmbeddingBackendSpec {
    EmbeddingBackendSpec {
        backend_id: "remote-emb".to_string(),
        kind: BackendKind::Remote,
        endpoint: Some(endpoint.to_string()),
        model_name: "embedder-1".to_string(),
        dim,
        max_batch: 2,
        api_key_env: None,
        hash_seed: 0,
        job_limit: 1000,
    }
}

#[test]
fn embedding_request_shape_and_batching() {
    let responder = |body: &str| {
        let parsed: serde_json::Value = serde_json::from_str(body).unwrap();
        assert_eq!(parsed["model"], "embedder-1");
        let inputs = parsed["input"].as_array().unwrap();
        let vectors: Vec<Vec<f64>> = inputs
            .iter()
            .enumerate()
            .map(|(i, _)| vec![i as f64, 1.0])
            .collect();
        (200, embeddings_json(&vectors))
    };
    // max_batch 2 over 3 texts: two requests.
    let (endpoint, handle) = serve(vec![Box::new(responder), Box::new(responder)]);
    let backend = RemoteEmbeddingBackend::new(remote_embed_spec(&endpoint, 2))
        .unwrap()
        .with_retry(1, Duration::from_millis(1));
    let out = backend.embed(&["one", "two", "three"]).unwrap();
    assert_eq!(out.len(), 3);
    assert_eq!(out[0].values(), &[0.0, 1.0]);
    assert_eq!(out[2].values(), &[0.0, 1.0]); // first item of second batch

    let bodies = handle.join().unwrap();
    assert_eq!(bodies.len(), 2);
    assert!(bodies[0].contains("\"one\"") && bodies[0].contains("\"two\""));
    assert!(bodies[1].contains("\"three\""));
}

#[test]
fn embedding_wrong_dim_is_rejected() {
    let (endpoint, handle) = serve(vec![Box::new(|_: &str| {
        (200, embeddings_json(&[vec![1.0, 2.0, 3.0]]))
    })]);
    let backend = RemoteEmbeddingBackend::new(remote_embed_spec(&endpoint, 2))
        .unwrap()
        .with_retry(1, Duration::from_millis(1));
    let err = backend.embed(&["text"]).unwrap_err();
    assert!(err.to_string().contains("dimension mismatch"));
    handle.join().unwrap();
}

#[test]
fn embedding_retries_on_server_errors() {
    let (endpoint, handle) = serve(vec![
        Box::new(|_: &str| (500, "{}".to_string())),
        Box::new(|_: &str| (503, "{}".to_string())),
        Box::new(|_: &str| (200, embeddings_json(&[vec![0.5, 0.5]]))),
    ]);
    let backend = RemoteEmbeddingBackend::new(remote_embed_spec(&endpoint, 2))
        .unwrap()
        .with_retry(3, Duration::from_millis(1));
    let out = backend.embed(&["text"]).unwrap();
    assert_eq!(out[0].values(), &[0.5, 0.5]);
    handle.join().unwrap();
}

#[test]
fn embedding_client_errors_do_not_retry() {
    let (endpoint, handle) = serve(vec![Box::new(|_: &str| (400, "{}".to_string()))]);
    let backend = RemoteEmbeddingBackend::new(remote_embed_spec(&endpoint, 2))
        .unwrap()
        .with_retry(3, Duration::from_millis(1));
    assert!(backend.embed(&["text"]).is_err());
    // Exactly one request served; join proves no second request was sent.
    handle.join().unwrap();
}

#[test]
fn generation_request_shape() {
    let (endpoint, handle) = serve(vec![Box::new(|body: &str| {
        let parsed: serde_json::Value = serde_json::from_str(body).unwrap();
        assert_eq!(parsed["model"], "writer-1");
        assert_eq!(parsed["temperature"], 0.25);
        assert_eq!(parsed["messages"][0]["role"], "user");
        assert_eq!(parsed["messages"][0]["content"], "the prompt");
        (
            200,
            serde_json::json!({
                "choices": [{ "message": { "content": "rewritten text" } }]
            })
            .to_string(),
        )
    })]);
    let spec = GenerationBackendSpec {
        backend_id: "remote-gen".to_string(),
        kind: BackendKind::Remote,
        endpoint: Some(endpoint),
        model_name: "writer-1".to_string(),
        max_context_chars: 10_000,
        temperature: 0.25,
        api_key_env: None,
    };
    let backend = RemoteGenerationBackend::new(spec)
        .unwrap()
        .with_retry(1, Duration::from_millis(1));
    let out = backend
        .complete(&GenerationRequest {
            stage: PromptStage::Generate,
            prompt: "the prompt".to_string(),
            meta: RequestMeta::default(),
        })
        .unwrap();
    assert_eq!(out, "rewritten text");
    assert_eq!(backend.call_count(), 1);
    handle.join().unwrap();
}

#[test]
fn judge_parses_per_axis_margins_and_validates_range() {
    let ok = |_: &str| {
        (
            200,
            serde_json::json!({
                "choices": [{ "message": { "content": "{\"x\": 1.5, \"y\": -0.5, \"z\": 0.0}" } }]
            })
            .to_string(),
        )
    };
    let out_of_range = |_: &str| {
        (
            200,
            serde_json::json!({
                "choices": [{ "message": { "content": "{\"x\": 7.0, \"y\": 0.0, \"z\": 0.0}" } }]
            })
            .to_string(),
        )
    };
    let (endpoint, handle) = serve(vec![Box::new(ok), Box::new(out_of_range)]);
    let spec = JudgeBackendSpec {
        backend_id: "remote-judge".to_string(),
        kind: BackendKind::Remote,
        endpoint: Some(endpoint),
        model_name: "judge-1".to_string(),
        api_key_env: None,
    };
    let backend = RemoteJudgeBackend::new(spec)
        .unwrap()
        .with_retry(1, Duration::from_millis(1));
    let margins = backend.judge_pair("src", "ref", "a", "b", true).unwrap();
    assert_eq!(
        margins,
        JudgeMargins::PerAxis {
            x: 1.5,
            y: -0.5,
            z: 0.0
        }
    );
    let err = backend.judge_pair("src", "ref", "a", "b", true).unwrap_err();
    assert!(err.to_string().contains("outside the expected range"));
    handle.join().unwrap();
}

#[test]
fn missing_api_key_env_fails_fast() {
    let spec = EmbeddingBackendSpec {
        api_key_env: Some("ZEROSTYLUS_TEST_KEY_THAT_DOES_NOT_EXIST".to_string()),
        ..remote_embed_spec("http://127.0.0.1:1/v1", 2)
    };
    let err = match RemoteEmbeddingBackend::new(spec) {
        Ok(_) => panic!("backend construction should fail without the key"),
        Err(e) => e,
    };
    assert!(err.to_string().contains("is not set"));
}
