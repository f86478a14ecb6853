//! The HTTP providers against a scripted local server.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::Duration;

use mde_core::embedding::{mdev, EmbedError, EmbeddingProvider, HttpProvider};
use mde_core::model::{Granularity, Segment};
use mde_core::segmentation::{HttpSegmentationService, LlmSegmenter, SegmentError, SegmenterConfig};

#[derive(Debug, Clone)]
struct Request {
    headers: Vec<(String, String)>,
    body: Vec<u8>,
}

impl Request {
    fn header(&self, name: &str) -> Option<&str> {
        self.headers.iter().find(|(k, _)| k.eq_ignore_ascii_case(name)).map(|(_, v)| v.as_str())
    }
}

/// Serves `responses` in order, one connection each, and records what arrived.
struct Script {
    url: String,
    seen: Arc<Mutex<Vec<Request>>>,
    handle: Option<JoinHandle<()>>,
}

impl Script {
    fn start(responses: Vec<(u16, Vec<u8>)>) -> Script {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}/v1", listener.local_addr().unwrap());
        let seen = Arc::new(Mutex::new(Vec::new()));
        let log = seen.clone();
        let handle = std::thread::spawn(move || {
            for (status, body) in responses {
                let (stream, _) = listener.accept().unwrap();
                let mut reader = BufReader::new(stream.try_clone().unwrap());
                let mut headers = Vec::new();
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                loop {
                    line.clear();
                    reader.read_line(&mut line).unwrap();
                    let l = line.trim_end();
                    if l.is_empty() {
                        break;
                    }
                    let (k, v) = l.split_once(':').unwrap();
                    headers.push((k.trim().to_string(), v.trim().to_string()));
                }
                let req = Request { headers, body: Vec::new() };
                let body_in = match req.header("content-length") {
                    Some(n) => {
                        let mut buf = vec![0; n.parse().unwrap()];
                        reader.read_exact(&mut buf).unwrap();
                        buf
                    }
                    None => read_chunked(&mut reader),
                };
                log.lock().unwrap().push(Request { body: body_in, ..req });
                let mut stream = stream;
                write!(stream, "HTTP/1.1 {status} X\r\nContent-Length: {}\r\nConnection: close\r\n\r\n", body.len()).unwrap();
                stream.write_all(&body).unwrap();
                stream.flush().unwrap();
            }
        });
        Script { url, seen, handle: Some(handle) }
    }

    fn requests(&mut self) -> Vec<Request> {
        if let Some(h) = self.handle.take() {
            h.join().unwrap();
        }
        self.seen.lock().unwrap().clone()
    }
}

fn read_chunked(reader: &mut impl BufRead) -> Vec<u8> {
    let mut out = Vec::new();
    loop {
        let mut size = String::new();
        reader.read_line(&mut size).unwrap();
        let n = usize::from_str_radix(size.trim(), 16).unwrap();
        let mut chunk = vec![0; n + 2];
        reader.read_exact(&mut chunk).unwrap();
        if n == 0 {
            return out;
        }
        out.extend_from_slice(&chunk[..n]);
    }
}

fn vectors(n: usize, d: usize) -> (Vec<f32>, Vec<u8>) {
    let mut values = vec![0f32; n * d];
    for i in 0..n {
        values[i * d + i % d] = 1.0;
    }
    let body = mdev::encode(n, d, &values);
    (values, body)
}

#[test]
fn embedding_request_carries_one_text_per_line() {
    let (values, body) = vectors(2, 4);
    let mut server = Script::start(vec![(200, body)]);
    let provider = HttpProvider::new("labse", &server.url, 4, 16);
    let rows = EmbeddingProvider::<f32>::embed_texts(&provider, &["Quel ramo", "del lago\ndi Como"]).unwrap();
    assert_eq!(rows.concat(), values);
    assert_eq!(EmbeddingProvider::<f32>::provider_id(&provider), "http:labse");
    let reqs = server.requests();
    assert_eq!(reqs.len(), 1);
    assert_eq!(reqs[0].body, b"Quel ramo\ndel lago di Como");
}

#[test]
fn embedding_retries_transient_failures() {
    let (values, body) = vectors(1, 3);
    let mut server = Script::start(vec![(503, b"busy".to_vec()), (429, Vec::new()), (200, body)]);
    let provider = HttpProvider::new("x", &server.url, 3, 16).with_attempts(3);
    let rows = EmbeddingProvider::<f64>::embed_texts(&provider, &["uno"]).unwrap();
    assert_eq!(rows[0], values.iter().map(|&v| f64::from(v)).collect::<Vec<_>>());
    assert_eq!(server.requests().len(), 3);
}

#[test]
fn embedding_gives_up_after_its_attempts() {
    let mut server = Script::start(vec![(500, Vec::new()), (502, Vec::new())]);
    let provider = HttpProvider::new("x", &server.url, 3, 16).with_attempts(2);
    let err = EmbeddingProvider::<f64>::embed_texts(&provider, &["uno"]).unwrap_err();
    assert!(err.is_retryable(), "{err}");
    assert_eq!(server.requests().len(), 2);
}

#[test]
fn embedding_dimension_mismatch_is_fatal() {
    let (_, body) = vectors(1, 5);
    let mut server = Script::start(vec![(200, body)]);
    let provider = HttpProvider::new("x", &server.url, 3, 16).with_attempts(3);
    let err = EmbeddingProvider::<f64>::embed_texts(&provider, &["uno"]).unwrap_err();
    assert!(matches!(err, EmbedError::Config(_)), "{err}");
    assert_eq!(server.requests().len(), 1);
}

#[test]
fn embedding_batches_split_requests() {
    let (_, two) = vectors(2, 2);
    let (_, one) = vectors(1, 2);
    let mut server = Script::start(vec![(200, two), (200, one)]);
    let provider = HttpProvider::new("x", &server.url, 2, 2);
    let rows = EmbeddingProvider::<f64>::embed_texts(&provider, &["a", "b", "c"]).unwrap();
    assert_eq!(rows.len(), 3);
    let bodies: Vec<Vec<u8>> = server.requests().into_iter().map(|r| r.body).collect();
    assert_eq!(bodies, [b"a\nb".to_vec(), b"c".to_vec()]);
}

#[test]
fn segmentation_service_round_trip_with_retry_and_cache() {
    let answer = b"1. Il ponte, che ivi congiunge le due rive,\n2. par che renda ancor piu sensibile questa trasformazione.\n";
    let mut server = Script::start(vec![(503, Vec::new()), (200, answer.to_vec())]);
    let service = HttpSegmentationService::new(&server.url, "clause-model", Some("secret".into()));
    let cache = tempfile::tempdir().unwrap();
    let segmenter = LlmSegmenter::new(Arc::new(service))
        .with_cache_dir(cache.path())
        .with_retries(3, Duration::from_millis(1));
    let sentence = Segment::new(
        "it",
        0,
        "Il ponte, che ivi congiunge le due rive, par che renda ancor piu sensibile questa trasformazione.",
        Granularity::Sentence,
    );
    let cfg = SegmenterConfig::for_language("it");
    let out = segmenter.segment(&sentence, &[], &cfg).unwrap();
    assert!(!out.cache_hit && out.fallback.is_none());
    assert_eq!(out.segments.len(), 2);

    let reqs = server.requests();
    assert_eq!(reqs.len(), 2);
    assert_eq!(reqs[1].header("x-model"), Some("clause-model"));
    assert_eq!(reqs[1].header("authorization"), Some("Bearer secret"));
    let prompt = String::from_utf8(reqs[1].body.clone()).unwrap();
    assert!(prompt.ends_with(&format!("Sentence: {}\nSegments:\n", sentence.text)));

    // the server is gone; the transcript answers
    let again = segmenter.segment(&sentence, &[], &cfg).unwrap();
    assert!(again.cache_hit);
    assert_eq!(again.segments, out.segments);
}

#[test]
fn unreachable_segmentation_service_fails_after_retries() {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/", listener.local_addr().unwrap());
    drop(listener);
    let service = HttpSegmentationService::new(url, "m", None);
    let segmenter = LlmSegmenter::new(Arc::new(service)).with_retries(2, Duration::from_millis(1));
    let sentence = Segment::new("it", 0, "Era bello, pareva vero.", Granularity::Sentence);
    match segmenter.segment(&sentence, &[], &SegmenterConfig::for_language("it")) {
        Err(SegmentError::ServiceUnavailable { attempts, .. }) => assert_eq!(attempts, 2),
        other => panic!("{other:?}"),
    }
}

#[test]
fn client_errors_are_not_retried() {
    let mut server = Script::start(vec![(400, b"bad prompt".to_vec())]);
    let service = HttpSegmentationService::new(&server.url, "m", None);
    let segmenter = LlmSegmenter::new(Arc::new(service)).with_retries(3, Duration::from_millis(1));
    let sentence = Segment::new("it", 0, "Era bello, pareva vero.", Granularity::Sentence);
    let err = segmenter.segment(&sentence, &[], &SegmenterConfig::for_language("it")).unwrap_err();
    assert!(matches!(err, SegmentError::ServiceRejected(_)), "{err}");
    assert_eq!(server.requests().len(), 1);
}
