//! HTTP clients against a scripted local server.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::Duration;

use serde_json::{json, Value};

use varietybench::ingest::TranslationDirection;
use varietybench::llm::{complete, EndpointConfig, HttpEndpoint, SideChannel};
use varietybench::mt::{CachedTranslator, HttpTranslator, Translator};
use varietybench::prompting::{render, PromptVariant};
use varietybench::{ReviewRecord, Side, Variety};

#[derive(Debug, Clone)]
struct Seen {
    request_line: String,
    headers: Vec<(String, String)>,
    body: Value,
}

impl Seen {
    fn header(&self, name: &str) -> Option<&str> {
        self.headers
            .iter()
            .find(|(k, _)| k.eq_ignore_ascii_case(name))
            .map(|(_, v)| v.as_str())
    }
}

/// Answers one connection per scripted (status, body) and records requests.
fn serve(script: Vec<(u16, String)>) -> (String, Arc<Mutex<Vec<Seen>>>, JoinHandle<()>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}", listener.local_addr().unwrap());
    let seen = Arc::new(Mutex::new(Vec::new()));
    let log = seen.clone();
    let handle = std::thread::spawn(move || {
        for (status, body) in script {
            let (stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream);
            let mut request_line = String::new();
            reader.read_line(&mut request_line).unwrap();
            let mut headers = Vec::new();
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                let line = line.trim_end();
                if line.is_empty() {
                    break;
                }
                let (k, v) = line.split_once(':').unwrap();
                headers.push((k.trim().to_string(), v.trim().to_string()));
            }
            let len: usize = headers
                .iter()
                .find(|(k, _)| k.eq_ignore_ascii_case("content-length"))
                .map_or(0, |(_, v)| v.parse().unwrap());
            let mut buf = vec![0; len];
            reader.read_exact(&mut buf).unwrap();
            log.lock().unwrap().push(Seen {
                request_line: request_line.trim_end().to_string(),
                headers,
                body: serde_json::from_slice(&buf).unwrap_or(Value::Null),
            });
            let mut stream = reader.into_inner();
            write!(
                stream,
                "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                body.len()
            )
            .unwrap();
        }
    });
    (url, seen, handle)
}

fn chat_reply(content: &str) -> (u16, String) {
    (200, json!({"choices": [{"message": {"role": "assistant", "content": content}}]}).to_string())
}

fn config(url: &str, token_var: Option<&str>) -> EndpointConfig {
    let mut c = EndpointConfig::new("local", format!("{url}/v1/"), "test-model");
    c.auth_token_env_var = token_var.map(str::to_string);
    c.backoff_base = Duration::from_millis(1);
    c.request_timeout = Duration::from_secs(5);
    c
}

fn record() -> ReviewRecord {
    ReviewRecord {
        record_id: "r1".into(),
        hotel_id: "h".into(),
        variety: Variety::TW,
        score: 9.0,
        title: Some("交通方便".into()),
        positive: Some("早餐很好".into()),
        negative: None,
        review_time: None,
        translated: None,
    }
}

const TRUTH: SideChannel = SideChannel { score: 9.0, variety: Variety::TW };

#[test]
fn request_carries_model_messages_and_bearer_token() {
    std::env::set_var("VB_WIRE_TOKEN", "sk-local");
    let (url, seen, server) = serve(vec![chat_reply("9")]);
    let endpoint = HttpEndpoint::new(config(&url, Some("VB_WIRE_TOKEN"))).unwrap();
    let prompt = render(&record(), PromptVariant::Structured, 0, true);
    let result = complete(&endpoint, &prompt, &TRUTH, "p1", Side::Tw);
    server.join().unwrap();

    assert_eq!(result.raw_text.as_deref(), Some("9"));
    assert_eq!(result.attempt_count, 1);
    let seen = seen.lock().unwrap();
    let req = &seen[0];
    assert_eq!(req.request_line, "POST /v1/chat/completions HTTP/1.1");
    assert_eq!(req.header("authorization"), Some("Bearer sk-local"));
    assert_eq!(req.body["model"], "test-model");
    assert_eq!(req.body["temperature"], 0);
    let messages = req.body["messages"].as_array().unwrap();
    assert_eq!(messages.len(), 2);
    assert_eq!(messages[0]["role"], "system");
    assert_eq!(messages[1]["role"], "user");
    assert_eq!(messages[1]["content"], prompt.user_text.as_str());
    // the ground truth never leaves the process
    let keys: Vec<&String> = req.body.as_object().unwrap().keys().collect();
    assert_eq!(keys, ["messages", "model", "temperature"]);
}

#[test]
fn no_auth_header_without_a_token_variable() {
    let (url, seen, server) = serve(vec![chat_reply("7")]);
    let endpoint = HttpEndpoint::new(config(&url, None)).unwrap();
    let prompt = render(&record(), PromptVariant::Plain, 0, true);
    complete(&endpoint, &prompt, &TRUTH, "p1", Side::Tw);
    server.join().unwrap();
    assert!(seen.lock().unwrap()[0].header("authorization").is_none());
}

#[test]
fn endpoints_without_system_role_get_one_user_message() {
    let (url, seen, server) = serve(vec![chat_reply("8")]);
    let mut c = config(&url, None);
    c.supports_system_role = false;
    let endpoint = HttpEndpoint::new(c).unwrap();
    let prompt = render(&record(), PromptVariant::Plain, 0, true);
    assert!(prompt.system_text.is_some());
    complete(&endpoint, &prompt, &TRUTH, "p1", Side::Cn);
    server.join().unwrap();
    let messages = seen.lock().unwrap()[0].body["messages"].as_array().unwrap().clone();
    assert_eq!(messages.len(), 1);
    assert_eq!(messages[0]["role"], "user");
}

#[test]
fn server_errors_are_retried_then_succeed() {
    let (url, seen, server) = serve(vec![(503, "{}".into()), (429, "{}".into()), chat_reply("6")]);
    let endpoint = HttpEndpoint::new(config(&url, None)).unwrap();
    let prompt = render(&record(), PromptVariant::Plain, 0, true);
    let result = complete(&endpoint, &prompt, &TRUTH, "p1", Side::Tw);
    server.join().unwrap();
    assert_eq!(result.raw_text.as_deref(), Some("6"));
    assert_eq!(result.attempt_count, 3);
    assert_eq!(seen.lock().unwrap().len(), 3);
}

#[test]
fn retries_are_bounded() {
    let (url, _, server) = serve(vec![(500, "a".into()), (500, "b".into())]);
    let mut c = config(&url, None);
    c.max_retries = 1;
    let endpoint = HttpEndpoint::new(c).unwrap();
    let prompt = render(&record(), PromptVariant::Plain, 0, true);
    let result = complete(&endpoint, &prompt, &TRUTH, "p1", Side::Tw);
    server.join().unwrap();
    assert_eq!(result.raw_text, None);
    assert_eq!(result.attempt_count, 2);
    assert!(result.transport_error.unwrap().contains("HTTP 500"));
}

#[test]
fn client_errors_and_malformed_bodies_are_not_retried() {
    let (url, _, server) = serve(vec![(400, "bad request".into()), (200, "{\"choices\": []}".into())]);
    let endpoint = HttpEndpoint::new(config(&url, None)).unwrap();
    let prompt = render(&record(), PromptVariant::Plain, 0, true);
    let first = complete(&endpoint, &prompt, &TRUTH, "p1", Side::Tw);
    let second = complete(&endpoint, &prompt, &TRUTH, "p1", Side::Cn);
    server.join().unwrap();
    assert_eq!(first.attempt_count, 1);
    assert!(first.transport_error.unwrap().contains("HTTP 400"));
    assert_eq!(second.attempt_count, 1);
    assert!(second.transport_error.unwrap().contains("malformed"));
}

#[test]
fn connection_refused_is_a_transport_error() {
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let mut c = config(&format!("http://127.0.0.1:{port}"), None);
    c.max_retries = 0;
    let endpoint = HttpEndpoint::new(c).unwrap();
    let prompt = render(&record(), PromptVariant::Plain, 0, true);
    let result = complete(&endpoint, &prompt, &TRUTH, "p1", Side::Tw);
    assert!(result.raw_text.is_none() && result.transport_error.is_some());
}

fn translation(text: &str) -> (u16, String) {
    (200, json!({"data": {"translations": [{"translatedText": text}]}}).to_string())
}

#[test]
fn translator_wire_format_and_key_header() {
    std::env::set_var("VB_WIRE_TRANSLATE_KEY", "k-123");
    let (url, seen, server) = serve(vec![(503, "{}".into()), translation("饭店很好")]);
    let t = HttpTranslator::new(format!("{url}/language/translate/v2"), Some("VB_WIRE_TRANSLATE_KEY".into()))
        .unwrap()
        .with_retries(2, Duration::from_millis(1));
    assert_eq!(t.translate("飯店很好", TranslationDirection::TwToCn), Ok("饭店很好".into()));
    server.join().unwrap();
    let seen = seen.lock().unwrap();
    assert_eq!(seen.len(), 2);
    let req = &seen[1];
    assert_eq!(req.request_line, "POST /language/translate/v2 HTTP/1.1");
    assert_eq!(req.header("x-goog-api-key"), Some("k-123"));
    assert_eq!(req.body, json!({"q": "飯店很好", "source": "zh-TW", "target": "zh-CN", "format": "text"}));
}

#[test]
fn persistent_cache_avoids_repeat_requests() {
    let dir = tempfile::tempdir().unwrap();
    let cache = dir.path().join("cache.jsonl");
    let (url, seen, server) = serve(vec![translation("机场"), translation("機場")]);
    let http = || HttpTranslator::new(url.clone(), None).unwrap().with_retries(0, Duration::ZERO);

    let first = CachedTranslator::persistent(http(), &cache).unwrap();
    assert_eq!(first.translate("機場", TranslationDirection::TwToCn).unwrap(), "机场");
    assert_eq!(first.translate("機場", TranslationDirection::TwToCn).unwrap(), "机场");
    drop(first);

    let reopened = CachedTranslator::persistent(http(), &cache).unwrap();
    assert_eq!(reopened.cached(), 1);
    assert_eq!(reopened.translate("機場", TranslationDirection::TwToCn).unwrap(), "机场");
    // same text, other direction: a new request
    assert_eq!(reopened.translate("機場", TranslationDirection::CnToTw).unwrap(), "機場");
    server.join().unwrap();
    assert_eq!(seen.lock().unwrap().len(), 2);
    assert_eq!(std::fs::read_to_string(&cache).unwrap().lines().count(), 2);
}
