mod common;

use corpusdex::server::{BackgroundServer, ServerConfig};
use reqwest::blocking::Client;
use reqwest::StatusCode;
use serde_json::{json, Value};

struct Fixture {
    server: BackgroundServer,
    client: Client,
    _dir: tempfile::TempDir,
}

impl Fixture {
    fn start() -> Fixture {
        Self::with_limit(1 << 20)
    }

    fn with_limit(max_body_bytes: usize) -> Fixture {
        common::quiet_logs();
        let dir = tempfile::tempdir().unwrap();
        let server = BackgroundServer::start(ServerConfig {
            port: 0,
            data_dir: dir.path().to_path_buf(),
            max_body_bytes,
            ..Default::default()
        })
        .unwrap();
        Fixture { server, client: Client::new(), _dir: dir }
    }

    fn url(&self, path: &str) -> String {
        format!("{}{path}", self.server.url())
    }

    fn put(&self, path: &str, body: Value) -> (StatusCode, Value) {
        let r = self.client.put(self.url(path)).json(&body).send().unwrap();
        (r.status(), r.json().unwrap_or(Value::Null))
    }

    fn post(&self, path: &str, body: Value) -> (StatusCode, Value) {
        let r = self.client.post(self.url(path)).json(&body).send().unwrap();
        (r.status(), r.json().unwrap_or(Value::Null))
    }

    fn bulk(&self, index: &str, body: impl Into<String>) -> (StatusCode, Value) {
        let r = self
            .client
            .post(self.url(&format!("/{index}/_bulk?refresh=true")))
            .header("content-type", "application/x-ndjson")
            .body(body.into())
            .send()
            .unwrap();
        (r.status(), r.json().unwrap_or(Value::Null))
    }

    fn count(&self, index: &str, query: Value) -> u64 {
        let (status, body) = self.post(&format!("/{index}/_count"), json!({ "query": query }));
        assert_eq!(status, StatusCode::OK, "{body}");
        body["count"].as_u64().unwrap()
    }
}

fn ndjson(docs: &[(&str, &str, &str)]) -> String {
    docs.iter()
        .map(|(id, text, lang)| {
            format!("{}\n{}\n", json!({"index": {"_id": id}}), json!({"text": text, "language": lang}))
        })
        .collect()
}

const DOCS: [(&str, &str, &str); 4] = [
    ("a", "climate change is real", "eng"),
    ("b", "climate action and change", "eng"),
    ("c", "le changement climatique", "fra"),
    ("d", "climate change is real", "eng"),
];

#[test]
fn create_index_validates_names_and_conflicts() {
    let f = Fixture::start();
    assert_eq!(f.put("/news", json!({})).0, StatusCode::OK);
    let (status, body) = f.put("/news", json!({}));
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(body["error"]["type"], "resource_already_exists");
    assert_eq!(f.put("/news?exist_ok=true", json!({})).0, StatusCode::OK);
    assert_eq!(f.put("/Bad%20Name", json!({})).0, StatusCode::BAD_REQUEST);
    assert_eq!(f.put("/_private", json!({})).0, StatusCode::BAD_REQUEST);
}

#[test]
fn bulk_reports_per_item_results() {
    let f = Fixture::start();
    f.put("/docs", json!({"dedup": true}));
    let (status, body) = f.bulk("docs", ndjson(&DOCS));
    assert_eq!(status, StatusCode::OK, "{body}");
    let statuses: Vec<u64> = body["items"].as_array().unwrap().iter().map(|i| i["index"]["status"].as_u64().unwrap()).collect();
    assert_eq!(statuses, [201, 201, 201, 200]);
    assert_eq!(body["errors"], false);

    let mixed = format!("{}{}\n{}\n", ndjson(&[("e", "fresh text", "eng")]), json!({"index": {}}), json!({"no_text": 1}));
    let (status, body) = f.bulk("docs", mixed);
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["errors"], true);
    assert_eq!(body["items"][0]["index"]["status"], 201);
    assert_eq!(body["items"][1]["index"]["status"], 400);

    assert_eq!(f.bulk("docs", "").0, StatusCode::BAD_REQUEST);
    assert_eq!(f.bulk("docs", "{\"index\":{}}\n{\"text\":\"x\"}").0, StatusCode::BAD_REQUEST);
    let (status, body) = f.bulk("docs", "not json\n{\"text\":\"x\"}\n");
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(body["error"]["type"], "unparseable_action");
    assert_eq!(f.bulk("missing", ndjson(&DOCS)).0, StatusCode::NOT_FOUND);
}

#[test]
fn oversized_bulk_body_is_rejected() {
    let f = Fixture::with_limit(1024);
    f.put("/docs", json!({}));
    let big = ndjson(&[("x", &"word ".repeat(400), "eng")]);
    assert_eq!(f.bulk("docs", big).0, StatusCode::PAYLOAD_TOO_LARGE);
}

#[test]
fn search_and_count_follow_query_semantics() {
    let f = Fixture::start();
    f.put("/docs", json!({}));
    f.bulk("docs", ndjson(&DOCS));
    let phrase = |slop| json!({"match_phrase": {"query": "climate change", "slop": slop}});
    assert_eq!(f.count("docs", phrase(0)), 2);
    assert_eq!(f.count("docs", phrase(2)), 3);
    assert_eq!(f.count("docs", json!({"match": {"field": "language", "query": "fra"}})), 1);

    let (status, body) = f.post("/docs/_search", json!({"query": phrase(2), "size": 2, "_source": true}));
    assert_eq!(status, StatusCode::OK, "{body}");
    assert_eq!(body["hits"]["total"], 3);
    let hits = body["hits"]["hits"].as_array().unwrap();
    assert_eq!(hits.len(), 2);
    assert_eq!(hits[0]["_id"], "a");
    assert_eq!(hits[0]["occurrence_count"], 1);
    assert_eq!(hits[0]["_source"]["language"], "eng");

    let (_, page) = f.post("/docs/_search?from=2&size=5", json!({"query": phrase(2)}));
    assert_eq!(page["hits"]["hits"][0]["_id"], "d");

    assert_eq!(f.post("/docs/_search", json!({"query": {"nope": {}}})).0, StatusCode::BAD_REQUEST);
    assert_eq!(f.post("/docs/_search", json!({"sort": [{"doc_id": "desc"}]})).0, StatusCode::BAD_REQUEST);
    assert_eq!(f.post("/nothing/_search", json!({})).0, StatusCode::NOT_FOUND);

    let stats: Value = f.client.get(f.url("/docs/_stats")).send().unwrap().json().unwrap();
    assert_eq!(stats["docs_indexed"], 4);
    assert!(stats["index_size_bytes"].as_u64().unwrap() > 0);
}

#[test]
fn unrefreshed_documents_are_invisible() {
    let f = Fixture::start();
    f.put("/docs", json!({}));
    let r = f
        .client
        .post(f.url("/docs/_bulk"))
        .body(ndjson(&DOCS[..1]))
        .send()
        .unwrap();
    assert_eq!(r.status(), StatusCode::OK);
    assert_eq!(f.count("docs", json!({"match_all": {}})), 0);
    assert_eq!(f.post("/docs/_refresh", json!({})).0, StatusCode::OK);
    assert_eq!(f.count("docs", json!({"match_all": {}})), 1);
}

#[test]
fn reindex_copies_local_and_remote_sources() {
    let source = Fixture::start();
    source.put("/src", json!({}));
    source.bulk("src", ndjson(&DOCS[..3]));

    let f = Fixture::start();
    f.put("/left", json!({}));
    f.put("/right", json!({}));
    f.bulk("left", ndjson(&DOCS[..2]));
    f.bulk("right", ndjson(&DOCS[1..]));

    f.put("/local", json!({}));
    let (status, body) = f.post("/_reindex", json!({"source": [{"index": "left"}, {"index": "right"}], "dest": "local", "dedup": true}));
    assert_eq!(status, StatusCode::OK, "{body}");
    f.post("/local/_refresh", json!({}));
    assert_eq!(f.count("local", json!({"match_all": {}})), 3);

    f.put("/remote", json!({}));
    let remote_url = source.url("/src");
    let (status, body) = f.post("/_reindex", json!({"source": {"remote_url": remote_url}, "dest": {"index": "remote"}}));
    assert_eq!(status, StatusCode::OK, "{body}");
    f.post("/remote/_refresh", json!({}));
    assert_eq!(f.count("remote", json!({"match": {"field": "language", "query": "fra"}})), 1);
    assert_eq!(f.count("remote", json!({"match_all": {}})), 3);

    let (status, _) = f.post("/_reindex", json!({"source": {"index": "left"}, "dest": "local"}));
    assert_eq!(status, StatusCode::CONFLICT);

    let dead = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let dead_url = format!("http://{}/src", dead.local_addr().unwrap());
    drop(dead);
    f.put("/empty", json!({}));
    let (status, body) = f.post("/_reindex", json!({"source": {"remote_url": dead_url}, "dest": "empty"}));
    assert_eq!(status, StatusCode::BAD_GATEWAY, "{body}");
    assert_eq!(body["error"]["type"], "source_unreachable");

    assert_eq!(f.post("/_reindex", json!({"source": {"index": "ghost"}, "dest": "empty"})).0, StatusCode::NOT_FOUND);
}

#[test]
fn indices_survive_restart() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ServerConfig { port: 0, data_dir: dir.path().to_path_buf(), ..Default::default() };
    {
        let server = BackgroundServer::start(cfg.clone()).unwrap();
        let client = Client::new();
        client.put(format!("{}/kept", server.url())).json(&json!({})).send().unwrap();
        client.post(format!("{}/kept/_bulk?refresh=true", server.url())).body(ndjson(&DOCS)).send().unwrap();
        server.stop().unwrap();
    }
    let server = BackgroundServer::start(cfg).unwrap();
    let body: Value = Client::new()
        .post(format!("{}/kept/_count", server.url()))
        .json(&json!({}))
        .send()
        .unwrap()
        .json()
        .unwrap();
    assert_eq!(body["count"], 4);
}
