use std::path::Path;

use reqwest::{Client, StatusCode};
use serde_json::{json, Value};
use tinder_core::io::{data_csv_string, generate_blobs, SyntheticSpec};
use tinder_core::Data;
use tinder_service::{Service, ServiceConfig};
use tokio::sync::oneshot;
use tokio::task::JoinHandle;

struct Running {
    base: String,
    client: Client,
    stop: Option<oneshot::Sender<()>>,
    task: Option<JoinHandle<usize>>,
}

impl Running {
    async fn start(dir: &Path) -> Self {
        Self::start_with(ServiceConfig::new(dir)).await
    }

    async fn start_with(config: ServiceConfig) -> Self {
        let service = Service::bind(config, "127.0.0.1:0").await.unwrap();
        let base = format!("http://{}", service.local_addr().unwrap());
        let (tx, rx) = oneshot::channel();
        let task = tokio::spawn(async move {
            service
                .run(async {
                    let _ = rx.await;
                })
                .await
                .unwrap()
        });
        Self { base, client: Client::new(), stop: Some(tx), task: Some(task) }
    }

    async fn stop(mut self) -> usize {
        self.stop.take().unwrap().send(()).unwrap();
        self.task.take().unwrap().await.unwrap()
    }

    fn url(&self, path: &str) -> String {
        format!("{}{path}", self.base)
    }

    async fn post(&self, path: &str, body: Value) -> (StatusCode, Value) {
        let r = self.client.post(self.url(path)).json(&body).send().await.unwrap();
        (r.status(), r.json().await.unwrap_or(Value::Null))
    }

    async fn post_empty(&self, path: &str) -> (StatusCode, Value) {
        let r = self.client.post(self.url(path)).send().await.unwrap();
        (r.status(), r.json().await.unwrap_or(Value::Null))
    }

    async fn upload(&self, csv: &str) -> (StatusCode, Value) {
        let r = self.client.post(self.url("/datasets")).body(csv.to_string()).send().await.unwrap();
        (r.status(), r.json().await.unwrap_or(Value::Null))
    }

    async fn get(&self, path: &str) -> (StatusCode, Value) {
        let r = self.client.get(self.url(path)).send().await.unwrap();
        (r.status(), r.json().await.unwrap_or(Value::Null))
    }

    async fn session(&self, beta: Value) -> (String, Value) {
        let (_, ds) = self.upload(&blob_csv()).await;
        let (status, body) = self
            .post("/sessions", json!({"dataset_id": ds["dataset_id"], "k": 2, "beta": beta, "seed": 1, "restarts": 4}))
            .await;
        assert_eq!(status, StatusCode::CREATED, "{body}");
        (body["session_id"].as_str().unwrap().to_string(), body)
    }
}

fn blobs() -> Data {
    generate_blobs(&SyntheticSpec::four_blobs(1)).unwrap()
}

fn blob_csv() -> String {
    data_csv_string(&blobs())
}

#[tokio::test(flavor = "multi_thread")]
async fn dataset_upload_is_content_addressed() {
    let dir = tempfile::tempdir().unwrap();
    let svc = Running::start(dir.path()).await;
    let (status, first) = svc.upload(&blob_csv()).await;
    assert_eq!(status, StatusCode::CREATED);
    assert_eq!((first["n"].as_u64(), first["d"].as_u64()), (Some(800), Some(2)));
    assert_eq!(first["has_labels"], true);

    let (status, again) = svc.upload(&blob_csv()).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(again["dataset_id"], first["dataset_id"]);

    let (status, info) = svc.get(&format!("/datasets/{}", first["dataset_id"].as_str().unwrap())).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(info["n"], 800);

    let (status, body) = svc.upload("1,2\n3,4,5\n").await;
    assert_eq!(status, StatusCode::BAD_REQUEST, "{body}");
    let (status, body) = svc.upload("x,y\n1,2\n3,abc\n").await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!((body["row"].as_u64(), body["column"].as_u64()), (Some(3), Some(2)));
    assert_eq!(svc.get("/datasets/nope").await.0, StatusCode::NOT_FOUND);
    svc.stop().await;
}

#[tokio::test(flavor = "multi_thread")]
async fn session_creation_validates_input() {
    let dir = tempfile::tempdir().unwrap();
    let svc = Running::start(dir.path()).await;
    let (_, ds) = svc.upload(&blob_csv()).await;
    let id = ds["dataset_id"].clone();

    let (status, body) = svc.post("/sessions", json!({"dataset_id": id, "k": 2, "beta": 1, "seed": 1})).await;
    assert_eq!(status, StatusCode::CREATED);
    assert_eq!(body["iteration"], 0);
    let clusters = body["clusters"].as_array().unwrap();
    assert_eq!(clusters.len(), 2);
    let total: u64 = clusters.iter().map(|c| c["size"].as_u64().unwrap()).sum();
    assert_eq!(total, 800);
    for c in clusters {
        assert_eq!(c["top_members"].as_array().unwrap().len(), 6);
        assert_eq!(c["centroid"].as_array().unwrap().len(), 2);
    }

    for bad in [
        json!({"dataset_id": id, "k": 0, "beta": 1}),
        json!({"dataset_id": id, "k": -3, "beta": 1}),
        json!({"dataset_id": id, "k": 2, "beta": -1}),
        json!({"dataset_id": id, "k": 2, "beta": "lots"}),
        json!({"dataset_id": id, "k": 1, "beta": "auto"}),
        json!({"dataset_id": id, "k": 801, "beta": 1}),
    ] {
        let (status, body) = svc.post("/sessions", bad.clone()).await;
        assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY, "{bad} -> {body}");
    }
    let (status, _) = svc.post("/sessions", json!({"dataset_id": "missing", "k": 2, "beta": 1})).await;
    assert_eq!(status, StatusCode::NOT_FOUND);

    let (status, body) = svc.post("/sessions", json!({"dataset_id": id, "k": 2, "beta": "auto", "seed": 3})).await;
    assert_eq!(status, StatusCode::CREATED, "{body}");
    let (_, list) = svc.get("/sessions").await;
    assert_eq!(list.as_array().unwrap().len(), 2);
    svc.stop().await;
}

#[tokio::test(flavor = "multi_thread")]
async fn reject_accept_lifecycle() {
    let dir = tempfile::tempdir().unwrap();
    let svc = Running::start(dir.path()).await;
    let (sid, _) = svc.session(json!(1)).await;
    let (_, frozen) = svc.get(&format!("/sessions/{sid}/clusterings/0?soft=true")).await;

    let (status, first) = svc.post_empty(&format!("/sessions/{sid}/reject")).await;
    assert_eq!(status, StatusCode::OK, "{first}");
    assert_eq!(first["iteration"], 1);
    assert_eq!(first["clusters"].as_array().unwrap().len(), 2);
    assert!(first["diversity"]["ars_to_previous"].is_number());
    let (_, second) = svc.post_empty(&format!("/sessions/{sid}/reject")).await;
    assert_eq!(second["iteration"], 2);

    let (status, history) = svc.get(&format!("/sessions/{sid}/history")).await;
    assert_eq!(status, StatusCode::OK);
    let ars = history["report"]["ars"].as_array().unwrap();
    assert_eq!(ars.len(), 3);
    assert!(ars.iter().all(|row| row.as_array().unwrap().len() == 3));
    assert_eq!(history["iterations"].as_array().unwrap().len(), 3);
    assert_eq!(
        second["diversity"]["ars_max_pairwise"].as_f64().unwrap(),
        (0..3)
            .flat_map(|i| (0..3).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| ars[i][j].as_f64().unwrap())
            .fold(f64::MIN, f64::max)
    );

    let (_, again) = svc.get(&format!("/sessions/{sid}/clusterings/0?soft=true")).await;
    assert_eq!(again, frozen);
    assert_eq!(svc.get(&format!("/sessions/{sid}/clusterings/3")).await.0, StatusCode::NOT_FOUND);

    let (status, points) = svc.get(&format!("/sessions/{sid}/points?t=1")).await;
    assert_eq!(status, StatusCode::OK);
    let points = points.as_array().unwrap();
    assert_eq!(points.len(), 800);
    assert!(points.iter().all(|p| p["coords"].as_array().unwrap().len() == 2));
    assert_eq!(svc.get(&format!("/sessions/{sid}/points?t=9")).await.0, StatusCode::NOT_FOUND);

    let (status, body) = svc.post_empty(&format!("/sessions/{sid}/accept")).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body, json!({"status": "accepted", "iteration": 2}));
    assert_eq!(svc.post_empty(&format!("/sessions/{sid}/accept")).await.0, StatusCode::CONFLICT);
    assert_eq!(svc.post_empty(&format!("/sessions/{sid}/reject")).await.0, StatusCode::CONFLICT);
    let (_, info) = svc.get(&format!("/sessions/{sid}")).await;
    assert_eq!(info["status"], "accepted");

    for path in ["reject", "accept"] {
        assert_eq!(svc.post_empty(&format!("/sessions/nope/{path}")).await.0, StatusCode::NOT_FOUND);
    }
    for path in ["history", "clusterings/0", "points"] {
        assert_eq!(svc.get(&format!("/sessions/nope/{path}")).await.0, StatusCode::NOT_FOUND);
    }
    svc.stop().await;
}

#[tokio::test(flavor = "multi_thread")]
async fn strong_penalty_reject_moves_away() {
    let dir = tempfile::tempdir().unwrap();
    let svc = Running::start(dir.path()).await;
    let (sid, _) = svc.session(json!(100)).await;
    let (_, body) = svc.post_empty(&format!("/sessions/{sid}/reject")).await;
    let ars = body["diversity"]["ars_to_previous"].as_f64().unwrap();
    assert!(ars <= 0.3, "ARS {ars}");
    assert_eq!(body["diversity"]["novel"], true);
    svc.stop().await;
}

#[tokio::test(flavor = "multi_thread")]
async fn concurrent_rejects_yield_one_iteration() {
    let dir = tempfile::tempdir().unwrap();
    let svc = Running::start(dir.path()).await;
    let (sid, _) = svc.session(json!(1)).await;
    let url = svc.url(&format!("/sessions/{sid}/reject"));
    let (a, b) = tokio::join!(svc.client.post(&url).send(), svc.client.post(&url).send());
    let mut statuses = vec![a.unwrap().status(), b.unwrap().status()];
    statuses.sort();
    let (_, history) = svc.get(&format!("/sessions/{sid}/history")).await;
    let iterations: Vec<u64> =
        history["iterations"].as_array().unwrap().iter().map(|e| e["iteration"].as_u64().unwrap()).collect();
    if statuses == [StatusCode::OK, StatusCode::OK] {
        // the first fit finished before the second request arrived
        assert_eq!(iterations, vec![0, 1, 2]);
    } else {
        assert_eq!(statuses, vec![StatusCode::OK, StatusCode::CONFLICT]);
        assert_eq!(iterations, vec![0, 1]);
    }
    svc.stop().await;
}

#[tokio::test(flavor = "multi_thread")]
async fn restart_preserves_history_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let svc = Running::start(dir.path()).await;
    let (sid, _) = svc.session(json!(20)).await;
    svc.post_empty(&format!("/sessions/{sid}/reject")).await;
    let (_, before) = svc.get(&format!("/sessions/{sid}/history")).await;
    let (_, c1) = svc.get(&format!("/sessions/{sid}/clusterings/1?soft=true")).await;
    let file_before = std::fs::read(dir.path().join("sessions").join(format!("{sid}.json"))).unwrap();
    assert_eq!(svc.stop().await, 1);

    let file_after = std::fs::read(dir.path().join("sessions").join(format!("{sid}.json"))).unwrap();
    assert_eq!(file_before, file_after);

    let svc = Running::start(dir.path()).await;
    let (_, after) = svc.get(&format!("/sessions/{sid}/history")).await;
    assert_eq!(after, before);
    let (_, c1_again) = svc.get(&format!("/sessions/{sid}/clusterings/1?soft=true")).await;
    assert_eq!(c1_again, c1);
    let (status, next) = svc.post_empty(&format!("/sessions/{sid}/reject")).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(next["iteration"], 2);
    let (status, _) = svc.upload(&blob_csv()).await;
    assert_eq!(status, StatusCode::OK);
    svc.stop().await;
}

#[tokio::test(flavor = "multi_thread")]
async fn representative_members_follow_the_requested_order() {
    let dir = tempfile::tempdir().unwrap();
    let svc = Running::start(dir.path()).await;
    let (sid, _) = svc.session(json!(1)).await;
    let (_, soft) = svc.get(&format!("/sessions/{sid}/clusterings/0?soft=true")).await;
    let resp: Vec<Vec<f64>> = serde_json::from_value(soft["responsibilities"].clone()).unwrap();
    for cluster in soft["clusters"].as_array().unwrap() {
        let c = cluster["index"].as_u64().unwrap() as usize;
        let top: Vec<usize> = serde_json::from_value(cluster["top_members"].clone()).unwrap();
        let mut expected: Vec<usize> = (0..resp.len()).collect();
        expected.sort_by(|&a, &b| resp[b][c].total_cmp(&resp[a][c]).then(a.cmp(&b)));
        assert_eq!(top, expected[..6]);
    }

    let (status, dense) = svc.get(&format!("/sessions/{sid}/clusterings/0?order=density")).await;
    assert_eq!(status, StatusCode::OK);
    assert!(dense.get("responsibilities").is_none());
    let data = blobs();
    for cluster in dense["clusters"].as_array().unwrap() {
        let centroid: Vec<f64> = serde_json::from_value(cluster["centroid"].clone()).unwrap();
        let top: Vec<usize> = serde_json::from_value(cluster["top_members"].clone()).unwrap();
        let dist = |i: usize| {
            let row = data.row(i);
            (row[0] - centroid[0]).powi(2) + (row[1] - centroid[1]).powi(2)
        };
        // the densest members sit closer to the mean than a typical member
        let typical = (0..data.n()).map(dist).sum::<f64>() / data.n() as f64;
        assert!(top.iter().all(|&i| dist(i) < typical));
    }
    assert_eq!(svc.get(&format!("/sessions/{sid}/clusterings/0?order=bogus")).await.0, StatusCode::BAD_REQUEST);
    svc.stop().await;
}

#[tokio::test(flavor = "multi_thread")]
async fn cors_allows_the_configured_origin() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = ServiceConfig::new(dir.path());
    config.cors_origin = Some("http://localhost:5173".into());
    let svc = Running::start_with(config).await;
    let r = svc
        .client
        .get(svc.url("/health"))
        .header("Origin", "http://localhost:5173")
        .send()
        .await
        .unwrap();
    assert_eq!(r.status(), StatusCode::OK);
    assert_eq!(r.headers()["access-control-allow-origin"], "http://localhost:5173");
    svc.stop().await;
}
