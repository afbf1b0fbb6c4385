use std::net::SocketAddr;
use std::path::Path;
use std::sync::{Arc, LazyLock};
use std::time::Duration;

use futures_util::{SinkExt, StreamExt};
use serde_json::Value;
use tokio::net::TcpStream;
use tokio::time::{timeout, Instant};
use tokio_tungstenite::tungstenite::Message;
use tokio_tungstenite::{connect_async, MaybeTlsStream, WebSocketStream};

use pursuit_app::config::AppConfig;
use pursuit_app::protocol::parse_client;
use pursuit_app::service::{bind, serve, ServiceOptions};

type Ws = WebSocketStream<MaybeTlsStream<TcpStream>>;

const STATE_KEYS: [&str; 12] = [
    "captured", "cursor", "delays", "disturbance", "error", "evader", "lag", "pursuer", "score",
    "t", "tick", "type",
];

fn schema(root: &str) -> jsonschema::Validator {
    let text = include_str!("../../../docs/protocol.schema.json");
    let mut schema: Value = serde_json::from_str(text).unwrap();
    schema["$ref"] = Value::from(format!("#/$defs/{root}"));
    jsonschema::validator_for(&schema).unwrap()
}

static SERVER_SCHEMA: LazyLock<jsonschema::Validator> = LazyLock::new(|| schema("server"));

async fn start(cfg: &AppConfig) -> SocketAddr {
    let opts = Arc::new(ServiceOptions::from_config(cfg).unwrap());
    let (listener, addr) = bind("127.0.0.1:0".parse().unwrap()).await.unwrap();
    tokio::spawn(serve(listener, opts, std::future::pending()));
    addr
}

async fn connect(addr: SocketAddr) -> Ws {
    connect_async(format!("ws://{addr}/ws")).await.unwrap().0
}

async fn next(ws: &mut Ws) -> Value {
    loop {
        let msg = timeout(Duration::from_secs(5), ws.next())
            .await
            .expect("server went quiet")
            .expect("stream ended")
            .unwrap();
        if let Message::Text(text) = msg {
            let v: Value = serde_json::from_str(text.as_str()).unwrap();
            assert!(SERVER_SCHEMA.is_valid(&v), "off-schema message {v}");
            return v;
        }
    }
}

async fn next_of(ws: &mut Ws, kind: &str) -> Value {
    loop {
        let v = next(ws).await;
        if v["type"] == kind {
            return v;
        }
    }
}

async fn send(ws: &mut Ws, text: &str) {
    ws.send(Message::text(text)).await.unwrap();
}

fn pair(v: &Value) -> [f64; 2] {
    [v[0].as_f64().unwrap(), v[1].as_f64().unwrap()]
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn streams_states_without_input() {
    let addr = start(&AppConfig::default()).await;
    let mut ws = connect(addr).await;
    let started = Instant::now();
    let mut last_t = -1.0;
    let mut count = 0;
    while started.elapsed() < Duration::from_secs(1) {
        let v = next_of(&mut ws, "state").await;
        let keys: Vec<&str> = v.as_object().unwrap().keys().map(String::as_str).collect();
        assert_eq!(keys, STATE_KEYS);
        assert_eq!(pair(&v["cursor"]), [0.5, 0.5]);
        let t = v["t"].as_f64().unwrap();
        assert!(t > last_t, "timestamps went from {last_t} to {t}");
        last_t = t;
        count += 1;
    }
    assert!((50..=70).contains(&count), "{count} state messages in 1 s");
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn preset_is_acknowledged_and_reported() {
    let cfg = AppConfig::parse(r#"{"delays": {"preset": "off"}}"#).unwrap();
    let mut ws = connect(start(&cfg).await).await;
    assert_eq!(pair(&next_of(&mut ws, "state").await["delays"]), [0.0, 0.0]);
    send(&mut ws, r#"{"type":"preset","value":"stable"}"#).await;
    let ack = next_of(&mut ws, "config_ack").await;
    assert_eq!(pair(&ack["delays"]), [0.8, 0.8]);
    assert_eq!(ack["paused"], false);
    assert_eq!(pair(&next_of(&mut ws, "state").await["delays"]), [0.8, 0.8]);

    send(&mut ws, r#"{"type":"set_delays","tau1":0.25,"tau2":0.5}"#).await;
    assert_eq!(pair(&next_of(&mut ws, "config_ack").await["delays"]), [0.25, 0.5]);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn evader_settles_on_cursor() {
    let mut ws = connect(start(&AppConfig::default()).await).await;
    let t0 = next_of(&mut ws, "state").await["t"].as_f64().unwrap();
    send(&mut ws, r#"{"type":"cursor","x":0.2,"y":0.7}"#).await;
    // 2% settling of the p = 10 filter is 0.583 s; allow for transit
    let band = 0.02 * (0.3f64).hypot(0.2);
    loop {
        let v = next_of(&mut ws, "state").await;
        let t = v["t"].as_f64().unwrap();
        let e = pair(&v["evader"]);
        if t >= t0 + 0.58 + 0.15 {
            assert!((e[0] - 0.2).hypot(e[1] - 0.7) <= band, "evader {e:?} at t = {t}");
        }
        if t >= t0 + 1.5 {
            assert!((e[0] - 0.2).hypot(e[1] - 0.7) < 1e-3);
            assert_eq!(pair(&v["cursor"]), [0.2, 0.7]);
            break;
        }
        send(&mut ws, r#"{"type":"cursor","x":0.2,"y":0.7}"#).await;
    }
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn malformed_messages_get_errors_and_the_session_continues() {
    let mut ws = connect(start(&AppConfig::default()).await).await;
    for bad in [
        "garbage",
        r#"{"type":"teleport"}"#,
        r#"{"type":"cursor","x":"left","y":0}"#,
        r#"{"type":"set_delays","tau1":-1,"tau2":0}"#,
        r#"{"type":"disturbance","kind":"sine","amplitude":1,"frequency":-2}"#,
    ] {
        send(&mut ws, bad).await;
        let v = next_of(&mut ws, "error").await;
        assert!(!v["message"].as_str().unwrap().is_empty());
    }
    ws.send(Message::binary(vec![1u8, 2, 3])).await.unwrap();
    next_of(&mut ws, "error").await;
    send(&mut ws, r#"{"type":"reset"}"#).await;
    next_of(&mut ws, "config_ack").await;
    next_of(&mut ws, "state").await;
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn pause_freezes_simulated_time() {
    let mut ws = connect(start(&AppConfig::default()).await).await;
    next_of(&mut ws, "state").await;
    send(&mut ws, r#"{"type":"pause","paused":true}"#).await;
    assert_eq!(next_of(&mut ws, "config_ack").await["paused"], true);
    // nothing but the ack until resumed
    assert!(timeout(Duration::from_millis(300), ws.next()).await.is_err());
    send(&mut ws, r#"{"type":"pause"}"#).await;
    assert_eq!(next_of(&mut ws, "config_ack").await["paused"], false);
    let v = next_of(&mut ws, "state").await;
    assert!(v["t"].as_f64().unwrap() < 0.25, "{v}");
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn scripted_client_at_sixty_hertz_for_ten_seconds() {
    let mut ws = connect(start(&AppConfig::default()).await).await;
    let started = Instant::now();
    let mut tick = tokio::time::interval(Duration::from_secs_f64(1.0 / 60.0));
    let (mut count, mut last_t, mut k) = (0usize, -1.0, 0u32);
    loop {
        tokio::select! {
            _ = tick.tick() => {
                if started.elapsed() >= Duration::from_secs(10) {
                    break;
                }
                k += 1;
                let x = 0.5 + 0.3 * (k as f64 * 0.05).cos();
                send(&mut ws, &format!(r#"{{"type":"cursor","x":{x},"y":0.5}}"#)).await;
            }
            msg = ws.next() => {
                let Some(Ok(Message::Text(text))) = msg else { continue };
                let v: Value = serde_json::from_str(text.as_str()).unwrap();
                assert!(SERVER_SCHEMA.is_valid(&v), "off-schema message {v}");
                if v["type"] == "state" {
                    let t = v["t"].as_f64().unwrap();
                    assert!(t > last_t);
                    last_t = t;
                    count += 1;
                }
            }
        }
    }
    assert!(count >= 590, "{count} state messages in 10 s");
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn recorded_session_replays_through_simulate() {
    let dir = tempfile::tempdir().unwrap();
    let rec = dir.path().join("rec");
    let mut cfg = AppConfig::default();
    cfg.service.record_dir = Some(rec.clone());
    let mut ws = connect(start(&cfg).await).await;
    let started = Instant::now();
    let mut k = 0;
    while started.elapsed() < Duration::from_millis(1500) {
        next_of(&mut ws, "state").await;
        k += 1;
        if k % 3 == 0 {
            let x = 0.5 + 0.2 * (k as f64 * 0.3).sin();
            send(&mut ws, &format!(r#"{{"type":"cursor","x":{x},"y":0.4}}"#)).await;
        }
    }
    ws.close(None).await.unwrap();
    drop(ws);

    let telemetry = rec.join("session-1-telemetry.csv");
    let cursor = rec.join("session-1-cursor.csv");
    let live = wait_for_flush(&telemetry).await;
    let rows = live.lines().count() - 1;
    assert!(rows > 1000, "{rows} rows recorded");

    let cfg_path = dir.path().join("c.json");
    let horizon = (rows - 1) as f64 * 0.001;
    std::fs::write(&cfg_path, format!(r#"{{"sim": {{"horizon": {horizon}}}}}"#)).unwrap();
    let out = dir.path().join("replay.csv");
    let r = std::process::Command::new(env!("CARGO_BIN_EXE_pursuit"))
        .args(["simulate", "--config"])
        .arg(&cfg_path)
        .arg("--out")
        .arg(&out)
        .arg("--cursor-log")
        .arg(&cursor)
        .output()
        .unwrap();
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let replay = std::fs::read_to_string(&out).unwrap();
    assert_eq!(replay.lines().count(), live.lines().count());
    assert!(replay == live, "replayed telemetry differs from the live recording");
}

async fn wait_for_flush(path: &Path) -> String {
    let deadline = Instant::now() + Duration::from_secs(5);
    let mut last = String::new();
    loop {
        tokio::time::sleep(Duration::from_millis(200)).await;
        let now = std::fs::read_to_string(path).unwrap_or_default();
        if !now.is_empty() && now == last && now.ends_with('\n') {
            return now;
        }
        assert!(Instant::now() < deadline, "recording never settled");
        last = now;
    }
}

#[test]
fn schema_and_parser_agree_on_client_messages() {
    let client = schema("client");
    for good in [
        r#"{"type":"cursor","x":0.2,"y":0.7}"#,
        r#"{"type":"preset","value":"critical"}"#,
        r#"{"type":"set_delays","tau1":0.3,"tau2":0.9}"#,
        r#"{"type":"disturbance","kind":"pulse","amplitude":2,"start":1,"duration":0.5,"channel":"x"}"#,
        r#"{"type":"reset"}"#,
        r#"{"type":"pause","paused":true}"#,
    ] {
        let v: Value = serde_json::from_str(good).unwrap();
        assert!(client.is_valid(&v), "{good}");
        assert!(parse_client(good).is_ok(), "{good}");
    }
    for bad in [
        r#"{"type":"cursor","x":1}"#,
        r#"{"type":"preset","value":"manual"}"#,
        r#"{"type":"disturbance","kind":"step","amplitude":1}"#,
        r#"{"type":"reset","now":true}"#,
        r#"{"type":"warp"}"#,
    ] {
        let v: Value = serde_json::from_str(bad).unwrap();
        assert!(!client.is_valid(&v), "{bad}");
        assert!(parse_client(bad).is_err(), "{bad}");
    }
}
