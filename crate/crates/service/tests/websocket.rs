use std::sync::Arc;

use futures::{SinkExt, StreamExt};
use qmotion::dataset::biped_skeleton;
use qmotion::gait::{PaceConfig, PaceNet};
use qmotion::posenet::{PoseMode, PoseNet, PoseNetConfig};
use qmotion_service::{serve_listener, AppState, Registry, ServerMessage};
use serde_json::{json, Value};
use tokio::net::TcpStream;
use tokio_tungstenite::tungstenite::Message;
use tokio_tungstenite::{connect_async, MaybeTlsStream, WebSocketStream};

type Ws = WebSocketStream<MaybeTlsStream<TcpStream>>;

fn write_checkpoints(dir: &std::path::Path) {
    let skel = Arc::new(biped_skeleton());
    let cfg = PoseNetConfig {
        mode: PoseMode::Velocity,
        hidden: 16,
        layers: 1,
        n: 4,
        k: 2,
        include_controls: true,
        include_translations: true,
        ..PoseNetConfig::new(skel.len())
    };
    let pose = PoseNet::new(cfg, skel, 11).unwrap();
    pose.to_checkpoint().save(&dir.join("walker.ckpt")).unwrap();
    let mut c = PaceNet::new(PaceConfig::default(), 5).to_checkpoint();
    c.set("segment_length", 0.25);
    c.save(&dir.join("pace.ckpt")).unwrap();
    std::fs::write(dir.join("notes.txt"), "ignored").unwrap();
}

async fn start(max_sessions: usize) -> (String, tempfile::TempDir) {
    let dir = tempfile::tempdir().unwrap();
    write_checkpoints(dir.path());
    let registry = Registry::load_dir(dir.path()).unwrap();
    assert_eq!(registry.pose.len(), 1);
    assert_eq!(registry.pace.len(), 1);
    let state = AppState::new(registry, max_sessions, 30.0);
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(serve_listener(listener, state));
    (format!("ws://{addr}/ws"), dir)
}

async fn connect(url: &str) -> Ws {
    connect_async(url).await.unwrap().0
}

async fn send(ws: &mut Ws, v: Value) {
    ws.send(Message::Text(v.to_string().into())).await.unwrap();
}

async fn recv(ws: &mut Ws) -> Value {
    loop {
        match ws.next().await.unwrap().unwrap() {
            Message::Text(t) => return serde_json::from_str(&t).unwrap(),
            Message::Close(_) => panic!("closed"),
            _ => continue,
        }
    }
}

async fn steps(ws: &mut Ws, n: usize) -> Vec<Value> {
    send(ws, json!({"type": "step", "count": n})).await;
    let mut out = Vec::new();
    for _ in 0..n {
        let m = recv(ws).await;
        let last = m["type"] != "frame";
        out.push(m);
        if last {
            break;
        }
    }
    out
}

fn open_msg() -> Value {
    json!({"type": "open", "pose": "walker", "pace": "pace", "trajectory": [[0.0, 0.0], [0.0, 4.0], [2.0, 6.0]]})
}

fn vec3(v: &Value) -> [f64; 3] {
    let a = v.as_array().unwrap();
    [a[0].as_f64().unwrap(), a[1].as_f64().unwrap(), a[2].as_f64().unwrap()]
}

fn seg_dist(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let d = [b[0] - a[0], b[1] - a[1]];
    let l2 = d[0] * d[0] + d[1] * d[1];
    let t = if l2 > 0.0 { (((p[0] - a[0]) * d[0] + (p[1] - a[1]) * d[1]) / l2).clamp(0.0, 1.0) } else { 0.0 };
    ((p[0] - a[0] - t * d[0]).powi(2) + (p[1] - a[1] - t * d[1]).powi(2)).sqrt()
}

#[tokio::test(flavor = "multi_thread")]
async fn open_reports_skeleton_and_errors() {
    let (url, _dir) = start(4).await;
    let mut ws = connect(&url).await;
    send(&mut ws, json!({"type": "step", "count": 1})).await;
    assert_eq!(recv(&mut ws).await["code"], "NoSession");
    send(&mut ws, json!({"type": "open", "pose": "nope"})).await;
    assert_eq!(recv(&mut ws).await["code"], "UnknownCheckpoint");
    send(&mut ws, json!({"type": "open", "pose": "walker", "pace": "missing"})).await;
    assert_eq!(recv(&mut ws).await["code"], "UnknownCheckpoint");
    ws.send(Message::Text("{not json".into())).await.unwrap();
    assert_eq!(recv(&mut ws).await["code"], "BadMessage");

    send(&mut ws, open_msg()).await;
    let m = recv(&mut ws).await;
    let parsed: ServerMessage = serde_json::from_value(m.clone()).unwrap();
    let ServerMessage::Skeleton { joints, frame_rate, .. } = parsed else { panic!("{m}") };
    assert_eq!(frame_rate, 30.0);
    let skel = biped_skeleton();
    assert_eq!(joints.len(), skel.len());
    for (i, j) in joints.iter().enumerate() {
        assert_eq!(j.name, skel.joint(i).name);
        assert_eq!(j.parent, skel.parent(i));
        assert_eq!(j.offset, skel.offset(i));
    }
}

#[tokio::test(flavor = "multi_thread")]
async fn frames_are_unit_timed_and_on_path() {
    let (url, _dir) = start(4).await;
    let mut ws = connect(&url).await;
    send(&mut ws, open_msg()).await;
    let sk = recv(&mut ws).await;
    let path: Vec<[f64; 2]> = serde_json::from_value(sk["path"].clone()).unwrap();
    let skel = biped_skeleton();
    let frames = steps(&mut ws, 400).await;
    let last = frames.last().unwrap();
    assert_eq!(last["code"], "EndOfTrajectory");
    let frames = &frames[..frames.len() - 1];
    assert!(frames.len() > 100);
    for (i, f) in frames.iter().enumerate() {
        assert_eq!(f["index"].as_u64().unwrap() as usize, i);
        let t = f["t"].as_f64().unwrap();
        assert!((t - (i + 1) as f64 / 30.0).abs() < 1e-12);
        let theta = f["theta"].as_f64().unwrap();
        assert!((0.0..std::f64::consts::TAU).contains(&theta));
        for q in f["quats"].as_array().unwrap() {
            let n: f64 = q.as_array().unwrap().iter().map(|c| c.as_f64().unwrap().powi(2)).sum();
            assert!((n.sqrt() - 1.0).abs() <= 1e-9);
        }
        let root = vec3(&f["root"]);
        let d = path.windows(2).map(|w| seg_dist([root[0], root[2]], w[0], w[1])).fold(f64::INFINITY, f64::min);
        assert!(d <= 0.25 + 1e-9, "frame {i} off path by {d}");
        let pos: Vec<[f64; 3]> = f["positions"].as_array().unwrap().iter().map(vec3).collect();
        for j in 1..skel.len() {
            let p = pos[skel.parent(j).unwrap()];
            let len = ((pos[j][0] - p[0]).powi(2) + (pos[j][1] - p[1]).powi(2) + (pos[j][2] - p[2]).powi(2)).sqrt();
            let rest = skel.bone_length(j);
            assert!((len - rest).abs() <= 1e-9 * rest, "frame {i} joint {j}: {len} vs {rest}");
        }
    }
    // The session stays open and resumes after an extension.
    send(&mut ws, json!({"type": "controls", "extend": [[2.0, 8.0]]})).await;
    assert_eq!(recv(&mut ws).await["type"], "ack");
    assert_eq!(steps(&mut ws, 1).await[0]["type"], "frame");
}

#[tokio::test(flavor = "multi_thread")]
async fn sessions_are_isolated() {
    let (url, _dir) = start(4).await;
    let mut solo = connect(&url).await;
    send(&mut solo, open_msg()).await;
    recv(&mut solo).await;
    let reference = steps(&mut solo, 40).await;

    let mut a = connect(&url).await;
    let mut b = connect(&url).await;
    send(&mut a, open_msg()).await;
    recv(&mut a).await;
    send(&mut b, open_msg()).await;
    recv(&mut b).await;
    let mut fa = Vec::new();
    let mut fb = Vec::new();
    for chunk in [3usize, 1, 7, 2, 11, 16] {
        fa.extend(steps(&mut a, chunk).await);
        fb.extend(steps(&mut b, 5).await);
    }
    fb.extend(steps(&mut b, 10).await);
    assert_eq!(fa, reference);
    assert_eq!(fb, reference);
}

#[tokio::test(flavor = "multi_thread")]
async fn speed_zero_halts_and_behind_edits_fail() {
    let (url, _dir) = start(4).await;
    let mut ws = connect(&url).await;
    send(&mut ws, open_msg()).await;
    recv(&mut ws).await;
    steps(&mut ws, 45).await;

    send(&mut ws, json!({"type": "controls", "extend": [[0.0, 0.2], [0.0, 0.4]]})).await;
    assert_eq!(recv(&mut ws).await["code"], "PathBehindCharacter");
    let after_error = steps(&mut ws, 1).await;
    assert_eq!(after_error[0]["index"], 45);

    send(&mut ws, json!({"type": "controls", "speed": 0.0})).await;
    assert_eq!(recv(&mut ws).await["type"], "ack");
    let frames = steps(&mut ws, 60).await;
    let tail: Vec<[f64; 3]> = frames[30..].iter().map(|f| vec3(&f["root"])).collect();
    for w in tail.windows(2) {
        let d = ((w[1][0] - w[0][0]).powi(2) + (w[1][2] - w[0][2]).powi(2)).sqrt();
        assert!(d < 1e-12, "root still moving: {d}");
    }

    send(&mut ws, json!({"type": "controls", "speed": -1.0})).await;
    assert_eq!(recv(&mut ws).await["type"], "error");
}

#[tokio::test(flavor = "multi_thread")]
async fn session_limit_is_enforced() {
    let (url, _dir) = start(1).await;
    let mut first = connect(&url).await;
    send(&mut first, open_msg()).await;
    assert_eq!(recv(&mut first).await["type"], "skeleton");
    let mut second = connect(&url).await;
    assert_eq!(recv(&mut second).await["code"], "TooManySessions");
    first.close(None).await.unwrap();
    drop(first);
    let mut third = None;
    for _ in 0..50 {
        tokio::time::sleep(std::time::Duration::from_millis(20)).await;
        let mut ws = connect(&url).await;
        send(&mut ws, open_msg()).await;
        let m = recv(&mut ws).await;
        if m["type"] == "skeleton" {
            third = Some(ws);
            break;
        }
    }
    assert!(third.is_some());
}
