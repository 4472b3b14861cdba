use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Output, Stdio};
use std::sync::mpsc;
use std::time::{Duration, Instant};

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_phyweb"))
}

fn demo(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../demo").join(name)
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("phyweb-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write(name: &str, text: &str) -> String {
    let p = scratch(name);
    std::fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

struct Server {
    child: Child,
    base: String,
    banner: Vec<String>,
}

impl Server {
    fn start(extra: &[&str]) -> Server {
        let mut child = bin()
            .args(["serve", "--port", "0"])
            .args(extra)
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()
            .unwrap();
        // the banner has no terminator, so lines are drained on a thread
        let out = BufReader::new(child.stdout.take().unwrap());
        let (tx, rx) = mpsc::channel();
        std::thread::spawn(move || {
            for line in out.lines().map_while(Result::ok) {
                if tx.send(line).is_err() {
                    break;
                }
            }
        });
        let first = rx.recv_timeout(Duration::from_secs(20)).expect("server printed nothing");
        let base = first.strip_prefix("listening on ").expect(&first).to_string();
        let banner = std::iter::from_fn(|| rx.recv_timeout(Duration::from_millis(300)).ok()).collect();
        Server { child, base, banner }
    }

    fn context(&self) -> Value {
        reqwest::blocking::get(format!("{}/api/v1/context", self.base)).unwrap().json().unwrap()
    }
}

impl Drop for Server {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

#[test]
fn adapt_hides_big_mall_when_zone_false() {
    let ctx = write("ctx-false.json", r#"{"zones": {"BIG_MALL": false}}"#);
    let o = run(&["adapt", "--html", demo("page.html").to_str().unwrap(), "--context", &ctx, "--bindings", demo("bindings.json").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains(r#"<div id="BIG_MALL" class="phyweb-hidden">"#));
    assert!(stderr(&o).contains("hidden BIG_MALL"));
}

#[test]
fn adapt_passes_plain_pages_through() {
    let page = "<html><body><p>no rules\u{00e9}</p>\r\n</body></html>";
    let html = write("plain.html", page);
    let ctx = write("ctx-empty.json", "{}");
    let o = run(&["adapt", "--html", &html, "--context", &ctx]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(o.stdout, page.as_bytes());
}

#[test]
fn adapt_prune_removes_nested_inner_block() {
    let html = write(
        "nested.html",
        r#"<div data-phyweb-when="true">outer<span data-phyweb-when="user_movement_type == VEHICLE">inner</span></div>"#,
    );
    let ctx = write("ctx-walk.json", r#"{"movement": "WALKING"}"#);
    let o = run(&["adapt", "--html", &html, "--context", &ctx, "--mode", "prune", "--json"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o), r#"<div data-phyweb-when="true">outer</div>"#);
    let report: Value = serde_json::from_str(stderr(&o).trim()).unwrap();
    assert_eq!(report["hidden"].as_array().unwrap().len(), 1);
}

#[test]
fn adapt_failures_exit_one() {
    let ctx = write("ctx-empty2.json", "{}");
    let html = write("unbalanced.html", r#"<section><div data-phyweb-when="true">x</section>"#);
    let o = run(&["adapt", "--html", &html, "--context", &ctx]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("byte 9"), "{}", stderr(&o));

    let html = write("badrule.html", r#"<div data-phyweb-when="a < b < c">x</div>"#);
    let o = run(&["adapt", "--html", &html, "--context", &ctx]);
    assert_eq!(o.status.code(), Some(1));
    // a rule that does not parse leaves its element untouched
    assert_eq!(stdout(&o), r#"<div data-phyweb-when="a < b < c">x</div>"#);

    let o = run(&["adapt", "--html", &html, "--context", &write("badctx.json", "{")]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn rules_check_reports() {
    let ok = write("ok.txt", "user_movement_type == VEHICLE\n");
    let o = run(&["rules-check", &ok]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("OK user_movement_type == VEHICLE"));

    let empty = write("empty.txt", "");
    let o = run(&["rules-check", &empty, "--json"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(serde_json::from_slice::<Value>(&o.stdout).unwrap(), serde_json::json!([]));

    let chain = write("chain.txt", "a < b < c\n");
    let o = run(&["rules-check", &chain]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("comparison chain"));

    let o = run(&["rules-check", demo("page.html").to_str().unwrap(), demo("bindings.json").to_str().unwrap(), demo("rules.txt").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));

    let o = run(&["rules-check", "/definitely/not/here.html"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn serve_rejects_bad_config_with_offset() {
    let cfg = write("bad-config.json", r#"{"port": 8170,, }"#);
    let o = run(&["serve", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("byte 14"), "{}", stderr(&o));
    let o = run(&["serve", "--bogus"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn sim_output_is_deterministic() {
    let (env, trace) = (demo("env.json"), demo("trace.json"));
    let files: Vec<String> = ["a.jsonl", "b.jsonl", "c.jsonl"].iter().map(|n| scratch(n).to_string_lossy().into_owned()).collect();
    for (file, seed) in files.iter().zip(["5", "5", "6"]) {
        let o = run(&["sim", "--env", env.to_str().unwrap(), "--trace", trace.to_str().unwrap(), "--seed", seed, "--out", file, "--json"]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        let summary: Value = serde_json::from_str(stdout(&o).trim()).unwrap();
        assert_eq!(summary["steps"], 71);
    }
    let read = |p: &String| std::fs::read(p).unwrap();
    assert_eq!(read(&files[0]), read(&files[1]));
    assert_ne!(read(&files[0]), read(&files[2]));
}

#[test]
fn sim_rejects_bad_inputs() {
    let trace = write("bad-trace.json", r#"{"waypoints": [{"tS": 1, "x": 0, "y": 0}, {"tS": 1, "x": 1, "y": 0}]}"#);
    let o = run(&["sim", "--env", demo("env.json").to_str().unwrap(), "--trace", &trace, "--out", &write("x.jsonl", "")]);
    assert_eq!(o.status.code(), Some(2));
    let o = run(&["sim", "--env", demo("env.json").to_str().unwrap(), "--trace", demo("trace.json").to_str().unwrap(), "--post", "http://127.0.0.1:9"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("step 0"), "{}", stderr(&o));
}

#[test]
fn live_run_and_replay_publish_identically() {
    let cfg = write(
        "replay-config.json",
        &format!(r#"{{"predicatesPath": {:?}}}"#, demo("predicates.json").canonicalize().unwrap()),
    );
    let live = Server::start(&["--config", &cfg]);
    assert!(live.banner.iter().any(|l| l.contains("/api/v1/events")), "{:?}", live.banner);
    let (env, trace) = (demo("env.json"), demo("trace.json"));
    let args = ["sim", "--env", env.to_str().unwrap(), "--trace", trace.to_str().unwrap(), "--seed", "3"];
    let o = bin().args(args).args(["--post", &live.base]).output().unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let live_summary = stdout(&o);
    assert!(live_summary.starts_with("steps 71, publishes "), "{live_summary}");

    let file = scratch("live.jsonl").to_string_lossy().into_owned();
    assert_eq!(bin().args(args).args(["--out", &file]).output().unwrap().status.code(), Some(0));
    let replayed = Server::start(&["--config", &cfg]);
    let o = run(&["sim", "--replay", &file, "--post", &replayed.base]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(stdout(&o), live_summary);
    assert_eq!(replayed.context(), live.context());
    assert_eq!(live.context()["zones"]["BIG_MALL"], false);
}

#[test]
fn serve_with_sim_mounts_bridge() {
    let server = Server::start(&["--sim", demo("env.json").to_str().unwrap(), "--seed", "7", "--interval", "200"]);
    assert!(server.banner.iter().any(|l| l.contains("/api/v1/sim/position")));
    let env: Value = reqwest::blocking::get(format!("{}/api/v1/sim/env", server.base)).unwrap().json().unwrap();
    assert_eq!(env["nodes"].as_array().unwrap().len(), 3);
    let deadline = Instant::now() + Duration::from_secs(10);
    while server.context()["seq"].as_u64().unwrap() == 0 {
        assert!(Instant::now() < deadline, "simulator never published");
        std::thread::sleep(Duration::from_millis(100));
    }
    let nets: Value = reqwest::blocking::get(format!("{}/api/v1/networks", server.base)).unwrap().json().unwrap();
    assert!(!nets.as_array().unwrap().is_empty());
}
