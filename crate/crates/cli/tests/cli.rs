use std::collections::HashSet;
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Output, Stdio};

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

const PSI: &str = env!("CARGO_BIN_EXE_psi");

fn psi(args: &[&str]) -> Output {
    Command::new(PSI).args(args).output().expect("spawn psi")
}

fn write_lines(path: &Path, lines: &[String]) {
    let mut text = lines.join("\n");
    text.push('\n');
    fs::write(path, text).unwrap();
}

struct Server {
    child: Child,
    addr: String,
}

impl Server {
    fn start(key: &Path, extra: &[&str]) -> Server {
        let mut child = Command::new(PSI)
            .args([
                "serve",
                "--key",
                key.to_str().unwrap(),
                "--listen",
                "127.0.0.1:0",
            ])
            .args(extra)
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()
            .unwrap();
        let mut line = String::new();
        BufReader::new(child.stdout.take().unwrap())
            .read_line(&mut line)
            .unwrap();
        let addr = line
            .trim()
            .strip_prefix("listening on ")
            .expect("banner")
            .to_string();
        Server { child, addr }
    }
}

impl Drop for Server {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

struct Fixture {
    dir: tempfile::TempDir,
}

impl Fixture {
    fn new() -> Self {
        Fixture {
            dir: tempfile::tempdir().unwrap(),
        }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn s(&self, name: &str) -> String {
        self.path(name).to_str().unwrap().to_string()
    }

    fn setup(&self, server: &[String], max_queries: usize, ds: &str, extra: &[&str]) -> Output {
        write_lines(&self.path("server.txt"), server);
        let mq = max_queries.to_string();
        let mut args = vec![
            "setup",
            "--server-set",
            &self.s("server.txt"),
            "--max-queries",
            &mq,
            "--fpr",
            "1e-9",
            "--ds",
            ds,
            "--out",
            &self.s("setup.bin"),
            "--key-out",
            &self.s("key.json"),
        ]
        .into_iter()
        .map(String::from)
        .collect::<Vec<_>>();
        args.extend(extra.iter().map(|s| s.to_string()));
        let refs: Vec<&str> = args.iter().map(String::as_str).collect();
        psi(&refs)
    }

    fn query(&self, server: &Server, client: &[String], reveal: bool) -> Output {
        write_lines(&self.path("client.txt"), client);
        let client_set = self.s("client.txt");
        let setup = self.s("setup.bin");
        let mut args = vec![
            "query",
            "--client-set",
            &client_set,
            "--setup",
            &setup,
            "--connect",
            &server.addr,
        ];
        if reveal {
            args.push("--reveal");
        }
        psi(&args)
    }
}

fn strings(xs: &[&str]) -> Vec<String> {
    xs.iter().map(|s| s.to_string()).collect()
}

fn stdout(o: &Output) -> String {
    assert!(
        o.status.success(),
        "exit {:?}: {}",
        o.status.code(),
        String::from_utf8_lossy(&o.stderr)
    );
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn three_line_file_end_to_end() {
    for ds in ["bloom", "gcs"] {
        let fx = Fixture::new();
        stdout(&fx.setup(&strings(&["a", "b", "c"]), 2, ds, &[]));
        let server = Server::start(&fx.path("key.json"), &[]);
        let client = strings(&["b", "x"]);
        assert_eq!(stdout(&fx.query(&server, &client, true)), "0\n");
        assert_eq!(stdout(&fx.query(&server, &client, false)), "1\n");
    }
}

#[test]
fn setup_is_deterministic_given_key() {
    let fx = Fixture::new();
    let set = strings(&["alpha", "beta", "gamma", "delta"]);
    stdout(&fx.setup(&set, 5, "gcs", &[]));
    let first = fs::read(fx.path("setup.bin")).unwrap();
    fs::copy(fx.path("key.json"), fx.path("reuse.json")).unwrap();
    stdout(&fx.setup(&set, 5, "gcs", &["--key", &fx.s("reuse.json")]));
    assert_eq!(fs::read(fx.path("setup.bin")).unwrap(), first);
    stdout(&fx.setup(&set, 5, "gcs", &[]));
    assert_ne!(fs::read(fx.path("setup.bin")).unwrap(), first);
}

#[test]
fn usage_errors_exit_one() {
    let fx = Fixture::new();
    write_lines(&fx.path("s.txt"), &strings(&["a"]));
    let bad_fpr = psi(&[
        "setup",
        "--server-set",
        &fx.s("s.txt"),
        "--max-queries",
        "1",
        "--fpr",
        "1.5",
        "--out",
        &fx.s("o"),
        "--key-out",
        &fx.s("k"),
    ]);
    assert_eq!(bad_fpr.status.code(), Some(1));
    assert!(!fx.path("o").exists() && !fx.path("k").exists());
    assert_eq!(psi(&["setup"]).status.code(), Some(1));
    assert_eq!(psi(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(psi(&["--help"]).status.code(), Some(0));
}

#[test]
fn io_and_protocol_errors() {
    let fx = Fixture::new();
    let missing = psi(&[
        "setup",
        "--server-set",
        &fx.s("nope.txt"),
        "--max-queries",
        "1",
        "--fpr",
        "0.1",
        "--out",
        &fx.s("o"),
        "--key-out",
        &fx.s("k"),
    ]);
    assert_eq!(missing.status.code(), Some(3));

    stdout(&fx.setup(&strings(&["a"]), 1, "bloom", &[]));
    fs::write(fx.path("setup.bin"), b"PSI1\x01\x01garbage").unwrap();
    write_lines(&fx.path("client.txt"), &strings(&["a"]));
    let bad_setup = psi(&[
        "query",
        "--client-set",
        &fx.s("client.txt"),
        "--setup",
        &fx.s("setup.bin"),
        "--connect",
        "127.0.0.1:1",
    ]);
    assert_eq!(bad_setup.status.code(), Some(2));
}

#[test]
fn server_refuses_after_max_requests_and_pinned_mode() {
    let fx = Fixture::new();
    stdout(&fx.setup(
        &strings(&["a", "b"]),
        4,
        "gcs",
        &["--pin-reveal", "cardinality"],
    ));
    let server = Server::start(&fx.path("key.json"), &["--max-requests", "2"]);
    let client = strings(&["a", "z"]);
    let pinned = fx.query(&server, &client, true);
    assert_eq!(pinned.status.code(), Some(2));
    assert_eq!(stdout(&fx.query(&server, &client, false)), "1\n");
    let third = fx.query(&server, &client, false);
    assert_eq!(third.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&third.stderr).contains("rotate"));
}

#[test]
fn connection_refused_is_io_error() {
    let fx = Fixture::new();
    stdout(&fx.setup(&strings(&["a"]), 1, "bloom", &[]));
    let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap().to_string();
    drop(listener);
    let server = Server {
        child: Command::new("true").spawn().unwrap(),
        addr,
    };
    assert_eq!(
        fx.query(&server, &strings(&["a"]), true).status.code(),
        Some(3)
    );
}

#[test]
fn randomized_runs_match_plaintext_oracle() {
    let mut rng = StdRng::seed_from_u64(0x5eed);
    for run in 0..200 {
        let fx = Fixture::new();
        let universe = rng.gen_range(4..80);
        let n_server = rng.gen_range(0..40);
        let n_client = rng.gen_range(1..20);
        let pick = |rng: &mut StdRng| format!("item-{}", rng.gen_range(0..universe));
        let server: Vec<String> = (0..n_server).map(|_| pick(&mut rng)).collect();
        let client: Vec<String> = (0..n_client).map(|_| pick(&mut rng)).collect();
        let ds = if run % 2 == 0 { "bloom" } else { "gcs" };
        let reveal = run % 4 < 2;

        stdout(&fx.setup(&server, n_client, ds, &[]));
        let srv = Server::start(&fx.path("key.json"), &[]);
        let got = stdout(&fx.query(&srv, &client, reveal));

        let set: HashSet<&String> = server.iter().collect();
        let idx: Vec<usize> = (0..n_client)
            .filter(|&i| set.contains(&client[i]))
            .collect();
        let want = if reveal {
            idx.iter().map(|i| format!("{i}\n")).collect::<String>()
        } else {
            format!("{}\n", idx.len())
        };
        assert_eq!(got, want, "run {run}: ds={ds} reveal={reveal}");
    }
}

#[test]
fn bench_sizes_prints_naive_column() {
    let out = stdout(&psi(&["bench", "--sizes", "-N", "200"]));
    let sizes: Vec<&str> = out.lines().filter(|l| l.starts_with("size ")).collect();
    assert_eq!(sizes.len(), 7);
    assert!(sizes.iter().all(|l| l.contains("naive_bytes=1600")));
}

#[test]
fn bench_reports_phases() {
    let out = stdout(&psi(&[
        "bench", "-N", "30", "-n", "6", "--ds", "bloom", "--runs", "3", "--reveal",
    ]));
    assert_eq!(out.lines().filter(|l| l.starts_with("run ")).count(), 3);
    assert!(out.contains("bytes setup="));
    assert!(out.contains(&format!("request={}", 11 + 33 * 6)));
    assert!(out.contains("result size=3"));
}
