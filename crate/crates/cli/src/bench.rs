//! Benchmark harness: phase timings, message sizes and the compressed-set
//! size table.

use std::fmt::Write as _;
use std::time::{Duration, Instant};

use psi_core::bloom::optimal_parameters;
use psi_core::gcs::rice_parameter;
use psi_core::message::FRAME_PREFIX_LEN;
use psi_core::{
    BloomFilter, ClientState, DsType, GolombCompressedSet, GroupElement, IntersectionResult,
    RequestMessage, ResponseMessage, Scalar, ServerState, SetupMessage, SetupParams,
};

use crate::error::{CliError, Result};

pub const DEFAULT_MEMORY_BUDGET: u64 = 2 << 30;

/// Rough peak bytes per server element during setup: the element string,
/// its 33-byte encoding and allocator slack.
const BYTES_PER_SERVER_ELEMENT: u64 = 33 + 64;
const BYTES_PER_CLIENT_ELEMENT: u64 = 4 * 33 + 64;

pub const TABLE_FPRS: [f64; 7] = [1e-6, 1e-7, 1e-8, 1e-9, 1e-10, 1e-11, 1e-12];

#[derive(Clone, Debug)]
pub struct BenchConfig {
    pub server_size: usize,
    pub client_size: usize,
    pub fpr: f64,
    pub ds: DsType,
    pub reveal: bool,
    pub runs: usize,
    pub memory_budget: u64,
    /// Report setup figures scaled to this server size, marked with `*`.
    pub extrapolate_to: Option<usize>,
}

impl BenchConfig {
    pub fn new(server_size: usize, client_size: usize, fpr: f64, ds: DsType, reveal: bool) -> Self {
        BenchConfig {
            server_size,
            client_size,
            fpr,
            ds,
            reveal,
            runs: 3,
            memory_budget: DEFAULT_MEMORY_BUDGET,
            extrapolate_to: None,
        }
    }

    pub fn working_set_estimate(&self) -> u64 {
        self.server_size as u64 * BYTES_PER_SERVER_ELEMENT
            + self.client_size as u64 * BYTES_PER_CLIENT_ELEMENT
    }

    fn check(&self) -> Result<()> {
        SetupParams::new(self.client_size.max(1), self.fpr, self.ds).validate()?;
        if self.runs == 0 {
            return Err(CliError::Usage("runs must be at least 1".into()));
        }
        let need = self.working_set_estimate();
        if need > self.memory_budget {
            return Err(CliError::Usage(format!(
                "estimated working set {} MiB exceeds budget {} MiB; run a smaller N and extrapolate",
                need >> 20,
                self.memory_budget >> 20
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct PhaseTimes {
    pub setup: Duration,
    pub request: Duration,
    pub response: Duration,
    pub intersection: Duration,
}

#[derive(Clone, Debug)]
pub struct BenchReport {
    pub config: BenchConfig,
    pub runs: Vec<PhaseTimes>,
    pub median: PhaseTimes,
    pub setup_bytes: usize,
    pub request_bytes: usize,
    pub response_bytes: usize,
    pub result_size: usize,
}

pub fn server_elements(n: usize) -> Vec<Vec<u8>> {
    (0..n).map(|i| format!("server-{i}").into_bytes()).collect()
}

/// Half of the client set (capped at `N`) overlaps the server set.
pub fn client_elements(n: usize, server_size: usize) -> Vec<Vec<u8>> {
    let overlap = (n / 2).min(server_size);
    (0..n)
        .map(|i| {
            if i < overlap {
                format!("server-{i}").into_bytes()
            } else {
                format!("client-{i}").into_bytes()
            }
        })
        .collect()
}

fn time<T>(f: impl FnOnce() -> Result<T>) -> Result<(T, Duration)> {
    let start = Instant::now();
    let out = f()?;
    Ok((out, start.elapsed()))
}

struct RunOutput {
    times: PhaseTimes,
    setup_bytes: usize,
    request_bytes: usize,
    response_bytes: usize,
    result_size: usize,
}

fn run_once(cfg: &BenchConfig, server: &[Vec<u8>], client: &[Vec<u8>]) -> Result<RunOutput> {
    let params = SetupParams::new(cfg.client_size.max(1), cfg.fpr, cfg.ds);

    let ((state, setup_wire, setup), t_setup) = time(|| {
        let (state, msg) = ServerState::setup(server, params)?;
        let wire = msg.encode();
        assert_eq!(wire.len(), msg.encoded_len());
        let setup = SetupMessage::decode(&wire)?;
        Ok((state, wire, setup))
    })?;

    let ((mut client_state, request_wire), t_request) = time(|| {
        let (cs, req) = ClientState::create_request(client, cfg.reveal);
        let wire = req.encode();
        assert_eq!(wire.len(), req.encoded_len());
        Ok((cs, wire))
    })?;

    let (response_wire, t_response) = time(|| {
        let req = RequestMessage::decode(&request_wire)?;
        let resp = state.process_request(&req)?;
        let wire = resp.encode();
        assert_eq!(wire.len(), resp.encoded_len());
        Ok(wire)
    })?;

    let (result, t_intersection) = time(|| {
        let resp = ResponseMessage::decode(&response_wire)?;
        Ok(client_state.process_response(&setup, &resp)?)
    })?;

    Ok(RunOutput {
        times: PhaseTimes {
            setup: t_setup,
            request: t_request,
            response: t_response,
            intersection: t_intersection,
        },
        setup_bytes: setup_wire.len(),
        request_bytes: request_wire.len(),
        response_bytes: response_wire.len(),
        result_size: result.len(),
    })
}

fn median(mut xs: Vec<Duration>) -> Duration {
    xs.sort();
    xs[xs.len() / 2]
}

pub fn run(cfg: &BenchConfig) -> Result<BenchReport> {
    cfg.check()?;
    let server = server_elements(cfg.server_size);
    let client = client_elements(cfg.client_size, cfg.server_size);
    let mut outputs = Vec::with_capacity(cfg.runs);
    for _ in 0..cfg.runs {
        outputs.push(run_once(cfg, &server, &client)?);
    }
    let runs: Vec<PhaseTimes> = outputs.iter().map(|o| o.times).collect();
    let pick = |f: fn(&PhaseTimes) -> Duration| median(runs.iter().map(f).collect());
    let median = PhaseTimes {
        setup: pick(|t| t.setup),
        request: pick(|t| t.request),
        response: pick(|t| t.response),
        intersection: pick(|t| t.intersection),
    };
    let last = outputs.last().expect("at least one run");
    Ok(BenchReport {
        config: cfg.clone(),
        median,
        setup_bytes: last.setup_bytes,
        request_bytes: last.request_bytes,
        response_bytes: last.response_bytes,
        result_size: last.result_size,
        runs,
    })
}

/// Exact setup message length for a Bloom filter over `n` elements.
pub fn bloom_setup_len(server_size: usize, max_queries: usize, fpr: f64) -> Result<usize> {
    let (m, _) = optimal_parameters(server_size.max(1), max_queries, fpr)?;
    Ok(FRAME_PREFIX_LEN + psi_core::bloom::HEADER_LEN + m.div_ceil(8) as usize)
}

fn secs(d: Duration) -> f64 {
    d.as_secs_f64()
}

impl BenchReport {
    pub fn render_table(&self) -> String {
        let c = &self.config;
        let mut s = String::new();
        let _ = writeln!(
            s,
            "N={} n={} p={:e} ds={} reveal={} runs={}",
            c.server_size,
            c.client_size,
            c.fpr,
            ds_name(c.ds),
            c.reveal,
            c.runs
        );
        let _ = writeln!(s, "{:<14}{:>14}{:>14}", "phase", "median (s)", "bytes");
        let rows = [
            ("setup", self.median.setup, Some(self.setup_bytes)),
            ("request", self.median.request, Some(self.request_bytes)),
            ("response", self.median.response, Some(self.response_bytes)),
            ("intersection", self.median.intersection, None),
        ];
        for (name, t, bytes) in rows {
            let b = bytes.map_or(String::from("-"), |b| b.to_string());
            let _ = writeln!(s, "{:<14}{:>14.6}{:>14}", name, secs(t), b);
        }
        if let Some(target) = c.extrapolate_to {
            let scale = target as f64 / c.server_size.max(1) as f64;
            let bytes = match c.ds {
                DsType::Bloom => bloom_setup_len(target, c.client_size.max(1), c.fpr)
                    .map(|b| b.to_string())
                    .unwrap_or_else(|_| "-".into()),
                DsType::Gcs => format!("{:.0}", self.setup_bytes as f64 * scale),
            };
            let _ = writeln!(
                s,
                "{:<14}{:>14.6}{:>14}",
                format!("setup N={target}*"),
                secs(self.median.setup) * scale,
                bytes
            );
            let _ = writeln!(
                s,
                "* extrapolated linearly from N={}, not measured",
                c.server_size
            );
        }
        s
    }

    /// `key=value` lines, one run per `run.` line.
    pub fn render_machine(&self) -> String {
        let c = &self.config;
        let mut s = String::new();
        let _ = writeln!(
            s,
            "params N={} n={} p={:e} ds={} reveal={}",
            c.server_size,
            c.client_size,
            c.fpr,
            ds_name(c.ds),
            c.reveal
        );
        for (i, t) in self.runs.iter().enumerate() {
            let _ = writeln!(
                s,
                "run index={i} setup_s={:.6} request_s={:.6} response_s={:.6} intersection_s={:.6}",
                secs(t.setup),
                secs(t.request),
                secs(t.response),
                secs(t.intersection)
            );
        }
        let m = &self.median;
        let _ = writeln!(
            s,
            "median setup_s={:.6} request_s={:.6} response_s={:.6} intersection_s={:.6}",
            secs(m.setup),
            secs(m.request),
            secs(m.response),
            secs(m.intersection)
        );
        let _ = writeln!(
            s,
            "bytes setup={} request={} response={}",
            self.setup_bytes, self.request_bytes, self.response_bytes
        );
        let _ = writeln!(s, "result size={}", self.result_size);
        s
    }
}

pub fn ds_name(ds: DsType) -> &'static str {
    match ds {
        DsType::Bloom => "bloom",
        DsType::Gcs => "gcs",
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SizeRow {
    pub fpr: f64,
    /// `N` elements as 8-byte integers.
    pub naive_bytes: usize,
    pub bloom_bytes: usize,
    pub gcs_bytes: usize,
}

/// Serialized structure sizes for `n` encrypted points at each FPR.
pub fn size_table(n: usize, fprs: &[f64], memory_budget: u64) -> Result<Vec<SizeRow>> {
    if n == 0 {
        return Err(CliError::Usage("size table needs N >= 1".into()));
    }
    if n as u64 * BYTES_PER_SERVER_ELEMENT > memory_budget {
        return Err(CliError::Usage(format!(
            "N={n} exceeds the memory budget of {} MiB",
            memory_budget >> 20
        )));
    }
    let key = Scalar::random();
    let points: Vec<[u8; 33]> = (0..n)
        .map(|i| {
            GroupElement::hash_from_bytes(format!("server-{i}").as_bytes())
                .exp(&key)
                .encode()
        })
        .collect();
    fprs.iter()
        .map(|&fpr| {
            let mut bloom = BloomFilter::new(n, 1, fpr)?;
            for p in &points {
                bloom.insert(p);
            }
            let gcs = GolombCompressedSet::build(&points, 1, fpr)?;
            Ok(SizeRow {
                fpr,
                naive_bytes: 8 * n,
                bloom_bytes: bloom.serialized_len(),
                gcs_bytes: gcs.serialized_len(),
            })
        })
        .collect()
}

pub fn render_size_table(rows: &[SizeRow]) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:<8}{:>12}{:>12}{:>12}{:>6}",
        "fpr", "naive", "bloom", "gcs", "k"
    );
    for r in rows {
        let k = rice_parameter(1, r.fpr).map_or(0, u32::from);
        let _ = writeln!(
            s,
            "{:<8}{:>12}{:>12}{:>12}{:>6}",
            format!("{:e}", r.fpr),
            kb(r.naive_bytes),
            kb(r.bloom_bytes),
            kb(r.gcs_bytes),
            k
        );
    }
    for r in rows {
        let _ = writeln!(
            s,
            "size fpr={:e} naive_bytes={} bloom_bytes={} gcs_bytes={}",
            r.fpr, r.naive_bytes, r.bloom_bytes, r.gcs_bytes
        );
    }
    s
}

fn kb(bytes: usize) -> String {
    format!("{:.0} KB", bytes as f64 / 1000.0)
}

/// Least-squares line through `(x, y)`: returns `(slope, intercept, r^2)`.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    assert_eq!(xs.len(), ys.len());
    assert!(xs.len() >= 2);
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy == 0.0 {
        1.0
    } else {
        sxy * sxy / (sxx * syy)
    };
    (slope, intercept, r2)
}

/// Result of a plaintext intersection, for checking the protocol.
pub fn plaintext_result<E: AsRef<[u8]> + Eq + std::hash::Hash>(
    server: &[E],
    client: &[E],
    reveal: bool,
) -> IntersectionResult {
    let set: std::collections::HashSet<&[u8]> = server.iter().map(|e| e.as_ref()).collect();
    let idx: Vec<usize> = client
        .iter()
        .enumerate()
        .filter(|(_, e)| set.contains(e.as_ref()))
        .map(|(i, _)| i)
        .collect();
    if reveal {
        IntersectionResult::Indices(idx)
    } else {
        IntersectionResult::Cardinality(idx.len())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fit_of_exact_line() {
        let (a, b, r2) = linear_fit(&[1.0, 2.0, 4.0], &[3.0, 5.0, 9.0]);
        assert!((a - 2.0).abs() < 1e-12 && (b - 1.0).abs() < 1e-12);
        assert!((r2 - 1.0).abs() < 1e-12);
        let (_, _, r2) = linear_fit(&[1.0, 2.0, 3.0, 4.0], &[1.0, 3.0, 1.0, 3.0]);
        assert!(r2 < 0.5);
    }

    #[test]
    fn small_run_reports_exact_sizes() {
        let mut cfg = BenchConfig::new(50, 10, 1e-9, DsType::Bloom, true);
        cfg.runs = 3;
        let r = run(&cfg).unwrap();
        assert_eq!(r.runs.len(), 3);
        assert_eq!(r.setup_bytes, bloom_setup_len(50, 10, 1e-9).unwrap());
        assert_eq!(r.request_bytes, 11 + 33 * 10);
        assert_eq!(r.response_bytes, 10 + 33 * 10);
        assert_eq!(r.result_size, 5);
        let text = r.render_machine();
        assert_eq!(text.lines().filter(|l| l.starts_with("run ")).count(), 3);
    }

    #[test]
    fn memory_guard_refuses_large_runs() {
        let mut cfg = BenchConfig::new(1_000_000, 10, 1e-9, DsType::Gcs, false);
        cfg.memory_budget = 1 << 20;
        assert!(matches!(run(&cfg), Err(CliError::Usage(_))));
    }

    #[test]
    fn extrapolated_rows_are_marked() {
        let mut cfg = BenchConfig::new(20, 4, 1e-6, DsType::Bloom, false);
        cfg.runs = 1;
        cfg.extrapolate_to = Some(1_000_000);
        let table = run(&cfg).unwrap().render_table();
        assert!(table.contains("setup N=1000000*"));
        assert!(table.contains("extrapolated"));
    }

    #[test]
    fn size_table_naive_column() {
        let rows = size_table(100, &[1e-6, 1e-12], DEFAULT_MEMORY_BUDGET).unwrap();
        assert!(rows.iter().all(|r| r.naive_bytes == 800));
        assert!(rows[1].bloom_bytes > rows[0].bloom_bytes);
        assert!(rows[1].gcs_bytes > rows[0].gcs_bytes);
    }

    #[test]
    fn plaintext_oracle() {
        let s = ["a", "b", "c"];
        let c = ["b", "x", "a", "b"];
        assert_eq!(
            plaintext_result(&s, &c, true),
            IntersectionResult::Indices(vec![0, 2, 3])
        );
        assert_eq!(
            plaintext_result(&s, &c, false),
            IntersectionResult::Cardinality(3)
        );
    }
}
