#![allow(dead_code)]

use std::io::{Read, Write};
use std::net::{SocketAddr, TcpStream};
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use slicecast::config::RunConfig;
use slicecast_core::numerics::XorShift64;
use slicecast_core::preprocess::{daily_max, SeriesFrame};

pub fn repo_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

pub fn sample_dir() -> PathBuf {
    repo_root().join("data/sample")
}

pub fn abilene_dir() -> PathBuf {
    repo_root().join("data/abilene")
}

/// Sample config with every path absolute and output under `out`.
pub fn sample_config(out: &Path) -> RunConfig {
    let mut cfg = RunConfig::load(&sample_dir().join("config.json")).unwrap();
    cfg.paths.output = out.to_path_buf();
    cfg
}

/// Writes the sample config with an absolute output dir; returns its path.
pub fn write_sample_config(dir: &Path, out: &Path) -> PathBuf {
    let path = dir.join("config.json");
    std::fs::write(&path, sample_config(out).to_json()).unwrap();
    path
}

pub fn slicecast(args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_slicecast"));
    cmd.args(args).env_remove("SLICECAST_OUTPUT_DIR");
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().unwrap()
}

pub struct HttpResponse {
    pub status: u16,
    pub headers: Vec<(String, String)>,
    pub body: String,
}

impl HttpResponse {
    pub fn header(&self, name: &str) -> Option<&str> {
        self.headers
            .iter()
            .find(|(k, _)| k.eq_ignore_ascii_case(name))
            .map(|(_, v)| v.as_str())
    }
}

/// Minimal blocking HTTP/1.1 GET with `Connection: close`.
pub fn http_get(addr: SocketAddr, path: &str) -> HttpResponse {
    let mut s = TcpStream::connect(addr).unwrap();
    write!(
        s,
        "GET {path} HTTP/1.1\r\nHost: {addr}\r\nConnection: close\r\n\r\n"
    )
    .unwrap();
    let mut raw = Vec::new();
    s.read_to_end(&mut raw).unwrap();
    let text = String::from_utf8(raw).unwrap();
    let (head, body) = text.split_once("\r\n\r\n").unwrap();
    let mut lines = head.split("\r\n");
    let status = lines
        .next()
        .unwrap()
        .split(' ')
        .nth(1)
        .unwrap()
        .parse()
        .unwrap();
    let headers: Vec<(String, String)> = lines
        .filter_map(|l| l.split_once(':'))
        .map(|(k, v)| (k.trim().to_ascii_lowercase(), v.trim().to_string()))
        .collect();
    let chunked = headers
        .iter()
        .any(|(k, v)| k == "transfer-encoding" && v.contains("chunked"));
    let body = if chunked {
        dechunk(body)
    } else {
        body.to_string()
    };
    HttpResponse {
        status,
        headers,
        body,
    }
}

fn dechunk(mut rest: &str) -> String {
    let mut out = String::new();
    loop {
        let (size, tail) = rest.split_once("\r\n").unwrap();
        let n = usize::from_str_radix(size.trim(), 16).unwrap();
        if n == 0 {
            return out;
        }
        out.push_str(&tail[..n]);
        rest = &tail[n + 2..];
    }
}

/// Hourly traffic whose daily maxima repeat with period 7: a steady daily
/// cycle, one sharp spike day per week, a smaller mid-week bump and
/// additive noise. Returns the daily-max frame.
pub fn peaky_daily_frame(days: usize, series: usize, seed: u64) -> SeriesFrame {
    let mut rng = XorShift64::new(seed);
    let start = 1_577_836_800; // 2020-01-01T00:00:00Z
    let rows = days * 24;
    let mut values = Vec::with_capacity(rows * series);
    for r in 0..rows {
        let (day, hour) = (r / 24, (r % 24) as f64);
        let shape = 0.6 + 0.4 * (std::f64::consts::TAU * (hour - 9.0) / 24.0).sin().max(0.0);
        for s in 0..series {
            let weekday = (day + 2 * s) % 7;
            let level = 100.0
                + 10.0 * s as f64
                + if weekday == 3 { 80.0 } else { 0.0 }
                + if weekday == 5 { 25.0 } else { 0.0 };
            values.push(level * shape + 4.0 * rng.normal());
        }
    }
    let columns = (0..series).map(|s| format!("s{s}")).collect();
    let timestamps = (0..rows as i64).map(|r| start + 3_600 * r).collect();
    let hourly = SeriesFrame::dense(columns, timestamps, values).unwrap();
    daily_max(&hourly).unwrap().frame
}
