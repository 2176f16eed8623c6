//! Deterministic miniature dataset: five nodes, seven links, four demands,
//! sixty days of hourly snapshots.
//!
//! The traffic has a mid-afternoon daily peak, quieter weekends, a Wednesday
//! evening surge and multiplicative noise. About one entry in a hundred is
//! dropped from its snapshot so that gap filling is exercised.

use std::f64::consts::TAU;
use std::fmt::Write;
use std::path::Path;

use slicecast_core::numerics::XorShift64;
use slicecast_core::Instant;

use crate::archive::snapshot_file_name;
use crate::config::{ModelSettings, Paths, RunConfig, TrainSettings};
use crate::error::Result;
use crate::formats::write_text;

pub const SAMPLE_START: Instant = 1_704_067_200; // 2024-01-01T00:00:00Z, a Monday
pub const SAMPLE_DAYS: i64 = 60;
pub const SAMPLE_CADENCE: i64 = 3_600;
pub const SAMPLE_SEED: u64 = 2024;
pub const SNAPSHOT_PREFIX: &str = "demandMatrix-sample5-1h";
const DROP_PROBABILITY: f64 = 0.01;

const NODES: [(&str, f64, f64); 5] = [
    ("AMS", 4.90, 52.37),
    ("BER", 13.40, 52.52),
    ("CPH", 12.57, 55.68),
    ("DUB", -6.26, 53.35),
    ("EDI", -3.19, 55.95),
];

// id, a, b, capacity, routing cost
const LINKS: [(&str, &str, &str, f64, f64); 7] = [
    ("L1", "AMS", "BER", 2500.0, 1.0),
    ("L2", "AMS", "CPH", 2000.0, 1.0),
    ("L3", "AMS", "DUB", 1500.0, 1.0),
    ("L4", "BER", "CPH", 2500.0, 1.0),
    ("L5", "BER", "EDI", 1200.0, 3.0),
    ("L6", "CPH", "EDI", 1000.0, 1.0),
    ("L7", "DUB", "EDI", 1000.0, 1.0),
];

// id, source, target, base rate
const DEMANDS: [(&str, &str, &str, f64); 4] = [
    ("D1", "AMS", "CPH", 700.0),
    ("D2", "CPH", "AMS", 550.0),
    ("D3", "BER", "DUB", 250.0),
    ("D4", "DUB", "EDI", 400.0),
];

pub fn network_text() -> String {
    let mut s = String::new();
    s.push_str("?SNDlib native format; type: network; version: 1.0\n");
    s.push_str("# network sample5\n");
    s.push_str("# Synthetic five-node network bundled with slicecast. Capacities in Mbit/s.\n\n");
    s.push_str("# NODE_ID ( LONGITUDE LATITUDE )\nNODES (\n");
    for (id, lon, lat) in NODES {
        let _ = writeln!(s, "  {id} ( {lon:.2} {lat:.2} )");
    }
    s.push_str(")\n\n");
    s.push_str(
        "# LINK_ID ( SOURCE TARGET ) PRE_INSTALLED_CAPACITY PRE_INSTALLED_CAPACITY_COST \
         ROUTING_COST SETUP_COST ( {MODULE_CAPACITY MODULE_COST}* )\nLINKS (\n",
    );
    for (id, a, b, cap, cost) in LINKS {
        let _ = writeln!(s, "  {id} ( {a} {b} ) {cap:.2} 0.00 {cost:.2} 0.00 ( )");
    }
    s.push_str(")\n");
    s
}

/// Mean demand rate at `t` before noise.
fn profile(base: f64, t: Instant) -> f64 {
    let secs = t - SAMPLE_START;
    let hour = (secs % 86_400) as f64 / 3_600.0;
    let weekday = (secs / 86_400) % 7; // 0 = Monday
    let daily = 1.0 + 0.35 * (TAU * (hour - 8.0) / 24.0).sin();
    let weekly = if weekday >= 5 { 0.75 } else { 1.0 };
    let surge = if weekday == 2 && (18.0..21.0).contains(&hour) {
        1.3
    } else {
        1.0
    };
    base * daily * weekly * surge
}

/// Snapshot instants and their file contents, in time order.
pub fn snapshots() -> Vec<(Instant, String)> {
    let mut rng = XorShift64::new(SAMPLE_SEED);
    let steps = SAMPLE_DAYS * 86_400 / SAMPLE_CADENCE;
    (0..steps)
        .map(|i| {
            let t = SAMPLE_START + i * SAMPLE_CADENCE;
            let mut s = String::new();
            s.push_str("?SNDlib native format; type: demands; version: 1.0\n");
            s.push_str("# DEMAND_ID ( SOURCE TARGET ) ROUTING_UNIT DEMAND_VALUE MAX_PATH_LENGTH\n");
            s.push_str("DEMANDS (\n");
            for (id, src, dst, base) in DEMANDS {
                let noise = 1.0 + 0.05 * rng.normal();
                let value = (profile(base, t) * noise).max(0.0);
                if rng.next_f64() < DROP_PROBABILITY {
                    continue;
                }
                let _ = writeln!(s, "  {id} ( {src} {dst} ) 1 {value:.3} UNLIMITED");
            }
            s.push_str(")\n");
            (t, s)
        })
        .collect()
}

/// Run configuration sized for sixty daily rows.
pub fn sample_config() -> RunConfig {
    let mut cfg = RunConfig::new(
        Paths {
            topology: "network.txt".into(),
            demands: "demands".into(),
            output: "out".into(),
        },
        SAMPLE_SEED,
    );
    cfg.model = ModelSettings {
        input_len: 7,
        label_len: 4,
        horizon: 3,
        d_model: 16,
        n_heads: 2,
        d_ff: 32,
        encoder_layers: 2,
        decoder_layers: 1,
        moving_avg_kernel: 3,
        autocorr_factor: 1.0,
        dropout: 0.0,
    };
    cfg.train = TrainSettings {
        epochs: 60,
        batch_size: 8,
        learning_rate: 3e-3,
        patience: 15,
    };
    cfg
}

/// Writes `network.txt`, `config.json` and `demands/` under `dir`.
pub fn write_sample(dir: &Path) -> Result<usize> {
    write_text(&dir.join("network.txt"), &network_text())?;
    write_text(&dir.join("config.json"), &sample_config().to_json())?;
    let demands = dir.join("demands");
    let snaps = snapshots();
    for (t, text) in &snaps {
        write_text(&demands.join(snapshot_file_name(SNAPSHOT_PREFIX, *t)), text)?;
    }
    Ok(snaps.len())
}

#[cfg(test)]
mod tests {
    use super::*;
    use slicecast_core::ingest::{parse_demand_matrix, parse_topology};

    #[test]
    fn network_parses_cleanly() {
        let p = parse_topology(&network_text()).unwrap();
        assert!(p.warnings.is_empty(), "{:?}", p.warnings);
        assert_eq!(p.topology.nodes.len(), 5);
        assert_eq!(p.topology.links.len(), 7);
        assert!(p.topology.connected);
    }

    #[test]
    fn snapshots_are_deterministic_and_parse() {
        let a = snapshots();
        assert_eq!(a.len(), 1440);
        assert_eq!(a, snapshots());
        let entries = parse_demand_matrix(&a[0].1).unwrap();
        assert!(entries.len() <= 4 && !entries.is_empty());
    }

    #[test]
    fn weekday_surge_raises_profile() {
        let wed_19h = SAMPLE_START + 2 * 86_400 + 19 * 3_600;
        let tue_19h = wed_19h - 86_400;
        assert!(profile(100.0, wed_19h) > 1.25 * profile(100.0, tue_19h));
    }
}
