//! Bundled data: the Abilene-style fixture and the generated sample.

mod common;

use std::fs;

use slicecast::archive::{read_archive, read_topology, snapshot_files};
use slicecast::formats::{frame_from_csv, to_json};
use slicecast::sample;
use slicecast::stages::Run;
use slicecast_core::ingest::Topology;

use common::*;

/// Entry lines inside `SECTION ( … )`, counted by plain text scanning.
fn section_lines(text: &str, section: &str) -> usize {
    let mut inside = false;
    let mut n = 0;
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with('?') {
            continue;
        }
        if !inside {
            inside = line == format!("{section} (");
        } else if line == ")" {
            return n;
        } else {
            n += 1;
        }
    }
    n
}

#[test]
fn abilene_counts_match_line_scan() {
    let path = abilene_dir().join("network.txt");
    let text = fs::read_to_string(&path).unwrap();
    let parsed = read_topology(&path).unwrap();
    assert_eq!(parsed.topology.nodes.len(), section_lines(&text, "NODES"));
    assert_eq!(parsed.topology.links.len(), section_lines(&text, "LINKS"));
    assert_eq!(
        (parsed.topology.nodes.len(), parsed.topology.links.len()),
        (12, 15)
    );
    assert!(parsed.topology.connected);
    assert_eq!(parsed.topology.name, "abilene");
}

#[test]
fn abilene_capacity_falls_back_to_modules() {
    let parsed = read_topology(&abilene_dir().join("network.txt")).unwrap();
    let t = &parsed.topology;
    let atl = t.links.iter().find(|l| l.id == "ATLAM5_ATLAng").unwrap();
    assert_eq!(atl.capacity, 2480.0);
    assert!(t
        .links
        .iter()
        .filter(|l| l.id != "ATLAM5_ATLAng")
        .all(|l| l.capacity == 9920.0));
    assert_eq!(parsed.warnings.len(), 15);
    assert!(parsed
        .warnings
        .iter()
        .all(|w| w.contains("module capacity")));
}

#[test]
fn abilene_snapshots_become_series_with_gaps() {
    let dir = abilene_dir();
    let topo = read_topology(&dir.join("network.txt")).unwrap().topology;
    let series = read_archive(&dir.join("demands"), Some(&topo)).unwrap();
    assert_eq!(series.len(), 7);
    for s in &series {
        assert_eq!(
            s.timestamps,
            vec![1_078_099_200, 1_078_099_500, 1_078_099_800]
        );
        assert_eq!(s.cadence, Some(300));
    }
    let gappy: Vec<_> = series.iter().filter(|s| s.gap_count() > 0).collect();
    assert_eq!(gappy.len(), 1);
    assert_eq!(gappy[0].id(), "CHINng->LOSAng");
    assert_eq!(gappy[0].gap_indices(), vec![1]);
    // value check against the raw text of the first snapshot
    let files = snapshot_files(&dir.join("demands")).unwrap();
    let first = fs::read_to_string(&files[0].0).unwrap();
    let line = first
        .lines()
        .find(|l| l.contains("( ATLAng NYCMng )"))
        .unwrap();
    let value: f64 = line.split_whitespace().nth(6).unwrap().parse().unwrap();
    let s = series.iter().find(|s| s.id() == "ATLAng->NYCMng").unwrap();
    assert_eq!(s.values[0], Some(value));
}

#[test]
fn topology_json_is_canonical() {
    let topo = read_topology(&abilene_dir().join("network.txt"))
        .unwrap()
        .topology;
    let a = to_json(&topo);
    assert_eq!(a, to_json(&topo));
    let back: Topology = serde_json::from_str(&a).unwrap();
    assert_eq!(back, topo);
    let keys = ["\"name\"", "\"nodes\"", "\"links\"", "\"connected\""];
    let pos: Vec<usize> = keys.iter().map(|k| a.find(k).unwrap()).collect();
    assert!(pos.windows(2).all(|w| w[0] < w[1]));
}

#[test]
fn unknown_demand_node_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(
        tmp.path().join("d-20040301-0000.txt"),
        "DEMANDS (\n  x ( ATLAng MARS ) 1 5.0 UNLIMITED\n)\n",
    )
    .unwrap();
    let topo = read_topology(&abilene_dir().join("network.txt"))
        .unwrap()
        .topology;
    let err = read_archive(tmp.path(), Some(&topo))
        .unwrap_err()
        .to_string();
    assert!(err.contains("MARS"), "{err}");
}

#[test]
fn malformed_snapshot_names_file_and_line() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(
        tmp.path().join("d-20040301-0000.txt"),
        "DEMANDS (\n  x ( A B ) 1 5.0 UNLIMITED\n)\n",
    )
    .unwrap();
    fs::write(
        tmp.path().join("d-20040301-0005.txt"),
        "DEMANDS (\n  x ( A B ) 1 five UNLIMITED\n)\n",
    )
    .unwrap();
    let err = read_archive(tmp.path(), None).unwrap_err().to_string();
    assert!(
        err.contains("d-20040301-0005.txt") && err.contains("line 2"),
        "{err}"
    );
}

#[test]
fn bundled_sample_matches_generator() {
    let dir = sample_dir();
    assert_eq!(
        fs::read_to_string(dir.join("network.txt")).unwrap(),
        sample::network_text()
    );
    assert_eq!(
        fs::read_to_string(dir.join("config.json")).unwrap(),
        sample::sample_config().to_json()
    );
    let files = snapshot_files(&dir.join("demands")).unwrap();
    let generated = sample::snapshots();
    assert_eq!(files.len(), generated.len());
    for ((path, t), (gt, text)) in files.iter().zip(&generated) {
        assert_eq!(t, gt);
        assert_eq!(
            &fs::read_to_string(path).unwrap(),
            text,
            "{}",
            path.display()
        );
    }
}

/// Parses a frame CSV by plain splitting: header and rows, skipping the
/// hash comment. Returns (columns, rows of cells).
fn scan_csv(text: &str) -> (Vec<String>, Vec<Vec<String>>) {
    let mut lines = text.lines().filter(|l| !l.starts_with('#'));
    let header: Vec<String> = lines
        .next()
        .unwrap()
        .split(',')
        .map(str::to_string)
        .collect();
    let rows = lines
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect();
    (header, rows)
}

#[test]
fn slice_totals_conserve_demand_totals() {
    let tmp = tempfile::tempdir().unwrap();
    let run = Run::new(sample_config(tmp.path()), false);
    run.ingest().unwrap();
    run.slices().unwrap();
    let demands = fs::read_to_string(run.layout.demand_frame()).unwrap();
    let slices = fs::read_to_string(run.layout.slice_frame()).unwrap();
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(run.layout.slices()).unwrap()).unwrap();
    let (dh, drows) = scan_csv(&demands);
    let (sh, srows) = scan_csv(&slices);
    assert_eq!(drows.len(), srows.len());
    let num = |s: &str| s.parse::<f64>().unwrap();
    for (dr, sr) in drows.iter().zip(&srows) {
        assert_eq!(dr[0], sr[0]);
        // each slice column equals the in-order sum of its members
        for slice in manifest["data"]["slices"].as_array().unwrap() {
            let id = slice["id"].as_str().unwrap();
            let col = sh.iter().position(|h| h == id).unwrap();
            let mut sum = 0.0;
            for m in slice["members"].as_array().unwrap() {
                let name = format!("{}->{}", m[0].as_str().unwrap(), m[1].as_str().unwrap());
                sum += num(&dr[dh.iter().position(|h| *h == name).unwrap()]);
            }
            assert_eq!(num(&sr[col]), sum);
        }
        let total_d: f64 = dr[1..].iter().map(|c| num(c)).sum();
        let total_s: f64 = sr[1..].iter().map(|c| num(c)).sum();
        assert!((total_d - total_s).abs() <= 1e-9 * total_d.abs());
    }
    // sixty daily rows, three slices on the sample network
    assert_eq!((srows.len(), sh.len() - 1), (60, 3));
    let parsed = frame_from_csv(&run.layout.slice_frame(), &slices).unwrap();
    assert_eq!(parsed.masked_count(), 0);
}
