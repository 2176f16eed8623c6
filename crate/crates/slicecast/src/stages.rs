//! Pipeline stages behind the CLI subcommands.
//!
//! Stages communicate only through files in the output directory. Each
//! stage checks that its inputs exist and names the subcommand that
//! produces any missing one.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use slicecast_core::ingest::{DemandSeries, Topology};
use slicecast_core::models::{ForecastResult, Model, ModelKind};
use slicecast_core::numerics::Tensor;
use slicecast_core::policy::{generate_policies, PolicyHistory};
use slicecast_core::preprocess::{
    align, clean, daily_max, fit_scaler, transform, ScalerParams, SeriesFrame,
};
use slicecast_core::slicing::{form_slices, route_all, slice_series};
use slicecast_core::train::{
    check_no_leakage, evaluate as evaluate_model, forecast_windows, make_windows, split,
    train as fit, EpochRecord, Metrics, Splits, WindowSample,
};
use slicecast_core::Instant;

use crate::archive::{read_archive, read_topology};
use crate::checkpoint;
use crate::config::{Aggregation, RunConfig};
use crate::error::{Error, Result};
use crate::formats::{
    format_instant, read_frame, read_json, write_frame, write_json, write_text, Artifact,
};
use crate::manifest::{topology_dot, SliceManifest};
use crate::policy_doc::{render_policy, PolicyFormat};

/// File names inside the output directory.
#[derive(Debug, Clone, PartialEq)]
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    fn file(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn topology(&self) -> PathBuf {
        self.file("topology.json")
    }
    pub fn demands(&self) -> PathBuf {
        self.file("demands.json")
    }
    pub fn demand_frame(&self) -> PathBuf {
        self.file("frame_demands.csv")
    }
    pub fn slices(&self) -> PathBuf {
        self.file("slices.json")
    }
    pub fn topology_dot(&self) -> PathBuf {
        self.file("topology.dot")
    }
    pub fn slice_frame(&self) -> PathBuf {
        self.file("frame_slices.csv")
    }
    pub fn checkpoints(&self) -> PathBuf {
        self.file("checkpoints")
    }
    pub fn checkpoint(&self, kind: ModelKind) -> PathBuf {
        self.checkpoints().join(format!("{}.json", kind.tag()))
    }
    pub fn scaler(&self) -> PathBuf {
        self.file("scaler.json")
    }
    pub fn training(&self) -> PathBuf {
        self.file("training.json")
    }
    pub fn forecasts(&self) -> PathBuf {
        self.file("forecasts.json")
    }
    pub fn predictions(&self) -> PathBuf {
        self.file("predictions.csv")
    }
    pub fn metrics(&self) -> PathBuf {
        self.file("metrics.json")
    }
    pub fn metrics_csv(&self) -> PathBuf {
        self.file("metrics.csv")
    }
    pub fn policy(&self) -> PathBuf {
        self.file("policy.json")
    }
    pub fn policy_history(&self) -> PathBuf {
        self.file("policy_history.json")
    }

    /// Every file a full pipeline run leaves behind for `models`.
    pub fn all_artifacts(&self, models: &[ModelKind]) -> Vec<PathBuf> {
        let mut v = vec![
            self.topology(),
            self.demands(),
            self.demand_frame(),
            self.slices(),
            self.topology_dot(),
            self.slice_frame(),
            self.scaler(),
            self.training(),
            self.forecasts(),
            self.predictions(),
            self.metrics(),
            self.metrics_csv(),
            self.policy(),
            self.policy_history(),
        ];
        for &k in models {
            v.push(self.checkpoint(k));
            v.push(self.checkpoints().join(format!("{}.bin", k.tag())));
        }
        v
    }
}

fn require(path: &Path, producer: &'static str) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(Error::MissingArtifact {
            path: path.to_path_buf(),
            producer,
        })
    }
}

/// Errors on a hash mismatch unless `force`, in which case it warns.
fn check_hash(path: &Path, found: Option<&str>, expected: &str, force: bool) -> Result<()> {
    let found = found.unwrap_or("<none>");
    if found == expected {
        return Ok(());
    }
    if force {
        log::warn!(
            "{} was produced by config {found}; continuing because of --force",
            path.display()
        );
        return Ok(());
    }
    Err(Error::HashMismatch {
        path: path.to_path_buf(),
        expected: expected.to_string(),
        found: found.to_string(),
    })
}

fn read_artifact<T: serde::de::DeserializeOwned>(
    path: &Path,
    producer: &'static str,
    hash: &str,
    force: bool,
) -> Result<T> {
    require(path, producer)?;
    let a: Artifact<T> = read_json(path)?;
    check_hash(path, Some(&a.config_hash), hash, force)?;
    Ok(a.data)
}

fn read_frame_artifact(
    path: &Path,
    producer: &'static str,
    hash: &str,
    force: bool,
) -> Result<SeriesFrame> {
    require(path, producer)?;
    let (frame, found) = read_frame(path)?;
    check_hash(path, found.as_deref(), hash, force)?;
    Ok(frame)
}

/// Upstream hashes only gate `evaluate`; other stages warn on a mismatch.
const WARN_ONLY: bool = true;

/// Execution context shared by all stages.
#[derive(Debug, Clone)]
pub struct Run {
    pub config: RunConfig,
    pub hash: String,
    pub layout: Layout,
    /// Accept artifacts produced under a different config hash.
    pub force: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopologyArtifact {
    pub topology: Topology,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalerArtifact {
    pub columns: Vec<String>,
    pub params: ScalerParams,
    /// Train, validation and test row ranges as `[start, end)`.
    pub split: [[usize; 2]; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingRecord {
    pub model: ModelKind,
    pub parameters: usize,
    pub best_epoch: Option<usize>,
    pub history: Vec<EpochRecord>,
}

struct Prepared {
    frame: SeriesFrame,
    splits: Splits,
    scaled: SeriesFrame,
    scaler: ScalerParams,
}

impl Run {
    pub fn new(config: RunConfig, force: bool) -> Self {
        let hash = config.hash();
        let layout = Layout::new(config.paths.output.clone());
        Self {
            config,
            hash,
            layout,
            force,
        }
    }

    pub fn ingest(&self) -> Result<String> {
        self.config.validate(true)?;
        let parsed = read_topology(&self.config.paths.topology)?;
        let series = read_archive(&self.config.paths.demands, Some(&parsed.topology))?;
        let raw = align(&series)?;
        let gaps = raw.masked_count();
        let cleaned = clean(&raw, self.config.preprocess.fill)?;
        let frame = match self.config.preprocess.aggregation {
            Aggregation::None => cleaned,
            Aggregation::DailyMax => {
                let agg = daily_max(&cleaned)?;
                if !agg.partial_days.is_empty() {
                    log::warn!("{} partial day(s) aggregated", agg.partial_days.len());
                }
                agg.frame
            }
        };
        let l = &self.layout;
        write_json(
            &l.topology(),
            &Artifact::new(
                "topology",
                &self.hash,
                TopologyArtifact {
                    topology: parsed.topology.clone(),
                    warnings: parsed.warnings.clone(),
                },
            ),
        )?;
        write_json(
            &l.demands(),
            &Artifact::new("demands", &self.hash, series.clone()),
        )?;
        write_frame(&l.demand_frame(), &frame, &self.hash)?;
        Ok(format!(
            "ingest: {} nodes, {} links, {} demands over {} snapshots, {gaps} gaps filled, {} rows",
            parsed.topology.nodes.len(),
            parsed.topology.links.len(),
            series.len(),
            raw.rows(),
            frame.rows()
        ))
    }

    pub fn slices(&self) -> Result<String> {
        let l = &self.layout;
        let t = WARN_ONLY;
        let topo: TopologyArtifact = read_artifact(&l.topology(), "ingest", &self.hash, t)?;
        let demands: Vec<DemandSeries> = read_artifact(&l.demands(), "ingest", &self.hash, t)?;
        let frame = read_frame_artifact(&l.demand_frame(), "ingest", &self.hash, t)?;
        let routing = route_all(&topo.topology, &demands);
        for (key, e) in &routing.residue {
            log::warn!("demand {}->{} not routed: {e}", key.0, key.1);
        }
        let slices = form_slices(&topo.topology, &routing.routes, self.config.slicing.theta)?;
        let series = slice_series(&slices, &frame)?;
        let manifest = SliceManifest::new(self.config.slicing.theta, slices.clone(), &routing);
        write_json(&l.slices(), &Artifact::new("slices", &self.hash, manifest))?;
        write_text(
            &l.topology_dot(),
            &topology_dot(&topo.topology, &slices, &self.hash),
        )?;
        write_frame(&l.slice_frame(), &series, &self.hash)?;
        Ok(format!(
            "slices: {} demands routed into {} slices, {} unrouted",
            routing.routes.len(),
            slices.len(),
            routing.residue.len()
        ))
    }

    fn prepare(&self, force: bool) -> Result<Prepared> {
        let l = &self.layout;
        require(&l.slices(), "slices")?;
        let frame = read_frame_artifact(&l.slice_frame(), "slices", &self.hash, force)?;
        let m = &self.config.model;
        let splits = split(&frame, &self.config.split, m.input_len, m.horizon)?;
        let scaler = fit_scaler(&frame, splits.ranges[0].clone())?;
        let scaled = transform(&frame, &scaler)?;
        Ok(Prepared {
            frame,
            splits,
            scaled,
            scaler,
        })
    }

    /// Like `prepare` but scaled with the parameters saved by `train`.
    fn prepare_trained(&self, force: bool) -> Result<Prepared> {
        let mut p = self.prepare(force)?;
        p.scaler = self.load_scaler(force)?;
        p.scaled = transform(&p.frame, &p.scaler)?;
        Ok(p)
    }

    fn windows(&self, p: &Prepared, part: usize, stride: usize) -> Result<Vec<WindowSample>> {
        let scaled = p.scaled.slice_rows(p.splits.ranges[part].clone())?;
        Ok(make_windows(
            &scaled,
            self.config.model.input_len,
            self.config.model.horizon,
            stride,
        ))
    }

    fn build(&self, kind: ModelKind, channels: usize) -> Result<Model> {
        Ok(Model::new(
            kind,
            self.config.model.to_config(channels, self.config.seed),
        )?)
    }

    pub fn train(&self) -> Result<String> {
        self.config.validate(false)?;
        let p = self.prepare(WARN_ONLY)?;
        let train_w = self.windows(&p, 0, 1)?;
        let val_w = self.windows(&p, 1, 1)?;
        let opts = self.config.train.to_options(self.config.seed);
        let mut records = Vec::new();
        let mut summary = String::from("train:");
        for &kind in &self.config.models {
            let model = self.build(kind, p.scaled.cols())?;
            let outcome = fit(&model, &train_w, &val_w, &opts)?;
            checkpoint::save(&self.layout.checkpoints(), &outcome.model, &self.hash)?;
            let best = outcome
                .best_epoch
                .and_then(|e| outcome.history.get(e))
                .map(|r| r.val_loss);
            let _ = write!(
                summary,
                " {} ({} params, best val {})",
                kind.tag(),
                model.parameter_count(),
                best.map_or("n/a".to_string(), |v| format!("{v:.4}"))
            );
            records.push(TrainingRecord {
                model: kind,
                parameters: model.parameter_count(),
                best_epoch: outcome.best_epoch,
                history: outcome.history,
            });
        }
        let r = &p.splits.ranges;
        let scaler = ScalerArtifact {
            columns: p.scaled.columns.clone(),
            params: p.scaler.clone(),
            split: [
                [r[0].start, r[0].end],
                [r[1].start, r[1].end],
                [r[2].start, r[2].end],
            ],
        };
        write_json(
            &self.layout.scaler(),
            &Artifact::new("scaler", &self.hash, scaler),
        )?;
        write_json(
            &self.layout.training(),
            &Artifact::new("training", &self.hash, records),
        )?;
        let _ = write!(
            summary,
            "; {} train / {} val windows",
            train_w.len(),
            val_w.len()
        );
        Ok(summary)
    }

    fn load_model(&self, kind: ModelKind, force: bool) -> Result<Model> {
        let path = self.layout.checkpoint(kind);
        require(&path, "train")?;
        let (model, manifest) = checkpoint::load(&path)?;
        check_hash(&path, Some(&manifest.config_hash), &self.hash, force)?;
        Ok(model)
    }

    fn load_scaler(&self, force: bool) -> Result<ScalerParams> {
        let a: ScalerArtifact = read_artifact(&self.layout.scaler(), "train", &self.hash, force)?;
        Ok(a.params)
    }

    pub fn predict(&self) -> Result<String> {
        let force = WARN_ONLY;
        let p = self.prepare_trained(force)?;
        let m = &self.config.model;
        let test_w = self.windows(&p, 2, m.horizon)?;
        let mut csv = csv::Writer::from_writer(Vec::new());
        csv.write_record(["timestamp", "slice", "model", "actual", "predicted"])
            .expect("in-memory write");
        let columns = &p.scaled.columns;
        let mut latest = Vec::new();
        for &kind in &self.config.models {
            let model = self.load_model(kind, force)?;
            let forecasts = forecast_windows(&model, &test_w, &p.scaler)?;
            for (c, col) in columns.iter().enumerate() {
                for f in &forecasts {
                    for (step, t) in f.target_times.iter().enumerate() {
                        let i = step * columns.len() + c;
                        csv.write_record([
                            format_instant(*t),
                            col.clone(),
                            kind.tag().to_string(),
                            f.actual[i].to_string(),
                            f.predicted[i].to_string(),
                        ])
                        .expect("in-memory write");
                    }
                }
            }
            if kind == self.config.primary {
                latest = self.forecast_latest(&model, &p)?;
            }
        }
        let body = String::from_utf8(csv.into_inner().expect("in-memory write")).expect("utf-8");
        write_text(
            &self.layout.predictions(),
            &format!("# config_hash: {}\n{body}", self.hash),
        )?;
        let issued = latest.first().map(|f: &ForecastResult| f.issued_at);
        write_json(
            &self.layout.forecasts(),
            &Artifact::new("forecasts", &self.hash, latest),
        )?;
        Ok(format!(
            "predict: {} test windows per model, latest {}-step forecast from {}",
            test_w.len(),
            m.horizon,
            issued.map_or("-".to_string(), format_instant)
        ))
    }

    /// Forecast from the last `L` rows; `issued_at` is the first forecast
    /// instant.
    fn forecast_latest(&self, model: &Model, p: &Prepared) -> Result<Vec<ForecastResult>> {
        let l = self.config.model.input_len;
        let f = &p.scaled;
        let (rows, cols) = (f.rows(), f.cols());
        let context = Tensor::new(vec![l, cols], f.values[(rows - l) * cols..].to_vec())
            .expect("context shape");
        let out = model.predict(&context)?;
        let cadence = f.cadence().unwrap_or(0);
        let issued_at: Instant = f.timestamps[rows - 1] + cadence;
        Ok(f.columns
            .iter()
            .enumerate()
            .map(|(c, id)| ForecastResult {
                slice: id.clone(),
                issued_at,
                horizon: out.rows(),
                predicted: (0..out.rows())
                    .map(|r| p.scaler.invert_value(c, out.at(r, c)))
                    .collect(),
                model: model.kind().tag().to_string(),
            })
            .collect())
    }

    pub fn evaluate(&self) -> Result<String> {
        let p = self.prepare_trained(self.force)?;
        let scaler = &p.scaler;
        let test_w = self.windows(&p, 2, 1)?;
        check_no_leakage(&p.splits.train, &test_w)?;
        let mut metrics: Vec<Metrics> = Vec::new();
        for &kind in &self.config.models {
            let model = self.load_model(kind, self.force)?;
            metrics.push(evaluate_model(&model, &test_w, scaler)?);
        }
        let mut csv = csv::Writer::from_writer(Vec::new());
        csv.write_record([
            "model",
            "windows",
            "mse",
            "mae",
            "mse_original",
            "mae_original",
            "peak_ratio",
        ])
        .expect("in-memory write");
        for m in &metrics {
            csv.write_record([
                m.model.clone(),
                m.windows.to_string(),
                m.mse.to_string(),
                m.mae.to_string(),
                m.mse_original.to_string(),
                m.mae_original.to_string(),
                m.peak_ratio.to_string(),
            ])
            .expect("in-memory write");
        }
        let body = String::from_utf8(csv.into_inner().expect("in-memory write")).expect("utf-8");
        write_text(
            &self.layout.metrics_csv(),
            &format!("# config_hash: {}\n{body}", self.hash),
        )?;
        let summary = metrics
            .iter()
            .map(|m| format!("{} mse {:.4} peak {:.3}", m.model, m.mse, m.peak_ratio))
            .collect::<Vec<_>>()
            .join(", ");
        write_json(
            &self.layout.metrics(),
            &Artifact::new("metrics", &self.hash, metrics),
        )?;
        Ok(format!(
            "evaluate: {} test windows; {summary}",
            test_w.len()
        ))
    }

    /// Generates actions from the latest forecasts. `history` is the
    /// low-utilisation state from a previous run; the next state is written
    /// alongside the document. Returns the summary and the rendered text.
    pub fn policy(&self, history: Option<&Path>, format: PolicyFormat) -> Result<(String, String)> {
        let t = WARN_ONLY;
        let l = &self.layout;
        let forecasts: Vec<ForecastResult> =
            read_artifact(&l.forecasts(), "predict", &self.hash, t)?;
        let manifest: SliceManifest = read_artifact(&l.slices(), "slices", &self.hash, t)?;
        let prior = match history {
            Some(p) => read_artifact::<PolicyHistory>(p, "policy", &self.hash, true)?,
            None => PolicyHistory::default(),
        };
        let decision =
            generate_policies(&forecasts, &manifest.slices, &self.config.policy, &prior)?;
        let issued = forecasts.iter().map(|f| f.issued_at).max().unwrap_or(0);
        let json = render_policy(&decision.actions, issued, &self.hash, PolicyFormat::Json);
        write_text(&l.policy(), &json)?;
        write_json(
            &l.policy_history(),
            &Artifact::new("policy_history", &self.hash, decision.history),
        )?;
        let count = |k: &str| {
            decision
                .actions
                .iter()
                .filter(|a| a.action.as_str() == k)
                .count()
        };
        let summary = format!(
            "policy: {} actions ({} scale-up, {} scale-down, {} hold)",
            decision.actions.len(),
            count("scale-up"),
            count("scale-down"),
            count("hold")
        );
        let text = match format {
            PolicyFormat::Json => json,
            PolicyFormat::Table => render_policy(&decision.actions, issued, &self.hash, format),
        };
        Ok((summary, text))
    }

    /// Every stage except replay, in order.
    pub fn pipeline(&self) -> Result<Vec<String>> {
        Ok(vec![
            self.ingest()?,
            self.slices()?,
            self.train()?,
            self.predict()?,
            self.evaluate()?,
            self.policy(None, PolicyFormat::Json)?.0,
        ])
    }
}
