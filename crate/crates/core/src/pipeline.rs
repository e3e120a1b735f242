//! End-to-end orchestration: inputs on disk to score tables, manifest and
//! diagnostics on disk. Each stage can also run on its own from the
//! intermediate files of a previous run.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::UNIX_EPOCH;

use serde::Serialize;
use serde_json::json;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::conduit::{conduit_scores, identify_sinks, sink_scores, ConduitError, ConduitTable, SinkScore, DEFAULT_SINK_THRESHOLD};
use crate::flow::{condense_cycles, propagate_value, total_value, CycleReport, FlowError, FlowOptions, Injection, OwnershipView, TotalMode, ValueFlowResult};
use crate::format::fmt_num;
use crate::ingest::{parse_firms, parse_gdp, parse_ownership, parse_tax_matrix, IngestError, IngestOptions, IngestReport};
use crate::model::{build_network, BuildReport, JurisdictionCode, ModelError, MultilayerNetwork, TaxNetwork};
use crate::multilayer::{beta_sweep, join_inputs, MultilayerError, SweepEntry, DEFAULT_ALPHA, DEFAULT_BETA, DEFAULT_REPORT_THRESHOLD};
use crate::report::{
    load_conduit_scores, load_load_scores, load_sink_scores, multilayer_file_name, write_conduit_scores, write_flows,
    write_load_scores, write_multilayer_scores, write_sink_scores, ReportError,
};
use crate::routing::{load_centrality, load_scores, LoadResult, LoadScore, RoutingCostModel, RoutingError, DEFAULT_MAX_HOPS};
use crate::synth::SynthError;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const DIAGNOSTICS_FILE: &str = "diagnostics.json";
pub const FLOWS_FILE: &str = "flows.csv";
pub const SINK_FILE: &str = "sink_scores.csv";
pub const CONDUIT_FILE: &str = "conduit_scores.csv";
pub const LOAD_FILE: &str = "load_scores.csv";
pub const SWEEP_FILE: &str = "beta_sweep.csv";

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("{}: input file not found", .0.display())]
    MissingInput(PathBuf),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Report(#[from] ReportError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error(transparent)]
    Conduit(#[from] ConduitError),
    #[error(transparent)]
    Routing(#[from] RoutingError),
    #[error(transparent)]
    Multilayer(#[from] MultilayerError),
    #[error("{path}: {source}")]
    Write {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl PipelineError {
    pub fn stage(&self) -> &'static str {
        match self {
            Self::MissingInput(_) | Self::Ingest(_) | Self::Report(_) => "ingest",
            Self::InvalidParams(_) => "params",
            Self::Model(_) => "network-model",
            Self::Synth(_) => "synth",
            Self::Flow(_) => "value-flow",
            Self::Conduit(_) => "sink-conduit",
            Self::Routing(_) => "tax-routing",
            Self::Multilayer(_) => "multilayer",
            Self::Write { .. } => "report",
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Self::MissingInput(_) => "missing_input",
            Self::InvalidParams(_) => "invalid_params",
            Self::Ingest(_) | Self::Report(_) => "invalid_input",
            Self::Model(_) => "invalid_network",
            Self::Synth(SynthError::Io { .. }) | Self::Write { .. } => "io",
            Self::Synth(_) => "invalid_config",
            Self::Flow(_) | Self::Conduit(_) | Self::Routing(_) | Self::Multilayer(_) => "computation",
        }
    }

    /// 2 for bad input, 1 for failures during computation or output.
    pub fn exit_code(&self) -> i32 {
        match self.kind() {
            "computation" | "io" => 1,
            _ => 2,
        }
    }

    /// Single-line JSON for stderr.
    pub fn to_json_line(&self) -> String {
        json!({"error": self.kind(), "stage": self.stage(), "message": self.to_string()}).to_string()
    }
}

type Result<T, E = PipelineError> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InputPaths {
    pub firms: PathBuf,
    pub ownership: PathBuf,
    pub tax: PathBuf,
    pub gdp: PathBuf,
}

impl InputPaths {
    /// The standard file names inside `dir`.
    pub fn in_dir(dir: &Path) -> Self {
        Self {
            firms: dir.join("firms.csv"),
            ownership: dir.join("ownership.csv"),
            tax: dir.join("tax.csv"),
            gdp: dir.join("gdp.csv"),
        }
    }

    fn roles(&self) -> [(&'static str, &Path); 4] {
        [
            ("firms", &self.firms),
            ("ownership", &self.ownership),
            ("tax", &self.tax),
            ("gdp", &self.gdp),
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnalysisParams {
    pub alpha: f64,
    pub betas: Vec<f64>,
    pub sink_threshold: f64,
    pub report_threshold: f64,
    pub routing_cost: RoutingCostModel,
    pub max_hops: usize,
    pub injection: Injection,
    pub total_mode: TotalMode,
    pub seed: Option<u64>,
    pub ingest: IngestOptions,
}

impl Default for AnalysisParams {
    fn default() -> Self {
        Self {
            alpha: DEFAULT_ALPHA,
            betas: vec![DEFAULT_BETA],
            sink_threshold: DEFAULT_SINK_THRESHOLD,
            report_threshold: DEFAULT_REPORT_THRESHOLD,
            routing_cost: RoutingCostModel::default(),
            max_hops: DEFAULT_MAX_HOPS,
            injection: Injection::default(),
            total_mode: TotalMode::default(),
            seed: None,
            ingest: IngestOptions::default(),
        }
    }
}

impl AnalysisParams {
    fn flow_options(&self) -> FlowOptions {
        FlowOptions {
            injection: self.injection,
            total: self.total_mode,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(PipelineError::InvalidParams(m.into()));
        if self.betas.is_empty() {
            return bad("at least one beta is required");
        }
        if !(self.alpha > 0.0) || !self.alpha.is_finite() {
            return bad("alpha must be positive");
        }
        if self.betas.iter().any(|b| !(*b >= 0.0) || !b.is_finite()) {
            return bad("beta must be non-negative");
        }
        if self.max_hops == 0 {
            return bad("max-hops must be at least 1");
        }
        if !self.sink_threshold.is_finite() || !self.report_threshold.is_finite() {
            return bad("thresholds must be finite");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InputRecord {
    pub role: String,
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
    /// Modification time, seconds since the epoch.
    pub modified: Option<u64>,
}

fn record_input(role: &str, path: &Path) -> Result<InputRecord> {
    let bytes = std::fs::read(path).map_err(|source| IngestError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let modified = std::fs::metadata(path)
        .and_then(|m| m.modified())
        .ok()
        .and_then(|t| t.duration_since(UNIX_EPOCH).ok())
        .map(|d| d.as_secs());
    Ok(InputRecord {
        role: role.into(),
        path: path.display().to_string(),
        sha256: hex::encode(Sha256::digest(&bytes)),
        bytes: bytes.len() as u64,
        modified,
    })
}

fn check_exists(path: &Path) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(PipelineError::MissingInput(path.to_path_buf()))
    }
}

/// sha256 over tool version, parameters and every input's role, file name
/// and content digest. Paths and timestamps are left out.
pub fn manifest_digest(inputs: &[InputRecord], params: &AnalysisParams) -> String {
    let files: Vec<_> = inputs
        .iter()
        .map(|i| {
            let name = Path::new(&i.path).file_name().map(|n| n.to_string_lossy().into_owned());
            json!({"role": i.role, "file": name, "sha256": i.sha256})
        })
        .collect();
    let canonical = json!({
        "version": env!("CARGO_PKG_VERSION"),
        "inputs": files,
        "params": params,
    });
    hex::encode(Sha256::digest(canonical.to_string().as_bytes()))
}

fn source_date_epoch() -> Option<u64> {
    std::env::var("SOURCE_DATE_EPOCH").ok()?.trim().parse().ok()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub inputs: Vec<InputRecord>,
    pub params: AnalysisParams,
    /// From `SOURCE_DATE_EPOCH`; no wall-clock time is recorded so reruns
    /// stay byte-identical.
    pub created: Option<u64>,
    pub outputs: Vec<String>,
    pub digest: String,
}

fn write_file(dir: &Path, name: &str, body: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> Result<PathBuf> {
    let path = dir.join(name);
    let err = |source| PipelineError::Write {
        path: path.display().to_string(),
        source,
    };
    let mut out = BufWriter::new(File::create(&path).map_err(err)?);
    body(&mut out).and_then(|_| out.flush()).map_err(err)?;
    Ok(path)
}

fn csv_io(r: csv::Result<()>) -> std::io::Result<()> {
    r.map_err(std::io::Error::other)
}

fn write_json(dir: &Path, name: &str, value: &impl Serialize) -> Result<PathBuf> {
    write_file(dir, name, |w| {
        serde_json::to_writer_pretty(&mut *w, value).map_err(std::io::Error::other)?;
        w.write_all(b"\n")
    })
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|source| PipelineError::Write {
        path: dir.display().to_string(),
        source,
    })
}

/// Network assembled from the four input files.
#[derive(Debug, Clone)]
pub struct LoadedInputs {
    pub network: MultilayerNetwork,
    pub ingest: IngestReport,
    pub build: BuildReport,
}

pub fn load_inputs(paths: &InputPaths, opts: &IngestOptions) -> Result<LoadedInputs> {
    for (_, p) in paths.roles() {
        check_exists(p)?;
    }
    let (firms, mut ingest) = parse_firms(&paths.firms, opts)?;
    let (links, r) = parse_ownership(&paths.ownership, opts)?;
    ingest.merge(r);
    let (tax, r) = parse_tax_matrix(&paths.tax, opts)?;
    ingest.merge(r);
    let (gdp, r) = parse_gdp(&paths.gdp)?;
    ingest.merge(r);
    let (network, build) = build_network(firms, &links, tax, &gdp)?;
    Ok(LoadedInputs { network, ingest, build })
}

pub fn load_tax(path: &Path, opts: &IngestOptions) -> Result<TaxNetwork> {
    check_exists(path)?;
    Ok(parse_tax_matrix(path, opts)?.0)
}

/// Ownership-layer results: flows, sinks and conduits.
#[derive(Debug, Clone)]
pub struct OwnershipScores {
    pub view: OwnershipView,
    pub cycles: CycleReport,
    pub flow: ValueFlowResult,
    pub v_total: f64,
    pub sinks: Vec<SinkScore>,
    pub conduits: ConduitTable,
}

pub fn flow_stage(net: &MultilayerNetwork, params: &AnalysisParams) -> Result<(OwnershipView, CycleReport, ValueFlowResult)> {
    let (view, cycles) = condense_cycles(net);
    let flow = propagate_value(&view, params.flow_options())?;
    total_value(&flow)?;
    Ok((view, cycles, flow))
}

pub fn ownership_stage(net: &MultilayerNetwork, params: &AnalysisParams) -> Result<OwnershipScores> {
    let (view, cycles, flow) = flow_stage(net, params)?;
    let sinks = sink_scores(&view, &flow, net.gdp())?;
    let sink_set = identify_sinks(&sinks, params.sink_threshold);
    let conduits = conduit_scores(&view, &flow, net.gdp(), &sink_set)?;
    Ok(OwnershipScores {
        v_total: total_value(&flow)?,
        view,
        cycles,
        flow,
        sinks,
        conduits,
    })
}

pub fn load_stage(tax: &TaxNetwork, params: &AnalysisParams) -> Result<(LoadResult, Vec<LoadScore>, Option<String>)> {
    let result = load_centrality(tax, params.routing_cost, params.max_hops)?;
    let (scores, err) = load_scores(&result);
    Ok((result, scores, err.map(|e| format!("load scores not standardized: {e}"))))
}

fn standardized_loads(loads: &[LoadScore]) -> BTreeMap<JurisdictionCode, f64> {
    loads.iter().filter_map(|l| Some((l.jurisdiction, l.l_std?))).collect()
}

/// Multilayer tables for every beta in `params`, with the number of pairs
/// left out for lacking an input.
pub fn multilayer_stage(
    conduits: &[crate::conduit::ConduitScore],
    loads: &[LoadScore],
    params: &AnalysisParams,
) -> Result<(Vec<SweepEntry>, usize)> {
    let (inputs, excluded) = join_inputs(conduits, &standardized_loads(loads));
    let mut sweep = beta_sweep(&inputs, params.alpha, &params.betas, params.report_threshold)?;
    for e in &mut sweep {
        e.table.excluded_pairs = excluded;
    }
    Ok((sweep, excluded))
}

fn write_multilayer_files(dir: &Path, digest: &str, sweep: &[SweepEntry]) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for e in sweep {
        files.push(write_file(dir, &multilayer_file_name(e.beta), |w| {
            csv_io(write_multilayer_scores(w, Some(digest), &e.table.scores))
        })?);
    }
    files.push(write_file(dir, SWEEP_FILE, |w| {
        writeln!(w, "{}{digest}", crate::report::DIGEST_PREFIX)?;
        writeln!(w, "beta,threshold,pairs")?;
        for e in sweep {
            for c in &e.counts {
                writeln!(w, "{},{},{}", fmt_num(e.beta), fmt_num(c.threshold), c.pairs)?;
            }
        }
        Ok(())
    })?);
    Ok(files)
}

/// Everything a full run produced.
#[derive(Debug, Clone)]
pub struct RunOutputs {
    pub manifest: RunManifest,
    pub ownership: OwnershipScores,
    pub loads: Vec<LoadScore>,
    pub sweep: Vec<SweepEntry>,
}

fn file_names(files: &[PathBuf]) -> Vec<String> {
    files
        .iter()
        .filter_map(|f| f.file_name().map(|n| n.to_string_lossy().into_owned()))
        .collect()
}

/// Full pipeline: reads the four inputs and writes every table plus
/// `manifest.json` and `diagnostics.json` into `out`.
pub fn run(paths: &InputPaths, params: &AnalysisParams, out: &Path) -> Result<RunOutputs> {
    params.validate()?;
    let loaded = load_inputs(paths, &params.ingest)?;
    let inputs = paths
        .roles()
        .iter()
        .map(|(role, p)| record_input(role, p))
        .collect::<Result<Vec<_>>>()?;
    let digest = manifest_digest(&inputs, params);

    let net = &loaded.network;
    let own = ownership_stage(net, params)?;
    let (load_result, loads, load_warning) = load_stage(net.tax(), params)?;
    let (sweep, excluded) = multilayer_stage(&own.conduits.scores, &loads, params)?;

    create_dir(out)?;
    let d = Some(digest.as_str());
    let mut files = vec![
        write_file(out, FLOWS_FILE, |w| csv_io(write_flows(w, d, &own.view, &own.flow)))?,
        write_file(out, SINK_FILE, |w| csv_io(write_sink_scores(w, d, &own.sinks)))?,
        write_file(out, CONDUIT_FILE, |w| csv_io(write_conduit_scores(w, d, &own.conduits.scores)))?,
        write_file(out, LOAD_FILE, |w| csv_io(write_load_scores(w, d, &loads)))?,
    ];
    files.extend(write_multilayer_files(out, &digest, &sweep)?);

    let sink_set = identify_sinks(&own.sinks, params.sink_threshold);
    let diagnostics = json!({
        "manifest_digest": digest,
        "ingest": loaded.ingest,
        "network": loaded.build,
        "cycles": own.cycles,
        "value_flow": {
            "v_total": own.v_total,
            "received_total": own.flow.received_total,
            "injected_total": own.flow.injected_total,
        },
        "sinks": sink_set.iter().map(|p| p.to_string()).collect::<Vec<_>>(),
        "conduit_warnings": own.conduits.warnings,
        "load": {
            "unreachable_packets": load_result.unreachable.len(),
            "unreachable": load_result.unreachable.iter().map(|(o, d)| [o.to_string(), d.to_string()]).collect::<Vec<_>>(),
            "warning": load_warning,
        },
        "multilayer": sweep.iter().map(|e| json!({
            "beta": e.beta,
            "scored_pairs": e.table.scores.len(),
            "clamped_pairs": e.table.clamped_pairs,
            "excluded_pairs": excluded,
            "counts_above": e.counts,
        })).collect::<Vec<_>>(),
    });
    files.push(write_json(out, DIAGNOSTICS_FILE, &diagnostics)?);

    let manifest = RunManifest {
        tool: "taxnet",
        version: env!("CARGO_PKG_VERSION"),
        inputs,
        params: params.clone(),
        created: source_date_epoch(),
        outputs: file_names(&files),
        digest,
    };
    write_json(out, MANIFEST_FILE, &manifest)?;
    Ok(RunOutputs {
        manifest,
        ownership: own,
        loads,
        sweep,
    })
}

fn stage_digest(roles: &[(&str, &Path)], params: &AnalysisParams) -> Result<String> {
    let inputs = roles
        .iter()
        .map(|(role, p)| {
            check_exists(p)?;
            record_input(role, p)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(manifest_digest(&inputs, params))
}

/// Writes `sink_scores.csv` from the four inputs.
pub fn compute_sink(paths: &InputPaths, params: &AnalysisParams, out: &Path) -> Result<Vec<SinkScore>> {
    params.validate()?;
    let loaded = load_inputs(paths, &params.ingest)?;
    let digest = stage_digest(&paths.roles(), params)?;
    let (view, _, flow) = flow_stage(&loaded.network, params)?;
    let sinks = sink_scores(&view, &flow, loaded.network.gdp())?;
    create_dir(out)?;
    write_file(out, SINK_FILE, |w| csv_io(write_sink_scores(w, Some(&digest), &sinks)))?;
    Ok(sinks)
}

/// Writes `conduit_scores.csv` from the four inputs and a sink table.
pub fn compute_conduit(paths: &InputPaths, sink_file: &Path, params: &AnalysisParams, out: &Path) -> Result<ConduitTable> {
    params.validate()?;
    check_exists(sink_file)?;
    let loaded = load_inputs(paths, &params.ingest)?;
    let mut roles = paths.roles().to_vec();
    roles.push(("sink_scores", sink_file));
    let digest = stage_digest(&roles, params)?;
    let sinks = load_sink_scores(sink_file)?.rows;
    let sink_set = identify_sinks(&sinks, params.sink_threshold);
    let (view, _, flow) = flow_stage(&loaded.network, params)?;
    let table = conduit_scores(&view, &flow, loaded.network.gdp(), &sink_set)?;
    create_dir(out)?;
    write_file(out, CONDUIT_FILE, |w| csv_io(write_conduit_scores(w, Some(&digest), &table.scores)))?;
    Ok(table)
}

/// Writes `load_scores.csv` from the tax table alone.
pub fn compute_load(tax_file: &Path, params: &AnalysisParams, out: &Path) -> Result<(LoadResult, Vec<LoadScore>)> {
    params.validate()?;
    let tax = load_tax(tax_file, &params.ingest)?;
    let digest = stage_digest(&[("tax", tax_file)], params)?;
    let (result, scores, _) = load_stage(&tax, params)?;
    create_dir(out)?;
    write_file(out, LOAD_FILE, |w| csv_io(write_load_scores(w, Some(&digest), &scores)))?;
    Ok((result, scores))
}

/// Writes one multilayer table per beta plus `beta_sweep.csv` from conduit
/// and load tables.
pub fn compute_multilayer(conduit_file: &Path, load_file: &Path, params: &AnalysisParams, out: &Path) -> Result<Vec<SweepEntry>> {
    params.validate()?;
    check_exists(conduit_file)?;
    check_exists(load_file)?;
    let digest = stage_digest(&[("conduit_scores", conduit_file), ("load_scores", load_file)], params)?;
    let conduits = load_conduit_scores(conduit_file)?.rows;
    let loads = load_load_scores(load_file)?.rows;
    let (sweep, _) = multilayer_stage(&conduits, &loads, params)?;
    create_dir(out)?;
    write_multilayer_files(out, &digest, &sweep)?;
    Ok(sweep)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate, SynthConfig};

    fn bundle(dir: &Path) -> InputPaths {
        generate(&SynthConfig::default()).unwrap().write_bundle(dir).unwrap();
        InputPaths::in_dir(dir)
    }

    #[test]
    fn missing_gdp_is_an_input_error() {
        let tmp = tempfile::tempdir().unwrap();
        let paths = bundle(tmp.path());
        std::fs::remove_file(&paths.gdp).unwrap();
        let err = run(&paths, &AnalysisParams::default(), &tmp.path().join("out")).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("gdp.csv"));
        let line = err.to_json_line();
        assert!(!line.contains('\n'));
        let v: serde_json::Value = serde_json::from_str(&line).unwrap();
        assert_eq!(v["stage"], "ingest");
    }

    #[test]
    fn digest_ignores_location() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let pa = bundle(a.path());
        let pb = bundle(b.path());
        let ra = run(&pa, &AnalysisParams::default(), &a.path().join("out")).unwrap();
        let rb = run(&pb, &AnalysisParams::default(), &b.path().join("out")).unwrap();
        assert_eq!(ra.manifest.digest, rb.manifest.digest);
        let other = AnalysisParams {
            betas: vec![0.3],
            ..Default::default()
        };
        let rc = run(&pa, &other, &a.path().join("out2")).unwrap();
        assert_ne!(ra.manifest.digest, rc.manifest.digest);
    }

    #[test]
    fn invalid_params_rejected() {
        let p = AnalysisParams {
            betas: vec![],
            ..Default::default()
        };
        assert_eq!(p.validate().unwrap_err().exit_code(), 2);
    }
}
