//! Run configuration, parameter sweeps and tabular reports.
//!
//! Configs are JSON. Unknown keys are rejected and every validation error
//! names the offending field path. Sweep results are emitted as CSV (fixed
//! 12-significant-digit floats, LF line endings) and JSON.

use std::io::Write;
use std::path::PathBuf;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytic::{
    teleport_fidelity, teleport_norm, truncation_fidelity, truncation_norm, NoiseParams,
};
use crate::apparatus::{
    bell_decompose, bs_action_on_bell, full_pipeline, ClickPattern, PipelineResult,
    QubitAmplitudes, ScissorsConfig, TeleportStage,
};
use crate::channels::{BeamSplitterSpec, DetectorSpec};
use crate::error::{Error, Result};
use crate::fock::{CoherentDrive, C64};

pub const EXIT_OK: u8 = 0;
pub const EXIT_INVARIANT: u8 = 1;
pub const EXIT_CONFIG: u8 = 2;

/// Maximum trace change tolerated across a Kraus channel.
pub const TRACE_DEFECT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(untagged)]
enum ComplexInput {
    Real(f64),
    Pair([f64; 2]),
}

impl From<ComplexInput> for C64 {
    fn from(value: ComplexInput) -> Self {
        match value {
            ComplexInput::Real(re) => C64::new(re, 0.0),
            ComplexInput::Pair([re, im]) => C64::new(re, im),
        }
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    eta: Option<f64>,
    gamma_bs: Option<f64>,
    drive: Option<RawDrive>,
    input: Option<RawInput>,
    clicks: Option<[usize; 2]>,
    sweep: Option<RawSweep>,
    out: Option<PathBuf>,
    elements: Option<RawElements>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDrive {
    gamma: Option<ComplexInput>,
    cutoff: Option<usize>,
    tail_eps: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawInput {
    c0: ComplexInput,
    c1: ComplexInput,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSweep {
    eta: Option<Vec<f64>>,
    gamma_bs: Option<Vec<f64>>,
    drive: Option<Vec<ComplexInput>>,
    ratio: Option<Vec<f64>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawElements {
    scissors: Option<Vec<ElementSpec>>,
    teleport: Option<Vec<ElementSpec>>,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
enum ElementSpec {
    Bs { t: ComplexInput, r: ComplexInput },
    Detector { eta: f64, clicks: usize },
}

/// Command-line values that take precedence over the config file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub eta: Option<f64>,
    pub gamma_bs: Option<f64>,
    pub drive: Option<f64>,
    pub ratio: Option<f64>,
    pub cutoff: Option<usize>,
    pub out: Option<PathBuf>,
}

/// Optics of one stage given element by element: two splitters, then the
/// counters of the two detected modes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StageElements {
    pub bs1: BeamSplitterSpec,
    pub bs2: BeamSplitterSpec,
    pub detectors: [DetectorSpec; 2],
    pub clicks: ClickPattern,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub eta: f64,
    pub gamma_bs: f64,
    pub drive: CoherentDrive,
    pub input: Option<QubitAmplitudes>,
    pub clicks: Option<ClickPattern>,
    pub sweep: SweepGrid,
    pub out: Option<PathBuf>,
    pub scissors_elements: Option<StageElements>,
    pub teleport_elements: Option<StageElements>,
}

impl RunConfig {
    /// Scissors stage; `clicks` applies only when `own_clicks` is set.
    pub fn scissors_config(&self, own_clicks: bool) -> Result<ScissorsConfig> {
        let mut cfg = ScissorsConfig::balanced(self.drive, self.gamma_bs, self.eta)?;
        if let Some(el) = &self.scissors_elements {
            cfg.bs1 = el.bs1;
            cfg.bs2 = el.bs2;
            cfg.detectors = el.detectors;
            cfg.clicks = el.clicks;
        }
        if own_clicks {
            if let Some(clicks) = self.clicks {
                cfg.clicks = clicks;
            }
        }
        Ok(cfg)
    }

    pub fn teleport_stage(&self) -> Result<TeleportStage> {
        let mut stage = TeleportStage::balanced(self.gamma_bs, self.eta)?;
        if let Some(el) = &self.teleport_elements {
            stage.bs1 = el.bs1;
            stage.bs2 = el.bs2;
            stage.detectors = el.detectors;
            stage.clicks = el.clicks;
        }
        if let Some(clicks) = self.clicks {
            stage.clicks = clicks;
        }
        Ok(stage)
    }

    /// Qubit fed to a standalone teleportation run; defaults to the
    /// truncated drive `(gamma_0|0> + gamma_1|1>)/C`.
    pub fn teleport_input(&self) -> QubitAmplitudes {
        self.input
            .unwrap_or_else(|| QubitAmplitudes::from_drive(&self.drive))
    }
}

/// Reads a config argument: inline JSON when it starts with `{`, otherwise a
/// file path. No argument means the all-default config.
pub fn load_config_text(source: Option<&str>) -> Result<String> {
    match source {
        None => Ok("{}".to_string()),
        Some(s) if s.trim_start().starts_with('{') => Ok(s.to_string()),
        Some(path) => std::fs::read_to_string(path)
            .map_err(|e| Error::config("<config>", format!("cannot read {path}: {e}"))),
    }
}

fn check_eta(path: &str, eta: f64) -> Result<f64> {
    if eta.is_finite() && (0.0..=1.0).contains(&eta) {
        Ok(eta)
    } else {
        Err(Error::config(
            path,
            format!("must lie in [0, 1], got {eta}"),
        ))
    }
}

fn check_gamma(path: &str, gamma: f64) -> Result<f64> {
    if !(gamma.is_finite() && (0.0..1.0).contains(&gamma)) {
        return Err(Error::config(
            path,
            format!("must lie in [0, 1), got {gamma}"),
        ));
    }
    BeamSplitterSpec::lossy_balanced(gamma).map_err(|e| Error::config(path, e.to_string()))?;
    Ok(gamma)
}

fn check_clicks(path: &str, clicks: [usize; 2]) -> Result<ClickPattern> {
    let pattern = ClickPattern(clicks[0], clicks[1]);
    if pattern == ClickPattern::PRIMARY || pattern == ClickPattern::SWAPPED {
        Ok(pattern)
    } else {
        Err(Error::config(
            path,
            format!("click pattern {pattern} does not herald the transfer; use [1, 0] or [0, 1]"),
        ))
    }
}

fn ratio_to_drive(path: &str, ratio: f64) -> Result<C64> {
    if ratio.is_finite() && ratio > 0.0 {
        Ok(C64::new(ratio.recip().sqrt(), 0.0))
    } else {
        Err(Error::config(
            path,
            format!("must be positive, got {ratio}"),
        ))
    }
}

fn build_drive(gamma: C64, cutoff: Option<usize>, tail_eps: f64) -> Result<CoherentDrive> {
    match cutoff {
        Some(c) => CoherentDrive::new(gamma, c, tail_eps)
            .map_err(|e| Error::config("drive.cutoff", e.to_string())),
        None => CoherentDrive::auto(gamma, tail_eps, CoherentDrive::MAX_AUTO_CUTOFF)
            .map_err(|e| Error::config("drive.gamma", e.to_string())),
    }
}

fn build_elements(path: &str, raw: &[ElementSpec]) -> Result<StageElements> {
    if raw.len() != 4 {
        return Err(Error::config(
            path,
            format!(
                "expected [bs, bs, detector, detector], got {} elements",
                raw.len()
            ),
        ));
    }
    let bs = |i: usize| -> Result<BeamSplitterSpec> {
        match raw[i] {
            ElementSpec::Bs { t, r } => BeamSplitterSpec::new(t.into(), r.into())
                .map_err(|e| Error::config(format!("{path}[{i}]"), e.to_string())),
            ElementSpec::Detector { .. } => Err(Error::config(
                format!("{path}[{i}]"),
                "expected a beam splitter",
            )),
        }
    };
    let det = |i: usize| -> Result<(DetectorSpec, usize)> {
        match raw[i] {
            ElementSpec::Detector { eta, clicks } => {
                let eta = check_eta(&format!("{path}[{i}].eta"), eta)?;
                Ok((DetectorSpec::new(eta)?, clicks))
            }
            ElementSpec::Bs { .. } => {
                Err(Error::config(format!("{path}[{i}]"), "expected a detector"))
            }
        }
    };
    let (d0, n0) = det(2)?;
    let (d1, n1) = det(3)?;
    Ok(StageElements {
        bs1: bs(0)?,
        bs2: bs(1)?,
        detectors: [d0, d1],
        clicks: check_clicks(&format!("{path}[2..4].clicks"), [n0, n1])?,
    })
}

/// Parses and validates a JSON config, then applies command-line overrides.
pub fn parse_config(text: &str, overrides: &Overrides) -> Result<RunConfig> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let mut raw: RawConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        Error::config(path, e.into_inner().to_string())
    })?;

    if overrides.drive.is_some() && overrides.ratio.is_some() {
        return Err(Error::config(
            "ratio",
            "give either a drive amplitude or a ratio",
        ));
    }
    let raw_drive = raw.drive.get_or_insert_with(RawDrive::default);
    if let Some(g) = overrides.drive {
        raw_drive.gamma = Some(ComplexInput::Real(g));
    }
    if let Some(c) = overrides.cutoff {
        raw_drive.cutoff = Some(c);
    }

    let eta = check_eta("eta", overrides.eta.or(raw.eta).unwrap_or(1.0))?;
    let gamma_bs = check_gamma(
        "gamma_bs",
        overrides.gamma_bs.or(raw.gamma_bs).unwrap_or(0.0),
    )?;

    let raw_drive = raw.drive.take().unwrap_or_default();
    let tail_eps = raw_drive
        .tail_eps
        .unwrap_or(CoherentDrive::DEFAULT_TAIL_EPS);
    if !(tail_eps.is_finite() && tail_eps > 0.0 && tail_eps < 1.0) {
        return Err(Error::config(
            "drive.tail_eps",
            format!("must lie in (0, 1), got {tail_eps}"),
        ));
    }
    let gamma = match overrides.ratio {
        Some(ratio) => ratio_to_drive("ratio", ratio)?,
        None => raw_drive.gamma.map(C64::from).unwrap_or(C64::new(1.0, 0.0)),
    };
    let drive = build_drive(gamma, raw_drive.cutoff, tail_eps)?;

    let input = raw
        .input
        .map(|i| {
            QubitAmplitudes::new(i.c0.into(), i.c1.into())
                .map_err(|e| Error::config("input", e.to_string()))
        })
        .transpose()?;
    let clicks = raw.clicks.map(|c| check_clicks("clicks", c)).transpose()?;

    let elements = raw.elements.unwrap_or_default();
    let scissors_elements = elements
        .scissors
        .as_deref()
        .map(|e| build_elements("elements.scissors", e))
        .transpose()?;
    let teleport_elements = elements
        .teleport
        .as_deref()
        .map(|e| build_elements("elements.teleport", e))
        .transpose()?;

    let sweep = SweepGrid::from_raw(
        raw.sweep.unwrap_or_default(),
        overrides,
        raw_drive.cutoff,
        tail_eps,
    )?;

    Ok(RunConfig {
        eta,
        gamma_bs,
        drive,
        input,
        clicks,
        sweep,
        out: overrides.out.clone().or(raw.out),
        scissors_elements,
        teleport_elements,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GridPoint {
    pub eta: f64,
    pub gamma_bs: f64,
    pub drive: C64,
}

/// Parameter grid over detector efficiency, splitter damping and drive
/// amplitude. Points are visited with the drive varying fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepGrid {
    pub etas: Vec<f64>,
    pub gammas: Vec<f64>,
    pub drives: Vec<C64>,
    pub cutoff: Option<usize>,
    pub tail_eps: f64,
}

impl Default for SweepGrid {
    fn default() -> Self {
        Self {
            etas: vec![0.5, 0.7, 1.0],
            gammas: vec![0.0, 0.02, 0.1],
            drives: [0.5, 1.0, 2.0].iter().map(|&g| C64::new(g, 0.0)).collect(),
            cutoff: None,
            tail_eps: CoherentDrive::DEFAULT_TAIL_EPS,
        }
    }
}

fn non_empty<T>(path: &str, values: Vec<T>) -> Result<Vec<T>> {
    if values.is_empty() {
        Err(Error::config(path, "list must not be empty"))
    } else {
        Ok(values)
    }
}

impl SweepGrid {
    fn from_raw(
        raw: RawSweep,
        overrides: &Overrides,
        cutoff: Option<usize>,
        tail_eps: f64,
    ) -> Result<Self> {
        let defaults = Self::default();
        let etas = match overrides.eta {
            Some(e) => vec![e],
            None => non_empty("sweep.eta", raw.eta.unwrap_or(defaults.etas))?,
        };
        for (i, &e) in etas.iter().enumerate() {
            check_eta(&format!("sweep.eta[{i}]"), e)?;
        }
        let gammas = match overrides.gamma_bs {
            Some(g) => vec![g],
            None => non_empty("sweep.gamma_bs", raw.gamma_bs.unwrap_or(defaults.gammas))?,
        };
        for (i, &g) in gammas.iter().enumerate() {
            check_gamma(&format!("sweep.gamma_bs[{i}]"), g)?;
        }
        if raw.drive.is_some() && raw.ratio.is_some() {
            return Err(Error::config(
                "sweep.ratio",
                "give either drive or ratio values",
            ));
        }
        let drives = if let Some(g) = overrides.drive {
            vec![C64::new(g, 0.0)]
        } else if let Some(r) = overrides.ratio {
            vec![ratio_to_drive("ratio", r)?]
        } else if let Some(ratios) = raw.ratio {
            non_empty("sweep.ratio", ratios)?
                .iter()
                .enumerate()
                .map(|(i, &r)| ratio_to_drive(&format!("sweep.ratio[{i}]"), r))
                .collect::<Result<_>>()?
        } else if let Some(drives) = raw.drive {
            non_empty("sweep.drive", drives)?
                .into_iter()
                .map(C64::from)
                .collect()
        } else {
            defaults.drives
        };
        for (i, &g) in drives.iter().enumerate() {
            build_drive(g, cutoff, tail_eps).map_err(|e| match e {
                Error::Config { message, .. } => {
                    Error::config(format!("sweep.drive[{i}]"), message)
                }
                other => other,
            })?;
        }
        Ok(Self {
            etas,
            gammas,
            drives,
            cutoff,
            tail_eps,
        })
    }

    pub fn points(&self) -> Vec<GridPoint> {
        let mut out = Vec::with_capacity(self.etas.len() * self.gammas.len() * self.drives.len());
        for &eta in &self.etas {
            for &gamma_bs in &self.gammas {
                for &drive in &self.drives {
                    out.push(GridPoint {
                        eta,
                        gamma_bs,
                        drive,
                    });
                }
            }
        }
        out
    }
}

/// One line of the numeric-versus-closed-form comparison.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportRow {
    pub eta: f64,
    pub gamma: f64,
    #[serde(rename = "ratio_R")]
    pub ratio_r: f64,
    pub drive_gamma: f64,
    pub fid_scissors_numeric: Option<f64>,
    pub fid_scissors_oracle: Option<f64>,
    pub fid_teleport_numeric: Option<f64>,
    pub fid_teleport_oracle: Option<f64>,
    pub prob_scissors: Option<f64>,
    pub prob_teleport: Option<f64>,
    pub norm_scissors_oracle: Option<f64>,
    pub norm_teleport_oracle: Option<f64>,
    pub abs_diff_scissors: Option<f64>,
    pub abs_diff_teleport: Option<f64>,
    pub oob_fid_scissors: bool,
    pub oob_fid_teleport: bool,
    pub oob_norm_scissors: bool,
    pub oob_norm_teleport: bool,
    pub truncation_error: f64,
    pub status: RowStatus,
    pub invariant_violation: bool,
    pub detail: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RowStatus {
    Ok,
    ImpossibleOutcome,
    OracleError,
    InvariantViolation,
    Error,
}

impl RowStatus {
    fn as_str(&self) -> &'static str {
        match self {
            RowStatus::Ok => "ok",
            RowStatus::ImpossibleOutcome => "impossible_outcome",
            RowStatus::OracleError => "oracle_error",
            RowStatus::InvariantViolation => "invariant_violation",
            RowStatus::Error => "error",
        }
    }
}

/// CSV header; `detail` is JSON-only.
pub const CSV_COLUMNS: [&str; 21] = [
    "eta",
    "gamma",
    "ratio_R",
    "drive_gamma",
    "fid_scissors_numeric",
    "fid_scissors_oracle",
    "fid_teleport_numeric",
    "fid_teleport_oracle",
    "prob_scissors",
    "prob_teleport",
    "norm_scissors_oracle",
    "norm_teleport_oracle",
    "abs_diff_scissors",
    "abs_diff_teleport",
    "oob_fid_scissors",
    "oob_fid_teleport",
    "oob_norm_scissors",
    "oob_norm_teleport",
    "truncation_error",
    "status",
    "invariant_violation",
];

/// Twelve significant digits, independent of locale.
pub fn format_float(x: f64) -> String {
    format!("{x:.11e}")
}

fn format_opt(x: Option<f64>) -> String {
    x.map(format_float).unwrap_or_default()
}

impl ReportRow {
    fn blank(point: &GridPoint) -> Self {
        let x = point.drive.norm_sqr();
        Self {
            eta: point.eta,
            gamma: point.gamma_bs,
            ratio_r: if x > 0.0 { x.recip() } else { f64::INFINITY },
            drive_gamma: point.drive.norm(),
            fid_scissors_numeric: None,
            fid_scissors_oracle: None,
            fid_teleport_numeric: None,
            fid_teleport_oracle: None,
            prob_scissors: None,
            prob_teleport: None,
            norm_scissors_oracle: None,
            norm_teleport_oracle: None,
            abs_diff_scissors: None,
            abs_diff_teleport: None,
            oob_fid_scissors: false,
            oob_fid_teleport: false,
            oob_norm_scissors: false,
            oob_norm_teleport: false,
            truncation_error: 0.0,
            status: RowStatus::Ok,
            invariant_violation: false,
            detail: None,
        }
    }

    pub fn csv_record(&self) -> Vec<String> {
        vec![
            format_float(self.eta),
            format_float(self.gamma),
            format_float(self.ratio_r),
            format_float(self.drive_gamma),
            format_opt(self.fid_scissors_numeric),
            format_opt(self.fid_scissors_oracle),
            format_opt(self.fid_teleport_numeric),
            format_opt(self.fid_teleport_oracle),
            format_opt(self.prob_scissors),
            format_opt(self.prob_teleport),
            format_opt(self.norm_scissors_oracle),
            format_opt(self.norm_teleport_oracle),
            format_opt(self.abs_diff_scissors),
            format_opt(self.abs_diff_teleport),
            self.oob_fid_scissors.to_string(),
            self.oob_fid_teleport.to_string(),
            self.oob_norm_scissors.to_string(),
            self.oob_norm_teleport.to_string(),
            format_float(self.truncation_error),
            self.status.as_str().to_string(),
            self.invariant_violation.to_string(),
        ]
    }

    fn record_failure(&mut self, err: &Error) {
        let status = match err {
            Error::ImpossibleOutcome { .. } => RowStatus::ImpossibleOutcome,
            Error::Invariant(_) => RowStatus::InvariantViolation,
            _ => RowStatus::Error,
        };
        self.invariant_violation |= status == RowStatus::InvariantViolation;
        if self.status == RowStatus::Ok || status == RowStatus::InvariantViolation {
            self.status = status;
        }
        let msg = err.to_string();
        self.detail = Some(match self.detail.take() {
            Some(prev) => format!("{prev}; {msg}"),
            None => msg,
        });
    }

    fn check_numeric(&mut self, run: &PipelineResult) {
        let mut problems = Vec::new();
        for (name, stage) in [("scissors", &run.scissors), ("teleport", &run.teleport)] {
            if !(0.0..=1.0).contains(&stage.probability) {
                problems.push(format!("{name} probability {}", stage.probability));
            }
            if !(0.0..=1.0).contains(&stage.fidelity) {
                problems.push(format!("{name} fidelity {}", stage.fidelity));
            }
            if stage.diagnostics.trace_defect > TRACE_DEFECT_TOL {
                problems.push(format!(
                    "{name} trace defect {}",
                    stage.diagnostics.trace_defect
                ));
            }
        }
        for p in problems {
            self.record_failure(&Error::Invariant(p));
        }
    }
}

/// Runs both stages and the closed-form oracles for one parameter point.
///
/// Failures are recorded in the row, never propagated.
pub fn evaluate(
    point: &GridPoint,
    scissors: &ScissorsConfig,
    teleport: &TeleportStage,
) -> ReportRow {
    let mut row = ReportRow::blank(point);
    row.truncation_error = scissors.drive.truncation_error();

    match full_pipeline(scissors, teleport) {
        Ok(run) => {
            row.fid_scissors_numeric = Some(run.scissors.fidelity);
            row.fid_teleport_numeric = Some(run.end_to_end_fidelity);
            row.prob_scissors = Some(run.scissors.probability);
            row.prob_teleport = Some(run.teleport.probability);
            row.check_numeric(&run);
        }
        Err(e) => row.record_failure(&e),
    }

    let oracles = (|| -> Result<()> {
        let params = NoiseParams::from_drive(point.eta, point.gamma_bs, point.drive.norm())?;
        let fs = truncation_fidelity(&params)?;
        let ft = teleport_fidelity(&params)?;
        let ns = truncation_norm(&params, &scissors.bs1)?;
        let nt = teleport_norm(&params)?;
        row.fid_scissors_oracle = Some(fs.value);
        row.fid_teleport_oracle = Some(ft.value);
        row.norm_scissors_oracle = Some(ns.value);
        row.norm_teleport_oracle = Some(nt.value);
        row.oob_fid_scissors = fs.out_of_range;
        row.oob_fid_teleport = ft.out_of_range;
        row.oob_norm_scissors = ns.out_of_range;
        row.oob_norm_teleport = nt.out_of_range;
        Ok(())
    })();
    if let Err(e) = oracles {
        if row.status == RowStatus::Ok {
            row.status = RowStatus::OracleError;
        }
        row.detail = Some(e.to_string());
    }

    row.abs_diff_scissors = row
        .fid_scissors_numeric
        .zip(row.fid_scissors_oracle)
        .map(|(a, b)| (a - b).abs());
    row.abs_diff_teleport = row
        .fid_teleport_numeric
        .zip(row.fid_teleport_oracle)
        .map(|(a, b)| (a - b).abs());
    row
}

fn homogeneous(point: &GridPoint, grid: &SweepGrid) -> Result<(ScissorsConfig, TeleportStage)> {
    let drive = build_drive(point.drive, grid.cutoff, grid.tail_eps)?;
    Ok((
        ScissorsConfig::balanced(drive, point.gamma_bs, point.eta)?,
        TeleportStage::balanced(point.gamma_bs, point.eta)?,
    ))
}

/// Evaluates every grid point, in parallel, returning rows in grid order.
pub fn run_sweep(grid: &SweepGrid) -> Vec<ReportRow> {
    grid.points()
        .par_iter()
        .map(|point| match homogeneous(point, grid) {
            Ok((s, t)) => evaluate(point, &s, &t),
            Err(e) => {
                let mut row = ReportRow::blank(point);
                row.record_failure(&e);
                row
            }
        })
        .collect()
}

/// Single-point report for the configured (possibly per-element) optics.
pub fn run_pipeline_row(config: &RunConfig) -> Result<ReportRow> {
    let point = GridPoint {
        eta: config.eta,
        gamma_bs: config.gamma_bs,
        drive: config.drive.gamma(),
    };
    let scissors = config.scissors_config(false)?;
    let stage = config.teleport_stage()?;
    Ok(evaluate(&point, &scissors, &stage))
}

pub fn write_csv<W: Write>(rows: &[ReportRow], writer: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(writer);
    w.write_record(CSV_COLUMNS)?;
    for row in rows {
        w.write_record(row.csv_record())?;
    }
    w.flush()?;
    Ok(())
}

pub fn csv_string(rows: &[ReportRow]) -> Result<String> {
    let mut buf = Vec::new();
    write_csv(rows, &mut buf)?;
    Ok(String::from_utf8(buf).expect("report is ASCII"))
}

pub fn write_json<W: Write>(rows: &[ReportRow], writer: W) -> Result<()> {
    serde_json::to_writer_pretty(writer, rows)?;
    Ok(())
}

pub fn exit_code(rows: &[ReportRow]) -> u8 {
    if rows.iter().any(|r| r.invariant_violation) {
        EXIT_INVARIANT
    } else {
        EXIT_OK
    }
}

fn format_ket(amps: &[(Vec<usize>, C64)]) -> String {
    let terms: Vec<String> = amps
        .iter()
        .map(|(occ, z)| {
            let ket: String = occ.iter().map(|n| n.to_string()).collect();
            format!("({:+.6}{:+.6}i)|{ket}>", z.re, z.im)
        })
        .collect();
    if terms.is_empty() {
        "0".to_string()
    } else {
        terms.join(" ")
    }
}

/// Table of the ideal splitter acting on the Bell states plus the branch
/// corrections of the ideal protocol. The flag is false when a norm or
/// leakage check fails.
pub fn bell_table() -> Result<(String, bool)> {
    let images = bs_action_on_bell(&BeamSplitterSpec::balanced())?;
    let mut ok = true;
    let mut out = String::new();
    out.push_str("bell  click   norm            leakage    image\n");
    for img in &images {
        let click = img
            .single_ket
            .map(|k| format!("({},{})", k[0], k[1]))
            .unwrap_or_else(|| "none".to_string());
        let support: Vec<(Vec<usize>, C64)> = img
            .image
            .register()
            .basis()
            .map(|occ| {
                let z = img.image.amplitude(&occ);
                (occ, z)
            })
            .filter(|(_, z)| z.norm() > 1e-12)
            .collect();
        ok &= (img.norm - 1.0).abs() <= 1e-12 && img.leakage <= 1e-12;
        out.push_str(&format!(
            "{:<5} {:<7} {:.12} {:.3e}  {}\n",
            img.label.to_string(),
            click,
            img.norm,
            img.leakage,
            format_ket(&support)
        ));
    }

    let probe = QubitAmplitudes::new(C64::new(0.6, 0.0), C64::new(0.8, 0.0))?;
    let dec = bell_decompose(&probe)?;
    out.push_str("\nbranch  weight  correction\n");
    for branch in &dec.branches {
        let (corr, overlap) = branch.correction(&probe)?;
        ok &= (overlap - 1.0).abs() <= 1e-12;
        out.push_str(&format!(
            "{:<7} {:.4}  {:?}\n",
            branch.label.to_string(),
            branch.weight,
            corr
        ));
    }
    Ok((out, ok))
}
