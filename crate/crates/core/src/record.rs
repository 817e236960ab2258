//! Run records: line-delimited JSON holding everything needed to re-run a
//! gate simulation, its event trace and its final summary, plus input
//! scripts that switch the LEDs part-way through a run.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::calibration::Calibration;
use crate::config::emit_config;
use crate::gates::{Event, GateError, GateHarness, GateOutcome, GateSim, Prepared};

pub const TOOL: &str = "optoslime";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Error)]
pub enum RecordError {
    #[error("script line {line}: {message}")]
    Script { line: usize, message: String },
    #[error("record line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("record has no {0}")]
    Missing(&'static str),
    #[error("{what} digest mismatch: header says {expected}, content hashes to {actual}")]
    Digest { what: &'static str, expected: String, actual: String },
    #[error("calibration text: {0}")]
    Calibration(String),
    #[error(transparent)]
    Gate(#[from] GateError),
}

/// One input change: from `tick` on, the listed channels hold these bits.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptStep {
    pub tick: u64,
    pub inputs: BTreeMap<String, u8>,
}

/// Timed input changes with an optional stopping tick. Without `end` the
/// run continues after the last change until that epoch settles.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Script {
    pub steps: Vec<ScriptStep>,
    pub end: Option<u64>,
}

/// Parses `A=0,B=1` into a bit map.
pub fn parse_bits(text: &str) -> Result<BTreeMap<String, u8>, String> {
    let mut out = BTreeMap::new();
    for part in text.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let (k, v) = part.split_once('=').ok_or_else(|| format!("`{part}` is not NAME=BIT"))?;
        let bit = match v.trim() {
            "0" => 0,
            "1" => 1,
            other => return Err(format!("`{other}` is not 0 or 1")),
        };
        if out.insert(k.trim().to_string(), bit).is_some() {
            return Err(format!("channel {} given twice", k.trim()));
        }
    }
    if out.is_empty() {
        return Err("no inputs given".into());
    }
    Ok(out)
}

pub fn format_bits(bits: &BTreeMap<String, u8>) -> String {
    bits.iter().map(|(k, v)| format!("{k}={v}")).collect::<Vec<_>>().join(",")
}

impl Script {
    /// Reads lines of the form `<tick> A=0,B=1`, with an optional final
    /// `end <tick>`. Blank lines and `#` comments are skipped.
    pub fn parse(text: &str) -> Result<Self, RecordError> {
        let mut script = Script::default();
        for (n, raw) in text.lines().enumerate() {
            let line = n + 1;
            let err = |message: String| RecordError::Script { line, message };
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            if script.end.is_some() {
                return Err(err("nothing may follow `end`".into()));
            }
            let (head, rest) = content.split_once(char::is_whitespace).unwrap_or((content, ""));
            if head == "end" {
                let tick = rest.trim().parse::<u64>().map_err(|e| err(format!("bad end tick: {e}")))?;
                if script.steps.last().is_some_and(|s| s.tick > tick) {
                    return Err(err("end comes before the last change".into()));
                }
                script.end = Some(tick);
                continue;
            }
            let tick = head.parse::<u64>().map_err(|e| err(format!("bad tick `{head}`: {e}")))?;
            if script.steps.last().is_some_and(|s| s.tick > tick) {
                return Err(err("ticks must not decrease".into()));
            }
            let inputs = parse_bits(rest).map_err(err)?;
            script.steps.push(ScriptStep { tick, inputs });
        }
        Ok(script)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for s in &self.steps {
            out.push_str(&format!("{} {}\n", s.tick, format_bits(&s.inputs)));
        }
        if let Some(end) = self.end {
            out.push_str(&format!("end {end}\n"));
        }
        out
    }
}

/// Runs a gate from inoculation with `inputs`, applying the script's
/// changes at their ticks.
pub fn run_script(
    prepared: &Arc<Prepared>,
    inputs: &BTreeMap<String, u8>,
    script: &Script,
    seed: u64,
) -> Result<GateOutcome, GateError> {
    let mut start = inputs.clone();
    let mut steps = script.steps.as_slice();
    while let Some((first, rest)) = steps.split_first().filter(|(s, _)| s.tick == 0) {
        start.extend(first.inputs.iter().map(|(k, v)| (k.clone(), *v)));
        steps = rest;
    }
    let mut sim = GateSim::new(Arc::clone(prepared), &start, seed)?;
    for step in steps {
        sim.advance(step.tick - sim.tick());
        sim.set_inputs(&step.inputs)?;
    }
    match script.end {
        Some(end) => sim.advance(end.saturating_sub(sim.tick())),
        None => sim.run_epoch(),
    }
    Ok(sim.outcome())
}

pub fn sha256_hex(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordHeader {
    pub tool: String,
    pub version: String,
    pub seed: u64,
    pub inputs: BTreeMap<String, u8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub script: Option<Script>,
    pub harness: GateHarness,
    pub scene_digest: String,
    pub calibration_digest: String,
    /// Calibration as TOML, exactly as hashed.
    pub calibration: String,
}

/// Final summary row: the outcome without its trace, which the event rows
/// already carry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordSummary {
    pub outcome: GateOutcome,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum RecordLine {
    Header(RecordHeader),
    Event(Event),
    Summary(RecordSummary),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub header: RecordHeader,
    pub events: Vec<Event>,
    pub summary: Option<RecordSummary>,
}

impl RunRecord {
    /// Runs the gate described by the arguments and records it.
    pub fn execute(
        harness: GateHarness,
        cal: &Calibration,
        inputs: &BTreeMap<String, u8>,
        script: Option<Script>,
        seed: u64,
    ) -> Result<Self, RecordError> {
        let calibration = cal.to_toml();
        let header = RecordHeader {
            tool: TOOL.into(),
            version: VERSION.into(),
            seed,
            inputs: inputs.clone(),
            script,
            scene_digest: sha256_hex(&emit_config(&harness.scene)),
            calibration_digest: sha256_hex(&calibration),
            calibration,
            harness,
        };
        Self::from_header(header)
    }

    fn from_header(header: RecordHeader) -> Result<Self, RecordError> {
        let cal = header.calibration()?;
        let prepared = Prepared::new(header.harness.clone(), cal)?;
        let script = header.script.clone().unwrap_or_default();
        let mut outcome = run_script(&prepared, &header.inputs, &script, header.seed)?;
        let events = std::mem::take(&mut outcome.trace);
        Ok(RunRecord { header, events, summary: Some(RecordSummary { outcome }) })
    }

    pub fn to_ndjson(&self) -> String {
        let mut lines = vec![RecordLine::Header(self.header.clone())];
        lines.extend(self.events.iter().cloned().map(RecordLine::Event));
        lines.extend(self.summary.clone().map(RecordLine::Summary));
        let mut out = String::new();
        for l in &lines {
            out.push_str(&serde_json::to_string(l).expect("record lines serialise"));
            out.push('\n');
        }
        out
    }

    /// Parses a record. A truncated file yields the rows that were written;
    /// only a missing header is an error.
    pub fn parse(text: &str) -> Result<Self, RecordError> {
        let mut header = None;
        let mut events = Vec::new();
        let mut summary = None;
        for (n, raw) in text.lines().enumerate() {
            if raw.trim().is_empty() {
                continue;
            }
            let line: RecordLine =
                serde_json::from_str(raw).map_err(|e| RecordError::Malformed { line: n + 1, message: e.to_string() })?;
            match line {
                RecordLine::Header(h) if header.is_none() => header = Some(h),
                RecordLine::Header(_) => {
                    return Err(RecordError::Malformed { line: n + 1, message: "second header".into() });
                }
                RecordLine::Event(e) => {
                    if events.last().is_some_and(|p: &Event| p.tick > e.tick) {
                        return Err(RecordError::Malformed { line: n + 1, message: "events out of tick order".into() });
                    }
                    events.push(e);
                }
                RecordLine::Summary(s) => summary = Some(s),
            }
        }
        let header = header.ok_or(RecordError::Missing("header"))?;
        Ok(RunRecord { header, events, summary })
    }
}

impl RecordHeader {
    /// Checks both digests and parses the embedded calibration.
    pub fn calibration(&self) -> Result<Calibration, RecordError> {
        let actual = sha256_hex(&self.calibration);
        if actual != self.calibration_digest {
            return Err(RecordError::Digest { what: "calibration", expected: self.calibration_digest.clone(), actual });
        }
        let actual = sha256_hex(&emit_config(&self.harness.scene));
        if actual != self.scene_digest {
            return Err(RecordError::Digest { what: "scene", expected: self.scene_digest.clone(), actual });
        }
        Calibration::from_toml(&self.calibration).map_err(|e| RecordError::Calibration(e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Replay {
    pub recorded: Option<RecordSummary>,
    pub replayed: RunRecord,
}

impl Replay {
    /// The record held a summary and the re-run reproduced it exactly.
    pub fn matches(&self) -> bool {
        self.recorded.is_some() && self.recorded == self.replayed.summary
    }
}

/// Re-simulates a record from its header.
pub fn replay(record: &RunRecord) -> Result<Replay, RecordError> {
    let replayed = RunRecord::from_header(record.header.clone())?;
    Ok(Replay { recorded: record.summary.clone(), replayed })
}
