//! File traces written while experiments run: gate traces as JSON lines,
//! localization rounds and pose-stream frames as CSV.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use utg_core::experiment::RoundLog;
use utg_core::gate::{TraceRecord, WalkInResult};
use utg_core::{Condition, Pose};

use crate::pipeline::Observer;
use crate::report::GatePolicyKind;

#[derive(Serialize)]
struct GateLine<'a> {
    policy: GatePolicyKind,
    pose: Pose,
    walk_in: usize,
    #[serde(flatten)]
    record: &'a TraceRecord,
}

/// Observer that writes traces into a directory and echoes progress to
/// stderr. Write errors are kept and reported by [`TraceWriter::finish`].
pub struct TraceWriter {
    gate: Option<BufWriter<File>>,
    rounds: Option<csv::Writer<File>>,
    frames: Option<csv::Writer<File>>,
    dir: PathBuf,
    verbose: bool,
    error: Option<std::io::Error>,
}

impl TraceWriter {
    pub fn new(dir: &Path, verbose: bool) -> std::io::Result<Self> {
        std::fs::create_dir_all(dir)?;
        Ok(Self { gate: None, rounds: None, frames: None, dir: dir.to_path_buf(), verbose, error: None })
    }

    fn keep(&mut self, r: std::io::Result<()>) {
        if let Err(e) = r {
            self.error.get_or_insert(e);
        }
    }

    fn csv(dir: &Path, name: &str, header: &[&str]) -> std::io::Result<csv::Writer<File>> {
        let mut w = csv::Writer::from_path(dir.join(name))?;
        w.write_record(header)?;
        Ok(w)
    }

    /// Flushes every trace and returns the first error met while writing.
    pub fn finish(mut self) -> std::io::Result<()> {
        if let Some(w) = self.gate.as_mut() {
            let r = w.flush();
            self.keep(r);
        }
        for w in [self.rounds.as_mut(), self.frames.as_mut()].into_iter().flatten() {
            if let Err(e) = w.flush() {
                self.error.get_or_insert(e);
            }
        }
        self.error.map_or(Ok(()), Err)
    }
}

impl Observer for TraceWriter {
    fn log(&mut self, message: &str) {
        if self.verbose {
            eprintln!("{message}");
        }
    }

    fn epoch(&mut self, model: &str, epoch: usize, loss: f64) {
        if self.verbose {
            eprintln!("  {model} epoch {epoch}: loss {loss:.4}");
        }
    }

    fn localization_walk_in(&mut self, scenario: Condition, rounds: &[RoundLog]) {
        if self.rounds.is_none() {
            let header = [
                "scenario", "walk_in", "round", "t_ms", "truth_x", "truth_y", "scheme", "x", "y", "accepted", "error_cm",
                "anchors",
            ];
            match Self::csv(&self.dir, "localization_rounds.csv", &header) {
                Ok(w) => self.rounds = Some(w),
                Err(e) => return self.keep(Err(e)),
            }
        }
        let w = self.rounds.as_mut().expect("opened above");
        let mut result = Ok(());
        'outer: for r in rounds {
            for f in &r.fixes {
                let anchors: Vec<String> = f.used_anchors.iter().map(|a| a.to_string()).collect();
                let row = [
                    scenario.as_str().to_string(),
                    r.walk_in.to_string(),
                    r.round_id.to_string(),
                    r.t_ms.to_string(),
                    r.truth.x.to_string(),
                    r.truth.y.to_string(),
                    f.scheme.as_str().to_string(),
                    f.position.x.to_string(),
                    f.position.y.to_string(),
                    f.accepted.to_string(),
                    f.error_cm.to_string(),
                    anchors.join(" "),
                ];
                if let Err(e) = w.write_record(&row) {
                    result = Err(e.into());
                    break 'outer;
                }
            }
        }
        self.keep(result);
    }

    fn pose_frame(&mut self, pose: Pose, frame: usize, gated: Condition, predicted: Pose, p: f64) {
        if self.frames.is_none() {
            match Self::csv(&self.dir, "pose_stream.csv", &["pose", "frame", "condition", "predicted", "p_pocket"]) {
                Ok(w) => self.frames = Some(w),
                Err(e) => return self.keep(Err(e)),
            }
        }
        let w = self.frames.as_mut().expect("opened above");
        let row = [pose.as_str().to_string(), frame.to_string(), gated.as_str().to_string(), predicted.as_str().to_string(), p.to_string()];
        let r = w.write_record(&row).map_err(Into::into);
        self.keep(r);
    }

    fn gate_walk_in(&mut self, policy: GatePolicyKind, pose: Pose, walk_in: usize, result: &WalkInResult) {
        if self.gate.is_none() {
            match File::create(self.dir.join("gate_traces.jsonl")) {
                Ok(f) => self.gate = Some(BufWriter::new(f)),
                Err(e) => return self.keep(Err(e)),
            }
        }
        let w = self.gate.as_mut().expect("opened above");
        let mut r = Ok(());
        for record in &result.records {
            let line = serde_json::to_string(&GateLine { policy, pose, walk_in, record }).expect("trace serializes");
            if let Err(e) = writeln!(w, "{line}") {
                r = Err(e);
                break;
            }
        }
        self.keep(r);
    }
}
