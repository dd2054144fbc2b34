//! Child-process measurement.
//!
//! The parent serializes a [`WorkerRequest`] to the child's stdin; the child
//! (any binary that calls [`serve`] when given [`WORKER_ARG`]) runs the
//! pipeline once and prints a [`ReconstructionResult`] as one JSON line.
//! Each measurement therefore starts from a fresh address space.

use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};

use serde::{Deserialize, Serialize};

use super::config::BenchConfig;
use super::pipeline::{run_in_process, LeafId, LeafInput, ReconstructionResult};
use super::MethodId;
use crate::error::{Error, Result};

/// First argument that switches a binary into worker mode.
pub const WORKER_ARG: &str = "__measure";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WorkerRequest {
    pub method: MethodId,
    pub leaf: LeafId,
    pub input: PathBuf,
    pub config: BenchConfig,
    pub mesh_out: Option<PathBuf>,
}

/// Worker side: reads one request from `input`, writes one result to `output`.
pub fn serve(mut input: impl Read, mut output: impl Write) -> Result<()> {
    let mut text = String::new();
    input
        .read_to_string(&mut text)
        .map_err(|e| Error::Worker(format!("reading request: {e}")))?;
    let req: WorkerRequest =
        serde_json::from_str(&text).map_err(|e| Error::Worker(format!("bad request: {e}")))?;
    let result = match LeafInput::load(&req.input) {
        Ok(leaf_input) => run_in_process(req.method, req.leaf, &leaf_input, &req.config, req.mesh_out.as_deref(), false),
        Err(e) => ReconstructionResult::failed(req.leaf, req.method, None, &e),
    };
    let line = serde_json::to_string(&result).map_err(|e| Error::Worker(e.to_string()))?;
    writeln!(output, "{line}").map_err(|e| Error::Worker(format!("writing result: {e}")))
}

/// Parent side: runs one request in a child of `exe` and returns its result.
/// Crashes and protocol errors become a failed result tagged `worker`.
pub fn run_isolated(exe: &Path, req: &WorkerRequest) -> ReconstructionResult {
    spawn(exe, req).unwrap_or_else(|e| ReconstructionResult::failed(req.leaf.clone(), req.method, None, &e))
}

fn spawn(exe: &Path, req: &WorkerRequest) -> Result<ReconstructionResult> {
    let payload = serde_json::to_string(req).map_err(|e| Error::Worker(e.to_string()))?;
    let mut child = Command::new(exe)
        .arg(WORKER_ARG)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .map_err(|e| Error::Worker(format!("cannot start {}: {e}", exe.display())))?;
    child
        .stdin
        .take()
        .ok_or_else(|| Error::Worker("child stdin unavailable".into()))?
        .write_all(payload.as_bytes())
        .map_err(|e| Error::Worker(format!("sending request: {e}")))?;
    let out = child.wait_with_output().map_err(|e| Error::Worker(e.to_string()))?;
    let stdout = String::from_utf8_lossy(&out.stdout);
    let last = stdout.lines().rev().find(|l| l.trim_start().starts_with('{'));
    match last {
        Some(line) if out.status.success() => {
            serde_json::from_str(line).map_err(|e| Error::Worker(format!("bad reply: {e}")))
        }
        _ => {
            let stderr = String::from_utf8_lossy(&out.stderr);
            let tail: String = stderr.lines().rev().take(3).collect::<Vec<_>>().join(" | ");
            Err(Error::Worker(format!("child exited with {}: {tail}", out.status)))
        }
    }
}

/// Runs one leaf file either in a child of `exe` or, without one, in this
/// process.
pub fn run_leaf_file(
    exe: Option<&Path>,
    method: MethodId,
    leaf: LeafId,
    input: &Path,
    cfg: &BenchConfig,
    mesh_out: Option<&Path>,
) -> ReconstructionResult {
    match exe {
        Some(exe) => run_isolated(
            exe,
            &WorkerRequest {
                method,
                leaf,
                input: input.to_path_buf(),
                config: cfg.clone(),
                mesh_out: mesh_out.map(Path::to_path_buf),
            },
        ),
        None => match LeafInput::load(input) {
            Ok(li) => run_in_process(method, leaf, &li, cfg, mesh_out, true),
            Err(e) => ReconstructionResult::failed(leaf, method, None, &e),
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn serve_round_trips_through_json() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p__l.xyz");
        let mut text = String::new();
        for j in 0..20 {
            for i in 0..20 {
                text.push_str(&format!("{} {} 0\n", i as f64 / 19.0, j as f64 / 19.0));
            }
        }
        std::fs::write(&path, text).unwrap();
        let req = WorkerRequest {
            method: MethodId::Delaunay,
            leaf: LeafId::from_stem("d", "p__l"),
            input: path,
            config: BenchConfig::parse("preprocess.denoise = false").unwrap(),
            mesh_out: None,
        };
        let mut out = Vec::new();
        serve(serde_json::to_string(&req).unwrap().as_bytes(), &mut out).unwrap();
        let res: ReconstructionResult = serde_json::from_slice(&out).unwrap();
        assert!(res.is_ok(), "{res:?}");
        assert!((res.area.unwrap() - 1.0).abs() < 1e-6);
        assert_eq!(res.n_points, Some(400));
    }

    #[test]
    fn missing_input_is_an_io_row() {
        let req = WorkerRequest {
            method: MethodId::Som,
            leaf: LeafId::default(),
            input: "/nonexistent/x.xyz".into(),
            config: BenchConfig::default(),
            mesh_out: None,
        };
        let mut out = Vec::new();
        serve(serde_json::to_string(&req).unwrap().as_bytes(), &mut out).unwrap();
        let res: ReconstructionResult = serde_json::from_slice(&out).unwrap();
        assert_eq!(res.status, "io");
    }

    #[test]
    fn missing_executable_is_a_worker_row() {
        let req = WorkerRequest {
            method: MethodId::Som,
            leaf: LeafId::default(),
            input: "x.xyz".into(),
            config: BenchConfig::default(),
            mesh_out: None,
        };
        let res = run_isolated(Path::new("/nonexistent/leafsurf"), &req);
        assert_eq!(res.status, "worker");
    }
}
