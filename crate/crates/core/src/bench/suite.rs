//! Directory-level benchmark runs and their CSV reports.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::config::BenchConfig;
use super::deviation::{deviation_vs_benchmark, DeviationReport};
use super::pipeline::{LeafId, ReconstructionResult};
use super::worker::run_leaf_file;
use super::MethodId;
use crate::error::{Error, Result};

pub const ROW_HEADER: [&str; 10] = [
    "dataset", "plant_id", "leaf_id", "method", "n_points", "area", "cpu_s", "peak_ram_mb", "status", "mesh_path",
];

pub const PLANT_HEADER: [&str; 9] = [
    "dataset",
    "plant_id",
    "method",
    "n_leaves",
    "n_ok",
    "mean_area",
    "mean_cpu_s",
    "mean_peak_ram_mb",
    "mean_deviation_pct",
];

const CLOUD_EXTENSIONS: [&str; 4] = ["xyz", "txt", "pts", "ply"];

#[derive(Debug, Clone)]
pub struct SuiteOptions {
    pub methods: Vec<MethodId>,
    pub config: BenchConfig,
    /// Binary that serves [`super::worker::WORKER_ARG`]; without it every
    /// run happens in this process and memory figures are approximate.
    pub worker_exe: Option<PathBuf>,
    pub mesh_dir: Option<PathBuf>,
    /// Concurrent worker processes. Ignored without `worker_exe`.
    pub jobs: usize,
    /// Defaults to the input directory name.
    pub dataset: Option<String>,
    pub benchmark: MethodId,
}

impl Default for SuiteOptions {
    fn default() -> Self {
        Self {
            methods: MethodId::ALL.to_vec(),
            config: BenchConfig::default(),
            worker_exe: None,
            mesh_dir: None,
            jobs: 1,
            dataset: None,
            benchmark: MethodId::Poisson,
        }
    }
}

/// Per (plant, method) means over successful leaves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantSummary {
    pub dataset: String,
    pub plant: String,
    pub method: MethodId,
    pub n_leaves: usize,
    pub n_ok: usize,
    pub mean_area: Option<f64>,
    pub mean_cpu_s: Option<f64>,
    pub mean_peak_ram_mb: Option<f64>,
    pub mean_deviation_pct: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct SuiteReport {
    /// Ordered by (plant, leaf, method).
    pub rows: Vec<ReconstructionResult>,
    pub plants: Vec<PlantSummary>,
    pub deviation: DeviationReport,
}

impl SuiteReport {
    pub fn failures(&self) -> usize {
        self.rows.iter().filter(|r| !r.is_ok()).count()
    }
}

/// Cloud files in `dir`, sorted by (plant, leaf). Stems are split on `__`.
pub fn discover_leaves(dir: &Path, dataset: &str) -> Result<Vec<(LeafId, PathBuf)>> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut out = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let ext = path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
        if !path.is_file() || !ext.is_some_and(|e| CLOUD_EXTENSIONS.contains(&e.as_str())) {
            continue;
        }
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
        out.push((LeafId::from_stem(dataset, stem), path));
    }
    if out.is_empty() {
        return Err(Error::EmptyInput(format!("no point-cloud files in {}", dir.display())));
    }
    out.sort_by(|a, b| (&a.0.plant, &a.0.leaf, &a.1).cmp(&(&b.0.plant, &b.0.leaf, &b.1)));
    Ok(out)
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// Plant means of `rows`, with deviations from `deviation`.
pub fn summarize(rows: &[ReconstructionResult], deviation: &DeviationReport) -> Vec<PlantSummary> {
    let mut groups: BTreeMap<(String, String, MethodId), Vec<&ReconstructionResult>> = BTreeMap::new();
    for r in rows {
        groups
            .entry((r.leaf.dataset.clone(), r.leaf.plant.clone(), r.method))
            .or_default()
            .push(r);
    }
    groups
        .into_iter()
        .map(|((dataset, plant, method), rs)| {
            let ok: Vec<_> = rs.iter().filter(|r| r.is_ok()).collect();
            let mean_deviation_pct = deviation
                .plants
                .iter()
                .find(|p| p.dataset == dataset && p.plant == plant && p.method == method)
                .map(|p| p.mean_percent);
            PlantSummary {
                n_leaves: rs.len(),
                n_ok: ok.len(),
                mean_area: mean(ok.iter().filter_map(|r| r.area)),
                mean_cpu_s: mean(ok.iter().filter_map(|r| r.cpu_s)),
                mean_peak_ram_mb: mean(ok.iter().filter_map(|r| r.peak_ram_mb())),
                mean_deviation_pct,
                dataset,
                plant,
                method,
            }
        })
        .collect()
}

/// Runs every method on every leaf of `dir`.
pub fn run_suite(dir: &Path, opts: &SuiteOptions) -> Result<SuiteReport> {
    if opts.methods.is_empty() {
        return Err(Error::Parameter("no methods selected".into()));
    }
    let dataset = opts.dataset.clone().unwrap_or_else(|| {
        dir.file_name().and_then(|s| s.to_str()).unwrap_or_default().to_string()
    });
    let leaves = discover_leaves(dir, &dataset)?;
    if let Some(md) = &opts.mesh_dir {
        std::fs::create_dir_all(md).map_err(|e| Error::io(md, e))?;
    }
    let tasks: Vec<(usize, MethodId)> = (0..leaves.len())
        .flat_map(|i| opts.methods.iter().map(move |&m| (i, m)))
        .collect();
    let run = |&(i, method): &(usize, MethodId)| {
        let (leaf, path) = &leaves[i];
        let mesh_out = opts.mesh_dir.as_ref().map(|d| {
            let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("leaf");
            d.join(format!("{stem}.{method}.ply"))
        });
        log::info!("{method} on {}", path.display());
        run_leaf_file(opts.worker_exe.as_deref(), method, leaf.clone(), path, &opts.config, mesh_out.as_deref())
    };
    let jobs = if opts.worker_exe.is_some() { opts.jobs.max(1) } else { 1 };
    let mut rows: Vec<ReconstructionResult> = if jobs == 1 {
        tasks.iter().map(run).collect()
    } else {
        let next = AtomicUsize::new(0);
        let slots = Mutex::new(vec![None; tasks.len()]);
        std::thread::scope(|s| {
            for _ in 0..jobs.min(tasks.len()) {
                s.spawn(|| loop {
                    let t = next.fetch_add(1, Ordering::Relaxed);
                    if t >= tasks.len() {
                        break;
                    }
                    let r = run(&tasks[t]);
                    slots.lock().expect("result slots poisoned")[t] = Some(r);
                });
            }
        });
        slots
            .into_inner()
            .expect("result slots poisoned")
            .into_iter()
            .map(|r| r.expect("every task produces a row"))
            .collect()
    };
    rows.sort_by(|a, b| (&a.leaf.plant, &a.leaf.leaf, a.method).cmp(&(&b.leaf.plant, &b.leaf.leaf, b.method)));
    let deviation = deviation_vs_benchmark(&rows, opts.benchmark);
    let plants = summarize(&rows, &deviation);
    Ok(SuiteReport { rows, plants, deviation })
}

/// Shortest decimal that parses back to the same value.
pub fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Format { line: 0, message: format!("{other:?}") },
    }
}

pub fn write_rows<W: Write>(rows: &[ReconstructionResult], w: W) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(ROW_HEADER)?;
    for r in rows {
        out.write_record([
            r.leaf.dataset.clone(),
            r.leaf.plant.clone(),
            r.leaf.leaf.clone(),
            r.method.to_string(),
            opt(r.n_points),
            r.area.map(fmt_f64).unwrap_or_default(),
            r.cpu_s.map(fmt_f64).unwrap_or_default(),
            r.peak_ram_mb().map(fmt_f64).unwrap_or_default(),
            r.status.clone(),
            r.mesh_path.as_ref().map(|p| p.display().to_string()).unwrap_or_default(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_plants<W: Write>(plants: &[PlantSummary], w: W) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(PLANT_HEADER)?;
    for p in plants {
        out.write_record([
            p.dataset.clone(),
            p.plant.clone(),
            p.method.to_string(),
            p.n_leaves.to_string(),
            p.n_ok.to_string(),
            p.mean_area.map(fmt_f64).unwrap_or_default(),
            p.mean_cpu_s.map(fmt_f64).unwrap_or_default(),
            p.mean_peak_ram_mb.map(fmt_f64).unwrap_or_default(),
            p.mean_deviation_pct.map(fmt_f64).unwrap_or_default(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// Path of the per-plant report that accompanies `rows_csv`.
pub fn plants_path(rows_csv: &Path) -> PathBuf {
    let stem = rows_csv.file_stem().and_then(|s| s.to_str()).unwrap_or("report");
    rows_csv.with_file_name(format!("{stem}_plants.csv"))
}

/// Writes the per-row CSV to `path` and the per-plant CSV beside it.
pub fn write_report(report: &SuiteReport, path: &Path) -> Result<PathBuf> {
    let open = |p: &Path| std::fs::File::create(p).map_err(|e| Error::io(p, e));
    write_rows(&report.rows, open(path)?).map_err(|e| csv_err(path, e))?;
    let plants = plants_path(path);
    write_plants(&report.plants, open(&plants)?).map_err(|e| csv_err(&plants, e))?;
    Ok(plants)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn discovery_sorts_and_skips_other_files() {
        let dir = tempfile::tempdir().unwrap();
        for name in ["b__2.xyz", "a__9.ply", "b__1.xyz", "notes.md"] {
            std::fs::write(dir.path().join(name), "0 0 0\n").unwrap();
        }
        let leaves = discover_leaves(dir.path(), "set").unwrap();
        let ids: Vec<_> = leaves.iter().map(|(l, _)| format!("{}/{}", l.plant, l.leaf)).collect();
        assert_eq!(ids, ["a/9", "b/1", "b/2"]);
        assert!(leaves.iter().all(|(l, _)| l.dataset == "set"));
    }

    #[test]
    fn empty_dir_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(run_suite(dir.path(), &SuiteOptions::default()), Err(Error::EmptyInput(_))));
    }

    #[test]
    fn failed_rows_have_empty_metrics() {
        let row = ReconstructionResult::failed(LeafId::from_stem("d", "p__l"), MethodId::Mls, Some(5), &Error::Numerical("x".into()));
        let mut buf = Vec::new();
        write_rows(&[row], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().nth(1).unwrap(), "d,p,l,mls,5,,,,numerical,");
    }

    #[test]
    fn fmt_round_trips() {
        for v in [0.1 + 0.2, 1e-300, 123456.789, std::f64::consts::PI] {
            assert_eq!(fmt_f64(v).parse::<f64>().unwrap().to_bits(), v.to_bits());
        }
    }
}
