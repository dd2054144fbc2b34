//! Signed area deviation against a benchmark method.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::pipeline::{LeafId, ReconstructionResult};
use super::MethodId;

/// `100 * (area - benchmark) / benchmark`, or `None` when the benchmark area
/// is zero or either value is not finite.
pub fn percent_deviation(area: f64, benchmark: f64) -> Option<f64> {
    if benchmark == 0.0 || !benchmark.is_finite() || !area.is_finite() {
        return None;
    }
    Some(100.0 * (area - benchmark) / benchmark)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeafDeviation {
    pub leaf: LeafId,
    pub method: MethodId,
    pub percent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantDeviation {
    pub dataset: String,
    pub plant: String,
    pub method: MethodId,
    pub mean_percent: f64,
    pub n_leaves: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DeviationReport {
    pub benchmark: Option<MethodId>,
    pub leaves: Vec<LeafDeviation>,
    /// Means over each plant's leaves, ordered by (dataset, plant, method).
    pub plants: Vec<PlantDeviation>,
    /// Leaves without a usable benchmark area.
    pub excluded: Vec<LeafId>,
}

impl DeviationReport {
    pub fn plant_mean(&self, plant: &str, method: MethodId) -> Option<f64> {
        self.plants
            .iter()
            .find(|p| p.plant == plant && p.method == method)
            .map(|p| p.mean_percent)
    }
}

type LeafKey = (String, String, String);

fn key(id: &LeafId) -> LeafKey {
    (id.dataset.clone(), id.plant.clone(), id.leaf.clone())
}

/// Per-leaf and per-plant deviation of every successful result from the
/// benchmark result for the same leaf.
pub fn deviation_vs_benchmark(results: &[ReconstructionResult], benchmark: MethodId) -> DeviationReport {
    let mut bench: BTreeMap<LeafKey, Option<f64>> = BTreeMap::new();
    for r in results {
        bench.entry(key(&r.leaf)).or_insert(None);
        if r.method == benchmark && r.is_ok() {
            bench.insert(key(&r.leaf), r.area);
        }
    }
    let mut excluded = Vec::new();
    for (k, a) in &bench {
        if !matches!(a, Some(v) if *v != 0.0 && v.is_finite()) {
            log::warn!("leaf {}/{} has no usable {benchmark} area; excluded from deviations", k.1, k.2);
            excluded.push(LeafId { dataset: k.0.clone(), plant: k.1.clone(), leaf: k.2.clone() });
        }
    }
    let mut leaves = Vec::new();
    let mut sums: BTreeMap<(String, String, MethodId), (f64, usize)> = BTreeMap::new();
    for r in results.iter().filter(|r| r.is_ok()) {
        let Some(Some(b)) = bench.get(&key(&r.leaf)) else { continue };
        let Some(percent) = r.area.and_then(|a| percent_deviation(a, *b)) else { continue };
        leaves.push(LeafDeviation { leaf: r.leaf.clone(), method: r.method, percent });
        let e = sums.entry((r.leaf.dataset.clone(), r.leaf.plant.clone(), r.method)).or_insert((0.0, 0));
        e.0 += percent;
        e.1 += 1;
    }
    let plants = sums
        .into_iter()
        .map(|((dataset, plant, method), (sum, n))| PlantDeviation {
            dataset,
            plant,
            method,
            mean_percent: sum / n as f64,
            n_leaves: n,
        })
        .collect();
    DeviationReport { benchmark: Some(benchmark), leaves, plants, excluded }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(plant: &str, leaf: &str, method: MethodId, area: Option<f64>) -> ReconstructionResult {
        ReconstructionResult {
            leaf: LeafId { dataset: "d".into(), plant: plant.into(), leaf: leaf.into() },
            method,
            n_points: Some(10),
            area,
            cpu_s: area.map(|_| 0.1),
            peak_ram_bytes: area.map(|_| 1),
            ram_source: None,
            status: if area.is_some() { "ok".into() } else { "numerical".into() },
            message: None,
            mesh_path: None,
        }
    }

    #[test]
    fn table_values() {
        let rice = percent_deviation(19.3, 157.1).unwrap();
        assert!((rice + 87.7).abs() < 0.1, "{rice}");
        // Exact in decimal: -13780 / 157.1 and -33107 / 2461.06.
        assert!((rice * 157.1 + 13780.0).abs() < 1e-9);
        let a512 = percent_deviation(2129.99, 2461.06).unwrap();
        assert!((a512 + 13.45).abs() < 0.01, "{a512}");
        assert!((a512 * 2461.06 + 33107.0).abs() < 1e-8);
        assert_eq!(percent_deviation(5.0, 0.0), None);
    }

    #[test]
    fn benchmark_is_zero_and_means_per_plant() {
        let rows = vec![
            row("p", "a", MethodId::Poisson, Some(10.0)),
            row("p", "a", MethodId::Bpa, Some(8.0)),
            row("p", "b", MethodId::Poisson, Some(20.0)),
            row("p", "b", MethodId::Bpa, Some(25.0)),
            row("q", "c", MethodId::Poisson, Some(0.0)),
            row("q", "c", MethodId::Bpa, Some(3.0)),
            row("q", "d", MethodId::Poisson, None),
            row("q", "d", MethodId::Bpa, Some(3.0)),
        ];
        let rep = deviation_vs_benchmark(&rows, MethodId::Poisson);
        assert_eq!(rep.plant_mean("p", MethodId::Poisson), Some(0.0));
        assert!((rep.plant_mean("p", MethodId::Bpa).unwrap() - 2.5).abs() < 1e-12);
        assert_eq!(rep.plant_mean("q", MethodId::Bpa), None);
        assert_eq!(rep.excluded.len(), 2);
        assert!(rep.leaves.iter().filter(|l| l.method == MethodId::Poisson).all(|l| l.percent == 0.0));
    }

    #[test]
    fn sign_follows_ordering() {
        let up = percent_deviation(12.0, 10.0).unwrap();
        let down = percent_deviation(10.0, 12.0).unwrap();
        assert!(up > 0.0 && down < 0.0);
    }
}
