use std::collections::HashMap;
use std::path::Path;

use leafsurf::bench::plots::parse_bars;
use leafsurf::bench::{emit_plots, run_suite, write_report, BenchConfig, MethodId, SuiteOptions, SyntheticShape};
use leafsurf::geometry::{save_cloud, CloudFormat};

fn light_config() -> BenchConfig {
    BenchConfig::parse(
        "
        [poisson]
        depth = 5
        [som]
        rows = 10
        cols = 10
        epochs = 10
        [d2s]
        max_centers = 300
        alpha_grid_count = 5
        ",
    )
    .unwrap()
}

fn write_corpus(dir: &Path) {
    let leaves = [
        ("A", "1", "plane", "side=4,n=900"),
        ("A", "2", "paraboloid", "radius=2,curvature=0.2,n=900"),
        ("B", "1", "plane", "side=3,n=900,noise=0.01"),
        ("B", "2", "hole_plane", "side=4,n=900,hole_radius=0.8"),
    ];
    for (i, (plant, leaf, kind, params)) in leaves.iter().enumerate() {
        let s = SyntheticShape::from_params(kind, params).unwrap().generate(i as u64).unwrap();
        let ext = if i % 2 == 0 { "xyz" } else { "ply" };
        let path = dir.join(format!("{plant}__{leaf}.{ext}"));
        save_cloud(&s.cloud, Some(&s.normals), &path, CloudFormat::from_path(&path)).unwrap();
    }
}

fn read_csv(path: &Path) -> Vec<HashMap<String, String>> {
    let mut r = csv::Reader::from_path(path).unwrap();
    let headers = r.headers().unwrap().clone();
    r.records()
        .map(|rec| headers.iter().zip(rec.unwrap().iter()).map(|(h, v)| (h.to_string(), v.to_string())).collect())
        .collect()
}

#[test]
fn suite_counts_means_plots_and_determinism() {
    let corpus = tempfile::tempdir().unwrap();
    write_corpus(corpus.path());
    let out = tempfile::tempdir().unwrap();
    let opts = SuiteOptions { config: light_config(), dataset: Some("synthetic".into()), ..SuiteOptions::default() };

    let report = run_suite(corpus.path(), &opts).unwrap();
    assert_eq!(report.rows.len(), 36);
    assert_eq!(report.plants.len(), 18);
    assert_eq!(report.failures(), 0, "{:?}", report.rows.iter().filter(|r| !r.is_ok()).collect::<Vec<_>>());

    let rows_csv = out.path().join("rows.csv");
    let plants_csv = write_report(&report, &rows_csv).unwrap();
    let rows = read_csv(&rows_csv);
    let plants = read_csv(&plants_csv);
    assert_eq!(rows.len(), 36);
    assert_eq!(plants.len(), 18);

    // Row order is (plant, leaf, method) in canonical method order.
    let keys: Vec<(String, String, usize)> = rows
        .iter()
        .map(|r| {
            let m: MethodId = r["method"].parse().unwrap();
            (r["plant_id"].clone(), r["leaf_id"].clone(), MethodId::ALL.iter().position(|x| *x == m).unwrap())
        })
        .collect();
    let mut sorted = keys.clone();
    sorted.sort();
    assert_eq!(keys, sorted);

    // Plant means recomputed from the per-leaf CSV.
    for p in &plants {
        let areas: Vec<f64> = rows
            .iter()
            .filter(|r| r["plant_id"] == p["plant_id"] && r["method"] == p["method"])
            .map(|r| r["area"].parse().unwrap())
            .collect();
        let mean = areas.iter().sum::<f64>() / areas.len() as f64;
        let reported: f64 = p["mean_area"].parse().unwrap();
        assert!((mean - reported).abs() <= 1e-12 * mean.abs(), "{p:?}");
        if p["method"] == "poisson" {
            assert_eq!(p["mean_deviation_pct"], "0");
        }
    }

    // Chart values equal CSV values textually.
    let charts = emit_plots(&report.plants, &out.path().join("plots")).unwrap();
    let cpu_svg = std::fs::read_to_string(charts.iter().find(|p| p.ends_with("cpu.svg")).unwrap()).unwrap();
    let bars = parse_bars(&cpu_svg);
    assert_eq!(bars.len(), 18);
    for (plant, method, value) in bars {
        let row = plants.iter().find(|p| p["plant_id"] == plant && p["method"] == method).unwrap();
        assert_eq!(row["mean_cpu_s"], value);
    }

    // A rerun reproduces every area bit for bit.
    let again = run_suite(corpus.path(), &opts).unwrap();
    let a: Vec<_> = report.rows.iter().map(|r| r.area.map(f64::to_bits)).collect();
    let b: Vec<_> = again.rows.iter().map(|r| r.area.map(f64::to_bits)).collect();
    assert_eq!(a, b);
}

#[test]
fn unreadable_leaf_becomes_error_rows() {
    let corpus = tempfile::tempdir().unwrap();
    std::fs::write(corpus.path().join("P__bad.xyz"), "1 2 nan\n").unwrap();
    let s = SyntheticShape::from_params("plane", "n=400").unwrap().generate(0).unwrap();
    save_cloud(&s.cloud, None, &corpus.path().join("P__good.xyz"), CloudFormat::Xyz).unwrap();
    let opts = SuiteOptions {
        methods: vec![MethodId::Delaunay, MethodId::Bspline],
        ..SuiteOptions::default()
    };
    let report = run_suite(corpus.path(), &opts).unwrap();
    assert_eq!(report.rows.len(), 4);
    let bad: Vec<_> = report.rows.iter().filter(|r| r.leaf.leaf == "bad").collect();
    assert!(bad.iter().all(|r| r.status == "format" && r.area.is_none() && r.cpu_s.is_none()));
    assert_eq!(report.failures(), 2);
}
