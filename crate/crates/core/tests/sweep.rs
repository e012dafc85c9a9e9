use std::collections::HashSet;
use std::path::Path;

use gridscale::neural::{count_flops, total_training_flops};
use gridscale::sweep::{regenerate, run_compute_scaling, run_data_scaling, Manifest, SweepConfig};
use gridscale::{ProblemKind, Regime, RunRecord};

fn read(dir: &Path, name: &str) -> String {
    std::fs::read_to_string(dir.join(name)).unwrap()
}

fn snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let manifest: Manifest = serde_json::from_str(&read(dir, "manifest.json")).unwrap();
    let mut files: Vec<_> = manifest
        .files
        .iter()
        .map(|f| (f.path.clone(), std::fs::read(dir.join(&f.path)).unwrap()))
        .collect();
    files.push(("manifest.json".into(), std::fs::read(dir.join("manifest.json")).unwrap()));
    files
}

fn flops_match(r: &RunRecord) -> bool {
    let want = total_training_flops(count_flops(&r.arch), r.dataset_size as u64, r.epochs as u64) as f64;
    r.flops_total == want
}

#[test]
fn dc_data_sweep_cardinality_fits_and_regeneration() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = SweepConfig {
        problem: ProblemKind::DC,
        regime: Regime::DnnDc,
        data_sizes: vec![100, 400, 1600, 6400],
        seeds: vec![0, 1, 2],
        arch: vec![32, 32],
        epochs: 15,
        n_test: 200,
        output_dir: dir.path().to_string_lossy().into_owned(),
        ..Default::default()
    };
    let report = run_data_scaling(&cfg).unwrap();
    assert_eq!(report.records.len(), 12);
    assert!(report.fits.len() >= 2, "{} fits", report.fits.len());
    let mae = report.fits.iter().find(|f| f.summary.metric == "mae_pg_pct").unwrap();
    assert!(mae.fit.alpha < 0.0, "alpha {}", mae.fit.alpha);
    assert_eq!(mae.fit.n_points, 4);
    assert!(report.records.iter().all(flops_match));

    let metrics = read(dir.path(), "metrics.csv");
    assert_eq!(metrics.lines().count(), 13);
    let fits = read(dir.path(), "fits.csv");
    assert!(fits.starts_with("metric,resource,a,alpha,r_squared,n_points\n"));

    // plot data agrees with the stored fit
    let plot = read(dir.path(), "plots/mae_pg_pct_vs_samples.csv");
    let rows: Vec<&str> = plot.lines().skip(1).collect();
    assert_eq!(rows.len(), mae.observations.len());
    for row in rows {
        let cols: Vec<f64> = row.split(',').skip(1).map(|v| v.parse().unwrap()).collect();
        assert!((cols[2] - mae.fit.a * cols[0].powf(mae.fit.alpha)).abs() <= 1e-12);
    }

    let before = snapshot(dir.path());
    let again = regenerate(dir.path()).unwrap();
    assert_eq!(again.records, report.records);
    assert_eq!(snapshot(dir.path()), before);
}

#[test]
fn compute_sweep_frontier_is_dominance_subset() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = SweepConfig {
        archs: vec![vec![8], vec![16, 16], vec![32]],
        epoch_grid: vec![2, 5, 10],
        dataset_size: 150,
        n_test: 50,
        designated_arch: Some(vec![16, 16]),
        output_dir: dir.path().to_string_lossy().into_owned(),
        ..Default::default()
    };
    let report = run_compute_scaling(&cfg).unwrap();
    assert_eq!(report.records.len(), 9);
    assert!(report.records.iter().all(flops_match));

    let frontier = report.frontier.as_ref().unwrap();
    let ids: HashSet<&str> = report.records.iter().map(|r| r.id.as_str()).collect();
    let runs_csv = read(dir.path(), "metrics.csv");
    for p in &frontier.envelope {
        assert!(ids.contains(p.run_id.as_str()));
        assert!(runs_csv.contains(&format!("{},", p.run_id)));
        // nothing strictly better at no more compute
        assert!(!report.records.iter().any(|r| r.flops_total <= p.flops_total
            && r.metrics.mae_pg_pct < p.best_metric));
    }
    let frontier_csv = read(dir.path(), "frontier.csv");
    let envelope_rows: Vec<&str> = frontier_csv.lines().filter(|l| l.starts_with("envelope,")).collect();
    assert_eq!(envelope_rows.len(), frontier.envelope.len());
    for (row, p) in envelope_rows.iter().zip(&frontier.envelope) {
        assert!(row.starts_with(&format!("envelope,{},", p.run_id)));
    }

    let dim = report.diminishing.as_ref().unwrap();
    assert_eq!(dim.iter().map(|r| r.epochs).collect::<Vec<_>>(), [2, 5, 10]);
    assert!(dim[0].efficiency.is_none() && dim[1].efficiency.is_some());

    let before = snapshot(dir.path());
    regenerate(dir.path()).unwrap();
    assert_eq!(snapshot(dir.path()), before);
}
