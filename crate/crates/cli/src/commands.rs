use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use log::info;
use serde_json::json;
use uada3d::adapt::{evaluate_data, order_csv, train, train_log_csv, DomainData, Monitor, TrainOutcome};
use uada3d::detector::{save_checkpoint, CheckpointMeta, GridSpec};
use uada3d::eval::{evaluate_run, gap_report, EvalResult, EvalSettings, GapReport};
use uada3d::io::{read_dataset, write_dataset};
use uada3d::synthgen::{dataset_stats, generate_dataset, Domain, DomainProfile};
use uada3d::{Error, Result};

use crate::config::{DataRef, Mode, RunConfig};

/// Generates `n` scenes of a built-in profile and writes them to `out`.
pub fn gen(profile: &str, n: usize, seed: u64, out: &Path, force: bool) -> Result<()> {
    let profile = DomainProfile::builtin(profile)?;
    let scenes = generate_dataset(&profile, n, seed)?;
    write_dataset(out, &profile, seed, &scenes, force)?;
    info!("wrote {n} {} scenes to {}", profile.name, out.display());
    Ok(())
}

/// Materializes a dataset reference, optionally replacing the profile grid.
pub fn load_data(data: &DataRef, domain: Domain, grid: Option<GridSpec>) -> Result<DomainData> {
    let (mut profile, scenes) = match data {
        DataRef::Generated { profile, scenes, seed } => (profile.clone(), generate_dataset(profile, *scenes, *seed)?),
        DataRef::Dir(dir) => {
            if !dir.join("manifest.json").exists() {
                return Err(Error::Config(format!("dataset {} does not exist", dir.display())));
            }
            let (manifest, scenes) = read_dataset(dir, domain, true)?;
            (manifest.profile, scenes)
        }
    };
    if let Some(g) = grid {
        profile.grid = g;
    }
    Ok(DomainData::new(scenes, &profile))
}

/// Everything a finished `train` run produced.
#[derive(Debug)]
pub struct TrainRun {
    pub outcome: TrainOutcome,
    pub eval: Option<EvalResult>,
}

/// Trains according to `cfg` and writes its artifacts to `cfg.out`.
pub fn train_run(cfg: &RunConfig) -> Result<TrainRun> {
    let target = || -> Result<DomainData> {
        let t = cfg.target.as_ref().ok_or_else(|| Error::Config(format!("mode {} needs a target dataset", cfg.mode)))?;
        load_data(t, Domain::Target, cfg.target_grid)
    };
    let (labeled, unlabeled) = match cfg.mode {
        // the oracle is a source-only run on target labels
        Mode::Oracle => (target()?, None),
        Mode::SourceOnly => (load_data(&cfg.source, Domain::Source, cfg.source_grid)?, None),
        _ => (load_data(&cfg.source, Domain::Source, cfg.source_grid)?, Some(target()?)),
    };
    let test = cfg.target_test.as_ref().map(|t| load_data(t, Domain::Target, cfg.target_grid)).transpose()?;
    let source_val = cfg.source_val.as_ref().map(|s| load_data(s, Domain::Source, cfg.source_grid)).transpose()?;
    let monitor = Monitor { source_val, target_eval: test };

    info!("training {} on {} labeled scenes", cfg.mode, labeled.len());
    let outcome = train(&labeled, unlabeled.as_ref(), &monitor, &cfg.train)?;
    let eval = monitor.target_eval.as_ref().map(|t| evaluate_data(&outcome.detector, t, &cfg.train)).transpose()?;

    fs::create_dir_all(&cfg.out)?;
    let meta = CheckpointMeta::new(labeled.grid, cfg.train.augment.ground_shift);
    save_checkpoint(&cfg.out.join("final.ckpt"), &outcome.detector, &meta)?;
    fs::write(cfg.out.join("train_log.csv"), train_log_csv(&outcome.log))?;
    fs::write(cfg.out.join("train_order.csv"), order_csv(&outcome.order))?;
    let mut resolved = cfg.to_json();
    resolved["skipped_labels"] = json!(outcome.skipped_labels);
    resolved["skipped_instances"] = json!(outcome.skipped_instances);
    resolved["empty_batches"] = json!(outcome.empty_batches);
    write_json(&cfg.out.join("resolved_config.json"), &resolved)?;
    if let Some(e) = &eval {
        write_eval(&cfg.out, e, Some(&cfg.to_json()))?;
    }
    Ok(TrainRun { outcome, eval })
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

/// Writes `eval.csv` and `eval.json`; the JSON embeds `config` when given.
pub fn write_eval(dir: &Path, result: &EvalResult, config: Option<&serde_json::Value>) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("eval.csv"), result.to_csv())?;
    let mut doc = json!({ "metrics": result.to_json() });
    if let Some(c) = config {
        doc["config"] = c.clone();
    }
    write_json(&dir.join("eval.json"), &doc)
}

/// Scores a checkpoint on a labeled dataset directory.
pub fn eval(checkpoint: &Path, data: &Path, out: &Path, settings: &EvalSettings) -> Result<EvalResult> {
    let result = evaluate_run(checkpoint, data, settings)?;
    let cfg = json!({
        "checkpoint": checkpoint.display().to_string(),
        "data": data.display().to_string(),
        "conf_threshold": settings.conf_threshold,
        "nms_iou": settings.nms_iou,
    });
    write_eval(out, &result, Some(&cfg))?;
    Ok(result)
}

/// Writes `dataset_stats.csv` for a labeled dataset directory.
pub fn stats(data: &Path, out: &Path) -> Result<()> {
    let (_, scenes) = read_dataset(data, Domain::Source, true)?;
    fs::create_dir_all(out)?;
    fs::write(out.join("dataset_stats.csv"), dataset_stats(&scenes).to_csv())?;
    Ok(())
}

/// Reads an evaluation CSV, or `eval.csv` inside a run directory.
pub fn read_eval(path: &Path) -> Result<EvalResult> {
    let file: PathBuf = if path.is_dir() { path.join("eval.csv") } else { path.to_path_buf() };
    let text = fs::read_to_string(&file).map_err(|e| Error::Config(format!("cannot read {}: {e}", file.display())))?;
    EvalResult::from_csv(&text)
}

/// One row of a comparison table.
#[derive(Debug, Clone, PartialEq)]
pub struct CompareRow {
    pub name: String,
    pub report: GapReport,
}

pub fn compare_rows(source: &EvalResult, oracle: &EvalResult, runs: &[(String, EvalResult)]) -> Result<Vec<CompareRow>> {
    let coverage = source.has_gt();
    for (name, r) in runs.iter().map(|(n, r)| (n.as_str(), r)).chain([("oracle", oracle)]) {
        if r.has_gt() != coverage {
            return Err(Error::Precondition(format!("{name} covers different classes than the source-only result")));
        }
    }
    let mut rows = vec![
        CompareRow { name: "source-only".into(), report: gap_report(source, source, oracle) },
        CompareRow { name: "oracle".into(), report: gap_report(oracle, source, oracle) },
    ];
    rows.extend(runs.iter().map(|(n, r)| CompareRow { name: n.clone(), report: gap_report(r, source, oracle) }));
    Ok(rows)
}

fn pct(v: f64) -> String {
    format!("{:.2}", 100.0 * v)
}

fn gap(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_string(), |g| format!("{g:.2}"))
}

/// mAP and change in percentage points, closed gap in percent.
pub fn compare_csv(rows: &[CompareRow]) -> String {
    let mut s = String::from("method,map3d,mapbev,change3d,changebev,closedgap3d,closedgapbev\n");
    for r in rows {
        let g = &r.report;
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{}",
            r.name,
            pct(g.map3d),
            pct(g.mapbev),
            pct(g.change3d),
            pct(g.changebev),
            gap(g.closedgap3d),
            gap(g.closedgapbev)
        );
    }
    s
}

pub fn compare_table(rows: &[CompareRow]) -> String {
    let header = ["method", "3D", "BEV", "change 3D", "change BEV", "closed gap 3D", "closed gap BEV"];
    let body: Vec<[String; 7]> = rows
        .iter()
        .map(|r| {
            let g = &r.report;
            [
                r.name.clone(),
                pct(g.map3d),
                pct(g.mapbev),
                format!("{:+.2}", 100.0 * g.change3d),
                format!("{:+.2}", 100.0 * g.changebev),
                gap(g.closedgap3d),
                gap(g.closedgapbev),
            ]
        })
        .collect();
    let mut width = header.map(str::len);
    for row in &body {
        for (w, cell) in width.iter_mut().zip(row) {
            *w = (*w).max(cell.len());
        }
    }
    let mut s = String::new();
    let line = |s: &mut String, cells: &[&str]| {
        let parts: Vec<String> = cells
            .iter()
            .zip(width)
            .enumerate()
            .map(|(i, (c, w))| if i == 0 { format!("{c:<w$}") } else { format!("{c:>w$}") })
            .collect();
        let _ = writeln!(s, "{}", parts.join("  ").trim_end());
    };
    line(&mut s, &header);
    let _ = writeln!(s, "{}", "-".repeat(width.iter().sum::<usize>() + 2 * (width.len() - 1)));
    for row in &body {
        line(&mut s, &row.iter().map(String::as_str).collect::<Vec<_>>());
    }
    s
}

/// Writes `compare.csv` and `compare.txt` and returns the text table.
pub fn compare(source: &Path, oracle: &Path, runs: &[(String, PathBuf)], out: &Path) -> Result<String> {
    let runs = runs.iter().map(|(n, p)| Ok((n.clone(), read_eval(p)?))).collect::<Result<Vec<_>>>()?;
    let rows = compare_rows(&read_eval(source)?, &read_eval(oracle)?, &runs)?;
    let table = compare_table(&rows);
    fs::create_dir_all(out)?;
    fs::write(out.join("compare.csv"), compare_csv(&rows))?;
    fs::write(out.join("compare.txt"), &table)?;
    Ok(table)
}

#[cfg(test)]
mod tests {
    use uada3d::eval::Counts;

    use super::*;

    fn result(ap3d: [f64; 3], apbev: [f64; 3]) -> EvalResult {
        EvalResult { ap3d: ap3d.map(Some), apbev: apbev.map(Some), counts: [Counts::default(); 3] }
    }

    #[test]
    fn table_rows_follow_gap_report() {
        let s = result([0.1596; 3], [0.2; 3]);
        let o = result([0.5284; 3], [0.2; 3]);
        let m = result([0.2689; 3], [0.3; 3]);
        let rows = compare_rows(&s, &o, &[("adapted".into(), m.clone())]).unwrap();
        assert_eq!(rows.len(), 3);
        let g = &rows[2].report;
        assert!((g.change3d - (0.2689 - 0.1596)).abs() < 1e-12);
        assert!((g.closedgap3d.unwrap() - 29.64).abs() < 0.005);
        assert_eq!(g.closedgapbev, None);
        let csv = compare_csv(&rows);
        assert!(csv.lines().nth(3).unwrap().starts_with("adapted,26.89,30.00,10.93,10.00,29.64,n/a"), "{csv}");
        let table = compare_table(&rows);
        assert_eq!(table.lines().count(), 5);
        assert!(table.contains("n/a"));
    }

    #[test]
    fn coverage_mismatch_is_rejected() {
        let s = result([0.1; 3], [0.1; 3]);
        let mut o = result([0.5; 3], [0.5; 3]);
        o.ap3d[2] = None;
        o.apbev[2] = None;
        assert!(matches!(compare_rows(&s, &o, &[]), Err(Error::Precondition(_))));
    }

    #[test]
    fn values_survive_the_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let r = result([0.25, 0.5, 0.125], [0.375, 0.75, 0.0625]);
        write_eval(dir.path(), &r, None).unwrap();
        assert_eq!(read_eval(dir.path()).unwrap(), r);
    }
}
