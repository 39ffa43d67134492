use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use dyntok::curriculum::read_run;
use dyntok::metrics::{group_matrix, write_group_csv, write_length_csv, write_scaling_csv, Series};
use dyntok::{fit_slope, improvement_table};
use serde_json::json;

use crate::write_file;

fn slope(points: &[(usize, f64)]) -> serde_json::Value {
    match fit_slope(points) {
        Ok(f) => json!({"slope": f.slope, "intercept": f.intercept, "r2": f.r2}),
        Err(_) => serde_json::Value::Null,
    }
}

/// Writes scaling.csv, per_length.csv, groups.csv and summary.json.
pub fn run(run_dir: &Path, out: &Path) -> Result<()> {
    let run = read_run(run_dir)?;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;

    let curriculum: Vec<(usize, f64)> = run
        .records
        .iter()
        .filter_map(|r| r.validation_bpc.map(|b| (r.vocab_size, b)))
        .collect();
    let mut series = vec![Series {
        name: "curriculum".into(),
        points: curriculum.clone(),
    }];
    let baseline: Option<Vec<(usize, f64)>> = run.baseline.as_ref().map(|b| {
        b.iter()
            .filter_map(|r| r.validation_bpc.map(|v| (r.vocab_size, v)))
            .collect()
    });
    if let Some(points) = &baseline {
        series.push(Series {
            name: "compute_matched".into(),
            points: points.clone(),
        });
    }
    write_scaling_csv(&series, out.join("scaling.csv"))?;

    let reports: Vec<_> = run.records.iter().filter_map(|r| r.report.clone()).collect();
    if let Some(last) = reports.last() {
        write_length_csv(last, out.join("per_length.csv"))?;
    }
    write_group_csv(&group_matrix(&reports), out.join("groups.csv"))?;

    let improvements = match &baseline {
        Some(b) if b.len() == curriculum.len() => {
            let a: Vec<f64> = curriculum.iter().map(|p| p.1).collect();
            let c: Vec<f64> = b.iter().map(|p| p.1).collect();
            Some(improvement_table(&a, &c)?)
        }
        _ => None,
    };
    let summary = json!({
        "curriculum": slope(&curriculum),
        "compute_matched": baseline.as_deref().map(slope),
        "improvement_percent": improvements,
        "final_bpc_len_ge_4": reports.last().and_then(|r| r.bpc_for_lengths_at_least(4)),
        "final_bpc_len_1": reports.last().and_then(|r| r.per_length.get(&1).map(|s| s.bpc)),
    });
    let mut text = serde_json::to_string_pretty(&summary)?;
    text.push('\n');
    write_file(&out.join("summary.json"), text.as_bytes())?;
    print!("{text}");
    Ok(())
}
