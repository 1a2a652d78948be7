//! `metrics.json`, per-plot CSV tables and PNG renderings.

use std::path::{Path, PathBuf};

use super::EvaluationReport;
use crate::plot::{self, Series};
use crate::{Error, Result};

pub const METRICS_FILE: &str = "metrics.json";

pub const PNG_ARTIFACTS: [&str; 7] = [
    "severity_confusion_matrix.png",
    "severity_f1_bar.png",
    "type_f1_bar.png",
    "type_roc.png",
    "type_pr.png",
    "type_cooccurrence.png",
    "misclassified_wordcloud.png",
];

fn csv_writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    csv::Writer::from_path(path).map_err(|e| csv_err(path, e))
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    Error::io(path, std::io::Error::other(e.to_string()))
}

fn write_rows(path: &Path, header: &[String], rows: impl IntoIterator<Item = Vec<String>>) -> Result<PathBuf> {
    let mut w = csv_writer(path)?;
    w.write_record(header).map_err(|e| csv_err(path, e))?;
    for row in rows {
        w.write_record(&row).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(path.to_path_buf())
}

fn strings(xs: &[&str]) -> Vec<String> {
    xs.iter().map(|s| s.to_string()).collect()
}

fn matrix_csv(path: &Path, corner: &str, rows: &[String], cols: &[String], cells: &[Vec<u64>]) -> Result<PathBuf> {
    let mut header = vec![corner.to_string()];
    header.extend(cols.iter().cloned());
    write_rows(
        path,
        &header,
        rows.iter().zip(cells).map(|(label, row)| {
            let mut r = vec![label.clone()];
            r.extend(row.iter().map(|v| v.to_string()));
            r
        }),
    )
}

pub fn write_metrics(report: &EvaluationReport, path: &Path) -> Result<()> {
    std::fs::write(path, serde_json::to_vec_pretty(report)?).map_err(|e| Error::io(path, e))
}

pub fn load_metrics(path: &Path) -> Result<EvaluationReport> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let report: EvaluationReport = serde_json::from_slice(&bytes)?;
    if report.schema_version != super::METRICS_SCHEMA_VERSION {
        return Err(Error::Version {
            found: report.schema_version,
            expected: super::METRICS_SCHEMA_VERSION,
        });
    }
    Ok(report)
}

/// Writes `metrics.json`, one CSV per plot and the seven PNGs into `dir`.
pub fn render_artifacts(report: &EvaluationReport, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let sev_names = &report.severity_names;
    let type_names = &report.type_names;
    let sev = &report.severity;
    let ty = &report.types;
    let mut out = Vec::new();

    let metrics = dir.join(METRICS_FILE);
    write_metrics(report, &metrics)?;
    out.push(metrics);

    let confusion: Vec<Vec<u64>> = sev.confusion.iter().map(|r| r.to_vec()).collect();
    out.push(matrix_csv(&dir.join("severity_confusion_matrix.csv"), "true\\predicted", sev_names, sev_names, &confusion)?);
    let path = dir.join("severity_confusion_matrix.png");
    plot::heatmap(&path, "Severity confusion matrix", sev_names, sev_names, &confusion, "Predicted", "True")?;
    out.push(path);

    out.push(write_rows(
        &dir.join("severity_f1_bar.csv"),
        &strings(&["class", "precision", "recall", "f1"]),
        (0..sev_names.len()).map(|c| {
            vec![
                sev_names[c].clone(),
                sev.per_class_precision[c].to_string(),
                sev.per_class_recall[c].to_string(),
                sev.per_class_f1[c].to_string(),
            ]
        }),
    )?);
    let path = dir.join("severity_f1_bar.png");
    plot::bar_chart(&path, "Per-class severity F1", sev_names, &sev.per_class_f1, "F1")?;
    out.push(path);

    out.push(write_rows(
        &dir.join("type_f1_bar.csv"),
        &strings(&["type", "f1", "roc_auc", "pr_auc"]),
        type_names.iter().enumerate().map(|(j, name)| {
            let auc = |c: &super::Curve| c.auc.map(|a| a.to_string()).unwrap_or_default();
            vec![name.clone(), ty.per_type_f1[j].to_string(), auc(&ty.roc[j]), auc(&ty.pr[j])]
        }),
    )?);
    let path = dir.join("type_f1_bar.png");
    plot::bar_chart(&path, "Per-type F1", type_names, &ty.per_type_f1, "F1")?;
    out.push(path);

    for (file, curves, title, (xd, yd)) in [
        ("type_roc", &ty.roc, "Type ROC curves", ("False positive rate", "True positive rate")),
        ("type_pr", &ty.pr, "Type precision-recall curves", ("Recall", "Precision")),
    ] {
        let (xh, yh) = if file == "type_roc" { ("fpr", "tpr") } else { ("recall", "precision") };
        out.push(write_rows(
            &dir.join(format!("{file}.csv")),
            &strings(&["type", xh, yh]),
            type_names.iter().zip(curves.iter()).flat_map(|(name, c)| {
                c.points.iter().map(move |p| vec![name.clone(), p[0].to_string(), p[1].to_string()])
            }),
        )?);
        let mut series: Vec<Series> = type_names
            .iter()
            .zip(curves.iter())
            .filter_map(|(name, c)| {
                c.auc.map(|auc| Series {
                    name: format!("{name} (AUC {auc:.2})"),
                    points: c.points.iter().map(|p| (p[0], p[1])).collect(),
                })
            })
            .collect();
        // Fixed unit square so curves remain comparable across runs.
        series.push(Series {
            name: String::new(),
            points: vec![(0.0, 0.0), (1.0, 1.0)],
        });
        let path = dir.join(format!("{file}.png"));
        plot::line_chart(&path, title, &series, xd, yd)?;
        out.push(path);
    }

    let co: Vec<Vec<u64>> = ty.cooccurrence.iter().map(|r| r.to_vec()).collect();
    out.push(matrix_csv(&dir.join("type_cooccurrence.csv"), "type", type_names, type_names, &co)?);
    let path = dir.join("type_cooccurrence.png");
    plot::heatmap(&path, "Predicted type co-occurrence", type_names, type_names, &co, "", "")?;
    out.push(path);

    let words: Vec<(String, u64)> = report
        .misclassified_words
        .entries
        .iter()
        .map(|e| (e.token.clone(), e.count))
        .collect();
    out.push(write_rows(
        &dir.join("misclassified_wordcloud.csv"),
        &strings(&["token", "count"]),
        words.iter().map(|(t, c)| vec![t.clone(), c.to_string()]),
    )?);
    let path = dir.join("misclassified_wordcloud.png");
    plot::word_cloud(&path, "Words in misclassified descriptions", &words)?;
    out.push(path);

    Ok(out)
}
