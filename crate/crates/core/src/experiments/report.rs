use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::ExperimentError;

/// Test accuracies of the three methods at one depth (`None` = unbounded).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub depth: Option<usize>,
    pub acc_student: f64,
    pub acc_gini: f64,
    /// Not computed for the unbounded comparison.
    pub acc_entropy: Option<f64>,
    /// Hash of the logit matrix the student was fitted on.
    pub logit_hash: String,
}

/// Everything an experiment run produced, minus wall-clock timings so that
/// reruns with the same config and seed serialize identically.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub dataset: String,
    pub architecture: String,
    pub seed: u64,
    pub teacher_accuracy: f64,
    pub teacher_fingerprint: String,
    pub rows: Vec<ReportRow>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Markdown,
    Plotdata,
}

impl ReportFormat {
    pub fn extension(self) -> &'static str {
        match self {
            ReportFormat::Csv => "csv",
            ReportFormat::Markdown => "md",
            ReportFormat::Plotdata => "dat",
        }
    }
}

impl FromStr for ReportFormat {
    type Err = ExperimentError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "markdown" | "md" => Ok(ReportFormat::Markdown),
            "plotdata" => Ok(ReportFormat::Plotdata),
            _ => Err(ExperimentError::Config(format!("unknown report format {s:?}"))),
        }
    }
}

fn depth_label(d: Option<usize>) -> String {
    d.map_or_else(|| "none".to_string(), |d| d.to_string())
}

impl Report {
    pub fn render(&self, format: ReportFormat) -> String {
        let mut out = String::new();
        match format {
            ReportFormat::Csv => {
                out.push_str("depth,acc_student,acc_gini,acc_entropy\n");
                for r in &self.rows {
                    let entropy = r.acc_entropy.map_or(String::new(), |v| format!("{v:.6}"));
                    writeln!(
                        out,
                        "{},{:.6},{:.6},{entropy}",
                        depth_label(r.depth),
                        r.acc_student,
                        r.acc_gini
                    )
                    .unwrap();
                }
            }
            ReportFormat::Markdown => {
                writeln!(
                    out,
                    "{} ({} teacher, test accuracy {:.4}, seed {})\n",
                    self.dataset, self.architecture, self.teacher_accuracy, self.seed
                )
                .unwrap();
                out.push_str("| Depth | Acc_student | Acc_gini | Acc_entropy |\n");
                out.push_str("|---:|---:|---:|---:|\n");
                for r in &self.rows {
                    let vals = [Some(r.acc_student), Some(r.acc_gini), r.acc_entropy];
                    let best = vals.iter().flatten().copied().fold(f64::NEG_INFINITY, f64::max);
                    write!(out, "| {} |", depth_label(r.depth)).unwrap();
                    for v in vals {
                        match v {
                            Some(v) if v == best => write!(out, " **{v:.4}** |"),
                            Some(v) => write!(out, " {v:.4} |"),
                            None => write!(out, " - |"),
                        }
                        .unwrap();
                    }
                    out.push('\n');
                }
            }
            ReportFormat::Plotdata => {
                out.push_str("# depth acc_student acc_gini acc_entropy\n");
                for r in &self.rows {
                    let entropy = r.acc_entropy.map_or("nan".to_string(), |v| format!("{v:.6}"));
                    writeln!(
                        out,
                        "{} {:.6} {:.6} {entropy}",
                        depth_label(r.depth),
                        r.acc_student,
                        r.acc_gini
                    )
                    .unwrap();
                }
            }
        }
        out
    }

    /// Writes the rendered report to `path`.
    pub fn emit(&self, format: ReportFormat, path: impl AsRef<Path>) -> Result<(), ExperimentError> {
        write_file(path.as_ref(), self.render(format).as_bytes())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    pub fn save_json(&self, path: impl AsRef<Path>) -> Result<(), ExperimentError> {
        write_file(path.as_ref(), self.to_json().as_bytes())
    }

    pub fn load_json(path: impl AsRef<Path>) -> Result<Report, ExperimentError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| ExperimentError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        serde_json::from_str(&text).map_err(|e| ExperimentError::Config(format!("{}: {e}", path.display())))
    }
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<(), ExperimentError> {
    fs::write(path, bytes).map_err(|source| ExperimentError::Io {
        path: path.to_path_buf(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn report(rows: Vec<(Option<usize>, f64, f64, Option<f64>)>) -> Report {
        Report {
            dataset: "connect4".into(),
            architecture: "connect4-mlp".into(),
            seed: 1,
            teacher_accuracy: 0.86,
            teacher_fingerprint: "ab".into(),
            rows: rows
                .into_iter()
                .map(|(depth, s, g, e)| ReportRow {
                    depth,
                    acc_student: s,
                    acc_gini: g,
                    acc_entropy: e,
                    logit_hash: "h".into(),
                })
                .collect(),
        }
    }

    #[test]
    fn five_depths_make_six_csv_lines() {
        let r = report((6..11).map(|d| (Some(d), 0.7, 0.69, Some(0.68))).collect());
        let csv = r.render(ReportFormat::Csv);
        assert_eq!(csv.lines().count(), 6);
        assert_eq!(csv.lines().nth(1).unwrap(), "6,0.700000,0.690000,0.680000");
    }

    #[test]
    fn single_row_renders_everywhere() {
        let r = report(vec![(None, 0.79, 0.77, None)]);
        assert_eq!(
            r.render(ReportFormat::Csv).lines().nth(1).unwrap(),
            "none,0.790000,0.770000,"
        );
        assert!(r
            .render(ReportFormat::Markdown)
            .contains("| none | **0.7900** | 0.7700 | - |"));
        assert_eq!(
            r.render(ReportFormat::Plotdata).lines().nth(1).unwrap(),
            "none 0.790000 0.770000 nan"
        );
    }

    #[test]
    fn bold_marks_the_row_maximum() {
        let r = report(vec![
            (Some(6), 0.70, 0.71, Some(0.69)),
            (Some(7), 0.72, 0.70, Some(0.73)),
        ]);
        let md = r.render(ReportFormat::Markdown);
        assert!(md.contains("| 6 | 0.7000 | **0.7100** | 0.6900 |"), "{md}");
        assert!(md.contains("| 7 | 0.7200 | 0.7000 | **0.7300** |"), "{md}");
    }

    #[test]
    fn json_round_trip() {
        let r = report(vec![(Some(3), 0.5, 0.25, Some(0.125))]);
        let back: Report = serde_json::from_str(&r.to_json()).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn format_names() {
        assert_eq!("csv".parse::<ReportFormat>().unwrap(), ReportFormat::Csv);
        assert_eq!("markdown".parse::<ReportFormat>().unwrap(), ReportFormat::Markdown);
        assert_eq!("plotdata".parse::<ReportFormat>().unwrap(), ReportFormat::Plotdata);
        assert!("pdf".parse::<ReportFormat>().is_err());
    }

    #[test]
    fn unwritable_path() {
        let r = report(vec![(Some(1), 0.5, 0.5, Some(0.5))]);
        assert!(r.emit(ReportFormat::Csv, "/nonexistent-dir/x.csv").is_err());
    }
}
