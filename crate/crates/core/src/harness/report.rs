use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::config::Condition;
use super::HarnessError;

/// One evaluated condition of one model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub model: String,
    pub noise: String,
    /// JSON has no infinity, so an infinite SNR is written as `"inf"`.
    #[serde(with = "snr_serde")]
    pub snr_db: Option<f64>,
    pub enhancement: bool,
    pub accuracy_pct: f64,
    pub top_k_pct: f64,
    pub correct: u64,
    pub top_k_correct: u64,
    pub total: u64,
    /// Utterances whose best score was shared by several labels.
    pub ties: u64,
    pub config_hash: String,
}

mod snr_serde {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Number(f64),
        Text(String),
    }

    pub fn serialize<S: Serializer>(v: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
        match v {
            Some(x) if x.is_infinite() => {
                Repr::Text(if *x > 0.0 { "inf" } else { "-inf" }.into()).serialize(s)
            }
            Some(x) => Repr::Number(*x).serialize(s),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<f64>, D::Error> {
        match Option::<Repr>::deserialize(d)? {
            None => Ok(None),
            Some(Repr::Number(x)) => Ok(Some(x)),
            Some(Repr::Text(t)) => match t.as_str() {
                "inf" => Ok(Some(f64::INFINITY)),
                "-inf" => Ok(Some(f64::NEG_INFINITY)),
                other => Err(serde::de::Error::custom(format!(
                    "invalid snr_db `{other}`"
                ))),
            },
        }
    }
}

impl ReportRow {
    pub fn condition(&self) -> Condition {
        Condition {
            noise: (self.noise != "clean").then(|| self.noise.clone()),
            snr_db: self.snr_db,
            enhancement: self.enhancement,
        }
    }

    pub fn condition_label(&self) -> String {
        match self.snr_db {
            Some(snr) => format!("{}@{snr}dB", self.noise),
            None => self.noise.clone(),
        }
    }

    pub fn series(&self) -> String {
        if self.enhancement {
            format!("{}+enh", self.model)
        } else {
            self.model.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub seed: u64,
    pub speakers: usize,
    pub test_utterances: usize,
    pub top_k: usize,
    pub repeats: usize,
}

/// Accuracy difference of a model against the baseline on one condition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Delta {
    pub model: String,
    pub condition: String,
    pub enhancement: bool,
    pub accuracy_delta_pts: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub metadata: RunMetadata,
    pub rows: Vec<ReportRow>,
    #[serde(default)]
    pub deltas: Vec<Delta>,
}

impl MetricsReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn from_json(s: &str) -> Result<Self, HarnessError> {
        serde_json::from_str(s).map_err(|e| HarnessError::Data(format!("metrics report: {e}")))
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self, HarnessError> {
        let path = path.as_ref();
        Self::from_json(&std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?)
    }

    pub fn row(&self, model: &str, condition: &Condition) -> Option<&ReportRow> {
        self.rows
            .iter()
            .find(|r| r.model == model && &r.condition() == condition)
    }

    /// Concatenates per-model reports and records accuracy deltas against
    /// the `baseline` model where it is present.
    pub fn combine(reports: &[MetricsReport]) -> Result<Self, HarnessError> {
        let first = reports
            .first()
            .ok_or_else(|| HarnessError::Data("no reports to combine".into()))?;
        for r in reports {
            if r.metadata.seed != first.metadata.seed
                || r.metadata.test_utterances != first.metadata.test_utterances
            {
                return Err(HarnessError::Data(
                    "reports come from different test sets".into(),
                ));
            }
        }
        let rows: Vec<ReportRow> = reports
            .iter()
            .flat_map(|r| r.rows.iter().cloned())
            .collect();
        let mut out = Self {
            metadata: first.metadata.clone(),
            rows,
            deltas: Vec::new(),
        };
        out.deltas = out.baseline_deltas();
        Ok(out)
    }

    fn baseline_deltas(&self) -> Vec<Delta> {
        self.rows
            .iter()
            .filter(|r| r.model != "baseline")
            .filter_map(|r| {
                let base = self.row("baseline", &r.condition())?;
                Some(Delta {
                    model: r.model.clone(),
                    condition: r.condition_label(),
                    enhancement: r.enhancement,
                    accuracy_delta_pts: r.accuracy_pct - base.accuracy_pct,
                })
            })
            .collect()
    }

    /// Human-readable aligned table.
    pub fn to_table(&self) -> String {
        let k = self.metadata.top_k;
        let header = [
            "model".to_string(),
            "noise".into(),
            "snr_db".into(),
            "enh".into(),
            "acc_%".into(),
            format!("top{k}_%"),
            "n".into(),
            "ties".into(),
        ];
        let mut cells = vec![header.to_vec()];
        for r in &self.rows {
            cells.push(vec![
                r.model.clone(),
                r.noise.clone(),
                r.snr_db.map_or("-".into(), |s| format!("{s}")),
                if r.enhancement { "yes" } else { "no" }.into(),
                format!("{:.2}", r.accuracy_pct),
                format!("{:.2}", r.top_k_pct),
                r.total.to_string(),
                r.ties.to_string(),
            ]);
        }
        let widths: Vec<usize> = (0..header.len())
            .map(|c| cells.iter().map(|row| row[c].len()).max().unwrap_or(0))
            .collect();
        let mut out = String::new();
        for row in &cells {
            let line: Vec<String> = row
                .iter()
                .zip(&widths)
                .enumerate()
                .map(|(c, (v, w))| {
                    if c < 4 {
                        format!("{v:<w$}")
                    } else {
                        format!("{v:>w$}")
                    }
                })
                .collect();
            writeln!(out, "{}", line.join("  ").trim_end()).unwrap();
        }
        if !self.deltas.is_empty() {
            writeln!(out, "\naccuracy vs baseline (points)").unwrap();
            for d in &self.deltas {
                let enh = if d.enhancement { " +enh" } else { "" };
                writeln!(
                    out,
                    "  {:<12} {:<16} {:+.2}",
                    d.model,
                    format!("{}{enh}", d.condition),
                    d.accuracy_delta_pts
                )
                .unwrap();
            }
        }
        out
    }
}

/// Averages repeated runs row by row. Counts are summed, percentages are
/// the mean of the per-run percentages.
pub fn mean_report(runs: &[MetricsReport]) -> Result<MetricsReport, HarnessError> {
    let first = runs
        .first()
        .ok_or_else(|| HarnessError::Data("no runs to average".into()))?;
    let mut rows = first.rows.clone();
    for run in &runs[1..] {
        if run.rows.len() != rows.len() {
            return Err(HarnessError::Data(
                "repeated runs have different conditions".into(),
            ));
        }
        for (acc, r) in rows.iter_mut().zip(&run.rows) {
            if acc.model != r.model || acc.condition() != r.condition() {
                return Err(HarnessError::Data(
                    "repeated runs have different conditions".into(),
                ));
            }
            acc.accuracy_pct += r.accuracy_pct;
            acc.top_k_pct += r.top_k_pct;
            acc.correct += r.correct;
            acc.top_k_correct += r.top_k_correct;
            acc.total += r.total;
            acc.ties += r.ties;
        }
    }
    let k = runs.len() as f64;
    for r in &mut rows {
        r.accuracy_pct /= k;
        r.top_k_pct /= k;
    }
    let mut out = MetricsReport {
        metadata: RunMetadata {
            repeats: runs.len(),
            ..first.metadata.clone()
        },
        rows,
        deltas: Vec::new(),
    };
    out.deltas = out.baseline_deltas();
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotPoint {
    pub series: String,
    pub condition: String,
    pub accuracy_pct: f64,
    pub top_k_pct: f64,
}

/// CSV with one series per model/enhancement combination and one point per
/// condition. Series appear in the order of their first report row.
pub fn emit_plot_data(report: &MetricsReport) -> Result<String, HarnessError> {
    if report.rows.is_empty() {
        return Err(HarnessError::Data("cannot plot an empty report".into()));
    }
    let mut series: Vec<String> = Vec::new();
    for r in &report.rows {
        let s = r.series();
        if !series.contains(&s) {
            series.push(s);
        }
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    for s in &series {
        for r in report.rows.iter().filter(|r| &r.series() == s) {
            w.serialize(PlotPoint {
                series: s.clone(),
                condition: r.condition_label(),
                accuracy_pct: r.accuracy_pct,
                top_k_pct: r.top_k_pct,
            })
            .map_err(|e| HarnessError::Data(e.to_string()))?;
        }
    }
    let bytes = w
        .into_inner()
        .map_err(|e| HarnessError::Data(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

pub fn parse_plot_data(text: &str) -> Result<Vec<PlotPoint>, HarnessError> {
    csv::Reader::from_reader(text.as_bytes())
        .deserialize()
        .collect::<Result<_, _>>()
        .map_err(|e| HarnessError::Data(format!("plot data: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(model: &str, noise: &str, snr: Option<f64>, enh: bool, acc: f64) -> ReportRow {
        ReportRow {
            model: model.into(),
            noise: noise.into(),
            snr_db: snr,
            enhancement: enh,
            accuracy_pct: acc,
            top_k_pct: 100.0,
            correct: 1,
            top_k_correct: 2,
            total: 3,
            ties: 0,
            config_hash: "00".into(),
        }
    }

    fn report(rows: Vec<ReportRow>) -> MetricsReport {
        MetricsReport {
            metadata: RunMetadata {
                seed: 1,
                speakers: 2,
                test_utterances: 3,
                top_k: 5,
                repeats: 1,
            },
            rows,
            deltas: vec![],
        }
    }

    fn three_models() -> MetricsReport {
        let conds = [
            ("clean", None),
            ("white", Some(0.0)),
            ("white", Some(10.0)),
            ("babble", Some(0.0)),
            ("babble", Some(10.0)),
            ("gun", Some(5.0)),
            ("volvo", Some(5.0)),
            ("factory", Some(5.0)),
        ];
        let mut rows = Vec::new();
        for (m, model) in ["baseline", "mlt-n2", "mlt-n3"].iter().enumerate() {
            for (c, (noise, snr)) in conds.iter().enumerate() {
                rows.push(row(
                    model,
                    noise,
                    *snr,
                    false,
                    100.0 / 3.0 + (m * 8 + c) as f64 * 0.1,
                ));
            }
        }
        report(rows)
    }

    #[test]
    fn plot_series_and_round_trip() {
        let rep = three_models();
        let text = emit_plot_data(&rep).unwrap();
        let pts = parse_plot_data(&text).unwrap();
        assert_eq!(pts.len(), 24);
        let mut series: Vec<&str> = pts.iter().map(|p| p.series.as_str()).collect();
        series.dedup();
        assert_eq!(series, ["baseline", "mlt-n2", "mlt-n3"]);
        for (p, r) in pts.iter().zip(&rep.rows) {
            assert_eq!(p.accuracy_pct, r.accuracy_pct);
        }
        assert_eq!(emit_plot_data(&rep).unwrap(), text);
        assert!(emit_plot_data(&report(vec![])).is_err());
    }

    #[test]
    fn combine_records_deltas() {
        let a = report(vec![row("baseline", "clean", None, false, 80.0)]);
        let b = report(vec![row("mlt-n2", "clean", None, false, 85.5)]);
        let c = MetricsReport::combine(&[a, b]).unwrap();
        assert_eq!(c.deltas.len(), 1);
        assert_eq!(c.deltas[0].accuracy_delta_pts, 5.5);
        assert!(c.to_table().contains("+5.50"));
        assert_eq!(MetricsReport::from_json(&c.to_json()).unwrap(), c);
    }

    #[test]
    fn mean_of_repeats() {
        let a = report(vec![row("baseline", "clean", None, false, 80.0)]);
        let b = report(vec![row("baseline", "clean", None, false, 90.0)]);
        let m = mean_report(&[a, b]).unwrap();
        assert_eq!(m.rows[0].accuracy_pct, 85.0);
        assert_eq!(m.rows[0].total, 6);
        assert_eq!(m.metadata.repeats, 2);
    }
}
