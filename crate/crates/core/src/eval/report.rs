use std::fmt::Write as _;

use super::index::CandidateOutcome;
use super::roc::RocCurve;

/// Column order of [`EvalReport::to_csv`].
pub const CSV_HEADER: &str =
    "method,row,threshold,fpr,tpr,auc,candidate_accuracy,evaluated,excluded,segments_per_second";

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub method: String,
    pub roc: RocCurve,
    pub candidate: CandidateOutcome,
    /// Extraction rate of the method's network, when measured.
    pub throughput: Option<f64>,
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| format!("{x}"))
}

impl EvalReport {
    /// One `key=value` record per line: a `summary` line, then one `roc`
    /// line per curve point.
    pub fn to_records(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "record=summary method={} auc={} candidate_accuracy={} evaluated={} excluded={} segments_per_second={}",
            self.method,
            self.roc.auc,
            self.candidate.accuracy,
            self.candidate.evaluated,
            self.candidate.excluded,
            opt(self.throughput),
        );
        for p in &self.roc.points {
            let _ = writeln!(
                s,
                "record=roc method={} threshold={} fpr={} tpr={}",
                self.method, p.threshold, p.fpr, p.tpr
            );
        }
        s
    }

    /// CSV rows (no header; see [`CSV_HEADER`]): one `roc` row per curve
    /// point, then a `summary` row. Cells that do not apply are empty.
    pub fn to_csv_rows(&self) -> String {
        let mut s = String::new();
        for p in &self.roc.points {
            let _ = writeln!(s, "{},roc,{},{},{},,,,,", self.method, p.threshold, p.fpr, p.tpr);
        }
        let _ = writeln!(
            s,
            "{},summary,,,,{},{},{},{},{}",
            self.method,
            self.roc.auc,
            self.candidate.accuracy,
            self.candidate.evaluated,
            self.candidate.excluded,
            opt(self.throughput),
        );
        s
    }

    pub fn to_csv(&self) -> String {
        format!("{CSV_HEADER}\n{}", self.to_csv_rows())
    }
}
