use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::artifacts::{read_json, ArtifactPaths, MethodReport};
use super::stages::csv_err;
use crate::eval::Metrics;
use crate::{Error, Result};

/// Methods in table order; only those with a report on disk are shown.
const METHOD_ORDER: [&str; 5] = ["base", "pretrainrl", "woNTP", "woDPO", "popularity"];

/// One directional comparison between methods.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyReport {
    pub methods: Vec<MethodReport>,
    pub checks: Vec<Check>,
}

impl StudyReport {
    pub fn metrics(&self) -> BTreeMap<String, Metrics> {
        self.methods.iter().map(|m| (m.method.clone(), m.report.overall)).collect()
    }

    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

/// Reads every method report present in a run directory.
pub fn load_method_reports(dir: &Path) -> Result<Vec<MethodReport>> {
    let paths = ArtifactPaths::new(dir);
    let mut out = Vec::new();
    for m in METHOD_ORDER {
        let p = paths.method_report(m);
        if p.exists() {
            out.push(read_json(&p)?);
        }
    }
    if out.is_empty() {
        return Err(Error::Dataset {
            path: dir.to_path_buf(),
            reason: "no evaluation reports found".into(),
        });
    }
    Ok(out)
}

/// The qualitative ablation pattern, for whichever methods are present:
/// PretrainRL beats CT-only on ACC, CT-only beats the base, DPO alone raises
/// Prob over the base while lowering HR relative to PretrainRL, PretrainRL
/// has the best MRR among itself and the two objective ablations, and pool
/// sampling is at least as accurate as popularity sampling.
pub fn directional_checks(metrics: &BTreeMap<String, Metrics>) -> Vec<Check> {
    let mut out = Vec::new();
    let mut cmp = |name: &str, a: &str, b: &str, f: fn(&Metrics) -> f64, strict: bool, greater: bool| {
        if let (Some(x), Some(y)) = (metrics.get(a), metrics.get(b)) {
            let (l, r) = (f(x), f(y));
            let passed = match (greater, strict) {
                (true, true) => l > r,
                (true, false) => l >= r,
                (false, true) => l < r,
                (false, false) => l <= r,
            };
            out.push(Check {
                name: name.to_string(),
                lhs: l,
                rhs: r,
                passed,
            });
        }
    };
    let acc = |m: &Metrics| m.acc;
    let hr = |m: &Metrics| m.hr;
    let mrr = |m: &Metrics| m.mrr;
    let prob = |m: &Metrics| m.prob;
    cmp("ACC pretrainrl > woDPO", "pretrainrl", "woDPO", acc, true, true);
    cmp("ACC woDPO > base", "woDPO", "base", acc, true, true);
    cmp("Prob woNTP > base", "woNTP", "base", prob, true, true);
    cmp("HR woNTP < pretrainrl", "woNTP", "pretrainrl", hr, true, false);
    cmp("MRR pretrainrl > woNTP", "pretrainrl", "woNTP", mrr, true, true);
    cmp("MRR pretrainrl > woDPO", "pretrainrl", "woDPO", mrr, true, true);
    cmp("ACC pretrainrl >= popularity", "pretrainrl", "popularity", acc, false, true);
    out
}

fn pct(x: f64) -> String {
    format!("{:.2}", 100.0 * x)
}

/// Markdown table with ACC/HR/MRR/Prob in percent, then the checks.
pub fn render_report(study: &StudyReport) -> String {
    let mut s = String::new();
    let k = study.methods.first().map(|m| m.report.k).unwrap_or(0);
    let _ = writeln!(s, "| method | ACC | HR@{k} | MRR@{k} | Prob@{k} | head permeation |");
    let _ = writeln!(s, "|---|---|---|---|---|---|");
    for m in &study.methods {
        let o = m.report.overall;
        let perm = m.head_permeation.map(pct).unwrap_or_else(|| "-".into());
        let _ = writeln!(
            s,
            "| {} | {} | {} | {} | {} | {perm} |",
            m.method,
            pct(o.acc),
            pct(o.hr),
            pct(o.mrr),
            pct(o.prob)
        );
    }
    if !study.checks.is_empty() {
        let _ = writeln!(s);
        for c in &study.checks {
            let mark = if c.passed { "pass" } else { "FAIL" };
            let _ = writeln!(s, "- {mark}: {} ({} vs {})", c.name, pct(c.lhs), pct(c.rhs));
        }
    }
    s
}

/// Builds the comparison table and trajectory file of a run directory.
pub fn report(dir: &Path) -> Result<StudyReport> {
    let paths = ArtifactPaths::new(dir);
    let methods = load_method_reports(dir)?;
    let study = StudyReport {
        checks: directional_checks(&methods.iter().map(|m| (m.method.clone(), m.report.overall)).collect()),
        methods,
    };
    std::fs::write(paths.table_markdown(), render_report(&study))?;

    let mut tsv = String::from("method\tcategory\tn\tACC\tHR\tMRR\tProb\n");
    for m in &study.methods {
        let rows = std::iter::once(("overall", &m.report.overall))
            .chain(m.report.per_category.iter().map(|(c, x)| (c.as_str(), x)));
        for (cat, x) in rows {
            let _ = writeln!(
                tsv,
                "{}\t{cat}\t{}\t{}\t{}\t{}\t{}",
                m.method,
                x.n_questions,
                pct(x.acc),
                pct(x.hr),
                pct(x.mrr),
                pct(x.prob)
            );
        }
    }
    std::fs::write(paths.table_tsv(), tsv)?;

    let mut w = csv::Writer::from_path(paths.trajectories()).map_err(csv_err)?;
    w.write_record(["method", "step", "question_id", "logprob", "prob"]).map_err(csv_err)?;
    for m in &study.methods {
        let p = paths.traces(&m.method);
        if !p.exists() {
            continue;
        }
        let mut r = csv::Reader::from_path(&p).map_err(csv_err)?;
        for rec in r.records() {
            let rec = rec.map_err(csv_err)?;
            let mut row = vec![m.method.as_str()];
            row.extend(rec.iter());
            w.write_record(&row).map_err(csv_err)?;
        }
    }
    w.flush()?;
    Ok(study)
}
