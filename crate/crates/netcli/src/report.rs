//! Experiment reports and their JSON / CSV emission.

use std::collections::BTreeMap;

use poqm::games::stats::SE_SLACK;
use poqm::games::{BoundValue, Estimate};
use serde::{Deserialize, Serialize};
use serde_json::Value;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedEstimate {
    pub name: String,
    #[serde(flatten)]
    pub estimate: Estimate,
    pub se: f64,
}

impl NamedEstimate {
    pub fn new(name: impl Into<String>, estimate: Estimate) -> Self {
        let se = estimate.se();
        NamedEstimate {
            name: name.into(),
            estimate,
            se,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub experiment: String,
    pub provenance: String,
    pub seed: u64,
    pub parameters: BTreeMap<String, Value>,
    pub estimates: Vec<NamedEstimate>,
    pub bounds: Vec<BoundValue>,
    pub checks: Vec<Check>,
    pub se_slack: f64,
    pub timings_ms: BTreeMap<String, f64>,
    pub details: Value,
}

pub fn provenance() -> String {
    format!(
        "poqm/{}+{}",
        env!("CARGO_PKG_VERSION"),
        option_env!("POQM_GIT_REV").unwrap_or("unknown")
    )
}

impl Report {
    pub fn new(experiment: impl Into<String>, seed: u64) -> Self {
        Report {
            experiment: experiment.into(),
            provenance: provenance(),
            seed,
            parameters: BTreeMap::new(),
            estimates: Vec::new(),
            bounds: Vec::new(),
            checks: Vec::new(),
            se_slack: SE_SLACK,
            timings_ms: BTreeMap::new(),
            details: Value::Null,
        }
    }

    pub fn param(&mut self, key: &str, value: impl Serialize) -> &mut Self {
        self.parameters
            .insert(key.to_string(), serde_json::to_value(value).expect("parameter serializes"));
        self
    }

    pub fn estimate(&mut self, name: impl Into<String>, e: Estimate) -> &mut Self {
        self.estimates.push(NamedEstimate::new(name, e));
        self
    }

    pub fn check(&mut self, name: impl Into<String>, pass: bool, detail: impl Into<String>) -> &mut Self {
        self.checks.push(Check {
            name: name.into(),
            pass,
            detail: detail.into(),
        });
        self
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

pub fn emit(report: &Report, format: Format) -> Vec<u8> {
    match format {
        Format::Json => {
            let mut out = serde_json::to_vec_pretty(report).expect("report serializes");
            out.push(b'\n');
            out
        }
        Format::Csv => emit_csv(report),
    }
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

/// One table per report: estimates if there are any, else bounds, else
/// checks.
fn emit_csv(report: &Report) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    if !report.estimates.is_empty() {
        w.write_record([
            "experiment", "name", "trials", "successes", "p_hat", "ci_low", "ci_high", "se", "bound",
            "bound_vacuous",
        ])
        .unwrap();
        for e in &report.estimates {
            let est = &e.estimate;
            w.write_record([
                report.experiment.clone(),
                e.name.clone(),
                est.trials.to_string(),
                est.successes.to_string(),
                est.p_hat.to_string(),
                est.ci_low.to_string(),
                est.ci_high.to_string(),
                e.se.to_string(),
                fmt_opt(est.bound),
                est.bound_vacuous.to_string(),
            ])
            .unwrap();
        }
    } else if !report.bounds.is_empty() {
        w.write_record(["bound", "param", "xi", "raw", "vacuous", "note"]).unwrap();
        for b in &report.bounds {
            let name = serde_json::to_value(b.name).unwrap();
            w.write_record([
                name.as_str().unwrap_or_default().to_string(),
                b.param.to_string(),
                b.xi.to_string(),
                b.raw.to_string(),
                b.vacuous.to_string(),
                b.note.clone().unwrap_or_default(),
            ])
            .unwrap();
        }
    } else {
        w.write_record(["experiment", "check", "pass", "detail"]).unwrap();
        for c in &report.checks {
            w.write_record([
                report.experiment.clone(),
                c.name.clone(),
                c.pass.to_string(),
                c.detail.clone(),
            ])
            .unwrap();
        }
    }
    w.into_inner().expect("in-memory writer")
}

pub fn decode(bytes: &[u8]) -> Result<Report, serde_json::Error> {
    serde_json::from_slice(bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use poqm::games::locc_bound;

    fn sample() -> Report {
        let mut r = Report::new("game-locc", 7);
        r.param("n", 8).param("strategy", "breidbart");
        r.estimate("win", Estimate::from_counts(2817, 10_000).with_bound(0.5322));
        r.check("within-bound", true, "");
        r.timings_ms.insert("wall".into(), 12.5);
        r
    }

    #[test]
    fn emission_is_stable() {
        let r = sample();
        for f in [Format::Json, Format::Csv] {
            assert_eq!(emit(&r, f), emit(&r, f));
        }
        let again = decode(&emit(&r, Format::Json)).unwrap();
        assert_eq!(again, r);
        assert_eq!(emit(&again, Format::Json), emit(&r, Format::Json));
    }

    #[test]
    fn bounds_csv_rows() {
        let mut r = Report::new("bounds", 0);
        r.bounds = (1..=16).map(locc_bound).collect();
        let text = String::from_utf8(emit(&r, Format::Csv)).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 17);
        assert!(lines[0].starts_with("bound,param"));
        assert!(lines[1].starts_with("locc,1,"));
    }

    #[test]
    fn passed_requires_every_check() {
        let mut r = sample();
        assert!(r.passed());
        r.check("other", false, "x");
        assert!(!r.passed());
    }
}
