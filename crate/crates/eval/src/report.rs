use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::consistency::{consistency_check, Discrepancy, Published, Recomputed};
use crate::latency::{latency_summary, LatencySummary, LatencyTable};
use crate::ratings::{dimension_mean, overall_mean, question_mean, Dimension, RatingMatrix};
use crate::stats::{paired_t_test, TTestResult};
use crate::EvalError;

pub const REPORT_SCHEMA_VERSION: &str = "eval-report/1";

/// Results that depend on human judgement or real hardware. They enter only
/// as fixture data and are never reproduced.
pub const NON_CLAIMS: [&str; 3] = [
    "Expert rating quality: the 0-4 scores are inputs read from the ratings file; this harness neither produces nor judges them.",
    "Student outcomes: nothing here measures or implies any effect on student learning.",
    "Detector accuracy: the 86% object detection accuracy of the camera detector is not re-measured; bundled scenes are synthetic fixtures.",
];

#[derive(Debug, Clone, Default)]
pub struct ReportOptions {
    /// Systems for the paired tests as (a, b); t is computed on a - b.
    pub pair: Option<(String, String)>,
    pub published: Option<Published>,
    pub markdown: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionMean {
    pub question: String,
    pub mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemRatings {
    pub system: String,
    pub dimension_means: BTreeMap<Dimension, f64>,
    pub question_means: Vec<QuestionMean>,
    pub overall: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedTest {
    pub name: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub result: Option<TTestResult>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl NamedTest {
    fn new(name: impl Into<String>, r: Result<TTestResult, EvalError>) -> Self {
        let (result, error) = match r {
            Ok(t) => (Some(t), None),
            Err(e) => (None, Some(e.to_string())),
        };
        Self {
            name: name.into(),
            result,
            error,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatingsSection {
    pub systems: Vec<SystemRatings>,
    pub dimension_tests: Vec<NamedTest>,
    pub question_tests: Vec<NamedTest>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencySection {
    pub summaries: Vec<LatencySummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub total_test: Option<NamedTest>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema_version: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pair: Option<(String, String)>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ratings: Option<RatingsSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub latency: Option<LatencySection>,
    pub discrepancies: Vec<Discrepancy>,
    pub non_claims: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportOutput {
    pub report: Report,
    pub json: String,
    pub markdown: Option<String>,
}

fn choose_pair(opts: &ReportOptions, systems: &[String]) -> Result<Option<(String, String)>, EvalError> {
    let pair = opts
        .pair
        .clone()
        .or_else(|| opts.published.as_ref().and_then(|p| p.pair.clone()))
        .or_else(|| match systems {
            [a, b] => Some((a.clone(), b.clone())),
            _ => None,
        });
    if let Some((a, b)) = &pair {
        if a == b {
            return Err(EvalError::InvalidInput(
                "a paired comparison needs two different systems".into(),
            ));
        }
    }
    Ok(pair)
}

fn ratings_section(m: &RatingMatrix, pair: Option<&(String, String)>) -> Result<RatingsSection, EvalError> {
    m.check_complete()?;
    let mut systems = Vec::new();
    for s in m.systems() {
        let mut dimension_means = BTreeMap::new();
        for d in Dimension::ALL {
            dimension_means.insert(d, dimension_mean(m, &s, d)?);
        }
        let question_means = m
            .questions()
            .into_iter()
            .map(|q| {
                Ok(QuestionMean {
                    mean: question_mean(m, &s, &q)?,
                    question: q,
                })
            })
            .collect::<Result<_, EvalError>>()?;
        systems.push(SystemRatings {
            overall: overall_mean(m, &s)?,
            system: s,
            dimension_means,
            question_means,
        });
    }
    let mut dimension_tests = Vec::new();
    let mut question_tests = Vec::new();
    if let Some((a, b)) = pair {
        for d in Dimension::ALL {
            let r = paired_t_test(&m.column(a, d)?, &m.column(b, d)?);
            dimension_tests.push(NamedTest::new(d.as_str(), r));
        }
        for q in m.questions() {
            let r = paired_t_test(&m.row(a, &q)?, &m.row(b, &q)?);
            question_tests.push(NamedTest::new(q, r));
        }
    }
    Ok(RatingsSection {
        systems,
        dimension_tests,
        question_tests,
    })
}

fn latency_section(t: &LatencyTable, pair: Option<&(String, String)>) -> Result<LatencySection, EvalError> {
    let summaries = latency_summary(t)?;
    let total_test = match pair {
        Some((a, b)) if t.systems().contains(a) && t.systems().contains(b) => {
            let rows_a = t.rows(a);
            let mut xs = Vec::new();
            let mut ys = Vec::new();
            for (q, r) in &rows_a {
                let other = t
                    .get(b, q)
                    .ok_or_else(|| EvalError::IncompleteMatrix(format!("{b} has no latency for {q}")))?;
                xs.push(r.total);
                ys.push(other.total);
            }
            if t.rows(b).len() != rows_a.len() {
                return Err(EvalError::IncompleteMatrix(format!(
                    "{a} and {b} cover different questions"
                )));
            }
            Some(NamedTest::new("total", paired_t_test(&xs, &ys)))
        }
        _ => None,
    };
    Ok(LatencySection { summaries, total_test })
}

fn put_test(map: &mut BTreeMap<String, Recomputed>, prefix: &str, t: &NamedTest) {
    match (&t.result, &t.error) {
        (Some(r), _) => {
            map.insert(format!("{prefix}.t"), Recomputed::Value(r.t));
            map.insert(format!("{prefix}.p"), Recomputed::Value(r.p_two_tailed));
        }
        (None, Some(e)) => {
            map.insert(format!("{prefix}.t"), Recomputed::Undefined(e.clone()));
            map.insert(format!("{prefix}.p"), Recomputed::Undefined(e.clone()));
        }
        (None, None) => {}
    }
}

impl Report {
    /// Every recomputed aggregate under the names used by published-value
    /// files.
    pub fn recomputed(&self) -> BTreeMap<String, Recomputed> {
        let mut m = BTreeMap::new();
        if let Some(r) = &self.ratings {
            for s in &r.systems {
                for (d, v) in &s.dimension_means {
                    m.insert(format!("rating.{}.{d}.mean", s.system), Recomputed::Value(*v));
                }
                for q in &s.question_means {
                    m.insert(
                        format!("rating.{}.{}.mean", s.system, q.question),
                        Recomputed::Value(q.mean),
                    );
                }
                m.insert(format!("rating.{}.overall", s.system), Recomputed::Value(s.overall));
            }
            for t in &r.dimension_tests {
                put_test(&mut m, &format!("ttest.dimension.{}", t.name), t);
            }
            for t in &r.question_tests {
                put_test(&mut m, &format!("ttest.question.{}", t.name), t);
            }
        }
        if let Some(l) = &self.latency {
            for s in &l.summaries {
                m.insert(
                    format!("latency.{}.mean_total", s.system),
                    Recomputed::Value(s.mean_total),
                );
                m.insert(format!("latency.{}.sd_total", s.system), Recomputed::Value(s.sd_total));
                if let Some(v) = s.mean_perception {
                    m.insert(format!("latency.{}.mean_perception", s.system), Recomputed::Value(v));
                }
                if let Some(v) = s.mean_llm {
                    m.insert(format!("latency.{}.mean_llm", s.system), Recomputed::Value(v));
                }
            }
            if let Some(t) = &l.total_test {
                put_test(&mut m, "ttest.latency", t);
            }
        }
        m
    }

    pub fn system_ratings(&self, system: &str) -> Option<&SystemRatings> {
        self.ratings.as_ref()?.systems.iter().find(|s| s.system == system)
    }

    pub fn dimension_test(&self, d: Dimension) -> Option<&NamedTest> {
        self.ratings
            .as_ref()?
            .dimension_tests
            .iter()
            .find(|t| t.name == d.as_str())
    }

    pub fn latency_of(&self, system: &str) -> Option<&LatencySummary> {
        self.latency.as_ref()?.summaries.iter().find(|s| s.system == system)
    }

    pub fn discrepancy(&self, name: &str) -> Option<&Discrepancy> {
        self.discrepancies.iter().find(|d| d.name == name)
    }
}

pub fn report(
    matrix: Option<&RatingMatrix>,
    latency: Option<&LatencyTable>,
    opts: &ReportOptions,
) -> Result<ReportOutput, EvalError> {
    if matrix.is_none() && latency.is_none() {
        return Err(EvalError::InvalidInput(
            "nothing to report: give ratings and/or latency".into(),
        ));
    }
    let mut systems: Vec<String> = matrix.map(RatingMatrix::systems).unwrap_or_default();
    for s in latency.map(LatencyTable::systems).unwrap_or_default() {
        if !systems.contains(&s) {
            systems.push(s);
        }
    }
    systems.sort();
    let pair = choose_pair(opts, &systems)?;
    if let (Some((a, b)), Some(m)) = (&pair, matrix) {
        for s in [a, b] {
            if !m.systems().contains(s) {
                return Err(EvalError::IncompleteMatrix(format!("no ratings for system {s:?}")));
            }
        }
    }
    let ratings = matrix.map(|m| ratings_section(m, pair.as_ref())).transpose()?;
    let latency = latency.map(|t| latency_section(t, pair.as_ref())).transpose()?;
    let mut report = Report {
        schema_version: REPORT_SCHEMA_VERSION.to_string(),
        pair,
        ratings,
        latency,
        discrepancies: Vec::new(),
        non_claims: NON_CLAIMS.iter().map(|s| s.to_string()).collect(),
    };
    if let Some(p) = &opts.published {
        report.discrepancies = consistency_check(&p.values, &report.recomputed());
    }
    let json = serde_json::to_string_pretty(&report).map_err(|e| EvalError::Io(e.to_string()))?;
    let markdown = opts.markdown.then(|| render_markdown(&report));
    Ok(ReportOutput { report, json, markdown })
}

fn fmt_test(t: &NamedTest) -> (String, String, String) {
    match &t.result {
        Some(r) => (
            format!("{:.3}", r.t),
            r.df.to_string(),
            format!("{:.4}", r.p_two_tailed),
        ),
        None => ("undefined".into(), "-".into(), "-".into()),
    }
}

/// Trim trailing zeros so 3.00 prints as 3 and 2.20 as 2.2.
fn short(v: f64) -> String {
    let s = format!("{v:.3}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".to_string()
    } else {
        s.to_string()
    }
}

pub fn render_markdown(r: &Report) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# Evaluation report\n");
    if let Some((a, b)) = &r.pair {
        let _ = writeln!(
            out,
            "Paired tests compare {a} against {b} (differences are {a} minus {b}).\n"
        );
    }
    if let Some(rs) = &r.ratings {
        let _ = writeln!(out, "## Ratings\n");
        for s in &rs.systems {
            let _ = writeln!(out, "### {}\n", s.system);
            let _ = writeln!(out, "| Question | Mean |");
            let _ = writeln!(out, "|----------|------|");
            for q in &s.question_means {
                let _ = writeln!(out, "| {:<8} | {:>4} |", q.question, short(q.mean));
            }
            let _ = writeln!(out);
            let _ = writeln!(out, "| Dimension | Mean |");
            let _ = writeln!(out, "|-----------|------|");
            for (d, v) in &s.dimension_means {
                let _ = writeln!(out, "| {:<9} | {:>4} |", d.as_str(), short(*v));
            }
            let _ = writeln!(out, "| {:<9} | {:>4} |\n", "overall", short(s.overall));
        }
        if !rs.dimension_tests.is_empty() {
            let _ = writeln!(out, "### Paired t-tests\n");
            let _ = writeln!(out, "| Comparison | t | df | p (two-tailed) | Note |");
            let _ = writeln!(out, "|------------|---|----|----------------|------|");
            for t in rs.dimension_tests.iter().chain(&rs.question_tests) {
                let (tv, df, p) = fmt_test(t);
                let note = t.error.clone().unwrap_or_default();
                let _ = writeln!(out, "| {} | {tv} | {df} | {p} | {note} |", t.name);
            }
            let _ = writeln!(out);
        }
    }
    if let Some(l) = &r.latency {
        let _ = writeln!(out, "## Response time (seconds)\n");
        let _ = writeln!(
            out,
            "| System | n | Mean perception | Mean LLM | Mean total | SD total |"
        );
        let _ = writeln!(
            out,
            "|--------|---|-----------------|----------|------------|----------|"
        );
        for s in &l.summaries {
            let opt = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.2}"));
            let _ = writeln!(
                out,
                "| {} | {} | {} | {} | {:.2} | {:.2} |",
                s.system,
                s.n,
                opt(s.mean_perception),
                opt(s.mean_llm),
                s.mean_total,
                s.sd_total
            );
        }
        if let Some(t) = &l.total_test {
            let (tv, df, p) = fmt_test(t);
            let _ = writeln!(out, "\nPaired t-test on totals: t = {tv}, df = {df}, p = {p}");
        }
        let _ = writeln!(out);
    }
    let _ = writeln!(out, "## Discrepancies against published values\n");
    if r.discrepancies.is_empty() {
        let _ = writeln!(out, "None found.\n");
    } else {
        let _ = writeln!(out, "| Name | Published | Recomputed | Note |");
        let _ = writeln!(out, "|------|-----------|------------|------|");
        for d in &r.discrepancies {
            let rec = d.recomputed.map_or("undefined".to_string(), |v| format!("{v:.4}"));
            let _ = writeln!(
                out,
                "| {} | {:.prec$} | {rec} | {} |",
                d.name,
                d.published,
                d.note,
                prec = d.decimals as usize
            );
        }
        let _ = writeln!(out);
    }
    let _ = writeln!(out, "## Not reproduced\n");
    for n in &r.non_claims {
        let _ = writeln!(out, "- {n}");
    }
    out
}
