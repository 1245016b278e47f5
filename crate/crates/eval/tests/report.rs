use std::collections::BTreeMap;

use labassist_eval::consistency::Recomputed;
use labassist_eval::report::NON_CLAIMS;
use labassist_eval::{fixtures, ingest_latency, report, Dimension, LatencyTable, ReportOptions};

fn bundled(markdown: bool) -> labassist_eval::ReportOutput {
    let m = fixtures::ratings().unwrap();
    let l = fixtures::latency().unwrap();
    let opts = ReportOptions {
        pair: None,
        published: Some(fixtures::published().unwrap()),
        markdown,
    };
    report(Some(&m), Some(&l), &opts).unwrap()
}

#[test]
fn bundled_ratings_are_complete() {
    let m = fixtures::ratings().unwrap();
    m.check_complete().unwrap();
    assert_eq!(m.systems(), vec!["GPT-4", "PhysicsAssistant"]);
    assert_eq!(m.questions(), vec!["Q1", "Q2", "Q3", "Q4", "Q5"]);
    assert_eq!(m.records().len(), 40);
}

#[test]
fn table_aggregates() {
    let out = bundled(false);
    let r = &out.report;
    let pa = r.system_ratings("PhysicsAssistant").unwrap();
    let want = [
        (Dimension::FK, 3.8),
        (Dimension::CK, 2.2),
        (Dimension::PK, 2.6),
        (Dimension::MK, 3.0),
    ];
    for (d, v) in want {
        assert!((pa.dimension_means[&d] - v).abs() < 1e-12, "{d}");
    }
    let qm: Vec<f64> = pa.question_means.iter().map(|q| q.mean).collect();
    assert_eq!(qm, vec![3.25, 3.75, 3.0, 2.75, 1.75]);
    assert!((pa.overall - 2.9).abs() < 1e-12);
    let g = r.system_ratings("GPT-4").unwrap();
    assert!((g.dimension_means[&Dimension::CK] - 3.0).abs() < 1e-12);
    assert!((g.dimension_means[&Dimension::PK] - 3.2).abs() < 1e-12);
    assert!((g.dimension_means[&Dimension::MK] - 3.2).abs() < 1e-12);
    assert!((g.overall - 3.3).abs() < 1e-12);
}

#[test]
fn flagged_values() {
    let out = bundled(false);
    let r = &out.report;
    let mut names: Vec<&str> = r.discrepancies.iter().map(|d| d.name.as_str()).collect();
    names.sort();
    assert_eq!(
        names,
        vec![
            "rating.GPT-4.MK.mean",
            "rating.GPT-4.overall",
            "ttest.dimension.FK.p",
            "ttest.dimension.FK.t",
            "ttest.dimension.MK.p",
            "ttest.dimension.MK.t",
            "ttest.latency.t",
            "ttest.question.Q4.p",
        ]
    );
    assert_eq!(r.discrepancy("ttest.dimension.FK.t").unwrap().recomputed, None);
    let mk = r.discrepancy("rating.GPT-4.MK.mean").unwrap();
    assert!((mk.recomputed.unwrap() - 3.2).abs() < 1e-12);
    let lt = r.discrepancy("ttest.latency.t").unwrap();
    assert!((lt.recomputed.unwrap() + 7.5698).abs() < 1e-3);
    assert_eq!(lt.published, -6.847);
}

#[test]
fn latency_section() {
    let out = bundled(false);
    let r = &out.report;
    let pa = r.latency_of("PhysicsAssistant").unwrap();
    assert!((pa.mean_total - 1.64).abs() < 1e-12);
    assert!((pa.mean_perception.unwrap() - 0.32).abs() < 1e-12);
    assert!((pa.mean_llm.unwrap() - 1.32).abs() < 1e-12);
    let g = r.latency_of("GPT-4").unwrap();
    assert!((g.mean_total - 3.54).abs() < 1e-12);
    assert!((g.sd_total - 0.87).abs() < 0.005);
    let t = r.latency.as_ref().unwrap().total_test.as_ref().unwrap().result.unwrap();
    assert!((t.t + 7.57).abs() < 0.005);
    assert!(t.p_two_tailed <= 0.003);
}

#[test]
fn json_and_markdown_outputs() {
    let plain = bundled(false);
    assert!(plain.markdown.is_none());
    let v: serde_json::Value = serde_json::from_str(&plain.json).unwrap();
    assert_eq!(v["schema_version"], "eval-report/1");
    assert_eq!(v["non_claims"].as_array().unwrap().len(), NON_CLAIMS.len());
    let md = bundled(true).markdown.unwrap();
    for s in [
        "| CK | -4.000 | 4 | 0.0161 |",
        "ttest.latency.t",
        "## Not reproduced",
        "86%",
    ] {
        assert!(md.contains(s), "missing {s:?}");
    }
}

#[test]
fn values_recomputed_under_published_names() {
    let out = bundled(false);
    let rec: BTreeMap<String, Recomputed> = out.report.recomputed();
    let published = fixtures::published().unwrap();
    for p in &published.values {
        assert!(rec.contains_key(&p.name), "{} has no recomputed counterpart", p.name);
    }
}

#[test]
fn latency_from_session_log() {
    use labassist_core::assistant::{append_record, Assistant, ServiceConfig};
    let dir = tempfile::tempdir().unwrap();
    let cfg = ServiceConfig {
        log_dir: Some(dir.path().to_path_buf()),
        ..ServiceConfig::default()
    };
    let a = Assistant::from_config(cfg).unwrap();
    let sid = a.create_session();
    let script = labassist_core::assistant::bundled_script();
    let mut records = Vec::new();
    for step in &script {
        records.push(a.run_turn(&sid, step.input()).unwrap());
    }
    let log = a.log_path(&sid).unwrap();
    let t = ingest_latency(&log, "PhysicsAssistant").unwrap();
    let direct = LatencyTable::from_records("PhysicsAssistant", &records).unwrap();
    assert_eq!(t, direct);
    let rows = t.rows("PhysicsAssistant");
    assert_eq!(
        rows.iter().map(|(q, _)| q.as_str()).collect::<Vec<_>>(),
        vec!["Q1", "Q2", "Q3", "Q4", "Q5"]
    );
    for ((_, row), rec) in rows.iter().zip(&records) {
        assert_eq!(row.total, rec.latency.perception_s + rec.latency.llm_s);
    }
    // A copied log with one extra appended record keeps parsing.
    let copy = dir.path().join("copy.jsonl");
    std::fs::copy(&log, &copy).unwrap();
    let mut extra = records[0].clone();
    extra.turn_id = 99;
    extra.question_id = Some("Q6".into());
    append_record(&copy, &extra).unwrap();
    assert_eq!(ingest_latency(&copy, "PA").unwrap().rows("PA").len(), 6);
}
