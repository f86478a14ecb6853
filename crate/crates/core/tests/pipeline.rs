use std::path::Path;

use mde_core::pipeline::project::SyntheticProject;
use mde_core::pipeline::{run_pipeline, tree_listing, PipelineConfig, PipelineError, Stage, StageStatus, REPORT_FILE};

fn config(dir: &Path, out: &str) -> PipelineConfig {
    let path = SyntheticProject::standard(3, 12, 5).write(dir).unwrap();
    let mut cfg = PipelineConfig::load(&path).unwrap();
    cfg.output = dir.join(out);
    cfg.cache_dir = Some(dir.join(format!("{out}.cache")));
    cfg.analysis.projection.iterations = 300;
    cfg
}

fn listing(out: &Path) -> Vec<(String, String)> {
    tree_listing(out).unwrap().into_iter().filter(|(p, _)| p != REPORT_FILE).collect()
}

#[test]
fn full_run_writes_every_stage_and_reruns_from_cache() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "out");
    let first = run_pipeline(&cfg).unwrap();
    assert_eq!(first.stages.len(), 7);
    assert!(first.stages.iter().all(|s| s.status == StageStatus::Ok && s.cache_misses > 0), "{first:#?}");
    for p in ["site/index.html", "site/data/manifest.json", "site/en/1.html", "site/en/1.phrase.html", "site/data/fr/2.alignment", "site/data/fr/2.viz", "tei/source.xml", "tei/en/phrase.xml", "metrics/en/comparison.json", REPORT_FILE] {
        assert!(cfg.output.join(p).is_file(), "{p} missing");
    }
    let before = listing(&cfg.output);

    let second = run_pipeline(&cfg).unwrap();
    assert!(second.stages.iter().all(|s| s.all_cached()), "{second:#?}");
    assert_eq!(listing(&cfg.output), before);

    let mut changed = cfg.clone();
    changed.alignment.merge_penalty = 0.3;
    let third = run_pipeline(&changed).unwrap();
    for s in [Stage::Segment, Stage::Embed] {
        assert!(third.stage(s).all_cached());
        assert_eq!(third.stage(s).keys, first.stage(s).keys);
    }
    for s in [Stage::Align, Stage::Metrics, Stage::Analyze, Stage::EncodeTei, Stage::Render] {
        assert!(third.stage(s).cache_misses > 0, "{s} should rerun");
        assert_ne!(third.stage(s).keys, first.stage(s).keys);
    }
}

#[test]
fn failed_run_resumes_to_the_clean_result() {
    let dir = tempfile::tempdir().unwrap();
    let clean = config(dir.path(), "clean");
    run_pipeline(&clean).unwrap();

    let mut failing = config(dir.path(), "resumed");
    failing.fail_at_stage = Some(Stage::Analyze);
    match run_pipeline(&failing) {
        Err(PipelineError::Stage { stage, report, .. }) => {
            assert_eq!(stage, Stage::Analyze);
            assert_eq!(report.stage(Stage::Analyze).status, StageStatus::Failed);
            assert_eq!(report.stage(Stage::Render).status, StageStatus::NotRun);
            assert_eq!(report.stage(Stage::Align).status, StageStatus::Ok);
        }
        other => panic!("expected a stage failure, got {other:?}"),
    }
    failing.fail_at_stage = None;
    let resumed = run_pipeline(&failing).unwrap();
    for s in [Stage::Segment, Stage::Embed, Stage::Align, Stage::Metrics] {
        assert!(resumed.stage(s).all_cached(), "{s}");
    }
    assert_eq!(listing(&failing.output), listing(&clean.output));
}
