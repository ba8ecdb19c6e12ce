use std::path::{Path, PathBuf};
use std::sync::Arc;

use mangaroll::broll::{make_contextual, BRollKind};
use mangaroll::genai::stub::{StubTransport, STUB_ATHLETE};
use mangaroll::genai::{FixtureStore, Gateway, GatewayMode, RetryPolicy, ServiceKind};
use mangaroll::narrative::CaptionSource;
use mangaroll::media::rawvideo::{write_raw_video, RawVideoDecoder};
use mangaroll::pipeline::{self, PipelineEnv, Stage, Suggestion, Workspace};
use mangaroll::render::SinkConfig;
use mangaroll::synth;
use mangaroll::timeline::{load_project, PipelineConfig, SuggestionLevel, Track};

fn corpus(dir: &Path) -> PathBuf {
    let path = dir.join("match.mrv");
    write_raw_video(&path, synth::corpus_rate(), synth::corpus_frames().iter()).unwrap();
    path
}

fn config(athlete: bool) -> PipelineConfig {
    PipelineConfig {
        seed: 42,
        athlete_name: athlete.then(|| STUB_ATHLETE.to_owned()),
        ..Default::default()
    }
}

fn live(stub: Arc<StubTransport>, mode: GatewayMode) -> PipelineEnv {
    let gw = Gateway::new(stub, mode).with_retry(RetryPolicy::immediate());
    PipelineEnv::new(Arc::new(RawVideoDecoder), Arc::new(gw))
}

#[test]
fn full_run_produces_valid_project() {
    let dir = tempfile::tempdir().unwrap();
    let src = corpus(dir.path());
    let ws = Workspace::in_dir(&dir.path().join("p"));
    let env = live(Arc::new(StubTransport::new()), GatewayMode::Live);
    let (project, report) = pipeline::run(&src, &config(true), &env, &ws).unwrap();

    let stages: Vec<Stage> = report.stages.iter().map(|s| s.stage).collect();
    assert_eq!(stages, Stage::ALL);
    assert!(report.stages.iter().all(|s| s.ok));
    assert_eq!(report.shots_found, synth::CORPUS_SCENES);
    assert_eq!(report.gaps_found, project.gaps.len());
    assert!(report.gaps_found > 0);
    assert_eq!(report.assets_generated[&BRollKind::T2], 3);
    for (kind, n) in &report.assets_inserted {
        assert_eq!(project.count_placed(*kind), *n);
    }
    assert!(report.insertions > 0);
    project.validate().unwrap();
    for c in &project.clips {
        if let Some(id) = c.asset_id() {
            assert!(ws.assets().contains(id), "{id}");
            assert!(project.assets.contains_key(id));
        }
    }
    assert_eq!(load_project(ws.project_path()).unwrap(), project);
    assert!(ws.report_path().exists());
    let budget = project.config.gap_budget_frames(project.media.fps());
    let expected = project.media.frame_count + budget * report.insertions as u64;
    assert_eq!(project.output_len(), expected);
}

#[test]
fn no_athlete_no_career_stills() {
    let dir = tempfile::tempdir().unwrap();
    let src = corpus(dir.path());
    let ws = Workspace::in_dir(&dir.path().join("p"));
    let env = live(Arc::new(StubTransport::new()), GatewayMode::Live);
    let (project, report) = pipeline::run(&src, &config(false), &env, &ws).unwrap();
    assert!(!report.assets_generated.contains_key(&BRollKind::T2));
    assert_eq!(project.count_placed(BRollKind::T2), 0);
    assert_eq!(project.clips_on(Track::T2Track).count(), 0);
}

#[test]
fn failed_run_writes_report_only() {
    let dir = tempfile::tempdir().unwrap();
    let src = corpus(dir.path());
    let ws = Workspace::in_dir(&dir.path().join("p"));
    let empty = FixtureStore::new(dir.path().join("none"));
    let env = PipelineEnv::new(Arc::new(RawVideoDecoder), Arc::new(Gateway::replay(empty)));
    let err = pipeline::run(&src, &config(true), &env, &ws).unwrap_err();
    assert!(err.report.error.is_some());
    assert!(err.report.stages.last().is_some_and(|s| s.stage == Stage::Narrate && !s.ok));
    assert!(!ws.project_path().exists());
    assert!(ws.report_path().exists());
}

#[test]
fn manual_highlights_bypass_selection() {
    let dir = tempfile::tempdir().unwrap();
    let src = corpus(dir.path());
    let ws = Workspace::in_dir(&dir.path().join("p"));
    let mut cfg = config(false);
    cfg.analysis.manual_highlights = Some(vec![[1.0, 2.0], [4.0, 4.5]]);
    let env = live(Arc::new(StubTransport::new()), GatewayMode::Live);
    let (project, report) = pipeline::run(&src, &cfg, &env, &ws).unwrap();
    assert!(report.manual_highlights);
    let spans: Vec<_> = project.narrative.highlights.iter().map(|h| (h.span.shot.start, h.span.shot.end)).collect();
    assert_eq!(spans, vec![(25, 50), (100, 113)]);
    let mut ranks: Vec<_> = project.narrative.highlights.iter().map(|h| h.span.rank).collect();
    ranks.sort();
    assert_eq!(ranks, vec![1, 2]);
}

#[test]
fn record_then_replay_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let src = corpus(dir.path());
    let store = FixtureStore::new(dir.path().join("fixtures"));
    let stub = Arc::new(StubTransport::new());
    let rec = live(stub, GatewayMode::Record(store.clone()));
    let a = Workspace::in_dir(&dir.path().join("a"));
    pipeline::run(&src, &config(true), &rec, &a).unwrap();

    let mut replays = Vec::new();
    for name in ["b", "c"] {
        let ws = Workspace::in_dir(&dir.path().join(name));
        let replay = PipelineEnv::new(Arc::new(RawVideoDecoder), Arc::new(Gateway::replay(store.clone())));
        let (_, report) = pipeline::run(&src, &config(true), &replay, &ws).unwrap();
        assert_eq!(report.service_calls.live_calls, 0);
        assert!(report.service_calls.replayed > 0);
        replays.push(ws);
    }
    let (b, c) = (&replays[0], &replays[1]);
    assert_eq!(std::fs::read(b.project_path()).unwrap(), std::fs::read(c.project_path()).unwrap());

    // Recorded and replayed runs differ only in caption provenance.
    let mut recorded = load_project(a.project_path()).unwrap();
    for cap in &mut recorded.narrative.captions {
        cap.source = CaptionSource::Fixture;
    }
    assert_eq!(recorded, load_project(b.project_path()).unwrap());

    let sa = pipeline::render_project(
        &load_project(b.project_path()).unwrap(),
        b,
        Arc::new(RawVideoDecoder),
        &SinkConfig::ImageSequence { dir: dir.path().join("ra") },
    )
    .unwrap();
    let sb = pipeline::render_project(
        &load_project(c.project_path()).unwrap(),
        c,
        Arc::new(RawVideoDecoder),
        &SinkConfig::ImageSequence { dir: dir.path().join("rb") },
    )
    .unwrap();
    assert_eq!(sa, sb);
}

#[test]
fn suggestion_levels() {
    let dir = tempfile::tempdir().unwrap();
    let src = corpus(dir.path());
    let ws = Workspace::in_dir(&dir.path().join("p"));
    let stub = Arc::new(StubTransport::new());
    let env = live(stub.clone(), GatewayMode::Live);
    let (mut project, _) = pipeline::run(&src, &config(true), &env, &ws).unwrap();

    assert!(pipeline::suggest(&mut project, SuggestionLevel::Off, &env, &ws).unwrap().is_empty());

    let images = |s: &StubTransport| s.requests().iter().filter(|r| r.kind == ServiceKind::GenerateImage).count();
    let before = images(&stub);
    let prompts = pipeline::suggest(&mut project, SuggestionLevel::OnDemand, &env, &ws).unwrap();
    assert_eq!(prompts.len(), project.gaps.len());
    assert!(prompts.iter().all(|s| matches!(s, Suggestion::Prompt(_))));
    assert_eq!(images(&stub), before);

    let out = pipeline::suggest(&mut project, SuggestionLevel::Proactive, &env, &ws).unwrap();
    let ids: Vec<String> = out
        .iter()
        .filter_map(|s| match s {
            Suggestion::Asset(m) if m.kind == BRollKind::T3 => Some(m.id.clone()),
            _ => None,
        })
        .collect();
    let understanding = project.narrative.understanding.clone().unwrap();
    let mut direct = Vec::new();
    for gap in project.gaps.iter().filter(|g| g.suggested_kind == BRollKind::T3) {
        let batch = make_contextual(gap, &understanding, &project.config.style, 2, &env.gateway).unwrap();
        direct.extend(batch.assets.into_iter().map(|a| a.meta.id));
    }
    assert!(!ids.is_empty());
    assert_eq!(ids, direct);
    for s in &out {
        if let Suggestion::Asset(m) = s {
            assert!(project.assets.contains_key(&m.id));
            assert!(ws.assets().contains(&m.id));
        }
    }
}

#[test]
fn thumbnail_of_identity_frame() {
    let dir = tempfile::tempdir().unwrap();
    let src = corpus(dir.path());
    let ws = Workspace::in_dir(&dir.path().join("p"));
    let info = mangaroll::media::probe(&RawVideoDecoder, &src).unwrap();
    let project = mangaroll::timeline::TimelineProject::new(info, src.to_string_lossy(), PipelineConfig::default());
    let f = pipeline::thumbnail(&project, &ws, Arc::new(RawVideoDecoder), 0).unwrap();
    assert_eq!(f.to_png(), synth::corpus_frames()[0].to_png());
}

#[test]
fn bundled_corpus_matches_generator() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/corpus");
    let fresh = tempfile::tempdir().unwrap();
    let path = corpus(fresh.path());
    assert_eq!(std::fs::read(dir.join("match.mrv")).unwrap(), std::fs::read(path).unwrap());
    let cfg: PipelineConfig = serde_json::from_slice(&std::fs::read(dir.join("config.json")).unwrap()).unwrap();
    assert_eq!(cfg, config(true));
}
