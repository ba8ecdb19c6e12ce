use std::collections::{BTreeMap, VecDeque};
use std::path::Path;
use std::sync::Mutex;
use std::time::Instant;

use rayon::prelude::*;

use super::{PipelineEnv, PipelineError, PipelineReport, RunFailure, Stage, StageRecord, Workspace};
use crate::broll::{
    make_career_showcase, make_contextual, make_freeze_frames, BRollAsset, BRollError, FreezeRequest,
    DEFAULT_CONTEXTUAL_COUNT,
};
use crate::highlight::{
    classify_sentiment, frame_features, median, score_segment, score_trends, score_via_plugin, select_highlights,
    FeatureMatrix, HighlightSpan, NonLocalParams, Readout, ScoredShot, ScorerPlugin, Sentiment,
    DEFAULT_PLUGIN_TIMEOUT,
};
use crate::media::{self, sampling_offsets, MediaInfo, SampledClip, SamplingParams};
use crate::narrative::{
    build_understanding, describe_video, extract_narrative, identify_gaps, propose_fills, BRollKind, Caption,
    CaptionSampler, FillContext, NarrativeError, NarrativeGap,
};
use crate::render::{DecoderSource, SourceFrames};
use crate::shots::{
    detect_boundaries, BoundaryConfig, CornerDetector, KeypointDetector, NullDetector, Shot, SubprocessDetector,
};
use crate::timeline::{
    assign_assets_to_gaps, insert_broll, save_project, HighlightRecord, KeypointMode, PipelineConfig,
    TimelineProject, Transition,
};
use crate::Frame;

struct Runner<'a> {
    env: &'a PipelineEnv,
    report: PipelineReport,
}

impl Runner<'_> {
    fn stage<T>(
        &mut self,
        stage: Stage,
        f: impl FnOnce(&mut PipelineReport) -> Result<T, PipelineError>,
    ) -> Result<T, PipelineError> {
        if self.env.cancelled() {
            return Err(PipelineError::Cancelled(stage));
        }
        if let Some(p) = &self.env.progress {
            let done = Stage::ALL.iter().position(|s| *s == stage).unwrap_or(0);
            p(stage, done as f64 / Stage::ALL.len() as f64);
        }
        tracing::info!(stage = stage.as_str(), "stage started");
        let t = Instant::now();
        let r = f(&mut self.report);
        self.report.stages.push(StageRecord { stage, seconds: t.elapsed().as_secs_f64(), ok: r.is_ok() });
        r
    }
}

/// Analyzes `source` and writes the project, its assets and a report into
/// `workspace`. The project file is written only when every stage
/// succeeds; the report is written either way.
pub fn run(
    source: &Path,
    config: &PipelineConfig,
    env: &PipelineEnv,
    workspace: &Workspace,
) -> Result<(TimelineProject, PipelineReport), RunFailure> {
    let mut runner = Runner { env, report: PipelineReport { seed: config.seed, ..Default::default() } };
    let result = run_stages(&mut runner, source, config, workspace);
    let mut report = runner.report;
    report.service_calls = env.gateway.stats();
    match result {
        Ok(project) => {
            if let Err(error) = report.write(&workspace.report_path()) {
                return Err(RunFailure { error, report });
            }
            if let Some(p) = &env.progress {
                p(Stage::Schedule, 1.0);
            }
            Ok((project, report))
        }
        Err(error) => {
            report.error = Some(error.to_string());
            if let Err(e) = report.write(&workspace.report_path()) {
                tracing::warn!(error = %e, "could not write failure report");
            }
            Err(RunFailure { error, report })
        }
    }
}

struct Scored {
    spans: Vec<HighlightSpan>,
    records: Vec<HighlightRecord>,
}

fn run_stages(
    runner: &mut Runner<'_>,
    source: &Path,
    config: &PipelineConfig,
    workspace: &Workspace,
) -> Result<TimelineProject, PipelineError> {
    let env = runner.env;
    let decoder = env.decoder.as_ref();
    let gateway = env.gateway.as_ref();

    let (info, source_str) = runner.stage(Stage::Ingest, |report| {
        config.validate().map_err(PipelineError::InvalidConfig)?;
        let info = media::probe(decoder, source)?;
        if info.low_quality {
            report.warn(format!(
                "source is {}x{}, below 1080p; key frames may be unreliable",
                info.width, info.height
            ));
        }
        let abs = std::path::absolute(source)?;
        Ok((info, abs.to_string_lossy().into_owned()))
    })?;
    let fps = info.fps();

    let shots = runner.stage(Stage::Segment, |report| {
        let detector = keypoint_detector(&config.analysis.keypoints)?;
        let bc = BoundaryConfig {
            hist_threshold: config.analysis.hist_threshold,
            kp_threshold: config.analysis.kp_threshold,
            min_shot_len: config.analysis.min_shot_len,
            ..BoundaryConfig::default()
        };
        let stream = media::extract_frames(decoder, source, &info, 0..info.frame_count)?;
        let seg = detect_boundaries(stream, &bc, detector.as_ref())?;
        report.shots_found = seg.shots.len();
        Ok(seg.shots)
    })?;

    let scored = runner.stage(Stage::Score, |report| {
        let clips = sample_shots(decoder, source, &info, &shots, &SamplingParams::default())?;
        let features = clips.par_iter().map(frame_features).collect::<Result<Vec<_>, _>>()?;
        let scored = score_shots(&shots, &features, config, report)?;
        let samples: Vec<Vec<(u64, f64)>> = clips
            .iter()
            .zip(&features)
            .map(|(c, f)| c.source_indices.iter().copied().zip(f.column(0)).collect())
            .collect();
        let spans = match &config.analysis.manual_highlights {
            Some(intervals) => {
                report.manual_highlights = true;
                manual_spans(intervals, &info, &scored)?
            }
            None => select_highlights(&scored, config.analysis.selection)?,
        };
        if spans.iter().any(|s| s.fallback_scored) {
            report.warn("external scorer failed for some highlights; built-in scores were used");
        }
        report.highlights_selected = spans.len();
        let records = spans
            .iter()
            .map(|span| HighlightRecord {
                span: span.clone(),
                samples: samples
                    .iter()
                    .flatten()
                    .copied()
                    .filter(|(i, _)| span.shot.contains(*i))
                    .collect(),
            })
            .collect();
        Ok(Scored { spans, records })
    })?;

    let frames = Mutex::new(DecoderSource::new(env.decoder.clone(), source, info.clone()));
    let narrative_frame = |i: u64| {
        frames
            .lock()
            .expect("frame source lock")
            .frame(i)
            .map_err(|e| NarrativeError::FrameUnavailable { index: i, detail: e.to_string() })
    };
    let broll_frame = |i: u64| {
        frames
            .lock()
            .expect("frame source lock")
            .frame(i)
            .map_err(|e| BRollError::FrameUnavailable { index: i, detail: e.to_string() })
    };

    let mut project = TimelineProject::new(info.clone(), source_str, config.clone());
    project.seed = config.seed;
    project.narrative.shots = shots.clone();
    project.narrative.highlights = scored.records.clone();

    runner.stage(Stage::Narrate, |report| {
        let sampler = CaptionSampler { per_shot: config.analysis.captions_per_shot, seed: config.seed };
        let captions = describe_video(&shots, sampler, gateway, narrative_frame)?;
        let understanding = build_understanding(&captions, &info, gateway)?;
        let outline = extract_narrative(&understanding, &scored.spans, &info, gateway)?;
        let gaps = identify_gaps(&outline);
        report.gaps_found = gaps.len();
        let suggestions = if gaps.is_empty() {
            Vec::new()
        } else {
            let ctx = FillContext {
                style: &config.style,
                athlete_name: config.athlete_name.as_deref(),
                stage_count: config.stage_count,
                sentiment: top_sentiment(&scored.spans),
            };
            propose_fills(&gaps, &understanding, &ctx)?
        };
        let n = &mut project.narrative;
        n.captions = captions;
        n.understanding = Some(understanding);
        n.outline = Some(outline);
        n.suggestions = suggestions;
        project.gaps = gaps;
        Ok(())
    })?;

    let store = workspace.assets();
    let generated = runner.stage(Stage::Compose, |report| {
        let understanding = project.narrative.understanding.as_ref().expect("set by narrate");
        let sport = understanding.sport.as_str();
        let mut assets: Vec<BRollAsset> = Vec::new();
        for rec in &scored.records {
            let moment = moment_text(&project.narrative.captions, &rec.span);
            let req = FreezeRequest {
                highlight: &rec.span,
                samples: &rec.samples,
                sport,
                moment: &moment,
                style: &config.style,
            };
            assets.extend(make_freeze_frames(&req, config.density, gateway, broll_frame)?);
        }
        if let Some(name) = config.athlete_name.as_deref().filter(|n| !n.trim().is_empty()) {
            let hint = project.gaps.iter().find(|g| g.suggested_kind == BRollKind::T2);
            assets.extend(make_career_showcase(name, sport, config.stage_count, &config.style, hint, gateway)?);
        }
        for gap in project.gaps.iter().filter(|g| g.suggested_kind == BRollKind::T3) {
            let count = DEFAULT_CONTEXTUAL_COUNT * config.density;
            let batch = make_contextual(gap, understanding, &config.style, count, gateway)?;
            for (i, e) in &batch.failures {
                report.warn(format!("contextual still {i} for {} skipped: {e}", gap.role.as_str()));
            }
            assets.extend(batch.assets);
        }
        std::fs::create_dir_all(store.dir())?;
        let mut ids = Vec::new();
        for a in &assets {
            store.save(a)?;
            *report.assets_generated.entry(a.kind()).or_default() += 1;
            if !project.assets.contains_key(a.id()) {
                ids.push((a.kind(), a.id().to_owned(), a.meta.gap_hint.clone()));
            }
            project.register_asset(a.meta.clone());
        }
        Ok(ids)
    })?;

    runner.stage(Stage::Schedule, |report| {
        let mut counts: BTreeMap<BRollKind, usize> = BTreeMap::new();
        for (k, _, _) in &generated {
            *counts.entry(*k).or_default() += 1;
        }
        let assignment = assign_assets_to_gaps(&counts, &project.gaps);
        for (kind, n) in &assignment.unassigned {
            report.warn(format!(
                "{n} {} still(s) match no gap and stay in the suggestion library",
                kind.as_str()
            ));
        }
        let budget = config.gap_budget_frames(fps);
        let tf = config.transition_frames(fps);
        let transition = if tf == 0 { Transition::CUT } else { Transition::cross_fade(tf) };
        let mut pools: BTreeMap<BRollKind, VecDeque<(String, Option<NarrativeGap>)>> = BTreeMap::new();
        for (k, id, hint) in &generated {
            pools.entry(*k).or_default().push_back((id.clone(), hint.clone()));
        }
        let gaps = project.gaps.clone();
        for (gap, &n) in gaps.iter().zip(&assignment.per_gap) {
            if n == 0 {
                continue;
            }
            let pool = pools.get_mut(&gap.suggested_kind).expect("assigned kinds have assets");
            let ids = take_for_gap(pool, gap, n);
            project = insert_broll(&project, gap, &ids, budget, transition)?;
            report.insertions += 1;
        }
        if report.insertions == 0 {
            report.warn(if gaps.is_empty() {
                "no narrative gaps; the timeline is the source footage only".to_owned()
            } else {
                "no stills were inserted".to_owned()
            });
        }
        for kind in BRollKind::ALL {
            let placed = project.count_placed(kind);
            if placed > 0 {
                report.assets_inserted.insert(kind, placed);
            }
        }
        std::fs::create_dir_all(workspace.dir())?;
        save_project(&project, workspace.project_path())?;
        Ok(())
    })?;
    Ok(project)
}

/// Takes `n` ids, preferring stills generated for this gap.
fn take_for_gap(pool: &mut VecDeque<(String, Option<NarrativeGap>)>, gap: &NarrativeGap, n: usize) -> Vec<String> {
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let pos = pool.iter().position(|(_, h)| h.as_ref() == Some(gap)).unwrap_or(0);
        match pool.remove(pos) {
            Some((id, _)) => out.push(id),
            None => break,
        }
    }
    out
}

fn keypoint_detector(mode: &KeypointMode) -> Result<Box<dyn KeypointDetector>, PipelineError> {
    Ok(match mode {
        KeypointMode::None => Box::new(NullDetector),
        KeypointMode::Corner => Box::new(CornerDetector::default()),
        KeypointMode::Subprocess { command } => Box::new(
            SubprocessDetector::new(command.clone())
                .map_err(|e| PipelineError::InvalidConfig(format!("keypoint plugin: {e}")))?,
        ),
    })
}

/// One streaming pass that keeps only the sampled frames of each shot.
fn sample_shots(
    decoder: &dyn media::Decoder,
    source: &Path,
    info: &MediaInfo,
    shots: &[Shot],
    params: &SamplingParams,
) -> Result<Vec<SampledClip>, PipelineError> {
    let mut stream = media::extract_frames(decoder, source, info, 0..info.frame_count)?;
    let mut clips = Vec::with_capacity(shots.len());
    let mut next = 0u64;
    for shot in shots {
        let (offsets, stride) = sampling_offsets(shot.len(), params);
        let mut wanted = offsets.iter().map(|o| shot.start + o).peekable();
        let mut picked: Vec<Frame> = Vec::with_capacity(offsets.len());
        while next < shot.end {
            let f = stream.next().ok_or(media::IngestError::EmptyShot)??;
            if wanted.peek() == Some(&next) {
                wanted.next();
                picked.push(f.with_position(next, info.timestamp_of(next)));
            }
            next += 1;
        }
        clips.push(SampledClip::from_picked(shot.range(), stride, picked.iter(), params.target_size));
    }
    Ok(clips)
}

fn score_shots(
    shots: &[Shot],
    features: &[FeatureMatrix],
    config: &PipelineConfig,
    report: &mut PipelineReport,
) -> Result<Vec<ScoredShot>, PipelineError> {
    let params = NonLocalParams::default_for_features();
    let readout = Readout::default();
    let scores = features
        .par_iter()
        .map(|x| score_segment(x, &readout, &params))
        .collect::<Result<Vec<_>, _>>()?;
    let motion: Vec<f64> = features
        .iter()
        .map(|x| {
            let m = x.column(0);
            m.iter().sum::<f64>() / m.len() as f64
        })
        .collect();
    let motion_median = median(&motion).unwrap_or(0.0);
    let trends = score_trends(&scores);
    let sentiments: Vec<Sentiment> = features
        .iter()
        .zip(&trends)
        .map(|(x, &t)| classify_sentiment(x, motion_median, t))
        .collect();
    let plugin = config.analysis.scorer.clone().map(|e| ScorerPlugin::new(e, DEFAULT_PLUGIN_TIMEOUT));
    let mut out = Vec::with_capacity(shots.len());
    for (i, shot) in shots.iter().enumerate() {
        let (score, sentiment, fallback) = match &plugin {
            None => (scores[i], sentiments[i], false),
            Some(p) => {
                let r = score_via_plugin(p, *shot, &features[i], None, || Ok((scores[i], sentiments[i])))?;
                if let Some(e) = &r.error {
                    report.warn(format!("scorer failed on shot {}..{}: {e}", shot.start, shot.end));
                }
                (r.score, r.sentiment, r.fallback)
            }
        };
        out.push(ScoredShot { shot: *shot, score, sentiment, fallback_scored: fallback });
    }
    Ok(out)
}

/// Explicit intervals in source seconds. Each takes the best score and the
/// sentiment of the shot it overlaps most.
fn manual_spans(intervals: &[[f64; 2]], info: &MediaInfo, scored: &[ScoredShot]) -> Result<Vec<HighlightSpan>, PipelineError> {
    let mut spans = Vec::with_capacity(intervals.len());
    for &[s, e] in intervals {
        if !(s.is_finite() && e.is_finite() && s < e) {
            return Err(PipelineError::InvalidConfig(format!("manual highlight [{s}, {e}] is not an interval")));
        }
        let start = info.frame_at(s);
        let end = if e >= info.duration { info.frame_count } else { info.frame_at(e) };
        if end <= start {
            return Err(PipelineError::InvalidConfig(format!("manual highlight [{s}, {e}] is shorter than a frame")));
        }
        let shot = Shot::new(start, end);
        let overlap = |o: &Shot| end.min(o.end).saturating_sub(start.max(o.start));
        let touching: Vec<&ScoredShot> = scored.iter().filter(|x| overlap(&x.shot) > 0).collect();
        let score = touching.iter().map(|x| x.score).fold(f64::NEG_INFINITY, f64::max);
        let main = touching.iter().max_by(|a, b| overlap(&a.shot).cmp(&overlap(&b.shot)).then(b.shot.start.cmp(&a.shot.start)));
        spans.push(HighlightSpan {
            shot,
            score: if score.is_finite() { score } else { 0.0 },
            sentiment: main.map_or(Sentiment::Excitement, |m| m.sentiment),
            rank: 0,
            fallback_scored: touching.iter().any(|x| x.fallback_scored),
        });
    }
    let mut order: Vec<usize> = (0..spans.len()).collect();
    order.sort_by(|&a, &b| spans[b].score.total_cmp(&spans[a].score).then(spans[a].shot.start.cmp(&spans[b].shot.start)));
    for (rank, i) in order.into_iter().enumerate() {
        spans[i].rank = rank + 1;
    }
    spans.sort_by_key(|s| (s.shot.start, s.rank));
    Ok(spans)
}

pub(super) fn top_sentiment(spans: &[HighlightSpan]) -> Sentiment {
    spans.iter().min_by_key(|s| s.rank).map_or(Sentiment::Excitement, |s| s.sentiment)
}

/// Action description for a freeze-frame prompt: the first caption inside
/// the highlight, else a generic phrase.
pub fn moment_text(captions: &[Caption], span: &HighlightSpan) -> String {
    captions
        .iter()
        .find(|c| span.shot.contains(c.frame_index))
        .map(|c| c.text.trim().trim_end_matches('.').to_owned())
        .filter(|t| !t.is_empty())
        .unwrap_or_else(|| "the decisive play".to_owned())
}
