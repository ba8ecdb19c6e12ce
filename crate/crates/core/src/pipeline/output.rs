use std::sync::Arc;

use super::{PipelineError, Workspace};
use crate::media::Decoder;
use crate::render::{self, DecoderSource, RenderError, RenderStats, SinkConfig, StoreAssets};
use crate::timeline::TimelineProject;
use crate::Frame;

fn check_assets(project: &TimelineProject, workspace: &Workspace) -> Result<(), RenderError> {
    let store = workspace.assets();
    for id in project.clips.iter().filter_map(|c| c.asset_id()) {
        if !store.contains(id) {
            return Err(RenderError::MissingAsset(id.to_owned()));
        }
    }
    Ok(())
}

/// Renders the whole timeline. Every referenced still must exist before
/// the first frame is written.
pub fn render_project(
    project: &TimelineProject,
    workspace: &Workspace,
    decoder: Arc<dyn Decoder>,
    sink: &SinkConfig,
) -> Result<RenderStats, PipelineError> {
    let plan = render::plan(project)?;
    check_assets(project, workspace)?;
    let mut source = DecoderSource::new(decoder, &project.source, project.media.clone());
    let mut assets = StoreAssets::new(workspace.assets());
    let sink = sink.open(plan.width, plan.height, plan.frame_rate)?;
    Ok(render::render(&plan, &mut source, &mut assets, sink)?)
}

/// Output frame `n`, composed on demand.
pub fn thumbnail(
    project: &TimelineProject,
    workspace: &Workspace,
    decoder: Arc<dyn Decoder>,
    n: u64,
) -> Result<Frame, PipelineError> {
    let plan = render::plan(project)?;
    let mut source = DecoderSource::new(decoder, &project.source, project.media.clone());
    let mut assets = StoreAssets::new(workspace.assets());
    Ok(render::render_thumbnail(&plan, n, &mut source, &mut assets)?)
}
