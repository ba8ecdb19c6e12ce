//! Regenerates the bundled demo corpus: the synthetic match video, its
//! pipeline config, and replay fixtures recorded from the offline stub.
//!
//! cargo run -p mangaroll --example record_fixtures -- fixtures/corpus

use std::path::PathBuf;
use std::sync::Arc;

use mangaroll::genai::stub::{StubTransport, STUB_ATHLETE};
use mangaroll::genai::{FixtureStore, Gateway, GatewayMode};
use mangaroll::media::rawvideo::{write_raw_video, RawVideoDecoder};
use mangaroll::pipeline::{self, PipelineEnv, Workspace};
use mangaroll::synth;
use mangaroll::timeline::{PipelineConfig, SuggestionLevel};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "fixtures/corpus".into()));
    std::fs::create_dir_all(&out)?;
    let video = out.join("match.mrv");
    write_raw_video(&video, synth::corpus_rate(), synth::corpus_frames().iter())?;

    let config = PipelineConfig {
        seed: 42,
        athlete_name: Some(STUB_ATHLETE.to_owned()),
        ..Default::default()
    };
    let mut cfg_bytes = serde_json::to_vec_pretty(&config)?;
    cfg_bytes.push(b'\n');
    std::fs::write(out.join("config.json"), cfg_bytes)?;

    let store = FixtureStore::new(out.join("replay"));
    let gateway = Gateway::new(Arc::new(StubTransport::new()), GatewayMode::Record(store.clone()));
    let env = PipelineEnv::new(Arc::new(RawVideoDecoder), Arc::new(gateway));
    let scratch = tempfile::tempdir()?;
    let ws = Workspace::in_dir(scratch.path());
    let (mut project, report) = pipeline::run(&video, &config, &env, &ws)?;
    pipeline::suggest(&mut project, SuggestionLevel::Proactive, &env, &ws)?;
    println!(
        "recorded {} responses; {} shots, {} gaps, {} insertions",
        store.len(),
        report.shots_found,
        report.gaps_found,
        report.insertions
    );
    Ok(())
}
