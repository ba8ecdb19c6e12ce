//! Offline stand-in for the three services. Responses are pure functions of
//! the request, so recording through the stub yields stable fixtures.

use std::collections::VecDeque;
use std::sync::Mutex;

use base64::Engine;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use super::{ServiceKind, ServiceRequest, Transport, TransportError};
use crate::Frame;

pub const STUB_SPORT: &str = "basketball";
pub const STUB_ATHLETE: &str = "Kai Moreno";

#[derive(Default)]
pub struct StubTransport {
    scripted: Mutex<VecDeque<Result<Vec<u8>, TransportError>>>,
    log: Mutex<Vec<ServiceRequest>>,
}

impl StubTransport {
    pub fn new() -> Self {
        Self::default()
    }

    /// Queues a reply returned ahead of the generated ones.
    pub fn push_reply(&self, reply: Result<Vec<u8>, TransportError>) {
        self.scripted.lock().unwrap().push_back(reply);
    }

    pub fn requests(&self) -> Vec<ServiceRequest> {
        self.log.lock().unwrap().clone()
    }

    pub fn call_count(&self) -> usize {
        self.log.lock().unwrap().len()
    }

    pub fn respond(request: &ServiceRequest) -> Result<Vec<u8>, TransportError> {
        match request.kind {
            ServiceKind::Caption => caption_for(request).map(String::into_bytes),
            ServiceKind::Complete => Ok(completion_for(request).into_bytes()),
            ServiceKind::GenerateImage => Ok(image_for(request)),
        }
    }
}

impl Transport for StubTransport {
    fn send(&self, request: &ServiceRequest) -> Result<Vec<u8>, TransportError> {
        self.log.lock().unwrap().push(request.clone());
        if let Some(reply) = self.scripted.lock().unwrap().pop_front() {
            return reply;
        }
        Self::respond(request)
    }
}

fn caption_for(request: &ServiceRequest) -> Result<String, TransportError> {
    let png = request
        .payload_str("image_png_b64")
        .and_then(|b| base64::engine::general_purpose::STANDARD.decode(b).ok())
        .ok_or_else(|| TransportError::Permanent("missing image".into()))?;
    let frame = Frame::from_png(&png, 0, 0.0).map_err(|e| TransportError::Permanent(e.to_string()))?;
    let n = frame.pixel_count() as f64;
    let mut sum = [0.0f64; 3];
    for px in frame.pixels().chunks_exact(3) {
        for c in 0..3 {
            sum[c] += f64::from(px[c]);
        }
    }
    let mean = sum.map(|s| s / n);
    let colour = colour_name(mean);
    let luma = 0.299 * mean[0] + 0.587 * mean[1] + 0.114 * mean[2];
    let action = [
        "a player dunks a basketball",
        "a player dribbles past a defender",
        "players jostle for a rebound under the basket",
        "a player shoots a jump shot",
    ][(luma as usize * 4 / 256).min(3)];
    Ok(format!("{action} on a court lit in {colour}"))
}

fn colour_name([r, g, b]: [f64; 3]) -> &'static str {
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    if max - min < 24.0 {
        return if max < 64.0 {
            "black"
        } else if max > 192.0 {
            "white"
        } else {
            "grey"
        };
    }
    if max == r {
        if g > 0.6 * r { "yellow" } else { "red" }
    } else if max == g {
        if b > 0.6 * g { "teal" } else { "green" }
    } else if r > 0.6 * b {
        "purple"
    } else {
        "blue"
    }
}

fn completion_for(request: &ServiceRequest) -> String {
    let prompt = request.payload_str("prompt").unwrap_or_default();
    match request.payload_str("template").unwrap_or_default() {
        "understanding/v1" => understanding_reply(prompt),
        "narrative/v1" => narrative_reply(prompt),
        "athlete_journey/v1" => career_reply(prompt),
        _ => "ok".to_owned(),
    }
}

fn understanding_reply(prompt: &str) -> String {
    let captions = prompt.lines().filter(|l| l.starts_with("- ")).count();
    json!({
        "summary": format!(
            "A {STUB_SPORT} game seen through {captions} sampled moments. {STUB_ATHLETE} drives the offence while the coach directs from the sideline and the crowd reacts."
        ),
        "sport": STUB_SPORT,
        "entities": [
            {"name": STUB_ATHLETE, "role": "athlete"},
            {"name": "the point guard", "role": "teammate"},
            {"name": "the head coach", "role": "coach"},
            {"name": "the home crowd", "role": "spectator"},
        ],
    })
    .to_string()
}

fn narrative_reply(prompt: &str) -> String {
    let duration = prompt
        .lines()
        .find_map(|l| l.strip_prefix("Video duration: "))
        .and_then(|l| l.split_whitespace().next())
        .and_then(|v| v.parse::<f64>().ok())
        .unwrap_or(10.0);
    let at = |f: f64| (duration * f * 1000.0).round() / 1000.0;
    json!({
        "elements": [
            {"role": "opening", "status": "missing", "anchor": [0.0, at(0.15)], "note": "The video starts in the middle of play without introducing the athlete."},
            {"role": "conflict", "status": "covered", "anchor": [at(0.15), at(0.5)], "note": "Both teams trade possessions."},
            {"role": "climax", "status": "covered", "anchor": [at(0.5), at(0.85)], "note": "The decisive play."},
            {"role": "conclusion", "status": "missing", "anchor": [at(0.85), at(1.0)], "note": "No reactions are shown after the decisive play."},
        ]
    })
    .to_string()
}

fn career_reply(prompt: &str) -> String {
    let number_after = |marker: &str| {
        prompt.find(marker).and_then(|i| {
            prompt[i + marker.len()..]
                .split_whitespace()
                .next()
                .and_then(|w| w.parse::<usize>().ok())
        })
    };
    let n = number_after("Output exactly ")
        .or_else(|| number_after("career into "))
        .unwrap_or(3)
        .clamp(1, 12);
    const PHASES: [&str; 6] = [
        "Grows up playing on neighbourhood courts and joins a youth academy",
        "Becomes the leading scorer of a college team",
        "Is drafted and earns a starting place in the professional league",
        "Wins a national championship as team captain",
        "Represents the national team at an international tournament",
        "Retires and coaches young players",
    ];
    (0..n)
        .map(|i| format!("Stage {}: {}.", i + 1, PHASES[i * PHASES.len() / n]))
        .collect::<Vec<_>>()
        .join("\n")
}

fn image_for(request: &ServiceRequest) -> Vec<u8> {
    let mut seed = [0u8; 32];
    hex::decode_to_slice(&request.idempotency_key, &mut seed).unwrap_or(());
    let mut rng = ChaCha8Rng::from_seed(seed);
    let prompt = request.payload_str("prompt").unwrap_or_default();
    let mono = !prompt.contains("full-color");
    let (w, h) = (96u32, 64u32);
    let ink: [u8; 3] = if mono {
        [20, 20, 20]
    } else {
        [rng.random_range(0..200), rng.random_range(0..200), rng.random_range(0..200)]
    };
    let (cx, cy) = (rng.random_range(20..76) as f64, rng.random_range(16..48) as f64);
    let rays = rng.random_range(12..24) as f64;
    let dot = rng.random_range(3..6);
    let mut px = Vec::with_capacity((w * h * 3) as usize);
    for y in 0..h {
        for x in 0..w {
            let (dx, dy) = (x as f64 - cx, y as f64 - cy);
            let angle = dy.atan2(dx);
            let ray = ((angle * rays).sin() > 0.85) && dx.hypot(dy) > 10.0;
            let tone = (x % dot == 0 && y % dot == 0) && dx.hypot(dy) < 18.0;
            let c = if ray || tone { ink } else { [250, 250, 245] };
            px.extend_from_slice(&c);
        }
    }
    Frame::new(0, 0.0, w, h, px)
        .expect("stub image geometry is consistent")
        .to_png()
}
