#![allow(dead_code)]

pub mod stub;

use handcue_core::cache::{CacheEntry, FeatureVector, VECTOR_LEN};
use handcue_core::corpus::{template, CORPUS_GESTURES};
use handcue_core::features::{extract_features, FeatureConfig, FeatureSet, Signature};
use handcue_core::gateway::{BackendError, RuleGesture};
use handcue_core::landmark::{Handedness, LandmarkFrame, Point3, Points};
use handcue_core::router::{Color, Command, Shape};
use proptest::prelude::*;

/// A template hand posed in the image: `scale` image units per palm width,
/// turned `rotation_deg` counter-clockwise on screen about the wrist.
pub fn posed(gesture: RuleGesture, wrist: (f64, f64), scale: f64, rotation_deg: f64) -> Points {
    let (s, c) = rotation_deg.to_radians().sin_cos();
    template(gesture).map(|p| {
        Point3::new(
            wrist.0 + scale * (p.x * c + p.y * s),
            wrist.1 + scale * (-p.x * s + p.y * c),
            scale * p.z,
        )
    })
}

pub fn frame_of(t_us: u64, pts: Points) -> LandmarkFrame {
    LandmarkFrame::new(t_us, Handedness::Right, 0.9, pts).unwrap()
}

/// Rotates image points about `pivot` by `deg`, counter-clockwise on screen.
pub fn rotate_about(pts: &Points, pivot: Point3, deg: f64) -> Points {
    let (s, c) = deg.to_radians().sin_cos();
    pts.map(|p| {
        let (dx, dy) = (p.x - pivot.x, p.y - pivot.y);
        Point3::new(pivot.x + dx * c + dy * s, pivot.y - dx * s + dy * c, p.z)
    })
}

/// Scales image points about `pivot`.
pub fn scale_about(pts: &Points, pivot: Point3, k: f64) -> Points {
    pts.map(|p| {
        Point3::new(
            pivot.x + k * (p.x - pivot.x),
            pivot.y + k * (p.y - pivot.y),
            p.z,
        )
    })
}

/// A scripted session: each gesture held for `hold_frames` at 30 fps while
/// the wrist drifts, NDJSON text.
pub fn session(gestures: &[RuleGesture], hold_frames: usize) -> String {
    let mut out = String::new();
    let mut t = 0u64;
    for (k, g) in gestures.iter().enumerate() {
        for i in 0..hold_frames {
            let drift = 0.002 * i as f64 * if k % 2 == 0 { 1.0 } else { -1.0 };
            let f = frame_of(t, posed(*g, (0.5 + drift, 0.8), 0.2, 0.0));
            out.push_str(&f.to_ndjson());
            out.push('\n');
            t += 33_333;
        }
    }
    out
}

pub fn fixture_session() -> String {
    use RuleGesture::*;
    session(&[VulcanSalute, Fist, FingerGun, ShakaSign, OpenPalm, SignOfTheHorns, VulcanSalute], 45)
}

/// Template hands with heavy per-joint perturbation, arbitrary rotation,
/// wrist at the image center and small enough to scale 2x in range.
pub fn hand() -> impl Strategy<Value = Points> {
    (
        0..CORPUS_GESTURES.len(),
        0.04..0.1f64,
        0.0..360.0f64,
        0.0..0.25f64,
        prop::array::uniform32(-1.0..1.0f64),
        prop::array::uniform10(-1.0..1.0f64),
    )
        .prop_map(|(g, scale, rot, amp, a, b)| {
            let noise: Vec<f64> = a.iter().chain(b.iter()).copied().collect();
            let mut pts = posed(CORPUS_GESTURES[g], (0.5, 0.5), scale, rot);
            for (k, p) in pts.iter_mut().enumerate().skip(1) {
                p.x += amp * scale * noise[2 * (k - 1)];
                p.y += amp * scale * noise[2 * (k - 1) + 1];
            }
            pts
        })
}

pub fn near_sector_edge(angle_deg: f64) -> bool {
    let r = (angle_deg + 22.5).rem_euclid(45.0);
    r < 1e-6 || 45.0 - r < 1e-6
}

/// A held gesture: (gesture, frames, per-frame wrist step, rotation).
pub type Segment = (usize, usize, (f64, f64), f64);

pub fn segments() -> impl Strategy<Value = Vec<Segment>> {
    prop::collection::vec(
        (
            0..CORPUS_GESTURES.len(),
            1..40usize,
            (-0.004..0.004f64, -0.004..0.004f64),
            -30.0..30.0f64,
        ),
        1..6,
    )
}

/// Feature stream for a sequence of held gestures drifting across the image.
pub fn stream(segs: &[Segment], frame_us: u64) -> Vec<FeatureSet> {
    let fc = FeatureConfig::default();
    let mut wrist = (0.5, 0.8);
    let mut t = 0;
    let mut out = Vec::new();
    for &(g, n, step, rot) in segs {
        for _ in 0..n {
            let pts = posed(CORPUS_GESTURES[g], wrist, 0.12, rot);
            out.push(extract_features(&frame_of(t, pts), &fc).unwrap());
            wrist = ((wrist.0 + step.0).clamp(0.35, 0.65), (wrist.1 + step.1).clamp(0.6, 0.9));
            t += frame_us;
        }
    }
    out
}

/// Inserts a frame between each pair: midpoint time and position, the
/// earlier frame's discrete features.
pub fn doubled(frames: &[FeatureSet]) -> Vec<FeatureSet> {
    let mut out = Vec::new();
    for w in frames.windows(2) {
        out.push(w[0].clone());
        let mut mid = w[0].clone();
        mid.source_timestamp_us = (w[0].source_timestamp_us + w[1].source_timestamp_us) / 2;
        mid.hand_center = (
            (w[0].hand_center.0 + w[1].hand_center.0) / 2.0,
            (w[0].hand_center.1 + w[1].hand_center.1) / 2.0,
        );
        mid.wrist = ((w[0].wrist.0 + w[1].wrist.0) / 2.0, (w[0].wrist.1 + w[1].wrist.1) / 2.0);
        out.push(mid);
    }
    out.extend(frames.last().cloned());
    out
}

pub fn dedup(sigs: Vec<Signature>) -> Vec<Signature> {
    let mut out: Vec<Signature> = Vec::new();
    for s in sigs {
        if out.last() != Some(&s) {
            out.push(s);
        }
    }
    out
}

pub fn cache_entry(values: Vec<f64>, name: &str, created_at_us: u64) -> CacheEntry {
    CacheEntry {
        vector: FeatureVector::from_raw(values).unwrap(),
        context_text: format!("context for {name}\n"),
        name: name.to_string(),
        meaning: format!("{name} meaning"),
        task_text: "stop".to_string(),
        created_at_us,
        hit_count: 0,
    }
}

/// Sparse small-integer vectors so exact ties and exact repeats occur.
pub fn raw_vector() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(prop_oneof![4 => Just(0.0), 1 => (-2..=2i32).prop_map(f64::from)], VECTOR_LEN)
        .prop_filter("non-zero", |v| v.iter().any(|x| *x != 0.0))
}

/// Plain scan written from the definition: largest dot product of the
/// normalized vectors, earliest entry on ties. Index and cosine.
pub fn scan_oracle(stored: &[(Vec<f64>, u64)], query: &[f64]) -> (usize, f64) {
    let unit = |v: &[f64]| {
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.iter().map(|x| x / n).collect::<Vec<f64>>()
    };
    let q = unit(query);
    let mut best: Option<(usize, f64, u64)> = None;
    for (i, (v, t)) in stored.iter().enumerate() {
        let c = if v == query {
            1.0
        } else {
            unit(v).iter().zip(&q).map(|(a, b)| a * b).sum::<f64>().clamp(-1.0, 1.0)
        };
        if best.is_none_or(|(_, bc, bt)| c > bc || (c == bc && *t < bt)) {
            best = Some((i, c, *t));
        }
    }
    let (i, c, _) = best.expect("at least one stored vector");
    (i, c)
}

/// Phrases the default registry understands, with plausible arguments.
pub fn task_phrase() -> impl Strategy<Value = String> {
    let color = prop::sample::select(vec!["red", "green", "blue", "yellow"]);
    let coord = -0.5..0.5f64;
    prop_oneof![
        Just("go home".to_string()),
        Just("draw a circle".to_string()),
        Just("draw a straight line please".to_string()),
        Just("stop moving now".to_string()),
        color.prop_map(|c| format!("push the {c} cube")),
        (coord.clone(), coord.clone(), 0.0..0.5f64)
            .prop_map(|(x, y, z)| format!("move to {x:.3} {y:.3} {z:.3}")),
        "[a-z0-9]{1,8}".prop_map(|id| format!("activate program {id}")),
        "[a-z ]{0,30}",
    ]
}

/// Case changes, padding and punctuation hugging the words.
pub fn disguise(text: &str, seed: &[u8]) -> String {
    const LEAD: [&str; 5] = ["", "(", "\"", "'", "["];
    const TRAIL: [&str; 7] = ["", ",", ".", "!", "?", ")", ";"];
    const GAP: [&str; 4] = [" ", "  ", "\t", " \n "];
    let mut out = String::from(GAP[seed[0] as usize % GAP.len()]);
    for (i, word) in text.split_whitespace().enumerate() {
        let s = seed[(i + 1) % seed.len()] as usize;
        let word = if s % 2 == 0 { word.to_uppercase() } else { word.to_string() };
        out.push_str(LEAD[s % LEAD.len()]);
        out.push_str(&word);
        out.push_str(TRAIL[(s / 5) % TRAIL.len()]);
        out.push_str(GAP[(s / 3) % GAP.len()]);
    }
    out
}

pub fn command() -> impl Strategy<Value = Command> {
    let color = prop::sample::select(Color::ALL.to_vec());
    prop_oneof![
        (-1.0..1.0f64, -1.0..1.0f64, -0.5..1.0f64).prop_map(|(x, y, z)| Command::MoveTo { x, y, z }),
        (-0.3..=0.3f64, -0.3..=0.3f64, 0.0..=0.4f64).prop_map(|(x, y, z)| Command::MoveTo { x, y, z }),
        color.prop_map(|color| Command::PushObject { color }),
        Just(Command::DrawFigure { shape: Shape::Circle }),
        Just(Command::DrawFigure { shape: Shape::Line }),
        "[a-z]{1,6}".prop_map(|id| Command::ActivateProgram { id }),
        Just(Command::Stop),
    ]
}

pub fn explainer_reply() -> impl Strategy<Value = Result<String, BackendError>> {
    let line = prop_oneof![
        Just("push the blue cube".to_string()),
        Just("move to 0.9 0 0".to_string()),
        Just("move to 0.1 0.1 0.1".to_string()),
        Just("activate program".to_string()),
        Just("draw line".to_string()),
        ".{0,20}",
    ];
    prop_oneof![
        3 => prop::collection::vec(line, 0..5).prop_map(|ls| Ok(ls.join("\n"))),
        1 => Just(Err(BackendError::Timeout)),
        1 => Just(Err(BackendError::HttpStatus(503))),
    ]
}
