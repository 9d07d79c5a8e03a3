//! Synthetic landmark corpus: canonical joint templates per gesture, placed
//! in the image with seeded scale, rotation, handedness and noise.

use std::fs;
use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::gateway::RuleGesture;
use crate::landmark::{palm_width, Handedness, LandmarkFrame, Point3, Points};

/// Gestures written by the generator, in output order.
pub const CORPUS_GESTURES: [RuleGesture; 6] = [
    RuleGesture::VulcanSalute,
    RuleGesture::ShakaSign,
    RuleGesture::FingerGun,
    RuleGesture::SignOfTheHorns,
    RuleGesture::OpenPalm,
    RuleGesture::Fist,
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CorpusConfig {
    pub per_class: usize,
    /// Standard deviation of positional noise, in palm widths.
    pub noise_sigma: f64,
    pub seed: u64,
    pub frames_per_sample: usize,
    pub fps: u32,
    /// Palm width in image units before scale jitter.
    pub base_scale: f64,
    pub scale_jitter: f64,
    pub rotation_jitter_deg: f64,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self {
            per_class: 200,
            noise_sigma: 0.01,
            seed: 7,
            frames_per_sample: 12,
            fps: 30,
            base_scale: 0.3,
            scale_jitter: 0.2,
            rotation_jitter_deg: 15.0,
        }
    }
}

const WRIST: (f64, f64) = (0.0, 0.0);
const MCP: [(f64, f64); 4] = [(-0.48, -0.95), (-0.15, -1.0), (0.17, -0.96), (0.48, -0.86)];
const THUMB_BASE: (f64, f64) = (-0.35, -0.25);

fn pt((x, y): (f64, f64), z: f64) -> Point3 {
    Point3::new(x, y, z)
}

fn lerp(a: (f64, f64), b: (f64, f64), t: f64) -> (f64, f64) {
    (a.0 + (b.0 - a.0) * t, a.1 + (b.1 - a.1) * t)
}

/// Joint chain of a straight finger from its MCP to `tip`.
fn straight(mcp: (f64, f64), tip: (f64, f64)) -> [Point3; 4] {
    [
        pt(mcp, 0.0),
        pt(lerp(mcp, tip, 0.46), -0.03),
        pt(lerp(mcp, tip, 0.74), -0.05),
        pt(tip, -0.06),
    ]
}

/// Finger folded toward the palm: the middle phalanx doubles back.
fn curled(mcp: (f64, f64)) -> [Point3; 4] {
    [
        pt(mcp, 0.0),
        pt((mcp.0, mcp.1 - 0.30), -0.08),
        pt((mcp.0, mcp.1 - 0.05), -0.10),
        pt((mcp.0, mcp.1 + 0.12), -0.06),
    ]
}

fn thumb_out() -> [Point3; 4] {
    [
        pt(THUMB_BASE, 0.0),
        pt((-0.62, -0.50), -0.02),
        pt((-0.86, -0.72), -0.04),
        pt((-1.08, -0.92), -0.05),
    ]
}

/// Thumb pointing sideways, away from the index finger.
fn thumb_side() -> [Point3; 4] {
    [
        pt(THUMB_BASE, 0.0),
        pt((-0.62, -0.30), -0.02),
        pt((-0.90, -0.34), -0.04),
        pt((-1.18, -0.38), -0.05),
    ]
}

/// Thumb tucked across the palm.
fn thumb_in() -> [Point3; 4] {
    [
        pt(THUMB_BASE, 0.0),
        pt((-0.55, -0.50), -0.02),
        pt((-0.45, -0.75), -0.04),
        pt((-0.20, -0.78), -0.05),
    ]
}

fn assemble(thumb: [Point3; 4], fingers: [[Point3; 4]; 4]) -> Points {
    let mut pts = [pt(WRIST, 0.0); 21];
    pts[1..5].copy_from_slice(&thumb);
    for (k, chain) in fingers.iter().enumerate() {
        pts[5 + 4 * k..9 + 4 * k].copy_from_slice(chain);
    }
    pts
}

/// Canonical right-hand pose in hand units: wrist at the origin, fingers
/// up (negative y), palm width close to 1.
pub fn template(gesture: RuleGesture) -> Points {
    let [i, m, r, p] = MCP;
    match gesture {
        RuleGesture::VulcanSalute => assemble(
            thumb_out(),
            [
                straight(i, (-0.40, -1.90)),
                straight(m, (-0.25, -1.90)),
                straight(r, (0.20, -1.90)),
                straight(p, (0.32, -1.81)),
            ],
        ),
        RuleGesture::ShakaSign => assemble(
            thumb_out(),
            [curled(i), curled(m), curled(r), straight(p, (0.95, -1.55))],
        ),
        RuleGesture::FingerGun => assemble(
            thumb_side(),
            [straight(i, (-0.45, -1.95)), curled(m), curled(r), curled(p)],
        ),
        RuleGesture::SignOfTheHorns => assemble(
            thumb_in(),
            [
                straight(i, (-0.70, -1.90)),
                curled(m),
                curled(r),
                straight(p, (0.75, -1.70)),
            ],
        ),
        RuleGesture::OpenPalm | RuleGesture::Unknown => assemble(
            thumb_out(),
            [
                straight(i, (-0.590, -1.850)),
                straight(m, (-0.254, -1.948)),
                straight(r, (0.082, -1.850)),
                straight(p, (0.418, -1.752)),
            ],
        ),
        RuleGesture::Fist => assemble(thumb_in(), [curled(i), curled(m), curled(r), curled(p)]),
    }
}

/// Where a sample sits in the image.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Placement {
    pub handedness: Handedness,
    /// Image units per hand unit.
    pub scale: f64,
    /// Counter-clockwise on screen, degrees.
    pub rotation_deg: f64,
    pub wrist: (f64, f64),
    pub confidence: f64,
}

/// Extra in-plane turn and anchor per gesture. The finger gun points
/// sideways, so it is turned a quarter and anchored left of center.
fn pose_frame(gesture: RuleGesture) -> (f64, (f64, f64)) {
    match gesture {
        RuleGesture::FingerGun => (-90.0, (0.22, 0.55)),
        _ => (0.0, (0.5, 0.85)),
    }
}

/// Upright, unjittered right hand at the gesture's anchor.
pub fn neutral_placement(gesture: RuleGesture, scale: f64) -> Placement {
    Placement {
        handedness: Handedness::Right,
        scale,
        rotation_deg: 0.0,
        wrist: pose_frame(gesture).1,
        confidence: 1.0,
    }
}

/// Maps template points into image coordinates.
pub fn place(gesture: RuleGesture, placement: &Placement) -> Points {
    place_points(&template(gesture), gesture, placement)
}

fn place_points(points: &Points, gesture: RuleGesture, placement: &Placement) -> Points {
    let (base_turn, _) = pose_frame(gesture);
    // Screen y grows downward, so a CCW screen turn is a CW turn in (x, y).
    let theta = (placement.rotation_deg + base_turn).to_radians();
    let (s, c) = theta.sin_cos();
    let k = placement.scale;
    points.map(|p| {
        let x = k * (p.x * c + p.y * s);
        let y = k * (-p.x * s + p.y * c);
        let mut img_x = placement.wrist.0 + x;
        if placement.handedness == Handedness::Left {
            img_x = 1.0 - img_x;
        }
        Point3::new(img_x, placement.wrist.1 + y, k * p.z)
    })
}

/// Palm width of a placed template, computed from the template geometry.
pub fn expected_hand_size(gesture: RuleGesture, placement: &Placement) -> f64 {
    palm_width(&template(gesture)).expect("templates are not degenerate") * placement.scale
}

fn round6(v: f64) -> f64 {
    (v * 1e6).round() / 1e6
}

fn sample_rng(seed: u64, class: usize, sample: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((class as u64) << 32) | sample as u64);
    rng
}

fn draw_placement(gesture: RuleGesture, cfg: &CorpusConfig, rng: &mut ChaCha8Rng) -> Placement {
    let (_, anchor) = pose_frame(gesture);
    let handedness = if rng.random_bool(0.5) {
        Handedness::Right
    } else {
        Handedness::Left
    };
    let scale = cfg.base_scale * (1.0 + rng.random_range(-cfg.scale_jitter..=cfg.scale_jitter));
    let rotation_deg = rng.random_range(-cfg.rotation_jitter_deg..=cfg.rotation_jitter_deg);
    let wrist = (
        anchor.0 + rng.random_range(-0.03..=0.03),
        anchor.1 + rng.random_range(-0.03..=0.03),
    );
    let confidence = round6(rng.random_range(0.8..=1.0));
    Placement {
        handedness,
        scale,
        rotation_deg,
        wrist,
        confidence,
    }
}

/// One generated session.
#[derive(Debug, Clone)]
pub struct Sample {
    pub gesture: RuleGesture,
    pub id: String,
    pub placement: Placement,
    pub frames: Vec<LandmarkFrame>,
}

impl Sample {
    pub fn to_ndjson(&self) -> String {
        self.frames.iter().map(|f| f.to_ndjson() + "\n").collect()
    }
}

pub fn generate_sample(gesture: RuleGesture, index: usize, cfg: &CorpusConfig) -> Sample {
    let class = CORPUS_GESTURES.iter().position(|g| *g == gesture).unwrap_or(CORPUS_GESTURES.len());
    let mut rng = sample_rng(cfg.seed, class, index);
    let placement = draw_placement(gesture, cfg, &mut rng);
    let base = template(gesture);
    let noise = Normal::new(0.0, cfg.noise_sigma.max(0.0)).expect("finite sigma");
    let frames = (0..cfg.frames_per_sample)
        .map(|i| {
            let t_us = (i as f64 * 1e6 / cfg.fps as f64).round() as u64;
            let noisy = base.map(|p| {
                let mut jitter = || if cfg.noise_sigma > 0.0 { noise.sample(&mut rng) } else { 0.0 };
                Point3::new(p.x + jitter(), p.y + jitter(), p.z + jitter())
            });
            let pts = place_points(&noisy, gesture, &placement).map(|p| {
                Point3::new(round6(p.x.clamp(0.0, 1.0)), round6(p.y.clamp(0.0, 1.0)), round6(p.z))
            });
            LandmarkFrame::new(t_us, placement.handedness, placement.confidence, pts)
                .expect("generated frames are in range")
        })
        .collect();
    Sample {
        gesture,
        id: format!("{index:04}"),
        placement,
        frames,
    }
}

/// Every sample of the corpus, class by class.
pub fn generate(cfg: &CorpusConfig) -> impl Iterator<Item = Sample> + '_ {
    CORPUS_GESTURES
        .into_iter()
        .flat_map(move |g| (0..cfg.per_class).map(move |i| generate_sample(g, i, cfg)))
}

/// Writes `<dir>/<label>/<id>.ndjson` for every sample.
pub fn write_corpus(dir: &Path, cfg: &CorpusConfig) -> std::io::Result<usize> {
    let mut written = 0;
    for gesture in CORPUS_GESTURES {
        fs::create_dir_all(dir.join(gesture.label()))?;
    }
    for sample in generate(cfg) {
        let path = dir.join(sample.gesture.label()).join(format!("{}.ndjson", sample.id));
        let mut file = fs::File::create(path)?;
        file.write_all(sample.to_ndjson().as_bytes())?;
        written += 1;
    }
    Ok(written)
}
