//! Deterministic test sequences: a textured stick figure moving over a
//! static textured background, with the ground-truth joint positions.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use crate::io::PoseDocument;
use crate::model::{Frame, Joint, Pose, JOINT_COUNT};

/// 32-bit linear congruential generator.
#[derive(Debug, Clone)]
pub struct Lcg(pub u32);

impl Lcg {
    pub fn next_u32(&mut self) -> u32 {
        self.0 = self.0.wrapping_mul(1664525).wrapping_add(1013904223);
        self.0
    }

    /// High byte of the next state.
    pub fn next_byte(&mut self) -> u8 {
        (self.next_u32() >> 24) as u8
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MotionClass {
    Fast,
    Moderate,
    Slow,
}

impl MotionClass {
    pub const ALL: [MotionClass; 3] = [MotionClass::Fast, MotionClass::Moderate, MotionClass::Slow];

    /// Target peak joint displacement between consecutive frames, in pixels.
    pub fn step_pixels(self) -> f64 {
        match self {
            MotionClass::Fast => 8.0,
            MotionClass::Moderate => 4.0,
            MotionClass::Slow => 1.0,
        }
    }

    /// Angular frequency of the limb swing, radians per frame.
    pub fn omega(self) -> f64 {
        match self {
            MotionClass::Fast => 2.0 * PI / 16.0,
            MotionClass::Moderate => 2.0 * PI / 24.0,
            MotionClass::Slow => 2.0 * PI / 32.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            MotionClass::Fast => "fast",
            MotionClass::Moderate => "moderate",
            MotionClass::Slow => "slow",
        }
    }
}

impl fmt::Display for MotionClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MotionClass {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "fast" => Ok(MotionClass::Fast),
            "moderate" => Ok(MotionClass::Moderate),
            "slow" => Ok(MotionClass::Slow),
            other => Err(format!("unknown motion class {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SyntheticParams {
    pub width: usize,
    pub height: usize,
    pub frames: usize,
    pub seed: u32,
    pub motion: MotionClass,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSequence {
    pub frames: Vec<Frame>,
    pub poses: Vec<Pose>,
}

impl SyntheticSequence {
    pub fn pose_document(&self, name: &str) -> PoseDocument {
        PoseDocument {
            name: name.to_string(),
            width: self.frames[0].width(),
            height: self.frames[0].height(),
            poses: self.poses.clone(),
        }
    }
}

/// Bones of the stick figure as joint index pairs.
pub const BONES: [(Joint, Joint); 14] = [
    (Joint::Head, Joint::LeftShoulder),
    (Joint::Head, Joint::RightShoulder),
    (Joint::LeftShoulder, Joint::RightShoulder),
    (Joint::LeftShoulder, Joint::LeftElbow),
    (Joint::LeftElbow, Joint::LeftWrist),
    (Joint::RightShoulder, Joint::RightElbow),
    (Joint::RightElbow, Joint::RightWrist),
    (Joint::LeftShoulder, Joint::LeftHip),
    (Joint::RightShoulder, Joint::RightHip),
    (Joint::LeftHip, Joint::RightHip),
    (Joint::LeftHip, Joint::LeftKnee),
    (Joint::LeftKnee, Joint::LeftAnkle),
    (Joint::RightHip, Joint::RightKnee),
    (Joint::RightKnee, Joint::RightAnkle),
];

/// Rest pose on a 128x128 canvas, scaled to the actual canvas.
const REST: [(f64, f64); JOINT_COUNT] = [
    (64.0, 26.0),
    (53.0, 42.0),
    (75.0, 42.0),
    (47.0, 57.0),
    (81.0, 57.0),
    (43.0, 71.0),
    (85.0, 71.0),
    (57.0, 73.0),
    (71.0, 73.0),
    (55.0, 89.0),
    (73.0, 89.0),
    (53.0, 104.0),
    (75.0, 104.0),
];

/// Swing weights (x, y) and phase per joint; wrists swing widest, limbs on
/// opposite sides swing in antiphase.
const SWING: [(f64, f64, f64); JOINT_COUNT] = [
    (0.70, 0.10, 0.0),
    (0.70, 0.10, 0.0),
    (0.70, 0.10, 0.0),
    (0.85, 0.30, 0.0),
    (0.85, 0.30, PI),
    (1.00, 0.45, 0.0),
    (1.00, 0.45, PI),
    (0.70, 0.05, 0.0),
    (0.70, 0.05, 0.0),
    (0.85, 0.20, PI),
    (0.85, 0.20, 0.0),
    (1.00, 0.25, PI),
    (1.00, 0.25, 0.0),
];

const DISC_RADIUS: i64 = 9;
const HEAD_RADIUS: i64 = 12;
const BAR_HALF_WIDTH: f64 = 2.5;
const TEX_SIZE: i64 = 64;

/// Integer joint positions for frame `t` (0-based). Frame 0 is the rest
/// pose; offsets follow `A * w * (sin(wt + phase) - sin(phase))` in x and the
/// matching cosine term in y.
pub fn joint_positions(params: &SyntheticParams, t: usize) -> [(i64, i64); JOINT_COUNT] {
    let sx = params.width as f64 / 128.0;
    let sy = params.height as f64 / 128.0;
    let omega = params.motion.omega();
    let amp = params.motion.step_pixels() / omega;
    let wt = omega * t as f64;
    std::array::from_fn(|j| {
        let (bx, by) = REST[j];
        let (wx, wy, ph) = SWING[j];
        let x = bx * sx + amp * wx * ((wt + ph).sin() - ph.sin());
        let y = by * sy + amp * wy * ((wt + ph).cos() - ph.cos());
        (
            (x.round() as i64).clamp(0, params.width as i64 - 1),
            (y.round() as i64).clamp(0, params.height as i64 - 1),
        )
    })
}

/// Largest displacement of any joint between consecutive frames.
pub fn max_step_displacement(poses: &[Pose]) -> f64 {
    poses
        .windows(2)
        .flat_map(|w| {
            w[0].joints()
                .iter()
                .zip(w[1].joints())
                .map(|(a, b)| (a.x - b.x).hypot(a.y - b.y))
                .collect::<Vec<_>>()
        })
        .fold(0.0, f64::max)
}

/// Mean joint displacement of each frame relative to the first frame.
pub fn displacement_from_first(poses: &[Pose]) -> Vec<f64> {
    let first = poses[0].joints();
    poses
        .iter()
        .map(|p| {
            p.joints()
                .iter()
                .zip(first)
                .map(|(a, b)| (a.x - b.x).hypot(a.y - b.y))
                .sum::<f64>()
                / JOINT_COUNT as f64
        })
        .collect()
}

fn dist_to_segment(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    let s = if len2 == 0.0 {
        0.0
    } else {
        (((p.0 - a.0) * dx + (p.1 - a.1) * dy) / len2).clamp(0.0, 1.0)
    };
    (p.0 - a.0 - s * dx).hypot(p.1 - a.1 - s * dy)
}

/// Bilinear interpolation of a coarse random grid, so the background is
/// textured but cheap to code.
fn smooth_background(rng: &mut Lcg, w: usize, h: usize) -> Vec<u8> {
    const CELL: usize = 32;
    let (gw, gh) = (w / CELL + 2, h / CELL + 2);
    let grid: Vec<u32> = (0..gw * gh).map(|_| 56 + rng.next_byte() as u32 / 16).collect();
    let mut out = Vec::with_capacity(w * h);
    for y in 0..h {
        let (gy, fy) = (y / CELL, (y % CELL) as u32);
        for x in 0..w {
            let (gx, fx) = (x / CELL, (x % CELL) as u32);
            let g = |dx: usize, dy: usize| grid[(gy + dy) * gw + gx + dx];
            let c = CELL as u32;
            let top = g(0, 0) * (c - fx) + g(1, 0) * fx;
            let bottom = g(0, 1) * (c - fx) + g(1, 1) * fx;
            out.push(((top * (c - fy) + bottom * fy + c * c / 2) / (c * c)) as u8);
        }
    }
    out
}

pub fn gen_synthetic(params: &SyntheticParams) -> SyntheticSequence {
    let (w, h) = (params.width, params.height);
    let mut rng = Lcg(params.seed);
    let background = smooth_background(&mut rng, w, h);
    // texture of each joint's patch, addressed relative to the joint centre
    let textures: Vec<Vec<u8>> = (0..JOINT_COUNT)
        .map(|_| {
            let coarse: Vec<u8> = (0..(TEX_SIZE * TEX_SIZE / 16)).map(|_| rng.next_byte()).collect();
            (0..TEX_SIZE * TEX_SIZE)
                .map(|i| {
                    let (x, y) = (i % TEX_SIZE, i / TEX_SIZE);
                    let c = coarse[((y / 4) * (TEX_SIZE / 4) + x / 4) as usize];
                    150 + c / 4 + rng.next_byte() / 12
                })
                .collect()
        })
        .collect();
    let texel = |j: usize, dx: i64, dy: i64| -> u8 {
        let tx = (dx + TEX_SIZE / 2).clamp(0, TEX_SIZE - 1);
        let ty = (dy + TEX_SIZE / 2).clamp(0, TEX_SIZE - 1);
        textures[j][(ty * TEX_SIZE + tx) as usize]
    };

    let mut frames = Vec::with_capacity(params.frames);
    let mut poses = Vec::with_capacity(params.frames);
    for t in 0..params.frames {
        let pos = joint_positions(params, t);
        let mut luma = background.clone();
        for y in 0..h as i64 {
            for x in 0..w as i64 {
                let p = (x as f64, y as f64);
                let mut value = None;
                for &(a, b) in &BONES {
                    let (ja, jb) = (a.index(), b.index());
                    let pa = (pos[ja].0 as f64, pos[ja].1 as f64);
                    let pb = (pos[jb].0 as f64, pos[jb].1 as f64);
                    if dist_to_segment(p, pa, pb) <= BAR_HALF_WIDTH {
                        let da = (x - pos[ja].0).pow(2) + (y - pos[ja].1).pow(2);
                        let db = (x - pos[jb].0).pow(2) + (y - pos[jb].1).pow(2);
                        let j = if da <= db { ja } else { jb };
                        value = Some(texel(j, x - pos[j].0, y - pos[j].1));
                        break;
                    }
                }
                for (j, &(cx, cy)) in pos.iter().enumerate() {
                    let r = if j == Joint::Head.index() { HEAD_RADIUS } else { DISC_RADIUS };
                    if (x - cx).pow(2) + (y - cy).pow(2) <= r * r {
                        value = Some(texel(j, x - cx, y - cy));
                    }
                }
                if let Some(v) = value {
                    luma[y as usize * w + x as usize] = v;
                }
            }
        }
        frames.push(Frame::from_luma(w, h, luma).expect("positive dimensions"));
        let xy = pos.map(|(x, y)| (x as f64, y as f64));
        poses.push(Pose::from_xy(xy).expect("on-canvas joints are in range"));
    }
    SyntheticSequence { frames, poses }
}

/// Standard 128x128x32 sequence for a motion class.
pub fn standard_sequence(motion: MotionClass) -> SyntheticSequence {
    gen_synthetic(&SyntheticParams {
        width: 128,
        height: 128,
        frames: 32,
        seed: 1,
        motion,
    })
}
