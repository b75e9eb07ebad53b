//! Forward-reference synthesis.
//!
//! Builds a virtual frame for time `t` from the decoded I-frame and two
//! poses, using only integer arithmetic so the decoder regenerates the
//! encoder's frame exactly. Poses enter as [`QuantizedPose`], the same values
//! the decoder reads from the stream.

use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::io::{self, IoError};
use crate::model::{
    div_round, padded_size, ChromaFormat, Frame, QuantizedPose, JOINT_COUNT,
};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("I-frame is {frame_w}x{frame_h} but the pose canvas is {canvas_w}x{canvas_h}")]
    CanvasMismatch {
        frame_w: usize,
        frame_h: usize,
        canvas_w: usize,
        canvas_h: usize,
    },
    #[error("no external forward frame for t={0}")]
    MissingFrame(usize),
    #[error("external frame t={t} is {found}, expected {expected}")]
    FrameDimensionMismatch {
        t: usize,
        expected: String,
        found: String,
    },
    #[error("external frame store: {0}")]
    Store(#[from] IoError),
}

/// One 8-bit activation plane per joint.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HeatmapStack {
    pub width: usize,
    pub height: usize,
    pub channels: Vec<Vec<u8>>,
}

impl HeatmapStack {
    /// Per-pixel maximum across the joint channels.
    pub fn max_plane(&self) -> Vec<u8> {
        let mut out = vec![0u8; self.width * self.height];
        for ch in &self.channels {
            for (o, &v) in out.iter_mut().zip(ch) {
                *o = (*o).max(v);
            }
        }
        out
    }
}

/// Renders each joint as a rational bump `255 * (R^2 - d^2) / R^2` around its
/// rounded position. Joints whose rounded position falls outside the canvas
/// produce an all-zero channel.
pub fn render_heatmaps(
    pose: &QuantizedPose,
    width: usize,
    height: usize,
    bump_radius: u32,
) -> HeatmapStack {
    let r = bump_radius.max(1) as i64;
    let r2 = r * r;
    let channels = (0..JOINT_COUNT)
        .map(|j| {
            let mut plane = vec![0u8; width * height];
            let (cx, cy) = pose.rounded(j);
            if cx < 0 || cy < 0 || cx >= width as i64 || cy >= height as i64 {
                return plane;
            }
            for y in (cy - r + 1).max(0)..(cy + r).min(height as i64) {
                for x in (cx - r + 1).max(0)..(cx + r).min(width as i64) {
                    let d2 = (x - cx) * (x - cx) + (y - cy) * (y - cy);
                    if d2 < r2 {
                        plane[y as usize * width + x as usize] =
                            div_round(255 * (r2 - d2), r2) as u8;
                    }
                }
            }
            plane
        })
        .collect();
    HeatmapStack {
        width,
        height,
        channels,
    }
}

/// Operands of the synthesis: the decoded I-frame and the dequantized poses
/// of the I-frame and of the target frame.
#[derive(Debug, Clone, Copy)]
pub struct SynthInputs<'a> {
    i_frame: &'a Frame,
    pose_i: &'a QuantizedPose,
    pose_t: &'a QuantizedPose,
}

impl<'a> SynthInputs<'a> {
    /// `canvas` is the picture size the poses refer to; the I-frame may be
    /// that size or padded up to whole macroblocks.
    pub fn new(
        i_frame: &'a Frame,
        pose_i: &'a QuantizedPose,
        pose_t: &'a QuantizedPose,
        canvas: (usize, usize),
    ) -> Result<Self, SynthError> {
        let dims = (i_frame.width(), i_frame.height());
        if dims != canvas && dims != padded_size(canvas.0, canvas.1) {
            return Err(SynthError::CanvasMismatch {
                frame_w: dims.0,
                frame_h: dims.1,
                canvas_w: canvas.0,
                canvas_h: canvas.1,
            });
        }
        Ok(SynthInputs {
            i_frame,
            pose_i,
            pose_t,
        })
    }

    pub fn i_frame(&self) -> &Frame {
        self.i_frame
    }
}

/// Adds the difference of the two poses' heatmaps to the I-frame luma.
/// Chroma is copied unchanged.
pub fn synthesize_linear(inputs: &SynthInputs<'_>, bump_radius: u32) -> Frame {
    let f = inputs.i_frame;
    let (w, h) = (f.width(), f.height());
    let ht = render_heatmaps(inputs.pose_t, w, h, bump_radius).max_plane();
    let hi = render_heatmaps(inputs.pose_i, w, h, bump_radius).max_plane();
    let mut out = f.clone();
    for ((o, &a), &b) in out.plane_mut(0).iter_mut().zip(&ht).zip(&hi) {
        *o = (*o as i32 + a as i32 - b as i32).clamp(0, 255) as u8;
    }
    out
}

/// Nearest-joint ownership: for each pixel, the joint whose target position
/// is closest within `radius` (lowest index on ties), or `u8::MAX`.
fn owner_map(
    w: usize,
    h: usize,
    centres: &[(i64, i64); JOINT_COUNT],
    radius: i64,
) -> Vec<u8> {
    let r2 = radius * radius;
    let mut best_d2 = vec![i64::MAX; w * h];
    let mut owner = vec![u8::MAX; w * h];
    for (j, &(cx, cy)) in centres.iter().enumerate() {
        let y0 = (cy - radius).max(0);
        let y1 = (cy + radius).min(h as i64 - 1);
        let x0 = (cx - radius).max(0);
        let x1 = (cx + radius).min(w as i64 - 1);
        for y in y0..=y1 {
            for x in x0..=x1 {
                let d2 = (x - cx) * (x - cx) + (y - cy) * (y - cy);
                let i = y as usize * w + x as usize;
                // strict: earlier joints keep ties
                if d2 <= r2 && d2 < best_d2[i] {
                    best_d2[i] = d2;
                    owner[i] = j as u8;
                }
            }
        }
    }
    owner
}

fn warp_plane(
    src: &[u8],
    w: usize,
    h: usize,
    owner: &[u8],
    disp: &[(i64, i64); JOINT_COUNT],
) -> Vec<u8> {
    let mut out = src.to_vec();
    for y in 0..h {
        for x in 0..w {
            let j = owner[y * w + x];
            if j == u8::MAX {
                continue;
            }
            let (dx, dy) = disp[j as usize];
            let sx = (x as i64 - dx).clamp(0, w as i64 - 1) as usize;
            let sy = (y as i64 - dy).clamp(0, h as i64 - 1) as usize;
            out[y * w + x] = src[sy * w + sx];
        }
    }
    out
}

/// Moves I-frame patches with their joints: a pixel near a joint's target
/// position is fetched from the same offset around the joint's I-frame
/// position. Chroma uses halved positions, displacements and radius.
pub fn synthesize_patchwarp(inputs: &SynthInputs<'_>, patch_radius: u32) -> Frame {
    let f = inputs.i_frame;
    let (pi, pt) = (inputs.pose_i, inputs.pose_t);
    let disp: [(i64, i64); JOINT_COUNT] = std::array::from_fn(|j| {
        let (ix, iy) = pi.fixed(j);
        let (tx, ty) = pt.fixed(j);
        (div_round(tx - ix, 256), div_round(ty - iy, 256))
    });
    let mut planes = Vec::with_capacity(f.plane_count());
    let luma_centres: [(i64, i64); JOINT_COUNT] = std::array::from_fn(|j| pt.rounded(j));
    let owner = owner_map(f.width(), f.height(), &luma_centres, patch_radius.max(1) as i64);
    planes.push(warp_plane(f.luma(), f.width(), f.height(), &owner, &disp));
    if f.chroma() == ChromaFormat::C420 {
        let (cw, ch) = f.plane_size(1);
        let centres: [(i64, i64); JOINT_COUNT] = std::array::from_fn(|j| {
            let (x, y) = pt.fixed(j);
            (div_round(x, 512), div_round(y, 512))
        });
        let cdisp = disp.map(|(dx, dy)| (div_round(dx, 2), div_round(dy, 2)));
        let radius = div_round(patch_radius.max(1) as i64, 2).max(1);
        let owner = owner_map(cw, ch, &centres, radius);
        for p in 1..3 {
            planes.push(warp_plane(f.plane(p), cw, ch, &owner, &cdisp));
        }
    }
    Frame::new(f.width(), f.height(), f.chroma(), planes).expect("same geometry as input")
}

/// Source of externally generated forward frames, indexed by 1-based frame
/// number within the sequence.
pub trait FrameStore: Sync {
    fn load(&self, t: usize) -> Result<Frame, SynthError>;
}

/// Frames stored as `frame_NNNN.pgm` files (1-based, zero padded to four
/// digits) in a directory.
#[derive(Debug, Clone)]
pub struct PgmDirectory {
    dir: PathBuf,
}

impl PgmDirectory {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        PgmDirectory { dir: dir.into() }
    }

    pub fn path_for(&self, t: usize) -> PathBuf {
        self.dir.join(format!("frame_{t:04}.pgm"))
    }
}

impl FrameStore for PgmDirectory {
    fn load(&self, t: usize) -> Result<Frame, SynthError> {
        let path = self.path_for(t);
        if !path.exists() {
            return Err(SynthError::MissingFrame(t));
        }
        let bytes = std::fs::read(&path).map_err(|e| IoError::Io(e.to_string()))?;
        Ok(io::read_pgm(&mut bytes.as_slice())?)
    }
}

/// All frames of a Y4M file held in memory; frame `t` is the `t`-th frame.
#[derive(Debug, Clone)]
pub struct Y4mStore {
    frames: Vec<Frame>,
}

impl Y4mStore {
    pub fn open(path: &Path) -> Result<Self, SynthError> {
        let bytes = std::fs::read(path).map_err(|e| IoError::Io(e.to_string()))?;
        let (frames, _) = io::read_y4m(&mut bytes.as_slice())?;
        Ok(Y4mStore { frames })
    }

    pub fn from_frames(frames: Vec<Frame>) -> Self {
        Y4mStore { frames }
    }
}

impl FrameStore for Y4mStore {
    fn load(&self, t: usize) -> Result<Frame, SynthError> {
        t.checked_sub(1)
            .and_then(|i| self.frames.get(i))
            .cloned()
            .ok_or(SynthError::MissingFrame(t))
    }
}

/// Opens `path` as a Y4M store if it has a `.y4m` extension, otherwise as a
/// PGM directory.
pub fn open_frame_store(path: &Path) -> Result<Box<dyn FrameStore>, SynthError> {
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("y4m")) {
        Ok(Box::new(Y4mStore::open(path)?))
    } else {
        Ok(Box::new(PgmDirectory::new(path)))
    }
}

/// Fetches frame `t` from the store and checks it against the expected
/// sequence geometry.
pub fn load_external_forward_frame(
    store: &dyn FrameStore,
    t: usize,
    width: usize,
    height: usize,
    chroma: ChromaFormat,
) -> Result<Frame, SynthError> {
    let f = store.load(t)?;
    if f.width() != width || f.height() != height || f.chroma() != chroma {
        return Err(SynthError::FrameDimensionMismatch {
            t,
            expected: format!("{width}x{height} {chroma:?}"),
            found: format!("{}x{} {:?}", f.width(), f.height(), f.chroma()),
        });
    }
    Ok(f)
}
