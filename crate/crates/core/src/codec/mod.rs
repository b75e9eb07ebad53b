//! Closed-loop block codec.
//!
//! I-frames code every 8x8 block independently. P-frames pick, per 16x16
//! macroblock or per 8x8 partition, the lower-cost prediction between the
//! decoded I-frame (backward reference) and an optional synthesized forward
//! reference, then transform-code the residual. Encoder and decoder share
//! the prediction and reconstruction routines, so reconstructions match
//! byte for byte.

pub mod motion;
mod sequence;
pub mod transform;

use rayon::prelude::*;
use thiserror::Error;

use crate::bitstream::{partition_header_bits, BitstreamError};
use crate::model::{
    div_round, partition_frame, BlockRect, ChromaFormat, EncoderConfig, Frame, ModeDecision,
    ModelError, QuantizedPose,
};
use crate::synth::SynthError;
use motion::{search_macroblock, Candidate, ExtendedPlane, MacroblockSearch, PlaneRef};
use transform::{decode_residual, encode_residual};

pub use sequence::{
    decode_sequence, encode_sequence, DecodeOptions, DecodedSequence, EncodedSequence,
    FrameReport,
};

/// Quantized coefficients of one 8x8 block in raster order.
pub type Levels = [i32; 64];

#[derive(Debug, Error)]
pub enum CodecError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error("block sizes differ: {left} vs {right} samples")]
    BlockSizeMismatch { left: usize, right: usize },
    #[error("frame {frame}: geometry {found} does not match {expected}")]
    DimensionMismatch {
        frame: usize,
        expected: String,
        found: String,
    },
    #[error("empty sequence")]
    EmptySequence,
    #[error("frame size {width}x{height} exceeds the container limit")]
    FrameTooLarge { width: usize, height: usize },
    #[error("{0} frames exceed the container limit")]
    TooManyFrames(usize),
    #[error("forward mode {0} needs a pose for every frame")]
    MissingPoses(&'static str),
    #[error("pose count {poses} does not match frame count {frames}")]
    PoseCountMismatch { frames: usize, poses: usize },
    #[error("external forward mode needs a frame store")]
    MissingFrameStore,
    #[error("header: {0}")]
    Header(BitstreamError),
    #[error("corrupt data in frame {frame}: {source}")]
    Corrupt {
        frame: usize,
        source: BitstreamError,
    },
    #[error("stream truncated in frame {frame}")]
    Truncated { frame: usize },
    #[error("frame {frame} has type {found}, expected {expected}")]
    FrameTypeMismatch {
        frame: usize,
        expected: &'static str,
        found: &'static str,
    },
    #[error("stream truncated before checksum")]
    MissingChecksum,
    #[error("{0} bytes of trailing data after checksum")]
    TrailingData(usize),
    #[error("checksum mismatch: stream has {expected:08x}, decoded {actual:08x}")]
    ChecksumMismatch { expected: u32, actual: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct MotionVector {
    pub dx: i32,
    pub dy: i32,
}

impl MotionVector {
    pub const ZERO: MotionVector = MotionVector { dx: 0, dy: 0 };

    /// Vector for the 4:2:0 chroma grid: each component halved, rounded
    /// half away from zero.
    pub fn chroma(self) -> MotionVector {
        MotionVector {
            dx: div_round(self.dx as i64, 2) as i32,
            dy: div_round(self.dy as i64, 2) as i32,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum RefIndex {
    /// The GOP's decoded I-frame.
    #[default]
    Backward = 0,
    /// The synthesized (or externally supplied) forward reference.
    Forward = 1,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Partition {
    pub ref_index: RefIndex,
    pub mv: MotionVector,
}

/// One inter macroblock. `partitions` has one entry, or four in raster
/// quadrant order when `split`. `luma` holds the four 8x8 transform blocks in
/// raster order and `chroma` one 8x8 block per chroma plane.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockDecision {
    pub split: bool,
    pub partitions: Vec<Partition>,
    pub luma: [Levels; 4],
    pub chroma: Vec<Levels>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IntraMacroblock {
    pub luma: [Levels; 4],
    pub chroma: Vec<Levels>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FrameBody {
    Intra(Vec<IntraMacroblock>),
    Inter(Vec<BlockDecision>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FrameType {
    I,
    P,
}

impl FrameType {
    pub fn name(self) -> &'static str {
        match self {
            FrameType::I => "I",
            FrameType::P => "P",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CodedFrame {
    pub pose: Option<QuantizedPose>,
    pub body: FrameBody,
}

impl CodedFrame {
    pub fn frame_type(&self) -> FrameType {
        match self.body {
            FrameBody::Intra(_) => FrameType::I,
            FrameBody::Inter(_) => FrameType::P,
        }
    }
}

/// Intermediate planes of one P-frame, luma only: the backward-only motion
/// compensated prediction, the forward reference, the final per-partition
/// prediction, the residual and its decoded version.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PredictionBuffers {
    pub backward_pred: Frame,
    pub forward_ref: Option<Frame>,
    pub final_pred: Frame,
    pub residual: Vec<i32>,
    pub recon_residual: Vec<i32>,
}

/// Per-macroblock SAD bookkeeping from the encoder's search.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MbStats {
    pub split: bool,
    /// SAD of the chosen prediction over the whole macroblock.
    pub chosen_sad: u32,
    /// Minimum 16x16 SAD over the available references.
    pub best_whole_sad: u32,
    /// Minimum 8x8 SAD per quadrant over the available references.
    pub best_quadrant_sad: [u32; 4],
    pub refs: Vec<RefIndex>,
}

/// The references available to a P-frame. Both are padded, decoded-domain
/// frames of the same geometry as the frame being coded.
#[derive(Debug, Clone, Copy)]
pub struct References<'a> {
    pub backward: &'a Frame,
    pub forward: Option<&'a Frame>,
}

impl<'a> References<'a> {
    fn get(&self, r: RefIndex) -> &'a Frame {
        match r {
            RefIndex::Backward => self.backward,
            RefIndex::Forward => self.forward.expect("forward partition without forward reference"),
        }
    }
}

pub fn lambda(qp: u8) -> f64 {
    0.85 * 2f64.powf((qp as f64 - 12.0) / 3.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RefChoice {
    pub ref_index: RefIndex,
    pub candidate: Candidate,
    pub cost: f64,
}

fn cost(cand: &Candidate, forward_present: bool, decision: ModeDecision, qp: u8) -> f64 {
    match decision {
        ModeDecision::Sad => cand.sad as f64,
        ModeDecision::Lagrangian => {
            cand.sad as f64 + lambda(qp) * partition_header_bits(forward_present, cand.mv) as f64
        }
    }
}

/// Picks the reference for one partition. Ties go to the backward reference.
pub fn select_reference(
    backward: Candidate,
    forward: Option<Candidate>,
    decision: ModeDecision,
    qp: u8,
) -> RefChoice {
    let fp = forward.is_some();
    let back = RefChoice {
        ref_index: RefIndex::Backward,
        candidate: backward,
        cost: cost(&backward, fp, decision, qp),
    };
    match forward {
        Some(f) => {
            let fwd = RefChoice {
                ref_index: RefIndex::Forward,
                candidate: f,
                cost: cost(&f, fp, decision, qp),
            };
            if fwd.cost < back.cost {
                fwd
            } else {
                back
            }
        }
        None => back,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitChoice {
    pub split: bool,
    pub parts: Vec<RefChoice>,
}

/// Chooses between one 16x16 partition and four 8x8 partitions, each with
/// its own reference and vector. `searches[0]` is the backward reference,
/// `searches[1]` the forward one when present. Splitting requires a strictly
/// lower total cost.
pub fn try_split(searches: &[MacroblockSearch], decision: ModeDecision, qp: u8) -> SplitChoice {
    let fwd = searches.get(1);
    let whole = select_reference(searches[0].whole, fwd.map(|s| s.whole), decision, qp);
    let quads: Vec<RefChoice> = (0..4)
        .map(|k| select_reference(searches[0].quadrants[k], fwd.map(|s| s.quadrants[k]), decision, qp))
        .collect();
    let split = match decision {
        ModeDecision::Sad => {
            quads.iter().map(|c| c.candidate.sad as u64).sum::<u64>() < whole.candidate.sad as u64
        }
        ModeDecision::Lagrangian => quads.iter().map(|c| c.cost).sum::<f64>() < whole.cost,
    };
    if split {
        SplitChoice { split, parts: quads }
    } else {
        SplitChoice {
            split,
            parts: vec![whole],
        }
    }
}

fn check_geometry(frame: usize, expected: &Frame, found: &Frame) -> Result<(), CodecError> {
    if expected.same_geometry(found) {
        Ok(())
    } else {
        Err(CodecError::DimensionMismatch {
            frame,
            expected: geometry(expected),
            found: geometry(found),
        })
    }
}

fn geometry(f: &Frame) -> String {
    format!("{}x{} {:?}", f.width(), f.height(), f.chroma())
}

fn read_block8(plane: &[u8], stride: usize, x: usize, y: usize) -> [u8; 64] {
    let mut out = [0u8; 64];
    for r in 0..8 {
        out[r * 8..r * 8 + 8].copy_from_slice(&plane[(y + r) * stride + x..][..8]);
    }
    out
}

fn write_block8(plane: &mut [u8], stride: usize, x: usize, y: usize, block: &[u8; 64]) {
    for r in 0..8 {
        plane[(y + r) * stride + x..][..8].copy_from_slice(&block[r * 8..r * 8 + 8]);
    }
}

/// Adds a decoded residual to a prediction and clamps to 8 bits.
fn reconstruct_block(pred: &[u8; 64], levels: &Levels, qp: u8) -> [u8; 64] {
    let res = decode_residual(levels, qp);
    std::array::from_fn(|i| (pred[i] as i32 + res[i]).clamp(0, 255) as u8)
}

fn residual_block(src: &[u8; 64], pred: &[u8; 64]) -> [i32; 64] {
    std::array::from_fn(|i| src[i] as i32 - pred[i] as i32)
}

const INTRA_PRED: [u8; 64] = [128; 64];

/// The 8x8 transform blocks of a macroblock: (plane, x, y) in plane samples.
fn transform_blocks(mb: BlockRect, chroma: ChromaFormat) -> Vec<(usize, usize, usize)> {
    let mut v: Vec<_> = mb.quadrants().iter().map(|q| (0, q.x, q.y)).collect();
    for p in 1..chroma.plane_count() {
        v.push((p, mb.x / 2, mb.y / 2));
    }
    v
}

fn intra_mb(x: &Frame, mb: BlockRect, qp: u8) -> (IntraMacroblock, Vec<[u8; 64]>) {
    let mut levels = Vec::new();
    let mut recon = Vec::new();
    for (p, bx, by) in transform_blocks(mb, x.chroma()) {
        let stride = x.plane_size(p).0;
        let src = read_block8(x.plane(p), stride, bx, by);
        let l = encode_residual(&residual_block(&src, &INTRA_PRED), qp);
        recon.push(reconstruct_block(&INTRA_PRED, &l, qp));
        levels.push(l);
    }
    let chroma = levels.split_off(4);
    let luma = [levels[0], levels[1], levels[2], levels[3]];
    (IntraMacroblock { luma, chroma }, recon)
}

fn place_blocks(out: &mut Frame, mb: BlockRect, blocks: &[[u8; 64]]) {
    for ((p, bx, by), b) in transform_blocks(mb, out.chroma()).into_iter().zip(blocks) {
        let stride = out.plane_size(p).0;
        write_block8(out.plane_mut(p), stride, bx, by, b);
    }
}

/// Codes a padded frame as an I-frame. Returns the coded frame (without
/// pose payload) and the reconstruction the decoder will produce.
pub fn encode_i_frame(x: &Frame, cfg: &EncoderConfig) -> Result<(CodedFrame, Frame), CodecError> {
    let mbs = partition_frame(x.width(), x.height())?;
    let results: Vec<_> = mbs.par_iter().map(|&mb| intra_mb(x, mb, cfg.qp)).collect();
    let mut recon = Frame::filled(x.width(), x.height(), x.chroma(), 0);
    let mut coded = Vec::with_capacity(mbs.len());
    for (mb, (c, blocks)) in mbs.iter().zip(results) {
        place_blocks(&mut recon, *mb, &blocks);
        coded.push(c);
    }
    Ok((
        CodedFrame {
            pose: None,
            body: FrameBody::Intra(coded),
        },
        recon,
    ))
}

pub fn decode_i_frame(
    coded: &[IntraMacroblock],
    width: usize,
    height: usize,
    chroma: ChromaFormat,
    qp: u8,
) -> Result<Frame, CodecError> {
    let mbs = partition_frame(width, height)?;
    let mut recon = Frame::filled(width, height, chroma, 0);
    for (mb, c) in mbs.iter().zip(coded) {
        let blocks: Vec<[u8; 64]> = c
            .luma
            .iter()
            .chain(&c.chroma)
            .map(|l| reconstruct_block(&INTRA_PRED, l, qp))
            .collect();
        place_blocks(&mut recon, *mb, &blocks);
    }
    Ok(recon)
}

/// Motion-compensated prediction of one macroblock: one 8x8 block per
/// transform block, in [`transform_blocks`] order.
fn predict_mb(refs: &References<'_>, mb: BlockRect, split: bool, parts: &[Partition]) -> Vec<[u8; 64]> {
    let rects: Vec<BlockRect> = if split {
        mb.quadrants().to_vec()
    } else {
        vec![mb]
    };
    let luma_w = mb.w;
    let mut luma = vec![0u8; mb.w * mb.h];
    let chroma_planes = refs.backward.plane_count() - 1;
    let mut chroma = vec![[0u8; 64]; chroma_planes];
    for (rect, part) in rects.iter().zip(parts) {
        let r = refs.get(part.ref_index);
        let plane = PlaneRef::new(r.luma(), r.width(), r.height());
        let block = plane.block(rect.x, rect.y, rect.w, rect.h, part.mv);
        for row in 0..rect.h {
            let off = (rect.y - mb.y + row) * luma_w + rect.x - mb.x;
            luma[off..off + rect.w].copy_from_slice(&block[row * rect.w..(row + 1) * rect.w]);
        }
        let cmv = part.mv.chroma();
        for (c, out) in chroma.iter_mut().enumerate() {
            let (cw, ch) = r.plane_size(c + 1);
            let cp = PlaneRef::new(r.plane(c + 1), cw, ch);
            let (bw, bh) = (rect.w / 2, rect.h / 2);
            let block = cp.block(rect.x / 2, rect.y / 2, bw, bh, cmv);
            for row in 0..bh {
                let off = ((rect.y - mb.y) / 2 + row) * 8 + (rect.x - mb.x) / 2;
                out[off..off + bw].copy_from_slice(&block[row * bw..(row + 1) * bw]);
            }
        }
    }
    let mut blocks: Vec<[u8; 64]> = (0..4)
        .map(|k| read_block8(&luma, luma_w, (k % 2) * 8, (k / 2) * 8))
        .collect();
    blocks.extend(chroma);
    blocks
}

struct InterMbResult {
    decision: BlockDecision,
    recon: Vec<[u8; 64]>,
    pred: Vec<[u8; 64]>,
    backward_pred: Vec<[u8; 64]>,
    residual: Vec<[i32; 64]>,
    recon_residual: Vec<[i32; 64]>,
    stats: MbStats,
}

fn inter_mb(
    x: &Frame,
    refs: &References<'_>,
    extended: &[ExtendedPlane],
    mb: BlockRect,
    cfg: &EncoderConfig,
) -> InterMbResult {
    let src = PlaneRef::new(x.luma(), x.width(), x.height());
    let searches: Vec<MacroblockSearch> = extended
        .iter()
        .map(|e| search_macroblock(src, mb.x, mb.y, e, cfg.search_range))
        .collect();
    let choice = try_split(&searches, cfg.mode_decision, cfg.qp);
    let partitions: Vec<Partition> = choice
        .parts
        .iter()
        .map(|c| Partition {
            ref_index: c.ref_index,
            mv: c.candidate.mv,
        })
        .collect();
    let stats = MbStats {
        split: choice.split,
        chosen_sad: choice.parts.iter().map(|c| c.candidate.sad).sum(),
        best_whole_sad: searches.iter().map(|s| s.whole.sad).min().unwrap(),
        best_quadrant_sad: std::array::from_fn(|k| {
            searches.iter().map(|s| s.quadrants[k].sad).min().unwrap()
        }),
        refs: partitions.iter().map(|p| p.ref_index).collect(),
    };

    let pred = predict_mb(refs, mb, choice.split, &partitions);
    let backward_parts: Vec<Partition> = if choice.split {
        searches[0]
            .quadrants
            .iter()
            .map(|c| Partition { ref_index: RefIndex::Backward, mv: c.mv })
            .collect()
    } else {
        vec![Partition { ref_index: RefIndex::Backward, mv: searches[0].whole.mv }]
    };
    let backward_pred = predict_mb(refs, mb, choice.split, &backward_parts);

    let mut levels = Vec::new();
    let mut recon = Vec::new();
    let mut residual = Vec::new();
    let mut recon_residual = Vec::new();
    for ((p, bx, by), pb) in transform_blocks(mb, x.chroma()).into_iter().zip(&pred) {
        let stride = x.plane_size(p).0;
        let src = read_block8(x.plane(p), stride, bx, by);
        let res = residual_block(&src, pb);
        let l = encode_residual(&res, cfg.qp);
        let rb = reconstruct_block(pb, &l, cfg.qp);
        if p == 0 {
            residual.push(res);
            recon_residual.push(decode_residual(&l, cfg.qp));
        }
        recon.push(rb);
        levels.push(l);
    }
    let chroma = levels.split_off(4);
    InterMbResult {
        decision: BlockDecision {
            split: choice.split,
            partitions,
            luma: [levels[0], levels[1], levels[2], levels[3]],
            chroma,
        },
        recon,
        pred,
        backward_pred,
        residual,
        recon_residual,
        stats,
    }
}

#[derive(Debug, Clone)]
pub struct PFrameOutput {
    pub coded: CodedFrame,
    pub recon: Frame,
    pub buffers: PredictionBuffers,
    pub stats: Vec<MbStats>,
}

/// Codes a padded frame as a P-frame against the given references.
pub fn encode_p_frame(
    x: &Frame,
    refs: References<'_>,
    cfg: &EncoderConfig,
) -> Result<PFrameOutput, CodecError> {
    check_geometry(0, x, refs.backward)?;
    if let Some(f) = refs.forward {
        check_geometry(0, x, f)?;
    }
    let mbs = partition_frame(x.width(), x.height())?;
    let margin = cfg.search_range as usize;
    let mut extended = vec![ExtendedPlane::new(
        PlaneRef::new(refs.backward.luma(), x.width(), x.height()),
        margin,
    )];
    if let Some(f) = refs.forward {
        extended.push(ExtendedPlane::new(PlaneRef::new(f.luma(), x.width(), x.height()), margin));
    }
    let results: Vec<InterMbResult> = mbs
        .par_iter()
        .map(|&mb| inter_mb(x, &refs, &extended, mb, cfg))
        .collect();

    let (w, h) = (x.width(), x.height());
    let mut recon = Frame::filled(w, h, x.chroma(), 0);
    let mut final_pred = Frame::filled(w, h, ChromaFormat::Mono, 0);
    let mut backward_pred = Frame::filled(w, h, ChromaFormat::Mono, 0);
    let mut residual = vec![0i32; w * h];
    let mut recon_residual = vec![0i32; w * h];
    let mut decisions = Vec::with_capacity(mbs.len());
    let mut stats = Vec::with_capacity(mbs.len());
    for (mb, r) in mbs.iter().zip(results) {
        place_blocks(&mut recon, *mb, &r.recon);
        for (k, q) in mb.quadrants().iter().enumerate() {
            write_block8(final_pred.plane_mut(0), w, q.x, q.y, &r.pred[k]);
            write_block8(backward_pred.plane_mut(0), w, q.x, q.y, &r.backward_pred[k]);
            for row in 0..8 {
                let off = (q.y + row) * w + q.x;
                residual[off..off + 8].copy_from_slice(&r.residual[k][row * 8..row * 8 + 8]);
                recon_residual[off..off + 8]
                    .copy_from_slice(&r.recon_residual[k][row * 8..row * 8 + 8]);
            }
        }
        decisions.push(r.decision);
        stats.push(r.stats);
    }
    let forward_ref = refs.forward.map(|f| Frame::from_luma(w, h, f.luma().to_vec()).unwrap());
    Ok(PFrameOutput {
        coded: CodedFrame {
            pose: None,
            body: FrameBody::Inter(decisions),
        },
        recon,
        buffers: PredictionBuffers {
            backward_pred,
            forward_ref,
            final_pred,
            residual,
            recon_residual,
        },
        stats,
    })
}

pub fn decode_p_frame(
    coded: &[BlockDecision],
    refs: References<'_>,
    qp: u8,
) -> Result<Frame, CodecError> {
    let (w, h) = (refs.backward.width(), refs.backward.height());
    let mbs = partition_frame(w, h)?;
    let mut recon = Frame::filled(w, h, refs.backward.chroma(), 0);
    for (mb, d) in mbs.iter().zip(coded) {
        let pred = predict_mb(&refs, *mb, d.split, &d.partitions);
        let blocks: Vec<[u8; 64]> = pred
            .iter()
            .zip(d.luma.iter().chain(&d.chroma))
            .map(|(p, l)| reconstruct_block(p, l, qp))
            .collect();
        place_blocks(&mut recon, *mb, &blocks);
    }
    Ok(recon)
}
