//! Bit-exact serialization for the `.drf` container.
//!
//! Bits are packed MSB-first within each byte and multi-byte fixed fields are
//! big-endian. A stream is a 17-byte header, `frame_count` byte-aligned
//! frames, and a 4-byte CRC-32 trailer over the decoded luma.

use thiserror::Error;

use crate::codec::{
    BlockDecision, CodedFrame, FrameBody, IntraMacroblock, Levels, MotionVector, Partition,
    RefIndex,
};
use crate::model::{ChromaFormat, ForwardRefMode, QuantizedPose, JOINT_COUNT, POSE_COORD_BITS};

pub const MAGIC: [u8; 4] = *b"DRFC";
pub const VERSION: u8 = 1;
pub const HEADER_BYTES: usize = 17;
pub const TRAILER_BYTES: usize = 4;
/// Run value that terminates a coefficient block.
pub const EOB_MARKER: u64 = 64;
const MAX_LEADING_ZEROS: u32 = 32;
/// Largest value `write_ue` accepts; anything bigger would need more than 32
/// leading zeros and could not be read back.
pub const MAX_UE: u64 = (1 << (MAX_LEADING_ZEROS + 1)) - 2;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BitstreamError {
    #[error("unexpected end of data")]
    UnexpectedEnd,
    #[error("malformed exp-golomb prefix")]
    MalformedExpGolomb,
    #[error("zero level inside a run-level pair")]
    ZeroLevel,
    #[error("coefficient scan overrun")]
    ScanOverrun,
    #[error("coded block flag set on an empty block")]
    EmptyCodedBlock,
    #[error("nonzero alignment padding")]
    NonZeroPadding,
    #[error("bad magic {0:?}")]
    BadMagic([u8; 4]),
    #[error("unsupported container version {0}")]
    UnsupportedVersion(u8),
    #[error("invalid header: {0}")]
    BadHeader(&'static str),
    #[error("frame inconsistent with stream parameters: {0}")]
    Inconsistent(&'static str),
}

/// Append-only MSB-first bit writer.
#[derive(Debug, Default, Clone)]
pub struct BitSink {
    buf: Vec<u8>,
    acc: u8,
    nbits: u8,
}

impl BitSink {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn write_bit(&mut self, bit: bool) {
        self.acc = (self.acc << 1) | bit as u8;
        self.nbits += 1;
        if self.nbits == 8 {
            self.buf.push(self.acc);
            self.acc = 0;
            self.nbits = 0;
        }
    }

    /// Writes the low `n` bits of `value`, most significant first.
    pub fn write_bits(&mut self, value: u64, n: u32) {
        debug_assert!(n <= 64);
        debug_assert!(n == 64 || value >> n == 0);
        for i in (0..n).rev() {
            self.write_bit((value >> i) & 1 == 1);
        }
    }

    pub fn write_bytes(&mut self, bytes: &[u8]) {
        if self.nbits == 0 {
            self.buf.extend_from_slice(bytes);
        } else {
            for &b in bytes {
                self.write_bits(b as u64, 8);
            }
        }
    }

    /// Pads with zero bits up to the next byte boundary.
    pub fn byte_align(&mut self) {
        while self.nbits != 0 {
            self.write_bit(false);
        }
    }

    pub fn bit_len(&self) -> u64 {
        self.buf.len() as u64 * 8 + self.nbits as u64
    }

    pub fn is_aligned(&self) -> bool {
        self.nbits == 0
    }

    pub fn into_bytes(mut self) -> Vec<u8> {
        self.byte_align();
        self.buf
    }

    pub fn write_ue(&mut self, v: u64) {
        assert!(v <= MAX_UE, "ue value {v} too large");
        let x = v + 1;
        let len = 64 - x.leading_zeros();
        self.write_bits(0, len - 1);
        self.write_bits(x, len);
    }

    pub fn write_se(&mut self, v: i64) {
        self.write_ue(se_to_ue(v));
    }
}

/// MSB-first bit reader over a byte slice.
#[derive(Debug, Clone)]
pub struct BitSource<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> BitSource<'a> {
    pub fn new(data: &'a [u8]) -> Self {
        BitSource { data, pos: 0 }
    }

    pub fn bit_pos(&self) -> usize {
        self.pos
    }

    pub fn byte_pos(&self) -> usize {
        self.pos.div_ceil(8)
    }

    pub fn is_aligned(&self) -> bool {
        self.pos.is_multiple_of(8)
    }

    pub fn remaining_bits(&self) -> usize {
        self.data.len() * 8 - self.pos
    }

    pub fn read_bit(&mut self) -> Result<bool, BitstreamError> {
        let byte = *self
            .data
            .get(self.pos / 8)
            .ok_or(BitstreamError::UnexpectedEnd)?;
        let bit = (byte >> (7 - self.pos % 8)) & 1 == 1;
        self.pos += 1;
        Ok(bit)
    }

    pub fn read_bits(&mut self, n: u32) -> Result<u64, BitstreamError> {
        debug_assert!(n <= 64);
        if self.remaining_bits() < n as usize {
            return Err(BitstreamError::UnexpectedEnd);
        }
        let mut v = 0u64;
        for _ in 0..n {
            v = (v << 1) | self.read_bit()? as u64;
        }
        Ok(v)
    }

    pub fn read_bytes(&mut self, n: usize) -> Result<Vec<u8>, BitstreamError> {
        (0..n).map(|_| self.read_bits(8).map(|b| b as u8)).collect()
    }

    /// Skips to the next byte boundary; the skipped bits must be zero.
    pub fn byte_align(&mut self) -> Result<(), BitstreamError> {
        while !self.is_aligned() {
            if self.read_bit()? {
                return Err(BitstreamError::NonZeroPadding);
            }
        }
        Ok(())
    }

    pub fn read_ue(&mut self) -> Result<u64, BitstreamError> {
        let mut zeros = 0;
        while !self.read_bit()? {
            zeros += 1;
            if zeros > MAX_LEADING_ZEROS {
                return Err(BitstreamError::MalformedExpGolomb);
            }
        }
        let rest = self.read_bits(zeros)?;
        Ok(((1u64 << zeros) | rest) - 1)
    }

    pub fn read_se(&mut self) -> Result<i64, BitstreamError> {
        Ok(ue_to_se(self.read_ue()?))
    }
}

pub fn se_to_ue(v: i64) -> u64 {
    if v > 0 {
        2 * v as u64 - 1
    } else {
        2 * v.unsigned_abs()
    }
}

pub fn ue_to_se(u: u64) -> i64 {
    if u % 2 == 1 {
        u.div_ceil(2) as i64
    } else {
        -((u / 2) as i64)
    }
}

/// Length in bits of `ue(v)`.
pub fn ue_len(v: u64) -> u32 {
    2 * (63 - (v + 1).leading_zeros()) + 1
}

pub fn se_len(v: i64) -> u32 {
    ue_len(se_to_ue(v))
}

/// Standard 8x8 zigzag: scan position -> raster index.
pub const ZIGZAG: [usize; 64] = [
    0, 1, 8, 16, 9, 2, 3, 10, 17, 24, 32, 25, 18, 11, 4, 5, 12, 19, 26, 33, 40, 48, 41, 34, 27,
    20, 13, 6, 7, 14, 21, 28, 35, 42, 49, 56, 57, 50, 43, 36, 29, 22, 15, 23, 30, 37, 44, 51, 58,
    59, 52, 45, 38, 31, 39, 46, 53, 60, 61, 54, 47, 55, 62, 63,
];

pub fn is_coded(levels: &Levels) -> bool {
    levels.iter().any(|&l| l != 0)
}

/// Emits `(ue(run), se(level))` per nonzero level in zigzag order, then
/// `ue(64)`. Callers signal all-zero blocks with a coded-block flag and do
/// not call this.
pub fn code_coeff_block(sink: &mut BitSink, levels: &Levels) {
    let mut run = 0u64;
    for &idx in ZIGZAG.iter() {
        let level = levels[idx];
        if level == 0 {
            run += 1;
        } else {
            sink.write_ue(run);
            sink.write_se(level as i64);
            run = 0;
        }
    }
    sink.write_ue(EOB_MARKER);
}

pub fn decode_coeff_block(src: &mut BitSource<'_>) -> Result<Levels, BitstreamError> {
    let mut out = [0i32; 64];
    let mut pos = 0u64;
    let mut any = false;
    loop {
        let run = src.read_ue()?;
        if run == EOB_MARKER {
            break;
        }
        if pos + run > 63 {
            return Err(BitstreamError::ScanOverrun);
        }
        pos += run;
        let level = src.read_se()?;
        if level == 0 {
            return Err(BitstreamError::ZeroLevel);
        }
        let level = i32::try_from(level).map_err(|_| BitstreamError::MalformedExpGolomb)?;
        out[ZIGZAG[pos as usize]] = level;
        any = true;
        pos += 1;
    }
    if !any {
        return Err(BitstreamError::EmptyCodedBlock);
    }
    Ok(out)
}

/// Exact size of `code_coeff_block(levels)` in bits.
pub fn coeff_block_bits(levels: &Levels) -> u32 {
    let mut bits = 0;
    let mut run = 0u64;
    for &idx in ZIGZAG.iter() {
        let level = levels[idx];
        if level == 0 {
            run += 1;
        } else {
            bits += ue_len(run) + se_len(level as i64);
            run = 0;
        }
    }
    bits + ue_len(EOB_MARKER)
}

/// Coded-block flag plus coefficients.
pub fn transform_block_bits(levels: &Levels) -> u32 {
    1 + if is_coded(levels) {
        coeff_block_bits(levels)
    } else {
        0
    }
}

/// Bits spent on one inter partition's reference index and motion vector.
pub fn partition_header_bits(forward_present: bool, mv: MotionVector) -> u32 {
    forward_present as u32 + se_len(mv.dx as i64) + se_len(mv.dy as i64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ContainerHeader {
    pub width: u16,
    pub height: u16,
    pub chroma: ChromaFormat,
    pub gop_size: u8,
    pub qp: u8,
    pub forward_mode: ForwardRefMode,
    pub frame_count: u32,
}

impl ContainerHeader {
    pub fn flags(&self) -> u8 {
        self.forward_mode.enabled() as u8 | (self.forward_mode.code() << 1)
    }

    pub fn write(&self, sink: &mut BitSink) {
        debug_assert!(sink.is_aligned());
        sink.write_bytes(&MAGIC);
        sink.write_bytes(&[VERSION]);
        sink.write_bytes(&self.width.to_be_bytes());
        sink.write_bytes(&self.height.to_be_bytes());
        sink.write_bytes(&[self.chroma.header_byte(), self.gop_size, self.qp, self.flags()]);
        sink.write_bytes(&self.frame_count.to_be_bytes());
    }

    pub fn read(src: &mut BitSource<'_>) -> Result<Self, BitstreamError> {
        let b = src.read_bytes(HEADER_BYTES)?;
        let magic = [b[0], b[1], b[2], b[3]];
        if magic != MAGIC {
            return Err(BitstreamError::BadMagic(magic));
        }
        if b[4] != VERSION {
            return Err(BitstreamError::UnsupportedVersion(b[4]));
        }
        let width = u16::from_be_bytes([b[5], b[6]]);
        let height = u16::from_be_bytes([b[7], b[8]]);
        if width == 0 || height == 0 {
            return Err(BitstreamError::BadHeader("zero dimension"));
        }
        let chroma =
            ChromaFormat::from_header_byte(b[9]).ok_or(BitstreamError::BadHeader("chroma format"))?;
        let (gop_size, qp, flags) = (b[10], b[11], b[12]);
        if gop_size == 0 {
            return Err(BitstreamError::BadHeader("zero gop size"));
        }
        if qp > 51 {
            return Err(BitstreamError::BadHeader("qp out of range"));
        }
        if flags >> 3 != 0 {
            return Err(BitstreamError::BadHeader("reserved flag bits set"));
        }
        let forward_mode = ForwardRefMode::from_code((flags >> 1) & 3).expect("two-bit code");
        if (flags & 1 == 1) != forward_mode.enabled() {
            return Err(BitstreamError::BadHeader("forward flag disagrees with synth mode"));
        }
        let frame_count = u32::from_be_bytes([b[13], b[14], b[15], b[16]]);
        Ok(ContainerHeader {
            width,
            height,
            chroma,
            gop_size,
            qp,
            forward_mode,
            frame_count,
        })
    }
}

/// Stream parameters needed to parse a frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FrameContext {
    pub mb_count: usize,
    pub chroma: ChromaFormat,
    pub forward_present: bool,
    pub pose_payload: bool,
}

impl FrameContext {
    pub fn chroma_blocks(&self) -> usize {
        self.chroma.plane_count() - 1
    }
}

pub fn write_pose(sink: &mut BitSink, pose: &QuantizedPose) {
    for &c in pose.raw() {
        sink.write_bits(c as u64, POSE_COORD_BITS);
    }
}

pub fn read_pose(src: &mut BitSource<'_>) -> Result<QuantizedPose, BitstreamError> {
    let mut raw = [0u32; 2 * JOINT_COUNT];
    for c in raw.iter_mut() {
        *c = src.read_bits(POSE_COORD_BITS)? as u32;
    }
    Ok(QuantizedPose::from_raw(raw).expect("24-bit reads always fit"))
}

fn write_transform_block(sink: &mut BitSink, levels: &Levels) {
    let coded = is_coded(levels);
    sink.write_bit(coded);
    if coded {
        code_coeff_block(sink, levels);
    }
}

fn read_transform_block(src: &mut BitSource<'_>) -> Result<Levels, BitstreamError> {
    if src.read_bit()? {
        decode_coeff_block(src)
    } else {
        Ok([0; 64])
    }
}

fn write_partition(sink: &mut BitSink, ctx: &FrameContext, p: &Partition) -> Result<(), BitstreamError> {
    if ctx.forward_present {
        sink.write_bit(p.ref_index == RefIndex::Forward);
    } else if p.ref_index != RefIndex::Backward {
        return Err(BitstreamError::Inconsistent("forward reference without forward flag"));
    }
    sink.write_se(p.mv.dx as i64);
    sink.write_se(p.mv.dy as i64);
    Ok(())
}

fn read_partition(src: &mut BitSource<'_>, ctx: &FrameContext) -> Result<Partition, BitstreamError> {
    let ref_index = if ctx.forward_present && src.read_bit()? {
        RefIndex::Forward
    } else {
        RefIndex::Backward
    };
    let mut mv_component = || {
        src.read_se()
            .and_then(|v| i32::try_from(v).map_err(|_| BitstreamError::MalformedExpGolomb))
    };
    let dx = mv_component()?;
    let dy = mv_component()?;
    Ok(Partition {
        ref_index,
        mv: MotionVector { dx, dy },
    })
}

/// Serializes one frame and pads it to a byte boundary.
pub fn write_frame(
    sink: &mut BitSink,
    ctx: &FrameContext,
    frame: &CodedFrame,
) -> Result<(), BitstreamError> {
    if frame.pose.is_some() != ctx.pose_payload {
        return Err(BitstreamError::Inconsistent("pose payload presence"));
    }
    sink.write_bit(matches!(frame.body, FrameBody::Inter(_)));
    if let Some(pose) = &frame.pose {
        write_pose(sink, pose);
    }
    match &frame.body {
        FrameBody::Intra(mbs) => {
            if mbs.len() != ctx.mb_count {
                return Err(BitstreamError::Inconsistent("macroblock count"));
            }
            for mb in mbs {
                if mb.chroma.len() != ctx.chroma_blocks() {
                    return Err(BitstreamError::Inconsistent("chroma block count"));
                }
                for levels in mb.luma.iter().chain(&mb.chroma) {
                    write_transform_block(sink, levels);
                }
            }
        }
        FrameBody::Inter(mbs) => {
            if mbs.len() != ctx.mb_count {
                return Err(BitstreamError::Inconsistent("macroblock count"));
            }
            for mb in mbs {
                if mb.chroma.len() != ctx.chroma_blocks() {
                    return Err(BitstreamError::Inconsistent("chroma block count"));
                }
                sink.write_bit(mb.split);
                if mb.split {
                    if mb.partitions.len() != 4 {
                        return Err(BitstreamError::Inconsistent("split partition count"));
                    }
                    for (p, levels) in mb.partitions.iter().zip(&mb.luma) {
                        write_partition(sink, ctx, p)?;
                        write_transform_block(sink, levels);
                    }
                } else {
                    if mb.partitions.len() != 1 {
                        return Err(BitstreamError::Inconsistent("partition count"));
                    }
                    write_partition(sink, ctx, &mb.partitions[0])?;
                    for levels in &mb.luma {
                        write_transform_block(sink, levels);
                    }
                }
                for levels in &mb.chroma {
                    write_transform_block(sink, levels);
                }
            }
        }
    }
    sink.byte_align();
    Ok(())
}

pub fn read_frame(src: &mut BitSource<'_>, ctx: &FrameContext) -> Result<CodedFrame, BitstreamError> {
    debug_assert!(src.is_aligned());
    let inter = src.read_bit()?;
    let pose = if ctx.pose_payload {
        Some(read_pose(src)?)
    } else {
        None
    };
    let body = if inter {
        let mut mbs = Vec::with_capacity(ctx.mb_count);
        for _ in 0..ctx.mb_count {
            let split = src.read_bit()?;
            let mut luma = [[0i32; 64]; 4];
            let partitions = if split {
                let mut parts = Vec::with_capacity(4);
                for levels in luma.iter_mut() {
                    parts.push(read_partition(src, ctx)?);
                    *levels = read_transform_block(src)?;
                }
                parts
            } else {
                let p = read_partition(src, ctx)?;
                for levels in luma.iter_mut() {
                    *levels = read_transform_block(src)?;
                }
                vec![p]
            };
            let chroma = (0..ctx.chroma_blocks())
                .map(|_| read_transform_block(src))
                .collect::<Result<_, _>>()?;
            mbs.push(BlockDecision {
                split,
                partitions,
                luma,
                chroma,
            });
        }
        FrameBody::Inter(mbs)
    } else {
        let mut mbs = Vec::with_capacity(ctx.mb_count);
        for _ in 0..ctx.mb_count {
            let mut luma = [[0i32; 64]; 4];
            for levels in luma.iter_mut() {
                *levels = read_transform_block(src)?;
            }
            let chroma = (0..ctx.chroma_blocks())
                .map(|_| read_transform_block(src))
                .collect::<Result<_, _>>()?;
            mbs.push(IntraMacroblock { luma, chroma });
        }
        FrameBody::Intra(mbs)
    };
    src.byte_align()?;
    Ok(CodedFrame { pose, body })
}
