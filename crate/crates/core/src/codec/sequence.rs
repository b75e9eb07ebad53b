//! Whole-sequence coding: GOP structure, forward reference generation and
//! the container.

use crate::bitstream::{
    read_frame, write_frame, BitSink, BitSource, BitstreamError, ContainerHeader, FrameContext,
    TRAILER_BYTES,
};
use crate::model::{
    pad_to_macroblock, padded_size, EncoderConfig, ForwardRefMode, Frame, Pose, QuantizedPose,
    DEFAULT_BUMP_RADIUS, DEFAULT_PATCH_RADIUS, MB_SIZE,
};
use crate::synth::{
    load_external_forward_frame, synthesize_linear, synthesize_patchwarp, FrameStore, SynthInputs,
};

use super::{
    decode_i_frame, decode_p_frame, encode_i_frame, encode_p_frame, CodecError, CodedFrame,
    FrameBody, FrameType, MbStats, References,
};

/// What the encoder spent on one frame.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrameReport {
    pub frame_type: FrameType,
    /// Frame bits including pose payload and alignment padding.
    pub bits: u64,
    /// Per-macroblock search statistics; empty for I-frames.
    pub stats: Vec<MbStats>,
}

#[derive(Debug, Clone)]
pub struct EncodedSequence {
    pub header: ContainerHeader,
    pub bytes: Vec<u8>,
    /// Encoder-side reconstruction, cropped to the source size.
    pub recon: Vec<Frame>,
    pub reports: Vec<FrameReport>,
    pub checksum: u32,
}

impl EncodedSequence {
    pub fn total_bits(&self) -> u64 {
        self.bytes.len() as u64 * 8
    }
}

/// Decoder parameters not carried in the stream.
#[derive(Clone, Copy)]
pub struct DecodeOptions<'a> {
    pub bump_radius: u32,
    pub patch_radius: u32,
    pub external: Option<&'a dyn FrameStore>,
}

impl Default for DecodeOptions<'_> {
    fn default() -> Self {
        DecodeOptions {
            bump_radius: DEFAULT_BUMP_RADIUS,
            patch_radius: DEFAULT_PATCH_RADIUS,
            external: None,
        }
    }
}

impl<'a> DecodeOptions<'a> {
    /// Options matching the synthesis radii of an encoder configuration.
    pub fn for_config(cfg: &EncoderConfig, external: Option<&'a dyn FrameStore>) -> Self {
        DecodeOptions {
            bump_radius: cfg.bump_radius,
            patch_radius: cfg.patch_radius,
            external,
        }
    }
}

#[derive(Debug, Clone)]
pub struct DecodedSequence {
    pub header: ContainerHeader,
    pub frames: Vec<Frame>,
}

fn crc_update(hasher: &mut crc32fast::Hasher, frame: &Frame) {
    hasher.update(frame.luma());
}

/// Builds the forward reference for a P-frame at 0-based index `k`.
#[allow(clippy::too_many_arguments)]
fn forward_reference(
    mode: ForwardRefMode,
    i_recon: &Frame,
    i_pose: Option<&QuantizedPose>,
    pose: Option<&QuantizedPose>,
    canvas: (usize, usize),
    bump_radius: u32,
    patch_radius: u32,
    external: Option<&dyn FrameStore>,
    k: usize,
) -> Result<Option<Frame>, CodecError> {
    let synth_inputs = || -> Result<SynthInputs<'_>, CodecError> {
        let (pi, pt) = i_pose.zip(pose).ok_or(CodecError::MissingPoses(mode.name()))?;
        Ok(SynthInputs::new(i_recon, pi, pt, canvas)?)
    };
    Ok(match mode {
        ForwardRefMode::Off => None,
        ForwardRefMode::Linear => Some(synthesize_linear(&synth_inputs()?, bump_radius)),
        ForwardRefMode::PatchWarp => Some(synthesize_patchwarp(&synth_inputs()?, patch_radius)),
        ForwardRefMode::External => {
            let store = external.ok_or(CodecError::MissingFrameStore)?;
            let f = load_external_forward_frame(store, k + 1, canvas.0, canvas.1, i_recon.chroma())?;
            Some(pad_to_macroblock(&f).frame)
        }
    })
}

/// Encodes a sequence. Frame `k` (0-based) is an I-frame when
/// `k % gop_size == 0`; every other frame is a P-frame predicted from its
/// GOP's decoded I-frame and, when enabled, a forward reference.
pub fn encode_sequence(
    frames: &[Frame],
    poses: Option<&[Pose]>,
    cfg: &EncoderConfig,
    external: Option<&dyn FrameStore>,
) -> Result<EncodedSequence, CodecError> {
    cfg.validate()?;
    let first = frames.first().ok_or(CodecError::EmptySequence)?;
    for (k, f) in frames.iter().enumerate() {
        super::check_geometry(k + 1, first, f)?;
    }
    let (w, h) = (first.width(), first.height());
    if w > u16::MAX as usize || h > u16::MAX as usize {
        return Err(CodecError::FrameTooLarge { width: w, height: h });
    }
    let frame_count = u32::try_from(frames.len()).map_err(|_| CodecError::TooManyFrames(frames.len()))?;
    let mode = cfg.forward_ref_mode;
    if mode.carries_poses() && poses.is_none() {
        return Err(CodecError::MissingPoses(mode.name()));
    }
    if let Some(p) = poses {
        if p.len() != frames.len() {
            return Err(CodecError::PoseCountMismatch {
                frames: frames.len(),
                poses: p.len(),
            });
        }
    }
    if mode == ForwardRefMode::External && external.is_none() {
        return Err(CodecError::MissingFrameStore);
    }
    let qposes: Option<Vec<QuantizedPose>> =
        poses.filter(|_| mode.carries_poses()).map(|p| p.iter().map(Pose::quantize).collect());

    let header = ContainerHeader {
        width: w as u16,
        height: h as u16,
        chroma: first.chroma(),
        gop_size: cfg.gop_size as u8,
        qp: cfg.qp,
        forward_mode: mode,
        frame_count,
    };
    let (pw, ph) = padded_size(w, h);
    let ctx = FrameContext {
        mb_count: (pw / MB_SIZE) * (ph / MB_SIZE),
        chroma: first.chroma(),
        forward_present: mode.enabled(),
        pose_payload: mode.carries_poses(),
    };

    let mut sink = BitSink::new();
    header.write(&mut sink);
    let mut hasher = crc32fast::Hasher::new();
    let mut recon = Vec::with_capacity(frames.len());
    let mut reports = Vec::with_capacity(frames.len());
    let mut i_recon: Option<Frame> = None;
    let mut i_index = 0;
    for (k, f) in frames.iter().enumerate() {
        let x = pad_to_macroblock(f).frame;
        let pose = qposes.as_ref().map(|q| q[k]);
        let (mut coded, rec, stats) = if k % cfg.gop_size as usize == 0 {
            let (coded, rec) = encode_i_frame(&x, cfg)?;
            i_index = k;
            (coded, rec, Vec::new())
        } else {
            let backward = i_recon.as_ref().expect("GOP starts with an I-frame");
            let forward = forward_reference(
                mode,
                backward,
                qposes.as_ref().map(|q| &q[i_index]),
                pose.as_ref(),
                (w, h),
                cfg.bump_radius,
                cfg.patch_radius,
                external,
                k,
            )?;
            let out = encode_p_frame(
                &x,
                References {
                    backward,
                    forward: forward.as_ref(),
                },
                cfg,
            )?;
            (out.coded, out.recon, out.stats)
        };
        coded.pose = pose;
        let before = sink.bit_len();
        write_frame(&mut sink, &ctx, &coded).map_err(|source| CodecError::Corrupt {
            frame: k + 1,
            source,
        })?;
        reports.push(FrameReport {
            frame_type: coded.frame_type(),
            bits: sink.bit_len() - before,
            stats,
        });
        let cropped = rec.crop(w, h);
        crc_update(&mut hasher, &cropped);
        recon.push(cropped);
        if coded.frame_type() == FrameType::I {
            i_recon = Some(rec);
        }
    }
    let checksum = hasher.finalize();
    sink.write_bytes(&checksum.to_be_bytes());
    Ok(EncodedSequence {
        header,
        bytes: sink.into_bytes(),
        recon,
        reports,
        checksum,
    })
}

/// Smallest possible coded macroblock: four coded-block flags.
const MIN_MB_BITS: usize = 4;

fn corrupt(frame: usize, source: BitstreamError) -> CodecError {
    match source {
        BitstreamError::UnexpectedEnd => CodecError::Truncated { frame },
        source => CodecError::Corrupt { frame, source },
    }
}

pub fn decode_sequence(bytes: &[u8], opts: &DecodeOptions<'_>) -> Result<DecodedSequence, CodecError> {
    let mut src = BitSource::new(bytes);
    let header = ContainerHeader::read(&mut src).map_err(CodecError::Header)?;
    let (w, h) = (header.width as usize, header.height as usize);
    let (pw, ph) = padded_size(w, h);
    let mode = header.forward_mode;
    let ctx = FrameContext {
        mb_count: (pw / MB_SIZE) * (ph / MB_SIZE),
        chroma: header.chroma,
        forward_present: mode.enabled(),
        pose_payload: mode.carries_poses(),
    };
    let gop = header.gop_size as usize;
    let mut hasher = crc32fast::Hasher::new();
    let mut frames = Vec::new();
    let mut i_state: Option<(Frame, Option<QuantizedPose>)> = None;
    for k in 0..header.frame_count as usize {
        let n = k + 1;
        if src.remaining_bits() < ctx.mb_count * MIN_MB_BITS {
            return Err(CodecError::Truncated { frame: n });
        }
        let coded: CodedFrame = read_frame(&mut src, &ctx).map_err(|e| corrupt(n, e))?;
        let expected = if k % gop == 0 { FrameType::I } else { FrameType::P };
        if coded.frame_type() != expected {
            return Err(CodecError::FrameTypeMismatch {
                frame: n,
                expected: expected.name(),
                found: coded.frame_type().name(),
            });
        }
        let rec = match &coded.body {
            FrameBody::Intra(mbs) => decode_i_frame(mbs, pw, ph, header.chroma, header.qp)?,
            FrameBody::Inter(mbs) => {
                let (backward, i_pose) = i_state.as_ref().expect("GOP starts with an I-frame");
                let forward = forward_reference(
                    mode,
                    backward,
                    i_pose.as_ref(),
                    coded.pose.as_ref(),
                    (w, h),
                    opts.bump_radius,
                    opts.patch_radius,
                    opts.external,
                    k,
                )?;
                decode_p_frame(
                    mbs,
                    References {
                        backward,
                        forward: forward.as_ref(),
                    },
                    header.qp,
                )?
            }
        };
        let cropped = rec.crop(w, h);
        crc_update(&mut hasher, &cropped);
        frames.push(cropped);
        if expected == FrameType::I {
            i_state = Some((rec, coded.pose));
        }
    }
    let rest = bytes.len() - src.byte_pos();
    if rest < TRAILER_BYTES {
        return Err(CodecError::MissingChecksum);
    }
    if rest > TRAILER_BYTES {
        return Err(CodecError::TrailingData(rest - TRAILER_BYTES));
    }
    let stored = u32::from_be_bytes(bytes[bytes.len() - 4..].try_into().expect("four bytes"));
    let actual = hasher.finalize();
    if stored != actual {
        return Err(CodecError::ChecksumMismatch {
            expected: stored,
            actual,
        });
    }
    Ok(DecodedSequence { header, frames })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bitstream::HEADER_BYTES;
    use crate::model::{ChromaFormat, ModeDecision, JOINT_COUNT, POSE_PAYLOAD_BITS};
    use crate::synth::Y4mStore;

    fn moving_scene(n: usize, w: usize, h: usize, chroma: ChromaFormat) -> (Vec<Frame>, Vec<Pose>) {
        let mut frames = Vec::new();
        let mut poses = Vec::new();
        for t in 0..n {
            let ox = 8 + 3 * t;
            let mut f = Frame::filled(w, h, chroma, 60);
            for (i, v) in f.plane_mut(0).iter_mut().enumerate() {
                let (x, y) = (i % w, i / w);
                *v = ((x * 7 + y * 13) % 40 + 40) as u8;
                if (ox..ox + 12).contains(&x) && (10..26).contains(&y) {
                    *v = (200 + (x - ox + y) % 40) as u8;
                }
            }
            frames.push(f);
            let c = (ox as f64 + 6.0, 18.0);
            poses.push(Pose::from_xy([c; JOINT_COUNT]).unwrap());
        }
        (frames, poses)
    }

    fn cfg(mode: ForwardRefMode, gop: u32) -> EncoderConfig {
        EncoderConfig {
            qp: 28,
            gop_size: gop,
            search_range: 6,
            forward_ref_mode: mode,
            ..Default::default()
        }
    }

    #[test]
    fn drift_free_in_every_mode() {
        let (frames, poses) = moving_scene(6, 40, 36, ChromaFormat::C420);
        let store = Y4mStore::from_frames(frames.clone());
        for mode in [
            ForwardRefMode::Off,
            ForwardRefMode::Linear,
            ForwardRefMode::PatchWarp,
            ForwardRefMode::External,
        ] {
            for decision in [ModeDecision::Sad, ModeDecision::Lagrangian] {
                let c = EncoderConfig { mode_decision: decision, ..cfg(mode, 4) };
                let enc = encode_sequence(&frames, Some(&poses), &c, Some(&store)).unwrap();
                let dec = decode_sequence(&enc.bytes, &DecodeOptions::for_config(&c, Some(&store))).unwrap();
                assert_eq!(dec.frames, enc.recon, "{mode:?}");
                assert_eq!(dec.frames[0].width(), 40);
                let types: Vec<_> = enc.reports.iter().map(|r| r.frame_type).collect();
                assert_eq!(types[4], FrameType::I);
                assert_eq!(types[1], FrameType::P);
            }
        }
    }

    #[test]
    fn external_forward_equal_to_source_is_lossless_in_luma_prediction() {
        let (frames, _) = moving_scene(3, 32, 32, ChromaFormat::Mono);
        let store = Y4mStore::from_frames(frames.clone());
        let c = cfg(ForwardRefMode::External, 32);
        let enc = encode_sequence(&frames, None, &c, Some(&store)).unwrap();
        for r in &enc.reports[1..] {
            assert!(r.stats.iter().all(|s| s.chosen_sad == 0));
        }
    }

    #[test]
    fn frame_bits_account_for_whole_stream() {
        let (frames, poses) = moving_scene(3, 32, 32, ChromaFormat::Mono);
        let enc = encode_sequence(&frames, Some(&poses), &cfg(ForwardRefMode::PatchWarp, 32), None).unwrap();
        let sum: u64 = enc.reports.iter().map(|r| r.bits).sum();
        assert_eq!(sum + 8 * (HEADER_BYTES + TRAILER_BYTES) as u64, enc.total_bits());
        assert!(enc.reports.iter().all(|r| r.bits > POSE_PAYLOAD_BITS as u64));
    }

    #[test]
    fn single_frame_round_trip() {
        let (frames, _) = moving_scene(1, 17, 9, ChromaFormat::C420);
        let enc = encode_sequence(&frames, None, &cfg(ForwardRefMode::Off, 32), None).unwrap();
        let dec = decode_sequence(&enc.bytes, &DecodeOptions::default()).unwrap();
        assert_eq!(dec.frames, enc.recon);
        assert_eq!(dec.header.frame_count, 1);
    }

    #[test]
    fn pose_requirements() {
        let (frames, poses) = moving_scene(3, 32, 32, ChromaFormat::Mono);
        let c = cfg(ForwardRefMode::PatchWarp, 32);
        assert!(matches!(
            encode_sequence(&frames, None, &c, None),
            Err(CodecError::MissingPoses(_))
        ));
        assert!(matches!(
            encode_sequence(&frames, Some(&poses[..2]), &c, None),
            Err(CodecError::PoseCountMismatch { frames: 3, poses: 2 })
        ));
        assert!(matches!(
            encode_sequence(&frames, None, &cfg(ForwardRefMode::External, 32), None),
            Err(CodecError::MissingFrameStore)
        ));
        assert!(matches!(encode_sequence(&[], None, &cfg(ForwardRefMode::Off, 4), None), Err(CodecError::EmptySequence)));
    }

    #[test]
    fn checksum_is_standard_crc32() {
        assert_eq!(crc32fast::hash(b"123456789"), 0xCBF4_3926);
    }

    #[test]
    fn off_mode_has_no_pose_or_reference_bits() {
        // static content: every P macroblock is split 0, mv (0,0), four empty cbfs
        let f = Frame::filled(32, 32, ChromaFormat::Mono, 90);
        let frames = vec![f.clone(), f.clone(), f];
        let enc = encode_sequence(&frames, None, &cfg(ForwardRefMode::Off, 32), None).unwrap();
        assert_eq!(enc.reports[1].bits, 32);
        let c = cfg(ForwardRefMode::External, 32);
        let store = Y4mStore::from_frames(frames.clone());
        let enc = encode_sequence(&frames, None, &c, Some(&store)).unwrap();
        // one frame-type bit plus 4 x (split, ref, mv, mv, 4 cbf), padded to 40
        assert_eq!(enc.reports[1].bits, 40);
    }

    #[test]
    fn stream_errors_are_distinct() {
        let (frames, poses) = moving_scene(4, 32, 32, ChromaFormat::Mono);
        let c = cfg(ForwardRefMode::Linear, 2);
        let enc = encode_sequence(&frames, Some(&poses), &c, None).unwrap();
        let opts = DecodeOptions::for_config(&c, None);

        let short = &enc.bytes[..enc.bytes.len() - 2];
        assert!(matches!(decode_sequence(short, &opts), Err(CodecError::MissingChecksum)));
        let cut = &enc.bytes[..HEADER_BYTES + 40];
        assert!(matches!(decode_sequence(cut, &opts), Err(CodecError::Truncated { frame: 1 })));
        let mut long = enc.bytes.clone();
        long.push(0);
        assert!(matches!(decode_sequence(&long, &opts), Err(CodecError::TrailingData(1))));
        let mut bad = enc.bytes.clone();
        bad[0] = b'X';
        assert!(matches!(decode_sequence(&bad, &opts), Err(CodecError::Header(_))));
        let mut crc = enc.bytes.clone();
        *crc.last_mut().unwrap() ^= 1;
        assert!(matches!(decode_sequence(&crc, &opts), Err(CodecError::ChecksumMismatch { .. })));
    }

    #[test]
    fn flipped_payload_bits_are_caught_in_luma() {
        let (frames, poses) = moving_scene(4, 32, 32, ChromaFormat::C420);
        let c = cfg(ForwardRefMode::PatchWarp, 4);
        let enc = encode_sequence(&frames, Some(&poses), &c, None).unwrap();
        let opts = DecodeOptions::for_config(&c, None);
        let payload = HEADER_BYTES..enc.bytes.len() - TRAILER_BYTES;
        for byte in payload.step_by(7) {
            for bit in [0, 3, 7] {
                let mut b = enc.bytes.clone();
                b[byte] ^= 1 << bit;
                match decode_sequence(&b, &opts) {
                    Err(_) => {}
                    // the checksum covers luma only
                    Ok(d) => {
                        for (a, b) in d.frames.iter().zip(&enc.recon) {
                            assert_eq!(a.luma(), b.luma(), "byte {byte} bit {bit}");
                        }
                    }
                }
            }
        }
    }
}
