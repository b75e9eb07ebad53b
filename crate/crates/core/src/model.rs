//! Shared value types: frames, poses, block geometry and coder configuration.

use thiserror::Error;

/// Macroblock edge length in luma samples.
pub const MB_SIZE: usize = 16;
/// Number of joints in a pose.
pub const JOINT_COUNT: usize = 13;
/// Bits used to store one fixed-point pose coordinate.
pub const POSE_COORD_BITS: u32 = 24;
/// Size of a serialized pose in bits (26 coordinates of 24 bits).
pub const POSE_PAYLOAD_BITS: u32 = 2 * JOINT_COUNT as u32 * POSE_COORD_BITS;
/// Largest representable coordinate in 16.8 unsigned fixed point.
pub const POSE_COORD_MAX: f64 = ((1u32 << POSE_COORD_BITS) - 1) as f64 / 256.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("frame dimensions must be positive, got {width}x{height}")]
    EmptyFrame { width: usize, height: usize },
    #[error("plane {plane} has {found} samples, expected {expected}")]
    PlaneSize {
        plane: usize,
        expected: usize,
        found: usize,
    },
    #[error("joint {joint} coordinate {value} is outside the 16.8 fixed-point range")]
    CoordinateRange { joint: usize, value: f64 },
    #[error("dimensions {width}x{height} are not multiples of 16")]
    NotMacroblockAligned { width: usize, height: usize },
    #[error("fixed-point value {0:#x} does not fit in 24 bits")]
    FixedPointOverflow(u32),
    #[error("invalid configuration: {0}")]
    Config(String),
}

/// Rounds half away from zero. This is the single rounding rule used
/// wherever a real value is quantized.
#[inline]
pub fn round_half_away(v: f64) -> f64 {
    v.round()
}

/// Integer division by a positive divisor, rounding half away from zero.
#[inline]
pub fn div_round(num: i64, den: i64) -> i64 {
    debug_assert!(den > 0);
    if num >= 0 {
        (2 * num + den) / (2 * den)
    } else {
        -((-2 * num + den) / (2 * den))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ChromaFormat {
    Mono,
    C420,
}

impl ChromaFormat {
    pub fn plane_count(self) -> usize {
        match self {
            ChromaFormat::Mono => 1,
            ChromaFormat::C420 => 3,
        }
    }

    pub fn header_byte(self) -> u8 {
        match self {
            ChromaFormat::Mono => 0,
            ChromaFormat::C420 => 1,
        }
    }

    pub fn from_header_byte(b: u8) -> Option<Self> {
        match b {
            0 => Some(ChromaFormat::Mono),
            1 => Some(ChromaFormat::C420),
            _ => None,
        }
    }
}

/// Planar 8-bit image. Plane 0 is luma; in 4:2:0 planes 1 and 2 hold Cb and
/// Cr at `ceil(w/2) x ceil(h/2)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    width: usize,
    height: usize,
    chroma: ChromaFormat,
    planes: Vec<Vec<u8>>,
}

impl Frame {
    pub fn new(
        width: usize,
        height: usize,
        chroma: ChromaFormat,
        planes: Vec<Vec<u8>>,
    ) -> Result<Self, ModelError> {
        if width == 0 || height == 0 {
            return Err(ModelError::EmptyFrame { width, height });
        }
        if planes.len() != chroma.plane_count() {
            return Err(ModelError::PlaneSize {
                plane: planes.len(),
                expected: chroma.plane_count(),
                found: planes.len(),
            });
        }
        for (i, p) in planes.iter().enumerate() {
            let (w, h) = plane_dims(width, height, i);
            if p.len() != w * h {
                return Err(ModelError::PlaneSize {
                    plane: i,
                    expected: w * h,
                    found: p.len(),
                });
            }
        }
        Ok(Frame {
            width,
            height,
            chroma,
            planes,
        })
    }

    /// A frame with every sample of every plane set to `value`.
    pub fn filled(width: usize, height: usize, chroma: ChromaFormat, value: u8) -> Self {
        assert!(width > 0 && height > 0);
        let planes = (0..chroma.plane_count())
            .map(|i| {
                let (w, h) = plane_dims(width, height, i);
                vec![value; w * h]
            })
            .collect();
        Frame {
            width,
            height,
            chroma,
            planes,
        }
    }

    /// Single-plane frame from row-major luma samples.
    pub fn from_luma(width: usize, height: usize, luma: Vec<u8>) -> Result<Self, ModelError> {
        Frame::new(width, height, ChromaFormat::Mono, vec![luma])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn chroma(&self) -> ChromaFormat {
        self.chroma
    }

    pub fn plane_count(&self) -> usize {
        self.planes.len()
    }

    pub fn plane(&self, i: usize) -> &[u8] {
        &self.planes[i]
    }

    pub fn plane_mut(&mut self, i: usize) -> &mut [u8] {
        &mut self.planes[i]
    }

    pub fn planes(&self) -> &[Vec<u8>] {
        &self.planes
    }

    pub fn luma(&self) -> &[u8] {
        &self.planes[0]
    }

    /// Width and height of plane `i`.
    pub fn plane_size(&self, i: usize) -> (usize, usize) {
        plane_dims(self.width, self.height, i)
    }

    pub fn sample(&self, plane: usize, x: usize, y: usize) -> u8 {
        let (w, _) = self.plane_size(plane);
        self.planes[plane][y * w + x]
    }

    pub fn same_geometry(&self, other: &Frame) -> bool {
        self.width == other.width && self.height == other.height && self.chroma == other.chroma
    }

    /// Top-left `width x height` region of this frame.
    pub fn crop(&self, width: usize, height: usize) -> Frame {
        assert!(width <= self.width && height <= self.height && width > 0 && height > 0);
        let planes = self
            .planes
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let (sw, _) = plane_dims(self.width, self.height, i);
                let (dw, dh) = plane_dims(width, height, i);
                let mut out = Vec::with_capacity(dw * dh);
                for y in 0..dh {
                    out.extend_from_slice(&p[y * sw..y * sw + dw]);
                }
                out
            })
            .collect();
        Frame {
            width,
            height,
            chroma: self.chroma,
            planes,
        }
    }

    pub fn into_planes(self) -> Vec<Vec<u8>> {
        self.planes
    }
}

/// Dimensions of plane `i` for a frame of the given luma size.
pub fn plane_dims(width: usize, height: usize, plane: usize) -> (usize, usize) {
    if plane == 0 {
        (width, height)
    } else {
        (width.div_ceil(2), height.div_ceil(2))
    }
}

/// A frame padded up to whole macroblocks, remembering the source size.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PaddedFrame {
    pub frame: Frame,
    pub original_width: usize,
    pub original_height: usize,
}

impl PaddedFrame {
    pub fn cropped(&self) -> Frame {
        self.frame.crop(self.original_width, self.original_height)
    }
}

pub fn padded_size(width: usize, height: usize) -> (usize, usize) {
    (width.div_ceil(MB_SIZE) * MB_SIZE, height.div_ceil(MB_SIZE) * MB_SIZE)
}

/// Rounds the frame up to a multiple of 16 in each direction by replicating
/// the last column and row of every plane.
pub fn pad_to_macroblock(frame: &Frame) -> PaddedFrame {
    let (pw, ph) = padded_size(frame.width, frame.height);
    let planes = frame
        .planes
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let (sw, sh) = plane_dims(frame.width, frame.height, i);
            let (dw, dh) = plane_dims(pw, ph, i);
            let mut out = Vec::with_capacity(dw * dh);
            for y in 0..dh {
                let row = &p[y.min(sh - 1) * sw..][..sw];
                out.extend_from_slice(row);
                out.extend(std::iter::repeat_n(row[sw - 1], dw - sw));
            }
            out
        })
        .collect();
    PaddedFrame {
        frame: Frame {
            width: pw,
            height: ph,
            chroma: frame.chroma,
            planes,
        },
        original_width: frame.width,
        original_height: frame.height,
    }
}

/// Axis-aligned block in luma sample coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BlockRect {
    pub x: usize,
    pub y: usize,
    pub w: usize,
    pub h: usize,
}

impl BlockRect {
    pub fn new(x: usize, y: usize, w: usize, h: usize) -> Self {
        debug_assert!(matches!(w, 8 | 16) && matches!(h, 8 | 16));
        BlockRect { x, y, w, h }
    }

    /// The four 8x8 quadrants of a 16x16 block, in raster order.
    pub fn quadrants(&self) -> [BlockRect; 4] {
        let (hw, hh) = (self.w / 2, self.h / 2);
        [
            BlockRect::new(self.x, self.y, hw, hh),
            BlockRect::new(self.x + hw, self.y, hw, hh),
            BlockRect::new(self.x, self.y + hh, hw, hh),
            BlockRect::new(self.x + hw, self.y + hh, hw, hh),
        ]
    }
}

/// Raster-order 16x16 macroblocks covering a padded frame.
pub fn partition_frame(width: usize, height: usize) -> Result<Vec<BlockRect>, ModelError> {
    if width == 0 || height == 0 || !width.is_multiple_of(MB_SIZE) || !height.is_multiple_of(MB_SIZE) {
        return Err(ModelError::NotMacroblockAligned { width, height });
    }
    let mut out = Vec::with_capacity((width / MB_SIZE) * (height / MB_SIZE));
    for y in (0..height).step_by(MB_SIZE) {
        for x in (0..width).step_by(MB_SIZE) {
            out.push(BlockRect::new(x, y, MB_SIZE, MB_SIZE));
        }
    }
    Ok(out)
}

/// Joint order shared by encoder and decoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Joint {
    Head,
    LeftShoulder,
    RightShoulder,
    LeftElbow,
    RightElbow,
    LeftWrist,
    RightWrist,
    LeftHip,
    RightHip,
    LeftKnee,
    RightKnee,
    LeftAnkle,
    RightAnkle,
}

impl Joint {
    pub const ALL: [Joint; JOINT_COUNT] = [
        Joint::Head,
        Joint::LeftShoulder,
        Joint::RightShoulder,
        Joint::LeftElbow,
        Joint::RightElbow,
        Joint::LeftWrist,
        Joint::RightWrist,
        Joint::LeftHip,
        Joint::RightHip,
        Joint::LeftKnee,
        Joint::RightKnee,
        Joint::LeftAnkle,
        Joint::RightAnkle,
    ];

    pub fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

/// Thirteen 2-D joint positions in pixel units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    joints: [Point; JOINT_COUNT],
}

impl Pose {
    pub fn new(joints: [Point; JOINT_COUNT]) -> Result<Self, ModelError> {
        for (j, p) in joints.iter().enumerate() {
            for v in [p.x, p.y] {
                if !v.is_finite() || !(0.0..=POSE_COORD_MAX).contains(&v) {
                    return Err(ModelError::CoordinateRange { joint: j, value: v });
                }
            }
        }
        Ok(Pose { joints })
    }

    pub fn from_xy(coords: [(f64, f64); JOINT_COUNT]) -> Result<Self, ModelError> {
        Pose::new(coords.map(|(x, y)| Point { x, y }))
    }

    pub fn joints(&self) -> &[Point; JOINT_COUNT] {
        &self.joints
    }

    pub fn joint(&self, j: Joint) -> Point {
        self.joints[j.index()]
    }

    pub fn quantize(&self) -> QuantizedPose {
        let mut coords = [0u32; 2 * JOINT_COUNT];
        for (j, p) in self.joints.iter().enumerate() {
            // in range by construction, so the product fits in 24 bits
            coords[2 * j] = round_half_away(p.x * 256.0) as u32;
            coords[2 * j + 1] = round_half_away(p.y * 256.0) as u32;
        }
        QuantizedPose { coords }
    }
}

/// Pose stored as 26 unsigned 16.8 fixed-point values, x then y per joint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct QuantizedPose {
    coords: [u32; 2 * JOINT_COUNT],
}

impl QuantizedPose {
    pub fn from_raw(coords: [u32; 2 * JOINT_COUNT]) -> Result<Self, ModelError> {
        if let Some(&c) = coords.iter().find(|&&c| c >= 1 << POSE_COORD_BITS) {
            return Err(ModelError::FixedPointOverflow(c));
        }
        Ok(QuantizedPose { coords })
    }

    pub fn raw(&self) -> &[u32; 2 * JOINT_COUNT] {
        &self.coords
    }

    /// Fixed-point (x, y) of joint `j`, in 1/256 pixel units.
    pub fn fixed(&self, j: usize) -> (i64, i64) {
        (self.coords[2 * j] as i64, self.coords[2 * j + 1] as i64)
    }

    /// Joint `j` rounded to whole pixels.
    pub fn rounded(&self, j: usize) -> (i64, i64) {
        let (x, y) = self.fixed(j);
        (div_round(x, 256), div_round(y, 256))
    }

    pub fn dequantize(&self) -> Pose {
        let mut joints = [Point { x: 0.0, y: 0.0 }; JOINT_COUNT];
        for (j, p) in joints.iter_mut().enumerate() {
            p.x = self.coords[2 * j] as f64 / 256.0;
            p.y = self.coords[2 * j + 1] as f64 / 256.0;
        }
        Pose { joints }
    }
}

pub fn quantize_pose(pose: &Pose) -> QuantizedPose {
    pose.quantize()
}

pub fn dequantize_pose(qp: &QuantizedPose) -> Pose {
    qp.dequantize()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ForwardRefMode {
    Off,
    Linear,
    PatchWarp,
    External,
}

impl ForwardRefMode {
    /// Value of header flag bits 1-2.
    pub fn code(self) -> u8 {
        match self {
            ForwardRefMode::Off => 0,
            ForwardRefMode::Linear => 1,
            ForwardRefMode::PatchWarp => 2,
            ForwardRefMode::External => 3,
        }
    }

    pub fn from_code(c: u8) -> Option<Self> {
        match c {
            0 => Some(ForwardRefMode::Off),
            1 => Some(ForwardRefMode::Linear),
            2 => Some(ForwardRefMode::PatchWarp),
            3 => Some(ForwardRefMode::External),
            _ => None,
        }
    }

    pub fn enabled(self) -> bool {
        self != ForwardRefMode::Off
    }

    /// Whether frames carry a pose payload in this mode.
    pub fn carries_poses(self) -> bool {
        matches!(self, ForwardRefMode::Linear | ForwardRefMode::PatchWarp)
    }

    pub fn name(self) -> &'static str {
        match self {
            ForwardRefMode::Off => "off",
            ForwardRefMode::Linear => "linear",
            ForwardRefMode::PatchWarp => "patchwarp",
            ForwardRefMode::External => "external",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModeDecision {
    Sad,
    Lagrangian,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EncoderConfig {
    pub qp: u8,
    pub gop_size: u32,
    pub search_range: u32,
    pub forward_ref_mode: ForwardRefMode,
    pub mode_decision: ModeDecision,
    pub patch_radius: u32,
    pub bump_radius: u32,
}

pub const DEFAULT_QPS: [u8; 4] = [24, 28, 34, 38];
pub const DEFAULT_GOP: u32 = 32;
pub const DEFAULT_SEARCH_RANGE: u32 = 16;
pub const DEFAULT_BUMP_RADIUS: u32 = 4;
pub const DEFAULT_PATCH_RADIUS: u32 = 24;

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            qp: 28,
            gop_size: DEFAULT_GOP,
            search_range: DEFAULT_SEARCH_RANGE,
            forward_ref_mode: ForwardRefMode::Off,
            mode_decision: ModeDecision::Sad,
            patch_radius: DEFAULT_PATCH_RADIUS,
            bump_radius: DEFAULT_BUMP_RADIUS,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.qp > 51 {
            return Err(ModelError::Config(format!("qp {} outside [0,51]", self.qp)));
        }
        // the container stores the GOP length in one byte
        if !(1..=255).contains(&self.gop_size) {
            return Err(ModelError::Config(format!(
                "gop size {} outside [1,255]",
                self.gop_size
            )));
        }
        if !(1..=64).contains(&self.search_range) {
            return Err(ModelError::Config(format!(
                "search range {} outside [1,64]",
                self.search_range
            )));
        }
        if self.patch_radius == 0 || self.bump_radius == 0 {
            return Err(ModelError::Config("synthesis radii must be >= 1".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(w: usize, h: usize) -> Frame {
        let luma = (0..w * h).map(|i| (i * 7 % 251) as u8).collect();
        Frame::from_luma(w, h, luma).unwrap()
    }

    #[test]
    fn padding_aligned_frame_is_unchanged() {
        let f = ramp(64, 48);
        let p = pad_to_macroblock(&f);
        assert_eq!(p.frame, f);
    }

    #[test]
    fn padding_replicates_edges() {
        let f = ramp(33, 33);
        let p = pad_to_macroblock(&f);
        assert_eq!((p.frame.width(), p.frame.height()), (48, 48));
        assert_eq!(p.frame.sample(0, 40, 10), f.sample(0, 32, 10));
        assert_eq!(p.frame.sample(0, 5, 47), f.sample(0, 5, 32));
        assert_eq!(p.cropped(), f);
        assert_eq!(pad_to_macroblock(&p.frame).frame, p.frame);
    }

    #[test]
    fn padding_single_sample() {
        let f = Frame::from_luma(1, 1, vec![7]).unwrap();
        let p = pad_to_macroblock(&f);
        assert_eq!(p.frame, Frame::filled(16, 16, ChromaFormat::Mono, 7));
    }

    #[test]
    fn padding_chroma_planes() {
        let f = Frame::filled(17, 9, ChromaFormat::C420, 3);
        let p = pad_to_macroblock(&f);
        assert_eq!(p.frame.plane_size(1), (16, 8));
        assert_eq!(p.cropped(), f);
    }

    #[test]
    fn frame_rejects_bad_planes() {
        assert!(Frame::from_luma(4, 4, vec![0; 15]).is_err());
        assert!(Frame::new(3, 3, ChromaFormat::C420, vec![vec![0; 9], vec![0; 4], vec![0; 3]]).is_err());
        assert!(Frame::from_luma(0, 4, vec![]).is_err());
    }

    #[test]
    fn partition_examples() {
        let mbs = partition_frame(64, 48).unwrap();
        assert_eq!(mbs.len(), 12);
        assert_eq!(mbs[0], BlockRect::new(0, 0, 16, 16));
        assert_eq!(partition_frame(16, 16).unwrap().len(), 1);
        let mbs = partition_frame(48, 48).unwrap();
        assert_eq!(mbs.len(), 9);
        assert_eq!(mbs[4], BlockRect::new(16, 16, 16, 16));
        assert!(partition_frame(40, 48).is_err());
    }

    #[test]
    fn partition_tiles_frame() {
        for (w, h) in [(16, 16), (64, 48), (128, 32)] {
            let mbs = partition_frame(w, h).unwrap();
            let mut cover = vec![0u8; w * h];
            for r in &mbs {
                for y in r.y..r.y + r.h {
                    for x in r.x..r.x + r.w {
                        cover[y * w + x] += 1;
                    }
                }
            }
            assert!(cover.iter().all(|&c| c == 1));
        }
    }

    fn pose_with_x(x: f64) -> Pose {
        Pose::from_xy([(x, 0.0); JOINT_COUNT]).unwrap()
    }

    #[test]
    fn pose_quantization_examples() {
        let q = pose_with_x(100.5).quantize();
        assert_eq!(q.raw()[0], 25728);
        assert_eq!(q.dequantize().joints()[0].x, 100.5);

        let q = pose_with_x(0.0).quantize();
        assert_eq!(q.raw()[0], 0);

        let q = pose_with_x(10.001).quantize();
        assert_eq!(q.raw()[0], 2560);
        assert_eq!(q.dequantize().joints()[0].x, 10.0);
    }

    #[test]
    fn pose_round_trip_error_exhaustive_grid() {
        // oracle: scan a fine grid, including exact half steps
        let mut worst = 0.0f64;
        for i in 0..20_000u32 {
            let v = i as f64 * 0.012_345 + (i % 7) as f64 / 512.0;
            let p = pose_with_x(v);
            let back = p.quantize().dequantize().joints()[0].x;
            worst = worst.max((back - v).abs());
        }
        assert!(worst <= 1.0 / 512.0, "worst {worst}");
    }

    #[test]
    fn pose_range_rejected() {
        assert!(Pose::from_xy([(70000.0, 0.0); JOINT_COUNT]).is_err());
        assert!(Pose::from_xy([(-0.5, 0.0); JOINT_COUNT]).is_err());
        assert!(Pose::from_xy([(f64::NAN, 0.0); JOINT_COUNT]).is_err());
        let top = pose_with_x(POSE_COORD_MAX).quantize();
        assert_eq!(top.raw()[0], (1 << 24) - 1);
    }

    #[test]
    fn rounding_is_half_away_from_zero() {
        assert_eq!(div_round(3, 2), 2);
        assert_eq!(div_round(-3, 2), -2);
        assert_eq!(div_round(5, 4), 1);
        assert_eq!(div_round(-5, 4), -1);
        assert_eq!(round_half_away(-2.5), -3.0);
    }

    #[test]
    fn config_validation() {
        assert!(EncoderConfig::default().validate().is_ok());
        let bad = EncoderConfig {
            qp: 99,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = EncoderConfig {
            search_range: 0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    mod props {
        use super::super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn quantize_error_bounded(x in 0.0..=POSE_COORD_MAX, y in 0.0..=POSE_COORD_MAX) {
                let p = Pose::from_xy([(x, y); JOINT_COUNT]).unwrap();
                let back = p.quantize().dequantize();
                for pt in back.joints() {
                    prop_assert!((pt.x - x).abs() <= 1.0 / 512.0);
                    prop_assert!((pt.y - y).abs() <= 1.0 / 512.0);
                }
            }

            #[test]
            fn quantized_pose_is_fixed_point(raw in proptest::array::uniform26(0u32..(1 << 24))) {
                let q = QuantizedPose::from_raw(raw).unwrap();
                prop_assert_eq!(q.dequantize().quantize(), q);
            }
        }
    }
}
