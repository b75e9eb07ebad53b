//! Block matching: SAD, exhaustive integer-pel search and compensation.
//!
//! A motion vector points from the current block to the reference samples it
//! is predicted from: `pred(x, y) = ref(x + dx, y + dy)`, with reference reads
//! clamped to the plane edges.

use super::{CodecError, MotionVector};
use crate::model::BlockRect;

/// Sum of absolute differences between two equally sized sample blocks.
pub fn sad(a: &[u8], b: &[u8]) -> Result<u32, CodecError> {
    if a.len() != b.len() {
        return Err(CodecError::BlockSizeMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    Ok(sad_unchecked(a, b))
}

#[inline]
fn sad_unchecked(a: &[u8], b: &[u8]) -> u32 {
    a.iter().zip(b).map(|(&x, &y)| x.abs_diff(y) as u32).sum()
}

/// Result of a motion search: the best vector and its SAD.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Candidate {
    pub mv: MotionVector,
    pub sad: u32,
}

impl Candidate {
    /// Ordering key: lower SAD, then shorter vector, then smaller dy, then
    /// smaller dx.
    #[inline]
    fn key(&self) -> (u32, u32, i32, i32) {
        (
            self.sad,
            self.mv.dx.unsigned_abs() + self.mv.dy.unsigned_abs(),
            self.mv.dy,
            self.mv.dx,
        )
    }

    #[inline]
    pub fn better_than(&self, other: &Candidate) -> bool {
        self.key() < other.key()
    }
}

/// A plane view with clamped reads.
#[derive(Debug, Clone, Copy)]
pub struct PlaneRef<'a> {
    pub data: &'a [u8],
    pub width: usize,
    pub height: usize,
}

impl<'a> PlaneRef<'a> {
    pub fn new(data: &'a [u8], width: usize, height: usize) -> Self {
        debug_assert_eq!(data.len(), width * height);
        PlaneRef {
            data,
            width,
            height,
        }
    }

    #[inline]
    pub fn clamped(&self, x: isize, y: isize) -> u8 {
        let cx = x.clamp(0, self.width as isize - 1) as usize;
        let cy = y.clamp(0, self.height as isize - 1) as usize;
        self.data[cy * self.width + cx]
    }

    /// Copies the `w x h` block at (x, y) displaced by `mv`, clamping reads.
    pub fn block(&self, x: usize, y: usize, w: usize, h: usize, mv: MotionVector) -> Vec<u8> {
        let mut out = Vec::with_capacity(w * h);
        for r in 0..h {
            for c in 0..w {
                out.push(self.clamped(
                    (x + c) as isize + mv.dx as isize,
                    (y + r) as isize + mv.dy as isize,
                ));
            }
        }
        out
    }
}

/// Exhaustive integer-pel search of `block` (taken from `src`) over
/// `[-range, range]^2` in `reference`.
pub fn motion_search(
    src: PlaneRef<'_>,
    block: BlockRect,
    reference: PlaneRef<'_>,
    range: u32,
) -> Candidate {
    let cur = src.block(block.x, block.y, block.w, block.h, MotionVector::ZERO);
    let r = range as i32;
    let mut best = Candidate {
        mv: MotionVector::ZERO,
        sad: u32::MAX,
    };
    for dy in -r..=r {
        for dx in -r..=r {
            let mv = MotionVector { dx, dy };
            let pred = reference.block(block.x, block.y, block.w, block.h, mv);
            let cand = Candidate {
                mv,
                sad: sad_unchecked(&cur, &pred),
            };
            if cand.better_than(&best) {
                best = cand;
            }
        }
    }
    best
}

/// Reference plane with replicated borders so displaced reads need no
/// clamping.
#[derive(Debug, Clone)]
pub struct ExtendedPlane {
    data: Vec<u8>,
    stride: usize,
    margin: usize,
}

impl ExtendedPlane {
    pub fn new(plane: PlaneRef<'_>, margin: usize) -> Self {
        let stride = plane.width + 2 * margin;
        let rows = plane.height + 2 * margin;
        let mut data = Vec::with_capacity(stride * rows);
        for y in 0..rows {
            let sy = y as isize - margin as isize;
            for x in 0..stride {
                data.push(plane.clamped(x as isize - margin as isize, sy));
            }
        }
        ExtendedPlane {
            data,
            stride,
            margin,
        }
    }

    #[inline]
    fn row(&self, x: isize, y: isize, len: usize) -> &[u8] {
        let off = (y + self.margin as isize) as usize * self.stride + (x + self.margin as isize) as usize;
        &self.data[off..off + len]
    }
}

/// Best 16x16 candidate and best candidate for each 8x8 quadrant of one
/// macroblock against one reference.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MacroblockSearch {
    pub whole: Candidate,
    pub quadrants: [Candidate; 4],
}

/// Runs the 16x16 search and the four independent 8x8 searches in one pass;
/// each candidate's 16x16 SAD is the sum of its quadrant SADs. Equivalent to
/// calling [`motion_search`] five times.
pub fn search_macroblock(
    src: PlaneRef<'_>,
    mb_x: usize,
    mb_y: usize,
    reference: &ExtendedPlane,
    range: u32,
) -> MacroblockSearch {
    debug_assert!(reference.margin >= range as usize);
    let mut cur = [0u8; 256];
    for r in 0..16 {
        cur[r * 16..r * 16 + 16]
            .copy_from_slice(&src.data[(mb_y + r) * src.width + mb_x..][..16]);
    }
    let worst = Candidate {
        mv: MotionVector::ZERO,
        sad: u32::MAX,
    };
    let mut best = MacroblockSearch {
        whole: worst,
        quadrants: [worst; 4],
    };
    let r = range as i32;
    for dy in -r..=r {
        for dx in -r..=r {
            let mut q = [0u32; 4];
            for row in 0..16 {
                let refrow = reference.row(
                    mb_x as isize + dx as isize,
                    (mb_y + row) as isize + dy as isize,
                    16,
                );
                let currow = &cur[row * 16..row * 16 + 16];
                let half = (row / 8) * 2;
                q[half] += sad_unchecked(&currow[..8], &refrow[..8]);
                q[half + 1] += sad_unchecked(&currow[8..], &refrow[8..]);
            }
            let mv = MotionVector { dx, dy };
            let whole = Candidate {
                mv,
                sad: q.iter().sum(),
            };
            if whole.better_than(&best.whole) {
                best.whole = whole;
            }
            for (b, &s) in best.quadrants.iter_mut().zip(&q) {
                let c = Candidate { mv, sad: s };
                if c.better_than(b) {
                    *b = c;
                }
            }
        }
    }
    best
}
