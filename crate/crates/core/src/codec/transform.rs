//! 8x8 orthonormal DCT-II and the scalar quantizer.

use std::sync::OnceLock;

use super::Levels;
use crate::model::round_half_away;

/// `basis[k][n] = a(k) * cos(pi * (2n + 1) * k / 16)`.
fn basis() -> &'static [[f64; 8]; 8] {
    static BASIS: OnceLock<[[f64; 8]; 8]> = OnceLock::new();
    BASIS.get_or_init(|| {
        let mut b = [[0.0; 8]; 8];
        for (k, row) in b.iter_mut().enumerate() {
            let a = if k == 0 { (1.0f64 / 8.0).sqrt() } else { 0.5 };
            for (n, v) in row.iter_mut().enumerate() {
                *v = a * (std::f64::consts::PI * (2 * n + 1) as f64 * k as f64 / 16.0).cos();
            }
        }
        b
    })
}

pub fn dct8x8(block: &[i32; 64]) -> [f64; 64] {
    let c = basis();
    // rows first, then columns
    let mut tmp = [0.0f64; 64];
    for y in 0..8 {
        for k in 0..8 {
            let mut s = 0.0;
            for n in 0..8 {
                s += c[k][n] * block[y * 8 + n] as f64;
            }
            tmp[y * 8 + k] = s;
        }
    }
    let mut out = [0.0f64; 64];
    for x in 0..8 {
        for k in 0..8 {
            let mut s = 0.0;
            for n in 0..8 {
                s += c[k][n] * tmp[n * 8 + x];
            }
            out[k * 8 + x] = s;
        }
    }
    out
}

pub fn idct8x8(coeffs: &[f64; 64]) -> [f64; 64] {
    let c = basis();
    let mut tmp = [0.0f64; 64];
    for x in 0..8 {
        for n in 0..8 {
            let mut s = 0.0;
            for k in 0..8 {
                s += c[k][n] * coeffs[k * 8 + x];
            }
            tmp[n * 8 + x] = s;
        }
    }
    let mut out = [0.0f64; 64];
    for y in 0..8 {
        for n in 0..8 {
            let mut s = 0.0;
            for k in 0..8 {
                s += c[k][n] * tmp[y * 8 + k];
            }
            out[y * 8 + n] = s;
        }
    }
    out
}

/// Quantizer step size; doubles every 6 QP and is 1.0 at QP 4.
pub fn qstep(qp: u8) -> f64 {
    2f64.powf((qp as f64 - 4.0) / 6.0)
}

pub fn quantize_block(coeffs: &[f64; 64], qp: u8) -> Levels {
    let step = qstep(qp);
    coeffs.map(|c| round_half_away(c / step) as i32)
}

pub fn dequantize_block(levels: &Levels, qp: u8) -> [f64; 64] {
    let step = qstep(qp);
    levels.map(|l| l as f64 * step)
}

/// Integer residual decoded from `levels`: dequantize, inverse transform,
/// round half away from zero. All-zero levels give an all-zero residual.
pub fn decode_residual(levels: &Levels, qp: u8) -> [i32; 64] {
    if levels.iter().all(|&l| l == 0) {
        return [0; 64];
    }
    idct8x8(&dequantize_block(levels, qp)).map(|v| round_half_away(v) as i32)
}

pub fn encode_residual(residual: &[i32; 64], qp: u8) -> Levels {
    quantize_block(&dct8x8(residual), qp)
}
