//! Quality and rate measurement: luma PSNR, RD curves, Bjontegaard deltas
//! and per-frame gain tables.

use std::fmt;
use std::io::Write;

use thiserror::Error;

use crate::model::Frame;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("frame geometry differs: {0}")]
    DimensionMismatch(String),
    #[error("empty input")]
    Empty,
    #[error("RD curve needs at least 4 points, got {0}")]
    TooFewPoints(usize),
    #[error("RD curve repeats qp {0}")]
    DuplicateQp(u8),
    #[error("RD curve contains an infinite PSNR (qp {0})")]
    InfinitePsnr(u8),
    #[error("RD curve has a non-positive or non-finite rate (qp {0})")]
    BadRate(u8),
    #[error("RD curve is not strictly increasing in rate and PSNR")]
    NonMonotone,
    #[error("RD curves do not overlap")]
    NoOverlap,
    #[error("sequences differ in length: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("csv output: {0}")]
    Io(String),
}

impl From<std::io::Error> for MetricsError {
    fn from(e: std::io::Error) -> Self {
        MetricsError::Io(e.to_string())
    }
}

/// Peak signal-to-noise ratio in dB; identical inputs give `Infinite`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub enum Psnr {
    Finite(f64),
    Infinite,
}

impl Psnr {
    pub fn from_mse(mse: f64) -> Psnr {
        if mse == 0.0 {
            Psnr::Infinite
        } else {
            Psnr::Finite(10.0 * (255.0f64 * 255.0 / mse).log10())
        }
    }

    pub fn finite(self) -> Option<f64> {
        match self {
            Psnr::Finite(v) => Some(v),
            Psnr::Infinite => None,
        }
    }

    pub fn is_infinite(self) -> bool {
        self == Psnr::Infinite
    }
}

impl fmt::Display for Psnr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Psnr::Finite(v) => write!(f, "{v:.4}"),
            Psnr::Infinite => f.write_str("inf"),
        }
    }
}

fn check_luma(a: &Frame, b: &Frame) -> Result<(), MetricsError> {
    if a.width() != b.width() || a.height() != b.height() {
        return Err(MetricsError::DimensionMismatch(format!(
            "{}x{} vs {}x{}",
            a.width(),
            a.height(),
            b.width(),
            b.height()
        )));
    }
    Ok(())
}

fn squared_error(a: &Frame, b: &Frame) -> u64 {
    a.luma()
        .iter()
        .zip(b.luma())
        .map(|(&x, &y)| {
            let d = x.abs_diff(y) as u64;
            d * d
        })
        .sum()
}

/// Luma mean squared error.
pub fn mse(a: &Frame, b: &Frame) -> Result<f64, MetricsError> {
    check_luma(a, b)?;
    Ok(squared_error(a, b) as f64 / a.luma().len() as f64)
}

/// Luma PSNR of two frames.
pub fn psnr(a: &Frame, b: &Frame) -> Result<Psnr, MetricsError> {
    Ok(Psnr::from_mse(mse(a, b)?))
}

/// PSNR of a whole sequence from the MSE pooled over all frames.
pub fn sequence_psnr(a: &[Frame], b: &[Frame]) -> Result<Psnr, MetricsError> {
    if a.len() != b.len() {
        return Err(MetricsError::LengthMismatch(a.len(), b.len()));
    }
    if a.is_empty() {
        return Err(MetricsError::Empty);
    }
    let mut sse = 0u64;
    let mut n = 0u64;
    for (x, y) in a.iter().zip(b) {
        check_luma(x, y)?;
        sse += squared_error(x, y);
        n += x.luma().len() as u64;
    }
    Ok(Psnr::from_mse(sse as f64 / n as f64))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RdPoint {
    pub qp: u8,
    pub frames: usize,
    pub bits: u64,
    pub bpp: f64,
    pub psnr: Psnr,
}

impl RdPoint {
    pub fn new(qp: u8, bits: u64, width: usize, height: usize, frames: usize, psnr: Psnr) -> Self {
        RdPoint {
            qp,
            frames,
            bits,
            bpp: bits as f64 / (width * height * frames) as f64,
            psnr,
        }
    }
}

/// At least four RD points with distinct QPs, sorted by rate, strictly
/// increasing in both rate and PSNR.
#[derive(Debug, Clone, PartialEq)]
pub struct RdCurve {
    points: Vec<RdPoint>,
}

impl RdCurve {
    pub fn new(mut points: Vec<RdPoint>) -> Result<Self, MetricsError> {
        if points.len() < 4 {
            return Err(MetricsError::TooFewPoints(points.len()));
        }
        for (i, p) in points.iter().enumerate() {
            if points[..i].iter().any(|q| q.qp == p.qp) {
                return Err(MetricsError::DuplicateQp(p.qp));
            }
            if p.psnr.is_infinite() {
                return Err(MetricsError::InfinitePsnr(p.qp));
            }
            if !(p.bpp.is_finite() && p.bpp > 0.0) {
                return Err(MetricsError::BadRate(p.qp));
            }
        }
        points.sort_by(|a, b| a.bpp.total_cmp(&b.bpp));
        let increasing = points.windows(2).all(|w| {
            w[0].bpp < w[1].bpp && w[0].psnr.finite().unwrap() < w[1].psnr.finite().unwrap()
        });
        if !increasing {
            return Err(MetricsError::NonMonotone);
        }
        Ok(RdCurve { points })
    }

    pub fn points(&self) -> &[RdPoint] {
        &self.points
    }

    fn log_rates(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.bpp.log10()).collect()
    }

    fn psnrs(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.psnr.finite().unwrap()).collect()
    }
}

/// Least-squares cubic in a centred, scaled variable `u = (x - centre) / scale`.
#[derive(Debug, Clone, Copy)]
struct Cubic {
    coef: [f64; 4],
    centre: f64,
    scale: f64,
}

impl Cubic {
    fn fit(xs: &[f64], ys: &[f64]) -> Cubic {
        let n = xs.len() as f64;
        let centre = xs.iter().sum::<f64>() / n;
        let scale = xs.iter().map(|x| (x - centre).abs()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
        // normal equations A^T A c = A^T y with A[i][k] = u_i^k
        let mut m = [[0.0f64; 5]; 4];
        for (&x, &y) in xs.iter().zip(ys) {
            let u = (x - centre) / scale;
            let pow = [1.0, u, u * u, u * u * u];
            for r in 0..4 {
                for c in 0..4 {
                    m[r][c] += pow[r] * pow[c];
                }
                m[r][4] += pow[r] * y;
            }
        }
        Cubic {
            coef: solve4(m),
            centre,
            scale,
        }
    }

    fn antiderivative_u(&self, u: f64) -> f64 {
        let c = &self.coef;
        u * (c[0] + u * (c[1] / 2.0 + u * (c[2] / 3.0 + u * c[3] / 4.0)))
    }

    fn integral(&self, lo: f64, hi: f64) -> f64 {
        let ul = (lo - self.centre) / self.scale;
        let uh = (hi - self.centre) / self.scale;
        self.scale * (self.antiderivative_u(uh) - self.antiderivative_u(ul))
    }

    #[cfg(test)]
    fn eval(&self, x: f64) -> f64 {
        let u = (x - self.centre) / self.scale;
        let c = &self.coef;
        c[0] + u * (c[1] + u * (c[2] + u * c[3]))
    }
}

/// Gaussian elimination with partial pivoting on an augmented 4x5 system.
fn solve4(mut m: [[f64; 5]; 4]) -> [f64; 4] {
    for col in 0..4 {
        let piv = (col..4)
            .max_by(|&a, &b| m[a][col].abs().total_cmp(&m[b][col].abs()))
            .unwrap();
        m.swap(col, piv);
        for r in col + 1..4 {
            let f = m[r][col] / m[col][col];
            for c in col..5 {
                m[r][c] -= f * m[col][c];
            }
        }
    }
    let mut x = [0.0; 4];
    for r in (0..4).rev() {
        let s: f64 = (r + 1..4).map(|c| m[r][c] * x[c]).sum();
        x[r] = (m[r][4] - s) / m[r][r];
    }
    x
}

fn mean_difference(
    anchor_x: &[f64],
    anchor_y: &[f64],
    test_x: &[f64],
    test_y: &[f64],
) -> Result<f64, MetricsError> {
    let lo = anchor_x[0].max(test_x[0]);
    let hi = anchor_x[anchor_x.len() - 1].min(test_x[test_x.len() - 1]);
    if !(hi > lo) {
        return Err(MetricsError::NoOverlap);
    }
    let fa = Cubic::fit(anchor_x, anchor_y);
    let ft = Cubic::fit(test_x, test_y);
    Ok((ft.integral(lo, hi) - fa.integral(lo, hi)) / (hi - lo))
}

/// Average PSNR difference (test minus anchor) over the shared log-rate
/// range, in dB.
pub fn bd_psnr(anchor: &RdCurve, test: &RdCurve) -> Result<f64, MetricsError> {
    mean_difference(&anchor.log_rates(), &anchor.psnrs(), &test.log_rates(), &test.psnrs())
}

/// Average rate difference (test relative to anchor) over the shared PSNR
/// range, in percent. Negative values are savings.
pub fn bd_rate(anchor: &RdCurve, test: &RdCurve) -> Result<f64, MetricsError> {
    let d = mean_difference(&anchor.psnrs(), &anchor.log_rates(), &test.psnrs(), &test.log_rates())?;
    Ok((10f64.powf(d) - 1.0) * 100.0)
}

/// Per-frame measurement of one coded run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameLog {
    pub psnr: Psnr,
    pub bits: u64,
}

/// Builds per-frame logs from decoded frames and their bit costs.
pub fn frame_logs(source: &[Frame], decoded: &[Frame], bits: &[u64]) -> Result<Vec<FrameLog>, MetricsError> {
    if source.len() != decoded.len() {
        return Err(MetricsError::LengthMismatch(source.len(), decoded.len()));
    }
    if source.len() != bits.len() {
        return Err(MetricsError::LengthMismatch(source.len(), bits.len()));
    }
    source
        .iter()
        .zip(decoded)
        .zip(bits)
        .map(|((s, d), &b)| Ok(FrameLog { psnr: psnr(s, d)?, bits: b }))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GainRow {
    /// 1-based frame index.
    pub t: usize,
    pub psnr_a: Psnr,
    pub psnr_b: Psnr,
    pub bits_a: u64,
    pub bits_b: u64,
}

impl GainRow {
    /// `psnr_b - psnr_a`; `None` when exactly one side is infinite.
    pub fn delta_psnr(&self) -> Option<f64> {
        match (self.psnr_a, self.psnr_b) {
            (Psnr::Finite(a), Psnr::Finite(b)) => Some(b - a),
            (Psnr::Infinite, Psnr::Infinite) => Some(0.0),
            _ => None,
        }
    }

    /// `bits_b - bits_a`.
    pub fn delta_bits(&self) -> i64 {
        self.bits_b as i64 - self.bits_a as i64
    }
}

/// Per-frame comparison of run `b` against run `a`.
#[derive(Debug, Clone, PartialEq)]
pub struct GainTable {
    pub rows: Vec<GainRow>,
}

impl GainTable {
    /// Mean ΔPSNR over frames where it is defined.
    pub fn mean_delta_psnr(&self) -> Option<f64> {
        let d: Vec<f64> = self.rows.iter().filter_map(GainRow::delta_psnr).collect();
        (!d.is_empty()).then(|| d.iter().sum::<f64>() / d.len() as f64)
    }

    pub fn mean_delta_bits(&self) -> f64 {
        self.rows.iter().map(|r| r.delta_bits() as f64).sum::<f64>() / self.rows.len() as f64
    }

    /// Total bits saved by `b` relative to `a`, in percent.
    pub fn bitrate_saving(&self) -> f64 {
        let a: u64 = self.rows.iter().map(|r| r.bits_a).sum();
        let b: u64 = self.rows.iter().map(|r| r.bits_b).sum();
        (a as f64 - b as f64) / a as f64 * 100.0
    }

    pub fn write_csv(&self, w: &mut impl Write) -> Result<(), MetricsError> {
        writeln!(w, "t,psnr_a,psnr_b,delta_psnr,bits_a,bits_b")?;
        for r in &self.rows {
            let d = r.delta_psnr().map_or_else(|| "nan".to_string(), |d| format!("{d:.4}"));
            writeln!(w, "{},{},{},{},{},{}", r.t, r.psnr_a, r.psnr_b, d, r.bits_a, r.bits_b)?;
        }
        Ok(())
    }
}

pub fn per_frame_gain(a: &[FrameLog], b: &[FrameLog]) -> Result<GainTable, MetricsError> {
    if a.len() != b.len() {
        return Err(MetricsError::LengthMismatch(a.len(), b.len()));
    }
    if a.is_empty() {
        return Err(MetricsError::Empty);
    }
    Ok(GainTable {
        rows: a
            .iter()
            .zip(b)
            .enumerate()
            .map(|(i, (x, y))| GainRow {
                t: i + 1,
                psnr_a: x.psnr,
                psnr_b: y.psnr,
                bits_a: x.bits,
                bits_b: y.bits,
            })
            .collect(),
    })
}

/// Two readings of an average gain over several tables (one per QP):
/// pooled over every frame, and averaged per table first.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GainSummary {
    pub pooled_delta_psnr: Option<f64>,
    pub per_qp_delta_psnr: Option<f64>,
    pub pooled_saving: f64,
    pub per_qp_saving: f64,
}

pub fn summarize_gains(tables: &[GainTable]) -> Result<GainSummary, MetricsError> {
    if tables.is_empty() {
        return Err(MetricsError::Empty);
    }
    let all = GainTable {
        rows: tables.iter().flat_map(|t| t.rows.iter().copied()).collect(),
    };
    let means: Vec<f64> = tables.iter().filter_map(GainTable::mean_delta_psnr).collect();
    Ok(GainSummary {
        pooled_delta_psnr: all.mean_delta_psnr(),
        per_qp_delta_psnr: (!means.is_empty()).then(|| means.iter().sum::<f64>() / means.len() as f64),
        pooled_saving: all.bitrate_saving(),
        per_qp_saving: tables.iter().map(GainTable::bitrate_saving).sum::<f64>() / tables.len() as f64,
    })
}

pub const RD_CSV_HEADER: &str = "qp,frames,total_bits,bpp,psnr";

pub fn rd_csv_row(p: &RdPoint) -> String {
    format!("{},{},{},{:.6},{}", p.qp, p.frames, p.bits, p.bpp, p.psnr)
}

pub fn write_rd_csv(w: &mut impl Write, points: &[RdPoint]) -> Result<(), MetricsError> {
    writeln!(w, "{RD_CSV_HEADER}")?;
    for p in points {
        writeln!(w, "{}", rd_csv_row(p))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn curve(pts: &[(u8, f64, f64)]) -> RdCurve {
        RdCurve::new(
            pts.iter()
                .map(|&(qp, bpp, psnr)| RdPoint {
                    qp,
                    frames: 1,
                    bits: 0,
                    bpp,
                    psnr: Psnr::Finite(psnr),
                })
                .collect(),
        )
        .unwrap()
    }

    fn base() -> RdCurve {
        curve(&[(38, 0.05, 30.1), (34, 0.09, 32.8), (28, 0.21, 36.0), (24, 0.37, 38.9)])
    }

    #[test]
    fn psnr_examples() {
        let a = Frame::filled(4, 4, crate::model::ChromaFormat::Mono, 0);
        let b = Frame::filled(4, 4, crate::model::ChromaFormat::Mono, 255);
        assert_eq!(psnr(&a, &a).unwrap(), Psnr::Infinite);
        assert_eq!(psnr(&a, &b).unwrap(), Psnr::Finite(0.0));
        let c = Frame::filled(4, 4, crate::model::ChromaFormat::Mono, 1);
        let Psnr::Finite(v) = psnr(&a, &c).unwrap() else { panic!() };
        assert!((v - 48.1308).abs() < 1e-4);
        assert!((v - 10.0 * 65025f64.log10()).abs() < 1e-12);
        let d = Frame::filled(4, 2, crate::model::ChromaFormat::Mono, 1);
        assert!(psnr(&a, &d).is_err());
        assert_eq!(Psnr::Infinite.to_string(), "inf");
    }

    #[test]
    fn psnr_is_symmetric_and_order_free() {
        let a = Frame::from_luma(4, 1, vec![1, 50, 90, 200]).unwrap();
        let b = Frame::from_luma(4, 1, vec![3, 40, 95, 180]).unwrap();
        let ap = Frame::from_luma(4, 1, vec![200, 90, 50, 1]).unwrap();
        let bp = Frame::from_luma(4, 1, vec![180, 95, 40, 3]).unwrap();
        assert_eq!(psnr(&a, &b).unwrap(), psnr(&b, &a).unwrap());
        assert_eq!(psnr(&a, &b).unwrap(), psnr(&ap, &bp).unwrap());
    }

    #[test]
    fn sequence_psnr_pools_mse() {
        let z = Frame::filled(2, 2, crate::model::ChromaFormat::Mono, 0);
        let o = Frame::filled(2, 2, crate::model::ChromaFormat::Mono, 2);
        // MSEs 0 and 4 pool to 2
        let s = sequence_psnr(&[z.clone(), z.clone()], &[z.clone(), o]).unwrap();
        assert_eq!(s, Psnr::from_mse(2.0));
    }

    #[test]
    fn rd_point_bpp() {
        let p = RdPoint::new(28, 1000, 10, 10, 4, Psnr::Finite(30.0));
        assert_eq!(p.bpp, 2.5);
        assert_eq!(rd_csv_row(&p), "28,4,1000,2.500000,30.0000");
    }

    #[test]
    fn curve_validation() {
        let p = |qp, bpp, psnr| RdPoint { qp, frames: 1, bits: 0, bpp, psnr };
        let f = Psnr::Finite;
        assert_eq!(
            RdCurve::new(vec![p(1, 0.1, f(30.0)); 3]),
            Err(MetricsError::TooFewPoints(3))
        );
        assert_eq!(
            RdCurve::new(vec![p(1, 0.1, f(30.0)), p(1, 0.2, f(31.0)), p(3, 0.3, f(32.0)), p(4, 0.4, f(33.0))]),
            Err(MetricsError::DuplicateQp(1))
        );
        assert_eq!(
            RdCurve::new(vec![p(1, 0.1, f(30.0)), p(2, 0.2, Psnr::Infinite), p(3, 0.3, f(32.0)), p(4, 0.4, f(33.0))]),
            Err(MetricsError::InfinitePsnr(2))
        );
        assert_eq!(
            RdCurve::new(vec![p(1, 0.1, f(30.0)), p(2, 0.2, f(29.0)), p(3, 0.3, f(32.0)), p(4, 0.4, f(33.0))]),
            Err(MetricsError::NonMonotone)
        );
        assert_eq!(
            RdCurve::new(vec![p(1, 0.0, f(30.0)), p(2, 0.2, f(31.0)), p(3, 0.3, f(32.0)), p(4, 0.4, f(33.0))]),
            Err(MetricsError::BadRate(1))
        );
        // input order does not matter
        let c = RdCurve::new(vec![p(4, 0.4, f(33.0)), p(1, 0.1, f(30.0)), p(3, 0.3, f(32.0)), p(2, 0.2, f(31.0))]).unwrap();
        assert_eq!(c.points()[0].qp, 1);
    }

    #[test]
    fn identical_curves_give_zero() {
        let a = base();
        assert!(bd_psnr(&a, &a).unwrap().abs() < 1e-12);
        assert!(bd_rate(&a, &a).unwrap().abs() < 1e-12);
    }

    #[test]
    fn constant_offsets() {
        let a = base();
        let up = curve(&a.points().iter().map(|p| (p.qp, p.bpp, p.psnr.finite().unwrap() + 1.0)).collect::<Vec<_>>());
        assert!((bd_psnr(&a, &up).unwrap() - 1.0).abs() < 1e-9);
        let wide = curve(&a.points().iter().map(|p| (p.qp, p.bpp * 1.1, p.psnr.finite().unwrap())).collect::<Vec<_>>());
        assert!((bd_rate(&a, &wide).unwrap() - 10.0).abs() < 1e-6);
    }

    #[test]
    fn disjoint_curves_rejected() {
        let a = base();
        let far = curve(&[(38, 5.0, 50.0), (34, 6.0, 51.0), (28, 7.0, 52.0), (24, 8.0, 53.0)]);
        assert_eq!(bd_psnr(&a, &far), Err(MetricsError::NoOverlap));
        assert_eq!(bd_rate(&a, &far), Err(MetricsError::NoOverlap));
    }

    /// Independent oracle: Lagrange interpolation through the four points
    /// (the unique cubic a least-squares cubic fit must reproduce), integrated
    /// by a dense trapezoid rule.
    fn lagrange(xs: &[f64], ys: &[f64], x: f64) -> f64 {
        let mut s = 0.0;
        for i in 0..xs.len() {
            let mut l = 1.0;
            for j in 0..xs.len() {
                if i != j {
                    l *= (x - xs[j]) / (xs[i] - xs[j]);
                }
            }
            s += ys[i] * l;
        }
        s
    }

    fn trapezoid_mean_diff(ax: &[f64], ay: &[f64], tx: &[f64], ty: &[f64]) -> f64 {
        let lo = ax[0].max(tx[0]);
        let hi = ax[3].min(tx[3]);
        let n = 200_000;
        let h = (hi - lo) / n as f64;
        let f = |x: f64| lagrange(tx, ty, x) - lagrange(ax, ay, x);
        let mut s = 0.5 * (f(lo) + f(hi));
        for i in 1..n {
            s += f(lo + i as f64 * h);
        }
        s * h / (hi - lo)
    }

    #[test]
    fn matches_trapezoid_oracle() {
        let a = base();
        let b = curve(&[(38, 0.045, 30.9), (34, 0.08, 33.3), (28, 0.2, 36.9), (24, 0.33, 39.2)]);
        let lr = |c: &RdCurve| c.points().iter().map(|p| p.bpp.log10()).collect::<Vec<_>>();
        let ps = |c: &RdCurve| c.points().iter().map(|p| p.psnr.finite().unwrap()).collect::<Vec<_>>();
        let oracle_psnr = trapezoid_mean_diff(&lr(&a), &ps(&a), &lr(&b), &ps(&b));
        assert!((bd_psnr(&a, &b).unwrap() - oracle_psnr).abs() < 1e-6);
        let d = trapezoid_mean_diff(&ps(&a), &lr(&a), &ps(&b), &lr(&b));
        let oracle_rate = (10f64.powf(d) - 1.0) * 100.0;
        assert!((bd_rate(&a, &b).unwrap() - oracle_rate).abs() < 1e-6);
    }

    #[test]
    fn cubic_fit_interpolates_four_points() {
        let xs = [-1.3, -1.05, -0.7, -0.43];
        let ys = [30.1, 32.8, 36.0, 38.9];
        let c = Cubic::fit(&xs, &ys);
        for (x, y) in xs.iter().zip(ys) {
            assert!((c.eval(*x) - y).abs() < 1e-9);
        }
    }

    fn logs(v: &[(f64, u64)]) -> Vec<FrameLog> {
        v.iter().map(|&(p, bits)| FrameLog { psnr: Psnr::Finite(p), bits }).collect()
    }

    #[test]
    fn per_frame_gain_examples() {
        let a = logs(&[(30.0, 1000), (31.0, 500), (32.0, 400)]);
        let same = per_frame_gain(&a, &a).unwrap();
        assert!(same.rows.iter().all(|r| r.delta_psnr() == Some(0.0) && r.delta_bits() == 0));
        assert_eq!(same.bitrate_saving(), 0.0);
        let b = logs(&[(30.0, 1000), (32.5, 400), (32.0, 400)]);
        let g = per_frame_gain(&a, &b).unwrap();
        assert_eq!(g.rows[0].delta_psnr(), Some(0.0));
        assert_eq!(g.rows[1].delta_psnr(), Some(1.5));
        assert_eq!(g.rows[1].delta_bits(), -100);
        assert_eq!(g.rows[2].delta_bits(), 0);
        assert!((g.mean_delta_psnr().unwrap() - 0.5).abs() < 1e-12);
        assert!((g.bitrate_saving() - 100.0 / 1900.0 * 100.0).abs() < 1e-12);
        assert!(per_frame_gain(&a, &b[..2]).is_err());
        let mut csv = Vec::new();
        g.write_csv(&mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert_eq!(text.lines().nth(2).unwrap(), "2,31.0000,32.5000,1.5000,500,400");
    }

    #[test]
    fn gain_summary_two_readings() {
        let t1 = per_frame_gain(&logs(&[(30.0, 100), (30.0, 100)]), &logs(&[(31.0, 50), (30.0, 100)])).unwrap();
        let t2 = per_frame_gain(&logs(&[(30.0, 300)]), &logs(&[(32.0, 300)])).unwrap();
        let s = summarize_gains(&[t1, t2]).unwrap();
        assert!((s.pooled_delta_psnr.unwrap() - 1.0).abs() < 1e-12);
        assert!((s.per_qp_delta_psnr.unwrap() - 1.25).abs() < 1e-12);
        assert!((s.pooled_saving - 10.0).abs() < 1e-12);
        assert!((s.per_qp_saving - 12.5).abs() < 1e-12);
    }

    fn arb_curve() -> impl Strategy<Value = RdCurve> {
        (
            0.01f64..0.1,
            proptest::array::uniform3(0.1f64..1.0),
            25.0f64..35.0,
            proptest::array::uniform3(0.3f64..4.0),
        )
            .prop_map(|(r0, rs, p0, ps)| {
                let mut pts = vec![(38u8, r0, p0)];
                for i in 0..3 {
                    let (_, r, p) = pts[i];
                    pts.push((37 - 4 * i as u8, r * (1.0 + rs[i]), p + ps[i]));
                }
                curve(&pts)
            })
    }

    proptest! {
        #[test]
        fn self_comparison_is_zero(a in arb_curve()) {
            prop_assert!(bd_psnr(&a, &a).unwrap().abs() < 1e-9);
            prop_assert!(bd_rate(&a, &a).unwrap().abs() < 1e-9);
        }

        #[test]
        fn bd_psnr_antisymmetric(a in arb_curve(), b in arb_curve()) {
            if let (Ok(x), Ok(y)) = (bd_psnr(&a, &b), bd_psnr(&b, &a)) {
                prop_assert!((x + y).abs() < 1e-9);
            }
        }
    }
}
