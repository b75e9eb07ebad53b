//! RD sweep harness: encode and decode a sequence at several QPs per
//! forward mode, collect RD points and Bjontegaard deltas against the `off`
//! anchor.

use std::io::Write;

use thiserror::Error;

use crate::codec::{decode_sequence, encode_sequence, CodecError, DecodeOptions, FrameReport};
use crate::metrics::{
    bd_psnr, bd_rate, frame_logs, rd_csv_row, sequence_psnr, FrameLog, MetricsError, RdCurve,
    RdPoint, RD_CSV_HEADER,
};
use crate::model::{EncoderConfig, ForwardRefMode, Frame, Pose, DEFAULT_QPS};
use crate::synth::FrameStore;

#[derive(Debug, Error)]
pub enum SweepError {
    #[error("mode {mode}, qp {qp}: {source}")]
    Cell {
        mode: &'static str,
        qp: u8,
        source: CodecError,
    },
    #[error("mode {mode}, qp {qp}: decoder output differs from encoder reconstruction")]
    Drift { mode: &'static str, qp: u8 },
    #[error("mode {mode}: {source}")]
    Metrics {
        mode: &'static str,
        source: MetricsError,
    },
    #[error("invalid sweep: {0}")]
    Invalid(String),
    #[error("csv output: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub qps: Vec<u8>,
    pub modes: Vec<ForwardRefMode>,
    /// Settings shared by every cell; `qp` and `forward_ref_mode` are
    /// overridden per cell.
    pub base: EncoderConfig,
}

impl Default for SweepSpec {
    fn default() -> Self {
        SweepSpec {
            qps: DEFAULT_QPS.to_vec(),
            modes: vec![ForwardRefMode::Off, ForwardRefMode::PatchWarp],
            base: EncoderConfig::default(),
        }
    }
}

impl SweepSpec {
    pub fn validate(&self) -> Result<(), SweepError> {
        if self.qps.len() < 4 {
            return Err(SweepError::Invalid(format!("need at least 4 QPs, got {}", self.qps.len())));
        }
        for (i, qp) in self.qps.iter().enumerate() {
            if self.qps[..i].contains(qp) {
                return Err(SweepError::Invalid(format!("qp {qp} listed twice")));
            }
        }
        if self.modes.is_empty() {
            return Err(SweepError::Invalid("no forward modes".into()));
        }
        self.base
            .validate()
            .map_err(|e| SweepError::Invalid(e.to_string()))
    }
}

/// One encoded and decoded (mode, qp) cell.
#[derive(Debug, Clone)]
pub struct CellResult {
    pub mode: ForwardRefMode,
    pub qp: u8,
    pub point: RdPoint,
    pub frames: Vec<FrameLog>,
    pub reports: Vec<FrameReport>,
    pub checksum: u32,
    /// The container produced for this cell.
    pub bytes: Vec<u8>,
}

/// Encodes and decodes one configuration and checks the decoder reproduces
/// the encoder's reconstruction.
pub fn run_cell(
    frames: &[Frame],
    poses: Option<&[Pose]>,
    cfg: &EncoderConfig,
    external: Option<&dyn FrameStore>,
) -> Result<CellResult, SweepError> {
    let mode = cfg.forward_ref_mode.name();
    let qp = cfg.qp;
    let cell = |source| SweepError::Cell { mode, qp, source };
    let enc = encode_sequence(frames, poses, cfg, external).map_err(cell)?;
    let dec = decode_sequence(&enc.bytes, &DecodeOptions::for_config(cfg, external)).map_err(cell)?;
    if dec.frames != enc.recon {
        return Err(SweepError::Drift { mode, qp });
    }
    let metrics = |source| SweepError::Metrics { mode, source };
    let psnr = sequence_psnr(frames, &dec.frames).map_err(metrics)?;
    let bits: Vec<u64> = enc.reports.iter().map(|r| r.bits).collect();
    let logs = frame_logs(frames, &dec.frames, &bits).map_err(metrics)?;
    let (w, h) = (frames[0].width(), frames[0].height());
    Ok(CellResult {
        mode: cfg.forward_ref_mode,
        qp,
        point: RdPoint::new(qp, enc.total_bits(), w, h, frames.len(), psnr),
        frames: logs,
        reports: enc.reports,
        checksum: enc.checksum,
        bytes: enc.bytes,
    })
}

/// Bjontegaard comparison of one mode against the anchor.
#[derive(Debug, Clone, PartialEq)]
pub struct BdLine {
    pub mode: ForwardRefMode,
    pub anchor: ForwardRefMode,
    pub result: Result<(f64, f64), MetricsError>,
}

impl BdLine {
    pub fn bd_rate(&self) -> Option<f64> {
        self.result.as_ref().ok().map(|r| r.0)
    }

    pub fn bd_psnr(&self) -> Option<f64> {
        self.result.as_ref().ok().map(|r| r.1)
    }

    pub fn summary(&self) -> String {
        let head = format!("bd mode={} anchor={}", self.mode.name(), self.anchor.name());
        match &self.result {
            Ok((rate, psnr)) => format!("{head} bd_rate={rate:.4}% bd_psnr={psnr:.4}dB"),
            Err(e) => format!("{head} error={e}"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    /// Cells grouped by mode entry, then QP, in the order given by the sweep.
    pub cells: Vec<Vec<CellResult>>,
}

impl SweepResult {
    pub fn curve(&self, entry: usize) -> Result<RdCurve, MetricsError> {
        RdCurve::new(self.cells[entry].iter().map(|c| c.point).collect())
    }

    /// The first `off` entry, or the first entry when no mode is `off`.
    pub fn anchor(&self) -> usize {
        self.cells
            .iter()
            .position(|c| c[0].mode == ForwardRefMode::Off)
            .unwrap_or(0)
    }

    /// One line per mode entry other than the anchor.
    pub fn bd_lines(&self) -> Vec<BdLine> {
        let a = self.anchor();
        let anchor_curve = self.curve(a);
        (0..self.cells.len())
            .filter(|&i| i != a)
            .map(|i| {
                let result = anchor_curve.clone().and_then(|ac| {
                    let tc = self.curve(i)?;
                    Ok((bd_rate(&ac, &tc)?, bd_psnr(&ac, &tc)?))
                });
                BdLine {
                    mode: self.cells[i][0].mode,
                    anchor: self.cells[a][0].mode,
                    result,
                }
            })
            .collect()
    }

    pub fn write_csv(&self, w: &mut impl Write) -> Result<(), SweepError> {
        writeln!(w, "mode,{RD_CSV_HEADER}")?;
        for cell in self.cells.iter().flatten() {
            writeln!(w, "{},{}", cell.mode.name(), rd_csv_row(&cell.point))?;
        }
        Ok(())
    }
}

pub fn run_sweep(
    frames: &[Frame],
    poses: Option<&[Pose]>,
    spec: &SweepSpec,
    external: Option<&dyn FrameStore>,
) -> Result<SweepResult, SweepError> {
    spec.validate()?;
    let cells = spec
        .modes
        .iter()
        .map(|&mode| {
            spec.qps
                .iter()
                .map(|&qp| {
                    let cfg = EncoderConfig {
                        qp,
                        forward_ref_mode: mode,
                        ..spec.base
                    };
                    run_cell(frames, poses, &cfg, external)
                })
                .collect::<Result<Vec<_>, _>>()
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(SweepResult { cells })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic::{gen_synthetic, MotionClass, SyntheticParams};

    fn small() -> (Vec<Frame>, Vec<Pose>) {
        let s = gen_synthetic(&SyntheticParams {
            width: 48,
            height: 48,
            frames: 4,
            seed: 3,
            motion: MotionClass::Moderate,
        });
        (s.frames, s.poses)
    }

    fn spec(modes: Vec<ForwardRefMode>) -> SweepSpec {
        SweepSpec {
            modes,
            base: EncoderConfig {
                search_range: 4,
                gop_size: 4,
                ..Default::default()
            },
            ..Default::default()
        }
    }

    #[test]
    fn two_modes_give_eight_rows_and_one_bd_line() {
        let (f, p) = small();
        let r = run_sweep(&f, Some(&p), &spec(vec![ForwardRefMode::Off, ForwardRefMode::Linear]), None).unwrap();
        let mut csv = Vec::new();
        r.write_csv(&mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert_eq!(text.lines().count(), 9);
        assert!(text.lines().nth(1).unwrap().starts_with("off,24,4,"));
        assert_eq!(r.bd_lines().len(), 1);
    }

    #[test]
    fn identical_modes_give_zero_bd() {
        let (f, p) = small();
        let r = run_sweep(&f, Some(&p), &spec(vec![ForwardRefMode::Off, ForwardRefMode::Off]), None).unwrap();
        let lines = r.bd_lines();
        assert_eq!(lines.len(), 1);
        assert!(lines[0].bd_rate().unwrap().abs() < 1e-9);
        assert!(lines[0].bd_psnr().unwrap().abs() < 1e-9);
    }

    #[test]
    fn bits_column_is_container_size() {
        let (f, p) = small();
        let cfg = EncoderConfig {
            qp: 30,
            forward_ref_mode: ForwardRefMode::PatchWarp,
            search_range: 4,
            ..Default::default()
        };
        let cell = run_cell(&f, Some(&p), &cfg, None).unwrap();
        let enc = encode_sequence(&f, Some(&p), &cfg, None).unwrap();
        assert_eq!(cell.bytes, enc.bytes);
        assert_eq!(cell.point.bits, cell.bytes.len() as u64 * 8);
    }

    #[test]
    fn spec_validation() {
        let mut s = spec(vec![ForwardRefMode::Off]);
        s.qps = vec![24, 28, 34];
        assert!(s.validate().is_err());
        s.qps = vec![24, 28, 34, 28];
        assert!(s.validate().is_err());
        s.qps = vec![24, 28, 34, 99];
        assert!(s.validate().is_ok());
        let (f, _) = small();
        assert!(matches!(run_sweep(&f, None, &s, None), Err(SweepError::Invalid(_)) | Err(SweepError::Cell { .. })));
    }

    #[test]
    fn failures_name_mode_and_qp() {
        let (f, _) = small();
        let err = run_sweep(&f, None, &spec(vec![ForwardRefMode::PatchWarp]), None).unwrap_err();
        assert!(err.to_string().starts_with("mode patchwarp, qp 24"));
    }
}
