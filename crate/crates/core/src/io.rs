//! Raw video and pose annotation files: YUV4MPEG2 (mono and 4:2:0), binary
//! PGM, and a JSON pose schema. Readers reject malformed input instead of
//! repairing it.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{plane_dims, ChromaFormat, Frame, ModelError, Point, Pose, JOINT_COUNT, POSE_COORD_MAX};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IoError {
    #[error("i/o: {0}")]
    Io(String),
    #[error("bad signature: expected {expected}")]
    BadSignature { expected: &'static str },
    #[error("malformed header: {0}")]
    BadHeader(String),
    #[error("unsupported colorspace {0}")]
    UnsupportedColorspace(String),
    #[error("unsupported format {0}")]
    UnsupportedFormat(String),
    #[error("unsupported maxval {0}, only 255 is accepted")]
    UnsupportedMaxval(u32),
    #[error("frame {frame}: missing FRAME marker")]
    BadFrameMarker { frame: usize },
    #[error("frame {frame}: payload truncated ({found} of {expected} bytes)")]
    Truncated {
        frame: usize,
        expected: usize,
        found: usize,
    },
    #[error("pose document: {0}")]
    Json(String),
    #[error("frame {frame}: expected 13 joints, found {found}")]
    JointCount { frame: usize, found: usize },
    #[error("frame {frame}, joint {joint}: expected an [x, y] pair")]
    MalformedJoint { frame: usize, joint: usize },
    #[error("frame {frame}, joint {joint}: non-finite coordinate")]
    NonFinite { frame: usize, joint: usize },
    #[error("frame {frame}, joint {joint}: coordinate {value} outside [0, 65535.99609375]")]
    OutOfRange {
        frame: usize,
        joint: usize,
        value: f64,
    },
    #[error("frame size {width}x{height} must be positive")]
    BadDimensions { width: u64, height: u64 },
    #[error(transparent)]
    Model(#[from] ModelError),
}

impl From<std::io::Error> for IoError {
    fn from(e: std::io::Error) -> Self {
        IoError::Io(e.to_string())
    }
}

const Y4M_SIGNATURE: &str = "YUV4MPEG2";

/// Stream parameters of a Y4M file, kept verbatim so a rewrite reproduces
/// the input byte for byte.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Y4mMeta {
    pub width: usize,
    pub height: usize,
    pub chroma: ChromaFormat,
    /// Header tokens after the signature, in file order.
    pub params: Vec<String>,
    /// Per-frame parameters following each `FRAME` marker.
    pub frame_params: Vec<Vec<String>>,
}

impl Y4mMeta {
    /// Parameters for a progressive 25 fps stream.
    pub fn new(width: usize, height: usize, chroma: ChromaFormat) -> Self {
        let c = match chroma {
            ChromaFormat::Mono => "Cmono",
            ChromaFormat::C420 => "C420jpeg",
        };
        Y4mMeta {
            width,
            height,
            chroma,
            params: vec![
                format!("W{width}"),
                format!("H{height}"),
                "F25:1".into(),
                "Ip".into(),
                "A1:1".into(),
                c.into(),
            ],
            frame_params: Vec::new(),
        }
    }
}

fn split_line(data: &[u8], pos: usize) -> Option<(&[u8], usize)> {
    let end = data[pos..].iter().position(|&b| b == b'\n')? + pos;
    Some((&data[pos..end], end + 1))
}

fn tokens(line: &[u8]) -> Result<Vec<String>, IoError> {
    let s = std::str::from_utf8(line).map_err(|_| IoError::BadHeader("non-UTF-8 header".into()))?;
    Ok(s.split(' ').filter(|t| !t.is_empty()).map(str::to_owned).collect())
}

pub fn read_y4m(reader: &mut impl Read) -> Result<(Vec<Frame>, Y4mMeta), IoError> {
    let mut data = Vec::new();
    reader.read_to_end(&mut data)?;
    let (line, mut pos) = split_line(&data, 0).ok_or(IoError::BadSignature {
        expected: Y4M_SIGNATURE,
    })?;
    let mut toks = tokens(line)?;
    if toks.first().map(String::as_str) != Some(Y4M_SIGNATURE) {
        return Err(IoError::BadSignature {
            expected: Y4M_SIGNATURE,
        });
    }
    let params = toks.split_off(1);
    let (mut width, mut height, mut rate, mut chroma) = (None, None, None, ChromaFormat::C420);
    for p in &params {
        let (key, val) = p.split_at(1);
        match key {
            "W" => width = val.parse::<usize>().ok(),
            "H" => height = val.parse::<usize>().ok(),
            "F" => rate = Some(val),
            "C" => {
                chroma = match val {
                    "mono" => ChromaFormat::Mono,
                    "420" | "420jpeg" | "420paldv" | "420mpeg2" => ChromaFormat::C420,
                    other => return Err(IoError::UnsupportedColorspace(other.into())),
                }
            }
            _ => {}
        }
    }
    let width = width
        .filter(|&w| w > 0)
        .ok_or_else(|| IoError::BadHeader("missing or invalid W".into()))?;
    let height = height
        .filter(|&h| h > 0)
        .ok_or_else(|| IoError::BadHeader("missing or invalid H".into()))?;
    if rate.is_none() {
        return Err(IoError::BadHeader("missing F".into()));
    }
    let plane_sizes: Vec<usize> = (0..chroma.plane_count())
        .map(|i| {
            let (w, h) = plane_dims(width, height, i);
            w * h
        })
        .collect();
    let frame_size: usize = plane_sizes.iter().sum();

    let mut frames = Vec::new();
    let mut frame_params = Vec::new();
    while pos < data.len() {
        let n = frames.len() + 1;
        let (line, next) = split_line(&data, pos).ok_or(IoError::BadFrameMarker { frame: n })?;
        let mut toks = tokens(line)?;
        if toks.first().map(String::as_str) != Some("FRAME") || !line.starts_with(b"FRAME") {
            return Err(IoError::BadFrameMarker { frame: n });
        }
        frame_params.push(toks.split_off(1));
        pos = next;
        if data.len() - pos < frame_size {
            return Err(IoError::Truncated {
                frame: n,
                expected: frame_size,
                found: data.len() - pos,
            });
        }
        let mut planes = Vec::with_capacity(plane_sizes.len());
        for &s in &plane_sizes {
            planes.push(data[pos..pos + s].to_vec());
            pos += s;
        }
        frames.push(Frame::new(width, height, chroma, planes)?);
    }
    Ok((
        frames,
        Y4mMeta {
            width,
            height,
            chroma,
            params,
            frame_params,
        },
    ))
}

pub fn write_y4m(writer: &mut impl Write, frames: &[Frame], meta: &Y4mMeta) -> Result<(), IoError> {
    let mut header = String::from(Y4M_SIGNATURE);
    for p in &meta.params {
        header.push(' ');
        header.push_str(p);
    }
    header.push('\n');
    writer.write_all(header.as_bytes())?;
    for (i, f) in frames.iter().enumerate() {
        if f.width() != meta.width || f.height() != meta.height || f.chroma() != meta.chroma {
            return Err(IoError::BadHeader(format!(
                "frame {} geometry differs from stream header",
                i + 1
            )));
        }
        let mut marker = String::from("FRAME");
        for p in meta.frame_params.get(i).into_iter().flatten() {
            marker.push(' ');
            marker.push_str(p);
        }
        marker.push('\n');
        writer.write_all(marker.as_bytes())?;
        for p in f.planes() {
            writer.write_all(p)?;
        }
    }
    Ok(())
}

fn pgm_token(data: &[u8], pos: &mut usize) -> Result<String, IoError> {
    loop {
        match data.get(*pos) {
            Some(b'#') => {
                while data.get(*pos).is_some_and(|&b| b != b'\n') {
                    *pos += 1;
                }
            }
            Some(b) if b.is_ascii_whitespace() => *pos += 1,
            Some(_) => break,
            None => return Err(IoError::BadHeader("truncated PGM header".into())),
        }
    }
    let start = *pos;
    while data.get(*pos).is_some_and(|b| !b.is_ascii_whitespace()) {
        *pos += 1;
    }
    Ok(String::from_utf8_lossy(&data[start..*pos]).into_owned())
}

/// Reads a binary (`P5`) greymap with maxval 255 as a single-plane frame.
pub fn read_pgm(reader: &mut impl Read) -> Result<Frame, IoError> {
    let mut data = Vec::new();
    reader.read_to_end(&mut data)?;
    let mut pos = 0;
    let magic = pgm_token(&data, &mut pos)?;
    match magic.as_str() {
        "P5" => {}
        "P2" | "P1" | "P3" | "P4" | "P6" => return Err(IoError::UnsupportedFormat(magic)),
        _ => return Err(IoError::BadSignature { expected: "P5" }),
    }
    let mut num = |what: &str| -> Result<u32, IoError> {
        pgm_token(&data, &mut pos)?
            .parse()
            .map_err(|_| IoError::BadHeader(format!("invalid {what}")))
    };
    let width = num("width")? as usize;
    let height = num("height")? as usize;
    let maxval = num("maxval")?;
    if width == 0 || height == 0 {
        return Err(IoError::BadDimensions {
            width: width as u64,
            height: height as u64,
        });
    }
    if maxval != 255 {
        return Err(IoError::UnsupportedMaxval(maxval));
    }
    // exactly one whitespace byte separates the header from the samples
    if !data.get(pos).is_some_and(|b| b.is_ascii_whitespace()) {
        return Err(IoError::BadHeader("missing separator after maxval".into()));
    }
    pos += 1;
    let need = width * height;
    if data.len() - pos < need {
        return Err(IoError::Truncated {
            frame: 1,
            expected: need,
            found: data.len() - pos,
        });
    }
    Ok(Frame::from_luma(width, height, data[pos..pos + need].to_vec())?)
}

/// Writes the luma plane as a binary PGM.
pub fn write_pgm(writer: &mut impl Write, frame: &Frame) -> Result<(), IoError> {
    write!(writer, "P5\n{} {}\n255\n", frame.width(), frame.height())?;
    writer.write_all(frame.luma())?;
    Ok(())
}

/// Per-frame pose annotations for one sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct PoseDocument {
    pub name: String,
    pub width: usize,
    pub height: usize,
    pub poses: Vec<Pose>,
}

#[derive(Serialize, Deserialize)]
struct PoseJson {
    name: String,
    width: u64,
    height: u64,
    frames: Vec<PoseFrameJson>,
}

#[derive(Serialize, Deserialize)]
struct PoseFrameJson {
    joints: Vec<Vec<f64>>,
}

pub fn read_pose_json(reader: &mut impl Read) -> Result<PoseDocument, IoError> {
    let doc: PoseJson = serde_json::from_reader(reader).map_err(|e| IoError::Json(e.to_string()))?;
    if doc.width == 0 || doc.height == 0 {
        return Err(IoError::BadDimensions {
            width: doc.width,
            height: doc.height,
        });
    }
    let mut poses = Vec::with_capacity(doc.frames.len());
    for (i, f) in doc.frames.iter().enumerate() {
        let frame = i + 1;
        if f.joints.len() != JOINT_COUNT {
            return Err(IoError::JointCount {
                frame,
                found: f.joints.len(),
            });
        }
        let mut pts = [Point { x: 0.0, y: 0.0 }; JOINT_COUNT];
        for (joint, (xy, pt)) in f.joints.iter().zip(pts.iter_mut()).enumerate() {
            let [x, y] = xy[..] else {
                return Err(IoError::MalformedJoint { frame, joint });
            };
            for v in [x, y] {
                if !v.is_finite() {
                    return Err(IoError::NonFinite { frame, joint });
                }
                if !(0.0..=POSE_COORD_MAX).contains(&v) {
                    return Err(IoError::OutOfRange { frame, joint, value: v });
                }
            }
            *pt = Point { x, y };
        }
        poses.push(Pose::new(pts)?);
    }
    Ok(PoseDocument {
        name: doc.name,
        width: doc.width as usize,
        height: doc.height as usize,
        poses,
    })
}

pub fn write_pose_json(writer: &mut impl Write, doc: &PoseDocument) -> Result<(), IoError> {
    let json = PoseJson {
        name: doc.name.clone(),
        width: doc.width as u64,
        height: doc.height as u64,
        frames: doc
            .poses
            .iter()
            .map(|p| PoseFrameJson {
                joints: p.joints().iter().map(|pt| vec![pt.x, pt.y]).collect(),
            })
            .collect(),
    };
    serde_json::to_writer(&mut *writer, &json).map_err(|e| IoError::Json(e.to_string()))?;
    writer.write_all(b"\n")?;
    Ok(())
}
