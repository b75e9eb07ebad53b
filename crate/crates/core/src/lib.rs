//! Forward-referencing block video codec.
//!
//! P-frames choose, per macroblock or 8x8 partition, between the GOP's
//! decoded I-frame and a forward reference synthesized from that I-frame and
//! a compact per-frame pose payload. The crate also provides raw video and
//! pose file I/O, quality metrics with Bjontegaard deltas, a synthetic test
//! sequence generator and an RD sweep harness.

pub mod bitstream;
pub mod codec;
pub mod io;
pub mod metrics;
pub mod model;
pub mod sweep;
pub mod synth;
pub mod synthetic;

pub use codec::{decode_sequence, encode_sequence, CodecError, DecodeOptions};
pub use model::{ChromaFormat, EncoderConfig, ForwardRefMode, Frame, ModeDecision, Pose};
