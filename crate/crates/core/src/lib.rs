//! Multimodal rotary position embedding toolkit.
//!
//! The crate is organised along the three axes a multimodal RoPE variant is
//! built from:
//!
//! * [`stream`]: shape-only description of interleaved text/image/video input.
//! * [`position`]: position-ID assignment (vanilla, V2PE, MRoPE with or
//!   without spatial reset, diagonal, circular and the text-spatial-reset
//!   ablation).
//! * [`freq`]: frequency tables, channel/head axis allocation and
//!   NTK-aware / YaRN rescaling.
//! * [`rotary`]: rotation of query/key vectors and attention scores in real
//!   and complex form.
//! * [`analysis`]: long-range decay indicator, positional-coherence audit and
//!   attention-mass measurement.

pub mod analysis;
pub mod coord;
pub mod error;
pub mod freq;
pub mod position;
pub mod rotary;
pub mod stream;

pub use coord::{PosCoord, PosTriple};
pub use error::{Error, Result};
pub use freq::{Axis, ExtrapolationSpec, FreqAllocation, FreqTable, HeadLayout, Scheme};
pub use position::{Design, DesignOptions, IntervalMode, PositionLayout, StrideSchedule};
pub use rotary::{AxisMap, HeadVector, RotarySpec};
pub use stream::{Modality, Role, Segment, TokenStream};
