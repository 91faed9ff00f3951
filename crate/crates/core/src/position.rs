//! Position-ID assignment for multimodal token streams.
//!
//! Every design maps a [`TokenStream`] to a [`PositionLayout`]: one
//! `(t, h, w)` triple per token. Text tokens always sit on the diagonal
//! `(m, m, m)` except under the text-spatial-reset ablation, which is what
//! keeps the multimodal designs identical to 1D RoPE on text-only input.
//!
//! Visual blocks start at the current text counter `p`. Frame `f` of a block
//! has temporal offset `τ_f` (`f·δ` for a constant stride, the running sum of
//! the schedule for a dynamic one). Coordinates for frame `f`, row `r`,
//! column `c`:
//!
//! | design                 | triple                                   | counter after block      |
//! |------------------------|------------------------------------------|--------------------------|
//! | mrope (no reset)       | `(p+τ, p+τ+r, p+τ+c)`                    | max coordinate + 1       |
//! | mrope + spatial reset  | `(p+τ, r, c)`                            | max coordinate + 1       |
//! | diagonal               | `(p+τ, p+τ+r-⌊h/2⌋, p+τ+c-⌊w/2⌋)`        | max temporal + 1         |
//! | circle                 | ring of radius ρ around `(p, p, p)`      | `p + 1`                  |
//!
//! With [`IntervalMode::VanillaMatch`] the mrope counters advance by the
//! block's token count instead.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use crate::coord::{PosCoord, PosTriple};
use crate::error::{Error, Result};
use crate::stream::{Modality, Segment, TokenStream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Design {
    /// Flattened 1D sequence, unit step for every token.
    Vanilla,
    /// 1D sequence with a fractional step for visual tokens.
    V2pe,
    /// 3D triples with the max-jump update, no spatial reset.
    Mrope,
    /// MRoPE-Interleave position design: 3D triples with spatial reset.
    MropeI,
    /// Multi-head RoPE; shares the spatial-reset position design.
    MhRope,
    /// VideoRoPE/HoPE-style centred layout.
    Diagonal,
    /// CircleRoPE-style ring orthogonal to the text diagonal.
    Circle,
    /// Spatial reset plus `(m, 0, 0)` text positions.
    TextSpatialReset,
}

impl Design {
    pub const ALL: [Design; 8] = [
        Design::Vanilla,
        Design::V2pe,
        Design::Mrope,
        Design::MropeI,
        Design::MhRope,
        Design::Diagonal,
        Design::Circle,
        Design::TextSpatialReset,
    ];

    pub const NAMES: [&'static str; 8] = [
        "vanilla",
        "v2pe",
        "mrope",
        "mrope-i",
        "mhrope",
        "diagonal",
        "circle",
        "text-spatial-reset",
    ];

    pub fn name(self) -> &'static str {
        let i = Design::ALL.iter().position(|d| *d == self).unwrap();
        Design::NAMES[i]
    }

    /// Options each design is defined with; callers may override fields.
    pub fn default_options(self) -> DesignOptions {
        let mut o = DesignOptions::default();
        match self {
            Design::MropeI | Design::MhRope => o.spatial_reset = true,
            Design::TextSpatialReset => {
                o.spatial_reset = true;
                o.text_spatial_reset = true;
            }
            _ => {}
        }
        o
    }

    pub fn assign(self, stream: &TokenStream, opts: &DesignOptions) -> Result<PositionLayout> {
        match self {
            Design::Vanilla => Ok(assign_vanilla(stream)),
            Design::V2pe => assign_v2pe(stream, opts),
            Design::Mrope | Design::MropeI | Design::MhRope => {
                let mut layout = assign_mrope(stream, opts)?;
                layout.design = self;
                Ok(layout)
            }
            Design::Diagonal => assign_diagonal(stream, opts),
            Design::Circle => assign_circle(stream, opts),
            Design::TextSpatialReset => assign_text_spatial_reset(stream, opts),
        }
    }

    /// Assigns with [`Design::default_options`].
    pub fn assign_default(self, stream: &TokenStream) -> Result<PositionLayout> {
        self.assign(stream, &self.default_options())
    }
}

impl fmt::Display for Design {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Design {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Design::NAMES
            .iter()
            .position(|n| *n == s)
            .map(|i| Design::ALL[i])
            .ok_or_else(|| Error::UnknownDesign(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum IntervalMode {
    /// Jump past the largest coordinate of the block.
    #[default]
    MaxJump,
    /// Advance by the block's token count, as a 1D layout would.
    VanillaMatch,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum StrideSchedule {
    #[default]
    Constant,
    /// Per-frame temporal strides; frame `f` sits at the sum of the first `f`.
    Dynamic(Vec<PosCoord>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct DesignOptions {
    pub spatial_reset: bool,
    pub temporal_stride: PosCoord,
    pub stride_schedule: StrideSchedule,
    pub interval_mode: IntervalMode,
    pub text_spatial_reset: bool,
    /// V2PE step for visual tokens.
    pub visual_stride: PosCoord,
    /// CircleRoPE ring radius.
    pub circle_radius: f64,
}

impl Default for DesignOptions {
    fn default() -> Self {
        Self {
            spatial_reset: false,
            temporal_stride: PosCoord::ONE,
            stride_schedule: StrideSchedule::Constant,
            interval_mode: IntervalMode::MaxJump,
            text_spatial_reset: false,
            visual_stride: PosCoord::ONE,
            circle_radius: 1.0,
        }
    }
}

impl DesignOptions {
    /// Temporal offset of every frame of a block with `frames` frames.
    fn frame_offsets(&self, frames: usize) -> Result<Vec<PosCoord>> {
        match &self.stride_schedule {
            StrideSchedule::Constant => {
                if self.temporal_stride <= PosCoord::ZERO {
                    return Err(Error::InvalidCoord(format!(
                        "temporal stride must be positive, got {}",
                        self.temporal_stride
                    )));
                }
                Ok((0..frames as i64)
                    .map(|f| self.temporal_stride * f)
                    .collect())
            }
            StrideSchedule::Dynamic(steps) => {
                if steps.len() < frames {
                    return Err(Error::ScheduleTooShort {
                        have: steps.len(),
                        need: frames,
                    });
                }
                if let Some(bad) = steps.iter().find(|s| **s <= PosCoord::ZERO) {
                    return Err(Error::InvalidCoord(format!(
                        "schedule strides must be positive, got {bad}"
                    )));
                }
                let mut acc = PosCoord::ZERO;
                Ok(steps[..frames]
                    .iter()
                    .map(|s| {
                        let at = acc;
                        acc = acc + *s;
                        at
                    })
                    .collect())
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayoutEntry {
    pub pos: PosTriple,
    pub modality: Modality,
    pub segment: usize,
}

/// Text-counter values on either side of a visual block.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockSpan {
    pub segment: usize,
    /// Index of the block's first token in the layout.
    pub first_token: usize,
    /// `(frames, h, w)`.
    pub grid: (usize, usize, usize),
    pub counter_before: PosCoord,
    pub counter_after: PosCoord,
}

impl BlockSpan {
    /// Modality interval: how far the text counter moves across the block.
    pub fn advance(&self) -> PosCoord {
        self.counter_after - self.counter_before
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PositionLayout {
    pub entries: Vec<LayoutEntry>,
    pub design: Design,
    pub params: DesignOptions,
    pub blocks: Vec<BlockSpan>,
    /// Coordinates were rounded to the dyadic grid (circle design).
    pub approximate: bool,
}

impl PositionLayout {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn triples(&self) -> impl Iterator<Item = PosTriple> + '_ {
        self.entries.iter().map(|e| e.pos)
    }

    pub fn position(&self, i: usize) -> Result<PosTriple> {
        self.entries
            .get(i)
            .map(|e| e.pos)
            .ok_or(Error::IndexOutOfRange {
                index: i,
                len: self.entries.len(),
            })
    }

    pub fn max_coordinate(&self) -> Option<PosCoord> {
        self.triples().map(|p| p.max_component()).max()
    }

    /// Layout dump: `token_index,segment_index,modality,t,h,w,design`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("token_index,segment_index,modality,t,h,w,design\n");
        for (i, e) in self.entries.iter().enumerate() {
            out.push_str(&format!(
                "{i},{},{},{},{},{},{}\n",
                e.segment, e.modality, e.pos.t, e.pos.h, e.pos.w, self.design
            ));
        }
        out
    }
}

/// Component-wise `triple(j) - triple(i)`.
pub fn relative_triple(layout: &PositionLayout, i: usize, j: usize) -> Result<PosTriple> {
    Ok(layout.position(j)? - layout.position(i)?)
}

// ── 1D designs ──────────────────────────────────────────────────────────────

pub fn assign_vanilla(stream: &TokenStream) -> PositionLayout {
    let opts = DesignOptions::default();
    let mut layout = linear(stream, PosCoord::ONE, Design::Vanilla);
    layout.params = opts;
    layout
}

pub fn assign_v2pe(stream: &TokenStream, opts: &DesignOptions) -> Result<PositionLayout> {
    if !opts.visual_stride.is_unit_fraction_of_two() {
        return Err(Error::InvalidStride(opts.visual_stride.to_string()));
    }
    let mut layout = linear(stream, opts.visual_stride, Design::V2pe);
    layout.params = opts.clone();
    Ok(layout)
}

fn linear(stream: &TokenStream, visual_step: PosCoord, design: Design) -> PositionLayout {
    let mut entries = Vec::with_capacity(stream.token_count());
    let mut blocks = Vec::new();
    let mut m = PosCoord::ZERO;
    for (segment, seg) in stream.segments.iter().enumerate() {
        let modality = seg.modality();
        let step = if modality.is_visual() {
            visual_step
        } else {
            PosCoord::ONE
        };
        let before = m;
        let first_token = entries.len();
        for _ in 0..seg.token_count() {
            entries.push(LayoutEntry {
                pos: PosTriple::scalar(m),
                modality,
                segment,
            });
            m = m + step;
        }
        if let Some(grid) = seg.grid() {
            blocks.push(BlockSpan {
                segment,
                first_token,
                grid,
                counter_before: before,
                counter_after: m,
            });
        }
    }
    PositionLayout {
        entries,
        design,
        params: DesignOptions::default(),
        blocks,
        approximate: false,
    }
}

// ── Multi-dimensional designs ───────────────────────────────────────────────

#[derive(Clone, Copy)]
enum VisualRule {
    Entangled,
    Reset,
    Diagonal,
}

pub fn assign_mrope(stream: &TokenStream, opts: &DesignOptions) -> Result<PositionLayout> {
    let rule = if opts.spatial_reset {
        VisualRule::Reset
    } else {
        VisualRule::Entangled
    };
    let design = if opts.text_spatial_reset {
        Design::TextSpatialReset
    } else if opts.spatial_reset {
        Design::MropeI
    } else {
        Design::Mrope
    };
    multi_dim(stream, opts, rule, design)
}

pub fn assign_diagonal(stream: &TokenStream, opts: &DesignOptions) -> Result<PositionLayout> {
    multi_dim(stream, opts, VisualRule::Diagonal, Design::Diagonal)
}

/// Spatial reset for visual blocks and `(m, 0, 0)` for text.
pub fn assign_text_spatial_reset(
    stream: &TokenStream,
    opts: &DesignOptions,
) -> Result<PositionLayout> {
    let opts = DesignOptions {
        spatial_reset: true,
        text_spatial_reset: true,
        ..opts.clone()
    };
    multi_dim(stream, &opts, VisualRule::Reset, Design::TextSpatialReset)
}

fn multi_dim(
    stream: &TokenStream,
    opts: &DesignOptions,
    rule: VisualRule,
    design: Design,
) -> Result<PositionLayout> {
    let mut entries = Vec::with_capacity(stream.token_count());
    let mut blocks = Vec::new();
    let mut counter = PosCoord::ZERO;
    for (segment, seg) in stream.segments.iter().enumerate() {
        let modality = seg.modality();
        let Some((frames, h, w)) = seg.grid() else {
            for _ in 0..seg.token_count() {
                let pos = if opts.text_spatial_reset {
                    PosTriple::new(counter, PosCoord::ZERO, PosCoord::ZERO)
                } else {
                    PosTriple::scalar(counter)
                };
                entries.push(LayoutEntry {
                    pos,
                    modality,
                    segment,
                });
                counter = counter + PosCoord::ONE;
            }
            continue;
        };

        let p = counter;
        let first_token = entries.len();
        let offsets = opts.frame_offsets(frames)?;
        let (h_shift, w_shift) = match rule {
            VisualRule::Diagonal => ((h / 2) as i64, (w / 2) as i64),
            _ => (0, 0),
        };
        let mut max_any = p;
        let mut max_t = p;
        for &tau in &offsets {
            let t = p + tau;
            for r in 0..h as i64 {
                for c in 0..w as i64 {
                    let pos = match rule {
                        VisualRule::Entangled => {
                            PosTriple::new(t, t + PosCoord::from(r), t + PosCoord::from(c))
                        }
                        VisualRule::Reset => PosTriple::new(t, r.into(), c.into()),
                        VisualRule::Diagonal => PosTriple::new(
                            t,
                            t + PosCoord::from(r - h_shift),
                            t + PosCoord::from(c - w_shift),
                        ),
                    };
                    max_any = max_any.max(pos.max_component());
                    max_t = max_t.max(pos.t);
                    entries.push(LayoutEntry {
                        pos,
                        modality,
                        segment,
                    });
                }
            }
        }
        counter = match (opts.interval_mode, rule) {
            // Token-count advance, but never behind the block's last frame.
            (IntervalMode::VanillaMatch, _) => {
                (p + PosCoord::from(seg.token_count() as i64)).max(max_t + PosCoord::ONE)
            }
            // Text continues along the diagonal from the last frame.
            (IntervalMode::MaxJump, VisualRule::Diagonal) => max_t + PosCoord::ONE,
            (IntervalMode::MaxJump, _) => max_any + PosCoord::ONE,
        };
        blocks.push(BlockSpan {
            segment,
            first_token,
            grid: (frames, h, w),
            counter_before: p,
            counter_after: counter,
        });
    }
    Ok(PositionLayout {
        entries,
        design,
        params: opts.clone(),
        blocks,
        approximate: false,
    })
}

/// Unit vectors spanning the plane orthogonal to `(1, 1, 1)`.
const RING_U: [f64; 3] = [
    std::f64::consts::FRAC_1_SQRT_2,
    -std::f64::consts::FRAC_1_SQRT_2,
    0.0,
];

fn ring_v() -> [f64; 3] {
    let s = 1.0 / 6f64.sqrt();
    [s, s, -2.0 * s]
}

/// Visual tokens on a ring of radius `circle_radius` centred on the text
/// diagonal. All frames of a video share the same ring positions.
pub fn assign_circle(stream: &TokenStream, opts: &DesignOptions) -> Result<PositionLayout> {
    let radius = opts.circle_radius;
    if !(radius.is_finite() && radius > 0.0) {
        return Err(Error::InvalidRadius(radius));
    }
    let v = ring_v();
    let mut entries = Vec::with_capacity(stream.token_count());
    let mut blocks = Vec::new();
    let mut counter = PosCoord::ZERO;
    let mut approximate = false;
    for (segment, seg) in stream.segments.iter().enumerate() {
        let modality = seg.modality();
        match *seg {
            Segment::Text { len, .. } => {
                for _ in 0..len {
                    entries.push(LayoutEntry {
                        pos: PosTriple::scalar(counter),
                        modality,
                        segment,
                    });
                    counter = counter + PosCoord::ONE;
                }
            }
            _ => {
                let (frames, h, w) = seg.grid().expect("visual segment");
                let n = h * w;
                let centre = counter.to_f64();
                let first_token = entries.len();
                approximate = true;
                for _ in 0..frames {
                    for k in 0..n {
                        let phi = 2.0 * PI * k as f64 / n as f64;
                        let (s, c) = phi.sin_cos();
                        let coord = |axis: usize| {
                            PosCoord::nearest(centre + radius * (c * RING_U[axis] + s * v[axis]))
                        };
                        let pos = PosTriple::new(coord(0), coord(1), coord(2));
                        entries.push(LayoutEntry {
                            pos,
                            modality,
                            segment,
                        });
                    }
                }
                let before = counter;
                counter = counter + PosCoord::ONE;
                blocks.push(BlockSpan {
                    segment,
                    first_token,
                    grid: (frames, h, w),
                    counter_before: before,
                    counter_after: counter,
                });
            }
        }
    }
    Ok(PositionLayout {
        entries,
        design: Design::Circle,
        params: opts.clone(),
        blocks,
        approximate,
    })
}
