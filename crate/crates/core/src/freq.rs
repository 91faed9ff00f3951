//! Rotary frequency tables, axis allocation and extrapolation rescaling.
//!
//! Channel-split schemes assign each of the `d/2` rotary pairs to one of the
//! temporal/vertical/horizontal axes. The multi-head scheme instead assigns a
//! whole attention head (all `d/2` pairs) to one axis.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::position::Design;
use crate::stream::TokenStream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Axis {
    T,
    H,
    W,
}

impl Axis {
    pub const ALL: [Axis; 3] = [Axis::T, Axis::H, Axis::W];

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Axis::T => "t",
            Axis::H => "h",
            Axis::W => "w",
        })
    }
}

impl FromStr for Axis {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "t" => Ok(Axis::T),
            "h" => Ok(Axis::H),
            "w" => Ok(Axis::W),
            _ => Err(format!("unknown axis `{s}` (valid: t, h, w)")),
        }
    }
}

// ── Frequency table ─────────────────────────────────────────────────────────

#[derive(Debug, Clone, PartialEq)]
pub struct FreqTable {
    pub d: usize,
    pub base: f64,
    pub theta: Vec<f64>,
}

fn check_dim(d: usize) -> Result<()> {
    if d < 2 || !d.is_multiple_of(2) {
        return Err(Error::InvalidDimension(d));
    }
    Ok(())
}

fn geometric(d: usize, base: f64) -> Vec<f64> {
    (0..d / 2)
        .map(|i| base.powf(-2.0 * i as f64 / d as f64))
        .collect()
}

/// `θ_i = base^(-2i/d)` for `i` in `0..d/2`.
pub fn base_frequencies(d: usize, base: f64) -> Result<FreqTable> {
    check_dim(d)?;
    if !(base.is_finite() && base > 1.0) {
        return Err(Error::InvalidBase(base));
    }
    Ok(FreqTable {
        d,
        base,
        theta: geometric(d, base),
    })
}

impl FreqTable {
    pub fn pairs(&self) -> usize {
        self.theta.len()
    }

    /// Frequency dump: `pair_index,axis,theta`. `axis_of` may be empty, in
    /// which case every pair is labelled `t`.
    pub fn to_csv(&self, axis_of: &[Axis]) -> String {
        let mut out = String::from("pair_index,axis,theta\n");
        for (i, th) in self.theta.iter().enumerate() {
            let axis = axis_of.get(i).copied().unwrap_or(Axis::T);
            out.push_str(&format!("{i},{axis},{th}\n"));
        }
        out
    }
}

// ── Channel-split allocation ────────────────────────────────────────────────

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scheme {
    Chunked,
    Interleaved,
    VideoRopeLike,
    IlRopeLike,
}

impl Scheme {
    pub fn name(self) -> &'static str {
        match self {
            Scheme::Chunked => "chunked",
            Scheme::Interleaved => "interleaved",
            Scheme::VideoRopeLike => "videorope",
            Scheme::IlRopeLike => "ilrope",
        }
    }

    pub fn allocate(self, d: usize, ratio: [usize; 3]) -> Result<FreqAllocation> {
        match self {
            Scheme::Chunked => alloc_chunked(d, ratio),
            Scheme::Interleaved => alloc_interleaved(d, ratio),
            Scheme::VideoRopeLike => alloc_videorope_like(d, ratio),
            Scheme::IlRopeLike => alloc_ilrope_like(d, ratio),
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FreqAllocation {
    pub scheme: Scheme,
    /// Pair counts `(n_t, n_h, n_w)`.
    pub ratio: [usize; 3],
    pub axis_of: Vec<Axis>,
    /// Separate rotary base per axis, overriding the table's single base.
    pub per_axis_base: Option<[f64; 3]>,
}

impl FreqAllocation {
    pub fn pairs_of(&self, axis: Axis) -> Vec<usize> {
        self.axis_of
            .iter()
            .enumerate()
            .filter(|(_, a)| **a == axis)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn with_per_axis_base(mut self, bases: [f64; 3]) -> Result<Self> {
        if let Some(b) = bases.iter().find(|b| !(b.is_finite() && **b > 1.0)) {
            return Err(Error::InvalidBase(*b));
        }
        self.per_axis_base = Some(bases);
        Ok(self)
    }
}

fn check_ratio(d: usize, ratio: [usize; 3]) -> Result<()> {
    check_dim(d)?;
    if ratio.iter().sum::<usize>() != d / 2 {
        return Err(Error::BadRatio {
            ratio,
            expected: d / 2,
        });
    }
    Ok(())
}

fn from_blocks(scheme: Scheme, ratio: [usize; 3], order: [Axis; 3]) -> FreqAllocation {
    let axis_of = order
        .iter()
        .flat_map(|a| std::iter::repeat_n(*a, ratio[a.index()]))
        .collect();
    FreqAllocation {
        scheme,
        ratio,
        axis_of,
        per_axis_base: None,
    }
}

/// Round-robin over `axes`, skipping any axis whose quota is used up.
fn round_robin(ratio: [usize; 3], axes: &[Axis], slots: usize) -> Vec<Axis> {
    let mut left = ratio;
    let mut out = Vec::with_capacity(slots);
    while out.len() < slots {
        for &a in axes {
            if out.len() < slots && left[a.index()] > 0 {
                left[a.index()] -= 1;
                out.push(a);
            }
        }
    }
    out
}

/// Contiguous blocks `T | H | W`; T gets the highest frequencies.
pub fn alloc_chunked(d: usize, ratio: [usize; 3]) -> Result<FreqAllocation> {
    check_ratio(d, ratio)?;
    Ok(from_blocks(
        Scheme::Chunked,
        ratio,
        [Axis::T, Axis::H, Axis::W],
    ))
}

/// Round-robin `T, H, W, T, H, W, ...`; once an axis's quota is exhausted the
/// remaining axes continue, so a surplus axis fills the low-frequency tail.
pub fn alloc_interleaved(d: usize, ratio: [usize; 3]) -> Result<FreqAllocation> {
    check_ratio(d, ratio)?;
    let axis_of = round_robin(ratio, &Axis::ALL, d / 2);
    Ok(FreqAllocation {
        scheme: Scheme::Interleaved,
        ratio,
        axis_of,
        per_axis_base: None,
    })
}

/// Contiguous blocks `H | W | T`; temporal takes the lowest frequencies.
pub fn alloc_videorope_like(d: usize, ratio: [usize; 3]) -> Result<FreqAllocation> {
    check_ratio(d, ratio)?;
    Ok(from_blocks(
        Scheme::VideoRopeLike,
        ratio,
        [Axis::H, Axis::W, Axis::T],
    ))
}

/// H and W interleaved over the first `n_h + n_w` pairs, T on the last `n_t`.
pub fn alloc_ilrope_like(d: usize, ratio: [usize; 3]) -> Result<FreqAllocation> {
    check_ratio(d, ratio)?;
    let spatial = ratio[1] + ratio[2];
    let mut axis_of = round_robin(ratio, &[Axis::H, Axis::W], spatial);
    axis_of.extend(std::iter::repeat_n(Axis::T, ratio[0]));
    Ok(FreqAllocation {
        scheme: Scheme::IlRopeLike,
        ratio,
        axis_of,
        per_axis_base: None,
    })
}

// ── Multi-head allocation ───────────────────────────────────────────────────

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HeadLayout {
    pub n_q_heads: usize,
    pub n_kv_heads: usize,
    pub axis_of_kv_head: Vec<Axis>,
}

impl HeadLayout {
    pub fn group_size(&self) -> usize {
        self.n_q_heads / self.n_kv_heads
    }

    pub fn kv_head_of(&self, q_head: usize) -> usize {
        q_head / self.group_size()
    }

    pub fn axis_of_q_head(&self, q_head: usize) -> Axis {
        self.axis_of_kv_head[self.kv_head_of(q_head)]
    }

    pub fn axis_of_q_heads(&self) -> Vec<Axis> {
        (0..self.n_q_heads)
            .map(|h| self.axis_of_q_head(h))
            .collect()
    }

    /// KV-head counts per axis.
    pub fn ratio(&self) -> [usize; 3] {
        let mut r = [0; 3];
        for a in &self.axis_of_kv_head {
            r[a.index()] += 1;
        }
        r
    }
}

/// Partitions KV heads into `T | H | W` blocks; query heads inherit the axis
/// of their KV group.
pub fn alloc_multihead(
    n_q_heads: usize,
    n_kv_heads: usize,
    ratio_heads: [usize; 3],
) -> Result<HeadLayout> {
    if n_kv_heads == 0 || n_q_heads == 0 || !n_q_heads.is_multiple_of(n_kv_heads) {
        return Err(Error::InvalidHeads(format!(
            "{n_q_heads} query heads are not divisible into {n_kv_heads} KV groups"
        )));
    }
    if ratio_heads.iter().sum::<usize>() != n_kv_heads {
        return Err(Error::BadRatio {
            ratio: ratio_heads,
            expected: n_kv_heads,
        });
    }
    if let Some(a) = Axis::ALL.iter().find(|a| ratio_heads[a.index()] == 0) {
        return Err(Error::InvalidHeads(format!("axis {a} has no KV head")));
    }
    let axis_of_kv_head = Axis::ALL
        .iter()
        .flat_map(|a| std::iter::repeat_n(*a, ratio_heads[a.index()]))
        .collect();
    Ok(HeadLayout {
        n_q_heads,
        n_kv_heads,
        axis_of_kv_head,
    })
}

// ── Extrapolation ───────────────────────────────────────────────────────────

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum ExtrapolationSpec {
    #[default]
    None,
    NtkAware {
        scale: f64,
    },
    /// Ramp bounds are in units of original-context length per wavelength:
    /// pairs completing fewer than `alpha` turns over `original_ctx` are
    /// fully interpolated, more than `beta` turns are left untouched.
    Yarn {
        scale: f64,
        original_ctx: f64,
        alpha: f64,
        beta: f64,
    },
}

impl ExtrapolationSpec {
    pub const YARN_ALPHA: f64 = 1.0;
    pub const YARN_BETA: f64 = 32.0;

    pub fn yarn(scale: f64, original_ctx: f64) -> Self {
        ExtrapolationSpec::Yarn {
            scale,
            original_ctx,
            alpha: Self::YARN_ALPHA,
            beta: Self::YARN_BETA,
        }
    }

    pub fn apply(&self, table: &FreqTable) -> Result<FreqTable> {
        match *self {
            ExtrapolationSpec::None => Ok(table.clone()),
            ExtrapolationSpec::NtkAware { scale } => apply_ntk(table, scale),
            ExtrapolationSpec::Yarn { .. } => apply_yarn(table, self),
        }
    }
}

fn check_scale(scale: f64) -> Result<()> {
    if !(scale.is_finite() && scale >= 1.0) {
        return Err(Error::InvalidExtrapolation(format!(
            "scale must be >= 1, got {scale}"
        )));
    }
    Ok(())
}

/// NTK-aware rescaling: rebuilds the table with `base·scale^(d/(d-2))`.
pub fn apply_ntk(table: &FreqTable, scale: f64) -> Result<FreqTable> {
    check_scale(scale)?;
    if scale == 1.0 || table.d == 2 {
        // d = 2 has only θ_0 = 1, which NTK leaves fixed.
        return Ok(table.clone());
    }
    let d = table.d as f64;
    let base = table.base * scale.powf(d / (d - 2.0));
    Ok(FreqTable {
        d: table.d,
        base,
        theta: geometric(table.d, base),
    })
}

/// YaRN per-pair interpolation with a linear ramp between `alpha` and `beta`.
pub fn apply_yarn(table: &FreqTable, spec: &ExtrapolationSpec) -> Result<FreqTable> {
    let ExtrapolationSpec::Yarn {
        scale,
        original_ctx,
        alpha,
        beta,
    } = *spec
    else {
        return Err(Error::InvalidExtrapolation("expected a YaRN spec".into()));
    };
    check_scale(scale)?;
    if !(alpha.is_finite() && beta.is_finite() && alpha < beta) {
        return Err(Error::InvalidExtrapolation(format!(
            "ramp requires alpha < beta, got ({alpha}, {beta})"
        )));
    }
    if !(original_ctx.is_finite() && original_ctx > 0.0) {
        return Err(Error::InvalidExtrapolation(format!(
            "original context must be positive, got {original_ctx}"
        )));
    }
    if scale == 1.0 {
        return Ok(table.clone());
    }
    let theta = table
        .theta
        .iter()
        .map(|&th| {
            let turns = original_ctx * th / (2.0 * PI);
            let keep = ((turns - alpha) / (beta - alpha)).clamp(0.0, 1.0);
            if keep == 1.0 {
                th
            } else if keep == 0.0 {
                th / scale
            } else {
                (1.0 - keep) * th / scale + keep * th
            }
        })
        .collect();
    Ok(FreqTable {
        d: table.d,
        base: table.base,
        theta,
    })
}

/// Smallest rescale factor covering the positions a design realises on a
/// stream: `max(1, (max coordinate + 1) / train_ctx)`.
pub fn recommend_scale(stream: &TokenStream, design: Design, train_ctx: u64) -> Result<f64> {
    if train_ctx == 0 {
        return Err(Error::InvalidExtrapolation(
            "train context must be positive".into(),
        ));
    }
    let layout = design.assign_default(stream)?;
    let max = layout.max_coordinate().map_or(0.0, |c| c.to_f64() + 1.0);
    Ok((max / train_ctx as f64).max(1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stream::Segment;
    use Axis::*;

    #[test]
    fn base_frequency_examples() {
        assert_eq!(base_frequencies(2, 10_000.0).unwrap().theta, vec![1.0]);
        let t = base_frequencies(4, 10_000.0).unwrap();
        assert_eq!(t.theta[0], 1.0);
        assert!((t.theta[1] - 0.01).abs() < 1e-17);
        // exp(-(2/128) ln 1e6), evaluated with mpmath at 30 digits.
        let t = base_frequencies(128, 1e6).unwrap();
        assert!((t.theta[1] - 0.805842187761481).abs() < 1e-14);
        assert!(t.theta.windows(2).all(|w| w[0] > w[1]));
    }

    #[test]
    fn base_frequency_errors() {
        assert_eq!(
            base_frequencies(3, 10.0).unwrap_err(),
            Error::InvalidDimension(3)
        );
        assert_eq!(
            base_frequencies(0, 10.0).unwrap_err(),
            Error::InvalidDimension(0)
        );
        assert_eq!(
            base_frequencies(4, 1.0).unwrap_err(),
            Error::InvalidBase(1.0)
        );
        assert!(base_frequencies(4, f64::NAN).is_err());
    }

    #[test]
    fn chunked() {
        assert_eq!(alloc_chunked(6, [1, 1, 1]).unwrap().axis_of, vec![T, H, W]);
        let a = alloc_chunked(128, [32, 16, 16]).unwrap();
        assert_eq!(a.pairs_of(T), (0..32).collect::<Vec<_>>());
        assert_eq!(a.pairs_of(H), (32..48).collect::<Vec<_>>());
        assert_eq!(a.pairs_of(W), (48..64).collect::<Vec<_>>());
        let table = base_frequencies(128, 1e6).unwrap();
        let min_h = a
            .pairs_of(H)
            .iter()
            .map(|&i| table.theta[i])
            .fold(f64::MAX, f64::min);
        let max_w = a
            .pairs_of(W)
            .iter()
            .map(|&i| table.theta[i])
            .fold(0.0, f64::max);
        assert!(min_h > max_w);
        assert_eq!(
            alloc_chunked(128, [32, 16, 15]).unwrap_err(),
            Error::BadRatio {
                ratio: [32, 16, 15],
                expected: 64
            }
        );
    }

    #[test]
    fn interleaved() {
        assert_eq!(
            alloc_interleaved(6, [1, 1, 1]).unwrap().axis_of,
            vec![T, H, W]
        );
        assert_eq!(
            alloc_interleaved(12, [2, 2, 2]).unwrap().axis_of,
            vec![T, H, W, T, H, W]
        );
        let a = alloc_interleaved(128, [24, 20, 20]).unwrap();
        for i in 0..60 {
            assert_eq!(a.axis_of[i], [T, H, W][i % 3], "pair {i}");
        }
        assert_eq!(&a.axis_of[60..], &[T, T, T, T]);
        assert!(alloc_interleaved(10, [1, 1, 1]).is_err());
    }

    #[test]
    fn videorope_like() {
        assert_eq!(
            alloc_videorope_like(6, [1, 1, 1]).unwrap().axis_of,
            vec![H, W, T]
        );
        let a = alloc_videorope_like(128, [32, 16, 16]).unwrap();
        assert_eq!(a.pairs_of(T), (32..64).collect::<Vec<_>>());
        assert_ne!(a.axis_of, alloc_chunked(128, [32, 16, 16]).unwrap().axis_of);
        let table = base_frequencies(128, 1e6).unwrap();
        let t_min = a
            .pairs_of(T)
            .iter()
            .map(|&i| table.theta[i])
            .fold(f64::MAX, f64::min);
        assert!(a.pairs_of(H).iter().all(|&i| table.theta[i] > t_min));
    }

    #[test]
    fn ilrope_like() {
        assert_eq!(
            alloc_ilrope_like(6, [1, 1, 1]).unwrap().axis_of,
            vec![H, W, T]
        );
        assert_eq!(
            alloc_ilrope_like(8, [1, 1, 2]).unwrap().axis_of,
            vec![H, W, W, T]
        );
        assert_eq!(
            alloc_ilrope_like(8, [1, 2, 1]).unwrap().axis_of,
            vec![H, W, H, T]
        );
        let a = alloc_ilrope_like(128, [24, 20, 20]).unwrap();
        assert_eq!(a.pairs_of(T), (40..64).collect::<Vec<_>>());
    }

    #[test]
    fn multihead() {
        let l = alloc_multihead(4, 4, [2, 1, 1]).unwrap();
        assert_eq!(l.axis_of_kv_head, vec![T, T, H, W]);
        assert_eq!(l.axis_of_q_heads(), l.axis_of_kv_head);
        let l = alloc_multihead(8, 4, [2, 1, 1]).unwrap();
        assert_eq!(l.axis_of_q_heads(), vec![T, T, T, T, H, H, W, W]);
        assert_eq!(l.ratio(), [2, 1, 1]);
        assert!(matches!(
            alloc_multihead(4, 4, [0, 2, 2]),
            Err(Error::InvalidHeads(_))
        ));
        assert!(matches!(
            alloc_multihead(6, 4, [2, 1, 1]),
            Err(Error::InvalidHeads(_))
        ));
        assert!(matches!(
            alloc_multihead(8, 4, [2, 1, 2]),
            Err(Error::BadRatio { .. })
        ));
    }

    #[test]
    fn ntk() {
        let t = base_frequencies(64, 1e4).unwrap();
        assert_eq!(apply_ntk(&t, 1.0).unwrap(), t);
        let t4 = base_frequencies(4, 1e4).unwrap();
        let n = apply_ntk(&t4, 4.0).unwrap();
        assert!((n.base - 160_000.0).abs() < 1e-9);
        assert!((n.theta[1] - 160_000f64.powf(-0.5)).abs() < 1e-15);
        let n = apply_ntk(&t, 8.0).unwrap();
        assert_eq!(n.theta[0], 1.0);
        assert!(n.theta.iter().zip(&t.theta).all(|(a, b)| a <= b));
        assert!(apply_ntk(&t, 0.5).is_err());
    }

    #[test]
    fn yarn() {
        let t = base_frequencies(128, 1e6).unwrap();
        let id = ExtrapolationSpec::yarn(1.0, 32_768.0);
        assert_eq!(apply_yarn(&t, &id).unwrap(), t);
        let spec = ExtrapolationSpec::yarn(4.0, 32_768.0);
        let y = apply_yarn(&t, &spec).unwrap();
        // θ_0 = 1: 32768/2π turns, far above beta.
        assert_eq!(y.theta[0], t.theta[0]);
        // θ_63 ≈ 1.2e-6: well under one turn over the context.
        assert_eq!(y.theta[63], t.theta[63] / 4.0);
        assert!(y.theta.iter().zip(&t.theta).all(|(a, b)| a <= b));
        assert!(y.theta.windows(2).all(|w| w[0] > w[1]));
        let bad = ExtrapolationSpec::Yarn {
            scale: 2.0,
            original_ctx: 1.0,
            alpha: 4.0,
            beta: 4.0,
        };
        assert!(apply_yarn(&t, &bad).is_err());
        assert!(apply_yarn(&t, &ExtrapolationSpec::NtkAware { scale: 2.0 }).is_err());
    }

    #[test]
    fn recommend() {
        let s = TokenStream::new(vec![Segment::text(10), Segment::image(8, 8)]).unwrap();
        assert_eq!(recommend_scale(&s, Design::Vanilla, 1024).unwrap(), 1.0);
        let v = recommend_scale(&s, Design::Vanilla, 8).unwrap();
        let m = recommend_scale(&s, Design::MropeI, 8).unwrap();
        assert_eq!(v, 74.0 / 8.0);
        assert_eq!(m, 11.0 / 8.0);
        assert!(recommend_scale(&s, Design::Vanilla, 0).is_err());
    }

    #[test]
    fn freq_csv() {
        let t = base_frequencies(4, 10_000.0).unwrap();
        let csv = t.to_csv(&[]);
        assert!(
            csv.starts_with("pair_index,axis,theta\n0,t,1\n1,t,0.01"),
            "{csv}"
        );
    }
}
