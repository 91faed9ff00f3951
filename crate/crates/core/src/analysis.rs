//! Long-range decay indicator, positional-coherence audit and attention-mass
//! measurement.

use std::collections::HashMap;

use num_complex::Complex64;
use serde::Serialize;

use crate::coord::{PosCoord, PosTriple};
use crate::error::{Error, Result};
use crate::freq::Axis;
use crate::position::PositionLayout;
use crate::rotary::RotarySpec;
use crate::stream::TokenStream;

// ── Decay indicator ─────────────────────────────────────────────────────────

/// `|S_j|` for `j = 1..=n`, where `S_j = Σ_{k<j} e^{i·delta·θ_k}`.
pub fn partial_sums(thetas: &[f64], delta: f64) -> Vec<f64> {
    let mut acc = Complex64::new(0.0, 0.0);
    thetas
        .iter()
        .map(|th| {
            acc += Complex64::from_polar(1.0, delta * th);
            acc.norm()
        })
        .collect()
}

/// Mean of [`partial_sums`]. Equals `(n+1)/2` at `delta = 0` and never
/// exceeds `n`.
pub fn decay_indicator(thetas: &[f64], delta: f64) -> f64 {
    if thetas.is_empty() {
        return 0.0;
    }
    partial_sums(thetas, delta).iter().sum::<f64>() / thetas.len() as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecayCurve {
    pub axis: Axis,
    pub deltas: Vec<f64>,
    pub values: Vec<f64>,
}

/// `0` followed by `points` geometrically spaced distances in `[lo, hi]`.
pub fn geometric_grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    let mut grid = vec![0.0];
    if points == 1 {
        grid.push(lo);
    } else if points > 1 {
        let step = (hi / lo).ln() / (points - 1) as f64;
        grid.extend((0..points).map(|i| {
            if i == points - 1 {
                hi
            } else {
                lo * (step * i as f64).exp()
            }
        }));
    }
    grid
}

/// Default distance grid: 0 plus 200 geometric points over `[1, 10^4]`.
pub fn default_delta_grid() -> Vec<f64> {
    geometric_grid(1.0, 1e4, 200)
}

/// Decay indicator over the effective frequencies `spec` assigns to `axis`.
pub fn decay_curve(spec: &RotarySpec, axis: Axis, deltas: &[f64]) -> Result<DecayCurve> {
    let thetas = spec.axis_thetas(axis)?;
    let values = deltas
        .iter()
        .map(|&d| decay_indicator(&thetas, d))
        .collect();
    Ok(DecayCurve {
        axis,
        deltas: deltas.to_vec(),
        values,
    })
}

/// `max |a−b| / max(a, b)` over grid points with `lo <= delta <= hi`.
pub fn max_relative_divergence(a: &DecayCurve, b: &DecayCurve, lo: f64, hi: f64) -> f64 {
    a.deltas
        .iter()
        .zip(a.values.iter().zip(&b.values))
        .filter(|(d, _)| **d >= lo && **d <= hi)
        .map(|(_, (x, y))| {
            let m = x.max(*y);
            if m == 0.0 {
                0.0
            } else {
                (x - y).abs() / m
            }
        })
        .fold(0.0, f64::max)
}

// ── Positional coherence ────────────────────────────────────────────────────

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Interval {
    pub segment_index: usize,
    pub before: f64,
    pub after: f64,
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoherenceReport {
    /// Token pairs from different segments sharing an identical triple.
    pub overlaps: Vec<(usize, usize)>,
    /// A generated-text token collides with, or its counter falls inside the
    /// coordinate range of, an earlier visual block.
    pub generated_overlap: bool,
    pub max_position: Option<f64>,
    pub intervals: Vec<Interval>,
}

impl CoherenceReport {
    pub fn is_clean(&self) -> bool {
        self.overlaps.is_empty() && !self.generated_overlap
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

pub fn check_coherence(layout: &PositionLayout, stream: &TokenStream) -> Result<CoherenceReport> {
    let table = stream.token_table();
    if table.len() != layout.len() {
        return Err(Error::LayoutMismatch(format!(
            "layout has {} tokens, stream has {}",
            layout.len(),
            table.len()
        )));
    }
    if let Some(i) = table
        .iter()
        .zip(&layout.entries)
        .position(|(t, e)| t.segment != e.segment || t.modality != e.modality)
    {
        return Err(Error::LayoutMismatch(format!(
            "token {i} belongs to a different segment"
        )));
    }

    let mut by_pos: HashMap<PosTriple, Vec<usize>> = HashMap::new();
    for (i, e) in layout.entries.iter().enumerate() {
        by_pos.entry(e.pos).or_default().push(i);
    }
    let mut overlaps = Vec::new();
    for group in by_pos.values().filter(|g| g.len() > 1) {
        for (a, &i) in group.iter().enumerate() {
            for &j in &group[a + 1..] {
                if layout.entries[i].segment != layout.entries[j].segment {
                    overlaps.push((i, j));
                }
            }
        }
    }
    overlaps.sort_unstable();

    let generated: Vec<usize> = (0..layout.len())
        .filter(|&i| stream.segments[layout.entries[i].segment].is_generated())
        .collect();

    let mut generated_overlap = overlaps.iter().any(|&(i, j)| {
        let (a, b) = (&layout.entries[i], &layout.entries[j]);
        let gen = |x: usize| stream.segments[x].is_generated();
        (gen(a.segment) && b.modality.is_visual()) || (gen(b.segment) && a.modality.is_visual())
    });

    let ranges: Vec<(usize, PosCoord, PosCoord)> = layout
        .blocks
        .iter()
        .map(|b| {
            let (f, h, w) = b.grid;
            let tokens = &layout.entries[b.first_token..b.first_token + f * h * w];
            let lo = tokens.iter().map(|e| e.pos.min_component()).min().unwrap();
            let hi = tokens.iter().map(|e| e.pos.max_component()).max().unwrap();
            (b.segment, lo, hi)
        })
        .collect();
    generated_overlap |= generated.iter().any(|&g| {
        let e = &layout.entries[g];
        ranges
            .iter()
            .any(|&(seg, lo, hi)| seg < e.segment && lo <= e.pos.t && e.pos.t <= hi)
    });

    let intervals = layout
        .blocks
        .iter()
        .map(|b| Interval {
            segment_index: b.segment,
            before: b.counter_before.to_f64(),
            after: b.counter_after.to_f64(),
            gap: b.advance().to_f64(),
        })
        .collect();

    Ok(CoherenceReport {
        overlaps,
        generated_overlap,
        max_position: layout.max_coordinate().map(PosCoord::to_f64),
        intervals,
    })
}

// ── Attention mass ──────────────────────────────────────────────────────────

/// Row-major square attention matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionMatrix {
    n: usize,
    data: Vec<f64>,
}

impl AttentionMatrix {
    pub const ROW_TOLERANCE: f64 = 1e-6;

    /// Validates squareness, non-negativity and row sums of 1 ± 1e-6.
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        let mut data = Vec::with_capacity(n * n);
        for (i, row) in rows.into_iter().enumerate() {
            if row.len() != n {
                return Err(Error::InvalidMatrix(format!(
                    "row {i} has {} columns, expected {n}",
                    row.len()
                )));
            }
            if row.iter().any(|x| !x.is_finite() || *x < 0.0) {
                return Err(Error::InvalidMatrix(format!(
                    "row {i} has a negative or non-finite weight"
                )));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > Self::ROW_TOLERANCE {
                return Err(Error::InvalidMatrix(format!(
                    "row {i} sums to {sum}, not 1"
                )));
            }
            data.extend(row);
        }
        Ok(Self { n, data })
    }

    /// N lines of N comma-separated decimals.
    pub fn parse_csv(text: &str) -> Result<Self> {
        let rows = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(n, l)| {
                l.split(',')
                    .map(|x| x.trim().parse::<f64>())
                    .collect::<std::result::Result<Vec<_>, _>>()
                    .map_err(|e| Error::InvalidMatrix(format!("line {}: {e}", n + 1)))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(rows)
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.n + col]
    }

    /// Mean over rows of each column's weight.
    fn column_means(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        for row in self.data.chunks(self.n) {
            for (o, x) in out.iter_mut().zip(row) {
                *o += x;
            }
        }
        out.iter_mut().for_each(|x| *x /= self.n as f64);
        out
    }
}

/// Average received attention on every cell of one visual block.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SinkProfile {
    pub segment_index: usize,
    pub frames: usize,
    pub h: usize,
    pub w: usize,
    /// `frames × h × w`, raster order.
    pub per_frame: Vec<f64>,
    /// `h × w`, averaged over frames.
    pub averaged: Vec<f64>,
}

impl SinkProfile {
    /// `(row, col)` of the heaviest cell of `frame`.
    pub fn argmax_cell(&self, frame: usize) -> (usize, usize) {
        let cells = &self.per_frame[frame * self.h * self.w..(frame + 1) * self.h * self.w];
        let k = argmax(cells);
        (k / self.w, k % self.w)
    }

    pub fn argmax_averaged(&self) -> (usize, usize) {
        let k = argmax(&self.averaged);
        (k / self.w, k % self.w)
    }
}

fn argmax(xs: &[f64]) -> usize {
    xs.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, &x)| {
            if x > best.1 {
                (i, x)
            } else {
                best
            }
        })
        .0
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AttentionMassReport {
    /// Fraction of attention on visual tokens, one entry per matrix.
    pub per_matrix: Vec<f64>,
    pub mean: f64,
    pub profiles: Vec<SinkProfile>,
}

impl AttentionMassReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Visual attention mass and sink profiles; profiles average all matrices
/// uniformly.
pub fn attention_mass(
    matrices: &[AttentionMatrix],
    layout: &PositionLayout,
) -> Result<AttentionMassReport> {
    if matrices.is_empty() {
        return Err(Error::InvalidMatrix(
            "no attention matrices supplied".into(),
        ));
    }
    let n = layout.len();
    if let Some(m) = matrices.iter().find(|m| m.size() != n) {
        return Err(Error::InvalidMatrix(format!(
            "matrix is {0}x{0} but the layout has {n} tokens",
            m.size()
        )));
    }
    let visual: Vec<bool> = layout
        .entries
        .iter()
        .map(|e| e.modality.is_visual())
        .collect();

    let mut received = vec![0.0; n];
    let mut per_matrix = Vec::with_capacity(matrices.len());
    for m in matrices {
        let row_mass: f64 = m
            .data
            .chunks(n)
            .map(|row| {
                row.iter()
                    .zip(&visual)
                    .filter(|(_, v)| **v)
                    .map(|(x, _)| x)
                    .sum::<f64>()
            })
            .sum();
        per_matrix.push(row_mass / n as f64);
        let cols = m.column_means();
        for (r, c) in received.iter_mut().zip(&cols) {
            *r += c / matrices.len() as f64;
        }
    }

    let profiles = layout
        .blocks
        .iter()
        .map(|b| {
            let (frames, h, w) = b.grid;
            let per_frame = received[b.first_token..b.first_token + frames * h * w].to_vec();
            let averaged = (0..h * w)
                .map(|k| (0..frames).map(|f| per_frame[f * h * w + k]).sum::<f64>() / frames as f64)
                .collect();
            SinkProfile {
                segment_index: b.segment,
                frames,
                h,
                w,
                per_frame,
                averaged,
            }
        })
        .collect();

    let mean = per_matrix.iter().sum::<f64>() / per_matrix.len() as f64;
    Ok(AttentionMassReport {
        per_matrix,
        mean,
        profiles,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::freq::{alloc_chunked, base_frequencies};
    use crate::position::{assign_diagonal, assign_mrope, Design, DesignOptions};
    use crate::rotary::RotarySpec;
    use crate::stream::Segment;
    use crate::ExtrapolationSpec;

    #[test]
    fn partial_sum_examples() {
        let thetas = base_frequencies(16, 1e4).unwrap().theta;
        let s = partial_sums(&thetas, 0.0);
        for (j, v) in s.iter().enumerate() {
            assert_eq!(*v, (j + 1) as f64);
        }
        assert_eq!(partial_sums(&[std::f64::consts::PI], 1.0), vec![1.0]);

        let pi = std::f64::consts::PI;
        let s = partial_sums(&[1.0, 0.01], pi);
        // |e^{iπ} + e^{i·0.01π}| = |(-1 + cos 0.01π, sin 0.01π)|
        let expect = ((-1.0 + (0.01 * pi).cos()).powi(2) + (0.01 * pi).sin().powi(2)).sqrt();
        assert!((s[1] - expect).abs() < 1e-15);
    }

    #[test]
    fn indicator_at_zero() {
        assert_eq!(decay_indicator(&[1.0, 0.5], 0.0), 1.5);
        let thetas = base_frequencies(128, 1e6).unwrap().theta;
        assert_eq!(decay_indicator(&thetas, 0.0), 32.5);
    }

    #[test]
    fn curve_at_zero_and_missing_axis() {
        let t = base_frequencies(128, 1e6).unwrap();
        let spec = RotarySpec::channels(
            t.clone(),
            alloc_chunked(128, [16, 24, 24]).unwrap(),
            ExtrapolationSpec::None,
        )
        .unwrap();
        let c = decay_curve(&spec, Axis::H, &[0.0]).unwrap();
        assert_eq!(c.values, vec![12.5]);
        let spec = RotarySpec::channels(
            t,
            alloc_chunked(128, [0, 32, 32]).unwrap(),
            ExtrapolationSpec::None,
        )
        .unwrap();
        assert_eq!(
            decay_curve(&spec, Axis::T, &[1.0]).unwrap_err(),
            Error::AxisAbsent(Axis::T)
        );
    }

    #[test]
    fn grid_shape() {
        let g = default_delta_grid();
        assert_eq!(g.len(), 201);
        assert_eq!((g[0], g[1], g[200]), (0.0, 1.0, 1e4));
        assert!(g.windows(2).all(|w| w[0] < w[1]));
    }

    fn stream(segs: Vec<Segment>) -> TokenStream {
        TokenStream::new(segs).unwrap()
    }

    #[test]
    fn mrope_is_clean() {
        let s = stream(vec![
            Segment::text(3),
            Segment::video(2, 3, 3),
            Segment::text(2),
            Segment::generated(4),
        ]);
        for reset in [false, true] {
            let opts = DesignOptions {
                spatial_reset: reset,
                ..Default::default()
            };
            let r = check_coherence(&assign_mrope(&s, &opts).unwrap(), &s).unwrap();
            assert!(r.is_clean(), "{r:?}");
            assert_eq!(r.intervals.len(), 1);
        }
    }

    #[test]
    fn diagonal_document_confusion() {
        let s = stream(vec![
            Segment::text(4),
            Segment::image(100, 100),
            Segment::generated(50),
        ]);
        let r =
            check_coherence(&assign_diagonal(&s, &DesignOptions::default()).unwrap(), &s).unwrap();
        assert!(r.generated_overlap);
        assert_eq!(r.max_position, Some(54.0));
        assert_eq!(r.intervals[0].gap, 1.0);
    }

    #[test]
    fn text_only_report() {
        let s = stream(vec![Segment::text(9)]);
        for d in Design::ALL {
            let r = check_coherence(&d.assign_default(&s).unwrap(), &s).unwrap();
            assert!(
                r.overlaps.is_empty() && r.intervals.is_empty() && !r.generated_overlap,
                "{d}"
            );
        }
    }

    #[test]
    fn coherence_length_mismatch() {
        let s = stream(vec![Segment::text(3)]);
        let other = stream(vec![Segment::text(4)]);
        let l = Design::Vanilla.assign_default(&other).unwrap();
        assert!(matches!(
            check_coherence(&l, &s),
            Err(Error::LayoutMismatch(_))
        ));
    }

    fn uniform(n: usize) -> AttentionMatrix {
        AttentionMatrix::new(vec![vec![1.0 / n as f64; n]; n]).unwrap()
    }

    #[test]
    fn mass_uniform_and_one_hot() {
        let s = stream(vec![
            Segment::text(2),
            Segment::image(2, 2),
            Segment::text(2),
        ]);
        let l = Design::MropeI.assign_default(&s).unwrap();
        let r = attention_mass(&[uniform(8)], &l).unwrap();
        assert!((r.mean - 0.5).abs() < 1e-15);

        let mut rows = vec![vec![0.0; 8]; 8];
        rows.iter_mut().for_each(|row| row[3] = 1.0);
        let r = attention_mass(&[AttentionMatrix::new(rows).unwrap()], &l).unwrap();
        assert_eq!(r.per_matrix, vec![1.0]);
        assert_eq!(r.profiles[0].argmax_cell(0), (0, 1));
    }

    #[test]
    fn matrix_validation() {
        assert!(AttentionMatrix::new(vec![vec![0.5, 0.4], vec![0.5, 0.5]]).is_err());
        assert!(AttentionMatrix::new(vec![vec![1.0, 0.0]]).is_err());
        assert!(AttentionMatrix::new(vec![vec![1.5, -0.5], vec![0.5, 0.5]]).is_err());
        assert!(AttentionMatrix::parse_csv("0.5,0.5\n0.25,0.75\n").is_ok());
        let s = stream(vec![Segment::text(3)]);
        let l = Design::Vanilla.assign_default(&s).unwrap();
        assert!(attention_mass(&[uniform(4)], &l).is_err());
        assert!(attention_mass(&[], &l).is_err());
    }
}
