//! Multi-axis rotary transforms and attention scores.
//!
//! Rotation acts on adjacent component pairs `(v[2i], v[2i+1])`. Pair `i`
//! turns by `p.a · θ_i` where `a` is the axis that pair (or, for head-split
//! specs, the whole head) is allocated to.

use num_complex::Complex64;

use crate::coord::PosTriple;
use crate::error::{Error, Result};
use crate::freq::{Axis, ExtrapolationSpec, FreqAllocation, FreqTable, HeadLayout};

#[derive(Debug, Clone, PartialEq)]
pub struct HeadVector(Vec<f64>);

impl HeadVector {
    pub fn new(components: Vec<f64>) -> Result<Self> {
        if let Some(i) = components.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        Ok(HeadVector(components))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn dot(&self, other: &HeadVector) -> f64 {
        self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum()
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    fn pair(&self, i: usize) -> Complex64 {
        Complex64::new(self.0[2 * i], self.0[2 * i + 1])
    }
}

impl From<HeadVector> for Vec<f64> {
    fn from(v: HeadVector) -> Self {
        v.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum AxisMap {
    Channels(FreqAllocation),
    Heads(HeadLayout),
}

/// Everything needed to rotate a vector at a position triple.
#[derive(Debug, Clone, PartialEq)]
pub struct RotarySpec {
    pub table: FreqTable,
    pub map: AxisMap,
    pub extrapolation: ExtrapolationSpec,
    /// Effective (post-extrapolation) frequency of each pair. For head-split
    /// specs every head uses this full table.
    theta: Vec<f64>,
}

impl RotarySpec {
    pub fn channels(
        table: FreqTable,
        allocation: FreqAllocation,
        extrapolation: ExtrapolationSpec,
    ) -> Result<Self> {
        if allocation.axis_of.len() != table.pairs() {
            return Err(Error::DimensionMismatch {
                expected: table.pairs(),
                got: allocation.axis_of.len(),
            });
        }
        let theta = match allocation.per_axis_base {
            None => extrapolation.apply(&table)?.theta,
            Some(bases) => {
                let per_axis = Axis::ALL
                    .iter()
                    .map(|a| {
                        let t = crate::freq::base_frequencies(table.d, bases[a.index()])?;
                        extrapolation.apply(&t)
                    })
                    .collect::<Result<Vec<_>>>()?;
                allocation
                    .axis_of
                    .iter()
                    .enumerate()
                    .map(|(i, a)| per_axis[a.index()].theta[i])
                    .collect()
            }
        };
        Ok(Self {
            table,
            map: AxisMap::Channels(allocation),
            extrapolation,
            theta,
        })
    }

    pub fn heads(
        table: FreqTable,
        layout: HeadLayout,
        extrapolation: ExtrapolationSpec,
    ) -> Result<Self> {
        let theta = extrapolation.apply(&table)?.theta;
        Ok(Self {
            table,
            map: AxisMap::Heads(layout),
            extrapolation,
            theta,
        })
    }

    /// Every pair on a single axis: the spec one head of a head-split layout
    /// sees.
    pub fn single_axis(
        table: FreqTable,
        axis: Axis,
        extrapolation: ExtrapolationSpec,
    ) -> Result<Self> {
        let ratio = {
            let mut r = [0; 3];
            r[axis.index()] = table.pairs();
            r
        };
        let allocation = FreqAllocation {
            scheme: crate::freq::Scheme::Chunked,
            ratio,
            axis_of: vec![axis; table.pairs()],
            per_axis_base: None,
        };
        Self::channels(table, allocation, extrapolation)
    }

    pub fn d(&self) -> usize {
        self.table.d
    }

    pub fn effective_theta(&self) -> &[f64] {
        &self.theta
    }

    /// Effective frequencies of the pairs carrying `axis`. Under a head
    /// layout an axis with at least one head gets the full table.
    pub fn axis_thetas(&self, axis: Axis) -> Result<Vec<f64>> {
        let out: Vec<f64> = match &self.map {
            AxisMap::Channels(a) => a
                .pairs_of(axis)
                .into_iter()
                .map(|i| self.theta[i])
                .collect(),
            AxisMap::Heads(l) if l.axis_of_kv_head.contains(&axis) => self.theta.clone(),
            AxisMap::Heads(_) => Vec::new(),
        };
        if out.is_empty() {
            return Err(Error::AxisAbsent(axis));
        }
        Ok(out)
    }

    fn channel_axes(&self) -> Result<&[Axis]> {
        match &self.map {
            AxisMap::Channels(a) => Ok(&a.axis_of),
            AxisMap::Heads(_) => Err(Error::LayoutMismatch(
                "head-split spec needs a head index; use rotate_in_head".into(),
            )),
        }
    }

    fn head_axis(&self, q_head: usize) -> Result<Axis> {
        match &self.map {
            AxisMap::Heads(l) if q_head < l.n_q_heads => Ok(l.axis_of_q_head(q_head)),
            AxisMap::Heads(l) => Err(Error::LayoutMismatch(format!(
                "query head {q_head} out of range for {} heads",
                l.n_q_heads
            ))),
            AxisMap::Channels(_) => Err(Error::LayoutMismatch(
                "channel-split spec has no heads".into(),
            )),
        }
    }

    fn check_dim(&self, v: &HeadVector) -> Result<()> {
        if v.len() != self.d() {
            return Err(Error::DimensionMismatch {
                expected: self.d(),
                got: v.len(),
            });
        }
        Ok(())
    }
}

fn coordinate(p: &PosTriple, axis: Axis) -> f64 {
    match axis {
        Axis::T => p.t.to_f64(),
        Axis::H => p.h.to_f64(),
        Axis::W => p.w.to_f64(),
    }
}

fn rotate_with(
    v: &HeadVector,
    p: &PosTriple,
    theta: &[f64],
    axis_of: impl Fn(usize) -> Axis,
) -> HeadVector {
    let x = v.as_slice();
    let mut out = Vec::with_capacity(x.len());
    for (i, th) in theta.iter().enumerate() {
        let angle = coordinate(p, axis_of(i)) * th;
        let (sin, cos) = angle.sin_cos();
        let (a, b) = (x[2 * i], x[2 * i + 1]);
        out.push(a * cos - b * sin);
        out.push(a * sin + b * cos);
    }
    HeadVector(out)
}

/// Rotates `v` to position `p` under a channel-split spec.
pub fn rotate(v: &HeadVector, p: &PosTriple, spec: &RotarySpec) -> Result<HeadVector> {
    spec.check_dim(v)?;
    let axes = spec.channel_axes()?;
    Ok(rotate_with(v, p, &spec.theta, |i| axes[i]))
}

/// Rotates `v` as query head `q_head` of a head-split spec: every pair uses
/// that head's axis.
pub fn rotate_in_head(
    v: &HeadVector,
    p: &PosTriple,
    spec: &RotarySpec,
    q_head: usize,
) -> Result<HeadVector> {
    spec.check_dim(v)?;
    let axis = spec.head_axis(q_head)?;
    Ok(rotate_with(v, p, &spec.theta, |_| axis))
}

/// `rotate(q, p_q) · rotate(k, p_k)`.
pub fn attention_score(
    q: &HeadVector,
    k: &HeadVector,
    p_q: &PosTriple,
    p_k: &PosTriple,
    spec: &RotarySpec,
) -> Result<f64> {
    Ok(rotate(q, p_q, spec)?.dot(&rotate(k, p_k, spec)?))
}

/// `Re Σ_i conj(q_i)·k_i·e^{i·Δ_a·θ_i}` over complex pairs, with
/// `Δ = p_k − p_q`. Equal to [`attention_score`] for any placement with that
/// offset.
pub fn score_complex_form(
    q: &HeadVector,
    k: &HeadVector,
    delta: &PosTriple,
    spec: &RotarySpec,
) -> Result<f64> {
    spec.check_dim(q)?;
    spec.check_dim(k)?;
    let axes = spec.channel_axes()?;
    let sum: Complex64 = spec
        .theta
        .iter()
        .enumerate()
        .map(|(i, th)| {
            let phase = coordinate(delta, axes[i]) * th;
            q.pair(i).conj() * k.pair(i) * Complex64::from_polar(1.0, phase)
        })
        .sum();
    Ok(sum.re)
}

/// One score per query head; each head rotates by its own axis only and
/// reads the key of its KV group.
pub fn multihead_scores(
    q_heads: &[HeadVector],
    k_heads: &[HeadVector],
    p_q: &PosTriple,
    p_k: &PosTriple,
    spec: &RotarySpec,
) -> Result<Vec<f64>> {
    let AxisMap::Heads(layout) = &spec.map else {
        return Err(Error::LayoutMismatch(
            "multihead scores need a head layout".into(),
        ));
    };
    if q_heads.len() != layout.n_q_heads || k_heads.len() != layout.n_kv_heads {
        return Err(Error::LayoutMismatch(format!(
            "got {} query / {} key heads, layout has {} / {}",
            q_heads.len(),
            k_heads.len(),
            layout.n_q_heads,
            layout.n_kv_heads
        )));
    }
    q_heads
        .iter()
        .enumerate()
        .map(|(h, q)| {
            let k = &k_heads[layout.kv_head_of(h)];
            Ok(rotate_in_head(q, p_q, spec, h)?.dot(&rotate_in_head(k, p_k, spec, h)?))
        })
        .collect()
}

// ── Vector CSV ──────────────────────────────────────────────────────────────

/// One vector per non-empty line, comma-separated decimal doubles.
pub fn parse_vectors(text: &str) -> Result<Vec<HeadVector>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, line)| {
            let comps = line
                .split(',')
                .map(|c| c.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::LayoutMismatch(format!("vector line {}: {e}", n + 1)))?;
            HeadVector::new(comps)
        })
        .collect()
}

pub fn format_vectors(vs: &[HeadVector]) -> String {
    let mut out = String::new();
    for v in vs {
        let line: Vec<String> = v.as_slice().iter().map(|x| x.to_string()).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}
