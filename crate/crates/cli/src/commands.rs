use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use mrope_core::analysis::{
    attention_mass, check_coherence, decay_curve, default_delta_grid, AttentionMatrix,
};
use mrope_core::freq::{alloc_multihead, base_frequencies};
use mrope_core::rotary::{attention_score, multihead_scores, parse_vectors, score_complex_form};
use mrope_core::{
    Axis, AxisMap, DesignOptions, ExtrapolationSpec, IntervalMode, PositionLayout, RotarySpec,
    Scheme, StrideSchedule, TokenStream,
};

use crate::args::{
    parse_ratio, AllocArgs, DecayArgs, DesignArgs, ExtrapolationArg, FreqArgs, IntervalArg,
    LayoutArgs, MassArgs, RecommendArgs, SchemeArg, ScoreArgs,
};

/// Rendered command output plus the process exit code it implies.
pub struct Outcome {
    pub text: String,
    pub code: i32,
}

impl Outcome {
    fn ok(text: String) -> Self {
        Outcome { text, code: 0 }
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn load_stream(path: &Path) -> Result<TokenStream> {
    Ok(TokenStream::parse(&read(path)?)?)
}

fn design_options(args: &DesignArgs) -> DesignOptions {
    let mut opts = args.design.default_options();
    if let Some(r) = args.spatial_reset {
        opts.spatial_reset = r;
    }
    if let Some(s) = args.stride {
        opts.temporal_stride = s;
    }
    if let Some(s) = &args.stride_schedule {
        opts.stride_schedule = StrideSchedule::Dynamic(s.clone());
    }
    if let Some(i) = args.interval {
        opts.interval_mode = match i {
            IntervalArg::Maxjump => IntervalMode::MaxJump,
            IntervalArg::Vanilla => IntervalMode::VanillaMatch,
        };
    }
    if let Some(v) = args.visual_stride {
        opts.visual_stride = v;
    }
    if let Some(r) = args.radius {
        opts.circle_radius = r;
    }
    opts
}

fn assign(args: &DesignArgs) -> Result<(TokenStream, PositionLayout)> {
    let stream = load_stream(&args.stream)?;
    let layout = args.design.assign(&stream, &design_options(args))?;
    Ok((stream, layout))
}

pub fn layout(args: &LayoutArgs) -> Result<Outcome> {
    let (_, layout) = assign(&args.design)?;
    Ok(Outcome::ok(layout.to_csv()))
}

pub fn check(args: &LayoutArgs) -> Result<Outcome> {
    let (stream, layout) = assign(&args.design)?;
    let report = check_coherence(&layout, &stream)?;
    let mut text = report.to_json();
    text.push('\n');
    Ok(Outcome {
        text,
        code: i32::from(report.generated_overlap),
    })
}

// ── Frequency configuration ─────────────────────────────────────────────────

/// Resolved allocation settings after merging `--alloc` with explicit flags.
struct AllocConfig {
    scheme: SchemeArg,
    ratio: [usize; 3],
    d: usize,
    base: f64,
    axis_bases: Option<[f64; 3]>,
    heads: Option<(usize, usize)>,
}

impl AllocConfig {
    fn scheme_name(&self) -> &'static str {
        match self.scheme {
            SchemeArg::Chunked => "chunked",
            SchemeArg::Interleaved => "interleaved",
            SchemeArg::Videorope => "videorope",
            SchemeArg::Ilrope => "ilrope",
            SchemeArg::Multihead => "multihead",
        }
    }

    fn ratio_str(&self) -> String {
        let [t, h, w] = self.ratio;
        format!("{t}:{h}:{w}")
    }
}

fn resolve_alloc(args: &AllocArgs) -> Result<AllocConfig> {
    let mut cfg = AllocConfig {
        scheme: SchemeArg::Interleaved,
        ratio: [24, 20, 20],
        d: 128,
        base: 1e6,
        axis_bases: None,
        heads: None,
    };
    if let Some(inline) = &args.alloc {
        for item in inline.split(',').filter(|s| !s.trim().is_empty()) {
            let (key, value) = item
                .split_once('=')
                .with_context(|| format!("--alloc entry `{item}` is not key=value"))?;
            let value = value.trim();
            match key.trim() {
                "scheme" => {
                    cfg.scheme = clap::ValueEnum::from_str(value, true)
                        .map_err(|e| anyhow::anyhow!("--alloc scheme: {e}"))?
                }
                "ratio" => cfg.ratio = parse_ratio(value).map_err(anyhow::Error::msg)?,
                "d" => {
                    cfg.d = value
                        .parse()
                        .with_context(|| format!("--alloc d `{value}`"))?
                }
                "base" => {
                    cfg.base = value
                        .parse()
                        .with_context(|| format!("--alloc base `{value}`"))?
                }
                other => bail!("unknown --alloc key `{other}` (expected scheme, ratio, d, base)"),
            }
        }
    }
    if let Some(s) = args.scheme {
        cfg.scheme = s;
    }
    if let Some(r) = args.ratio {
        cfg.ratio = r;
    }
    if let Some(d) = args.d {
        cfg.d = d;
    }
    if let Some(b) = args.base {
        cfg.base = b;
    }
    cfg.axis_bases = args.axis_bases;
    cfg.heads = args.heads;
    if cfg.heads.is_some() && cfg.scheme != SchemeArg::Multihead {
        bail!("--heads only applies to --scheme multihead");
    }
    Ok(cfg)
}

fn extrapolation(args: &AllocArgs) -> ExtrapolationSpec {
    match args.extrapolation {
        ExtrapolationArg::None => ExtrapolationSpec::None,
        ExtrapolationArg::Ntk => ExtrapolationSpec::NtkAware { scale: args.scale },
        ExtrapolationArg::Yarn => ExtrapolationSpec::Yarn {
            scale: args.scale,
            original_ctx: args.original_ctx,
            alpha: args.yarn_alpha,
            beta: args.yarn_beta,
        },
    }
}

fn build_spec(args: &AllocArgs) -> Result<(AllocConfig, RotarySpec)> {
    let cfg = resolve_alloc(args)?;
    let table = base_frequencies(cfg.d, cfg.base)?;
    let extrap = extrapolation(args);
    let scheme = match cfg.scheme {
        SchemeArg::Chunked => Scheme::Chunked,
        SchemeArg::Interleaved => Scheme::Interleaved,
        SchemeArg::Videorope => Scheme::VideoRopeLike,
        SchemeArg::Ilrope => Scheme::IlRopeLike,
        SchemeArg::Multihead => {
            if cfg.axis_bases.is_some() {
                bail!("--axis-bases does not apply to --scheme multihead");
            }
            // Without --heads, one query head per KV head.
            let kv: usize = cfg.ratio.iter().sum();
            let (nq, nkv) = cfg.heads.unwrap_or((kv, kv));
            let layout = alloc_multihead(nq, nkv, cfg.ratio)?;
            let spec = RotarySpec::heads(table, layout, extrap)?;
            return Ok((cfg, spec));
        }
    };
    let mut alloc = scheme.allocate(cfg.d, cfg.ratio)?;
    if let Some(b) = cfg.axis_bases {
        alloc = alloc.with_per_axis_base(b)?;
    }
    let spec = RotarySpec::channels(table, alloc, extrap)?;
    Ok((cfg, spec))
}

pub fn freqs(args: &FreqArgs) -> Result<Outcome> {
    let (_, spec) = build_spec(&args.alloc)?;
    let mut out = String::from("pair_index,axis,theta\n");
    for (i, th) in spec.effective_theta().iter().enumerate() {
        let axis = match &spec.map {
            AxisMap::Channels(a) => a.axis_of[i].to_string(),
            AxisMap::Heads(_) => "all".to_string(),
        };
        out.push_str(&format!("{i},{axis},{th}\n"));
    }
    Ok(Outcome::ok(out))
}

pub fn decay(args: &DecayArgs) -> Result<Outcome> {
    let (cfg, spec) = build_spec(&args.alloc)?;
    let grid = match &args.grid {
        Some(g) => {
            if g.iter().any(|x| !x.is_finite() || *x < 0.0) {
                bail!("--grid values must be finite and non-negative");
            }
            g.clone()
        }
        None => default_delta_grid(),
    };
    let axes: Vec<Axis> = args.axis.map_or_else(|| Axis::ALL.to_vec(), |a| vec![a]);
    let (scheme, ratio) = (cfg.scheme_name(), cfg.ratio_str());
    let mut out = String::from("delta,axis,indicator,scheme,ratio,d,base\n");
    for axis in axes {
        let curve = match decay_curve(&spec, axis, &grid) {
            Ok(c) => c,
            // An axis with no pairs or heads has no curve to report.
            Err(mrope_core::Error::AxisAbsent(_)) if args.axis.is_none() => continue,
            Err(e) => return Err(e.into()),
        };
        for (delta, v) in curve.deltas.iter().zip(&curve.values) {
            out.push_str(&format!(
                "{delta},{axis},{v},{scheme},{ratio},{},{}\n",
                cfg.d, cfg.base
            ));
        }
    }
    Ok(Outcome::ok(out))
}

pub fn score(args: &ScoreArgs) -> Result<Outcome> {
    let (_, spec) = build_spec(&args.alloc)?;
    let q = parse_vectors(&read(&args.q)?)?;
    let k = parse_vectors(&read(&args.k)?)?;
    let mut out = String::new();
    match &spec.map {
        AxisMap::Heads(layout) => {
            let scores = multihead_scores(&q, &k, &args.pq, &args.pk, &spec)?;
            out.push_str("head,axis,score\n");
            for (h, s) in scores.iter().enumerate() {
                out.push_str(&format!("{h},{},{s}\n", layout.axis_of_q_head(h)));
            }
        }
        AxisMap::Channels(_) => {
            if q.len() != k.len() || q.is_empty() {
                bail!(
                    "expected matching non-empty query/key files, got {} and {} vectors",
                    q.len(),
                    k.len()
                );
            }
            let delta = args.pk - args.pq;
            out.push_str("index,score,complex_form\n");
            for (i, (qv, kv)) in q.iter().zip(&k).enumerate() {
                let s = attention_score(qv, kv, &args.pq, &args.pk, &spec)?;
                let c = score_complex_form(qv, kv, &delta, &spec)?;
                out.push_str(&format!("{i},{s},{c}\n"));
            }
        }
    }
    Ok(Outcome::ok(out))
}

pub fn mass(args: &MassArgs) -> Result<Outcome> {
    let (_, layout) = assign(&args.design)?;
    let matrices = args
        .matrices
        .iter()
        .map(|p| {
            AttentionMatrix::parse_csv(&read(p)?).with_context(|| format!("matrix {}", p.display()))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut text = attention_mass(&matrices, &layout)?.to_json();
    text.push('\n');
    Ok(Outcome::ok(text))
}

pub fn recommend(args: &RecommendArgs) -> Result<Outcome> {
    let stream = load_stream(&args.stream)?;
    let scale = mrope_core::freq::recommend_scale(&stream, args.design, args.train_ctx)?;
    let max = args
        .design
        .assign_default(&stream)?
        .max_coordinate()
        .map_or_else(|| "".to_string(), |c| c.to_string());
    Ok(Outcome::ok(format!(
        "design,train_ctx,max_coordinate,scale\n{},{},{max},{scale}\n",
        args.design, args.train_ctx
    )))
}
