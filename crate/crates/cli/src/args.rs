use std::path::PathBuf;

use clap::{ArgAction, Args, Parser, Subcommand, ValueEnum};
use mrope_core::{Axis, Design, PosCoord, PosTriple};

#[derive(Debug, Parser)]
#[command(
    name = "mrope",
    version,
    about = "Multimodal rotary position embedding analysis"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Position triple of every token (CSV).
    Layout(LayoutArgs),
    /// Positional-coherence audit (JSON); exits 1 when generated text is
    /// confusable with visual positions.
    Check(LayoutArgs),
    /// Frequency table with axis assignment (CSV).
    Freqs(FreqArgs),
    /// Long-range decay indicator per axis (CSV).
    Decay(DecayArgs),
    /// Attention scores between query and key vectors (CSV).
    Score(ScoreArgs),
    /// Attention mass on visual tokens and sink profiles (JSON).
    Mass(MassArgs),
    /// Minimal extrapolation scale covering a stream's positions (CSV).
    Recommend(RecommendArgs),
}

#[derive(Debug, Args)]
pub struct Output {
    /// Write output here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum IntervalArg {
    Maxjump,
    Vanilla,
}

#[derive(Debug, Args)]
pub struct DesignArgs {
    #[arg(long)]
    pub stream: PathBuf,
    #[arg(long, value_parser = parse_design)]
    pub design: Design,
    /// Override the design's spatial-reset default.
    #[arg(long, action = ArgAction::Set)]
    pub spatial_reset: Option<bool>,
    /// Temporal stride between video frames, e.g. `1/2`.
    #[arg(long, value_parser = parse_coord)]
    pub stride: Option<PosCoord>,
    /// Per-frame temporal strides, comma separated (`1/2,1,2`).
    #[arg(long, value_parser = parse_schedule)]
    pub stride_schedule: Option<Vec<PosCoord>>,
    #[arg(long, value_enum)]
    pub interval: Option<IntervalArg>,
    /// V2PE visual step (1, 1/2, ..., 1/256).
    #[arg(long, value_parser = parse_coord)]
    pub visual_stride: Option<PosCoord>,
    /// CircleRoPE ring radius.
    #[arg(long)]
    pub radius: Option<f64>,
}

#[derive(Debug, Args)]
pub struct LayoutArgs {
    #[command(flatten)]
    pub design: DesignArgs,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SchemeArg {
    Chunked,
    Interleaved,
    Videorope,
    Ilrope,
    Multihead,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ExtrapolationArg {
    None,
    Ntk,
    Yarn,
}

#[derive(Debug, Args)]
pub struct AllocArgs {
    /// Inline allocation config, e.g. `scheme=interleaved,ratio=24:20:20,d=128,base=1000000`.
    /// Individual flags override its fields.
    #[arg(long)]
    pub alloc: Option<String>,
    #[arg(long, value_enum)]
    pub scheme: Option<SchemeArg>,
    /// Pair counts t:h:w (KV-head counts for `multihead`).
    #[arg(long, value_parser = parse_ratio)]
    pub ratio: Option<[usize; 3]>,
    #[arg(long)]
    pub d: Option<usize>,
    #[arg(long)]
    pub base: Option<f64>,
    /// Separate rotary base per axis, t:h:w.
    #[arg(long, value_parser = parse_bases)]
    pub axis_bases: Option<[f64; 3]>,
    /// Query and KV head counts for `multihead`, as `Q:KV`.
    #[arg(long, value_parser = parse_heads)]
    pub heads: Option<(usize, usize)>,
    #[arg(long, value_enum, default_value = "none")]
    pub extrapolation: ExtrapolationArg,
    #[arg(long, default_value_t = 1.0)]
    pub scale: f64,
    /// Training context length YaRN ramps are measured against.
    #[arg(long, default_value_t = 32_768.0)]
    pub original_ctx: f64,
    #[arg(long, default_value_t = mrope_core::ExtrapolationSpec::YARN_ALPHA)]
    pub yarn_alpha: f64,
    #[arg(long, default_value_t = mrope_core::ExtrapolationSpec::YARN_BETA)]
    pub yarn_beta: f64,
}

#[derive(Debug, Args)]
pub struct FreqArgs {
    #[command(flatten)]
    pub alloc: AllocArgs,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Debug, Args)]
pub struct DecayArgs {
    #[command(flatten)]
    pub alloc: AllocArgs,
    /// Restrict to one axis; all axes by default.
    #[arg(long, value_parser = parse_axis)]
    pub axis: Option<Axis>,
    /// Explicit comma-separated distance grid; overrides the default
    /// (0 plus 200 geometric points over [1, 10^4]).
    #[arg(long, value_delimiter = ',')]
    pub grid: Option<Vec<f64>>,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    #[command(flatten)]
    pub alloc: AllocArgs,
    /// Query vectors, one per line (one per query head for `multihead`).
    #[arg(long)]
    pub q: PathBuf,
    /// Key vectors, one per line (one per KV head for `multihead`).
    #[arg(long)]
    pub k: PathBuf,
    /// Query position `t,h,w`.
    #[arg(long, value_parser = parse_triple)]
    pub pq: PosTriple,
    /// Key position `t,h,w`.
    #[arg(long, value_parser = parse_triple)]
    pub pk: PosTriple,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Debug, Args)]
pub struct MassArgs {
    #[command(flatten)]
    pub design: DesignArgs,
    /// Row-stochastic attention matrix CSV; repeat for several layers/heads.
    #[arg(long = "matrix", required = true)]
    pub matrices: Vec<PathBuf>,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Debug, Args)]
pub struct RecommendArgs {
    #[arg(long)]
    pub stream: PathBuf,
    #[arg(long, value_parser = parse_design)]
    pub design: Design,
    #[arg(long)]
    pub train_ctx: u64,
    #[command(flatten)]
    pub output: Output,
}

// ── Value parsers ───────────────────────────────────────────────────────────

pub fn parse_design(s: &str) -> Result<Design, String> {
    s.parse().map_err(|e: mrope_core::Error| e.to_string())
}

pub fn parse_coord(s: &str) -> Result<PosCoord, String> {
    s.parse().map_err(|e: mrope_core::Error| e.to_string())
}

fn parse_schedule(s: &str) -> Result<Vec<PosCoord>, String> {
    s.split(',').map(parse_coord).collect()
}

fn parse_axis(s: &str) -> Result<Axis, String> {
    s.parse()
}

fn parse_three<T: std::str::FromStr>(s: &str, sep: char, what: &str) -> Result<[T; 3], String> {
    let parts: Vec<&str> = s.split(sep).collect();
    let bad = || format!("expected {what} as a{sep}b{sep}c, got `{s}`");
    if parts.len() != 3 {
        return Err(bad());
    }
    let mut out = Vec::with_capacity(3);
    for p in parts {
        out.push(p.trim().parse::<T>().map_err(|_| bad())?);
    }
    out.try_into().map_err(|_| bad())
}

pub fn parse_ratio(s: &str) -> Result<[usize; 3], String> {
    parse_three(s, ':', "ratio")
}

fn parse_bases(s: &str) -> Result<[f64; 3], String> {
    parse_three(s, ':', "bases")
}

fn parse_heads(s: &str) -> Result<(usize, usize), String> {
    let (q, kv) = s
        .split_once(':')
        .ok_or_else(|| format!("expected Q:KV, got `{s}`"))?;
    let q = q
        .trim()
        .parse()
        .map_err(|_| format!("bad query head count `{q}`"))?;
    let kv = kv
        .trim()
        .parse()
        .map_err(|_| format!("bad KV head count `{kv}`"))?;
    Ok((q, kv))
}

fn parse_triple(s: &str) -> Result<PosTriple, String> {
    let [t, h, w] = parse_three::<String>(s, ',', "position")?;
    Ok(PosTriple::new(
        parse_coord(&t)?,
        parse_coord(&h)?,
        parse_coord(&w)?,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn value_parsers() {
        assert_eq!(parse_ratio("24:20:20").unwrap(), [24, 20, 20]);
        assert!(parse_ratio("24:20").is_err());
        assert_eq!(parse_heads("8:4").unwrap(), (8, 4));
        assert_eq!(
            parse_triple("1/2,3,-1").unwrap(),
            PosTriple::new("0.5".parse().unwrap(), 3.into(), (-1).into())
        );
        assert_eq!(parse_schedule("1/2,2").unwrap().len(), 2);
        let err = parse_design("nope").unwrap_err();
        assert!(err.contains("mrope-i"));
    }
}
