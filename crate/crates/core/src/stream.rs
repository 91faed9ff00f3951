//! Token stream data model and the JSON stream-spec format.
//!
//! A stream is a shape description only: text segments carry a token count,
//! visual segments carry their token-grid extents.
//!
//! ```json
//! {"segments":[
//!   {"kind":"text","len":4,"role":"prompt"},
//!   {"kind":"image","h":2,"w":3},
//!   {"kind":"video","t":2,"h":2,"w":2},
//!   {"kind":"text","len":1,"role":"generated"}
//! ]}
//! ```

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Prompt,
    Generated,
}

/// Modality tag attached to every token.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Modality {
    Text,
    Image,
    Video,
}

impl Modality {
    pub fn is_visual(self) -> bool {
        !matches!(self, Modality::Text)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Modality::Text => "text",
            Modality::Image => "image",
            Modality::Video => "video",
        }
    }
}

impl std::fmt::Display for Modality {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Segment {
    Text { len: usize, role: Role },
    Image { h: usize, w: usize },
    Video { frames: usize, h: usize, w: usize },
}

impl Segment {
    pub fn text(len: usize) -> Self {
        Segment::Text {
            len,
            role: Role::Prompt,
        }
    }

    pub fn generated(len: usize) -> Self {
        Segment::Text {
            len,
            role: Role::Generated,
        }
    }

    pub fn image(h: usize, w: usize) -> Self {
        Segment::Image { h, w }
    }

    pub fn video(frames: usize, h: usize, w: usize) -> Self {
        Segment::Video { frames, h, w }
    }

    pub fn modality(&self) -> Modality {
        match self {
            Segment::Text { .. } => Modality::Text,
            Segment::Image { .. } => Modality::Image,
            Segment::Video { .. } => Modality::Video,
        }
    }

    pub fn token_count(&self) -> usize {
        match *self {
            Segment::Text { len, .. } => len,
            Segment::Image { h, w } => h * w,
            Segment::Video { frames, h, w } => frames * h * w,
        }
    }

    /// `(frames, h, w)` for visual segments; images have one frame.
    pub fn grid(&self) -> Option<(usize, usize, usize)> {
        match *self {
            Segment::Text { .. } => None,
            Segment::Image { h, w } => Some((1, h, w)),
            Segment::Video { frames, h, w } => Some((frames, h, w)),
        }
    }

    pub fn is_generated(&self) -> bool {
        matches!(
            self,
            Segment::Text {
                role: Role::Generated,
                ..
            }
        )
    }

    fn validate(&self, index: usize) -> Result<()> {
        let extents: &[(&str, usize)] = match self {
            Segment::Text { len, .. } => &[("len", *len)],
            Segment::Image { h, w } => &[("h", *h), ("w", *w)],
            Segment::Video { frames, h, w } => &[("t", *frames), ("h", *h), ("w", *w)],
        };
        for &(name, v) in extents {
            if v == 0 {
                return Err(Error::InvalidSegment {
                    index,
                    reason: format!("extent `{name}` must be >= 1"),
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct TokenStream {
    pub segments: Vec<Segment>,
}

/// One row of [`TokenStream::token_table`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TokenRef {
    pub segment: usize,
    pub intra: usize,
    pub modality: Modality,
}

impl TokenStream {
    /// Builds a stream, rejecting zero extents.
    pub fn new(segments: Vec<Segment>) -> Result<Self> {
        for (i, s) in segments.iter().enumerate() {
            s.validate(i)?;
        }
        Ok(Self { segments })
    }

    pub fn token_count(&self) -> usize {
        self.segments.iter().map(Segment::token_count).sum()
    }

    /// One entry per token in stream order. Visual tokens are enumerated
    /// frame-major, then row, then column.
    pub fn token_table(&self) -> Vec<TokenRef> {
        let mut out = Vec::with_capacity(self.token_count());
        for (segment, s) in self.segments.iter().enumerate() {
            let modality = s.modality();
            out.extend((0..s.token_count()).map(|intra| TokenRef {
                segment,
                intra,
                modality,
            }));
        }
        out
    }

    pub fn is_text_only(&self) -> bool {
        self.segments
            .iter()
            .all(|s| matches!(s, Segment::Text { .. }))
    }

    pub fn parse(text: &str) -> Result<Self> {
        parse_stream(text)
    }

    pub fn to_json(&self) -> String {
        serialize_stream(self)
    }
}

// ── Wire format ─────────────────────────────────────────────────────────────

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Document {
    segments: Vec<Value>,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
enum WireSegment {
    Text {
        len: usize,
        #[serde(default = "default_role")]
        role: Role,
    },
    Image {
        h: usize,
        w: usize,
    },
    Video {
        t: usize,
        h: usize,
        w: usize,
    },
}

fn default_role() -> Role {
    Role::Prompt
}

impl From<WireSegment> for Segment {
    fn from(w: WireSegment) -> Self {
        match w {
            WireSegment::Text { len, role } => Segment::Text { len, role },
            WireSegment::Image { h, w } => Segment::Image { h, w },
            WireSegment::Video { t, h, w } => Segment::Video { frames: t, h, w },
        }
    }
}

impl From<&Segment> for WireSegment {
    fn from(s: &Segment) -> Self {
        match *s {
            Segment::Text { len, role } => WireSegment::Text { len, role },
            Segment::Image { h, w } => WireSegment::Image { h, w },
            Segment::Video { frames, h, w } => WireSegment::Video { t: frames, h, w },
        }
    }
}

/// Parses a stream-spec JSON document. Errors name the offending segment.
pub fn parse_stream(text: &str) -> Result<TokenStream> {
    let doc: Document =
        serde_json::from_str(text).map_err(|e| Error::MalformedStream(e.to_string()))?;
    let mut segments = Vec::with_capacity(doc.segments.len());
    for (index, raw) in doc.segments.into_iter().enumerate() {
        let bad = |reason: String| Error::InvalidSegment { index, reason };
        let obj = raw
            .as_object()
            .ok_or_else(|| bad("segment must be an object".into()))?;
        let kind = obj
            .get("kind")
            .and_then(Value::as_str)
            .ok_or_else(|| bad("missing string field `kind`".into()))?;
        match kind {
            "text" | "image" | "video" => {}
            other => return Err(bad(format!("unknown kind `{other}`"))),
        }
        if kind != "text" && obj.contains_key("role") {
            return Err(bad(format!("{kind} segments do not carry a role")));
        }
        for (key, v) in obj {
            if matches!(key.as_str(), "len" | "t" | "h" | "w") {
                if let Some(n) = v.as_i64() {
                    if n <= 0 {
                        return Err(bad(format!("extent `{key}` must be >= 1, got {n}")));
                    }
                }
            }
        }
        let seg: WireSegment = serde_json::from_value(raw).map_err(|e| bad(e.to_string()))?;
        let seg = Segment::from(seg);
        seg.validate(index)?;
        segments.push(seg);
    }
    Ok(TokenStream { segments })
}

pub fn serialize_stream(stream: &TokenStream) -> String {
    let segments: Vec<Value> = stream
        .segments
        .iter()
        .map(|s| serde_json::to_value(WireSegment::from(s)).expect("segment serializes"))
        .collect();
    serde_json::to_string(&Document { segments }).expect("document serializes")
}
