//! BVH (BioVision hierarchy) reading and writing.
//!
//! The parser accepts the usual `HIERARCHY` / `MOTION` layout with a single
//! root. Joint offsets and position channels are multiplied by a caller
//! supplied scale so centimeter exports can be brought to meters. Every
//! error carries the 1-based line number of the offending token.

use std::fmt::Write as _;

use nalgebra::Vector3;

use super::{Channel, EndSite, Joint, MotionClip, Skeleton};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BvhError {
    #[error("line {line}: malformed header: {msg}")]
    Header { line: usize, msg: String },
    #[error("line {line}: MOTION section declares Frames: {declared} but {found} data rows follow")]
    FrameCount {
        line: usize,
        declared: usize,
        found: usize,
    },
    #[error("line {line}: expected {expected} channel values per frame, found {found}")]
    ChannelCount {
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("line {line}: non-numeric value `{token}`")]
    NonNumeric { line: usize, token: String },
    #[error("line {line}: non-finite value `{token}`")]
    NonFinite { line: usize, token: String },
    #[error("line {line}: Frame Time must be positive, got {value}")]
    FrameTime { line: usize, value: f64 },
    #[error("line {line}: a motion clip needs at least 2 frames, found {found}")]
    TooFewFrames { line: usize, found: usize },
    #[error("invalid skeleton: {0}")]
    Skeleton(String),
}

#[derive(Debug, Clone)]
struct Token<'a> {
    text: &'a str,
    line: usize,
}

struct Tokens<'a> {
    tokens: Vec<Token<'a>>,
    pos: usize,
    last_line: usize,
}

impl<'a> Tokens<'a> {
    fn new(lines: &[(usize, &'a str)]) -> Self {
        let tokens = lines
            .iter()
            .flat_map(|&(line, text)| text.split_whitespace().map(move |t| Token { text: t, line }))
            .collect::<Vec<_>>();
        let last_line = lines.last().map_or(1, |l| l.0);
        Self {
            tokens,
            pos: 0,
            last_line,
        }
    }

    fn peek(&self) -> Option<&Token<'a>> {
        self.tokens.get(self.pos)
    }

    fn next(&mut self, what: &str) -> Result<Token<'a>, BvhError> {
        let tok = self.tokens.get(self.pos).cloned().ok_or_else(|| BvhError::Header {
            line: self.last_line,
            msg: format!("unexpected end of hierarchy, expected {what}"),
        })?;
        self.pos += 1;
        Ok(tok)
    }

    fn expect(&mut self, keyword: &str) -> Result<Token<'a>, BvhError> {
        let tok = self.next(keyword)?;
        if tok.text != keyword {
            return Err(BvhError::Header {
                line: tok.line,
                msg: format!("expected `{keyword}`, found `{}`", tok.text),
            });
        }
        Ok(tok)
    }

    fn number(&mut self, what: &str) -> Result<f64, BvhError> {
        let tok = self.next(what)?;
        parse_number(tok.text, tok.line)
    }
}

fn parse_number(text: &str, line: usize) -> Result<f64, BvhError> {
    let v: f64 = text.parse().map_err(|_| BvhError::NonNumeric {
        line,
        token: text.to_string(),
    })?;
    if !v.is_finite() {
        return Err(BvhError::NonFinite {
            line,
            token: text.to_string(),
        });
    }
    Ok(v)
}

fn parse_channel(tok: &Token<'_>) -> Result<Channel, BvhError> {
    Ok(match tok.text {
        "Xposition" => Channel::Xposition,
        "Yposition" => Channel::Yposition,
        "Zposition" => Channel::Zposition,
        "Xrotation" => Channel::Xrotation,
        "Yrotation" => Channel::Yrotation,
        "Zrotation" => Channel::Zrotation,
        other => {
            return Err(BvhError::Header {
                line: tok.line,
                msg: format!("unknown channel `{other}`"),
            })
        }
    })
}

struct HierarchyBuilder {
    joints: Vec<Joint>,
    end_sites: Vec<EndSite>,
    scale: f64,
}

impl HierarchyBuilder {
    fn offset(&self, toks: &mut Tokens<'_>) -> Result<Vector3<f64>, BvhError> {
        toks.expect("OFFSET")?;
        let x = toks.number("offset x")?;
        let y = toks.number("offset y")?;
        let z = toks.number("offset z")?;
        Ok(Vector3::new(x, y, z) * self.scale)
    }

    fn joint(&mut self, toks: &mut Tokens<'_>, parent: Option<usize>) -> Result<(), BvhError> {
        let name = toks.next("joint name")?;
        toks.expect("{")?;
        let offset = self.offset(toks)?;
        let mut channels = Vec::new();
        if toks.peek().is_some_and(|t| t.text == "CHANNELS") {
            toks.next("CHANNELS")?;
            let count_tok = toks.next("channel count")?;
            let count: usize = count_tok.text.parse().map_err(|_| BvhError::Header {
                line: count_tok.line,
                msg: format!("invalid channel count `{}`", count_tok.text),
            })?;
            for _ in 0..count {
                let tok = toks.next("channel name")?;
                channels.push(parse_channel(&tok)?);
            }
        }
        let index = self.joints.len();
        self.joints.push(Joint {
            name: name.text.to_string(),
            parent,
            offset,
            channels,
        });
        loop {
            let tok = toks.next("`JOINT`, `End Site` or `}`")?;
            match tok.text {
                "JOINT" => self.joint(toks, Some(index))?,
                "End" => {
                    toks.expect("Site")?;
                    toks.expect("{")?;
                    let offset = self.offset(toks)?;
                    toks.expect("}")?;
                    let name = format!("{}_end", self.joints[index].name);
                    self.end_sites.push(EndSite {
                        name,
                        parent: index,
                        offset,
                    });
                }
                "}" => return Ok(()),
                other => {
                    return Err(BvhError::Header {
                        line: tok.line,
                        msg: format!("unexpected `{other}` inside joint `{}`", self.joints[index].name),
                    })
                }
            }
        }
    }
}

/// Parses a BVH document with offsets and translations taken as meters.
pub fn parse_bvh(text: &str, clip_id: &str) -> Result<(Skeleton, MotionClip), BvhError> {
    parse_bvh_scaled(text, clip_id, 1.0)
}

/// Parses a BVH document, multiplying offsets and position channels by `scale`.
pub fn parse_bvh_scaled(
    text: &str,
    clip_id: &str,
    scale: f64,
) -> Result<(Skeleton, MotionClip), BvhError> {
    let lines: Vec<(usize, &str)> = text.lines().enumerate().map(|(i, l)| (i + 1, l)).collect();
    let motion_idx = lines
        .iter()
        .position(|(_, l)| l.trim() == "MOTION")
        .ok_or_else(|| BvhError::Header {
            line: lines.last().map_or(1, |l| l.0),
            msg: "missing MOTION section".into(),
        })?;

    let mut toks = Tokens::new(&lines[..motion_idx]);
    toks.expect("HIERARCHY")?;
    toks.expect("ROOT")?;
    let mut builder = HierarchyBuilder {
        joints: Vec::new(),
        end_sites: Vec::new(),
        scale,
    };
    builder.joint(&mut toks, None)?;
    if let Some(extra) = toks.peek() {
        return Err(BvhError::Header {
            line: extra.line,
            msg: format!("unexpected `{}` after the root joint (only one ROOT is supported)", extra.text),
        });
    }
    let skeleton = Skeleton::new(builder.joints, builder.end_sites).map_err(BvhError::Skeleton)?;

    let motion_line = lines[motion_idx].0;
    let mut rest = lines[motion_idx + 1..]
        .iter()
        .filter(|(_, l)| !l.trim().is_empty());

    let (frames_line, frames_text) = rest.next().ok_or_else(|| BvhError::Header {
        line: motion_line,
        msg: "MOTION section lacks `Frames:`".into(),
    })?;
    let declared = frames_text
        .trim()
        .strip_prefix("Frames:")
        .and_then(|s| s.trim().parse::<usize>().ok())
        .ok_or_else(|| BvhError::Header {
            line: *frames_line,
            msg: format!("expected `Frames: <count>`, found `{}`", frames_text.trim()),
        })?;

    let (time_line, time_text) = rest.next().ok_or_else(|| BvhError::Header {
        line: *frames_line,
        msg: "MOTION section lacks `Frame Time:`".into(),
    })?;
    let time_str = time_text
        .trim()
        .strip_prefix("Frame Time:")
        .ok_or_else(|| BvhError::Header {
            line: *time_line,
            msg: format!("expected `Frame Time: <seconds>`, found `{}`", time_text.trim()),
        })?
        .trim();
    let frame_time = parse_number(time_str, *time_line)?;
    if frame_time <= 0.0 {
        return Err(BvhError::FrameTime {
            line: *time_line,
            value: frame_time,
        });
    }

    let n_channels = skeleton.channel_count();
    let position_mask: Vec<bool> = skeleton
        .joints()
        .iter()
        .flat_map(|j| j.channels.iter().map(|c| c.is_position()))
        .collect();
    let mut data = Vec::with_capacity(declared * n_channels);
    let mut found = 0usize;
    let mut last_line = *time_line;
    for &(line, row) in rest {
        last_line = line;
        let before = data.len();
        for (k, tok) in row.split_whitespace().enumerate() {
            let v = parse_number(tok, line)?;
            let v = if position_mask.get(k).copied().unwrap_or(false) {
                v * scale
            } else {
                v
            };
            data.push(v);
        }
        let got = data.len() - before;
        if got != n_channels {
            return Err(BvhError::ChannelCount {
                line,
                expected: n_channels,
                found: got,
            });
        }
        found += 1;
    }
    if found != declared {
        return Err(BvhError::FrameCount {
            line: motion_line,
            declared,
            found,
        });
    }
    if found < 2 {
        return Err(BvhError::TooFewFrames {
            line: last_line,
            found,
        });
    }
    let clip = MotionClip::new(clip_id, frame_time, n_channels, data).map_err(BvhError::Skeleton)?;
    Ok((skeleton, clip))
}

/// Serializes a skeleton and its motion. Values are written with the shortest
/// representation that parses back to the same `f64`, so re-parsing yields an
/// identical skeleton and clip (at scale 1).
pub fn write_bvh(skeleton: &Skeleton, clip: &MotionClip) -> String {
    write_bvh_with(skeleton, clip, None)
}

/// Like [`write_bvh`], but channel values are rounded to `decimals` places
/// when given. Offsets keep full precision.
pub fn write_bvh_with(skeleton: &Skeleton, clip: &MotionClip, decimals: Option<usize>) -> String {
    let mut out = String::new();
    out.push_str("HIERARCHY\n");
    write_joint(&mut out, skeleton, 0, 0);
    out.push_str("MOTION\n");
    let _ = writeln!(out, "Frames: {}", clip.num_frames());
    let _ = writeln!(out, "Frame Time: {}", clip.frame_time());
    for f in 0..clip.num_frames() {
        let row = clip.frame(f);
        let mut first = true;
        for v in row {
            if !first {
                out.push(' ');
            }
            first = false;
            let _ = match decimals {
                Some(d) => write!(out, "{v:.d$}"),
                None => write!(out, "{v}"),
            };
        }
        out.push('\n');
    }
    out
}

fn write_joint(out: &mut String, skeleton: &Skeleton, index: usize, depth: usize) {
    let joint = &skeleton.joints()[index];
    let pad = "  ".repeat(depth);
    let keyword = if joint.parent.is_none() { "ROOT" } else { "JOINT" };
    let _ = writeln!(out, "{pad}{keyword} {}", joint.name);
    let _ = writeln!(out, "{pad}{{");
    let o = joint.offset;
    let _ = writeln!(out, "{pad}  OFFSET {} {} {}", o.x, o.y, o.z);
    if !joint.channels.is_empty() {
        let names: Vec<&str> = joint.channels.iter().map(|c| c.name()).collect();
        let _ = writeln!(out, "{pad}  CHANNELS {} {}", names.len(), names.join(" "));
    }
    for child in skeleton.children(index) {
        write_joint(out, skeleton, child, depth + 1);
    }
    for site in skeleton.end_sites().iter().filter(|s| s.parent == index) {
        let o = site.offset;
        let _ = writeln!(out, "{pad}  End Site");
        let _ = writeln!(out, "{pad}  {{");
        let _ = writeln!(out, "{pad}    OFFSET {} {} {}", o.x, o.y, o.z);
        let _ = writeln!(out, "{pad}  }}");
    }
    let _ = writeln!(out, "{pad}}}");
}
