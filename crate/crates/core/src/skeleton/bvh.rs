//! BVH 1.0 reading and writing.

use std::fmt::Write as _;

use super::{JointDef, Skeleton};
use crate::dataset::MotionClip;
use crate::error::{Error, Result};
use crate::quat::{quat_to_euler, EulerOrder, Quaternion};

#[derive(Clone, Copy, Debug, PartialEq)]
enum Channel {
    Position(usize),
    Rotation(usize),
}

fn parse_channel(name: &str) -> Result<Channel> {
    let lower = name.to_ascii_lowercase();
    let axis = match lower.chars().next() {
        Some('x') => 0,
        Some('y') => 1,
        Some('z') => 2,
        _ => return Err(Error::UnsupportedChannel(name.to_string())),
    };
    match &lower[1..] {
        "position" => Ok(Channel::Position(axis)),
        "rotation" => Ok(Channel::Rotation(axis)),
        _ => Err(Error::UnsupportedChannel(name.to_string())),
    }
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    line: usize,
}

impl<'a> Lines<'a> {
    fn new(text: &'a str) -> Self {
        Self {
            inner: text.lines().enumerate(),
            line: 0,
        }
    }

    /// Next non-blank line, split into tokens.
    fn next_tokens(&mut self) -> Option<Vec<&'a str>> {
        for (n, l) in self.inner.by_ref() {
            self.line = n + 1;
            let toks: Vec<&str> = l.split_whitespace().collect();
            if !toks.is_empty() {
                return Some(toks);
            }
        }
        None
    }

    fn expect_tokens(&mut self, what: &str) -> Result<Vec<&'a str>> {
        let line = self.line;
        self.next_tokens()
            .ok_or_else(|| Error::parse(line + 1, format!("unexpected end of file, expected {what}")))
    }

    fn err(&self, msg: impl Into<String>) -> Error {
        Error::parse(self.line, msg)
    }
}

fn parse_f64(tok: &str, lines: &Lines) -> Result<f64> {
    tok.parse::<f64>()
        .map_err(|_| lines.err(format!("expected a number, found `{tok}`")))
}

/// Parses a BVH document into a skeleton and a clip.
///
/// `End Site` blocks become zero-rotation leaf joints named `<parent>_End`.
/// Rotation channels are composed in the order they are listed; position
/// channels are honoured on the root only.
pub fn parse_bvh(text: &str) -> Result<(Skeleton, MotionClip)> {
    let mut lines = Lines::new(text);
    let head = lines.expect_tokens("HIERARCHY")?;
    if !head[0].eq_ignore_ascii_case("HIERARCHY") {
        return Err(lines.err("expected HIERARCHY"));
    }

    let mut joints: Vec<JointDef> = Vec::new();
    let mut channels: Vec<Vec<Channel>> = Vec::new();
    let mut stack: Vec<usize> = Vec::new();
    // set when the next `{` opens an End Site rather than a joint
    let mut pending: Option<(String, Option<usize>, bool)> = None;

    loop {
        let toks = lines.expect_tokens("joint definition")?;
        match toks[0].to_ascii_uppercase().as_str() {
            "ROOT" | "JOINT" => {
                let is_root = toks[0].eq_ignore_ascii_case("ROOT");
                if is_root != stack.is_empty() || (is_root && !joints.is_empty()) {
                    return Err(lines.err("misplaced ROOT/JOINT"));
                }
                let name = toks.get(1..).map(|t| t.join(" ")).unwrap_or_default();
                if name.is_empty() {
                    return Err(lines.err("joint without a name"));
                }
                pending = Some((name, stack.last().copied(), false));
            }
            "END" => {
                let parent = *stack.last().ok_or_else(|| lines.err("End Site outside a joint"))?;
                let name = format!("{}_End", joints[parent].name);
                pending = Some((name, Some(parent), true));
            }
            "{" => {
                let (name, parent, end) = pending.take().ok_or_else(|| lines.err("unexpected `{`"))?;
                let mut def = JointDef::new(name, parent, [0.0; 3]);
                def.end_site = end;
                joints.push(def);
                channels.push(Vec::new());
                stack.push(joints.len() - 1);
            }
            "}" => {
                stack.pop().ok_or_else(|| lines.err("unbalanced `}`"))?;
                if stack.is_empty() {
                    break;
                }
            }
            "OFFSET" => {
                let &cur = stack.last().ok_or_else(|| lines.err("OFFSET outside a joint"))?;
                if toks.len() != 4 {
                    return Err(lines.err("OFFSET needs three values"));
                }
                for c in 0..3 {
                    joints[cur].offset[c] = parse_f64(toks[c + 1], &lines)?;
                }
            }
            "CHANNELS" => {
                let &cur = stack.last().ok_or_else(|| lines.err("CHANNELS outside a joint"))?;
                if joints[cur].end_site {
                    return Err(lines.err("End Site cannot carry channels"));
                }
                let n: usize = toks
                    .get(1)
                    .and_then(|t| t.parse().ok())
                    .ok_or_else(|| lines.err("CHANNELS needs a count"))?;
                if toks.len() != n + 2 {
                    return Err(lines.err(format!("CHANNELS declares {n} channels but lists {}", toks.len() - 2)));
                }
                let parsed = toks[2..].iter().map(|t| parse_channel(t)).collect::<Result<Vec<_>>>()?;
                let rot_axes: Vec<usize> = parsed
                    .iter()
                    .filter_map(|c| match c {
                        Channel::Rotation(a) => Some(*a),
                        _ => None,
                    })
                    .collect();
                if let Ok(axes) = <[usize; 3]>::try_from(rot_axes.as_slice()) {
                    if let Some(order) = EulerOrder::from_axes(axes) {
                        joints[cur].euler_order = order;
                    }
                }
                channels[cur] = parsed;
            }
            other => return Err(lines.err(format!("unexpected token `{other}`"))),
        }
    }

    let motion = lines.expect_tokens("MOTION")?;
    if !motion[0].eq_ignore_ascii_case("MOTION") {
        return Err(lines.err("expected MOTION"));
    }
    let frames_line = lines.expect_tokens("Frames:")?;
    if frames_line.len() != 2 || !frames_line[0].eq_ignore_ascii_case("Frames:") {
        return Err(lines.err("expected `Frames: <n>`"));
    }
    let frames: usize = frames_line[1]
        .parse()
        .map_err(|_| lines.err("invalid frame count"))?;
    let time_line = lines.expect_tokens("Frame Time:")?;
    if time_line.len() != 3 || !time_line[0].eq_ignore_ascii_case("Frame") {
        return Err(lines.err("expected `Frame Time: <seconds>`"));
    }
    let frame_time = parse_f64(time_line[2], &lines)?;
    if frame_time <= 0.0 {
        return Err(lines.err("frame time must be positive"));
    }

    let width: usize = channels.iter().map(Vec::len).sum();
    let skeleton = Skeleton::new(joints)?;
    let mut rate = 1.0 / frame_time;
    if (rate - rate.round()).abs() < 1e-4 {
        rate = rate.round();
    }
    let mut clip = MotionClip::new(rate, skeleton.len());
    let mut rot = vec![Quaternion::IDENTITY; skeleton.len()];
    for f in 0..frames {
        let toks = lines
            .next_tokens()
            .ok_or_else(|| Error::parse(lines.line + 1, format!("expected {frames} motion rows, found {f}")))?;
        if toks.len() != width {
            return Err(lines.err(format!("motion row has {} values, expected {width}", toks.len())));
        }
        let mut k = 0;
        let mut root = skeleton.joint(0).offset;
        for (j, chans) in channels.iter().enumerate() {
            let mut q = Quaternion::IDENTITY;
            for ch in chans {
                let v = parse_f64(toks[k], &lines)?;
                k += 1;
                match *ch {
                    Channel::Position(a) if j == 0 => root[a] += v,
                    Channel::Position(_) => {}
                    Channel::Rotation(a) => q = q * Quaternion::about_axis(a, v.to_radians()),
                }
            }
            rot[j] = q;
        }
        clip.push_frame(root, &rot);
    }
    if let Some(toks) = lines.next_tokens() {
        return Err(lines.err(format!(
            "more motion rows than the declared {frames} (`{}`)",
            toks.join(" ")
        )));
    }
    clip.fix_antipodal();
    Ok((skeleton, clip))
}

/// Serialises a skeleton and clip as BVH. Joints are emitted depth first, so a
/// skeleton whose joint order is not depth-first comes back reordered.
pub fn write_bvh(skeleton: &Skeleton, clip: &MotionClip) -> String {
    let mut out = String::from("HIERARCHY\n");
    let mut order = Vec::new();
    write_joint(skeleton, 0, 0, &mut out, &mut order);
    let _ = writeln!(out, "MOTION");
    let _ = writeln!(out, "Frames: {}", clip.frames());
    let _ = writeln!(out, "Frame Time: {:.10}", 1.0 / clip.frame_rate);
    let root_offset = skeleton.joint(0).offset;
    for t in 0..clip.frames() {
        let frame = clip.frame(t);
        let mut row: Vec<String> = Vec::new();
        for &j in &order {
            if j == 0 {
                let p = clip.root_positions[t];
                for c in 0..3 {
                    row.push(format!("{:.9}", p[c] - root_offset[c]));
                }
            }
            let order = skeleton.joint(j).euler_order;
            let e = quat_to_euler(frame[j], order);
            row.extend(e.iter().map(|a| format!("{:.9}", a.to_degrees())));
        }
        let _ = writeln!(out, "{}", row.join(" "));
    }
    out
}

fn write_joint(skeleton: &Skeleton, j: usize, depth: usize, out: &mut String, order: &mut Vec<usize>) {
    let pad = "  ".repeat(depth);
    let def = skeleton.joint(j);
    let o = def.offset;
    if def.end_site {
        let _ = writeln!(out, "{pad}End Site");
        let _ = writeln!(out, "{pad}{{");
        let _ = writeln!(out, "{pad}  OFFSET {:.9} {:.9} {:.9}", o[0], o[1], o[2]);
        let _ = writeln!(out, "{pad}}}");
        return;
    }
    order.push(j);
    let kw = if j == 0 { "ROOT" } else { "JOINT" };
    let _ = writeln!(out, "{pad}{kw} {}", def.name);
    let _ = writeln!(out, "{pad}{{");
    let _ = writeln!(out, "{pad}  OFFSET {:.9} {:.9} {:.9}", o[0], o[1], o[2]);
    let axes: Vec<String> = def
        .euler_order
        .axes()
        .iter()
        .map(|a| format!("{}rotation", ["X", "Y", "Z"][*a]))
        .collect();
    if j == 0 {
        let _ = writeln!(out, "{pad}  CHANNELS 6 Xposition Yposition Zposition {}", axes.join(" "));
    } else {
        let _ = writeln!(out, "{pad}  CHANNELS 3 {}", axes.join(" "));
    }
    for c in skeleton.children(j) {
        write_joint(skeleton, c, depth + 1, out, order);
    }
    let _ = writeln!(out, "{pad}}}");
}
