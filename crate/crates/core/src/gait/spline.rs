use crate::error::{Error, Result};

/// Point or direction on the ground plane, stored as `(x, z)`.
pub type Vec2 = [f64; 2];

const EPS: f64 = 1e-9;

pub fn dist2(a: Vec2, b: Vec2) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

/// Heading angle of a ground-plane direction; 0 along +z, π/2 along +x.
pub fn heading(v: Vec2) -> f64 {
    v[0].atan2(v[1])
}

pub fn from_heading(angle: f64) -> Vec2 {
    [angle.sin(), angle.cos()]
}

/// Signed angle turning `a` into `b`, positive towards +x from +z.
pub fn turn_angle(a: Vec2, b: Vec2) -> f64 {
    let cross = a[1] * b[0] - a[0] * b[1];
    let dot = a[0] * b[0] + a[1] * b[1];
    cross.atan2(dot)
}

pub fn polyline_length(points: &[Vec2]) -> f64 {
    points.windows(2).map(|w| dist2(w[0], w[1])).sum()
}

#[derive(Clone, Debug, PartialEq)]
pub struct Segment {
    pub start: Vec2,
    pub tangent: Vec2,
    pub length: f64,
    /// Turn angle to the next segment.
    pub curvature: f64,
}

/// Piecewise linear spline with equal-length segments.
#[derive(Clone, Debug, PartialEq)]
pub struct TrajectorySpline {
    pub segments: Vec<Segment>,
    pub segment_length: f64,
    pub closed: bool,
}

/// Resamples `points` into chords of exactly `segment_length`, walking the
/// polyline from its start. Any remainder shorter than one chord is dropped.
/// A polyline ending on its start point is treated as closed.
pub fn fit_spline(points: &[Vec2], segment_length: f64) -> Result<TrajectorySpline> {
    if !(segment_length > 0.0) {
        return Err(Error::DegeneratePath(format!("segment length {segment_length}")));
    }
    let total = polyline_length(points);
    if points.len() < 2 || total <= 0.0 {
        return Err(Error::DegeneratePath("trajectory has zero length".into()));
    }
    let nodes = resample(points, segment_length);
    if nodes.len() < 2 {
        return Err(Error::DegeneratePath(format!(
            "trajectory length {total} is shorter than one segment ({segment_length})"
        )));
    }
    let closed = points.len() > 2 && dist2(points[0], points[points.len() - 1]) <= EPS * total.max(1.0);
    let mut segments: Vec<Segment> = nodes
        .windows(2)
        .map(|w| {
            let d = [w[1][0] - w[0][0], w[1][1] - w[0][1]];
            let l = (d[0] * d[0] + d[1] * d[1]).sqrt();
            Segment {
                start: w[0],
                tangent: [d[0] / l, d[1] / l],
                length: segment_length,
                curvature: 0.0,
            }
        })
        .collect();
    let n = segments.len();
    for i in 0..n - 1 {
        segments[i].curvature = turn_angle(segments[i].tangent, segments[i + 1].tangent);
    }
    if closed && n > 1 {
        segments[n - 1].curvature = turn_angle(segments[n - 1].tangent, segments[0].tangent);
    }
    Ok(TrajectorySpline {
        segments,
        segment_length,
        closed,
    })
}

fn resample(points: &[Vec2], len: f64) -> Vec<Vec2> {
    let mut nodes = vec![points[0]];
    let mut cur = points[0];
    // Position on the polyline: segment index and the point reached on it.
    let (mut k, mut from) = (0usize, points[0]);
    'outer: loop {
        while k + 1 < points.len() {
            let b = points[k + 1];
            if dist2(b, cur) >= len - EPS * len {
                let d = [b[0] - from[0], b[1] - from[1]];
                let f = [from[0] - cur[0], from[1] - cur[1]];
                let dd = d[0] * d[0] + d[1] * d[1];
                let fd = f[0] * d[0] + f[1] * d[1];
                let ff = f[0] * f[0] + f[1] * f[1];
                let disc = (fd * fd - dd * (ff - len * len)).max(0.0);
                let s = ((-fd + disc.sqrt()) / dd).clamp(0.0, 1.0);
                let p = [from[0] + s * d[0], from[1] + s * d[1]];
                nodes.push(p);
                cur = p;
                from = p;
                continue 'outer;
            }
            k += 1;
            from = points[k];
        }
        break;
    }
    nodes
}

impl TrajectorySpline {
    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    pub fn total_length(&self) -> f64 {
        self.segments.iter().map(|s| s.length).sum()
    }

    pub fn curvatures(&self) -> Vec<f64> {
        self.segments.iter().map(|s| s.curvature).collect()
    }

    /// Index of the segment containing arc length `s`, clamped to the spline.
    pub fn segment_at(&self, s: f64) -> usize {
        let i = (s / self.segment_length).floor();
        if i <= 0.0 {
            0
        } else {
            (i as usize).min(self.len() - 1)
        }
    }

    pub fn point_at(&self, s: f64) -> Vec2 {
        let s = s.clamp(0.0, self.total_length());
        let i = self.segment_at(s);
        let seg = &self.segments[i];
        let u = s - i as f64 * self.segment_length;
        [seg.start[0] + u * seg.tangent[0], seg.start[1] + u * seg.tangent[1]]
    }

    pub fn tangent_at(&self, s: f64) -> Vec2 {
        self.segments[self.segment_at(s)].tangent
    }

    /// Segment start points followed by the end point.
    pub fn nodes(&self) -> Vec<Vec2> {
        let mut out: Vec<Vec2> = self.segments.iter().map(|s| s.start).collect();
        out.push(self.point_at(self.total_length()));
        out
    }

    /// Distance from `p` to the nearest point of the spline, and the arc
    /// length of that point.
    pub fn project(&self, p: Vec2) -> (f64, f64) {
        let mut best = (f64::INFINITY, 0.0);
        for (i, seg) in self.segments.iter().enumerate() {
            let rel = [p[0] - seg.start[0], p[1] - seg.start[1]];
            let u = (rel[0] * seg.tangent[0] + rel[1] * seg.tangent[1]).clamp(0.0, seg.length);
            let q = [seg.start[0] + u * seg.tangent[0], seg.start[1] + u * seg.tangent[1]];
            let d = dist2(p, q);
            if d < best.0 {
                best = (d, i as f64 * self.segment_length + u);
            }
        }
        best
    }

    pub fn distance_to(&self, p: Vec2) -> f64 {
        self.project(p).0
    }
}

/// Reads a trajectory file: one `x z` ground-plane point per line; `#`
/// starts a comment.
pub fn parse_trajectory(text: &str) -> Result<Vec<Vec2>> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let v: Vec<f64> = line
            .split(|c: char| c.is_whitespace() || c == ',')
            .filter(|s| !s.is_empty())
            .map(|s| s.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::parse(n + 1, e.to_string()))?;
        if v.len() != 2 {
            return Err(Error::parse(n + 1, format!("expected 2 values, found {}", v.len())));
        }
        out.push([v[0], v[1]]);
    }
    Ok(out)
}

pub fn write_trajectory(points: &[Vec2]) -> String {
    points.iter().map(|p| format!("{} {}\n", p[0], p[1])).collect()
}
