use super::MotionClip;
use crate::error::{Error, Result};
use crate::quat::{expmap_to_quat, Quaternion};
use crate::skeleton::Skeleton;

/// Parses exponential-map text: one frame per line, comma or whitespace
/// separated, either `3 + 3·joints` values (root translation first) or
/// `3·joints` values (no translation).
pub fn parse_expmap_text(text: &str, skeleton: &Skeleton, frame_rate: f64) -> Result<MotionClip> {
    parse_expmap_text_with(text, skeleton, frame_rate, true)
}

/// As [`parse_expmap_text`], optionally leaving antipodal discontinuities in
/// place.
pub fn parse_expmap_text_with(text: &str, skeleton: &Skeleton, frame_rate: f64, fix_antipodal: bool) -> Result<MotionClip> {
    let j = skeleton.len();
    let mut clip = MotionClip::new(frame_rate, j);
    let mut width = None;
    let mut rot = vec![Quaternion::IDENTITY; j];
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let vals: Vec<f64> = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|s| !s.is_empty())
            .map(|s| s.parse::<f64>().map_err(|e| Error::parse(n + 1, format!("`{s}`: {e}"))))
            .collect::<Result<_>>()?;
        match width {
            None => {
                if vals.len() != 3 * j && vals.len() != 3 * j + 3 {
                    return Err(Error::parse(
                        n + 1,
                        format!("{} values, expected {} or {}", vals.len(), 3 * j, 3 * j + 3),
                    ));
                }
                width = Some(vals.len());
            }
            Some(w) if w != vals.len() => {
                return Err(Error::InconsistentWidth {
                    line: n + 1,
                    expected: w,
                    found: vals.len(),
                })
            }
            _ => {}
        }
        let (root, maps) = if vals.len() == 3 * j + 3 {
            ([vals[0], vals[1], vals[2]], &vals[3..])
        } else {
            ([0.0; 3], &vals[..])
        };
        for (k, r) in rot.iter_mut().enumerate() {
            *r = expmap_to_quat([maps[3 * k], maps[3 * k + 1], maps[3 * k + 2]]);
        }
        clip.push_frame(root, &rot);
    }
    if fix_antipodal {
        clip.fix_antipodal();
    }
    Ok(clip)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::skeleton::tests::chain3;
    use std::f64::consts::PI;

    #[test]
    fn basic_lines() {
        let s = chain3();
        let c = parse_expmap_text("0 0 0 0 0 0 0 0 0 0 0 0\n", &s, 50.0).unwrap();
        assert_eq!(c.frames(), 1);
        assert!(c.frame(0).iter().all(|q| *q == Quaternion::IDENTITY));
        let c = parse_expmap_text(&format!("{PI},0,0,0,0,0,0,0,0"), &s, 50.0).unwrap();
        let q = c.frame(0)[0];
        assert!((q.w).abs() < 1e-15 && (q.x - 1.0).abs() < 1e-15);
    }

    #[test]
    fn width_errors() {
        let s = chain3();
        assert!(matches!(parse_expmap_text("1 2 3", &s, 50.0), Err(Error::Parse { line: 1, .. })));
        let text = "0 0 0 0 0 0 0 0 0\n0 0 0 0 0 0 0 0 0 0 0 0\n";
        assert!(matches!(
            parse_expmap_text(text, &s, 50.0),
            Err(Error::InconsistentWidth { line: 2, expected: 9, found: 12 })
        ));
        assert!(matches!(parse_expmap_text("0 0 x 0 0 0 0 0 0", &s, 50.0), Err(Error::Parse { line: 1, .. })));
    }
}
