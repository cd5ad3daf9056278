//! Binary dataset cache: `QNDS`, a version byte, the skeleton, then one block
//! per clip. All numbers are little endian.

use std::io::{Read, Write};

use super::{Dataset, MotionClip};
use crate::error::{Error, Result};
use crate::quat::Quaternion;
use crate::skeleton::{JointDef, Skeleton};

pub const CACHE_MAGIC: &[u8; 4] = b"QNDS";
pub const CACHE_VERSION: u8 = 1;

fn bad(msg: impl Into<String>) -> Error {
    Error::Parse {
        line: 0,
        msg: format!("dataset cache: {}", msg.into()),
    }
}

struct W<'a, T: Write>(&'a mut T);

impl<T: Write> W<'_, T> {
    fn u32(&mut self, v: usize) -> Result<()> {
        Ok(self.0.write_all(&(v as u32).to_le_bytes())?)
    }
    fn i32(&mut self, v: Option<usize>) -> Result<()> {
        Ok(self.0.write_all(&v.map_or(-1, |v| v as i32).to_le_bytes())?)
    }
    fn f64(&mut self, v: f64) -> Result<()> {
        Ok(self.0.write_all(&v.to_le_bytes())?)
    }
    fn str(&mut self, s: &str) -> Result<()> {
        self.u32(s.len())?;
        Ok(self.0.write_all(s.as_bytes())?)
    }
    /// Shape followed by row-major values.
    fn array(&mut self, shape: &[usize], data: impl Iterator<Item = f64>) -> Result<()> {
        self.u32(shape.len())?;
        for &d in shape {
            self.u32(d)?;
        }
        data.map(|x| self.f64(x)).collect()
    }
}

struct R<'a, T: Read>(&'a mut T);

impl<T: Read> R<'_, T> {
    fn bytes<const N: usize>(&mut self) -> Result<[u8; N]> {
        let mut b = [0u8; N];
        self.0.read_exact(&mut b).map_err(|_| bad("truncated"))?;
        Ok(b)
    }
    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.bytes()?) as usize)
    }
    fn i32(&mut self) -> Result<Option<usize>> {
        let v = i32::from_le_bytes(self.bytes()?);
        Ok((v >= 0).then_some(v as usize))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.bytes()?))
    }
    fn str(&mut self) -> Result<String> {
        let n = self.u32()?;
        let mut b = vec![0u8; n];
        self.0.read_exact(&mut b).map_err(|_| bad("truncated"))?;
        String::from_utf8(b).map_err(|_| bad("invalid utf-8"))
    }
    fn array(&mut self, shape: &[usize]) -> Result<Vec<f64>> {
        let nd = self.u32()?;
        let got: Vec<usize> = (0..nd).map(|_| self.u32()).collect::<Result<_>>()?;
        if got != shape {
            return Err(bad(format!("array shape {got:?}, expected {shape:?}")));
        }
        (0..shape.iter().product()).map(|_| self.f64()).collect()
    }
}

pub fn write_cache(w: &mut impl Write, ds: &Dataset) -> Result<()> {
    w.write_all(CACHE_MAGIC)?;
    w.write_all(&[CACHE_VERSION])?;
    let mut w = W(w);
    let s = &ds.skeleton;
    w.u32(s.len())?;
    w.f64(s.scale())?;
    for j in s.joints() {
        w.str(&j.name)?;
        w.i32(j.parent)?;
        w.i32(j.mirror_partner)?;
        w.str(j.euler_order.as_str())?;
        w.u32(usize::from(j.end_site))?;
        j.offset.iter().try_for_each(|&x| w.f64(x))?;
    }
    w.u32(ds.train.len() + ds.test.len())?;
    for (split, clip) in ds.train.iter().map(|c| (0, c)).chain(ds.test.iter().map(|c| (1, c))) {
        w.u32(split)?;
        w.str(&clip.subject)?;
        w.str(&clip.action)?;
        w.f64(clip.frame_rate)?;
        let n = clip.frames();
        w.array(&[n, 3], clip.root_positions.iter().flatten().copied())?;
        w.array(&[n, clip.joints, 4], clip.rotations.iter().flat_map(|q| q.to_array()))?;
    }
    Ok(())
}

pub fn read_cache(r: &mut impl Read) -> Result<Dataset> {
    let mut r = R(r);
    if &r.bytes::<4>()? != CACHE_MAGIC {
        return Err(bad("bad magic"));
    }
    let [version] = r.bytes::<1>()?;
    if version != CACHE_VERSION {
        return Err(bad(format!("unsupported version {version}")));
    }
    let n = r.u32()?;
    let scale = r.f64()?;
    let mut joints = Vec::with_capacity(n);
    for _ in 0..n {
        let name = r.str()?;
        let parent = r.i32()?;
        let mirror = r.i32()?;
        let order = r.str()?.parse()?;
        let end = r.u32()? != 0;
        let offset = [r.f64()?, r.f64()?, r.f64()?];
        let mut def = JointDef::new(name, parent, offset).with_order(order);
        def.mirror_partner = mirror;
        def.end_site = end;
        joints.push(def);
    }
    let skeleton = Skeleton::from_parts(joints, scale)?;
    let mut ds = Dataset {
        skeleton,
        train: Vec::new(),
        test: Vec::new(),
    };
    for _ in 0..r.u32()? {
        let split = r.u32()?;
        let subject = r.str()?;
        let action = r.str()?;
        let mut clip = MotionClip::new(r.f64()?, n).with_tags(subject, action);
        let frames = {
            let nd = r.u32()?;
            if nd != 2 {
                return Err(bad("root positions must be 2-d"));
            }
            let (f, c) = (r.u32()?, r.u32()?);
            if c != 3 {
                return Err(bad("root positions must have 3 columns"));
            }
            f
        };
        let pos: Vec<f64> = (0..frames * 3).map(|_| r.f64()).collect::<Result<_>>()?;
        clip.root_positions = pos.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect();
        let rot = r.array(&[frames, n, 4])?;
        clip.rotations = rot.chunks_exact(4).map(Quaternion::from_slice).collect();
        match split {
            0 => ds.train.push(clip),
            1 => ds.test.push(clip),
            _ => return Err(bad(format!("unknown split {split}"))),
        }
    }
    Ok(ds)
}
