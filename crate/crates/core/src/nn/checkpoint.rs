//! Container format: a UTF-8 header of `key = value` lines terminated by a
//! line `end`, followed by named little-endian fp64 tensors.
//!
//! ```text
//! qmotion-checkpoint 1
//! kind = pose
//! epoch = 12
//! end
//! <u32 count> { <u32 name len> <name> <u32 ndim> <u64 dim>* <f64>* }*
//! ```

use std::fmt::Display;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;

use rand_chacha::ChaCha8Rng;

use super::{Adam, ParamStore, Tensor};
use crate::error::{Error, Result};

const MAGIC: &str = "qmotion-checkpoint";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Checkpoint {
    header: Vec<(String, String)>,
    tensors: Vec<(String, Tensor)>,
}

fn ck(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

impl Checkpoint {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(&mut self, key: &str, value: impl Display) {
        let value = value.to_string();
        assert!(!key.contains('=') && !value.contains('\n'), "header entries are single-line");
        match self.header.iter_mut().find(|(k, _)| k == key) {
            Some(entry) => entry.1 = value,
            None => self.header.push((key.to_string(), value)),
        }
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.header.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn require(&self, key: &str) -> Result<&str> {
        self.get(key).ok_or_else(|| ck(format!("header key `{key}` missing")))
    }

    pub fn parse<T: FromStr>(&self, key: &str) -> Result<T> {
        let raw = self.require(key)?;
        raw.parse().map_err(|_| ck(format!("header key `{key}` has bad value `{raw}`")))
    }

    pub fn header(&self) -> &[(String, String)] {
        &self.header
    }

    pub fn put_tensor(&mut self, name: &str, t: Tensor) {
        match self.tensors.iter_mut().find(|(n, _)| n == name) {
            Some(entry) => entry.1 = t,
            None => self.tensors.push((name.to_string(), t)),
        }
    }

    pub fn tensor(&self, name: &str) -> Result<&Tensor> {
        self.tensors
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t)
            .ok_or_else(|| ck(format!("tensor `{name}` missing")))
    }

    pub fn tensor_names(&self) -> impl Iterator<Item = &str> {
        self.tensors.iter().map(|(n, _)| n.as_str())
    }

    pub fn put_params(&mut self, prefix: &str, store: &ParamStore) {
        for p in store.iter() {
            self.put_tensor(&format!("{prefix}{}", p.name), p.value.clone());
        }
    }

    /// Overwrites every parameter of `store` from the blob of the same name.
    pub fn load_params(&self, prefix: &str, store: &mut ParamStore) -> Result<()> {
        for p in store.iter_mut() {
            let t = self.tensor(&format!("{prefix}{}", p.name))?;
            if t.shape() != p.value.shape() {
                return Err(ck(format!(
                    "tensor `{}` has shape {:?}, model expects {:?}",
                    p.name,
                    t.shape(),
                    p.value.shape()
                )));
            }
            p.value = t.clone();
        }
        Ok(())
    }

    pub fn put_adam(&mut self, prefix: &str, store: &ParamStore, adam: &Adam) {
        self.set(&format!("{prefix}adam_t"), adam.t);
        for (i, p) in store.iter().enumerate() {
            let shape = p.value.shape().to_vec();
            let m = Tensor::new(shape.clone(), adam.m[i].clone()).expect("moment shape");
            let v = Tensor::new(shape, adam.v[i].clone()).expect("moment shape");
            self.put_tensor(&format!("{prefix}adam_m.{}", p.name), m);
            self.put_tensor(&format!("{prefix}adam_v.{}", p.name), v);
        }
    }

    pub fn load_adam(&self, prefix: &str, store: &ParamStore) -> Result<Adam> {
        let mut adam = Adam::new(store);
        adam.t = self.parse(&format!("{prefix}adam_t"))?;
        for (i, p) in store.iter().enumerate() {
            adam.m[i] = self.tensor(&format!("{prefix}adam_m.{}", p.name))?.data().to_vec();
            adam.v[i] = self.tensor(&format!("{prefix}adam_v.{}", p.name))?.data().to_vec();
        }
        Ok(adam)
    }

    pub fn put_rng(&mut self, rng: &ChaCha8Rng) {
        let seed: String = rng.get_seed().iter().map(|b| format!("{b:02x}")).collect();
        self.set("rng_seed", seed);
        self.set("rng_stream", rng.get_stream());
        self.set("rng_word_pos", rng.get_word_pos());
    }

    pub fn load_rng(&self) -> Result<ChaCha8Rng> {
        use rand::SeedableRng;
        let hex = self.require("rng_seed")?;
        if hex.len() != 64 {
            return Err(ck("rng_seed must be 64 hex digits"));
        }
        let mut seed = [0u8; 32];
        for (i, b) in seed.iter_mut().enumerate() {
            *b = u8::from_str_radix(&hex[2 * i..2 * i + 2], 16).map_err(|_| ck("rng_seed is not hex"))?;
        }
        let mut rng = ChaCha8Rng::from_seed(seed);
        rng.set_stream(self.parse("rng_stream")?);
        rng.set_word_pos(self.parse("rng_word_pos")?);
        Ok(rng)
    }

    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        writeln!(w, "{MAGIC} {FORMAT_VERSION}")?;
        for (k, v) in &self.header {
            writeln!(w, "{k} = {v}")?;
        }
        writeln!(w, "end")?;
        w.write_all(&(self.tensors.len() as u32).to_le_bytes())?;
        for (name, t) in &self.tensors {
            w.write_all(&(name.len() as u32).to_le_bytes())?;
            w.write_all(name.as_bytes())?;
            w.write_all(&(t.shape().len() as u32).to_le_bytes())?;
            for d in t.shape() {
                w.write_all(&(*d as u64).to_le_bytes())?;
            }
            for x in t.data() {
                w.write_all(&x.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_from(r: &mut impl BufRead) -> Result<Self> {
        let mut line = String::new();
        r.read_line(&mut line)?;
        let version = line
            .trim()
            .strip_prefix(MAGIC)
            .and_then(|v| v.trim().parse::<u32>().ok())
            .ok_or_else(|| ck("not a checkpoint file"))?;
        if version != FORMAT_VERSION {
            return Err(ck(format!("unsupported checkpoint version {version}")));
        }
        let mut ckpt = Checkpoint::new();
        loop {
            line.clear();
            if r.read_line(&mut line)? == 0 {
                return Err(ck("header not terminated"));
            }
            let l = line.trim_end_matches(['\n', '\r']);
            if l == "end" {
                break;
            }
            let (k, v) = l.split_once(" = ").ok_or_else(|| ck(format!("bad header line `{l}`")))?;
            ckpt.header.push((k.to_string(), v.to_string()));
        }
        let count = read_u32(r)?;
        for _ in 0..count {
            let len = read_u32(r)? as usize;
            let mut name = vec![0u8; len];
            r.read_exact(&mut name)?;
            let name = String::from_utf8(name).map_err(|_| ck("tensor name is not UTF-8"))?;
            let ndim = read_u32(r)? as usize;
            let mut shape = Vec::with_capacity(ndim);
            for _ in 0..ndim {
                let mut b = [0u8; 8];
                r.read_exact(&mut b)?;
                shape.push(u64::from_le_bytes(b) as usize);
            }
            let n: usize = shape.iter().product();
            let mut data = Vec::with_capacity(n);
            let mut b = [0u8; 8];
            for _ in 0..n {
                r.read_exact(&mut b)?;
                data.push(f64::from_le_bytes(b));
            }
            ckpt.tensors.push((name, Tensor::new(shape, data)?));
        }
        Ok(ckpt)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = File::open(path).map_err(|e| ck(format!("{}: {e}", path.display())))?;
        Self::read_from(&mut BufReader::new(f))
    }
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}
