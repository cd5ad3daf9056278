//! Recurrent pose network over quaternions with optional locomotion inputs,
//! scheduled-sampling training, free-running prediction and the simple
//! short-term baselines.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::MotionClip;
use crate::error::{Error, Result};
use crate::gait::{compute_gait_features, ControlFeatures, GaitConfig, TranslationFeatures};
use crate::losses::{euler_loss_node, positional_loss_node, LossConfig};
use crate::nn::{
    normalization_layer, Activation, Adam, Checkpoint, Dense, DenseLayerConfig, Graph, Gru, OptimizerConfig,
    ParamStore, Tensor, Var, LEAK,
};
use crate::quat::{euler_to_quat, quat_to_euler, wrap_angle, EulerOrder, Quaternion};
use crate::skeleton::{forward_kinematics_into, JointDef, Skeleton};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum PoseMode {
    Absolute,
    #[default]
    Velocity,
}

impl fmt::Display for PoseMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PoseMode::Absolute => "absolute",
            PoseMode::Velocity => "velocity",
        })
    }
}

impl FromStr for PoseMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "absolute" => Ok(PoseMode::Absolute),
            "velocity" => Ok(PoseMode::Velocity),
            _ => Err(Error::Config(format!("mode must be absolute or velocity, got `{s}`"))),
        }
    }
}

/// Training objective on rotations.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum LossKind {
    #[default]
    Positional,
    Euler,
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LossKind::Positional => "positional",
            LossKind::Euler => "euler",
        })
    }
}

impl FromStr for LossKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "positional" | "position" | "fk" => Ok(LossKind::Positional),
            "euler" | "angle" => Ok(LossKind::Euler),
            _ => Err(Error::Config(format!("loss must be positional or euler, got `{s}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PoseNetConfig {
    pub mode: PoseMode,
    pub joints: usize,
    pub hidden: usize,
    pub layers: usize,
    pub include_controls: bool,
    pub include_translations: bool,
    /// Conditioning frames.
    pub n: usize,
    /// Predicted frames.
    pub k: usize,
    /// Width of the two control-embedding layers.
    pub control_units: usize,
}

impl PoseNetConfig {
    pub fn new(joints: usize) -> Self {
        Self {
            mode: PoseMode::Velocity,
            joints,
            hidden: 1000,
            layers: 2,
            include_controls: false,
            include_translations: false,
            n: 50,
            k: 10,
            control_units: 30,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.k == 0 {
            return Err(Error::Config("n and k must be positive".into()));
        }
        if self.joints == 0 || self.hidden == 0 || self.layers == 0 {
            return Err(Error::Config("joints, hidden and layers must be positive".into()));
        }
        Ok(())
    }

    pub fn input_size(&self) -> usize {
        4 * self.joints
            + if self.include_translations { TranslationFeatures::SIZE } else { 0 }
            + if self.include_controls { self.control_units } else { 0 }
    }
}

/// Probability of feeding ground truth, `p(e) = p0·βᵉ`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScheduledSamplingState {
    pub p: f64,
    pub beta: f64,
    p0: f64,
}

impl ScheduledSamplingState {
    pub fn new(beta: f64) -> Self {
        Self { p: 1.0, beta, p0: 1.0 }
    }

    /// Constant probability, e.g. 1 for pure teacher forcing.
    pub fn pinned(p: f64) -> Self {
        Self { p, beta: 1.0, p0: p }
    }

    pub fn at_epoch(&self, epoch: usize) -> f64 {
        self.p0 * self.beta.powi(epoch as i32)
    }

    pub fn set_epoch(&mut self, epoch: usize) {
        self.p = self.at_epoch(epoch);
    }
}

impl Default for ScheduledSamplingState {
    fn default() -> Self {
        Self::new(0.995)
    }
}

/// Training sequence in network layout, with FK targets precomputed.
#[derive(Clone, Debug, PartialEq)]
pub struct PoseSequence {
    pub joints: usize,
    /// `frames × 4J`.
    pub rotations: Vec<f64>,
    /// `frames × 2`: root height and spline offset.
    pub translations: Option<Vec<f64>>,
    /// `frames × 6`.
    pub controls: Option<Vec<f64>>,
    /// `frames × 3J`, root at the origin.
    pub positions: Vec<f64>,
    /// `frames × 3J` in each joint's Euler order.
    pub euler: Vec<f64>,
    pub subject: String,
    pub action: String,
}

impl PoseSequence {
    pub fn from_clip(skeleton: &Skeleton, clip: &MotionClip) -> Self {
        let j = clip.joints;
        let mut positions = Vec::with_capacity(clip.frames() * 3 * j);
        let mut euler = Vec::with_capacity(clip.frames() * 3 * j);
        let mut buf = vec![[0.0; 3]; j];
        for t in 0..clip.frames() {
            forward_kinematics_into(skeleton, clip.frame(t), [0.0; 3], &mut buf);
            positions.extend(buf.iter().flatten());
            for (q, def) in clip.frame(t).iter().zip(skeleton.joints()) {
                euler.extend(quat_to_euler(*q, def.euler_order));
            }
        }
        Self {
            joints: j,
            rotations: clip.rotations.iter().flat_map(|q| q.to_array()).collect(),
            translations: None,
            controls: None,
            positions,
            euler,
            subject: clip.subject.clone(),
            action: clip.action.clone(),
        }
    }

    /// Adds the control and translation blocks from the clip's gait features.
    pub fn locomotion(skeleton: &Skeleton, clip: &MotionClip, gait: &GaitConfig) -> Result<Self> {
        let mut s = Self::from_clip(skeleton, clip);
        let g = compute_gait_features(skeleton, clip, gait)?;
        s.controls = Some(g.frames.iter().flat_map(|f| f.controls().to_array()).collect());
        s.translations = Some(g.frames.iter().flat_map(|f| f.translations().to_array()).collect());
        Ok(s)
    }

    pub fn frames(&self) -> usize {
        self.rotations.len() / (4 * self.joints)
    }

    /// First `frames` frames (all of them if the sequence is shorter).
    pub fn prefix(&self, frames: usize) -> Self {
        let f = frames.min(self.frames());
        let j = self.joints;
        Self {
            joints: j,
            rotations: self.rotations[..f * 4 * j].to_vec(),
            translations: self.translations.as_ref().map(|t| t[..f * 2].to_vec()),
            controls: self.controls.as_ref().map(|c| c[..f * 6].to_vec()),
            positions: self.positions[..f * 3 * j].to_vec(),
            euler: self.euler[..f * 3 * j].to_vec(),
            subject: self.subject.clone(),
            action: self.action.clone(),
        }
    }

    pub fn rotation_row(&self, t: usize) -> &[f64] {
        let w = 4 * self.joints;
        &self.rotations[t * w..(t + 1) * w]
    }

    pub fn quaternions(&self, t: usize) -> Vec<Quaternion> {
        self.rotation_row(t).chunks_exact(4).map(Quaternion::from_slice).collect()
    }

    fn row(data: &[f64], width: usize, t: usize) -> &[f64] {
        &data[t * width..(t + 1) * width]
    }

    pub fn translation_row(&self, t: usize) -> Option<&[f64]> {
        self.translations.as_deref().map(|d| Self::row(d, TranslationFeatures::SIZE, t))
    }

    /// Controls of frame `t`, clamped to the last frame.
    pub fn control_row(&self, t: usize) -> Option<&[f64]> {
        let t = t.min(self.frames() - 1);
        self.controls.as_deref().map(|d| Self::row(d, ControlFeatures::SIZE, t))
    }

    pub fn position_row(&self, t: usize) -> &[f64] {
        Self::row(&self.positions, 3 * self.joints, t)
    }

    pub fn euler_row(&self, t: usize) -> &[f64] {
        Self::row(&self.euler, 3 * self.joints, t)
    }
}

/// Recurrent state of a single inference session.
#[derive(Clone, Debug, PartialEq)]
pub struct PoseState {
    /// One `B×H` tensor per GRU layer.
    pub hidden: Vec<Tensor>,
}

/// One step's outputs on a graph.
struct StepVars {
    rot: Var,
    raw: Var,
    trans: Option<Var>,
    hidden: Vec<Var>,
}

/// Values of one batched inference step.
#[derive(Clone, Debug, PartialEq)]
pub struct StepOutput {
    /// `B×4J`, unit quaternions.
    pub rotations: Tensor,
    /// `B×4J` before normalization.
    pub raw: Tensor,
    pub translations: Option<Tensor>,
    pub state: PoseState,
}

#[derive(Clone, Debug)]
pub struct PoseNet {
    pub config: PoseNetConfig,
    pub skeleton: Arc<Skeleton>,
    pub store: ParamStore,
    grus: Vec<Gru>,
    head: Dense,
    trans_head: Option<Dense>,
    controls: Option<(Dense, Dense)>,
    /// Frames used to start generation: rotations, translations, controls.
    pub warmup: Option<PoseSequence>,
}

impl PoseNet {
    pub fn new(config: PoseNetConfig, skeleton: Arc<Skeleton>, seed: u64) -> Result<Self> {
        config.validate()?;
        if skeleton.len() != config.joints {
            return Err(Error::ConfigMismatch(format!(
                "config has {} joints, skeleton {}",
                config.joints,
                skeleton.len()
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let dense = |store: &mut ParamStore, name: &str, i: usize, o: usize, a: Activation, rng: &mut ChaCha8Rng| {
            let cfg = DenseLayerConfig {
                in_size: i,
                out_size: o,
                activation: a,
            };
            Dense::new(store, name, cfg, rng)
        };
        let controls = config.include_controls.then(|| {
            let u = config.control_units;
            let a = Activation::LeakyRelu(LEAK);
            let d1 = dense(&mut store, "pose.ctrl1", ControlFeatures::SIZE, u, a, &mut rng);
            let d2 = dense(&mut store, "pose.ctrl2", u, u, a, &mut rng);
            (d1, d2)
        });
        let mut grus = Vec::with_capacity(config.layers);
        let mut width = config.input_size();
        for l in 0..config.layers {
            grus.push(Gru::new(&mut store, &format!("pose.gru{l}"), width, config.hidden, &mut rng));
            width = config.hidden;
        }
        let head = dense(&mut store, "pose.head", width, 4 * config.joints, Activation::Linear, &mut rng);
        let trans_head = config.include_translations.then(|| {
            dense(&mut store, "pose.trans", width, TranslationFeatures::SIZE, Activation::Linear, &mut rng)
        });
        Ok(Self {
            config,
            skeleton,
            store,
            grus,
            head,
            trans_head,
            controls,
            warmup: None,
        })
    }

    /// Zeroes the rotation head, so velocity mode emits identity deltas.
    pub fn zero_output_head(&mut self) {
        for id in [self.head.w, self.head.b] {
            self.store.get_mut(id).value.data_mut().fill(0.0);
        }
    }

    fn check_inputs(&self, trans: bool, ctrl: bool) -> Result<()> {
        let c = &self.config;
        if trans != c.include_translations || ctrl != c.include_controls {
            return Err(Error::ConfigMismatch(format!(
                "model expects translations={} controls={}, got translations={trans} controls={ctrl}",
                c.include_translations, c.include_controls
            )));
        }
        Ok(())
    }

    fn step_graph(&self, g: &mut Graph, store: &ParamStore, h: &[Var], rot: Var, trans: Option<Var>, ctrl: Option<Var>) -> Result<StepVars> {
        self.check_inputs(trans.is_some(), ctrl.is_some())?;
        let mut parts = vec![rot];
        parts.extend(trans);
        if let (Some(c), Some((d1, d2))) = (ctrl, &self.controls) {
            let e = d1.forward(g, store, c);
            parts.push(d2.forward(g, store, e));
        }
        let mut x = if parts.len() == 1 { rot } else { g.concat_cols(&parts) };
        let mut hidden = Vec::with_capacity(h.len());
        for (gru, &hl) in self.grus.iter().zip(h) {
            x = gru.step(g, store, x, hl)?;
            hidden.push(x);
        }
        let mut raw = self.head.forward(g, store, x);
        if self.config.mode == PoseMode::Velocity {
            let ident: Vec<f64> = (0..self.config.joints).flat_map(|_| [1.0, 0.0, 0.0, 0.0]).collect();
            let ident = g.constant(Tensor::row(ident));
            raw = g.add_bias(raw, ident);
        }
        let (q, raw) = normalization_layer(g, raw)?;
        let rot = match self.config.mode {
            PoseMode::Absolute => q,
            PoseMode::Velocity => g.quat_mul(rot, q),
        };
        let rot = self.pin_end_sites(g, rot);
        let trans = self.trans_head.as_ref().map(|d| d.forward(g, store, x));
        Ok(StepVars { rot, raw, trans, hidden })
    }

    /// End sites carry no rotation channels; their outputs are held at
    /// identity.
    fn pin_end_sites(&self, g: &mut Graph, rot: Var) -> Var {
        let ends: Vec<bool> = self.skeleton.joints().iter().map(|j| j.end_site).collect();
        if !ends.contains(&true) {
            return rot;
        }
        let keep: Vec<f64> = ends.iter().flat_map(|&e| [if e { 0.0 } else { 1.0 }; 4]).collect();
        let fill: Vec<f64> = ends
            .iter()
            .flat_map(|&e| if e { [1.0, 0.0, 0.0, 0.0] } else { [0.0; 4] })
            .collect();
        let rows = g.value(rot).rows();
        let keep = g.constant(Tensor::row(keep));
        let keep = g.broadcast_rows(keep, rows);
        let fill = g.constant(Tensor::row(fill));
        let masked = g.mul(rot, keep);
        g.add_bias(masked, fill)
    }

    pub fn initial_state(&self, batch: usize) -> PoseState {
        let hidden = self
            .grus
            .iter()
            .map(|gru| {
                let h0 = self.store.value(gru.h0).data();
                Tensor::matrix(batch, h0.len(), (0..batch).flat_map(|_| h0.iter().copied()).collect())
            })
            .collect();
        PoseState { hidden }
    }

    /// One batched step without gradient bookkeeping beyond a throwaway graph.
    pub fn step_batch(&self, state: &PoseState, rot: Tensor, trans: Option<Tensor>, ctrl: Option<Tensor>) -> Result<StepOutput> {
        let mut g = Graph::new();
        let h: Vec<Var> = state.hidden.iter().map(|t| g.constant(t.clone())).collect();
        let rot = g.constant(rot);
        let trans = trans.map(|t| g.constant(t));
        let ctrl = ctrl.map(|t| g.constant(t));
        let out = self.step_graph(&mut g, &self.store, &h, rot, trans, ctrl)?;
        Ok(StepOutput {
            rotations: g.value(out.rot).clone(),
            raw: g.value(out.raw).clone(),
            translations: out.trans.map(|v| g.value(v).clone()),
            state: PoseState {
                hidden: out.hidden.iter().map(|v| g.value(*v).clone()).collect(),
            },
        })
    }

    /// Single-pose step: previous rotations (and translations/controls when the
    /// model uses them) to the next pose and state.
    pub fn pose_step(
        &self,
        state: &PoseState,
        prev_rotations: &[Quaternion],
        prev_translations: Option<[f64; 2]>,
        controls: Option<[f64; 6]>,
    ) -> Result<(Vec<Quaternion>, Option<[f64; 2]>, PoseState)> {
        if prev_rotations.len() != self.config.joints {
            return Err(Error::ShapeMismatch(format!(
                "expected {} rotations, got {}",
                self.config.joints,
                prev_rotations.len()
            )));
        }
        let rot = Tensor::row(prev_rotations.iter().flat_map(|q| q.to_array()).collect());
        let out = self.step_batch(
            state,
            rot,
            prev_translations.map(|t| Tensor::row(t.to_vec())),
            controls.map(|c| Tensor::row(c.to_vec())),
        )?;
        let q = out.rotations.data().chunks_exact(4).map(Quaternion::from_slice).collect();
        let t = out.translations.map(|t| [t.data()[0], t.data()[1]]);
        Ok((q, t, out.state))
    }

    /// Runs a batch of windows: warm up on `warm` ground-truth frames from each
    /// start, then free-run. Returns `horizon` predicted frames per window,
    /// the first being frame `start + warm`.
    pub fn rollout(&self, windows: &[(&PoseSequence, usize)], warm: usize, horizon: usize) -> Result<Rollout> {
        let b = windows.len();
        let mut out = Rollout {
            rotations: vec![Vec::with_capacity(horizon); b],
            translations: vec![Vec::with_capacity(horizon); b],
        };
        if horizon == 0 || b == 0 {
            return Ok(out);
        }
        if warm == 0 {
            return Err(Error::PrefixTooShort { needed: 1, got: 0 });
        }
        for (s, start) in windows {
            if start + warm > s.frames() {
                return Err(Error::PrefixTooShort {
                    needed: start + warm,
                    got: s.frames(),
                });
            }
        }
        let cfg = &self.config;
        let gather = |f: &dyn Fn(&PoseSequence, usize) -> Option<Vec<f64>>, offset: usize| -> Option<Tensor> {
            let rows: Option<Vec<Vec<f64>>> = windows.iter().map(|(s, st)| f(s, st + offset)).collect();
            rows.map(|r| {
                let cols = r[0].len();
                Tensor::matrix(b, cols, r.concat())
            })
        };
        let ctrl_at = |t: usize| {
            cfg.include_controls
                .then(|| gather(&|s, t| s.control_row(t).map(<[f64]>::to_vec), t))
                .flatten()
        };
        let mut state = self.initial_state(b);
        let mut step = None;
        for t in 0..warm {
            let rot = gather(&|s, t| Some(s.rotation_row(t).to_vec()), t).expect("rotations");
            let trans = cfg
                .include_translations
                .then(|| gather(&|s, t| s.translation_row(t).map(<[f64]>::to_vec), t))
                .flatten();
            if cfg.include_translations && trans.is_none() {
                return Err(Error::ConfigMismatch("sequence lacks translations".into()));
            }
            let o = self.step_batch(&state, rot, trans, ctrl_at(t + 1))?;
            state = o.state.clone();
            step = Some(o);
        }
        for i in 0..horizon {
            let o = step.take().expect("warm-up produced a step");
            for (w, row) in o.rotations.data().chunks_exact(4 * cfg.joints).enumerate() {
                out.rotations[w].push(row.to_vec());
            }
            if let Some(t) = &o.translations {
                for (w, row) in t.data().chunks_exact(TranslationFeatures::SIZE).enumerate() {
                    out.translations[w].push([row[0], row[1]]);
                }
            }
            if i + 1 < horizon {
                step = Some(self.step_batch(&o.state, o.rotations, o.translations, ctrl_at(warm + i + 1))?);
            }
        }
        Ok(out)
    }

    /// Warms up on the whole prefix and free-runs for `horizon` frames.
    pub fn predict(&self, prefix: &[Vec<Quaternion>], horizon: usize) -> Result<Vec<Vec<Quaternion>>> {
        if prefix.len() < self.config.n {
            return Err(Error::PrefixTooShort {
                needed: self.config.n,
                got: prefix.len(),
            });
        }
        if horizon == 0 {
            return Ok(Vec::new());
        }
        self.check_inputs(false, false)?;
        let seq = PoseSequence {
            joints: self.config.joints,
            rotations: prefix.iter().flatten().flat_map(|q| q.to_array()).collect(),
            translations: None,
            controls: None,
            positions: Vec::new(),
            euler: Vec::new(),
            subject: String::new(),
            action: String::new(),
        };
        let r = self.rollout(&[(&seq, 0)], prefix.len(), horizon)?;
        Ok(r.rotations[0]
            .iter()
            .map(|row| row.chunks_exact(4).map(Quaternion::from_slice).collect())
            .collect())
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut c = Checkpoint::new();
        let cfg = &self.config;
        c.set("kind", "pose");
        c.set("mode", cfg.mode);
        c.set("joints", cfg.joints);
        c.set("hidden", cfg.hidden);
        c.set("layers", cfg.layers);
        c.set("include_controls", cfg.include_controls);
        c.set("include_translations", cfg.include_translations);
        c.set("n", cfg.n);
        c.set("k", cfg.k);
        c.set("control_units", cfg.control_units);
        put_skeleton(&mut c, &self.skeleton);
        c.put_params("", &self.store);
        if let Some(w) = &self.warmup {
            let f = w.frames();
            c.put_tensor("warmup.rotations", Tensor::matrix(f, 4 * w.joints, w.rotations.clone()));
            if let Some(t) = &w.translations {
                c.put_tensor("warmup.translations", Tensor::matrix(f, TranslationFeatures::SIZE, t.clone()));
            }
            if let Some(t) = &w.controls {
                c.put_tensor("warmup.controls", Tensor::matrix(f, ControlFeatures::SIZE, t.clone()));
            }
        }
        c
    }

    pub fn from_checkpoint(c: &Checkpoint) -> Result<Self> {
        if c.get("kind") != Some("pose") {
            return Err(Error::Checkpoint("not a pose checkpoint".into()));
        }
        let config = PoseNetConfig {
            mode: c.parse("mode")?,
            joints: c.parse("joints")?,
            hidden: c.parse("hidden")?,
            layers: c.parse("layers")?,
            include_controls: c.parse("include_controls")?,
            include_translations: c.parse("include_translations")?,
            n: c.parse("n")?,
            k: c.parse("k")?,
            control_units: c.parse("control_units")?,
        };
        let skeleton = Arc::new(load_skeleton(c)?);
        let mut net = Self::new(config, skeleton, 0)?;
        c.load_params("", &mut net.store)?;
        if let Ok(r) = c.tensor("warmup.rotations") {
            let mut seq = PoseSequence::from_clip(&net.skeleton, &clip_from_rows(net.config.joints, r.data()));
            seq.translations = c.tensor("warmup.translations").ok().map(|t| t.data().to_vec());
            seq.controls = c.tensor("warmup.controls").ok().map(|t| t.data().to_vec());
            net.warmup = Some(seq);
        }
        Ok(net)
    }
}

fn clip_from_rows(joints: usize, rows: &[f64]) -> MotionClip {
    let mut clip = MotionClip::new(1.0, joints);
    for r in rows.chunks_exact(4 * joints) {
        let q: Vec<Quaternion> = r.chunks_exact(4).map(Quaternion::from_slice).collect();
        clip.push_frame([0.0; 3], &q);
    }
    clip
}

/// Per-window predictions of [`PoseNet::rollout`].
#[derive(Clone, Debug, PartialEq)]
pub struct Rollout {
    /// `[window][frame]` rows of `4J` values.
    pub rotations: Vec<Vec<Vec<f64>>>,
    /// Empty when the model has no translation head.
    pub translations: Vec<Vec<[f64; 2]>>,
}

/// Stores a skeleton in checkpoint header keys and tensors.
pub fn put_skeleton(c: &mut Checkpoint, s: &Skeleton) {
    let n = s.len();
    c.set("skeleton.joints", n);
    c.set("skeleton.scale", s.scale());
    for (i, j) in s.joints().iter().enumerate() {
        c.set(&format!("skeleton.name.{i}"), &j.name);
        c.set(&format!("skeleton.order.{i}"), j.euler_order);
    }
    let idx = |v: Option<usize>| v.map_or(-1.0, |v| v as f64);
    c.put_tensor("skeleton.offsets", Tensor::matrix(n, 3, s.joints().iter().flat_map(|j| j.offset).collect()));
    c.put_tensor(
        "skeleton.links",
        Tensor::matrix(
            n,
            3,
            s.joints()
                .iter()
                .flat_map(|j| [idx(j.parent), idx(j.mirror_partner), f64::from(u8::from(j.end_site))])
                .collect(),
        ),
    );
}

pub fn load_skeleton(c: &Checkpoint) -> Result<Skeleton> {
    let n: usize = c.parse("skeleton.joints")?;
    let offsets = c.tensor("skeleton.offsets")?.data();
    let links = c.tensor("skeleton.links")?.data();
    if offsets.len() != 3 * n || links.len() != 3 * n {
        return Err(Error::Checkpoint("skeleton tensors have the wrong size".into()));
    }
    let idx = |v: f64| (v >= 0.0).then_some(v as usize);
    let mut joints = Vec::with_capacity(n);
    for i in 0..n {
        let o = &offsets[3 * i..3 * i + 3];
        let l = &links[3 * i..3 * i + 3];
        let order: EulerOrder = c.parse(&format!("skeleton.order.{i}"))?;
        let mut def = JointDef::new(c.require(&format!("skeleton.name.{i}"))?, idx(l[0]), [o[0], o[1], o[2]])
            .with_order(order);
        def.mirror_partner = idx(l[1]);
        def.end_site = l[2] != 0.0;
        joints.push(def);
    }
    let mut s = Skeleton::new(joints)?;
    s.set_scale(c.parse("skeleton.scale")?);
    Ok(s)
}

#[derive(Clone, Debug, PartialEq)]
pub struct PoseTrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: OptimizerConfig,
    pub loss: LossKind,
    pub loss_config: LossConfig,
    pub sampling: ScheduledSamplingState,
    /// Weight of the L1 loss on the translation outputs.
    pub translation_weight: f64,
    pub seed: u64,
}

impl Default for PoseTrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            batch_size: 32,
            optimizer: OptimizerConfig::default(),
            loss: LossKind::Positional,
            loss_config: LossConfig::default(),
            sampling: ScheduledSamplingState::default(),
            translation_weight: 1.0,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub loss: f64,
    /// Ground-truth feeding probability used during the epoch.
    pub p: f64,
    pub lr: f64,
    /// Pre-clip global gradient norm of every step.
    pub grad_norms: Vec<f64>,
    /// Mean |‖raw quaternion‖ − 1| over the epoch's outputs.
    pub norm_deviation: f64,
}

/// Training loop state; checkpointing it and resuming gives the same run.
#[derive(Clone, Debug)]
pub struct PoseTrainer {
    pub net: PoseNet,
    pub config: PoseTrainConfig,
    pub adam: Adam,
    pub rng: ChaCha8Rng,
    pub epoch: usize,
    pub history: Vec<EpochMetrics>,
}

impl PoseTrainer {
    pub fn new(net: PoseNet, config: PoseTrainConfig) -> Result<Self> {
        config.optimizer.validate()?;
        config.loss_config.check();
        if config.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        Ok(Self {
            adam: Adam::new(&net.store),
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            net,
            config,
            epoch: 0,
            history: Vec::new(),
        })
    }

    pub fn sampling_probability(&self) -> f64 {
        self.config.sampling.at_epoch(self.epoch)
    }

    fn episode_len(&self) -> usize {
        self.net.config.n + self.net.config.k
    }

    /// Valid `(sequence, start)` pairs for fixed-length episodes.
    pub fn starts(&self, data: &[PoseSequence]) -> Vec<(usize, usize)> {
        let len = self.episode_len();
        data.iter()
            .enumerate()
            .flat_map(|(i, s)| (0..=s.frames().saturating_sub(len)).filter(move |_| s.frames() >= len).map(move |t| (i, t)))
            .collect()
    }

    /// One epoch of as many episodes as there are sequences, drawn uniformly
    /// over valid starting points.
    pub fn run_epoch(&mut self, data: &[PoseSequence]) -> Result<EpochMetrics> {
        let starts = self.starts(data);
        if starts.is_empty() {
            return Err(Error::PrefixTooShort {
                needed: self.episode_len(),
                got: data.iter().map(PoseSequence::frames).max().unwrap_or(0),
            });
        }
        let p = self.sampling_probability();
        let episodes: Vec<(usize, usize)> = (0..data.len()).map(|_| *starts.choose(&mut self.rng).expect("non-empty")).collect();
        let mut total = 0.0;
        let mut dev = (0.0, 0usize);
        let mut grad_norms = Vec::new();
        let mut lr = 0.0;
        for batch in episodes.chunks(self.config.batch_size) {
            let (loss, d) = self.batch_loss_and_grad(data, batch, p)?;
            total += loss * batch.len() as f64;
            dev.0 += d.0;
            dev.1 += d.1;
            let stats = self.adam.step(&mut self.net.store, &self.config.optimizer, self.epoch)?;
            grad_norms.push(stats.grad_norm);
            lr = stats.lr;
        }
        let m = EpochMetrics {
            epoch: self.epoch,
            loss: total / episodes.len() as f64,
            p,
            lr,
            grad_norms,
            norm_deviation: dev.0 / dev.1.max(1) as f64,
        };
        self.epoch += 1;
        self.history.push(m.clone());
        Ok(m)
    }

    pub fn train(&mut self, data: &[PoseSequence], epochs: usize) -> Result<Vec<EpochMetrics>> {
        (0..epochs).map(|_| self.run_epoch(data)).collect()
    }

    /// Builds the episode graph, backpropagates and leaves gradients in the
    /// store. Returns the loss and the raw-norm deviation sum and count.
    fn batch_loss_and_grad(&mut self, data: &[PoseSequence], batch: &[(usize, usize)], p: f64) -> Result<(f64, (f64, usize))> {
        let net = &self.net;
        let cfg = &net.config;
        let b = batch.len();
        let len = self.episode_len();
        let rows = |f: &dyn Fn(&PoseSequence, usize) -> Vec<f64>, t: usize| -> Tensor {
            let r: Vec<Vec<f64>> = batch.iter().map(|&(i, s)| f(&data[i], s + t)).collect();
            let cols = r[0].len();
            Tensor::matrix(b, cols, r.concat())
        };
        let missing = |what: &str| Error::ConfigMismatch(format!("training sequence lacks {what}"));
        for &(i, _) in batch {
            if cfg.include_controls && data[i].controls.is_none() {
                return Err(missing("controls"));
            }
            if cfg.include_translations && data[i].translations.is_none() {
                return Err(missing("translations"));
            }
        }
        let trans_of = |s: &PoseSequence, t: usize| s.translation_row(t).expect("checked").to_vec();
        let mut g = Graph::new();
        let store = &net.store;
        let h0 = net.initial_state(b);
        let mut h: Vec<Var> = h0.hidden.into_iter().map(|t| g.constant(t)).collect();
        let mut rot = g.constant(rows(&|s, t| s.rotation_row(t).to_vec(), 0));
        let mut trans = cfg.include_translations.then(|| g.constant(rows(&trans_of, 0)));
        let (mut preds, mut raws, mut tpreds) = (Vec::new(), Vec::new(), Vec::new());
        for t in 0..len - 1 {
            let ctrl = cfg
                .include_controls
                .then(|| g.constant(rows(&|s, t| s.control_row(t).expect("checked").to_vec(), t + 1)));
            let out = net.step_graph(&mut g, store, &h, rot, trans, ctrl)?;
            h = out.hidden;
            preds.push(out.rot);
            raws.push(out.raw);
            tpreds.extend(out.trans);
            if t + 1 < len - 1 {
                let gt = g.constant(rows(&|s, t| s.rotation_row(t).to_vec(), t + 1));
                let gt_trans = cfg.include_translations.then(|| g.constant(rows(&trans_of, t + 1)));
                if t + 1 < cfg.n {
                    rot = gt;
                    trans = gt_trans;
                } else {
                    let mask: Vec<bool> = (0..b).map(|_| self.rng.gen_bool(p.clamp(0.0, 1.0))).collect();
                    rot = g.select_rows(&mask, gt, out.rot);
                    trans = match (gt_trans, out.trans) {
                        (Some(a), Some(o)) => Some(g.select_rows(&mask, a, o)),
                        _ => None,
                    };
                }
            }
        }
        let pred = g.stack_rows(&preds);
        let raw = g.stack_rows(&raws);
        let steps = len - 1;
        let lc = &self.config.loss_config;
        let main = match self.config.loss {
            LossKind::Positional => {
                let target: Vec<f64> = (1..len)
                    .flat_map(|t| batch.iter().flat_map(move |&(i, s)| data[i].position_row(s + t).iter().copied()))
                    .collect();
                let target = g.constant(Tensor::matrix(steps * b, 3 * cfg.joints, target));
                let root = g.constant(Tensor::zeros(&[steps * b, 3]));
                positional_loss_node(&mut g, &net.skeleton, pred, root, target, lc.squared)
            }
            LossKind::Euler => {
                let target: Vec<f64> = (1..len)
                    .flat_map(|t| batch.iter().flat_map(move |&(i, s)| data[i].euler_row(s + t).iter().copied()))
                    .collect();
                let target = g.constant(Tensor::matrix(steps * b, 3 * cfg.joints, target));
                let orders: Arc<[EulerOrder]> = net.skeleton.joints().iter().map(|j| j.euler_order).collect();
                euler_loss_node(&mut g, pred, &orders, target)
            }
        };
        let penalty = g.norm_penalty(raw, lc.lambda);
        let mut loss = g.add(main, penalty);
        if !tpreds.is_empty() {
            let tp = g.stack_rows(&tpreds);
            let target: Vec<f64> = (1..len)
                .flat_map(|t| batch.iter().flat_map(move |&(i, s)| trans_of(&data[i], s + t)))
                .collect();
            let target = g.constant(Tensor::matrix(steps * b, TranslationFeatures::SIZE, target));
            let tl = g.mean_abs(tp, target);
            let tl = g.scale(tl, self.config.translation_weight);
            loss = g.add(loss, tl);
        }
        let value = g.scalar(loss);
        if !value.is_finite() {
            let eps: Vec<String> = batch.iter().map(|&(i, s)| format!("{}:{}@{s}", data[i].subject, data[i].action)).collect();
            return Err(Error::NonFiniteLoss(format!(
                "epoch {} episodes [{}] (sequence:action@start)",
                self.epoch,
                eps.join(", ")
            )));
        }
        let dev = g
            .value(raw)
            .data()
            .chunks_exact(4)
            .map(|q| (q.iter().map(|x| x * x).sum::<f64>().sqrt() - 1.0).abs())
            .fold((0.0, 0), |(s, n), d| (s + d, n + 1));
        self.net.store.zero_grad();
        g.backward(loss, &mut self.net.store);
        Ok((value, dev))
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut c = self.net.to_checkpoint();
        let t = &self.config;
        c.set("train.epoch", self.epoch);
        c.set("train.batch_size", t.batch_size);
        c.set("train.loss", t.loss);
        c.set("train.lambda", t.loss_config.lambda);
        c.set("train.squared", t.loss_config.squared);
        c.set("train.beta", t.sampling.beta);
        c.set("train.p0", t.sampling.p0);
        c.set("train.translation_weight", t.translation_weight);
        c.set("train.seed", t.seed);
        let o = &t.optimizer;
        c.set("train.lr", o.learning_rate);
        c.set("train.lr_decay", o.lr_decay);
        c.set("train.clip", o.grad_clip_norm);
        c.put_adam("train.", &self.net.store, &self.adam);
        c.put_rng(&self.rng);
        c
    }

    /// Resumes a run saved by [`PoseTrainer::to_checkpoint`]. `epochs` is
    /// taken from `config`; everything else comes from the checkpoint.
    pub fn from_checkpoint(c: &Checkpoint, epochs: usize) -> Result<Self> {
        let net = PoseNet::from_checkpoint(c)?;
        let optimizer = OptimizerConfig {
            learning_rate: c.parse("train.lr")?,
            lr_decay: c.parse("train.lr_decay")?,
            grad_clip_norm: c.parse("train.clip")?,
            ..OptimizerConfig::default()
        };
        let sampling = ScheduledSamplingState {
            p: 1.0,
            beta: c.parse("train.beta")?,
            p0: c.parse("train.p0")?,
        };
        let config = PoseTrainConfig {
            epochs,
            batch_size: c.parse("train.batch_size")?,
            optimizer,
            loss: c.parse("train.loss")?,
            loss_config: LossConfig {
                lambda: c.parse("train.lambda")?,
                squared: c.parse("train.squared")?,
                ..LossConfig::default()
            },
            sampling,
            translation_weight: c.parse("train.translation_weight")?,
            seed: c.parse("train.seed")?,
        };
        let adam = c.load_adam("train.", &net.store)?;
        Ok(Self {
            adam,
            rng: c.load_rng()?,
            epoch: c.parse("train.epoch")?,
            net,
            config,
            history: Vec::new(),
        })
    }
}

/// Trains for `config.epochs` epochs from a fresh optimizer.
pub fn train_pose_net(net: PoseNet, data: &[PoseSequence], config: PoseTrainConfig) -> Result<PoseTrainer> {
    let epochs = config.epochs;
    let mut tr = PoseTrainer::new(net, config)?;
    tr.train(data, epochs)?;
    Ok(tr)
}

/// Mean joint distance (root at the origin) of each predicted frame against
/// the sequence, averaged over windows. Windows start at `start`; frame
/// `start + warm + i` is compared with prediction `i`.
pub fn positional_errors(
    skeleton: &Skeleton,
    windows: &[(&PoseSequence, usize)],
    warm: usize,
    predictions: &[Vec<Vec<f64>>],
) -> Vec<f64> {
    let horizon = predictions.first().map_or(0, Vec::len);
    let j = skeleton.len();
    let mut acc = vec![0.0; horizon];
    let mut buf = vec![[0.0; 3]; j];
    for ((s, start), pred) in windows.iter().zip(predictions) {
        for (i, row) in pred.iter().enumerate() {
            let q: Vec<Quaternion> = row.chunks_exact(4).map(Quaternion::from_slice).collect();
            forward_kinematics_into(skeleton, &q, [0.0; 3], &mut buf);
            let target = s.position_row(start + warm + i);
            let d: f64 = buf
                .iter()
                .zip(target.chunks_exact(3))
                .map(|(p, t)| ((p[0] - t[0]).powi(2) + (p[1] - t[1]).powi(2) + (p[2] - t[2]).powi(2)).sqrt())
                .sum();
            acc[i] += d / j as f64;
        }
    }
    acc.iter().map(|a| a / windows.len().max(1) as f64).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Baseline {
    ZeroVelocity,
    RunAvg2,
    RunAvg4,
}

impl Baseline {
    pub const ALL: [Baseline; 3] = [Baseline::RunAvg4, Baseline::RunAvg2, Baseline::ZeroVelocity];

    pub fn window(self) -> usize {
        match self {
            Baseline::ZeroVelocity => 1,
            Baseline::RunAvg2 => 2,
            Baseline::RunAvg4 => 4,
        }
    }
}

impl fmt::Display for Baseline {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Baseline::ZeroVelocity => "zero_velocity",
            Baseline::RunAvg2 => "run_avg2",
            Baseline::RunAvg4 => "run_avg4",
        })
    }
}

impl FromStr for Baseline {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.replace('-', "_").as_str() {
            "zero_velocity" | "zero" => Ok(Baseline::ZeroVelocity),
            "run_avg2" => Ok(Baseline::RunAvg2),
            "run_avg4" => Ok(Baseline::RunAvg4),
            _ => Err(Error::Config(format!("unknown baseline `{s}`"))),
        }
    }
}

/// Repeats the last frame or the mean of the last N frames. Averages are
/// taken per Euler angle (each joint in `orders`, cycled) after unwrapping.
pub fn baseline_predict(kind: Baseline, prefix: &[Vec<Quaternion>], orders: &[EulerOrder], horizon: usize) -> Result<Vec<Vec<Quaternion>>> {
    let n = kind.window();
    if prefix.len() < n {
        return Err(Error::PrefixTooShort {
            needed: n,
            got: prefix.len(),
        });
    }
    let last = &prefix[prefix.len() - 1];
    let frame = if n == 1 {
        last.clone()
    } else {
        let tail = &prefix[prefix.len() - n..];
        (0..last.len())
            .map(|j| {
                let order = orders[j % orders.len()];
                let e: Vec<[f64; 3]> = tail.iter().map(|f| quat_to_euler(f[j], order)).collect();
                let mut mean = [0.0; 3];
                for (a, m) in mean.iter_mut().enumerate() {
                    let mut cur = e[0][a];
                    let mut sum = cur;
                    for w in e.windows(2) {
                        cur += wrap_angle(w[1][a] - w[0][a]);
                        sum += cur;
                    }
                    *m = sum / n as f64;
                }
                euler_to_quat(mean, order)
            })
            .collect()
    };
    Ok(vec![frame; horizon])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{chain_skeleton, make_synthetic_dataset, SyntheticSpec};

    fn chain_data(seed: u64) -> (Arc<Skeleton>, Vec<PoseSequence>) {
        let spec = SyntheticSpec { clips: 4, frames: 40, ..SyntheticSpec::chain(3) };
        let (s, clips) = make_synthetic_dataset(&spec, seed);
        let seqs = clips.iter().map(|c| PoseSequence::from_clip(&s, c)).collect();
        (Arc::new(s), seqs)
    }

    fn small(mode: PoseMode) -> PoseNetConfig {
        PoseNetConfig {
            mode,
            hidden: 16,
            layers: 2,
            n: 5,
            k: 3,
            ..PoseNetConfig::new(3)
        }
    }

    #[test]
    fn schedule_values() {
        let s = ScheduledSamplingState::default();
        assert_eq!(s.at_epoch(0), 1.0);
        assert_eq!(s.at_epoch(1), 0.995);
        assert!((s.at_epoch(2) - 0.990025).abs() < 1e-15);
        assert_eq!(ScheduledSamplingState::pinned(0.0).at_epoch(7), 0.0);
    }

    #[test]
    fn identity_delta_is_a_fixed_point() {
        let skel = Arc::new(chain_skeleton(3));
        let mut net = PoseNet::new(small(PoseMode::Velocity), skel.clone(), 1).unwrap();
        net.zero_output_head();
        let prev = vec![
            Quaternion::from_axis_angle([0.0, 0.0, 1.0], 0.3),
            Quaternion::from_axis_angle([1.0, 0.0, 0.0], -1.1),
            Quaternion::IDENTITY,
        ];
        let (next, t, _) = net.pose_step(&net.initial_state(1), &prev, None, None).unwrap();
        assert_eq!(t, None);
        for (a, b) in next.iter().zip(&prev) {
            assert!((a.dot(*b) - 1.0).abs() < 1e-15);
        }
        let prefix = vec![prev.clone(); 6];
        let out = net.predict(&prefix, 4).unwrap();
        let zv = baseline_predict(Baseline::ZeroVelocity, &prefix, &[EulerOrder::Zyx], 4).unwrap();
        for (a, b) in out.iter().flatten().zip(zv.iter().flatten()) {
            assert!((a.dot(*b) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn step_is_pure_and_unit() {
        let skel = Arc::new(chain_skeleton(3));
        let net = PoseNet::new(small(PoseMode::Absolute), skel, 2).unwrap();
        let prev = vec![Quaternion::IDENTITY; 3];
        let s = net.initial_state(1);
        let a = net.pose_step(&s, &prev, None, None).unwrap();
        let b = net.pose_step(&s, &prev, None, None).unwrap();
        assert_eq!(a, b);
        assert!(a.0.iter().all(|q| (q.norm() - 1.0).abs() < 1e-12));
        assert!(matches!(
            net.pose_step(&s, &prev, Some([0.0, 0.0]), None),
            Err(Error::ConfigMismatch(_))
        ));
        assert!(net.predict(&[], 0).is_err());
        assert!(matches!(net.predict(&vec![prev.clone(); 2], 3), Err(Error::PrefixTooShort { needed: 5, got: 2 })));
        assert!(net.predict(&vec![prev; 5], 0).unwrap().is_empty());
    }

    #[test]
    fn training_is_deterministic_and_resumable() {
        let (skel, data) = chain_data(3);
        let cfg = PoseTrainConfig {
            batch_size: 2,
            ..PoseTrainConfig::default()
        };
        let make = || PoseTrainer::new(PoseNet::new(small(PoseMode::Velocity), skel.clone(), 5).unwrap(), cfg.clone()).unwrap();
        let mut a = make();
        let la: Vec<f64> = a.train(&data, 4).unwrap().iter().map(|m| m.loss).collect();
        let mut b = make();
        let lb: Vec<f64> = b.train(&data, 2).unwrap().iter().map(|m| m.loss).collect();
        let mut bytes = Vec::new();
        b.to_checkpoint().write_to(&mut bytes).unwrap();
        let ck = Checkpoint::read_from(&mut bytes.as_slice()).unwrap();
        let mut c = PoseTrainer::from_checkpoint(&ck, 4).unwrap();
        let lc: Vec<f64> = c.train(&data, 2).unwrap().iter().map(|m| m.loss).collect();
        assert_eq!(la[..2], lb[..]);
        assert_eq!(la[2..], lc[..]);
        assert_eq!(a.net.store.iter().map(|p| p.value.clone()).collect::<Vec<_>>(), c.net.store.iter().map(|p| p.value.clone()).collect::<Vec<_>>());
        assert!(a.history.iter().all(|m| m.grad_norms.iter().all(|g| g.is_finite())));
        assert_eq!(a.history[1].p, 0.995);
    }

    #[test]
    fn euler_mode_and_pinned_sampling_run() {
        let (skel, data) = chain_data(4);
        for (loss, sampling) in [
            (LossKind::Euler, ScheduledSamplingState::pinned(1.0)),
            (LossKind::Positional, ScheduledSamplingState::pinned(0.0)),
        ] {
            let cfg = PoseTrainConfig {
                epochs: 2,
                batch_size: 4,
                loss,
                sampling,
                ..PoseTrainConfig::default()
            };
            let net = PoseNet::new(small(PoseMode::Absolute), skel.clone(), 1).unwrap();
            let tr = train_pose_net(net, &data, cfg).unwrap();
            assert!(tr.history.iter().all(|m| m.loss.is_finite()));
        }
    }

    #[test]
    fn baselines_on_constant_prefix() {
        let q = vec![Quaternion::from_axis_angle([0.6, 0.0, 0.8], 3.0), Quaternion::IDENTITY];
        let prefix = vec![q.clone(); 4];
        for kind in Baseline::ALL {
            let out = baseline_predict(kind, &prefix, &[EulerOrder::Xyz], 3).unwrap();
            assert_eq!(out.len(), 3);
            for f in out {
                for (a, b) in f.iter().zip(&q) {
                    assert!((a.dot(*b).abs() - 1.0).abs() < 1e-12);
                }
            }
        }
        assert!(baseline_predict(Baseline::RunAvg4, &prefix[..3], &[EulerOrder::Xyz], 1).is_err());
    }

    #[test]
    fn run_avg_unwraps_angles() {
        let order = EulerOrder::Xyz;
        let f = |a: f64| vec![euler_to_quat([a, 0.0, 0.0], order)];
        let prefix = vec![f(3.1), f(-3.1)];
        let out = baseline_predict(Baseline::RunAvg2, &prefix, &[order], 1).unwrap();
        let e = quat_to_euler(out[0][0], order);
        assert!((wrap_angle(e[0] - std::f64::consts::PI)).abs() < 1e-9, "{e:?}");
    }

    #[test]
    fn checkpoint_keeps_skeleton_and_warmup() {
        let (skel, data) = chain_data(2);
        let mut net = PoseNet::new(small(PoseMode::Absolute), skel.clone(), 9).unwrap();
        net.warmup = Some(data[0].clone());
        let back = PoseNet::from_checkpoint(&net.to_checkpoint()).unwrap();
        assert_eq!(*back.skeleton, *skel);
        assert_eq!(back.warmup.as_ref().unwrap().rotations, data[0].rotations);
        let prefix: Vec<Vec<Quaternion>> = (0..5).map(|t| data[1].quaternions(t)).collect();
        assert_eq!(net.predict(&prefix, 3).unwrap(), back.predict(&prefix, 3).unwrap());
    }
}
