use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{GaitAnnotation, TrajectorySpline};
use crate::error::{Error, Result};
use crate::nn::{Activation, Adam, Checkpoint, Dense, DenseLayerConfig, Graph, Gru, OptimizerConfig, ParamStore, Tensor, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PaceMode {
    /// Offline: forward and backward states are concatenated.
    Bidirectional,
    /// Online: the output for segment `i` is read at segment `i + d`.
    Delayed(usize),
}

impl Default for PaceMode {
    fn default() -> Self {
        PaceMode::Delayed(4)
    }
}

impl std::fmt::Display for PaceMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            PaceMode::Bidirectional => write!(f, "bidirectional"),
            PaceMode::Delayed(d) => write!(f, "delayed:{d}"),
        }
    }
}

impl std::str::FromStr for PaceMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bidirectional" => Ok(PaceMode::Bidirectional),
            "delayed" => Ok(PaceMode::default()),
            _ => s
                .strip_prefix("delayed:")
                .and_then(|d| d.parse().ok())
                .map(PaceMode::Delayed)
                .ok_or_else(|| Error::Config(format!("unknown pace mode `{s}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PaceConfig {
    pub hidden: usize,
    /// Multiplier applied to the turn angle before it enters the network.
    pub curvature_scale: f64,
}

impl Default for PaceConfig {
    fn default() -> Self {
        Self {
            hidden: 30,
            curvature_scale: 10.0,
        }
    }
}

/// Recurrent model over spline segments predicting facing, step frequency
/// and local speed. Both modes share the forward GRU.
#[derive(Clone, Debug)]
pub struct PaceNet {
    pub config: PaceConfig,
    pub store: ParamStore,
    fwd: Gru,
    bwd: Gru,
    head_bi: Dense,
    head_delayed: Dense,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PaceSample {
    pub curvatures: Vec<f64>,
    pub annotations: Vec<GaitAnnotation>,
}

impl PaceNet {
    pub fn new(config: PaceConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let h = config.hidden;
        let fwd = Gru::new(&mut store, "pace.fwd", 1, h, &mut rng);
        let bwd = Gru::new(&mut store, "pace.bwd", 1, h, &mut rng);
        let head = |store: &mut ParamStore, name: &str, input: usize, rng: &mut ChaCha8Rng| {
            let cfg = DenseLayerConfig {
                in_size: input,
                out_size: 4,
                activation: Activation::Linear,
            };
            Dense::new(store, name, cfg, rng)
        };
        let head_bi = head(&mut store, "pace.head_bi", 2 * h, &mut rng);
        let head_delayed = head(&mut store, "pace.head_delayed", h, &mut rng);
        Self {
            config,
            store,
            fwd,
            bwd,
            head_bi,
            head_delayed,
        }
    }

    fn run_gru(&self, g: &mut Graph, store: &ParamStore, gru: &Gru, inputs: impl Iterator<Item = f64>) -> Result<Vec<Var>> {
        let mut h = gru.initial_state(g, store, 1);
        let mut out = Vec::new();
        for c in inputs {
            let x = g.constant(Tensor::scalar(c * self.config.curvature_scale));
            h = gru.step(g, store, x, h)?;
            out.push(h);
        }
        Ok(out)
    }

    /// Builds the `N×4` output `(cos, sin, frequency, speed)` on `g`.
    pub fn forward_graph(&self, g: &mut Graph, store: &ParamStore, curvatures: &[f64], mode: PaceMode) -> Result<Var> {
        let n = curvatures.len();
        if n == 0 {
            return Err(Error::DegeneratePath("spline has no segments".into()));
        }
        let fwd = self.run_gru(g, store, &self.fwd, curvatures.iter().copied())?;
        let hidden = match mode {
            PaceMode::Bidirectional => {
                let mut bwd = self.run_gru(g, store, &self.bwd, curvatures.iter().rev().copied())?;
                bwd.reverse();
                let rows: Vec<Var> = (0..n).map(|i| g.concat_cols(&[fwd[i], bwd[i]])).collect();
                let h = g.stack_rows(&rows);
                return Ok(self.head_bi.forward(g, store, h));
            }
            PaceMode::Delayed(d) => (0..n).map(|i| fwd[(i + d).min(n - 1)]).collect::<Vec<_>>(),
        };
        let h = g.stack_rows(&hidden);
        Ok(self.head_delayed.forward(g, store, h))
    }

    pub fn forward(&self, curvatures: &[f64], mode: PaceMode) -> Result<Vec<GaitAnnotation>> {
        let mut g = Graph::new();
        let out = self.forward_graph(&mut g, &self.store, curvatures, mode)?;
        Ok(decode(g.value(out).data()))
    }

    pub fn annotate(&self, spline: &TrajectorySpline, mode: PaceMode) -> Result<Vec<GaitAnnotation>> {
        self.forward(&spline.curvatures(), mode)
    }

    /// Forward GRU hidden states, one row per segment.
    pub fn forward_states(&self, curvatures: &[f64]) -> Result<Vec<Vec<f64>>> {
        let mut g = Graph::new();
        let hs = self.run_gru(&mut g, &self.store, &self.fwd, curvatures.iter().copied())?;
        Ok(hs.iter().map(|h| g.value(*h).data().to_vec()).collect())
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut c = Checkpoint::new();
        c.set("kind", "pace");
        c.set("hidden", self.config.hidden);
        c.set("curvature_scale", self.config.curvature_scale);
        c.put_params("", &self.store);
        c
    }

    pub fn from_checkpoint(c: &Checkpoint) -> Result<Self> {
        if c.get("kind") != Some("pace") {
            return Err(Error::Checkpoint("not a pace checkpoint".into()));
        }
        let config = PaceConfig {
            hidden: c.parse("hidden")?,
            curvature_scale: c.parse("curvature_scale")?,
        };
        let mut net = Self::new(config, 0);
        c.load_params("", &mut net.store)?;
        Ok(net)
    }
}

/// Delayed-mode annotation of a growing spline. Forward states are cached per
/// segment, so an update only recomputes from the first changed curvature.
#[derive(Clone, Debug, PartialEq)]
pub struct PaceStream {
    pub delay: usize,
    curvatures: Vec<f64>,
    states: Vec<Tensor>,
}

impl PaceStream {
    pub fn new(delay: usize) -> Self {
        Self {
            delay,
            curvatures: Vec::new(),
            states: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// Brings the cache in line with `curvatures` and returns the index of the
    /// first recomputed segment (`curvatures.len()` when nothing changed).
    pub fn update(&mut self, net: &PaceNet, curvatures: &[f64]) -> Result<usize> {
        let keep = self
            .curvatures
            .iter()
            .zip(curvatures)
            .take_while(|(a, b)| a == b)
            .count();
        self.curvatures.truncate(keep);
        self.states.truncate(keep);
        for &c in &curvatures[keep..] {
            let mut g = Graph::new();
            let h = match self.states.last() {
                Some(t) => g.constant(t.clone()),
                None => net.fwd.initial_state(&mut g, &net.store, 1),
            };
            let x = g.constant(Tensor::scalar(c * net.config.curvature_scale));
            let h = net.fwd.step(&mut g, &net.store, x, h)?;
            self.states.push(g.value(h).clone());
            self.curvatures.push(c);
        }
        Ok(keep)
    }

    /// Annotations of segments `from..`; segment `i` reads state `i + delay`.
    pub fn annotations_from(&self, net: &PaceNet, from: usize) -> Vec<GaitAnnotation> {
        let n = self.states.len();
        if from >= n {
            return Vec::new();
        }
        let mut g = Graph::new();
        let rows: Vec<Var> = (from..n).map(|i| g.constant(self.states[(i + self.delay).min(n - 1)].clone())).collect();
        let h = g.stack_rows(&rows);
        let out = net.head_delayed.forward(&mut g, &net.store, h);
        decode(g.value(out).data())
    }
}

fn decode(rows: &[f64]) -> Vec<GaitAnnotation> {
    rows.chunks_exact(4)
        .map(|r| GaitAnnotation {
            facing: r[1].atan2(r[0]),
            step_frequency: r[2].max(0.0),
            local_speed: r[3].max(0.0),
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct PaceTrainConfig {
    pub epochs: usize,
    pub optimizer: OptimizerConfig,
    pub mode: PaceMode,
    pub seed: u64,
}

impl Default for PaceTrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            optimizer: OptimizerConfig::default(),
            mode: PaceMode::default(),
            seed: 0,
        }
    }
}

/// Minimizes the gait-feature MAE with one Adam step per spline, visiting
/// splines in a seeded random order each epoch. Returns the mean loss of
/// each epoch.
pub fn train_pace_net(net: &mut PaceNet, data: &[PaceSample], cfg: &PaceTrainConfig) -> Result<Vec<f64>> {
    cfg.optimizer.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = Adam::new(&net.store);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut curve = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for &i in &order {
            let sample = &data[i];
            let target: Vec<f64> = sample
                .annotations
                .iter()
                .flat_map(|a| [a.facing, a.step_frequency, a.local_speed])
                .collect();
            net.store.zero_grad();
            let mut g = Graph::new();
            let pred = net.forward_graph(&mut g, &net.store, &sample.curvatures, cfg.mode)?;
            let t = g.constant(Tensor::matrix(sample.annotations.len(), 3, target));
            let loss = g.gait_mae(pred, t);
            let l = g.scalar(loss);
            if !l.is_finite() {
                return Err(Error::NonFiniteLoss(format!("pace sample {i} at epoch {epoch}")));
            }
            total += l;
            g.backward(loss, &mut net.store);
            adam.step(&mut net.store, &cfg.optimizer, epoch)?;
        }
        curve.push(total / data.len().max(1) as f64);
    }
    Ok(curve)
}
