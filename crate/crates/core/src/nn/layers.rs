use rand::Rng;

use super::{Graph, ParamId, ParamStore, Var};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Activation {
    Linear,
    LeakyRelu(f64),
    Tanh,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DenseLayerConfig {
    pub in_size: usize,
    pub out_size: usize,
    pub activation: Activation,
}

/// Leak used by the control-embedding layers.
pub const LEAK: f64 = 0.05;

#[derive(Clone, Debug)]
pub struct Dense {
    pub config: DenseLayerConfig,
    pub w: ParamId,
    pub b: ParamId,
}

impl Dense {
    pub fn new(store: &mut ParamStore, name: &str, config: DenseLayerConfig, rng: &mut impl Rng) -> Self {
        let w = store.uniform(format!("{name}.w"), config.in_size, config.out_size, config.in_size, rng);
        let b = store.zeros(format!("{name}.b"), 1, config.out_size);
        Self { config, w, b }
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Var {
        let w = g.param(store, self.w);
        let b = g.param(store, self.b);
        let xw = g.matmul(x, w);
        let y = g.add_bias(xw, b);
        match self.config.activation {
            Activation::Linear => y,
            Activation::LeakyRelu(a) => g.leaky_relu(y, a),
            Activation::Tanh => g.tanh(y),
        }
    }
}

/// Gated recurrent unit with the reset gate applied before the recurrent
/// matmul of the candidate state, and a learned initial state `h0`.
#[derive(Clone, Debug)]
pub struct Gru {
    pub input_size: usize,
    pub hidden_size: usize,
    /// Input weights for `[z | r | h~]`, `input × 3H`.
    pub wx: ParamId,
    pub bx: ParamId,
    /// Recurrent weights for `[z | r]`, `H × 2H`.
    pub u_zr: ParamId,
    pub u_h: ParamId,
    pub h0: ParamId,
}

impl Gru {
    pub fn new(store: &mut ParamStore, name: &str, input_size: usize, hidden_size: usize, rng: &mut impl Rng) -> Self {
        let h = hidden_size;
        Self {
            input_size,
            hidden_size,
            wx: store.uniform(format!("{name}.wx"), input_size, 3 * h, input_size, rng),
            bx: store.zeros(format!("{name}.bx"), 1, 3 * h),
            u_zr: store.uniform(format!("{name}.u_zr"), h, 2 * h, h, rng),
            u_h: store.uniform(format!("{name}.u_h"), h, h, h, rng),
            h0: store.zeros(format!("{name}.h0"), 1, h),
        }
    }

    /// Learned initial state repeated for `batch` rows.
    pub fn initial_state(&self, g: &mut Graph, store: &ParamStore, batch: usize) -> Var {
        let h0 = g.param(store, self.h0);
        g.broadcast_rows(h0, batch)
    }

    pub fn step(&self, g: &mut Graph, store: &ParamStore, x: Var, h: Var) -> Result<Var> {
        let hs = self.hidden_size;
        let (xr, xc) = (g.value(x).rows(), g.value(x).cols());
        let (hr, hc) = (g.value(h).rows(), g.value(h).cols());
        if xc != self.input_size || hc != hs || xr != hr {
            return Err(Error::ShapeMismatch(format!(
                "gru step expects {}x{} input and {}x{} state, got {xr}x{xc} and {hr}x{hc}",
                hr, self.input_size, xr, hs
            )));
        }
        let wx = g.param(store, self.wx);
        let bx = g.param(store, self.bx);
        let u_zr = g.param(store, self.u_zr);
        let u_h = g.param(store, self.u_h);

        let xw = g.matmul(x, wx);
        let xw = g.add_bias(xw, bx);
        let hu = g.matmul(h, u_zr);
        let xz = g.slice_cols(xw, 0, hs);
        let hz = g.slice_cols(hu, 0, hs);
        let z = g.add(xz, hz);
        let z = g.sigmoid(z);
        let xr_ = g.slice_cols(xw, hs, hs);
        let hr_ = g.slice_cols(hu, hs, hs);
        let r = g.add(xr_, hr_);
        let r = g.sigmoid(r);
        let rh = g.mul(r, h);
        let rhu = g.matmul(rh, u_h);
        let xh = g.slice_cols(xw, 2 * hs, hs);
        let cand = g.add(xh, rhu);
        let cand = g.tanh(cand);
        let delta = g.sub(cand, h);
        let step = g.mul(z, delta);
        Ok(g.add(h, step))
    }
}

/// Normalizes raw `B×4J` network output per quaternion. The raw node is
/// returned alongside so the norm penalty can see it.
pub fn normalization_layer(g: &mut Graph, raw: Var) -> Result<(Var, Var)> {
    Ok((g.quat_normalize(raw)?, raw))
}
