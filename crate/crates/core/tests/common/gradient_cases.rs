//! Random gradient-check configurations. Each case returns the largest
//! relative error between reverse-mode and finite-difference gradients.

use std::f64::consts::PI;
use std::sync::Arc;

use qmotion::losses::{euler_loss_node, positional_loss_node};
use qmotion::nn::{check_gradients, normalization_layer, Activation, Dense, DenseLayerConfig, Gru, ParamStore, Tensor};
use qmotion::quat::{periodic_abs_diff, quat_to_euler};
use qmotion::{EulerOrder, Quaternion};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{random_skeleton, random_unit_quat};

pub const H: f64 = 1e-5;
pub const TOL: f64 = 1e-4;
pub const CONFIGS: usize = 120;

pub const CASES: [(&str, fn(&mut ChaCha8Rng) -> f64); 6] = [
    ("positional", positional_loss),
    ("norm penalty", norm_penalty),
    ("euler", euler_loss),
    ("gru", gru),
    ("dense", dense),
    ("normalization", normalization),
];

fn random_matrix(rng: &mut impl Rng, rows: usize, cols: usize, r: f64) -> Tensor {
    Tensor::matrix(rows, cols, (0..rows * cols).map(|_| rng.gen_range(-r..r)).collect())
}

/// Raw quaternion rows with norms kept away from zero.
fn raw_quats(rng: &mut impl Rng, rows: usize, quats: usize) -> Tensor {
    let mut data = Vec::with_capacity(rows * quats * 4);
    for _ in 0..rows * quats {
        let q = random_unit_quat(rng);
        let s = rng.gen_range(0.5..1.5);
        data.extend(q.to_array().map(|v| v * s));
    }
    Tensor::matrix(rows, quats * 4, data)
}

pub fn positional_loss(rng: &mut ChaCha8Rng) -> f64 {
    let joints = rng.gen_range(2..7);
    let batch = rng.gen_range(1..4);
    let skel = Arc::new(random_skeleton(rng, joints));
    let mut store = ParamStore::new();
    let rot = store.add("rot", raw_quats(rng, batch, joints));
    let root = store.add("root", random_matrix(rng, batch, 3, 1.0));
    let target = random_matrix(rng, batch, 3 * joints, 2.0);
    let squared = rng.gen_bool(0.3);
    check_gradients(&mut store, H, |g, s| {
        let raw = g.param(s, rot);
        let (q, _) = normalization_layer(g, raw)?;
        let root = g.param(s, root);
        let t = g.constant(target.clone());
        Ok(positional_loss_node(g, &skel, q, root, t, squared))
    })
    .unwrap()
    .max_rel_error
}

pub fn norm_penalty(rng: &mut ChaCha8Rng) -> f64 {
    let quats = rng.gen_range(1..8);
    let batch = rng.gen_range(1..4);
    let lambda = rng.gen_range(0.001..0.1);
    let mut store = ParamStore::new();
    let raw = store.add("raw", raw_quats(rng, batch, quats));
    check_gradients(&mut store, H, |g, s| {
        let raw = g.param(s, raw);
        Ok(g.norm_penalty(raw, lambda))
    })
    .unwrap()
    .max_rel_error
}

pub fn euler_loss(rng: &mut ChaCha8Rng) -> f64 {
    loop {
        let quats = rng.gen_range(1..6);
        let batch = rng.gen_range(1..3);
        let orders: Arc<[EulerOrder]> = (0..quats).map(|_| EulerOrder::ALL[rng.gen_range(0..6)]).collect();
        let raw = raw_quats(rng, batch, quats);
        let target = random_matrix(rng, batch, 3 * quats, PI);
        // Redraw when a finite-difference step would cross a kink or gimbal lock.
        let near_kink = raw.data().chunks_exact(4).enumerate().any(|(i, q)| {
            let e = quat_to_euler(Quaternion::from_slice(q).normalized().unwrap(), orders[i % quats]);
            e[1].cos() < 0.05
                || (0..3).any(|k| {
                    let d = periodic_abs_diff(e[k] - target.data()[3 * i + k]);
                    d < 1e-3 || d > PI - 1e-3
                })
        });
        if near_kink {
            continue;
        }
        let mut store = ParamStore::new();
        let id = store.add("raw", raw);
        return check_gradients(&mut store, H, |g, s| {
            let raw = g.param(s, id);
            let q = g.quat_normalize(raw)?;
            let t = g.constant(target.clone());
            Ok(euler_loss_node(g, q, &orders, t))
        })
        .unwrap()
        .max_rel_error;
    }
}

pub fn gru(rng: &mut ChaCha8Rng) -> f64 {
    let input = rng.gen_range(1..5);
    let hidden = rng.gen_range(1..6);
    let batch = rng.gen_range(1..4);
    let steps = rng.gen_range(1..4);
    let mut store = ParamStore::new();
    let gru = Gru::new(&mut store, "g", input, hidden, rng);
    for p in store.iter_mut() {
        for v in p.value.data_mut() {
            *v = rng.gen_range(-0.8..0.8);
        }
    }
    let xs: Vec<Tensor> = (0..steps).map(|_| random_matrix(rng, batch, input, 1.0)).collect();
    let w = random_matrix(rng, batch, hidden, 1.0);
    check_gradients(&mut store, H, |g, s| {
        let mut h = gru.initial_state(g, s, batch);
        for x in &xs {
            let x = g.constant(x.clone());
            h = gru.step(g, s, x, h)?;
        }
        let w = g.constant(w.clone());
        let y = g.mul(h, w);
        Ok(g.sum(y))
    })
    .unwrap()
    .max_rel_error
}

pub fn dense(rng: &mut ChaCha8Rng) -> f64 {
    let activation = match rng.gen_range(0..3) {
        0 => Activation::Linear,
        1 => Activation::LeakyRelu(rng.gen_range(0.01..0.3)),
        _ => Activation::Tanh,
    };
    let cfg = DenseLayerConfig {
        in_size: rng.gen_range(1..6),
        out_size: rng.gen_range(1..6),
        activation,
    };
    let batch = rng.gen_range(1..4);
    let mut store = ParamStore::new();
    let dense = Dense::new(&mut store, "d", cfg, rng);
    for p in store.iter_mut() {
        for v in p.value.data_mut() {
            *v = rng.gen_range(-1.0..1.0);
        }
    }
    let x = random_matrix(rng, batch, cfg.in_size, 1.0);
    let w = random_matrix(rng, batch, cfg.out_size, 1.0);
    check_gradients(&mut store, H, |g, s| {
        let x = g.constant(x.clone());
        let y = dense.forward(g, s, x);
        let w = g.constant(w.clone());
        let y = g.mul(y, w);
        Ok(g.sum(y))
    })
    .unwrap()
    .max_rel_error
}

pub fn normalization(rng: &mut ChaCha8Rng) -> f64 {
    let quats = rng.gen_range(1..6);
    let batch = rng.gen_range(1..4);
    let lambda = rng.gen_range(0.001..0.1);
    let mut store = ParamStore::new();
    let raw = store.add("raw", raw_quats(rng, batch, quats));
    let w = random_matrix(rng, batch, 4 * quats, 1.0);
    check_gradients(&mut store, H, |g, s| {
        let raw = g.param(s, raw);
        let (q, raw) = normalization_layer(g, raw)?;
        let w = g.constant(w.clone());
        let y = g.mul(q, w);
        let y = g.sum(y);
        let p = g.norm_penalty(raw, lambda);
        Ok(g.add(y, p))
    })
    .unwrap()
    .max_rel_error
}
