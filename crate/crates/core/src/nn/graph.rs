use std::collections::HashMap;
use std::sync::Arc;

use super::{ParamId, ParamStore, Tensor};
use crate::error::{Error, Result};
use crate::quat::{
    cross3, dot3, periodic_abs_diff, qmul, quat_to_euler, quat_to_euler_jacobian, wrap_angle, EulerOrder, Quaternion,
    Vec3, DEGENERATE_NORM,
};
use crate::skeleton::Skeleton;

/// Handle to a node on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Clone)]
enum Op {
    Leaf,
    Param(ParamId),
    MatMul(Var, Var),
    AddBias(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Sigmoid(Var),
    Tanh(Var),
    LeakyRelu(Var, f64),
    ConcatCols(Vec<Var>),
    SliceCols(Var, usize),
    StackRows(Vec<Var>),
    BroadcastRows(Var),
    SelectRows(Arc<[bool]>, Var, Var),
    Sum(Var),
    QuatNormalize(Var),
    QuatMul(Var, Var),
    Fk(Arc<Skeleton>, Var, Var),
    QuatToEuler(Arc<[EulerOrder]>, Var),
    MeanDistance(Var, Var, bool),
    NormPenalty(Var, f64),
    WrappedL1(Var, Var),
    MeanAbs(Var, Var),
    GaitMae(Var, Var),
}

struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

/// Reverse-mode tape. Build one per forward pass, call [`Graph::backward`]
/// once on a scalar, then drop it.
#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
    params: HashMap<ParamId, Var>,
}

fn gemm(m: usize, k: usize, n: usize, a: &[f64], ta: bool, b: &[f64], tb: bool, c: &mut [f64], acc: bool) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    if m == 0 || n == 0 {
        return;
    }
    let (rsa, csa) = if ta { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if tb { (1, k as isize) } else { (n as isize, 1) };
    let beta = if acc { 1.0 } else { 0.0 };
    // SAFETY: slice lengths checked above, strides describe those slices.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

fn quat_at(d: &[f64], i: usize) -> Quaternion {
    Quaternion::from_slice(&d[4 * i..4 * i + 4])
}

fn add_quat(d: &mut [f64], i: usize, q: Quaternion) {
    d[4 * i] += q.w;
    d[4 * i + 1] += q.x;
    d[4 * i + 2] += q.y;
    d[4 * i + 3] += q.z;
}

fn vec_at(d: &[f64], i: usize) -> Vec3 {
    [d[3 * i], d[3 * i + 1], d[3 * i + 2]]
}

fn add_vec(d: &mut [f64], i: usize, v: Vec3) {
    d[3 * i] += v[0];
    d[3 * i + 1] += v[1];
    d[3 * i + 2] += v[2];
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Gradient of `qrotate(q, v)` with respect to `q`, contracted with `g`.
fn qrotate_grad_q(q: Quaternion, v: Vec3, g: Vec3) -> Quaternion {
    let u = [q.x, q.y, q.z];
    let gv = dot3(g, v);
    let gu = dot3(g, u);
    let uv = dot3(u, v);
    let uxv = cross3(u, v);
    let vxg = cross3(v, g);
    let w = q.w;
    Quaternion::new(
        2.0 * w * gv + 2.0 * dot3(uxv, g),
        -2.0 * gv * u[0] + 2.0 * gu * v[0] + 2.0 * uv * g[0] + 2.0 * w * vxg[0],
        -2.0 * gv * u[1] + 2.0 * gu * v[1] + 2.0 * uv * g[1] + 2.0 * w * vxg[1],
        -2.0 * gv * u[2] + 2.0 * gu * v[2] + 2.0 * uv * g[2] + 2.0 * w * vxg[2],
    )
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        let needs_grad = match &op {
            Op::Leaf => false,
            Op::Param(_) => true,
            Op::MatMul(a, b)
            | Op::AddBias(a, b)
            | Op::Add(a, b)
            | Op::Sub(a, b)
            | Op::Mul(a, b)
            | Op::SelectRows(_, a, b)
            | Op::QuatMul(a, b)
            | Op::Fk(_, a, b)
            | Op::MeanDistance(a, b, _)
            | Op::WrappedL1(a, b)
            | Op::MeanAbs(a, b)
            | Op::GaitMae(a, b) => self.needs(*a) || self.needs(*b),
            Op::Scale(a, _)
            | Op::Sigmoid(a)
            | Op::Tanh(a)
            | Op::LeakyRelu(a, _)
            | Op::SliceCols(a, _)
            | Op::BroadcastRows(a)
            | Op::Sum(a)
            | Op::QuatNormalize(a)
            | Op::QuatToEuler(_, a)
            | Op::NormPenalty(a, _) => self.needs(*a),
            Op::ConcatCols(vs) | Op::StackRows(vs) => vs.iter().any(|v| self.needs(*v)),
        };
        self.nodes.push(Node { value, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value.item()
    }

    fn data(&self, v: Var) -> &[f64] {
        self.nodes[v.0].value.data()
    }

    fn dims(&self, v: Var) -> (usize, usize) {
        let t = &self.nodes[v.0].value;
        (t.rows(), t.cols())
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf)
    }

    /// Parameter node; repeated calls for the same id return the same node.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        if let Some(&v) = self.params.get(&id) {
            return v;
        }
        let v = self.push(store.value(id).clone(), Op::Param(id));
        self.params.insert(id, v);
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let (m, k) = self.dims(a);
        let (k2, n) = self.dims(b);
        assert_eq!(k, k2, "matmul inner dimensions");
        let mut out = vec![0.0; m * n];
        gemm(m, k, n, self.data(a), false, self.data(b), false, &mut out, false);
        self.push(Tensor::matrix(m, n, out), Op::MatMul(a, b))
    }

    /// Adds a `1×n` row to every row of `x`.
    pub fn add_bias(&mut self, x: Var, b: Var) -> Var {
        let (r, c) = self.dims(x);
        assert_eq!(self.dims(b), (1, c), "bias shape");
        let bias = self.data(b);
        let out: Vec<f64> = self.data(x).iter().enumerate().map(|(i, v)| v + bias[i % c]).collect();
        self.push(Tensor::matrix(r, c, out), Op::AddBias(x, b))
    }

    fn zip(&mut self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64, op: Op) -> Var {
        assert_eq!(self.dims(a), self.dims(b), "elementwise shapes");
        let (r, c) = self.dims(a);
        let out = self.data(a).iter().zip(self.data(b)).map(|(x, y)| f(*x, *y)).collect();
        self.push(Tensor::matrix(r, c, out), op)
    }

    fn map(&mut self, a: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let (r, c) = self.dims(a);
        let out = self.data(a).iter().map(|x| f(*x)).collect();
        self.push(Tensor::matrix(r, c, out), op)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.zip(a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        self.zip(a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        self.zip(a, b, |x, y| x * y, Op::Mul(a, b))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        self.map(a, |x| x * s, Op::Scale(a, s))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.map(a, |x| 1.0 / (1.0 + (-x).exp()), Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.map(a, f64::tanh, Op::Tanh(a))
    }

    pub fn leaky_relu(&mut self, a: Var, slope: f64) -> Var {
        self.map(a, |x| if x > 0.0 { x } else { slope * x }, Op::LeakyRelu(a, slope))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let rows = self.dims(parts[0]).0;
        let total: usize = parts.iter().map(|p| self.dims(*p).1).sum();
        let mut out = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for p in parts {
                let (pr, pc) = self.dims(*p);
                assert_eq!(pr, rows, "concat row counts");
                out.extend_from_slice(&self.data(*p)[r * pc..(r + 1) * pc]);
            }
        }
        self.push(Tensor::matrix(rows, total, out), Op::ConcatCols(parts.to_vec()))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Var {
        let (r, c) = self.dims(a);
        assert!(start + len <= c, "slice out of range");
        let d = self.data(a);
        let mut out = Vec::with_capacity(r * len);
        for i in 0..r {
            out.extend_from_slice(&d[i * c + start..i * c + start + len]);
        }
        self.push(Tensor::matrix(r, len, out), Op::SliceCols(a, start))
    }

    pub fn stack_rows(&mut self, parts: &[Var]) -> Var {
        let c = self.dims(parts[0]).1;
        let mut out = Vec::new();
        let mut rows = 0;
        for p in parts {
            let (pr, pc) = self.dims(*p);
            assert_eq!(pc, c, "stack column counts");
            rows += pr;
            out.extend_from_slice(self.data(*p));
        }
        self.push(Tensor::matrix(rows, c, out), Op::StackRows(parts.to_vec()))
    }

    /// Repeats a `1×c` row `n` times.
    pub fn broadcast_rows(&mut self, a: Var, n: usize) -> Var {
        let (r, c) = self.dims(a);
        assert_eq!(r, 1, "broadcast needs a single row");
        let out = self.data(a).repeat(n);
        self.push(Tensor::matrix(n, c, out), Op::BroadcastRows(a))
    }

    /// Row `i` comes from `a` where `take_a[i]`, otherwise from `b`.
    pub fn select_rows(&mut self, take_a: &[bool], a: Var, b: Var) -> Var {
        assert_eq!(self.dims(a), self.dims(b), "select shapes");
        let (r, c) = self.dims(a);
        assert_eq!(take_a.len(), r, "select mask length");
        let mut out = Vec::with_capacity(r * c);
        for (i, &t) in take_a.iter().enumerate() {
            let src = if t { self.data(a) } else { self.data(b) };
            out.extend_from_slice(&src[i * c..(i + 1) * c]);
        }
        self.push(Tensor::matrix(r, c, out), Op::SelectRows(take_a.into(), a, b))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.data(a).iter().sum();
        self.push(Tensor::scalar(s), Op::Sum(a))
    }

    /// Normalizes each group of four columns to a unit quaternion.
    pub fn quat_normalize(&mut self, a: Var) -> Result<Var> {
        let (r, c) = self.dims(a);
        assert_eq!(c % 4, 0, "quaternion columns");
        let mut out = self.data(a).to_vec();
        for q in out.chunks_exact_mut(4) {
            let n = q.iter().map(|x| x * x).sum::<f64>().sqrt();
            if !(n > DEGENERATE_NORM) {
                return Err(Error::DegenerateQuaternion { norm: n });
            }
            q.iter_mut().for_each(|x| *x /= n);
        }
        Ok(self.push(Tensor::matrix(r, c, out), Op::QuatNormalize(a)))
    }

    /// Hamilton product per group of four columns.
    pub fn quat_mul(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.dims(a), self.dims(b), "quat_mul shapes");
        let (r, c) = self.dims(a);
        let (da, db) = (self.data(a), self.data(b));
        let mut out = Vec::with_capacity(r * c);
        for i in 0..r * c / 4 {
            out.extend_from_slice(&qmul(quat_at(da, i), quat_at(db, i)).to_array());
        }
        self.push(Tensor::matrix(r, c, out), Op::QuatMul(a, b))
    }

    /// Batched forward kinematics: `rot` is `B×4J`, `root` is `B×3`, output `B×3J`.
    pub fn forward_kinematics(&mut self, skeleton: &Arc<Skeleton>, rot: Var, root: Var) -> Var {
        let j = skeleton.len();
        let (b, c) = self.dims(rot);
        assert_eq!(c, 4 * j, "rotation columns");
        assert_eq!(self.dims(root), (b, 3), "root shape");
        let out = crate::skeleton::batched_forward_kinematics(skeleton, self.data(rot), self.data(root));
        self.push(Tensor::matrix(b, 3 * j, out), Op::Fk(skeleton.clone(), rot, root))
    }

    /// Converts each quaternion to Euler angles using the order of its slot.
    pub fn quat_to_euler(&mut self, q: Var, orders: &Arc<[EulerOrder]>) -> Var {
        let (r, c) = self.dims(q);
        let m = orders.len();
        assert_eq!(c, 4 * m, "euler slot count");
        let d = self.data(q);
        let mut out = Vec::with_capacity(r * 3 * m);
        for i in 0..r * m {
            out.extend_from_slice(&quat_to_euler(quat_at(d, i), orders[i % m]));
        }
        self.push(Tensor::matrix(r, 3 * m, out), Op::QuatToEuler(orders.clone(), q))
    }

    /// Mean Euclidean (or squared) distance between 3-vectors of `a` and `target`.
    pub fn mean_distance(&mut self, a: Var, target: Var, squared: bool) -> Var {
        assert_eq!(self.dims(a), self.dims(target), "distance shapes");
        let (da, dt) = (self.data(a), self.data(target));
        let n = da.len() / 3;
        let mut s = 0.0;
        for i in 0..n {
            let d2: f64 = (0..3).map(|k| (da[3 * i + k] - dt[3 * i + k]).powi(2)).sum();
            s += if squared { d2 } else { d2.sqrt() };
        }
        self.push(Tensor::scalar(s / n.max(1) as f64), Op::MeanDistance(a, target, squared))
    }

    /// Mean over quaternions of `lambda * (|q|^2 - 1)^2`.
    pub fn norm_penalty(&mut self, a: Var, lambda: f64) -> Var {
        let d = self.data(a);
        let n = d.len() / 4;
        let s: f64 = d
            .chunks_exact(4)
            .map(|q| {
                let n2: f64 = q.iter().map(|x| x * x).sum();
                lambda * (n2 - 1.0).powi(2)
            })
            .sum();
        self.push(Tensor::scalar(s / n.max(1) as f64), Op::NormPenalty(a, lambda))
    }

    /// Mean absolute angle difference, taking the best match modulo 2π.
    pub fn wrapped_l1(&mut self, a: Var, target: Var) -> Var {
        assert_eq!(self.dims(a), self.dims(target), "wrapped_l1 shapes");
        let (da, dt) = (self.data(a), self.data(target));
        let s: f64 = da.iter().zip(dt).map(|(x, y)| periodic_abs_diff(x - y)).sum();
        let n = da.len().max(1) as f64;
        self.push(Tensor::scalar(s / n), Op::WrappedL1(a, target))
    }

    pub fn mean_abs(&mut self, a: Var, target: Var) -> Var {
        assert_eq!(self.dims(a), self.dims(target), "mean_abs shapes");
        let (da, dt) = (self.data(a), self.data(target));
        let s: f64 = da.iter().zip(dt).map(|(x, y)| (x - y).abs()).sum();
        let n = da.len().max(1) as f64;
        self.push(Tensor::scalar(s / n), Op::MeanAbs(a, target))
    }

    /// Gait feature MAE. `pred` rows are `(cos, sin, frequency, speed)`, the
    /// facing versor being compared by wrapped angle; `target` rows are
    /// `(facing, frequency, speed)`. The target receives no gradient.
    pub fn gait_mae(&mut self, pred: Var, target: Var) -> Var {
        let (s, c) = self.dims(pred);
        assert_eq!(c, 4, "gait prediction columns");
        assert_eq!(self.dims(target), (s, 3), "gait target shape");
        let (p, t) = (self.data(pred), self.data(target));
        let mut sum = 0.0;
        for i in 0..s {
            let facing = p[4 * i + 1].atan2(p[4 * i]);
            sum += periodic_abs_diff(facing - t[3 * i]);
            sum += (p[4 * i + 2] - t[3 * i + 1]).abs();
            sum += (p[4 * i + 3] - t[3 * i + 2]).abs();
        }
        let n = (3 * s).max(1) as f64;
        self.push(Tensor::scalar(sum / n), Op::GaitMae(pred, target))
    }

    /// Accumulates d`loss`/dθ into the gradient buffers of `store`.
    pub fn backward(&self, loss: Var, store: &mut ParamStore) {
        assert_eq!(self.value(loss).len(), 1, "backward needs a scalar");
        let mut grads: Vec<Vec<f64>> = vec![Vec::new(); loss.0 + 1];
        grads[loss.0] = vec![1.0];
        for i in (0..=loss.0).rev() {
            if grads[i].is_empty() || !self.nodes[i].needs_grad {
                continue;
            }
            let g = std::mem::take(&mut grads[i]);
            self.backward_node(i, &g, &mut grads, store);
        }
    }

    fn slot<'a>(&self, grads: &'a mut [Vec<f64>], v: Var) -> Option<&'a mut Vec<f64>> {
        if !self.nodes[v.0].needs_grad {
            return None;
        }
        let slot = &mut grads[v.0];
        if slot.is_empty() {
            *slot = vec![0.0; self.nodes[v.0].value.len()];
        }
        Some(slot)
    }

    fn backward_node(&self, i: usize, g: &[f64], grads: &mut [Vec<f64>], store: &mut ParamStore) {
        let node = &self.nodes[i];
        let y = node.value.data();
        match &node.op {
            Op::Leaf => {}
            Op::Param(id) => {
                for (acc, v) in store.get_mut(*id).grad.iter_mut().zip(g) {
                    *acc += v;
                }
            }
            Op::MatMul(a, b) => {
                let (m, k) = self.dims(*a);
                let n = self.dims(*b).1;
                if let Some(ga) = self.slot(grads, *a) {
                    gemm(m, n, k, g, false, self.data(*b), true, ga, true);
                }
                if let Some(gb) = self.slot(grads, *b) {
                    gemm(k, m, n, self.data(*a), true, g, false, gb, true);
                }
            }
            Op::AddBias(x, b) => {
                let c = self.dims(*x).1;
                if let Some(gx) = self.slot(grads, *x) {
                    gx.iter_mut().zip(g).for_each(|(a, v)| *a += v);
                }
                if let Some(gb) = self.slot(grads, *b) {
                    for row in g.chunks_exact(c) {
                        gb.iter_mut().zip(row).for_each(|(a, v)| *a += v);
                    }
                }
            }
            Op::Add(a, b) | Op::Sub(a, b) => {
                let sb = if matches!(node.op, Op::Sub(..)) { -1.0 } else { 1.0 };
                if let Some(ga) = self.slot(grads, *a) {
                    ga.iter_mut().zip(g).for_each(|(x, v)| *x += v);
                }
                if let Some(gb) = self.slot(grads, *b) {
                    gb.iter_mut().zip(g).for_each(|(x, v)| *x += sb * v);
                }
            }
            Op::Mul(a, b) => {
                if let Some(ga) = self.slot(grads, *a) {
                    let db = self.data(*b);
                    for k in 0..g.len() {
                        ga[k] += g[k] * db[k];
                    }
                }
                if let Some(gb) = self.slot(grads, *b) {
                    let da = self.data(*a);
                    for k in 0..g.len() {
                        gb[k] += g[k] * da[k];
                    }
                }
            }
            Op::Scale(a, s) => {
                if let Some(ga) = self.slot(grads, *a) {
                    ga.iter_mut().zip(g).for_each(|(x, v)| *x += s * v);
                }
            }
            Op::Sigmoid(a) => {
                if let Some(ga) = self.slot(grads, *a) {
                    for k in 0..g.len() {
                        ga[k] += g[k] * y[k] * (1.0 - y[k]);
                    }
                }
            }
            Op::Tanh(a) => {
                if let Some(ga) = self.slot(grads, *a) {
                    for k in 0..g.len() {
                        ga[k] += g[k] * (1.0 - y[k] * y[k]);
                    }
                }
            }
            Op::LeakyRelu(a, slope) => {
                let x = self.data(*a);
                if let Some(ga) = self.slot(grads, *a) {
                    for k in 0..g.len() {
                        ga[k] += if x[k] > 0.0 { g[k] } else { slope * g[k] };
                    }
                }
            }
            Op::ConcatCols(parts) => {
                let (rows, total) = (node.value.rows(), node.value.cols());
                let mut off = 0;
                for p in parts {
                    let pc = self.dims(*p).1;
                    if let Some(gp) = self.slot(grads, *p) {
                        for r in 0..rows {
                            for c in 0..pc {
                                gp[r * pc + c] += g[r * total + off + c];
                            }
                        }
                    }
                    off += pc;
                }
            }
            Op::SliceCols(a, start) => {
                let (r, len) = (node.value.rows(), node.value.cols());
                let c = self.dims(*a).1;
                if let Some(ga) = self.slot(grads, *a) {
                    for i in 0..r {
                        for k in 0..len {
                            ga[i * c + start + k] += g[i * len + k];
                        }
                    }
                }
            }
            Op::StackRows(parts) => {
                let mut off = 0;
                for p in parts {
                    let n = self.value(*p).len();
                    if let Some(gp) = self.slot(grads, *p) {
                        gp.iter_mut().zip(&g[off..off + n]).for_each(|(x, v)| *x += v);
                    }
                    off += n;
                }
            }
            Op::BroadcastRows(a) => {
                let c = node.value.cols();
                if let Some(ga) = self.slot(grads, *a) {
                    for row in g.chunks_exact(c) {
                        ga.iter_mut().zip(row).for_each(|(x, v)| *x += v);
                    }
                }
            }
            Op::SelectRows(mask, a, b) => {
                let c = node.value.cols();
                for (src, want) in [(*a, true), (*b, false)] {
                    if let Some(gs) = self.slot(grads, src) {
                        for (r, &t) in mask.iter().enumerate() {
                            if t == want {
                                for k in r * c..(r + 1) * c {
                                    gs[k] += g[k];
                                }
                            }
                        }
                    }
                }
            }
            Op::Sum(a) => {
                if let Some(ga) = self.slot(grads, *a) {
                    ga.iter_mut().for_each(|x| *x += g[0]);
                }
            }
            Op::QuatNormalize(a) => {
                let x = self.data(*a);
                if let Some(ga) = self.slot(grads, *a) {
                    for q in 0..g.len() / 4 {
                        let s = 4 * q..4 * q + 4;
                        let n = x[s.clone()].iter().map(|v| v * v).sum::<f64>().sqrt();
                        let yg: f64 = (0..4).map(|k| y[4 * q + k] * g[4 * q + k]).sum();
                        for k in s {
                            ga[k] += (g[k] - y[k] * yg) / n;
                        }
                    }
                }
            }
            Op::QuatMul(a, b) => {
                let (da, db) = (self.data(*a), self.data(*b));
                let count = g.len() / 4;
                if let Some(ga) = self.slot(grads, *a) {
                    for q in 0..count {
                        add_quat(ga, q, qmul(quat_at(g, q), quat_at(db, q).conjugate()));
                    }
                }
                if let Some(gb) = self.slot(grads, *b) {
                    for q in 0..count {
                        add_quat(gb, q, qmul(quat_at(da, q).conjugate(), quat_at(g, q)));
                    }
                }
            }
            Op::Fk(skel, rot, root) => self.backward_fk(skel, *rot, *root, g, grads),
            Op::QuatToEuler(orders, q) => {
                let d = self.data(*q);
                let m = orders.len();
                if let Some(gq) = self.slot(grads, *q) {
                    for i in 0..d.len() / 4 {
                        let (_, jac) = quat_to_euler_jacobian(quat_at(d, i), orders[i % m]);
                        for (r, row) in jac.iter().enumerate() {
                            for k in 0..4 {
                                gq[4 * i + k] += g[3 * i + r] * row[k];
                            }
                        }
                    }
                }
            }
            Op::MeanDistance(a, t, squared) => {
                let (da, dt) = (self.data(*a), self.data(*t));
                let n = (da.len() / 3).max(1) as f64;
                let mut diff = vec![0.0; da.len()];
                for p in 0..da.len() / 3 {
                    let d = [0, 1, 2].map(|k| da[3 * p + k] - dt[3 * p + k]);
                    let f = if *squared {
                        2.0
                    } else {
                        let len = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
                        if len > 0.0 {
                            1.0 / len
                        } else {
                            0.0
                        }
                    };
                    for k in 0..3 {
                        diff[3 * p + k] = g[0] * f * d[k] / n;
                    }
                }
                if let Some(ga) = self.slot(grads, *a) {
                    ga.iter_mut().zip(&diff).for_each(|(x, v)| *x += v);
                }
                if let Some(gt) = self.slot(grads, *t) {
                    gt.iter_mut().zip(&diff).for_each(|(x, v)| *x -= v);
                }
            }
            Op::NormPenalty(a, lambda) => {
                let x = self.data(*a);
                let n = (x.len() / 4).max(1) as f64;
                if let Some(ga) = self.slot(grads, *a) {
                    for q in 0..x.len() / 4 {
                        let n2: f64 = x[4 * q..4 * q + 4].iter().map(|v| v * v).sum();
                        let f = g[0] * 4.0 * lambda * (n2 - 1.0) / n;
                        for k in 4 * q..4 * q + 4 {
                            ga[k] += f * x[k];
                        }
                    }
                }
            }
            Op::WrappedL1(a, t) | Op::MeanAbs(a, t) => {
                let wrap = matches!(node.op, Op::WrappedL1(..));
                let (da, dt) = (self.data(*a), self.data(*t));
                let n = da.len().max(1) as f64;
                let s: Vec<f64> = da
                    .iter()
                    .zip(dt)
                    .map(|(x, y)| {
                        let d = if wrap { wrap_angle(x - y) } else { x - y };
                        g[0] * sign(d) / n
                    })
                    .collect();
                if let Some(ga) = self.slot(grads, *a) {
                    ga.iter_mut().zip(&s).for_each(|(x, v)| *x += v);
                }
                if let Some(gt) = self.slot(grads, *t) {
                    gt.iter_mut().zip(&s).for_each(|(x, v)| *x -= v);
                }
            }
            Op::GaitMae(pred, target) => {
                let (p, t) = (self.data(*pred), self.data(*target));
                let s = p.len() / 4;
                let n = (3 * s).max(1) as f64;
                if let Some(gp) = self.slot(grads, *pred) {
                    for i in 0..s {
                        let (c, sn) = (p[4 * i], p[4 * i + 1]);
                        let r2 = c * c + sn * sn;
                        let e = sign(wrap_angle(sn.atan2(c) - t[3 * i])) * g[0] / n;
                        if r2 > 0.0 {
                            gp[4 * i] += -e * sn / r2;
                            gp[4 * i + 1] += e * c / r2;
                        }
                        gp[4 * i + 2] += sign(p[4 * i + 2] - t[3 * i + 1]) * g[0] / n;
                        gp[4 * i + 3] += sign(p[4 * i + 3] - t[3 * i + 2]) * g[0] / n;
                    }
                }
            }
        }
    }

    fn backward_fk(&self, skel: &Skeleton, rot: Var, root: Var, g: &[f64], grads: &mut [Vec<f64>]) {
        let j = skel.len();
        let r = self.data(rot);
        let b = self.dims(rot).0;
        let mut grot = vec![0.0; r.len()];
        let mut groot = vec![0.0; 3 * b];
        let mut world = vec![Quaternion::IDENTITY; j];
        let mut gw = vec![Quaternion::new(0.0, 0.0, 0.0, 0.0); j];
        let mut gp = vec![[0.0; 3]; j];
        for row in 0..b {
            let local = &r[row * 4 * j..(row + 1) * 4 * j];
            for k in 0..j {
                let q = quat_at(local, k);
                world[k] = match skel.parent(k) {
                    Some(p) => qmul(world[p], q),
                    None => q,
                };
                gw[k] = Quaternion::new(0.0, 0.0, 0.0, 0.0);
                gp[k] = vec_at(&g[row * 3 * j..], k);
            }
            let out = &mut grot[row * 4 * j..(row + 1) * 4 * j];
            for k in (1..j).rev() {
                let p = skel.parent(k).expect("non-root joint has a parent");
                let gpk = gp[k];
                for c in 0..3 {
                    gp[p][c] += gpk[c];
                }
                let gq = qrotate_grad_q(world[p], skel.offset(k), gpk);
                let q = quat_at(local, k);
                let ga = qmul(gw[k], q.conjugate());
                let gwp = gw[p];
                gw[p] = Quaternion::new(
                    gwp.w + gq.w + ga.w,
                    gwp.x + gq.x + ga.x,
                    gwp.y + gq.y + ga.y,
                    gwp.z + gq.z + ga.z,
                );
                add_quat(out, k, qmul(world[p].conjugate(), gw[k]));
            }
            add_quat(out, 0, gw[0]);
            add_vec(&mut groot, row, gp[0]);
        }
        if let Some(gr) = self.slot(grads, rot) {
            gr.iter_mut().zip(&grot).for_each(|(x, v)| *x += v);
        }
        if let Some(gr) = self.slot(grads, root) {
            gr.iter_mut().zip(&groot).for_each(|(x, v)| *x += v);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::check_gradients;
    use crate::skeleton::{JointDef, Skeleton};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_store(rng: &mut ChaCha8Rng, shapes: &[(usize, usize)]) -> ParamStore {
        let mut s = ParamStore::new();
        for (i, (r, c)) in shapes.iter().enumerate() {
            let d = (0..r * c).map(|_| rng.gen_range(-1.0..1.0)).collect();
            s.add(format!("p{i}"), Tensor::matrix(*r, *c, d));
        }
        s
    }

    fn ids(s: &ParamStore) -> Vec<ParamId> {
        s.ids().collect()
    }

    #[test]
    fn sum_gives_ones_and_accumulates() {
        let mut s = ParamStore::new();
        let id = s.add("t", Tensor::matrix(2, 2, vec![1.0, 2.0, 3.0, 4.0]));
        for round in 1..=2 {
            let mut g = Graph::new();
            let p = g.param(&s, id);
            let l = g.sum(p);
            g.backward(l, &mut s);
            assert!(s.grad(id).iter().all(|v| *v == round as f64));
        }
        s.zero_grad();
        assert!(s.grad(id).iter().all(|v| *v == 0.0));
    }

    #[test]
    fn elementwise_and_structural_ops() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..10 {
            let mut s = rand_store(&mut rng, &[(3, 4), (4, 5), (1, 5), (3, 5), (3, 5)]);
            let p = ids(&s);
            let mask: Vec<bool> = (0..3).map(|_| rng.gen_bool(0.5)).collect();
            let r = check_gradients(&mut s, 1e-5, |g, s| {
                let a = g.param(s, p[0]);
                let w = g.param(s, p[1]);
                let b = g.param(s, p[2]);
                let c = g.param(s, p[3]);
                let d = g.param(s, p[4]);
                let x = g.matmul(a, w);
                let x = g.add_bias(x, b);
                let y = g.sigmoid(x);
                let z = g.tanh(c);
                let l = g.leaky_relu(d, 0.05);
                let m = g.mul(y, z);
                let m = g.sub(m, l);
                let sel = g.select_rows(&mask, m, y);
                let cat = g.concat_cols(&[sel, z]);
                let sl = g.slice_cols(cat, 3, 4);
                let st = g.stack_rows(&[sl, sl]);
                let bc = g.broadcast_rows(b, 2);
                let bc = g.slice_cols(bc, 0, 4);
                let st2 = g.stack_rows(&[bc, st]);
                let sq = g.mul(st2, st2);
                let sc = g.scale(sq, 0.7);
                Ok(g.sum(sc))
            })
            .unwrap();
            assert!(r.max_rel_error < 1e-4, "{}", r.worst);
        }
    }

    #[test]
    fn quaternion_ops() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let skel = Arc::new(
            Skeleton::new(vec![
                JointDef::new("r", None, [0.0; 3]),
                JointDef::new("a", Some(0), [0.3, 1.0, 0.0]),
                JointDef::new("b", Some(1), [0.0, 1.0, -0.2]),
                JointDef::new("c", Some(0), [0.5, -0.4, 0.1]),
            ])
            .unwrap(),
        );
        let orders: Arc<[EulerOrder]> = EulerOrder::ALL[..4].to_vec().into();
        for _ in 0..10 {
            let mut s = rand_store(&mut rng, &[(2, 16), (2, 16), (2, 3), (2, 12), (2, 12)]);
            let p = ids(&s);
            let r = check_gradients(&mut s, 1e-5, |g, s| {
                let raw = g.param(s, p[0]);
                let other = g.param(s, p[1]);
                let root = g.param(s, p[2]);
                let target = g.param(s, p[3]);
                let eul_t = g.param(s, p[4]);
                let pen = g.norm_penalty(raw, 0.01);
                let q = g.quat_normalize(raw)?;
                let o = g.quat_normalize(other)?;
                let q = g.quat_mul(o, q);
                let pos = g.forward_kinematics(&skel, q, root);
                let d = g.mean_distance(pos, target, false);
                let d2 = g.mean_distance(pos, target, true);
                let e = g.quat_to_euler(q, &orders);
                let w = g.wrapped_l1(e, eul_t);
                let ma = g.mean_abs(e, eul_t);
                let l = g.add(pen, d);
                let l = g.add(l, d2);
                let l = g.add(l, w);
                Ok(g.add(l, ma))
            })
            .unwrap();
            assert!(r.max_rel_error < 1e-4, "{}", r.worst);
        }
    }

    #[test]
    fn gait_mae_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10 {
            let mut s = rand_store(&mut rng, &[(5, 4)]);
            let t: Vec<f64> = (0..15).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let p = ids(&s);
            let r = check_gradients(&mut s, 1e-5, |g, s| {
                let a = g.param(s, p[0]);
                let t = g.constant(Tensor::matrix(5, 3, t.clone()));
                Ok(g.gait_mae(a, t))
            })
            .unwrap();
            assert!(r.max_rel_error < 1e-4, "{}", r.worst);
        }
    }

    #[test]
    fn zero_distance_has_zero_gradient() {
        let mut s = ParamStore::new();
        let id = s.add("p", Tensor::matrix(1, 3, vec![1.0, 2.0, 3.0]));
        let mut g = Graph::new();
        let p = g.param(&s, id);
        let t = g.constant(Tensor::matrix(1, 3, vec![1.0, 2.0, 3.0]));
        let l = g.mean_distance(p, t, false);
        g.backward(l, &mut s);
        assert_eq!(g.scalar(l), 0.0);
        assert!(s.grad(id).iter().all(|v| *v == 0.0));
    }
}
