//! Plain f64 re-implementations of the networks, used as finite-difference
//! oracles, and the comparison helpers built on them.

#![allow(dead_code)]

use dsp_core::models::Network;
use dsp_core::Tensor;

pub const FD_STEP: f64 = 1e-3;
pub const REL_TOL: f64 = 1e-3;
/// Gradients smaller than this are compared absolutely.
pub const REL_FLOOR: f64 = 1e-3;
const SLOPE: f64 = 0.2;

pub fn rel_err(ad: f64, fd: f64) -> f64 {
    (ad - fd).abs() / ad.abs().max(fd.abs()).max(REL_FLOOR)
}

/// Row-major matrix.
#[derive(Clone, Debug)]
pub struct M {
    pub rows: usize,
    pub cols: usize,
    pub v: Vec<f64>,
}

impl M {
    pub fn from_tensor(t: &Tensor) -> Self {
        M {
            rows: t.rows(),
            cols: t.cols(),
            v: t.data().iter().map(|&x| x as f64).collect(),
        }
    }

    fn at(&self, i: usize, j: usize) -> f64 {
        self.v[i * self.cols + j]
    }

    fn hcat(&self, other: &M) -> M {
        let cols = self.cols + other.cols;
        let mut v = Vec::with_capacity(self.rows * cols);
        for i in 0..self.rows {
            v.extend_from_slice(&self.v[i * self.cols..(i + 1) * self.cols]);
            v.extend_from_slice(&other.v[i * other.cols..(i + 1) * other.cols]);
        }
        M {
            rows: self.rows,
            cols,
            v,
        }
    }

    fn map(&self, f: impl Fn(f64) -> f64) -> M {
        M {
            rows: self.rows,
            cols: self.cols,
            v: self.v.iter().map(|&x| f(x)).collect(),
        }
    }

    fn zip(&self, o: &M, f: impl Fn(f64, f64) -> f64) -> M {
        assert_eq!((self.rows, self.cols), (o.rows, o.cols));
        M {
            rows: self.rows,
            cols: self.cols,
            v: self.v.iter().zip(&o.v).map(|(&a, &b)| f(a, b)).collect(),
        }
    }
}

/// Sequential reader over a flat parameter vector laid out in
/// `Network::parameters` order.
pub struct Params<'a> {
    flat: &'a [f64],
    shapes: &'a [(usize, usize)],
    at: usize,
    k: usize,
}

impl<'a> Params<'a> {
    pub fn new(flat: &'a [f64], shapes: &'a [(usize, usize)]) -> Self {
        Params {
            flat,
            shapes,
            at: 0,
            k: 0,
        }
    }

    fn next(&mut self) -> M {
        let (rows, cols) = self.shapes[self.k];
        let v = self.flat[self.at..self.at + rows * cols].to_vec();
        self.at += rows * cols;
        self.k += 1;
        M { rows, cols, v }
    }

    /// `(W, b)` of a dense layer.
    fn layer(&mut self) -> (M, M) {
        let w = self.next();
        let b = self.next();
        (w, b)
    }
}

fn dense(x: &M, (w, b): &(M, M)) -> M {
    assert_eq!(x.cols, w.rows);
    let mut v = vec![0.0; x.rows * w.cols];
    for i in 0..x.rows {
        for j in 0..w.cols {
            let mut s = b.v[j];
            for k in 0..x.cols {
                s += x.at(i, k) * w.at(k, j);
            }
            v[i * w.cols + j] = s;
        }
    }
    M {
        rows: x.rows,
        cols: w.cols,
        v,
    }
}

fn leaky(x: &M) -> M {
    x.map(|v| if v > 0.0 { v } else { SLOPE * v })
}

fn relu(x: &M) -> M {
    x.map(|v| v.max(0.0))
}

/// Output plus every pre-activation that passes through a kink.
pub struct Eval {
    pub out: M,
    pub kinks: Vec<f64>,
}

pub fn generator(p: &mut Params, noise: &M, cond: &M) -> Eval {
    let (hidden, out) = (p.layer(), p.layer());
    let a = dense(&noise.hcat(cond), &hidden);
    let b = dense(&leaky(&a), &out);
    let mut kinks = a.v.clone();
    kinks.extend_from_slice(&b.v);
    Eval {
        out: relu(&b),
        kinks,
    }
}

/// Critic scores (n×1) and the analytic input gradient ∂D/∂x (n×d).
pub fn critic(p: &mut Params, x: &M, z: &M) -> (Eval, M) {
    let (hidden, out) = (p.layer(), p.layer());
    let a = dense(&x.hcat(z), &hidden);
    let score = dense(&leaky(&a), &out);
    let d = x.cols;
    let mut grad = vec![0.0; x.rows * d];
    for i in 0..x.rows {
        for j in 0..d {
            let mut s = 0.0;
            for h in 0..a.cols {
                let slope = if a.at(i, h) > 0.0 { 1.0 } else { SLOPE };
                s += slope * out.0.at(h, 0) * hidden.0.at(j, h);
            }
            grad[i * d + j] = s;
        }
    }
    (
        Eval {
            out: score,
            kinks: a.v,
        },
        M {
            rows: x.rows,
            cols: d,
            v: grad,
        },
    )
}

pub fn v2sm(p: &mut Params, x: &M) -> Eval {
    let (input, inner, skip, out) = (p.layer(), p.layer(), p.layer(), p.layer());
    let a1 = dense(x, &input);
    let h1 = leaky(&a1);
    let a2 = dense(&h1, &inner);
    let h2 = leaky(&a2).zip(&dense(&h1, &skip), |u, v| u + v);
    let a3 = dense(&h2, &out);
    let mut kinks = a1.v.clone();
    kinks.extend_from_slice(&a2.v);
    kinks.extend_from_slice(&a3.v);
    Eval {
        out: relu(&a3),
        kinks,
    }
}

pub fn vope(p: &mut Params, z: &M) -> Eval {
    let (hidden, out, gate) = (p.layer(), p.layer(), p.layer());
    let a = dense(z, &hidden);
    let main = dense(&leaky(&a), &out);
    let g = dense(z, &gate).map(|v| 1.0 / (1.0 + (-v).exp()));
    Eval {
        out: main.zip(&g.zip(z, |s, v| s * v), |u, v| u + v),
        kinks: a.v,
    }
}

pub fn weighted_sum(m: &M, w: &M) -> f64 {
    m.v.iter().zip(&w.v).map(|(a, b)| a * b).sum()
}

pub fn flatten(net: &impl Network) -> (Vec<f64>, Vec<(usize, usize)>) {
    let ps = net.parameters();
    (
        ps.iter()
            .flat_map(|t| t.data().iter().map(|&v| v as f64))
            .collect(),
        ps.iter().map(|t| (t.rows(), t.cols())).collect(),
    )
}

#[derive(Debug, Default, Clone, Copy)]
pub struct FdStats {
    pub compared: usize,
    pub skipped: usize,
    pub worst: f64,
}

impl FdStats {
    pub fn merge(&mut self, o: FdStats) {
        self.compared += o.compared;
        self.skipped += o.skipped;
        self.worst = self.worst.max(o.worst);
    }
}

/// Compares reverse-mode gradients `ad` (flattened in parameter order) with
/// central differences of `loss`. Entries whose ±h probes put any kinked
/// pre-activation on different sides of zero are skipped.
pub fn fd_compare(theta: &[f64], ad: &[f64], loss: impl Fn(&[f64]) -> (f64, Vec<f64>)) -> FdStats {
    assert_eq!(theta.len(), ad.len());
    let side = |k: &[f64]| k.iter().map(|&v| v > 0.0).collect::<Vec<_>>();
    let base = side(&loss(theta).1);
    let mut probe = theta.to_vec();
    let mut stats = FdStats::default();
    for i in 0..theta.len() {
        probe[i] = theta[i] + FD_STEP;
        let (up, ku) = loss(&probe);
        probe[i] = theta[i] - FD_STEP;
        let (down, kd) = loss(&probe);
        probe[i] = theta[i];
        if side(&ku) != base || side(&kd) != base {
            stats.skipped += 1;
            continue;
        }
        let fd = (up - down) / (2.0 * FD_STEP);
        stats.worst = stats.worst.max(rel_err(ad[i], fd));
        stats.compared += 1;
    }
    stats
}
