#![allow(dead_code)]

use mwclass::{Label, Matrix};
use serde::Deserialize;
use std::f64::consts::PI;

#[derive(Debug, Clone, Deserialize)]
pub struct Instance {
    pub name: String,
    pub d: usize,
    pub x: Vec<Vec<f64>>,
    pub y: Vec<Label>,
    pub dwd_penalty: f64,
    pub svm_lambda: f64,
}

impl Instance {
    /// Covariates as a `d × n` matrix, one column per sample.
    pub fn matrix(&self) -> Matrix {
        Matrix::from_fn(self.d, self.x.len(), |j, i| self.x[i][j])
    }
}

pub fn small_instances() -> Vec<Instance> {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/small_instances.json");
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `min_ξ≥0 1/(u + ξ) + Cξ`.
pub fn dwd_slack_loss(u: f64, c: f64) -> f64 {
    if u >= 1.0 / c.sqrt() {
        1.0 / u
    } else {
        2.0 * c.sqrt() - c * u
    }
}

pub fn dwd_reference_objective(inst: &Instance, b: &[f64], beta: f64) -> f64 {
    inst.x
        .iter()
        .zip(&inst.y)
        .map(|(xi, &y)| dwd_slack_loss(f64::from(y) * (dot(xi, b) + beta), inst.dwd_penalty))
        .sum()
}

pub fn svm_reference_objective(inst: &Instance, b: &[f64], beta: f64) -> f64 {
    let n = inst.x.len() as f64;
    let hinge: f64 = inst
        .x
        .iter()
        .zip(&inst.y)
        .map(|(xi, &y)| (1.0 - f64::from(y) * (dot(xi, b) - beta)).max(0.0))
        .sum();
    hinge / n + inst.svm_lambda * dot(b, b)
}

/// Minimizes a convex function of one variable on `[lo, hi]`.
pub fn ternary_min(mut lo: f64, mut hi: f64, iters: usize, f: impl Fn(f64) -> f64) -> (f64, f64) {
    for _ in 0..iters {
        let a = lo + (hi - lo) / 3.0;
        let b = hi - (hi - lo) / 3.0;
        if f(a) <= f(b) {
            hi = b;
        } else {
            lo = a;
        }
    }
    let t = 0.5 * (lo + hi);
    (t, f(t))
}

fn directions(d: usize) -> Vec<Vec<f64>> {
    match d {
        1 => vec![vec![1.0], vec![-1.0]],
        2 => (0..720)
            .map(|k| {
                let t = 2.0 * PI * k as f64 / 720.0;
                vec![t.cos(), t.sin()]
            })
            .collect(),
        _ => panic!("grid oracle needs d ≤ 2"),
    }
}

/// Best DWD objective over unit directions × radii {0.25, 0.5, 0.75, 1},
/// with the intercept found by ternary search and the slack in closed form.
pub fn dwd_grid_oracle(inst: &Instance) -> f64 {
    let mut best = f64::INFINITY;
    for dir in directions(inst.d) {
        for r in [0.25, 0.5, 0.75, 1.0] {
            let b: Vec<f64> = dir.iter().map(|v| v * r).collect();
            let (_, val) = ternary_min(-100.0, 100.0, 200, |beta| dwd_reference_objective(inst, &b, beta));
            best = best.min(val);
        }
    }
    best
}

/// Exact minimum over the intercept of the hinge objective: the objective is
/// piecewise linear in `β` with kinks at `x⊺b − y`.
pub fn svm_best_intercept(inst: &Instance, b: &[f64]) -> (f64, f64) {
    let mut best = (0.0, svm_reference_objective(inst, b, 0.0));
    for (xi, &y) in inst.x.iter().zip(&inst.y) {
        let beta = dot(xi, b) - f64::from(y);
        let val = svm_reference_objective(inst, b, beta);
        if val < best.1 {
            best = (beta, val);
        }
    }
    best
}

/// Subgradient descent on `b ↦ min_β F(b, β)` with step `1/(2λt)`, keeping
/// the best iterate.
pub fn svm_subgradient_oracle(inst: &Instance, iterations: usize) -> f64 {
    let n = inst.x.len() as f64;
    let lambda = inst.svm_lambda;
    let mut b = vec![0.0; inst.d];
    let mut best = svm_best_intercept(inst, &b).1;
    for t in 1..=iterations {
        let (beta, val) = svm_best_intercept(inst, &b);
        best = best.min(val);
        let mut g: Vec<f64> = b.iter().map(|v| 2.0 * lambda * v).collect();
        for (xi, &y) in inst.x.iter().zip(&inst.y) {
            let yf = f64::from(y);
            if 1.0 - yf * (dot(xi, &b) - beta) > 0.0 {
                for (gj, xj) in g.iter_mut().zip(xi) {
                    *gj -= yf * xj / n;
                }
            }
        }
        let step = 1.0 / (2.0 * lambda * t as f64);
        for (bj, gj) in b.iter_mut().zip(&g) {
            *bj -= step * gj;
        }
    }
    best.min(svm_best_intercept(inst, &b).1)
}

/// Nested ternary search over `b` (d ≤ 2) with the exact intercept.
pub fn svm_ternary_oracle(inst: &Instance) -> f64 {
    let bound = 1.0 / inst.svm_lambda.sqrt() + 1.0;
    match inst.d {
        1 => ternary_min(-bound, bound, 200, |b| svm_best_intercept(inst, &[b]).1).1,
        2 => {
            ternary_min(-bound, bound, 120, |b0| {
                ternary_min(-bound, bound, 120, |b1| svm_best_intercept(inst, &[b0, b1]).1).1
            })
            .1
        }
        _ => panic!("ternary oracle needs d ≤ 2"),
    }
}
