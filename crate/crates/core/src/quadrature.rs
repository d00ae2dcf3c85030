//! Gauss–Legendre rules and the reference Q1/P1 shape functions.

use crate::error::{Error, Result};

/// Gauss–Legendre rule on `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule1D {
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
}

impl QuadratureRule1D {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Integrates `f` over `[a, b]` with the rule mapped affinely.
    pub fn integrate(&self, a: f64, b: f64, f: impl Fn(f64) -> f64) -> f64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        self.points
            .iter()
            .zip(&self.weights)
            .map(|(&p, &w)| w * f(mid + half * p))
            .sum::<f64>()
            * half
    }

    /// Physical points and weights of the rule on `[a, b]`.
    pub fn mapped(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        self.points.iter().zip(&self.weights).map(move |(&p, &w)| (mid + half * p, w * half))
    }
}

/// Standard `n`-point Gauss–Legendre nodes and weights, `n` in `1..=5`.
pub fn gauss_rule(n: usize) -> Result<QuadratureRule1D> {
    let (points, weights): (Vec<f64>, Vec<f64>) = match n {
        1 => (vec![0.0], vec![2.0]),
        2 => {
            let p = (1.0f64 / 3.0).sqrt();
            (vec![-p, p], vec![1.0, 1.0])
        }
        3 => {
            let p = (3.0f64 / 5.0).sqrt();
            (vec![-p, 0.0, p], vec![5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0])
        }
        4 => {
            let s = (6.0f64 / 5.0).sqrt();
            let inner = (3.0 / 7.0 - 2.0 / 7.0 * s).sqrt();
            let outer = (3.0 / 7.0 + 2.0 / 7.0 * s).sqrt();
            let w_in = (18.0 + 30.0f64.sqrt()) / 36.0;
            let w_out = (18.0 - 30.0f64.sqrt()) / 36.0;
            (vec![-outer, -inner, inner, outer], vec![w_out, w_in, w_in, w_out])
        }
        5 => {
            let s = 2.0 * (10.0f64 / 7.0).sqrt();
            let inner = (5.0 - s).sqrt() / 3.0;
            let outer = (5.0 + s).sqrt() / 3.0;
            let r70 = 70.0f64.sqrt();
            let w_in = (322.0 + 13.0 * r70) / 900.0;
            let w_out = (322.0 - 13.0 * r70) / 900.0;
            (
                vec![-outer, -inner, 0.0, inner, outer],
                vec![w_out, w_in, 128.0 / 225.0, w_in, w_out],
            )
        }
        _ => return Err(Error::UnsupportedQuadrature(n)),
    };
    Ok(QuadratureRule1D { points, weights })
}

/// Values and reference gradients of the four bilinear corner functions.
///
/// Corner order: `(-1,-1), (1,-1), (-1,1), (1,1)`, i.e. x varies fastest.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Q1Eval {
    pub values: [f64; 4],
    pub gradients: [[f64; 2]; 4],
}

/// Values and reference derivatives of the two linear nodal functions on
/// `[-1, 1]`, left node first.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct P1Eval {
    pub values: [f64; 2],
    pub gradients: [f64; 2],
}

pub fn p1_eval(xi: f64) -> P1Eval {
    P1Eval { values: [0.5 * (1.0 - xi), 0.5 * (1.0 + xi)], gradients: [-0.5, 0.5] }
}

pub fn q1_eval(xi: f64, eta: f64) -> Q1Eval {
    let px = p1_eval(xi);
    let pz = p1_eval(eta);
    let mut values = [0.0; 4];
    let mut gradients = [[0.0; 2]; 4];
    for b in 0..2 {
        for a in 0..2 {
            let l = 2 * b + a;
            values[l] = px.values[a] * pz.values[b];
            gradients[l] = [px.gradients[a] * pz.values[b], px.values[a] * pz.gradients[b]];
        }
    }
    Q1Eval { values, gradients }
}
