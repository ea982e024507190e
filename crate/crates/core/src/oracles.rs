//! Slow reference implementations for tests.
//!
//! Nothing here shares code with the fast paths beyond the data types:
//! logits are recomputed with plain loops, selections are literal
//! iterated-argmin loops and distances come from numeric search.

use std::fmt;

use crate::error::{Error, Result};
use crate::linear::LinearHead;
use crate::matrix::FeatureMatrix;
use crate::pool::PoolState;

/// One oracle comparison.
#[derive(Debug, Clone)]
pub struct OracleReport {
    pub instance: String,
    pub fast: String,
    pub oracle: String,
    pub max_deviation: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl OracleReport {
    pub fn numeric(instance: impl Into<String>, fast: f64, oracle: f64, deviation: f64, tolerance: f64) -> Self {
        Self {
            instance: instance.into(),
            fast: format!("{fast:.12e}"),
            oracle: format!("{oracle:.12e}"),
            max_deviation: deviation,
            tolerance,
            pass: deviation <= tolerance,
        }
    }

    pub fn exact<T: fmt::Debug + PartialEq>(instance: impl Into<String>, fast: &T, oracle: &T) -> Self {
        let pass = fast == oracle;
        Self {
            instance: instance.into(),
            fast: format!("{fast:?}"),
            oracle: format!("{oracle:?}"),
            max_deviation: if pass { 0.0 } else { 1.0 },
            tolerance: 0.0,
            pass,
        }
    }
}

impl fmt::Display for OracleReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "instance:  {}", self.instance)?;
        writeln!(f, "fast:      {}", self.fast)?;
        writeln!(f, "oracle:    {}", self.oracle)?;
        writeln!(f, "deviation: {:e} (tolerance {:e})", self.max_deviation, self.tolerance)?;
        write!(f, "result:    {}", if self.pass { "pass" } else { "FAIL" })
    }
}

/// Logits with a plain double loop.
pub fn naive_logits(head: &LinearHead, x: &[f32]) -> Vec<f64> {
    (0..head.num_classes())
        .map(|c| {
            let w = head.weight_row(c);
            let mut s = 0.0;
            for k in 0..x.len() {
                s += w[k] * f64::from(x[k]);
            }
            s + head.bias()[c]
        })
        .collect()
}

fn first_argmax(z: &[f64]) -> usize {
    let mut best = 0;
    for j in 1..z.len() {
        if z[j] > z[best] {
            best = j;
        }
    }
    best
}

fn naive_pair(head: &LinearHead, z: &[f64], i: usize, j: usize) -> f64 {
    let (wi, wj) = (head.weight_row(i), head.weight_row(j));
    let mut sq = 0.0;
    for k in 0..wi.len() {
        sq += (wi[k] - wj[k]) * (wi[k] - wj[k]);
    }
    let norm = sq.sqrt();
    if norm > 0.0 {
        (z[i] - z[j]).abs() / norm
    } else if head.bias()[i] != head.bias()[j] {
        f64::INFINITY
    } else {
        0.0
    }
}

/// DDB from the definition, one sample at a time.
pub fn naive_ddb(head: &LinearHead, x: &[f32]) -> f64 {
    let z = naive_logits(head, x);
    let p = first_argmax(&z);
    let mut best = f64::INFINITY;
    for j in 0..z.len() {
        if j != p {
            best = best.min(naive_pair(head, &z, p, j));
        }
    }
    best
}

/// DCSDB from its two cases, one sample at a time.
pub fn naive_dcsdb(head: &LinearHead, x: &[f32], c: usize) -> f64 {
    let z = naive_logits(head, x);
    let p = first_argmax(&z);
    if p == c {
        naive_ddb(head, x)
    } else {
        naive_pair(head, &z, p, c)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algorithm {
    Mase,
    Base,
}

/// Iterated argmin with a growing selected set, as the pseudocode reads.
/// BASE stops after exactly `b` new selections, mid-pass if needed.
pub fn literal_algorithm(algorithm: Algorithm, pool: &PoolState, head: &LinearHead, features: &FeatureMatrix, b: usize) -> Vec<usize> {
    let unlabeled = pool.unlabeled().to_vec();
    let mut selected: Vec<usize> = Vec::new();
    let argmin_over_rest = |selected: &[usize], score: &dyn Fn(usize) -> f64| -> Option<usize> {
        let mut best: Option<(f64, usize)> = None;
        for &i in &unlabeled {
            if selected.contains(&i) {
                continue;
            }
            let s = score(i);
            let better = match best {
                None => true,
                Some((bs, bi)) => s < bs || (s == bs && i < bi),
            };
            if better {
                best = Some((s, i));
            }
        }
        best.map(|(_, i)| i)
    };
    match algorithm {
        Algorithm::Mase => {
            while selected.len() < b {
                let i = argmin_over_rest(&selected, &|i| naive_ddb(head, features.row(i))).expect("budget checked");
                selected.push(i);
            }
        }
        Algorithm::Base => {
            'outer: while selected.len() < b {
                for c in 0..head.num_classes() {
                    if selected.len() == b {
                        break 'outer;
                    }
                    if let Some(i) = argmin_over_rest(&selected, &|i| naive_dcsdb(head, features.row(i), c)) {
                        selected.push(i);
                    }
                }
            }
        }
    }
    selected
}

/// `(score, index)` pairs fully sorted, first `b` indices.
pub fn full_sort_bottom(scores: &[(f64, usize)], b: usize) -> Vec<usize> {
    let mut v = scores.to_vec();
    v.sort_by(|a, c| a.0.partial_cmp(&c.0).expect("finite scores").then(a.1.cmp(&c.1)));
    v.into_iter().take(b).map(|(_, i)| i).collect()
}

fn dist(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| (f64::from(x) - f64::from(y)).powi(2))
        .sum::<f64>()
        .sqrt()
}

/// Largest distance from any candidate to its nearest center.
pub fn kcenter_radius(points: &FeatureMatrix, centers: &[usize], candidates: &[usize]) -> f64 {
    candidates
        .iter()
        .map(|&i| {
            centers
                .iter()
                .map(|&c| dist(points.row(i), points.row(c)))
                .fold(f64::INFINITY, f64::min)
        })
        .fold(0.0, f64::max)
}

/// Optimal k-center radius over all `b`-subsets of the non-labeled points,
/// with the labeled points as fixed centers.
pub fn exhaustive_kcenter(points: &FeatureMatrix, labeled: &[usize], b: usize) -> Result<f64> {
    let n = points.rows();
    if n > 12 || b > 3 {
        return Err(Error::Spec(format!("exhaustive k-center refuses n={n}, b={b} (limits 12 and 3)")));
    }
    let rest: Vec<usize> = (0..n).filter(|i| !labeled.contains(i)).collect();
    if b > rest.len() {
        return Err(Error::Budget(format!("{b} centers from {} points", rest.len())));
    }
    let mut best = f64::INFINITY;
    let mut chosen = Vec::with_capacity(b);
    subsets(&rest, b, 0, &mut chosen, &mut |s| {
        let mut centers = labeled.to_vec();
        centers.extend_from_slice(s);
        best = best.min(kcenter_radius(points, &centers, &rest));
    });
    Ok(best)
}

fn subsets(items: &[usize], k: usize, from: usize, chosen: &mut Vec<usize>, visit: &mut dyn FnMut(&[usize])) {
    if chosen.len() == k {
        visit(chosen);
        return;
    }
    for i in from..items.len() {
        chosen.push(items[i]);
        subsets(items, k, i + 1, chosen, visit);
        chosen.pop();
    }
}

/// Central finite-difference gradient.
pub fn finite_difference(f: impl Fn(&[f64]) -> f64, at: &[f64], h: f64) -> Vec<f64> {
    let mut x = at.to_vec();
    (0..at.len())
        .map(|k| {
            x[k] = at[k] + h;
            let up = f(&x);
            x[k] = at[k] - h;
            let down = f(&x);
            x[k] = at[k];
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Cross-entropy of a softmax head at a fixed label, as a function of the
/// flattened weights.
pub fn cross_entropy(weights: &[f64], bias: &[f64], x: &[f32], label: usize) -> f64 {
    let c = bias.len();
    let d = x.len();
    let z: Vec<f64> = (0..c)
        .map(|j| (0..d).map(|k| weights[j * d + k] * f64::from(x[k])).sum::<f64>() + bias[j])
        .collect();
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
    lse - z[label]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Predicate {
    /// Any prediction other than the current one.
    LeaveClass,
    /// Prediction equal to the given class.
    ReachClass(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Perturbation {
    pub distance: f64,
    /// Estimated absolute error of `distance`.
    pub tolerance: f64,
    pub converged: bool,
}

fn predict_f64(head: &LinearHead, y: &[f64]) -> usize {
    let z: Vec<f64> = (0..head.num_classes())
        .map(|c| {
            let w = head.weight_row(c);
            (0..y.len()).map(|k| w[k] * y[k]).sum::<f64>() + head.bias()[c]
        })
        .collect();
    first_argmax(&z)
}

/// Smallest `t >= 0` with the prediction at `x + t u` different from `p`,
/// by doubling then bisection; `inf` when no exit is found.
fn exit_along(head: &LinearHead, x: &[f64], u: &[f64], p: usize) -> f64 {
    let at = |t: f64| -> usize {
        let y: Vec<f64> = x.iter().zip(u).map(|(a, b)| a + t * b).collect();
        predict_f64(head, &y)
    };
    let mut hi = 1e-6;
    while at(hi) == p {
        hi *= 2.0;
        if hi > 1e9 {
            return f64::INFINITY;
        }
    }
    let mut lo = 0.0;
    for _ in 0..64 {
        let mid = 0.5 * (lo + hi);
        if at(mid) == p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi
}

fn golden_min(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, iters: usize) -> (f64, f64) {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..iters {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    if fc < fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

fn sphere_directions(d: usize) -> Vec<Vec<f64>> {
    match d {
        1 => vec![vec![1.0], vec![-1.0]],
        2 => (0..720)
            .map(|k| {
                let a = (k as f64) * std::f64::consts::PI / 360.0;
                vec![a.cos(), a.sin()]
            })
            .collect(),
        _ => {
            // Fibonacci lattice
            let n = 20_000;
            let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
            (0..n)
                .map(|k| {
                    let z = 1.0 - 2.0 * (k as f64 + 0.5) / n as f64;
                    let r = (1.0 - z * z).sqrt();
                    let a = golden * k as f64;
                    vec![r * a.cos(), r * a.sin(), z]
                })
                .collect()
        }
    }
}

fn angle_dir(theta: f64, phi: f64) -> Vec<f64> {
    vec![phi.sin() * theta.cos(), phi.sin() * theta.sin(), phi.cos()]
}

/// Minimum-norm perturbation satisfying `predicate`, found numerically.
///
/// Leaving the class: exit distance along a dense set of directions, the
/// best direction refined by golden-section search over its angle(s).
/// Reaching class `c`: Dykstra's alternating projections of `x` onto the
/// half-spaces `{z_c >= z_j}`. Only for `d <= 3`, `C <= 5`.
pub fn numeric_min_perturbation(head: &LinearHead, x: &[f32], predicate: Predicate) -> Result<Perturbation> {
    let (d, c_n) = (head.dim(), head.num_classes());
    if d > 3 || c_n > 5 || x.len() != d {
        return Err(Error::Spec(format!("numeric oracle limited to d <= 3, C <= 5 (got d={d}, C={c_n})")));
    }
    let xf: Vec<f64> = x.iter().map(|&v| f64::from(v)).collect();
    let p = predict_f64(head, &xf);
    match predicate {
        Predicate::LeaveClass => {
            let dirs = sphere_directions(d);
            let (mut best, mut best_k) = (f64::INFINITY, 0);
            for (k, u) in dirs.iter().enumerate() {
                let t = exit_along(head, &xf, u, p);
                if t < best {
                    best = t;
                    best_k = k;
                }
            }
            if !best.is_finite() {
                return Ok(Perturbation { distance: best, tolerance: 0.0, converged: true });
            }
            let refined = match d {
                1 => best,
                2 => {
                    let a0 = best_k as f64 * std::f64::consts::PI / 360.0;
                    let step = std::f64::consts::PI / 360.0;
                    golden_min(|a| exit_along(head, &xf, &[a.cos(), a.sin()], p), a0 - step, a0 + step, 60).1
                }
                _ => {
                    let u = &dirs[best_k];
                    let (mut theta, mut phi) = (u[1].atan2(u[0]), u[2].clamp(-1.0, 1.0).acos());
                    let mut step = 0.05;
                    let mut value = best;
                    for _ in 0..4 {
                        let (t, _) = golden_min(|a| exit_along(head, &xf, &angle_dir(a, phi), p), theta - step, theta + step, 50);
                        theta = t;
                        let (ph, v) = golden_min(|a| exit_along(head, &xf, &angle_dir(theta, a), p), phi - step, phi + step, 50);
                        phi = ph;
                        value = value.min(v);
                        step *= 0.5;
                    }
                    value
                }
            };
            let distance = best.min(refined);
            Ok(Perturbation {
                distance,
                tolerance: 1e-6 * distance.max(1.0),
                converged: true,
            })
        }
        Predicate::ReachClass(c) => {
            if c >= c_n {
                return Err(Error::Shape(format!("class {c} out of range")));
            }
            if c == p {
                return Err(Error::Spec("reach-class oracle needs a class other than the prediction".into()));
            }
            Ok(dykstra_projection(head, &xf, c))
        }
    }
}

fn dykstra_projection(head: &LinearHead, x: &[f64], c: usize) -> Perturbation {
    let d = x.len();
    // half-spaces a . y + beta >= 0
    let planes: Vec<(Vec<f64>, f64)> = (0..head.num_classes())
        .filter(|&j| j != c)
        .map(|j| {
            let a: Vec<f64> = head.weight_row(c).iter().zip(head.weight_row(j)).map(|(p, q)| p - q).collect();
            (a, head.bias()[c] - head.bias()[j])
        })
        .collect();
    let violation = |y: &[f64]| -> f64 {
        planes
            .iter()
            .map(|(a, beta)| {
                let norm = a.iter().map(|v| v * v).sum::<f64>().sqrt();
                let s = a.iter().zip(y).map(|(p, q)| p * q).sum::<f64>() + beta;
                if norm > 0.0 {
                    (-s / norm).max(0.0)
                } else if s < 0.0 {
                    f64::INFINITY
                } else {
                    0.0
                }
            })
            .fold(0.0, f64::max)
    };
    let mut y = x.to_vec();
    let mut incr = vec![vec![0.0; d]; planes.len()];
    let mut converged = false;
    for _ in 0..200_000 {
        let before = y.clone();
        for (k, (a, beta)) in planes.iter().enumerate() {
            let v: Vec<f64> = y.iter().zip(&incr[k]).map(|(p, q)| p + q).collect();
            let norm_sq = a.iter().map(|t| t * t).sum::<f64>();
            let s = a.iter().zip(&v).map(|(p, q)| p * q).sum::<f64>() + beta;
            let proj: Vec<f64> = if s < 0.0 && norm_sq > 0.0 {
                v.iter().zip(a).map(|(p, q)| p - s / norm_sq * q).collect()
            } else {
                v.clone()
            };
            incr[k] = v.iter().zip(&proj).map(|(p, q)| p - q).collect();
            y = proj;
        }
        let moved = y.iter().zip(&before).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
        if moved < 1e-13 && violation(&y) < 1e-10 {
            converged = true;
            break;
        }
    }
    let distance = y.iter().zip(x).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt();
    Perturbation {
        distance,
        tolerance: 1e-8 * distance.max(1.0),
        converged,
    }
}
