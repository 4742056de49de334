//! Debiased entropic transport in the log domain.
//!
//! `OT_eps(a, b) = min_P <P, C> + eps KL(P | a x b)` is computed through its
//! dual by alternating exact block maximisation over the two potentials, so
//! the dual value never decreases. The divergence
//!
//! ```text
//! S_eps(a, b) = OT_eps(a, b) - OT_eps(a, a) / 2 - OT_eps(b, b) / 2
//! ```
//!
//! vanishes on identical inputs and lies within `eps (H(a) + H(b)) / 2` of the
//! unregularised cost: `W <= OT_eps(a, b) <= W + eps min(H(a), H(b))` and
//! `0 <= OT_eps(a, a) <= eps H(a)` (diagonal coupling).

use serde::Serialize;

use super::GroundCost;
use crate::error::{Error, Result};
use crate::measure::DiscreteMeasure;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SinkhornOptions {
    pub max_iter: usize,
    /// Stop once the L1 violation of the first marginal is below this.
    pub marginal_tol: f64,
}

impl Default for SinkhornOptions {
    fn default() -> Self {
        Self {
            max_iter: 20_000,
            marginal_tol: 1e-5,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SinkhornEstimate {
    pub distance: f64,
    /// Entropic bias bound plus a marginal-slack term.
    pub error_bound: f64,
    pub epsilon: f64,
    /// L1 marginal violation of the cross problem at termination.
    pub marginal_violation: f64,
    /// Iterations at the final `epsilon`, cross problem only.
    pub iterations: usize,
    /// Dual objective of the cross problem after each final-stage iteration.
    pub dual_trace: Vec<f64>,
}

/// Shannon entropy `-sum w log w` in nats.
pub fn entropy(nu: &DiscreteMeasure) -> f64 {
    nu.weights()
        .iter()
        .filter(|w| **w > 0.0)
        .map(|w| -w * w.ln())
        .sum()
}

pub fn sinkhorn(
    a: &DiscreteMeasure,
    b: &DiscreteMeasure,
    cost: GroundCost,
    epsilon: f64,
    max_iter: usize,
) -> Result<SinkhornEstimate> {
    let opts = SinkhornOptions {
        max_iter,
        ..SinkhornOptions::default()
    };
    sinkhorn_with(a, b, cost, epsilon, &opts)
}

pub fn sinkhorn_with(
    a: &DiscreteMeasure,
    b: &DiscreteMeasure,
    cost: GroundCost,
    epsilon: f64,
    opts: &SinkhornOptions,
) -> Result<SinkhornEstimate> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::invalid("epsilon must be positive"));
    }
    if a.dim() != b.dim() {
        return Err(Error::invalid("dimension mismatch"));
    }
    Session::new(a, b, cost).estimate(epsilon, opts)
}

/// Chooses `epsilon` by halving until the estimate settles.
///
/// Starting from `max cost / 20`, `epsilon` is halved (warm-starting every
/// solve from the previous potentials) until two consecutive estimates differ
/// by at most `rel / 2` of the newer one, and the newer one is returned.
/// The marginal tolerance is loosened to `0.2 rel S / max cost`. The
/// debiased divergence approaches the exact cost from below at a rate that
/// slows as `epsilon` shrinks, so a settled estimate is a practical proxy for
/// relative accuracy `rel`. The returned `error_bound` stays the certified
/// (and much looser) entropic bound. Stops at `1e-6 max cost`.
pub fn sinkhorn_auto(
    a: &DiscreteMeasure,
    b: &DiscreteMeasure,
    cost: GroundCost,
    rel: f64,
    opts: &SinkhornOptions,
) -> Result<SinkhornEstimate> {
    if !(rel > 0.0) {
        return Err(Error::invalid("relative target must be positive"));
    }
    if a.dim() != b.dim() {
        return Err(Error::invalid("dimension mismatch"));
    }
    let mut session = Session::new(a, b, cost);
    let max_cost = session.ab.max_cost;
    if max_cost == 0.0 {
        return session.estimate(1.0, opts);
    }
    let floor = 1e-6 * max_cost;
    let mut eps = max_cost / 20.0;
    let mut prev = session.estimate(eps, opts)?;
    let mut round = *opts;
    while eps > floor {
        eps *= 0.5;
        // marginal slack costs at most max_cost per unit violation; give it a fifth of the budget
        round.marginal_tol = opts.marginal_tol.max(0.2 * rel * prev.distance / max_cost);
        let cur = session.estimate(eps, &round)?;
        if (cur.distance - prev.distance).abs() <= 0.5 * rel * cur.distance {
            return Ok(cur);
        }
        prev = cur;
    }
    Ok(prev)
}

/// The three problems behind one divergence, with warm-start state.
struct Session {
    ab: Problem,
    aa: Problem,
    bb: Problem,
    h: f64,
    warm_ab: Option<Warm>,
    warm_aa: Option<Warm>,
    warm_bb: Option<Warm>,
}

#[derive(Clone)]
struct Warm {
    f: Vec<f64>,
    g: Vec<f64>,
    eps: f64,
}

impl Session {
    fn new(a: &DiscreteMeasure, b: &DiscreteMeasure, cost: GroundCost) -> Self {
        Self {
            ab: Problem::new(a, b, cost),
            aa: Problem::new(a, a, cost),
            bb: Problem::new(b, b, cost),
            h: 0.5 * (entropy(a) + entropy(b)),
            warm_ab: None,
            warm_aa: None,
            warm_bb: None,
        }
    }

    fn estimate(&mut self, epsilon: f64, opts: &SinkhornOptions) -> Result<SinkhornEstimate> {
        let cross = self.ab.solve(epsilon, opts, true, &mut self.warm_ab)?;
        let self_a = self.aa.solve_symmetric(epsilon, opts, &mut self.warm_aa)?;
        let self_b = self.bb.solve_symmetric(epsilon, opts, &mut self.warm_bb)?;
        let distance = (cross.value - 0.5 * (self_a.value + self_b.value)).max(0.0);
        let slack = self.ab.max_cost * cross.violation
            + 0.5 * (self.aa.max_cost * self_a.violation + self.bb.max_cost * self_b.violation);
        Ok(SinkhornEstimate {
            distance,
            error_bound: epsilon * self.h + slack,
            epsilon,
            marginal_violation: cross.violation,
            iterations: cross.iterations,
            dual_trace: cross.trace,
        })
    }
}

struct Problem {
    n: usize,
    m: usize,
    log_a: Vec<f64>,
    log_b: Vec<f64>,
    wa: Vec<f64>,
    wb: Vec<f64>,
    /// Row-major `n x m` and its transpose.
    c: Vec<f64>,
    ct: Vec<f64>,
    max_cost: f64,
}

struct Solved {
    value: f64,
    violation: f64,
    iterations: usize,
    trace: Vec<f64>,
}

impl Problem {
    fn new(a: &DiscreteMeasure, b: &DiscreteMeasure, cost: GroundCost) -> Self {
        let (n, m) = (a.len(), b.len());
        let c = cost.matrix(a, b);
        let mut ct = vec![0.0; n * m];
        for i in 0..n {
            for j in 0..m {
                ct[j * n + i] = c[i * m + j];
            }
        }
        let max_cost = c.iter().copied().fold(0.0, f64::max);
        Self {
            n,
            m,
            log_a: a.weights().iter().map(|w| w.ln()).collect(),
            log_b: b.weights().iter().map(|w| w.ln()).collect(),
            wa: a.weights().to_vec(),
            wb: b.weights().to_vec(),
            c,
            ct,
            max_cost,
        }
    }

    /// `out_i = -eps log sum_j exp(log_w_j + (pot_j - c_ij) / eps)`.
    fn c_transform(c: &[f64], rows: usize, cols: usize, log_w: &[f64], pot: &[f64], eps: f64, out: &mut [f64]) {
        let mut z = vec![0.0; cols];
        for i in 0..rows {
            let row = &c[i * cols..(i + 1) * cols];
            let mut mx = f64::NEG_INFINITY;
            for j in 0..cols {
                z[j] = log_w[j] + (pot[j] - row[j]) / eps;
                mx = mx.max(z[j]);
            }
            let s: f64 = z.iter().map(|v| (v - mx).exp()).sum();
            out[i] = -eps * (mx + s.ln());
        }
    }

    fn dual(&self, f: &[f64], g: &[f64]) -> f64 {
        f.iter().zip(&self.wa).map(|(x, w)| x * w).sum::<f64>()
            + g.iter().zip(&self.wb).map(|(x, w)| x * w).sum::<f64>()
    }

    /// Stabilised kernel `exp((f_i + g_j - c_ij) / eps)`.
    fn kernel(&self, f: &[f64], g: &[f64], eps: f64, k: &mut Vec<f64>) {
        k.clear();
        for (i, fi) in f.iter().enumerate() {
            let row = &self.c[i * self.m..(i + 1) * self.m];
            k.extend(row.iter().zip(g).map(|(c, gj)| ((fi + gj - c) / eps).exp()));
        }
    }

    /// Sinkhorn on the cross problem with eps-scaling.
    ///
    /// At each stage the potentials are first made exact c-transforms of
    /// each other in the log domain, then the iteration runs on scalings
    /// `u, v` against a kernel built from those potentials; the scalings are
    /// folded back into the potentials whenever they leave a safe range.
    fn solve(
        &self,
        eps: f64,
        opts: &SinkhornOptions,
        keep_trace: bool,
        warm: &mut Option<Warm>,
    ) -> Result<Solved> {
        let (n, m) = (self.n, self.m);
        let (mut f, mut g, mut stage) = match warm.take() {
            Some(w) if w.eps >= eps => (w.f, w.g, w.eps),
            _ => (vec![0.0; n], vec![0.0; m], self.max_cost.max(eps)),
        };
        let mut k = Vec::with_capacity(n * m);
        let mut u = vec![1.0; n];
        let mut v = vec![1.0; m];
        let mut kv = vec![0.0; n];
        let mut ktu = vec![0.0; m];
        let mut trace = Vec::new();

        loop {
            let last = stage <= eps;
            let tol = if last { opts.marginal_tol } else { 10.0 * opts.marginal_tol };
            Self::c_transform(&self.c, n, m, &self.log_b, &g, stage, &mut f);
            Self::c_transform(&self.ct, m, n, &self.log_a, &f, stage, &mut g);
            self.kernel(&f, &g, stage, &mut k);
            u.fill(1.0);
            v.fill(1.0);
            let mut viol = f64::INFINITY;
            let mut done = None;
            for it in 0..opts.max_iter {
                for i in 0..n {
                    let row = &k[i * m..(i + 1) * m];
                    kv[i] = row
                        .iter()
                        .zip(&v)
                        .zip(&self.wb)
                        .map(|((kij, vj), bj)| kij * vj * bj)
                        .sum();
                }
                viol = (0..n).map(|i| (self.wa[i] * u[i] * kv[i] - self.wa[i]).abs()).sum();
                if viol <= tol {
                    done = Some(it);
                    break;
                }
                for i in 0..n {
                    u[i] = 1.0 / kv[i];
                }
                ktu.fill(0.0);
                for i in 0..n {
                    let s = self.wa[i] * u[i];
                    for (acc, kij) in ktu.iter_mut().zip(&k[i * m..(i + 1) * m]) {
                        *acc += kij * s;
                    }
                }
                for j in 0..m {
                    v[j] = 1.0 / ktu[j];
                }
                let wild = |x: &f64| !(1e-100..=1e100).contains(x);
                if u.iter().any(wild) || v.iter().any(wild) {
                    absorb(&mut f, &mut u, stage);
                    absorb(&mut g, &mut v, stage);
                    self.kernel(&f, &g, stage, &mut k);
                }
                if last && keep_trace {
                    let df: f64 = (0..n).map(|i| self.wa[i] * (f[i] + stage * u[i].ln())).sum();
                    let dg: f64 = (0..m).map(|j| self.wb[j] * (g[j] + stage * v[j].ln())).sum();
                    trace.push(df + dg);
                }
            }
            absorb(&mut f, &mut u, stage);
            absorb(&mut g, &mut v, stage);
            match done {
                Some(it) if last => {
                    let value = self.dual(&f, &g);
                    *warm = Some(Warm { f, g, eps });
                    return Ok(Solved {
                        value,
                        violation: viol,
                        iterations: it,
                        trace,
                    })
                }
                Some(_) => stage = (stage * 0.5).max(eps),
                None => {
                    return Err(Error::ConvergenceFailure {
                        iterations: opts.max_iter,
                        residual: viol,
                    })
                }
            }
        }
    }

    /// `OT_eps(a, a)` with one shared potential. Plain alternation oscillates
    /// on symmetric problems, so each update is the geometric mean of the old
    /// and new scaling (the averaged update `f <- (f + T f) / 2` in the log
    /// domain); at the fixed point the value is `2 <a, f>`.
    fn solve_symmetric(
        &self,
        eps: f64,
        opts: &SinkhornOptions,
        warm: &mut Option<Warm>,
    ) -> Result<Solved> {
        let n = self.n;
        let (mut f, mut stage) = match warm.take() {
            Some(w) if w.eps >= eps => (w.f, w.eps),
            _ => (vec![0.0; n], self.max_cost.max(eps)),
        };
        let mut t = vec![0.0; n];
        let mut k = Vec::with_capacity(n * n);
        let mut u = vec![1.0; n];
        let mut ku = vec![0.0; n];
        loop {
            let last = stage <= eps;
            let tol = if last { opts.marginal_tol } else { 10.0 * opts.marginal_tol };
            Self::c_transform(&self.c, n, n, &self.log_a, &f, stage, &mut t);
            for (x, y) in f.iter_mut().zip(&t) {
                *x = 0.5 * (*x + y);
            }
            self.kernel(&f, &f, stage, &mut k);
            u.fill(1.0);
            let mut viol = f64::INFINITY;
            let mut done = None;
            for it in 0..opts.max_iter {
                for i in 0..n {
                    let row = &k[i * n..(i + 1) * n];
                    ku[i] = row
                        .iter()
                        .zip(&u)
                        .zip(&self.wa)
                        .map(|((kij, uj), aj)| kij * uj * aj)
                        .sum();
                }
                viol = (0..n).map(|i| (self.wa[i] * u[i] * ku[i] - self.wa[i]).abs()).sum();
                if viol <= tol {
                    done = Some(it);
                    break;
                }
                for i in 0..n {
                    u[i] = (u[i] / ku[i]).sqrt();
                }
                if u.iter().any(|x| !(1e-100..=1e100).contains(x)) {
                    absorb(&mut f, &mut u, stage);
                    self.kernel(&f, &f, stage, &mut k);
                }
            }
            absorb(&mut f, &mut u, stage);
            match done {
                Some(it) if last => {
                    let value = 2.0 * f.iter().zip(&self.wa).map(|(x, w)| x * w).sum::<f64>();
                    *warm = Some(Warm {
                        f,
                        g: Vec::new(),
                        eps,
                    });
                    return Ok(Solved {
                        value,
                        violation: viol,
                        iterations: it,
                        trace: Vec::new(),
                    });
                }
                Some(_) => stage = (stage * 0.5).max(eps),
                None => {
                    return Err(Error::ConvergenceFailure {
                        iterations: opts.max_iter,
                        residual: viol,
                    })
                }
            }
        }
    }
}

fn absorb(pot: &mut [f64], scale: &mut [f64], eps: f64) {
    for (p, s) in pot.iter_mut().zip(scale.iter_mut()) {
        *p += eps * s.ln();
        *s = 1.0;
    }
}
