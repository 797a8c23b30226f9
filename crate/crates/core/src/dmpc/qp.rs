//! Dense primal active-set solver for small strictly convex QPs, and the
//! consensus-tracking voltage problem built on top of it.

use nalgebra::{DMatrix, DVector};

use super::model::PredictionModel;

/// `min 0.5 x'Px + q'x  s.t.  A x <= b`, with `P` positive definite.
#[derive(Debug, Clone)]
pub struct QpProblem {
    pub p: DMatrix<f64>,
    pub q: DVector<f64>,
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
}

#[derive(Debug, Clone)]
pub struct QpResult {
    pub x: DVector<f64>,
    /// One multiplier per inequality, zero for inactive rows.
    pub lambda: DVector<f64>,
    pub iterations: usize,
    pub converged: bool,
}

impl QpProblem {
    /// Relative KKT residual: projected-gradient stationarity, primal and
    /// dual feasibility and complementarity, scaled by `1 + |q|_inf`.
    pub fn kkt_residual(&self, x: &DVector<f64>, lambda: &DVector<f64>) -> f64 {
        let scale = 1.0 + self.q.amax();
        let stat = (&self.p * x + &self.q + self.a.transpose() * lambda).amax();
        let slack = &self.b - &self.a * x;
        let primal = slack.iter().fold(0.0f64, |m, s| m.max(-s));
        let dual = lambda.iter().fold(0.0f64, |m, l| m.max(-l));
        let comp = slack.iter().zip(lambda.iter()).fold(0.0f64, |m, (s, l)| m.max((s * l).abs()));
        stat.max(dual).max(comp) / scale + primal / (1.0 + self.b.amax())
    }

    /// Solves from a feasible starting point.
    pub fn solve(&self, x0: DVector<f64>, max_iter: usize) -> QpResult {
        let n = self.q.len();
        let m = self.b.len();
        let mut x = x0;
        let mut working: Vec<usize> = Vec::new();
        let tol_feas = 1e-12 * (1.0 + self.b.amax());
        // Rows tight at the start enter the working set while they stay
        // linearly independent.
        for i in 0..m {
            let r = self.b[i] - (self.a.row(i) * &x)[0];
            if r.abs() <= tol_feas && working.len() < n {
                let mut trial = working.clone();
                trial.push(i);
                if self.independent(&trial) {
                    working = trial;
                }
            }
        }
        let mut lambda_full = DVector::zeros(m);
        // After a full unblocked step `x` minimizes over the working set.
        let mut at_min = false;
        for it in 0..max_iter {
            let grad = &self.p * &x + &self.q;
            let (step, lam) = self.eqp(&grad, &working);
            let step_tol = 1e-13 * (1.0 + x.amax());
            if at_min || step.amax() <= step_tol {
                at_min = false;
                let (min_pos, min_val) = lam
                    .iter()
                    .enumerate()
                    .fold((usize::MAX, 0.0f64), |acc, (k, &l)| if l < acc.1 { (k, l) } else { acc });
                let tol_dual = 1e-12 * (1.0 + self.q.amax());
                if min_pos == usize::MAX || min_val >= -tol_dual {
                    let (x, lam) = self.polish(x, lam, &working);
                    lambda_full.fill(0.0);
                    for (k, &i) in working.iter().enumerate() {
                        lambda_full[i] = lam[k].max(0.0);
                    }
                    return QpResult { x, lambda: lambda_full, iterations: it + 1, converged: true };
                }
                working.remove(min_pos);
                continue;
            }
            let mut alpha = 1.0;
            let mut blocking = None;
            for i in (0..m).filter(|i| !working.contains(i)) {
                let ap = (self.a.row(i) * &step)[0];
                if ap > 1e-14 * (1.0 + step.amax()) {
                    let room = (self.b[i] - (self.a.row(i) * &x)[0]).max(0.0);
                    let ai = room / ap;
                    if ai < alpha {
                        alpha = ai;
                        blocking = Some(i);
                    }
                }
            }
            x += alpha * &step;
            match blocking {
                Some(i) => working.push(i),
                None => at_min = true,
            }
        }
        QpResult { x, lambda: lambda_full, iterations: max_iter, converged: false }
    }

    /// Re-solves the working-set KKT system for `(x, lambda)` directly,
    /// keeping the result only if it is feasible and no worse.
    fn polish(&self, x: DVector<f64>, lam: DVector<f64>, working: &[usize]) -> (DVector<f64>, DVector<f64>) {
        let n = x.len();
        let k = working.len();
        let kkt = self.kkt_matrix(working);
        let mut rhs = DVector::zeros(n + k);
        rhs.rows_mut(0, n).copy_from(&(-&self.q));
        for (r, &i) in working.iter().enumerate() {
            rhs[n + r] = self.b[i];
        }
        let lu = kkt.clone().lu();
        let Some(mut sol) = lu.solve(&rhs) else { return (x, lam) };
        for _ in 0..2 {
            let resid = &rhs - &kkt * &sol;
            match lu.solve(&resid) {
                Some(d) => sol += d,
                None => break,
            }
        }
        let xp = sol.rows(0, n).into_owned();
        let lp = sol.rows(n, k).into_owned();
        let full = |l: &DVector<f64>| {
            let mut f = DVector::zeros(self.b.len());
            for (j, &i) in working.iter().enumerate() {
                f[i] = l[j].max(0.0);
            }
            f
        };
        if self.kkt_residual(&xp, &full(&lp)) <= self.kkt_residual(&x, &full(&lam)) {
            (xp, lp)
        } else {
            (x, lam)
        }
    }

    fn kkt_matrix(&self, working: &[usize]) -> DMatrix<f64> {
        let n = self.q.len();
        let k = working.len();
        let mut kkt = DMatrix::zeros(n + k, n + k);
        kkt.view_mut((0, 0), (n, n)).copy_from(&self.p);
        for (r, &i) in working.iter().enumerate() {
            for c in 0..n {
                kkt[(n + r, c)] = self.a[(i, c)];
                kkt[(c, n + r)] = self.a[(i, c)];
            }
        }
        kkt
    }

    fn independent(&self, rows: &[usize]) -> bool {
        let k = rows.len();
        let a = DMatrix::from_fn(k, self.q.len(), |r, c| self.a[(rows[r], c)]);
        let gram = &a * a.transpose();
        gram.clone().try_inverse().map_or(false, |inv| gram.norm() * inv.norm() < 1e12)
    }

    /// Equality-constrained step: minimize over `p` with `A_W p = 0`.
    fn eqp(&self, grad: &DVector<f64>, working: &[usize]) -> (DVector<f64>, DVector<f64>) {
        let n = grad.len();
        let k = working.len();
        let kkt = self.kkt_matrix(working);
        let mut rhs = DVector::zeros(n + k);
        rhs.rows_mut(0, n).copy_from(&(-grad));
        let lu = kkt.clone().lu();
        let mut sol = lu.solve(&rhs).unwrap_or_else(|| DVector::zeros(n + k));
        let resid = &rhs - &kkt * &sol;
        if let Some(d) = lu.solve(&resid) {
            sol += d;
        }
        (sol.rows(0, n).into_owned(), sol.rows(n, k).into_owned())
    }
}

/// Weights and bounds of the voltage tracking problem.
#[derive(Debug, Clone, PartialEq)]
pub struct QpWeights {
    pub q: DMatrix<f64>,
    pub r: DMatrix<f64>,
    pub v_lo: f64,
    pub v_hi: f64,
    /// Per-volt weight of the bound-violation slacks, relative to `|Q|`.
    pub slack_penalty: f64,
}

impl QpWeights {
    /// `Q = I`, `R = rho I`.
    pub fn diagonal(horizon: usize, rho: f64, v_lo: f64, v_hi: f64) -> Self {
        Self {
            q: DMatrix::identity(horizon, horizon),
            r: DMatrix::identity(horizon, horizon) * rho,
            v_lo,
            v_hi,
            slack_penalty: 1e6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpOutcome {
    pub xi: Vec<f64>,
    pub slack_lo: f64,
    pub slack_hi: f64,
    pub kkt_residual: f64,
    pub iterations: usize,
    /// The active-set iteration cap was hit and the unconstrained
    /// minimizer was returned instead.
    pub fallback: bool,
}

/// Average of the neighbor predictions; the free response `F y` when the
/// list is empty.
pub fn neighbor_average(pm: &PredictionModel, y: [f64; 2], neighbors: &[&[f64]]) -> DVector<f64> {
    if neighbors.is_empty() {
        return &pm.f * DVector::from_column_slice(&y);
    }
    let mut avg = DVector::zeros(pm.horizon);
    for nb in neighbors {
        avg += DVector::from_column_slice(nb);
    }
    avg / neighbors.len() as f64
}

/// Closed-form minimizer without bounds.
pub fn unconstrained_minimizer(pm: &PredictionModel, y: [f64; 2], target: &DVector<f64>, w: &QpWeights) -> DVector<f64> {
    let g = &pm.g;
    let d = &pm.f * DVector::from_column_slice(&y) - target;
    let h = g.transpose() * &w.q * g + &w.r;
    let rhs = -(g.transpose() * &w.q * d);
    h.cholesky().map(|c| c.solve(&rhs)).expect("GᵀQG + R must be positive definite")
}

/// Consensus-tracking QP with softened output bounds.
pub fn solve_voltage_qp(
    y: [f64; 2],
    neighbors: &[&[f64]],
    w: &QpWeights,
    pm: &PredictionModel,
    warm: Option<&[f64]>,
) -> QpOutcome {
    let hz = pm.horizon;
    let target = neighbor_average(pm, y, neighbors);
    let free = &pm.f * DVector::from_column_slice(&y);
    // Work in scaled inputs x = Xi * sigma so that the problem is O(1).
    let sigma = pm.g.amax().max(f64::MIN_POSITIVE);
    let gs = &pm.g / sigma;
    let rs = &w.r / (sigma * sigma);
    let q_norm = w.q.amax().max(1.0);
    let pen = w.slack_penalty * q_norm;

    let n = hz + 2;
    let mut p = DMatrix::zeros(n, n);
    p.view_mut((0, 0), (hz, hz)).copy_from(&(2.0 * (gs.transpose() * &w.q * &gs + &rs)));
    p[(hz, hz)] = 2.0 * pen;
    p[(hz + 1, hz + 1)] = 2.0 * pen;
    let mut q = DVector::zeros(n);
    q.rows_mut(0, hz).copy_from(&(2.0 * gs.transpose() * &w.q * (&free - &target)));
    q[hz] = pen;
    q[hz + 1] = pen;

    // Rows: upper bounds, lower bounds, slack signs.
    let m = 2 * hz + 2;
    let mut a = DMatrix::zeros(m, n);
    let mut b = DVector::zeros(m);
    for h in 0..hz {
        for j in 0..hz {
            a[(h, j)] = gs[(h, j)];
            a[(hz + h, j)] = -gs[(h, j)];
        }
        a[(h, hz + 1)] = -1.0;
        b[h] = w.v_hi - free[h];
        a[(hz + h, hz)] = -1.0;
        b[hz + h] = free[h] - w.v_lo;
    }
    a[(2 * hz, hz)] = -1.0;
    a[(2 * hz + 1, hz + 1)] = -1.0;
    let prob = QpProblem { p, q, a, b };

    let mut x0 = DVector::zeros(n);
    if let Some(ws) = warm {
        for (k, v) in ws.iter().take(hz).enumerate() {
            x0[k] = v * sigma;
        }
    }
    let pred = &gs * x0.rows(0, hz);
    let mut s_hi: f64 = 0.0;
    let mut s_lo: f64 = 0.0;
    for h in 0..hz {
        s_hi = s_hi.max(pred[h] + free[h] - w.v_hi);
        s_lo = s_lo.max(w.v_lo - free[h] - pred[h]);
    }
    x0[hz] = s_lo;
    x0[hz + 1] = s_hi;

    let res = prob.solve(x0, 50 * hz);
    if res.converged {
        let kkt = prob.kkt_residual(&res.x, &res.lambda);
        QpOutcome {
            xi: res.x.rows(0, hz).iter().map(|v| v / sigma).collect(),
            slack_lo: clean_slack(res.x[hz]),
            slack_hi: clean_slack(res.x[hz + 1]),
            kkt_residual: kkt,
            iterations: res.iterations,
            fallback: false,
        }
    } else {
        let xi = unconstrained_minimizer(pm, y, &target, w);
        QpOutcome {
            xi: xi.iter().copied().collect(),
            slack_lo: 0.0,
            slack_hi: 0.0,
            kkt_residual: f64::NAN,
            iterations: res.iterations,
            fallback: true,
        }
    }
}

fn clean_slack(s: f64) -> f64 {
    if s < 1e-10 {
        0.0
    } else {
        s
    }
}
