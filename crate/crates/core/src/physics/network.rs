//! RL network: lines, loads and breakers in the common DQ frame, plus the
//! closure that produces bus voltages from branch currents.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::ConfigError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Line {
    pub name: String,
    pub from: usize,
    pub to: usize,
    pub r: f64,
    pub l: f64,
    /// Closed lines carry current. Only breakers are ever opened.
    pub closed: bool,
    pub breaker: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Load {
    pub name: String,
    pub bus: usize,
    pub r: f64,
    pub l: f64,
    pub connected: bool,
}

/// How bus voltages are obtained from the branch currents.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Closure {
    /// Each bus is tied to ground through a large resistor `r_n`:
    /// `v = r_n * (net current into the bus)`.
    VirtualResistor { r_n: f64 },
    /// Limit `r_n -> inf`: bus voltages are chosen so that the KCL residual
    /// decays at rate `kappa` (1/s). Stays non-stiff at any step size.
    Kirchhoff { kappa: f64 },
}

impl Default for Closure {
    fn default() -> Self {
        Closure::Kirchhoff { kappa: 1000.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkModel {
    pub buses: Vec<String>,
    pub lines: Vec<Line>,
    pub loads: Vec<Load>,
    pub closure: Closure,
}

impl NetworkModel {
    pub fn n_bus(&self) -> usize {
        self.buses.len()
    }

    pub fn bus_index(&self, name: &str) -> Option<usize> {
        self.buses.iter().position(|b| b == name)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let n = self.n_bus();
        if n == 0 {
            return Err(ConfigError::Network("no buses".into()));
        }
        for line in &self.lines {
            if line.from >= n || line.to >= n || line.from == line.to {
                return Err(ConfigError::Network(format!("line {} has invalid endpoints", line.name)));
            }
            if !(line.l > 0.0 && line.r >= 0.0 && line.r.is_finite() && line.l.is_finite()) {
                return Err(ConfigError::Network(format!("line {} needs r >= 0 and l > 0", line.name)));
            }
            if !line.closed && !line.breaker {
                return Err(ConfigError::Network(format!("line {} is open but is not a breaker", line.name)));
            }
        }
        for load in &self.loads {
            if load.bus >= n {
                return Err(ConfigError::Network(format!("load {} on unknown bus", load.name)));
            }
            if !(load.l > 0.0 && load.r >= 0.0 && load.r.is_finite() && load.l.is_finite()) {
                return Err(ConfigError::Network(format!("load {} needs r >= 0 and l > 0", load.name)));
            }
        }
        match self.closure {
            Closure::VirtualResistor { r_n } if !(r_n > 0.0 && r_n.is_finite()) => {
                Err(ConfigError::Network("virtual resistance must be positive".into()))
            }
            Closure::Kirchhoff { kappa } if !(kappa >= 0.0 && kappa.is_finite()) => {
                Err(ConfigError::Network("kappa must be non-negative".into()))
            }
            _ => Ok(()),
        }
    }

    /// Buses reachable from `start` through closed lines.
    pub fn component_of(&self, start: usize) -> Vec<bool> {
        let mut seen = vec![false; self.n_bus()];
        let mut stack = vec![start];
        seen[start] = true;
        while let Some(b) = stack.pop() {
            for line in self.lines.iter().filter(|l| l.closed) {
                let other = if line.from == b {
                    line.to
                } else if line.to == b {
                    line.from
                } else {
                    continue;
                };
                if !seen[other] {
                    seen[other] = true;
                    stack.push(other);
                }
            }
        }
        seen
    }

    /// Every energized bus (one with a connected load) must share a
    /// component with at least one of the given DG buses.
    pub fn check_energized(&self, dg_buses: &[usize]) -> Result<(), ConfigError> {
        let mut fed = vec![false; self.n_bus()];
        for &b in dg_buses {
            for (k, c) in self.component_of(b).into_iter().enumerate() {
                fed[k] |= c;
            }
        }
        for load in self.loads.iter().filter(|l| l.connected) {
            if !fed[load.bus] {
                return Err(ConfigError::Network(format!(
                    "load {} on bus {} is not reachable from any DG",
                    load.name, self.buses[load.bus]
                )));
            }
        }
        Ok(())
    }
}

/// What a branch connects to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BranchKind {
    Dg(usize),
    Line(usize),
    Load(usize),
}

/// An energized RL branch. Positive current flows from `from` to `to`;
/// `None` stands for the ground or a DG's internal source.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Branch {
    pub kind: BranchKind,
    pub from: Option<usize>,
    pub to: Option<usize>,
    pub r: f64,
    pub l: f64,
}

/// Active branches for the current switching state, with the factorized
/// closure matrix for the Kirchhoff variant.
#[derive(Debug, Clone)]
pub struct Topology {
    pub n_bus: usize,
    pub branches: Vec<Branch>,
    /// Inverse of `A diag(1/L) A^T`.
    pub m_inv: DMatrix<f64>,
}

/// Rotation of a DQ pair by +90 degrees as it appears in the rotating-frame
/// derivative: `J(i) = (i_q, -i_d)`.
#[inline]
pub fn rot_j(i: [f64; 2]) -> [f64; 2] {
    [i[1], -i[0]]
}

impl Topology {
    /// `dgs` lists `(bus, r_c, l_c)` for every online DG, indexed by DG id.
    pub fn build(net: &NetworkModel, dgs: &[Option<(usize, f64, f64)>]) -> Self {
        let mut branches = Vec::new();
        for (k, d) in dgs.iter().enumerate() {
            if let Some((bus, r, l)) = *d {
                branches.push(Branch { kind: BranchKind::Dg(k), from: None, to: Some(bus), r, l });
            }
        }
        for (k, line) in net.lines.iter().enumerate().filter(|(_, l)| l.closed) {
            branches.push(Branch {
                kind: BranchKind::Line(k),
                from: Some(line.from),
                to: Some(line.to),
                r: line.r,
                l: line.l,
            });
        }
        for (k, load) in net.loads.iter().enumerate().filter(|(_, l)| l.connected) {
            branches.push(Branch {
                kind: BranchKind::Load(k),
                from: Some(load.bus),
                to: None,
                r: load.r,
                l: load.l,
            });
        }
        let n = net.n_bus();
        let mut m = DMatrix::<f64>::zeros(n, n);
        for b in &branches {
            let w = 1.0 / b.l;
            let ends = [(b.from, -1.0), (b.to, 1.0)];
            for &(p, sp) in &ends {
                for &(q, sq) in &ends {
                    if let (Some(p), Some(q)) = (p, q) {
                        m[(p, q)] += sp * sq * w;
                    }
                }
            }
        }
        let scale = m.diagonal().iter().fold(0.0f64, |a, v| a.max(v.abs())).max(1.0);
        let m_inv = match m.clone().try_inverse() {
            Some(inv) if inv.iter().all(|v| v.is_finite()) && rcond_ok(&m, &inv) => inv,
            _ => {
                for k in 0..n {
                    m[(k, k)] += 1e-9 * scale;
                }
                m.try_inverse().expect("regularized closure matrix is invertible")
            }
        };
        Self { n_bus: n, branches, m_inv }
    }

    /// KCL residual: net current entering each bus.
    pub fn residual(&self, currents: &[[f64; 2]]) -> Vec<[f64; 2]> {
        let mut r = vec![[0.0; 2]; self.n_bus];
        for (b, i) in self.branches.iter().zip(currents) {
            if let Some(t) = b.to {
                r[t][0] += i[0];
                r[t][1] += i[1];
            }
            if let Some(f) = b.from {
                r[f][0] -= i[0];
                r[f][1] -= i[1];
            }
        }
        r
    }

    /// Bus voltages for the given branch currents and branch source
    /// voltages (DG output voltages in the common frame, zero otherwise).
    pub fn bus_voltages(
        &self,
        closure: &Closure,
        currents: &[[f64; 2]],
        sources: &[[f64; 2]],
        omega_com: f64,
    ) -> Vec<[f64; 2]> {
        let r = self.residual(currents);
        match *closure {
            Closure::VirtualResistor { r_n } => r.iter().map(|v| [r_n * v[0], r_n * v[1]]).collect(),
            Closure::Kirchhoff { kappa } => {
                let n = self.n_bus;
                let mut rhs = vec![[0.0; 2]; n];
                for ((b, i), u) in self.branches.iter().zip(currents).zip(sources) {
                    let a = [(u[0] - b.r * i[0]) / b.l, (u[1] - b.r * i[1]) / b.l];
                    if let Some(t) = b.to {
                        rhs[t][0] += a[0];
                        rhs[t][1] += a[1];
                    }
                    if let Some(f) = b.from {
                        rhs[f][0] -= a[0];
                        rhs[f][1] -= a[1];
                    }
                }
                for (row, res) in rhs.iter_mut().zip(&r) {
                    let j = rot_j(*res);
                    row[0] += omega_com * j[0] + kappa * res[0];
                    row[1] += omega_com * j[1] + kappa * res[1];
                }
                self.solve_m(&rhs)
            }
        }
    }

    fn solve_m(&self, rhs: &[[f64; 2]]) -> Vec<[f64; 2]> {
        let n = self.n_bus;
        let mut v = vec![[0.0; 2]; n];
        for (p, out) in v.iter_mut().enumerate() {
            for (q, x) in rhs.iter().enumerate() {
                let m = self.m_inv[(p, q)];
                out[0] += m * x[0];
                out[1] += m * x[1];
            }
        }
        v
    }

    /// Current derivative of one branch given the bus voltages.
    #[inline]
    pub fn branch_derivative(b: &Branch, i: [f64; 2], u: [f64; 2], v_bus: &[[f64; 2]], omega_com: f64) -> [f64; 2] {
        let mut drop = u;
        if let Some(t) = b.to {
            drop[0] -= v_bus[t][0];
            drop[1] -= v_bus[t][1];
        }
        if let Some(f) = b.from {
            drop[0] += v_bus[f][0];
            drop[1] += v_bus[f][1];
        }
        let j = rot_j(i);
        [
            (drop[0] - b.r * i[0]) / b.l + omega_com * j[0],
            (drop[1] - b.r * i[1]) / b.l + omega_com * j[1],
        ]
    }
}

fn rcond_ok(m: &DMatrix<f64>, inv: &DMatrix<f64>) -> bool {
    m.norm() * inv.norm() < 1e13
}
