//! Leader-pinned communication graph, scripted link failures and message
//! delivery.

use std::collections::VecDeque;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::dmpc::OutputPrediction;
use crate::error::ConfigError;

/// Source of a neighbor prediction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Neighbor {
    Dg(usize),
    Leader,
}

/// `adjacency[i][j] > 0` means DG `i` receives from DG `j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommGraph {
    pub adjacency: Vec<Vec<f64>>,
    pub pinning: Vec<f64>,
}

impl CommGraph {
    pub fn new(adjacency: Vec<Vec<f64>>, pinning: Vec<f64>) -> Result<Self, ConfigError> {
        let g = Self { adjacency, pinning };
        g.validate()?;
        Ok(g)
    }

    /// Bidirectional chain `0 - 1 - ... - n-1`.
    pub fn chain(n: usize, pinned: &[usize]) -> Result<Self, ConfigError> {
        let edges: Vec<(usize, usize)> = (1..n).map(|k| (k - 1, k)).collect();
        Self::undirected(n, &edges, pinned)
    }

    /// Bidirectional ring.
    pub fn ring(n: usize, pinned: &[usize]) -> Result<Self, ConfigError> {
        let mut edges: Vec<(usize, usize)> = (1..n).map(|k| (k - 1, k)).collect();
        if n > 2 {
            edges.push((n - 1, 0));
        }
        Self::undirected(n, &edges, pinned)
    }

    pub fn undirected(n: usize, edges: &[(usize, usize)], pinned: &[usize]) -> Result<Self, ConfigError> {
        let mut a = vec![vec![0.0; n]; n];
        for &(i, j) in edges {
            if i >= n || j >= n {
                return Err(ConfigError::UnknownNode(i.max(j)));
            }
            a[i][j] = 1.0;
            a[j][i] = 1.0;
        }
        let mut b = vec![0.0; n];
        for &p in pinned {
            if p >= n {
                return Err(ConfigError::UnknownNode(p));
            }
            b[p] = 1.0;
        }
        Self::new(a, b)
    }

    pub fn n(&self) -> usize {
        self.pinning.len()
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let n = self.n();
        if self.adjacency.len() != n || self.adjacency.iter().any(|r| r.len() != n) {
            return Err(ConfigError::CommGraph("adjacency must be N x N with N pinning gains".into()));
        }
        for (i, row) in self.adjacency.iter().enumerate() {
            if row[i] != 0.0 {
                return Err(ConfigError::CommGraph(format!("self loop at DG{}", i + 1)));
            }
            if row.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
                return Err(ConfigError::CommGraph("weights must be finite and >= 0".into()));
            }
        }
        if self.pinning.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
            return Err(ConfigError::CommGraph("pinning gains must be finite and >= 0".into()));
        }
        self.check_spanning_tree(&vec![true; n])
    }

    /// Every present node must be reachable from the leader through present
    /// nodes.
    pub fn check_spanning_tree(&self, present: &[bool]) -> Result<(), ConfigError> {
        let n = self.n();
        let mut seen = vec![false; n];
        let mut queue: VecDeque<usize> = (0..n).filter(|&i| present[i] && self.pinning[i] > 0.0).collect();
        for &i in &queue {
            seen[i] = true;
        }
        while let Some(j) = queue.pop_front() {
            for i in 0..n {
                if present[i] && !seen[i] && self.adjacency[i][j] > 0.0 {
                    seen[i] = true;
                    queue.push_back(i);
                }
            }
        }
        match (0..n).find(|&i| present[i] && !seen[i]) {
            Some(i) => Err(ConfigError::CommGraph(format!("DG{} is not reachable from the leader", i + 1))),
            None => Ok(()),
        }
    }

    /// `L = D - A + B`.
    pub fn laplacian(&self) -> DMatrix<f64> {
        let n = self.n();
        DMatrix::from_fn(n, n, |i, j| {
            if i == j {
                self.adjacency[i].iter().sum::<f64>() + self.pinning[i]
            } else {
                -self.adjacency[i][j]
            }
        })
    }

    /// Ascending DG ids, leader last.
    pub fn neighbors(&self, i: usize) -> Result<Vec<Neighbor>, ConfigError> {
        if i >= self.n() {
            return Err(ConfigError::UnknownNode(i));
        }
        let mut out: Vec<Neighbor> =
            (0..self.n()).filter(|&j| self.adjacency[i][j] > 0.0).map(Neighbor::Dg).collect();
        if self.pinning[i] > 0.0 {
            out.push(Neighbor::Leader);
        }
        Ok(out)
    }
}

/// Down intervals `[start, end)` of one directed edge `from -> to`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkOutage {
    pub from: usize,
    pub to: usize,
    pub down: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LinkSchedule {
    pub edges: Vec<LinkOutage>,
}

impl LinkSchedule {
    pub fn validate(&self) -> Result<(), ConfigError> {
        for e in &self.edges {
            let mut last = f64::NEG_INFINITY;
            for &(a, b) in &e.down {
                if !(a < b) || a < last {
                    return Err(ConfigError::LinkSchedule(format!(
                        "edge {}->{}: intervals must be ordered, non-empty and non-overlapping",
                        e.from + 1,
                        e.to + 1
                    )));
                }
                last = b;
            }
        }
        Ok(())
    }

    /// Adds `[start, end)` to the directed edge, merging with the edge's
    /// existing list.
    pub fn add_outage(&mut self, from: usize, to: usize, start: f64, end: f64) {
        let entry = match self.edges.iter_mut().position(|e| e.from == from && e.to == to) {
            Some(p) => &mut self.edges[p],
            None => {
                self.edges.push(LinkOutage { from, to, down: Vec::new() });
                self.edges.last_mut().unwrap()
            }
        };
        entry.down.push((start, end));
        entry.down.sort_by(|a, b| a.0.total_cmp(&b.0));
    }

    pub fn is_down(&self, from: usize, to: usize, t: f64) -> bool {
        self.edges
            .iter()
            .filter(|e| e.from == from && e.to == to)
            .any(|e| e.down.iter().any(|&(a, b)| t >= a && t < b))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionMessage {
    pub sender: usize,
    pub issued_at: u64,
    pub payload: Vec<f64>,
}

impl PredictionMessage {
    pub fn prediction(&self) -> OutputPrediction {
        OutputPrediction { y: self.payload.clone(), issued_at: self.issued_at }
    }
}

/// One attempted transmission over a directed edge.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeliveryRecord {
    pub step: u64,
    pub from: usize,
    pub to: usize,
    pub delivered: bool,
}

/// Routes each message to every receiver that listens to its sender,
/// dropping those whose edge is down at `t`. `listening[i]` gates whether
/// DG `i` is present to receive.
pub fn deliver(
    msgs: &[PredictionMessage],
    graph: &CommGraph,
    sched: &LinkSchedule,
    t: f64,
    listening: &[bool],
) -> (Vec<Vec<PredictionMessage>>, Vec<DeliveryRecord>) {
    let n = graph.n();
    let mut inbox = vec![Vec::new(); n];
    let mut log = Vec::new();
    for m in msgs {
        for i in 0..n {
            if graph.adjacency[i][m.sender] > 0.0 && listening[i] {
                let ok = !sched.is_down(m.sender, i, t);
                log.push(DeliveryRecord { step: m.issued_at, from: m.sender, to: i, delivered: ok });
                if ok {
                    inbox[i].push(m.clone());
                }
            }
        }
    }
    (inbox, log)
}

pub fn leader_sequence(v_ref: f64, horizon: usize) -> OutputPrediction {
    OutputPrediction { y: vec![v_ref; horizon], issued_at: 0 }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trigger::holdover_prediction;

    #[test]
    fn chain_neighbors() {
        let g = CommGraph::chain(4, &[0]).unwrap();
        assert_eq!(g.neighbors(0).unwrap(), vec![Neighbor::Dg(1), Neighbor::Leader]);
        assert_eq!(g.neighbors(2).unwrap(), vec![Neighbor::Dg(1), Neighbor::Dg(3)]);
        assert!(g.neighbors(9).is_err());
    }

    #[test]
    fn isolated_node_rejected() {
        let a = vec![vec![0.0, 1.0, 0.0], vec![1.0, 0.0, 0.0], vec![0.0, 0.0, 0.0]];
        assert!(CommGraph::new(a, vec![1.0, 0.0, 0.0]).is_err());
        let g = CommGraph::chain(4, &[0]).unwrap();
        assert!(g.check_spanning_tree(&[true, false, true, true]).is_err());
        assert!(g.check_spanning_tree(&[true, true, true, false]).is_ok());
    }

    #[test]
    fn laplacian_rows() {
        let g = CommGraph::chain(3, &[0]).unwrap();
        let l = g.laplacian();
        assert_eq!(l[(0, 0)], 2.0);
        assert_eq!(l[(1, 1)], 2.0);
        assert_eq!(l[(2, 2)], 1.0);
        assert_eq!(l[(1, 0)], -1.0);
    }

    fn msgs() -> Vec<PredictionMessage> {
        (0..4).map(|s| PredictionMessage { sender: s, issued_at: 7, payload: vec![311.0; 3] }).collect()
    }

    #[test]
    fn delivery_with_schedule() {
        let g = CommGraph::chain(4, &[0]).unwrap();
        let on = [true; 4];
        let (inbox, log) = deliver(&msgs(), &g, &LinkSchedule::default(), 3.0, &on);
        assert!(log.iter().all(|r| r.delivered));
        assert_eq!(inbox[1].len(), 2);

        let mut sched = LinkSchedule::default();
        sched.add_outage(2, 3, 2.0, 6.0);
        sched.validate().unwrap();
        let (inbox, log) = deliver(&msgs(), &g, &sched, 3.0, &on);
        assert!(inbox[3].is_empty());
        assert_eq!(inbox[2].len(), 2);
        assert_eq!(log.iter().filter(|r| !r.delivered).count(), 1);
        let (inbox, _) = deliver(&msgs(), &g, &sched, 6.0, &on);
        assert_eq!(inbox[3].len(), 1);
    }

    #[test]
    fn overlapping_intervals_rejected() {
        let s = LinkSchedule { edges: vec![LinkOutage { from: 0, to: 1, down: vec![(1.0, 3.0), (2.0, 4.0)] }] };
        assert!(s.validate().is_err());
    }

    #[test]
    fn leader_examples() {
        assert_eq!(leader_sequence(311.0, 10).y, vec![311.0; 10]);
        assert_eq!(leader_sequence(311.0, 1).y, vec![311.0]);
        let l = leader_sequence(311.0, 5);
        for e in [0, 1, 4, 9] {
            assert_eq!(holdover_prediction(&l, e).y, l.y);
        }
    }
}
