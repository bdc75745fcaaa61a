//! Brute-force reference implementations of the kernel, basin and eddies
//! set iterations over explicitly materialized successor graphs.
//!
//! These exist purely so the test suites can validate the production
//! algorithms on small instances; they share no iteration code with them
//! and favour obviousness over speed. Node sets are plain boolean masks.

/// Explicit successor lists per (node, control).
#[derive(Debug, Clone)]
pub struct SuccessorGraph {
    nodes: usize,
    controls: usize,
    successors: Vec<Vec<u32>>,
}

impl SuccessorGraph {
    pub fn new(nodes: usize, controls: usize) -> SuccessorGraph {
        assert!(controls >= 1, "graph needs at least one control");
        SuccessorGraph {
            nodes,
            controls,
            successors: vec![Vec::new(); nodes * controls],
        }
    }

    pub fn nodes(&self) -> usize {
        self.nodes
    }

    pub fn controls(&self) -> usize {
        self.controls
    }

    pub fn add_edge(&mut self, node: usize, control: usize, successor: usize) {
        assert!(node < self.nodes && successor < self.nodes && control < self.controls);
        self.successors[node * self.controls + control].push(successor as u32);
    }

    pub fn set_successors(&mut self, node: usize, control: usize, list: Vec<u32>) {
        assert!(node < self.nodes && control < self.controls);
        self.successors[node * self.controls + control] = list;
    }

    pub fn successors(&self, node: usize, control: usize) -> &[u32] {
        &self.successors[node * self.controls + control]
    }
}

fn some_successor_in(graph: &SuccessorGraph, node: usize, set: &[bool]) -> bool {
    (0..graph.controls).any(|u| graph.successors(node, u).iter().any(|&s| set[s as usize]))
}

/// Largest subset of `constraint` in which every node keeps, under some
/// control, at least one successor inside the subset. Repeated full scans
/// until nothing changes.
pub fn oracle_kernel(graph: &SuccessorGraph, constraint: &[bool]) -> Vec<bool> {
    assert_eq!(constraint.len(), graph.nodes);
    let mut kernel = constraint.to_vec();
    loop {
        let mut changed = false;
        let snapshot = kernel.clone();
        for node in 0..graph.nodes {
            if snapshot[node] && !some_successor_in(graph, node, &snapshot) {
                kernel[node] = false;
                changed = true;
            }
        }
        if !changed {
            return kernel;
        }
    }
}

/// Nodes with a control path into `target` whose intermediate nodes stay
/// inside `constraint`: multi-source reverse reachability by full scans.
pub fn oracle_basin(graph: &SuccessorGraph, target: &[bool], constraint: &[bool]) -> Vec<bool> {
    assert_eq!(target.len(), graph.nodes);
    assert_eq!(constraint.len(), graph.nodes);
    let mut basin = target.to_vec();
    loop {
        let mut changed = false;
        for node in 0..graph.nodes {
            if !basin[node] && constraint[node] && some_successor_in(graph, node, &basin) {
                basin[node] = true;
                changed = true;
            }
        }
        if !changed {
            return basin;
        }
    }
}

/// Alternating reachability until stabilization: the maximal pair inside
/// the candidate masks where each side can reach the other.
pub fn oracle_eddies(
    graph: &SuccessorGraph,
    plus: &[bool],
    minus: &[bool],
) -> (Vec<bool>, Vec<bool>) {
    assert_eq!(plus.len(), graph.nodes);
    assert_eq!(minus.len(), graph.nodes);
    let everywhere = vec![true; graph.nodes];
    let mut e_plus = plus.to_vec();
    let mut e_minus = minus.to_vec();
    loop {
        let reach_plus = oracle_basin(graph, &e_plus, &everywhere);
        let new_minus: Vec<bool> = (0..graph.nodes)
            .map(|i| reach_plus[i] && e_minus[i])
            .collect();
        let reach_minus = oracle_basin(graph, &new_minus, &everywhere);
        let new_plus: Vec<bool> = (0..graph.nodes)
            .map(|i| reach_minus[i] && e_plus[i])
            .collect();
        if new_plus == e_plus && new_minus == e_minus {
            return (e_plus, e_minus);
        }
        e_plus = new_plus;
        e_minus = new_minus;
    }
}
