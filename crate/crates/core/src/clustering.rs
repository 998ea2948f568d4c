//! One-pass threshold clustering of hidden-node activations and the search
//! for the coarsest tolerance that keeps the network's accuracy.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::data::EncodedSet;
use crate::error::{Error, Result};
use crate::network::{argmax, Network};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeClusters {
    /// Representative values; cluster means once finalized.
    pub centroids: Vec<f64>,
    pub counts: Vec<usize>,
    pub sums: Vec<f64>,
    pub epsilon: f64,
    /// Output effectively constant over the training set; not clustered.
    pub constant: bool,
}

impl NodeClusters {
    pub fn len(&self) -> usize {
        self.centroids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centroids.is_empty()
    }

    /// Nearest centroid, ties to the lower index.
    pub fn assign(&self, delta: f64) -> usize {
        nearest(&self.centroids, delta)
    }
}

fn nearest(centres: &[f64], delta: f64) -> usize {
    let mut best = 0;
    for (j, c) in centres.iter().enumerate() {
        if (delta - c).abs() < (delta - centres[best]).abs() {
            best = j;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterModel {
    pub nodes: Vec<NodeClusters>,
}

impl ClusterModel {
    pub fn assign(&self, node: usize, delta: f64) -> usize {
        self.nodes[node].assign(delta)
    }

    /// Cluster index of every hidden node for input `x`.
    pub fn cluster_tuple(&self, net: &Network, x: &[f64]) -> Vec<usize> {
        net.hidden_activations(x)
            .iter()
            .enumerate()
            .map(|(m, &a)| self.assign(m, a))
            .collect()
    }

    /// Network class with every hidden activation replaced by its centroid.
    pub fn classify(&self, net: &Network, x: &[f64]) -> usize {
        let hidden: Vec<f64> = self
            .cluster_tuple(net, x)
            .iter()
            .enumerate()
            .map(|(m, &j)| self.nodes[m].centroids[j])
            .collect();
        argmax(&net.outputs_from_hidden(&hidden))
    }

    pub fn report(&self) -> String {
        let mut out = String::from("node  epsilon  constant  D  centroids / counts\n");
        for (m, node) in self.nodes.iter().enumerate() {
            let values: Vec<String> = node
                .centroids
                .iter()
                .zip(&node.counts)
                .map(|(c, k)| format!("{c:.4} ({k})"))
                .collect();
            let _ = writeln!(
                out,
                "H{:<4}{:<9.4}{:<10}{:<3}{}",
                m + 1,
                node.epsilon,
                node.constant,
                node.len(),
                values.join(", ")
            );
        }
        out
    }
}

/// Clusters `activations` in order with tolerance `epsilon`. Also returns,
/// for each value, the cluster it joined at insertion time.
pub fn cluster_node_logged(activations: &[f64], epsilon: f64) -> (NodeClusters, Vec<usize>) {
    assert!(!activations.is_empty(), "nothing to cluster");
    let mut seeds = vec![activations[0]];
    let mut counts = vec![1usize];
    let mut sums = vec![activations[0]];
    let mut membership = vec![0];
    for &delta in &activations[1..] {
        let j = nearest(&seeds, delta);
        if (delta - seeds[j]).abs() <= epsilon {
            counts[j] += 1;
            sums[j] += delta;
            membership.push(j);
        } else {
            seeds.push(delta);
            counts.push(1);
            sums.push(delta);
            membership.push(seeds.len() - 1);
        }
    }
    let centroids = sums
        .iter()
        .zip(&counts)
        .map(|(s, &c)| s / c as f64)
        .collect();
    (
        NodeClusters {
            centroids,
            counts,
            sums,
            epsilon,
            constant: false,
        },
        membership,
    )
}

pub fn cluster_node(activations: &[f64], epsilon: f64) -> NodeClusters {
    cluster_node_logged(activations, epsilon).0
}

/// Accuracy with the given nodes discretized (`Some`) and the rest continuous.
pub fn partial_discretized_accuracy(
    net: &Network,
    nodes: &[Option<&NodeClusters>],
    set: &EncodedSet,
) -> f64 {
    if set.is_empty() {
        return 0.0;
    }
    let correct = set
        .inputs
        .iter()
        .zip(&set.labels)
        .filter(|(x, &y)| {
            let hidden: Vec<f64> = net
                .hidden_activations(x)
                .iter()
                .zip(nodes)
                .map(|(&a, node)| match node {
                    Some(c) => c.centroids[c.assign(a)],
                    None => a,
                })
                .collect();
            argmax(&net.outputs_from_hidden(&hidden)) == y
        })
        .count();
    correct as f64 / set.len() as f64
}

pub fn discretized_accuracy(net: &Network, model: &ClusterModel, set: &EncodedSet) -> f64 {
    let nodes: Vec<Option<&NodeClusters>> = model.nodes.iter().map(Some).collect();
    partial_discretized_accuracy(net, &nodes, set)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClusterSearchConfig {
    /// Grid step for the tolerance search.
    pub zeta: f64,
    /// Minimum discretized train accuracy. `None` demands exactly the
    /// continuous network's train accuracy.
    pub required_accuracy: Option<f64>,
    /// Activation range over the training set below which a node counts as constant.
    pub constant_tol: f64,
}

impl Default for ClusterSearchConfig {
    fn default() -> Self {
        ClusterSearchConfig {
            zeta: 0.1,
            required_accuracy: None,
            constant_tol: 1e-2,
        }
    }
}

impl ClusterSearchConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.zeta > 0.0 && self.zeta < 1.0) {
            return Err(Error::Config("cluster: zeta must lie in (0, 1)".into()));
        }
        if self
            .required_accuracy
            .is_some_and(|r| !(0.0..=1.0).contains(&r))
        {
            return Err(Error::Config(
                "cluster: required_accuracy must lie in [0, 1]".into(),
            ));
        }
        Ok(())
    }

    /// Tolerances iζ < 1, largest first.
    pub fn grid(&self) -> Vec<f64> {
        let top = ((1.0 / self.zeta) - 1e-9).floor() as usize;
        (1..=top)
            .rev()
            .map(|i| i as f64 * self.zeta)
            .filter(|&e| e < 1.0)
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct ClusterSearchOutcome {
    pub model: ClusterModel,
    pub required_accuracy: f64,
    pub continuous_accuracy: f64,
    pub discretized_accuracy: f64,
    /// Nodes for which no grid tolerance met the target (ζ/10 used instead).
    pub fallback_nodes: Vec<usize>,
}

/// Chooses a tolerance per node, largest grid value first. Nodes are settled
/// in order; while node m is searched, nodes before it are already
/// discretized and nodes after it stay continuous, so the final model meets
/// the target whenever every node found a grid tolerance.
pub fn search_epsilon(
    net: &Network,
    train: &EncodedSet,
    cfg: &ClusterSearchConfig,
) -> Result<ClusterSearchOutcome> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::Empty);
    }
    let continuous = net.accuracy(train);
    let required = cfg.required_accuracy.unwrap_or(continuous);

    let mut by_node = vec![Vec::with_capacity(train.len()); net.hidden()];
    for x in &train.inputs {
        for (m, a) in net.hidden_activations(x).into_iter().enumerate() {
            by_node[m].push(a);
        }
    }

    let grid = cfg.grid();
    let mut settled: Vec<NodeClusters> = Vec::new();
    let mut fallback_nodes = Vec::new();
    for (m, acts) in by_node.iter().enumerate() {
        let (lo, hi) = acts
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &a| {
                (lo.min(a), hi.max(a))
            });
        if hi - lo < cfg.constant_tol {
            let sum: f64 = acts.iter().sum();
            settled.push(NodeClusters {
                centroids: vec![sum / acts.len() as f64],
                counts: vec![acts.len()],
                sums: vec![sum],
                epsilon: hi - lo,
                constant: true,
            });
            continue;
        }
        let accuracy_with = |candidate: &NodeClusters| {
            let mut nodes: Vec<Option<&NodeClusters>> = settled.iter().map(Some).collect();
            nodes.push(Some(candidate));
            nodes.resize(net.hidden(), None);
            partial_discretized_accuracy(net, &nodes, train)
        };
        let chosen = grid.iter().map(|&eps| cluster_node(acts, eps)).find(|c| {
            let acc = accuracy_with(c);
            match cfg.required_accuracy {
                Some(r) => acc >= r,
                None => acc == continuous,
            }
        });
        let node = match chosen {
            Some(c) => c,
            None => {
                fallback_nodes.push(m);
                cluster_node(acts, cfg.zeta / 10.0)
            }
        };
        settled.push(node);
    }
    let model = ClusterModel { nodes: settled };
    let discretized = discretized_accuracy(net, &model, train);
    Ok(ClusterSearchOutcome {
        model,
        required_accuracy: required,
        continuous_accuracy: continuous,
        discretized_accuracy: discretized,
        fallback_nodes,
    })
}
