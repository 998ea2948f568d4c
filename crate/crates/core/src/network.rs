//! Three-layer feedforward classifier: tanh hidden layer, logistic outputs,
//! one bias input feeding both layers.
//!
//! Weights are stored densely with per-connection activity masks. The last
//! column of `w` (input to hidden) and of `v` (hidden to output) holds the
//! bias weights. Bias links are never masked and never counted as
//! connections.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::EncodedSet;
use crate::error::{parse_err, Error, Result};

pub fn tanh(y: f64) -> f64 {
    y.tanh()
}

pub fn sigmoid(y: f64) -> f64 {
    1.0 / (1.0 + (-y).exp())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Topology {
    pub inputs: usize,
    pub hidden: usize,
    pub outputs: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Layer {
    /// Input to hidden (`w`).
    Hidden,
    /// Hidden to output (`v`).
    Output,
}

/// Address of one weight. Orders as (layer, row, column).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct WeightId {
    pub layer: Layer,
    pub row: usize,
    pub col: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    inputs: usize,
    outputs: usize,
    /// h rows of n + 1 weights.
    pub w: Vec<Vec<f64>>,
    /// C rows of h + 1 weights.
    pub v: Vec<Vec<f64>>,
    pub w_active: Vec<Vec<bool>>,
    pub v_active: Vec<Vec<bool>>,
    /// Input weights of frozen hidden nodes are not updated by training.
    pub frozen: Vec<bool>,
}

fn uniform(rng: &mut ChaCha8Rng) -> f64 {
    rng.gen_range(-1.0..=1.0)
}

impl Network {
    /// One hidden node, every weight uniform in [-1, 1].
    pub fn new(inputs: usize, outputs: usize, seed: u64) -> Network {
        assert!(inputs >= 1 && outputs >= 2, "need n >= 1 and C >= 2");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w = vec![(0..=inputs).map(|_| uniform(&mut rng)).collect::<Vec<_>>()];
        let v = (0..outputs)
            .map(|_| vec![uniform(&mut rng), uniform(&mut rng)])
            .collect::<Vec<_>>();
        Network {
            inputs,
            outputs,
            w_active: vec![vec![true; inputs + 1]],
            v_active: vec![vec![true; 2]; outputs],
            w,
            v,
            frozen: vec![false],
        }
    }

    /// All-zero network with `hidden` nodes; mostly useful in tests.
    pub fn zeros(inputs: usize, hidden: usize, outputs: usize) -> Network {
        Network {
            inputs,
            outputs,
            w: vec![vec![0.0; inputs + 1]; hidden],
            v: vec![vec![0.0; hidden + 1]; outputs],
            w_active: vec![vec![true; inputs + 1]; hidden],
            v_active: vec![vec![true; hidden + 1]; outputs],
            frozen: vec![false; hidden],
        }
    }

    pub fn topology(&self) -> Topology {
        Topology {
            inputs: self.inputs,
            hidden: self.hidden(),
            outputs: self.outputs,
        }
    }

    pub fn inputs(&self) -> usize {
        self.inputs
    }

    pub fn hidden(&self) -> usize {
        self.w.len()
    }

    pub fn outputs(&self) -> usize {
        self.outputs
    }

    /// Appends a hidden node with fresh uniform weights; existing weights are
    /// left untouched.
    pub fn add_hidden_node(&mut self, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = self.hidden();
        self.w
            .push((0..=self.inputs).map(|_| uniform(&mut rng)).collect());
        self.w_active.push(vec![true; self.inputs + 1]);
        self.frozen.push(false);
        for (row, active) in self.v.iter_mut().zip(&mut self.v_active) {
            row.insert(h, uniform(&mut rng));
            active.insert(h, true);
        }
    }

    pub fn hidden_net_input(&self, m: usize, x: &[f64]) -> f64 {
        let row = &self.w[m];
        let active = &self.w_active[m];
        let mut sum = if active[self.inputs] {
            row[self.inputs]
        } else {
            0.0
        };
        for l in 0..self.inputs {
            if active[l] {
                sum += row[l] * x[l];
            }
        }
        sum
    }

    pub fn hidden_activations(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.inputs);
        (0..self.hidden())
            .map(|m| tanh(self.hidden_net_input(m, x)))
            .collect()
    }

    /// Output layer applied to given hidden values (continuous or discretized).
    pub fn outputs_from_hidden(&self, hidden: &[f64]) -> Vec<f64> {
        let h = self.hidden();
        self.v
            .iter()
            .zip(&self.v_active)
            .map(|(row, active)| {
                let mut sum = if active[h] { row[h] } else { 0.0 };
                for m in 0..h {
                    if active[m] {
                        sum += row[m] * hidden[m];
                    }
                }
                sigmoid(sum)
            })
            .collect()
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        self.outputs_from_hidden(&self.hidden_activations(x))
    }

    pub fn classify(&self, x: &[f64]) -> usize {
        argmax(&self.forward(x))
    }

    pub fn accuracy(&self, set: &EncodedSet) -> f64 {
        if set.is_empty() {
            return 0.0;
        }
        let correct = set
            .inputs
            .iter()
            .zip(&set.labels)
            .filter(|(x, &y)| self.classify(x) == y)
            .count();
        correct as f64 / set.len() as f64
    }

    pub fn weight(&self, id: WeightId) -> f64 {
        match id.layer {
            Layer::Hidden => self.w[id.row][id.col],
            Layer::Output => self.v[id.row][id.col],
        }
    }

    pub fn is_active(&self, id: WeightId) -> bool {
        match id.layer {
            Layer::Hidden => self.w_active[id.row][id.col],
            Layer::Output => self.v_active[id.row][id.col],
        }
    }

    pub fn is_bias(&self, id: WeightId) -> bool {
        match id.layer {
            Layer::Hidden => id.col == self.inputs,
            Layer::Output => id.col == self.hidden(),
        }
    }

    /// Masks a connection and zeroes its weight.
    pub fn deactivate(&mut self, id: WeightId) {
        match id.layer {
            Layer::Hidden => {
                self.w_active[id.row][id.col] = false;
                self.w[id.row][id.col] = 0.0;
            }
            Layer::Output => {
                self.v_active[id.row][id.col] = false;
                self.v[id.row][id.col] = 0.0;
            }
        }
    }

    /// Active non-bias weights in (layer, row, column) order.
    pub fn active_connections(&self) -> Vec<WeightId> {
        let mut ids = Vec::new();
        for (m, row) in self.w_active.iter().enumerate() {
            for (l, &a) in row[..self.inputs].iter().enumerate() {
                if a {
                    ids.push(WeightId {
                        layer: Layer::Hidden,
                        row: m,
                        col: l,
                    });
                }
            }
        }
        let h = self.hidden();
        for (p, row) in self.v_active.iter().enumerate() {
            for (m, &a) in row[..h].iter().enumerate() {
                if a {
                    ids.push(WeightId {
                        layer: Layer::Output,
                        row: p,
                        col: m,
                    });
                }
            }
        }
        ids
    }

    /// Reported connection count: active links, bias links excluded.
    pub fn connection_count(&self) -> usize {
        self.active_connections().len()
    }

    /// Inputs with at least one active outgoing connection.
    pub fn relevant_inputs(&self) -> Vec<bool> {
        (0..self.inputs)
            .map(|l| self.w_active.iter().any(|row| row[l]))
            .collect()
    }

    /// Reported node count: relevant inputs + hidden + outputs.
    pub fn node_count(&self) -> usize {
        self.relevant_inputs().iter().filter(|&&r| r).count() + self.hidden() + self.outputs
    }

    /// Drops hidden node `m`. Its output contribution is not preserved; see
    /// `pruning::remove_dead_nodes` for the function-preserving variant.
    pub fn remove_hidden_node(&mut self, m: usize) {
        self.w.remove(m);
        self.w_active.remove(m);
        self.frozen.remove(m);
        for (row, active) in self.v.iter_mut().zip(&mut self.v_active) {
            row.remove(m);
            active.remove(m);
        }
    }

    /// Forces inactive slots to zero. Training calls this after every update.
    pub fn enforce_masks(&mut self) {
        for (row, active) in self.w.iter_mut().zip(&self.w_active) {
            for (x, &a) in row.iter_mut().zip(active) {
                if !a {
                    *x = 0.0;
                }
            }
        }
        for (row, active) in self.v.iter_mut().zip(&self.v_active) {
            for (x, &a) in row.iter_mut().zip(active) {
                if !a {
                    *x = 0.0;
                }
            }
        }
    }

    /// Line-oriented text form; weights use shortest round-trip formatting.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "network {} {} {}",
            self.inputs,
            self.hidden(),
            self.outputs
        );
        let frozen: Vec<&str> = self
            .frozen
            .iter()
            .map(|&f| if f { "1" } else { "0" })
            .collect();
        let _ = writeln!(out, "frozen {}", frozen.join(" "));
        for (m, (row, active)) in self.w.iter().zip(&self.w_active).enumerate() {
            for (l, (x, a)) in row.iter().zip(active).enumerate() {
                let _ = writeln!(out, "w {m} {l} {} {x:?}", u8::from(*a));
            }
        }
        for (p, (row, active)) in self.v.iter().zip(&self.v_active).enumerate() {
            for (m, (x, a)) in row.iter().zip(active).enumerate() {
                let _ = writeln!(out, "v {p} {m} {} {x:?}", u8::from(*a));
            }
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Network> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
        let (ln, header) = lines
            .next()
            .ok_or_else(|| parse_err(1, "empty network file"))?;
        let dims: Vec<usize> = match header.split_whitespace().collect::<Vec<_>>().as_slice() {
            ["network", rest @ ..] if rest.len() == 3 => rest
                .iter()
                .map(|s| s.parse().map_err(|_| parse_err(ln, "bad dimension")))
                .collect::<Result<_>>()?,
            _ => return Err(parse_err(ln, "expected `network <n> <h> <C>`")),
        };
        let (n, h, c) = (dims[0], dims[1], dims[2]);
        if n == 0 || h == 0 || c < 2 {
            return Err(parse_err(ln, "topology needs n >= 1, h >= 1, C >= 2"));
        }
        let mut net = Network::zeros(n, h, c);
        let mut seen = 0usize;
        for (ln, line) in lines {
            let fields: Vec<&str> = line.split_whitespace().collect();
            match fields.as_slice() {
                ["frozen", flags @ ..] => {
                    if flags.len() != h {
                        return Err(parse_err(ln, "frozen flag count does not match h"));
                    }
                    for (m, f) in flags.iter().enumerate() {
                        net.frozen[m] = match *f {
                            "0" => false,
                            "1" => true,
                            _ => return Err(parse_err(ln, "frozen flag must be 0 or 1")),
                        };
                    }
                }
                [layer @ ("w" | "v"), row, col, active, value] => {
                    let row: usize = row.parse().map_err(|_| parse_err(ln, "bad row"))?;
                    let col: usize = col.parse().map_err(|_| parse_err(ln, "bad column"))?;
                    let active = match *active {
                        "0" => false,
                        "1" => true,
                        _ => return Err(parse_err(ln, "active flag must be 0 or 1")),
                    };
                    let value: f64 = value.parse().map_err(|_| parse_err(ln, "bad weight"))?;
                    let (weights, mask) = if *layer == "w" {
                        (&mut net.w, &mut net.w_active)
                    } else {
                        (&mut net.v, &mut net.v_active)
                    };
                    let slot = weights
                        .get_mut(row)
                        .and_then(|r| r.get_mut(col))
                        .ok_or_else(|| parse_err(ln, "weight index out of range"))?;
                    *slot = value;
                    mask[row][col] = active;
                    seen += 1;
                }
                _ => return Err(parse_err(ln, format!("unrecognised line {line:?}"))),
            }
        }
        let expected = h * (n + 1) + c * (h + 1);
        if seen != expected {
            return Err(Error::Parse {
                line: 0,
                message: format!("expected {expected} weights, found {seen}"),
            });
        }
        Ok(net)
    }
}

/// Index of the largest value; ties go to the lower index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in values.iter().enumerate() {
        if x > values[best] {
            best = i;
        }
    }
    best
}
