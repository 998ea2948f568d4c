//! Online backpropagation on the penalized cross-entropy objective, plateau
//! detection, weight freezing and the constructive (node-adding) loop.

use std::collections::VecDeque;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::data::EncodedSet;
use crate::error::{Error, Result};
use crate::network::Network;

const PROB_CLAMP: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    /// Epoch window used for plateau detection and freezing.
    pub tau: usize,
    /// Relative spread of the objective over the window below which training stops.
    pub plateau_tol: f64,
    /// Mean absolute activation change over the window below which a node freezes.
    pub freeze_tol: f64,
    pub eps1: f64,
    pub eps2: f64,
    pub beta: f64,
    /// Epoch budget of one plateau search.
    pub max_epochs: usize,
    pub max_hidden: usize,
    /// Acceptable validation error (sum form). `None` derives it from an
    /// unpenalized reference network.
    pub valid_error_target: Option<f64>,
    pub reference_hidden: usize,
    pub reference_factor: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.1,
            tau: 10,
            plateau_tol: 1e-3,
            freeze_tol: 1e-2,
            eps1: 0.1,
            eps2: 1e-4,
            beta: 10.0,
            max_epochs: 1000,
            max_hidden: 8,
            valid_error_target: None,
            reference_hidden: 3,
            reference_factor: 0.95,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("train: {m}")));
        if !(0.1..=1.0).contains(&self.learning_rate) {
            return bad("learning_rate must lie in [0.1, 1.0]");
        }
        if self.tau == 0 || self.max_epochs == 0 || self.max_hidden == 0 {
            return bad("tau, max_epochs and max_hidden must be positive");
        }
        if !(self.plateau_tol > 0.0 && self.freeze_tol > 0.0) {
            return bad("tolerances must be positive");
        }
        if self.eps1 < 0.0 || self.eps2 < 0.0 || self.beta <= 0.0 {
            return bad("penalty coefficients must be non-negative and beta positive");
        }
        if self
            .valid_error_target
            .is_some_and(|t| t.is_nan() || t < 0.0)
        {
            return bad("valid_error_target must be non-negative");
        }
        if self.reference_hidden == 0 || self.reference_factor <= 0.0 {
            return bad("reference network settings must be positive");
        }
        Ok(())
    }

    fn unpenalized(&self) -> TrainConfig {
        TrainConfig {
            eps1: 0.0,
            eps2: 0.0,
            ..self.clone()
        }
    }
}

/// E = ½ Σ_i Σ_p (S_pi − t_pi)².
pub fn squared_error(net: &Network, set: &EncodedSet) -> f64 {
    let mut e = 0.0;
    for (x, t) in set.inputs.iter().zip(&set.targets) {
        for (s, t) in net.forward(x).iter().zip(t) {
            e += (s - t) * (s - t);
        }
    }
    0.5 * e
}

/// F = −Σ_i Σ_p [t log S + (1 − t) log(1 − S)], outputs clamped away from 0 and 1.
pub fn cross_entropy(net: &Network, set: &EncodedSet) -> f64 {
    let mut f = 0.0;
    for (x, t) in set.inputs.iter().zip(&set.targets) {
        for (s, t) in net.forward(x).iter().zip(t) {
            let s = s.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
            f -= t * s.ln() + (1.0 - t) * (1.0 - s).ln();
        }
    }
    f
}

/// Weight-decay penalty over active non-bias weights of both layers.
pub fn penalty(net: &Network, eps1: f64, eps2: f64, beta: f64) -> f64 {
    let mut saturating = 0.0;
    let mut quadratic = 0.0;
    for id in net.active_connections() {
        let q2 = net.weight(id).powi(2);
        saturating += beta * q2 / (1.0 + beta * q2);
        quadratic += q2;
    }
    eps1 * saturating + eps2 * quadratic
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Objective {
    pub cross_entropy: f64,
    pub penalty: f64,
    pub theta: f64,
}

pub fn objective(net: &Network, set: &EncodedSet, cfg: &TrainConfig) -> Objective {
    let f = cross_entropy(net, set);
    let p = penalty(net, cfg.eps1, cfg.eps2, cfg.beta);
    Objective {
        cross_entropy: f,
        penalty: p,
        theta: f + p,
    }
}

/// Same shape as the network's weight matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub w: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

impl Gradient {
    pub fn zeros(net: &Network) -> Gradient {
        Gradient {
            w: net.w.iter().map(|r| vec![0.0; r.len()]).collect(),
            v: net.v.iter().map(|r| vec![0.0; r.len()]).collect(),
        }
    }
}

/// Adds ∂F_i/∂(w, v) for one pattern into `grad`. Logistic outputs with
/// cross-entropy give ∂F/∂(net input of p) = S_p − t_p.
fn accumulate_pattern_gradient(
    net: &Network,
    x: &[f64],
    t: &[f64],
    scratch: &mut Vec<f64>,
    grad: &mut Gradient,
) {
    let n = net.inputs();
    let h = net.hidden();
    let hidden = net.hidden_activations(x);
    let out = net.outputs_from_hidden(&hidden);
    scratch.clear();
    scratch.resize(h, 0.0);
    for p in 0..net.outputs() {
        let delta = out[p] - t[p];
        let row = &mut grad.v[p];
        for m in 0..h {
            row[m] += delta * hidden[m];
            if net.v_active[p][m] {
                scratch[m] += delta * net.v[p][m];
            }
        }
        row[h] += delta;
    }
    for m in 0..h {
        let back = scratch[m] * (1.0 - hidden[m] * hidden[m]);
        let row = &mut grad.w[m];
        for l in 0..n {
            row[l] += back * x[l];
        }
        row[n] += back;
    }
}

/// ∂P/∂q = ε₁·2βq/(1 + βq²)² + ε₂·2q on active non-bias weights, added with `scale`.
fn accumulate_penalty_gradient(net: &Network, cfg: &TrainConfig, scale: f64, grad: &mut Gradient) {
    let d = |q: f64| {
        let s = 1.0 + cfg.beta * q * q;
        cfg.eps1 * 2.0 * cfg.beta * q / (s * s) + cfg.eps2 * 2.0 * q
    };
    for id in net.active_connections() {
        let g = scale * d(net.weight(id));
        match id.layer {
            crate::network::Layer::Hidden => grad.w[id.row][id.col] += g,
            crate::network::Layer::Output => grad.v[id.row][id.col] += g,
        }
    }
}

/// Gradient of θ = F + P over the whole set (unmasked entries included).
pub fn gradient(net: &Network, set: &EncodedSet, cfg: &TrainConfig) -> Gradient {
    let mut grad = Gradient::zeros(net);
    let mut scratch = Vec::new();
    for (x, t) in set.inputs.iter().zip(&set.targets) {
        accumulate_pattern_gradient(net, x, t, &mut scratch, &mut grad);
    }
    accumulate_penalty_gradient(net, cfg, 1.0, &mut grad);
    grad
}

/// One pass of per-pattern updates in set order. Each step applies the
/// pattern's cross-entropy gradient plus 1/k of the penalty gradient, so one
/// epoch applies the full penalty once. Frozen rows and inactive slots are
/// never touched.
pub fn backprop_epoch(net: &mut Network, train: &EncodedSet, cfg: &TrainConfig) -> Result<()> {
    if train.is_empty() {
        return Ok(());
    }
    let k = train.len() as f64;
    let mut grad = Gradient::zeros(net);
    let mut scratch = Vec::new();
    for (x, t) in train.inputs.iter().zip(&train.targets) {
        for row in grad.w.iter_mut().chain(grad.v.iter_mut()) {
            row.iter_mut().for_each(|g| *g = 0.0);
        }
        accumulate_pattern_gradient(net, x, t, &mut scratch, &mut grad);
        accumulate_penalty_gradient(net, cfg, 1.0 / k, &mut grad);
        apply_update(net, &grad, cfg.learning_rate);
    }
    let finite = net.w.iter().chain(&net.v).flatten().all(|q| q.is_finite());
    if !finite {
        return Err(Error::Diverged {
            epoch: 0,
            value: f64::NAN,
        });
    }
    Ok(())
}

fn apply_update(net: &mut Network, grad: &Gradient, lr: f64) {
    for m in 0..net.hidden() {
        if net.frozen[m] {
            continue;
        }
        for (l, g) in grad.w[m].iter().enumerate() {
            if net.w_active[m][l] {
                net.w[m][l] -= lr * g;
            }
        }
    }
    for p in 0..net.outputs() {
        for (m, g) in grad.v[p].iter().enumerate() {
            if net.v_active[p][m] {
                net.v[p][m] -= lr * g;
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// Position in the full trace, starting at 1.
    pub epoch: usize,
    pub valid_error: Option<f64>,
    pub cross_entropy: f64,
    pub penalty: f64,
    pub theta: f64,
    /// Mean activation of each hidden node over the training set.
    pub hidden_means: Vec<f64>,
}

/// Per-pattern activations at the start and end of the last τ-epoch window,
/// indexed `[node][pattern]`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ActivationWindow {
    pub then: Vec<Vec<f64>>,
    pub now: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainTrace {
    pub records: Vec<EpochRecord>,
    pub window: Option<ActivationWindow>,
    pub hit_max_epochs: bool,
}

impl TrainTrace {
    pub fn epochs(&self) -> usize {
        self.records.len()
    }

    /// Appends another segment, renumbering its epochs.
    pub fn extend(&mut self, other: TrainTrace) {
        let offset = self.records.len();
        self.records.extend(other.records.into_iter().map(|mut r| {
            r.epoch += offset;
            r
        }));
        self.window = other.window;
        self.hit_max_epochs = other.hit_max_epochs;
    }

    /// One row per epoch: epoch, E on validation, F, P, θ, then one mean
    /// activation column per hidden node (blank where the node did not exist).
    pub fn to_csv(&self) -> String {
        let width = self
            .records
            .iter()
            .map(|r| r.hidden_means.len())
            .max()
            .unwrap_or(0);
        let mut out = String::from("epoch,e_valid,f,p,theta");
        for m in 0..width {
            let _ = write!(out, ",h{}", m + 1);
        }
        out.push('\n');
        for r in &self.records {
            let e = r.valid_error.map(|e| format!("{e:?}")).unwrap_or_default();
            let _ = write!(
                out,
                "{},{},{:?},{:?},{:?}",
                r.epoch, e, r.cross_entropy, r.penalty, r.theta
            );
            for m in 0..width {
                match r.hidden_means.get(m) {
                    Some(a) => {
                        let _ = write!(out, ",{a:?}");
                    }
                    None => out.push(','),
                }
            }
            out.push('\n');
        }
        out
    }
}

fn activation_matrix(net: &Network, set: &EncodedSet) -> Vec<Vec<f64>> {
    let mut by_node = vec![Vec::with_capacity(set.len()); net.hidden()];
    for x in &set.inputs {
        for (m, a) in net.hidden_activations(x).into_iter().enumerate() {
            by_node[m].push(a);
        }
    }
    by_node
}

/// Relative spread (max − min) / |first| of the last `tau + 1` objective values.
pub fn plateau_spread(thetas: &[f64], tau: usize) -> Option<f64> {
    if thetas.len() < tau + 1 {
        return None;
    }
    let window = &thetas[thetas.len() - tau - 1..];
    let (lo, hi) = window
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| {
            (lo.min(x), hi.max(x))
        });
    Some((hi - lo) / window[0].abs().max(1e-12))
}

/// Trains until the objective is flat over τ epochs or `cfg.max_epochs`
/// epochs have run (flagged in the trace, not an error).
pub fn train_until_plateau(
    net: &mut Network,
    train: &EncodedSet,
    validation: Option<&EncodedSet>,
    cfg: &TrainConfig,
) -> Result<TrainTrace> {
    let mut trace = TrainTrace::default();
    let mut thetas = Vec::new();
    let mut history: VecDeque<Vec<Vec<f64>>> = VecDeque::with_capacity(cfg.tau + 1);
    for epoch in 1..=cfg.max_epochs {
        backprop_epoch(net, train, cfg).map_err(|_| Error::Diverged {
            epoch,
            value: f64::NAN,
        })?;
        let obj = objective(net, train, cfg);
        if !obj.theta.is_finite() {
            return Err(Error::Diverged {
                epoch,
                value: obj.theta,
            });
        }
        let acts = activation_matrix(net, train);
        let hidden_means = acts
            .iter()
            .map(|a| {
                if a.is_empty() {
                    0.0
                } else {
                    a.iter().sum::<f64>() / a.len() as f64
                }
            })
            .collect();
        trace.records.push(EpochRecord {
            epoch,
            valid_error: validation
                .filter(|v| !v.is_empty())
                .map(|v| squared_error(net, v)),
            cross_entropy: obj.cross_entropy,
            penalty: obj.penalty,
            theta: obj.theta,
            hidden_means,
        });
        thetas.push(obj.theta);
        if history.len() == cfg.tau + 1 {
            history.pop_front();
        }
        history.push_back(acts);
        if plateau_spread(&thetas, cfg.tau).is_some_and(|s| s < cfg.plateau_tol) {
            break;
        }
        if epoch == cfg.max_epochs {
            trace.hit_max_epochs = true;
        }
    }
    if history.len() == cfg.tau + 1 {
        trace.window = Some(ActivationWindow {
            then: history.front().cloned().unwrap_or_default(),
            now: history.back().cloned().unwrap_or_default(),
        });
    }
    Ok(trace)
}

/// Freezes the input weights of every node whose per-pattern activations
/// moved by less than `freeze_tol` (mean absolute change) across the last
/// τ-epoch window. Weight values are not modified.
pub fn freeze_stable_nodes(net: &mut Network, trace: &TrainTrace, cfg: &TrainConfig) {
    let Some(window) = &trace.window else { return };
    for m in 0..net.hidden().min(window.now.len()).min(window.then.len()) {
        let (then, now) = (&window.then[m], &window.now[m]);
        if now.is_empty() {
            continue;
        }
        let change = then
            .iter()
            .zip(now)
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>()
            / now.len() as f64;
        if change < cfg.freeze_tol {
            net.frozen[m] = true;
        }
    }
}

#[derive(Debug, Clone)]
pub struct ConstructiveOutcome {
    pub network: Network,
    pub trace: TrainTrace,
    /// Validation error after each plateau, one entry per hidden-layer size tried.
    pub validation_errors: Vec<f64>,
    pub target: f64,
    pub hit_hidden_cap: bool,
}

pub(crate) fn derive_seed(seed: u64, salt: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Validation error of an unpenalized network with `cfg.reference_hidden`
/// nodes, scaled by `cfg.reference_factor`.
pub fn reference_target(
    train: &EncodedSet,
    validation: &EncodedSet,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<f64> {
    let n = train.inputs.first().map_or(1, |x| x.len());
    let c = train.targets.first().map_or(2, |t| t.len());
    let mut net = Network::new(n, c, derive_seed(seed, 0xBEEF));
    for k in 1..cfg.reference_hidden {
        net.add_hidden_node(derive_seed(seed, 0xBEEF + k as u64));
    }
    train_until_plateau(&mut net, train, None, &cfg.unpenalized())?;
    Ok(cfg.reference_factor * squared_error(&net, validation))
}

/// Starts from one hidden node; after each plateau, stops if the validation
/// error is acceptable, otherwise freezes stable nodes and adds a node. When
/// `validation` is empty the training set stands in for it.
pub fn constructive_train(
    train: &EncodedSet,
    validation: &EncodedSet,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<ConstructiveOutcome> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::Empty);
    }
    let check_set = if validation.is_empty() {
        train
    } else {
        validation
    };
    let target = match cfg.valid_error_target {
        Some(t) => t,
        None => reference_target(train, check_set, cfg, seed)?,
    };

    let n = train.inputs[0].len();
    let c = train.targets[0].len();
    let mut net = Network::new(n, c, seed);
    let mut trace = TrainTrace::default();
    let mut errors = Vec::new();
    let mut best: Option<(f64, Network)> = None;
    loop {
        let segment = train_until_plateau(&mut net, train, Some(check_set), cfg)?;
        trace.extend(segment);
        let e = squared_error(&net, check_set);
        errors.push(e);
        if best.as_ref().is_none_or(|(b, _)| e < *b) {
            best = Some((e, net.clone()));
        }
        if e <= target {
            return Ok(ConstructiveOutcome {
                network: net,
                trace,
                validation_errors: errors,
                target,
                hit_hidden_cap: false,
            });
        }
        if net.hidden() >= cfg.max_hidden {
            let (_, best_net) = best.expect("at least one plateau");
            return Ok(ConstructiveOutcome {
                network: best_net,
                trace,
                validation_errors: errors,
                target,
                hit_hidden_cap: true,
            });
        }
        freeze_stable_nodes(&mut net, &trace, cfg);
        net.add_hidden_node(derive_seed(seed, net.hidden() as u64));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{Layer, WeightId};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn set(inputs: Vec<Vec<f64>>, labels: Vec<usize>, classes: usize) -> EncodedSet {
        let targets = labels
            .iter()
            .map(|&y| {
                (0..classes)
                    .map(|p| if p == y { 1.0 } else { 0.0 })
                    .collect()
            })
            .collect();
        EncodedSet {
            inputs,
            targets,
            labels,
        }
    }

    #[test]
    fn squared_error_examples() {
        let net = Network::zeros(1, 1, 2);
        let one = set(vec![vec![0.0]], vec![0], 2);
        assert!((squared_error(&net, &one) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn cross_entropy_of_half_output() {
        let net = Network::zeros(1, 1, 2);
        let one = set(vec![vec![0.0]], vec![0], 2);
        // two outputs at 0.5 each contribute −log 0.5
        assert!((cross_entropy(&net, &one) - 2.0 * 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn cross_entropy_vanishes_for_confident_correct_outputs() {
        let mut net = Network::zeros(1, 1, 2);
        net.v[0][1] = 40.0;
        net.v[1][1] = -40.0;
        let one = set(vec![vec![0.0]], vec![0], 2);
        assert!(cross_entropy(&net, &one) < 1e-11);
        assert_eq!(cross_entropy(&net, &one), cross_entropy(&net, &one));
    }

    #[test]
    fn penalty_examples() {
        assert_eq!(penalty(&Network::zeros(3, 2, 2), 0.1, 1e-4, 10.0), 0.0);
        let mut net = Network::zeros(1, 1, 2);
        net.w[0][0] = 1.0;
        let expected = 0.1 * (10.0 / 11.0) + 1e-4;
        assert!((penalty(&net, 0.1, 1e-4, 10.0) - expected).abs() < 1e-15);
        assert!((expected - 0.0910091).abs() < 1e-7);
        // bias weights are not penalized
        net.w[0][1] = 5.0;
        assert!((penalty(&net, 0.1, 1e-4, 10.0) - expected).abs() < 1e-15);
    }

    fn random_net(n: usize, h: usize, c: usize, seed: u64) -> Network {
        let mut net = Network::new(n, c, seed);
        for k in 1..h {
            net.add_hidden_node(seed + 100 * k as u64);
        }
        net
    }

    fn random_set(n: usize, c: usize, k: usize, seed: u64) -> EncodedSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inputs = (0..k)
            .map(|_| (0..n).map(|_| rng.gen_range(0.0..1.0)).collect())
            .collect();
        let labels = (0..k).map(|_| rng.gen_range(0..c)).collect();
        set(inputs, labels, c)
    }

    #[test]
    fn gradient_matches_central_differences() {
        let cfg = TrainConfig::default();
        let net = random_net(3, 2, 2, 4);
        let data = random_set(3, 2, 6, 5);
        let g = gradient(&net, &data, &cfg);
        let theta = |n: &Network| objective(n, &data, &cfg).theta;
        for id in net.active_connections() {
            let step = 1e-5;
            let mut plus = net.clone();
            let mut minus = net.clone();
            match id.layer {
                Layer::Hidden => {
                    plus.w[id.row][id.col] += step;
                    minus.w[id.row][id.col] -= step;
                }
                Layer::Output => {
                    plus.v[id.row][id.col] += step;
                    minus.v[id.row][id.col] -= step;
                }
            }
            let fd = (theta(&plus) - theta(&minus)) / (2.0 * step);
            let an = match id.layer {
                Layer::Hidden => g.w[id.row][id.col],
                Layer::Output => g.v[id.row][id.col],
            };
            let rel = (fd - an).abs() / fd.abs().max(an.abs()).max(1e-8);
            assert!(rel < 1e-4, "{id:?}: fd {fd} analytic {an}");
        }
    }

    #[test]
    fn frozen_rows_and_masked_slots_do_not_move() {
        let cfg = TrainConfig::default();
        let mut net = random_net(3, 2, 2, 9);
        net.frozen[0] = true;
        let dead = WeightId {
            layer: Layer::Hidden,
            row: 1,
            col: 1,
        };
        net.deactivate(dead);
        let before = net.clone();
        let data = random_set(3, 2, 8, 10);
        backprop_epoch(&mut net, &data, &cfg).unwrap();
        assert_eq!(net.w[0], before.w[0]);
        assert_eq!(net.weight(dead), 0.0);
        assert_ne!(net.w[1], before.w[1]);
    }

    #[test]
    fn zero_penalty_is_plain_cross_entropy_backprop() {
        let cfg = TrainConfig {
            eps1: 0.0,
            eps2: 0.0,
            ..TrainConfig::default()
        };
        let net = random_net(2, 2, 3, 1);
        let data = random_set(2, 3, 1, 2);
        let mut stepped = net.clone();
        backprop_epoch(&mut stepped, &data, &cfg).unwrap();
        let g = gradient(&net, &data, &cfg);
        for m in 0..net.hidden() {
            for l in 0..=net.inputs() {
                let expected = net.w[m][l] - cfg.learning_rate * g.w[m][l];
                assert!((stepped.w[m][l] - expected).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn infinite_tolerance_stops_after_window() {
        let cfg = TrainConfig {
            plateau_tol: f64::INFINITY,
            ..TrainConfig::default()
        };
        let mut net = random_net(2, 1, 2, 3);
        let data = random_set(2, 2, 10, 3);
        let trace = train_until_plateau(&mut net, &data, None, &cfg).unwrap();
        assert_eq!(trace.epochs(), cfg.tau + 1);
        assert!(!trace.hit_max_epochs);
    }

    #[test]
    fn tiny_tolerance_runs_to_budget() {
        let cfg = TrainConfig {
            plateau_tol: 1e-300,
            max_epochs: 25,
            ..TrainConfig::default()
        };
        let mut net = random_net(2, 1, 2, 3);
        let data = random_set(2, 2, 10, 3);
        let trace = train_until_plateau(&mut net, &data, None, &cfg).unwrap();
        assert_eq!(trace.epochs(), 25);
        assert!(trace.hit_max_epochs);
    }

    #[test]
    fn plateau_spread_of_strictly_decreasing_sequence() {
        let thetas: Vec<f64> = (0..50).map(|i| 100.0 * 0.9f64.powi(i)).collect();
        let spread = plateau_spread(&thetas, 10).unwrap();
        assert!(spread > 0.5);
        assert_eq!(plateau_spread(&thetas[..5], 10), None);
    }

    #[test]
    fn freezing_uses_activation_window() {
        let mut net = random_net(2, 2, 2, 3);
        let trace = TrainTrace {
            window: Some(ActivationWindow {
                then: vec![vec![0.2, 0.4], vec![0.5, -0.5]],
                now: vec![vec![0.2, 0.4], vec![-0.5, 0.5]],
            }),
            ..TrainTrace::default()
        };
        let before = net.clone();
        freeze_stable_nodes(&mut net, &trace, &TrainConfig::default());
        assert_eq!(net.frozen, vec![true, false]);
        assert_eq!(net.w, before.w);
        assert_eq!(net.v, before.v);
    }

    fn and_set() -> EncodedSet {
        set(
            vec![
                vec![0.0, 0.0],
                vec![0.0, 1.0],
                vec![1.0, 0.0],
                vec![1.0, 1.0],
            ],
            vec![0, 0, 0, 1],
            2,
        )
    }

    #[test]
    fn constructive_stops_at_one_node_on_and() {
        let data = and_set();
        // reachable target: a one-node net must classify AND with small error
        let cfg = TrainConfig {
            learning_rate: 0.5,
            valid_error_target: Some(0.1),
            eps1: 0.01,
            plateau_tol: 1e-6,
            max_epochs: 20000,
            ..TrainConfig::default()
        };
        let out = constructive_train(&data, &data, &cfg, 1).unwrap();
        assert_eq!(out.network.hidden(), 1);
        assert!(squared_error(&out.network, &data) <= 0.1);
        assert_eq!(out.network.accuracy(&data), 1.0);
    }

    #[test]
    fn infinite_target_returns_after_first_plateau() {
        let cfg = TrainConfig {
            valid_error_target: Some(f64::INFINITY),
            ..TrainConfig::default()
        };
        let data = and_set();
        let out = constructive_train(&data, &EncodedSet::default(), &cfg, 3).unwrap();
        assert_eq!(out.network.hidden(), 1);
        assert_eq!(out.validation_errors.len(), 1);
    }

    #[test]
    fn hidden_cap_returns_best_with_flag() {
        let cfg = TrainConfig {
            valid_error_target: Some(0.0),
            max_hidden: 2,
            max_epochs: 50,
            ..TrainConfig::default()
        };
        let data = and_set();
        let out = constructive_train(&data, &data, &cfg, 3).unwrap();
        assert!(out.hit_hidden_cap);
        assert_eq!(out.validation_errors.len(), 2);
        assert!(out.network.hidden() <= 2);
    }

    #[test]
    fn training_is_deterministic() {
        let cfg = TrainConfig {
            valid_error_target: Some(0.05),
            max_hidden: 3,
            ..TrainConfig::default()
        };
        let data = random_set(3, 2, 20, 8);
        let a = constructive_train(&data, &data, &cfg, 42).unwrap();
        let b = constructive_train(&data, &data, &cfg, 42).unwrap();
        assert_eq!(a.trace.records, b.trace.records);
        assert_eq!(a.network, b.network);
    }

    #[test]
    fn theta_is_sum_of_parts_in_trace() {
        let cfg = TrainConfig {
            valid_error_target: Some(f64::INFINITY),
            ..TrainConfig::default()
        };
        let data = random_set(3, 2, 20, 8);
        let out = constructive_train(&data, &data, &cfg, 1).unwrap();
        for r in &out.trace.records {
            assert!((r.theta - (r.cross_entropy + r.penalty)).abs() <= 1e-12);
        }
        let csv = out.trace.to_csv();
        assert!(csv.starts_with("epoch,e_valid,f,p,theta,h1\n"));
        assert_eq!(csv.lines().count(), out.trace.epochs() + 1);
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        let bad = TrainConfig {
            learning_rate: 2.0,
            ..TrainConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}
