//! Covering rule generation over discrete tables and the three-phase
//! composition (output layer, hidden layer, merge) that turns a discretized
//! network into rules over the original attributes.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::{self, Write as _};

use serde::{Deserialize, Serialize};

use crate::clustering::ClusterModel;
use crate::data::{
    AttributeBins, AttributeKind, Dataset, DiscretizationScheme, EncodedSet, Encoder,
};
use crate::error::{parse_err, Error, Result};
use crate::network::Network;

/// Discrete feature tuples with labels. Columns marked unusable never appear
/// in generated conditions; ordered columns admit range conditions.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub arity: Vec<usize>,
    pub usable: Vec<bool>,
    pub ordered: Vec<bool>,
    pub rows: Vec<Vec<usize>>,
    pub labels: Vec<usize>,
    pub label_count: usize,
}

impl Table {
    pub fn new(
        arity: Vec<usize>,
        rows: Vec<Vec<usize>>,
        labels: Vec<usize>,
        label_count: usize,
    ) -> Table {
        assert_eq!(rows.len(), labels.len());
        debug_assert!(rows.iter().all(|r| r.len() == arity.len()));
        let usable = vec![true; arity.len()];
        let ordered = vec![false; arity.len()];
        Table {
            arity,
            usable,
            ordered,
            rows,
            labels,
            label_count,
        }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn with_labels(&self, labels: Vec<usize>, label_count: usize) -> Table {
        assert_eq!(labels.len(), self.rows.len());
        Table {
            labels,
            label_count,
            ..self.clone()
        }
    }

    /// Discrete view of a dataset; continuous values must be present.
    pub fn from_dataset(ds: &Dataset, scheme: &DiscretizationScheme) -> Table {
        let arity = (0..ds.attributes.len()).map(|j| scheme.arity(j)).collect();
        let rows = ds.patterns.iter().map(|p| scheme.view(p)).collect();
        let mut table = Table::new(arity, rows, ds.labels(), ds.class_count());
        table.ordered = scheme
            .bins
            .iter()
            .map(|b| matches!(b, AttributeBins::Cuts(_)))
            .collect();
        table
    }

    /// Share of rows whose feature vector also occurs with a more frequent
    /// (or equally frequent, lower) label.
    pub fn inconsistency_rate(&self) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        let mut groups: BTreeMap<&[usize], BTreeMap<usize, usize>> = BTreeMap::new();
        for (r, &y) in self.rows.iter().zip(&self.labels) {
            *groups.entry(r).or_default().entry(y).or_default() += 1;
        }
        let minority: usize = groups
            .values()
            .map(|by_label| by_label.values().sum::<usize>() - by_label.values().max().unwrap())
            .sum();
        minority as f64 / self.len() as f64
    }

    fn majority_of(&self, rows: impl Iterator<Item = usize>) -> Option<usize> {
        let mut counts = vec![0usize; self.label_count];
        let mut any = false;
        for i in rows {
            counts[self.labels[i]] += 1;
            any = true;
        }
        any.then(|| majority(&counts))
    }
}

/// Index of the largest count, ties to the lower index.
fn majority(counts: &[usize]) -> usize {
    let mut best = 0;
    for (i, &c) in counts.iter().enumerate() {
        if c > counts[best] {
            best = i;
        }
    }
    best
}

/// `lo <= x[feature] <= hi` over value indices; unordered features only
/// use `lo == hi`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Literal {
    pub feature: usize,
    pub lo: usize,
    pub hi: usize,
}

impl Literal {
    pub fn eq(feature: usize, value: usize) -> Literal {
        Literal {
            feature,
            lo: value,
            hi: value,
        }
    }

    pub fn holds(&self, value: usize) -> bool {
        self.lo <= value && value <= self.hi
    }

    fn within(&self, other: &Literal) -> bool {
        self.feature == other.feature && other.lo <= self.lo && self.hi <= other.hi
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rule {
    /// Sorted by feature, one literal per feature.
    pub conditions: Vec<Literal>,
    pub consequent: usize,
    /// Table rows matched with the consequent's label.
    pub support: usize,
}

impl Rule {
    pub fn new(mut conditions: Vec<Literal>, consequent: usize) -> Rule {
        conditions.sort();
        debug_assert!(conditions.windows(2).all(|w| w[0].feature < w[1].feature));
        Rule {
            conditions,
            consequent,
            support: 0,
        }
    }

    pub fn matches(&self, row: &[usize]) -> bool {
        self.conditions.iter().all(|l| l.holds(row[l.feature]))
    }

    /// Every row matched by `other` is matched by `self`.
    fn is_subset_of(&self, other: &Rule) -> bool {
        self.conditions
            .iter()
            .all(|l| other.conditions.iter().any(|o| o.within(l)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    Table,
    OutputLayer,
    HiddenLayer,
    Merged,
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Provenance::Table => "table",
            Provenance::OutputLayer => "output-layer",
            Provenance::HiddenLayer => "hidden-layer",
            Provenance::Merged => "merged",
        })
    }
}

impl std::str::FromStr for Provenance {
    type Err = ();
    fn from_str(s: &str) -> std::result::Result<Self, ()> {
        match s {
            "table" => Ok(Provenance::Table),
            "output-layer" => Ok(Provenance::OutputLayer),
            "hidden-layer" => Ok(Provenance::HiddenLayer),
            "merged" => Ok(Provenance::Merged),
            _ => Err(()),
        }
    }
}

/// Unordered rules plus a default consequent.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuleSet {
    pub rules: Vec<Rule>,
    pub default: usize,
    pub provenance: Provenance,
}

/// Outcome of applying a rule set to one row.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Firing {
    Unmatched,
    Agreed(usize),
    /// Matching rules disagree; carries the majority consequent.
    Ambiguous(usize),
}

impl RuleSet {
    pub fn default_only(default: usize, provenance: Provenance) -> RuleSet {
        RuleSet {
            rules: Vec::new(),
            default,
            provenance,
        }
    }

    /// Rules plus the default rule.
    pub fn rule_count(&self) -> usize {
        self.rules.len() + 1
    }

    pub fn fire(&self, row: &[usize], label_count: usize) -> Firing {
        fire_rules(self.rules.iter(), row, label_count)
    }

    pub fn classify(&self, row: &[usize], label_count: usize) -> usize {
        match self.fire(row, label_count) {
            Firing::Unmatched => self.default,
            Firing::Agreed(c) | Firing::Ambiguous(c) => c,
        }
    }

    pub fn refresh_support(&mut self, table: &Table) {
        for r in &mut self.rules {
            r.support = table
                .rows
                .iter()
                .zip(&table.labels)
                .filter(|(row, &y)| y == r.consequent && r.matches(row))
                .count();
        }
    }

    pub fn mean_conditions(&self) -> f64 {
        if self.rules.is_empty() {
            0.0
        } else {
            self.rules.iter().map(|r| r.conditions.len()).sum::<usize>() as f64
                / self.rules.len() as f64
        }
    }
}

fn fire_rules<'a>(
    rules: impl Iterator<Item = &'a Rule>,
    row: &[usize],
    label_count: usize,
) -> Firing {
    let mut votes = vec![0usize; label_count.max(1)];
    let mut first: Option<usize> = None;
    let mut conflict = false;
    for r in rules {
        if r.matches(row) {
            if r.consequent >= votes.len() {
                votes.resize(r.consequent + 1, 0);
            }
            votes[r.consequent] += 1;
            match first {
                None => first = Some(r.consequent),
                Some(c) if c != r.consequent => conflict = true,
                _ => {}
            }
        }
    }
    match (first, conflict) {
        (None, _) => Firing::Unmatched,
        (Some(c), false) => Firing::Agreed(c),
        (Some(_), true) => Firing::Ambiguous(majority(&votes)),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    /// Share of rows matched by at least one non-default rule.
    pub coverage: f64,
    /// Rules including the default.
    pub rule_count: usize,
    pub mean_conditions: f64,
    pub ambiguous: usize,
    pub errors: usize,
}

/// Order-insensitive evaluation against the table's labels.
pub fn evaluate_ruleset(rs: &RuleSet, table: &Table) -> Metrics {
    let tally = tally(&rs.rules, Some(rs.default), table);
    let n = table.len().max(1) as f64;
    Metrics {
        accuracy: if table.is_empty() {
            0.0
        } else {
            (table.len() - tally.errors) as f64 / n
        },
        coverage: if table.is_empty() {
            0.0
        } else {
            (table.len() - tally.unmatched) as f64 / n
        },
        rule_count: rs.rule_count(),
        mean_conditions: rs.mean_conditions(),
        ambiguous: tally.ambiguous,
        errors: tally.errors,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Tally {
    errors: usize,
    ambiguous: usize,
    unmatched: usize,
}

/// Unmatched rows are errors when `default` is `None`.
fn tally(rules: &[Rule], default: Option<usize>, table: &Table) -> Tally {
    let mut t = Tally {
        errors: 0,
        ambiguous: 0,
        unmatched: 0,
    };
    for (row, &y) in table.rows.iter().zip(&table.labels) {
        let predicted = match fire_rules(rules.iter(), row, table.label_count) {
            Firing::Unmatched => {
                t.unmatched += 1;
                default
            }
            Firing::Agreed(c) => Some(c),
            Firing::Ambiguous(c) => {
                t.ambiguous += 1;
                Some(c)
            }
        };
        if predicted != Some(y) {
            t.errors += 1;
        }
    }
    t
}

/// Covering step: repeatedly covers the most frequent remaining
/// (tuple, label) entry with a short conjunction that matches no tuple of
/// another label anywhere in the table, then drops every entry it matches.
/// Ties go to the lexicographically smaller tuple, then the lower label.
pub fn generate_rules(table: &Table) -> Vec<Rule> {
    let mut freq: BTreeMap<(&[usize], usize), usize> = BTreeMap::new();
    for (r, &y) in table.rows.iter().zip(&table.labels) {
        *freq.entry((r.as_slice(), y)).or_default() += 1;
    }
    let mut entries: Vec<(&[usize], usize, usize)> =
        freq.into_iter().map(|((t, y), c)| (t, y, c)).collect();
    // stable sort keeps the lexicographic order among equal counts
    entries.sort_by_key(|e| std::cmp::Reverse(e.2));

    let mut covered = vec![false; entries.len()];
    let mut rules = Vec::new();
    while let Some(i) = covered.iter().position(|&c| !c) {
        let (tuple, label, _) = entries[i];
        let opposing: Vec<(&[usize], usize)> = entries
            .iter()
            .filter(|e| e.1 != label)
            .map(|e| (e.0, e.2))
            .collect();
        let conditions = shortest_conjunction(table, tuple, &opposing);
        let rule = Rule::new(conditions, label);
        for (k, e) in entries.iter().enumerate() {
            if !covered[k] && rule.matches(e.0) {
                covered[k] = true;
            }
        }
        rules.push(rule);
    }
    rules
}

fn opposing_matched(conditions: &[Literal], opposing: &[(&[usize], usize)]) -> usize {
    opposing
        .iter()
        .filter(|(t, _)| conditions.iter().all(|l| l.holds(t[l.feature])))
        .map(|(_, c)| c)
        .sum()
}

/// Literals on feature `f` that hold for `value`, excluding the trivially
/// true one; narrowest first, then by lower bound.
fn literal_options(table: &Table, f: usize, value: usize) -> Vec<Literal> {
    if !table.ordered[f] {
        return vec![Literal::eq(f, value)];
    }
    let last = table.arity[f].saturating_sub(1);
    let mut out: Vec<Literal> = (0..=value)
        .flat_map(|lo| (value..=last).map(move |hi| Literal { feature: f, lo, hi }))
        .filter(|l| !(l.lo == 0 && l.hi == last))
        .collect();
    out.sort_by_key(|l| (l.hi - l.lo, l.lo));
    out
}

/// Greedy forward selection (the literal excluding the largest weight of
/// still-matched opposing tuples; ties to the lower feature, then the wider
/// range) followed by a backward pass that drops or widens literals as long
/// as no new opposing tuple is admitted.
fn shortest_conjunction(
    table: &Table,
    tuple: &[usize],
    opposing: &[(&[usize], usize)],
) -> Vec<Literal> {
    let mut chosen: Vec<Literal> = Vec::new();
    let mut remaining: Vec<(&[usize], usize)> = opposing.to_vec();
    while !remaining.is_empty() {
        let mut best: Option<(Literal, usize)> = None;
        for f in 0..tuple.len() {
            if !table.usable[f] || chosen.iter().any(|l| l.feature == f) {
                continue;
            }
            for l in literal_options(table, f, tuple[f]) {
                let excluded: usize = remaining
                    .iter()
                    .filter(|(t, _)| !l.holds(t[f]))
                    .map(|(_, c)| c)
                    .sum();
                if best.is_none_or(|(b, e)| excluded > e || (excluded == e && b.feature == f)) {
                    best = Some((l, excluded));
                }
            }
        }
        match best {
            Some((l, excluded)) if excluded > 0 => {
                chosen.push(l);
                remaining.retain(|(t, _)| l.holds(t[l.feature]));
            }
            _ => break,
        }
    }
    chosen.sort();
    let floor = opposing_matched(&chosen, opposing);
    let mut k = 0;
    while k < chosen.len() {
        let mut trial = chosen.clone();
        trial.remove(k);
        if opposing_matched(&trial, opposing) <= floor {
            chosen = trial;
            continue;
        }
        let current = chosen[k];
        for wider in literal_options(table, current.feature, tuple[current.feature])
            .into_iter()
            .rev()
        {
            if !current.within(&wider) || wider == current {
                continue;
            }
            trial = chosen.clone();
            trial[k] = wider;
            if opposing_matched(&trial, opposing) <= floor {
                chosen = trial;
                break;
            }
        }
        k += 1;
    }
    chosen
}

/// Within each consequent group, deletes rules whose conditions contain all
/// conditions of another rule of the group (one copy of duplicates survives).
pub fn cluster_rules(rs: &RuleSet) -> RuleSet {
    let rules = &rs.rules;
    let keep: Vec<Rule> = rules
        .iter()
        .enumerate()
        .filter(|&(i, r)| {
            !rules.iter().enumerate().any(|(j, o)| {
                j != i
                    && o.consequent == r.consequent
                    && o.is_subset_of(r)
                    && (!r.is_subset_of(o) || j < i)
            })
        })
        .map(|(_, r)| r.clone())
        .collect();
    let mut by_group: Vec<Rule> = keep;
    by_group.sort_by_key(|r| r.consequent);
    RuleSet {
        rules: by_group,
        ..rs.clone()
    }
}

/// Generalizes rules by dropping conditions, then deletes rules, each only
/// when the table error does not rise and no new ambiguous row appears.
pub fn prune_rules(rs: &RuleSet, table: &Table) -> RuleSet {
    prune_with(rs, table, Some(rs.default))
}

fn prune_with(rs: &RuleSet, table: &Table, default: Option<usize>) -> RuleSet {
    let mut rules = rs.rules.clone();
    let mut current = tally(&rules, default, table);
    for i in 0..rules.len() {
        let mut k = 0;
        while k < rules[i].conditions.len() {
            let dropped = rules[i].conditions.remove(k);
            let trial = tally(&rules, default, table);
            if trial.errors <= current.errors && trial.ambiguous <= current.ambiguous {
                current = trial;
                continue;
            }
            rules[i].conditions.insert(k, dropped);
            // the widening with fewest errors, then fewest ambiguous rows, then widest
            let mut best: Option<(Literal, Tally)> = None;
            for wider in widenings(table, &dropped) {
                rules[i].conditions[k] = wider;
                let trial = tally(&rules, default, table);
                let admissible =
                    trial.errors <= current.errors && trial.ambiguous <= current.ambiguous;
                if admissible
                    && best.is_none_or(|(_, b)| {
                        (trial.errors, trial.ambiguous) < (b.errors, b.ambiguous)
                    })
                {
                    best = Some((wider, trial));
                }
            }
            rules[i].conditions[k] = match best {
                Some((wider, trial)) => {
                    current = trial;
                    wider
                }
                None => dropped,
            };
            k += 1;
        }
    }
    let mut out = RuleSet {
        rules,
        ..rs.clone()
    };
    out.refresh_support(table);
    // weakest rules are offered for deletion first
    let mut order: Vec<usize> = (0..out.rules.len()).collect();
    order.sort_by_key(|&i| (out.rules[i].support, i));
    let mut alive = vec![true; out.rules.len()];
    for i in order {
        alive[i] = false;
        let rest: Vec<Rule> = out
            .rules
            .iter()
            .zip(&alive)
            .filter(|(_, &a)| a)
            .map(|(r, _)| r.clone())
            .collect();
        let trial = tally(&rest, default, table);
        if trial.errors <= current.errors && trial.ambiguous <= current.ambiguous {
            current = trial;
        } else {
            alive[i] = true;
        }
    }
    out.rules = out
        .rules
        .into_iter()
        .zip(alive)
        .filter(|(_, a)| *a)
        .map(|(r, _)| r)
        .collect();
    out
}

/// Strict non-trivial supersets of an ordered literal, widest first.
fn widenings(table: &Table, l: &Literal) -> Vec<Literal> {
    if !table.ordered[l.feature] {
        return Vec::new();
    }
    let mut out: Vec<Literal> = literal_options(table, l.feature, l.lo)
        .into_iter()
        .filter(|w| l.within(w) && w != l)
        .collect();
    out.reverse();
    out
}

/// Chooses the default consequent. A label with no rows in the table takes
/// it outright. Otherwise the candidates are: every label `d` with its own
/// group removed, and keeping all rules with the majority label of the
/// unmatched rows. The most accurate candidate wins, then the one with fewest
/// rules, then the lower label. With full coverage this replaces the group
/// with most rules.
pub fn default_rule(rs: &RuleSet, table: &Table) -> RuleSet {
    let mut out = rs.clone();
    if rs.rules.is_empty() {
        out.default = table.majority_of(0..table.len()).unwrap_or(0);
        return out;
    }
    if let Some(always) = rs.rules.iter().find(|r| r.conditions.is_empty()) {
        out.default = always.consequent;
        out.rules.retain(|r| r.consequent != always.consequent);
        return out;
    }
    let mut present = vec![false; table.label_count];
    table.labels.iter().for_each(|&y| present[y] = true);
    if let Some(absent) = present.iter().position(|&p| !p) {
        out.default = absent;
        return out;
    }
    let unmatched =
        (0..table.len()).filter(|&i| !rs.rules.iter().any(|r| r.matches(&table.rows[i])));
    let mut candidates: Vec<RuleSet> = Vec::new();
    if let Some(d) = table.majority_of(unmatched) {
        candidates.push(RuleSet {
            default: d,
            ..rs.clone()
        });
    }
    for d in 0..table.label_count {
        let mut c = RuleSet {
            default: d,
            ..rs.clone()
        };
        c.rules.retain(|r| r.consequent != d);
        candidates.push(c);
    }
    candidates
        .into_iter()
        .map(|c| {
            (
                tally(&c.rules, Some(c.default), table).errors,
                c.rules.len(),
                c,
            )
        })
        .min_by(|a, b| a.0.cmp(&b.0).then(a.1.cmp(&b.1)))
        .map(|(_, _, c)| c)
        .expect("at least one candidate")
}

/// Full covering procedure: generate, cluster, prune (treating unmatched
/// rows as errors), then choose the default.
pub fn rg(table: &Table, provenance: Provenance) -> RuleSet {
    let mut rs = grouped_rules(table, provenance);
    rs = default_rule(&rs, table);
    rs.refresh_support(table);
    rs
}

/// As [`rg`] but keeps every consequent group; the default is the overall
/// majority label. A single-label table yields the default alone.
fn grouped_rules(table: &Table, provenance: Provenance) -> RuleSet {
    let base = RuleSet {
        rules: generate_rules(table),
        default: table.majority_of(0..table.len()).unwrap_or(0),
        provenance,
    };
    let mut rs = cluster_rules(&base);
    rs.refresh_support(table);
    let mut rs = prune_with(&rs, table, None);
    rs.refresh_support(table);
    rs
}

/// Output-layer table: cluster index of each hidden node per pattern,
/// labelled with the discretized network's class.
pub fn output_table(net: &Network, model: &ClusterModel, train: &EncodedSet) -> Table {
    let arity = model.nodes.iter().map(|n| n.len()).collect();
    let rows = train
        .inputs
        .iter()
        .map(|x| model.cluster_tuple(net, x))
        .collect();
    let labels = train
        .inputs
        .iter()
        .map(|x| model.classify(net, x))
        .collect();
    Table::new(arity, rows, labels, net.outputs())
}

/// Output-layer rules. Every class keeps its own rules; the default is
/// chosen only once the rules are expressed over the inputs.
pub fn extract_output_rules(net: &Network, model: &ClusterModel, train: &EncodedSet) -> RuleSet {
    let mut rs = grouped_rules(&output_table(net, model, train), Provenance::OutputLayer);
    absorb_tautology(&mut rs);
    rs
}

/// A rule without conditions makes its consequent the only outcome.
fn absorb_tautology(rs: &mut RuleSet) {
    if let Some(always) = rs.rules.iter().find(|r| r.conditions.is_empty()) {
        rs.default = always.consequent;
        rs.rules.clear();
    }
}

/// Attributes with at least one active connection into hidden node `m`.
pub fn node_attributes(net: &Network, encoder: &Encoder, m: usize, attributes: usize) -> Vec<bool> {
    let mut used = vec![false; attributes];
    for (s, slot) in encoder.slots.iter().enumerate() {
        if net.w_active[m][s] {
            used[slot.attribute()] = true;
        }
    }
    used
}

/// One rule set per hidden node over the discrete input view; consequents
/// are cluster indices and every cluster keeps its own rules.
pub fn extract_hidden_rules(
    net: &Network,
    model: &ClusterModel,
    train: &EncodedSet,
    view: &Table,
    encoder: &Encoder,
) -> Vec<RuleSet> {
    (0..net.hidden())
        .map(|m| {
            let labels: Vec<usize> = train
                .inputs
                .iter()
                .map(|x| model.cluster_tuple(net, x)[m])
                .collect();
            let mut table = view.with_labels(labels, model.nodes[m].len());
            table.usable = node_attributes(net, encoder, m, view.arity.len());
            let mut rs = grouped_rules(&table, Provenance::HiddenLayer);
            absorb_tautology(&mut rs);
            rs
        })
        .collect()
}

/// Substitutes every cluster condition of the output rules by each hidden
/// rule deriving that cluster. Contradictory expansions are discarded and
/// duplicates collapsed; a cluster with no rules of its own that is its
/// node's default contributes no condition.
pub fn merge_rules(output: &RuleSet, hidden: &[RuleSet]) -> Result<RuleSet> {
    const EXPANSION_LIMIT: usize = 1 << 20;
    let mut seen: BTreeSet<(Vec<Literal>, usize)> = BTreeSet::new();
    let mut merged = Vec::new();
    for rule in &output.rules {
        let mut partial: Vec<Vec<Literal>> = vec![Vec::new()];
        for lit in &rule.conditions {
            let node = &hidden[lit.feature];
            let mut options: Vec<&[Literal]> = node
                .rules
                .iter()
                .filter(|r| r.consequent == lit.lo)
                .map(|r| r.conditions.as_slice())
                .collect();
            if options.is_empty() && node.default == lit.lo {
                options.push(&[]);
            }
            let mut next = Vec::new();
            for base in &partial {
                for opt in &options {
                    if let Some(joined) = conjoin(base, opt) {
                        next.push(joined);
                    }
                }
            }
            if next.len() > EXPANSION_LIMIT {
                return Err(Error::Config(format!(
                    "rule merge exceeds {EXPANSION_LIMIT} expansions"
                )));
            }
            partial = next;
        }
        for conditions in partial {
            if seen.insert((conditions.clone(), rule.consequent)) {
                merged.push(Rule::new(conditions, rule.consequent));
            }
        }
    }
    Ok(RuleSet {
        rules: merged,
        default: output.default,
        provenance: Provenance::Merged,
    })
}

/// Conjunction with same-feature ranges intersected; `None` when empty.
fn conjoin(a: &[Literal], b: &[Literal]) -> Option<Vec<Literal>> {
    let mut out = a.to_vec();
    for l in b {
        match out.iter_mut().find(|o| o.feature == l.feature) {
            Some(o) => {
                o.lo = o.lo.max(l.lo);
                o.hi = o.hi.min(l.hi);
                if o.lo > o.hi {
                    return None;
                }
            }
            None => out.push(*l),
        }
    }
    out.sort();
    Some(out)
}

/// Deletes rules until no row of the table is matched by conflicting rules,
/// each time removing the rule whose deletion leaves the fewest errors
/// (ties: fewer ambiguous rows, then the later rule).
pub fn resolve_ambiguities(rs: &RuleSet, table: &Table) -> RuleSet {
    let mut rules = rs.rules.clone();
    loop {
        let current = tally(&rules, Some(rs.default), table);
        if current.ambiguous == 0 {
            break;
        }
        let involved: BTreeSet<usize> = table
            .rows
            .iter()
            .filter(|row| {
                matches!(
                    fire_rules(rules.iter(), row, table.label_count),
                    Firing::Ambiguous(_)
                )
            })
            .flat_map(|row| (0..rules.len()).filter(|&i| rules[i].matches(row)))
            .collect();
        let pick = involved
            .iter()
            .map(|&i| {
                let mut rest = rules.clone();
                rest.remove(i);
                let t = tally(&rest, Some(rs.default), table);
                (t.errors, t.ambiguous, std::cmp::Reverse(i))
            })
            .min()
            .map(|(_, _, std::cmp::Reverse(i))| i)
            .expect("ambiguity implies matching rules");
        rules.remove(pick);
    }
    RuleSet {
        rules,
        ..rs.clone()
    }
}

/// Merge followed by ambiguity resolution, clustering, pruning and the
/// default choice, all against `table` (original-attribute view labelled
/// with the discretized network's classes).
pub fn compose_rules(output: &RuleSet, hidden: &[RuleSet], table: &Table) -> Result<RuleSet> {
    let mut rs = merge_rules(output, hidden)?;
    rs.refresh_support(table);
    rs.rules.retain(|r| r.support > 0 || table.is_empty());
    let rs = resolve_ambiguities(&rs, table);
    let mut rs = cluster_rules(&rs);
    rs.refresh_support(table);
    let rs = prune_with(&rs, table, None);
    let mut rs = default_rule(&rs, table);
    rs = prune_rules(&rs, table);
    rs.refresh_support(table);
    Ok(rs)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum FeatureKind {
    Categorical {
        categories: Vec<String>,
    },
    /// Interval index `k` means `cuts[k-1] < x <= cuts[k]`.
    Intervals {
        cuts: Vec<f64>,
        scaled_cuts: Vec<f64>,
    },
    Cluster {
        centroids: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Feature {
    pub name: String,
    pub kind: FeatureKind,
}

/// Names and value meanings of table columns and labels, for rendering.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSpace {
    pub features: Vec<Feature>,
    pub labels: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Units {
    Raw,
    Scaled,
}

impl FeatureSpace {
    pub fn for_attributes(
        ds: &Dataset,
        scheme: &DiscretizationScheme,
        encoder: &Encoder,
    ) -> FeatureSpace {
        let features = ds
            .attributes
            .iter()
            .enumerate()
            .map(|(j, attr)| {
                let kind = match (&attr.kind, &scheme.bins[j]) {
                    (AttributeKind::Categorical { categories }, _) => FeatureKind::Categorical {
                        categories: categories.clone(),
                    },
                    (AttributeKind::Continuous { .. }, AttributeBins::Cuts(cuts)) => {
                        FeatureKind::Intervals {
                            cuts: cuts.clone(),
                            scaled_cuts: cuts.iter().map(|&c| encoder.scale(j, c)).collect(),
                        }
                    }
                    (AttributeKind::Continuous { .. }, AttributeBins::Identity { .. }) => {
                        unreachable!("continuous attribute without cuts")
                    }
                };
                Feature {
                    name: attr.name.clone(),
                    kind,
                }
            })
            .collect();
        FeatureSpace {
            features,
            labels: ds.classes.clone(),
        }
    }

    pub fn for_clusters(model: &ClusterModel, labels: Vec<String>) -> FeatureSpace {
        let features = model
            .nodes
            .iter()
            .enumerate()
            .map(|(m, n)| Feature {
                name: format!("H{}", m + 1),
                kind: FeatureKind::Cluster {
                    centroids: n.centroids.clone(),
                },
            })
            .collect();
        FeatureSpace { features, labels }
    }

    /// Same features, consequents named after the clusters of node `m`.
    pub fn with_cluster_labels(&self, model: &ClusterModel, m: usize) -> FeatureSpace {
        FeatureSpace {
            features: self.features.clone(),
            labels: (0..model.nodes[m].len())
                .map(|j| format!("H{}={}", m + 1, j + 1))
                .collect(),
        }
    }

    fn render_literal(&self, l: &Literal, units: Units) -> String {
        let f = &self.features[l.feature];
        match &f.kind {
            FeatureKind::Categorical { categories } => format!("{} = {}", f.name, categories[l.lo]),
            FeatureKind::Cluster { .. } => format!("{} = {}", f.name, l.lo + 1),
            FeatureKind::Intervals { cuts, scaled_cuts } => {
                let c = match units {
                    Units::Raw => cuts,
                    Units::Scaled => scaled_cuts,
                };
                if l.lo == 0 {
                    format!("{} <= {}", f.name, fmt_num(c[l.hi]))
                } else if l.hi == c.len() {
                    format!("{} > {}", f.name, fmt_num(c[l.lo - 1]))
                } else {
                    format!(
                        "{} in ({}, {}]",
                        f.name,
                        fmt_num(c[l.lo - 1]),
                        fmt_num(c[l.hi])
                    )
                }
            }
        }
    }

    pub fn render_rule(&self, r: &Rule, units: Units) -> String {
        let body = if r.conditions.is_empty() {
            "TRUE".to_string()
        } else {
            r.conditions
                .iter()
                .map(|l| self.render_literal(l, units))
                .collect::<Vec<_>>()
                .join(" AND ")
        };
        format!("IF {body} THEN {}", self.labels[r.consequent])
    }

    /// One rule per line, `# support` trailers, final `DEFAULT` line.
    pub fn render(&self, rs: &RuleSet, units: Units) -> String {
        let mut out = format!("# {}\n", rs.provenance);
        for r in &rs.rules {
            let _ = writeln!(out, "{}  # {}", self.render_rule(r, units), r.support);
        }
        let _ = writeln!(out, "DEFAULT {}", self.labels[rs.default]);
        out
    }

    fn label_index(&self, name: &str, line: usize) -> Result<usize> {
        self.labels
            .iter()
            .position(|l| l == name)
            .ok_or_else(|| parse_err(line, format!("unknown class `{name}`")))
    }

    fn parse_literal(&self, text: &str, line: usize) -> Result<Literal> {
        let text = text.trim();
        let (name, rest) = text
            .split_once(' ')
            .ok_or_else(|| parse_err(line, format!("malformed condition `{text}`")))?;
        let feature = self
            .features
            .iter()
            .position(|f| f.name == name)
            .ok_or_else(|| parse_err(line, format!("unknown attribute `{name}`")))?;
        let rest = rest.trim();
        let bad = || parse_err(line, format!("malformed condition `{text}`"));
        let (lo, hi) = match &self.features[feature].kind {
            FeatureKind::Categorical { categories } => {
                let v = rest.strip_prefix("= ").ok_or_else(bad)?.trim();
                let k = categories.iter().position(|c| c == v).ok_or_else(|| {
                    parse_err(line, format!("unknown category `{v}` of `{name}`"))
                })?;
                (k, k)
            }
            FeatureKind::Cluster { centroids } => {
                let v: usize = rest
                    .strip_prefix("= ")
                    .ok_or_else(bad)?
                    .trim()
                    .parse()
                    .map_err(|_| bad())?;
                if v == 0 || v > centroids.len() {
                    return Err(bad());
                }
                (v - 1, v - 1)
            }
            FeatureKind::Intervals { cuts, scaled_cuts } => {
                let find = |s: &str| -> Result<usize> {
                    let x: f64 = s.trim().parse().map_err(|_| bad())?;
                    cuts.iter()
                        .position(|&c| c == x)
                        .or_else(|| scaled_cuts.iter().position(|&c| c == x))
                        .ok_or_else(|| {
                            parse_err(line, format!("`{x}` is not a cut point of `{name}`"))
                        })
                };
                if let Some(v) = rest.strip_prefix("<= ") {
                    (0, find(v)?)
                } else if let Some(v) = rest.strip_prefix("> ") {
                    (find(v)? + 1, cuts.len())
                } else if let Some(v) = rest.strip_prefix("in (") {
                    let (lo, hi) = v
                        .strip_suffix(']')
                        .and_then(|v| v.split_once(','))
                        .ok_or_else(bad)?;
                    let (lo, hi) = (find(lo)?, find(hi)?);
                    if hi <= lo {
                        return Err(bad());
                    }
                    (lo + 1, hi)
                } else {
                    return Err(bad());
                }
            }
        };
        Ok(Literal { feature, lo, hi })
    }

    pub fn parse(&self, text: &str) -> Result<RuleSet> {
        let mut rules = Vec::new();
        let mut default = None;
        let mut provenance = Provenance::Table;
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let (body, comment) = match raw.split_once('#') {
                Some((b, c)) => (b.trim(), Some(c.trim())),
                None => (raw.trim(), None),
            };
            if body.is_empty() {
                if let Some(p) = comment.and_then(|c| c.parse().ok()) {
                    provenance = p;
                }
                continue;
            }
            if default.is_some() {
                return Err(parse_err(line, "text after DEFAULT"));
            }
            if let Some(d) = body.strip_prefix("DEFAULT ") {
                default = Some(self.label_index(d.trim(), line)?);
                continue;
            }
            let inner = body
                .strip_prefix("IF ")
                .ok_or_else(|| parse_err(line, "expected IF or DEFAULT"))?;
            let (cond, label) = inner
                .rsplit_once(" THEN ")
                .ok_or_else(|| parse_err(line, "missing THEN"))?;
            let conditions = if cond.trim() == "TRUE" {
                Vec::new()
            } else {
                cond.split(" AND ")
                    .map(|c| self.parse_literal(c, line))
                    .collect::<Result<Vec<_>>>()?
            };
            let features: BTreeSet<usize> = conditions.iter().map(|l| l.feature).collect();
            if features.len() != conditions.len() {
                return Err(parse_err(line, "attribute repeated in one rule"));
            }
            let mut rule = Rule::new(conditions, self.label_index(label.trim(), line)?);
            rule.support = comment.and_then(|c| c.parse().ok()).unwrap_or(0);
            rules.push(rule);
        }
        let default =
            default.ok_or_else(|| parse_err(text.lines().count(), "missing DEFAULT line"))?;
        Ok(RuleSet {
            rules,
            default,
            provenance,
        })
    }
}

/// Shortest text that parses back to the same value.
fn fmt_num(x: f64) -> String {
    format!("{x}")
}
