//! Attribute universe, attribute lists, and multi-AND-gate access policies
//! with wildcards.
//!
//! A policy is a disjunction of AND-gates. Every gate constrains all `n`
//! attributes of the universe: each clause is either a wildcard ("don't
//! care", equivalent to the full value set) or a nonempty subset of the
//! attribute's values. An attribute list selects exactly one value per
//! attribute; partial lists are rejected, not defaulted.
//!
//! [`satisfies_gate`] / [`satisfies_policy`] implement the plaintext
//! satisfaction predicate. The encrypted matching phase of the scheme must
//! agree with it; tests use this module as the ground-truth oracle.

use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::fmt;

use crate::error::{Error, Result};

/// One attribute and its admissible values.
#[derive(Clone, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub struct AttributeDef {
    pub name: String,
    pub values: Vec<String>,
}

/// The deployment's attribute universe: an ordered list of multi-valued
/// attributes.
#[derive(Clone, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub struct Universe {
    pub attributes: Vec<AttributeDef>,
}

impl Universe {
    /// Number of attributes n.
    pub fn attr_count(&self) -> usize {
        self.attributes.len()
    }

    /// Number of values n_i of attribute `i`.
    pub fn value_count(&self, i: usize) -> usize {
        self.attributes[i].values.len()
    }

    /// Total number of values N over all attributes.
    pub fn total_values(&self) -> usize {
        self.attributes.iter().map(|a| a.values.len()).sum()
    }

    pub fn value(&self, i: usize, t: usize) -> &str {
        &self.attributes[i].values[t]
    }

    pub fn attr_index(&self, name: &str) -> Option<usize> {
        self.attributes.iter().position(|a| a.name == name)
    }

    pub fn value_index(&self, i: usize, value: &str) -> Option<usize> {
        self.attributes[i].values.iter().position(|v| v == value)
    }

    /// The (n, [n_1..n_n]) shape; two objects interoperate iff their
    /// universes share it.
    pub fn dims(&self) -> Vec<usize> {
        self.attributes.iter().map(|a| a.values.len()).collect()
    }

    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        if self.attributes.is_empty() {
            out.push(Violation::new(None, "universe has no attributes"));
        }
        let mut names = BTreeSet::new();
        for (i, attr) in self.attributes.iter().enumerate() {
            if !names.insert(attr.name.clone()) {
                out.push(Violation::new(Some(i), format!("duplicate attribute name `{}`", attr.name)));
            }
            if attr.values.is_empty() {
                out.push(Violation::new(Some(i), format!("attribute `{}` has no values", attr.name)));
            }
            let mut vals = BTreeSet::new();
            for v in &attr.values {
                if !vals.insert(v.clone()) {
                    out.push(Violation::new(Some(i), format!("duplicate value `{v}` in `{}`", attr.name)));
                }
            }
        }
        out
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("universe serializes")
    }

    pub fn from_toml(text: &str) -> Result<Universe> {
        let u: Universe =
            toml::from_str(text).map_err(|e| Error::Decode(format!("universe file: {e}")))?;
        let violations = u.validate();
        if violations.is_empty() {
            Ok(u)
        } else {
            Err(Error::invalid("universe", violations.iter().map(|v| v.to_string()).collect()))
        }
    }
}

/// A single invariant violation, pointing at the offending attribute when
/// one is identifiable.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct Violation {
    pub attribute: Option<usize>,
    pub message: String,
}

impl Violation {
    fn new(attribute: Option<usize>, message: impl Into<String>) -> Self {
        Violation { attribute, message: message.into() }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.attribute {
            Some(i) => write!(f, "attribute {}: {}", i + 1, self.message),
            None => f.write_str(&self.message),
        }
    }
}

/// A user's attribute list: one selected value index per attribute
/// (0-based internally).
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct AttributeList {
    pub selections: Vec<usize>,
}

impl AttributeList {
    pub fn validate(&self, universe: &Universe) -> Vec<Violation> {
        let mut out = Vec::new();
        if self.selections.len() != universe.attr_count() {
            out.push(Violation::new(
                None,
                format!(
                    "list selects {} attributes, universe has {}",
                    self.selections.len(),
                    universe.attr_count()
                ),
            ));
        }
        for (i, &k) in self.selections.iter().enumerate() {
            if i < universe.attr_count() && k >= universe.value_count(i) {
                out.push(Violation::new(
                    Some(i),
                    format!("value index {} out of range (n_i = {})", k + 1, universe.value_count(i)),
                ));
            }
        }
        out
    }

    /// Resolve a `name = value` map against the universe. Every attribute
    /// must be selected exactly once.
    pub fn from_pairs<'a>(
        universe: &Universe,
        pairs: impl IntoIterator<Item = (&'a str, &'a str)>,
    ) -> Result<AttributeList> {
        let mut selections: Vec<Option<usize>> = vec![None; universe.attr_count()];
        let mut reasons = Vec::new();
        for (name, value) in pairs {
            match universe.attr_index(name) {
                Some(i) => match universe.value_index(i, value) {
                    Some(t) => {
                        if selections[i].replace(t).is_some() {
                            reasons.push(format!("attribute `{name}` selected twice"));
                        }
                    }
                    None => reasons.push(format!("unknown value `{value}` for attribute `{name}`")),
                },
                None => reasons.push(format!("unknown attribute `{name}`")),
            }
        }
        for (i, sel) in selections.iter().enumerate() {
            if sel.is_none() {
                reasons.push(format!("attribute `{}` not selected", universe.attributes[i].name));
            }
        }
        if !reasons.is_empty() {
            return Err(Error::invalid("attribute list", reasons));
        }
        Ok(AttributeList { selections: selections.into_iter().map(|s| s.unwrap()).collect() })
    }

    pub fn to_toml(&self, universe: &Universe) -> String {
        let mut doc = toml::map::Map::new();
        let mut sel = toml::map::Map::new();
        for (i, &k) in self.selections.iter().enumerate() {
            sel.insert(
                universe.attributes[i].name.clone(),
                toml::Value::String(universe.value(i, k).to_string()),
            );
        }
        doc.insert("selections".into(), toml::Value::Table(sel));
        toml::to_string_pretty(&toml::Value::Table(doc)).expect("list serializes")
    }

    pub fn from_toml(universe: &Universe, text: &str) -> Result<AttributeList> {
        #[derive(Deserialize)]
        struct Raw {
            selections: std::collections::BTreeMap<String, String>,
        }
        let raw: Raw =
            toml::from_str(text).map_err(|e| Error::Decode(format!("attribute list file: {e}")))?;
        AttributeList::from_pairs(universe, raw.selections.iter().map(|(k, v)| (k.as_str(), v.as_str())))
    }
}

/// Per-attribute clause of an AND-gate.
#[derive(Clone, PartialEq, Eq, Debug)]
pub enum GateClause {
    /// Don't care: equal to the attribute's full value set.
    Wildcard,
    /// Nonempty subset of admissible value indices (0-based).
    Values(BTreeSet<usize>),
}

impl GateClause {
    pub fn admits(&self, value_index: usize) -> bool {
        match self {
            GateClause::Wildcard => true,
            GateClause::Values(set) => set.contains(&value_index),
        }
    }
}

/// Conjunction over all attributes of the universe.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct AndGate {
    pub clauses: Vec<GateClause>,
}

impl AndGate {
    pub fn wildcard(n: usize) -> AndGate {
        AndGate { clauses: vec![GateClause::Wildcard; n] }
    }

    pub fn validate(&self, universe: &Universe) -> Vec<Violation> {
        let mut out = Vec::new();
        if self.clauses.len() != universe.attr_count() {
            out.push(Violation::new(
                None,
                format!(
                    "gate has {} clauses, universe has {} attributes",
                    self.clauses.len(),
                    universe.attr_count()
                ),
            ));
        }
        for (i, clause) in self.clauses.iter().enumerate() {
            if let GateClause::Values(set) = clause {
                if set.is_empty() {
                    out.push(Violation::new(Some(i), "empty value subset"));
                }
                if i < universe.attr_count() {
                    for &t in set {
                        if t >= universe.value_count(i) {
                            out.push(Violation::new(
                                Some(i),
                                format!("value index {} out of range (n_i = {})", t + 1, universe.value_count(i)),
                            ));
                        }
                    }
                }
            }
        }
        out
    }
}

/// An access policy: disjunction of AND-gates over one universe.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct Policy {
    pub gates: Vec<AndGate>,
}

impl Policy {
    pub fn gate_count(&self) -> usize {
        self.gates.len()
    }

    pub fn validate(&self, universe: &Universe) -> Vec<Violation> {
        let mut out = Vec::new();
        if self.gates.is_empty() {
            out.push(Violation::new(None, "policy has no gates"));
        }
        for gate in &self.gates {
            out.extend(gate.validate(universe));
        }
        out
    }

    pub fn to_toml(&self, universe: &Universe) -> String {
        let mut gates = Vec::new();
        for gate in &self.gates {
            let mut clauses = toml::map::Map::new();
            for (i, clause) in gate.clauses.iter().enumerate() {
                let value = match clause {
                    GateClause::Wildcard => toml::Value::String("*".into()),
                    GateClause::Values(set) => toml::Value::Array(
                        set.iter().map(|&t| toml::Value::String(universe.value(i, t).into())).collect(),
                    ),
                };
                clauses.insert(universe.attributes[i].name.clone(), value);
            }
            let mut gate_tbl = toml::map::Map::new();
            gate_tbl.insert("clauses".into(), toml::Value::Table(clauses));
            gates.push(toml::Value::Table(gate_tbl));
        }
        let mut doc = toml::map::Map::new();
        doc.insert("gates".into(), toml::Value::Array(gates));
        toml::to_string_pretty(&toml::Value::Table(doc)).expect("policy serializes")
    }

    /// Parse the human-editable policy format. A clause is either the
    /// wildcard string `"*"` or a list of value names; attributes omitted
    /// from a gate default to the wildcard.
    pub fn from_toml(universe: &Universe, text: &str) -> Result<Policy> {
        #[derive(Deserialize)]
        struct RawPolicy {
            gates: Vec<RawGate>,
        }
        #[derive(Deserialize)]
        struct RawGate {
            clauses: std::collections::BTreeMap<String, toml::Value>,
        }
        let raw: RawPolicy =
            toml::from_str(text).map_err(|e| Error::Decode(format!("policy file: {e}")))?;
        let mut reasons = Vec::new();
        let mut gates = Vec::new();
        for (j, raw_gate) in raw.gates.iter().enumerate() {
            let mut clauses = vec![GateClause::Wildcard; universe.attr_count()];
            for (name, value) in &raw_gate.clauses {
                let Some(i) = universe.attr_index(name) else {
                    reasons.push(format!("gate {}: unknown attribute `{name}`", j + 1));
                    continue;
                };
                match value {
                    toml::Value::String(s) if s == "*" => clauses[i] = GateClause::Wildcard,
                    toml::Value::Array(items) => {
                        let mut set = BTreeSet::new();
                        for item in items {
                            match item.as_str().and_then(|v| universe.value_index(i, v)) {
                                Some(t) => {
                                    set.insert(t);
                                }
                                None => reasons.push(format!(
                                    "gate {}: unknown value {item} for attribute `{name}`",
                                    j + 1
                                )),
                            }
                        }
                        if set.is_empty() {
                            reasons.push(format!("gate {}: empty clause for `{name}`", j + 1));
                        }
                        clauses[i] = GateClause::Values(set);
                    }
                    other => reasons.push(format!(
                        "gate {}: clause for `{name}` must be \"*\" or a value list, got {other}",
                        j + 1
                    )),
                }
            }
            gates.push(AndGate { clauses });
        }
        if gates.is_empty() {
            reasons.push("policy has no gates".into());
        }
        if !reasons.is_empty() {
            return Err(Error::invalid("policy", reasons));
        }
        Ok(Policy { gates })
    }
}

fn check_same_shape(n_list: usize, n_other: usize) -> Result<()> {
    if n_list != n_other {
        return Err(Error::UniverseMismatch(format!(
            "attribute count differs: {n_list} vs {n_other}"
        )));
    }
    Ok(())
}

/// L satisfies W iff every selected value lies in the corresponding clause.
pub fn satisfies_gate(list: &AttributeList, gate: &AndGate) -> Result<bool> {
    check_same_shape(list.selections.len(), gate.clauses.len())?;
    Ok(list
        .selections
        .iter()
        .zip(&gate.clauses)
        .all(|(&k, clause)| clause.admits(k)))
}

/// Index of the first gate satisfied by `list`, if any. Lowest index wins
/// when several gates match.
pub fn satisfies_policy(list: &AttributeList, policy: &Policy) -> Result<Option<usize>> {
    for (j, gate) in policy.gates.iter().enumerate() {
        if satisfies_gate(list, gate)? {
            return Ok(Some(j));
        }
    }
    Ok(None)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Five attributes, three values each.
    fn small_universe() -> Universe {
        Universe {
            attributes: (1..=5)
                .map(|i| AttributeDef {
                    name: format!("attr{i}"),
                    values: (1..=4).map(|t| format!("v{i}_{t}")).collect(),
                })
                .collect(),
        }
    }

    fn values(indices: &[usize]) -> GateClause {
        GateClause::Values(indices.iter().copied().collect())
    }

    /// The two-gate example policy: gate 1 constrains attributes 1 and 2,
    /// gate 2 constrains attributes 2 and 3, everything else wildcarded.
    fn example_policy() -> Policy {
        Policy {
            gates: vec![
                AndGate {
                    clauses: vec![
                        values(&[0, 2]),
                        values(&[0, 1]),
                        GateClause::Wildcard,
                        GateClause::Wildcard,
                        GateClause::Wildcard,
                    ],
                },
                AndGate {
                    clauses: vec![
                        GateClause::Wildcard,
                        values(&[3]),
                        values(&[1]),
                        GateClause::Wildcard,
                        GateClause::Wildcard,
                    ],
                },
            ],
        }
    }

    #[test]
    fn worked_example_gate_one_matches() {
        let policy = example_policy();
        // L = [v1_1, v2_2, v3_1, v4_1, v5_1]
        let list = AttributeList { selections: vec![0, 1, 0, 0, 0] };
        assert!(satisfies_gate(&list, &policy.gates[0]).unwrap());
        assert!(!satisfies_gate(&list, &policy.gates[1]).unwrap());
        assert_eq!(satisfies_policy(&list, &policy).unwrap(), Some(0));
    }

    #[test]
    fn worked_example_gate_two_requires_both_values() {
        let policy = example_policy();
        // L_2 = v2_1 misses gate 2's required v2_4.
        let list = AttributeList { selections: vec![1, 0, 1, 0, 0] };
        assert!(!satisfies_gate(&list, &policy.gates[1]).unwrap());
        // L = [-, v2_4, v3_2, -, -] satisfies only gate 2.
        let list = AttributeList { selections: vec![1, 3, 1, 2, 2] };
        assert_eq!(satisfies_policy(&list, &policy).unwrap(), Some(1));
    }

    #[test]
    fn all_wildcard_gate_matches_everything() {
        let u = small_universe();
        let gate = AndGate::wildcard(u.attr_count());
        for selections in [[0, 0, 0, 0, 0], [3, 2, 1, 0, 3]] {
            let list = AttributeList { selections: selections.to_vec() };
            assert!(satisfies_gate(&list, &gate).unwrap());
        }
    }

    #[test]
    fn first_match_wins() {
        let u = small_universe();
        let policy = Policy {
            gates: vec![AndGate::wildcard(u.attr_count()), AndGate::wildcard(u.attr_count())],
        };
        let list = AttributeList { selections: vec![0; 5] };
        assert_eq!(satisfies_policy(&list, &policy).unwrap(), Some(0));
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let gate = AndGate::wildcard(4);
        let list = AttributeList { selections: vec![0; 5] };
        assert!(satisfies_gate(&list, &gate).is_err());
    }

    #[test]
    fn validation_pinpoints_offending_attribute() {
        let u = small_universe();
        let ok_list = AttributeList { selections: vec![0, 1, 2, 3, 0] };
        assert!(ok_list.validate(&u).is_empty());

        let mut gate = AndGate::wildcard(5);
        gate.clauses[1] = GateClause::Values(BTreeSet::new());
        let violations = gate.validate(&u);
        assert_eq!(violations.len(), 1);
        assert_eq!(violations[0].attribute, Some(1));

        let bad_list = AttributeList { selections: vec![0, 1, 2, 3, 4] };
        let violations = bad_list.validate(&u);
        assert_eq!(violations.len(), 1);
        assert_eq!(violations[0].attribute, Some(4));

        let partial = AttributeList { selections: vec![0, 1] };
        assert!(!partial.validate(&u).is_empty());
    }

    #[test]
    fn universe_validation() {
        let mut u = small_universe();
        assert!(u.validate().is_empty());
        u.attributes[2].values.clear();
        u.attributes.push(u.attributes[0].clone());
        let violations = u.validate();
        assert_eq!(violations.len(), 2);
    }

    /// Exhaustive agreement between the policy predicate and a brute-force
    /// scan over every list and two-gate policy of a tiny universe.
    #[test]
    fn satisfaction_exhaustive_small_universe() {
        let universe = Universe {
            attributes: (1..=3)
                .map(|i| AttributeDef {
                    name: format!("a{i}"),
                    values: (1..=3).map(|t| format!("v{i}_{t}")).collect(),
                })
                .collect(),
        };
        let n = universe.attr_count();

        // All clauses for one attribute: wildcard + every nonempty subset.
        fn clauses_for(n_i: usize) -> Vec<GateClause> {
            let mut out = vec![GateClause::Wildcard];
            for mask in 1u32..(1 << n_i) {
                let set: BTreeSet<usize> = (0..n_i).filter(|t| mask & (1 << t) != 0).collect();
                out.push(GateClause::Values(set));
            }
            out
        }

        let mut gates = Vec::new();
        // Sampled but wide gate space: diagonal product of per-attribute
        // clause choices (full cartesian product would be 8^3 * pairs).
        let per_attr: Vec<Vec<GateClause>> = (0..n).map(|i| clauses_for(universe.value_count(i))).collect();
        for a in &per_attr[0] {
            for b in &per_attr[1] {
                for c in &per_attr[2] {
                    gates.push(AndGate { clauses: vec![a.clone(), b.clone(), c.clone()] });
                }
            }
        }

        let mut lists = Vec::new();
        for k0 in 0..3 {
            for k1 in 0..3 {
                for k2 in 0..3 {
                    lists.push(AttributeList { selections: vec![k0, k1, k2] });
                }
            }
        }

        for (gi, g1) in gates.iter().enumerate().step_by(7) {
            let g2 = &gates[(gi * 13 + 5) % gates.len()];
            let policy = Policy { gates: vec![g1.clone(), g2.clone()] };
            for list in &lists {
                let expected = policy
                    .gates
                    .iter()
                    .position(|g| g.clauses.iter().zip(&list.selections).all(|(c, &k)| c.admits(k)));
                assert_eq!(satisfies_policy(list, &policy).unwrap(), expected);
            }
        }
    }

    #[test]
    fn adding_wildcard_gate_admits_everyone() {
        let policy = example_policy();
        let mut extended = policy.clone();
        extended.gates.push(AndGate::wildcard(5));
        for selections in [[1, 2, 2, 0, 0], [3, 3, 3, 3, 3]] {
            let list = AttributeList { selections: selections.to_vec() };
            assert!(satisfies_policy(&list, &extended).unwrap().is_some());
        }
    }

    #[test]
    fn removing_a_gate_never_grants_access() {
        let policy = example_policy();
        let mut lists = Vec::new();
        for a in 0..4 {
            for b in 0..4 {
                lists.push(AttributeList { selections: vec![a, b, 1, 0, 2] });
            }
        }
        for k in 0..policy.gates.len() {
            let mut reduced = policy.clone();
            reduced.gates.remove(k);
            for list in &lists {
                if satisfies_policy(list, &policy).unwrap().is_none() {
                    assert!(satisfies_policy(list, &reduced).unwrap().is_none());
                }
            }
        }
    }

    #[test]
    fn toml_round_trips() {
        let u = small_universe();
        assert_eq!(Universe::from_toml(&u.to_toml()).unwrap(), u);

        let list = AttributeList { selections: vec![0, 1, 2, 3, 0] };
        assert_eq!(AttributeList::from_toml(&u, &list.to_toml(&u)).unwrap(), list);

        let policy = example_policy();
        assert_eq!(Policy::from_toml(&u, &policy.to_toml(&u)).unwrap(), policy);
    }

    #[test]
    fn policy_file_defaults_omitted_attributes_to_wildcard() {
        let u = small_universe();
        let text = r#"
[[gates]]
clauses = { attr1 = ["v1_1", "v1_3"], attr2 = ["v2_1"] }

[[gates]]
clauses = { attr3 = "*" }
"#;
        let policy = Policy::from_toml(&u, text).unwrap();
        assert_eq!(policy.gates.len(), 2);
        assert_eq!(policy.gates[0].clauses[0], GateClause::Values([0, 2].into_iter().collect()));
        assert_eq!(policy.gates[0].clauses[2], GateClause::Wildcard);
        assert_eq!(policy.gates[1], AndGate::wildcard(5));
    }

    #[test]
    fn policy_file_rejects_unknown_names() {
        let u = small_universe();
        let text = r#"
[[gates]]
clauses = { nosuch = ["v1_1"] }
"#;
        assert!(Policy::from_toml(&u, text).is_err());
        let text = r#"
[[gates]]
clauses = { attr1 = ["nope"] }
"#;
        assert!(Policy::from_toml(&u, text).is_err());
    }
}
