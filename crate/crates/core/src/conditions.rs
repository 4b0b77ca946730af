//! Applicability conditions: a closed predicate vocabulary over working
//! memory, and conjunctions of those predicates.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::wm::{Operator, Role, Token, WorkingMemory};

#[derive(Copy, Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Predicate {
    /// The field holds a value.
    Filled(Role),
    /// The field is visible and holds no value.
    Empty(Role),
    /// The conversion checkbox is ticked.
    BoxChecked,
    /// The operator field shows the given symbol.
    OpEquals(Role, Operator),
    DenominatorsEqual,
    DenominatorsDiffer,
}

impl Predicate {
    pub fn holds(&self, wm: &WorkingMemory) -> bool {
        match *self {
            Predicate::Filled(r) => wm.field(r).is_some_and(|f| !f.is_empty()),
            Predicate::Empty(r) => wm.field(r).is_some_and(|f| f.is_empty()),
            Predicate::BoxChecked => wm.value(Role::CheckConvert) == Some(&Token::Checked),
            Predicate::OpEquals(r, op) => wm.symbol(r) == Some(op),
            Predicate::DenominatorsEqual => match (wm.number(Role::Den1), wm.number(Role::Den2)) {
                (Some(a), Some(b)) => a == b,
                _ => false,
            },
            Predicate::DenominatorsDiffer => match (wm.number(Role::Den1), wm.number(Role::Den2)) {
                (Some(a), Some(b)) => a != b,
                _ => false,
            },
        }
    }

    /// Structural predicates describe interface progress (which fields are
    /// filled); the rest describe the problem's content.
    pub fn is_structural(&self) -> bool {
        matches!(self, Predicate::Filled(_) | Predicate::Empty(_) | Predicate::BoxChecked)
    }
}

impl fmt::Display for Predicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Predicate::Filled(r) => write!(f, "field_filled({r})"),
            Predicate::Empty(r) => write!(f, "field_empty({r})"),
            Predicate::BoxChecked => f.write_str("box_checked"),
            Predicate::OpEquals(r, op) => write!(f, "op_equals({r},{})", op.symbol()),
            Predicate::DenominatorsEqual => f.write_str("denominators_equal"),
            Predicate::DenominatorsDiffer => f.write_str("denominators_differ"),
        }
    }
}

impl FromStr for Predicate {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "box_checked" => return Ok(Predicate::BoxChecked),
            "denominators_equal" => return Ok(Predicate::DenominatorsEqual),
            "denominators_differ" => return Ok(Predicate::DenominatorsDiffer),
            _ => {}
        }
        let (head, rest) = s.split_once('(').ok_or_else(|| format!("bad predicate `{s}`"))?;
        let args = rest.strip_suffix(')').ok_or_else(|| format!("bad predicate `{s}`"))?;
        match head {
            "field_filled" => Ok(Predicate::Filled(args.parse()?)),
            "field_empty" => Ok(Predicate::Empty(args.parse()?)),
            "op_equals" => {
                let (role, sym) = args.split_once(',').ok_or_else(|| format!("bad predicate `{s}`"))?;
                let op = Operator::from_symbol(sym).ok_or_else(|| format!("bad symbol `{sym}`"))?;
                Ok(Predicate::OpEquals(role.parse()?, op))
            }
            _ => Err(format!("unknown predicate `{s}`")),
        }
    }
}

impl Serialize for Predicate {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Predicate {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        String::deserialize(deserializer)?
            .parse()
            .map_err(serde::de::Error::custom)
    }
}

/// Conjunction of predicates.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ConditionSet(BTreeSet<Predicate>);

impl ConditionSet {
    pub fn new() -> ConditionSet {
        ConditionSet::default()
    }

    /// Every predicate of the tutor's vocabulary that holds in `wm`.
    pub fn observe(wm: &WorkingMemory) -> ConditionSet {
        let mut set = BTreeSet::new();
        for (role, field) in &wm.fields {
            match (role, &field.value) {
                (Role::Done, _) => {}
                (Role::CheckConvert, Some(_)) => {
                    set.insert(Predicate::BoxChecked);
                }
                (_, Some(Token::Symbol(op))) => {
                    set.insert(Predicate::OpEquals(*role, *op));
                }
                (_, Some(_)) => {
                    set.insert(Predicate::Filled(*role));
                }
                (_, None) => {
                    set.insert(Predicate::Empty(*role));
                }
            }
        }
        for p in [Predicate::DenominatorsEqual, Predicate::DenominatorsDiffer] {
            if p.holds(wm) {
                set.insert(p);
            }
        }
        ConditionSet(set)
    }

    pub fn matches(&self, wm: &WorkingMemory) -> bool {
        self.0.iter().all(|p| p.holds(wm))
    }

    /// Matches on the structural predicates only.
    pub fn matches_structure(&self, wm: &WorkingMemory) -> bool {
        self.0.iter().filter(|p| p.is_structural()).all(|p| p.holds(wm))
    }

    /// Drops every predicate that does not hold in `wm`. Returns how many
    /// were removed.
    pub fn drop_unsatisfied(&mut self, wm: &WorkingMemory) -> usize {
        let before = self.0.len();
        self.0.retain(|p| p.holds(wm));
        before - self.0.len()
    }

    /// Predicates of the set that fail in `wm`.
    pub fn violated_by<'a>(&'a self, wm: &'a WorkingMemory) -> impl Iterator<Item = Predicate> + 'a {
        self.0.iter().copied().filter(move |p| !p.holds(wm))
    }

    pub fn insert(&mut self, p: Predicate) -> bool {
        self.0.insert(p)
    }

    pub fn contains(&self, p: &Predicate) -> bool {
        self.0.contains(p)
    }

    pub fn retain(&mut self, f: impl FnMut(&Predicate) -> bool) {
        self.0.retain(f)
    }

    pub fn is_subset(&self, other: &ConditionSet) -> bool {
        self.0.is_subset(&other.0)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Predicate> {
        self.0.iter()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl FromIterator<Predicate> for ConditionSet {
    fn from_iter<I: IntoIterator<Item = Predicate>>(iter: I) -> Self {
        ConditionSet(iter.into_iter().collect())
    }
}

impl fmt::Display for ConditionSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (i, p) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{p}")?;
        }
        f.write_str("}")
    }
}
