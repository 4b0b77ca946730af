//! Learned skills and the per-agent skill store.

use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::conditions::{ConditionSet, Predicate};
use crate::expr::Procedure;
use crate::wm::{Role, WorkingMemory};

#[derive(Copy, Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SkillId(pub u32);

impl SkillId {
    /// Placeholder carried by a skill that has not been inserted yet.
    pub const UNASSIGNED: SkillId = SkillId(0);
}

impl fmt::Display for SkillId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "s{:04}", self.0)
    }
}

impl std::str::FromStr for SkillId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.strip_prefix('s')
            .and_then(|n| n.parse().ok())
            .map(SkillId)
            .ok_or_else(|| format!("bad skill id `{s}`"))
    }
}

/// Success counts behind a skill's utility.
#[derive(Copy, Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct UtilityStats {
    pub successes: u32,
    pub attempts: u32,
}

impl UtilityStats {
    /// Laplace-smoothed success rate `(s + 1) / (a + 2)`.
    pub fn utility(&self) -> f64 {
        (self.successes as f64 + 1.0) / (self.attempts as f64 + 2.0)
    }

    pub fn record(&mut self, correct: bool) {
        self.attempts += 1;
        if correct {
            self.successes += 1;
        }
    }

    /// Exact comparison of Laplace utilities, free of rounding.
    pub fn cmp_utility(&self, other: &UtilityStats) -> Ordering {
        let lhs = (self.successes as u64 + 1) * (other.attempts as u64 + 2);
        let rhs = (other.successes as u64 + 1) * (self.attempts as u64 + 2);
        lhs.cmp(&rhs)
    }
}

/// How a skill's conditions gate its firing.
#[derive(Copy, Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConditionMode {
    /// Fire only where every predicate of the most-specific condition set
    /// holds. Content predicates never generalize across problem types, so
    /// skills from different types never compete.
    MostSpecific,
    /// Fire where the structural predicates hold and every learned guard
    /// holds. Guards are content predicates promoted after a skill fails in
    /// a context its successes never covered.
    #[default]
    VersionSpace,
}

/// Which violated content predicates become guards after a failure.
#[derive(Copy, Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GuardPolicy {
    /// All of them.
    #[default]
    All,
    /// Only the first in predicate order.
    First,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Skill {
    pub id: SkillId,
    pub procedure: Procedure,
    pub target: Role,
    /// Most-specific conjunction consistent with every positive example.
    pub conditions: ConditionSet,
    /// Content predicates required for firing, learned from errors. Always a
    /// subset of `conditions`.
    pub guards: ConditionSet,
    pub stats: UtilityStats,
}

impl Skill {
    pub fn utility(&self) -> f64 {
        self.stats.utility()
    }

    /// Whether the skill can fire in `wm`.
    pub fn matches(&self, wm: &WorkingMemory, mode: ConditionMode) -> bool {
        let target_open = wm.field(self.target).is_some_and(|f| f.editable && f.is_empty());
        if !target_open {
            return false;
        }
        let gated = match mode {
            ConditionMode::MostSpecific => self.conditions.matches(wm),
            ConditionMode::VersionSpace => self.conditions.matches_structure(wm) && self.guards.matches(wm),
        };
        gated && self.procedure.output(wm).is_some()
    }

    /// Promotes content predicates that fail in `wm` to guards. Returns the
    /// number of new guards.
    pub fn learn_guards(&mut self, wm: &WorkingMemory, policy: GuardPolicy) -> usize {
        let violated: Vec<Predicate> = self.conditions.violated_by(wm).filter(|p| !p.is_structural()).collect();
        let take = match policy {
            GuardPolicy::All => violated.len(),
            GuardPolicy::First => violated.len().min(1),
        };
        violated
            .into_iter()
            .take(take)
            .filter(|p| self.guards.insert(*p))
            .count()
    }
}

/// Serialized view of a skill: the documented skill-store schema.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkillRecord {
    pub skill_id: String,
    pub target: Role,
    pub procedure: Procedure,
    pub predicates: ConditionSet,
    pub guards: ConditionSet,
    pub stats: UtilityStats,
}

impl From<&Skill> for SkillRecord {
    fn from(s: &Skill) -> Self {
        SkillRecord {
            skill_id: s.id.to_string(),
            target: s.target,
            procedure: s.procedure.clone(),
            predicates: s.conditions.clone(),
            guards: s.guards.clone(),
            stats: s.stats,
        }
    }
}

impl TryFrom<SkillRecord> for Skill {
    type Error = String;

    fn try_from(r: SkillRecord) -> Result<Self, Self::Error> {
        Ok(Skill {
            id: r.skill_id.parse()?,
            procedure: r.procedure,
            target: r.target,
            conditions: r.predicates,
            guards: r.guards,
            stats: r.stats,
        })
    }
}

/// An agent's skills in insertion order.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SkillStore {
    skills: Vec<Skill>,
    next_id: u32,
}

impl SkillStore {
    pub fn new() -> SkillStore {
        SkillStore::default()
    }

    /// Inserts a skill under a fresh id.
    pub fn insert(&mut self, mut skill: Skill) -> SkillId {
        self.next_id += 1;
        skill.id = SkillId(self.next_id);
        let id = skill.id;
        self.skills.push(skill);
        id
    }

    pub fn get(&self, id: SkillId) -> Option<&Skill> {
        self.skills.iter().find(|s| s.id == id)
    }

    pub fn get_mut(&mut self, id: SkillId) -> Option<&mut Skill> {
        self.skills.iter_mut().find(|s| s.id == id)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Skill> {
        self.skills.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Skill> {
        self.skills.iter_mut()
    }

    pub fn len(&self) -> usize {
        self.skills.len()
    }

    pub fn is_empty(&self) -> bool {
        self.skills.is_empty()
    }

    pub fn to_json(&self) -> serde_json::Result<String> {
        let records: Vec<SkillRecord> = self.skills.iter().map(SkillRecord::from).collect();
        serde_json::to_string_pretty(&records)
    }

    pub fn from_json(text: &str) -> Result<SkillStore, String> {
        let records: Vec<SkillRecord> = serde_json::from_str(text).map_err(|e| e.to_string())?;
        let skills = records
            .into_iter()
            .map(Skill::try_from)
            .collect::<Result<Vec<_>, _>>()?;
        let next_id = skills.iter().map(|s| s.id.0).max().unwrap_or(0);
        Ok(SkillStore { skills, next_id })
    }
}
