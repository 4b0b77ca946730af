//! The agent's perceive-decide-act cycle.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::induction::{induce_from_demo, refine_conditions, Feedback, Induction, InductionError, SearchConfig};
use crate::skill::{ConditionMode, GuardPolicy, SkillId, SkillStore};
use crate::tutor::{ProblemType, ProtocolError, SessionMode, TutorSession};
use crate::wm::{perceive, PerceiveError, Role, Sai, WorkingMemory};

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct AgentConfig {
    pub search: SearchConfig,
    pub condition_mode: ConditionMode,
    pub guard_policy: GuardPolicy,
}

/// A skill instantiated against working memory.
#[derive(Clone, Debug, PartialEq)]
pub struct Activation {
    pub skill_id: SkillId,
    /// Procedure roles mapped to the ids of the fields they read.
    pub binding: BTreeMap<Role, String>,
    pub proposed: Sai,
    pub utility_value: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Decision {
    Fire(Activation),
    RequestDemo,
}

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("invariant violation: {0}")]
    InvariantViolation(String),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    Perceive(#[from] PerceiveError),
}

/// Per-step outcome written to the transaction log.
#[derive(Copy, Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum StepOutcome {
    #[serde(rename = "CORRECT")]
    Correct,
    #[serde(rename = "ERROR")]
    Error,
    #[serde(rename = "HINT")]
    Hint,
}

impl StepOutcome {
    pub fn name(self) -> &'static str {
        match self {
            StepOutcome::Correct => "CORRECT",
            StepOutcome::Error => "ERROR",
            StepOutcome::Hint => "HINT",
        }
    }
}

impl fmt::Display for StepOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.name())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Transaction {
    pub step_id: Role,
    pub outcome: StepOutcome,
    pub skill_id: Option<SkillId>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ProblemResult {
    pub problem_id: String,
    pub problem_type: ProblemType,
    /// Training: every step right on the first try without hints.
    /// Posttest: every step entered correctly.
    pub correct: bool,
    pub transactions: Vec<Transaction>,
    /// Demonstrations that could not be explained.
    pub induction_failures: usize,
}

/// Every skill that can fire in `wm`, unordered.
pub fn activations(wm: &WorkingMemory, store: &SkillStore, mode: ConditionMode) -> Vec<Activation> {
    store
        .iter()
        .filter(|s| s.matches(wm, mode))
        .filter_map(|s| {
            let input = s.procedure.output(wm)?;
            Some(Activation {
                skill_id: s.id,
                binding: s
                    .procedure
                    .roles()
                    .into_iter()
                    .map(|r| (r, r.name().to_string()))
                    .collect(),
                proposed: Sai {
                    selection: s.target,
                    action: s.procedure.action(),
                    input,
                },
                utility_value: s.utility(),
            })
        })
        .collect()
}

/// Picks the activation of highest utility. Ties go to the skill with more
/// attempts, then to the smallest id.
pub fn decide(wm: &WorkingMemory, store: &SkillStore, mode: ConditionMode) -> Decision {
    decide_excluding(wm, store, mode, &BTreeSet::new())
}

/// As [`decide`], ignoring skills already tried on the current step.
pub fn decide_excluding(
    wm: &WorkingMemory,
    store: &SkillStore,
    mode: ConditionMode,
    tried: &BTreeSet<SkillId>,
) -> Decision {
    activations(wm, store, mode)
        .into_iter()
        .filter(|a| !tried.contains(&a.skill_id))
        .min_by(|a, b| preference(store, a, b))
        .map_or(Decision::RequestDemo, Decision::Fire)
}

/// Credits or penalizes the fired skill and refines its conditions. Under
/// version-space matching a failure also promotes the content predicates it
/// violated to guards.
pub fn apply_feedback(
    store: &mut SkillStore,
    activation: &Activation,
    wm: &WorkingMemory,
    feedback: Feedback,
    cfg: &AgentConfig,
) -> Result<(), AgentError> {
    let skill = store
        .get_mut(activation.skill_id)
        .ok_or_else(|| AgentError::InvariantViolation(format!("unknown skill {}", activation.skill_id)))?;
    skill.stats.record(feedback == Feedback::Correct);
    *skill = refine_conditions(skill, wm, feedback);
    if feedback == Feedback::Incorrect && cfg.condition_mode == ConditionMode::VersionSpace {
        skill.learn_guards(wm, cfg.guard_policy);
    }
    Ok(())
}

/// A simulated student: configuration plus its own skill store.
#[derive(Clone, Debug, Default)]
pub struct Agent {
    pub config: AgentConfig,
    pub skills: SkillStore,
}

impl Agent {
    pub fn new(config: AgentConfig) -> Agent {
        Agent {
            config,
            skills: SkillStore::new(),
        }
    }

    pub fn decide(&self, wm: &WorkingMemory) -> Decision {
        decide(wm, &self.skills, self.config.condition_mode)
    }

    /// Works the session's problem to completion.
    pub fn run_problem(&mut self, session: &mut TutorSession) -> Result<ProblemResult, AgentError> {
        match session.mode() {
            SessionMode::Training => self.train(session),
            SessionMode::Posttest => self.test(session),
        }
    }

    fn train(&mut self, session: &mut TutorSession) -> Result<ProblemResult, AgentError> {
        let mut transactions = Vec::new();
        let mut induction_failures = 0;
        let mut tried = BTreeSet::new();
        while !session.is_complete() {
            let wm = perceive(&session.snapshot())?;
            match decide_excluding(&wm, &self.skills, self.config.condition_mode, &tried) {
                Decision::Fire(act) => {
                    let correct = session.submit(&act.proposed)? == crate::tutor::Outcome::Correct;
                    let feedback = if correct {
                        Feedback::Correct
                    } else {
                        Feedback::Incorrect
                    };
                    apply_feedback(&mut self.skills, &act, &wm, feedback, &self.config)?;
                    transactions.push(Transaction {
                        step_id: act.proposed.selection,
                        outcome: if correct {
                            StepOutcome::Correct
                        } else {
                            StepOutcome::Error
                        },
                        skill_id: Some(act.skill_id),
                    });
                    if correct {
                        tried.clear();
                    } else {
                        tried.insert(act.skill_id);
                    }
                }
                Decision::RequestDemo => {
                    let (target, demo) = session.demonstrate()?;
                    match induce_from_demo(&wm, &demo, target, &mut self.skills, &self.config.search) {
                        Ok(Induction::Credited(_) | Induction::Learned(_)) => {}
                        Err(InductionError::InductionFailure(_)) => induction_failures += 1,
                        Err(InductionError::InvariantViolation(msg)) => {
                            return Err(AgentError::InvariantViolation(msg))
                        }
                    }
                    transactions.push(Transaction {
                        step_id: target,
                        outcome: StepOutcome::Hint,
                        skill_id: None,
                    });
                    tried.clear();
                }
            }
        }
        let correct = transactions.iter().all(|t| t.outcome == StepOutcome::Correct);
        Ok(self.result(session, correct, transactions, induction_failures))
    }

    fn test(&mut self, session: &mut TutorSession) -> Result<ProblemResult, AgentError> {
        let mut transactions = Vec::new();
        while !session.is_complete() {
            let wm = perceive(&session.snapshot())?;
            match self.decide(&wm) {
                Decision::Fire(act) => {
                    session.submit(&act.proposed)?;
                    let correct = session.last_correct() == Some(true);
                    transactions.push(Transaction {
                        step_id: act.proposed.selection,
                        outcome: if correct {
                            StepOutcome::Correct
                        } else {
                            StepOutcome::Error
                        },
                        skill_id: Some(act.skill_id),
                    });
                    if !correct {
                        break;
                    }
                }
                Decision::RequestDemo => {
                    let step = session.next_step().map_or(Role::Done, |s| s.role);
                    transactions.push(Transaction {
                        step_id: step,
                        outcome: StepOutcome::Hint,
                        skill_id: None,
                    });
                    break;
                }
            }
        }
        let correct =
            session.judgement() == Some(true) && transactions.iter().all(|t| t.outcome == StepOutcome::Correct);
        Ok(self.result(session, correct, transactions, 0))
    }

    fn result(
        &self,
        session: &TutorSession,
        correct: bool,
        transactions: Vec<Transaction>,
        induction_failures: usize,
    ) -> ProblemResult {
        let script = session.script();
        ProblemResult {
            problem_id: script.problem_id.clone(),
            problem_type: script.problem_type,
            correct,
            transactions,
            induction_failures,
        }
    }
}

/// Orders two activations the way [`decide`] does; `Less` means preferred.
pub fn preference(store: &SkillStore, a: &Activation, b: &Activation) -> Ordering {
    let (sa, sb) = (store.get(a.skill_id), store.get(b.skill_id));
    match (sa, sb) {
        (Some(sa), Some(sb)) => sb
            .stats
            .cmp_utility(&sa.stats)
            .then_with(|| sb.stats.attempts.cmp(&sa.stats.attempts))
            .then_with(|| a.skill_id.cmp(&b.skill_id)),
        _ => a.skill_id.cmp(&b.skill_id),
    }
}
