//! Tutor contract: problem scripts with canonical steps, and sessions that
//! judge submitted steps, give demonstrations, and export snapshots.

mod boxes;
mod fractions;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::wm::{Action, RawField, Role, Sai, Token, TutorKind, TutorSnapshot};
use crate::Rational;

pub use boxes::{
    box_layout, candidate_procedures, gen_box_problem, BoxGenConfig, BoxPosition, Constraint, Difficulty, MAX_DRAWS,
};
pub use fractions::{fraction_script, gen_fraction_problem, FractionRanges};

#[derive(Copy, Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProblemType {
    AddSame,
    AddDiff,
    Multiply,
    BoxEasy,
    BoxHard,
}

impl ProblemType {
    pub const ALL: [ProblemType; 5] = [
        ProblemType::AddSame,
        ProblemType::AddDiff,
        ProblemType::Multiply,
        ProblemType::BoxEasy,
        ProblemType::BoxHard,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ProblemType::AddSame => "add_same",
            ProblemType::AddDiff => "add_diff",
            ProblemType::Multiply => "multiply",
            ProblemType::BoxEasy => "box_easy",
            ProblemType::BoxHard => "box_hard",
        }
    }

    pub fn tutor(self) -> TutorKind {
        match self {
            ProblemType::AddSame | ProblemType::AddDiff | ProblemType::Multiply => TutorKind::Fractions,
            ProblemType::BoxEasy | ProblemType::BoxHard => TutorKind::BoxArrows,
        }
    }
}

impl fmt::Display for ProblemType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.name())
    }
}

impl FromStr for ProblemType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ProblemType::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| format!("unknown problem type `{s}`"))
    }
}

/// One canonical step: the field, the action, and the correct value.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Step {
    pub role: Role,
    pub action: Action,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<Token>,
}

impl Step {
    pub fn input(role: Role, value: i64) -> Step {
        Step {
            role,
            action: Action::InputValue,
            value: Some(Token::int(value)),
        }
    }

    pub fn check(role: Role) -> Step {
        Step {
            role,
            action: Action::CheckBox,
            value: None,
        }
    }

    pub fn done() -> Step {
        Step {
            role: Role::Done,
            action: Action::PressDone,
            value: None,
        }
    }

    pub fn sai(&self) -> Sai {
        Sai {
            selection: self.role,
            action: self.action,
            input: self.value.clone(),
        }
    }

    /// Correct-value predicate: same field, same action, equal value.
    pub fn accepts(&self, sai: &Sai) -> bool {
        sai.selection == self.role && sai.action == self.action && sai.input == self.value
    }

    /// Value shown in the field once the step is locked in.
    fn shown(&self) -> Token {
        match (&self.value, self.action) {
            (Some(v), _) => v.clone(),
            (None, Action::CheckBox) => Token::Checked,
            (None, _) => Token::Checked,
        }
    }
}

/// A generated tutor item and its canonical solution path.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProblemScript {
    pub problem_id: String,
    #[serde(rename = "type")]
    pub problem_type: ProblemType,
    pub givens: BTreeMap<Role, Token>,
    #[serde(rename = "answers")]
    pub steps: Vec<Step>,
    #[serde(default)]
    pub condition_tags: Vec<String>,
}

impl ProblemScript {
    pub fn tutor(&self) -> TutorKind {
        self.problem_type.tutor()
    }

    /// Visible fields in layout order. The fraction tutor shows every field,
    /// conversion fields included, from the start.
    pub fn layout(&self) -> Vec<Role> {
        match self.tutor() {
            TutorKind::Fractions => {
                let mut roles = TutorKind::Fractions.roles().to_vec();
                roles.push(Role::Done);
                roles
            }
            TutorKind::BoxArrows => box_layout(self),
        }
    }

    pub fn is_editable(&self, role: Role) -> bool {
        self.layout().contains(&role) && !self.givens.contains_key(&role)
    }

    pub fn given_number(&self, role: Role) -> Option<Rational> {
        self.givens.get(&role).and_then(Token::as_number).copied()
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionMode {
    Training,
    Posttest,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum Outcome {
    Correct,
    Incorrect,
    /// Posttest entry, judged silently.
    Recorded,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ProtocolError {
    #[error("field `{0}` is locked")]
    LockedField(Role),
    #[error("field `{0}` is not part of this problem")]
    UnknownField(Role),
    #[error("malformed step {0}")]
    MalformedSai(String),
    #[error("the session has ended")]
    Closed,
    #[error("demonstrations are unavailable in posttest mode")]
    NoHintsInPosttest,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GenerationError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("no item satisfied the {constraint} constraint after {draws} draws")]
    Unsatisfiable { constraint: String, draws: usize },
}

/// A single-owner tutoring session over one problem.
#[derive(Clone, Debug)]
pub struct TutorSession {
    script: ProblemScript,
    mode: SessionMode,
    locked: BTreeMap<Role, Token>,
    cursor: usize,
    failed: bool,
    transcript: Vec<(Sai, Outcome)>,
    last_correct: Option<bool>,
}

impl TutorSession {
    pub fn new(script: ProblemScript, mode: SessionMode) -> TutorSession {
        TutorSession {
            script,
            mode,
            locked: BTreeMap::new(),
            cursor: 0,
            failed: false,
            transcript: Vec::new(),
            last_correct: None,
        }
    }

    pub fn script(&self) -> &ProblemScript {
        &self.script
    }

    pub fn mode(&self) -> SessionMode {
        self.mode
    }

    pub fn transcript(&self) -> &[(Sai, Outcome)] {
        &self.transcript
    }

    /// Next canonical step not yet locked in.
    pub fn next_step(&self) -> Option<&Step> {
        self.script.steps.get(self.cursor)
    }

    pub fn is_complete(&self) -> bool {
        self.failed || self.cursor >= self.script.steps.len()
    }

    /// Posttest verdict once the session has ended: correct only if every
    /// step was entered correctly.
    pub fn judgement(&self) -> Option<bool> {
        self.is_complete().then_some(!self.failed)
    }

    /// Whether the most recent submission was correct, including silent
    /// posttest judgements.
    pub fn last_correct(&self) -> Option<bool> {
        self.last_correct
    }

    pub fn snapshot(&self) -> TutorSnapshot {
        let fields = self
            .script
            .layout()
            .into_iter()
            .map(|role| {
                let given = self.script.givens.get(&role);
                let value = given.or_else(|| self.locked.get(&role)).map(Token::to_string);
                RawField {
                    id: role.name().to_string(),
                    role: role.name().to_string(),
                    value,
                    editable: given.is_none(),
                }
            })
            .collect();
        TutorSnapshot {
            tutor: self.script.tutor(),
            fields,
        }
    }

    /// Judges a step. In training the result is returned to the learner; in
    /// posttest it is recorded and a wrong entry ends the problem.
    pub fn submit(&mut self, sai: &Sai) -> Result<Outcome, ProtocolError> {
        if self.is_complete() {
            return Err(ProtocolError::Closed);
        }
        if !sai.is_well_formed() {
            return Err(ProtocolError::MalformedSai(sai.to_string()));
        }
        if !self.script.layout().contains(&sai.selection) {
            return Err(ProtocolError::UnknownField(sai.selection));
        }
        if self.script.givens.contains_key(&sai.selection) || self.locked.contains_key(&sai.selection) {
            return Err(ProtocolError::LockedField(sai.selection));
        }
        let step = self.next_step().expect("open session has a next step").clone();
        let correct = step.accepts(sai);
        self.last_correct = Some(correct);
        if correct {
            self.locked.insert(step.role, step.shown());
            self.cursor += 1;
        } else if self.mode == SessionMode::Posttest {
            self.failed = true;
        }
        let outcome = match (self.mode, correct) {
            (SessionMode::Posttest, _) => Outcome::Recorded,
            (SessionMode::Training, true) => Outcome::Correct,
            (SessionMode::Training, false) => Outcome::Incorrect,
        };
        self.transcript.push((sai.clone(), outcome));
        Ok(outcome)
    }

    /// Demonstrates and locks the next canonical step.
    pub fn demonstrate(&mut self) -> Result<(Role, Sai), ProtocolError> {
        if self.mode == SessionMode::Posttest {
            return Err(ProtocolError::NoHintsInPosttest);
        }
        let step = self.next_step().ok_or(ProtocolError::Closed)?.clone();
        self.locked.insert(step.role, step.shown());
        self.cursor += 1;
        Ok((step.role, step.sai()))
    }
}
