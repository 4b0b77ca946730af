//! Working memory: the interface state an agent perceives, and the step
//! proposals (SAIs) it sends back to a tutor.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use num_traits::{Signed, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::Rational;

/// Semantic role of an interface field. Each field of a tutor carries
/// exactly one role, so the role doubles as the field identifier.
///
/// Declaration order is the left-to-right, top-to-bottom layout order used
/// for deterministic tie-breaking during explanation search.
#[derive(Copy, Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Num1,
    Den1,
    Op,
    Num2,
    Den2,
    CheckConvert,
    ConvNum1,
    ConvDen1,
    ConvNum2,
    ConvDen2,
    AnswerNum,
    AnswerDen,
    Row1Left,
    Row1Op,
    Row1Right,
    Row2Left,
    Row2Op,
    Row2Right,
    ArrowTarget,
    Done,
}

impl Role {
    pub const ALL: [Role; 20] = [
        Role::Num1,
        Role::Den1,
        Role::Op,
        Role::Num2,
        Role::Den2,
        Role::CheckConvert,
        Role::ConvNum1,
        Role::ConvDen1,
        Role::ConvNum2,
        Role::ConvDen2,
        Role::AnswerNum,
        Role::AnswerDen,
        Role::Row1Left,
        Role::Row1Op,
        Role::Row1Right,
        Role::Row2Left,
        Role::Row2Op,
        Role::Row2Right,
        Role::ArrowTarget,
        Role::Done,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Role::Num1 => "num1",
            Role::Den1 => "den1",
            Role::Op => "op",
            Role::Num2 => "num2",
            Role::Den2 => "den2",
            Role::CheckConvert => "check_convert",
            Role::ConvNum1 => "conv_num1",
            Role::ConvDen1 => "conv_den1",
            Role::ConvNum2 => "conv_num2",
            Role::ConvDen2 => "conv_den2",
            Role::AnswerNum => "answer_num",
            Role::AnswerDen => "answer_den",
            Role::Row1Left => "row1_left",
            Role::Row1Op => "row1_op",
            Role::Row1Right => "row1_right",
            Role::Row2Left => "row2_left",
            Role::Row2Op => "row2_op",
            Role::Row2Right => "row2_right",
            Role::ArrowTarget => "arrow_target",
            Role::Done => "done",
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.name())
    }
}

impl FromStr for Role {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Role::ALL
            .iter()
            .copied()
            .find(|r| r.name() == s)
            .ok_or_else(|| format!("unknown role `{s}`"))
    }
}

/// The four arithmetic primitives, also used as operator symbols on screen.
#[derive(Copy, Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Operator {
    Add,
    Subtract,
    Multiply,
    Divide,
}

impl Operator {
    /// Enumeration order used by explanation search.
    pub const ALL: [Operator; 4] = [Operator::Add, Operator::Subtract, Operator::Multiply, Operator::Divide];

    pub fn symbol(self) -> &'static str {
        match self {
            Operator::Add => "+",
            Operator::Subtract => "-",
            Operator::Multiply => "*",
            Operator::Divide => "/",
        }
    }

    /// Name used in s-expressions.
    pub fn keyword(self) -> &'static str {
        match self {
            Operator::Add => "add",
            Operator::Subtract => "sub",
            Operator::Multiply => "mul",
            Operator::Divide => "div",
        }
    }

    pub fn is_commutative(self) -> bool {
        matches!(self, Operator::Add | Operator::Multiply)
    }

    pub fn from_symbol(s: &str) -> Option<Operator> {
        match s {
            "+" => Some(Operator::Add),
            "-" | "−" => Some(Operator::Subtract),
            "*" | "x" | "×" => Some(Operator::Multiply),
            "/" | "÷" => Some(Operator::Divide),
            _ => None,
        }
    }

    pub fn from_keyword(s: &str) -> Option<Operator> {
        Operator::ALL.into_iter().find(|op| op.keyword() == s)
    }
}

/// Value shown in a field.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Token {
    Number(Rational),
    Symbol(Operator),
    Checked,
}

impl Token {
    pub fn int(v: i64) -> Token {
        Token::Number(Rational::from_integer(v))
    }

    pub fn as_number(&self) -> Option<&Rational> {
        match self {
            Token::Number(v) => Some(v),
            _ => None,
        }
    }

    pub fn as_symbol(&self) -> Option<Operator> {
        match self {
            Token::Symbol(op) => Some(*op),
            _ => None,
        }
    }
}

/// Canonical rendering: integers as plain literals, other rationals as `p/q`.
pub fn render_number(v: &Rational) -> String {
    if v.is_integer() {
        v.numer().to_string()
    } else {
        format!("{}/{}", v.numer(), v.denom())
    }
}

/// Parses the canonical rendering produced by [`render_number`].
pub fn parse_number(s: &str) -> Option<Rational> {
    match s.split_once('/') {
        Some((n, d)) => {
            let n: i64 = n.trim().parse().ok()?;
            let d: i64 = d.trim().parse().ok()?;
            (!d.is_zero()).then(|| Rational::new(n, d))
        }
        None => s.trim().parse::<i64>().ok().map(Rational::from_integer),
    }
}

/// True when `v` is a non-negative integer.
pub fn is_whole(v: &Rational) -> bool {
    v.is_integer() && !v.is_negative()
}

impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Token::Number(v) => f.write_str(&render_number(v)),
            Token::Symbol(op) => f.write_str(op.symbol()),
            Token::Checked => f.write_str("checked"),
        }
    }
}

impl FromStr for Token {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "checked" {
            return Ok(Token::Checked);
        }
        if let Some(v) = parse_number(s) {
            return Ok(Token::Number(v));
        }
        // "-" alone is the subtraction symbol, not a malformed number.
        Operator::from_symbol(s)
            .map(Token::Symbol)
            .ok_or_else(|| format!("unrecognised token `{s}`"))
    }
}

impl Serialize for Token {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Token {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Which tutor a working memory or snapshot belongs to.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TutorKind {
    Fractions,
    BoxArrows,
}

impl TutorKind {
    /// Declared role vocabulary of the tutor.
    pub fn roles(self) -> &'static [Role] {
        match self {
            TutorKind::Fractions => &Role::ALL[0..12],
            TutorKind::BoxArrows => &Role::ALL[12..19],
        }
    }

    pub fn declares(self, role: Role) -> bool {
        role == Role::Done || self.roles().contains(&role)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FieldState {
    pub value: Option<Token>,
    pub role: Role,
    pub editable: bool,
}

impl FieldState {
    pub fn is_empty(&self) -> bool {
        self.value.is_none()
    }
}

/// The perceived interface: every visible field, keyed by role.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WorkingMemory {
    pub tutor: TutorKind,
    pub fields: BTreeMap<Role, FieldState>,
}

impl WorkingMemory {
    pub fn field(&self, role: Role) -> Option<&FieldState> {
        self.fields.get(&role)
    }

    pub fn value(&self, role: Role) -> Option<&Token> {
        self.fields.get(&role).and_then(|f| f.value.as_ref())
    }

    pub fn number(&self, role: Role) -> Option<&Rational> {
        self.value(role).and_then(Token::as_number)
    }

    pub fn symbol(&self, role: Role) -> Option<Operator> {
        self.value(role).and_then(Token::as_symbol)
    }

    /// Filled numeric fields in layout order.
    pub fn numeric_fields(&self) -> impl Iterator<Item = (Role, &Rational)> {
        self.fields
            .iter()
            .filter_map(|(role, f)| f.value.as_ref().and_then(Token::as_number).map(|v| (*role, v)))
    }
}

/// Raw field as exported by a tutor, before validation.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawField {
    pub id: String,
    pub role: String,
    pub value: Option<String>,
    pub editable: bool,
}

/// Raw interface state exported by a tutor.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TutorSnapshot {
    pub tutor: TutorKind,
    pub fields: Vec<RawField>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PerceiveError {
    #[error("malformed tutor snapshot: {0}")]
    MalformedTutor(String),
}

/// Projects a tutor snapshot into working memory.
pub fn perceive(snapshot: &TutorSnapshot) -> Result<WorkingMemory, PerceiveError> {
    let malformed = |msg: String| PerceiveError::MalformedTutor(msg);
    if snapshot.fields.is_empty() {
        return Err(malformed("snapshot has no fields".into()));
    }
    let mut fields = BTreeMap::new();
    let mut ids = std::collections::BTreeSet::new();
    for raw in &snapshot.fields {
        let role: Role = raw.role.parse().map_err(malformed)?;
        if !snapshot.tutor.declares(role) {
            return Err(malformed(format!(
                "role `{role}` is not declared by the {:?} tutor",
                snapshot.tutor
            )));
        }
        if !ids.insert(raw.id.as_str()) {
            return Err(malformed(format!("duplicate field id `{}`", raw.id)));
        }
        let value = raw
            .value
            .as_deref()
            .map(str::parse::<Token>)
            .transpose()
            .map_err(malformed)?;
        let state = FieldState {
            value,
            role,
            editable: raw.editable,
        };
        if fields.insert(role, state).is_some() {
            return Err(malformed(format!("role `{role}` appears twice")));
        }
    }
    Ok(WorkingMemory {
        tutor: snapshot.tutor,
        fields,
    })
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    InputValue,
    PressDone,
    CheckBox,
}

/// A selection-action-input step proposal.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Sai {
    pub selection: Role,
    pub action: Action,
    pub input: Option<Token>,
}

impl Sai {
    pub fn input_value(selection: Role, input: Token) -> Sai {
        Sai {
            selection,
            action: Action::InputValue,
            input: Some(input),
        }
    }

    pub fn press_done() -> Sai {
        Sai {
            selection: Role::Done,
            action: Action::PressDone,
            input: None,
        }
    }

    pub fn check_box(selection: Role) -> Sai {
        Sai {
            selection,
            action: Action::CheckBox,
            input: None,
        }
    }

    /// Input is present iff the action is `InputValue`.
    pub fn is_well_formed(&self) -> bool {
        (self.action == Action::InputValue) == self.input.is_some()
    }
}

impl fmt::Display for Sai {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.input {
            Some(input) => write!(f, "{}:{:?}={}", self.selection, self.action, input),
            None => write!(f, "{}:{:?}", self.selection, self.action),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn raw(role: &str, value: Option<&str>, editable: bool) -> RawField {
        RawField {
            id: role.to_string(),
            role: role.to_string(),
            value: value.map(str::to_string),
            editable,
        }
    }

    #[test]
    fn perceives_box_snapshot() {
        let snap = TutorSnapshot {
            tutor: TutorKind::BoxArrows,
            fields: vec![
                raw("row1_left", Some("22"), false),
                raw("row1_op", Some("/"), false),
                raw("row1_right", Some("11"), false),
                raw("row2_right", None, true),
            ],
        };
        let wm = perceive(&snap).unwrap();
        assert_eq!(wm.number(Role::Row1Left), Some(&Rational::from_integer(22)));
        assert_eq!(wm.symbol(Role::Row1Op), Some(Operator::Divide));
        assert!(wm.field(Role::Row2Right).unwrap().is_empty());
    }

    #[test]
    fn rejects_empty_and_unknown_roles() {
        let empty = TutorSnapshot {
            tutor: TutorKind::Fractions,
            fields: vec![],
        };
        assert!(matches!(perceive(&empty), Err(PerceiveError::MalformedTutor(_))));

        let unknown = TutorSnapshot {
            tutor: TutorKind::Fractions,
            fields: vec![raw("numerator_three", Some("1"), false)],
        };
        assert!(perceive(&unknown).is_err());

        let foreign = TutorSnapshot {
            tutor: TutorKind::Fractions,
            fields: vec![raw("row1_left", Some("1"), false)],
        };
        assert!(perceive(&foreign).is_err());
    }

    #[test]
    fn tokens_render_canonically() {
        assert_eq!(Token::Number(Rational::new(12, 2)).to_string(), "6");
        assert_eq!(Token::Number(Rational::new(7, 2)).to_string(), "7/2");
        assert_eq!("-".parse::<Token>().unwrap(), Token::Symbol(Operator::Subtract));
        assert_eq!("-3".parse::<Token>().unwrap(), Token::int(-3));
        assert_eq!("6/4".parse::<Token>().unwrap(), Token::Number(Rational::new(3, 2)));
    }

    #[test]
    fn sai_input_iff_input_value() {
        assert!(Sai::input_value(Role::AnswerNum, Token::int(5)).is_well_formed());
        assert!(Sai::press_done().is_well_formed());
        let bad = Sai {
            selection: Role::Done,
            action: Action::PressDone,
            input: Some(Token::int(1)),
        };
        assert!(!bad.is_well_formed());
    }
}
