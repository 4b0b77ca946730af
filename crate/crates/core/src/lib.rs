//! Simulated students for tutoring experiments.
//!
//! Agents learn arithmetic skills from tutor demonstrations and correctness
//! feedback. Two tutors are provided (fraction arithmetic and box-and-arrows),
//! along with an experiment harness that runs populations of agents under
//! A/B conditions and analytics that turn transaction logs into learning
//! curves and logistic regressions.
//!
//! Arithmetic inside the agent is exact ([`Rational`]); statistics are
//! generic over [`scalar::Real`] with `f64` as the working type.

pub mod agent;
pub mod analytics;
pub mod conditions;
pub mod experiment;
pub mod expr;
pub mod induction;
pub mod scalar;
pub mod skill;
pub mod tutor;
pub mod wm;

/// Exact rational used for field values and expression evaluation.
pub type Rational = num_rational::Ratio<i64>;

/// Arbitrary-precision rational, used by oracles that must not overflow.
pub type BigRational = num_rational::BigRational;

/// Logistic fit in the default working precision.
pub type LogisticFit = analytics::LogisticFit<f64>;

pub use agent::{decide, Activation, Agent, AgentConfig, Decision, ProblemResult, StepOutcome, Transaction};
pub use conditions::{ConditionSet, Predicate};
pub use expr::{Expr, Procedure};
pub use induction::{explain, generalize, induce_from_demo, refine_conditions, Feedback, SearchConfig};
pub use skill::{ConditionMode, GuardPolicy, Skill, SkillId, SkillStore, UtilityStats};
pub use tutor::{ProblemScript, ProblemType, SessionMode, TutorSession};
pub use wm::{perceive, Operator, Role, Sai, Token, WorkingMemory};
