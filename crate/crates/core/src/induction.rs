//! Skill induction: explaining demonstrations by searching compositions of
//! arithmetic primitives, generalizing explanations into skills, and
//! refining applicability conditions from feedback.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::conditions::ConditionSet;
use crate::expr::{Expr, Procedure};
use crate::scalar::Scalar;
use crate::skill::{Skill, SkillId, SkillStore, UtilityStats};
use crate::wm::{Action, Operator, Role, Sai, Token, WorkingMemory};
use crate::Rational;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchConfig {
    /// Deepest operator nesting explored.
    pub max_depth: usize,
    /// Fall back to the demonstrated literal when nothing else explains it.
    pub constant_fallback: bool,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            max_depth: 2,
            constant_fallback: true,
        }
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum Feedback {
    Correct,
    Incorrect,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum InductionError {
    #[error("invariant violation: {0}")]
    InvariantViolation(String),
    #[error("no explanation found for {0}")]
    InductionFailure(String),
}

/// Node of the enumeration: expression, value, and leaves used (bitmask
/// over the leaf positions).
#[derive(Clone)]
struct Node {
    expr: Expr,
    value: Rational,
    leaves: u32,
}

/// All minimal-depth explanations of a demonstrated step.
///
/// Numeric inputs are explained by iterative deepening over compositions of
/// the visible numeric fields, each field used at most once per tree. Within
/// a depth, results are ordered by operator (add, subtract, multiply,
/// divide) and then by the layout position of their leaves. Non-numeric
/// actions have a single structural explanation.
pub fn explain(wm: &WorkingMemory, demo: &Sai, cfg: &SearchConfig) -> Vec<Procedure> {
    match demo.action {
        Action::CheckBox => return vec![Procedure::CheckBox],
        Action::PressDone => return vec![Procedure::PressDone],
        Action::InputValue => {}
    }
    let Some(target) = demo.input.as_ref().and_then(Token::as_number) else {
        return Vec::new();
    };
    let leaves: Vec<(Role, Rational)> = wm
        .numeric_fields()
        .filter(|(role, _)| *role != demo.selection)
        .map(|(r, v)| (r, *v))
        .collect();

    let mut levels: Vec<Vec<Node>> = Vec::new();
    for depth in 0..=cfg.max_depth {
        let level = if depth == 0 {
            leaves
                .iter()
                .enumerate()
                .map(|(i, (role, v))| Node {
                    expr: Expr::Field(*role),
                    value: *v,
                    leaves: 1 << i,
                })
                .collect()
        } else {
            grow(&levels, depth)
        };
        let hits: Vec<Procedure> = level
            .iter()
            .filter(|n| n.value == *target)
            .map(|n| Procedure::Input(n.expr.clone()))
            .collect();
        if !hits.is_empty() {
            return hits;
        }
        levels.push(level);
    }
    if cfg.constant_fallback {
        vec![Procedure::Input(Expr::Const(*target))]
    } else {
        Vec::new()
    }
}

/// Builds every tree of exactly `depth` from shallower levels.
fn grow(levels: &[Vec<Node>], depth: usize) -> Vec<Node> {
    let shallower: Vec<&Node> = levels.iter().flatten().collect();
    let mut out = Vec::new();
    for op in Operator::ALL {
        let start = out.len();
        for lhs in &shallower {
            for rhs in &shallower {
                if lhs.leaves & rhs.leaves != 0 {
                    continue;
                }
                // At least one child must come from the level just below.
                if lhs.expr.depth() != depth - 1 && rhs.expr.depth() != depth - 1 {
                    continue;
                }
                if op.is_commutative() && rhs.expr < lhs.expr {
                    continue;
                }
                let value = match op {
                    Operator::Add => lhs.value.try_add(&rhs.value),
                    Operator::Subtract => lhs.value.try_sub(&rhs.value),
                    Operator::Multiply => lhs.value.try_mul(&rhs.value),
                    Operator::Divide => lhs.value.try_div(&rhs.value),
                };
                if let Some(value) = value {
                    out.push(Node {
                        expr: Expr::apply(op, lhs.expr.clone(), rhs.expr.clone()),
                        value,
                        leaves: lhs.leaves | rhs.leaves,
                    });
                }
            }
        }
        // Leftmost-leaf order within the operator.
        out[start..].sort_by_key(leaf_order_key);
    }
    out
}

fn leaf_order_key(n: &Node) -> (Vec<Role>, Expr) {
    (n.expr.leaves(), n.expr.clone())
}

/// Turns an explanation into a reusable skill: the procedure refers to
/// field roles rather than their values, and the conditions start as the
/// full observed predicate set of `wm`.
pub fn generalize(procedure: &Procedure, wm: &WorkingMemory, target: Role) -> Result<Skill, InductionError> {
    for role in procedure.roles() {
        if wm.number(role).is_none() {
            return Err(InductionError::InvariantViolation(format!(
                "explanation refers to `{role}`, which holds no number in working memory"
            )));
        }
    }
    if wm.field(target).is_none() {
        return Err(InductionError::InvariantViolation(format!(
            "target `{target}` is not visible"
        )));
    }
    Ok(Skill {
        id: SkillId::UNASSIGNED,
        procedure: procedure.clone(),
        target,
        conditions: ConditionSet::observe(wm),
        guards: ConditionSet::new(),
        stats: UtilityStats::default(),
    })
}

/// Drop-literal generalization: a correct application removes every
/// condition it violates. Incorrect applications leave conditions alone.
pub fn refine_conditions(skill: &Skill, wm: &WorkingMemory, feedback: Feedback) -> Skill {
    let mut out = skill.clone();
    if feedback == Feedback::Correct {
        out.conditions.drop_unsatisfied(wm);
        let conditions = out.conditions.clone();
        out.guards.retain(|p| conditions.contains(p));
    }
    out
}

/// What a demonstration did to the store.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Induction {
    /// Existing skills already reproduced the step and were credited.
    Credited(Vec<SkillId>),
    /// A new skill was learned.
    Learned(SkillId),
}

/// Learns from a demonstrated correct step.
///
/// Every existing skill for the same target whose procedure reproduces the
/// step is treated as a positive example. When none does, the first
/// explanation in search order is generalized into a new skill.
pub fn induce_from_demo(
    wm: &WorkingMemory,
    demo: &Sai,
    target: Role,
    store: &mut SkillStore,
    cfg: &SearchConfig,
) -> Result<Induction, InductionError> {
    if !demo.is_well_formed() {
        return Err(InductionError::InvariantViolation(format!(
            "malformed demonstration {demo}"
        )));
    }
    let credited: Vec<SkillId> = store
        .iter()
        .filter(|s| {
            s.target == target
                && s.procedure.action() == demo.action
                && s.procedure.output(wm) == Some(demo.input.clone())
        })
        .map(|s| s.id)
        .collect();
    if !credited.is_empty() {
        for id in &credited {
            let skill = store.get_mut(*id).expect("credited skill exists");
            *skill = refine_conditions(skill, wm, Feedback::Correct);
            skill.stats.record(true);
        }
        return Ok(Induction::Credited(credited));
    }
    let explanation = explain(wm, demo, cfg)
        .into_iter()
        .next()
        .ok_or_else(|| InductionError::InductionFailure(demo.to_string()))?;
    let skill = generalize(&explanation, wm, target)?;
    Ok(Induction::Learned(store.insert(skill)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conditions::Predicate;
    use crate::wm::{FieldState, TutorKind};
    use std::collections::BTreeMap;

    fn wm_of(tutor: TutorKind, given: &[(Role, Token)], open: &[Role]) -> WorkingMemory {
        let mut fields = BTreeMap::new();
        for (role, tok) in given {
            fields.insert(
                *role,
                FieldState {
                    value: Some(tok.clone()),
                    role: *role,
                    editable: false,
                },
            );
        }
        for role in open {
            fields.insert(
                *role,
                FieldState {
                    value: None,
                    role: *role,
                    editable: true,
                },
            );
        }
        WorkingMemory { tutor, fields }
    }

    fn fractions(n1: i64, d1: i64, op: Operator, n2: i64, d2: i64) -> WorkingMemory {
        wm_of(
            TutorKind::Fractions,
            &[
                (Role::Num1, Token::int(n1)),
                (Role::Den1, Token::int(d1)),
                (Role::Op, Token::Symbol(op)),
                (Role::Num2, Token::int(n2)),
                (Role::Den2, Token::int(d2)),
            ],
            &[
                Role::CheckConvert,
                Role::ConvNum1,
                Role::ConvDen1,
                Role::ConvNum2,
                Role::ConvDen2,
                Role::AnswerNum,
                Role::AnswerDen,
                Role::Done,
            ],
        )
    }

    fn field(r: Role) -> Expr {
        Expr::Field(r)
    }

    fn input(expr: Expr) -> Procedure {
        Procedure::Input(expr)
    }

    #[test]
    fn product_of_denominators_is_the_only_explanation() {
        let mut wm = fractions(1, 2, Operator::Add, 1, 3);
        wm.fields.get_mut(&Role::CheckConvert).unwrap().value = Some(Token::Checked);
        let demo = Sai::input_value(Role::ConvDen1, Token::int(6));
        let got = explain(&wm, &demo, &SearchConfig::default());
        assert_eq!(
            got,
            vec![input(Expr::apply(
                Operator::Multiply,
                field(Role::Den1),
                field(Role::Den2)
            ))]
        );
    }

    #[test]
    fn copy_is_depth_zero() {
        let wm = fractions(5, 7, Operator::Multiply, 2, 9);
        let demo = Sai::input_value(Role::AnswerNum, Token::int(5));
        assert_eq!(
            explain(&wm, &demo, &SearchConfig::default()),
            vec![input(field(Role::Num1))]
        );
    }

    #[test]
    fn seven_three_two_two_item_has_three_depth_one_candidates() {
        // a=7, b=3, c=2, d=2 in layout order; answer 4.
        let wm = wm_of(
            TutorKind::BoxArrows,
            &[
                (Role::Row1Left, Token::int(7)),
                (Role::Row1Right, Token::int(3)),
                (Role::Row2Left, Token::int(2)),
                (Role::ArrowTarget, Token::int(2)),
            ],
            &[Role::Row2Right],
        );
        let demo = Sai::input_value(Role::Row2Right, Token::int(4));
        let got = explain(&wm, &demo, &SearchConfig::default());
        let (a, b, c, d) = (
            field(Role::Row1Left),
            field(Role::Row1Right),
            field(Role::Row2Left),
            field(Role::ArrowTarget),
        );
        assert_eq!(
            got,
            vec![
                input(Expr::apply(Operator::Add, c.clone(), d.clone())),
                input(Expr::apply(Operator::Subtract, a, b)),
                input(Expr::apply(Operator::Multiply, c, d)),
            ]
        );
    }

    #[test]
    fn constant_fallback_only_when_nothing_else() {
        let wm = wm_of(TutorKind::BoxArrows, &[], &[Role::Row2Right]);
        let demo = Sai::input_value(Role::Row2Right, Token::int(2));
        assert_eq!(
            explain(&wm, &demo, &SearchConfig::default()),
            vec![input(Expr::Const(Rational::from_integer(2)))]
        );
        let strict = SearchConfig {
            constant_fallback: false,
            ..SearchConfig::default()
        };
        assert!(explain(&wm, &demo, &strict).is_empty());
    }

    #[test]
    fn depth_two_when_no_shallower_explanation() {
        let wm = wm_of(
            TutorKind::BoxArrows,
            &[
                (Role::Row1Left, Token::int(2)),
                (Role::Row1Right, Token::int(3)),
                (Role::Row2Left, Token::int(5)),
            ],
            &[Role::Row2Right],
        );
        // 2*3+5 = 11; no depth-1 combination of {2,3,5} gives 11.
        let demo = Sai::input_value(Role::Row2Right, Token::int(11));
        let got = explain(&wm, &demo, &SearchConfig::default());
        assert!(!got.is_empty());
        for p in &got {
            let e = p.expr().unwrap();
            assert_eq!(e.depth(), 2);
            assert_eq!(e.eval(&wm), Some(Rational::from_integer(11)));
        }
        assert!(got.contains(&input(Expr::apply(
            Operator::Add,
            field(Role::Row2Left),
            Expr::apply(Operator::Multiply, field(Role::Row1Left), field(Role::Row1Right)),
        ))));
    }

    #[test]
    fn structural_demos_explain_structurally() {
        let wm = fractions(1, 2, Operator::Add, 1, 3);
        assert_eq!(
            explain(&wm, &Sai::check_box(Role::CheckConvert), &SearchConfig::default()),
            vec![Procedure::CheckBox]
        );
        assert_eq!(
            explain(&wm, &Sai::press_done(), &SearchConfig::default()),
            vec![Procedure::PressDone]
        );
    }

    #[test]
    fn generalize_starts_most_specific() {
        let mut wm = fractions(1, 2, Operator::Add, 1, 3);
        wm.fields.get_mut(&Role::CheckConvert).unwrap().value = Some(Token::Checked);
        let proc = input(Expr::apply(Operator::Multiply, field(Role::Den1), field(Role::Den2)));
        let skill = generalize(&proc, &wm, Role::ConvDen1).unwrap();
        assert_eq!(skill.target, Role::ConvDen1);
        assert_eq!(skill.stats, UtilityStats::default());
        for p in [
            Predicate::OpEquals(Role::Op, Operator::Add),
            Predicate::DenominatorsDiffer,
            Predicate::BoxChecked,
            Predicate::Empty(Role::ConvDen1),
            Predicate::Filled(Role::Den1),
            Predicate::Filled(Role::Den2),
        ] {
            assert!(skill.conditions.contains(&p), "missing {p}");
        }
        assert_eq!(skill.conditions, ConditionSet::observe(&wm));
    }

    #[test]
    fn generalize_rejects_absent_fields() {
        let wm = fractions(1, 2, Operator::Add, 1, 3);
        let proc = input(field(Role::ConvNum1));
        assert!(matches!(
            generalize(&proc, &wm, Role::AnswerNum),
            Err(InductionError::InvariantViolation(_))
        ));
    }

    #[test]
    fn same_denominator_copy_keeps_denominators_equal() {
        let wm = fractions(1, 4, Operator::Add, 2, 4);
        let skill = generalize(&input(field(Role::Den1)), &wm, Role::AnswerDen).unwrap();
        assert!(skill.conditions.contains(&Predicate::DenominatorsEqual));
    }

    #[test]
    fn refine_conditions_drop_literal() {
        let base = generalize(
            &input(field(Role::Den1)),
            &fractions(1, 2, Operator::Add, 1, 3),
            Role::AnswerDen,
        )
        .unwrap();
        let mut skill = base.clone();
        skill.conditions = [
            Predicate::OpEquals(Role::Op, Operator::Add),
            Predicate::DenominatorsDiffer,
        ]
        .into_iter()
        .collect();
        let same = refine_conditions(&skill, &fractions(1, 2, Operator::Add, 1, 3), Feedback::Correct);
        assert_eq!(same.conditions, skill.conditions);
        let dropped = refine_conditions(&skill, &fractions(1, 4, Operator::Add, 1, 4), Feedback::Correct);
        assert!(!dropped.conditions.contains(&Predicate::DenominatorsDiffer));
        assert!(dropped
            .conditions
            .contains(&Predicate::OpEquals(Role::Op, Operator::Add)));
        let wrong = refine_conditions(&skill, &fractions(1, 4, Operator::Multiply, 1, 4), Feedback::Incorrect);
        assert_eq!(wrong, skill);
    }

    #[test]
    fn induction_learns_then_credits() {
        let mut store = SkillStore::new();
        let cfg = SearchConfig::default();
        let mut wm = fractions(1, 2, Operator::Add, 1, 3);
        wm.fields.get_mut(&Role::CheckConvert).unwrap().value = Some(Token::Checked);
        let demo = Sai::input_value(Role::ConvDen1, Token::int(6));
        let first = induce_from_demo(&wm, &demo, Role::ConvDen1, &mut store, &cfg).unwrap();
        assert!(matches!(first, Induction::Learned(_)));
        assert_eq!(store.len(), 1);
        let learned = store.iter().next().unwrap();
        assert_eq!(
            learned.procedure,
            input(Expr::apply(Operator::Multiply, field(Role::Den1), field(Role::Den2)))
        );

        let mut wm2 = fractions(2, 5, Operator::Add, 1, 4);
        wm2.fields.get_mut(&Role::CheckConvert).unwrap().value = Some(Token::Checked);
        let demo2 = Sai::input_value(Role::ConvDen1, Token::int(20));
        let second = induce_from_demo(&wm2, &demo2, Role::ConvDen1, &mut store, &cfg).unwrap();
        assert!(matches!(second, Induction::Credited(ref ids) if ids.len() == 1));
        assert_eq!(store.len(), 1);
        assert_eq!(
            store.iter().next().unwrap().stats,
            UtilityStats {
                successes: 1,
                attempts: 1
            }
        );
    }

    #[test]
    fn induction_failure_without_constant_fallback() {
        let mut store = SkillStore::new();
        let wm = wm_of(TutorKind::BoxArrows, &[], &[Role::Row2Right]);
        let demo = Sai::input_value(Role::Row2Right, Token::int(9));
        let cfg = SearchConfig {
            constant_fallback: false,
            ..SearchConfig::default()
        };
        assert!(matches!(
            induce_from_demo(&wm, &demo, Role::Row2Right, &mut store, &cfg),
            Err(InductionError::InductionFailure(_))
        ));
        assert!(store.is_empty());
    }
}
