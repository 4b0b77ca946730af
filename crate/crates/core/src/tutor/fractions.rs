//! Fraction arithmetic tutor: same-denominator addition, different-
//! denominator addition (cross multiplication only), and multiplication.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{GenerationError, ProblemScript, ProblemType, Step};
use crate::wm::{Operator, Role, Token};

/// Operand sampling ranges, inclusive.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct FractionRanges {
    pub numerator: (i64, i64),
    pub denominator: (i64, i64),
}

impl Default for FractionRanges {
    fn default() -> Self {
        FractionRanges {
            numerator: (1, 9),
            denominator: (2, 12),
        }
    }
}

/// Samples a fraction problem of the requested type.
pub fn gen_fraction_problem<R: Rng + ?Sized>(
    problem_type: ProblemType,
    problem_id: &str,
    ranges: &FractionRanges,
    rng: &mut R,
) -> Result<ProblemScript, GenerationError> {
    if problem_type.tutor() != crate::wm::TutorKind::Fractions {
        return Err(GenerationError::Config(format!(
            "`{problem_type}` is not a fraction problem type"
        )));
    }
    let (nlo, nhi) = ranges.numerator;
    let (dlo, dhi) = ranges.denominator;
    if nlo > nhi || dlo > dhi || dlo < 1 {
        return Err(GenerationError::Config(format!("bad operand ranges {ranges:?}")));
    }
    if problem_type == ProblemType::AddDiff && dlo == dhi {
        return Err(GenerationError::Config(
            "different denominators need a denominator range wider than one value".into(),
        ));
    }
    let num1 = rng.gen_range(nlo..=nhi);
    let num2 = rng.gen_range(nlo..=nhi);
    let den1 = rng.gen_range(dlo..=dhi);
    let den2 = match problem_type {
        ProblemType::AddSame => den1,
        ProblemType::AddDiff => loop {
            let d = rng.gen_range(dlo..=dhi);
            if d != den1 {
                break d;
            }
        },
        _ => rng.gen_range(dlo..=dhi),
    };
    Ok(fraction_script(problem_id, problem_type, num1, den1, num2, den2))
}

/// Builds the script for `num1/den1 (op) num2/den2`. Answers are left
/// unsimplified.
pub fn fraction_script(
    problem_id: &str,
    problem_type: ProblemType,
    num1: i64,
    den1: i64,
    num2: i64,
    den2: i64,
) -> ProblemScript {
    let op = if problem_type == ProblemType::Multiply {
        Operator::Multiply
    } else {
        Operator::Add
    };
    let givens: BTreeMap<Role, Token> = [
        (Role::Num1, Token::int(num1)),
        (Role::Den1, Token::int(den1)),
        (Role::Op, Token::Symbol(op)),
        (Role::Num2, Token::int(num2)),
        (Role::Den2, Token::int(den2)),
    ]
    .into_iter()
    .collect();
    let steps = match problem_type {
        ProblemType::AddSame => vec![
            Step::input(Role::AnswerNum, num1 + num2),
            Step::input(Role::AnswerDen, den1),
            Step::done(),
        ],
        ProblemType::AddDiff => {
            let common = den1 * den2;
            let (c1, c2) = (num1 * den2, num2 * den1);
            vec![
                Step::check(Role::CheckConvert),
                Step::input(Role::ConvDen1, common),
                Step::input(Role::ConvDen2, common),
                Step::input(Role::ConvNum1, c1),
                Step::input(Role::ConvNum2, c2),
                Step::input(Role::AnswerNum, c1 + c2),
                Step::input(Role::AnswerDen, common),
                Step::done(),
            ]
        }
        _ => vec![
            Step::input(Role::AnswerNum, num1 * num2),
            Step::input(Role::AnswerDen, den1 * den2),
            Step::done(),
        ],
    };
    ProblemScript {
        problem_id: problem_id.to_string(),
        problem_type,
        givens,
        steps,
        condition_tags: Vec::new(),
    }
}
