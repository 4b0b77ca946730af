//! Learning curves and logistic-regression summaries over transaction logs.

mod logistic;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write;

use nalgebra::RealField;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::experiment::{parse_problem_id, Condition, Phase, ProblemObservation, Study, TransactionLog};
use crate::scalar::Real;
use crate::tutor::ProblemType;

pub use logistic::{fit_logistic, gradient, log_likelihood, Design, IrlsOptions, LogisticFit, RegressionError};

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959_963_984_540_054;

#[derive(Copy, Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Interval {
    #[default]
    Normal,
    Wilson,
}

/// What the curve's x-axis counts.
#[derive(Copy, Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CurveAxis {
    /// 1-based position in the phase's curriculum.
    #[default]
    Position,
    /// 1-based opportunity on the problem's type.
    Opportunity,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub condition: Condition,
    pub position: usize,
    pub mean_error: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n: usize,
}

/// 95% interval for a proportion `p` over `n` trials.
pub fn proportion_ci(p: f64, n: usize, interval: Interval) -> (f64, f64) {
    let n = n as f64;
    match interval {
        Interval::Normal => {
            let half = Z95 * (p * (1.0 - p) / n).sqrt();
            ((p - half).max(0.0), (p + half).min(1.0))
        }
        Interval::Wilson => {
            let z2 = Z95 * Z95;
            let denom = 1.0 + z2 / n;
            let centre = (p + z2 / (2.0 * n)) / denom;
            let half = Z95 * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
            ((centre - half).max(0.0).min(p), (centre + half).min(1.0).max(p))
        }
    }
}

/// Problem-level error averaged over agents at each x-axis point, per
/// condition. Observations whose problem id carries no position are
/// skipped on the position axis.
pub fn learning_curve(log: &TransactionLog, phase: Phase, axis: CurveAxis, interval: Interval) -> Vec<CurvePoint> {
    let mut cells: BTreeMap<(Condition, usize), (usize, usize)> = BTreeMap::new();
    for obs in log.problems().into_iter().filter(|o| o.phase == phase) {
        let x = match axis {
            CurveAxis::Position => match parse_problem_id(&obs.problem_id) {
                Some((_, pos)) => pos,
                None => continue,
            },
            CurveAxis::Opportunity => obs.opportunity + 1,
        };
        let cell = cells.entry((obs.condition, x)).or_default();
        cell.0 += usize::from(!obs.correct);
        cell.1 += 1;
    }
    cells
        .into_iter()
        .map(|((condition, position), (errors, n))| {
            let mean_error = errors as f64 / n as f64;
            let (ci_low, ci_high) = proportion_ci(mean_error, n, interval);
            CurvePoint {
                condition,
                position,
                mean_error,
                ci_low,
                ci_high,
                n,
            }
        })
        .collect()
}

pub fn write_curve_csv<W: Write>(points: &[CurvePoint], out: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    if points.is_empty() {
        w.write_record(["condition", "position", "mean_error", "ci_low", "ci_high", "n"])?;
    }
    for p in points {
        w.serialize(p)?;
    }
    w.flush()?;
    Ok(())
}

/// Which fixed effects enter a model.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub struct Formula {
    pub condition: bool,
    pub problem_type: bool,
    pub count: bool,
    pub type_by_count: bool,
}

impl Formula {
    /// Tutor-phase model: condition, type, count, and type by count.
    pub const TUTOR: Formula = Formula {
        condition: true,
        problem_type: true,
        count: true,
        type_by_count: true,
    };
    /// Posttest model: condition and type, no count.
    pub const POSTTEST: Formula = Formula {
        condition: true,
        problem_type: true,
        count: false,
        type_by_count: false,
    };
    /// Single-type model: condition and count.
    pub const CONDITION_COUNT: Formula = Formula {
        condition: true,
        problem_type: false,
        count: true,
        type_by_count: false,
    };
    pub const CONDITION_ONLY: Formula = Formula {
        condition: true,
        problem_type: false,
        count: false,
        type_by_count: false,
    };
}

fn type_label(t: ProblemType) -> &'static str {
    match t {
        ProblemType::AddSame => "Add Same",
        ProblemType::AddDiff => "Add Diff",
        ProblemType::Multiply => "Mult",
        ProblemType::BoxEasy => "Easy",
        ProblemType::BoxHard => "Hard",
    }
}

/// Dummy-coded design for problem-level correctness. The reference
/// condition is the study's control arm; the reference problem type is
/// `add_diff` for fractions and the first type present otherwise.
pub fn design_matrix<T: Real>(obs: &[ProblemObservation], study: Study, formula: Formula) -> Design<T> {
    let (_, treatment) = Condition::pair(study);
    let mut types: Vec<ProblemType> = obs.iter().map(|o| o.problem_type).collect();
    types.sort();
    types.dedup();
    let reference = if types.contains(&ProblemType::AddDiff) {
        ProblemType::AddDiff
    } else {
        types.first().copied().unwrap_or(ProblemType::AddDiff)
    };
    let dummies: Vec<ProblemType> = if formula.problem_type {
        types.iter().copied().filter(|t| *t != reference).collect()
    } else {
        Vec::new()
    };

    let mut names = vec![if formula.problem_type {
        format!("Intercept ({})", type_label(reference))
    } else {
        "Intercept".to_string()
    }];
    if formula.condition {
        names.push(format!("Condition ({})", treatment.label()));
    }
    names.extend(dummies.iter().map(|t| format!("Type: {}", type_label(*t))));
    if formula.count {
        names.push("Count".into());
    }
    if formula.type_by_count {
        names.extend(dummies.iter().map(|t| format!("Type: {} × Count", type_label(*t))));
    }

    let mut rows = Vec::with_capacity(obs.len());
    let mut y = Vec::with_capacity(obs.len());
    let ind = |b: bool| if b { T::one() } else { T::zero() };
    for o in obs {
        let count = T::lit(o.opportunity as f64);
        let mut row = vec![T::one()];
        if formula.condition {
            row.push(ind(o.condition == treatment));
        }
        row.extend(dummies.iter().map(|t| ind(o.problem_type == *t)));
        if formula.count {
            row.push(count);
        }
        if formula.type_by_count {
            row.extend(dummies.iter().map(|t| ind(o.problem_type == *t) * count));
        }
        rows.push(row);
        y.push(ind(o.correct));
    }
    Design { names, rows, y }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TermSummary {
    pub term: String,
    pub coef: f64,
    pub se: f64,
    pub odds_ratio: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub z: f64,
    pub p_value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegressionSummary {
    pub model: String,
    pub terms: Vec<TermSummary>,
    pub log_likelihood: f64,
    pub n_observations: usize,
    pub tjur_r2: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Problem types left out because they predict the outcome perfectly.
    #[serde(default)]
    pub omitted: Vec<OmittedType>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OmittedType {
    pub term: String,
    /// Every observation of the type was correct (otherwise every one failed).
    pub correct: bool,
    pub n: usize,
}

/// Two-sided Wald p-value for a z statistic.
pub fn wald_p(z: f64) -> f64 {
    erfc(z.abs() / std::f64::consts::SQRT_2)
}

impl RegressionSummary {
    pub fn from_fit<T: Real>(model: &str, fit: &LogisticFit<T>) -> RegressionSummary {
        let terms = fit
            .names
            .iter()
            .zip(fit.coef.iter().zip(&fit.se))
            .map(|(term, (b, se))| {
                let (b, se) = (b.as_f64(), se.as_f64());
                let z = b / se;
                TermSummary {
                    term: term.clone(),
                    coef: b,
                    se,
                    odds_ratio: b.exp(),
                    ci_low: (b - Z95 * se).exp(),
                    ci_high: (b + Z95 * se).exp(),
                    z,
                    p_value: wald_p(z),
                }
            })
            .collect();
        RegressionSummary {
            model: model.to_string(),
            terms,
            log_likelihood: fit.log_likelihood.as_f64(),
            n_observations: fit.n,
            tjur_r2: fit.tjur_r2.as_f64(),
            iterations: fit.iterations,
            converged: fit.converged,
            omitted: Vec::new(),
        }
    }

    pub fn term(&self, name: &str) -> Option<&TermSummary> {
        self.terms.iter().find(|t| t.term == name)
    }

    /// The treatment-condition term, if the model has one.
    pub fn condition(&self) -> Option<&TermSummary> {
        self.terms.iter().find(|t| t.term.starts_with("Condition"))
    }

    /// Table laid out like a published odds-ratio table.
    pub fn to_text(&self) -> String {
        let width = self
            .terms
            .iter()
            .map(|t| t.term.chars().count())
            .max()
            .unwrap_or(4)
            .max(4);
        let mut s = String::new();
        let _ = writeln!(s, "{}", self.model);
        let _ = writeln!(s, "{:<width$}  {:>24}  {:>8}", "Term", "Odds Ratio [95% CI]", "p");
        for t in &self.terms {
            let star = if t.p_value < 0.05 { "*" } else { " " };
            let or = format!("{:.2} [{:.2}, {:.2}]{}", t.odds_ratio, t.ci_low, t.ci_high, star);
            let pad = width - t.term.chars().count();
            let _ = writeln!(s, "{}{}  {:>24}  {:>8.4}", t.term, " ".repeat(pad), or, t.p_value);
        }
        let _ = writeln!(s, "N = {}", self.n_observations);
        let _ = writeln!(s, "Log-likelihood = {:.3}", self.log_likelihood);
        let _ = writeln!(s, "Tjur R2 = {:.3}", self.tjur_r2);
        for o in &self.omitted {
            let what = if o.correct { "success" } else { "failure" };
            let _ = writeln!(
                s,
                "note: {} predicts {} perfectly; its {} observations are omitted",
                o.term, what, o.n
            );
        }
        if !self.converged {
            let _ = writeln!(
                s,
                "warning: stopped after {} iterations without converging",
                self.iterations
            );
        }
        s
    }

    /// One record per term, prefixed with the model name.
    pub fn write_csv<W: Write>(summaries: &[RegressionSummary], out: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "model",
            "term",
            "coef",
            "se",
            "odds_ratio",
            "ci_low",
            "ci_high",
            "z",
            "p_value",
            "n",
            "tjur_r2",
        ])?;
        for s in summaries {
            for t in &s.terms {
                w.write_record([
                    s.model.clone(),
                    t.term.clone(),
                    t.coef.to_string(),
                    t.se.to_string(),
                    t.odds_ratio.to_string(),
                    t.ci_low.to_string(),
                    t.ci_high.to_string(),
                    t.z.to_string(),
                    t.p_value.to_string(),
                    s.n_observations.to_string(),
                    s.tjur_r2.to_string(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

fn fit_summary<T: Real + RealField>(
    model: &str,
    obs: &[ProblemObservation],
    study: Study,
    formula: Formula,
) -> Result<RegressionSummary, RegressionError> {
    let (kept, omitted) = if formula.problem_type {
        omit_determined_types(obs)
    } else {
        (obs.to_vec(), Vec::new())
    };
    let design = design_matrix::<T>(&kept, study, formula);
    let fit = fit_logistic(&design, &IrlsOptions::default())?;
    let mut summary = RegressionSummary::from_fit(model, &fit);
    summary.omitted = omitted;
    Ok(summary)
}

/// Splits off problem types whose outcomes are all identical. Their type
/// coefficient has no finite estimate, and at the limit those rows add
/// nothing to the likelihood of the other terms, so they are left out of
/// the fit and reported instead. At least one type is always kept.
pub fn omit_determined_types(obs: &[ProblemObservation]) -> (Vec<ProblemObservation>, Vec<OmittedType>) {
    let mut outcomes: BTreeMap<ProblemType, (usize, usize)> = BTreeMap::new();
    for o in obs {
        let c = outcomes.entry(o.problem_type).or_default();
        c.0 += usize::from(o.correct);
        c.1 += 1;
    }
    let mut dropped: Vec<ProblemType> = outcomes
        .iter()
        .filter(|(_, (k, n))| *k == 0 || k == n)
        .map(|(t, _)| *t)
        .collect();
    if dropped.len() == outcomes.len() {
        dropped.clear();
    }
    let omitted = dropped
        .iter()
        .map(|t| {
            let (k, n) = outcomes[t];
            OmittedType {
                term: format!("Type: {}", type_label(*t)),
                correct: k == n,
                n,
            }
        })
        .collect();
    let kept = obs
        .iter()
        .filter(|o| !dropped.contains(&o.problem_type))
        .cloned()
        .collect();
    (kept, omitted)
}

/// Problem observations a study's analysis scores in `phase`.
pub fn scored(log: &TransactionLog, study: Study, phase: Phase) -> Vec<ProblemObservation> {
    let obs = log.problems().into_iter().filter(|o| o.phase == phase);
    match study {
        Study::Fractions => obs.collect(),
        Study::BoxArrows => obs.filter(|o| o.problem_type == ProblemType::BoxHard).collect(),
    }
}

/// Fixed-effects model of tutor-phase correctness. Fractions use condition,
/// type, count, and type by count; box-and-arrows scores hard problems with
/// condition and count.
pub fn tutor_effect(log: &TransactionLog, study: Study) -> Result<RegressionSummary, RegressionError> {
    let obs = scored(log, study, Phase::Tutor);
    match study {
        Study::Fractions => fit_summary::<f64>("tutor", &obs, study, Formula::TUTOR),
        Study::BoxArrows => fit_summary::<f64>("tutor (hard problems)", &obs, study, Formula::CONDITION_COUNT),
    }
}

/// Model of assessment correctness without count. Fractions use the
/// posttest with condition and type; box-and-arrows, which has no
/// posttest, uses hard tutor problems with condition alone.
pub fn posttest_effect(log: &TransactionLog, study: Study) -> Result<RegressionSummary, RegressionError> {
    match study {
        Study::Fractions => fit_summary::<f64>(
            "posttest",
            &scored(log, study, Phase::Posttest),
            study,
            Formula::POSTTEST,
        ),
        Study::BoxArrows => fit_summary::<f64>(
            "hard problems",
            &scored(log, study, Phase::Tutor),
            study,
            Formula::CONDITION_ONLY,
        ),
    }
}

/// Accuracy of scored problems per condition and phase.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AccuracyRow {
    pub condition: Condition,
    pub phase: Phase,
    pub n: usize,
    pub accuracy: f64,
}

pub fn accuracy_table(log: &TransactionLog, study: Study) -> Vec<AccuracyRow> {
    let mut cells: BTreeMap<(Condition, Phase), (usize, usize)> = BTreeMap::new();
    for phase in [Phase::Pretrain, Phase::Tutor, Phase::Posttest] {
        let obs = match (study, phase) {
            (Study::BoxArrows, Phase::Pretrain) => continue,
            _ => scored(log, study, phase),
        };
        for o in obs {
            let c = cells.entry((o.condition, phase)).or_default();
            c.0 += usize::from(o.correct);
            c.1 += 1;
        }
    }
    cells
        .into_iter()
        .map(|((condition, phase), (k, n))| AccuracyRow {
            condition,
            phase,
            n,
            accuracy: k as f64 / n as f64,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agent::StepOutcome;
    use crate::experiment::TrialRecord;

    fn record(agent: usize, cond: Condition, pos: usize, correct: bool) -> TrialRecord {
        TrialRecord {
            agent_id: agent,
            replication: 0,
            condition: cond,
            phase: Phase::Tutor,
            problem_id: crate::experiment::problem_id(Phase::Tutor, pos),
            problem_type: ProblemType::AddSame,
            opportunity: pos - 1,
            step_id: "answer_num".into(),
            outcome: if correct {
                StepOutcome::Correct
            } else {
                StepOutcome::Error
            },
            problem_correct: correct,
        }
    }

    #[test]
    fn hand_built_three_agent_curve() {
        // Agents 0 and 1 blocked, agent 2 interleaved; two positions.
        let log = TransactionLog {
            records: vec![
                record(0, Condition::Blocked, 1, false),
                record(0, Condition::Blocked, 2, true),
                record(1, Condition::Blocked, 1, false),
                record(1, Condition::Blocked, 2, false),
                record(2, Condition::Interleaved, 1, true),
                record(2, Condition::Interleaved, 2, false),
            ],
        };
        let c = learning_curve(&log, Phase::Tutor, CurveAxis::Position, Interval::Normal);
        let got: Vec<(Condition, usize, f64, usize)> =
            c.iter().map(|p| (p.condition, p.position, p.mean_error, p.n)).collect();
        assert_eq!(
            got,
            vec![
                (Condition::Blocked, 1, 1.0, 2),
                (Condition::Blocked, 2, 0.5, 2),
                (Condition::Interleaved, 1, 0.0, 1),
                (Condition::Interleaved, 2, 1.0, 1),
            ]
        );
        // p = 0.5, n = 2: half-width 1.96 * 0.3536 = 0.693, clipped to [0, 1].
        assert_eq!((c[1].ci_low, c[1].ci_high), (0.0, 1.0));
    }

    #[test]
    fn wilson_interval_brackets_the_mean() {
        for n in 1..30 {
            for k in 0..=n {
                let p = k as f64 / n as f64;
                let (lo, hi) = proportion_ci(p, n, Interval::Wilson);
                assert!(lo <= p && p <= hi);
            }
        }
        // Reference value: 8/10 -> [0.490, 0.943].
        let (lo, hi) = proportion_ci(0.8, 10, Interval::Wilson);
        assert!((lo - 0.4902).abs() < 1e-3 && (hi - 0.9433).abs() < 1e-3);
    }

    #[test]
    fn wald_p_matches_normal_tail() {
        assert!((wald_p(1.959_963_984_540_054) - 0.05).abs() < 1e-9);
        assert!((wald_p(0.0) - 1.0).abs() < 1e-15);
    }
}
