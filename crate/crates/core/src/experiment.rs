//! Population experiments: condition assignment, curriculum sequencing,
//! training and posttest runs, and the transaction log they produce.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{BufRead, Read, Write};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::{Agent, AgentConfig, AgentError, StepOutcome};
use crate::tutor::{
    gen_box_problem, gen_fraction_problem, BoxGenConfig, Constraint, Difficulty, FractionRanges, GenerationError,
    ProblemScript, ProblemType, SessionMode, TutorSession,
};

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Study {
    Fractions,
    BoxArrows,
}

impl Study {
    pub fn name(self) -> &'static str {
        match self {
            Study::Fractions => "fractions",
            Study::BoxArrows => "box_arrows",
        }
    }
}

impl FromStr for Study {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "fractions" => Ok(Study::Fractions),
            "box_arrows" | "box-arrows" => Ok(Study::BoxArrows),
            _ => Err(format!("unknown study `{s}` (expected fractions or box-arrows)")),
        }
    }
}

impl fmt::Display for Study {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.name())
    }
}

/// Instructional condition an agent is assigned to.
#[derive(Copy, Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    Blocked,
    Interleaved,
    Constrained,
    Unconstrained,
}

impl Condition {
    pub fn name(self) -> &'static str {
        match self {
            Condition::Blocked => "blocked",
            Condition::Interleaved => "interleaved",
            Condition::Constrained => "constrained",
            Condition::Unconstrained => "unconstrained",
        }
    }

    /// Display label used in regression term names.
    pub fn label(self) -> &'static str {
        match self {
            Condition::Blocked => "Blocked",
            Condition::Interleaved => "Interleaved",
            Condition::Constrained => "Constrained",
            Condition::Unconstrained => "Unconstrained",
        }
    }

    /// The (reference, treatment) pair of a study.
    pub fn pair(study: Study) -> (Condition, Condition) {
        match study {
            Study::Fractions => (Condition::Blocked, Condition::Interleaved),
            Study::BoxArrows => (Condition::Constrained, Condition::Unconstrained),
        }
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.name())
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    /// Easy-problem pretraining for half of the box-and-arrows agents.
    Pretrain,
    Tutor,
    Posttest,
}

impl Phase {
    pub fn name(self) -> &'static str {
        match self {
            Phase::Pretrain => "pretrain",
            Phase::Tutor => "tutor",
            Phase::Posttest => "posttest",
        }
    }

    fn letter(self) -> char {
        match self {
            Phase::Pretrain => 'P',
            Phase::Tutor => 'T',
            Phase::Posttest => 'X',
        }
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.name())
    }
}

/// Problem id for the 1-based `position` within `phase`, e.g. `T007`.
pub fn problem_id(phase: Phase, position: usize) -> String {
    format!("{}{:03}", phase.letter(), position)
}

/// Recovers the phase and 1-based position from a problem id.
pub fn parse_problem_id(id: &str) -> Option<(Phase, usize)> {
    let mut chars = id.chars();
    let phase = match chars.next()? {
        'P' => Phase::Pretrain,
        'T' => Phase::Tutor,
        'X' => Phase::Posttest,
        _ => return None,
    };
    let pos = chars.as_str().parse().ok()?;
    Some((phase, pos))
}

/// Problems per fraction type.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct FractionCounts {
    pub add_same: usize,
    pub add_diff: usize,
    pub multiply: usize,
}

impl Default for FractionCounts {
    fn default() -> Self {
        FractionCounts {
            add_same: 10,
            add_diff: 14,
            multiply: 24,
        }
    }
}

impl FractionCounts {
    pub fn total(&self) -> usize {
        self.add_same + self.add_diff + self.multiply
    }

    /// Types in block order, each repeated by its count.
    fn blocks(&self) -> Vec<ProblemType> {
        let mut out = vec![ProblemType::AddSame; self.add_same];
        out.extend(vec![ProblemType::AddDiff; self.add_diff]);
        out.extend(vec![ProblemType::Multiply; self.multiply]);
        out
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct FractionsSpec {
    pub training: FractionCounts,
    pub posttest: FractionCounts,
    pub ranges: FractionRanges,
}

impl Default for FractionsSpec {
    fn default() -> Self {
        FractionsSpec {
            training: FractionCounts::default(),
            posttest: FractionCounts {
                add_same: 2,
                add_diff: 2,
                multiply: 4,
            },
            ranges: FractionRanges::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct BoxSpec {
    pub easy: usize,
    pub hard: usize,
    /// Easy problems given to the pretraining arm before the main sequence.
    pub pretrain_easy: usize,
    /// Score hard problems only.
    pub hard_only: bool,
    pub generator: BoxGenConfig,
}

impl Default for BoxSpec {
    fn default() -> Self {
        BoxSpec {
            easy: 16,
            hard: 16,
            pretrain_easy: 16,
            hard_only: true,
            generator: BoxGenConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub study: Study,
    pub n_agents: usize,
    pub replications: usize,
    pub seed: u64,
    #[serde(default)]
    pub agent: AgentConfig,
    #[serde(default)]
    pub fractions: FractionsSpec,
    #[serde(default)]
    pub box_arrows: BoxSpec,
}

impl ExperimentConfig {
    /// The published recipe for a study.
    pub fn recipe(study: Study) -> ExperimentConfig {
        ExperimentConfig {
            study,
            n_agents: match study {
                Study::Fractions => 78,
                Study::BoxArrows => 202,
            },
            replications: 10,
            seed: 0,
            agent: AgentConfig::default(),
            fractions: FractionsSpec::default(),
            box_arrows: BoxSpec::default(),
        }
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        let bad = |m: &str| Err(ExperimentError::Config(m.to_string()));
        if self.n_agents == 0 {
            return bad("n_agents must be at least 1");
        }
        if self.replications == 0 {
            return bad("replications must be at least 1");
        }
        if self.agent.search.max_depth > 4 {
            return bad("search.max_depth above 4 is not supported");
        }
        match self.study {
            Study::Fractions => {
                if self.fractions.training.total() == 0 {
                    return bad("fractions curriculum is empty");
                }
                let (nlo, nhi) = self.fractions.ranges.numerator;
                let (dlo, dhi) = self.fractions.ranges.denominator;
                if nlo > nhi || dlo > dhi || dlo < 1 {
                    return bad("fraction operand ranges are empty or include zero denominators");
                }
            }
            Study::BoxArrows => {
                if self.box_arrows.easy + self.box_arrows.hard == 0 {
                    return bad("box-and-arrows curriculum is empty");
                }
                let (lo, hi) = self.box_arrows.generator.operand;
                if lo < 1 || lo > hi {
                    return bad("box operand range must be positive and non-empty");
                }
                if self.box_arrows.generator.positions.is_empty() {
                    return bad("box generator needs at least one box position");
                }
            }
        }
        Ok(())
    }

    /// Condition and pretraining arm for the agent at `index`. Fractions
    /// alternate conditions; box-and-arrows crosses constraint with
    /// pretraining in a balanced 2x2.
    pub fn assignment(&self, index: usize) -> (Condition, bool) {
        let (reference, treatment) = Condition::pair(self.study);
        let condition = if index.is_multiple_of(2) { reference } else { treatment };
        let pretrain = self.study == Study::BoxArrows && self.box_arrows.pretrain_easy > 0 && (index / 2) % 2 == 1;
        (condition, pretrain)
    }
}

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("replication {replication}, agent {agent_id}: {source}")]
    Generation {
        replication: usize,
        agent_id: usize,
        source: GenerationError,
    },
    #[error("replication {replication}, agent {agent_id}, problem {problem_id}: {source}")]
    Agent {
        replication: usize,
        agent_id: usize,
        problem_id: String,
        source: AgentError,
    },
    #[error("problem set: {0}")]
    ProblemSet(String),
}

/// Ordered problem list for one block-structured or shuffled fractions
/// curriculum.
pub fn sequence_fractions<R: rand::Rng + ?Sized>(
    condition: Condition,
    counts: &FractionCounts,
    rng: &mut R,
) -> Vec<ProblemType> {
    let mut types = counts.blocks();
    // Blocked types are already in block order; only the operands (drawn
    // later) vary within a block.
    if condition == Condition::Interleaved {
        types.shuffle(rng);
    }
    types
}

/// One scheduled problem.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlannedProblem {
    pub replication: usize,
    pub agent_id: usize,
    pub condition: Condition,
    pub phase: Phase,
    #[serde(flatten)]
    pub script: ProblemScript,
}

/// Everything one agent will see, in order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AgentPlan {
    pub replication: usize,
    pub agent_id: usize,
    pub condition: Condition,
    pub problems: Vec<PlannedProblem>,
}

fn agent_rng(seed: u64, replication: usize, agent_id: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(replication as u64));
    rng.set_stream(agent_id as u64);
    rng
}

/// Generates every agent's problems. Each agent draws from its own seeded
/// stream, so plans do not depend on generation order.
pub fn plan_study(cfg: &ExperimentConfig) -> Result<Vec<AgentPlan>, ExperimentError> {
    cfg.validate()?;
    let mut plans = Vec::with_capacity(cfg.replications * cfg.n_agents);
    for replication in 0..cfg.replications {
        for agent_id in 0..cfg.n_agents {
            let gen_err = |source| ExperimentError::Generation {
                replication,
                agent_id,
                source,
            };
            let (condition, pretrain) = cfg.assignment(agent_id);
            let mut rng = agent_rng(cfg.seed, replication, agent_id);
            let mut scripts: Vec<(Phase, ProblemScript)> = Vec::new();
            match cfg.study {
                Study::Fractions => {
                    let spec = &cfg.fractions;
                    for (i, ty) in sequence_fractions(condition, &spec.training, &mut rng)
                        .into_iter()
                        .enumerate()
                    {
                        let id = problem_id(Phase::Tutor, i + 1);
                        scripts.push((
                            Phase::Tutor,
                            gen_fraction_problem(ty, &id, &spec.ranges, &mut rng).map_err(gen_err)?,
                        ));
                    }
                    let mut post = spec.posttest.blocks();
                    post.shuffle(&mut rng);
                    for (i, ty) in post.into_iter().enumerate() {
                        let id = problem_id(Phase::Posttest, i + 1);
                        scripts.push((
                            Phase::Posttest,
                            gen_fraction_problem(ty, &id, &spec.ranges, &mut rng).map_err(gen_err)?,
                        ));
                    }
                }
                Study::BoxArrows => {
                    let spec = &cfg.box_arrows;
                    let constraint = match condition {
                        Condition::Unconstrained => Constraint::Unconstrained,
                        _ => Constraint::Constrained,
                    };
                    if pretrain {
                        for i in 0..spec.pretrain_easy {
                            let id = problem_id(Phase::Pretrain, i + 1);
                            let s = gen_box_problem(Difficulty::Easy, constraint, &id, &spec.generator, &mut rng)
                                .map_err(gen_err)?;
                            scripts.push((Phase::Pretrain, s));
                        }
                    }
                    let mut kinds = vec![Difficulty::Easy; spec.easy];
                    kinds.extend(vec![Difficulty::Hard; spec.hard]);
                    kinds.shuffle(&mut rng);
                    for (i, d) in kinds.into_iter().enumerate() {
                        let id = problem_id(Phase::Tutor, i + 1);
                        let s = gen_box_problem(d, constraint, &id, &spec.generator, &mut rng).map_err(gen_err)?;
                        scripts.push((Phase::Tutor, s));
                    }
                }
            }
            let problems = scripts
                .into_iter()
                .map(|(phase, script)| PlannedProblem {
                    replication,
                    agent_id,
                    condition,
                    phase,
                    script,
                })
                .collect();
            plans.push(AgentPlan {
                replication,
                agent_id,
                condition,
                problems,
            });
        }
    }
    Ok(plans)
}

/// One transaction: a step outcome with its problem context.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub agent_id: usize,
    pub replication: usize,
    pub condition: Condition,
    pub phase: Phase,
    pub problem_id: String,
    pub problem_type: ProblemType,
    /// Prior problems of the same type seen by this agent.
    pub opportunity: usize,
    pub step_id: String,
    pub outcome: StepOutcome,
    pub problem_correct: bool,
}

/// Column order of the transaction CSV.
pub const LOG_COLUMNS: [&str; 10] = [
    "agent_id",
    "replication",
    "condition",
    "phase",
    "problem_id",
    "problem_type",
    "opportunity",
    "step_id",
    "outcome",
    "problem_correct",
];

/// One problem attempt, collapsed from its transactions.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ProblemObservation {
    pub agent_id: usize,
    pub replication: usize,
    pub condition: Condition,
    pub phase: Phase,
    pub problem_id: String,
    pub problem_type: ProblemType,
    pub opportunity: usize,
    pub correct: bool,
}

#[derive(Debug, Error)]
pub enum LogError {
    #[error("transaction log schema: {0}")]
    Schema(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TransactionLog {
    pub records: Vec<TrialRecord>,
}

impl TransactionLog {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), LogError> {
        let mut w = csv::Writer::from_writer(out);
        for r in &self.records {
            w.serialize(r)?;
        }
        if self.records.is_empty() {
            w.write_record(LOG_COLUMNS)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads a log, rejecting anything whose header or rows do not follow
    /// the documented schema.
    pub fn read_csv<R: Read>(input: R) -> Result<TransactionLog, LogError> {
        let mut rdr = csv::Reader::from_reader(input);
        let headers = rdr.headers()?.clone();
        if headers.iter().ne(LOG_COLUMNS.iter().copied()) {
            return Err(LogError::Schema(format!(
                "expected columns {}, found {}",
                LOG_COLUMNS.join(","),
                headers.iter().collect::<Vec<_>>().join(",")
            )));
        }
        let mut records = Vec::new();
        for (i, row) in rdr.deserialize().enumerate() {
            let r: TrialRecord = row.map_err(|e| LogError::Schema(format!("row {}: {e}", i + 2)))?;
            records.push(r);
        }
        Ok(TransactionLog { records })
    }

    pub fn filter(&self, mut keep: impl FnMut(&TrialRecord) -> bool) -> TransactionLog {
        TransactionLog {
            records: self.records.iter().filter(|r| keep(r)).cloned().collect(),
        }
    }

    pub fn replication(&self, replication: usize) -> TransactionLog {
        self.filter(|r| r.replication == replication)
    }

    /// Rows of hard box problems only.
    pub fn hard_only(&self) -> TransactionLog {
        self.filter(|r| r.problem_type == ProblemType::BoxHard)
    }

    pub fn replications(&self) -> Vec<usize> {
        let mut reps: Vec<usize> = self.records.iter().map(|r| r.replication).collect();
        reps.sort_unstable();
        reps.dedup();
        reps
    }

    /// One observation per problem attempt, in first-appearance order.
    pub fn problems(&self) -> Vec<ProblemObservation> {
        let mut seen: BTreeMap<(usize, usize, Phase, &str), usize> = BTreeMap::new();
        let mut out: Vec<ProblemObservation> = Vec::new();
        for r in &self.records {
            let key = (r.replication, r.agent_id, r.phase, r.problem_id.as_str());
            if seen.contains_key(&key) {
                continue;
            }
            seen.insert(key, out.len());
            out.push(ProblemObservation {
                agent_id: r.agent_id,
                replication: r.replication,
                condition: r.condition,
                phase: r.phase,
                problem_id: r.problem_id.clone(),
                problem_type: r.problem_type,
                opportunity: r.opportunity,
                correct: r.problem_correct,
            });
        }
        out
    }
}

/// Runs planned problems through fresh agents. With `jobs` set, work is
/// spread over that many threads; the log is assembled in plan order
/// regardless.
pub fn run_plans(
    plans: &[AgentPlan],
    agent: &AgentConfig,
    jobs: Option<usize>,
) -> Result<TransactionLog, ExperimentError> {
    let run = || -> Result<Vec<Vec<TrialRecord>>, ExperimentError> {
        plans.par_iter().map(|plan| run_agent(plan, agent)).collect()
    };
    let chunks = match jobs {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| ExperimentError::Config(format!("thread pool: {e}")))?
            .install(run)?,
        None => run()?,
    };
    Ok(TransactionLog {
        records: chunks.into_iter().flatten().collect(),
    })
}

fn run_agent(plan: &AgentPlan, cfg: &AgentConfig) -> Result<Vec<TrialRecord>, ExperimentError> {
    let mut agent = Agent::new(cfg.clone());
    let mut seen: BTreeMap<ProblemType, usize> = BTreeMap::new();
    let mut out = Vec::new();
    for p in &plan.problems {
        let mode = match p.phase {
            Phase::Posttest => SessionMode::Posttest,
            Phase::Pretrain | Phase::Tutor => SessionMode::Training,
        };
        let mut session = TutorSession::new(p.script.clone(), mode);
        let result = agent
            .run_problem(&mut session)
            .map_err(|source| ExperimentError::Agent {
                replication: plan.replication,
                agent_id: plan.agent_id,
                problem_id: p.script.problem_id.clone(),
                source,
            })?;
        let opportunity = seen.entry(p.script.problem_type).or_insert(0);
        for t in &result.transactions {
            out.push(TrialRecord {
                agent_id: plan.agent_id,
                replication: plan.replication,
                condition: plan.condition,
                phase: p.phase,
                problem_id: p.script.problem_id.clone(),
                problem_type: p.script.problem_type,
                opportunity: *opportunity,
                step_id: t.step_id.name().to_string(),
                outcome: t.outcome,
                problem_correct: result.correct,
            });
        }
        *opportunity += 1;
    }
    Ok(out)
}

/// Plans and runs a study.
pub fn run_study(cfg: &ExperimentConfig, jobs: Option<usize>) -> Result<TransactionLog, ExperimentError> {
    let plans = plan_study(cfg)?;
    run_plans(&plans, &cfg.agent, jobs)
}

/// Writes plans as one JSON record per line.
pub fn write_problem_set<W: Write>(plans: &[AgentPlan], mut out: W) -> std::io::Result<()> {
    for plan in plans {
        for p in &plan.problems {
            serde_json::to_writer(&mut out, p)?;
            out.write_all(b"\n")?;
        }
    }
    Ok(())
}

/// Reads plans written by [`write_problem_set`]. Problems are grouped by
/// (replication, agent) in file order.
pub fn read_problem_set<R: BufRead>(input: R) -> Result<Vec<AgentPlan>, ExperimentError> {
    let mut plans: Vec<AgentPlan> = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line.map_err(|e| ExperimentError::ProblemSet(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let p: PlannedProblem =
            serde_json::from_str(&line).map_err(|e| ExperimentError::ProblemSet(format!("line {}: {e}", i + 1)))?;
        match plans.last_mut() {
            Some(plan) if plan.replication == p.replication && plan.agent_id == p.agent_id => {
                if plan.condition != p.condition {
                    return Err(ExperimentError::ProblemSet(format!(
                        "line {}: agent {} changes condition",
                        i + 1,
                        p.agent_id
                    )));
                }
                plan.problems.push(p);
            }
            _ => plans.push(AgentPlan {
                replication: p.replication,
                agent_id: p.agent_id,
                condition: p.condition,
                problems: vec![p],
            }),
        }
    }
    Ok(plans)
}
