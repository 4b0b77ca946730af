//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits nonzero if any fails.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::BufReader;
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tutorsim::analytics::{
    fit_logistic, gradient, learning_curve, log_likelihood, posttest_effect, tutor_effect, CurveAxis, CurvePoint,
    Design, Interval, IrlsOptions,
};
use tutorsim::experiment::{Condition, Phase, Study, TransactionLog};
use tutorsim::tutor::{gen_box_problem, BoxGenConfig, Constraint, Difficulty};
use tutorsim::wm::{FieldState, TutorKind};
use tutorsim::{explain, Expr, Operator, Rational, Role, Sai, SearchConfig, Token, WorkingMemory};

const SEED: &str = "7";
const REPS_REQUIRED: usize = 9;

struct Report {
    failed: usize,
}

impl Report {
    fn line(&mut self, n: usize, ok: bool, detail: String) {
        if !ok {
            self.failed += 1;
        }
        println!("criterion {n}: {} - {detail}", if ok { "PASS" } else { "FAIL" });
    }
}

fn run(study: &str, jobs: &str, out: &Path) -> Duration {
    let started = Instant::now();
    let status = Command::new(env!("CARGO_BIN_EXE_tutorsim"))
        .args(["run", study, "--seed", SEED, "--jobs", jobs, "--out"])
        .arg(out)
        .stdout(std::process::Stdio::null())
        .status()
        .expect("tutorsim runs");
    assert!(status.success(), "tutorsim run {study} failed");
    started.elapsed()
}

fn read_log(dir: &Path) -> TransactionLog {
    TransactionLog::read_csv(BufReader::new(File::open(dir.join("transactions.csv")).unwrap())).unwrap()
}

fn at(curve: &[CurvePoint], condition: Condition, position: usize) -> f64 {
    curve
        .iter()
        .find(|p| p.condition == condition && p.position == position)
        .map_or(f64::NAN, |p| p.mean_error)
}

fn criterion_1(r: &mut Report, log: &TransactionLog, elapsed: Duration) {
    let reps = log.replications();
    let (mut tutor_ok, mut post_ok, mut both) = (0, 0, 0);
    for &rep in &reps {
        let part = log.replication(rep);
        let t = tutor_effect(&part, Study::Fractions)
            .ok()
            .and_then(|s| s.condition().cloned())
            .is_some_and(|c| c.odds_ratio < 1.0 && c.p_value < 0.05);
        let p = posttest_effect(&part, Study::Fractions)
            .ok()
            .and_then(|s| s.condition().cloned())
            .is_some_and(|c| c.odds_ratio > 1.0 && c.p_value < 0.05);
        tutor_ok += usize::from(t);
        post_ok += usize::from(p);
        both += usize::from(t && p);
    }
    let fast = elapsed < Duration::from_secs(120);
    r.line(
        1,
        both >= REPS_REQUIRED && fast,
        format!(
            "fractions: tutor OR<1 p<.05 in {tutor_ok}/{n}, posttest OR>1 p<.05 in {post_ok}/{n}, both in {both}/{n} (need {REPS_REQUIRED}); run took {:.1}s (limit 120s)",
            elapsed.as_secs_f64(),
            n = reps.len()
        ),
    );
}

fn criterion_2(r: &mut Report, curve: &[CurvePoint]) {
    let (b, i) = (at(curve, Condition::Blocked, 1), at(curve, Condition::Interleaved, 1));
    r.line(
        2,
        b == 1.0 && i == 1.0,
        format!("problem-1 mean error blocked {b}, interleaved {i} (need exactly 1.0)"),
    );
}

fn criterion_3(r: &mut Report, log: &TransactionLog, curve: &[CurvePoint]) {
    let reps = log.replications();
    let mut rising = 0;
    for &rep in &reps {
        let c = learning_curve(
            &log.replication(rep),
            Phase::Tutor,
            CurveAxis::Position,
            Interval::Normal,
        );
        let e = |pos| at(&c, Condition::Blocked, pos);
        rising += usize::from(e(11) > e(10) && e(25) > e(24));
    }
    let last = curve
        .iter()
        .filter(|p| p.condition == Condition::Blocked)
        .map(|p| p.position)
        .max()
        .unwrap_or(0);
    let tail: Vec<f64> = (last.saturating_sub(4)..=last)
        .map(|pos| at(curve, Condition::Blocked, pos))
        .collect();
    let asymptote = tail.iter().sum::<f64>() / tail.len() as f64;
    r.line(
        3,
        rising >= REPS_REQUIRED && asymptote <= 0.15,
        format!(
            "blocked error rises at positions 11 and 25 in {rising}/{} replications (need {REPS_REQUIRED}); last-5 mean error {asymptote:.3} (limit 0.15)",
            reps.len()
        ),
    );
}

fn criterion_4(r: &mut Report, log: &TransactionLog) {
    let hard = log.hard_only().problems();
    let accuracy = |c: Condition| {
        let of: Vec<_> = hard
            .iter()
            .filter(|o| o.condition == c && o.phase == Phase::Tutor)
            .collect();
        100.0 * of.iter().filter(|o| o.correct).count() as f64 / of.len() as f64
    };
    let (con, unc) = (accuracy(Condition::Constrained), accuracy(Condition::Unconstrained));
    let reps = log.replications();
    let sig = reps
        .iter()
        .filter(|&&rep| {
            posttest_effect(&log.replication(rep), Study::BoxArrows)
                .ok()
                .and_then(|s| s.condition().cloned())
                .is_some_and(|c| c.odds_ratio < 1.0 && c.p_value < 0.05)
        })
        .count();
    let ok = (con - 19.6).abs() <= 7.0 && (unc - 10.0).abs() <= 7.0 && sig >= REPS_REQUIRED;
    r.line(
        4,
        ok,
        format!(
            "hard accuracy constrained {con:.1}% (19.6 ± 7), unconstrained {unc:.1}% (10.0 ± 7); constrained better at p<.05 in {sig}/{} (need {REPS_REQUIRED})",
            reps.len()
        ),
    );
}

/// Candidates by direct integer enumeration: copies, then each primitive
/// over distinct visible numbers with commutative pairs counted once.
fn ambiguity(visible: &[i64], answer: i64) -> usize {
    let mut count = visible.iter().filter(|v| **v == answer).count();
    for i in 0..visible.len() {
        for j in 0..visible.len() {
            if i == j {
                continue;
            }
            let (a, b) = (visible[i], visible[j]);
            if i < j {
                count += usize::from(a + b == answer) + usize::from(a * b == answer);
            }
            count += usize::from(a - b == answer) + usize::from(a == answer * b);
        }
    }
    count
}

fn criterion_5(r: &mut Report) {
    let cfg = BoxGenConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let mut bad = BTreeMap::from([("constrained", 0), ("unconstrained", 0)]);
    for constraint in [Constraint::Constrained, Constraint::Unconstrained] {
        for i in 0..1000 {
            let s = gen_box_problem(Difficulty::Hard, constraint, &format!("a{i}"), &cfg, &mut rng).unwrap();
            let ints = |t: &Token| t.as_number().map(|v| *v.numer());
            let visible: Vec<i64> = s.givens.values().filter_map(ints).collect();
            let answer = ints(s.steps[0].value.as_ref().unwrap()).unwrap();
            let k = ambiguity(&visible, answer);
            let ok = match constraint {
                Constraint::Constrained => k == 1,
                Constraint::Unconstrained => k >= 2,
            };
            if !ok {
                *bad.get_mut(constraint.name()).unwrap() += 1;
            }
        }
    }
    let reference = ambiguity(&[7, 3, 2, 2], 4);
    r.line(
        5,
        bad.values().all(|b| *b == 0) && reference == 3,
        format!(
            "oracle disagreements: constrained {}/1000, unconstrained {}/1000; {{7,3,2,2}} -> 4 has {reference} candidates (need 3)",
            bad["constrained"], bad["unconstrained"]
        ),
    );
}

fn value_of(e: &Expr, env: &BTreeMap<Role, i64>) -> Option<Rational> {
    match e {
        Expr::Field(r) => env.get(r).map(|v| Rational::from_integer(*v)),
        Expr::Const(c) => Some(*c),
        Expr::Apply(op, l, r) => {
            let (a, b) = (value_of(l, env)?, value_of(r, env)?);
            match op {
                Operator::Add => Some(a + b),
                Operator::Subtract => Some(a - b),
                Operator::Multiply => Some(a * b),
                Operator::Divide => (b != Rational::from_integer(0)).then(|| a / b),
            }
        }
    }
}

/// All trees of depth at most 2 over distinct fields, by depth.
fn all_trees(roles: &[Role]) -> Vec<Vec<(Expr, Vec<Role>)>> {
    let d0: Vec<(Expr, Vec<Role>)> = roles.iter().map(|r| (Expr::Field(*r), vec![*r])).collect();
    let combine = |ls: &[(Expr, Vec<Role>)], rs: &[(Expr, Vec<Role>)]| {
        let mut out = Vec::new();
        for op in Operator::ALL {
            for (le, lr) in ls {
                for (re, rr) in rs {
                    if lr.iter().any(|x| rr.contains(x)) {
                        continue;
                    }
                    out.push((
                        Expr::apply(op, le.clone(), re.clone()),
                        [lr.clone(), rr.clone()].concat(),
                    ));
                }
            }
        }
        out
    };
    let d1 = combine(&d0, &d0);
    let mut d2 = combine(&d1, &d0);
    d2.extend(combine(&d0, &d1));
    d2.extend(combine(&d1, &d1));
    vec![d0, d1, d2]
}

fn criterion_6(r: &mut Report) {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let pool = [Role::Num1, Role::Den1, Role::Num2, Role::Den2];
    let mut discrepancies = 0;
    for _ in 0..100 {
        let n = rng.gen_range(2..=4);
        let env: BTreeMap<Role, i64> = pool[..n].iter().map(|r| (*r, rng.gen_range(1..=12))).collect();
        let target = Rational::from_integer(rng.gen_range(1..=60));
        let mut fields: BTreeMap<Role, FieldState> = env
            .iter()
            .map(|(r, v)| {
                (
                    *r,
                    FieldState {
                        value: Some(Token::int(*v)),
                        role: *r,
                        editable: false,
                    },
                )
            })
            .collect();
        fields.insert(
            Role::AnswerNum,
            FieldState {
                value: None,
                role: Role::AnswerNum,
                editable: true,
            },
        );
        let wm = WorkingMemory {
            tutor: TutorKind::Fractions,
            fields,
        };
        let found: std::collections::BTreeSet<Expr> = explain(
            &wm,
            &Sai::input_value(Role::AnswerNum, Token::Number(target)),
            &SearchConfig::default(),
        )
        .iter()
        .filter_map(|p| p.expr().map(Expr::normalize))
        .collect();
        let roles: Vec<Role> = env.keys().copied().collect();
        let expected: std::collections::BTreeSet<Expr> = all_trees(&roles)
            .into_iter()
            .map(|level| {
                level
                    .into_iter()
                    .filter(|(e, _)| value_of(e, &env) == Some(target))
                    .map(|(e, _)| e.normalize())
                    .collect::<std::collections::BTreeSet<Expr>>()
            })
            .find(|hits| !hits.is_empty())
            .unwrap_or_else(|| [Expr::Const(target)].into());
        discrepancies += usize::from(found != expected);
    }
    r.line(
        6,
        discrepancies == 0,
        format!("{discrepancies} discrepancies between explain and brute force over 100 random states"),
    );
}

fn criterion_7(r: &mut Report) {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let (b0, b1) = (-1.0, 0.5);
    let mut design = Design {
        names: vec!["Intercept".into(), "x".into()],
        rows: Vec::new(),
        y: Vec::new(),
    };
    for _ in 0..50_000 {
        let x: f64 = rng.gen_range(-2.0..2.0);
        let p = 1.0 / (1.0 + (-(b0 + b1 * x)).exp());
        design.rows.push(vec![1.0, x]);
        design.y.push(f64::from(u8::from(rng.gen::<f64>() < p)));
    }
    let fit = fit_logistic(&design, &IrlsOptions::default()).unwrap();
    let coef_err = (fit.coef[0] - b0).abs().max((fit.coef[1] - b1).abs());
    let grad = fit.gradient.iter().fold(0.0f64, |m, g| m.max(g.abs()));
    let monotone = fit.trace.windows(2).all(|w| w[1] >= w[0]);

    let mut fd_err = 0.0f64;
    for _ in 0..20 {
        let rows: Vec<Vec<f64>> = (0..30)
            .map(|_| vec![1.0, rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)])
            .collect();
        let y: Vec<f64> = (0..30).map(|_| f64::from(u8::from(rng.gen_bool(0.5)))).collect();
        let d = Design {
            names: vec!["a".into(), "b".into(), "c".into()],
            rows,
            y,
        };
        let beta: Vec<f64> = (0..3).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let g = gradient(&d, &beta);
        for k in 0..3 {
            let (mut up, mut down) = (beta.clone(), beta.clone());
            up[k] += 1e-5;
            down[k] -= 1e-5;
            let fd = (log_likelihood(&d, &up) - log_likelihood(&d, &down)) / 2e-5;
            fd_err = fd_err.max((fd - g[k]).abs() / g[k].abs().max(1.0));
        }
    }
    r.line(
        7,
        coef_err <= 0.05 && grad < 1e-6 && fd_err < 1e-6 && monotone,
        format!(
            "max coefficient error {coef_err:.4} (limit 0.05); gradient max-norm {grad:.2e} (limit 1e-6); finite-difference rel. error {fd_err:.2e} (limit 1e-6); log-likelihood monotone: {monotone}"
        ),
    );
}

fn main() -> ExitCode {
    let tmp = tempfile::tempdir().expect("temp dir");
    let mut r = Report { failed: 0 };

    let fractions = tmp.path().join("fractions-j1");
    let elapsed = run("fractions", "1", &fractions);
    let log = read_log(&fractions);
    let curve = learning_curve(&log, Phase::Tutor, CurveAxis::Position, Interval::Normal);
    criterion_1(&mut r, &log, elapsed);
    criterion_2(&mut r, &curve);
    criterion_3(&mut r, &log, &curve);

    let boxes = tmp.path().join("box");
    run("box-arrows", "8", &boxes);
    criterion_4(&mut r, &read_log(&boxes));

    criterion_5(&mut r);
    criterion_6(&mut r);
    criterion_7(&mut r);

    let parallel = tmp.path().join("fractions-j8");
    run("fractions", "8", &parallel);
    let same =
        fs::read(fractions.join("transactions.csv")).unwrap() == fs::read(parallel.join("transactions.csv")).unwrap();
    r.line(
        8,
        same,
        format!("transactions.csv from --jobs 1 and --jobs 8 byte-identical: {same}"),
    );

    if r.failed == 0 {
        println!("acceptance: all criteria pass");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: {} criteria failed", r.failed);
        ExitCode::FAILURE
    }
}
