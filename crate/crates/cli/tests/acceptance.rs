//! Acceptance checks, one line of output per criterion. Runs under
//! `cargo test` as a plain binary and exits non-zero if any criterion fails
//! for a reason other than an analyzed, documented limitation.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::sync::Arc;
use std::time::{Duration, Instant};

use chrono::{TimeZone, Utc};
use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use sqare_core::graph::{isomorphic, parse_ntriples, parse_turtle, write_ntriples, write_turtle, Graph, Term, Triple};
use sqare_core::harness::{materialize_trials, run_experiment, Cassette, FixedClock, ModelAdapter, ReplayAdapter, RunConfig};
use sqare_core::judge::{answer_facts, answers, judge_graph, validation_iri, ValidityPolicy};
use sqare_core::shapes::{builtin_shapes, strip, validate, ShapeStage, Violation};
use sqare_core::stats::{
    cohens_kappa_ratio, compare, mcnemar_exact_ratio, CiMethod, ContingencyTable, PairedComparison,
};
use sqare_core::studydef::{load_study, ConditionKind};
use sqare_core::vocab::{builtin_registry, emit_tbox, iri, node, standard_prefixes, tbox_turtle};

const GEMINI: &str = "gemini-2.0-flash";
const GPT: &str = "gpt-4o-mini";
const CLOCK: &str = "2025-03-01T12:00:00Z";

/// A failed criterion. `known` marks a failure analyzed as unattainable
/// rather than a regression; it is reported but does not fail the run.
struct Failure {
    message: String,
    known: bool,
}

impl From<String> for Failure {
    fn from(message: String) -> Self {
        Self { message, known: false }
    }
}

impl From<&str> for Failure {
    fn from(message: &str) -> Self {
        message.to_string().into()
    }
}

type Check = Result<String, Failure>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+).into());
        }
    };
}

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures")
}

/// Language, condition, table, p, Δ with CI, κ.
type PublishedRow = (&'static str, ConditionKind, [u64; 4], &'static str, &'static str, &'static str);

const PUBLISHED: [PublishedRow; 8] = [
    ("de", ConditionKind::Complete, [28, 0, 0, 0], "-", "0.0 [0.0, 0.0]", "- (κ undefined)"),
    ("de", ConditionKind::Incomplete, [10, 4, 8, 6], "0.3877", "-14.3 [-37.9, +9.4]", "0.143"),
    ("de", ConditionKind::Conflicting, [2, 0, 1, 25], "-", "-3.6 [-10.4, +3.3]", "0.781"),
    ("de", ConditionKind::NoContext, [24, 2, 2, 0], "-", "0.0 [-14.0, +14.0]", "-0.077"),
    ("en", ConditionKind::Complete, [28, 0, 0, 0], "-", "0.0 [0.0, 0.0]", "- (κ undefined)"),
    ("en", ConditionKind::Incomplete, [27, 1, 0, 0], "-", "+3.6 [-3.3, +10.4]", "0"),
    ("en", ConditionKind::Conflicting, [2, 1, 1, 24], "-", "0.0 [-9.9, +9.9]", "0.627"),
    ("en", ConditionKind::NoContext, [14, 0, 9, 5], "0.0039", "-32.1 [-49.4, -14.8]", "0.357"),
];

fn table([a, b, c, d]: [u64; 4]) -> ContingencyTable {
    ContingencyTable::new(a, b, c, d).expect("non-empty table")
}

/// κ cells compare numerically, since the published zero is printed without decimals.
fn same_kappa(ours: &str, published: &str) -> bool {
    match (ours.parse::<f64>(), published.parse::<f64>()) {
        (Ok(x), Ok(y)) => x == y && ours.len() == 5 + usize::from(ours.starts_with('-')),
        _ => ours == published,
    }
}

fn statistics_reproduction() -> Check {
    let tables: BTreeMap<_, _> = PUBLISHED.iter().map(|(l, c, t, ..)| ((l.to_string(), *c), table(*t))).collect();
    let rows = compare(&tables, CiMethod::PairedWald);
    ensure!(rows.len() == 8, "expected 8 rows, got {}", rows.len());
    for (row, (lang, cond, t, p, delta, kappa)) in rows.iter().zip(PUBLISHED.iter()) {
        ensure!(row.language == *lang && row.condition == *cond, "row order: {} {}", row.language, row.condition);
        let c = &row.comparison;
        ensure!(c.table == table(*t), "{lang} {cond}: table {:?}", c.table);
        ensure!(c.p_display() == *p, "{lang} {cond}: p {} != {p}", c.p_display());
        ensure!(c.delta_display() == *delta, "{lang} {cond}: Δ {} != {delta}", c.delta_display());
        ensure!(same_kappa(&c.kappa_display(), kappa), "{lang} {cond}: κ {} != {kappa}", c.kappa_display());
    }
    Ok("8 rows match p, Δ, CI and κ".into())
}

/// P(X = k) for X ~ Binomial(m, 1/2), exactly, from a Pascal row.
fn pascal_row(m: usize) -> Vec<BigUint> {
    let mut row = vec![BigUint::from(1u32)];
    for _ in 0..m {
        let mut next = vec![BigUint::from(1u32)];
        next.extend(row.windows(2).map(|w| &w[0] + &w[1]));
        next.push(BigUint::from(1u32));
        row = next;
    }
    row
}

/// Two-sided p as the total mass of outcomes no more likely than the observed one.
fn oracle_p(b: usize, c: usize) -> BigRational {
    let m = b + c;
    let row = pascal_row(m);
    let observed = &row[b];
    let mass: BigUint = row.iter().filter(|x| *x <= observed).sum();
    BigRational::new(BigInt::from(mass), BigInt::from(BigUint::from(1u32) << m))
}

fn mcnemar_oracle() -> Check {
    let mut checked = 0;
    for m in 1..=30usize {
        for b in 0..=m {
            let c = m - b;
            let t = ContingencyTable::new(0, b as u64, c as u64, 0).map_err(|e| e.to_string())?;
            let ours = mcnemar_exact_ratio(&t).ok_or_else(|| format!("no p for b={b} c={c}"))?;
            let expected = oracle_p(b, c);
            ensure!(ours == expected, "b={b} c={c}: {ours} != {expected}");
            checked += 1;
        }
    }
    Ok(format!("{checked} tables equal the oracle exactly"))
}

fn stats_properties() -> Check {
    let mut rng = StdRng::seed_from_u64(7);
    let mut checked = 0;
    let mut zero_width_counterexamples = Vec::new();
    // All-discordant one-sided tables first, then uniform random ones.
    let targeted = (1..=10u64).map(|b| [0, b, 0, 0]);
    let random = std::iter::repeat_with(|| [0; 4].map(|_| rng.gen_range(0..40u64)));
    for [a, b, c, d] in targeted.chain(random) {
        if checked == 2000 {
            break;
        }
        let Ok(t) = ContingencyTable::new(a, b, c, d) else { continue };
        for method in [CiMethod::PairedWald, CiMethod::NewcombeHybrid] {
            let x = PairedComparison::compute(t, method);
            let y = PairedComparison::compute(t.swapped(), method);
            let close = |u: f64, v: f64| (u - v).abs() <= 1e-12;
            ensure!(x.p_exact == y.p_exact, "{t:?}: p changes under swap");
            ensure!(cohens_kappa_ratio(&t) == cohens_kappa_ratio(&t.swapped()), "{t:?}: κ changes under swap");
            ensure!(close(x.delta, -y.delta), "{t:?}: Δ does not negate");
            ensure!(close(x.ci_low, -y.ci_high) && close(x.ci_high, -y.ci_low), "{t:?}: CI does not negate");
            ensure!(x.ci_low <= x.delta && x.delta <= x.ci_high, "{t:?} {method:?}: Δ outside CI");
            if method == CiMethod::PairedWald && (x.ci_high - x.ci_low == 0.0) != (b + c == 0) {
                zero_width_counterexamples.push(t);
            }
        }
        if b == 0 && c == 0 && a > 0 && d > 0 {
            ensure!(cohens_kappa_ratio(&t) == Some(BigRational::from_integer(1.into())), "{t:?}: κ != 1");
        }
        checked += 1;
    }
    let mut perfect = 0;
    while perfect < 1000 {
        let (a, d) = (rng.gen_range(1..60u64), rng.gen_range(1..60u64));
        let t = ContingencyTable::new(a, 0, 0, d).map_err(|e| e.to_string())?;
        ensure!(cohens_kappa_ratio(&t) == Some(BigRational::from_integer(1.into())), "{t:?}: κ != 1");
        perfect += 1;
    }
    let summary = format!("{checked} tables, both CI methods; {perfect} perfect-agreement tables");
    if zero_width_counterexamples.is_empty() {
        return Ok(summary);
    }
    // The paired Wald variance (b+c) - (b-c)^2/n vanishes exactly when a = d = 0
    // and one of b, c is zero, so such tables get a zero-width interval.
    let explained = zero_width_counterexamples.iter().all(|t| t.a == 0 && t.d == 0 && t.b.min(t.c) == 0);
    Err(Failure {
        message: format!(
            "{summary}; zero width iff b=c=0 fails on {} table(s), e.g. {}: all satisfy a=d=0 with b*c=0, where the Wald variance is 0",
            zero_width_counterexamples.len(),
            zero_width_counterexamples[0].display()
        ),
        known: explained,
    })
}

fn sqare(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_sqare")).args(args).output().expect("spawn sqare")
}

/// Runs every CLI stage into `out`; returns the exit code of each.
fn pipeline(out: &Path, parallelism: &str) -> Result<Vec<(String, i32)>, String> {
    let study = fixtures().join("fire_safety_study.json");
    let cassette = fixtures().join("fire_safety_cassette.jsonl");
    let (study, cassette, out) = (study.to_str().unwrap(), cassette.to_str().unwrap(), out.to_str().unwrap());
    let common = ["--study", study, "--out", out, "--fixed-clock", CLOCK];
    let stages: Vec<Vec<&str>> = vec![
        vec!["run", "--mode", "replay", "--cassette", cassette, "--parallelism", parallelism],
        vec!["judge"],
        vec!["validate"],
        vec!["analyze"],
        vec!["compare", "--model-a", GEMINI, "--model-b", GPT],
        vec!["export"],
    ];
    let mut codes = Vec::new();
    for stage in stages {
        let args: Vec<&str> = stage.iter().chain(common.iter()).copied().collect();
        let output = sqare(&args);
        let code = output.status.code().unwrap_or(-1);
        if code != 0 {
            return Err(format!("`sqare {}` exited {code}: {}", stage[0], String::from_utf8_lossy(&output.stderr)));
        }
        codes.push((stage[0].to_string(), code));
    }
    Ok(codes)
}

fn read(path: &Path) -> Result<String, String> {
    std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))
}

fn tsv_rate(metrics: &str, metric: &str, model: &str, lang: &str, cond: &str) -> Option<(u64, u64)> {
    metrics.lines().find_map(|line| {
        let f: Vec<&str> = line.split('\t').collect();
        (f.len() >= 6 && f[0] == metric && f[1] == model && f[2] == lang && f[3] == cond)
            .then(|| (f[4].parse().unwrap_or(u64::MAX), f[5].parse().unwrap_or(u64::MAX)))
    })
}

fn end_to_end() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    pipeline(dir.path(), "4")?;

    let judged = parse_ntriples(&read(&dir.path().join("judged.nt"))?).map_err(|e| e.to_string())?;
    let answers = judged.subjects_of_type(&node(iri::ANSWER)).len();
    let results = judged.subjects_of_type(&node(iri::VALIDATION_RESULT)).len();
    ensure!(answers == 448 && results == 448, "{answers} answers, {results} validation results");
    ensure!(validate(&judged, &builtin_shapes(ShapeStage::Judged)).is_empty(), "judged graph has violations");

    let metrics = read(&dir.path().join("reports/metrics.tsv"))?;
    for (lang, cond, t, ..) in PUBLISHED {
        let [a, b, c, _] = t;
        for (model, valid) in [(GEMINI, a + b), (GPT, a + c)] {
            let got = tsv_rate(&metrics, "accuracy", model, lang, cond.as_str());
            ensure!(got == Some((valid, 28)), "{model} {lang} {cond}: accuracy {got:?}, expected {valid}/28");
        }
    }
    let text = read(&dir.path().join("reports/metrics.txt"))?;
    for (metric, model, expected) in [
        ("knowledge_leakage", GEMINI, "7.1% (2/28)"),
        ("knowledge_leakage", GPT, "10.7% (3/28)"),
        ("error_replication", GEMINI, "92.9% (26/28)"),
        ("error_replication", GPT, "89.3% (25/28)"),
    ] {
        let found = text.lines().any(|l| {
            let f: Vec<&str> = l.split_whitespace().collect();
            f.len() >= 5 && f[0] == metric && f[1] == model && f[2] == "de" && l.ends_with(expected)
        });
        ensure!(found, "{metric} {model} de is not {expected}");
    }

    let report = read(&dir.path().join("reports/compare.md"))?;
    let mut section = "";
    let mut matched = 0;
    for line in report.lines() {
        if let Some(lang) = line.strip_prefix("### ") {
            section = lang.trim();
            continue;
        }
        let cells: Vec<&str> = line.trim_matches('|').split(" | ").map(str::trim).collect();
        let Some((_, cond, t, p, delta, kappa)) =
            PUBLISHED.iter().find(|r| r.0 == section && cells.first() == Some(&r.1.display_name()))
        else {
            continue;
        };
        let [a, b, c, d] = t;
        ensure!(cells[1] == format!("({a}, {b}; {c}, {d})"), "{section} {cond}: table cell {}", cells[1]);
        ensure!(cells[2] == *p && cells[3] == *delta, "{section} {cond}: {cells:?}");
        ensure!(same_kappa(cells[4], kappa), "{section} {cond}: κ cell {}", cells[4]);
        matched += 1;
    }
    ensure!(matched == 8, "matched {matched} of 8 report rows");
    Ok("448 answers and results, clean shapes, accuracy marginals, rates and both tables match".into())
}

fn random_term(rng: &mut StdRng, position: usize) -> Term {
    const ALPHABET: &[char] = &['a', 'z', 'Q', '0', '9', ' ', '"', '\\', '\n', '\r', '\t', 'ä', 'ß', '€', '→', '\u{1}', '\u{7f}', '😀', '<', '>'];
    let text = |rng: &mut StdRng| -> String { (0..rng.gen_range(0..12)).map(|_| ALPHABET[rng.gen_range(0..ALPHABET.len())]).collect() };
    let kind = match position {
        0 => rng.gen_range(0..2),
        1 => 0,
        _ => rng.gen_range(0..5),
    };
    match kind {
        0 => Term::iri(format!("http://example.org/{}/ä{}", rng.gen_range(0..50), rng.gen_range(0..1000))).unwrap(),
        1 => Term::blank(format!("b{}", rng.gen_range(0..200))).unwrap(),
        2 => Term::string(text(rng)),
        3 => Term::lang_string(text(rng), ["de", "en", "en-GB", "pt-br"][rng.gen_range(0..4)]).unwrap(),
        _ => Term::typed(text(rng), "http://example.org/dt").unwrap(),
    }
}

fn graph_round_trip() -> Check {
    let mut rng = StdRng::seed_from_u64(11);
    let mut graph = Graph::new();
    let mut generated = 0;
    while generated < 10_000 {
        let triple = Triple::new(random_term(&mut rng, 0), random_term(&mut rng, 1), random_term(&mut rng, 2))
            .map_err(|e| e.to_string())?;
        graph.insert(triple);
        generated += 1;
    }
    let text = write_ntriples(&graph);
    let parsed = parse_ntriples(&text).map_err(|e| e.to_string())?;
    ensure!(parsed == graph, "N-Triples round trip lost or changed triples");
    ensure!(write_ntriples(&parsed) == text, "canonical N-Triples write is not idempotent");

    let turtle = write_turtle(&graph, &standard_prefixes());
    let reparsed = parse_turtle(&turtle).map_err(|e| e.to_string())?;
    ensure!(reparsed == graph, "Turtle round trip of the random graph differs");

    let tbox = emit_tbox(&builtin_registry());
    let tbox_back = parse_turtle(&tbox_turtle(&builtin_registry())).map_err(|e| e.to_string())?;
    ensure!(isomorphic(&tbox, &tbox_back).map_err(|e| e.to_string())?, "T-Box Turtle is not isomorphic after reparse");
    Ok(format!("{} distinct triples round-trip; T-Box isomorphic ({} triples)", graph.len(), tbox.len()))
}

fn fixture_graph() -> Result<Graph, String> {
    let study = load_study(fixtures().join("fire_safety_study.json")).map_err(|e| e.to_string())?;
    let cassette = Arc::new(Cassette::load(fixtures().join("fire_safety_cassette.jsonl")).map_err(|e| e.to_string())?);
    let adapters: Vec<Arc<dyn ModelAdapter>> =
        [GEMINI, GPT].iter().map(|m| Arc::new(ReplayAdapter::new(*m, cassette.clone())) as Arc<dyn ModelAdapter>).collect();
    let now = Utc.with_ymd_and_hms(2025, 3, 1, 12, 0, 0).unwrap();
    let records =
        run_experiment(&study, &adapters, &RunConfig::new("acceptance"), &FixedClock::new(now)).map_err(|e| e.to_string())?;
    let mut graph = materialize_trials(&study, "acceptance", &[GEMINI.into(), GPT.into()], now, &records);
    judge_graph(&mut graph, &study, ValidityPolicy::Factual).map_err(|e| e.to_string())?;
    Ok(graph)
}

fn replace(graph: &mut Graph, subject: &Term, predicate: &str, object: Term) {
    strip(graph, subject, predicate);
    graph.add(subject, &node(predicate), object);
}

fn shape_suite() -> Check {
    let clean = fixture_graph()?;
    let shapes = builtin_shapes(ShapeStage::Judged);
    ensure!(validate(&clean, &shapes).is_empty(), "fixture graph is not clean");

    let all = answers(&clean);
    let facts = |a: &Term| answer_facts(&clean, a).map_err(|e| e.to_string());
    let first = all[0].clone();
    let no_context = all
        .iter()
        .find(|a| facts(a).map(|f| f.condition == ConditionKind::NoContext).unwrap_or(false))
        .ok_or("no no_context answer")?
        .clone();
    let first_lang = facts(&first)?.language;
    let other_lang = if first_lang == "de" { "en" } else { "de" };
    let first_text = clean.object(&first, &node(iri::HAS_TEXT)).map(|t| t.value().to_string()).unwrap_or_default();
    let vr = validation_iri(&first);
    let material = clean.subjects_of_type(&node(iri::MATERIAL))[0].clone();

    type Mutation = Box<dyn Fn(&mut Graph)>;
    let faults: Vec<(&str, Mutation, &str, Term)> = vec![
        (
            "missing hasGivenFor",
            Box::new(move |g: &mut Graph| {
                strip(g, &all[0], iri::HAS_GIVEN_FOR);
            }),
            "sh:MinCountConstraintComponent",
            first.clone(),
        ),
        (
            "wrong language tag",
            Box::new({
                let (a, text) = (first.clone(), first_text.clone());
                move |g: &mut Graph| replace(g, &a, iri::HAS_TEXT, Term::lang_string(text.clone(), other_lang).unwrap())
            }),
            "sqare:LanguageMatchesConstraintComponent",
            first.clone(),
        ),
        (
            "duplicate ValidationResult",
            Box::new({
                let (a, vr) = (first.clone(), vr.clone());
                move |g: &mut Graph| {
                    let copy = node(&format!("{}-copy", vr.value()));
                    let triples: Vec<Triple> = g.iter().filter(|t| t.subject == vr).cloned().collect();
                    for t in triples {
                        g.add(&copy, &t.predicate, t.object);
                    }
                    g.add(&a, &node(iri::HAS_VALIDATION_RESULT), copy);
                }
            }),
            "sh:MaxCountConstraintComponent",
            first.clone(),
        ),
        (
            "material under no_context",
            Box::new({
                let a = no_context.clone();
                move |g: &mut Graph| {
                    g.add(&a, &node(iri::HAS_USED_MATERIAL), material.clone());
                }
            }),
            "sqare:AbsentWhenConstraintComponent",
            no_context.clone(),
        ),
        (
            "non-boolean isValid",
            Box::new({
                let vr = vr.clone();
                move |g: &mut Graph| replace(g, &vr, iri::IS_VALID, Term::string("yes"))
            }),
            "sh:DatatypeConstraintComponent",
            vr.clone(),
        ),
        (
            "dangling question link",
            Box::new({
                let a = first.clone();
                move |g: &mut Graph| replace(g, &a, iri::HAS_GIVEN_FOR, node("https://example.org/sqare/question/none"))
            }),
            "sh:ClassConstraintComponent",
            first.clone(),
        ),
        (
            "deleted isValid",
            Box::new({
                let vr = vr.clone();
                move |g: &mut Graph| {
                    strip(g, &vr, iri::IS_VALID);
                }
            }),
            "sh:MinCountConstraintComponent",
            vr.clone(),
        ),
    ];
    let count = faults.len();
    for (name, mutate, component, focus) in faults {
        let mut g = clean.clone();
        mutate(&mut g);
        let found: Vec<Violation> = validate(&g, &shapes);
        ensure!(
            found.len() == 1 && found[0].component == component && found[0].focus == focus,
            "{name}: expected one {component} on {}, got {:?}",
            focus.value(),
            found.iter().map(|v| v.to_string()).collect::<Vec<_>>()
        );
    }
    Ok(format!("clean fixture; {count} seeded faults each yield exactly the expected violation"))
}

fn files(root: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).into_iter().flatten().flatten() {
            let path = entry.path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let name = path.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.insert(name, std::fs::read(&path).unwrap_or_default());
            }
        }
    }
    out
}

fn determinism() -> Check {
    let mut snapshots = Vec::new();
    for (round, parallelism) in [(1, "1"), (2, "8"), (3, "8")] {
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        pipeline(dir.path(), parallelism).map_err(|e| format!("round {round}: {e}"))?;
        snapshots.push(files(dir.path()));
    }
    let reference = &snapshots[0];
    for expected in ["answers.nt", "trials.tsv", "judged.nt", "reports/compare.txt", "reports/metrics.tsv", "export/dataset.ttl"] {
        ensure!(reference.contains_key(expected), "missing output {expected}");
    }
    for other in &snapshots[1..] {
        ensure!(other.keys().eq(reference.keys()), "different file sets");
        for (name, bytes) in reference {
            ensure!(&other[name] == bytes, "{name} differs between runs");
        }
    }
    Ok(format!("{} files byte-identical across parallelism 1 and 8", reference.len()))
}

fn main() -> ExitCode {
    type Criterion = (&'static str, fn() -> Check, Option<Duration>);
    let criteria: [Criterion; 7] = [
        ("1 statistics reproduction", statistics_reproduction, Some(Duration::from_secs(1))),
        ("2 McNemar oracle equivalence", mcnemar_oracle, Some(Duration::from_secs(10))),
        ("3 stats property suite", stats_properties, None),
        ("4 end-to-end replay", end_to_end, Some(Duration::from_secs(30))),
        ("5 graph round-trip", graph_round_trip, None),
        ("6 shape suite", shape_suite, None),
        ("7 determinism", determinism, None),
    ];
    let mut failed = 0;
    for (name, check, budget) in criteria {
        let start = Instant::now();
        let mut result = check();
        let elapsed = start.elapsed();
        if let (Ok(_), Some(limit)) = (&result, budget) {
            if elapsed > limit {
                result = Err(format!("took {elapsed:.2?}, limit {limit:?}").into());
            }
        }
        match result {
            Ok(detail) => println!("PASS criterion {name}: {detail} ({elapsed:.2?})"),
            Err(Failure { message, known: true }) => {
                println!("FAIL criterion {name}: {message} ({elapsed:.2?}) [known, see README]");
            }
            Err(Failure { message, known: false }) => {
                failed += 1;
                println!("FAIL criterion {name}: {message} ({elapsed:.2?})");
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criterion(s) failed");
        ExitCode::FAILURE
    }
}
