//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.

use std::alloc::{GlobalAlloc, Layout, System};
use std::collections::{BTreeSet, HashMap, HashSet};
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use regex::Regex;
use serde_json::Value;

use lexdef_core::aggregator::partition;
use lexdef_core::detector::{paragraph_records, ScoreTable};
use lexdef_core::eval::{auprc, pr_curve, weighted_f, GoldLabel, PrPoint};
use lexdef_core::extract::{decode_bio, DefinedTerm, DefinitionRecord, Scope, ScopeLevel, TermMethod};
use lexdef_core::network::import_graph_json;
use lexdef_core::uslm::SectionStream;
use lexdef_core::{aggregate, build_network, classify, parse_document, AggregateOptions, CrossRef, ScoreSource};

struct Counting;

static CURRENT: AtomicUsize = AtomicUsize::new(0);
static PEAK: AtomicUsize = AtomicUsize::new(0);

unsafe impl GlobalAlloc for Counting {
    unsafe fn alloc(&self, layout: Layout) -> *mut u8 {
        let p = unsafe { System.alloc(layout) };
        if !p.is_null() {
            let now = CURRENT.fetch_add(layout.size(), Ordering::Relaxed) + layout.size();
            PEAK.fetch_max(now, Ordering::Relaxed);
        }
        p
    }

    unsafe fn dealloc(&self, ptr: *mut u8, layout: Layout) {
        unsafe { System.dealloc(ptr, layout) };
        CURRENT.fetch_sub(layout.size(), Ordering::Relaxed);
    }
}

#[global_allocator]
static ALLOC: Counting = Counting;

type Outcome = Result<String, String>;

fn check(cond: bool, what: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(what.into())
    }
}

fn within_time(elapsed: Duration, limit: Duration) -> Result<(), String> {
    check(elapsed < limit, format!("took {elapsed:.2?}, limit {limit:?}"))
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let f = weighted_f(0.9330, 0.9790, 0.3, 0.7).map_err(|e| e.to_string())?.value;
    check((f - 0.9647).abs() <= 1e-4, format!("weighted F {f}"))?;
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let p: f64 = rng.random_range(1e-6..=1.0);
        let r: f64 = rng.random_range(1e-6..=1.0);
        let w = weighted_f(p, r, 0.5, 0.5).map_err(|e| e.to_string())?.value;
        worst = worst.max((w - 2.0 * p * r / (p + r)).abs());
    }
    check(worst <= 1e-12, format!("F1 deviation {worst:e}"))?;
    within_time(start.elapsed(), Duration::from_secs(1))?;
    Ok(format!("weighted F {f:.4}, max F1 deviation {worst:.1e}"))
}

const T7: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/../core/tests/data/t7_s3103_10.xml");

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let code = lexdef_cli::run(["lexdef", "extract", "--input", T7], &mut out, &mut err);
    check(code == 0, format!("exit {code}: {}", String::from_utf8_lossy(&err)))?;
    let text = String::from_utf8(out).map_err(|e| e.to_string())?;
    let lines: Vec<&str> = text.lines().collect();
    check(lines.len() == 1, format!("{} records", lines.len()))?;
    let rec: Value = serde_json::from_str(lines[0]).map_err(|e| e.to_string())?;
    check(
        rec["terms"] == serde_json::json!(["Hispanic-serving agricultural colleges and universities"]),
        format!("terms {}", rec["terms"]),
    )?;
    let members: Vec<&str> = rec["source_paragraph_ids"]
        .as_array()
        .map(|a| a.iter().filter_map(Value::as_str).collect())
        .unwrap_or_default();
    for m in ["/us/usc/t7/s3103/10/A", "/us/usc/t7/s3103/10/B"] {
        check(members.contains(&m), format!("members {members:?} lack {m}"))?;
    }
    let exclusions = rec["scope"]["exclusions"].as_array().cloned().unwrap_or_default();
    let hit = exclusions.iter().any(|e| {
        e["text"].as_str().is_some_and(|t| t.contains("1862 institutions"))
            && e["refs"].as_array().is_some_and(|r| r.contains(&Value::from("/us/usc/t7/s7601")))
    });
    check(hit, format!("exclusions {exclusions:?}"))?;
    within_time(start.elapsed(), Duration::from_secs(1))?;
    Ok(format!("1 record, members {}", members.len()))
}

fn criterion_3() -> Outcome {
    let tokens = [
        "The", "term", "'Hispanic-serving", "agricultural", "colleges", "and", "universities'", "means", "colleges",
        "or", "universities", "that",
    ];
    let tags = ["O", "O", "B-TERM", "I-TERM", "I-TERM", "I-TERM", "I-TERM", "O", "O", "O", "O", "O"];
    let d = decode_bio(&tokens, &tags).map_err(|e| e.to_string())?;
    check(d.spans.len() == 1, format!("{} spans", d.spans.len()))?;
    check(d.spans[0].end - d.spans[0].start == 5 && d.spans[0].start == 2, format!("{:?}", d.spans[0]))?;

    let oracle = Regex::new("BI*").unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut mismatches = 0;
    for _ in 0..200 {
        let len = rng.random_range(1..=40);
        let mut tags: Vec<&str> = Vec::with_capacity(len);
        for i in 0..len {
            let open = i > 0 && tags[i - 1] != "O";
            tags.push(match rng.random_range(0..3) {
                0 => "O",
                2 if open => "I-TERM",
                _ => "B-TERM",
            });
        }
        let letters: String = tags.iter().map(|t| &t[..1]).collect();
        let want: Vec<(usize, usize)> = oracle.find_iter(&letters).map(|m| (m.start(), m.end())).collect();
        let toks: Vec<String> = (0..len).map(|i| i.to_string()).collect();
        let got: Vec<(usize, usize)> = decode_bio(&toks, &tags)
            .map_err(|e| e.to_string())?
            .spans
            .iter()
            .map(|s| (s.start, s.end))
            .collect();
        mismatches += usize::from(got != want);
    }
    check(mismatches == 0, format!("{mismatches} mismatches"))?;
    Ok("1 span over 5 tokens, 0/200 mismatches".into())
}

const TWELVE: &str = include_str!("../../core/tests/data/twelve.xml");

fn criterion_4() -> Outcome {
    let positives = [
        "/t/s1/a/1", "/t/s1/a/2", "/t/s1/b/1", "/t/s1/b/1/A", "/t/s1/c/1", "/t/s1/c/2", "/t/s2/1", "/t/s2/4",
    ];
    let g = parse_document(TWELVE).map_err(|e| e.to_string())?;
    let paragraphs = paragraph_records(&g);
    check(paragraphs.len() == 12, format!("{} paragraphs", paragraphs.len()))?;
    let mut table = ScoreTable::default();
    for p in &paragraphs {
        let s = if positives.contains(&p.identifier.as_str()) { 0.9 } else { 0.1 };
        table.scores.insert(p.identifier.clone(), s);
    }
    let c = classify(&paragraphs, ScoreSource::External(&table), 0.5).map_err(|e| e.to_string())?;
    let units = aggregate(&paragraphs, &c.results, &g, AggregateOptions::default()).map_err(|e| e.to_string())?;
    let got: Vec<Vec<&str>> = units
        .iter()
        .map(|u| u.member_identifiers.iter().map(String::as_str).collect())
        .collect();
    let traced = vec![
        vec!["/t/s1/a/1", "/t/s1/a/2"],
        vec!["/t/s1/b/1", "/t/s1/b/1/A", "/t/s1/c/1", "/t/s1/c/2"],
        vec!["/t/s2/1", "/t/s2/4"],
    ];
    check(got == traced, format!("units {got:?}"))?;

    let flags: Vec<bool> = c.results.iter().map(|r| r.is_definitional).collect();
    let all = partition::<()>(&flags, false, |_, _| Ok(true)).map_err(|_| "partition failed")?;
    check(all.len() == 1, format!("forced true gave {} units", all.len()))?;
    let none = partition::<()>(&flags, false, |_, _| Ok(false)).map_err(|_| "partition failed")?;
    check(none.len() == positives.len(), format!("forced false gave {} units", none.len()))?;
    Ok(format!("3 traced units; forced true 1, forced false {}", none.len()))
}

fn criterion_5() -> Outcome {
    let start = Instant::now();
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let code = lexdef_cli::run(["lexdef", "selfcheck", "--seed", "0", "--trials", "100"], &mut out, &mut err);
    let elapsed = start.elapsed();
    let text = String::from_utf8_lossy(&out).into_owned();
    check(code == 0, format!("exit {code}: {}", text.lines().filter(|l| l.starts_with("FAIL")).collect::<Vec<_>>().join("; ")))?;
    for name in [
        "attention-weights-sum-to-one",
        "pooled-in-convex-hull",
        "softmax-shift-invariance",
        "graph-attention-symmetry",
        "grad-check-scoring-row",
        "grad-check-inputs",
        "grad-check-hierarchical",
    ] {
        check(text.lines().any(|l| l.starts_with("PASS ") && l.contains(name)), format!("{name} not passed"))?;
    }
    within_time(elapsed, Duration::from_secs(10))?;
    Ok(format!("{} properties over 100 trials", text.lines().count()))
}

fn sweep_oracle(items: &[(f64, bool)]) -> Vec<PrPoint> {
    let mut ts: Vec<f64> = items.iter().map(|i| i.0).collect();
    ts.sort_by(f64::total_cmp);
    ts.dedup();
    let pos = items.iter().filter(|i| i.1).count();
    ts.into_iter()
        .map(|t| {
            let tp = items.iter().filter(|i| i.0 >= t && i.1).count();
            let flagged = items.iter().filter(|i| i.0 >= t).count();
            PrPoint {
                threshold: t,
                precision: if flagged == 0 { 0.0 } else { tp as f64 / flagged as f64 },
                recall: if pos == 0 { 0.0 } else { tp as f64 / pos as f64 },
            }
        })
        .collect()
}

fn step_oracle(points: &[PrPoint]) -> f64 {
    let mut v: Vec<(f64, f64)> = points.iter().map(|p| (p.recall, p.precision)).collect();
    v.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.total_cmp(&b.1)));
    v.push((0.0, 0.0));
    v.windows(2).map(|w| (w[0].0 - w[1].0) * w[0].1).sum()
}

fn criterion_6() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst = 0.0f64;
    for ds in 0..50 {
        let n = rng.random_range(1..=30);
        let levels = rng.random_range(2..=12u32);
        let mut xml = String::from(r#"<section identifier="/d/s1">"#);
        let mut scores = HashMap::new();
        let mut gold = Vec::new();
        let mut items = Vec::new();
        let mut table = ScoreTable::default();
        for i in 0..n {
            let id = format!("/d/s1/{i}");
            xml.push_str(&format!(r#"<paragraph identifier="{id}"><content>Item {i}.</content></paragraph>"#));
            let s = f64::from(rng.random_range(0..=levels)) / f64::from(levels);
            let y = rng.random_bool(0.5);
            scores.insert(id.clone(), s);
            table.scores.insert(id.clone(), s);
            gold.push(GoldLabel { identifier: id, is_definition: y });
            items.push((s, y));
        }
        xml.push_str("</section>");

        let curve = pr_curve(&scores, &gold).map_err(|e| e.to_string())?;
        let want = sweep_oracle(&items);
        check(curve.len() == want.len(), format!("dataset {ds}: {} vs {} points", curve.len(), want.len()))?;
        for (a, b) in curve.iter().zip(&want) {
            check(a.threshold == b.threshold, format!("dataset {ds}: threshold order"))?;
            worst = worst.max((a.precision - b.precision).abs()).max((a.recall - b.recall).abs());
        }
        let area = auprc(&curve).map_err(|e| e.to_string())?;
        worst = worst.max((area - step_oracle(&want)).abs());

        let perfect: HashMap<String, f64> =
            gold.iter().map(|g| (g.identifier.clone(), if g.is_definition { 1.0 } else { 0.0 })).collect();
        if gold.iter().any(|g| g.is_definition) {
            let a = auprc(&pr_curve(&perfect, &gold).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
            check(a == 1.0, format!("dataset {ds}: perfect classifier AUPRC {a}"))?;
        }

        let g = parse_document(&xml).map_err(|e| e.to_string())?;
        let paragraphs = paragraph_records(&g);
        let mut previous: Option<HashSet<String>> = None;
        for k in 0..=levels {
            let t = f64::from(k) / f64::from(levels);
            let pos: HashSet<String> = classify(&paragraphs, ScoreSource::External(&table), t)
                .map_err(|e| e.to_string())?
                .positives()
                .map(|r| r.identifier.clone())
                .collect();
            if let Some(prev) = &previous {
                check(pos.is_subset(prev), format!("dataset {ds}: positives grew at threshold {t}"))?;
            }
            previous = Some(pos);
        }
    }
    check(worst <= 1e-12, format!("max deviation {worst:e}"))?;
    Ok(format!("50 datasets, max deviation {worst:.1e}"))
}

fn record(unit: &str, identifier: &str, term: &str, level: ScopeLevel, targets: &[&str], text: &str, refs: &[&str]) -> DefinitionRecord {
    let start = text.find(term).unwrap_or(0);
    DefinitionRecord {
        unit_id: unit.into(),
        identifier: identifier.into(),
        terms: vec![DefinedTerm {
            surface: term.into(),
            char_span: (start, start + term.len()),
            method: TermMethod::QuotedPattern,
        }],
        scope: Scope {
            level,
            targets: targets.iter().map(|t| t.to_string()).collect(),
            explicit: level != ScopeLevel::Unknown,
            exclusions: Vec::new(),
            conflict: false,
        },
        text: text.into(),
        source_paragraph_ids: vec![identifier.into()],
        score: 1.0,
        refs: refs.iter().map(|h| CrossRef { href: h.to_string(), anchor_text: String::new() }).collect(),
    }
}

fn six_records() -> Vec<DefinitionRecord> {
    use ScopeLevel::*;
    vec![
        record("u1", "/us/usc/t7/s3103/10", "Hispanic-serving agricultural colleges and universities", Section, &["/us/usc/t7/s3103"],
            "The term \"Hispanic-serving agricultural colleges and universities\" means colleges that are not an 1862 Institution as defined in section 7601 of this title.",
            &["/us/usc/t7/s7601"]),
        record("u2", "/us/usc/t7/s7601/2", "1862 Institution", Title, &["/us/usc/t7"],
            "The term \"1862 Institution\" means a college eligible under the Act of July 2, 1862.", &[]),
        record("u3", "/us/usc/t7/s3103/5", "farm", Section, &["/us/usc/t7/s3103"],
            "The term \"farm\" means land used by an 1862 institution for research.", &[]),
        record("u4", "/us/usc/t16/s1/a", "forest", Unknown, &[], "The term \"forest\" means land near a farm.", &[]),
        record("u5", "/us/usc/t7/s427/a", "grant", MultiSection, &["/us/usc/t7/s427..427j"],
            "The term \"grant\" means an award to a farm or Forest owner.", &[]),
        record("u6", "/us/usc/t7/s427c/1", "grantee", Subsection, &["/us/usc/t7/s427c/1"],
            "The term \"grantee\" means the recipient of a grant under section 3103 of this title.", &["/us/usc/t7/s3103"]),
    ]
}

fn criterion_7() -> Outcome {
    let records = six_records();
    let reference = build_network(&records).map_err(|e| e.to_string())?;
    let keys = reference.edge_keys();
    check(!keys.is_empty(), "fixture produced no edges")?;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for i in 0..10 {
        let mut shuffled = records.clone();
        shuffled.shuffle(&mut rng);
        let g = build_network(&shuffled).map_err(|e| e.to_string())?;
        check(g.edge_keys() == keys, format!("permutation {i} changed the edge set"))?;
    }
    let back = import_graph_json(&reference.to_json()).map_err(|e| e.to_string())?;
    check(back == reference, "JSON round trip differs")?;
    let kinds: BTreeSet<_> = keys.iter().map(|k| k.2).collect();
    Ok(format!("{} edges of {} kinds, stable over 10 permutations", keys.len(), kinds.len()))
}

const SCALE_BYTES: u64 = 50 * 1024 * 1024;
const HEAP_CEILING: usize = 32 * 1024 * 1024;

/// Writes a USLM-style title of at least `SCALE_BYTES`; returns the section count.
fn generate(path: &std::path::Path) -> std::io::Result<usize> {
    let mut w = BufWriter::new(File::create(path)?);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let words = ["producer", "commodity", "Secretary", "grant", "program", "State", "land", "shall", "means", "any"];
    let sentence = |rng: &mut ChaCha8Rng| -> String {
        let n = rng.random_range(8..30);
        let mut s: Vec<&str> = (0..n).map(|_| words[rng.random_range(0..words.len())]).collect();
        s[0] = "The";
        format!("{} &amp; more.", s.join(" "))
    };
    writeln!(w, r#"<?xml version="1.0" encoding="UTF-8"?>"#)?;
    writeln!(w, r#"<uscDoc xmlns="http://xml.house.gov/schemas/uslm/1.0"><meta><title>Generated</title></meta><main><title identifier="/us/usc/t99"><num>Title 99</num>"#)?;
    let (mut written, mut sections) = (0u64, 0usize);
    let mut chapter = 0;
    while written < SCALE_BYTES {
        chapter += 1;
        let mut chunk = format!(r#"<chapter identifier="/us/usc/t99/ch{chapter}"><heading>Chapter {chapter}</heading>"#);
        for _ in 0..20 {
            sections += 1;
            let sec = format!("/us/usc/t99/s{sections}");
            chunk.push_str(&format!(r#"<section identifier="{sec}"><num>§ {sections}.</num><heading>Section</heading>"#));
            for sub in ["a", "b", "c"] {
                chunk.push_str(&format!(r#"<subsection identifier="{sec}/{sub}"><chapeau>{}</chapeau>"#, sentence(&mut rng)));
                for p in 1..=3 {
                    chunk.push_str(&format!(
                        r#"<paragraph identifier="{sec}/{sub}/{p}"><content>{} See <ref href="/us/usc/t99/s1">section 1</ref>.</content>"#,
                        sentence(&mut rng)
                    ));
                    chunk.push_str(&format!(
                        r#"<subparagraph><content>{}</content></subparagraph></paragraph>"#,
                        sentence(&mut rng)
                    ));
                }
                chunk.push_str("</subsection>");
            }
            chunk.push_str("</section>");
        }
        chunk.push_str("</chapter>\n");
        written += chunk.len() as u64;
        w.write_all(chunk.as_bytes())?;
    }
    writeln!(w, "</title></main></uscDoc>")?;
    w.flush()?;
    Ok(sections)
}

fn criterion_8() -> Outcome {
    let dir = tempfile::TempDir::new().map_err(|e| e.to_string())?;
    let path = dir.path().join("big.xml");
    let expected_sections = generate(&path).map_err(|e| e.to_string())?;
    let size = std::fs::metadata(&path).map_err(|e| e.to_string())?.len();
    check(size >= SCALE_BYTES, format!("generated only {size} bytes"))?;

    let start = Instant::now();
    let baseline = CURRENT.load(Ordering::Relaxed);
    PEAK.store(baseline, Ordering::Relaxed);
    let file = File::open(&path).map_err(|e| e.to_string())?;
    let (mut graphs, mut sections, mut nodes, mut violations) = (0usize, 0usize, 0usize, 0usize);
    for g in SectionStream::new(BufReader::with_capacity(64 * 1024, file)) {
        let g = g.map_err(|e| e.to_string())?;
        graphs += 1;
        nodes += g.len();
        sections += g.nodes().iter().filter(|n| n.kind == lexdef_core::NodeKind::Section).count();
        violations += g.prefix_violations().len();
    }
    let peak = PEAK.load(Ordering::Relaxed).saturating_sub(baseline);
    check(sections == expected_sections, format!("{sections} of {expected_sections} sections seen in {graphs} graphs"))?;
    check(violations == 0, format!("{violations} prefix violations"))?;
    check(peak < HEAP_CEILING, format!("peak heap {peak} bytes over ceiling {HEAP_CEILING}"))?;
    Ok(format!(
        "{:.1} MB, {sections} sections, {nodes} nodes, peak heap {:.2} MiB, {:.2?}",
        size as f64 / 1e6,
        peak as f64 / (1024.0 * 1024.0),
        start.elapsed()
    ))
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 8] = [
        ("metric reproduction", criterion_1),
        ("end-to-end listing fixture", criterion_2),
        ("BIO decoding", criterion_3),
        ("aggregation trace", criterion_4),
        ("attention self-check", criterion_5),
        ("AUPRC oracle", criterion_6),
        ("network determinism", criterion_7),
        ("parser scale", criterion_8),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = f();
        let elapsed = start.elapsed();
        match outcome {
            Ok(detail) => println!("PASS {} {name}: {detail} [{elapsed:.2?}]", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL {} {name}: {why} [{elapsed:.2?}]", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
