use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use regex::Regex;

use lexdef_core::aggregator::DefinitionUnit;
use lexdef_core::detector::paragraph_records;
use lexdef_core::extract::{
    build_record, decode_bio, detect_scope, extract_exceptions, extract_terms, inherit_scope, parse_bio_file,
    ScopeLevel, TermMethod,
};
use lexdef_core::{parse_document, DocumentGraph};

fn title_doc(body: &str) -> DocumentGraph {
    parse_document(&format!(
        r#"<uscDoc><main><title identifier="/us/usc/t7">{body}</title></main></uscDoc>"#
    ))
    .unwrap()
}

fn unit_for(g: &DocumentGraph, id: &str) -> DefinitionUnit {
    let ps = paragraph_records(g);
    let p = ps.iter().find(|p| p.identifier == id).unwrap_or_else(|| panic!("no record {id}"));
    DefinitionUnit::from_members(&[p], &[1.0], g).unwrap()
}

/// A unit whose text can be replaced freely; term extraction only reads the text.
fn scratch_unit(text: &str) -> DefinitionUnit {
    let g = title_doc(r#"<section identifier="/us/usc/t7/s1"><content>x</content></section>"#);
    let mut u = unit_for(&g, "/us/usc/t7/s1");
    u.combined_text = text.to_string();
    u
}

const TERM_SENTENCES: [(&str, &[&str]); 15] = [
    ("The term \"farm\" means any place from which products were sold.", &["farm"]),
    ("The term \"State\" includes Guam.", &["State"]),
    ("The term \"producer\" does not include a landlord.", &["producer"]),
    ("Secretary shall mean the Secretary of Agriculture.", &["Secretary"]),
    ("In this Act, the term Administrator shall mean the head of the agency.", &["Administrator"]),
    ("\"Board\" shall mean the governing board.", &["Board"]),
    ("For purposes of this section, livestock is defined as cattle.", &["livestock"]),
    ("For the purposes of this chapter, a rural area is defined as a town.", &["rural area"]),
    ("For purposes of subsection (a), covered commodities are defined as wheat.", &["covered commodities"]),
    ("\"Cooperative\" means an association of producers.", &["Cooperative"]),
    ("As used here, \"fiscal year\" means the year ending September 30.", &["fiscal year"]),
    ("The term \u{201C}Indian tribe\u{201D} means any tribe.", &["Indian tribe"]),
    ("Each \"eligible entity\" means a State agency.", &["eligible entity"]),
    ("The Secretary shall carry out a program.", &[]),
    ("Such amounts are defined in section 5 of this title.", &[]),
];

#[test]
fn fifteen_sentence_fixture_yields_hand_labelled_terms() {
    let mut body = String::from(r#"<section identifier="/us/usc/t7/s1">"#);
    for (i, (s, _)) in TERM_SENTENCES.iter().enumerate() {
        body.push_str(&format!(r#"<paragraph identifier="/us/usc/t7/s1/{i}"><content>{s}</content></paragraph>"#));
    }
    body.push_str("</section>");
    let g = title_doc(&body);

    let mut total = 0;
    for (i, (s, expected)) in TERM_SENTENCES.iter().enumerate() {
        let u = unit_for(&g, &format!("/us/usc/t7/s1/{i}"));
        let got: Vec<String> = extract_terms(&u).into_iter().map(|t| t.surface).collect();
        assert_eq!(got, *expected, "{s}");
        total += got.len();
    }
    assert_eq!(total, 13);
}

#[test]
fn term_methods_follow_quoting() {
    let u = scratch_unit("Secretary shall mean the head. \"Board\" shall mean the board.");
    let terms = extract_terms(&u);
    assert_eq!(terms.len(), 2);
    assert_eq!(terms[0].method, TermMethod::UnquotedPattern);
    assert_eq!(terms[1].method, TermMethod::QuotedPattern);

    let u = scratch_unit("The terms \"buyer\", \"seller\", and \"broker\" mean the parties. \"buyer\" means a purchaser.");
    let got: Vec<String> = extract_terms(&u).into_iter().map(|t| t.surface).collect();
    assert_eq!(got, ["buyer", "seller", "broker"]);

    let long = "One two three four five six seven eight nine shall mean nothing.";
    assert!(extract_terms(&scratch_unit(long)).is_empty());
}

#[test]
fn bio_example_decodes_single_span() {
    let tokens = [
        "The", "term", "'Hispanic-serving", "agricultural", "colleges", "and", "universities'", "means", "colleges",
        "or", "universities", "that",
    ];
    let tags = ["O", "O", "B-TERM", "I-TERM", "I-TERM", "I-TERM", "I-TERM", "O", "O", "O", "O", "O"];
    let d = decode_bio(&tokens, &tags).unwrap();
    assert_eq!(d.spans.len(), 1);
    assert_eq!((d.spans[0].start, d.spans[0].end), (2, 7));
    assert_eq!(d.spans[0].surface, "'Hispanic-serving agricultural colleges and universities'");
    assert_eq!(d.repaired, 0);

    assert!(decode_bio(&tokens, &tags[..3]).is_err());
    assert!(decode_bio(&["a"], &["B-DEF"]).is_err());
}

#[test]
fn bio_file_records_decode() {
    let file = "The\tterm\t\"farm\"\tmeans\nO\tO\tB-TERM\tO\n\nA\tB\nB-TERM\tI-TERM\n";
    let recs = parse_bio_file(file.as_bytes()).unwrap();
    assert_eq!(recs.len(), 2);
    let d = decode_bio(&recs[1].tokens, &recs[1].tags).unwrap();
    assert_eq!(d.spans[0].surface, "A B");
}

fn random_tags(rng: &mut ChaCha8Rng, len: usize, valid: bool) -> Vec<&'static str> {
    let mut tags = Vec::with_capacity(len);
    for i in 0..len {
        let prev_in_span = i > 0 && tags[i - 1] != "O";
        let t = match rng.random_range(0..3) {
            0 => "O",
            1 => "B-TERM",
            _ if valid && !prev_in_span => "B-TERM",
            _ => "I-TERM",
        };
        tags.push(t);
    }
    tags
}

/// Spans from a regex over the tag string: one letter per tag.
fn regex_spans(tags: &[&str], pattern: &str) -> Vec<(usize, usize)> {
    let s: String = tags.iter().map(|t| t.chars().next().unwrap()).collect();
    Regex::new(pattern).unwrap().find_iter(&s).map(|m| (m.start(), m.end())).collect()
}

#[test]
fn bio_decoding_matches_regex_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut mismatches = 0;
    for _ in 0..200 {
        let len = rng.random_range(1..=40);
        let tags = random_tags(&mut rng, len, true);
        let tokens: Vec<String> = (0..len).map(|i| format!("w{i}")).collect();
        let d = decode_bio(&tokens, &tags).unwrap();
        let got: Vec<(usize, usize)> = d.spans.iter().map(|s| (s.start, s.end)).collect();
        if got != regex_spans(&tags, "BI*") || d.repaired != 0 {
            mismatches += 1;
        }
    }
    assert_eq!(mismatches, 0);
}

#[test]
fn dangling_inside_tags_open_a_span() {
    let mut rng = ChaCha8Rng::seed_from_u64(18);
    for _ in 0..200 {
        let len = rng.random_range(1..=40);
        let tags = random_tags(&mut rng, len, false);
        let tokens: Vec<String> = (0..len).map(|i| format!("w{i}")).collect();
        let d = decode_bio(&tokens, &tags).unwrap();
        let got: Vec<(usize, usize)> = d.spans.iter().map(|s| (s.start, s.end)).collect();
        assert_eq!(got, regex_spans(&tags, "[BI]I*"));
        let dangling = regex_spans(&tags, "[BI]I*").iter().filter(|(s, _)| tags[*s] == "I-TERM").count();
        assert_eq!(d.repaired, dangling);
    }
}

#[test]
fn section_lead_gives_section_scope() {
    let g = title_doc(
        r#"<section identifier="/us/usc/t7/s3103"><chapeau>As used in this section:</chapeau>
           <paragraph identifier="/us/usc/t7/s3103/1"><content>The term "farm" means a place.</content></paragraph>
           </section>"#,
    );
    let s = detect_scope(&unit_for(&g, "/us/usc/t7/s3103/1"), &g).unwrap();
    assert_eq!(s.level, ScopeLevel::Section);
    assert_eq!(s.targets, ["/us/usc/t7/s3103"]);
    assert!(s.explicit);
    assert!(!s.conflict);
}

#[test]
fn no_declaration_is_unknown() {
    let g = title_doc(
        r#"<section identifier="/us/usc/t7/s9"><paragraph identifier="/us/usc/t7/s9/1"><content>The term "farm" means a place.</content></paragraph></section>"#,
    );
    let s = detect_scope(&unit_for(&g, "/us/usc/t7/s9/1"), &g).unwrap();
    assert_eq!(s.level, ScopeLevel::Unknown);
    assert!(s.targets.is_empty());
    assert!(!s.explicit);
}

const RANGE_DEF: &str = r#"<section identifier="/us/usc/t7/s427"><subsection identifier="/us/usc/t7/s427/a"><content>For purposes of sections 427 to 427j of this title, the term "grant" means an award.</content></subsection></section>"#;

#[test]
fn section_range_expands_when_loaded() {
    let g = title_doc(&format!(
        r#"{RANGE_DEF}<section identifier="/us/usc/t7/s427a"><content>a</content></section><section identifier="/us/usc/t7/s427j"><content>j</content></section><section identifier="/us/usc/t7/s428"><content>k</content></section>"#
    ));
    let s = detect_scope(&unit_for(&g, "/us/usc/t7/s427/a"), &g).unwrap();
    assert_eq!(s.level, ScopeLevel::MultiSection);
    assert_eq!(s.targets, ["/us/usc/t7/s427", "/us/usc/t7/s427a", "/us/usc/t7/s427j"]);
}

#[test]
fn section_range_stays_literal_when_not_loaded() {
    let g = title_doc(RANGE_DEF);
    let s = detect_scope(&unit_for(&g, "/us/usc/t7/s427/a"), &g).unwrap();
    assert_eq!(s.level, ScopeLevel::MultiSection);
    assert_eq!(s.targets, ["/us/usc/t7/s427..427j"]);
    assert!(s.explicit);
}

#[test]
fn declaration_three_levels_up_is_inherited() {
    let g = title_doc(
        r#"<section identifier="/us/usc/t7/s5">
             <subsection identifier="/us/usc/t7/s5/a"><chapeau>In this subsection:</chapeau>
               <paragraph identifier="/us/usc/t7/s5/a/1"><chapeau>Farm terms.</chapeau>
                 <subparagraph identifier="/us/usc/t7/s5/a/1/A"><content>The term "barn" means a building.</content></subparagraph>
                 <subparagraph identifier="/us/usc/t7/s5/a/1/B"><content>The term "silo" means a tower.</content></subparagraph>
               </paragraph>
             </subsection>
             <subsection identifier="/us/usc/t7/s5/b"><content>The term "field" means land.</content></subsection>
           </section>"#,
    );
    for id in ["/us/usc/t7/s5/a/1/A", "/us/usc/t7/s5/a/1/B"] {
        let u = unit_for(&g, id);
        let s = detect_scope(&u, &g).unwrap();
        assert_eq!(s.level, ScopeLevel::Inherited, "{id}");
        assert_eq!(s.targets, ["/us/usc/t7/s5/a"]);
        assert!(!s.explicit);
        assert_eq!(inherit_scope(&u, &g).unwrap(), s);
    }
    let s = detect_scope(&unit_for(&g, "/us/usc/t7/s5/b"), &g).unwrap();
    assert_eq!(s.level, ScopeLevel::Unknown);
}

#[test]
fn title_chapeau_is_inherited_as_title() {
    let g = title_doc(
        r#"<chapter identifier="/us/usc/t7/ch1"><chapeau>In this title:</chapeau><section identifier="/us/usc/t7/s2"><content>The term "crop" means a plant.</content></section></chapter>"#,
    );
    let s = inherit_scope(&unit_for(&g, "/us/usc/t7/s2"), &g).unwrap();
    assert_eq!(s.level, ScopeLevel::Inherited);
    assert_eq!(s.targets, ["/us/usc/t7"]);
}

#[test]
fn exclusions_come_in_text_order_with_refs() {
    let g = title_doc(
        r#"<section identifier="/us/usc/t7/s3"><content>The term "school" does not include a private academy. The term "school" does not include an institution described in <ref href="/us/usc/t7/s7601">section 7601 of this title</ref>.</content></section>"#,
    );
    let u = unit_for(&g, "/us/usc/t7/s3");
    let ex = extract_exceptions(&u);
    assert_eq!(ex.len(), 2);
    assert_eq!(ex[0].text, "a private academy");
    assert!(ex[0].refs.is_empty());
    assert_eq!(ex[1].text, "an institution described in section 7601 of this title");
    assert_eq!(ex[1].refs.len(), 1);
    assert_eq!(ex[1].refs[0].href, "/us/usc/t7/s7601");

    let rec = build_record(&u, &g).unwrap();
    assert_eq!(rec.scope.exclusions, ex);
    assert_eq!(rec.terms.len(), 1);
}

fn sentence_strategy() -> impl Strategy<Value = String> {
    let pieces: Vec<&'static str> = TERM_SENTENCES.iter().map(|(s, _)| *s).collect();
    prop::collection::vec(prop::sample::select(pieces), 1..6).prop_map(|v| v.join(" "))
}

proptest! {
    #[test]
    fn term_spans_slice_to_surface(text in sentence_strategy()) {
        let terms = extract_terms(&scratch_unit(&text));
        for t in &terms {
            prop_assert_eq!(&text[t.char_span.0..t.char_span.1], t.surface.as_str());
        }
        prop_assert!(terms.windows(2).all(|w| w[0].char_span.1 <= w[1].char_span.0));
    }

    #[test]
    fn term_extraction_is_idempotent(text in sentence_strategy()) {
        let u = scratch_unit(&text);
        prop_assert_eq!(extract_terms(&u), extract_terms(&u));
    }

    #[test]
    fn bio_spans_are_ordered_and_disjoint(tags in prop::collection::vec(prop::sample::select(vec!["O", "B-TERM", "I-TERM"]), 0..60)) {
        let tokens: Vec<String> = (0..tags.len()).map(|i| i.to_string()).collect();
        let d = decode_bio(&tokens, &tags).unwrap();
        for s in &d.spans {
            prop_assert!(s.start < s.end && s.end <= tags.len());
        }
        prop_assert!(d.spans.windows(2).all(|w| w[0].end <= w[1].start));
    }

    #[test]
    fn explicit_scope_has_targets(lead in prop::sample::select(vec![
        "As used in this section,", "For purposes of this chapter,", "In this title,",
        "For purposes of sections 1 through 4 of this title,", "As used in paragraph (9),",
        "When used in this subsection,", "The Secretary says", "",
    ])) {
        let g = title_doc(&format!(
            r#"<chapter identifier="/us/usc/t7/ch2"><section identifier="/us/usc/t7/s1"><subsection identifier="/us/usc/t7/s1/a"><content>{lead} the term "x" means y.</content></subsection></section></chapter>"#
        ));
        let s = detect_scope(&unit_for(&g, "/us/usc/t7/s1/a"), &g).unwrap();
        if s.explicit {
            prop_assert!(!s.targets.is_empty());
        } else {
            prop_assert!(matches!(s.level, ScopeLevel::Inherited | ScopeLevel::Unknown));
        }
    }
}
