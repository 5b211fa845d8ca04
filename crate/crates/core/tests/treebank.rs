mod common;

use blm_core::treebank::{parse_conllu, Treebank};
use proptest::prelude::*;

#[test]
fn fixtures_parse_with_expected_counts() {
    let tr = common::turkish();
    assert_eq!(tr.name, "turkish_mini");
    assert_eq!(tr.tree_count, 26);
    assert_eq!(tr.skipped_empty_nodes, 1);
    assert_eq!(
        tr.token_count,
        tr.sentences.iter().map(|s| s.words.len()).sum::<usize>()
    );

    let he = common::hebrew();
    assert_eq!(he.tree_count, 20);
    assert_eq!(he.skipped_empty_nodes, 0);
    assert!(he.sentences.iter().all(|s| !s.mwt.is_empty()));
}

#[test]
fn reconstructed_text_matches_comment() {
    for tb in [common::turkish(), common::hebrew()] {
        for s in &tb.sentences {
            assert_eq!(s.reconstruct_text(), s.text, "{}", s.sent_id);
        }
    }
}

#[test]
fn hebrew_surface_forms_use_fused_spans() {
    let he = common::hebrew();
    let s = &he.sentences[0];
    assert_eq!(s.sent_id, "he-001");
    assert_eq!(s.surface_form(1).unwrap(), "הילד");
    assert_eq!(s.surface_form(2).unwrap(), "הילד");
    assert_eq!(s.surface_form(3).unwrap(), "כתב");
    assert_eq!(s.surface_form(9).unwrap(), "בבית");
    assert!(s.surface_form(0).is_err());
    assert!(s.surface_form(11).is_err());
}

#[test]
fn fixtures_round_trip() {
    for tb in [common::turkish(), common::hebrew()] {
        let again = Treebank::parse(tb.name.clone(), &tb.to_conllu()).unwrap();
        assert_eq!(again.sentences, tb.sentences);
        assert_eq!(again.token_count, tb.token_count);
        assert_eq!(again.tree_count, tb.tree_count);
    }
}

#[test]
fn malformed_input_reports_line() {
    let text = "# sent_id = a\n1\tx\tx\tNOUN\t_\t_\t0\troot\t_\n";
    let err = parse_conllu(text).unwrap_err();
    assert_eq!(err.code(), "treebank.parse");
    assert!(err.to_string().contains("line 2"), "{err}");
}

#[derive(Debug, Clone)]
struct Block {
    forms: Vec<String>,
    spans: Vec<(usize, usize)>,
    empty_after: Option<usize>,
}

fn block() -> impl Strategy<Value = Block> {
    (1usize..8)
        .prop_flat_map(|n| {
            (
                proptest::collection::vec("[a-zçğış]{1,6}", n),
                proptest::collection::vec(any::<bool>(), n),
                proptest::option::of(0..n),
            )
        })
        .prop_map(|(forms, starts, empty_after)| {
            // A span starts wherever the flag is set and covers the next word.
            let mut spans = Vec::new();
            let mut i = 1;
            while i < forms.len() {
                if starts[i - 1] {
                    spans.push((i, i + 1));
                    i += 2;
                } else {
                    i += 1;
                }
            }
            Block {
                forms,
                spans,
                empty_after: empty_after.map(|e| e + 1),
            }
        })
}

fn render(blocks: &[Block]) -> String {
    let mut out = String::new();
    for (b, block) in blocks.iter().enumerate() {
        out.push_str(&format!("# sent_id = s{b}\n"));
        for (i, form) in block.forms.iter().enumerate() {
            let idx = i + 1;
            if let Some(&(s, e)) = block.spans.iter().find(|(s, _)| *s == idx) {
                let surface: String = block.forms[s - 1..e].concat();
                out.push_str(&format!("{s}-{e}\t{surface}\t_\t_\t_\t_\t_\t_\t_\t_\n"));
            }
            let head = if idx == 1 { 0 } else { 1 };
            let rel = if idx == 1 { "root" } else { "dep" };
            out.push_str(&format!(
                "{idx}\t{form}\t{form}\tX\t_\tCase=Nom\t{head}\t{rel}\t_\t_\n"
            ));
            if block.empty_after == Some(idx) {
                out.push_str(&format!("{idx}.1\t{form}\t_\t_\t_\t_\t_\t_\t_\t_\n"));
            }
        }
        out.push('\n');
    }
    out
}

proptest! {
    #[test]
    fn counts_hold_for_random_blocks(blocks in proptest::collection::vec(block(), 1..6)) {
        let tb = parse_conllu(&render(&blocks)).unwrap();
        prop_assert_eq!(tb.tree_count, blocks.len());
        prop_assert_eq!(tb.token_count, blocks.iter().map(|b| b.forms.len()).sum::<usize>());
        prop_assert_eq!(
            tb.skipped_empty_nodes,
            blocks.iter().filter(|b| b.empty_after.is_some()).count()
        );
        for (s, b) in tb.sentences.iter().zip(&blocks) {
            prop_assert_eq!(s.mwt.len(), b.spans.len());
            for i in 1..=s.words.len() {
                prop_assert!(!s.surface_form(i).unwrap().is_empty());
            }
        }
    }

    #[test]
    fn random_blocks_round_trip(blocks in proptest::collection::vec(block(), 1..6)) {
        let tb = parse_conllu(&render(&blocks)).unwrap();
        let again = parse_conllu(&tb.to_conllu()).unwrap();
        prop_assert_eq!(again.sentences, tb.sentences);
        prop_assert_eq!(again.token_count, tb.token_count);
    }
}
