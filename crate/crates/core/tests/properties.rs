//! Property tests for the spec-level invariants that hold for all inputs.

use std::collections::BTreeSet;

use proptest::prelude::*;

use tacmap_core::corpus::contains_tactic_name;
use tacmap_core::embedding::{cosine, EmbeddingProvider, HashedBagEmbedder};
use tacmap_core::eval::{harmonic_f1, per_tactic_prf, samples_average, score_sample};
use tacmap_core::extraction::extract_tactics;
use tacmap_core::llm::{build_prompt, PromptVariant};
use tacmap_core::retrieval::chunk_text;
use tacmap_core::tactic::Tactic;
use tacmap_core::text::contains_phrase;

fn tactic_subset(mask: u16) -> BTreeSet<Tactic> {
    Tactic::ALL
        .iter()
        .enumerate()
        .filter(|(i, _)| mask & (1 << i) != 0)
        .map(|(_, t)| *t)
        .collect()
}

proptest! {
    #[test]
    fn chunks_cover_page_with_exact_overlap(len in 0usize..40_000) {
        let page = "a".repeat(len);
        let chunks = chunk_text("u", &page, 8000, 500);
        if len == 0 {
            prop_assert!(chunks.is_empty());
        } else {
            prop_assert_eq!(chunks[0].start_offset, 0);
            let last = chunks.last().unwrap();
            prop_assert_eq!(last.start_offset + last.text.len(), len);
            for pair in chunks.windows(2) {
                let prev_end = pair[0].start_offset + pair[0].text.len();
                prop_assert_eq!(prev_end - pair[1].start_offset, 500);
            }
            for c in &chunks {
                prop_assert!(c.text.len() <= 8000);
            }
        }
    }

    #[test]
    fn appending_text_is_monotone_for_extraction(mask in 0u16..(1 << 14), suffix in "[ -~]{0,40}") {
        let base: Vec<&str> = tactic_subset(mask).iter().map(|t| t.canonical_name()).collect();
        let base = base.join(", ");
        let before = extract_tactics(&base);
        let after = extract_tactics(&format!("{base} {suffix}"));
        prop_assert!(after.is_superset(&before));
    }

    #[test]
    fn extraction_is_sound(response in "[a-zA-Z0-9 ,.'-]{0,120}") {
        for tactic in extract_tactics(&response) {
            let occurs = contains_phrase(&response, tactic.canonical_name(), true)
                || tactic
                    .shorthand_aliases()
                    .iter()
                    .any(|alias| contains_phrase(&response, alias, true));
            prop_assert!(occurs, "{:?} not present in {response:?}", tactic.canonical_name());
        }
    }

    #[test]
    fn rendered_tactic_lists_extract_exactly(mask in 1u16..(1 << 14)) {
        let tactics = tactic_subset(mask);
        let rendered = tactics
            .iter()
            .map(|t| t.canonical_name().to_string())
            .collect::<Vec<_>>()
            .join(", ");
        prop_assert_eq!(extract_tactics(&rendered), tactics.clone());
        // and the corpus filter sees every canonical name too
        prop_assert!(contains_tactic_name(&rendered));
    }

    #[test]
    fn cosine_is_symmetric_and_self_similar(a in "[a-z ]{1,60}", b in "[a-z ]{1,60}") {
        let e = HashedBagEmbedder::default();
        let va = e.embed(&a).unwrap();
        let vb = e.embed(&b).unwrap();
        prop_assert_eq!(cosine(&va, &vb).to_bits(), cosine(&vb, &va).to_bits());
        if !va.is_zero {
            prop_assert!((cosine(&va, &va) - 1.0).abs() <= 1e-9);
            prop_assert!((va.norm() - 1.0).abs() <= 1e-9);
        }
        prop_assert!(cosine(&va, &vb) <= 1.0 + 1e-9);
        prop_assert!(cosine(&va, &vb) >= -1e-9); // counts are non-negative
    }

    #[test]
    fn sample_scores_match_independent_tally(gold_mask in 1u16..(1 << 14), pred_mask in 0u16..(1 << 14)) {
        let gold = tactic_subset(gold_mask);
        let pred = tactic_subset(pred_mask);
        let result = score_sample("p", &gold, &pred).unwrap();

        let inter = gold.intersection(&pred).count() as f64;
        let p = if pred.is_empty() { 0.0 } else { inter / pred.len() as f64 };
        let r = inter / gold.len() as f64;
        prop_assert_eq!(result.precision, p);
        prop_assert_eq!(result.recall, r);
        prop_assert_eq!(result.f1, harmonic_f1(p, r));

        let avg = samples_average(&[result.clone()]).unwrap();
        prop_assert_eq!((avg.precision, avg.recall, avg.f1), (p, r, result.f1));

        let rows = per_tactic_prf(&[result]);
        let support: u64 = rows.iter().map(|row| row.support).sum();
        prop_assert_eq!(support, gold.len() as u64);
    }

    #[test]
    fn prompt_rendering_is_injective_on_procedure_text(a in "[a-zA-Z0-9 ]{1,50}", b in "[a-zA-Z0-9 ]{1,50}") {
        prop_assume!(a != b);
        let procedure = |text: &str| tacmap_core::corpus::ProcedureExample {
            procedure_id: "p".into(),
            actor_name: "A".into(),
            text: text.to_string(),
            technique_attack_id: "T1".into(),
            gold_tactics: BTreeSet::from([Tactic::Impact]),
            url: "https://t.test/".into(),
        };
        let pa = build_prompt(PromptVariant::SpecificNoContext, &procedure(&a), None).unwrap();
        let pb = build_prompt(PromptVariant::SpecificNoContext, &procedure(&b), None).unwrap();
        prop_assert_ne!(pa, pb);
    }
}
