//! Audits of the synthetic drift stream.

use std::collections::BTreeMap;

use cream_core::harness::synth::{session_topics, token_overlap, topic_label, topic_permutation};
use cream_core::harness::{generate_synthetic_stream, load_sessions, write_sessions, SynthConfig};
use cream_core::simkernel::ItemKind;

#[test]
fn every_topic_is_introduced_twice() {
    for seed in 0..5 {
        let perm = topic_permutation(5, seed);
        let mut counts = BTreeMap::new();
        for t in 0..10 {
            *counts.entry(session_topics(&perm, t).new).or_insert(0) += 1;
        }
        assert_eq!(counts.len(), 5);
        assert!(counts.values().all(|&c| c == 2), "{counts:?}");
    }
}

#[test]
fn schedule_rotates_new_into_recurring_into_dropped() {
    let perm = topic_permutation(5, 9);
    for t in 2..10 {
        let s = session_topics(&perm, t);
        assert_eq!(s.recurring, session_topics(&perm, t - 1).new);
        assert_eq!(s.dropped, session_topics(&perm, t - 2).new);
    }
}

#[test]
fn queries_carry_their_topic_and_relevant_documents_overlap() {
    let cfg = SynthConfig::default();
    let stream = generate_synthetic_stream(&cfg, 4).unwrap();
    assert_eq!(stream.len(), 10);
    let perm = topic_permutation(cfg.topics, 4);
    for s in &stream {
        let sched = session_topics(&perm, s.index);
        let allowed = [topic_label(sched.new), topic_label(sched.recurring)];
        assert_eq!(s.train_documents().count(), cfg.docs_per_session);
        for q in s.train_queries() {
            let topic = q.topic.as_deref().expect("training query without topic");
            assert!(allowed.iter().any(|a| a == topic), "session {} query {} on {topic}", s.index, q.id);
        }
        let items: BTreeMap<&str, _> = s.train.iter().chain(&s.eval).map(|i| (i.id.as_str(), i)).collect();
        for (qid, rel) in &s.qrels {
            let q = items[qid.as_str()];
            let label = q.topic.clone().unwrap();
            assert!(q.tokens.iter().all(|t| t.starts_with(&format!("{label}c"))), "{qid}: {:?}", q.tokens);
            assert!(!rel.is_empty());
            for d in rel {
                let doc = items[d.as_str()];
                assert_eq!(doc.kind, ItemKind::Document);
                assert_eq!(doc.topic.as_deref(), Some(label.as_str()));
                assert!(token_overlap(&q.tokens, &doc.tokens) >= cfg.min_overlap, "{qid} vs {d}");
            }
        }
    }
}

#[test]
fn generation_is_reproducible_byte_for_byte() {
    let cfg = SynthConfig {
        sessions: 3,
        ..SynthConfig::default()
    };
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    write_sessions(a.path(), &generate_synthetic_stream(&cfg, 21).unwrap()).unwrap();
    write_sessions(b.path(), &generate_synthetic_stream(&cfg, 21).unwrap()).unwrap();
    let mut names: Vec<_> = std::fs::read_dir(a.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert_eq!(names.len(), 3);
    for n in &names {
        assert_eq!(std::fs::read(a.path().join(n)).unwrap(), std::fs::read(b.path().join(n)).unwrap());
    }
    let other = generate_synthetic_stream(&cfg, 22).unwrap();
    assert_ne!(other, generate_synthetic_stream(&cfg, 21).unwrap());
    assert_eq!(load_sessions(a.path()).unwrap(), generate_synthetic_stream(&cfg, 21).unwrap());
}
