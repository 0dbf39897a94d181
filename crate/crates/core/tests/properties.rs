use std::collections::{BTreeSet, HashMap, HashSet};

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use scg_core::ast::CanonicalAst;
use scg_core::io::{read_scg_jsonl, write_scg_jsonl};
use scg_core::metrics::{corpus_bleu, length_analysis, meteor, meteor_detail, rouge_l, sentence_bleu};
use scg_core::synth::random_program;
use scg_core::*;

fn program(seed: u64, depth: usize) -> String {
    random_program(&mut ChaCha8Rng::seed_from_u64(seed), depth)
}

fn graph(src: &str, variant: Variant) -> Scg {
    build_scg(&parse_mini(src).unwrap(), &lex(src).unwrap(), variant).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn canonical_round_trip(seed in any::<u64>()) {
        let src = program(seed, 4);
        let tree = parse_mini(&src).unwrap();
        let doc = CanonicalAst::from_tree(&tree, &src).to_json();
        prop_assert_eq!(ingest_ast(&doc).unwrap(), tree);
    }

    #[test]
    fn operator_nodes_span_their_children(seed in any::<u64>()) {
        let src = program(seed, 4);
        let tree = parse_mini(&src).unwrap();
        tree.validate().unwrap();
        prop_assert_eq!(tree.edge_count(), tree.len() - 1);
        let pure = ["AssignExpr", "LogicalExpr", "EqualityExpr", "RelationalExpr", "AdditiveExpr", "MultiplicativeExpr", "Program"];
        for n in &tree.nodes {
            let mut hull: Option<SourceSpan> = None;
            for c in &n.children {
                let s = tree.node(*c).span;
                prop_assert!(n.span.contains(&s));
                hull = Some(hull.map_or(s, |h| h.hull(&s)));
            }
            if pure.contains(&n.node_type.as_str()) {
                prop_assert_eq!(Some(n.span), hull);
            }
        }
    }

    #[test]
    fn lexer_spans_partition_non_whitespace(seed in any::<u64>()) {
        let src = program(seed, 4);
        let tokens = lex(&src).unwrap();
        let mut expected = BTreeSet::new();
        for (l, line) in src.split('\n').enumerate() {
            for (c, ch) in line.chars().enumerate() {
                if !ch.is_whitespace() {
                    expected.insert((l as u32 + 1, c as u32 + 1));
                }
            }
        }
        let mut covered = BTreeSet::new();
        for t in &tokens {
            let (sl, sc) = t.span.start();
            let (el, ec) = t.span.end();
            prop_assert_eq!(sl, el);
            prop_assert_eq!((ec - sc + 1) as usize, t.text.chars().count());
            let line: Vec<char> = src.split('\n').nth(sl as usize - 1).unwrap().chars().collect();
            let slice: String = line[sc as usize - 1..ec as usize].iter().collect();
            prop_assert_eq!(&slice, &t.text);
            for c in sc..=ec {
                prop_assert!(covered.insert((sl, c)), "overlap at {}:{}", sl, c);
            }
        }
        // String literals may contain spaces; everything else is covered exactly.
        prop_assert!(expected.is_subset(&covered));
        let strip = |s: &str| s.chars().filter(|c| !c.is_whitespace()).collect::<String>();
        prop_assert_eq!(strip(&tokens.iter().map(|t| t.text.as_str()).collect::<String>()), strip(&src));
    }

    #[test]
    fn standard_graph_invariants(seed in any::<u64>()) {
        let src = program(seed, 4);
        let g = graph(&src, Variant::Standard);
        g.validate().unwrap();
        prop_assert_eq!(g.edge_count(EdgeKind::AstToken), g.token_count());
        prop_assert_eq!(g.edge_count(EdgeKind::AstAst), g.ast_count() - 1);
        for e in &g.edges {
            let kinds = (g.nodes[e.0].kind, g.nodes[e.1].kind);
            prop_assert!(kinds != (ScgNodeKind::Token, ScgNodeKind::Token));
        }
        // Subtokens of one original token (same span) share their parent.
        let mut parent_of_span: HashMap<SourceSpan, usize> = HashMap::new();
        for e in g.edges.iter().filter(|e| e.2 == EdgeKind::AstToken) {
            let span = g.nodes[e.1].span;
            let p = *parent_of_span.entry(span).or_insert(e.0);
            prop_assert_eq!(p, e.0);
        }
    }

    #[test]
    fn direct_parent_is_deepest_container(seed in any::<u64>()) {
        let src = program(seed, 4);
        let tree = parse_mini(&src).unwrap();
        let depths = tree.depths();
        for t in lex(&src).unwrap() {
            let p = direct_parent(&tree, t.span).unwrap();
            prop_assert!(tree.node(p).span.contains(&t.span));
            for n in &tree.nodes {
                if n.span.contains(&t.span) {
                    prop_assert!(depths[n.id.0] <= depths[p.0]);
                }
            }
        }
    }

    #[test]
    fn variant1_adds_edges_only(seed in any::<u64>()) {
        let src = program(seed, 3);
        let std: HashSet<ScgEdge> = graph(&src, Variant::Standard).edges.into_iter().collect();
        let v1: HashSet<ScgEdge> = graph(&src, Variant::Variant1).edges.into_iter().collect();
        prop_assert!(std.is_subset(&v1));
    }

    #[test]
    fn truncation_drops_every_enclosing_ast_node(seed in any::<u64>(), limit in 1usize..20) {
        let src = program(seed, 4);
        let g = graph(&src, Variant::Standard).with_summary(vec!["w".into(); 9]);
        let removed: Vec<SourceSpan> = g.token_nodes().filter(|n| n.order.unwrap() >= limit).map(|n| n.span).collect();
        let t = truncate_sample(&g, limit, 4).unwrap();
        t.validate().unwrap();
        prop_assert_eq!(t.token_count(), g.token_count().min(limit));
        prop_assert_eq!(t.summary.len(), 4);
        for a in t.ast_nodes() {
            prop_assert!(removed.iter().all(|s| !a.span.contains(s)));
        }
        if removed.is_empty() {
            prop_assert_eq!(t.nodes, g.nodes);
        }
    }

    #[test]
    fn encoding_and_batch_masks(seeds in proptest::collection::vec(any::<u64>(), 1..4), v2 in any::<bool>()) {
        let variant = if v2 { Variant::Variant2 } else { Variant::Standard };
        let graphs: Vec<Scg> = seeds.iter().map(|s| graph(&program(*s, 3), variant).with_summary(vec!["x".into()])).collect();
        let vocab = Vocab::build(&graphs, 50, 50).unwrap();
        let enc: Vec<EncodedGraph> = graphs.iter().map(|g| encode_graph(g, &vocab)).collect();
        let b = batch(&enc);
        for (k, e) in enc.iter().enumerate() {
            for i in 0..e.len() {
                prop_assert!(e.adjacency[i].contains(&i));
                for &j in &e.adjacency[i] {
                    prop_assert!(e.adjacency[j].contains(&i));
                }
            }
            if v2 {
                for &i in &e.token_order {
                    for &j in &e.token_order {
                        prop_assert!(e.adjacency[i].contains(&j));
                    }
                }
            }
            let mut expected = e.adjacency.clone();
            expected.resize(b.max_nodes(), Vec::new());
            prop_assert_eq!(b.neighbors(k), expected);
            prop_assert_eq!(b.token_rows(k), e.token_order.clone());
        }
    }
}

#[test]
fn scg_jsonl_round_trips_100_random_graphs() {
    let variants = [Variant::Standard, Variant::Variant1, Variant::Variant2];
    let graphs: Vec<Scg> = (0..100u64)
        .map(|s| {
            graph(&program(s, 4), variants[s as usize % 3])
                .with_id(format!("g{s}"))
                .with_summary(vec!["summary".into(), format!("w{s}")])
        })
        .collect();
    let text = write_scg_jsonl(&graphs);
    assert_eq!(text.lines().count(), 100);
    let back = read_scg_jsonl(&text).unwrap();
    let equal = graphs.iter().zip(&back).filter(|(a, b)| a == b).count();
    assert_eq!(equal, 100);
    assert_eq!(write_scg_jsonl(&back), text);
}

/// Exhaustive METEOR alignment: every maximum-size exact matching, scored by
/// its chunk count.
fn meteor_oracle(c: &[u8], r: &[u8]) -> (usize, usize) {
    fn rec(c: &[u8], r: &[u8], i: usize, used: &mut Vec<bool>, assign: &mut Vec<Option<usize>>, best: &mut (usize, usize)) {
        if i == c.len() {
            let pairs: Vec<(usize, usize)> = assign.iter().enumerate().filter_map(|(i, a)| a.map(|p| (i, p))).collect();
            let m = pairs.len();
            let chunks = pairs
                .iter()
                .enumerate()
                .filter(|(k, (ci, ri))| *k == 0 || !(pairs[k - 1].0 + 1 == *ci && pairs[k - 1].1 + 1 == *ri))
                .count();
            if m > best.0 || (m == best.0 && chunks < best.1) {
                *best = (m, chunks);
            }
            return;
        }
        rec(c, r, i + 1, used, assign, best);
        for p in 0..r.len() {
            if !used[p] && r[p] == c[i] {
                used[p] = true;
                assign[i] = Some(p);
                rec(c, r, i + 1, used, assign, best);
                assign[i] = None;
                used[p] = false;
            }
        }
    }
    let mut best = (0, usize::MAX);
    rec(c, r, 0, &mut vec![false; r.len()], &mut vec![None; c.len()], &mut best);
    best
}

fn words() -> impl Strategy<Value = Vec<u8>> {
    proptest::collection::vec(0u8..4, 1..8)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn meteor_matches_exhaustive_alignment(c in words(), r in words()) {
        let (m, chunks) = meteor_oracle(&c, &r);
        let d = meteor_detail(&c, &r);
        prop_assert_eq!(d.matches, m);
        if m > 0 {
            prop_assert_eq!(d.chunks, chunks);
        }
    }

    #[test]
    fn self_scores(c in words()) {
        prop_assert_eq!(sentence_bleu(&c, &c, 4), 1.0);
        prop_assert_eq!(corpus_bleu(std::slice::from_ref(&c), std::slice::from_ref(&c), 4).unwrap(), 1.0);
        prop_assert_eq!(rouge_l(&c, &c).unwrap(), 1.0);
        let n = c.len() as f64;
        prop_assert_eq!(meteor(&c, &c), 1.0 - 0.5 / (n * n * n));
    }

    #[test]
    fn scores_bounded_and_relabeling_invariant(c in words(), r in words(), shift in 1u8..50) {
        let relabel = |v: &[u8]| v.iter().map(|x| (x * 7 + shift) % 251).collect::<Vec<u8>>();
        let (c2, r2) = (relabel(&c), relabel(&r));
        let scores = [
            (sentence_bleu(&c, &r, 4), sentence_bleu(&c2, &r2, 4)),
            (rouge_l(&c, &r).unwrap(), rouge_l(&c2, &r2).unwrap()),
            (meteor(&c, &r), meteor(&c2, &r2)),
            (corpus_bleu(std::slice::from_ref(&c), std::slice::from_ref(&r), 4).unwrap(), corpus_bleu(std::slice::from_ref(&c2), std::slice::from_ref(&r2), 4).unwrap()),
        ];
        for (a, b) in scores {
            prop_assert!((0.0..=1.0).contains(&a));
            prop_assert_eq!(a, b);
        }
        if c.iter().any(|w| r.contains(w)) {
            prop_assert!(sentence_bleu(&c, &r, 4) > 0.0);
        }
    }
}

#[test]
fn length_table_follows_planted_correlation() {
    // Longer programs score lower, so admitting higher-scoring samples as the
    // threshold rises pulls the bucket mean down.
    let lengths: Vec<usize> = (1..=50).map(|i| 10 * i).collect();
    let scores: Vec<f64> = lengths.iter().map(|l| 1.0 - *l as f64 / 600.0).collect();
    let thresholds: Vec<f64> = (1..=10).map(|k| k as f64 / 10.0).collect();
    let table = length_analysis(&scores, &lengths, &thresholds);
    let means: Vec<f64> = table.iter().filter_map(|b| b.mean_length).collect();
    assert!(means.len() >= 8);
    assert!(means.windows(2).all(|w| w[1] < w[0]), "{means:?}");
    assert_eq!(table[0].mean_length, None);
}
