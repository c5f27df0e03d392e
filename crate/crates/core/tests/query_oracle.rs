mod support;

use support::oracle::{brute_force, random_graph, render_table, CORPUS, LIMIT_CORPUS};
use vulgd_core::query::{execute, parse_query, run_query};

#[test]
fn engine_matches_nested_loop_evaluator() {
    let asts: Vec<_> = CORPUS.iter().map(|q| parse_query(q).unwrap()).collect();
    let mut non_empty = 0;
    for seed in 0..30 {
        let g = random_graph(seed, 50);
        for (q, ast) in CORPUS.iter().zip(&asts) {
            let got = render_table(&execute(ast, &g));
            let want = brute_force(ast, &g);
            assert_eq!(got, want, "seed {seed}: {q}");
            non_empty += usize::from(!want.is_empty());
        }
    }
    // the corpus should exercise real matches, not just agree on emptiness
    assert!(non_empty > CORPUS.len() * 15, "only {non_empty} non-empty results");
}

#[test]
fn limit_returns_min_of_k_and_total() {
    for seed in 0..10 {
        let g = random_graph(seed, 50);
        for (q, k) in LIMIT_CORPUS {
            let full = run_query(q, &g).unwrap();
            let limited = run_query(&format!("{q} LIMIT {k}"), &g).unwrap();
            assert_eq!(limited.rows.len(), full.rows.len().min(*k as usize));
            assert_eq!(&full.rows[..limited.rows.len()], &limited.rows[..]);
        }
    }
}

#[test]
fn execution_is_deterministic() {
    let g = random_graph(7, 50);
    for q in CORPUS {
        assert_eq!(run_query(q, &g).unwrap(), run_query(q, &g).unwrap(), "{q}");
    }
}
