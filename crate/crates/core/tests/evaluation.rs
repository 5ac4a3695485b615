mod common;

use causeway::corpus::Role;
use causeway::eval::{classify_match, count_errors, match_sentence, MatchCategory, PooledSpan};
use common::checks::{
    accounting_violations, brute_best_matching, eval_fixture_failures, matching_oracle,
    random_spans,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn hand_computed_fixtures() {
    assert_eq!(eval_fixture_failures(), Vec::<String>::new());
}

#[test]
fn match_categories() {
    let g = PooledSpan::new(Role::Cause, 2, 5);
    let cases = [
        (PooledSpan::new(Role::Cause, 2, 5), MatchCategory::Tp),
        (PooledSpan::new(Role::Cause, 3, 6), MatchCategory::Be),
        (PooledSpan::new(Role::Effect, 2, 5), MatchCategory::Le),
        (PooledSpan::new(Role::Signal, 4, 9), MatchCategory::Lbe),
        (PooledSpan::new(Role::Cause, 5, 7), MatchCategory::NoMatch),
    ];
    for (p, want) in cases {
        assert_eq!(classify_match(&g, &p), want, "{p:?}");
    }
}

#[test]
fn exact_matching_is_optimal_on_500_instances() {
    assert_eq!(matching_oracle(500, 19), 0);
}

#[test]
fn accounting_holds_on_500_span_sets() {
    assert_eq!(accounting_violations(500, 29), 0);
}

#[test]
fn matcher_prefers_tp_over_two_boundary_errors() {
    // Pairing gold[0]↔pred[1] as TP beats two BEs.
    let gold = [
        PooledSpan::new(Role::Cause, 0, 3),
        PooledSpan::new(Role::Cause, 2, 5),
    ];
    let pred = [
        PooledSpan::new(Role::Cause, 1, 4),
        PooledSpan::new(Role::Cause, 0, 3),
    ];
    let m = match_sentence(&gold, &pred);
    assert_eq!(m.score(), brute_best_matching(&gold, &pred));
    assert_eq!(m.score(), [1, 0, 1, 0]);
}

#[test]
fn large_instances_still_match_one_to_one() {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    for _ in 0..50 {
        let gold = random_spans(&mut rng, 12, 40);
        let pred = random_spans(&mut rng, 12, 40);
        let m = match_sentence(&gold, &pred);
        let mut used: Vec<usize> = m.pairs.iter().map(|p| p.1).collect();
        used.sort();
        used.dedup();
        assert_eq!(used.len(), m.pairs.len());
        assert_eq!(m.pairs.len() + m.unmatched_gold.len(), gold.len());
        assert_eq!(m.pairs.len() + m.unmatched_pred.len(), pred.len());
        let c = count_errors(&gold, &pred);
        for r in Role::ALL {
            assert_eq!(
                c.role(r).gold_total(),
                gold.iter().filter(|s| s.role == r).count()
            );
        }
    }
}
