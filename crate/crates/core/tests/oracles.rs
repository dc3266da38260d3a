mod common;

use antidote_core::influence::{unfairness_gradient, InfluenceContext};
use antidote_core::metrics::{all_scores, ItemNormalization, MetricKind};
use common::*;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn scores_match_brute_force(seed in any::<u64>(), density in 0.1f64..0.9) {
        let inst = random_instance(seed, 30, 20, 4, density);
        let got = all_scores(&inst.model, &inst.ds, ItemNormalization::SkipUndefined).unwrap();
        let want = brute_scores(&inst.ds, &inst.model);
        for k in 0..4 {
            prop_assert!((got[k] - want[k]).abs() <= 1e-12, "{:?} vs {:?}", got, want);
        }
    }

    #[test]
    fn gradients_match_finite_differences(seed in any::<u64>()) {
        let inst = random_instance(seed, 20, 15, 3, 0.5);
        let k = random_vector(seed ^ 0x5eed, 3, -1.5, 1.5);
        let x = random_vector(seed ^ 0xfeed, 15, -2.0, 2.0);
        let mut ctx = InfluenceContext::new(&inst.model, &inst.ds).unwrap();
        ctx.refresh(&k).unwrap();
        let at_x = oracle_model(&inst.ds, &inst.model, &k, &x);
        for kind in MetricKind::ALL {
            if kink_distance(kind, &inst.ds, &at_x) <= 1e-3 {
                continue;
            }
            let g = unfairness_gradient(kind, &ctx, &at_x, &inst.ds, 0).unwrap();
            let fd = fd_gradient(kind, &inst.ds, &inst.model, &k, &x, 1e-5);
            prop_assert!(rel_err(&g, &fd) <= 1e-5, "{kind}: {:?} vs {:?}", g, fd);
        }
    }
}

#[test]
fn context_item_vectors_match_item_solves() {
    let inst = random_instance(11, 20, 15, 3, 0.4);
    let k = random_vector(1, 3, -1.0, 1.0);
    let x = random_vector(2, 15, -2.0, 2.0);
    let mut ctx = InfluenceContext::new(&inst.model, &inst.ds).unwrap();
    ctx.refresh(&k).unwrap();
    let q = ctx.item_vectors(&[&x]).unwrap();
    let want = oracle_model(&inst.ds, &inst.model, &k, &x);
    assert!(rel_err(q.as_slice(), want.items.as_slice()) < 1e-12);
}
