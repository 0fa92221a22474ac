use num_bigint::BigUint;
use proptest::prelude::*;
use tamecheck_core::arch_graph::{build_mlp, emit_spec_string, parse_spec};
use tamecheck_core::bound_engine::{ceil_log2, pnn_pdim_bound, sample_size, PlanMode};
use tamecheck_core::tame_analyzer::{analyze, K_EXPLICIT, K_NONE};
use tamecheck_core::{DefinabilityClass, PfaffFormat};

fn mlp_params(widths: &[u64]) -> u64 {
    widths.windows(2).map(|w| (w[0] + 1) * w[1]).sum()
}

fn widths() -> impl Strategy<Value = Vec<u64>> {
    prop::collection::vec(1u64..6, 2..6)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn mlp_param_count_is_the_layer_sum(w in widths()) {
        let acts = vec!["tanh"; w.len() - 2];
        let g = build_mlp(&w, &acts).unwrap();
        prop_assert_eq!(g.param_count(), mlp_params(&w));
    }

    #[test]
    fn emitted_specs_parse_back(w in widths(), act in prop::sample::select(vec!["sigmoid", "tanh", "relu", "gelu_tanh"])) {
        let acts = vec![act; w.len() - 2];
        let g = build_mlp(&w, &acts).unwrap();
        let back = parse_spec(&emit_spec_string(&g)).unwrap();
        prop_assert_eq!(&back, &g);
        prop_assert_eq!(analyze(&back), analyze(&g));
    }

    #[test]
    fn pdim_bound_grows_with_each_argument(q in 0u64..6, dd in 0u64..6, d in 1u64..6, p in 1u64..40) {
        let at = |q, dd, d, p| pnn_pdim_bound(&PfaffFormat::new(q, dd, d), p).unwrap().pdim_bound;
        let base = at(q, dd, d, p);
        prop_assert!(at(q + 1, dd, d, p) >= base);
        prop_assert!(at(q, dd + 1, d, p) >= base);
        prop_assert!(at(q, dd, d + 1, p) >= base);
        prop_assert!(at(q, dd, d, p + 1) >= base);
    }

    #[test]
    fn ceil_log2_brackets_its_argument(x in 1u64..u64::MAX) {
        let k = ceil_log2(&BigUint::from(x)).unwrap();
        prop_assert!(k == 0 || (1u128 << (k - 1)) < x as u128);
        prop_assert!((x as u128) <= 1u128 << k);
    }

    #[test]
    fn classification_plan_matches_float_arithmetic(k in 1u64..100_000, e in 1u32..100, dl in 1u32..100) {
        let (epsilon, delta) = (e as f64 / 100.0, dl as f64 / 100.0);
        let plan = sample_size(PlanMode::Classification, &k.into(), epsilon, delta, 1.0).unwrap();
        let approx = (k as f64 + (1.0 / delta).ln()) / (epsilon * epsilon);
        let n: f64 = plan.n.to_string().parse().unwrap();
        prop_assert!((n - approx.ceil()).abs() <= 1.0, "{} vs {}", n, approx);
    }

    #[test]
    fn plans_shrink_as_epsilon_grows(k in 1u64..10_000, e in 1u32..99) {
        for mode in [PlanMode::Classification, PlanMode::Regression] {
            let at = |e: u32| sample_size(mode, &k.into(), e as f64 / 100.0, 0.05, 1.0).map(|p| p.n);
            if let (Ok(a), Ok(b)) = (at(e), at(e + 1)) {
                prop_assert!(b <= a);
            }
        }
    }

    #[test]
    fn doubling_c_roughly_doubles_n(k in 1u64..10_000) {
        let n = |c| sample_size(PlanMode::Classification, &k.into(), 0.1, 0.05, c).unwrap().n;
        let (one, two) = (n(1.0), n(2.0));
        prop_assert!(two <= &one * 2u32 && two + 1u32 >= &one * 2u32);
    }
}

#[test]
fn sigmoid_mlp_bound_is_explicit() {
    let r = analyze(&build_mlp(&[2, 3, 1], &["sigmoid"]).unwrap());
    assert_eq!(r.k_status, K_EXPLICIT);
    assert_eq!(r.net_format, Some(PfaffFormat::new(3, 2, 1)));
    assert_eq!(r.bounds.unwrap().p, 13);
}

#[test]
fn unbounded_sine_features_are_not_definable() {
    let text = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/../../specs/sine_pe_unbounded.json")).unwrap();
    let r = analyze(&parse_spec(&text).unwrap());
    assert_eq!(r.structure, DefinabilityClass::NotDefinable);
    assert!(!r.definable);
    assert!(!r.finite_sample_complexity);
    assert!(!r.qualitative_only);
    assert_eq!(r.k_status, K_NONE);
    assert!(r.bounds.is_none());
}
