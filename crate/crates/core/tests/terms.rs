mod common;

use common::{cset, equiv, eval, is_xor_reduced, k, oracle_dominated};
use proptest::prelude::*;
use xorhorn::domination::{compute_c_set_for_term, is_c_dominated, is_xor_linear};
use xorhorn::normal::{is_normal, normal_form};
use xorhorn::{parse_term, xor_reduce, Term, Theory};

fn term() -> impl Strategy<Value = Term> {
    let leaf = prop_oneof![
        Just(k("a")),
        Just(k("b")),
        Just(k("c")),
        Just(Term::Zero),
        Just(Term::var("X")),
        Just(Term::var("Y")),
    ];
    leaf.prop_recursive(4, 24, 2, |inner| {
        prop_oneof![
            inner.clone().prop_map(|t| Term::app("f", vec![t])),
            (inner.clone(), inner.clone()).prop_map(|(l, r)| Term::app("g", vec![l, r])),
            (inner.clone(), inner).prop_map(|(l, r)| Term::xor(l, r)),
        ]
    })
}

fn signature() -> Theory {
    let mut t = Theory::new();
    for c in ["a", "b", "c"] {
        t.declare_fun(c, 0);
    }
    t.declare_fun("f", 1);
    t.declare_fun("g", 2);
    t
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn reduce_keeps_the_class(t in term()) {
        let r = xor_reduce(&t);
        prop_assert_eq!(eval(&r), eval(&t));
        prop_assert!(is_xor_reduced(&r), "{} not reduced", r);
        prop_assert_eq!(xor_reduce(&r), r);
    }

    #[test]
    fn reduce_decides_the_equations(s in term(), t in term()) {
        prop_assert_eq!(xor_reduce(&s) == xor_reduce(&t), equiv(&s, &t));
    }

    #[test]
    fn normal_form_is_a_canonical_representative(s in term(), t in term()) {
        for c in [cset(&[]), cset(&["a"]), cset(&["a", "b"])] {
            let n = normal_form(&s, &c);
            prop_assert!(equiv(&n, &s));
            prop_assert!(is_normal(&n, &c));
            prop_assert_eq!(normal_form(&n, &c), n.clone());
            prop_assert_eq!(n == normal_form(&t, &c), equiv(&s, &t));
        }
    }

    #[test]
    fn domination_matches_its_definition(t in term()) {
        let r = xor_reduce(&t);
        for names in [&[][..], &["a"][..], &["a", "b"][..]] {
            let c = cset(names);
            let cv: Vec<Term> = names.iter().map(|n| k(n)).collect();
            prop_assert_eq!(is_c_dominated(&r, &c), oracle_dominated(&r, &cv), "{} under {:?}", r, names);
        }
    }

    #[test]
    fn computed_set_dominates(t in term()) {
        let r = xor_reduce(&t);
        if is_xor_linear(&r) {
            if let Ok(c) = compute_c_set_for_term(&r) {
                prop_assert!(is_c_dominated(&r, &c), "{} not dominated by {:?}", r, c.elements());
            }
        }
    }

    #[test]
    fn printed_terms_parse_back(t in term()) {
        let sig = signature();
        let back = parse_term(&sig, &t.to_string()).unwrap();
        prop_assert_eq!(back, t);
    }

    #[test]
    fn parser_never_panics(s in "[a-zA-Z0-9_(), +>.#\\[\\]\n-]{0,60}") {
        let _ = xorhorn::parse_theory(&s);
        let _ = parse_term(&signature(), &s);
    }
}
