mod common;

use common::Report;

fn expect(name: &str, rep: Report) {
    eprintln!(
        "{name}: {} cases, {} checked, {} positive, {} failures",
        rep.cases,
        rep.checked,
        rep.positive,
        rep.failures.len()
    );
    for f in rep.failures.iter().take(5) {
        eprintln!("---\n{f}");
    }
    assert!(rep.ok());
}

#[test]
fn reduction_preserves_derivability() {
    let rep = common::reduction_agreement(7, 300);
    assert!(rep.checked > 100, "only {} conclusive pairs", rep.checked);
    expect("agreement", rep);
}

#[test]
fn sigma_factors_instances() {
    expect("sigma", common::sigma_factorisation(11, 500));
}

#[test]
fn matcher_agrees_with_enumeration() {
    expect("matcher", common::matcher(4));
}

#[test]
fn domination_is_absence_of_bad_subterms() {
    expect("domination", common::domination_vs_bad(7));
}
