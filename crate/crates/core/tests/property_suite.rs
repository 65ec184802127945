use logbound::validate::{run_suite, Mutation, ValidateOptions};

#[test]
fn full_suite_passes() {
    let r = run_suite(&ValidateOptions::default());
    for p in &r.properties {
        println!("{:<24} {:>6} cases {:>4} failures worst {:.3e}", p.name, p.cases, p.failures, p.worst);
    }
    assert!(r.total_cases >= 10_000, "{}", r.total_cases);
    assert!(r.all_passed());
    assert!(r.seconds < 300.0);
}

#[test]
fn eta_sign_mutation_is_caught() {
    let r = run_suite(&ValidateOptions { kernel_cases: 500, gradient_fields: 3, mutation: Mutation::EtaSign, ..Default::default() });
    assert!(!r.get("cutoff-linear-bounds").unwrap().passed);
    assert!(r.get("truncation-below-inv-e").unwrap().passed);
}
