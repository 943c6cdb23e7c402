use mup_core::analysis::{
    exact_projection_estimate, occupation_estimate, regen_stationary_estimate, tv_distance,
    verify_bounds, verify_bounds_with_constants, Claim, DEFAULT_CYCLE_CAP,
};
use mup_core::exact::{extended_chain, ExactOptions};
use mup_core::model::{derived_constants, ProcessSpec, DEFAULT_TAIL_TOLERANCE};
use rayon::prelude::*;

fn exact_marginal(spec: &ProcessSpec) -> Vec<f64> {
    let chain = extended_chain(spec, &ExactOptions::default()).unwrap();
    exact_projection_estimate(spec, &chain).unwrap().probs
}

#[test]
fn tv_examples() {
    assert_eq!(tv_distance(&[0.2, 0.8], &[0.2, 0.8]).unwrap(), 0.0);
    assert_eq!(tv_distance(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 1.0);
    assert_eq!(tv_distance(&[0.5, 0.5], &[1.0, 0.0]).unwrap(), 0.5);
    assert!(tv_distance(&[1.0], &[0.5, 0.5]).is_err());
}

/// Regeneration error shrinks with more cycles. Seeds are spaced so the
/// cycle seeds of different trials never overlap.
#[test]
fn regeneration_improves_with_cycles() {
    let spec = ProcessSpec::rm1();
    let exact = exact_marginal(&spec);
    let wins = (0..100u64)
        .into_par_iter()
        .filter(|&trial| {
            let base = trial << 32;
            let big = regen_stationary_estimate(&spec, 10_000, base, DEFAULT_CYCLE_CAP).unwrap();
            let small =
                regen_stationary_estimate(&spec, 100, base + (1 << 31), DEFAULT_CYCLE_CAP).unwrap();
            tv_distance(&big.probs, &exact).unwrap() < tv_distance(&small.probs, &exact).unwrap()
        })
        .count();
    assert!(wins >= 95, "{wins} of 100");
}

#[test]
fn estimators_agree() {
    let spec = ProcessSpec::rm1();
    let regen = regen_stationary_estimate(&spec, 10_000, 1, DEFAULT_CYCLE_CAP).unwrap();
    let a = occupation_estimate(&spec, 5, 10_000_000, 10_000, 1).unwrap();
    let b = occupation_estimate(&spec, 5, 10_000_000, 10_000, 2).unwrap();
    assert!(tv_distance(&a.probs, &b.probs).unwrap() <= 0.01);
    assert!(tv_distance(&regen.probs, &a.probs).unwrap() <= 0.02);
    assert!((regen.probs.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
}

#[test]
fn bound_records_are_reproducible() {
    let spec = ProcessSpec::rm1();
    let a = verify_bounds(&spec, &[4, 8, 12], 2_000, 100_000, 7).unwrap();
    let b = verify_bounds(&spec, &[4, 8, 12], 2_000, 100_000, 7).unwrap();
    assert_eq!(
        serde_json::to_string(&a).unwrap(),
        serde_json::to_string(&b).unwrap()
    );
    for r in &a.records {
        assert_eq!(r.replications, 2_000);
        assert_eq!(r.pass, r.margin.map_or(r.reliable, |m| m >= 0.0));
        if let Some(bound) = r.bound {
            assert_eq!(r.pass, r.estimate.ci_high <= bound);
        }
    }
    assert_eq!(a.lemma2_skipped, vec![12]);
    assert!(a.record(Claim::Theorem1Tau, 12).unwrap().exact.is_some());
}

#[test]
fn doctored_m2_fails_lemma1() {
    let spec = ProcessSpec::rm1();
    let mut c = derived_constants(&spec, DEFAULT_TAIL_TOLERANCE).unwrap();
    c.m2 = 0.01;
    let report = verify_bounds_with_constants(&spec, &c, &[4, 8], 2_000, 100_000, 3).unwrap();
    for r in report.records_for(Claim::Lemma1) {
        assert!(!r.pass);
        assert!(r.margin.unwrap() < 0.0);
    }
    assert!(!report.all_pass());
}

#[test]
fn heavy_censoring_is_flagged() {
    let spec = ProcessSpec::rm1();
    let report = verify_bounds(&spec, &[12], 200, 3, 0).unwrap();
    let tau = report.record(Claim::Theorem1Tau, 12).unwrap();
    assert!(tau.censored > 0);
    assert!(!tau.reliable);
    assert!(report.unreliable);
}
