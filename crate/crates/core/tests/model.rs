use mup_core::model::{
    derived_constants, memory_update, next_distribution, validate::reachable_memories,
    validate_spec, KappaSchedule, KappaTail, MemoryState, ProcessSpec, SpecDocument, Violation,
};
use mup_core::simulate::UniformStream;
use proptest::prelude::*;

fn mem(p: &[u32]) -> MemoryState {
    MemoryState::from_path(p.to_vec()).unwrap()
}

fn atoms(spec: &ProcessSpec, m: &[u32]) -> Vec<(u32, f64)> {
    next_distribution(spec, &mem(m)).unwrap().atoms().to_vec()
}

#[test]
fn rm1_next_distribution_examples() {
    let spec = ProcessSpec::rm1();
    assert_eq!(atoms(&spec, &[5]), vec![(4, 0.5), (5, 0.25), (6, 0.25)]);
    assert_eq!(
        atoms(&spec, &[4, 5, 6]),
        vec![(3, 0.875), (4, 0.0625), (5, 0.0625)]
    );
    let third = 1.0 / 3.0;
    assert_eq!(atoms(&spec, &[2]), vec![(2, third), (3, third), (4, third)]);
    assert_eq!(atoms(&spec, &[0]), vec![(0, third), (1, third), (2, third)]);
}

#[test]
fn rm1_ceiling_folds_into_staying() {
    let spec = ProcessSpec::rm1();
    assert_eq!(atoms(&spec, &[12]), vec![(11, 0.5), (12, 0.5)]);
    assert_eq!(
        atoms(&spec, &[11, 12]),
        vec![(10, 0.75), (11, 0.125), (12, 0.125)]
    );
    assert!(next_distribution(&spec, &mem(&[13])).is_err());
}

#[test]
fn memory_update_examples() {
    assert_eq!(memory_update(&mem(&[5]), 7), mem(&[7]));
    assert_eq!(memory_update(&mem(&[5]), 4), mem(&[4, 5]));
    assert_eq!(memory_update(&mem(&[4, 5, 6]), 4), mem(&[4]));
    assert_eq!(memory_update(&mem(&[4, 5, 6]), 2), mem(&[2, 4, 5, 6]));
}

#[test]
fn rm1_validates_with_rho_one_third() {
    let report = validate_spec(&ProcessSpec::rm1()).unwrap();
    assert!(report.is_valid(), "{:?}", report.violations);
    assert!((report.rho - 1.0 / 3.0).abs() < 1e-15);
}

#[test]
fn rm1_down_continuation_is_exact() {
    let spec = ProcessSpec::rm1();
    let memories = reachable_memories(&spec, 1_000_000).unwrap();
    let mut checked = 0;
    for m in memories.iter().filter(|m| m.current() > 3) {
        let d = next_distribution(&spec, m).unwrap();
        let f = m.fall_length() as i32;
        let expected = 1.0 - 0.5 * 0.5f64.powi(f);
        assert!((d.mass_below(m.current()) - expected).abs() <= 1e-15, "{m}");
        checked += 1;
    }
    // 9 singletons above the floor plus 36 falls ending above it
    assert_eq!(checked, 45);
}

#[test]
fn doctored_floor_kernel_breaks_irreducibility() {
    // table copy of RM1 whose floor jumps straight to x+1
    let rm1 = ProcessSpec::rm1();
    let up = (0..=12u32)
        .map(|x| {
            let d = if x <= 3 {
                vec![(x + 1, 1.0)]
            } else {
                next_distribution(&rm1, &MemoryState::singleton(x))
                    .unwrap()
                    .atoms()
                    .to_vec()
            };
            (x, d)
        })
        .collect();
    let spec = ProcessSpec::from_document(SpecDocument::Table {
        floor: 3,
        ceiling: 12,
        up,
        down_by_fall: (1..=9)
            .map(|f| {
                let s = 0.5 * 0.5f64.powi(f as i32);
                (f, vec![(-1, 1.0 - s), (0, s / 2.0), (1, s / 2.0)])
            })
            .collect(),
        floor_resets: true,
        kappa: KappaSchedule::geometric(0.5, 0.5),
        m1: Some(1.0),
    })
    .unwrap();
    let report = validate_spec(&spec).unwrap();
    assert_eq!(report.rho, 0.0);
    assert!(report
        .violations
        .iter()
        .any(|v| matches!(v, Violation::Irreducibility { .. })));
}

#[test]
fn malformed_distribution_is_structural() {
    let text = r#"{"type":"table","N":0,"Nbar":1,
        "up":{"0":[[0,0.5],[1,0.4]],"1":[[0,0.5],[1,0.5]]},
        "down_by_fall":{"1":[[-1,1.0]]},
        "kappa":{"values":[0.5],"tail":{"kind":"one"}}}"#;
    assert!(matches!(
        ProcessSpec::from_json(text),
        Err(mup_core::model::ModelError::Malformed(_))
    ));
}

fn two_state_with(kappa: KappaSchedule) -> ProcessSpec {
    ProcessSpec::from_document(SpecDocument::Table {
        floor: 0,
        ceiling: 1,
        up: [(0, vec![(0, 0.5), (1, 0.5)]), (1, vec![(0, 0.5), (1, 0.5)])].into(),
        down_by_fall: [(1, vec![(-1, 1.0)])].into(),
        floor_resets: true,
        kappa,
        m1: None,
    })
    .unwrap()
}

/// Independent walk driven through the public one-step API.
fn check_walk(spec: &ProcessSpec, x0: u32, steps: usize, seed: u64) -> Result<(), TestCaseError> {
    let ceiling = spec.ceiling().unwrap();
    let mut u = UniformStream::new(seed);
    let mut m = MemoryState::singleton(x0);
    let mut history = vec![x0];
    for _ in 0..steps {
        let d = next_distribution(spec, &m).unwrap();
        let x = d.sample(u.next_uniform());
        let prev = m.current();
        m = memory_update(&m, x);
        history.push(x);
        let p = m.path();
        prop_assert!(p.windows(2).all(|w| w[0] < w[1]));
        prop_assert!(p.iter().all(|&s| s <= ceiling));
        prop_assert_eq!(m.is_singleton(), x >= prev);
        if prev == 0 {
            prop_assert!(m.is_singleton());
        }
        // the path is exactly the values since the fall began
        let k = p.len();
        let tail: Vec<u32> = history[history.len() - k..].iter().rev().copied().collect();
        prop_assert_eq!(p, &tail[..]);
        if history.len() > k {
            let before = history[history.len() - k - 1];
            prop_assert!(before <= p[k - 1]);
        }
    }
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn memory_invariants_on_long_walks(seed in any::<u64>(), x0 in 0u32..=12) {
        check_walk(&ProcessSpec::rm1(), x0, 100_000, seed)?;
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn next_distribution_is_a_distribution(
        q in 0.0f64..0.99,
        beta in 0.0f64..=1.0,
        floor in 0u32..5,
        span in 1u32..10,
        subset in proptest::collection::btree_set(0u32..15, 1..6),
    ) {
        let ceiling = floor + span;
        let spec = ProcessSpec::reference(floor, Some(ceiling), q, beta).unwrap();
        let path: Vec<u32> = subset.into_iter().filter(|&s| s <= ceiling).collect();
        prop_assume!(!path.is_empty());
        let m = MemoryState::from_path(path).unwrap();
        let d = next_distribution(&spec, &m).unwrap();
        let total: f64 = d.probs().sum();
        prop_assert!((total - 1.0).abs() <= 1e-12);
        prop_assert!(d.probs().all(|p| p >= 0.0));
        let support: Vec<u32> = d.support().collect();
        prop_assert!(support.windows(2).all(|w| w[0] < w[1]));
        prop_assert!(d.max_state() <= ceiling);
    }

    #[test]
    fn raising_kappa_helps(
        mut values in proptest::collection::vec(0.05f64..0.95, 1..6),
        bump in 0.0f64..0.04,
        at in 0usize..6,
    ) {
        values.sort_by(f64::total_cmp);
        let at = at % values.len();
        let base = KappaSchedule { values: values.clone(), tail: Some(KappaTail::Geometric { c: 0.05, ratio: 0.5 }) };
        // keep the sequence nondecreasing and below the tail
        let mut raised = values.clone();
        for v in raised.iter_mut().skip(at) {
            *v = (*v + bump).min(0.95);
        }
        let raised = KappaSchedule { values: raised, tail: base.tail };
        let a = derived_constants(&two_state_with(base), 1e-12).unwrap();
        let b = derived_constants(&two_state_with(raised), 1e-12).unwrap();
        prop_assert!(b.kappa_bar_inf.value >= a.kappa_bar_inf.value - 1e-12);
        prop_assert!(b.m3.value <= a.m3.value + 1e-12);
    }
}
