mod common;

use apm_core::economy::{Agent, Belief, ContinuumEconomy, DiscreteEconomy, Economy, GroupId, JITTER};
use apm_core::Error;
use approx::assert_relative_eq;
use proptest::prelude::*;

#[test]
fn discrete_json_accepts_names_and_indices() {
    let e = Economy::from_json(
        r#"{"kind": "discrete", "groups": ["a", "b"], "capacity": 2,
            "agents": [{"score": 0.9, "group": "a"}, {"score": 0.4, "group": 1}, {"score": 0.7, "group": "b"}]}"#,
    )
    .unwrap();
    let d = e.as_discrete().unwrap();
    assert_eq!(d.group_size(GroupId(1)), 2);
    assert_eq!(d.ranked(GroupId(1)), &[2, 1]);
}

#[test]
fn economy_json_roundtrips() {
    let mut rng = common::rng(3);
    for _ in 0..10 {
        let d = Economy::Discrete(common::random_discrete(&mut rng, 3, 12));
        let back = Economy::from_json(&d.to_json().unwrap()).unwrap();
        assert_eq!(back.as_discrete().unwrap().agents(), d.as_discrete().unwrap().agents());
        let c = Economy::Continuum(common::random_continuum(&mut rng, 2, 50));
        let back = Economy::from_json(&c.to_json().unwrap()).unwrap();
        assert_eq!(back.as_continuum().unwrap().densities(), c.as_continuum().unwrap().densities());
        assert_eq!(back.capacity(), c.capacity());
    }
}

#[test]
fn malformed_economies_are_rejected() {
    let cases = [
        r#"{"kind": "discrete", "groups": ["a"], "capacity": 1, "agents": [{"score": 1.5, "group": 0}]}"#,
        r#"{"kind": "discrete", "groups": ["a"], "capacity": 3, "agents": [{"score": 0.5, "group": 0}]}"#,
        r#"{"kind": "discrete", "groups": ["a"], "capacity": 1, "agents": [{"score": 0.5, "group": "z"}]}"#,
        r#"{"kind": "discrete", "groups": ["a"], "capacity": 1,
            "agents": [{"score": 0.5, "group": 0}, {"score": 0.5, "group": 0}]}"#,
        r#"{"kind": "continuum", "groups": ["a"], "capacity": 0.5, "density": {"bins": 3, "values": [[1.0, 1.0]]}}"#,
        r#"{"kind": "continuum", "groups": ["a"], "capacity": 0.5, "density": {"bins": 2, "values": [[1.0, -1.0]]}}"#,
        r#"{"kind": "continuum", "groups": ["a", "b"], "capacity": 0.5, "density": {"bins": 1, "values": [[1.0]]}}"#,
        r#"{"kind": "lottery"}"#,
    ];
    for text in cases {
        let err = Economy::from_json(text).unwrap_err();
        assert!(matches!(err, Error::Invalid(_) | Error::Json(_)), "{text}: {err:?}");
    }
    let thin = r#"{"kind": "continuum", "groups": ["a"], "capacity": 2.0, "density": {"bins": 2, "values": [[1.0, 1.0]]}}"#;
    assert!(matches!(Economy::from_json(thin), Err(Error::Infeasible { .. })));
}

#[test]
fn jitter_breaks_ties_deterministically() {
    let agents = vec![Agent::new(0.5, 0), Agent::new(0.5, 1), Agent::new(0.5, 0)];
    assert!(DiscreteEconomy::new(2, agents.clone(), 2).is_err());
    let a = DiscreteEconomy::with_jitter(2, agents.clone(), 2, 9).unwrap();
    let b = DiscreteEconomy::with_jitter(2, agents, 2, 9).unwrap();
    assert_eq!(a.agents(), b.agents());
    assert!(a.agents().iter().all(|x| (x.score - 0.5).abs() <= JITTER));
}

#[test]
fn belief_files_resolve_relative_paths() {
    let dir = tempfile::tempdir().unwrap();
    let state = Economy::Continuum(ContinuumEconomy::uniform(&[0.5, 0.5], 10, 0.3).unwrap());
    std::fs::write(dir.path().join("s.json"), state.to_json().unwrap()).unwrap();
    let text = r#"{"states": [{"weight": 0.5, "economy": "s.json"},
                              {"weight": 0.5, "economy": {"kind": "continuum", "groups": ["x", "y"], "capacity": 0.3,
                                                          "density": {"bins": 1, "values": [[0.2], [0.8]]}}}]}"#;
    let belief = Belief::from_json(text, Some(dir.path())).unwrap();
    assert_eq!(belief.len(), 2);
    let back = Belief::from_json(&belief.to_json().unwrap(), None).unwrap();
    assert_eq!(back.len(), 2);
    assert!(Belief::from_json(text, None).is_err());
}

#[test]
fn beliefs_validate_weights_and_shapes() {
    let e = |q: f64| Economy::Continuum(ContinuumEconomy::uniform(&[0.5, 0.5], 10, q).unwrap());
    assert!(Belief::new(vec![]).is_err());
    assert!(Belief::new(vec![(e(0.3), 0.5), (e(0.3), 0.4)]).is_err());
    assert!(Belief::new(vec![(e(0.3), 1.2), (e(0.3), -0.2)]).is_err());
    let three = Economy::Continuum(ContinuumEconomy::uniform(&[0.3, 0.3, 0.4], 10, 0.3).unwrap());
    assert!(Belief::heterogeneous(vec![(e(0.3), 0.5), (three, 0.5)]).is_err());
    assert!(Belief::uniform(vec![e(0.3), e(0.3), e(0.3)]).is_ok());
}

proptest! {
    #[test]
    fn cutoff_for_mass_inverts_mass_above(
        masses in proptest::collection::vec(0.1f64..2.0, 1..4),
        bins in 1usize..200,
        share in 0.0f64..1.0,
    ) {
        let e = ContinuumEconomy::uniform(&masses, bins, masses[0] * 0.5).unwrap();
        let m = GroupId(0);
        let target = share * e.group_mass(m);
        let c = e.cutoff_for_mass(m, target);
        prop_assert!((e.mass_above(m, c) - target).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&c));
    }

    #[test]
    fn mass_between_is_additive(lo in 0.0f64..1.0, mid in 0.0f64..1.0, hi in 0.0f64..1.0) {
        let mut v = [lo, mid, hi];
        v.sort_by(f64::total_cmp);
        let e = ContinuumEconomy::from_fn(1, 37, 0.1, |_, s| 1.0 + s).unwrap();
        let g = GroupId(0);
        let whole = e.mass_between(g, v[0], v[2]);
        let parts = e.mass_between(g, v[0], v[1]) + e.mass_between(g, v[1], v[2]);
        prop_assert!((whole - parts).abs() < 1e-12);
    }
}

#[test]
fn uniform_masses_and_tails() {
    let e = ContinuumEconomy::uniform(&[0.4, 0.6], 100, 0.5).unwrap();
    assert_relative_eq!(e.total_mass(), 1.0, epsilon = 1e-12);
    assert_relative_eq!(e.mass_above(GroupId(1), 0.75), 0.15, epsilon = 1e-12);
    assert_relative_eq!(e.score_above(GroupId(0), 0.5, &|s| s), 0.4 * 0.375, epsilon = 1e-12);
}
