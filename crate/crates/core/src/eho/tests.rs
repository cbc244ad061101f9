use super::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};

fn cfg(clans: usize, per: usize, gens: usize, seed: u64) -> EhoConfig {
    EhoConfig {
        clan_count: clans,
        per_clan_size: per,
        max_generations: gens,
        seed,
        ..EhoConfig::default()
    }
}

fn sphere4() -> SearchSpace {
    SearchSpace::uniform(4, 0.0, 1.0).unwrap()
}

#[test]
fn init_population_shapes() {
    let space = sphere4();
    let pop = init_population(&space, &cfg(12, 10, 0, 1)).unwrap();
    assert_eq!(pop.clans.len(), 12);
    assert_eq!(pop.size(), 120);
    assert!(pop.candidates().all(|c| c.fitness.is_none()));
    assert!(pop.candidates().flat_map(|c| &c.position).all(|u| (0.0..=1.0).contains(u)));
    assert_eq!(pop, init_population(&space, &cfg(12, 10, 0, 1)).unwrap());
    let single = EhoConfig { worst_count: 0, ..cfg(1, 1, 0, 1) };
    assert_eq!(init_population(&space, &single).unwrap().size(), 1);
}

#[test]
fn config_validation() {
    assert!(cfg(2, 1, 0, 0).validate().is_err(), "worst_count 1 needs per_clan >= 2");
    assert!(EhoConfig { beta_scale: 1.5, ..EhoConfig::default() }.validate().is_err());
    assert!(EhoConfig { clan_count: 0, ..EhoConfig::default() }.validate().is_err());
    assert!(EhoConfig::default().validate().is_ok());
}

#[test]
fn accuracy_fitness_examples() {
    assert_eq!(accuracy_fitness(&[0.0, 1.0, 2.0], &[0.0, 1.0, 2.0], 0.5), Ok(1.0));
    assert_eq!(accuracy_fitness(&[1.0, 2.0], &[0.0, 1.0], 0.5), Ok(0.0));
    assert_eq!(accuracy_fitness(&[0.0, 1.0, 2.0, 2.0], &[0.0, 1.0, 2.0, 1.0], 1.0), Ok(0.75));
    assert_eq!(accuracy_fitness(&[0.0], &[0.0, 1.0], 0.5), Err(EhoError::LengthMismatch(1, 2)));
    assert_eq!(accuracy_fitness(&[], &[], 0.5), Err(EhoError::NoSamples));
    // a prediction above the target must not count as a hit
    assert_eq!(accuracy_fitness(&[5.0], &[0.0], 0.5), Ok(0.0));
}

#[test]
fn clan_update_examples() {
    assert_eq!(clan_update(&[0.3, 0.7], &[0.3, 0.7], 0.5, || 0.9), vec![0.3, 0.7]);
    let full = clan_update(&[0.1, 0.9], &[0.6, 0.2], 1.0, || 1.0);
    assert!((full[0] - 0.6).abs() < 1e-15 && (full[1] - 0.2).abs() < 1e-15);
    let p = clan_update(&[0.2], &[0.8], 0.5, || 0.4);
    assert!((p[0] - 0.32).abs() < 1e-15);
}

#[test]
fn matriarch_update_examples() {
    let p = matriarch_update(&[&[0.1][..], &[0.2], &[0.3]], 1.0);
    assert!((p[0] - 0.2).abs() < 1e-15);
    assert_eq!(matriarch_update(&[&[0.1][..], &[0.2], &[0.3]], 0.0), vec![0.0]);
    let p = matriarch_update(&[&[0.4][..], &[0.8]], 0.5);
    assert!((p[0] - 0.3).abs() < 1e-15);
}

#[test]
fn reseed_examples() {
    let space = SearchSpace::new(vec![
        ("a".into(), Dimension::Continuous { min: 0.0, max: 10.0 }),
        ("k".into(), Dimension::Discrete { values: vec![3.0, 5.0, 7.0] }),
    ])
    .unwrap();
    assert_eq!(space.decode(&reseed_position(&space, || 0.0)), vec![0.0, 3.0]);
    // raw value 11 clamps to the upper bound
    assert_eq!(space.decode(&reseed_position(&space, || 1.0)), vec![10.0, 7.0]);
    // index 0.5 * 3 = 1.5 floors to index 1
    assert_eq!(space.decode(&reseed_position(&space, || 0.5)), vec![5.5, 5.0]);
}

#[test]
fn replace_worst_keeps_best() {
    let space = sphere4();
    let mut rng = SeededRng::seed_from_u64(3);
    let mut clan: Vec<Candidate> = (0..5)
        .map(|i| Candidate {
            position: vec![i as f64 / 5.0; 4],
            fitness: Some(i as f64),
        })
        .collect();
    let before = clan.clone();
    replace_worst(&mut clan, &space, 2, || rng.random::<f64>());
    assert_ne!(clan[0].position, before[0].position);
    assert_ne!(clan[1].position, before[1].position);
    assert!(clan[0].fitness.is_none() && clan[1].fitness.is_none());
    assert_eq!(clan[2..], before[2..]);
}

#[test]
fn sphere_converges_and_beats_random_search() {
    let space = sphere4();
    let c = cfg(3, 10, 50, 7);
    let res = optimize(negative_sphere, &space, &c).unwrap();
    assert!(res.best_fitness >= -1e-2, "best {}", res.best_fitness);
    for x in &res.best_decoded {
        assert!((x - 0.5).abs() <= 0.1);
    }
    // equal-budget random search as a sanity baseline
    let mut rng = rng_from_seed(7);
    let random_best = (0..res.evaluations)
        .map(|_| {
            let x: Vec<f64> = (0..4).map(|_| rng.random::<f64>()).collect();
            negative_sphere(&x).unwrap()
        })
        .fold(f64::NEG_INFINITY, f64::max);
    assert!(res.best_fitness >= random_best, "{} < random {}", res.best_fitness, random_best);
}

#[test]
fn discrete_optimum_found_within_ten_generations() {
    let space = SearchSpace::new(vec![("k".into(), Dimension::Discrete { values: vec![3.0, 5.0, 7.0] })]).unwrap();
    let res = optimize(|x: &[f64]| Ok::<_, String>(x[0]), &space, &cfg(3, 10, 10, 11)).unwrap();
    assert_eq!(res.best_decoded, vec![7.0]);
    assert_eq!(res.best_fitness, 7.0);
}

#[test]
fn zero_generations_returns_initial_best() {
    let space = sphere4();
    let c = cfg(3, 4, 0, 5);
    let res = optimize(negative_sphere, &space, &c).unwrap();
    let pop = init_population(&space, &c).unwrap();
    let oracle = pop
        .candidates()
        .map(|c| negative_sphere(&c.position).unwrap())
        .fold(f64::NEG_INFINITY, f64::max);
    assert_eq!(res.best_fitness, oracle);
    assert_eq!(res.history.len(), 1);
    assert_eq!(res.evaluations, 12);
}

#[test]
fn failures_score_negative_infinity() {
    let space = sphere4();
    let res = optimize(
        |x: &[f64]| if x[0] < 0.5 { Err("refused") } else { negative_sphere(x).map_err(|_| "") },
        &space,
        &cfg(2, 5, 5, 1),
    )
    .unwrap();
    assert!(res.best_fitness.is_finite());
    assert!(res.best_decoded[0] >= 0.5);

    let err = optimize(|_: &[f64]| Err::<f64, _>("boom"), &space, &cfg(2, 5, 5, 1)).unwrap_err();
    assert!(matches!(err, EhoError::AllFailed { generation: 0, .. }));
}

#[test]
fn nan_fitness_is_a_failure() {
    let space = sphere4();
    let res = optimize(
        |x: &[f64]| Ok::<_, String>(if x[1] > 0.5 { f64::NAN } else { x[1] }),
        &space,
        &cfg(2, 5, 3, 2),
    )
    .unwrap();
    assert!(res.best_fitness <= 0.5);
}

#[test]
fn history_csv_layout() {
    let res = optimize(negative_sphere, &SearchSpace::uniform(2, 0.0, 1.0).unwrap(), &cfg(2, 3, 2, 0)).unwrap();
    let csv = res.history_csv();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "generation,best_fitness,mean_fitness,best_position_decoded");
    assert_eq!(lines.len(), 4);
    assert!(lines[3].starts_with("2,"));
    assert_eq!(lines[3].split(',').nth(3).unwrap().split(';').count(), 2);
}

#[test]
fn frozen_members_are_fixed_points() {
    let space = sphere4();
    let c = EhoConfig {
        beta_scale: 0.0,
        worst_count: 0,
        ..cfg(2, 5, 0, 9)
    };
    let mut pop = init_population(&space, &c).unwrap();
    let mut rng = rng_from_seed(1);
    for clan in pop.clans.iter_mut() {
        let best = clan[0].position.clone();
        for cand in clan.iter().skip(1) {
            assert_eq!(clan_update(&cand.position, &best, 0.0, || rng.random::<f64>()), cand.position);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn best_so_far_monotone_and_reproducible(seed in 0u64..1000, clans in 1usize..4, per in 2usize..6) {
        let space = SearchSpace::uniform(3, -5.12, 5.12).unwrap();
        let c = cfg(clans, per, 8, seed);
        let a = optimize(negative_rastrigin, &space, &c).unwrap();
        let b = optimize(negative_rastrigin, &space, &c).unwrap();
        prop_assert_eq!(&a, &b);
        for w in a.history.windows(2) {
            prop_assert!(w[1].best_fitness >= w[0].best_fitness);
        }
        prop_assert!(a.best_position.iter().all(|u| (0.0..=1.0).contains(u)));
    }

    #[test]
    fn operators_stay_in_unit_cube(
        e in prop::collection::vec(0.0f64..=1.0, 3),
        b in prop::collection::vec(0.0f64..=1.0, 3),
        beta in 0.0f64..=1.0,
        g in 0.0f64..=1.0,
        lambda in 0.0f64..=1.0,
    ) {
        prop_assert!(clan_update(&e, &b, beta, || g).iter().all(|u| (0.0..=1.0).contains(u)));
        prop_assert!(matriarch_update(&[&e, &b], lambda).iter().all(|u| (0.0..=1.0).contains(u)));
        let space = SearchSpace::new(vec![
            ("c".into(), Dimension::Continuous { min: -2.0, max: 3.0 }),
            ("d".into(), Dimension::integers(1, 4)),
        ]).unwrap();
        prop_assert!(reseed_position(&space, || g).iter().all(|u| (0.0..=1.0).contains(u)));
    }
}
