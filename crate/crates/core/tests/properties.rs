mod common;

use nalgebra::DMatrix;
use phdnet::clustering::{kmeans_with_objective, precluster_measurements, single_linkage, Linkage};
use phdnet::crlb::{birth_information, pcrlb_predict, pcrlb_update, position_trace};
use phdnet::dynamics::build_model;
use phdnet::metrics::{optimal_assignment, ospa, OspaParams};
use phdnet::phd::{
    adaptive_birth, merge, predict, resample, roughen, weight_update, BirthParams, DetectionRegion, LabeledMeasurement,
    Particle, ParticleSet, RougheningParams, SetKind,
};
use phdnet::{Position, StateVector};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn position(span: f64) -> impl Strategy<Value = Position> {
    (-span..span, -span..span).prop_map(|(x, y)| Position::new(x, y))
}

fn particle_set(max: usize) -> impl Strategy<Value = ParticleSet> {
    prop::collection::vec(
        (-5.0..5.0f64, -5.0..5.0f64, -1.0..1.0f64, -1.0..1.0f64, 0.001..1.0f64),
        1..max,
    )
    .prop_map(|v| {
        ParticleSet::new(
            SetKind::Persistent,
            v.into_iter()
                .map(|(x, y, vx, vy, w)| Particle::new(StateVector::new(x, y, vx, vy), w))
                .collect(),
        )
    })
}

fn relabel(labels: &[usize]) -> Vec<usize> {
    let mut map = std::collections::HashMap::new();
    labels
        .iter()
        .map(|l| {
            let next = map.len();
            *map.entry(*l).or_insert(next)
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn update_without_clutter_and_certain_detection_yields_measurement_count(
        set in particle_set(200),
        zs in prop::collection::vec(position(3.0), 1..6),
    ) {
        let meas: Vec<_> = zs.iter().map(|z| LabeledMeasurement::new(*z, 1, 0.0)).collect();
        let (updated, _) = weight_update(&set, &meas, 1.0, 4.0, DetectionRegion::Everywhere);
        prop_assert!((updated.mass() - zs.len() as f64).abs() < 1e-9 * zs.len() as f64);
    }

    #[test]
    fn each_measurement_contributes_at_most_its_cardinality_share(
        set in particle_set(200),
        zs in prop::collection::vec(position(3.0), 1..6),
        card in 1usize..4,
        p_d in 0.1..1.0f64,
        clutter in 0.0..1.0f64,
    ) {
        let meas: Vec<_> = zs.iter().map(|z| LabeledMeasurement::new(*z, card, clutter)).collect();
        let (updated, matrix) = weight_update(&set, &meas, p_d, 0.5, DetectionRegion::Everywhere);
        for j in 0..meas.len() {
            let share: f64 = (0..set.len()).map(|p| matrix.get(p, j) * set.particles[p].weight).sum();
            prop_assert!(share <= 1.0 / card as f64 + 1e-12);
        }
        let missed = (1.0 - p_d) * set.mass();
        prop_assert!(updated.mass() <= missed + zs.len() as f64 / card as f64 + 1e-9);
        prop_assert!(updated.particles.iter().all(|p| p.weight >= 0.0));
    }

    #[test]
    fn particles_outside_the_detection_disk_keep_their_weight(
        set in particle_set(200),
        zs in prop::collection::vec(position(3.0), 0..4),
        center in position(5.0),
    ) {
        let meas: Vec<_> = zs.iter().map(|z| LabeledMeasurement::new(*z, 1, 0.1)).collect();
        let region = DetectionRegion::Disk { center, radius: 2.0 };
        let (updated, _) = weight_update(&set, &meas, 0.95, 0.1, region);
        for (before, after) in set.particles.iter().zip(&updated.particles) {
            if !region.contains(&before.position()) {
                prop_assert_eq!(before.weight, after.weight);
            }
        }
    }

    #[test]
    fn resampling_preserves_rounded_mass(set in particle_set(300), n_hat in 1usize..5, n_p in 1usize..200, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let out = resample(&set, n_hat, n_p, &mut rng).unwrap();
        prop_assert_eq!(out.len(), n_hat * n_p);
        prop_assert!((out.mass() - n_hat as f64).abs() < 1e-9);
        for p in &out.particles {
            prop_assert!(set.particles.iter().any(|q| q.state == p.state && q.weight > 0.0));
        }
    }

    #[test]
    fn prediction_scales_mass_by_survival(set in particle_set(300), p_s in 0.0..1.0f64, dt in 0.1..3.0f64) {
        let model = build_model(dt, 0.01).unwrap();
        let out = predict(&set, &model, p_s);
        prop_assert!((out.mass() - p_s * set.mass()).abs() <= 1e-12 * set.mass().max(1.0));
        for (a, b) in set.particles.iter().zip(&out.particles) {
            prop_assert!((b.state[0] - (a.state[0] + dt * a.state[2])).abs() < 1e-12);
            prop_assert_eq!(b.state[2], a.state[2]);
        }
    }

    #[test]
    fn merge_adds_masses(a in particle_set(100), b in particle_set(100)) {
        let m = merge(&a, &b);
        prop_assert_eq!(m.len(), a.len() + b.len());
        prop_assert!((m.mass() - a.mass() - b.mass()).abs() < 1e-12);
    }

    #[test]
    fn roughening_keeps_weights(set in particle_set(100), seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let out = roughen(&set, &RougheningParams { k: 0.2, e_c: 6.0 }, &mut rng);
        prop_assert_eq!(out.weights(), set.weights());
    }

    #[test]
    fn newborn_mass_is_birth_probability(
        zs in prop::collection::vec(position(10.0), 1..5),
        per_candidate: bool,
        seed: u64,
    ) {
        let params = BirthParams {
            particles_per_target: 50,
            p_birth: 0.8,
            position_std: 0.3,
            velocity_std: 1.0,
            per_candidate_mass: per_candidate,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let born = adaptive_birth(&zs, &params, &mut rng);
        let want = if per_candidate { 0.8 * zs.len() as f64 } else { 0.8 };
        prop_assert_eq!(born.len(), 50 * zs.len());
        prop_assert!((born.mass() - want).abs() < 1e-9);
    }

    #[test]
    fn ospa_is_a_bounded_symmetric_metric(
        x in prop::collection::vec(position(3.0), 0..5),
        y in prop::collection::vec(position(3.0), 0..5),
        z in prop::collection::vec(position(3.0), 0..5),
    ) {
        let params = OspaParams::default();
        let dxy = ospa(&x, &y, &params);
        prop_assert!((dxy - ospa(&y, &x, &params)).abs() < 1e-12);
        prop_assert!((0.0..=params.c + 1e-12).contains(&dxy));
        prop_assert!(ospa(&x, &x, &params).abs() < 1e-12);
        prop_assert!(dxy <= ospa(&x, &z, &params) + ospa(&z, &y, &params) + 1e-9);
    }

    #[test]
    fn ospa_saturates_for_cardinality_mismatch(y in prop::collection::vec(position(3.0), 1..5)) {
        let params = OspaParams::default();
        prop_assert!((ospa(&[], &y, &params) - params.c).abs() < 1e-12);
    }

    #[test]
    fn assignment_matches_brute_force(r in 1usize..7, c in 1usize..7, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cost = DMatrix::from_fn(r, c, |_, _| rand::Rng::random_range(&mut rng, 0.0..10.0));
        let got = optimal_assignment(&cost);
        prop_assert!((got.cost - common::brute_force_assignment(&cost)).abs() < 1e-9);
        prop_assert_eq!(got.pairs.len(), r.min(c));
        let total: f64 = got.pairs.iter().map(|&(i, j)| cost[(i, j)]).sum();
        prop_assert!((total - got.cost).abs() < 1e-9);
    }

    #[test]
    fn single_linkage_matches_naive_agglomeration(
        points in prop::collection::vec(position(20.0), 1..60),
        cut in prop::option::of(0.5..6.0f64),
        cap in prop::option::of(1usize..60),
    ) {
        let cap = if cut.is_none() && cap.is_none() { Some(3) } else { cap };
        let got = single_linkage(&points, None, Linkage { max_clusters: cap, cut, weighted: false }).unwrap();
        prop_assert_eq!(relabel(&got.assignments), common::naive_single_linkage(&points, cut, cap));
        prop_assert_eq!(got.sizes.iter().sum::<usize>(), points.len());
        if let Some(m) = cap {
            prop_assert!(got.len() <= m);
        }
    }

    #[test]
    fn kmeans_objective_never_increases(points in prop::collection::vec(position(10.0), 6..120), k in 1usize..6, seed: u64) {
        let (result, objective) = kmeans_with_objective(&points, k, seed).unwrap();
        prop_assert_eq!(result.len(), k);
        prop_assert_eq!(result.sizes.iter().sum::<usize>(), points.len());
        for w in objective.windows(2) {
            prop_assert!(w[1] <= w[0] + 1e-9 * w[0].max(1.0));
        }
    }

    #[test]
    fn precluster_cardinalities_are_gated_component_sizes(points in prop::collection::vec(position(6.0), 0..40), gate in 0.2..3.0f64) {
        let got = precluster_measurements(&points, gate).unwrap();
        let labels = common::naive_single_linkage(&points, Some(gate), None);
        let want: Vec<usize> = labels.iter().map(|l| labels.iter().filter(|m| *m == l).count()).collect();
        prop_assert_eq!(got, want);
    }

    #[test]
    fn bound_recursion_matches_kalman_covariance(
        dt in 0.5..2.0f64,
        sigma_q2 in 0.001..0.1f64,
        sigma_r2 in 0.05..0.5f64,
        p_d in 0.5..1.0f64,
        q in 1usize..4,
    ) {
        let model = build_model(dt, sigma_q2).unwrap();
        let mut j = birth_information(sigma_r2, 1.0);
        for reference in common::kalman_information(&model, sigma_r2, p_d, q, 60) {
            j = pcrlb_update(&pcrlb_predict(&j, &model), q, p_d, sigma_r2);
            prop_assert!((j - reference).norm() <= 1e-8 * reference.norm());
        }
    }

    #[test]
    fn more_sensors_never_loosen_the_bound(sigma_r2 in 0.05..0.5f64, q in 1usize..4, steps in 1usize..20) {
        let model = build_model(1.0, 0.01).unwrap();
        let run = |q: usize| {
            let mut j = birth_information(sigma_r2, 1.0);
            for _ in 0..steps {
                j = pcrlb_update(&pcrlb_predict(&j, &model), q, 0.95, sigma_r2);
            }
            position_trace(&j)
        };
        prop_assert!(run(q + 1) <= run(q) + 1e-12);
    }

    #[test]
    fn prediction_alone_never_tightens_the_bound(sigma_r2 in 0.05..0.5f64, sigma_q2 in 0.0..0.1f64) {
        let model = build_model(1.0, sigma_q2).unwrap();
        let j = birth_information(sigma_r2, 1.0);
        prop_assert!(position_trace(&pcrlb_predict(&j, &model)) >= position_trace(&j) - 1e-12);
    }
}

#[test]
fn grid_accelerated_linkage_matches_naive_agglomeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..3 {
        let n = rand::Rng::random_range(&mut rng, 257..320);
        let points: Vec<Position> = (0..n)
            .map(|_| {
                Position::new(
                    rand::Rng::random_range(&mut rng, -30.0..30.0),
                    rand::Rng::random_range(&mut rng, -30.0..30.0),
                )
            })
            .collect();
        let got = single_linkage(&points, None, Linkage { max_clusters: Some(40), cut: Some(2.0), weighted: false }).unwrap();
        assert_eq!(relabel(&got.assignments), common::naive_single_linkage(&points, Some(2.0), Some(40)));
    }
}
