//! Distributional checks of the sensor model at a 0.1% significance level.

use phdnet::dynamics::{ActiveTarget, TargetState};
use phdnet::network::Node;
use phdnet::sensing::{sense, SensorParams, TruthTag};
use phdnet::Position;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

const DRAWS: usize = 20_000;

fn node() -> Node {
    Node {
        id: 1,
        position: Position::new(2.0, -1.0),
        r_sen: 6.0,
        r_com: 12.0,
    }
}

fn target(x: f64, y: f64) -> ActiveTarget {
    ActiveTarget {
        id: 7,
        state: TargetState::new(x, y, 0.5, 0.0),
    }
}

fn two_sided_z(observed: f64, mean: f64, sd: f64) -> f64 {
    let z = (observed - mean) / sd;
    2.0 * (1.0 - Normal::standard().cdf(z.abs()))
}

#[test]
fn detection_fraction_matches_p_d() {
    let params = SensorParams {
        sigma_r2: 0.1,
        p_detect: 0.95,
        clutter_rate: 0.0,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let hits: usize = (0..DRAWS)
        .map(|s| sense(&node(), &[target(3.0, 0.0)], &params, s, &mut rng).len())
        .sum();
    let n = DRAWS as f64;
    let sd = (n * 0.95 * 0.05).sqrt();
    assert!(two_sided_z(hits as f64, n * 0.95, sd) > 1e-3, "{hits} detections");
}

#[test]
fn targets_out_of_range_are_never_detected() {
    let params = SensorParams {
        sigma_r2: 0.1,
        p_detect: 1.0,
        clutter_rate: 0.0,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for s in 0..1000 {
        assert!(sense(&node(), &[target(8.5, 0.0)], &params, s, &mut rng).is_empty());
    }
}

#[test]
fn clutter_count_is_poisson_and_inside_the_disk() {
    let lambda = 0.4;
    let params = SensorParams {
        sigma_r2: 0.1,
        p_detect: 0.95,
        clutter_rate: lambda,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let n = node();
    let mut counts = Vec::with_capacity(DRAWS);
    let mut inner = 0usize;
    let mut total = 0usize;
    for s in 0..DRAWS {
        let out = sense(&n, &[], &params, s, &mut rng);
        for m in &out {
            assert_eq!(m.truth, TruthTag::Clutter);
            let r = (m.z - n.position).norm();
            assert!(r <= n.r_sen + 1e-12);
            inner += usize::from(r <= n.r_sen / 2.0);
            total += 1;
        }
        counts.push(out.len() as f64);
    }
    let mean = counts.iter().sum::<f64>() / DRAWS as f64;
    let var = counts.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / (DRAWS - 1) as f64;
    assert!(two_sided_z(mean, lambda, (lambda / DRAWS as f64).sqrt()) > 1e-3, "mean {mean}");
    assert!((var / mean - 1.0).abs() < 0.1, "dispersion {}", var / mean);
    // Uniform over the disk puts a quarter of the points in the inner half radius.
    let t = total as f64;
    assert!(two_sided_z(inner as f64, t / 4.0, (t * 0.25 * 0.75).sqrt()) > 1e-3);
}

#[test]
fn measurement_noise_is_isotropic_gaussian() {
    let sigma_r2 = 0.3;
    let params = SensorParams {
        sigma_r2,
        p_detect: 1.0,
        clutter_rate: 0.0,
    };
    let truth = Position::new(3.0, 1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut stat = 0.0;
    let mut cross = 0.0;
    for s in 0..DRAWS {
        let out = sense(&node(), &[target(truth.x, truth.y)], &params, s, &mut rng);
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].truth, TruthTag::Target(7));
        let e = out[0].z - truth;
        stat += e.norm_squared() / sigma_r2;
        cross += e.x * e.y / sigma_r2;
    }
    // Sum of squared standardized residuals is chi-square with 2·DRAWS dof.
    let dof = 2.0 * DRAWS as f64;
    let p = ChiSquared::new(dof).unwrap().cdf(stat);
    assert!(p > 5e-4 && p < 1.0 - 5e-4, "chi-square p = {p}");
    assert!(two_sided_z(cross, 0.0, (DRAWS as f64).sqrt()) > 1e-3, "correlation sum {cross}");
}
