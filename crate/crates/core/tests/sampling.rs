//! Uniformity of sphere sampling and Haar rotations, checked against the
//! exact cap measure.

use std::f64::consts::FRAC_PI_3;

use chroma::rng::{stream, tag};
use chroma::sphere::{
    angle_between, cap_measure, fill_random_point, random_rotation, random_rotation_with, SphereSpec,
};

const SAMPLES: usize = 1_000_000;

fn within_three_sigma(hits: usize, samples: usize, p: f64) -> bool {
    let sigma = (p * (1.0 - p) / samples as f64).sqrt();
    (hits as f64 / samples as f64 - p).abs() <= 3.0 * sigma
}

#[test]
fn cap_fraction_matches_measure() {
    let spec = SphereSpec::new(2, 1.7).unwrap();
    let p = cap_measure(2, FRAC_PI_3).unwrap();
    assert!((p - 0.25).abs() < 1e-14);
    let pole = spec.pole(2);
    let rot = random_rotation(&spec, 9);
    let mut rng = stream(1, tag::POINT, 0);
    let (mut x, mut y) = (vec![0.0; 3], vec![0.0; 3]);
    let (mut plain, mut rotated) = (0, 0);
    for _ in 0..SAMPLES {
        fill_random_point(&spec, &mut rng, &mut x);
        rot.apply_into(&x, &mut y);
        plain += (angle_between(&x, pole.coords()) <= FRAC_PI_3) as usize;
        rotated += (angle_between(&y, pole.coords()) <= FRAC_PI_3) as usize;
    }
    assert!(within_three_sigma(plain, SAMPLES, 0.25), "{plain}");
    assert!(within_three_sigma(rotated, SAMPLES, 0.25), "{rotated}");
}

#[test]
fn haar_images_of_a_point_are_uniform() {
    for n in [2usize, 4] {
        let spec = SphereSpec::new(n, 1.0).unwrap();
        let p = cap_measure(n, 1.0).unwrap();
        let w = spec.pole(0);
        let mut rng = stream(2, tag::HAAR, n as u64);
        let mut y = vec![0.0; n + 1];
        let samples = 200_000;
        let hits = (0..samples)
            .filter(|_| {
                random_rotation_with(n + 1, &mut rng).apply_into(w.coords(), &mut y);
                angle_between(&y, spec.pole(n).coords()) <= 1.0
            })
            .count();
        assert!(within_three_sigma(hits, samples, p), "n = {n}: {hits}");
    }
}
