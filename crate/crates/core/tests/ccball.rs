use std::f64::consts::PI;

use hypoweyl::ccball::{
    adaptive_bins, ball_volume, ball_volume_bins, doubling_exponent, integrate, lambda_compare,
    sample_ball, unit_controls, BallCloud, BallError, ClassNorm, Domain, Integrator, SampleParams,
};
use hypoweyl::vfalgebra::{parse_field, CompiledField, VectorField};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn fields(src: &[&str], n: usize) -> Vec<VectorField> {
    src.iter().map(|s| parse_field(s, n).unwrap()).collect()
}

fn heis() -> Vec<VectorField> {
    fields(&["d/dx", "d/dy + x*d/dz"], 3)
}

fn grushin() -> Vec<VectorField> {
    fields(&["d/dx", "sin(x)*d/dy"], 2)
}

fn params(n_paths: usize, seed: u64) -> SampleParams {
    SampleParams {
        n_paths,
        n_steps: 32,
        pieces: 2,
        seed,
    }
}

fn cloud_of(points: Vec<Vec<f64>>) -> BallCloud {
    BallCloud {
        center: vec![0.0; points[0].len()],
        delta: 1.0,
        class: ClassNorm::C2,
        endpoints: points,
        discarded: 0,
        seed: 0,
        integrator: Integrator {
            method: "none".into(),
            steps: 0,
        },
    }
}

fn coord_volume(c: &BallCloud) -> f64 {
    ball_volume_bins(c, &adaptive_bins(c).unwrap(), None)
        .unwrap()
        .0
}

#[test]
fn euclidean_cloud_stays_in_disc() {
    let c = sample_ball(
        &[1.0, 2.0],
        0.2,
        &fields(&["d/dx", "d/dy"], 2),
        ClassNorm::C2,
        &params(5000, 3),
        &Domain::Plane,
    )
    .unwrap();
    assert_eq!(c.endpoints.len(), 5000);
    for e in &c.endpoints {
        assert!(((e[0] - 1.0).hypot(e[1] - 2.0)) <= 0.2 + 1e-9);
    }
}

#[test]
fn uniform_square_volume() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let pts: Vec<Vec<f64>> = (0..1_000_000)
        .map(|_| vec![rng.gen::<f64>(), rng.gen::<f64>()])
        .collect();
    let mut c = cloud_of(pts);
    let (v, mu) = ball_volume(&c, 0.01, None).unwrap();
    assert!((v - 1.0).abs() <= 0.01, "{v}");
    assert_eq!(v, mu);
    let dup: Vec<Vec<f64>> = c.endpoints.iter().take(1000).cloned().collect();
    c.endpoints.extend(dup);
    assert_eq!(ball_volume(&c, 0.01, None).unwrap().0, v);
    let h = hypoweyl::vfalgebra::parse_coeff("2", 2).unwrap();
    assert!((ball_volume(&c, 0.01, Some(&h)).unwrap().1 - 2.0 * v).abs() < 1e-9);
}

#[test]
fn errors() {
    let f = heis();
    let p = params(10, 1);
    assert!(matches!(
        sample_ball(&[0.0; 3], 0.0, &f, ClassNorm::C2, &p, &Domain::Plane),
        Err(BallError::Parameter(_))
    ));
    assert!(matches!(
        sample_ball(&[0.0; 2], 0.1, &f, ClassNorm::C2, &p, &Domain::Plane),
        Err(BallError::Parameter(_))
    ));
    let mut empty = cloud_of(vec![vec![0.0, 0.0]]);
    empty.endpoints.clear();
    assert!(matches!(
        ball_volume(&empty, 0.1, None),
        Err(BallError::EmptyCloud)
    ));
    assert!(matches!(
        doubling_exponent(
            &[0.0; 3],
            &f,
            ClassNorm::C2,
            (0.1, 0.15),
            3,
            &p,
            &Domain::Plane
        ),
        Err(BallError::Parameter(_))
    ));
}

#[test]
fn inclusion_chain() {
    let m = 2;
    let delta = 0.3;
    for i in 0..1000 {
        let inf = unit_controls(ClassNorm::Cinf, m, 3, 11, i).scaled(delta / (m as f64).sqrt());
        assert!(inf.satisfies(ClassNorm::Cinf, delta / (m as f64).sqrt()));
        assert!(inf.satisfies(ClassNorm::C2, delta));
        let two = unit_controls(ClassNorm::C2, m, 3, 11, i).scaled(delta);
        assert!(two.satisfies(ClassNorm::C2, delta));
        assert!(two.satisfies(ClassNorm::Cinf, delta));
    }
    // So every C2 endpoint is reachable by a Cinf path of the same radius.
    let f = grushin();
    let compiled: Vec<CompiledField> = f.iter().map(|v| v.compile()).collect();
    let c2 = sample_ball(
        &[0.0, 1.0],
        delta,
        &f,
        ClassNorm::C2,
        &params(1000, 11),
        &Domain::Plane,
    )
    .unwrap();
    for (i, e) in c2.endpoints.iter().enumerate() {
        let path = unit_controls(ClassNorm::C2, m, 2, 11, i as u64).scaled(delta);
        assert!(path.satisfies(ClassNorm::Cinf, delta));
        assert_eq!(&integrate(&[0.0, 1.0], &compiled, &path, 32), e);
    }
}

#[test]
fn seed_determinism_and_monotone_volume() {
    let p = params(20_000, 4);
    let a = sample_ball(&[0.0; 3], 0.1, &heis(), ClassNorm::C2, &p, &Domain::Plane).unwrap();
    let b = sample_ball(&[0.0; 3], 0.1, &heis(), ClassNorm::C2, &p, &Domain::Plane).unwrap();
    assert_eq!(a, b);
    let c = sample_ball(
        &[0.0; 3],
        0.1,
        &heis(),
        ClassNorm::C2,
        &params(20_000, 5),
        &Domain::Plane,
    )
    .unwrap();
    assert_ne!(a.endpoints, c.endpoints);
    let mut last = 0.0;
    for d in [0.05, 0.08, 0.12, 0.2] {
        let cl = sample_ball(&[0.0; 3], d, &heis(), ClassNorm::C2, &p, &Domain::Plane).unwrap();
        let v = ball_volume(&cl, 0.004, None).unwrap().0;
        assert!(v >= last, "delta {d}: {v} < {last}");
        last = v;
    }
}

#[test]
fn integrator_is_fourth_order() {
    let f = fields(&["d/dx + cos(y)*d/dz", "sin(x)*d/dy + x^2*d/dz"], 3);
    let compiled: Vec<CompiledField> = f.iter().map(|v| v.compile()).collect();
    let mut diffs = [0.0f64; 2];
    for i in 0..100 {
        let path = unit_controls(ClassNorm::C2, 2, 2, 21, i).scaled(1.5);
        let e: Vec<Vec<f64>> = [8, 16, 32]
            .iter()
            .map(|&n| integrate(&[0.3, -0.2, 0.1], &compiled, &path, n))
            .collect();
        for k in 0..2 {
            let d = e[k]
                .iter()
                .zip(&e[k + 1])
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            diffs[k] = diffs[k].max(d);
        }
    }
    assert!(diffs[0] <= 1e-2 * 8f64.powi(-4) * 100.0, "{diffs:?}");
    let ratio = diffs[0] / diffs[1];
    assert!((10.0..24.0).contains(&ratio), "{diffs:?}");
}

#[test]
fn torus_wraps_and_box_discards() {
    let f = fields(&["d/dx", "d/dy"], 2);
    let t = sample_ball(
        &[0.05, 0.05],
        0.2,
        &f,
        ClassNorm::C2,
        &params(2000, 2),
        &Domain::Torus(vec![2.0 * PI; 2]),
    )
    .unwrap();
    assert_eq!(t.discarded, 0);
    assert!(t
        .endpoints
        .iter()
        .all(|e| e.iter().all(|v| (0.0..2.0 * PI).contains(v))));
    let b = sample_ball(
        &[0.05, 0.05],
        0.2,
        &f,
        ClassNorm::C2,
        &params(2000, 2),
        &Domain::Box(vec![PI; 2]),
    )
    .unwrap();
    assert!(b.discarded > 0);
    assert_eq!(b.discarded + b.endpoints.len(), 2000);
}

#[test]
fn heisenberg_vertical_scaling() {
    let p = params(100_000, 7);
    let zmax = |d: f64| {
        let c = sample_ball(&[0.0; 3], d, &heis(), ClassNorm::C2, &p, &Domain::Plane).unwrap();
        c.endpoints.iter().map(|e| e[2].abs()).fold(0.0, f64::max)
    };
    let r = zmax(0.2) / zmax(0.1);
    assert!((3.2..=4.8).contains(&r), "{r}");
}

#[test]
fn heisenberg_volume_doubling() {
    let p = params(100_000, 7);
    for d in [0.05, 0.1] {
        let a = coord_volume(
            &sample_ball(&[0.0; 3], d, &heis(), ClassNorm::C2, &p, &Domain::Plane).unwrap(),
        );
        let b = coord_volume(
            &sample_ball(
                &[0.0; 3],
                2.0 * d,
                &heis(),
                ClassNorm::C2,
                &p,
                &Domain::Plane,
            )
            .unwrap(),
        );
        assert!((12.0..=20.0).contains(&(b / a)), "delta {d}: {}", b / a);
    }
}

#[test]
fn doubling_exponents() {
    let p = params(100_000, 7);
    let e = doubling_exponent(
        &[0.0; 2],
        &fields(&["d/dx", "d/dy"], 2),
        ClassNorm::C2,
        (0.05, 0.2),
        5,
        &p,
        &Domain::Plane,
    )
    .unwrap();
    assert!((e.exponent - 2.0).abs() <= 0.2, "{e:?}");
    let h = doubling_exponent(
        &[0.0; 3],
        &heis(),
        ClassNorm::C2,
        (0.05, 0.2),
        5,
        &p,
        &Domain::Plane,
    )
    .unwrap();
    assert!((h.exponent - 4.0).abs() <= 0.3, "{h:?}");
    let g = doubling_exponent(
        &[0.0, 1.0],
        &grushin(),
        ClassNorm::C2,
        (0.05, 0.2),
        5,
        &p,
        &Domain::Torus(vec![2.0 * PI; 2]),
    )
    .unwrap();
    assert!((g.exponent - 3.0).abs() <= 0.3, "{g:?}");
}

#[test]
fn lambda_comparisons() {
    let p = params(100_000, 7);
    let e = lambda_compare(
        &[0.0; 2],
        &fields(&["d/dx", "d/dy"], 2),
        1,
        (0.05, 0.2),
        5,
        &p,
        &Domain::Plane,
    )
    .unwrap();
    assert!(e.min > 0.0);
    assert!(
        e.ratios.iter().all(|r| (r * PI - 1.0).abs() <= 0.1),
        "{e:?}"
    );
    assert!(e.max / e.min <= 1.1);
    let h = lambda_compare(&[0.0; 3], &heis(), 2, (0.05, 0.2), 5, &p, &Domain::Plane).unwrap();
    assert!(h.min > 0.0 && h.max / h.min <= 3.0, "{h:?}");
}
