use std::f64::consts::PI;

use hypoweyl::assembly::{
    assemble_operator, build_grid, discretize, discretize_field, psi_transform, AssemblyError,
    ChartSpec, DiffScheme, Grid, OperatorPencil, OperatorTerms, Scenario, Stencil,
};
use hypoweyl::spectral::{dense_oracle, lowest_eigs};
use hypoweyl::vfalgebra::{parse_coeff, parse_field, VectorField};

fn fields(src: &[&str], n: usize) -> Vec<VectorField> {
    src.iter().map(|s| parse_field(s, n).unwrap()).collect()
}

fn torus(n: usize, len: f64) -> ChartSpec {
    ChartSpec::Torus {
        lengths: vec![len; n],
    }
}

fn pencil(sc: &Scenario, res: &[usize]) -> OperatorPencil {
    assemble_operator(sc, &build_grid(sc.chart.clone(), res).unwrap()).unwrap()
}

fn eigs(p: &OperatorPencil) -> Vec<f64> {
    dense_oracle(p).unwrap().eigenvalues
}

#[test]
fn build_grid_examples() {
    let g = build_grid(torus(2, 2.0 * PI), &[4, 4]).unwrap();
    assert_eq!(g.n_nodes(), 16);
    for j in 0..4 {
        assert_eq!(g.neighbor(g.index(&[3, j]), 0, 1), Some(g.index(&[0, j])));
    }
    let h = build_grid(ChartSpec::Nilmanifold3, &[8, 8, 8]).unwrap();
    assert_eq!(
        h.neighbor(h.index(&[7, 3, 5]), 0, 1),
        Some(h.index(&[0, 3, 2]))
    );
    assert_eq!(
        h.neighbor(h.index(&[0, 3, 2]), 0, -1),
        Some(h.index(&[7, 3, 5]))
    );
    // Only the x wrap is twisted.
    assert_eq!(
        h.neighbor(h.index(&[2, 7, 5]), 1, 1),
        Some(h.index(&[2, 0, 5]))
    );
    assert_eq!(
        h.neighbor(h.index(&[2, 3, 7]), 2, 1),
        Some(h.index(&[2, 3, 0]))
    );
    let b = build_grid(ChartSpec::Box { lengths: vec![PI] }, &[8]).unwrap();
    assert_eq!(b.n_nodes(), 7);
    assert_eq!(b.neighbor(b.index(&[6]), 0, 1), None);
}

#[test]
fn build_grid_errors() {
    assert!(matches!(
        build_grid(torus(2, 1.0), &[3, 8]),
        Err(AssemblyError::Resolution(_))
    ));
    assert!(matches!(
        build_grid(torus(2, 1.0), &[8]),
        Err(AssemblyError::Resolution(_))
    ));
    assert!(matches!(
        build_grid(ChartSpec::Nilmanifold3, &[8, 8, 6]),
        Err(AssemblyError::Nilmanifold { n2: 8, n3: 6 })
    ));
}

#[test]
fn discretize_examples() {
    let n = 10;
    let h = 2.0 * PI / n as f64;
    let g = build_grid(torus(1, 2.0 * PI), &[n]).unwrap();
    let d = discretize_field(&parse_field("d/dx", 1).unwrap(), &g, DiffScheme::Forward).unwrap();
    for p in 0..n {
        let (cols, vals) = d.row(p);
        assert_eq!(cols.len(), 2);
        assert!((d.get(p, p) + 1.0 / h).abs() < 1e-12);
        assert!((d.get(p, (p + 1) % n) - 1.0 / h).abs() < 1e-12);
        assert!(vals.iter().sum::<f64>().abs() < 1e-12);
    }
    let g2 = build_grid(torus(2, 2.0 * PI), &[8, 8]).unwrap();
    let plain =
        discretize_field(&parse_field("d/dy", 2).unwrap(), &g2, DiffScheme::Backward).unwrap();
    let scaled = discretize_field(
        &parse_field("sin(x)*d/dy", 2).unwrap(),
        &g2,
        DiffScheme::Backward,
    )
    .unwrap();
    for p in 0..g2.n_nodes() {
        let s = g2.point(p)[0].sin();
        let (cols, vals) = plain.row(p);
        for (c, v) in cols.iter().zip(vals) {
            assert!((scaled.get(p, *c) - s * v).abs() < 1e-12);
        }
    }
    let three = parse_field("d/dx", 3).unwrap();
    assert!(matches!(
        discretize_field(&three, &g2, DiffScheme::Central),
        Err(AssemblyError::Dimension { .. })
    ));
}

#[test]
fn forward_scheme_is_first_order() {
    let x = parse_field("sin(x)*d/dx + cos(y)*d/dy", 2).unwrap();
    let f = |p: &[f64]| p[0].sin() * p[1].cos();
    let xf =
        |p: &[f64]| p[0].sin() * p[0].cos() * p[1].cos() - p[1].cos() * p[0].sin() * p[1].sin();
    let err = |n: usize| {
        let g = build_grid(torus(2, 2.0 * PI), &[n, n]).unwrap();
        let d = discretize_field(&x, &g, DiffScheme::Forward).unwrap();
        let u: Vec<f64> = (0..g.n_nodes()).map(|p| f(&g.point(p))).collect();
        let du = d.mul_vec(&u);
        (0..g.n_nodes())
            .map(|p| (du[p] - xf(&g.point(p))).abs())
            .fold(0.0, f64::max)
    };
    let e: Vec<f64> = [16, 32, 64, 128].iter().map(|&n| err(n)).collect();
    for w in e.windows(2) {
        let ratio = w[0] / w[1];
        assert!((1.8..2.2).contains(&ratio), "errors {e:?}");
    }
}

#[test]
fn one_dimensional_closed_form() {
    for n in [16, 32, 64] {
        let sc = Scenario::new("t1", torus(1, 2.0 * PI), fields(&["d/dx"], 1));
        let ev = eigs(&pencil(&sc, &[n]));
        let h = 2.0 * PI / n as f64;
        let mut exact: Vec<f64> = (0..n)
            .map(|k| 2.0 / (h * h) * (1.0 - (2.0 * PI * k as f64 / n as f64).cos()))
            .collect();
        exact.sort_by(f64::total_cmp);
        for (a, b) in ev.iter().zip(&exact) {
            assert!((a - b).abs() <= 1e-10 * b.max(1.0));
        }
        assert!((ev[1] - 1.0).abs() <= (2.0 * PI / n as f64).powi(2));
    }
}

#[test]
fn heisenberg_pencil_is_exactly_symmetric() {
    for stencil in [Stencil::Axis, Stencil::Transport] {
        let mut sc = Scenario::new(
            "h",
            ChartSpec::Nilmanifold3,
            fields(&["d/dx", "d/dy + x*d/dz"], 3),
        );
        sc.stencil = stencil;
        let p = pencil(&sc, &[8, 8, 8]);
        assert_eq!(p.s.max_asymmetry(), 0.0, "{stencil:?}");
        assert!(p.symmetric);
        assert!(p.w.iter().all(|&w| w > 0.0));
        let ones = p.s.mul_vec(&vec![1.0; p.dim()]);
        assert!(
            ones.iter().all(|v| v.abs() <= 1e-10 * p.s.max_abs()),
            "{stencil:?}"
        );
    }
}

#[test]
fn constant_potential_shifts_spectrum() {
    let base = Scenario::new("g", torus(2, 2.0 * PI), fields(&["d/dx", "sin(x)*d/dy"], 2));
    let mut shifted = base.clone();
    shifted.potential = parse_coeff("5/2", 2).unwrap();
    let a = eigs(&pencil(&base, &[12, 12]));
    let b = eigs(&pencil(&shifted, &[12, 12]));
    let scale = a.last().unwrap().abs();
    for (x, y) in a.iter().zip(&b) {
        assert!((y - x - 2.5).abs() <= 1e-12 * scale, "{x} {y}");
    }
}

#[test]
fn psi_transform_examples() {
    let chart = torus(2, 8.0);
    let f = fields(&["d/dx", "sin(x)*d/dy"], 2);
    let base = Scenario::new("g", chart.clone(), f.clone());
    let g = build_grid(chart, &[8, 8]).unwrap();
    let s0 = assemble_operator(&base, &g).unwrap().s;

    let zero = psi_transform(
        &base,
        OperatorTerms::sum_of_squares(f.clone()),
        parse_coeff("0", 2).unwrap(),
    )
    .unwrap();
    assert_eq!(
        assemble_operator(&zero, &g)
            .unwrap()
            .s
            .add_scaled(&s0, -1.0)
            .max_abs(),
        0.0
    );

    let one = psi_transform(
        &base,
        OperatorTerms::sum_of_squares(f.clone()),
        parse_coeff("1", 2).unwrap(),
    )
    .unwrap();
    assert_eq!(
        assemble_operator(&one, &g)
            .unwrap()
            .s
            .add_scaled(&s0, -2.0)
            .max_abs(),
        0.0
    );

    // Node coordinates are the integers 0..7; psi vanishes on x in {0..4}.
    let lp = OperatorTerms::sum_of_squares(fields(&["d/dx + d/dy", "cos(y)*d/dx"], 2));
    let psi = parse_coeff("x*(x-1)*(x-2)*(x-3)*(x-4)", 2).unwrap();
    let t = psi_transform(&base, lp, psi).unwrap();
    let pt = assemble_operator(&t, &g).unwrap();
    assert_eq!(pt.asymmetry, 0.0);
    let mut changed = 0;
    for p in 0..g.n_nodes() {
        let i = g.coords(p)[0];
        let (c0, v0) = s0.row(p);
        let (c1, v1) = pt.s.row(p);
        let same = c0 == c1 && v0 == v1;
        if (1..=3).contains(&i) {
            assert!(same, "row {p} at x index {i}");
        } else if !same {
            changed += 1;
        }
    }
    assert!(changed > 0);

    let wrong = OperatorTerms::sum_of_squares(fields(&["d/dx"], 3));
    assert!(matches!(
        psi_transform(&base, wrong, parse_coeff("1", 2).unwrap()),
        Err(AssemblyError::ChartMismatch(_))
    ));
}

#[test]
fn sum_of_squares_is_positive_semidefinite() {
    let cases = vec![
        (
            Scenario::new("g", torus(2, 2.0 * PI), fields(&["d/dx", "sin(x)*d/dy"], 2)),
            vec![24, 24],
        ),
        (
            Scenario::new(
                "h",
                ChartSpec::Nilmanifold3,
                fields(&["d/dx", "d/dy + x*d/dz"], 3),
            ),
            vec![10, 10, 10],
        ),
        (
            Scenario::new(
                "b",
                ChartSpec::Box {
                    lengths: vec![PI, PI],
                },
                fields(&["d/dx", "x*d/dy"], 2),
            ),
            vec![20, 20],
        ),
    ];
    for (sc, res) in cases {
        let p = pencil(&sc, &res);
        let ev = eigs(&p);
        let low = lowest_eigs(&p, 4).unwrap().eigenvalues[0];
        let top = *ev.last().unwrap();
        assert!(low >= -1e-10 * top, "{}: {low}", sc.id);
        assert!(ev[0] >= -1e-10 * top, "{}: {}", sc.id, ev[0]);
    }
}

#[test]
fn potential_bounds() {
    let base = Scenario::new("g", torus(2, 2.0 * PI), fields(&["d/dx", "sin(x)*d/dy"], 2));
    let mut with_v = base.clone();
    with_v.potential = parse_coeff("sin(x) + cos(y)", 2).unwrap();
    let g = build_grid(base.chart.clone(), &[14, 14]).unwrap();
    let v: Vec<f64> = (0..g.n_nodes())
        .map(|p| with_v.potential.eval(&g.point(p)))
        .collect();
    let (vmin, vmax) = v
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| {
            (a.min(x), b.max(x))
        });
    let a = eigs(&assemble_operator(&base, &g).unwrap());
    let b = eigs(&assemble_operator(&with_v, &g).unwrap());
    let tol = 1e-10 * a.last().unwrap();
    for (x, y) in a.iter().zip(&b) {
        assert!(*y >= x + vmin - tol && *y <= x + vmax + tol, "{x} {y}");
    }
}

#[test]
fn dirichlet_box_dominates_torus() {
    let f = fields(&["d/dx", "sin(x)*d/dy"], 2);
    let bx = Scenario::new(
        "b",
        ChartSpec::Box {
            lengths: vec![PI, PI],
        },
        f.clone(),
    );
    let tr = Scenario::new("t", torus(2, 2.0 * PI), f);
    let pb = pencil(&bx, &[10, 10]);
    let pt = pencil(&tr, &[20, 20]);
    let (eb, et) = (eigs(&pb), eigs(&pt));
    for (k, (a, b)) in eb.iter().zip(&et).enumerate() {
        assert!(
            *a >= b - 1e-10 * b.abs().max(1.0),
            "k {k}: box {a} torus {b}"
        );
    }
    for lam in [1.0, 5.0, 20.0, 80.0] {
        let nb = eb.iter().filter(|&&l| l < lam).count();
        let nt = et.iter().filter(|&&l| l < lam).count();
        assert!(nb <= nt);
    }
    for t in [0.01, 0.1, 1.0] {
        let zb: f64 = eb.iter().map(|l| (-t * l).exp()).sum();
        let zt: f64 = et.iter().map(|l| (-t * l).exp()).sum();
        assert!(zb <= zt);
    }
}

#[test]
fn nilmanifold_twist_consistency() {
    let n = 8;
    let mut sc = Scenario::new(
        "h",
        ChartSpec::Nilmanifold3,
        fields(&["d/dx", "d/dy + x*d/dz"], 3),
    );
    sc.stencil = Stencil::Transport;
    let g = build_grid(ChartSpec::Nilmanifold3, &[n, n, n]).unwrap();
    // Transition chart (x - 1, y, z - y): same field expressions, shifted x origin.
    let gt: Grid = g.clone().with_origin(vec![-1.0, 0.0, 0.0]).unwrap();
    let a = assemble_operator(&sc, &g).unwrap().s;
    let b = assemble_operator(&sc, &gt).unwrap().s;
    let to_transition = |p: usize| {
        let c = g.coords(p);
        gt.index(&[c[0], c[1], (c[2] + n - c[1]) % n])
    };
    let scale = a.max_abs();
    for p in 0..g.n_nodes() {
        let (cols, vals) = a.row(p);
        let (cb, _) = b.row(to_transition(p));
        assert_eq!(cols.len(), cb.len());
        for (c, v) in cols.iter().zip(vals) {
            let w = b.get(to_transition(p), to_transition(*c));
            assert!(
                (v - w).abs() <= 1e-12 * scale,
                "row {p} col {c}: {v} vs {w}"
            );
        }
    }
    // The per-field stencils agree under the same re-indexing.
    for f in &sc.terms.fields {
        let da = discretize(f, &g, Stencil::Transport, DiffScheme::Forward).unwrap();
        let db = discretize(f, &gt, Stencil::Transport, DiffScheme::Forward).unwrap();
        for (r, c, v) in da.triplets() {
            assert!((db.get(to_transition(r), to_transition(c)) - v).abs() <= 1e-12 * da.max_abs());
        }
    }
}
