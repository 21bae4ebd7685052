use std::fs;
use std::path::Path;

use hypoweyl::assembly::{assemble_operator, build_grid};
use hypoweyl::asymptotics::verify::run_audit;
use hypoweyl::asymptotics::{theoretical_coefficient, TheoryKind};
use hypoweyl::harness::{
    list_scenarios, lookup, registry, run_stage, HarnessError, RunConfig, Stage,
};
use hypoweyl::spectral::trace::{eigsum_traces_ctx, stochastic_traces_ctx};
use hypoweyl::spectral::{lowest_eigs, SpectralContext, TraceOptions};

fn config(text: &str, out: &Path) -> RunConfig {
    let mut c = RunConfig::parse(text).unwrap();
    c.out = out.to_path_buf();
    c
}

#[test]
fn config_parsing() {
    let c = RunConfig::parse(
        r#"
        resolution = [16, 16]
        seed = 3
        workers = 2
        out = "x"
        [inline]
        id = "grushin"
        chart = "torus"
        dim = 2
        fields = ["d/dx", "sin(x)*d/dy"]
        potential = "cos(y)"
        [thresholds]
        margin = 0.3
        [verify]
        probes = 16
        [ball]
        paths = 500
        deltas = { lo = 0.1, hi = 0.3, count = 3 }
        "#,
    )
    .unwrap();
    let r = c.resolve().unwrap();
    assert_eq!(r.resolution, vec![16, 16]);
    assert_eq!(r.thresholds.margin, 0.3);
    assert_eq!(r.thresholds.count_exponent_tol, 0.05);
    assert_eq!(r.verify_options().probes, 16);
    assert_eq!(r.verify_options().seed, 3);
    assert_eq!(r.scenario.terms.fields.len(), 2);
    assert!(!r.scenario.potential.is_zero());
    assert_eq!(RunConfig::parse(&c.to_toml()).unwrap(), c);

    let reg = RunConfig::for_scenario("heisenberg-nilmanifold")
        .resolve()
        .unwrap();
    assert_eq!(reg.resolution, vec![32, 32, 32]);
    assert_eq!(reg.thresholds.count_exponent_tol, 0.1);
}

#[test]
fn config_rejections() {
    for bad in [
        "scenario = \"torus2-elliptic\"\nresolutoin = [8, 8]",
        "scenario = \"torus2-elliptic\"\n[verify]\nprobez = 3",
        "scenario = \"torus2-elliptic\"\n[thresholds]\nmargn = 1.0",
        "[inline]\nid = \"a\"\nchart = \"torus\"\nfields = [\"d/dx\"]\ncolour = 1",
    ] {
        assert!(
            matches!(RunConfig::parse(bad), Err(HarnessError::Config(_))),
            "{bad}"
        );
    }
    let must_fail_resolve = [
        "scenario = \"nope\"",
        "",
        "scenario = \"torus2-elliptic\"\nresolution = [8]",
        "scenario = \"torus2-elliptic\"\nresolution = [3, 8]",
        "scenario = \"torus2-elliptic\"\nworkers = 0",
        "scenario = \"torus2-elliptic\"\n[verify]\nprobes = 4",
        "[inline]\nid = \"a\"\nchart = \"torus\"\nfields = [\"d/dx\", \"d/dy\"]",
        "[inline]\nid = \"a\"\nchart = \"torus\"\nfields = [\"d/dq\"]\nresolution = [8]",
    ];
    for bad in must_fail_resolve {
        let r = RunConfig::parse(bad).and_then(|c| c.resolve());
        let e = r.expect_err(bad);
        assert!(matches!(e, HarnessError::Config(_)), "{bad}: {e:?}");
        assert_eq!(e.exit_code(), 2);
    }
}

#[test]
fn listing_contents() {
    let l = list_scenarios();
    let row = |id: &str| {
        l.lines()
            .find(|r| r.starts_with(&format!("{id} ")))
            .unwrap()
            .to_string()
    };
    let cols = |id: &str| {
        row(id)
            .split_whitespace()
            .map(String::from)
            .collect::<Vec<_>>()
    };
    assert_eq!(cols("torus2-elliptic")[2], "2");
    assert_eq!(cols("torus3-elliptic")[2], "3");
    assert_eq!(
        &cols("heisenberg-nilmanifold")[1..4],
        ["nilmanifold3", "4", "2"]
    );
    assert_eq!(&cols("grushin-torus2")[2..], ["3", "2", "zero-measure"]);
    assert_eq!(cols("martinet-torus3")[3], "3");
    assert!(row("dirichlet-box2").contains("box"));
    assert_eq!(&cols("psi-mixed")[1..], ["torus", "3", "2", "zero-measure"]);
    assert_eq!(registry().len(), 7);
    let m = lookup("martinet-torus3").unwrap();
    assert_eq!(m.fields, vec!["d/dx", "d/dy + sin(x)^2*d/dz"]);
}

#[test]
fn registry_entries_pass_audit() {
    for e in registry() {
        let sc = e.scenario();
        assert_eq!(sc.id, e.id);
        let a = run_audit(&sc, &[], 1).unwrap_or_else(|err| panic!("{}: {err}", e.id));
        assert!(a.failures.is_empty(), "{}", e.id);
        assert_eq!((a.q_l, a.tau_l), (e.expected_q, e.expected_tau), "{}", e.id);
        assert_eq!(theoretical_coefficient(&sc, &a).kind, e.theory, "{}", e.id);
        assert_eq!(e.resolution.len(), sc.dim());
    }
    assert_eq!(
        lookup("grushin-torus2").unwrap().theory,
        TheoryKind::ZeroMeasure
    );
}

#[test]
fn stochastic_and_eigsum_agree_on_registry() {
    let opts = TraceOptions {
        probes: 64,
        seed: 5,
        ..TraceOptions::default()
    };
    for e in registry() {
        let sc = e.scenario();
        let res: Vec<usize> = if sc.dim() == 2 {
            vec![32, 32]
        } else {
            vec![12, 12, 12]
        };
        let p = assemble_operator(&sc, &build_grid(sc.chart.clone(), &res).unwrap()).unwrap();
        let lam = *lowest_eigs(&p, 40).unwrap().eigenvalues.last().unwrap();
        let ts = [2.0 / lam, 5.0 / lam, 15.0 / lam];
        let ctx = SpectralContext::new(&p).unwrap();
        let s = stochastic_traces_ctx(&ctx, &ts, &opts).unwrap();
        let g = eigsum_traces_ctx(&ctx, &ts, &opts).unwrap();
        for (a, b) in s.iter().zip(&g) {
            let gap = (a.value - b.value).abs();
            assert!(
                gap <= 3.0 * a.stderr + b.tail_bound,
                "{} t {}: {} vs {} (se {})",
                e.id,
                a.t,
                a.value,
                b.value,
                a.stderr
            );
        }
    }
}

fn read(dir: &Path, name: &str) -> String {
    fs::read_to_string(dir.join(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

#[test]
fn verify_stage_artifacts_and_cache() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("t2");
    let run = config(
        "scenario = \"torus2-elliptic\"\nresolution = [64, 64]",
        &out,
    )
    .resolve()
    .unwrap();
    let first = run_stage(Stage::Verify, &run).unwrap();
    assert!(!first.cache_hit);
    assert_eq!(first.pass, Some(true), "{}", first.summary);
    assert_eq!(first.exit_code(), 0);
    for name in [
        "audit.json",
        "counts.csv",
        "trace.csv",
        "verdict.json",
        "fits.json",
        "manifest.json",
    ] {
        assert!(out.join(name).exists(), "{name}");
    }
    let verdict = read(&out, "verdict.json");
    let v: serde_json::Value = serde_json::from_str(&verdict).unwrap();
    assert_eq!(v["overall"], true);
    let manifest: serde_json::Value = serde_json::from_str(&read(&out, "manifest.json")).unwrap();
    assert_eq!(manifest["cache"], "miss");
    assert_eq!(manifest["seed"], 1);
    assert!(RunConfig::parse(manifest["config"].as_str().unwrap()).is_ok());

    let second = run_stage(Stage::Verify, &run).unwrap();
    assert!(second.cache_hit);
    assert_eq!(read(&out, "verdict.json"), verdict);
    let manifest: serde_json::Value = serde_json::from_str(&read(&out, "manifest.json")).unwrap();
    assert_eq!(manifest["cache"], "hit");
}

#[test]
fn malformed_config_writes_nothing() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("bad");
    let text = format!(
        "scenario = \"torus2-elliptic\"\nout = \"{}\"\nbogus = 1",
        out.display()
    );
    assert!(RunConfig::parse(&text).is_err());
    assert!(!out.exists());
}

#[test]
fn individual_stages() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("g");
    let text = r#"
        resolution = [24, 24]
        eigs = 12
        lambda_grid = { lo = 1.0, hi = 40.0, count = 8 }
        t_grid = { lo = 0.05, hi = 0.5, count = 6 }
        [inline]
        id = "grushin"
        chart = "torus"
        dim = 2
        fields = ["d/dx", "sin(x)*d/dy"]
        [ball]
        paths = 4000
        center = [0.0, 1.0]
        "#;
    let run = config(text, &out).resolve().unwrap();
    let audit = run_stage(Stage::Audit, &run).unwrap();
    assert!(audit.artifacts.contains(&"audit.json".to_string()));
    let a: serde_json::Value = serde_json::from_str(&read(&out, "audit.json")).unwrap();
    assert_eq!(a["q_l"], 3);

    run_stage(Stage::Assemble, &run).unwrap();
    let pencil = read(&out, "pencil.txt");
    assert!(pencil.starts_with('#'));
    let rows: Vec<(usize, usize)> = pencil
        .lines()
        .skip(1)
        .map(|l| {
            let mut it = l.split_whitespace();
            (
                it.next().unwrap().parse().unwrap(),
                it.next().unwrap().parse().unwrap(),
            )
        })
        .collect();
    assert!(rows.windows(2).all(|w| w[0] < w[1]));
    assert_eq!(
        read(&out, "mass.txt")
            .lines()
            .filter(|l| !l.starts_with('#'))
            .count(),
        576
    );

    run_stage(Stage::Spectrum, &run).unwrap();
    assert_eq!(read(&out, "spectrum.csv").lines().count(), 13);
    assert_eq!(read(&out, "counts.csv").lines().count(), 9);

    run_stage(Stage::Trace, &run).unwrap();
    assert_eq!(read(&out, "trace.csv").lines().count(), 7);

    // 576 nodes cannot hold 30 eigenvalues below 5% of the modes.
    assert!(matches!(
        run_stage(Stage::Fit, &run),
        Err(HarnessError::Compute(_))
    ));
    let auto = tmp.path().join("auto");
    let mut wide = config(
        "scenario = \"grushin-torus2\"\nresolution = [48, 48]\n[verify]\nprobes = 16",
        &auto,
    );
    wide.eigs = 5;
    let wide = wide.resolve().unwrap();
    run_stage(Stage::Spectrum, &wide).unwrap();
    run_stage(Stage::Trace, &wide).unwrap();
    let fit = run_stage(Stage::Fit, &wide).unwrap();
    assert!(fit.artifacts.contains(&"fits.json".to_string()));
    let f: serde_json::Value = serde_json::from_str(&read(&auto, "fits.json")).unwrap();
    assert!(f["count_fit"]["exponent"].as_f64().unwrap() > 1.0);
    assert!(f["karamata"]["exponent_gap"].is_number());

    run_stage(Stage::Ball, &run).unwrap();
    let b: serde_json::Value = serde_json::from_str(&read(&out, "ball.json")).unwrap();
    assert!(b["doubling"]["exponent"].as_f64().unwrap() > 2.0);
    assert_eq!(read(&out, "cloud.csv").lines().count(), 4001);

    let manifest: serde_json::Value = serde_json::from_str(&read(&out, "manifest.json")).unwrap();
    assert_eq!(manifest["stage"], "ball");
    for art in manifest["artifacts"].as_array().unwrap() {
        assert_eq!(art["sha256"].as_str().unwrap().len(), 64);
    }
}

#[test]
fn seeds_and_workers_do_not_change_verdicts() {
    let tmp = tempfile::tempdir().unwrap();
    let text = "scenario = \"grushin-torus2\"\nresolution = [48, 48]\n[verify]\nprobes = 16\ntrace_times = 8";
    let mut one = config(text, &tmp.path().join("a"));
    one.workers = 1;
    let mut two = config(text, &tmp.path().join("b"));
    two.workers = 2;
    run_stage(Stage::Verify, &one.resolve().unwrap()).unwrap();
    run_stage(Stage::Verify, &two.resolve().unwrap()).unwrap();
    assert_eq!(
        read(&tmp.path().join("a"), "verdict.json"),
        read(&tmp.path().join("b"), "verdict.json")
    );
}
