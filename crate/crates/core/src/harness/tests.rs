use super::*;
use crate::cache::ModelSpec;

const P: u64 = 15 * 60_000;

fn linear(n: usize) -> ReplaySeries {
    generate(
        &SeriesKind::Linear {
            intercept: 20.0,
            slope_per_hour: 0.4,
        },
        n,
        P,
        0,
    )
}

fn grid(models: &[&str], deltas: Vec<Option<u64>>, errors: Vec<Option<f64>>) -> CacheGrid {
    CacheGrid {
        models: models.iter().map(|m| ModelSpec::named(m)).collect(),
        deltas,
        errors,
        period: None,
    }
}

#[test]
fn series_rejects_unsorted_timestamps() {
    assert!(ReplaySeries::new("x", vec![(0, 1.0), (0, 2.0)]).is_err());
    assert!(ReplaySeries::new("x", vec![(5, 1.0), (3, 2.0)]).is_err());
    assert!(ReplaySeries::new("x", vec![(0, 1.0), (1, 2.0)]).is_ok());
}

#[test]
fn series_csv_round_trip() {
    let s = generate(&SeriesKind::preset("diurnal").unwrap(), 50, P, 3);
    let mut buf = Vec::new();
    s.write_csv(&mut buf).unwrap();
    assert!(String::from_utf8_lossy(&buf).starts_with("timestamp_ms,value\n"));
    let back = ReplaySeries::read_csv(&s.name, buf.as_slice()).unwrap();
    assert_eq!(back.points, s.points);
}

#[test]
fn generators_are_seeded() {
    for name in ["linear", "polynomial", "diurnal", "step", "random-walk"] {
        let k = SeriesKind::preset(name).unwrap();
        assert_eq!(generate(&k, 200, P, 9), generate(&k, 200, P, 9), "{name}");
    }
    let k = SeriesKind::preset("random-walk").unwrap();
    assert_ne!(generate(&k, 200, P, 1).points, generate(&k, 200, P, 2).points);
}

#[test]
fn delta_grid_parsing() {
    assert_eq!(
        parse_delta_grid("0,P,2P,4P,8P,none", P).unwrap(),
        vec![Some(0), Some(P), Some(2 * P), Some(4 * P), Some(8 * P), None]
    );
    assert_eq!(parse_delta("1h", P).unwrap(), Some(3_600_000));
    assert_eq!(parse_delta("15m", P).unwrap(), Some(P));
    assert_eq!(parse_delta("30s", P).unwrap(), Some(30_000));
    assert_eq!(parse_delta("250ms", P).unwrap(), Some(250));
    assert!(parse_delta("1x", P).is_err());
    assert_eq!(parse_error_grid("none,2").unwrap(), vec![None, Some(2.0)]);
    assert!(parse_error_grid("-1").is_err());
    let m = parse_model_spec("Cyclic:season=96:window=200").unwrap();
    assert_eq!(m, ModelSpec::named("Cyclic").with("season", 96.0).with("window", 200.0));
    assert!(parse_model_spec("Arima").is_err());
}

#[test]
fn linear_series_reaches_three_quarters() {
    let s = linear(1000);
    let exp = run_cache_experiment(&s, &grid(&["LinearRegression"], vec![Some(4 * P)], vec![Some(2.0)])).unwrap();
    let r = &exp.results[0];
    assert_eq!(r.row.lookups, 1000);
    assert!(r.row.hits.abs_diff(750) <= 1, "{} hits", r.row.hits);
    assert!(r.row.max_err <= 1e-6, "max err {}", r.row.max_err);
    assert!(r.counters_match);
    assert_eq!(r.stale_served, 0);
}

#[test]
fn absent_or_zero_delta_never_hits() {
    let s = linear(200);
    let exp = run_cache_experiment(&s, &grid(&["Consistent", "LinearRegression"], vec![None, Some(0)], vec![None])).unwrap();
    for r in &exp.results {
        assert_eq!(r.row.hits, 0, "{:?}", r.row);
        assert_eq!(r.row.reduction, 0.0);
    }
}

#[test]
fn reduction_never_exceeds_bound() {
    for name in ["linear", "diurnal", "step", "random-walk"] {
        let s = generate(&SeriesKind::preset(name).unwrap(), 1000, P, 5);
        let exp = run_cache_experiment(
            &s,
            &grid(&["Consistent", "LinearRegression", "Cyclic"], vec![Some(4 * P)], vec![None, Some(0.5)]),
        )
        .unwrap();
        for r in &exp.results {
            assert!(r.row.reduction <= 0.75 + 1.0 / 1000.0, "{name} {:?}", r.row);
            assert!(r.counters_match);
        }
    }
}

#[test]
fn cyclic_on_diurnal_is_error_safe() {
    // PERIOD 15 MINS, DELTA 1 HRS, ERROR 2
    for seed in 0..10 {
        let s = generate(&SeriesKind::preset("diurnal").unwrap(), 1000, P, seed);
        let exp = run_cache_experiment(&s, &grid(&["Cyclic"], vec![Some(4 * P)], vec![Some(2.0)])).unwrap();
        let r = &exp.results[0];
        assert!(r.row.reduction > 0.0, "seed {seed}");
        assert_eq!(r.unsafe_served, 0, "seed {seed}: {:?}", r.row);
        assert_eq!(r.hits_after_violation, 0, "seed {seed}");
    }
}

#[test]
fn reduction_is_monotone_in_delta() {
    let s = generate(&SeriesKind::preset("diurnal").unwrap(), 1000, P, 1);
    let deltas = parse_delta_grid("0,P,2P,4P,8P", P).unwrap();
    let exp = run_cache_experiment(&s, &grid(&["Consistent", "LinearRegression", "Cyclic"], deltas, vec![None])).unwrap();
    for chunk in exp.results.chunks(5) {
        assert_eq!(chunk[0].row.reduction, 0.0);
        for w in chunk.windows(2) {
            assert!(w[1].row.reduction >= w[0].row.reduction, "{:?} then {:?}", w[0].row, w[1].row);
        }
    }
}

#[test]
fn report_is_byte_identical_for_a_seed() {
    let run = || {
        let dir = tempfile::tempdir().unwrap();
        let s = generate(&SeriesKind::preset("diurnal").unwrap(), 300, P, 4);
        let exp = run_cache_experiment(
            &s,
            &grid(&["LinearRegression", "Cyclic"], parse_delta_grid("0,P,4P", P).unwrap(), vec![Some(1.0)]),
        )
        .unwrap();
        let files = emit_report(&exp, dir.path()).unwrap();
        files.iter().map(|f| std::fs::read(f).unwrap()).collect::<Vec<_>>()
    };
    let (a, b) = (run(), run());
    assert_eq!(a, b);
    let tradeoff = String::from_utf8(a[0].clone()).unwrap();
    assert_eq!(tradeoff.lines().next(), Some(TRADEOFF_HEADER));
    assert_eq!(tradeoff.lines().count(), 4);
}

#[test]
fn overhead_csv_has_every_rule() {
    let rows = run_privacy_overhead(20, 1);
    let csv = write_overhead_csv(&rows);
    assert!(csv.starts_with(OVERHEAD_HEADER));
    for rule in ["none", "delete", "denature-text", "denature-blur", "summarize-zip", "summarize-average", "envelope"] {
        assert!(csv.lines().any(|l| l.starts_with(&format!("{rule},20,"))), "{rule}");
    }
    assert!(rows.iter().all(|r| r.p50_us <= r.p95_us && r.p95_us <= r.p99_us && r.p99_us <= r.max_us));
}

#[test]
fn percentile_nearest_rank() {
    let v = [1.0, 2.0, 3.0, 4.0];
    assert_eq!(percentile(&v, 50.0), 2.0);
    assert_eq!(percentile(&v, 95.0), 4.0);
    assert_eq!(percentile(&v, 0.0), 1.0);
    assert_eq!(percentile(&[], 50.0), 0.0);
}

const SCN: &str = "
name demo
step 250
duration 6000
registry R
leader L1
edge E1
edge E2 potential
device T1 Thermometer on E1 location=lab   # trailing comment
link E1 L1 5
client c1 on E2
at 3000 kill E1
every 1000 from 1000 to 3000 query c1 SENSE Temperature FROM Thermometer
at 2000 snapshot
";

#[test]
fn scenario_parses_and_sorts() {
    let s = Scenario::parse(SCN).unwrap();
    assert_eq!(s.name, "demo");
    assert_eq!(s.leaders, vec!["L1"]);
    assert!(s.edges[1].potential);
    assert_eq!(s.devices[0].attributes["location"], "lab");
    assert_eq!(s.links["E1"]["L1"], 5.0);
    let times: Vec<u64> = s.schedule.iter().map(|a| a.at).collect();
    assert_eq!(times, vec![1000, 2000, 2000, 3000, 3000]);
    assert_eq!(s.schedule[3].action, Action::Kill("E1".into()));
    assert!(matches!(&s.schedule[0].action, Action::Query { client, text } if client == "c1" && text == "SENSE Temperature FROM Thermometer"));
    assert_eq!(s.manifests().unwrap(), s.manifests().unwrap());
}

#[test]
fn scenario_errors_name_the_line() {
    let e = Scenario::parse("registry R\nbogus 1\n").unwrap_err();
    assert!(matches!(e, HarnessError::Scenario { line: 2, .. }), "{e}");
    let e = Scenario::parse("registry R\nat x kill R\n").unwrap_err();
    assert!(matches!(e, HarnessError::Scenario { line: 2, .. }), "{e}");
    assert!(Scenario::parse("leader L1\n").is_err(), "registry required");
    assert!(Scenario::parse("registry R\ndevice T1 Thermometer on E9\n").is_err());
    assert!(Scenario::parse("registry R\nat 5 kill Z\n").is_err());
    assert!(Scenario::parse("registry R\nduration 10\nat 50 snapshot\n").is_err());
}
