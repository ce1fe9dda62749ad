use labtwin::scenario::{self, parse_csv, parse_scenario, RunOptions, Scenario, ScenarioError, TraceFormat};

fn load(name: &str) -> Scenario {
    let path = format!("{}/scenarios/{name}", env!("CARGO_MANIFEST_DIR"));
    Scenario::from_path(path).unwrap()
}

fn text(name: &str) -> String {
    std::fs::read_to_string(format!("{}/scenarios/{name}", env!("CARGO_MANIFEST_DIR"))).unwrap()
}

#[test]
fn minimal_trace_is_constant() {
    let sc = load("minimal.json");
    let out = scenario::run(&sc, RunOptions::default()).unwrap();
    assert_eq!(out.trace.len(), 11);
    assert!(out.trace.rows.iter().all(|r| r == &out.trace.rows[0]));
    assert!(out.report.passed());
}

#[test]
fn row_count_follows_duration_and_stride() {
    let sc = load("minimal.json");
    for stride in [1u64, 7, 100, 333, 1000, 5000] {
        let out = scenario::run(
            &sc,
            RunOptions {
                stride: Some(stride),
                ..Default::default()
            },
        )
        .unwrap();
        let expected = (1000 / stride) as usize + 1;
        assert_eq!(out.trace.len(), expected, "stride {stride}");
        assert!(out.trace.times.windows(2).all(|w| w[1] > w[0]));
    }
}

#[test]
fn undeclared_species_is_a_validation_error() {
    let bad = text("redox.json").replace(
        "\"species\": \"DHA\", \"coefficient\": 1",
        "\"species\": \"DHAx\", \"coefficient\": 1",
    );
    let sc = parse_scenario(&bad).unwrap();
    match scenario::build(&sc) {
        Err(ScenarioError::Validation(msg)) => assert!(msg.contains("DHAx"), "{msg}"),
        other => panic!("expected validation error, got {other:?}"),
    }
}

#[test]
fn negative_dt_is_a_validation_error() {
    let bad = text("minimal.json").replace("\"dt\": 0.01", "\"dt\": -0.01");
    assert!(matches!(parse_scenario(&bad), Err(ScenarioError::Validation(_))));
}

#[test]
fn syntax_errors_carry_positions() {
    let bad = text("minimal.json").replace("\"entities\": [", "\"entities\": [,");
    match parse_scenario(&bad) {
        Err(ScenarioError::Parse { line, .. }) => assert_eq!(line, 3),
        other => panic!("{other:?}"),
    }
}

#[test]
fn unit_errors_are_reported_as_such() {
    let bad = text("minimal.json").replace("\"50 g\"", "\"50 stone\"");
    match parse_scenario(&bad) {
        Err(ScenarioError::Unit { message, .. }) => assert!(message.contains("stone")),
        other => panic!("{other:?}"),
    }
}

#[test]
fn unknown_fields_are_rejected() {
    let bad = text("sn1.json").replace("\"k_gen\": 20", "\"k_gen\": 20, \"power\": 5");
    assert!(matches!(parse_scenario(&bad), Err(ScenarioError::Parse { .. })));
    let bad = text("sn1.json").replace("\"seed\": 0", "\"seed\": 0, \"gpu\": true");
    assert!(matches!(parse_scenario(&bad), Err(ScenarioError::Parse { .. })));
}

#[test]
fn dangling_references_are_rejected() {
    for (from, to) in [
        ("\"on\": \"robot\"", "\"on\": \"shelf\""),
        ("\"gate\": \"beaker.contact.hp\"", "\"gate\": \"beaker.contact.air\""),
        ("\"surface\": \"hp\"", "\"surface\": \"stove\""),
        ("\"beaker.EtI\", \"hp.heaterOn\"", "\"beaker.EtBr\", \"hp.heaterOn\""),
    ] {
        let bad = text("sn1.json").replace(from, to);
        assert_ne!(bad, text("sn1.json"), "{from}");
        let sc = parse_scenario(&bad).unwrap();
        assert!(
            matches!(scenario::build(&sc), Err(ScenarioError::Validation(_))),
            "{from}"
        );
    }
}

#[test]
fn emitted_csv_round_trips() {
    let out = scenario::run(&load("redox.json"), RunOptions::default()).unwrap();
    let csv = out.trace.emit(TraceFormat::Csv).unwrap();
    assert!(csv.starts_with("time_s,scale.reading[kg],beaker0.solvent[kg],beaker0.H2O2[mol/kg]"));
    let back = parse_csv(&csv).unwrap();
    assert_eq!(back.columns, out.trace.columns);
    assert_eq!(back.times, out.trace.times);
    for (a, b) in back.rows.iter().zip(&out.trace.rows) {
        for (x, y) in a.iter().zip(b) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }
}

#[test]
fn jsonl_counts_rows_and_events() {
    let out = scenario::run(&load("sn1.json"), RunOptions::default()).unwrap();
    let jsonl = out.trace.emit(TraceFormat::Jsonl).unwrap();
    let lines: Vec<serde_json::Value> = jsonl.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert!(!out.trace.events.is_empty());
    assert_eq!(lines.len(), out.trace.len() + out.trace.events.len());
    let events: Vec<&str> = lines.iter().filter_map(|v| v.get("event")?.as_str()).collect();
    assert!(events.contains(&"heater:hp"));
    assert!(events.contains(&"contact:beaker:hp"));
    let first = jsonl.lines().next().unwrap();
    assert!(first.starts_with("{\"time_s\":0.0,"), "{first}");
}

#[test]
fn one_row_trace_is_two_csv_lines() {
    let sc = load("minimal.json");
    let out = scenario::run(
        &sc,
        RunOptions {
            max_steps: Some(0),
            ..Default::default()
        },
    )
    .unwrap();
    let csv = out.trace.to_csv().unwrap();
    assert_eq!(csv.lines().count(), 2);
    assert_eq!(csv, "time_s,beaker.solvent[kg]\n0,0.1\n");
}

#[test]
fn redox_scale_readings() {
    let out = scenario::run(&load("redox.json"), RunOptions::default()).unwrap();
    let wf = &out.built.workflow;
    let r0 = wf.reading("initial").unwrap();
    let r1 = wf.reading("after_h2o2").unwrap();
    let r2 = wf.reading("after_ascorbic").unwrap();
    assert_eq!(r0, 0.1);
    assert!((r1 - 0.148).abs() < 1e-12, "{r1}");
    assert!((r2 - 0.196).abs() < 1e-12, "{r2}");
}

#[test]
fn describe_lists_registered_semantics() {
    let built = scenario::build(&load("sn1.json")).unwrap();
    let d = built.describe();
    for needle in [
        "hp (heater)",
        "beaker.T_wall [K]",
        "air.T [K] fixed",
        "rxn:sn1@beaker",
        "gen:hp.T",
        "heater:hp",
        "place (Place)",
    ] {
        assert!(d.contains(needle), "missing {needle} in\n{d}");
    }
}

#[test]
fn workflow_failure_is_reported_without_aborting_the_run() {
    let bad = text("redox.json").replace(
        "\"mass\": \"48 g\" } },\n            { \"id\": \"weigh_ascorbic\"",
        "\"mass\": \"480 g\" } },\n            { \"id\": \"weigh_ascorbic\"",
    );
    assert_ne!(bad, text("redox.json"));
    let out = scenario::run(&parse_scenario(&bad).unwrap(), RunOptions::default()).unwrap();
    assert!(!out.report.passed());
    let failure = out.report.action_failure.unwrap();
    assert_eq!(failure.leaf, "pour_ascorbic");
    assert!(failure.cause.starts_with("Overdraw"));
    assert_eq!(out.trace.len(), 601);
}
