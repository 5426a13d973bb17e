use std::process::Command;

use polyopf::{
    apply_plan, parse_plan, render_csv, render_table, run_solve, run_sweep, Outcome, SolveConfig,
    SweepParam, SweepRow, SweepSpec,
};
use polyopf_core::{parse_case, NetworkCase};

fn data_path(name: &str) -> String {
    format!("{}/../../data/{name}", env!("CARGO_MANIFEST_DIR"))
}

fn data(name: &str) -> NetworkCase {
    parse_case(&std::fs::read_to_string(data_path(name)).unwrap()).unwrap()
}

fn row(v: f64, order: Option<usize>, opt: Option<f64>, rank: Option<f64>, exact: bool) -> SweepRow {
    SweepRow {
        param_value: v,
        order,
        optimal_value: opt,
        rank_relax_value: rank,
        rank_exact: exact,
        status: String::new(),
        decimals: 2,
    }
}

fn cells(line: &str) -> Vec<String> {
    line.split(" | ").map(|c| c.trim().to_string()).collect()
}

#[test]
fn sweep_points_keep_written_decimals() {
    let s = SweepSpec::parse("vmax@2:0.976:1.035:10").unwrap();
    assert_eq!(s.param, SweepParam::VMax { bus: 2 });
    assert_eq!(
        s.values(),
        [0.976, 0.983, 0.989, 0.996, 1.002, 1.009, 1.015, 1.022, 1.028, 1.035]
    );
    let s = SweepSpec::parse("qmin@5:-30.80:61.81:10").unwrap();
    assert_eq!(s.decimals, 2);
    assert_eq!(s.values()[1], -20.51);
    assert_eq!(s.values()[9], 61.81);
    let s = SweepSpec::parse("smax@3-2:28.35:53.60:10").unwrap();
    assert_eq!(s.param, SweepParam::SMax { from: 3, to: 2 });
    assert_eq!(s.values()[0], 28.35);
    assert_eq!(SweepSpec::parse("vmax@2:1.0:1.0:1").unwrap().values(), [1.0]);
}

#[test]
fn bad_sweeps_are_rejected() {
    for s in [
        "vmax@2:1.1:1.0:3",
        "vmax@2:1.0:1.1:0",
        "vmax@2:1.0:1.1",
        "pmax@2:1:2:3",
        "smax@3:1:2:3",
        "vmax:1:2:3",
        "vmax@x:1:2:3",
    ] {
        assert!(SweepSpec::parse(s).is_err(), "{s}");
    }
    let case = data("wb2.m");
    assert!(SweepParam::VMax { bus: 9 }.apply(&case, 1.0).is_err());
    assert!(SweepParam::QMin { bus: 2 }.apply(&case, 1.0).is_err());
    assert!(SweepParam::SMax { from: 1, to: 3 }.apply(&case, 1.0).is_err());
}

#[test]
fn table_parenthesizes_inexact_rank_values() {
    let rows = [
        row(-30.80, Some(2), Some(945.83), Some(945.83), true),
        row(-20.51, Some(2), Some(1146.48), Some(954.82), false),
        row(61.81, None, None, Some(1114.90), false),
    ];
    let t = render_table("q5min (MVAr)", &rows);
    let lines: Vec<&str> = t.lines().collect();
    assert_eq!(lines.len(), 5);
    assert_eq!(cells(lines[2]), ["-30.80", "2", "945.83", "945.83"]);
    assert_eq!(cells(lines[3]), ["-20.51", "2", "1146.48", "(954.82)"]);
    assert_eq!(cells(lines[4]), ["61.81", "-", "-", "(1114.90)"]);
    let widths: Vec<usize> = lines.iter().map(|l| l.len()).collect();
    assert!(widths.iter().all(|&w| w == widths[0]));
}

#[test]
fn csv_has_plain_numbers_and_flag_column() {
    let rows = [
        row(-20.51, Some(2), Some(1146.48), Some(954.82), false),
        row(61.81, None, None, Some(1114.90), false),
    ];
    let csv = render_csv(&rows);
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "param,order,optimal,rank_relax,rank_exact,status");
    assert_eq!(lines[1], "-20.51,2,1146.480000,954.820000,false,");
    assert_eq!(lines[2], "61.81,,,1114.900000,false,");
    assert!(!csv.contains('('));
}

#[test]
fn sweep_csv_is_deterministic() {
    let case = data("wb2.m");
    let spec = SweepSpec::parse("vmax@2:0.976:1.035:2").unwrap();
    let cfg = SolveConfig::default();
    let a = render_csv(&run_sweep(&case, &spec, &cfg).unwrap());
    let b = render_csv(&run_sweep(&case, &spec, &cfg).unwrap());
    assert_eq!(a, b);
    assert_eq!(a.lines().count(), 3);
}

#[test]
fn single_point_sweep_equals_solve() {
    let case = data("wb2.m");
    let cfg = SolveConfig::default();
    let spec = SweepSpec::parse("vmax@2:1.035:1.035:1").unwrap();
    let rows = run_sweep(&case, &spec, &cfg).unwrap();
    assert_eq!(rows.len(), 1);
    let rep = run_solve(&spec.param.apply(&case, 1.035).unwrap(), &cfg).unwrap();
    assert_eq!(rep.outcome, Outcome::Certified);
    assert_eq!(rows[0].order, Some(rep.order));
    assert_eq!(rows[0].optimal_value, Some(rep.certificate.candidate_value));
    assert!(rows[0].rank_exact);
}

#[test]
fn plan_turns_costs_into_squared_deviation() {
    let mut case = data("lmbm3.m");
    let plan = parse_plan("1=170, 2=150").unwrap();
    assert_eq!(plan, [(1, 170.0), (2, 150.0)]);
    apply_plan(&mut case, &plan).unwrap();
    let g = &case.generators;
    for (p, gen) in [(170.0, &g[0]), (150.0, &g[1])] {
        let cost = |x: f64| gen.c2 * x * x + gen.c1 * x + gen.c0;
        assert_eq!(cost(p), 0.0);
        assert_eq!(cost(p + 3.0), 9.0);
    }
    assert_eq!((g[2].c2, g[2].c1, g[2].c0), (0.0, 0.0, 0.0));
    assert!(apply_plan(&mut case, &[(7, 1.0)]).is_err());
    assert!(parse_plan("1:170").is_err());
}

#[test]
fn order_too_small_is_an_error() {
    let case = data("lmbm3.m");
    let cfg = SolveConfig {
        order: Some(1),
        ..SolveConfig::default()
    };
    assert!(run_solve(&case, &cfg).is_err());
}

#[test]
fn binary_json_report_and_exit_codes() {
    let bin = env!("CARGO_BIN_EXE_polyopf");
    let out = Command::new(bin)
        .args(["--case", &data_path("wb2.m"), "--format", "json"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let rep: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(rep["outcome"], "certified");
    assert_eq!(rep["certificate"]["verdict"], "certified-global");
    assert_eq!(rep["solution"]["voltages"].as_array().unwrap().len(), 2);

    let out = Command::new(bin).args(["--case", "/nonexistent.m"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));

    let dir = std::env::temp_dir().join(format!("polyopf-test-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let sdpa = dir.join("wb2.dat-s");
    let out = Command::new(bin)
        .args(["--case", &data_path("wb2.m"), "--order", "2", "--export-sdpa"])
        .arg(&sdpa)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let inst = polyopf_sdp::read_sdpa(&std::fs::read_to_string(&sdpa).unwrap()).unwrap();
    // moments of degree 1..4 in three variables
    assert_eq!(inst.nvars(), 34);
    std::fs::remove_dir_all(&dir).unwrap();
}
