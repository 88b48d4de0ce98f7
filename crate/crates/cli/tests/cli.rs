use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn adaptctl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_adaptctl"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn scenario(name: &str) -> String {
    let p = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../scenarios")
        .join(name);
    p.to_str().unwrap().to_string()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

const ARENA: &str = "\
state a
state b
state crash bad
init a
ctrl go stay
unctrl gust
t a go b
t a stay a
t b go crash
t b gust a
";

#[test]
fn run_then_verify() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("nominal.trace");
    let o = adaptctl(&["run", &scenario("nominal.scn"), "--seed", "3", "--trace", path(&trace)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(&trace).unwrap();
    assert!(text.starts_with("t=0 layer=goal kind=notify msg=start seed=3"));
    assert!(text.contains("msg=mission_complete"));

    let props = dir.path().join("ok.props");
    fs::write(&props, "eventually msg=mission_complete\nnever kind=exception\n").unwrap();
    let o = adaptctl(&["verify", path(&trace), path(&props)]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("2 of 2 properties hold"));

    fs::write(&props, "eventually msg=mission_complete\neventually cmd=fold_arm\n").unwrap();
    let o = adaptctl(&["verify", path(&trace), path(&props)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("FAIL eventually cmd=fold_arm"));

    // Projection against itself, resolved next to the property file.
    fs::write(&props, "projection-equal nominal.trace layer=enact_b\n").unwrap();
    assert_eq!(adaptctl(&["verify", path(&trace), path(&props)]).status.code(), Some(0));
}

#[test]
fn trace_goes_to_stdout_without_a_file() {
    let o = adaptctl(&["run", &scenario("nominal.scn"), "--max-ticks", "2"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stdout(&o).lines().all(|l| l.starts_with("t=")));
}

#[test]
fn dead_platform_exits_two() {
    let o = adaptctl(&["run", &scenario("all_dead.scn"), "--trace", "/dev/null"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(
        adaptctl(&["run", &scenario("nominal.scn"), "--bogus"]).status.code(),
        Some(1)
    );
    assert_eq!(adaptctl(&["run", "/no/such/file.scn"]).status.code(), Some(1));
    assert_eq!(adaptctl(&[]).status.code(), Some(1));
    assert_eq!(adaptctl(&["--help"]).status.code(), Some(0));
}

#[test]
fn solve_safety_and_unrealizable() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("toy.lts");
    fs::write(&model, ARENA).unwrap();
    let out = dir.path().join("toy.strategy");
    let o = adaptctl(&[
        "solve",
        path(&model),
        "--kind",
        "safety",
        "--goal",
        "bad",
        "--out",
        path(&out),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let s = fs::read_to_string(&out).unwrap();
    // From `b` the controller waits for the gust instead of flying on.
    assert!(s.contains("t b gust a"));
    assert!(!s.contains("t b go crash"));
    assert!(!s.contains("state crash"));

    // The gust can always pre-empt the second `go`.
    let o = adaptctl(&["solve", path(&model), "--kind", "reach", "--goal", "state:crash"]);
    assert_eq!(o.status.code(), Some(4));
    assert_eq!(stdout(&o).trim(), "unrealizable");

    let o = adaptctl(&["solve", path(&model), "--kind", "buchi", "--goal", "state:a"]);
    assert_eq!(o.status.code(), Some(0));
}

#[test]
fn solve_composes_models() {
    let dir = tempfile::tempdir().unwrap();
    let plant = dir.path().join("plant.lts");
    fs::write(&plant, ARENA).unwrap();
    // A second model that forbids `go` outright.
    let guard = dir.path().join("guard.lts");
    fs::write(&guard, "state g\nctrl go stay\nt g stay g\n").unwrap();
    let o = adaptctl(&["solve", path(&plant), path(&guard), "--kind", "buchi", "--goal", "true"]);
    assert_eq!(o.status.code(), Some(0));
    let s = stdout(&o);
    assert!(s.contains("t a|g stay a|g"));
    assert!(!s.lines().any(|l| l.starts_with("t ") && l.contains(" go ")));
}

#[test]
fn solve_input_errors() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("toy.lts");
    fs::write(&model, ARENA).unwrap();
    assert_eq!(
        adaptctl(&["solve", "/no/such.lts", "--kind", "safety", "--goal", "bad"])
            .status
            .code(),
        Some(1)
    );
    assert_eq!(
        adaptctl(&["solve", path(&model), "--kind", "safety", "--goal", "a &"])
            .status
            .code(),
        Some(1)
    );
    fs::write(&model, "state a\nfrobnicate\n").unwrap();
    assert_eq!(
        adaptctl(&["solve", path(&model), "--kind", "safety", "--goal", "bad"])
            .status
            .code(),
        Some(1)
    );
}

#[test]
fn plan_reconfiguration() {
    let o = adaptctl(&[
        "plan",
        &scenario("gps.scn"),
        "--require",
        "positioning,attitude",
        "--forbid",
        "gps",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let lines: Vec<String> = stdout(&o).lines().map(str::to_string).collect();
    assert!(lines.contains(&"cfg.remove(gps)".to_string()), "{lines:?}");
    let o = adaptctl(&["plan", &scenario("nominal.scn"), "--require", "teleport"]);
    assert_eq!(o.status.code(), Some(4));
}
