use std::fs;
use std::path::Path;

use clusterforge::cli::{main_with_args, main_with_threads, EXIT_ADMISSIBILITY, EXIT_CONFIG, EXIT_OK};
use clusterforge::config::{Activity, RunConfig};
use clusterforge::Error;

fn run(dir: &Path, extra: &[&str]) -> i32 {
    let mut args = vec!["clusterforge".to_string(), "--out".into(), dir.display().to_string()];
    args.extend(extra.iter().map(|s| s.to_string()));
    main_with_args(args)
}

fn csv_value(path: &Path, key: &str) -> f64 {
    let text = fs::read_to_string(path).unwrap();
    let line = text.lines().find(|l| l.starts_with(&format!("{key},"))).unwrap();
    line.rsplit(',').next().unwrap().parse().unwrap()
}

#[test]
fn config_round_trips() {
    let text = "potential.model = square_well\npotential.sigma = 0.5\npotential.lambda = 1.4\n\
                ensemble.z = 0.01\nensemble.L = 3.5\ncompute.radii = 0.25, 0.75\ncompute.targets = rho1, omega2_l1\n";
    let c = RunConfig::parse(text).unwrap();
    assert_eq!(c.ensemble.activity, Activity::Absolute(0.01));
    assert_eq!(c.compute.radii, vec![0.25, 0.75]);
    let again = RunConfig::parse(&c.to_text()).unwrap();
    assert_eq!(again, c);
    assert_eq!(again.hash(), c.hash());
    assert_eq!(RunConfig::parse(&RunConfig::default().to_text()).unwrap(), RunConfig::default());
}

#[test]
fn hash_ignores_output_dir_only() {
    let a = RunConfig::default();
    let mut b = a.clone();
    b.output_dir = "elsewhere".into();
    assert_eq!(a.hash(), b.hash());
    b.compute.seed = 7;
    assert_ne!(a.hash(), b.hash());
}

#[test]
fn parse_errors_name_the_line() {
    let cases = [
        ("ensemble.beta = 1\nnonsense\n", 2),
        ("# comment\n\nensemble.beta = x\n", 3),
        ("ensemble.L = 4\nensemble.L = 5\n", 2),
        ("ensemble.z = 0.1\nensemble.z_fraction = 0.5\n", 2),
        ("foo.bar = 1\n", 1),
    ];
    for (text, want) in cases {
        match RunConfig::parse(text) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, want, "{text:?}"),
            other => panic!("{text:?}: {other:?}"),
        }
    }
}

#[test]
fn constants_for_unit_hard_sphere() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(dir.path(), &["constants"]), EXIT_OK);
    let f = dir.path().join("constants.csv");
    assert!((csv_value(&f, "c_beta") - 4.188790205).abs() < 1e-9);
    let zmax = 3.0 / (4.0 * std::f64::consts::PI * std::f64::consts::E);
    assert!((csv_value(&f, "z_max") - zmax).abs() < 1e-15);
    assert!((csv_value(&f, "w(z_max)") * csv_value(&f, "c_beta") - 1.0).abs() < 1e-10);
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("constants.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["subcommand"], "constants");
    assert_eq!(manifest["artifacts"][0], "constants.csv");
}

#[test]
fn graphs_counts_trees() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(dir.path(), &["graphs", "--kind", "tree", "--n", "5", "--list"]), EXIT_OK);
    let text = fs::read_to_string(dir.path().join("graphs.csv")).unwrap();
    assert!(text.lines().any(|l| l == "tree,5,1,125"), "{text}");
    let list = fs::read_to_string(dir.path().join("graphs_list.txt")).unwrap();
    assert_eq!(list.lines().count(), 125);
}

#[test]
fn exit_codes_separate_config_and_admissibility() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.cfg");
    fs::write(&bad, "ensemble.beta = 1\nensemble.beta = 2\n").unwrap();
    assert_eq!(run(dir.path(), &["--config", bad.to_str().unwrap(), "constants"]), EXIT_CONFIG);
    let hot = dir.path().join("hot.cfg");
    fs::write(&hot, "ensemble.z_fraction = 1.5\n").unwrap();
    assert_eq!(run(dir.path(), &["--config", hot.to_str().unwrap(), "constants"]), EXIT_ADMISSIBILITY);
    assert_eq!(run(dir.path(), &["no-such-command"]), EXIT_CONFIG);
}

#[test]
fn report_aggregates_and_json_embeds_hash() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(dir.path(), &["ruelle"]), EXIT_OK);
    assert_eq!(run(dir.path(), &["--format", "json", "oracle"]), EXIT_OK);
    assert_eq!(run(dir.path(), &["report"]), EXIT_OK);
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["all_passed"], true);
    assert_eq!(summary["reports"].as_array().unwrap().len(), 1);
    let oracle: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("oracle.json")).unwrap()).unwrap();
    assert_eq!(oracle["config_hash"], RunConfig::default().hash());
    assert_eq!(oracle["header"]["settings"]["n_cap"], 3);
}

#[test]
fn thread_count_does_not_change_bytes() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for (dir, threads) in [(a.path(), 1), (b.path(), 3)] {
        let args = ["clusterforge", "--out", dir.to_str().unwrap(), "--seed", "11", "majorant"];
        assert_eq!(main_with_threads(args, threads), EXIT_OK);
    }
    for name in ["majorant_g.csv", "majorant.report.json", "majorant.manifest.json"] {
        assert_eq!(
            fs::read(a.path().join(name)).unwrap(),
            fs::read(b.path().join(name)).unwrap(),
            "{name}"
        );
    }
}
