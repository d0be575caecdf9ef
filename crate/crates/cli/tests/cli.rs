use std::process::{Command, Output};

use momentrate::design::{AlphaRule, ColumnLaw, DesignFamily, DesignSpec, SequenceRule};
use momentrate::ols::{ErrorLaw, LawKind, XiConfig};
use momentrate_cli::config::{
    read_config, write_config, AdversarialConfig, ProfileChoice, RateConfig, RateSource, RunConfig, SimulateConfig,
    TailConfig,
};
use proptest::prelude::*;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_momentrate"))
        .env_remove("MOMENTRATE_THREADS")
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(args: &[&str]) -> String {
    let out = run(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn json(args: &[&str]) -> serde_json::Value {
    serde_json::from_str(&stdout(args)).unwrap()
}

#[test]
fn partitions_listing() {
    assert_eq!(stdout(&["partitions", "--r", "4"]), "(2,2): 3n(n-1)\n(4): n\n");
    assert_eq!(stdout(&["partitions", "--r", "2"]), "(2): n\n");
    let v = json(&["partitions", "--r", "7", "--format", "json"]);
    let parts: Vec<_> = v["partitions"].as_array().unwrap().iter().map(|p| p["parts"].clone()).collect();
    assert_eq!(parts, vec![serde_json::json!([2, 2, 3]), serde_json::json!([3, 4]), serde_json::json!([2, 5]), serde_json::json!([7])]);
    assert_eq!(v["schema"], 1);
}

#[test]
fn exit_codes() {
    assert_eq!(run(&["partitions", "--r", "1"]).status.code(), Some(2));
    assert_eq!(run(&["moment", "--r", "9", "--profile", "rademacher"]).status.code(), Some(3));
    let out = run(&["moment", "--r", "9", "--profile", "rademacher"]);
    assert!(String::from_utf8_lossy(&out.stderr).contains("insufficient moments"));
    assert!(out.stdout.is_empty());
    assert_eq!(run(&["moment", "--r", "4", "--profile", "nope", "--n", "3"]).status.code(), Some(3));
    assert_eq!(run(&["moment", "--r", "4", "--profile", "exp1"]).status.code(), Some(2));
    assert_eq!(run(&[]).status.code(), Some(2));
    // a Gram matrix that cannot be inverted is a numeric failure
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("singular.json");
    let config = RunConfig::Simulate(SimulateConfig {
        design: DesignSpec::new(DesignFamily::Explicit { rows: vec![vec![1.0, 2.0], vec![2.0, 4.0], vec![3.0, 6.0]] }, 3, 2, 0),
        law: ErrorLaw::parse("normal", 1.0).unwrap(),
        functionals: vec![vec![1.0, 0.0]],
        orders: vec![2],
        powers: None,
        reps: 1000,
        seed: 1,
        tail: None,
    });
    std::fs::write(&path, write_config(&config).unwrap()).unwrap();
    assert_eq!(run(&["--config", path.to_str().unwrap()]).status.code(), Some(4));
}

#[test]
fn moments() {
    let v = json(&["moment", "--r", "4", "--n", "10", "--profile", "exp1", "--format", "json"]);
    assert_eq!(v["moment_z"]["exact"], "18/5");
    let v = json(&["moment", "--r", "2", "--n", "7", "--profile", "uniform", "--format", "json"]);
    assert_eq!(v["moment_z"]["exact"], "1");
    let v = json(&["moment", "--r", "4", "--n", "10", "--moments", "1,2,9", "--format", "json"]);
    assert_eq!(v["moment_z"]["exact"], "18/5");
}

#[test]
fn limits_side_by_side() {
    let v = json(&["limits", "--k", "2", "--profile", "exp1", "--format", "json"]);
    let row = &v["limits"][0];
    assert_eq!(row["even_derived"]["exact"], "6");
    assert_eq!(row["even_printed"]["exact"], "15");
    assert_eq!(row["odd"]["exact"], "20");
    let v = json(&["limits", "--k", "1:4", "--profile", "normal", "--format", "json"]);
    for row in v["limits"].as_array().unwrap() {
        assert_eq!(row["even_derived"]["exact"], "0");
    }
}

#[test]
fn rate_csv_scaled_column() {
    let text = stdout(&["rate", "--r", "4", "--profile", "exp1", "--ngrid", "16:16384:x2"]);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("n,delta,scaled,std_error"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 11);
    for row in rows {
        let cols: Vec<&str> = row.split(',').collect();
        assert_eq!(cols[2], "6");
        assert_eq!(cols[3], "");
    }
}

#[test]
fn rate_fit_output() {
    let dir = tempfile::tempdir().unwrap();
    let fit = dir.path().join("fit.json");
    stdout(&["rate", "--r", "6", "--profile", "exp1", "--fit-output", fit.to_str().unwrap()]);
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(fit).unwrap()).unwrap();
    let slope = v["slope"].as_f64().unwrap();
    assert!((-1.05..=-0.95).contains(&slope));
    for key in ["intercept", "r_squared", "n_min", "n_max"] {
        assert!(v.get(key).is_some(), "{key}");
    }
}

#[test]
fn rate_along_a_design() {
    let v = json(&[
        "rate", "--r", "3", "--design", "convergent", "--law", "exp1", "--ngrid", "16:4096:x2", "--format", "json",
    ]);
    let slope = v["fit"]["slope"].as_f64().unwrap();
    assert!((-0.6..=-0.4).contains(&slope), "{slope}");
}

#[test]
fn adversarial_rows() {
    let text = stdout(&["adversarial", "--prop", "1", "--alpha", "sqrt", "--n", "16"]);
    let row = text.lines().nth(1).unwrap();
    let value: f64 = row.split(',').nth(1).unwrap().parse().unwrap();
    assert!((value + 4.0 / 3.0).abs() < 1e-12);
    let v = json(&["adversarial", "--prop", "2", "--a", "0.25", "--ngrid", "1024:16777216:x2", "--format", "json"]);
    assert_eq!(v["closer"], "derived");
    assert_eq!(run(&["adversarial", "--prop", "2", "--mu3", "0", "--n", "27"]).status.code(), Some(3));
}

fn strip_meta(text: &str) -> serde_json::Value {
    let mut v: serde_json::Value = serde_json::from_str(text).unwrap();
    v.as_object_mut().unwrap().remove("meta");
    v
}

#[test]
fn simulate_is_deterministic() {
    let args = ["simulate", "--design", "canonical", "--n", "100", "--law", "normal", "--r", "2", "--reps", "100000", "--seed", "1"];
    let a = stdout(&args);
    let b = stdout(&args);
    assert_eq!(strip_meta(&a), strip_meta(&b));
    let v = strip_meta(&a);
    let est = &v["estimates"][0];
    assert!((est["value"].as_f64().unwrap() - 1.0).abs() < 4.0 * est["std_error"].as_f64().unwrap());
}

#[test]
fn thread_count_and_env_do_not_change_output() {
    let base = ["simulate", "--design", "iid", "--n", "64", "--law", "uniform", "--r", "2,4", "--reps", "5000", "--seed", "3"];
    let one = stdout(&[&["--threads", "1"][..], &base].concat());
    let four = stdout(&[&["--threads", "4"][..], &base].concat());
    let env = Command::new(env!("CARGO_BIN_EXE_momentrate"))
        .env("MOMENTRATE_THREADS", "3")
        .args(base)
        .output()
        .unwrap();
    assert!(env.status.success());
    let env = String::from_utf8(env.stdout).unwrap();
    assert_eq!(strip_meta(&one), strip_meta(&four));
    assert_eq!(strip_meta(&one), strip_meta(&env));
    assert_eq!(strip_meta(&env)["spec"]["reps"], 5000);
}

#[test]
fn config_file_reproduces_flags() {
    let flags = ["simulate", "--design", "canonical", "--n", "50", "--law", "exp1", "--r", "3", "--reps", "2000", "--seed", "4"];
    let config = stdout(&[&flags[..], &["--print-config"]].concat());
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.json");
    std::fs::write(&path, &config).unwrap();
    let via_config = stdout(&["--config", path.to_str().unwrap()]);
    assert_eq!(strip_meta(&via_config), strip_meta(&stdout(&flags)));
    let out = dir.path().join("out.json");
    stdout(&["--config", path.to_str().unwrap(), "--output", out.to_str().unwrap()]);
    assert_eq!(strip_meta(&std::fs::read_to_string(out).unwrap()), strip_meta(&via_config));
    assert_eq!(run(&["--config", path.to_str().unwrap(), "partitions", "--r", "3"]).status.code(), Some(2));
}

#[test]
fn simulate_joint_and_tail() {
    let v = json(&[
        "simulate", "--design", "iid", "--n", "300", "--p", "2", "--intercept", "--law", "normal",
        "--functional", "1,0", "--functional", "0,1", "--powers", "1,1", "--tail-thresholds", "1,3",
        "--tail-ngrid", "50,100,200", "--reps", "4000", "--seed", "2",
    ]);
    let joint = &v["joint"];
    let est = joint["estimate"]["value"].as_f64().unwrap();
    let se = joint["estimate"]["std_error"].as_f64().unwrap();
    let exact = joint["reference"]["exact"].as_f64().unwrap();
    assert!((est - exact).abs() < 4.0 * se);
    assert_eq!(v["tail"]["sup_over_n"].as_array().unwrap().len(), 2);
}

fn finite() -> impl Strategy<Value = f64> {
    prop_oneof![-1e6f64..1e6, Just(0.1), Just(1.0 / 3.0), 1e-300f64..1e-290]
}

fn positive() -> impl Strategy<Value = f64> {
    prop_oneof![1e-6f64..1e6, Just(0.3)]
}

fn profile_choice() -> impl Strategy<Value = ProfileChoice> {
    prop_oneof![
        "[a-z]{1,8}".prop_map(ProfileChoice::Named),
        prop::collection::vec("[0-9]{1,4}(/[1-9][0-9]{0,2})?", 1..6).prop_map(ProfileChoice::Standardized),
    ]
}

fn alpha_rule() -> impl Strategy<Value = AlphaRule> {
    prop_oneof![
        (0.01f64..0.99).prop_map(|s| AlphaRule::Power { s }),
        Just(AlphaRule::Log),
        prop::collection::vec(positive(), 0..5).prop_map(|values| AlphaRule::Table { values }),
    ]
}

fn family() -> impl Strategy<Value = DesignFamily> {
    let column_law = prop_oneof![Just(ColumnLaw::Normal), Just(ColumnLaw::Uniform), Just(ColumnLaw::Rademacher)];
    prop_oneof![
        Just(DesignFamily::Canonical),
        (finite(), finite(), positive()).prop_map(|(c, a, q)| DesignFamily::Convergent(SequenceRule::Power { c, a, q })),
        prop::collection::vec(finite(), 0..4).prop_map(|values| DesignFamily::Convergent(SequenceRule::Explicit { values })),
        alpha_rule().prop_map(DesignFamily::Prop1),
        (0.01f64..0.49).prop_map(|a| DesignFamily::Prop2 { a }),
        (column_law, any::<bool>()).prop_map(|(column_law, intercept)| DesignFamily::IidRandom { column_law, intercept }),
        prop::collection::vec(prop::collection::vec(finite(), 1..3), 0..3).prop_map(|rows| DesignFamily::Explicit { rows }),
    ]
}

fn design() -> impl Strategy<Value = DesignSpec> {
    (family(), 1usize..100_000, 1usize..9, any::<u64>()).prop_map(|(f, n, p, seed)| DesignSpec::new(f, n, p, seed))
}

fn law() -> impl Strategy<Value = ErrorLaw> {
    let kind = prop_oneof![
        Just(LawKind::Normal),
        Just(LawKind::Uniform),
        Just(LawKind::CenteredExponential),
        Just(LawKind::Rademacher),
        prop_oneof![Just(0.3), 0.01f64..0.99].prop_map(|q| LawKind::CenteredBernoulli { q }),
    ];
    (kind, positive()).prop_map(|(k, s)| ErrorLaw::new(k, s).unwrap())
}

fn xi() -> impl Strategy<Value = XiConfig> {
    (design(), prop::collection::vec(finite(), 1..4), law(), prop::option::of(prop::collection::vec(finite(), 1..4)))
        .prop_map(|(design, alpha, law, beta_true)| XiConfig { design, alpha, law, beta_true })
}

fn grid() -> impl Strategy<Value = Vec<u64>> {
    prop::collection::vec(1u64..1 << 40, 0..6)
}

fn run_config() -> impl Strategy<Value = RunConfig> {
    let rate_source = prop_oneof![
        profile_choice().prop_map(RateSource::Profile),
        xi().prop_map(RateSource::Xi),
        (xi(), any::<u64>(), any::<u64>()).prop_map(|(xi, reps, seed)| RateSource::Mc { xi, reps, seed }),
    ];
    let tail = (0u32..9, prop::collection::vec(positive(), 0..4), grid())
        .prop_map(|(r, thresholds, ngrid)| TailConfig { r, thresholds, ngrid });
    let simulate = (
        design(),
        law(),
        prop::collection::vec(prop::collection::vec(finite(), 1..4), 1..3),
        prop::collection::vec(0u32..13, 0..4),
        prop::option::of(prop::collection::vec(0u32..5, 1..3)),
        any::<u64>(),
        any::<u64>(),
        prop::option::of(tail),
    )
        .prop_map(|(design, law, functionals, orders, powers, reps, seed, tail)| {
            RunConfig::Simulate(SimulateConfig { design, law, functionals, orders, powers, reps, seed, tail })
        });
    let adversarial = prop_oneof![
        (alpha_rule(), grid(), positive(), positive())
            .prop_map(|(alpha, ngrid, sigma2, threshold)| AdversarialConfig::Prop1 { alpha, ngrid, sigma2, threshold }),
        (0.01f64..0.49, finite(), grid(), positive())
            .prop_map(|(a, mu3, ngrid, threshold)| AdversarialConfig::Prop2 { a, mu3, ngrid, threshold }),
    ];
    prop_oneof![
        (2u32..40).prop_map(|r| RunConfig::Partitions { r }),
        (0u32..20, prop::option::of(1u64..1 << 50), profile_choice())
            .prop_map(|(r, n, profile)| RunConfig::Moment { r, n, profile }),
        (1u32..5, 5u32..9, profile_choice()).prop_map(|(k_min, k_max, profile)| RunConfig::Limits { k_min, k_max, profile }),
        (0u32..13, grid(), rate_source).prop_map(|(r, ngrid, source)| RunConfig::Rate(RateConfig { r, ngrid, source })),
        simulate,
        adversarial.prop_map(RunConfig::Adversarial),
    ]
}

proptest! {
    #[test]
    fn config_round_trip(config in run_config()) {
        let text = write_config(&config).unwrap();
        prop_assert_eq!(read_config(&text).unwrap(), config);
    }
}
