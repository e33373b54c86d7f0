use source_seek::environment::DisturbanceKind;
use source_seek::scenario::{
    builtin, BudgetConfig, FilterMode, PatternEntry, ScenarioConfig, ScenarioError, ScheduleConfig,
};

const MINIMAL: &str = r#"
name = "minimal"
horizon = 10

[grid]
side = 4

[agents]
count = 2
radius = 1.0
noise_variance = [1.0]

[field]
sources = [{ cell = [1, 2], magnitude = 3.0 }]
"#;

#[test]
fn minimal_config_takes_defaults() {
    let cfg = ScenarioConfig::from_toml(MINIMAL).unwrap();
    assert_eq!(cfg.trials, 1);
    assert_eq!(cfg.seed, 0);
    assert_eq!(cfg.dynamics.diffusion, 0.0);
    assert_eq!(cfg.dynamics.dt, 1.0);
    assert_eq!(cfg.disturbance.kind, DisturbanceKind::TypeI);
    assert_eq!(cfg.disturbance.schedule, ScheduleConfig::None {});
    assert_eq!(cfg.disturbance.budget, BudgetConfig::Envelope {});
    assert_eq!(cfg.filter.mode, FilterMode::TypeI);
    assert_eq!((cfg.filter.prior_mean, cfg.filter.prior_variance), (0.1, 25.0));
    assert_eq!((cfg.confidence.delta, cfg.confidence.scale), (0.1, 1.0));
    assert_eq!(cfg.noise_variances(), vec![1.0, 1.0]);
    assert_eq!(cfg.effective_gamma(), 1.0);
}

#[test]
fn full_config_round_trips() {
    let mut cfg = ScenarioConfig::from_toml(MINIMAL).unwrap();
    cfg.trials = 3;
    cfg.seed = 99;
    cfg.output_dir = Some("out/x".into());
    cfg.agents.initial_positions = Some(vec![[0, 0], [3, 3]]);
    cfg.agents.noise_variance = vec![1.0, 2.5];
    cfg.dynamics.diffusion = 0.01;
    cfg.dynamics.velocity = [0.1, -0.05];
    cfg.dynamics.alpha_bounds = Some([0.5, 1.5]);
    cfg.disturbance.kind = DisturbanceKind::TypeII;
    cfg.disturbance.schedule = ScheduleConfig::Windows {
        windows: vec![[2, 3], [6, 8]],
    };
    cfg.disturbance.pattern.fixed = Some(vec![
        vec![PatternEntry {
            cell: [1, 1],
            magnitude: 2.0,
        }],
        vec![PatternEntry {
            cell: [2, 0],
            magnitude: 1.5,
        }],
    ]);
    cfg.disturbance.budget = BudgetConfig::Constant { value: 4.0 };
    cfg.disturbance.state_bound = Some(100.0);
    cfg.filter.mode = FilterMode::TypeII;
    cfg.filter.gamma = Some(0.9);
    cfg.confidence.prior_error_bound = Some(7.0);
    cfg.validate().unwrap();

    let text = cfg.to_toml().unwrap();
    let back = ScenarioConfig::from_toml(&text).unwrap();
    assert_eq!(back, cfg);
    assert_eq!(back.effective_gamma(), 0.9);
    assert_eq!(back.noise_variances(), vec![1.0, 2.5]);
}

#[test]
fn tagged_variants_parse() {
    let text = MINIMAL.to_string()
        + r#"
[disturbance]
kind = "type_ii"
schedule = { type = "slow", start = 4 }
budget = { type = "zero" }

[filter]
mode = "undiscounted"
"#;
    let cfg = ScenarioConfig::from_toml(&text).unwrap();
    assert_eq!(cfg.disturbance.kind, DisturbanceKind::TypeII);
    assert_eq!(cfg.disturbance.schedule, ScheduleConfig::Slow { start: 4 });
    assert_eq!(cfg.disturbance.budget, BudgetConfig::Zero {});
    assert_eq!(cfg.filter.mode, FilterMode::Undiscounted);
}

#[test]
fn unknown_keys_are_rejected_at_every_level() {
    let cases = [
        MINIMAL.replace("horizon = 10", "horizon = 10\nhorizn = 3"),
        MINIMAL.replace("radius = 1.0", "radius = 1.0\nrange = 2.0"),
        MINIMAL.replace("magnitude = 3.0 }", "magnitude = 3.0, width = 1.0 }"),
        MINIMAL.to_string() + "\n[filter]\nmode = \"type_i\"\nforget = 0.5\n",
        MINIMAL.to_string() + "\n[disturbance]\nschedule = { type = \"none\", start = 3 }\n",
        MINIMAL.to_string() + "\n[disturbance.pattern]\ncells = 1\nshape = \"disc\"\n",
        MINIMAL.to_string() + "\n[extra]\nx = 1\n",
    ];
    for text in cases {
        assert!(
            matches!(ScenarioConfig::from_toml(&text), Err(ScenarioError::Parse(_))),
            "accepted:\n{text}"
        );
    }
}

#[test]
fn unknown_enum_values_are_rejected() {
    let text = MINIMAL.to_string() + "\n[filter]\nmode = \"type_iii\"\n";
    assert!(matches!(ScenarioConfig::from_toml(&text), Err(ScenarioError::Parse(_))));
}

#[test]
fn invalid_values_are_rejected() {
    let cases = [
        MINIMAL.replace("horizon = 10", "horizon = 0"),
        MINIMAL.replace("count = 2", "count = 17"),
        MINIMAL.replace("noise_variance = [1.0]", "noise_variance = [1.0, 2.0, 3.0]"),
        MINIMAL.replace("noise_variance = [1.0]", "noise_variance = [-1.0]"),
        MINIMAL.replace("cell = [1, 2]", "cell = [1, 4]"),
        MINIMAL.to_string() + "\n[filter]\nmode = \"type_ii\"\n",
        MINIMAL.to_string() + "\n[filter]\nmode = \"type_ii\"\ngamma = 1.5\n",
        MINIMAL.to_string()
            + "\n[disturbance]\nschedule = { type = \"windows\", windows = [[5, 2]] }\n",
        MINIMAL.to_string() + "\n[confidence]\ndelta = 1.0\n",
        MINIMAL.to_string() + "\n[confidence]\nscale = 0.0\n",
        MINIMAL.to_string() + "\n[dynamics]\nalpha_bounds = [2.0, 1.0]\n",
    ];
    for text in cases {
        assert!(
            matches!(ScenarioConfig::from_toml(&text), Err(ScenarioError::Config(_))),
            "accepted:\n{text}"
        );
    }
}

#[test]
fn missing_file_reports_path() {
    let err = ScenarioConfig::from_file(std::path::Path::new("/nonexistent/x.toml")).unwrap_err();
    match err {
        ScenarioError::Io { path, .. } => assert!(path.ends_with("x.toml")),
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn file_and_builtin_agree() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = builtin("null").unwrap();
    let path = dir.path().join("null.toml");
    std::fs::write(&path, cfg.to_toml().unwrap()).unwrap();
    assert_eq!(ScenarioConfig::from_file(&path).unwrap(), cfg);
}
