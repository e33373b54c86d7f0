use super::{ScenarioConfig, ScenarioError};

const BUILTIN: [(&str, &str); 5] = [
    ("null", include_str!("../../scenarios/null.toml")),
    ("paper-typeI-slow", include_str!("../../scenarios/paper-typeI-slow.toml")),
    ("paper-typeII-abrupt", include_str!("../../scenarios/paper-typeII-abrupt.toml")),
    ("desk-typeI-slow", include_str!("../../scenarios/desk-typeI-slow.toml")),
    ("desk-typeII-abrupt", include_str!("../../scenarios/desk-typeII-abrupt.toml")),
];

pub fn builtin_names() -> Vec<&'static str> {
    BUILTIN.iter().map(|(n, _)| *n).collect()
}

pub fn builtin(name: &str) -> Result<ScenarioConfig, ScenarioError> {
    let (_, text) = BUILTIN
        .iter()
        .find(|(n, _)| *n == name)
        .ok_or_else(|| ScenarioError::UnknownScenario(name.to_string()))?;
    ScenarioConfig::from_toml(text)
}

pub fn builtin_scenarios() -> Vec<(&'static str, ScenarioConfig)> {
    BUILTIN
        .iter()
        .map(|(n, t)| (*n, ScenarioConfig::from_toml(t).expect("builtin scenario parses")))
        .collect()
}
