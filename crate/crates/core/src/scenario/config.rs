use super::LogicalScenario;
use crate::error::{Error, Result};

/// Parses and validates a scenario configuration document.
pub fn parse_scenario_config(text: &str) -> Result<LogicalScenario> {
    if text.trim().is_empty() {
        return Err(Error::Parse {
            line: 1,
            message: "empty scenario document".into(),
        });
    }
    let ls: LogicalScenario = toml::from_str(text).map_err(|e| Error::from_toml(text, e))?;
    ls.validate()?;
    Ok(ls)
}

/// Writes a logical scenario in the configuration format.
pub fn to_config_string(ls: &LogicalScenario) -> String {
    toml::to_string(ls).expect("scenario types always serialize")
}
