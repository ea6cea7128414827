use std::path::Path;

use riskgen::scenario::{builtin_catalog, parse_scenario_config};

#[test]
fn shipped_configs_match_the_catalog() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios");
    for ls in builtin_catalog() {
        let path = dir.join(format!("{}.toml", ls.id));
        let text = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        assert_eq!(parse_scenario_config(&text).unwrap(), ls, "{}", path.display());
    }
}
