use std::path::Path;

use gesturekit::config::RunConfig;

#[test]
fn shipped_default_config_matches_builtin_defaults() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../config/default.toml");
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(RunConfig::parse(&text, "default.toml").unwrap(), RunConfig::default());
}
