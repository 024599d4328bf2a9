use std::path::Path;

use annotator_service::{ServiceConfig, DATA_ROOT_ENV};

#[test]
fn data_root_env_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ServiceConfig::parse(
        "data_root = \"/nowhere\"\nscans = \"scans\"\nnum_classes = 2\nrun_dir = \"r\"\n",
    )
    .unwrap();
    std::env::set_var(DATA_ROOT_ENV, dir.path());
    let sources = cfg.sources();
    std::env::remove_var(DATA_ROOT_ENV);
    assert_eq!(sources.scans, dir.path().join("scans"));
    assert_eq!(cfg.sources().scans, Path::new("/nowhere/scans"));
}
