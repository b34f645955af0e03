use std::path::{Path, PathBuf};

use uci_core::clips::SyntheticConfig;
use uci_core::config::parse_toml;
use uci_core::trainer::TrainConfig;

fn shipped(name: &str) -> String {
    let p = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name);
    std::fs::read_to_string(&p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

#[test]
fn desk_file_matches_the_desk_profile() {
    let parsed: TrainConfig = parse_toml(&shipped("desk.toml")).unwrap();
    let expected = TrainConfig {
        manifest: PathBuf::from("data/desk/manifest.tsv"),
        out_dir: PathBuf::from("runs/desk"),
        hold_out: Some("C".into()),
        ..TrainConfig::desk()
    };
    assert_eq!(parsed, expected);
    parsed.validate().unwrap();
}

#[test]
fn full_file_matches_the_full_scale_profile() {
    let parsed: TrainConfig = parse_toml(&shipped("full.toml")).unwrap();
    assert_eq!(parsed.manifest, PathBuf::from("data/frames/manifest.tsv"));
    let expected = TrainConfig {
        manifest: parsed.manifest.clone(),
        out_dir: parsed.out_dir.clone(),
        hold_out: parsed.hold_out.clone(),
        ..TrainConfig::full()
    };
    assert_eq!(parsed, expected);
}

#[test]
fn synth_file_parses_once_out_dir_is_removed() {
    let mut table: toml::Table = shipped("synth_desk.toml").parse().unwrap();
    assert_eq!(
        table
            .remove("out_dir")
            .and_then(|v| v.as_str().map(String::from))
            .as_deref(),
        Some("data/desk")
    );
    let cfg: SyntheticConfig = parse_toml(&toml::to_string(&table).unwrap()).unwrap();
    assert_eq!(cfg.videos_per_domain_per_label, 167);
    assert_eq!(cfg.num_domains, 3);
}
