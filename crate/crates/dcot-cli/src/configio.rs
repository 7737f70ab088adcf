//! Config file IO: flat `key=value` text with `#` comments. CLI override
//! pairs are appended after the file's pairs, so they win.

use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use dcot_core::config::DCoTConfig;

/// Parse config text into ordered pairs; `#` comments and blanks ignored.
pub fn parse_config_text(text: &str) -> Result<Vec<(String, String)>> {
    let mut pairs = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            bail!("config line {}: expected key=value", lineno + 1);
        };
        pairs.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(pairs)
}

/// Canonical config rendering; parsing it back reproduces the config, and
/// re-rendering reproduces the bytes.
pub fn render_config(cfg: &DCoTConfig) -> String {
    let mut out = String::new();
    for (k, v) in cfg.to_pairs() {
        out.push_str(k);
        out.push('=');
        out.push_str(&v);
        out.push('\n');
    }
    out
}

/// Build the effective config: defaults, then the optional file, then
/// override pairs, then the optional seed flag.
pub fn load_config(
    path: Option<&Path>,
    overrides: &[(String, String)],
    seed: Option<u64>,
) -> Result<DCoTConfig> {
    let mut pairs: Vec<(String, String)> = Vec::new();
    if let Some(path) = path {
        let text = fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        pairs.extend(parse_config_text(&text)?);
    }
    pairs.extend_from_slice(overrides);
    if let Some(seed) = seed {
        pairs.push(("seed".to_string(), seed.to_string()));
    }
    DCoTConfig::from_pairs(&pairs).map_err(Into::into)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_round_trip_is_byte_identical() {
        let cfg = DCoTConfig::from_pairs(&[("alpha", "0.3"), ("seed", "7")]).unwrap();
        let text = render_config(&cfg);
        let pairs = parse_config_text(&text).unwrap();
        let back = DCoTConfig::from_pairs(&pairs).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(render_config(&back), text);
    }

    #[test]
    fn overrides_win_over_file_values() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("engine.config");
        std::fs::write(&path, "alpha=0.3\nseed=1\n# comment\n").unwrap();
        let cfg = load_config(
            Some(&path),
            &[("alpha".to_string(), "0.6".to_string())],
            Some(9),
        )
        .unwrap();
        assert_eq!(cfg.alpha, 0.6);
        assert_eq!(cfg.seed, 9);
    }

    #[test]
    fn bad_lines_name_their_number() {
        let err = parse_config_text("alpha=0.5\nnonsense\n").unwrap_err();
        assert!(err.to_string().contains("line 2"));
    }

    #[test]
    fn shipped_sample_config_parses() {
        let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR"))
            .join("../../data/default.config");
        let cfg = load_config(Some(&path), &[], None).unwrap();
        assert_eq!(cfg, DCoTConfig::default());
    }
}
