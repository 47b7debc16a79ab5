//! TOML loading with `--set section.key=value` overrides.

use std::path::Path;

use bahadur_core::ExperimentConfig;

/// Defaults shown under every experiment subcommand's `--help`.
pub const CONFIG_HELP: &str = "\
Config file (TOML; unknown keys are errors):
  [process]     kind = iid | geometric | polynomial_srd | lrd | ar1 | arch1 | tar
                geometric: rho; polynomial_srd: r; lrd: beta, l_const = 1, l_log_power = 0
                ar1: a; arch1: c0, c1; tar: phi_plus, phi_minus; maps: burn_in = 256
                linear: truncation_tolerance = 1e-4, max_lag = 16777216
  [innovation]  family = gaussian | uniform | uniform_smoothwrap | student_t | logistic
                scale = 1; student_t: nu          (default: gaussian, scale 1)
  [experiment]  n_grid (required, strictly increasing), replicates = 200 (>= 30),
                seed = 0, id = <subcommand>, p = 0.75 for lrd else 0.5,
                p_range = [0.25, 0.75] (uniform-rate) or [0.1, 0.9] (trimmed-clt),
                grid_points = 200, corrected = false, oracle_replicates = 1000000,
                window_exponent = -0.5, window_constant = 1, x, x_level,
                gamma = 1/2 - beta, branch = auto | gaussian | rosenblatt,
                winsorized = false, winsor_variant = display | shifted,
                alpha = 2, lags = 20, m_sweep = false
  [output]      dir = out";

pub fn load_config(path: &Path, sets: &[String]) -> Result<ExperimentConfig, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
    let located = |e: &dyn std::fmt::Display| format!("{}: {e}", path.display());
    if sets.is_empty() {
        // Straight from text so parse errors carry line and column.
        return toml::from_str(&text).map_err(|e| located(&e));
    }
    let mut table: toml::Table = text.parse().map_err(|e| located(&e))?;
    for s in sets {
        apply_set(&mut table, s)?;
    }
    table.try_into().map_err(|e| located(&e))
}

/// `section.key=value`; the value is read as a TOML literal, else as a string.
pub fn apply_set(table: &mut toml::Table, assignment: &str) -> Result<(), String> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| format!("--set {assignment}: expected section.key=value"))?;
    let (section, field) = key
        .trim()
        .split_once('.')
        .filter(|(s, f)| !s.is_empty() && !f.is_empty() && !f.contains('.'))
        .ok_or_else(|| format!("--set {assignment}: key must be section.key"))?;
    let value = format!("v = {}", raw.trim())
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.trim().to_string()));
    let entry = table.entry(section.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
    let toml::Value::Table(sec) = entry else {
        return Err(format!("--set {assignment}: {section} is not a section"));
    };
    sec.insert(field.to_string(), value);
    Ok(())
}
