//! Experiment runner behind the `uplink` binary: presets, sweep expansion,
//! evaluation, and CSV output.

pub mod error;
pub mod experiment;
pub mod runner;

pub use error::CliError;
pub use experiment::{merge_json, preset, presets, Axis, Experiment, Method, Variable};
pub use runner::{run, run_to_files, write_csv, Row, CSV_HEADER};

/// Resolves the experiment from a preset name and/or a config file. With
/// both, the file is a partial experiment overlaid on the preset.
pub fn load_experiment(config: Option<&std::path::Path>, preset_name: Option<&str>) -> Result<Experiment, CliError> {
    let file = config
        .map(|p| -> Result<serde_json::Value, CliError> {
            let text = std::fs::read_to_string(p)?;
            serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))
        })
        .transpose()?;
    match (preset_name, file) {
        (Some(name), patch) => {
            let mut value = serde_json::to_value(preset(name)?).expect("presets serialize");
            if let Some(p) = patch {
                merge_json(&mut value, p);
            }
            serde_json::from_value(value).map_err(|e| CliError::Config(format!("experiment: {e}")))
        }
        (None, Some(v)) => serde_json::from_value(v).map_err(|e| CliError::Config(format!("experiment: {e}"))),
        (None, None) => Err(CliError::Config("run needs --config or --preset".into())),
    }
}
