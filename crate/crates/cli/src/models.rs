//! Checkpoint files for the energy model, the toy provider and the head.

use std::fs;
use std::path::Path;

use ebmddg::ddg::DdgHead;
use ebmddg::energy::{EnergyConfig, EnergyModel};
use ebmddg::net::{read_checkpoint, write_checkpoint, Checkpoint, ParamSet};
use ebmddg::rng::seeded;
use ebmddg::seqmodel::{ToyConfig, ToyProvider};
use serde_json::json;

use crate::error::CliError;

pub fn save_energy(path: &Path, model: &EnergyModel<f64>) -> Result<(), CliError> {
    let meta = json!({ "kind": "energy", "config": model.config });
    write_checkpoint(path, &Checkpoint { meta, params: ParamSet::collect(model, None) })?;
    Ok(())
}

fn read_kind(path: &Path, kind: &str) -> Result<Checkpoint, CliError> {
    let ckpt = read_checkpoint(path).map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
    if ckpt.meta.get("kind").and_then(|k| k.as_str()) != Some(kind) {
        return Err(CliError::input(format!("{}: not a {kind} checkpoint", path.display())));
    }
    Ok(ckpt)
}

pub fn load_energy(path: &Path) -> Result<EnergyModel<f64>, CliError> {
    let ckpt = read_kind(path, "energy")?;
    let config: EnergyConfig = serde_json::from_value(ckpt.meta["config"].clone())?;
    let mut model = EnergyModel::init(config, &mut seeded(0));
    ckpt.params.load_into(&mut model).map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
    Ok(model)
}

pub fn save_toy(path: &Path, toy: &ToyProvider) -> Result<(), CliError> {
    let meta = json!({ "kind": "toy", "config": toy.config });
    write_checkpoint(path, &Checkpoint { meta, params: ParamSet::collect(toy, None) })?;
    Ok(())
}

pub fn load_toy(path: &Path) -> Result<ToyProvider, CliError> {
    let ckpt = read_kind(path, "toy")?;
    let config: ToyConfig = serde_json::from_value(ckpt.meta["config"].clone())?;
    let mut toy = ToyProvider::init(config, &mut seeded(0));
    ckpt.params.load_into(&mut toy).map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
    Ok(toy)
}

pub fn save_head(path: &Path, head: &DdgHead) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(head).map_err(CliError::internal)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

pub fn load_head(path: &Path) -> Result<DdgHead, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
    Ok(serde_json::from_str(&text)?)
}
