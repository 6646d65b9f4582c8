//! Network checkpoints: one MXTN file per parameter tensor plus
//! `index.json` holding the stream spec and the layer name → file map.

use std::path::Path;

use super::{build_network, OffApexNet, StreamSpec};
use crate::error::Result;
use crate::numerics::snapshot::{fill_slots, load_tensor_set, save_tensor_set};
use crate::numerics::Parameterized;

pub fn save_checkpoint(net: &OffApexNet, dir: &Path) -> Result<()> {
    save_tensor_set(dir, &net.spec, &net.named_parameters())
}

pub fn load_checkpoint(dir: &Path) -> Result<OffApexNet> {
    let (spec, loaded): (StreamSpec, _) = load_tensor_set(dir)?;
    let mut net = build_network(&spec, 0)?;
    let names: Vec<String> = net.named_parameters().into_iter().map(|(n, _)| n).collect();
    fill_slots(loaded, names.into_iter().zip(net.parameters_mut()).collect())?;
    Ok(net)
}
