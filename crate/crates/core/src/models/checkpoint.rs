//! Single-file checkpoints: named f32 tensors in a safetensors archive with
//! the model spec and audio standardisation stored as JSON metadata.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use safetensors::tensor::{Dtype, TensorView};
use safetensors::SafeTensors;

use super::cd::LldNorm;
use super::{Model, ModelError, ModelSpec};
use crate::nn::{ParamStore, Real, Tensor};

const SPEC_KEY: &str = "spec";
const NORM_KEY: &str = "lld_norm";

#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub model: Model<f32>,
    /// Caller-provided entries (training config, epoch, ...).
    pub metadata: BTreeMap<String, String>,
}

fn ck(msg: impl std::fmt::Display) -> ModelError {
    ModelError::Checkpoint(msg.to_string())
}

pub fn save_checkpoint(
    path: &Path,
    model: &Model<f32>,
    extra: &BTreeMap<String, String>,
) -> Result<(), ModelError> {
    let mut meta: HashMap<String, String> = extra.iter().map(|(k, v)| (k.clone(), v.clone())).collect();
    meta.insert(SPEC_KEY.into(), serde_json::to_string(&model.spec).map_err(ck)?);
    meta.insert(NORM_KEY.into(), serde_json::to_string(model.cd.lld_norm()).map_err(ck)?);
    let bytes: Vec<(String, Vec<u8>, Vec<usize>)> = model
        .aeg
        .params()
        .iter()
        .chain(model.cd.params().iter())
        .map(|(name, t)| (name.to_owned(), f32::to_le_bytes_vec(t.data()), t.shape().to_vec()))
        .collect();
    let views = bytes
        .iter()
        .map(|(name, data, shape)| Ok((name.clone(), TensorView::new(Dtype::F32, shape.clone(), data).map_err(ck)?)))
        .collect::<Result<Vec<_>, ModelError>>()?;
    let out = safetensors::serialize(views, &Some(meta)).map_err(ck)?;
    std::fs::write(path, out).map_err(|source| ModelError::Io { path: path.display().to_string(), source })
}

fn fill(store: &mut ParamStore<f32>, st: &SafeTensors<'_>) -> Result<(), ModelError> {
    let ids: Vec<_> = store.ids().collect();
    for id in ids {
        let name = store.name(id).to_owned();
        let view = st.tensor(&name).map_err(|_| ck(format!("missing tensor {name}")))?;
        if view.dtype() != Dtype::F32 {
            return Err(ck(format!("{name}: expected F32, found {:?}", view.dtype())));
        }
        let expected = store.get(id).shape().to_vec();
        if view.shape() != expected.as_slice() {
            return Err(super::shape_err(&format!("checkpoint tensor {name}"), &expected, view.shape()));
        }
        *store.get_mut(id) = Tensor::from_vec(&expected, f32::from_le_bytes_slice(view.data()));
    }
    Ok(())
}

/// Rebuilds the model from the stored spec and checks every tensor against
/// it shape for shape.
pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, ModelError> {
    let bytes = std::fs::read(path).map_err(|source| ModelError::Io { path: path.display().to_string(), source })?;
    let (_, header) = SafeTensors::read_metadata(&bytes).map_err(ck)?;
    let mut meta: BTreeMap<String, String> =
        header.metadata().clone().unwrap_or_default().into_iter().collect();
    let spec: ModelSpec =
        serde_json::from_str(&meta.remove(SPEC_KEY).ok_or_else(|| ck("no model spec in metadata"))?).map_err(ck)?;
    let norm: LldNorm =
        serde_json::from_str(&meta.remove(NORM_KEY).ok_or_else(|| ck("no audio standardisation"))?).map_err(ck)?;
    let st = SafeTensors::deserialize(&bytes).map_err(ck)?;
    let mut model = Model::<f32>::new(spec, 0)?;
    let expected = model.aeg.params().len() + model.cd.params().len();
    if st.len() != expected {
        return Err(ck(format!("archive holds {} tensors, spec implies {expected}", st.len())));
    }
    fill(model.aeg.params_mut(), &st)?;
    fill(model.cd.params_mut(), &st)?;
    model.cd.set_lld_norm(norm)?;
    Ok(Checkpoint { model, metadata: meta })
}
