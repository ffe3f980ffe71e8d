//! Parameter persistence: a directory holding one tensor file per
//! named parameter plus a `manifest.txt` pinning the architecture, the
//! element type, and the tensor order. Round trips are bit-exact.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

use super::{TopoNetConfig, TopoNetParams};

const MANIFEST: &str = "manifest.txt";
const FORMAT_LINE: &str = "topo-params-v1";

/// Write every parameter tensor as `<name>.rgt` under `dir` (created
/// if missing), then the manifest.
pub fn save_params<S: Scalar>(params: &TopoNetParams<S>, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut manifest = String::new();
    manifest.push_str(&format!("format = {FORMAT_LINE}\n"));
    manifest.push_str(&format!("dtype = {}\n", S::DTYPE_CODE));
    let cfg = &params.cfg;
    manifest.push_str(&format!("d_feat = {}\n", cfg.d_feat));
    manifest.push_str(&format!("d_model = {}\n", cfg.d_model));
    manifest.push_str(&format!("n_heads = {}\n", cfg.n_heads));
    manifest.push_str(&format!("n_blocks = {}\n", cfg.n_blocks));
    manifest.push_str(&format!("ffn_mult = {}\n", cfg.ffn_mult));
    manifest.push_str(&format!("r_nbr = {}\n", cfg.r_nbr));
    for (name, tref) in params.tensors() {
        let tensor = Tensor::new(tref.dims(), tref.as_slice().to_vec())?;
        tensor.write(&dir.join(format!("{name}.rgt")))?;
        manifest.push_str(&format!("tensor = {name}\n"));
    }
    let path = dir.join(MANIFEST);
    fs::write(&path, manifest).map_err(|e| Error::io(&path, e))
}

fn parse_manifest(text: &str) -> Result<(u32, TopoNetConfig, Vec<String>)> {
    let mut dtype = None;
    let mut format = None;
    let mut tensors = Vec::new();
    let mut cfg = TopoNetConfig::default();
    let mut seen = [false; 6];
    for (ln, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::Format(format!("manifest line {}: `{raw}`", ln + 1)))?;
        let (key, value) = (key.trim(), value.trim());
        let bad = |what: &str| Error::Format(format!("manifest {key} = {value}: bad {what}"));
        match key {
            "format" => format = Some(value.to_string()),
            "dtype" => dtype = Some(value.parse::<u32>().map_err(|_| bad("integer"))?),
            "d_feat" => {
                cfg.d_feat = value.parse().map_err(|_| bad("integer"))?;
                seen[0] = true;
            }
            "d_model" => {
                cfg.d_model = value.parse().map_err(|_| bad("integer"))?;
                seen[1] = true;
            }
            "n_heads" => {
                cfg.n_heads = value.parse().map_err(|_| bad("integer"))?;
                seen[2] = true;
            }
            "n_blocks" => {
                cfg.n_blocks = value.parse().map_err(|_| bad("integer"))?;
                seen[3] = true;
            }
            "ffn_mult" => {
                cfg.ffn_mult = value.parse().map_err(|_| bad("integer"))?;
                seen[4] = true;
            }
            "r_nbr" => {
                cfg.r_nbr = value.parse().map_err(|_| bad("number"))?;
                seen[5] = true;
            }
            "tensor" => tensors.push(value.to_string()),
            other => return Err(Error::Format(format!("unknown manifest key `{other}`"))),
        }
    }
    match format.as_deref() {
        Some(FORMAT_LINE) => {}
        Some(other) => return Err(Error::Format(format!("unknown params format `{other}`"))),
        None => return Err(Error::Format("manifest missing format line".into())),
    }
    if !seen.iter().all(|&s| s) {
        return Err(Error::Format("manifest missing architecture keys".into()));
    }
    let dtype = dtype.ok_or_else(|| Error::Format("manifest missing dtype".into()))?;
    Ok((dtype, cfg, tensors))
}

/// Load parameters saved by [`save_params`]. The stored element type
/// must equal `S` exactly (no widening here — cast in memory instead),
/// and the tensor list must match the architecture.
pub fn load_params<S: Scalar>(dir: &Path) -> Result<TopoNetParams<S>> {
    let manifest_path = dir.join(MANIFEST);
    let text = fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
    let (dtype, cfg, listed) = parse_manifest(&text)?;
    if dtype != S::DTYPE_CODE {
        return Err(Error::Contract(format!(
            "parameters stored with dtype {dtype}, requested dtype {}",
            S::DTYPE_CODE
        )));
    }
    let mut params = TopoNetParams::<S>::zeros(cfg)?;
    let expected: Vec<(String, Vec<usize>)> =
        params.tensors().iter().map(|(n, t)| (n.clone(), t.dims())).collect();
    if listed != expected.iter().map(|(n, _)| n.clone()).collect::<Vec<_>>() {
        return Err(Error::Format(format!(
            "manifest lists {} tensors, architecture requires {}",
            listed.len(),
            expected.len()
        )));
    }
    let mut flat = Vec::with_capacity(params.num_params());
    for (name, dims) in &expected {
        let tensor = Tensor::<S>::read(&dir.join(format!("{name}.rgt")))?;
        if tensor.dims() != &dims[..] {
            return Err(Error::Shape(format!(
                "tensor {name} has dims {:?}, expected {dims:?}",
                tensor.dims()
            )));
        }
        flat.extend_from_slice(tensor.data());
    }
    params.assign(&flat)?;
    Ok(params)
}
