//! Versioned binary checkpoint container: a text header with architecture
//! hyper-parameters and the training stage, followed by named f64 tensors.
//! Loading validates tensor names and shapes against the architecture.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use super::{DistStyle, TrackerConfig, TrackerModel};
use crate::{Error, Result};

const MAGIC: &[u8; 4] = b"STCK";
const VERSION: u32 = 1;

/// Training stage recorded in the header.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Pretrain,
    Slt,
}

impl Stage {
    pub fn as_str(&self) -> &'static str {
        match self {
            Stage::Pretrain => "pretrain",
            Stage::Slt => "slt",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "pretrain" => Some(Stage::Pretrain),
            "slt" => Some(Stage::Slt),
            _ => None,
        }
    }
}

/// A parsed checkpoint: header lines plus named shaped tensors.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub header: BTreeMap<String, String>,
    pub tensors: BTreeMap<String, (Vec<usize>, Vec<f64>)>,
}

impl Checkpoint {
    pub fn stage(&self) -> Result<Stage> {
        let raw = self
            .header
            .get("stage")
            .ok_or_else(|| Error::Checkpoint("missing header key `stage`".into()))?;
        Stage::parse(raw).ok_or_else(|| Error::Checkpoint(format!("unknown stage `{raw}`")))
    }

    pub fn header_u64(&self, key: &str) -> Result<u64> {
        self.header
            .get(key)
            .ok_or_else(|| Error::Checkpoint(format!("missing header key `{key}`")))?
            .parse()
            .map_err(|e| Error::Checkpoint(format!("header key `{key}`: {e}")))
    }

    pub fn config(&self) -> Result<TrackerConfig> {
        let get = |key: &str| -> Result<&String> {
            self.header
                .get(key)
                .ok_or_else(|| Error::Checkpoint(format!("missing header key `{key}`")))
        };
        let parse_usize = |key: &str| -> Result<usize> {
            get(key)?
                .parse()
                .map_err(|e| Error::Checkpoint(format!("header key `{key}`: {e}")))
        };
        let parse_f64 = |key: &str| -> Result<f64> {
            get(key)?
                .parse()
                .map_err(|e| Error::Checkpoint(format!("header key `{key}`: {e}")))
        };
        let channels_raw = get("channels")?;
        let parts: Vec<usize> = channels_raw
            .split(',')
            .map(|p| p.trim().parse())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Checkpoint(format!("header key `channels`: {e}")))?;
        if parts.len() != 3 {
            return Err(Error::Checkpoint(format!(
                "header key `channels`: expected 3 entries, got {}",
                parts.len()
            )));
        }
        let style_raw = get("distribution_style")?;
        let distribution_style = DistStyle::parse(style_raw).ok_or_else(|| {
            Error::Checkpoint(format!("unknown distribution_style `{style_raw}`"))
        })?;
        Ok(TrackerConfig {
            channels: [parts[0], parts[1], parts[2]],
            head_channels: parse_usize("head_channels")?,
            template_size: parse_usize("template_size")?,
            search_size: parse_usize("search_size")?,
            stride: parse_usize("stride")?,
            template_factor: parse_f64("template_factor")?,
            search_factor: parse_f64("search_factor")?,
            penalty_weight: parse_f64("penalty_weight")?,
            distribution_style,
        })
    }
}

fn config_header(cfg: &TrackerConfig, stage: Stage) -> BTreeMap<String, String> {
    let mut h = BTreeMap::new();
    h.insert("format".into(), "seqtrack-checkpoint".into());
    h.insert("stage".into(), stage.as_str().into());
    h.insert(
        "channels".into(),
        format!("{},{},{}", cfg.channels[0], cfg.channels[1], cfg.channels[2]),
    );
    h.insert("head_channels".into(), cfg.head_channels.to_string());
    h.insert("template_size".into(), cfg.template_size.to_string());
    h.insert("search_size".into(), cfg.search_size.to_string());
    h.insert("stride".into(), cfg.stride.to_string());
    h.insert("template_factor".into(), cfg.template_factor.to_string());
    h.insert("search_factor".into(), cfg.search_factor.to_string());
    h.insert("penalty_weight".into(), cfg.penalty_weight.to_string());
    h.insert(
        "distribution_style".into(),
        cfg.distribution_style.as_str().into(),
    );
    h
}

/// Write a checkpoint. `extra_header` and `extra_tensors` let the training
/// engine persist optimizer state and cursors next to the model.
pub fn save_checkpoint(
    path: &Path,
    model: &TrackerModel,
    stage: Stage,
    extra_header: &BTreeMap<String, String>,
    extra_tensors: &[(String, Vec<usize>, Vec<f64>)],
) -> Result<()> {
    let mut header = config_header(&model.cfg, stage);
    for (k, v) in extra_header {
        header.insert(k.clone(), v.clone());
    }
    let mut header_text = String::new();
    for (k, v) in &header {
        header_text.push_str(&format!("{k}={v}\n"));
    }

    let mut tensors = model.named_tensors();
    tensors.extend_from_slice(extra_tensors);

    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_u32::<LittleEndian>(VERSION)?;
    w.write_u32::<LittleEndian>(header_text.len() as u32)?;
    w.write_all(header_text.as_bytes())?;
    w.write_u32::<LittleEndian>(tensors.len() as u32)?;
    for (name, shape, data) in &tensors {
        w.write_u16::<LittleEndian>(name.len() as u16)?;
        w.write_all(name.as_bytes())?;
        w.write_u8(shape.len() as u8)?;
        for &d in shape {
            w.write_u32::<LittleEndian>(d as u32)?;
        }
        for &v in data {
            w.write_f64::<LittleEndian>(v)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let mut r = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Checkpoint("bad magic; not a checkpoint file".into()));
    }
    let version = r.read_u32::<LittleEndian>()?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported checkpoint version {version}"
        )));
    }
    let header_len = r.read_u32::<LittleEndian>()? as usize;
    let mut header_bytes = vec![0u8; header_len];
    r.read_exact(&mut header_bytes)?;
    let header_text = String::from_utf8(header_bytes)
        .map_err(|e| Error::Checkpoint(format!("header is not UTF-8: {e}")))?;
    let mut header = BTreeMap::new();
    for line in header_text.lines() {
        if let Some((k, v)) = line.split_once('=') {
            header.insert(k.to_string(), v.to_string());
        }
    }

    let count = r.read_u32::<LittleEndian>()?;
    let mut tensors = BTreeMap::new();
    for _ in 0..count {
        let name_len = r.read_u16::<LittleEndian>()? as usize;
        let mut name_bytes = vec![0u8; name_len];
        r.read_exact(&mut name_bytes)?;
        let name = String::from_utf8(name_bytes)
            .map_err(|e| Error::Checkpoint(format!("tensor name is not UTF-8: {e}")))?;
        let ndim = r.read_u8()? as usize;
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(r.read_u32::<LittleEndian>()? as usize);
        }
        let len: usize = shape.iter().product();
        let mut data = vec![0.0f64; len];
        for v in &mut data {
            *v = r.read_f64::<LittleEndian>()?;
        }
        tensors.insert(name, (shape, data));
    }
    Ok(Checkpoint { header, tensors })
}

/// Rebuild a model from a checkpoint, validating that every architecture
/// tensor is present with the right shape.
pub fn model_from_checkpoint(ck: &Checkpoint) -> Result<TrackerModel> {
    let cfg = ck.config()?;
    let mut model = TrackerModel::new(cfg, 0);
    for (name, shape, _) in model.named_tensors() {
        let (got_shape, data) = ck
            .tensors
            .get(&name)
            .ok_or_else(|| Error::Checkpoint(format!("missing tensor `{name}`")))?;
        if *got_shape != shape {
            return Err(Error::Checkpoint(format!(
                "tensor `{name}`: expected shape {shape:?}, got {got_shape:?}"
            )));
        }
        model.set_tensor(&name, data)?;
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_preserves_parameters_bit_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let mut model = TrackerModel::new(TrackerConfig::default(), 123);
        model.bn2.running_mean[3] = 0.75;
        let mut extra = BTreeMap::new();
        extra.insert("step".to_string(), "17".to_string());
        let adam_m = vec![1.5; 4];
        save_checkpoint(
            &path,
            &model,
            Stage::Pretrain,
            &extra,
            &[("adam.m".to_string(), vec![4], adam_m.clone())],
        )
        .unwrap();

        let ck = load_checkpoint(&path).unwrap();
        assert_eq!(ck.stage().unwrap(), Stage::Pretrain);
        assert_eq!(ck.header_u64("step").unwrap(), 17);
        assert_eq!(ck.tensors["adam.m"].1, adam_m);

        let restored = model_from_checkpoint(&ck).unwrap();
        assert_eq!(restored.params_flat(), model.params_flat());
        assert_eq!(restored.bn2.running_mean, model.bn2.running_mean);
        assert_eq!(restored.cfg, model.cfg);
    }

    #[test]
    fn shape_and_name_validation() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let model = TrackerModel::new(TrackerConfig::default(), 1);
        save_checkpoint(&path, &model, Stage::Slt, &BTreeMap::new(), &[]).unwrap();
        let mut ck = load_checkpoint(&path).unwrap();

        // Shape tampering is caught.
        let (shape, data) = ck.tensors.get_mut("conv1.w").unwrap();
        shape[0] += 1;
        data.extend_from_slice(&vec![0.0; data.len() / 8]);
        assert!(matches!(
            model_from_checkpoint(&ck),
            Err(Error::Checkpoint(_))
        ));

        // Missing tensors are caught.
        let mut ck = load_checkpoint(&path).unwrap();
        ck.tensors.remove("cls_out.b");
        assert!(matches!(
            model_from_checkpoint(&ck),
            Err(Error::Checkpoint(_))
        ));
    }

    #[test]
    fn rejects_non_checkpoint_files() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("junk.ckpt");
        std::fs::write(&path, b"definitely not a checkpoint").unwrap();
        assert!(matches!(
            load_checkpoint(&path),
            Err(Error::Checkpoint(_))
        ));
    }
}
