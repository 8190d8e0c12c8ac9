//! File formats and run manifests.
//!
//! Every schema carries a `"schema": 1` marker. Motion files hold
//! full-precision values (JSON numbers round-trip f64 exactly; the binary
//! flavor stores raw little-endian f64), so save-then-load returns
//! bit-identical frames. Decoder weights serialize as a JSON header plus a
//! little-endian f32 payload.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::beat::{BeatMask, MusicFeatures, DEFAULT_FPS};
use crate::decoder::{DanceDecoder, DecoderConfig};
use crate::kinematics::{MotionSequence, Skeleton};
use crate::nn::ParamSet;
use crate::{ensure, Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

fn parse_error(path: &Path, err: &serde_json::Error) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line: Some(err.line()),
        column: Some(err.column()),
        msg: err.to_string(),
    }
}

#[derive(Serialize, Deserialize)]
struct MotionJson {
    schema: u32,
    fps: f64,
    dims: usize,
    frames: Vec<Vec<f64>>,
}

const MOTION_MAGIC: &[u8; 4] = b"CHMO";

/// Saves a motion file; `.json` paths get the JSON schema, everything
/// else the binary layout.
pub fn save_motion(path: &Path, motion: &MotionSequence) -> Result<()> {
    if is_json(path) {
        let doc = MotionJson {
            schema: SCHEMA_VERSION,
            fps: motion.fps,
            dims: motion.dim(),
            frames: motion
                .frames
                .rows()
                .into_iter()
                .map(|r| r.to_vec())
                .collect(),
        };
        let text = serde_json::to_string(&doc).expect("motion serializes");
        fs::write(path, text)?;
    } else {
        let mut out = Vec::with_capacity(32 + motion.frames.len() * 8);
        out.extend_from_slice(MOTION_MAGIC);
        out.extend_from_slice(&SCHEMA_VERSION.to_le_bytes());
        out.extend_from_slice(&(motion.dim() as u32).to_le_bytes());
        out.extend_from_slice(&(motion.len() as u64).to_le_bytes());
        out.extend_from_slice(&motion.fps.to_le_bytes());
        for v in motion.frames.iter() {
            out.extend_from_slice(&v.to_le_bytes());
        }
        fs::write(path, out)?;
    }
    Ok(())
}

/// Loads either motion flavor, warning when the frame rate deviates from
/// the 30 fps convention.
pub fn load_motion(path: &Path) -> Result<MotionSequence> {
    let motion = if is_json(path) {
        let text = fs::read_to_string(path)?;
        let doc: MotionJson =
            serde_json::from_str(&text).map_err(|e| parse_error(path, &e))?;
        ensure!(
            doc.schema == SCHEMA_VERSION,
            "unsupported motion schema {} in {}",
            doc.schema,
            path.display()
        );
        let rows = doc.frames.len();
        ensure!(rows >= 1, "motion file {} has no frames", path.display());
        for (i, row) in doc.frames.iter().enumerate() {
            if row.len() != doc.dims {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line: None,
                    column: None,
                    msg: format!(
                        "frame {i} has {} values, dims field says {}",
                        row.len(),
                        doc.dims
                    ),
                });
            }
        }
        let flat: Vec<f64> = doc.frames.into_iter().flatten().collect();
        let frames = Array2::from_shape_vec((rows, doc.dims), flat).expect("checked shape");
        MotionSequence::new(frames, doc.fps)?
    } else {
        let bytes = fs::read(path)?;
        let fail = |msg: String| Error::Parse {
            path: path.to_path_buf(),
            line: None,
            column: None,
            msg,
        };
        if bytes.len() < 28 || &bytes[..4] != MOTION_MAGIC {
            return Err(fail("not a binary motion file".into()));
        }
        let schema = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        if schema != SCHEMA_VERSION {
            return Err(fail(format!("unsupported motion schema {schema}")));
        }
        let dims = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let rows = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
        let fps = f64::from_le_bytes(bytes[20..28].try_into().unwrap());
        let expected = 28 + rows * dims * 8;
        if bytes.len() != expected {
            return Err(fail(format!(
                "payload is {} bytes, header promises {expected}",
                bytes.len()
            )));
        }
        let values: Vec<f64> = bytes[28..]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let frames = Array2::from_shape_vec((rows, dims), values)
            .map_err(|e| fail(e.to_string()))?;
        MotionSequence::new(frames, fps)?
    };
    if (motion.fps - DEFAULT_FPS).abs() > 1e-9 {
        log::warn!(
            "{}: frame rate {} differs from the 30 fps the pipeline assumes",
            path.display(),
            motion.fps
        );
    }
    Ok(motion)
}

fn is_json(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"))
}

#[derive(Deserialize)]
#[serde(untagged)]
enum MusicJson {
    Object {
        #[serde(default)]
        schema: Option<u32>,
        #[serde(default)]
        fps: Option<f64>,
        frames: Vec<Vec<f64>>,
    },
    Bare(Vec<Vec<f64>>),
}

/// Loads music features from JSON (bare matrix or `{schema, fps, frames}`
/// object) or CSV (one frame per row, no header).
pub fn load_music(path: &Path) -> Result<MusicFeatures> {
    if is_json(path) {
        let text = fs::read_to_string(path)?;
        let doc: MusicJson =
            serde_json::from_str(&text).map_err(|e| parse_error(path, &e))?;
        let (frames, fps) = match doc {
            MusicJson::Object { schema, fps, frames } => {
                if let Some(schema) = schema {
                    ensure!(
                        schema == SCHEMA_VERSION,
                        "unsupported music schema {schema} in {}",
                        path.display()
                    );
                }
                (frames, fps.unwrap_or(DEFAULT_FPS))
            }
            MusicJson::Bare(frames) => (frames, DEFAULT_FPS),
        };
        matrix_to_music(path, frames, fps)
    } else {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .from_path(path)
            .map_err(|e| csv_error(path, &e))?;
        let mut frames = Vec::new();
        for record in reader.records() {
            let record = record.map_err(|e| csv_error(path, &e))?;
            let row: Vec<f64> = record
                .iter()
                .map(|field| {
                    field.parse::<f64>().map_err(|e| Error::Parse {
                        path: path.to_path_buf(),
                        line: Some(frames.len() + 1),
                        column: None,
                        msg: format!("bad number {field:?}: {e}"),
                    })
                })
                .collect::<Result<_>>()?;
            frames.push(row);
        }
        matrix_to_music(path, frames, DEFAULT_FPS)
    }
}

fn csv_error(path: &Path, err: &csv::Error) -> Error {
    let line = match err.position() {
        Some(pos) => Some(pos.line() as usize),
        None => None,
    };
    Error::Parse {
        path: path.to_path_buf(),
        line,
        column: None,
        msg: err.to_string(),
    }
}

fn matrix_to_music(path: &Path, frames: Vec<Vec<f64>>, fps: f64) -> Result<MusicFeatures> {
    ensure!(!frames.is_empty(), "music file {} has no frames", path.display());
    let width = frames[0].len();
    for (i, row) in frames.iter().enumerate() {
        if row.len() != width {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: Some(i + 1),
                column: None,
                msg: format!("row has {} values, first row has {width}", row.len()),
            });
        }
    }
    let rows = frames.len();
    let flat: Vec<f64> = frames.into_iter().flatten().collect();
    MusicFeatures::new(
        Array2::from_shape_vec((rows, width), flat).expect("checked shape"),
        fps,
    )
}

/// Saves music features as a schema-tagged JSON object.
pub fn save_music(path: &Path, music: &MusicFeatures) -> Result<()> {
    let doc = serde_json::json!({
        "schema": SCHEMA_VERSION,
        "fps": music.fps,
        "frames": music
            .frames
            .rows()
            .into_iter()
            .map(|r| r.to_vec())
            .collect::<Vec<_>>(),
    });
    fs::write(path, serde_json::to_string(&doc).expect("serializes"))?;
    Ok(())
}

/// What a beat-input file turned out to contain.
pub enum BeatInput {
    /// A bare JSON array of 0/1 flags.
    Mask(BeatMask),
    /// A full feature matrix whose last column is the beat flag.
    Features(MusicFeatures),
}

/// Loads the `beat` subcommand's input: a bare mask array, or any music
/// feature file.
pub fn load_beat_input(path: &Path) -> Result<BeatInput> {
    if is_json(path) {
        let text = fs::read_to_string(path)?;
        if let Ok(flags) = serde_json::from_str::<Vec<f64>>(&text) {
            return Ok(BeatInput::Mask(BeatMask::from_flags(&flags)?));
        }
    }
    Ok(BeatInput::Features(load_music(path)?))
}

/// Writes a bare JSON array of numbers.
pub fn save_json_array(path: &Path, values: &[f64]) -> Result<()> {
    fs::write(path, serde_json::to_string(values).expect("serializes"))?;
    Ok(())
}

pub fn load_skeleton(path: &Path) -> Result<Skeleton> {
    let text = fs::read_to_string(path)?;
    let skel = Skeleton::from_json(&text)?;
    Ok(skel)
}

const WEIGHTS_MAGIC: &[u8; 4] = b"CHWT";

#[derive(Serialize, Deserialize)]
struct WeightsHeader {
    schema: u32,
    config: DecoderConfig,
    tensors: Vec<TensorInfo>,
}

#[derive(Serialize, Deserialize, PartialEq, Eq, Debug)]
struct TensorInfo {
    name: String,
    shape: Vec<usize>,
}

fn tensor_catalog(decoder: &DanceDecoder) -> Vec<TensorInfo> {
    let mut tensors = Vec::new();
    decoder.visit(&mut |name, shape, _| {
        tensors.push(TensorInfo {
            name: name.to_string(),
            shape: shape.to_vec(),
        });
    });
    tensors
}

/// Writes a self-describing weights file: magic, header length, JSON
/// header (config and tensor catalog), then every tensor as little-endian
/// f32 in visitation order.
pub fn save_decoder(path: &Path, decoder: &DanceDecoder) -> Result<()> {
    let header = WeightsHeader {
        schema: SCHEMA_VERSION,
        config: decoder.config.clone(),
        tensors: tensor_catalog(decoder),
    };
    let header_json = serde_json::to_vec(&header).expect("header serializes");
    let mut file = fs::File::create(path)?;
    file.write_all(WEIGHTS_MAGIC)?;
    file.write_all(&(header_json.len() as u64).to_le_bytes())?;
    file.write_all(&header_json)?;
    let mut payload = Vec::new();
    decoder.visit(&mut |_, _, data| {
        for &v in data {
            payload.extend_from_slice(&(v as f32).to_le_bytes());
        }
    });
    file.write_all(&payload)?;
    Ok(())
}

/// Rebuilds a decoder from a weights file.
pub fn load_decoder(path: &Path) -> Result<DanceDecoder> {
    let mut file = fs::File::open(path)?;
    let fail = |msg: String| Error::Parse {
        path: path.to_path_buf(),
        line: None,
        column: None,
        msg,
    };
    let mut magic = [0u8; 4];
    file.read_exact(&mut magic)?;
    if &magic != WEIGHTS_MAGIC {
        return Err(fail("not a decoder weights file".into()));
    }
    let mut len_bytes = [0u8; 8];
    file.read_exact(&mut len_bytes)?;
    let header_len = u64::from_le_bytes(len_bytes) as usize;
    let mut header_json = vec![0u8; header_len];
    file.read_exact(&mut header_json)?;
    let header: WeightsHeader =
        serde_json::from_slice(&header_json).map_err(|e| parse_error(path, &e))?;
    ensure!(
        header.schema == SCHEMA_VERSION,
        "unsupported weights schema {}",
        header.schema
    );

    let mut decoder = DanceDecoder::init(header.config, 0)?;
    let catalog = tensor_catalog(&decoder);
    if catalog != header.tensors {
        return Err(fail(
            "tensor catalog does not match the decoder configuration".into(),
        ));
    }
    let mut payload = Vec::new();
    file.read_to_end(&mut payload)?;
    let expected = decoder.param_count() * 4;
    if payload.len() != expected {
        return Err(fail(format!(
            "payload is {} bytes, catalog promises {expected}",
            payload.len()
        )));
    }
    let values: Vec<f64> = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    decoder.load_flat(&values)?;
    Ok(decoder)
}

/// A digest entry of a manifest.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

/// Record of one CLI run: the resolved configuration, the root seed, and
/// digests of every input and output. Re-running the same tool version
/// with the same inputs and seed reproduces the output digests.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema: u32,
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config: serde_json::Value,
    pub root_seed: Option<u64>,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
}

impl RunManifest {
    pub fn new(command: &str, config: serde_json::Value, root_seed: Option<u64>) -> Self {
        Self {
            schema: SCHEMA_VERSION,
            tool: "choreo".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            config,
            root_seed,
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }

    pub fn add_input(&mut self, path: &Path) -> Result<()> {
        self.inputs.push(digest_entry(path)?);
        Ok(())
    }

    pub fn add_output(&mut self, path: &Path) -> Result<()> {
        self.outputs.push(digest_entry(path)?);
        Ok(())
    }

    /// Writes the manifest next to an output file as
    /// `<output>.manifest.json`.
    pub fn save_for(&self, output: &Path) -> Result<PathBuf> {
        let mut name = output.file_name().unwrap_or_default().to_os_string();
        name.push(".manifest.json");
        let path = output.with_file_name(name);
        fs::write(
            &path,
            serde_json::to_string_pretty(self).expect("manifest serializes"),
        )?;
        Ok(path)
    }
}

fn digest_entry(path: &Path) -> Result<FileDigest> {
    Ok(FileDigest {
        path: path.display().to_string(),
        sha256: sha256_file(path)?,
    })
}

/// Hex SHA-256 of a file's contents.
pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path)?;
    let digest = Sha256::digest(&bytes);
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}
