//! On-disk dataset layout and the scene text format.
//!
//! A dense dataset directory holds one `scene_NNNN/` directory per scene
//! with `scene.txt` and one `object_NN.dgl` per object. An economic dataset
//! directory holds one `scene_NNNN.egl` per scene.
//!
//! `scene.txt` stores the generator inputs, not the cloud:
//!
//! ```text
//! seed 7
//! tolerance 0.001
//! object box 0.04 0.05 0.03 density 20000 seed 99 pose r00 r01 r02 r10 r11 r12 r20 r21 r22 tx ty tz
//! ```
//!
//! Floats are written in shortest round-trip form so a parsed scene
//! regenerates bit-identically.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::geometry::{Mat3, RigidPose, Vec3};
use crate::label_store::{read_dense, StoreError};
use crate::synth::{
    make_object, make_scene, DenseObjectLabels, SceneDescription, Shape, SynthError,
};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub(crate) fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DatasetError + '_ {
    move |source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Regenerable description of one object in a scene.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectRecord {
    pub shape: Shape,
    pub density: f64,
    pub seed: u64,
    pub pose: RigidPose,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneRecord {
    pub seed: u64,
    pub tolerance: f64,
    pub objects: Vec<ObjectRecord>,
}

impl SceneRecord {
    pub fn of(scene: &SceneDescription, tolerance: f64) -> Self {
        Self {
            seed: scene.seed,
            tolerance,
            objects: scene
                .objects
                .iter()
                .map(|o| ObjectRecord {
                    shape: o.object.shape,
                    density: o.object.density,
                    seed: o.object.seed,
                    pose: o.pose.clone(),
                })
                .collect(),
        }
    }

    pub fn build(&self) -> Result<SceneDescription, SynthError> {
        let objects = self
            .objects
            .iter()
            .map(|o| make_object(o.shape, o.density, o.seed))
            .collect::<Result<Vec<_>, _>>()?;
        let poses = self.objects.iter().map(|o| o.pose.clone()).collect();
        make_scene(objects, poses, self.seed, self.tolerance)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        writeln!(s, "seed {}", self.seed).unwrap();
        writeln!(s, "tolerance {:?}", self.tolerance).unwrap();
        for o in &self.objects {
            write!(s, "object {}", o.shape.name()).unwrap();
            for d in o.shape.dimensions() {
                write!(s, " {d:?}").unwrap();
            }
            write!(s, " density {:?} seed {} pose", o.density, o.seed).unwrap();
            let r = &o.pose.rotation;
            for i in 0..3 {
                for j in 0..3 {
                    write!(s, " {:?}", r[(i, j)]).unwrap();
                }
            }
            for k in 0..3 {
                write!(s, " {:?}", o.pose.translation[k]).unwrap();
            }
            s.push('\n');
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self, DatasetError> {
        let mut seed = None;
        let mut tolerance = None;
        let mut objects = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let err = |message: String| DatasetError::Parse { line, message };
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let tokens: Vec<&str> = content.split_whitespace().collect();
            match tokens[0] {
                "seed" if tokens.len() == 2 => {
                    seed = Some(
                        tokens[1]
                            .parse::<u64>()
                            .map_err(|e| err(format!("seed: {e}")))?,
                    );
                }
                "tolerance" if tokens.len() == 2 => {
                    tolerance = Some(parse_f64(tokens[1]).map_err(err)?);
                }
                "object" => objects.push(parse_object(&tokens[1..]).map_err(err)?),
                other => return Err(err(format!("unexpected `{other}`"))),
            }
        }
        let missing = |what: &str| DatasetError::Parse {
            line: 0,
            message: format!("missing `{what}` line"),
        };
        Ok(Self {
            seed: seed.ok_or_else(|| missing("seed"))?,
            tolerance: tolerance.ok_or_else(|| missing("tolerance"))?,
            objects,
        })
    }
}

fn parse_f64(token: &str) -> Result<f64, String> {
    let v: f64 = token.parse().map_err(|e| format!("`{token}`: {e}"))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(format!("`{token}` is not finite"))
    }
}

fn parse_object(tokens: &[&str]) -> Result<ObjectRecord, String> {
    let name = tokens.first().ok_or("object without shape")?;
    let density_at = tokens
        .iter()
        .position(|t| *t == "density")
        .ok_or("object without density")?;
    let dims = tokens[1..density_at]
        .iter()
        .map(|t| parse_f64(t))
        .collect::<Result<Vec<_>, _>>()?;
    let shape = Shape::from_parts(name, &dims)
        .ok_or_else(|| format!("bad shape `{name}` with {} dims", dims.len()))?;
    let rest = &tokens[density_at..];
    if rest.len() != 17 || rest[2] != "seed" || rest[4] != "pose" {
        return Err("expected `density D seed S pose` and 12 pose numbers".into());
    }
    let density = parse_f64(rest[1])?;
    let seed: u64 = rest[3].parse().map_err(|e| format!("seed: {e}"))?;
    let nums = rest[5..]
        .iter()
        .map(|t| parse_f64(t))
        .collect::<Result<Vec<_>, _>>()?;
    let rotation = Mat3::from_row_slice(&nums[..9]);
    let translation = Vec3::new(nums[9], nums[10], nums[11]);
    let pose = RigidPose::new(rotation, translation).map_err(|e| e.to_string())?;
    Ok(ObjectRecord {
        shape,
        density,
        seed,
        pose,
    })
}

pub fn scene_name(index: usize) -> String {
    format!("scene_{index:04}")
}

pub fn object_file(scene_dir: &Path, object: usize) -> PathBuf {
    scene_dir.join(format!("object_{object:02}.dgl"))
}

pub fn economic_file(economic_dir: &Path, scene: &str) -> PathBuf {
    economic_dir.join(format!("{scene}.egl"))
}

/// Scene directories of a dense dataset, sorted by name.
pub fn list_scenes(dense_dir: &Path) -> Result<Vec<(String, PathBuf)>, DatasetError> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dense_dir).map_err(io_err(dense_dir))? {
        let entry = entry.map_err(io_err(dense_dir))?;
        let path = entry.path();
        let name = entry.file_name().to_string_lossy().into_owned();
        if path.is_dir() && name.starts_with("scene_") {
            out.push((name, path));
        }
    }
    out.sort();
    Ok(out)
}

pub fn load_scene_record(scene_dir: &Path) -> Result<SceneRecord, DatasetError> {
    let path = scene_dir.join("scene.txt");
    SceneRecord::parse(&fs::read_to_string(&path).map_err(io_err(&path))?)
}

pub fn load_scene(scene_dir: &Path) -> Result<SceneDescription, DatasetError> {
    Ok(load_scene_record(scene_dir)?.build()?)
}

pub fn load_dense(
    scene_dir: &Path,
    n_objects: usize,
) -> Result<Vec<DenseObjectLabels>, DatasetError> {
    (0..n_objects)
        .map(|o| Ok(read_dense(&object_file(scene_dir, o))?))
        .collect()
}

/// Dense label files of one scene directory, sorted.
pub fn dense_files(scene_dir: &Path) -> Result<Vec<PathBuf>, DatasetError> {
    let mut out: Vec<PathBuf> = fs::read_dir(scene_dir)
        .map_err(io_err(scene_dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "dgl"))
        .collect();
    out.sort();
    Ok(out)
}
