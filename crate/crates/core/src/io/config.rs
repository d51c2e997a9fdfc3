//! Versioned JSON run configuration.
//!
//! Every field is resolved in the order command-line override, config file,
//! built-in default, and the fully resolved document is validated before any
//! computation starts. Validation failures carry the dotted path of the field.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::freefield::{SceneGeometry, SphArraySpec};
use crate::room::{RoomSpec, WallReflection, DEFAULT_MAX_TENSOR_SAMPLES};
use crate::sampling::SphGrid;
use crate::special::{sh_count, SphereKind};

pub const SCHEMA_VERSION: u32 = 1;

pub const DEFAULT_FS: f64 = 48_000.0;
pub const DEFAULT_LENGTH: usize = 16_384;
pub const DEFAULT_MAX_ORDER: usize = 6;
pub const DEFAULT_ANALYSIS_FREQ: f64 = 700.0;
pub const DEFAULT_TAU_GRID: &str = "log:1e-3:full:60";
pub const DEFAULT_THRESHOLD_DB: f64 = 50.0;
pub const DEFAULT_TARGET: &str = "icosahedron12";

/// End point of a window grid: a value in seconds or the full response.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TauEnd {
    Full,
    Seconds(f64),
}

/// Window-length grid, written `log:START:STOP:COUNT`, `lin:START:STOP:COUNT`
/// or `list:T1,T2,...`; `STOP` may be `full`.
#[derive(Debug, Clone, PartialEq)]
pub enum TauGrid {
    Log { start: f64, stop: TauEnd, count: usize },
    Lin { start: f64, stop: TauEnd, count: usize },
    List(Vec<f64>),
}

impl TauGrid {
    pub fn parse(spec: &str) -> std::result::Result<Self, String> {
        let (kind, rest) = spec
            .split_once(':')
            .ok_or_else(|| format!("`{spec}` is not of the form KIND:ARGS"))?;
        let number = |s: &str| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| format!("`{s}` is not a number"))
        };
        match kind {
            "log" | "lin" => {
                let parts: Vec<&str> = rest.split(':').collect();
                let [start, stop, count] = parts[..] else {
                    return Err(format!("`{spec}` needs START:STOP:COUNT"));
                };
                let start = number(start)?;
                let stop = match stop.trim() {
                    "full" => TauEnd::Full,
                    s => TauEnd::Seconds(number(s)?),
                };
                let count = count
                    .trim()
                    .parse::<usize>()
                    .map_err(|_| format!("`{count}` is not a point count"))?;
                if count < 2 {
                    return Err("a grid needs at least two points".into());
                }
                if !(start > 0.0 && start.is_finite()) {
                    return Err(format!("grid start must be positive, got {start}"));
                }
                Ok(if kind == "log" {
                    TauGrid::Log { start, stop, count }
                } else {
                    TauGrid::Lin { start, stop, count }
                })
            }
            "list" => {
                let values = rest.split(',').map(number).collect::<std::result::Result<Vec<_>, _>>()?;
                if values.is_empty() {
                    return Err("empty window list".into());
                }
                Ok(TauGrid::List(values))
            }
            _ => Err(format!("unknown grid kind `{kind}` (expected log, lin or list)")),
        }
    }

    /// Window lengths for a response of `duration` seconds; every value lies in
    /// `(0, duration]` and the sequence strictly increases.
    pub fn resolve(&self, duration: f64) -> std::result::Result<Vec<f64>, String> {
        let end = |stop: &TauEnd| match stop {
            TauEnd::Full => duration,
            TauEnd::Seconds(s) => *s,
        };
        let taus: Vec<f64> = match self {
            TauGrid::Log { start, stop, count } => {
                let stop = end(stop);
                let ratio = (stop / start).ln();
                (0..*count)
                    .map(|i| {
                        if i + 1 == *count {
                            stop
                        } else {
                            start * (ratio * i as f64 / (*count - 1) as f64).exp()
                        }
                    })
                    .collect()
            }
            TauGrid::Lin { start, stop, count } => {
                let stop = end(stop);
                (0..*count)
                    .map(|i| {
                        if i + 1 == *count {
                            stop
                        } else {
                            start + (stop - start) * i as f64 / (*count - 1) as f64
                        }
                    })
                    .collect()
            }
            TauGrid::List(v) => v.clone(),
        };
        if let Some(t) = taus.iter().find(|t| !(**t > 0.0 && **t <= duration)) {
            return Err(format!("window {t} s is outside (0, {duration}] s"));
        }
        if taus.windows(2).any(|w| !(w[0] < w[1])) {
            return Err("window lengths must be strictly increasing".into());
        }
        Ok(taus)
    }
}

impl fmt::Display for TauGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let stop = |s: &TauEnd| match s {
            TauEnd::Full => "full".to_string(),
            TauEnd::Seconds(v) => v.to_string(),
        };
        match self {
            TauGrid::Log { start, stop: s, count } => write!(f, "log:{start}:{}:{count}", stop(s)),
            TauGrid::Lin { start, stop: s, count } => write!(f, "lin:{start}:{}:{count}", stop(s)),
            TauGrid::List(v) => {
                let items: Vec<String> = v.iter().map(|t| t.to_string()).collect();
                write!(f, "list:{}", items.join(","))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArrayConfig {
    pub position: [f64; 3],
    pub radius: f64,
    /// Built-in layout name or a path to a `theta,phi` CSV.
    pub grid: String,
    pub sh_order: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cap_alpha: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sphere: Option<SphereKind>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoomConfig {
    pub dims: [f64; 3],
    /// Order `x0, x1, y0, y1, z0, z1`.
    pub walls: [WallReflection; 6],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneConfig {
    pub room: RoomConfig,
    pub loudspeaker: ArrayConfig,
    pub microphone: ArrayConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthesisConfig {
    pub fs: f64,
    pub length: usize,
    pub max_order: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisConfig {
    pub analysis_freq: f64,
    pub tau_grid: String,
    pub threshold_db: f64,
    /// Windows at which singular spectra are written, besides the full response.
    pub spectrum_taus: Vec<f64>,
    /// `icosahedron12` or a path to a `coeff_index,re,im` CSV.
    pub target: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputsConfig {
    pub directory: PathBuf,
    pub omni_trace: bool,
    pub singular_spectra: bool,
}

/// A fully resolved and validated run configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub schema_version: u32,
    pub scene: SceneConfig,
    pub synthesis: SynthesisConfig,
    pub analysis: AnalysisConfig,
    pub outputs: OutputsConfig,
    /// Directory that relative paths are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

/// Values supplied on the command line; each one replaces the config entry.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigOverrides {
    pub fs: Option<f64>,
    pub length: Option<usize>,
    pub max_order: Option<usize>,
    pub analysis_freq: Option<f64>,
    pub tau_grid: Option<String>,
    pub threshold_db: Option<f64>,
    pub target: Option<String>,
    pub directory: Option<PathBuf>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    schema_version: Option<u32>,
    scene: Option<RawScene>,
    synthesis: Option<RawSynthesis>,
    analysis: Option<RawAnalysis>,
    outputs: Option<RawOutputs>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScene {
    room: Option<RawRoom>,
    loudspeaker: Option<RawArray>,
    microphone: Option<RawArray>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum RawWalls {
    Each(Vec<WallReflection>),
    All(WallReflection),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRoom {
    dims: Option<[f64; 3]>,
    walls: Option<RawWalls>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawArray {
    position: Option<[f64; 3]>,
    radius: Option<f64>,
    grid: Option<String>,
    sh_order: Option<usize>,
    cap_alpha: Option<f64>,
    sphere: Option<SphereKind>,
}

#[derive(Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSynthesis {
    fs: Option<f64>,
    length: Option<usize>,
    max_order: Option<usize>,
}

#[derive(Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawAnalysis {
    analysis_freq: Option<f64>,
    tau_grid: Option<String>,
    threshold_db: Option<f64>,
    spectrum_taus: Option<Vec<f64>>,
    target: Option<String>,
}

#[derive(Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOutputs {
    directory: Option<PathBuf>,
    omni_trace: Option<bool>,
    singular_spectra: Option<bool>,
}

fn required<T>(value: Option<T>, field: &str) -> Result<T> {
    value.ok_or_else(|| Error::validation(field, "required field is missing"))
}

fn resolve_array(raw: Option<RawArray>, field: &str, speaker: bool) -> Result<ArrayConfig> {
    let raw = required(raw, field)?;
    let sub = |name: &str| format!("{field}.{name}");
    let cfg = ArrayConfig {
        position: required(raw.position, &sub("position"))?,
        radius: required(raw.radius, &sub("radius"))?,
        grid: required(raw.grid, &sub("grid"))?,
        sh_order: required(raw.sh_order, &sub("sh_order"))?,
        cap_alpha: raw.cap_alpha,
        sphere: raw.sphere,
    };
    if speaker {
        required(cfg.cap_alpha, &sub("cap_alpha"))?;
        if cfg.sphere.is_some() {
            return Err(Error::validation(sub("sphere"), "only a microphone array has a sphere type"));
        }
    } else {
        required(cfg.sphere, &sub("sphere"))?;
        if cfg.cap_alpha.is_some() {
            return Err(Error::validation(sub("cap_alpha"), "only a loudspeaker array has caps"));
        }
    }
    Ok(cfg)
}

impl RunConfig {
    /// Reads, resolves and validates a config file.
    pub fn load(path: &Path, overrides: &ConfigOverrides) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_json(&text, &base, overrides)
    }

    pub fn from_json(text: &str, base_dir: &Path, overrides: &ConfigOverrides) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let raw: RawConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let field = if path == "." { "config".to_string() } else { path };
            Error::validation(field, e.into_inner().to_string())
        })?;

        let version = required(raw.schema_version, "schema_version")?;
        if version != SCHEMA_VERSION {
            return Err(Error::validation(
                "schema_version",
                format!("unsupported version {version} (this build reads {SCHEMA_VERSION})"),
            ));
        }
        let scene = required(raw.scene, "scene")?;
        let room = required(scene.room, "scene.room")?;
        let walls = match required(room.walls, "scene.room.walls")? {
            RawWalls::All(w) => std::array::from_fn(|_| w.clone()),
            RawWalls::Each(v) => <[WallReflection; 6]>::try_from(v).map_err(|v| {
                Error::validation("scene.room.walls", format!("expected 6 walls, got {}", v.len()))
            })?,
        };
        let scene = SceneConfig {
            room: RoomConfig {
                dims: required(room.dims, "scene.room.dims")?,
                walls,
            },
            loudspeaker: resolve_array(scene.loudspeaker, "scene.loudspeaker", true)?,
            microphone: resolve_array(scene.microphone, "scene.microphone", false)?,
        };
        let syn = raw.synthesis.unwrap_or_default();
        let ana = raw.analysis.unwrap_or_default();
        let out = raw.outputs.unwrap_or_default();
        let o = overrides;
        let cfg = RunConfig {
            schema_version: version,
            scene,
            synthesis: SynthesisConfig {
                fs: o.fs.or(syn.fs).unwrap_or(DEFAULT_FS),
                length: o.length.or(syn.length).unwrap_or(DEFAULT_LENGTH),
                max_order: o.max_order.or(syn.max_order).unwrap_or(DEFAULT_MAX_ORDER),
            },
            analysis: AnalysisConfig {
                analysis_freq: o.analysis_freq.or(ana.analysis_freq).unwrap_or(DEFAULT_ANALYSIS_FREQ),
                tau_grid: o.tau_grid.clone().or(ana.tau_grid).unwrap_or(DEFAULT_TAU_GRID.into()),
                threshold_db: o.threshold_db.or(ana.threshold_db).unwrap_or(DEFAULT_THRESHOLD_DB),
                spectrum_taus: ana.spectrum_taus.unwrap_or_default(),
                target: o.target.clone().or(ana.target).unwrap_or(DEFAULT_TARGET.into()),
            },
            outputs: OutputsConfig {
                directory: o.directory.clone().or(out.directory).unwrap_or("out".into()),
                omni_trace: out.omni_trace.unwrap_or(true),
                singular_spectra: out.singular_spectra.unwrap_or(true),
            },
            base_dir: base_dir.to_path_buf(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Checks every module precondition that can be checked without computing.
    pub fn validate(&self) -> Result<()> {
        let syn = &self.synthesis;
        if !(syn.fs > 0.0 && syn.fs.fract() == 0.0 && syn.fs <= u32::MAX as f64) {
            return Err(Error::validation("synthesis.fs", format!("must be a positive integer rate in Hz, got {}", syn.fs)));
        }
        if syn.length < 4 || !syn.length.is_power_of_two() {
            return Err(Error::validation(
                "synthesis.length",
                format!("must be a power of two >= 4, got {}", syn.length),
            ));
        }
        let room = self.room_spec()?;
        let spec_l = self.loudspeaker_spec()?;
        let spec_m = self.microphone_spec()?;
        room.geometry()
            .check_clearance(&spec_l, &spec_m)
            .map_err(|e| Error::validation("scene", e.to_string()))?;
        let dims = room.dims();
        for (name, a) in [("loudspeaker", &self.scene.loudspeaker), ("microphone", &self.scene.microphone)] {
            if (0..3).any(|i| a.position[i] - a.radius <= 0.0 || a.position[i] + a.radius >= dims[i]) {
                return Err(Error::validation(
                    format!("scene.{name}.position"),
                    format!("a sphere of radius {} at {:?} does not fit in the room", a.radius, a.position),
                ));
            }
        }
        let channels = sh_count(spec_m.sh_order()) * sh_count(spec_l.sh_order());
        if channels > u16::MAX as usize {
            return Err(Error::validation("scene", format!("{channels} channels exceed the WAV channel limit")));
        }
        if channels.saturating_mul(syn.length) > DEFAULT_MAX_TENSOR_SAMPLES {
            return Err(Error::validation(
                "synthesis.length",
                format!("a {channels}-channel tensor of length {} exceeds the memory cap", syn.length),
            ));
        }

        let ana = &self.analysis;
        if !(ana.analysis_freq > 0.0 && ana.analysis_freq < syn.fs / 2.0) {
            return Err(Error::validation(
                "analysis.analysis_freq",
                format!("must lie in (0, fs/2) = (0, {}), got {}", syn.fs / 2.0, ana.analysis_freq),
            ));
        }
        self.tau_grid()?;
        let duration = syn.length as f64 / syn.fs;
        for (i, t) in ana.spectrum_taus.iter().enumerate() {
            if !(*t > 0.0 && *t <= duration) {
                return Err(Error::validation(
                    format!("analysis.spectrum_taus[{i}]"),
                    format!("window {t} s is outside (0, {duration}] s"),
                ));
            }
        }
        if !(ana.threshold_db > 0.0 && ana.threshold_db.is_finite()) {
            return Err(Error::validation("analysis.threshold_db", format!("must be positive, got {}", ana.threshold_db)));
        }
        if ana.target != DEFAULT_TARGET && !self.resolve_path(Path::new(&ana.target)).is_file() {
            return Err(Error::validation(
                "analysis.target",
                format!("`{}` is neither `{DEFAULT_TARGET}` nor a readable file", ana.target),
            ));
        }
        Ok(())
    }

    pub fn resolve_path(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn output_dir(&self) -> PathBuf {
        self.resolve_path(&self.outputs.directory)
    }

    pub fn duration(&self) -> f64 {
        self.synthesis.length as f64 / self.synthesis.fs
    }

    pub fn tau_grid(&self) -> Result<TauGrid> {
        let field = "analysis.tau_grid";
        let grid = TauGrid::parse(&self.analysis.tau_grid).map_err(|m| Error::validation(field, m))?;
        grid.resolve(self.duration()).map_err(|m| Error::validation(field, m))?;
        Ok(grid)
    }

    pub fn taus(&self) -> Result<Vec<f64>> {
        self.tau_grid()?
            .resolve(self.duration())
            .map_err(|m| Error::validation("analysis.tau_grid", m))
    }

    fn grid(&self, a: &ArrayConfig, field: &str) -> Result<SphGrid> {
        let as_validation = |e: Error| Error::validation(format!("{field}.grid"), e.to_string());
        if crate::sampling::BUILTIN_GRIDS.contains(&a.grid.as_str()) {
            SphGrid::builtin(&a.grid).map_err(as_validation)
        } else {
            SphGrid::read_csv(&self.resolve_path(Path::new(&a.grid))).map_err(as_validation)
        }
    }

    pub fn geometry(&self) -> Result<SceneGeometry> {
        SceneGeometry::new(self.scene.loudspeaker.position, self.scene.microphone.position)
            .map_err(|e| Error::validation("scene", e.to_string()))
    }

    pub fn room_spec(&self) -> Result<RoomSpec> {
        for (i, w) in self.scene.room.walls.iter().enumerate() {
            w.validate().map_err(|m| Error::validation(format!("scene.room.walls[{i}]"), m))?;
        }
        RoomSpec::new(
            self.scene.room.dims,
            self.scene.room.walls.clone(),
            self.synthesis.max_order,
            self.geometry()?,
        )
        .map_err(|e| Error::validation("scene.room", e.to_string()))
    }

    pub fn loudspeaker_spec(&self) -> Result<SphArraySpec> {
        let field = "scene.loudspeaker";
        let a = &self.scene.loudspeaker;
        let alpha = required(a.cap_alpha, "scene.loudspeaker.cap_alpha")?;
        SphArraySpec::loudspeaker(a.radius, self.grid(a, field)?, a.sh_order, alpha)
            .map_err(|e| Error::validation(field, e.to_string()))
    }

    pub fn microphone_spec(&self) -> Result<SphArraySpec> {
        let field = "scene.microphone";
        let a = &self.scene.microphone;
        let sphere = required(a.sphere, "scene.microphone.sphere")?;
        SphArraySpec::microphone(a.radius, self.grid(a, field)?, a.sh_order, sphere)
            .map_err(|e| Error::validation(field, e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}
