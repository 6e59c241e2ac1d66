//! File formats: trajectory and shot CSV files, model and report JSON, run
//! manifests.
//!
//! Trajectory files start with `#` header lines:
//!
//! ```text
//! # format=qchannel-trajectories/1
//! # dim=2
//! # basis=I,X,Y,Z
//! # provenance=exact
//! # trajectory=0 provenance=exact
//! trajectory_id,t,v0,v1,v2,v3
//! 0,0,1,0,0,1
//! 0,1,1,0.1,0,0.99
//! ```
//!
//! The `t = 0` row of each trajectory holds its initial state. Shot files
//! list `trajectory_id,t,basis,outcome_a,outcome_b,count` rows, one per run
//! of equal outcomes in shot order. Floats are written in Rust's shortest
//! round-trip form, so write → read → write is byte-identical.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::channel::{CoherenceVector, PauliBasis, StinespringModel};
use crate::dataset::{Provenance, Trajectory, TrajectoryDataset};
use crate::dynamics::device::{Outcome, ShotRecord, MEASUREMENT_BASES};
use crate::error::{Error, Result};

pub const TRAJECTORY_FORMAT: &str = "qchannel-trajectories/1";
pub const SHOT_FORMAT: &str = "qchannel-shots/1";
pub const MODEL_FORMAT: &str = "qchannel-model/1";

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

fn provenance_fields(p: &Provenance) -> String {
    match p {
        Provenance::Exact => "provenance=exact".into(),
        Provenance::ShotEstimated { source, subset } => {
            format!("provenance=shot_estimated source={source} subset={subset}")
        }
    }
}

pub fn write_trajectories(ds: &TrajectoryDataset) -> String {
    let basis = PauliBasis::for_dim(ds.dim).expect("dataset dimension is a power of two");
    let mut out = String::new();
    writeln!(out, "# format={TRAJECTORY_FORMAT}").unwrap();
    writeln!(out, "# dim={}", ds.dim).unwrap();
    writeln!(out, "# basis={}", basis.labels().join(",")).unwrap();
    let kind = if ds.is_shot_estimated() { "shot_estimated" } else { "exact" };
    writeln!(out, "# provenance={kind}").unwrap();
    for tr in &ds.trajectories {
        writeln!(out, "# trajectory={} {}", tr.id, provenance_fields(&tr.provenance)).unwrap();
    }
    let cols: Vec<String> = (0..basis.len()).map(|j| format!("v{j}")).collect();
    writeln!(out, "trajectory_id,t,{}", cols.join(",")).unwrap();
    let row = |out: &mut String, id: usize, t: u32, v: &CoherenceVector| {
        write!(out, "{id},{t}").unwrap();
        for x in v.values() {
            write!(out, ",{x}").unwrap();
        }
        out.push('\n');
    };
    for tr in &ds.trajectories {
        row(&mut out, tr.id, 0, &tr.initial);
        for (t, v) in tr.times.iter().zip(&tr.states) {
            row(&mut out, tr.id, *t, v);
        }
    }
    out
}

fn header_fields(body: &str) -> BTreeMap<&str, &str> {
    body.split_whitespace()
        .filter_map(|kv| kv.split_once('='))
        .collect()
}

fn parse_provenance(fields: &BTreeMap<&str, &str>, line: usize) -> Result<Provenance> {
    match fields.get("provenance").copied() {
        Some("exact") => Ok(Provenance::Exact),
        Some("shot_estimated") => {
            let num = |k: &str| -> Result<usize> {
                fields
                    .get(k)
                    .ok_or_else(|| parse_err(line, format!("missing {k}")))?
                    .parse()
                    .map_err(|_| parse_err(line, format!("bad {k}")))
            };
            Ok(Provenance::ShotEstimated {
                source: num("source")?,
                subset: num("subset")?,
            })
        }
        other => Err(parse_err(line, format!("unknown provenance {other:?}"))),
    }
}

pub fn read_trajectories(text: &str) -> Result<TrajectoryDataset> {
    let mut dim = None;
    let mut format_seen = false;
    let mut provenance: BTreeMap<usize, Provenance> = BTreeMap::new();
    let mut order: Vec<usize> = Vec::new();
    let mut rows: BTreeMap<usize, Vec<(usize, u32, CoherenceVector)>> = BTreeMap::new();
    let mut header_done = false;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        if let Some(body) = raw.strip_prefix('#') {
            let fields = header_fields(body);
            if let Some(f) = fields.get("format") {
                if *f != TRAJECTORY_FORMAT {
                    return Err(parse_err(line, format!("unsupported format {f}")));
                }
                format_seen = true;
            }
            if let Some(d) = fields.get("dim") {
                dim = Some(d.parse::<usize>().map_err(|_| parse_err(line, "bad dim"))?);
            }
            if let Some(b) = fields.get("basis") {
                let d = dim.ok_or_else(|| parse_err(line, "basis before dim"))?;
                let expect = PauliBasis::for_dim(d).map_err(|e| parse_err(line, e.to_string()))?.labels().join(",");
                if *b != expect {
                    return Err(parse_err(line, format!("basis order {b} differs from {expect}")));
                }
            }
            if let Some(id) = fields.get("trajectory") {
                let id: usize = id.parse().map_err(|_| parse_err(line, "bad trajectory id"))?;
                provenance.insert(id, parse_provenance(&fields, line)?);
            }
            continue;
        }
        if !header_done {
            if !format_seen {
                return Err(parse_err(line, "missing format header"));
            }
            if !raw.starts_with("trajectory_id,t,") {
                return Err(parse_err(line, "expected column header"));
            }
            header_done = true;
            continue;
        }
        let d = dim.ok_or_else(|| parse_err(line, "missing dim header"))?;
        let fields: Vec<&str> = raw.split(',').collect();
        if fields.len() != 2 + d * d {
            return Err(parse_err(
                line,
                format!("expected {} columns, found {}", 2 + d * d, fields.len()),
            ));
        }
        let id: usize = fields[0].trim().parse().map_err(|_| parse_err(line, "bad trajectory_id"))?;
        let t: u32 = fields[1].trim().parse().map_err(|_| parse_err(line, "bad t"))?;
        let values = fields[2..]
            .iter()
            .map(|s| {
                let x: f64 = s.trim().parse().map_err(|_| parse_err(line, format!("bad number {s:?}")))?;
                if x.is_finite() {
                    Ok(x)
                } else {
                    Err(parse_err(line, "non-finite value"))
                }
            })
            .collect::<Result<Vec<f64>>>()?;
        if !rows.contains_key(&id) {
            order.push(id);
        }
        rows.entry(id).or_default().push((line, t, CoherenceVector::new(values)));
    }
    let dim = dim.ok_or_else(|| parse_err(1, "missing dim header"))?;
    let mut trajectories = Vec::with_capacity(order.len());
    for id in order {
        let rs = rows.remove(&id).expect("id recorded");
        let (first_line, t0, initial) = rs[0].clone();
        if t0 != 0 {
            return Err(parse_err(first_line, format!("trajectory {id} must start with a t=0 row")));
        }
        let mut times = Vec::with_capacity(rs.len() - 1);
        let mut states = Vec::with_capacity(rs.len() - 1);
        let mut prev = 0;
        for (line, t, v) in rs.into_iter().skip(1) {
            if t <= prev {
                return Err(parse_err(line, format!("times of trajectory {id} must increase")));
            }
            prev = t;
            times.push(t);
            states.push(v);
        }
        let prov = provenance.get(&id).copied().unwrap_or(Provenance::Exact);
        trajectories.push(
            Trajectory::new(id, initial, times, states, prov).map_err(|e| parse_err(first_line, e.to_string()))?,
        );
    }
    TrajectoryDataset::new(dim, trajectories)
}

pub fn write_shots(records: &[ShotRecord]) -> String {
    let mut out = String::new();
    writeln!(out, "# format={SHOT_FORMAT}").unwrap();
    writeln!(out, "# bases={}", MEASUREMENT_BASES.join(",")).unwrap();
    writeln!(out, "trajectory_id,t,basis,outcome_a,outcome_b,count").unwrap();
    for r in records {
        for (o, k) in &r.runs {
            writeln!(out, "{},{},{},{},{},{}", r.trajectory, r.t, MEASUREMENT_BASES[r.basis], o.0, o.1, k).unwrap();
        }
    }
    out
}

/// Reads shot rows; consecutive rows with the same (trajectory, t, basis)
/// form one record.
pub fn read_shots(text: &str) -> Result<Vec<ShotRecord>> {
    let mut records: Vec<ShotRecord> = Vec::new();
    let mut header_done = false;
    let mut format_seen = false;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        if let Some(body) = raw.strip_prefix('#') {
            if let Some(f) = header_fields(body).get("format") {
                if *f != SHOT_FORMAT {
                    return Err(parse_err(line, format!("unsupported format {f}")));
                }
                format_seen = true;
            }
            continue;
        }
        if !header_done {
            if !format_seen {
                return Err(parse_err(line, "missing format header"));
            }
            if raw.trim() != "trajectory_id,t,basis,outcome_a,outcome_b,count" {
                return Err(parse_err(line, "expected column header"));
            }
            header_done = true;
            continue;
        }
        let f: Vec<&str> = raw.split(',').map(str::trim).collect();
        if f.len() != 6 {
            return Err(parse_err(line, format!("expected 6 columns, found {}", f.len())));
        }
        let trajectory: usize = f[0].parse().map_err(|_| parse_err(line, "bad trajectory_id"))?;
        let t: u32 = f[1].parse().map_err(|_| parse_err(line, "bad t"))?;
        let basis = MEASUREMENT_BASES
            .iter()
            .position(|b| *b == f[2])
            .ok_or_else(|| parse_err(line, format!("unknown basis {}", f[2])))?;
        let sign = |s: &str| -> Result<i8> {
            match s {
                "1" => Ok(1),
                "-1" => Ok(-1),
                _ => Err(parse_err(line, format!("outcome must be 1 or -1, got {s}"))),
            }
        };
        let outcome = Outcome(sign(f[3])?, sign(f[4])?);
        let count: u64 = f[5].parse().map_err(|_| parse_err(line, "bad count"))?;
        match records.last_mut() {
            Some(r) if r.trajectory == trajectory && r.t == t && r.basis == basis => r.runs.push((outcome, count)),
            _ => records.push(ShotRecord {
                trajectory,
                t,
                basis,
                runs: vec![(outcome, count)],
            }),
        }
    }
    Ok(records)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ModelFile {
    format: String,
    model: StinespringModel,
}

pub fn model_to_json(model: &StinespringModel) -> String {
    let file = ModelFile {
        format: MODEL_FORMAT.into(),
        model: model.clone(),
    };
    serde_json::to_string_pretty(&file).expect("model is serializable") + "\n"
}

pub fn model_from_json(text: &str) -> Result<StinespringModel> {
    let file: ModelFile = serde_json::from_str(text)?;
    if file.format != MODEL_FORMAT {
        return Err(Error::Parse {
            line: 1,
            message: format!("unsupported model format {}", file.format),
        });
    }
    // Re-validate through the constructor.
    StinespringModel::new(file.model.sys_dim(), file.model.env_dim(), file.model.params().to_vec())
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestFile {
    pub path: String,
    pub sha256: String,
}

/// What a run consumed and produced; enough to reproduce it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config_sha256: String,
    /// The effective configuration, after command-line overrides.
    pub config: String,
    pub data_seed: u64,
    pub train_seed: u64,
    pub files: Vec<ManifestFile>,
}

impl Manifest {
    pub fn new(command: &str, config_toml: &str, data_seed: u64, train_seed: u64) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            config_sha256: sha256_hex(config_toml.as_bytes()),
            config: config_toml.into(),
            data_seed,
            train_seed,
            files: Vec::new(),
        }
    }

    pub fn add_file(&mut self, path: &str, contents: &[u8]) {
        self.files.push(ManifestFile {
            path: path.into(),
            sha256: sha256_hex(contents),
        });
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest is serializable") + "\n"
    }
}

/// Writes `contents` to `dir/name`, creating `dir` if needed.
pub fn write_file(dir: &Path, name: &str, contents: &str) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join(name), contents)?;
    Ok(())
}

pub fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| {
        Error::MissingData(format!("cannot read {}: {e}", path.display()))
    })
}
