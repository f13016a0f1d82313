//! Scenario ensembles and their on-disk form: a `manifest.json` plus one
//! little-endian binary file per delivery day.

use std::fs;
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::features::calendar::{hour_offset, session_len, slot, HOURS, SLOTS_PER_DAY};
use crate::ingest::store::{read_json, write_json_pretty};
use crate::{Error, Result};

pub const SCENARIO_FORMAT: &str = "idsim-scenarios";
pub const SCENARIO_VERSION: u32 = 1;
const MAGIC: &[u8; 8] = b"IDSCN001";

/// `M` simulated price paths of one delivery day, stored slot-major:
/// the value of path `m` at slot `s` is `levels[s * n_paths + m]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSet {
    pub model: String,
    pub seed: u64,
    pub date: NaiveDate,
    pub n_paths: usize,
    pub spot: Vec<f64>,
    pub levels: Vec<f64>,
    /// Quantile inversions that hit the clamped bound.
    pub clamped: usize,
}

impl ScenarioSet {
    /// Builds levels from per-path changes laid out path-major (`m * SLOTS_PER_DAY + s`).
    pub fn from_changes(
        model: &str,
        seed: u64,
        date: NaiveDate,
        spot: &[f64],
        changes: &[f64],
        n_paths: usize,
    ) -> Self {
        assert_eq!(spot.len(), HOURS);
        assert_eq!(changes.len(), n_paths * SLOTS_PER_DAY);
        let mut levels = vec![0.0; n_paths * SLOTS_PER_DAY];
        for m in 0..n_paths {
            let c = &changes[m * SLOTS_PER_DAY..(m + 1) * SLOTS_PER_DAY];
            for (h, &sp) in spot.iter().enumerate() {
                let mut p = sp;
                for t in 0..session_len(h) {
                    let s = slot(h, t);
                    p += c[s];
                    levels[s * n_paths + m] = p;
                }
            }
        }
        ScenarioSet {
            model: model.to_string(),
            seed,
            date,
            n_paths,
            spot: spot.to_vec(),
            levels,
            clamped: 0,
        }
    }

    /// All path values at `(h, t)`.
    #[inline]
    pub fn at(&self, h: usize, t: usize) -> &[f64] {
        let s = slot(h, t);
        &self.levels[s * self.n_paths..(s + 1) * self.n_paths]
    }

    /// One path of hour `h` over its whole session.
    pub fn path(&self, m: usize, h: usize) -> Vec<f64> {
        (0..session_len(h)).map(|t| self.at(h, t)[m]).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_paths == 0
            || self.spot.len() != HOURS
            || self.levels.len() != self.n_paths * SLOTS_PER_DAY
        {
            return Err(Error::schema(format!(
                "scenario set for {} has inconsistent shape",
                self.date
            )));
        }
        if let Some(i) = self.levels.iter().position(|v| !v.is_finite()) {
            return Err(Error::numerical(format!(
                "non-finite scenario value at slot {}",
                i / self.n_paths
            )));
        }
        Ok(())
    }

    fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(32 + 8 * (HOURS + self.levels.len()));
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(self.n_paths as u64).to_le_bytes());
        out.extend_from_slice(&(SLOTS_PER_DAY as u64).to_le_bytes());
        for v in self.spot.iter().chain(&self.levels) {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    fn from_bytes(bytes: &[u8], path: &Path) -> Result<(usize, Vec<f64>, Vec<f64>)> {
        let bad = || Error::schema(format!("{} is not a scenario file", path.display()));
        if bytes.len() < 24 || &bytes[..8] != MAGIC {
            return Err(bad());
        }
        let word = |i: usize| u64::from_le_bytes(bytes[i..i + 8].try_into().expect("8 bytes"));
        let n_paths = word(8) as usize;
        if word(16) as usize != SLOTS_PER_DAY
            || bytes.len() != 24 + 8 * (HOURS + n_paths * SLOTS_PER_DAY)
        {
            return Err(bad());
        }
        let vals: Vec<f64> = bytes[24..]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        let (spot, levels) = vals.split_at(HOURS);
        Ok((n_paths, spot.to_vec(), levels.to_vec()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioDay {
    pub date: NaiveDate,
    pub file: String,
    pub seed: u64,
    pub clamped: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioManifest {
    pub format: String,
    pub version: u32,
    pub model: String,
    pub seed: u64,
    pub n_paths: usize,
    pub session_lengths: Vec<usize>,
    pub hour_offsets: Vec<usize>,
    pub days: Vec<ScenarioDay>,
}

fn day_file(date: NaiveDate) -> String {
    format!("{date}.scn")
}

/// Writes one day's binary file into `dir` and returns its manifest entry.
pub fn write_scenario_day(dir: &Path, set: &ScenarioSet) -> Result<ScenarioDay> {
    set.validate()?;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let file = day_file(set.date);
    let p = dir.join(&file);
    fs::write(&p, set.to_bytes()).map_err(|e| Error::io(&p, e))?;
    Ok(ScenarioDay {
        date: set.date,
        file,
        seed: set.seed,
        clamped: set.clamped,
    })
}

pub fn write_scenario_manifest(
    dir: &Path,
    model: &str,
    seed: u64,
    n_paths: usize,
    days: Vec<ScenarioDay>,
) -> Result<ScenarioManifest> {
    let manifest = ScenarioManifest {
        format: SCENARIO_FORMAT.into(),
        version: SCENARIO_VERSION,
        model: model.into(),
        seed,
        n_paths,
        session_lengths: (0..HOURS).map(session_len).collect(),
        hour_offsets: (0..HOURS).map(hour_offset).collect(),
        days,
    };
    write_json_pretty(&dir.join("manifest.json"), &manifest)?;
    Ok(manifest)
}

/// Writes `sets` (all from the same model) under `dir`. `seed` is the root
/// seed of the run; each day records its own derived seed.
pub fn write_scenarios(
    dir: &Path,
    model: &str,
    seed: u64,
    sets: &[ScenarioSet],
) -> Result<ScenarioManifest> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let n_paths = sets.first().map_or(0, |s| s.n_paths);
    let mut days = Vec::with_capacity(sets.len());
    for s in sets {
        if s.n_paths != n_paths || s.model != model {
            return Err(Error::schema(
                "scenario sets of one run must share model and path count",
            ));
        }
        days.push(write_scenario_day(dir, s)?);
    }
    write_scenario_manifest(dir, model, seed, n_paths, days)
}

pub fn read_scenario_manifest(dir: &Path) -> Result<ScenarioManifest> {
    let m: ScenarioManifest = read_json(&dir.join("manifest.json"))?;
    if m.format != SCENARIO_FORMAT || m.version != SCENARIO_VERSION {
        return Err(Error::schema(format!(
            "{} holds {} v{}, expected {SCENARIO_FORMAT} v{SCENARIO_VERSION}",
            dir.display(),
            m.format,
            m.version
        )));
    }
    Ok(m)
}

pub fn read_scenario_day(
    dir: &Path,
    manifest: &ScenarioManifest,
    day: &ScenarioDay,
) -> Result<ScenarioSet> {
    let p = dir.join(&day.file);
    let bytes = fs::read(&p).map_err(|e| Error::io(&p, e))?;
    let (n_paths, spot, levels) = ScenarioSet::from_bytes(&bytes, &p)?;
    if n_paths != manifest.n_paths {
        return Err(Error::schema(format!(
            "{} holds {n_paths} paths, manifest says {}",
            p.display(),
            manifest.n_paths
        )));
    }
    Ok(ScenarioSet {
        model: manifest.model.clone(),
        seed: day.seed,
        date: day.date,
        n_paths,
        spot,
        levels,
        clamped: day.clamped,
    })
}

pub fn read_scenarios(dir: &Path) -> Result<(ScenarioManifest, Vec<ScenarioSet>)> {
    let m = read_scenario_manifest(dir)?;
    let sets = m
        .days
        .iter()
        .map(|d| read_scenario_day(dir, &m, d))
        .collect::<Result<_>>()?;
    Ok((m, sets))
}
