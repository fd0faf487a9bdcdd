//! On-disk layout of one run, phase drivers with resume, and CSV exports.
//!
//! ```text
//! <run>/config.toml              configuration snapshot
//! <run>/status.toml              progress marker, written last at each step
//! <run>/plant_state.toml         plant state after the last completed step
//! <run>/babble.csv               per-map babble fit summary
//! <run>/datasets/<phase>_map<i>.csv
//! <run>/checkpoints/map<i>_r<k>.txt   maps after k retunes
//! <run>/trials/trial_<k>.csv     task trial run with maps retuned k times
//! <run>/metrics/rmse.csv         per-joint RMSE (rad), one row per trial
//! <run>/metrics/timing.csv       wall-clock only, not deterministic
//! <run>/exports/                 derived CSVs
//! ```

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::info;
use serde::{Deserialize, Serialize};

use crate::checkpoint;
use crate::config::ExperimentConfig;
use crate::error::{io_err, Error};
use crate::experiment::Experiment;
use crate::inverse_map::{Dataset, Phase, KINEMATIC_INPUTS, TENDONS};
use crate::limb::{endpoint_position, Vec2};
use crate::pipeline::{evaluate_rmse, Architecture, Learner, RmseReport, TrialRecord};
use crate::plant::{LimbId, PlantSnapshot};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunStatus {
    pub babble_done: bool,
    pub refinements_completed: usize,
    pub evaluated: bool,
    pub failure: Option<String>,
}

impl RunStatus {
    fn refinement_started(&self) -> bool {
        self.refinements_completed > 0 || self.evaluated
    }
}

#[derive(Clone, Debug)]
pub struct RunDir {
    root: PathBuf,
}

impl RunDir {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        RunDir { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn config_path(&self) -> PathBuf {
        self.root.join("config.toml")
    }

    pub fn status_path(&self) -> PathBuf {
        self.root.join("status.toml")
    }

    pub fn plant_state_path(&self) -> PathBuf {
        self.root.join("plant_state.toml")
    }

    pub fn babble_summary_path(&self) -> PathBuf {
        self.root.join("babble.csv")
    }

    pub fn dataset_path(&self, phase: Phase, map: usize) -> PathBuf {
        self.root.join("datasets").join(format!("{}_map{map}.csv", phase.tag()))
    }

    pub fn checkpoint_path(&self, map: usize, retunes: usize) -> PathBuf {
        self.root.join("checkpoints").join(format!("map{map}_r{retunes:02}.txt"))
    }

    pub fn trial_path(&self, index: usize) -> PathBuf {
        self.root.join("trials").join(format!("trial_{index:02}.csv"))
    }

    pub fn rmse_path(&self) -> PathBuf {
        self.root.join("metrics").join("rmse.csv")
    }

    pub fn timing_path(&self) -> PathBuf {
        self.root.join("metrics").join("timing.csv")
    }

    pub fn export_dir(&self) -> PathBuf {
        self.root.join("exports")
    }

    pub fn status(&self) -> Result<Option<RunStatus>, Error> {
        let path = self.status_path();
        if !path.exists() {
            return Ok(None);
        }
        let text = std::fs::read_to_string(&path).map_err(io_err(&path))?;
        toml::from_str(&text).map(Some).map_err(|e| Error::Format {
            path,
            detail: e.to_string(),
        })
    }

    fn write_status(&self, status: &RunStatus) -> Result<(), Error> {
        write_atomic(&self.status_path(), toml::to_string(status).expect("status serializes").as_bytes())
    }

    /// The configuration snapshot, if this directory has one.
    pub fn load_config(&self) -> Result<Option<ExperimentConfig>, Error> {
        let path = self.config_path();
        if path.exists() {
            ExperimentConfig::load(&path).map(Some)
        } else {
            Ok(None)
        }
    }

    fn read_artifact(&self, path: &Path) -> Result<String, Error> {
        std::fs::read_to_string(path).map_err(|e| {
            if e.kind() == std::io::ErrorKind::NotFound {
                Error::MissingArtifacts {
                    dir: self.root.clone(),
                    detail: format!("{} does not exist", path.display()),
                }
            } else {
                Error::Io {
                    path: path.to_path_buf(),
                    source: e,
                }
            }
        })
    }

    /// Trial indices with a saved trial file, ascending.
    pub fn trial_indices(&self) -> Result<Vec<usize>, Error> {
        let dir = self.root.join("trials");
        if !dir.exists() {
            return Ok(Vec::new());
        }
        let mut out = Vec::new();
        for entry in std::fs::read_dir(&dir).map_err(io_err(&dir))? {
            let entry = entry.map_err(io_err(&dir))?;
            let name = entry.file_name();
            let name = name.to_string_lossy();
            if let Some(k) = name
                .strip_prefix("trial_")
                .and_then(|s| s.strip_suffix(".csv"))
                .and_then(|s| s.parse().ok())
            {
                out.push(k);
            }
        }
        out.sort_unstable();
        Ok(out)
    }

    pub fn load_trial(&self, index: usize) -> Result<TrialRecord, Error> {
        let path = self.trial_path(index);
        let text = self.read_artifact(&path)?;
        trial_from_csv(&text, index).map_err(|detail| Error::Format { path, detail })
    }

    pub fn load_rmse(&self) -> Result<Vec<(usize, RmseReport)>, Error> {
        let path = self.rmse_path();
        let text = self.read_artifact(&path)?;
        rmse_from_csv(&text).map_err(|detail| Error::Format { path, detail })
    }
}

fn write_atomic(path: &Path, contents: &[u8]) -> Result<(), Error> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    let tmp = path.with_extension("partial");
    std::fs::write(&tmp, contents).map_err(io_err(&tmp))?;
    std::fs::rename(&tmp, path).map_err(io_err(path))
}

fn fmt_row(out: &mut String, values: impl IntoIterator<Item = f64>) {
    for v in values {
        write!(out, ",{v:?}").expect("write to String");
    }
    out.push('\n');
}

fn parse_fields(line: &str, n: usize, expected: usize) -> Result<Vec<f64>, String> {
    let values = line
        .split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|_| format!("line {n}: bad number {t:?}")))
        .collect::<Result<Vec<f64>, String>>()?;
    if values.len() != expected {
        return Err(format!("line {n}: {} fields, expected {expected}", values.len()));
    }
    Ok(values)
}

/// The rows of `data` tagged `phase`, as CSV.
pub fn dataset_to_csv(data: &Dataset, phase: Phase) -> String {
    let mut out = String::from("phase");
    for i in 0..data.inputs() {
        write!(out, ",x{i}").unwrap();
    }
    for k in 0..data.outputs() {
        write!(out, ",y{k}").unwrap();
    }
    out.push('\n');
    for i in (0..data.len()).filter(|&i| data.phase(i) == phase) {
        out.push_str(&phase.tag());
        fmt_row(&mut out, data.input(i).iter().chain(data.target(i)).copied());
    }
    out
}

pub fn dataset_from_csv(text: &str, inputs: usize, outputs: usize) -> Result<Dataset, String> {
    let mut data = Dataset::new(inputs, outputs);
    let mut lines = text.lines().enumerate();
    let header = lines.next().map(|(_, h)| h).unwrap_or_default();
    if header.split(',').count() != 1 + inputs + outputs {
        return Err(format!("header has {} columns, expected {}", header.split(',').count(), 1 + inputs + outputs));
    }
    for (n, line) in lines {
        if line.is_empty() {
            continue;
        }
        let (tag, rest) = line.split_once(',').ok_or_else(|| format!("line {}: no fields", n + 1))?;
        let phase = Phase::parse(tag).ok_or_else(|| format!("line {}: unknown phase {tag:?}", n + 1))?;
        let v = parse_fields(rest, n + 1, inputs + outputs)?;
        data.push(&v[..inputs], &v[inputs..], phase);
    }
    Ok(data)
}

const FEATURE_NAMES: [&str; 6] = ["q0", "q1", "dq0", "dq1", "ddq0", "ddq1"];

pub fn trial_to_csv(rec: &TrialRecord) -> String {
    let mut out = String::from("t");
    for id in LimbId::ALL {
        for f in FEATURE_NAMES {
            write!(out, ",{id}_{f}_des").unwrap();
        }
        for f in FEATURE_NAMES {
            write!(out, ",{id}_{f}").unwrap();
        }
        for a in 0..3 {
            write!(out, ",{id}_a{a}").unwrap();
        }
    }
    out.push('\n');
    for i in 0..rec.len() {
        write!(out, "{:?}", rec.times[i]).unwrap();
        let row = (0..4).flat_map(|l| {
            rec.desired[l][i]
                .into_iter()
                .chain(rec.achieved[l][i])
                .chain(rec.activations[l][i])
        });
        fmt_row(&mut out, row);
    }
    out
}

pub fn trial_from_csv(text: &str, index: usize) -> Result<TrialRecord, String> {
    const PER_LIMB: usize = 15;
    let mut rec = TrialRecord {
        index,
        times: Vec::new(),
        desired: Default::default(),
        achieved: Default::default(),
        activations: Default::default(),
        rmse: RmseReport {
            per_joint: [[0.0; 2]; 4],
            aggregate: 0.0,
        },
        wall_clock: 0.0,
    };
    for (n, line) in text.lines().enumerate().skip(1) {
        if line.is_empty() {
            continue;
        }
        let v = parse_fields(line, n + 1, 1 + 4 * PER_LIMB)?;
        rec.times.push(v[0]);
        for l in 0..4 {
            let b = 1 + l * PER_LIMB;
            rec.desired[l].push(v[b..b + 6].try_into().unwrap());
            rec.achieved[l].push(v[b + 6..b + 12].try_into().unwrap());
            rec.activations[l].push(v[b + 12..b + 15].try_into().unwrap());
        }
    }
    if rec.is_empty() {
        return Err("trial file has no samples".into());
    }
    let (d, a) = rec.joint_series();
    rec.rmse = evaluate_rmse(&d, &a).map_err(|e| e.to_string())?;
    Ok(rec)
}

fn joint_columns() -> Vec<String> {
    LimbId::ALL
        .iter()
        .flat_map(|id| [format!("{id}_proximal"), format!("{id}_distal")])
        .collect()
}

fn rmse_csv(rows: &[(usize, RmseReport)], scale: f64) -> String {
    let mut out = format!("trial,{},aggregate\n", joint_columns().join(","));
    for (k, r) in rows {
        write!(out, "{k}").unwrap();
        fmt_row(&mut out, r.values().into_iter().chain([r.aggregate]).map(|v| v * scale));
    }
    out
}

pub fn rmse_from_csv(text: &str) -> Result<Vec<(usize, RmseReport)>, String> {
    let mut rows = Vec::new();
    for (n, line) in text.lines().enumerate().skip(1) {
        if line.is_empty() {
            continue;
        }
        let (k, rest) = line.split_once(',').ok_or_else(|| format!("line {}: no fields", n + 1))?;
        let k = k.parse().map_err(|_| format!("line {}: bad trial index {k:?}", n + 1))?;
        let v = parse_fields(rest, n + 1, 9)?;
        let mut per_joint = [[0.0; 2]; 4];
        for (i, x) in v[..8].iter().enumerate() {
            per_joint[i / 2][i % 2] = *x;
        }
        rows.push((k, RmseReport { per_joint, aggregate: v[8] }));
    }
    Ok(rows)
}

fn map_shape(arch: Architecture) -> (usize, usize, usize) {
    match arch {
        Architecture::PerLimb => (4, KINEMATIC_INPUTS, TENDONS),
        Architecture::WholeBody => (1, 4 * KINEMATIC_INPUTS, 4 * TENDONS),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BabbleSummary {
    pub samples: usize,
    pub fit_mse: Vec<f64>,
    pub baseline_mse: Vec<f64>,
    /// True when the directory already held a finished babble.
    pub reused: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RefineSummary {
    /// `(trial index, RMSE)` for every trial in the run so far.
    pub rmse: Vec<(usize, RmseReport)>,
    pub trials_run: usize,
    pub exports: Vec<PathBuf>,
}

/// Rejects a configuration that contradicts the work already on disk.
fn reconcile(dir: &RunDir, cfg: &ExperimentConfig, status: &RunStatus) -> Result<(), Error> {
    let Some(old) = dir.load_config()? else {
        return Ok(());
    };
    if status.babble_done && !cfg.same_babble_setup(&old) {
        return Err(Error::Config(format!(
            "{} was babbled with a different seed, plant, babble or network setup",
            dir.root().display()
        )));
    }
    if status.refinement_started() {
        let mut a = cfg.refinement.clone();
        a.num_refinements = old.refinement.num_refinements;
        if a != old.refinement || cfg.task != old.task {
            return Err(Error::Config(format!(
                "{} already has refinement trials run with different refinement or task settings",
                dir.root().display()
            )));
        }
        if status.evaluated && cfg.refinement.num_refinements != old.refinement.num_refinements {
            return Err(Error::Config(format!(
                "refinement.num_refinements: {} is finished with {} refinements",
                dir.root().display(),
                old.refinement.num_refinements
            )));
        }
    }
    Ok(())
}

fn write_config(dir: &RunDir, cfg: &ExperimentConfig) -> Result<(), Error> {
    write_atomic(&dir.config_path(), cfg.to_toml().as_bytes())
}

fn save_babble(dir: &RunDir, exp: &Experiment) -> Result<BabbleSummary, Error> {
    let report = exp.babble.as_ref().expect("fresh babble has a report");
    for (i, data) in exp.learner.datasets.iter().enumerate() {
        write_atomic(&dir.dataset_path(Phase::Babble, i), dataset_to_csv(data, Phase::Babble).as_bytes())?;
    }
    for (i, map) in exp.learner.maps.iter().enumerate() {
        write_atomic(&dir.checkpoint_path(i, 0), checkpoint::to_text(map).as_bytes())?;
    }
    let mut csv = String::from("map,samples,fit_mse,baseline_mse\n");
    for (i, (fit, base)) in report.fit_mse.iter().zip(&report.baseline_mse).enumerate() {
        writeln!(csv, "{i},{},{fit:?},{base:?}", report.samples).unwrap();
    }
    write_atomic(&dir.babble_summary_path(), csv.as_bytes())?;
    save_plant(dir, exp)?;
    dir.write_status(&RunStatus {
        babble_done: true,
        ..RunStatus::default()
    })?;
    Ok(BabbleSummary {
        samples: report.samples,
        fit_mse: report.fit_mse.clone(),
        baseline_mse: report.baseline_mse.clone(),
        reused: false,
    })
}

fn load_babble_summary(dir: &RunDir) -> Result<BabbleSummary, Error> {
    let path = dir.babble_summary_path();
    let text = dir.read_artifact(&path)?;
    let mut s = BabbleSummary {
        samples: 0,
        fit_mse: Vec::new(),
        baseline_mse: Vec::new(),
        reused: true,
    };
    for (n, line) in text.lines().enumerate().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        let bad = || Error::Format {
            path: path.clone(),
            detail: format!("line {}: expected map,samples,fit_mse,baseline_mse", n + 1),
        };
        if f.len() != 4 {
            return Err(bad());
        }
        s.samples = f[1].parse().map_err(|_| bad())?;
        s.fit_mse.push(f[2].parse().map_err(|_| bad())?);
        s.baseline_mse.push(f[3].parse().map_err(|_| bad())?);
    }
    Ok(s)
}

fn save_plant(dir: &RunDir, exp: &Experiment) -> Result<(), Error> {
    let text = toml::to_string(&exp.plant.snapshot()).expect("plant state serializes");
    write_atomic(&dir.plant_state_path(), text.as_bytes())
}

fn fresh_babble(cfg: &ExperimentConfig, dir: &RunDir) -> Result<(BabbleSummary, Experiment), Error> {
    write_config(dir, cfg)?;
    let started = Instant::now();
    let exp = Experiment::babble(cfg.clone())?;
    info!("babble finished in {:.1} s", started.elapsed().as_secs_f64());
    let summary = save_babble(dir, &exp)?;
    Ok((summary, exp))
}

/// Babbles and fits the initial maps into `dir`.
///
/// A directory that already finished its babble is refused unless `resume`
/// is set, in which case the saved summary is returned.
pub fn babble_phase(cfg: &ExperimentConfig, dir: &RunDir, resume: bool) -> Result<BabbleSummary, Error> {
    cfg.validate()?;
    let status = dir.status()?.unwrap_or_default();
    if status.babble_done {
        if !resume {
            return Err(Error::WouldOverwrite(dir.root().to_path_buf()));
        }
        reconcile(dir, cfg, &status)?;
        return load_babble_summary(dir);
    }
    Ok(fresh_babble(cfg, dir)?.0)
}

fn load_experiment(cfg: &ExperimentConfig, dir: &RunDir, status: &RunStatus) -> Result<Experiment, Error> {
    let k = status.refinements_completed;
    let (count, inputs, outputs) = map_shape(cfg.network.architecture);
    let mut maps = Vec::with_capacity(count);
    let mut datasets = Vec::with_capacity(count);
    for i in 0..count {
        let path = dir.checkpoint_path(i, k);
        dir.read_artifact(&path)?;
        let map = checkpoint::load(&path)?;
        if map.inputs() != inputs || map.outputs() != outputs {
            return Err(Error::Format {
                path,
                detail: format!("map is {}→{}, run needs {inputs}→{outputs}", map.inputs(), map.outputs()),
            });
        }
        maps.push(map);
        let mut data = Dataset::new(inputs, outputs);
        for phase in std::iter::once(Phase::Babble).chain((1..=k).map(|r| Phase::Refinement(r as u32))) {
            let path = dir.dataset_path(phase, i);
            let text = dir.read_artifact(&path)?;
            let part = dataset_from_csv(&text, inputs, outputs).map_err(|detail| Error::Format { path, detail })?;
            data.extend(&part);
        }
        datasets.push(data);
    }
    let path = dir.plant_state_path();
    let text = dir.read_artifact(&path)?;
    let snapshot: PlantSnapshot = toml::from_str(&text).map_err(|e| Error::Format {
        path,
        detail: e.to_string(),
    })?;
    let learner = Learner {
        architecture: cfg.network.architecture,
        maps,
        datasets,
    };
    Experiment::restore(cfg.clone(), &snapshot, learner, k)
}

fn save_step(dir: &RunDir, exp: &Experiment, rows: &mut Vec<(usize, RmseReport)>, step_secs: f64) -> Result<(), Error> {
    let rec = exp.trials.last().expect("a trial was just run");
    write_atomic(&dir.trial_path(rec.index), trial_to_csv(rec).as_bytes())?;
    let finished = exp.is_finished();
    let k = exp.completed_refinements();
    if !finished {
        for (i, data) in exp.learner.datasets.iter().enumerate() {
            let phase = Phase::Refinement(k as u32);
            write_atomic(&dir.dataset_path(phase, i), dataset_to_csv(data, phase).as_bytes())?;
        }
        for (i, map) in exp.learner.maps.iter().enumerate() {
            write_atomic(&dir.checkpoint_path(i, k), checkpoint::to_text(map).as_bytes())?;
        }
    }
    rows.retain(|(idx, _)| *idx < rec.index);
    rows.push((rec.index, rec.rmse.clone()));
    write_atomic(&dir.rmse_path(), rmse_csv(rows, 1.0).as_bytes())?;

    let timing = dir.timing_path();
    let new = !timing.exists();
    let mut f = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(&timing)
        .map_err(io_err(&timing))?;
    if new {
        writeln!(f, "trial,trial_s,step_s").map_err(io_err(&timing))?;
    }
    writeln!(f, "{},{:.3},{:.3}", rec.index, rec.wall_clock, step_secs).map_err(io_err(&timing))?;

    save_plant(dir, exp)?;
    dir.write_status(&RunStatus {
        babble_done: true,
        refinements_completed: k,
        evaluated: finished,
        failure: None,
    })
}

/// Runs the refinement trials and the final evaluation into `dir`.
///
/// Needs a finished babble in `dir` unless `with_babble` is set. A run that
/// has already started refining is refused unless `resume` is set, in which
/// case it continues after the last completed refinement. `progress` sees
/// each trial as soon as it is saved.
pub fn refine_phase(
    cfg: &ExperimentConfig,
    dir: &RunDir,
    resume: bool,
    with_babble: bool,
    progress: &mut dyn FnMut(&TrialRecord),
) -> Result<RefineSummary, Error> {
    cfg.validate()?;
    let status = dir.status()?.unwrap_or_default();
    let mut exp = if !status.babble_done {
        if !with_babble {
            return Err(Error::MissingArtifacts {
                dir: dir.root().to_path_buf(),
                detail: "no finished babble; run `babble` first".into(),
            });
        }
        fresh_babble(cfg, dir)?.1
    } else {
        if status.refinement_started() && !resume {
            return Err(Error::WouldOverwrite(dir.root().to_path_buf()));
        }
        reconcile(dir, cfg, &status)?;
        write_config(dir, cfg)?;
        if status.evaluated {
            return Ok(RefineSummary {
                rmse: dir.load_rmse()?,
                trials_run: 0,
                exports: export_configured(cfg, dir)?,
            });
        }
        load_experiment(cfg, dir, &status)?
    };

    let mut rows = if exp.completed_refinements() > 0 {
        dir.load_rmse()?
    } else {
        Vec::new()
    };
    let mut trials_run = 0;
    loop {
        let started = Instant::now();
        match exp.step() {
            Ok(Some(_)) => {}
            Ok(None) => break,
            Err(e) => {
                dir.write_status(&RunStatus {
                    babble_done: true,
                    refinements_completed: exp.completed_refinements(),
                    evaluated: false,
                    failure: Some(e.to_string()),
                })?;
                return Err(e);
            }
        }
        save_step(dir, &exp, &mut rows, started.elapsed().as_secs_f64())?;
        trials_run += 1;
        progress(exp.trials.last().expect("a trial was just run"));
    }
    Ok(RefineSummary {
        rmse: rows,
        trials_run,
        exports: export_configured(cfg, dir)?,
    })
}

fn export_configured(cfg: &ExperimentConfig, dir: &RunDir) -> Result<Vec<PathBuf>, Error> {
    let sel = ExportSelection {
        endpoints: cfg.export.endpoints,
        joints: cfg.export.joints,
        rmse: cfg.export.rmse,
    };
    if sel.endpoints || sel.joints || sel.rmse {
        export(dir, sel, None)
    } else {
        Ok(Vec::new())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ExportSelection {
    pub endpoints: bool,
    pub joints: bool,
    pub rmse: bool,
}

impl ExportSelection {
    pub const ALL: ExportSelection = ExportSelection {
        endpoints: true,
        joints: true,
        rmse: true,
    };
}

/// Writes the selected CSVs under `<run>/exports/` for one trial or for
/// every saved trial. Endpoints are in metres in each limb's own frame,
/// joint angles in radians, RMSE in degrees.
pub fn export(dir: &RunDir, sel: ExportSelection, trial: Option<usize>) -> Result<Vec<PathBuf>, Error> {
    let cfg = dir.load_config()?.ok_or_else(|| Error::MissingArtifacts {
        dir: dir.root().to_path_buf(),
        detail: "no config.toml; not a run directory".into(),
    })?;
    let out_dir = dir.export_dir();
    let mut written = Vec::new();

    if sel.endpoints || sel.joints {
        let indices = match trial {
            Some(k) => vec![k],
            None => dir.trial_indices()?,
        };
        if indices.is_empty() {
            return Err(Error::MissingArtifacts {
                dir: dir.root().to_path_buf(),
                detail: "no trials to export; run `refine` first".into(),
            });
        }
        for k in indices {
            let rec = dir.load_trial(k)?;
            if sel.endpoints {
                let path = out_dir.join(format!("endpoints_trial_{k:02}.csv"));
                write_atomic(&path, endpoints_csv(&rec, &cfg).as_bytes())?;
                written.push(path);
            }
            if sel.joints {
                let path = out_dir.join(format!("joints_trial_{k:02}.csv"));
                write_atomic(&path, joints_csv(&rec).as_bytes())?;
                written.push(path);
            }
        }
    }
    if sel.rmse {
        let mut rows = dir.load_rmse()?;
        if let Some(k) = trial {
            rows.retain(|(i, _)| *i == k);
        }
        let path = out_dir.join("rmse_deg.csv");
        write_atomic(&path, rmse_csv(&rows, 180.0 / std::f64::consts::PI).as_bytes())?;
        written.push(path);
    }
    Ok(written)
}

fn endpoints_csv(rec: &TrialRecord, cfg: &ExperimentConfig) -> String {
    let params = &cfg.plant.limb;
    let mut out = String::from("t");
    for id in LimbId::ALL {
        write!(out, ",{id}_x_des,{id}_y_des,{id}_x,{id}_y").unwrap();
    }
    out.push('\n');
    for i in 0..rec.len() {
        write!(out, "{:?}", rec.times[i]).unwrap();
        let row = (0..4).flat_map(|l| {
            let d = rec.desired[l][i];
            let a = rec.achieved[l][i];
            let pd = endpoint_position(params, &Vec2::new(d[0], d[1]));
            let pa = endpoint_position(params, &Vec2::new(a[0], a[1]));
            [pd[0], pd[1], pa[0], pa[1]]
        });
        fmt_row(&mut out, row);
    }
    out
}

fn joints_csv(rec: &TrialRecord) -> String {
    let mut out = String::from("t");
    for id in LimbId::ALL {
        write!(out, ",{id}_q0_des,{id}_q0,{id}_q1_des,{id}_q1").unwrap();
    }
    out.push('\n');
    for i in 0..rec.len() {
        write!(out, "{:?}", rec.times[i]).unwrap();
        let row = (0..4).flat_map(|l| {
            let d = rec.desired[l][i];
            let a = rec.achieved[l][i];
            [d[0], a[0], d[1], a[1]]
        });
        fmt_row(&mut out, row);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dataset_csv_round_trip() {
        let mut d = Dataset::per_limb();
        d.push(&[0.1, -2.5e-9, 3.0, 1e300, -0.0, 7.25], &[0.0, 0.5, 1.0], Phase::Babble);
        d.push(&[1.0; 6], &[0.3; 3], Phase::Refinement(2));
        d.push(&[2.0; 6], &[0.7; 3], Phase::Refinement(2));
        let text = dataset_to_csv(&d, Phase::Refinement(2));
        assert_eq!(text.lines().count(), 3);
        let back = dataset_from_csv(&text, 6, 3).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back.input(1), d.input(2));
        assert_eq!(back.phase(0), Phase::Refinement(2));
        let all = dataset_from_csv(&dataset_to_csv(&d, Phase::Babble), 6, 3).unwrap();
        assert_eq!(all.input(0), d.input(0));
    }

    #[test]
    fn dataset_csv_rejects_wrong_width() {
        let text = "phase,x0,y0\nbabble,1.0\n";
        assert!(dataset_from_csv(text, 1, 1).unwrap_err().contains("line 2"));
    }

    #[test]
    fn rmse_csv_round_trip() {
        let r = RmseReport {
            per_joint: [[0.1, 0.2], [0.3, 0.4], [0.5, 0.6], [0.7, 1.0 / 3.0]],
            aggregate: 0.4,
        };
        let rows = vec![(0, r.clone()), (1, r)];
        assert_eq!(rmse_from_csv(&rmse_csv(&rows, 1.0)).unwrap(), rows);
    }

    #[test]
    fn status_round_trip() {
        let s = RunStatus {
            babble_done: true,
            refinements_completed: 4,
            evaluated: false,
            failure: Some("plant fault".into()),
        };
        let back: RunStatus = toml::from_str(&toml::to_string(&s).unwrap()).unwrap();
        assert_eq!(back, s);
    }
}
