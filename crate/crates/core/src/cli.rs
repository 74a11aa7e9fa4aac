//! Batch front end: config parsing, the run loop, offline re-analysis of
//! stored trajectories, the convergence study, and the scaling-identity
//! check. Config files are strict `key = value` lines under bracketed
//! sections; unknown keys are fatal so stored configs stay trustworthy.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::diagnostics::{
    self, kbar_region, lambda_sup, oscillation_check, stream_monitor, thm11_monitor,
    thm12_monitor, vz_criterion_report, BoundReport,
};
use crate::elliptic::biot_savart_report;
use crate::error::{Error, Result};
use crate::evolution::{BoundaryValues, Family, Stepper, Trajectory};
use crate::field::ScalarField;
use crate::geometry::{region_mask, Grid, Measure, Region};
use crate::snapshot;

// ---------------------------------------------------------------------------
// monitor specs
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub enum MonitorSpec {
    Vz,
    Lambda { a: f64, b: f64, s: f64, r_scale: f64 },
    Kbar { sigma1: f64 },
    Oscillation { sigma1: f64 },
    Thm11 { r: f64, z: f64 },
    Thm12 { r: f64, z: f64 },
    Stream { r: f64, z: f64 },
    Biot { r: f64, z: f64, p: f64 },
}

impl MonitorSpec {
    /// Grammar: `name` or `name @ key=value, key=value`.
    pub fn parse(text: &str) -> Result<MonitorSpec> {
        let (name, args) = match text.split_once('@') {
            Some((n, a)) => (n.trim(), a.trim()),
            None => (text.trim(), ""),
        };
        let mut kv: BTreeMap<String, f64> = BTreeMap::new();
        if !args.is_empty() {
            for part in args.split(',') {
                let (k, v) = part.split_once('=').ok_or_else(|| {
                    Error::MonitorSpec(format!("expected key=value, got `{part}` in `{text}`"))
                })?;
                let val: f64 = v.trim().parse().map_err(|_| {
                    Error::MonitorSpec(format!("bad number `{}` in `{text}`", v.trim()))
                })?;
                if kv.insert(k.trim().to_string(), val).is_some() {
                    return Err(Error::MonitorSpec(format!(
                        "duplicate key `{}` in `{text}`",
                        k.trim()
                    )));
                }
            }
        }
        let take = |kv: &mut BTreeMap<String, f64>, key: &str| -> Option<f64> { kv.remove(key) };
        let require = |kv: &mut BTreeMap<String, f64>, key: &str| -> Result<f64> {
            kv.remove(key)
                .ok_or_else(|| Error::MonitorSpec(format!("`{name}` needs `{key}=` in `{text}`")))
        };

        let spec = match name {
            "vz" => MonitorSpec::Vz,
            "lambda" => MonitorSpec::Lambda {
                a: take(&mut kv, "A").unwrap_or(1.0),
                b: take(&mut kv, "B").unwrap_or(4.0),
                s: take(&mut kv, "S").unwrap_or(1.0),
                r_scale: take(&mut kv, "R").unwrap_or(1.0),
            },
            "kbar" => MonitorSpec::Kbar {
                sigma1: take(&mut kv, "sigma1").unwrap_or(1.0),
            },
            "osc" => MonitorSpec::Oscillation {
                sigma1: take(&mut kv, "sigma1").unwrap_or(1.0),
            },
            "thm11" => MonitorSpec::Thm11 {
                r: require(&mut kv, "r")?,
                z: require(&mut kv, "z")?,
            },
            "thm12" => MonitorSpec::Thm12 {
                r: require(&mut kv, "r")?,
                z: require(&mut kv, "z")?,
            },
            "stream" => MonitorSpec::Stream {
                r: require(&mut kv, "r")?,
                z: require(&mut kv, "z")?,
            },
            "biot" => MonitorSpec::Biot {
                r: require(&mut kv, "r")?,
                z: require(&mut kv, "z")?,
                p: take(&mut kv, "p").unwrap_or(2.0),
            },
            other => {
                return Err(Error::MonitorSpec(format!("unknown monitor `{other}`")));
            }
        };
        if let Some(k) = kv.keys().next() {
            return Err(Error::MonitorSpec(format!(
                "unknown key `{k}` for monitor `{name}`"
            )));
        }
        Ok(spec)
    }

    pub fn label(&self) -> String {
        match self {
            MonitorSpec::Vz => "vz".into(),
            MonitorSpec::Lambda { a, b, s, r_scale } => {
                format!("lambda @ A={a},B={b},S={s},R={r_scale}")
            }
            MonitorSpec::Kbar { sigma1 } => format!("kbar @ sigma1={sigma1}"),
            MonitorSpec::Oscillation { sigma1 } => format!("osc @ sigma1={sigma1}"),
            MonitorSpec::Thm11 { r, z } => format!("thm11 @ r={r},z={z}"),
            MonitorSpec::Thm12 { r, z } => format!("thm12 @ r={r},z={z}"),
            MonitorSpec::Stream { r, z } => format!("stream @ r={r},z={z}"),
            MonitorSpec::Biot { r, z, p } => format!("biot @ r={r},z={z},p={p}"),
        }
    }

    /// Time-window look-back the monitor needs from the trajectory.
    pub fn lookback(&self) -> f64 {
        match self {
            MonitorSpec::Lambda { s, r_scale, .. } => (s * r_scale) * (s * r_scale),
            MonitorSpec::Kbar { sigma1 } => sigma1 * sigma1,
            MonitorSpec::Thm12 { r, .. } => r * r,
            _ => 0.0,
        }
    }

    fn region(&self) -> Result<Option<Region>> {
        Ok(match self {
            MonitorSpec::Lambda { a, b, s, r_scale } => {
                Some(Region::parabolic(*a, *b, *s, *r_scale, Measure::Volume)?)
            }
            MonitorSpec::Kbar { sigma1 } | MonitorSpec::Oscillation { sigma1 } => {
                Some(kbar_region(*sigma1)?)
            }
            _ => None,
        })
    }

    /// Cheap feasibility checks against the grid, run before stepping.
    pub fn startup_check(&self, grid: &Grid) -> Result<()> {
        if let Some(region) = self.region()? {
            region_mask(grid, &region)?;
        }
        match *self {
            MonitorSpec::Thm11 { r, z }
            | MonitorSpec::Thm12 { r, z }
            | MonitorSpec::Stream { r, z }
            | MonitorSpec::Biot { r, z, .. } => {
                if !(r > 0.0 && r <= 0.5) {
                    return Err(Error::MonitorSpec(format!(
                        "{}: needs 0 < r <= 1/2",
                        self.label()
                    )));
                }
                if !grid.contains(r, z) {
                    return Err(Error::MonitorSpec(format!(
                        "{}: point outside grid",
                        self.label()
                    )));
                }
            }
            _ => {}
        }
        Ok(())
    }

    /// Evaluate against the trajectory tail. `None` while the time window is
    /// not yet covered.
    pub fn evaluate(&self, traj: &Trajectory) -> Result<Option<BoundReport>> {
        let latest = traj
            .latest()
            .ok_or_else(|| Error::Invalid("empty trajectory".into()))?;
        let out = match *self {
            MonitorSpec::Vz => Ok(vz_criterion_report(latest)),
            MonitorSpec::Lambda { .. } => {
                let region = self.region()?.expect("lambda has a region");
                lambda_sup(traj, &region)
            }
            MonitorSpec::Kbar { sigma1 } => {
                let region = self.region()?.expect("kbar has a region");
                diagnostics::kbar(traj, sigma1, &region).map(|k| BoundReport {
                    monitor: "kbar".into(),
                    location: format!("sigma1={sigma1}"),
                    time: latest.t,
                    lhs: k,
                    rhs: 1.0,
                    rhs_terms: vec![],
                    implied_constant: k,
                    clipped: false,
                    m0: traj.m0(),
                })
            }
            MonitorSpec::Oscillation { sigma1 } => oscillation_check(latest, sigma1),
            MonitorSpec::Thm11 { r, z } => thm11_monitor(latest, [r, 0.0, z]),
            MonitorSpec::Thm12 { r, z } => thm12_monitor(traj, [r, 0.0, z]),
            MonitorSpec::Stream { r, z } => stream_monitor(latest, [r, 0.0, z]),
            MonitorSpec::Biot { r, z, p } => {
                biot_savart_report(latest, [r, 0.0, z], p).map(|rep| BoundReport {
                    monitor: "biot".into(),
                    location: format!("r={r};z={z};p={p}"),
                    time: latest.t,
                    lhs: rep.lhs_sup_b,
                    rhs: rep.term_lp + rep.term_vort,
                    rhs_terms: vec![
                        ("term_lp".into(), rep.term_lp),
                        ("term_vort".into(), rep.term_vort),
                        ("r0".into(), rep.r0),
                        ("n_balls".into(), rep.n_balls as f64),
                        ("ring_energy_ratio".into(), rep.ring_energy_ratio),
                        ("covering_factor".into(), rep.covering_factor),
                    ],
                    implied_constant: rep.implied_constant,
                    clipped: rep.clipped,
                    m0: f64::NAN,
                })
            }
        };
        match out {
            Ok(rep) => Ok(Some(rep)),
            Err(Error::InsufficientRetention { .. }) => Ok(None),
            Err(e) => Err(e),
        }
    }
}

// ---------------------------------------------------------------------------
// run configuration
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub enum InitialCondition {
    /// Sample a manufactured family at t = 0.
    Family(Family),
    /// Swirl-only data r^2 e^{-z^2} clipped smoothly to the annulus.
    GaussSwirl { amplitude: f64 },
    /// Resume from a stored snapshot.
    Snapshot(PathBuf),
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub grid: Grid,
    pub t_end: f64,
    pub cfl_advective: f64,
    pub cfl_diffusive: f64,
    pub snapshot_stride: usize,
    pub retention: f64,
    pub initial: InitialCondition,
    pub forcing: Option<Family>,
    pub monitors: Vec<MonitorSpec>,
}

type Sections = BTreeMap<String, Vec<(String, String)>>;

/// Parse bracketed sections of `key = value` lines. `#` starts a comment.
pub fn parse_sections(text: &str) -> Result<Sections> {
    let mut sections: Sections = BTreeMap::new();
    let mut current: Option<String> = None;
    for (lineno, raw) in text.lines().enumerate() {
        let line = match raw.split_once('#') {
            Some((before, _)) => before.trim(),
            None => raw.trim(),
        };
        if line.is_empty() {
            continue;
        }
        if line.starts_with('[') {
            if !line.ends_with(']') {
                return Err(Error::Config(format!(
                    "line {}: malformed section header `{line}`",
                    lineno + 1
                )));
            }
            let name = line[1..line.len() - 1].trim().to_string();
            current = Some(name.clone());
            sections.entry(name).or_default();
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(Error::Config(format!(
                "line {}: expected `key = value`, got `{line}`",
                lineno + 1
            )));
        };
        let section = current.clone().ok_or_else(|| {
            Error::Config(format!("line {}: key before any [section]", lineno + 1))
        })?;
        sections
            .get_mut(&section)
            .unwrap()
            .push((key.trim().to_string(), value.trim().to_string()));
    }
    Ok(sections)
}

/// Apply a `section.key=value` override (`run.t_end=0.1`).
pub fn apply_override(sections: &mut Sections, spec: &str) -> Result<()> {
    let (path, value) = spec
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override `{spec}` needs key=value")))?;
    let (section, key) = path
        .trim()
        .split_once('.')
        .ok_or_else(|| Error::Config(format!("override key `{path}` needs section.key")))?;
    let entries = sections
        .entry(section.trim().to_string())
        .or_default();
    entries.retain(|(k, _)| k != key.trim());
    entries.push((key.trim().to_string(), value.trim().to_string()));
    Ok(())
}

struct SectionReader {
    name: String,
    entries: Vec<(String, String)>,
    taken: Vec<bool>,
}

impl SectionReader {
    fn new(sections: &Sections, name: &str) -> SectionReader {
        SectionReader {
            name: name.to_string(),
            entries: sections.get(name).cloned().unwrap_or_default(),
            taken: vec![false; sections.get(name).map_or(0, Vec::len)],
        }
    }

    fn optional(&mut self, key: &str) -> Result<Option<String>> {
        let mut found = None;
        for (idx, (k, v)) in self.entries.iter().enumerate() {
            if k == key {
                if found.is_some() {
                    return Err(Error::Config(format!(
                        "duplicate key `{key}` in [{}]",
                        self.name
                    )));
                }
                found = Some(v.clone());
                self.taken[idx] = true;
            }
        }
        Ok(found)
    }

    fn required(&mut self, key: &str) -> Result<String> {
        self.optional(key)?.ok_or_else(|| {
            Error::Config(format!("missing required key `{key}` in [{}]", self.name))
        })
    }

    fn f64_req(&mut self, key: &str) -> Result<f64> {
        let v = self.required(key)?;
        parse_value(&self.name, key, &v)
    }

    fn f64_opt(&mut self, key: &str, default: f64) -> Result<f64> {
        match self.optional(key)? {
            Some(v) => parse_value(&self.name, key, &v),
            None => Ok(default),
        }
    }

    fn usize_req(&mut self, key: &str) -> Result<usize> {
        let v = self.required(key)?;
        parse_value(&self.name, key, &v)
    }

    fn usize_opt(&mut self, key: &str, default: usize) -> Result<usize> {
        match self.optional(key)? {
            Some(v) => parse_value(&self.name, key, &v),
            None => Ok(default),
        }
    }

    fn bool_opt(&mut self, key: &str, default: bool) -> Result<bool> {
        match self.optional(key)? {
            Some(v) => match v.as_str() {
                "true" => Ok(true),
                "false" => Ok(false),
                other => Err(Error::Config(format!(
                    "key `{key}` in [{}]: expected true/false, got `{other}`",
                    self.name
                ))),
            },
            None => Ok(default),
        }
    }

    fn repeated(&mut self, key: &str) -> Vec<String> {
        let mut out = Vec::new();
        for (idx, (k, v)) in self.entries.iter().enumerate() {
            if k == key {
                out.push(v.clone());
                self.taken[idx] = true;
            }
        }
        out
    }

    fn finish(self) -> Result<()> {
        for (idx, (k, _)) in self.entries.iter().enumerate() {
            if !self.taken[idx] {
                return Err(Error::Config(format!(
                    "unknown key `{k}` in [{}]",
                    self.name
                )));
            }
        }
        Ok(())
    }
}

fn parse_value<T: std::str::FromStr>(section: &str, key: &str, text: &str) -> Result<T> {
    text.parse().map_err(|_| {
        Error::Config(format!(
            "key `{key}` in [{section}]: cannot parse `{text}`"
        ))
    })
}

pub fn build_config(sections: &Sections) -> Result<RunConfig> {
    for name in sections.keys() {
        if !["grid", "run", "initial", "monitors"].contains(&name.as_str()) {
            return Err(Error::Config(format!("unknown section [{name}]")));
        }
    }

    let mut grid_s = SectionReader::new(sections, "grid");
    let n_r = grid_s.usize_req("n_r")?;
    let n_z = grid_s.usize_req("n_z")?;
    if (n_r as i64) < 8 {
        return Err(Error::Config(format!(
            "key `n_r` in [grid]: must be at least 8, got {n_r}"
        )));
    }
    if (n_z as i64) < 8 {
        return Err(Error::Config(format!(
            "key `n_z` in [grid]: must be at least 8, got {n_z}"
        )));
    }
    let grid = Grid::new(
        grid_s.f64_req("r_min")?,
        grid_s.f64_req("r_max")?,
        grid_s.f64_req("z_min")?,
        grid_s.f64_req("z_max")?,
        n_r,
        n_z,
        grid_s.bool_opt("z_periodic", false)?,
    )
    .map_err(|e| Error::Config(format!("[grid]: {e}")))?;
    grid_s.finish()?;

    let mut run_s = SectionReader::new(sections, "run");
    let t_end = run_s.f64_req("t_end")?;
    if !(t_end > 0.0) {
        return Err(Error::Config(format!(
            "key `t_end` in [run]: must be positive, got {t_end}"
        )));
    }
    let cfl_advective = run_s.f64_opt("cfl_advective", 0.4)?;
    let cfl_diffusive = run_s.f64_opt("cfl_diffusive", 0.5)?;
    for (key, v) in [("cfl_advective", cfl_advective), ("cfl_diffusive", cfl_diffusive)] {
        if !(v > 0.0 && v < 1.0) {
            return Err(Error::Config(format!(
                "key `{key}` in [run]: must lie in (0, 1), got {v}"
            )));
        }
    }
    let snapshot_stride = run_s.usize_opt("snapshot_stride", 10)?;
    if snapshot_stride == 0 {
        return Err(Error::Config(
            "key `snapshot_stride` in [run]: must be at least 1".into(),
        ));
    }
    let forcing = match run_s.optional("forcing")? {
        Some(tag) => Some(Family::parse(&tag).map_err(|e| Error::Config(e.to_string()))?),
        None => None,
    };
    let retention_explicit = run_s.optional("retention")?;
    run_s.finish()?;

    let mut init_s = SectionReader::new(sections, "initial");
    let kind = init_s.required("kind")?;
    let initial = match kind.as_str() {
        "family" => {
            let tag = init_s.required("family")?;
            InitialCondition::Family(Family::parse(&tag).map_err(|e| Error::Config(e.to_string()))?)
        }
        "gauss-swirl" => InitialCondition::GaussSwirl {
            amplitude: init_s.f64_opt("amplitude", 1.0)?,
        },
        "snapshot" => InitialCondition::Snapshot(PathBuf::from(init_s.required("path")?)),
        other => {
            return Err(Error::Config(format!(
                "key `kind` in [initial]: unknown kind `{other}`"
            )));
        }
    };
    init_s.finish()?;

    let mut mon_s = SectionReader::new(sections, "monitors");
    let mut monitors = Vec::new();
    for text in mon_s.repeated("monitor") {
        monitors.push(MonitorSpec::parse(&text)?);
    }
    mon_s.finish()?;

    let max_lookback = monitors.iter().map(|m| m.lookback()).fold(0.0, f64::max);
    let retention = match retention_explicit {
        Some(v) => {
            let retention: f64 = parse_value("run", "retention", &v)?;
            for m in &monitors {
                if m.lookback() > retention {
                    return Err(Error::Config(format!(
                        "retention {retention} is shorter than the look-back {} required by monitor `{}`",
                        m.lookback(),
                        m.label()
                    )));
                }
            }
            retention
        }
        None => max_lookback,
    };

    for m in &monitors {
        m.startup_check(&grid)
            .map_err(|e| Error::Config(e.to_string()))?;
    }

    Ok(RunConfig {
        grid,
        t_end,
        cfl_advective,
        cfl_diffusive,
        snapshot_stride,
        retention,
        initial,
        forcing,
        monitors,
    })
}

pub fn parse_config(text: &str) -> Result<RunConfig> {
    build_config(&parse_sections(text)?)
}

// ---------------------------------------------------------------------------
// initial fields
// ---------------------------------------------------------------------------

fn smooth_bump(xi: f64) -> f64 {
    if xi.abs() >= 1.0 {
        0.0
    } else {
        (1.0 - 1.0 / (1.0 - xi * xi)).exp()
    }
}

/// r^2 e^{-z^2} tapered by a C-infinity bump so the data vanishes on the
/// annulus boundary.
pub fn gauss_swirl_gamma(grid: Grid, amplitude: f64) -> ScalarField {
    let (r0, r1) = (grid.r_min, grid.r_max);
    let (z0, z1) = (grid.z_min, grid.z_max);
    ScalarField::from_fn(grid, "gamma", move |r, z| {
        let xr = (2.0 * r - (r0 + r1)) / (r1 - r0);
        let xz = (2.0 * z - (z0 + z1)) / (z1 - z0);
        amplitude * r * r * (-z * z).exp() * smooth_bump(xr) * smooth_bump(xz)
    })
}

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

pub const CSV_HEADER: &str = "time,monitor,location,lhs,rhs,implied_constant,clipped\n";

pub fn csv_row(rep: &BoundReport) -> String {
    format!(
        "{},{},{},{},{},{},{}\n",
        rep.time, rep.monitor, rep.location, rep.lhs, rep.rhs, rep.implied_constant, rep.clipped
    )
}

fn eval_monitors_csv(
    monitors: &[MonitorSpec],
    traj: &Trajectory,
    csv: &mut String,
) -> Result<Vec<BoundReport>> {
    let mut reports = Vec::new();
    for m in monitors {
        if let Some(rep) = m.evaluate(traj)? {
            csv.push_str(&csv_row(&rep));
            reports.push(rep);
        }
    }
    Ok(reports)
}

// ---------------------------------------------------------------------------
// run command
// ---------------------------------------------------------------------------

#[derive(Debug)]
pub struct RunSummary {
    pub steps: usize,
    pub snapshots: usize,
    pub final_t: f64,
    pub monitor_rows: usize,
    pub csv_path: PathBuf,
}

fn snap_path(dir: &Path, index: usize) -> PathBuf {
    dir.join(format!("snap-{index:06}.snap"))
}

/// Execute a configured run: write snapshots and the monitor series into
/// `out_dir`. A non-finite value aborts with a diagnostic dump of the last
/// good state.
pub fn cmd_run(config: &RunConfig, out_dir: &Path) -> Result<RunSummary> {
    std::fs::create_dir_all(out_dir)?;

    let (gamma0, omega0, t0) = match &config.initial {
        InitialCondition::Family(fam) => (
            ScalarField::from_fn(config.grid, "gamma", |r, z| fam.gamma(r, z, 0.0)),
            ScalarField::from_fn(config.grid, "omega", |r, z| fam.omega(r, z, 0.0)),
            0.0,
        ),
        InitialCondition::GaussSwirl { amplitude } => (
            gauss_swirl_gamma(config.grid, *amplitude),
            ScalarField::zeros(config.grid, "omega"),
            0.0,
        ),
        InitialCondition::Snapshot(path) => {
            let s = snapshot::read_state(path)?;
            if s.grid() != config.grid {
                return Err(Error::Config(format!(
                    "snapshot grid {:?} does not match [grid]",
                    s.grid()
                )));
            }
            let t = s.t;
            (s.gamma, s.omega, t)
        }
    };

    let boundary = match config.forcing {
        Some(fam) => BoundaryValues::Manufactured(fam),
        None => BoundaryValues::Frozen {
            gamma: gamma0.clone(),
            omega: omega0.clone(),
        },
    };
    let stepper = Stepper::new(
        config.grid,
        boundary,
        config.forcing,
        config.cfl_advective,
        config.cfl_diffusive,
    )?;

    let mut state = stepper.initial_state(t0, gamma0, omega0)?;
    let mut traj = Trajectory::new(config.retention.max(1e-12));
    let mut csv = String::from(CSV_HEADER);
    let mut snapshots = 0usize;
    let mut rows = 0usize;

    traj.push(state.clone())?;
    snapshot::write_state(&snap_path(out_dir, snapshots), &state)?;
    snapshots += 1;
    rows += eval_monitors_csv(&config.monitors, &traj, &mut csv)?.len();

    let t_end = t0 + config.t_end;
    let eps = 1e-12 * config.t_end.max(1.0);
    let mut steps = 0usize;
    while state.t < t_end - eps {
        let dt = stepper.cfl_dt(&state).min(t_end - state.t);
        match stepper.step(&state, dt) {
            Ok(next) => state = next,
            Err(e) => {
                // Diagnostic dump of the last finite state.
                let dump = out_dir.join("blowup-dump.snap");
                let _ = snapshot::write_state(&dump, &state);
                let csv_path = out_dir.join("monitors.csv");
                std::fs::write(&csv_path, &csv)?;
                return Err(e);
            }
        }
        steps += 1;
        if steps % config.snapshot_stride == 0 || state.t >= t_end - eps {
            traj.push(state.clone())?;
            snapshot::write_state(&snap_path(out_dir, snapshots), &state)?;
            snapshots += 1;
            rows += eval_monitors_csv(&config.monitors, &traj, &mut csv)?.len();
        }
    }

    let csv_path = out_dir.join("monitors.csv");
    std::fs::write(&csv_path, &csv)?;
    Ok(RunSummary {
        steps,
        snapshots,
        final_t: state.t,
        monitor_rows: rows,
        csv_path,
    })
}

// ---------------------------------------------------------------------------
// offline monitor command
// ---------------------------------------------------------------------------

/// List snapshot files of a run directory in time order.
pub fn snapshot_paths(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension().is_some_and(|e| e == "snap")
                && p.file_name()
                    .and_then(|n| n.to_str())
                    .is_some_and(|n| n.starts_with("snap-"))
        })
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::Snapshot(format!(
            "no snapshots found under {}",
            dir.display()
        )));
    }
    Ok(paths)
}

/// Re-run monitors over stored snapshots. Produces the same rows as in-run
/// monitoring, byte for byte. A monitor whose time window the stored
/// trajectory never covers is a retention error.
pub fn cmd_monitor(dir: &Path, monitors: &[MonitorSpec]) -> Result<String> {
    let paths = snapshot_paths(dir)?;
    let mut csv = String::from(CSV_HEADER);
    let mut traj = Trajectory::new(f64::INFINITY);
    let mut grid_checked = false;
    let mut rows_per_monitor = vec![0usize; monitors.len()];
    for p in &paths {
        let state = snapshot::read_state(p)?;
        if !grid_checked {
            for m in monitors {
                m.startup_check(&state.grid())?;
            }
            grid_checked = true;
        }
        traj.push(state).map_err(|_| {
            Error::Snapshot(format!(
                "{}: non-monotone timestamps in snapshot sequence",
                p.display()
            ))
        })?;
        for (m, count) in monitors.iter().zip(rows_per_monitor.iter_mut()) {
            if let Some(rep) = m.evaluate(&traj)? {
                csv.push_str(&csv_row(&rep));
                *count += 1;
            }
        }
    }
    for (m, count) in monitors.iter().zip(&rows_per_monitor) {
        if *count == 0 {
            let span = traj.latest().map(|s| s.t).unwrap_or(0.0)
                - traj.oldest_t().unwrap_or(0.0);
            return Err(Error::InsufficientRetention {
                monitor: m.label(),
                needed: m.lookback(),
                available: span,
            });
        }
    }
    Ok(csv)
}

// ---------------------------------------------------------------------------
// convergence study
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct MmsRow {
    pub n_r: usize,
    pub n_z: usize,
    pub h_r: f64,
    pub err_gamma: f64,
    pub err_omega: f64,
    pub order_gamma: Option<f64>,
    pub order_omega: Option<f64>,
}

/// Forced manufactured run on each grid; max-norm errors of the prognostic
/// fields at t_end and observed orders between successive grids.
pub fn mms_verify(
    family: Family,
    grids: &[(usize, usize)],
    domain: (f64, f64, f64, f64),
    t_end: f64,
) -> Result<Vec<MmsRow>> {
    let mut rows: Vec<MmsRow> = Vec::new();
    for &(n_r, n_z) in grids {
        let grid = Grid::new(domain.0, domain.1, domain.2, domain.3, n_r, n_z, false)?;
        let stepper = Stepper::new(
            grid,
            BoundaryValues::Manufactured(family),
            Some(family),
            0.4,
            0.5,
        )?;
        let mut state = stepper.initial_state(
            0.0,
            ScalarField::from_fn(grid, "gamma", |r, z| family.gamma(r, z, 0.0)),
            ScalarField::from_fn(grid, "omega", |r, z| family.omega(r, z, 0.0)),
        )?;
        let eps = 1e-12 * t_end.max(1.0);
        while state.t < t_end - eps {
            let dt = stepper.cfl_dt(&state).min(t_end - state.t);
            state = stepper.step(&state, dt)?;
        }
        let exact = family.state_at(grid, state.t);
        let mut err_gamma = 0.0_f64;
        for (a, b) in state.gamma.values().iter().zip(exact.gamma.values()) {
            err_gamma = err_gamma.max((a - b).abs());
        }
        let mut err_omega = 0.0_f64;
        for (a, b) in state.omega.values().iter().zip(exact.omega.values()) {
            err_omega = err_omega.max((a - b).abs());
        }

        let (order_gamma, order_omega) = match rows.last() {
            Some(prev) => {
                let hratio = prev.h_r / grid.h_r;
                (
                    Some((prev.err_gamma / err_gamma).ln() / hratio.ln()),
                    Some((prev.err_omega / err_omega).ln() / hratio.ln()),
                )
            }
            None => (None, None),
        };
        rows.push(MmsRow {
            n_r,
            n_z,
            h_r: grid.h_r,
            err_gamma,
            err_omega,
            order_gamma,
            order_omega,
        });
    }
    Ok(rows)
}

pub fn mms_table_csv(rows: &[MmsRow]) -> String {
    let mut out = String::from("n_r,n_z,h_r,err_gamma,err_omega,order_gamma,order_omega\n");
    for r in rows {
        let og = r.order_gamma.map_or(String::new(), |v| v.to_string());
        let oo = r.order_omega.map_or(String::new(), |v| v.to_string());
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.n_r, r.n_z, r.h_r, r.err_gamma, r.err_omega, og, oo
        );
    }
    out
}

// ---------------------------------------------------------------------------
// scaling-identity command
// ---------------------------------------------------------------------------

/// Largest hollow cylinder of aspect C_{A,B} with B = 4A that fits the grid,
/// centered in z.
pub fn inscribed_check_region(grid: &Grid) -> Result<Region> {
    let z_half = 0.5 * (grid.z_node_max() - grid.z_min);
    let z_center = 0.5 * (grid.z_min + grid.z_node_max());
    let outer = 0.98 * grid.r_max.min(z_half);
    let inner = (1.02 * grid.r_min).max(outer / 4.0);
    if !(inner < outer) {
        return Err(Error::Invalid(
            "grid too thin for a scaling-check region".into(),
        ));
    }
    Ok(Region::annular(inner, outer, 1.0, Measure::Volume)?.with_z_center(z_center))
}

/// Read a stored trajectory and verify the dyadic scaling identities.
pub fn cmd_scale_check(dir: &Path, k: f64) -> Result<Vec<(String, f64)>> {
    let paths = snapshot_paths(dir)?;
    let mut traj = Trajectory::new(f64::INFINITY);
    for p in &paths {
        traj.push(snapshot::read_state(p)?)?;
    }
    let grid = traj.latest().unwrap().grid();
    let region = inscribed_check_region(&grid)?;
    diagnostics::scaling_check(&traj, k, &region)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "\
[grid]
r_min = 0.5
r_max = 5.0
z_min = -5.0
z_max = 5.0
n_r = 32
n_z = 64

[run]
t_end = 0.25

[initial]
kind = family
family = coupled
";

    #[test]
    fn minimal_config_gets_documented_defaults() {
        let cfg = parse_config(MINIMAL).unwrap();
        assert_eq!(cfg.cfl_advective, 0.4);
        assert_eq!(cfg.cfl_diffusive, 0.5);
        assert_eq!(cfg.snapshot_stride, 10);
        assert_eq!(cfg.retention, 0.0);
        assert!(cfg.monitors.is_empty());
        assert!(matches!(cfg.initial, InitialCondition::Family(Family::Coupled)));
    }

    #[test]
    fn bad_values_name_the_key() {
        let text = MINIMAL.replace("n_r = 32", "n_r = -4");
        let err = parse_config(&text).unwrap_err().to_string();
        assert!(err.contains("n_r"), "{err}");

        let text = MINIMAL.replace("t_end = 0.25", "t_end = -1");
        let err = parse_config(&text).unwrap_err().to_string();
        assert!(err.contains("t_end"), "{err}");
    }

    #[test]
    fn unknown_keys_are_fatal() {
        let text = format!("{MINIMAL}\n[run]\nviscosity = 2.0\n");
        let err = parse_config(&text).unwrap_err().to_string();
        assert!(err.contains("viscosity"), "{err}");

        let text = format!("{MINIMAL}\n[turbulence]\nmodel = none\n");
        let err = parse_config(&text).unwrap_err().to_string();
        assert!(err.contains("turbulence"), "{err}");
    }

    #[test]
    fn monitor_lines_accumulate() {
        let text = format!(
            "{}\n[monitors]\nmonitor = thm12 @ r=0.4, z=0\nmonitor = vz\n",
            MINIMAL.replace("r_min = 0.5", "r_min = 0.1")
        );
        let cfg = parse_config(&text).unwrap();
        assert_eq!(cfg.monitors.len(), 2);
        assert_eq!(
            cfg.monitors[0],
            MonitorSpec::Thm12 { r: 0.4, z: 0.0 }
        );
        // Default retention covers the thm12 look-back r^2.
        assert!((cfg.retention - 0.16).abs() < 1e-12);
    }

    #[test]
    fn short_retention_rejected_naming_monitor() {
        let text = format!(
            "{}\n[run]\nretention = 0.01\n[monitors]\nmonitor = thm12 @ r=0.4, z=0\n",
            MINIMAL.replace("r_min = 0.5", "r_min = 0.1")
        );
        let err = parse_config(&text).unwrap_err().to_string();
        assert!(err.contains("thm12"), "{err}");
        assert!(err.contains("retention"), "{err}");
    }

    #[test]
    fn monitor_spec_grammar() {
        assert_eq!(MonitorSpec::parse("vz").unwrap(), MonitorSpec::Vz);
        assert_eq!(
            MonitorSpec::parse("kbar @ sigma1=0.8").unwrap(),
            MonitorSpec::Kbar { sigma1: 0.8 }
        );
        assert_eq!(
            MonitorSpec::parse("biot @ r=0.1, z=0.0").unwrap(),
            MonitorSpec::Biot { r: 0.1, z: 0.0, p: 2.0 }
        );
        assert!(MonitorSpec::parse("thm12 @ r=0.4").is_err()); // missing z
        assert!(MonitorSpec::parse("thm12 @ r=0.4, z=0, q=1").is_err());
        assert!(MonitorSpec::parse("wavelet").is_err());
    }

    #[test]
    fn overrides_replace_keys() {
        let mut sections = parse_sections(MINIMAL).unwrap();
        apply_override(&mut sections, "run.t_end=0.5").unwrap();
        apply_override(&mut sections, "run.snapshot_stride=3").unwrap();
        let cfg = build_config(&sections).unwrap();
        assert_eq!(cfg.t_end, 0.5);
        assert_eq!(cfg.snapshot_stride, 3);
        assert!(apply_override(&mut sections, "nonsense").is_err());
    }

    #[test]
    fn gauss_swirl_vanishes_on_boundary() {
        let g = Grid::new(0.5, 5.0, -5.0, 5.0, 24, 48, false).unwrap();
        let gamma = gauss_swirl_gamma(g, 1.0);
        for j in 0..g.n_z {
            assert_eq!(gamma.get(0, j), 0.0);
            assert_eq!(gamma.get(g.n_r - 1, j), 0.0);
        }
        for i in 0..g.n_r {
            assert_eq!(gamma.get(i, 0), 0.0);
            assert_eq!(gamma.get(i, g.n_z - 1), 0.0);
        }
        assert!(gamma.max_abs() > 0.1);
    }
}
