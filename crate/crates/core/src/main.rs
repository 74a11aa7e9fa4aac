use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use axiswirl::cli::{
    apply_override, build_config, cmd_monitor, cmd_run, cmd_scale_check, mms_table_csv,
    mms_verify, parse_sections, MonitorSpec,
};
use axiswirl::error::Error;
use axiswirl::evolution::Family;

#[derive(Parser)]
#[command(
    name = "axiswirl",
    about = "Axisymmetric swirl/vorticity Navier-Stokes runs with bound monitors"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Execute a configured run, writing snapshots and a monitor series.
    Run {
        config: PathBuf,
        /// Output directory (default: $AXISWIRL_OUT/<config stem> or ./<config stem>.out).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override config keys, e.g. --set run.t_end=0.1 (repeatable).
        #[arg(long = "set", value_name = "SECTION.KEY=VALUE")]
        set: Vec<String>,
    },
    /// Re-run monitors offline over a stored snapshot directory.
    Monitor {
        dir: PathBuf,
        /// Monitor specs such as "thm12 @ r=0.4,z=0" (repeatable).
        #[arg(required = true)]
        spec: Vec<String>,
        /// Write the CSV here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Manufactured-solution convergence study over a grid sequence.
    MmsVerify {
        /// Family tag: rigid-swirl, swirl-free-stream, coupled.
        family: String,
        /// Comma-separated grid list, e.g. 32x64,64x128,128x256.
        grids: String,
        #[arg(long, default_value_t = 0.25)]
        t_end: f64,
        /// Domain r_min,r_max,z_min,z_max (default 0.5,5,-5,5).
        #[arg(long)]
        domain: Option<String>,
        /// Write the convergence table CSV here.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Fail (exit 1) when any observed order drops below this.
        #[arg(long)]
        min_order: Option<f64>,
    },
    /// Verify the dyadic scaling identities on a stored trajectory.
    ScaleCheck { dir: PathBuf, k: f64 },
}

fn out_dir_for(config: &std::path::Path, flag: Option<PathBuf>) -> PathBuf {
    if let Some(dir) = flag {
        return dir;
    }
    let stem = config
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "run".into());
    match std::env::var_os("AXISWIRL_OUT") {
        Some(root) => PathBuf::from(root).join(stem),
        None => PathBuf::from(format!("{stem}.out")),
    }
}

fn run() -> Result<i32, Error> {
    let cli = Cli::parse();
    match cli.cmd {
        Cmd::Run { config, out, set } => {
            let text = std::fs::read_to_string(&config)?;
            let mut sections = parse_sections(&text)?;
            for s in &set {
                apply_override(&mut sections, s)?;
            }
            let cfg = build_config(&sections)?;
            let out_dir = out_dir_for(&config, out);
            match cmd_run(&cfg, &out_dir) {
                Ok(summary) => {
                    println!(
                        "run complete: {} steps to t = {}, {} snapshots, {} monitor rows",
                        summary.steps, summary.final_t, summary.snapshots, summary.monitor_rows
                    );
                    println!("monitor series: {}", summary.csv_path.display());
                    Ok(0)
                }
                Err(e @ (Error::BlowUp { .. } | Error::EllipticFailure { .. })) => {
                    eprintln!("run aborted: {e}");
                    eprintln!("diagnostic dump: {}", out_dir.join("blowup-dump.snap").display());
                    Ok(2)
                }
                Err(e) => Err(e),
            }
        }
        Cmd::Monitor { dir, spec, out } => {
            let monitors = spec
                .iter()
                .map(|s| MonitorSpec::parse(s))
                .collect::<Result<Vec<_>, _>>()?;
            let csv = cmd_monitor(&dir, &monitors)?;
            match out {
                Some(path) => std::fs::write(path, csv)?,
                None => print!("{csv}"),
            }
            Ok(0)
        }
        Cmd::MmsVerify {
            family,
            grids,
            t_end,
            domain,
            out,
            min_order,
        } => {
            let family = Family::parse(&family)?;
            let grids = parse_grids(&grids)?;
            let domain = match domain {
                Some(d) => parse_domain(&d)?,
                None => (0.5, 5.0, -5.0, 5.0),
            };
            let rows = mms_verify(family, &grids, domain, t_end)?;
            println!(
                "{:<10} {:>12} {:>12} {:>8} {:>8}",
                "grid", "err_gamma", "err_omega", "o_gamma", "o_omega"
            );
            let mut worst: f64 = f64::INFINITY;
            for r in &rows {
                let og = r.order_gamma.map_or("-".into(), |v| format!("{v:.3}"));
                let oo = r.order_omega.map_or("-".into(), |v| format!("{v:.3}"));
                println!(
                    "{:<10} {:>12.4e} {:>12.4e} {:>8} {:>8}",
                    format!("{}x{}", r.n_r, r.n_z),
                    r.err_gamma,
                    r.err_omega,
                    og,
                    oo
                );
                for o in [r.order_gamma, r.order_omega].into_iter().flatten() {
                    worst = worst.min(o);
                }
            }
            if let Some(path) = out {
                std::fs::write(path, mms_table_csv(&rows))?;
            }
            if let Some(min) = min_order {
                if worst < min {
                    eprintln!("observed order {worst:.3} below required {min}");
                    return Ok(1);
                }
            }
            Ok(0)
        }
        Cmd::ScaleCheck { dir, k } => {
            let rows = cmd_scale_check(&dir, k)?;
            println!("{:<26} {:>14}", "identity", "rel_error");
            for (name, err) in &rows {
                println!("{name:<26} {err:>14.3e}");
            }
            Ok(0)
        }
    }
}

fn parse_grids(text: &str) -> Result<Vec<(usize, usize)>, Error> {
    text.split(',')
        .map(|g| {
            let (a, b) = g
                .trim()
                .split_once('x')
                .ok_or_else(|| Error::Invalid(format!("grid `{g}` is not NxM")))?;
            let n_r = a
                .parse()
                .map_err(|_| Error::Invalid(format!("bad grid size `{a}`")))?;
            let n_z = b
                .parse()
                .map_err(|_| Error::Invalid(format!("bad grid size `{b}`")))?;
            Ok((n_r, n_z))
        })
        .collect()
}

fn parse_domain(text: &str) -> Result<(f64, f64, f64, f64), Error> {
    let parts: Vec<f64> = text
        .split(',')
        .map(|p| {
            p.trim()
                .parse()
                .map_err(|_| Error::Invalid(format!("bad domain value `{p}`")))
        })
        .collect::<Result<_, _>>()?;
    if parts.len() != 4 {
        return Err(Error::Invalid(
            "domain needs r_min,r_max,z_min,z_max".into(),
        ));
    }
    Ok((parts[0], parts[1], parts[2], parts[3]))
}

fn main() -> ExitCode {
    match run() {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
