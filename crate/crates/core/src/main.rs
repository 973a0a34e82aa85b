use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};

use lpv_lanekeep::artifacts::{self, read_file, sha256_hex, write_file};
use lpv_lanekeep::config::{parse_controller, Config};
use lpv_lanekeep::controller::{lti_gain, synthesize, LtiBaseline, ScheduledController, SynthesisResult};
use lpv_lanekeep::polytope::{bounds, box_corner, select_simplex, Polytope};
use lpv_lanekeep::scheduling::{collect_trajectories, fraction_of_variation, reconstruction_rel_rms, PcaReduction, Trajectory};
use lpv_lanekeep::sim::{self, compare_logs, ControllerChoice, SimLog, SteeringLaw};
use lpv_lanekeep::{pipeline, Error, Result};

#[derive(Parser)]
#[command(name = "lanekeep", version, about = "Gain-scheduled lane keeping: data collection, design and simulation")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Configuration file; keys it omits keep their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Artifact directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Reduced scheduling dimension.
    #[arg(long, global = true)]
    m: Option<usize>,
    /// lpv or lti.
    #[arg(long, global = true)]
    controller: Option<String>,
    /// Hold the initial speed instead of following the speed planner.
    #[arg(long, global = true)]
    no_speed_control: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Drive the training scenarios and write trajectory.csv.
    Collect,
    /// PCA reduction and simplex selection from trajectory.csv.
    Reduce,
    /// Vertex gains, certificate and constant-gain baseline.
    Synth {
        #[arg(long)]
        alpha: Option<f64>,
        /// Uncertainty bound; "auto" estimates it from the training data.
        #[arg(long)]
        gamma: Option<String>,
    },
    /// Closed-loop run on the configured road.
    Sim,
    /// Compare two simulation logs (defaults: the lti and lpv logs in --out).
    Compare { baseline: Option<PathBuf>, candidate: Option<PathBuf> },
    /// Plot-ready CSVs from the artifacts in --out.
    Report,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn load_config(c: &Common) -> Result<Config> {
    let mut cfg = match &c.config {
        Some(p) => Config::with_overrides(&read_file(p)?)?,
        None => Config::default(),
    };
    if let Some(seed) = c.seed {
        cfg.apply("run", "seed", &seed.to_string())?;
    }
    if let Some(m) = c.m {
        cfg.apply("reduction", "m", &m.to_string())?;
    }
    if let Some(ctl) = &c.controller {
        cfg.sim.controller = parse_controller(ctl)?;
    }
    if c.no_speed_control {
        cfg.sim.speed_control = false;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<()> {
    let c = &cli.common;
    let mut cfg = load_config(c)?;
    let started = unix_now();
    let (name, outcome, files) = match &cli.command {
        Command::Collect => ("collect", collect(&cfg, &c.out)?, vec!["trajectory.csv"]),
        Command::Reduce => ("reduce", reduce(&cfg, &c.out)?, vec!["reduction.txt", "polytope.txt", "vm.csv"]),
        Command::Synth { alpha, gamma } => {
            if let Some(a) = alpha {
                cfg.apply("synthesis", "alpha", &a.to_string())?;
            }
            if let Some(g) = gamma {
                cfg.apply("synthesis", "gamma", g)?;
            }
            ("synth", synth(&cfg, &c.out)?, vec!["gains.txt", "lti.txt"])
        }
        Command::Sim => {
            let tag = tag(cfg.sim.controller);
            let outcome = simulate(&cfg, &c.out)?;
            let files = vec![log_name(tag), metrics_name(tag)];
            write_manifest(&c.out, "sim", c, started, &outcome, &files)?;
            return Ok(());
        }
        Command::Compare { baseline, candidate } => {
            let b = baseline.clone().unwrap_or_else(|| c.out.join(log_name("lti")));
            let k = candidate.clone().unwrap_or_else(|| c.out.join(log_name("lpv")));
            ("compare", compare(&cfg, &b, &k, &c.out)?, vec!["comparison.txt"])
        }
        Command::Report => {
            let files = report(&cfg, &c.out)?;
            let refs: Vec<String> = files.iter().map(|f| format!("report/{f}")).collect();
            write_manifest(&c.out, "report", c, started, &format!("{} files", refs.len()), &refs)?;
            return Ok(());
        }
    };
    let files: Vec<String> = files.into_iter().map(String::from).collect();
    write_manifest(&c.out, name, c, started, &outcome, &files)
}

fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

fn tag(choice: ControllerChoice) -> &'static str {
    match choice {
        ControllerChoice::Lpv => "lpv",
        ControllerChoice::Lti => "lti",
    }
}

fn log_name(tag: &str) -> String {
    format!("simlog-{tag}.csv")
}

fn metrics_name(tag: &str) -> String {
    format!("metrics-{tag}.txt")
}

/// `manifest-<subcommand>.txt`: inputs, outputs with content hashes, outcome.
fn write_manifest(out: &Path, name: &str, c: &Common, started: u64, outcome: &str, files: &[String]) -> Result<()> {
    let mut s = format!("subcommand {name}\ntool_version {}\n", env!("CARGO_PKG_VERSION"));
    match &c.config {
        Some(p) => s.push_str(&format!("config {} {}\n", p.display(), sha256_hex(read_file(p)?.as_bytes()))),
        None => s.push_str("config default\n"),
    }
    s.push_str(&format!("started_unix {started}\nfinished_unix {}\n", unix_now()));
    for f in files {
        let bytes = std::fs::read(out.join(f))?;
        s.push_str(&format!("file {f} {}\n", sha256_hex(&bytes)));
    }
    for line in outcome.lines() {
        s.push_str(&format!("outcome {line}\n"));
    }
    write_file(&out.join(format!("manifest-{name}.txt")), &s)
}

fn collect(cfg: &Config, out: &Path) -> Result<String> {
    let scenarios = cfg.training_scenarios()?;
    let col = collect_trajectories(&scenarios, &cfg.vehicle, &cfg.collection)?;
    write_file(&out.join("trajectory.csv"), &artifacts::trajectory_csv(&col.trajectory))?;
    let msg = format!("{} scenarios, {} samples, {} rejected", scenarios.len(), col.trajectory.len(), col.rejected);
    println!("{msg}");
    Ok(msg)
}

fn load_trajectory(out: &Path) -> Result<Trajectory> {
    artifacts::parse_trajectory_csv(&read_file(&out.join("trajectory.csv"))?)
}

fn reduce(cfg: &Config, out: &Path) -> Result<String> {
    let traj = load_trajectory(out)?;
    let (reduction, h) = pipeline::reduce(&traj, cfg.m)?;

    let mut vm = String::from("m,v_m\n");
    println!("{:>2} {:>12}", "m", "v_m");
    for q in 1..=5 {
        let v = fraction_of_variation(&reduction, q)?;
        println!("{q:>2} {v:>12.9}");
        vm.push_str(&format!("{q},{}\n", artifacts::fmt_num(v)));
    }

    let (lo, hi) = bounds(&h)?;
    let count = 1usize << cfg.m;
    println!("{count} candidate corners:");
    for i in 0..count {
        let v = box_corner(i, &lo, &hi);
        let coords: Vec<String> = v.iter().map(|x| format!("{x:.6}")).collect();
        println!("  {i}: [{}]", coords.join(", "));
    }

    let poly = select_simplex(&h, &reduction, &cfg.vehicle, &cfg.polytope)?;
    let rel = reconstruction_rel_rms(&traj, &reduction);
    println!("simplex corners {:?}, inflation {:.6}", poly.corners, poly.inflation);
    println!("reconstruction relative rms: {}", rel.iter().map(|r| format!("{r:.3e}")).collect::<Vec<_>>().join(" "));

    write_file(&out.join("reduction.txt"), &artifacts::reduction_text(&reduction))?;
    write_file(&out.join("polytope.txt"), &artifacts::polytope_text(&poly))?;
    write_file(&out.join("vm.csv"), &vm)?;
    Ok(format!("m {} corners {:?} inflation {}", cfg.m, poly.corners, poly.inflation))
}

fn load_design(cfg: &Config, out: &Path) -> Result<(PcaReduction, Polytope)> {
    let reduction = artifacts::parse_reduction(&read_file(&out.join("reduction.txt"))?)?;
    let poly = artifacts::parse_polytope(&read_file(&out.join("polytope.txt"))?, &reduction, &cfg.vehicle, &cfg.polytope)?;
    Ok((reduction, poly))
}

fn synth(cfg: &Config, out: &Path) -> Result<String> {
    let traj = load_trajectory(out)?;
    let (reduction, poly) = load_design(cfg, out)?;
    let res = synthesize(&reduction, &poly, &traj.samples, &cfg.vehicle, &cfg.synthesis)?;
    println!("alpha {}  gamma {:.6e}  tau {:.6e}", res.alpha, res.gamma, res.certificate.tau);
    println!("{} constraints, required max eigenvalue <= {:.3e}:", res.certificate.margins.len(), -res.certificate.required);
    for m in &res.certificate.margins {
        println!("  ({}, {})  {:.6e}", m.p, m.q, m.max_eig);
    }
    for (p, k) in res.gains.iter().enumerate() {
        println!("K{p} = {}", artifacts::gain_line(k));
    }
    let lti = lti_gain(&cfg.vehicle, cfg.lti_speed, traj.mean_stiffness(), &cfg.synthesis, cfg.delta_max)?;
    println!("K_lti = {}", artifacts::gain_line(&lti.gain));
    write_file(&out.join("gains.txt"), &res.to_text())?;
    write_file(&out.join("lti.txt"), &lti.to_text())?;
    Ok(format!("{} constraints, worst {:.6e}", res.certificate.margins.len(), res.certificate.worst().max_eig))
}

fn simulate(cfg: &Config, out: &Path) -> Result<String> {
    let road = cfg.road_profile()?;
    let (log, metrics) = match cfg.sim.controller {
        ControllerChoice::Lpv => {
            let (reduction, poly) = load_design(cfg, out)?;
            let gains = SynthesisResult::parse(&read_file(&out.join("gains.txt"))?)?;
            let ctl = ScheduledController::new(reduction, poly, &gains, cfg.delta_max)?;
            sim::run(&road, &cfg.sim, &cfg.vehicle, SteeringLaw::Scheduled(&ctl))?
        }
        ControllerChoice::Lti => {
            let lti = LtiBaseline::parse(&read_file(&out.join("lti.txt"))?)?;
            sim::run(&road, &cfg.sim, &cfg.vehicle, SteeringLaw::Constant(&lti))?
        }
    };
    let t = tag(cfg.sim.controller);
    write_file(&out.join(log_name(t)), &log.to_csv())?;
    write_file(&out.join(metrics_name(t)), &metrics.to_text())?;
    print!("{}", metrics.to_text());
    if metrics.aborted {
        return Err(Error::Numerical {
            message: format!("roll angle exceeded {} rad", cfg.sim.rollover_limit),
            last_good_time: log.t.last().copied().unwrap_or(0.0),
        });
    }
    Ok(format!("{t} rms_ey {} max_abs_ey {}", metrics.rms_ey, metrics.max_abs_ey))
}

fn compare(cfg: &Config, baseline: &Path, candidate: &Path, out: &Path) -> Result<String> {
    let b = SimLog::from_csv(&read_file(baseline)?)?;
    let k = SimLog::from_csv(&read_file(candidate)?)?;
    let cmp = compare_logs(&b, &k, cfg.vehicle.look_ahead, &cfg.sim.metrics).map_err(|e| Error::Config(e.to_string()))?;
    let table = format!("baseline {}\ncandidate {}\n{}", baseline.display(), candidate.display(), cmp.to_table());
    print!("{table}");
    write_file(&out.join("comparison.txt"), &table)?;
    let max = cmp.get("max_abs_ey").map_or(0.0, |r| r.reduction_pct);
    Ok(format!("max_abs_ey reduction {max:.2}%"))
}

fn report(cfg: &Config, out: &Path) -> Result<Vec<String>> {
    let dir = out.join("report");
    let mut files = Vec::new();
    let road = cfg.road_profile()?;
    let mut centre = String::from("s,X,Y\n");
    for (s, x, y) in road.centerline(1.0) {
        centre.push_str(&format!("{},{},{}\n", artifacts::fmt_num(s), artifacts::fmt_num(x), artifacts::fmt_num(y)));
    }
    write_file(&dir.join("road_xy.csv"), &centre)?;
    files.push("road_xy.csv".to_string());

    if out.join("vm.csv").exists() {
        std::fs::copy(out.join("vm.csv"), dir.join("vm.csv"))?;
        files.push("vm.csv".to_string());
    }
    for t in ["lti", "lpv"] {
        let path = out.join(log_name(t));
        if !path.exists() {
            continue;
        }
        let log = SimLog::from_csv(&read_file(&path)?)?;
        let ey = log.lateral_offset(cfg.vehicle.look_ahead);
        let mut ts = String::from("t,e_y,delta,phi,vx\n");
        let mut xy = String::from("t,X,Y\n");
        for i in 0..log.len() {
            let f = artifacts::fmt_num;
            ts.push_str(&format!("{},{},{},{},{}\n", f(log.t[i]), f(ey[i]), f(log.delta[i]), f(log.roll[i].phi), f(log.vx[i])));
            xy.push_str(&format!("{},{},{}\n", f(log.t[i]), f(log.pose[i].x), f(log.pose[i].y)));
        }
        write_file(&dir.join(format!("{t}_timeseries.csv")), &ts)?;
        write_file(&dir.join(format!("{t}_xy.csv")), &xy)?;
        files.push(format!("{t}_timeseries.csv"));
        files.push(format!("{t}_xy.csv"));
    }
    for f in &files {
        println!("report/{f}");
    }
    Ok(files)
}
