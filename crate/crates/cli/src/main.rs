mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use phplate::config::{parse_config, Mode, RunConfig};
use phplate::simulate::{Audit, Simulation};
use phplate::verify::{run_suite, thread_cap};
use phplate::{Error, Result};

use output::{num, RunWriter};

#[derive(Parser)]
#[command(
    name = "phplate",
    version,
    about = "Boundary-controlled Kirchhoff-Love plate simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one simulation and write CSV audits and snapshots.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the `mode` key of the config.
        #[arg(long, value_parser = parse_mode)]
        mode: Option<Mode>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the property suite and print a pass/fail table.
    Verify {
        #[arg(long)]
        config: PathBuf,
    },
    /// Print the actuator profiles and the desired edge shape.
    Profile {
        #[arg(long)]
        config: PathBuf,
    },
}

fn parse_mode(s: &str) -> std::result::Result<Mode, String> {
    Mode::parse(s).map_err(|e| e.to_string())
}

fn load(path: &Path) -> Result<RunConfig> {
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    parse_config(&text)
}

fn simulate(config: &Path, mode: Option<Mode>, out: &Path) -> Result<()> {
    let mut cfg = load(config)?;
    if let Some(m) = mode {
        cfg.mode = m;
    }
    let mut writer = RunWriter::create(out).map_err(|e| match e {
        Error::Io(m) => Error::Io(format!("{}: {m}", out.display())),
        e => e,
    })?;
    std::fs::write(out.join("config.toml"), cfg.to_text())?;

    let mut sim = Simulation::new(&cfg)?;
    let dt = cfg.sim.dt;
    let every = cfg.sim.record_every;
    let n_steps = (cfg.sim.t_final / dt).round() as usize;
    let mut next_snap = 0usize;
    let mut records = Vec::new();
    loop {
        let step = sim.steps_taken();
        if step % every == 0 || step == n_steps {
            let r = sim.audit()?;
            writer.record(&sim, &r)?;
            records.push(r);
        }
        if cfg.snapshot_every > 0.0 {
            let t_snap = next_snap as f64 * cfg.snapshot_every;
            if step == (t_snap / dt).round() as usize {
                writer.snapshot(t_snap, &sim.plant().w)?;
                next_snap += 1;
            }
        }
        if step >= n_steps {
            break;
        }
        if let Err(e) = sim.step() {
            writer.finish(&Audit {
                dt,
                record_every: every,
                records,
            })?;
            return Err(e);
        }
    }
    writer.finish(&Audit {
        dt,
        record_every: every,
        records,
    })
}

fn verify(config: &Path) -> Result<bool> {
    let cfg = load(config)?;
    let results = run_suite(&cfg, thread_cap()?)?;
    let width = results.iter().map(|r| r.name.len()).max().unwrap_or(0);
    println!("{:<width$}  result  measured | allowed", "check");
    for r in &results {
        println!(
            "{:<width$}  {}    {} | {}",
            r.name,
            if r.pass { "PASS" } else { "FAIL" },
            r.measured,
            r.allowed
        );
    }
    let passed = results.iter().filter(|r| r.pass).count();
    println!("{passed}/{} checks passed", results.len());
    Ok(passed == results.len())
}

fn profile(config: &Path) -> Result<()> {
    let cfg = load(config)?;
    let g = cfg.grid()?;
    let act = phplate::actuation::Actuation::sample(&g, &cfg.actuator, &cfg.equilibrium)?;
    println!("z1,lambda_bottom,lambda_top,w_d_bottom,w_d_top");
    for i in 0..g.n1() {
        println!(
            "{},{},{},{},{}",
            num(g.z1(i)),
            num(act.lambda_bottom.values[i]),
            num(act.lambda_top.values[i]),
            num(act.desired_bottom.values[i]),
            num(act.desired_top.values[i])
        );
    }
    let (x1, x2) = act.setpoints(&g);
    eprintln!("controller setpoints: x1 = {}, x2 = {}", num(x1), num(x2));
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Simulate { config, mode, out } => simulate(config, *mode, out).map(|_| true),
        Command::Verify { config } => verify(config),
        Command::Profile { config } => profile(config).map(|_| true),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
