//! CSV writers. Every float is printed with `{:.16e}` (17 significant
//! digits, locale independent), so repeated runs give identical files.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use phplate::grid::{Edge, Field};
use phplate::plate::PortEvaluation;
use phplate::simulate::{Audit, AuditRecord, Simulation};
use phplate::Result;

pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

fn row(out: &mut impl Write, cols: &[f64]) -> Result<()> {
    let line: Vec<String> = cols.iter().map(|&c| num(c)).collect();
    writeln!(out, "{}", line.join(","))?;
    Ok(())
}

fn create(path: &Path, header: &str) -> Result<BufWriter<File>> {
    let mut f = BufWriter::new(File::create(path)?);
    writeln!(f, "{header}")?;
    Ok(f)
}

/// Writes a field as an `N1 × N2` matrix, row `i` holding `w(z¹_i, ·)`.
pub fn write_matrix(path: &Path, f: &Field) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    for r in f.values().rows() {
        let line: Vec<String> = r.iter().map(|&c| num(c)).collect();
        writeln!(out, "{}", line.join(","))?;
    }
    out.flush()?;
    Ok(())
}

/// Streams the per-record files of a simulate run into `dir`.
pub struct RunWriter {
    dir: PathBuf,
    energies: BufWriter<File>,
    casimir: BufWriter<File>,
    boundary: BufWriter<File>,
    observer: BufWriter<File>,
    c0: Option<[f64; 2]>,
}

impl RunWriter {
    pub fn create(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir.join("snapshots"))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            energies: create(
                &dir.join("energies.csv"),
                "t,H,H_c,H_cl,H_err,H_err_d,port_power,port_power_measured",
            )?,
            casimir: create(
                &dir.join("casimir.csv"),
                "t,C1,C2,xc1,xc2,xc3,xc4,C1_drift,C2_drift,u1,u2",
            )?,
            boundary: create(&dir.join("boundary_profile.csv"), "t,z1,w,w_d")?,
            observer: create(&dir.join("observer_compare.csv"), "t,w_probe,w_hat_probe")?,
            c0: None,
        })
    }

    pub fn record(&mut self, sim: &Simulation, r: &AuditRecord) -> Result<()> {
        row(
            &mut self.energies,
            &[
                r.t,
                r.h,
                r.h_c,
                r.h_cl,
                r.h_err,
                r.h_err_d,
                r.port_power,
                r.port_power_measured,
            ],
        )?;
        let c0 = *self.c0.get_or_insert(r.casimir);
        row(
            &mut self.casimir,
            &[
                r.t,
                r.casimir[0],
                r.casimir[1],
                r.xc[0],
                r.xc[1],
                r.xc[2],
                r.xc[3],
                (r.casimir[0] - c0[0]).abs(),
                (r.casimir[1] - c0[1]).abs(),
                r.inputs[0],
                r.inputs[1],
            ],
        )?;
        let g = *sim.system.grid();
        let w = sim.plant().w.edge(&g, Edge::Bottom);
        let wd = &sim.system.act.desired_bottom.values;
        for (i, (a, b)) in w.values.iter().zip(wd).enumerate() {
            row(&mut self.boundary, &[r.t, g.z1(i), *a, *b])?;
        }
        let w_hat = if sim.observer().is_some() {
            r.w_hat_probe
        } else {
            f64::NAN
        };
        row(&mut self.observer, &[r.t, r.w_probe, w_hat])
    }

    /// Snapshot file for time label `t`, e.g. `snapshots/w_10.csv`.
    pub fn snapshot(&self, t: f64, w: &Field) -> Result<()> {
        write_matrix(&self.dir.join("snapshots").join(format!("w_{t}.csv")), w)
    }

    pub fn finish(mut self, audit: &Audit) -> Result<()> {
        for f in [
            &mut self.energies,
            &mut self.casimir,
            &mut self.boundary,
            &mut self.observer,
        ] {
            f.flush()?;
        }
        let mut out = create(
            &self.dir.join("power_balance.csv"),
            "t,residual_prescribed,residual_measured",
        )?;
        // The residual is a centred difference, so it needs three samples.
        if let (Ok(a), Ok(b)) = (
            audit.power_balance_residual(PortEvaluation::Prescribed),
            audit.power_balance_residual(PortEvaluation::Measured),
        ) {
            let ts = audit
                .records
                .iter()
                .filter(|r| r.step % audit.record_every == 0)
                .skip(1)
                .map(|r| r.t);
            for ((t, a), b) in ts.zip(a).zip(b) {
                row(&mut out, &[t, a, b])?;
            }
        }
        out.flush()?;
        Ok(())
    }
}
