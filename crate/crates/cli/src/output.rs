//! Atomic file output and number formatting.

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use nonlocal_fv::{DiagnosticsRecord, Mesh, Trajectory};

/// 17 significant digits, enough to round-trip any `f64`.
pub fn num(v: f64) -> String {
    format!("{v:.16e}")
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

fn temp_path(path: &Path) -> PathBuf {
    let name = path.file_name().and_then(|s| s.to_str()).unwrap_or("output");
    path.with_file_name(format!(".{name}.{}.tmp", std::process::id()))
}

/// Writes through a temporary file in the same directory, then renames it
/// over `path`, so readers never see a partial file.
pub fn write_atomic(path: &Path, fill: impl FnOnce(&mut dyn Write) -> io::Result<()>) -> io::Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let tmp = temp_path(path);
    let result = (|| {
        let file = File::create(&tmp)?;
        let mut w = BufWriter::new(file);
        fill(&mut w)?;
        let file = w.into_inner().map_err(|e| e.into_error())?;
        file.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    result
}

pub fn write_json(path: &Path, value: &serde_json::Value) -> io::Result<()> {
    write_atomic(path, |w| {
        serde_json::to_writer_pretty(&mut *w, value)?;
        writeln!(w)
    })
}

pub fn write_solution(path: &Path, tr: &Trajectory, mesh: &Mesh) -> io::Result<()> {
    let centers = mesh.centers();
    write_atomic(path, |w| {
        writeln!(w, "t,x,rho")?;
        for s in &tr.states {
            let t = num(s.t);
            for (x, rho) in centers.iter().zip(&s.cells) {
                writeln!(w, "{t},{},{}", num(*x), num(*rho))?;
            }
        }
        Ok(())
    })
}

pub fn write_interfaces(path: &Path, tr: &Trajectory, mesh: &Mesh) -> io::Result<()> {
    write_atomic(path, |w| {
        writeln!(w, "t,x_interface,R")?;
        for s in &tr.states {
            let t = num(s.t);
            for (j, r) in s.interface_r.iter().enumerate() {
                writeln!(w, "{t},{},{}", num(mesh.interface(j)), num(*r))?;
            }
        }
        Ok(())
    })
}

pub const DIAGNOSTICS_HEADER: &str = "step,t,l1,linf,tv,min,mass,time_diff,entropy_plus_max,entropy_minus_max,margin_l1,margin_linf,margin_tv,margin_timediff";

pub fn write_diagnostics(path: &Path, records: &[DiagnosticsRecord]) -> io::Result<()> {
    write_atomic(path, |w| {
        writeln!(w, "{DIAGNOSTICS_HEADER}")?;
        for r in records {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                r.step,
                num(r.t),
                num(r.l1),
                num(r.linf),
                num(r.tv),
                num(r.min),
                num(r.mass),
                opt(r.time_diff),
                opt(r.entropy_plus_max),
                opt(r.entropy_minus_max),
                opt(r.margin_l1),
                opt(r.margin_linf),
                opt(r.margin_tv),
                opt(r.margin_timediff),
            )?;
        }
        Ok(())
    })
}
