use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use super::bench::BenchmarkReport;
use super::study::{RocCurve, StudyReport, SweepRow};

fn opt(v: &Option<String>) -> &str {
    v.as_deref().unwrap_or("")
}

pub fn write_benchmark_csv(report: &BenchmarkReport, mut w: impl Write) -> io::Result<()> {
    writeln!(w, "op,wl,tp,sr,del,p50,p95,p99,generated,submitted,refused,committed,failed,utilization,flag")?;
    for r in &report.rows {
        writeln!(
            w,
            "{},{},{:.3},{:.4},{:.6},{:.6},{:.6},{:.6},{},{},{},{},{},{:.4},{}",
            r.op,
            r.workload,
            r.throughput,
            r.success_rate,
            r.delay,
            r.p50,
            r.p95,
            r.p99,
            r.generated,
            r.submitted,
            r.refused,
            r.committed,
            r.failed,
            r.utilization,
            opt(&r.flag)
        )?;
    }
    Ok(())
}

pub fn write_roc_csv(roc: &RocCurve, mut w: impl Write) -> io::Result<()> {
    writeln!(w, "cutoff,fpr,tpr")?;
    for p in &roc.points {
        writeln!(w, "{},{:.6},{:.6}", p.cutoff, p.fpr, p.tpr)?;
    }
    Ok(())
}

pub fn write_study_csv(report: &StudyReport, mut w: impl Write) -> io::Result<()> {
    writeln!(w, "case,frames,injected,tp,fp,tn,fn,accuracy,mean_deviation_gap")?;
    for c in &report.cases {
        let k = &c.confusion;
        writeln!(
            w,
            "{},{},{},{},{},{},{},{:.6},{:.9}",
            c.case, c.frames, c.injected, k.tp, k.fp, k.tn, k.fn_, c.accuracy, c.mean_deviation_gap
        )?;
    }
    Ok(())
}

pub fn write_sweep_csv(rows: &[SweepRow], mut w: impl Write) -> io::Result<()> {
    writeln!(w, "injection_rate,accuracy,tpr,fpr,auc")?;
    for r in rows {
        writeln!(w, "{:.3},{:.6},{:.6},{:.6},{:.6}", r.injection_rate, r.accuracy, r.tpr, r.fpr, r.auc)?;
    }
    Ok(())
}

/// Whitespace-separated columns with a `#` header, for gnuplot.
pub fn to_gnuplot(csv: &str) -> String {
    let mut out = String::with_capacity(csv.len() + 2);
    for (i, line) in csv.lines().enumerate() {
        if i == 0 {
            out.push_str("# ");
        }
        let cells: Vec<&str> = line.split(',').map(|c| if c.is_empty() { "-" } else { c }).collect();
        out.push_str(&cells.join(" "));
        out.push('\n');
    }
    out
}

/// Writes `name.csv` and `name.dat` into `dir` and returns both paths.
pub fn emit(dir: &Path, name: &str, write: impl FnOnce(&mut Vec<u8>) -> io::Result<()>) -> io::Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut buf = Vec::new();
    write(&mut buf)?;
    let csv_path = dir.join(format!("{name}.csv"));
    let dat_path = dir.join(format!("{name}.dat"));
    fs::write(&csv_path, &buf)?;
    fs::write(&dat_path, to_gnuplot(&String::from_utf8_lossy(&buf)))?;
    Ok(vec![csv_path, dat_path])
}
