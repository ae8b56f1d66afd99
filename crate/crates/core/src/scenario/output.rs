//! Run artifacts: `trace.jsonl`, `metrics.csv` and the optional `cloud.xyz`.

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use super::run::{RunOutput, TraceRecord};

pub const TRACE_FILE: &str = "trace.jsonl";
pub const METRICS_FILE: &str = "metrics.csv";
pub const CLOUD_FILE: &str = "cloud.xyz";

/// Creates `dir` if needed and checks that files can be written there.
pub fn preflight_out_dir(dir: &Path) -> io::Result<()> {
    fs::create_dir_all(dir)?;
    let probe = dir.join(".relaylab-write-probe");
    File::create(&probe)?;
    fs::remove_file(probe)
}

/// Checks that an output file's parent exists (creating it) and the file is
/// writable.
pub fn preflight_out_file(path: &Path) -> io::Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    File::create(path).map(drop)
}

/// One JSON object per line.
pub fn write_trace<W: Write>(trace: &[TraceRecord], mut out: W) -> io::Result<()> {
    for record in trace {
        serde_json::to_writer(&mut out, record)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

/// Writes all artifacts of a run into `out_dir`. Returns the written paths.
pub fn emit_outputs(output: &RunOutput, out_dir: &Path) -> io::Result<Vec<PathBuf>> {
    preflight_out_dir(out_dir)?;
    let trace_path = out_dir.join(TRACE_FILE);
    write_trace(&output.trace, BufWriter::new(File::create(&trace_path)?))?;

    let metrics_path = out_dir.join(METRICS_FILE);
    fs::write(&metrics_path, output.metrics.to_csv())?;

    let mut written = vec![trace_path, metrics_path];
    if let Some(cloud) = &output.cloud {
        let cloud_path = out_dir.join(CLOUD_FILE);
        cloud.write_xyz(BufWriter::new(File::create(&cloud_path)?))?;
        written.push(cloud_path);
    }
    Ok(written)
}
