//! Output directory, run manifest and worker pool.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::Serialize;
use serde_json::{json, Value};
use ssb_core::SsbError;

use crate::{CliError, Command, Common};

/// Version of the CSV/JSON layouts written by this binary.
pub const OUTPUT_SCHEMA: u32 = 1;

#[derive(Serialize)]
struct Output {
    file: String,
    schema: String,
}

/// One invocation's output directory; the manifest is written by `finish`.
pub struct Run {
    dir: PathBuf,
    started: SystemTime,
    clock: Instant,
    outputs: Vec<Output>,
}

impl Run {
    /// Creates the output directory. Call only after all validation.
    pub fn start(common: &Common) -> Result<Self, CliError> {
        fs::create_dir_all(&common.out).map_err(|e| SsbError::Io {
            path: common.out.clone(),
            source: e,
        })?;
        Ok(Run {
            dir: common.out.clone(),
            started: SystemTime::now(),
            clock: Instant::now(),
            outputs: Vec::new(),
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    /// Records a file written by someone else.
    pub fn record(&mut self, file: &str, schema: &str) {
        self.outputs.push(Output {
            file: file.into(),
            schema: schema.into(),
        });
    }

    pub fn write(&mut self, file: &str, schema: &str, contents: &str) -> Result<(), CliError> {
        let p = self.path(file);
        write_file(&p, contents)?;
        self.record(file, schema);
        Ok(())
    }

    pub fn write_json(&mut self, file: &str, schema: &str, value: &impl Serialize) -> Result<(), CliError> {
        let text = serde_json::to_string_pretty(value).map_err(SsbError::from)? + "\n";
        self.write(file, schema, &text)
    }

    /// Writes `manifest.json`, the only file carrying wall-clock data.
    pub fn finish(self, command: &Command) -> Result<(), CliError> {
        let started = self.started.duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
        let manifest = json!({
            "tool": "ssb",
            "version": env!("CARGO_PKG_VERSION"),
            "output_schema": OUTPUT_SCHEMA,
            "config": command,
            "outputs": self.outputs,
            "started_unix": started,
            "elapsed_seconds": self.clock.elapsed().as_secs_f64(),
        });
        write_file(&self.path("manifest.json"), &(pretty(&manifest)? + "\n"))
    }
}

fn pretty(v: &Value) -> Result<String, CliError> {
    Ok(serde_json::to_string_pretty(v).map_err(SsbError::from)?)
}

fn write_file(p: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(p, contents).map_err(|e| {
        CliError::Core(SsbError::Io {
            path: p.to_path_buf(),
            source: e,
        })
    })
}

/// Bounded worker pool for the `--jobs` flag.
pub fn pool(common: &Common) -> Result<rayon::ThreadPool, CliError> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(j) = common.jobs {
        if j == 0 {
            return Err(CliError::Usage("--jobs must be positive".into()));
        }
        b = b.num_threads(j);
    }
    b.build()
        .map_err(|e| CliError::Usage(format!("cannot start worker pool: {e}")))
}
