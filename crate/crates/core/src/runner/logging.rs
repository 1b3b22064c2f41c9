//! Log records go to stderr and, while a run is active, to its `log.txt`.

use std::fs::File;
use std::io::Write;
use std::path::Path;
use std::sync::Mutex;

static RUN_LOG: Mutex<Option<File>> = Mutex::new(None);

struct Tee;

impl Write for Tee {
    fn write(&mut self, buf: &[u8]) -> std::io::Result<usize> {
        std::io::stderr().write_all(buf)?;
        if let Some(f) = RUN_LOG.lock().unwrap_or_else(|e| e.into_inner()).as_mut() {
            f.write_all(buf)?;
        }
        Ok(buf.len())
    }

    fn flush(&mut self) -> std::io::Result<()> {
        std::io::stderr().flush()?;
        if let Some(f) = RUN_LOG.lock().unwrap_or_else(|e| e.into_inner()).as_mut() {
            f.flush()?;
        }
        Ok(())
    }
}

/// Installs the global logger; `RUST_LOG` overrides the default `info` level.
pub fn init_logging() {
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .target(env_logger::Target::Pipe(Box::new(Tee)))
        .try_init();
}

/// Detaches the run log when dropped.
pub(crate) struct Attached;

impl Drop for Attached {
    fn drop(&mut self) {
        *RUN_LOG.lock().unwrap_or_else(|e| e.into_inner()) = None;
    }
}

pub(crate) fn attach(path: &Path) -> std::io::Result<Attached> {
    let mut file = std::fs::OpenOptions::new().create(true).append(true).open(path)?;
    writeln!(file, "[{}] log opened", chrono::Utc::now().to_rfc3339())?;
    *RUN_LOG.lock().unwrap_or_else(|e| e.into_inner()) = Some(file);
    Ok(Attached)
}
