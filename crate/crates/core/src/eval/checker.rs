use std::fs::File;
use std::io::{Read, Seek, SeekFrom};
use std::os::unix::process::CommandExt;
use std::path::{Path, PathBuf};
use std::process::{Command, ExitStatus, Stdio};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::geometry::{load_stl, TriMesh};

pub const INPUT_PLACEHOLDER: &str = "{input}";
pub const OUTPUT_PLACEHOLDER: &str = "{output}";

const DIAGNOSTICS_LIMIT: u64 = 4096;

/// External STEP-to-STL converter run through `sh -c`.
///
/// `{input}` and `{output}` in the template are replaced by the shell-quoted
/// STEP and STL paths. A run counts as renderable when the command exits 0
/// and leaves an STL with at least one triangle of positive area.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExternalCheckerSpec {
    pub command: String,
    #[serde(default = "default_timeout")]
    pub timeout_s: f64,
}

fn default_timeout() -> f64 {
    60.0
}

impl ExternalCheckerSpec {
    pub fn new(command: impl Into<String>, timeout_s: f64) -> Result<Self, EvalError> {
        let spec = ExternalCheckerSpec {
            command: command.into(),
            timeout_s,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), EvalError> {
        for placeholder in [INPUT_PLACEHOLDER, OUTPUT_PLACEHOLDER] {
            if !self.command.contains(placeholder) {
                return Err(EvalError::InvalidChecker(format!("command template lacks {placeholder}")));
            }
        }
        if !(self.timeout_s > 0.0 && self.timeout_s.is_finite()) {
            return Err(EvalError::InvalidChecker(format!("timeout must be positive, got {}", self.timeout_s)));
        }
        Ok(())
    }

    pub fn render_command(&self, input: &Path, output: &Path) -> String {
        self.command
            .replace(INPUT_PLACEHOLDER, &shell_quote(&input.to_string_lossy()))
            .replace(OUTPUT_PLACEHOLDER, &shell_quote(&output.to_string_lossy()))
    }
}

fn shell_quote(s: &str) -> String {
    format!("'{}'", s.replace('\'', "'\\''"))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RenderFailure {
    ExitCode { code: i32 },
    Signal,
    Timeout,
    MissingOutput,
    InvalidStl { message: String },
    EmptyShape,
}

impl std::fmt::Display for RenderFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RenderFailure::ExitCode { code } => write!(f, "checker exited with status {code}"),
            RenderFailure::Signal => write!(f, "checker was killed by a signal"),
            RenderFailure::Timeout => write!(f, "checker timed out"),
            RenderFailure::MissingOutput => write!(f, "checker produced no STL"),
            RenderFailure::InvalidStl { message } => write!(f, "checker output is not a valid STL: {message}"),
            RenderFailure::EmptyShape => write!(f, "checker output has no triangle of positive area"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RenderOutcome {
    pub renderable: bool,
    pub stl_path: Option<PathBuf>,
    pub mesh: Option<TriMesh>,
    pub failure: Option<RenderFailure>,
    /// Tail of the checker's stderr.
    pub diagnostics: String,
}

impl RenderOutcome {
    fn failed(failure: RenderFailure, diagnostics: String) -> RenderOutcome {
        RenderOutcome {
            renderable: false,
            stl_path: None,
            mesh: None,
            failure: Some(failure),
            diagnostics,
        }
    }
}

fn read_diagnostics(file: &mut File) -> String {
    let len = file.metadata().map(|m| m.len()).unwrap_or(0);
    let start = len.saturating_sub(DIAGNOSTICS_LIMIT);
    let mut buf = Vec::new();
    if file.seek(SeekFrom::Start(start)).is_ok() {
        let _ = file.take(DIAGNOSTICS_LIMIT).read_to_end(&mut buf);
    }
    String::from_utf8_lossy(&buf).trim().to_string()
}

fn kill_group(pid: u32) {
    // The child leads its own process group, so this also reaches anything
    // the shell spawned.
    unsafe {
        libc::kill(-(pid as libc::pid_t), libc::SIGKILL);
    }
}

fn run_with_timeout(command: &str, timeout: Duration) -> Result<(Option<ExitStatus>, String), EvalError> {
    let mut stderr = tempfile::tempfile().map_err(|e| EvalError::Io(format!("creating stderr capture: {e}")))?;
    let stderr_handle = stderr
        .try_clone()
        .map_err(|e| EvalError::Io(format!("creating stderr capture: {e}")))?;
    let mut child = Command::new("sh")
        .arg("-c")
        .arg(command)
        .stdin(Stdio::null())
        .stdout(Stdio::null())
        .stderr(Stdio::from(stderr_handle))
        .process_group(0)
        .spawn()
        .map_err(|e| EvalError::CheckerUnavailable(format!("cannot start sh: {e}")))?;
    let deadline = Instant::now() + timeout;
    let mut pause = Duration::from_millis(1);
    let status = loop {
        match child.try_wait() {
            Ok(Some(status)) => break Some(status),
            Ok(None) if Instant::now() >= deadline => {
                kill_group(child.id());
                let _ = child.wait();
                break None;
            }
            Ok(None) => {
                std::thread::sleep(pause);
                pause = (pause * 2).min(Duration::from_millis(25));
            }
            Err(e) => {
                kill_group(child.id());
                let _ = child.wait();
                return Err(EvalError::Io(format!("waiting for checker: {e}")));
            }
        }
    };
    Ok((status, read_diagnostics(&mut stderr)))
}

/// Runs the checker on `step_path`, writing the mesh to `stl_path`.
///
/// Fails with [`EvalError::CheckerUnavailable`] when the shell cannot run or
/// reports the command as not found (status 127); every other outcome is a
/// [`RenderOutcome`].
pub fn check_renderability(step_path: &Path, stl_path: &Path, spec: &ExternalCheckerSpec) -> Result<RenderOutcome, EvalError> {
    spec.validate()?;
    if stl_path.exists() {
        std::fs::remove_file(stl_path).map_err(|e| EvalError::Io(format!("removing stale {}: {e}", stl_path.display())))?;
    }
    let command = spec.render_command(step_path, stl_path);
    let (status, diagnostics) = run_with_timeout(&command, Duration::from_secs_f64(spec.timeout_s))?;
    let Some(status) = status else {
        return Ok(RenderOutcome::failed(RenderFailure::Timeout, diagnostics));
    };
    match status.code() {
        Some(0) => {}
        Some(127) => {
            return Err(EvalError::CheckerUnavailable(if diagnostics.is_empty() {
                format!("command not found: {}", spec.command)
            } else {
                diagnostics
            }))
        }
        Some(code) => return Ok(RenderOutcome::failed(RenderFailure::ExitCode { code }, diagnostics)),
        None => return Ok(RenderOutcome::failed(RenderFailure::Signal, diagnostics)),
    }
    let bytes = match std::fs::read(stl_path) {
        Ok(bytes) => bytes,
        Err(_) => return Ok(RenderOutcome::failed(RenderFailure::MissingOutput, diagnostics)),
    };
    match load_stl(&bytes) {
        Ok(mesh) if mesh.has_positive_area() => Ok(RenderOutcome {
            renderable: true,
            stl_path: Some(stl_path.to_path_buf()),
            mesh: Some(mesh),
            failure: None,
            diagnostics,
        }),
        Ok(_) | Err(crate::geometry::GeometryError::EmptyMesh) => {
            Ok(RenderOutcome::failed(RenderFailure::EmptyShape, diagnostics))
        }
        Err(e) => Ok(RenderOutcome::failed(
            RenderFailure::InvalidStl { message: e.to_string() },
            diagnostics,
        )),
    }
}
