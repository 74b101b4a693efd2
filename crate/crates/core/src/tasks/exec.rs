//! Run candidate generator programs in an isolated child process with a
//! wall-clock limit, capturing stdout as the solution payload.

use std::io::Read;
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use crate::error::{Error, Result};

/// Hard cap on captured stdout.
pub const MAX_OUTPUT_BYTES: usize = 64 * 1024 * 1024;

/// Execute `command` (program plus arguments) in a fresh temporary working
/// directory. Returns captured stdout on clean exit. `memory_hint_mb` is
/// exported to the child as `CANDIDATE_MEMORY_HINT_MB`; it is advisory, not
/// enforced.
pub fn execute_candidate(
    command: &[String],
    time_limit_ms: u64,
    memory_hint_mb: Option<u64>,
) -> Result<Vec<u8>> {
    let (program, args) = command
        .split_first()
        .ok_or_else(|| Error::ExecSpawn("empty command".into()))?;
    let workdir = tempfile::tempdir().map_err(|e| Error::ExecSpawn(e.to_string()))?;

    let mut cmd = Command::new(program);
    cmd.args(args)
        .current_dir(workdir.path())
        .stdin(Stdio::null())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped());
    if let Some(mb) = memory_hint_mb {
        cmd.env("CANDIDATE_MEMORY_HINT_MB", mb.to_string());
    }
    let mut child = cmd.spawn().map_err(|e| Error::ExecSpawn(e.to_string()))?;

    // Drain pipes on threads so a chatty child cannot deadlock on a full pipe.
    let mut stdout_pipe = child.stdout.take().expect("stdout piped");
    let mut stderr_pipe = child.stderr.take().expect("stderr piped");
    let out_handle = std::thread::spawn(move || {
        let mut buf = Vec::new();
        let mut chunk = [0u8; 64 * 1024];
        loop {
            match stdout_pipe.read(&mut chunk) {
                Ok(0) => break,
                Ok(k) => {
                    if buf.len() + k > MAX_OUTPUT_BYTES {
                        return Err(());
                    }
                    buf.extend_from_slice(&chunk[..k]);
                }
                Err(_) => break,
            }
        }
        Ok(buf)
    });
    let err_handle = std::thread::spawn(move || {
        let mut buf = String::new();
        let _ = stderr_pipe.read_to_string(&mut buf);
        buf
    });

    let deadline = Instant::now() + Duration::from_millis(time_limit_ms);
    let status = loop {
        match child.try_wait().map_err(|e| Error::ExecSpawn(e.to_string()))? {
            Some(status) => break status,
            None => {
                if Instant::now() >= deadline {
                    let _ = child.kill();
                    let _ = child.wait();
                    return Err(Error::ExecTimeout(time_limit_ms));
                }
                std::thread::sleep(Duration::from_millis(2));
            }
        }
    };

    let stdout = out_handle
        .join()
        .expect("stdout reader panicked")
        .map_err(|_| {
            let _ = child.kill();
            Error::ExecOversized(MAX_OUTPUT_BYTES)
        })?;
    let stderr = err_handle.join().expect("stderr reader panicked");

    if !status.success() {
        return Err(Error::ExecFailed {
            code: status.code(),
            stderr,
        });
    }
    Ok(stdout)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sh(script: &str) -> Vec<String> {
        vec!["sh".into(), "-c".into(), script.into()]
    }

    #[test]
    fn captures_stdout() {
        let out = execute_candidate(&sh("printf hello"), 5_000, None).unwrap();
        assert_eq!(out, b"hello");
    }

    #[test]
    fn timeout_kills_child() {
        let err = execute_candidate(&sh("sleep 30"), 100, None).unwrap_err();
        assert!(matches!(err, Error::ExecTimeout(100)));
    }

    #[test]
    fn nonzero_exit_carries_stderr() {
        let err = execute_candidate(&sh("echo oops >&2; exit 3"), 5_000, None).unwrap_err();
        match err {
            Error::ExecFailed { code, stderr } => {
                assert_eq!(code, Some(3));
                assert!(stderr.contains("oops"));
            }
            other => panic!("unexpected: {other}"),
        }
    }

    #[test]
    fn spawn_failure() {
        let err =
            execute_candidate(&["no-such-binary-xyz".to_string()], 1_000, None).unwrap_err();
        assert!(matches!(err, Error::ExecSpawn(_)));
    }

    #[test]
    fn runs_in_fresh_directory() {
        let out = execute_candidate(&sh("ls | wc -l"), 5_000, None).unwrap();
        assert_eq!(String::from_utf8_lossy(&out).trim(), "0");
    }
}
