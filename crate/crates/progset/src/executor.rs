//! Test-case executor as a subprocess.
//!
//! The command runs under `sh -c` once per program, with the program payload
//! on standard input. It must print `1` (tests pass) or `0` and exit with
//! status 0 before the timeout; anything else is an execution error for that
//! program.

use std::io::{Read, Write};
use std::os::unix::process::CommandExt;
use std::process::{Command, Stdio};
use std::thread;
use std::time::Duration;

use rayon::prelude::*;
use wait_timeout::ChildExt;

use progset_core::selective::{ExecutionError, Executor};

pub struct SubprocessExecutor {
    command: String,
    payloads: Vec<String>,
    timeout: Duration,
    pool: rayon::ThreadPool,
}

impl SubprocessExecutor {
    /// `jobs` bounds how many programs of a batch run at once (0 picks the
    /// number of CPUs).
    pub fn new(command: impl Into<String>, payloads: Vec<String>, timeout: Duration, jobs: usize) -> Self {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .expect("executor thread pool");
        Self { command: command.into(), payloads, timeout, pool }
    }

    fn run(&self, index: usize) -> Result<bool, ExecutionError> {
        let fail = |reason: String| ExecutionError { index, reason };
        let payload = self
            .payloads
            .get(index)
            .ok_or_else(|| fail("no such program".into()))?
            .clone();
        let mut child = Command::new("sh")
            .arg("-c")
            .arg(&self.command)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .process_group(0)
            .spawn()
            .map_err(|e| fail(format!("cannot start executor: {e}")))?;

        // Separate threads so a command that ignores its input or floods its
        // output cannot deadlock against the pipes.
        let mut stdin = child.stdin.take().expect("piped stdin");
        let writer = thread::spawn(move || {
            // A command that exits without reading closes the pipe; that is
            // not an error of the program under test.
            let _ = stdin.write_all(payload.as_bytes());
        });
        let mut stdout = child.stdout.take().expect("piped stdout");
        let reader = thread::spawn(move || {
            let mut out = String::new();
            stdout.read_to_string(&mut out).map(|_| out)
        });

        let status = match child.wait_timeout(self.timeout) {
            Ok(Some(status)) => status,
            Ok(None) => {
                // The whole group, so grandchildren holding the pipes die too.
                // The pipe threads are left to finish on their own.
                unsafe { libc::killpg(child.id() as libc::pid_t, libc::SIGKILL) };
                let _ = child.kill();
                let _ = child.wait();
                return Err(fail(format!("timed out after {} ms", self.timeout.as_millis())));
            }
            Err(e) => return Err(fail(format!("wait failed: {e}"))),
        };
        let _ = writer.join();
        let out = reader
            .join()
            .map_err(|_| fail("output reader panicked".into()))?
            .map_err(|e| fail(format!("cannot read output: {e}")))?;
        if !status.success() {
            return Err(fail(format!("executor exited with {status}")));
        }
        match out.trim() {
            "1" => Ok(true),
            "0" => Ok(false),
            other => Err(fail(format!("expected 1 or 0 on stdout, got {other:?}"))),
        }
    }
}

impl Executor for SubprocessExecutor {
    fn execute(&mut self, index: usize) -> Result<bool, ExecutionError> {
        self.run(index)
    }

    /// Runs the batch on the pool. On failure the error of the earliest
    /// program in `indices` is reported, independent of scheduling.
    fn execute_batch(&mut self, indices: &[usize]) -> Result<Vec<bool>, ExecutionError> {
        let this = &*self;
        let results: Vec<_> = this.pool.install(|| indices.par_iter().map(|&i| this.run(i)).collect());
        results.into_iter().collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn exec(cmd: &str, payloads: &[&str]) -> SubprocessExecutor {
        let payloads = payloads.iter().map(|s| s.to_string()).collect();
        SubprocessExecutor::new(cmd, payloads, Duration::from_millis(2000), 2)
    }

    #[test]
    fn reads_verdict_from_stdout() {
        let mut e = exec("grep -q ok && echo 1 || echo 0", &["ok", "bad", "ok\n"]);
        assert_eq!(e.execute_batch(&[0, 1, 2]).unwrap(), vec![true, false, true]);
    }

    #[test]
    fn contract_violations_are_errors() {
        let mut e = exec("cat >/dev/null; echo maybe", &["x"]);
        assert!(e.execute(0).unwrap_err().reason.contains("maybe"));
        let mut e = exec("echo 1; exit 3", &["x"]);
        assert!(e.execute(0).unwrap_err().reason.contains("exited"));
        let mut e = exec("echo 1", &["x"]);
        assert_eq!(e.execute(1).unwrap_err().index, 1);
    }

    #[test]
    fn timeout_kills_the_command() {
        let payloads = vec!["x".to_string()];
        let mut e = SubprocessExecutor::new("sleep 5; echo 1", payloads, Duration::from_millis(100), 1);
        let start = std::time::Instant::now();
        let err = e.execute(0).unwrap_err();
        assert!(err.reason.contains("timed out"));
        assert!(start.elapsed() < Duration::from_secs(4));
    }

    #[test]
    fn batch_reports_earliest_failure() {
        let mut e = exec("read x; [ \"$x\" = bad ] && exit 1; echo 1", &["a", "bad", "c", "bad"]);
        assert_eq!(e.execute_batch(&[0, 3, 1]).unwrap_err().index, 3);
    }
}
