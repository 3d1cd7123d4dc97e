use std::io::{Read, Write};
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use serde::Deserialize;

use super::{Blackbox, BlackboxOutput, EvalError};
use crate::domain::{Domain, Point};

/// Blackbox run as an external process.
///
/// The point is written to stdin as one JSON object and the process must
/// print `{"objective": number, "constraints": {id: number}}` on stdout.
#[derive(Debug, Clone)]
pub struct CommandBlackbox {
    pub argv: Vec<String>,
    pub timeout: Duration,
}

#[derive(Deserialize)]
struct Reply {
    objective: f64,
    #[serde(default)]
    constraints: std::collections::BTreeMap<String, f64>,
}

impl CommandBlackbox {
    pub fn new(argv: Vec<String>, timeout: Duration) -> Self {
        CommandBlackbox { argv, timeout }
    }
}

impl Blackbox for CommandBlackbox {
    fn evaluate(&self, domain: &Domain, p: &Point) -> Result<BlackboxOutput, EvalError> {
        let fail = |m: String| EvalError::Blackbox(m);
        let (program, args) = self.argv.split_first().ok_or_else(|| fail("empty command".into()))?;
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .map_err(|e| fail(format!("cannot start {program:?}: {e}")))?;

        let input = domain.point_to_json(p).to_string();
        {
            let mut stdin = child.stdin.take().expect("piped stdin");
            // A process that exits without reading stdin is not an error here.
            let _ = stdin.write_all(input.as_bytes());
            let _ = stdin.write_all(b"\n");
        }
        let mut stdout = child.stdout.take().expect("piped stdout");
        let mut stderr = child.stderr.take().expect("piped stderr");
        let out_reader = std::thread::spawn(move || {
            let mut s = String::new();
            let _ = stdout.read_to_string(&mut s);
            s
        });
        let err_reader = std::thread::spawn(move || {
            let mut s = String::new();
            let _ = stderr.read_to_string(&mut s);
            s
        });

        let start = Instant::now();
        let status = loop {
            match child.try_wait() {
                Ok(Some(status)) => break status,
                Ok(None) if start.elapsed() >= self.timeout => {
                    let _ = child.kill();
                    let _ = child.wait();
                    return Err(fail(format!("timed out after {:?}", self.timeout)));
                }
                Ok(None) => std::thread::sleep(Duration::from_millis(2)),
                Err(e) => return Err(fail(e.to_string())),
            }
        };
        let out = out_reader.join().unwrap_or_default();
        let err = err_reader.join().unwrap_or_default();
        if !status.success() {
            return Err(fail(format!("exited with {status}: {}", err.trim())));
        }
        let reply: Reply =
            serde_json::from_str(out.trim()).map_err(|e| fail(format!("unreadable output ({e}): {:?}", out.trim())))?;
        Ok(BlackboxOutput {
            objective: reply.objective,
            constraints: reply.constraints,
        })
    }
}
