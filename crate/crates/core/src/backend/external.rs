use std::io::{self, BufRead, BufReader, Read, Write};
use std::net::{TcpStream, ToSocketAddrs};
use std::process::{Child, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::thread;
use std::time::Duration;

use super::protocol::{
    parse_response, serve, validate_response, AliasTable, Capabilities, TagRequest, TagResponse,
    Tagger, CAPABILITIES_REQUEST,
};
use super::{Backend, BackendDescriptor, BackendKind};
use crate::error::{Error, Result};

type Line = io::Result<Option<String>>;

/// A JSON-lines peer: a child process, a TCP server, or an in-process
/// tagger behind a pipe pair.
pub struct ExternalBackend {
    writer: Box<dyn Write + Send>,
    lines: Receiver<Line>,
    child: Option<Child>,
    timeout: Duration,
    aliases: AliasTable,
    capabilities: Option<Capabilities>,
    next_id: u64,
}

impl std::fmt::Debug for ExternalBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ExternalBackend")
            .field("timeout", &self.timeout)
            .field("next_id", &self.next_id)
            .finish_non_exhaustive()
    }
}

fn spawn_reader<R: Read + Send + 'static>(reader: R) -> Receiver<Line> {
    let (tx, rx) = mpsc::channel();
    thread::spawn(move || {
        let mut reader = BufReader::new(reader);
        loop {
            let mut line = String::new();
            match reader.read_line(&mut line) {
                Ok(0) => {
                    let _ = tx.send(Ok(None));
                    return;
                }
                Ok(_) => {
                    let trimmed = line.trim_end_matches(['\n', '\r']).to_string();
                    if tx.send(Ok(Some(trimmed))).is_err() {
                        return;
                    }
                }
                Err(e) => {
                    let _ = tx.send(Err(e));
                    return;
                }
            }
        }
    });
    rx
}

impl ExternalBackend {
    pub fn connect(descriptor: &BackendDescriptor) -> Result<Self> {
        descriptor.validate()?;
        match descriptor.kind {
            BackendKind::ExternalProcess => Self::spawn(&descriptor.locator, descriptor.timeout),
            BackendKind::ExternalTcp => Self::tcp(&descriptor.locator, descriptor.timeout),
            BackendKind::BuiltinCrf => Err(Error::validation("not an external backend")),
        }
    }

    /// Runs `command` through the shell and talks to it over stdin/stdout.
    pub fn spawn(command: &str, timeout: Duration) -> Result<Self> {
        let mut child = shell(command)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| Error::Connection(format!("cannot start {command:?}: {e}")))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        Ok(Self::from_parts(Box::new(stdin), spawn_reader(stdout), Some(child), timeout))
    }

    pub fn tcp(address: &str, timeout: Duration) -> Result<Self> {
        let addr = address
            .to_socket_addrs()
            .map_err(|e| Error::Connection(format!("{address}: {e}")))?
            .next()
            .ok_or_else(|| Error::Connection(format!("{address}: no address")))?;
        let stream = TcpStream::connect_timeout(&addr, timeout)
            .map_err(|e| Error::Connection(format!("{address}: {e}")))?;
        stream.set_nodelay(true).ok();
        let reader = stream.try_clone()?;
        Ok(Self::from_parts(Box::new(stream), spawn_reader(reader), None, timeout))
    }

    /// Serves `tagger` on a background thread through an OS pipe pair, so
    /// every request crosses the real wire encoding.
    pub fn in_process<T: Tagger + Send + 'static>(tagger: T, timeout: Duration) -> Result<Self> {
        let (req_rx, req_tx) = io::pipe()?;
        let (resp_rx, resp_tx) = io::pipe()?;
        thread::spawn(move || {
            let _ = serve(&tagger, BufReader::new(req_rx), resp_tx);
        });
        Ok(Self::from_parts(Box::new(req_tx), spawn_reader(resp_rx), None, timeout))
    }

    fn from_parts(
        writer: Box<dyn Write + Send>,
        lines: Receiver<Line>,
        child: Option<Child>,
        timeout: Duration,
    ) -> Self {
        ExternalBackend {
            writer,
            lines,
            child,
            timeout,
            aliases: AliasTable::default(),
            capabilities: None,
            next_id: 0,
        }
    }

    pub fn with_aliases(mut self, aliases: AliasTable) -> Self {
        self.aliases = aliases;
        self
    }

    fn send(&mut self, payload: &str) -> Result<()> {
        let result = self
            .writer
            .write_all(payload.as_bytes())
            .and_then(|_| self.writer.flush());
        result.map_err(|e| Error::Connection(format!("write failed: {e}")))
    }

    fn recv(&mut self) -> std::result::Result<String, RecvOutcome> {
        match self.lines.recv_timeout(self.timeout) {
            Ok(Ok(Some(line))) => Ok(line),
            Ok(Ok(None)) => Err(RecvOutcome::Failed(Error::Connection(
                "backend closed the connection".into(),
            ))),
            Ok(Err(e)) => Err(RecvOutcome::Failed(Error::Connection(format!("read failed: {e}")))),
            Err(RecvTimeoutError::Timeout) => Err(RecvOutcome::TimedOut),
            Err(RecvTimeoutError::Disconnected) => Err(RecvOutcome::Failed(Error::Connection(
                "backend reader stopped".into(),
            ))),
        }
    }

    fn recv_nonblank(&mut self) -> std::result::Result<String, RecvOutcome> {
        loop {
            let line = self.recv()?;
            if !line.trim().is_empty() {
                return Ok(line);
            }
        }
    }
}

enum RecvOutcome {
    TimedOut,
    Failed(Error),
}

#[cfg(unix)]
fn shell(command: &str) -> Command {
    let mut c = Command::new("sh");
    c.arg("-c").arg(command);
    c
}

#[cfg(windows)]
fn shell(command: &str) -> Command {
    let mut c = Command::new("cmd");
    c.arg("/C").arg(command);
    c
}

impl Backend for ExternalBackend {
    fn capabilities(&mut self) -> Result<Capabilities> {
        if let Some(c) = &self.capabilities {
            return Ok(c.clone());
        }
        let request = format!("{CAPABILITIES_REQUEST}\n");
        self.send(&request)?;
        let line = match self.recv_nonblank() {
            Ok(line) => line,
            Err(RecvOutcome::Failed(e)) => return Err(e),
            Err(RecvOutcome::TimedOut) => {
                self.send(&request)?;
                match self.recv_nonblank() {
                    Ok(line) => line,
                    Err(RecvOutcome::Failed(e)) => return Err(e),
                    Err(RecvOutcome::TimedOut) => return Err(Error::Timeout(self.timeout)),
                }
            }
        };
        let caps: Capabilities = serde_json::from_str(&line)
            .map_err(|e| Error::protocol(None, format!("bad capability record ({e}): {line}")))?;
        self.capabilities = Some(caps.clone());
        Ok(caps)
    }

    fn tag_batch(&mut self, sentences: &[Vec<String>]) -> Result<Vec<TagResponse>> {
        if sentences.is_empty() {
            return Ok(Vec::new());
        }
        if let Some(i) = sentences.iter().position(Vec::is_empty) {
            return Err(Error::validation(format!("sentence {i} of the batch has no tokens")));
        }
        let first = self.next_id;
        self.next_id += sentences.len() as u64;
        let lines: Vec<String> = sentences
            .iter()
            .enumerate()
            .map(|(i, tokens)| {
                serde_json::to_string(&TagRequest {
                    id: first + i as u64,
                    tokens: tokens.clone(),
                })
            })
            .collect::<std::result::Result<_, _>>()?;
        let payload = |pending: &[Option<TagResponse>]| {
            let mut buf = String::new();
            for (line, slot) in lines.iter().zip(pending) {
                if slot.is_none() {
                    buf.push_str(line);
                    buf.push('\n');
                }
            }
            buf
        };

        let mut out: Vec<Option<TagResponse>> = vec![None; sentences.len()];
        let mut remaining = sentences.len();
        let mut retried = false;
        self.send(&payload(&out))?;
        while remaining > 0 {
            let line = match self.recv_nonblank() {
                Ok(line) => line,
                Err(RecvOutcome::Failed(e)) => return Err(e),
                Err(RecvOutcome::TimedOut) if !retried => {
                    log::warn!("backend timed out; resending {remaining} pending requests");
                    retried = true;
                    let resend = payload(&out);
                    self.send(&resend)?;
                    continue;
                }
                Err(RecvOutcome::TimedOut) => return Err(Error::Timeout(self.timeout)),
            };
            let resp = parse_response(&line, &self.aliases)?;
            if resp.id < first {
                // Late answer to an earlier, already-resent batch.
                continue;
            }
            let slot = (resp.id - first) as usize;
            if slot >= sentences.len() {
                return Err(Error::protocol(Some(resp.id), "response id was never requested"));
            }
            validate_response(&resp, sentences[slot].len())?;
            if out[slot].is_none() {
                out[slot] = Some(resp);
                remaining -= 1;
            } else if !retried {
                return Err(Error::protocol(Some(resp.id), "duplicate response"));
            }
        }
        Ok(out.into_iter().map(|r| r.expect("filled")).collect())
    }
}

impl Drop for ExternalBackend {
    fn drop(&mut self) {
        if let Some(mut child) = self.child.take() {
            // Closing stdin ends a well-behaved server's request loop.
            self.writer = Box::new(io::sink());
            for _ in 0..20 {
                if matches!(child.try_wait(), Ok(Some(_))) {
                    return;
                }
                thread::sleep(Duration::from_millis(10));
            }
            let _ = child.kill();
            let _ = child.wait();
        }
    }
}
