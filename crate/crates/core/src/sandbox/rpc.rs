//! Client side of the worker protocol: newline-delimited JSON over a pipe.
//!
//! ```text
//! worker  -> harness  {"type": "ready", "ready": true}
//! harness -> worker   {"type": "exec_request", "request_id": "1", "code": ..., "reset_before": false, "timeout": 20.0}
//! worker  -> harness  {"type": "tool_request", "request_id": "1.1", "tool": "inspect", "args": ["item_0a1b2c3d"]}
//! harness -> worker   {"type": "tool_response", "request_id": "1.1", "payload": "...", "error": null}
//! worker  -> harness  {"type": "exec_result", "request_id": "1", "success": true, "output": ..., ...}
//! harness -> worker   {"type": "shutdown"}
//! ```

use std::io::{BufRead, BufReader, Read, Write};
use std::process::{Child, Command, Stdio};
use std::sync::mpsc;
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{ExecRequest, ExecResult, Sandbox, SandboxError, ToolHost};

/// Extra time granted past the exec timeout before the worker is declared hung.
pub const GRACE: Duration = Duration::from_secs(5);

/// How long to wait for the `ready` handshake.
pub const STARTUP_TIMEOUT: Duration = Duration::from_secs(30);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Message {
    Ready {
        ready: bool,
    },
    ExecRequest {
        request_id: String,
        code: String,
        reset_before: bool,
        timeout: f64,
    },
    ToolRequest {
        request_id: String,
        tool: String,
        #[serde(default)]
        args: Vec<serde_json::Value>,
    },
    ToolResponse {
        request_id: String,
        payload: Option<String>,
        error: Option<String>,
    },
    ExecResult {
        request_id: String,
        success: bool,
        output: String,
        result: Option<String>,
        error: Option<String>,
        globals_manifest: Vec<String>,
    },
    Shutdown {},
}

pub trait Transport {
    fn send(&mut self, msg: &Message) -> Result<(), SandboxError>;

    /// Waits for the next message; `None` waits forever.
    fn recv(&mut self, timeout: Option<Duration>) -> Result<Message, SandboxError>;
}

/// Line-framed JSON over any reader/writer pair. A background thread reads
/// lines so that receives can time out.
pub struct LineTransport {
    writer: Box<dyn Write + Send>,
    lines: mpsc::Receiver<std::io::Result<String>>,
}

impl LineTransport {
    pub fn new<R, W>(reader: R, writer: W) -> Self
    where
        R: Read + Send + 'static,
        W: Write + Send + 'static,
    {
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            let mut reader = BufReader::new(reader);
            loop {
                let mut line = String::new();
                match reader.read_line(&mut line) {
                    Ok(0) => break,
                    Ok(_) => {
                        if tx.send(Ok(line)).is_err() {
                            break;
                        }
                    }
                    Err(e) => {
                        let _ = tx.send(Err(e));
                        break;
                    }
                }
            }
        });
        Self { writer: Box::new(writer), lines: rx }
    }
}

impl Transport for LineTransport {
    fn send(&mut self, msg: &Message) -> Result<(), SandboxError> {
        let mut line = serde_json::to_string(msg).map_err(|e| SandboxError::Protocol(e.to_string()))?;
        line.push('\n');
        self.writer
            .write_all(line.as_bytes())
            .and_then(|_| self.writer.flush())
            .map_err(|e| SandboxError::Unreachable(format!("write failed: {e}")))
    }

    fn recv(&mut self, timeout: Option<Duration>) -> Result<Message, SandboxError> {
        loop {
            let line = match timeout {
                Some(t) => self.lines.recv_timeout(t).map_err(|e| match e {
                    mpsc::RecvTimeoutError::Timeout => {
                        SandboxError::Unreachable("worker did not respond in time".into())
                    }
                    mpsc::RecvTimeoutError::Disconnected => {
                        SandboxError::Unreachable("worker closed its output".into())
                    }
                })?,
                None => self.lines.recv().map_err(|_| SandboxError::Unreachable("worker closed its output".into()))?,
            };
            let line = line.map_err(|e| SandboxError::Unreachable(format!("read failed: {e}")))?;
            if line.trim().is_empty() {
                continue;
            }
            return serde_json::from_str(&line)
                .map_err(|e| SandboxError::Protocol(format!("bad message {:?}: {e}", line.trim_end())));
        }
    }
}

/// [`Sandbox`] backed by a worker speaking [`Message`]s.
pub struct RpcSandbox<T: Transport> {
    transport: T,
    child: Option<Child>,
    next_id: u64,
    closed: bool,
}

impl RpcSandbox<LineTransport> {
    /// Spawns `argv` and waits for its `ready` handshake.
    pub fn spawn(argv: &[String]) -> Result<Self, SandboxError> {
        let (prog, rest) = argv.split_first().ok_or_else(|| SandboxError::Spawn("empty worker command".into()))?;
        let mut child = Command::new(prog)
            .args(rest)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| SandboxError::Spawn(format!("{prog}: {e}")))?;
        let stdin = child.stdin.take().ok_or_else(|| SandboxError::Spawn("no stdin pipe".into()))?;
        let stdout = child.stdout.take().ok_or_else(|| SandboxError::Spawn("no stdout pipe".into()))?;
        let mut sb =
            RpcSandbox { transport: LineTransport::new(stdout, stdin), child: Some(child), next_id: 0, closed: false };
        match sb.transport.recv(Some(STARTUP_TIMEOUT)) {
            Ok(Message::Ready { ready: true }) => Ok(sb),
            Ok(other) => {
                sb.kill();
                Err(SandboxError::Spawn(format!("expected ready handshake, got {other:?}")))
            }
            Err(e) => {
                sb.kill();
                Err(SandboxError::Spawn(e.to_string()))
            }
        }
    }
}

impl<T: Transport> RpcSandbox<T> {
    /// Wraps an already-connected transport whose handshake has been consumed.
    pub fn from_transport(transport: T) -> Self {
        Self { transport, child: None, next_id: 0, closed: false }
    }

    /// Reads the `ready` handshake from a fresh transport.
    pub fn connect(mut transport: T, timeout: Option<Duration>) -> Result<Self, SandboxError> {
        match transport.recv(timeout)? {
            Message::Ready { ready: true } => Ok(Self::from_transport(transport)),
            other => Err(SandboxError::Protocol(format!("expected ready handshake, got {other:?}"))),
        }
    }

    fn kill(&mut self) {
        if let Some(mut c) = self.child.take() {
            let _ = c.kill();
            let _ = c.wait();
        }
    }

    fn fail(&mut self, e: SandboxError) -> SandboxError {
        self.closed = true;
        self.kill();
        e
    }
}

impl<T: Transport> Sandbox for RpcSandbox<T> {
    fn exec(&mut self, req: &ExecRequest, host: &mut dyn ToolHost) -> Result<ExecResult, SandboxError> {
        if self.closed {
            return Err(SandboxError::Unreachable("worker was shut down".into()));
        }
        self.next_id += 1;
        let id = self.next_id.to_string();
        let msg = Message::ExecRequest {
            request_id: id.clone(),
            code: req.code.clone(),
            reset_before: req.reset_before,
            timeout: req.timeout_s,
        };
        if let Err(e) = self.transport.send(&msg) {
            return Err(self.fail(e));
        }
        let wait = Duration::try_from_secs_f64(req.timeout_s).ok().map(|d| d + GRACE);
        loop {
            let msg = match self.transport.recv(wait) {
                Ok(m) => m,
                Err(e) => return Err(self.fail(e)),
            };
            match msg {
                Message::ToolRequest { request_id, tool, args } => {
                    let (payload, error) = match host.call_tool(&tool, &args) {
                        Ok(p) => (p, None),
                        Err(e) => (None, Some(e)),
                    };
                    if let Err(e) = self.transport.send(&Message::ToolResponse { request_id, payload, error }) {
                        return Err(self.fail(e));
                    }
                }
                Message::ExecResult { request_id, success, output, result, error, globals_manifest } => {
                    if request_id != id {
                        let e = SandboxError::Protocol(format!("exec_result for {request_id}, expected {id}"));
                        return Err(self.fail(e));
                    }
                    return Ok(ExecResult { success, output, result, error, globals_manifest });
                }
                other => {
                    let e = SandboxError::Protocol(format!("unexpected message during exec: {other:?}"));
                    return Err(self.fail(e));
                }
            }
        }
    }

    fn shutdown(&mut self) {
        if self.closed {
            return;
        }
        self.closed = true;
        let _ = self.transport.send(&Message::Shutdown {});
        if let Some(mut c) = self.child.take() {
            // Give the worker a moment to exit on its own.
            for _ in 0..50 {
                if let Ok(Some(_)) = c.try_wait() {
                    return;
                }
                thread::sleep(Duration::from_millis(10));
            }
            let _ = c.kill();
            let _ = c.wait();
        }
    }
}

impl<T: Transport> Drop for RpcSandbox<T> {
    fn drop(&mut self) {
        self.shutdown();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::VecDeque;

    /// Replays canned worker messages and records what the client sent.
    struct Scripted {
        inbox: VecDeque<Message>,
        sent: Vec<Message>,
    }

    impl Transport for Scripted {
        fn send(&mut self, msg: &Message) -> Result<(), SandboxError> {
            self.sent.push(msg.clone());
            Ok(())
        }

        fn recv(&mut self, _timeout: Option<Duration>) -> Result<Message, SandboxError> {
            self.inbox.pop_front().ok_or_else(|| SandboxError::Unreachable("eof".into()))
        }
    }

    struct Host;

    impl ToolHost for Host {
        fn call_tool(&mut self, tool: &str, _args: &[serde_json::Value]) -> Result<Option<String>, String> {
            match tool {
                "take_item" => Err("item 'x' belongs to a disallowed class".into()),
                _ => Ok(Some("[]".into())),
            }
        }
    }

    fn result(id: &str) -> Message {
        Message::ExecResult {
            request_id: id.into(),
            success: true,
            output: "ok\n".into(),
            result: None,
            error: None,
            globals_manifest: vec!["x".into()],
        }
    }

    #[test]
    fn wire_format_is_tagged() {
        let m = Message::Ready { ready: true };
        assert_eq!(serde_json::to_string(&m).unwrap(), r#"{"type":"ready","ready":true}"#);
        let back: Message = serde_json::from_str(r#"{"type":"shutdown"}"#).unwrap();
        assert_eq!(back, Message::Shutdown {});
        let tr: Message =
            serde_json::from_str(r#"{"type":"tool_request","request_id":"1.1","tool":"list_items"}"#).unwrap();
        assert!(matches!(tr, Message::ToolRequest { ref args, .. } if args.is_empty()));
    }

    #[test]
    fn tool_errors_round_trip_verbatim() {
        let inbox = VecDeque::from([
            Message::ToolRequest { request_id: "1.1".into(), tool: "take_item".into(), args: vec!["x".into()] },
            result("1"),
        ]);
        let mut sb = RpcSandbox::from_transport(Scripted { inbox, sent: Vec::new() });
        let r = sb.exec(&ExecRequest::new("take_item('x')", true), &mut Host).unwrap();
        assert_eq!(r.output, "ok\n");
        let sent = &sb.transport.sent;
        assert!(matches!(&sent[0], Message::ExecRequest { reset_before: true, .. }));
        assert_eq!(
            sent[1],
            Message::ToolResponse {
                request_id: "1.1".into(),
                payload: None,
                error: Some("item 'x' belongs to a disallowed class".into())
            }
        );
    }

    #[test]
    fn mismatched_ids_and_eof_are_errors() {
        let mut sb = RpcSandbox::from_transport(Scripted { inbox: VecDeque::from([result("9")]), sent: Vec::new() });
        assert!(matches!(sb.exec(&ExecRequest::new("1", false), &mut Host), Err(SandboxError::Protocol(_))));
        assert!(sb.exec(&ExecRequest::new("1", false), &mut Host).is_err());

        let mut sb = RpcSandbox::from_transport(Scripted { inbox: VecDeque::new(), sent: Vec::new() });
        assert!(matches!(sb.exec(&ExecRequest::new("1", false), &mut Host), Err(SandboxError::Unreachable(_))));
    }

    #[test]
    fn connect_requires_handshake() {
        let t = Scripted { inbox: VecDeque::from([result("1")]), sent: Vec::new() };
        assert!(RpcSandbox::connect(t, None).is_err());
        let t = Scripted { inbox: VecDeque::from([Message::Ready { ready: true }]), sent: Vec::new() };
        assert!(RpcSandbox::connect(t, None).is_ok());
    }

    #[test]
    fn shutdown_twice_sends_once() {
        let mut sb = RpcSandbox::from_transport(Scripted { inbox: VecDeque::new(), sent: Vec::new() });
        sb.shutdown();
        sb.shutdown();
        assert_eq!(sb.transport.sent, vec![Message::Shutdown {}]);
    }
}
