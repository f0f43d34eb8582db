//! Transports between the server and one agent.

use std::io::{BufRead, BufReader, Write};
use std::net::TcpStream;
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::thread;
use std::time::Duration;

use thiserror::Error;

use crate::agent::Agent;
use crate::protocol::{self, Packet};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LinkError {
    #[error("agent did not answer in time")]
    Timeout,
    #[error("connection closed")]
    Closed,
    #[error("i/o error: {0}")]
    Io(String),
}

/// Sends a request and, when the request expects one, waits for the reply line.
pub trait AgentLink: Send {
    fn exchange(&mut self, packet: &Packet, deadline: Duration) -> Result<Option<String>, LinkError>;
}

/// An in-process agent. Requests still pass through the wire encoding.
pub struct LocalLink {
    agent: Agent,
}

impl LocalLink {
    pub fn new(agent: Agent) -> Self {
        LocalLink { agent }
    }

    pub fn agent(&self) -> &Agent {
        &self.agent
    }
}

impl AgentLink for LocalLink {
    fn exchange(&mut self, packet: &Packet, _deadline: Duration) -> Result<Option<String>, LinkError> {
        Ok(self.agent.handle_line(&protocol::encode_packet(packet)))
    }
}

/// A socket to a remote agent. A reader thread feeds reply lines into a
/// channel so each request can wait with a deadline; replies that arrive
/// after their deadline are discarded before the next request.
pub struct TcpLink {
    writer: TcpStream,
    replies: Receiver<String>,
}

impl TcpLink {
    pub fn new(stream: TcpStream) -> std::io::Result<Self> {
        stream.set_nodelay(true)?;
        let reader = BufReader::new(stream.try_clone()?);
        let (tx, replies) = mpsc::channel();
        thread::spawn(move || {
            for line in reader.lines() {
                let Ok(line) = line else { break };
                if tx.send(line).is_err() {
                    break;
                }
            }
        });
        Ok(TcpLink { writer: stream, replies })
    }
}

impl AgentLink for TcpLink {
    fn exchange(&mut self, packet: &Packet, deadline: Duration) -> Result<Option<String>, LinkError> {
        while self.replies.try_recv().is_ok() {}
        self.writer.write_all(protocol::encode_packet(packet).as_bytes()).and_then(|_| self.writer.flush()).map_err(
            |e| match e.kind() {
                std::io::ErrorKind::BrokenPipe | std::io::ErrorKind::ConnectionReset => LinkError::Closed,
                _ => LinkError::Io(e.to_string()),
            },
        )?;
        if !packet.request.expects_reply() {
            return Ok(None);
        }
        match self.replies.recv_timeout(deadline) {
            Ok(line) => Ok(Some(line)),
            Err(RecvTimeoutError::Timeout) => Err(LinkError::Timeout),
            Err(RecvTimeoutError::Disconnected) => Err(LinkError::Closed),
        }
    }
}

impl Drop for TcpLink {
    fn drop(&mut self) {
        let _ = self.writer.shutdown(std::net::Shutdown::Both);
    }
}
