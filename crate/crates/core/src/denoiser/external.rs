use std::io::{Read, Write};
use std::net::TcpStream;
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::time::Duration;

use super::protocol::{write_message, Request, Response};
use super::{ConditionImage, Denoiser, DenoiserError};
use crate::image::Image;

pub trait Stream: Read + Write + Send {}

impl<T: Read + Write + Send> Stream for T {}

/// Client for a remote ε-model speaking protocol v1.
///
/// One request is in flight at a time; concurrent samplers need separate
/// clients.
pub struct ExternalDenoiser {
    stream: Box<dyn Stream>,
    // a failed exchange leaves the stream at an unknown offset
    broken: bool,
}

impl std::fmt::Debug for ExternalDenoiser {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ExternalDenoiser")
            .field("broken", &self.broken)
            .finish_non_exhaustive()
    }
}

impl ExternalDenoiser {
    pub fn from_stream<S: Stream + 'static>(stream: S) -> Self {
        Self {
            stream: Box::new(stream),
            broken: false,
        }
    }

    /// Connects to `endpoint`: `unix:/path/to.sock`, `tcp://host:port` or
    /// a bare `host:port`. `timeout` bounds every socket read and write.
    pub fn connect(endpoint: &str, timeout: Option<Duration>) -> Result<Self, DenoiserError> {
        #[cfg(unix)]
        if let Some(path) = endpoint.strip_prefix("unix:") {
            let s = std::os::unix::net::UnixStream::connect(path)?;
            s.set_read_timeout(timeout)?;
            s.set_write_timeout(timeout)?;
            return Ok(Self::from_stream(s));
        }
        let addr = endpoint.strip_prefix("tcp://").unwrap_or(endpoint);
        let s = TcpStream::connect(addr)?;
        s.set_nodelay(true)?;
        s.set_read_timeout(timeout)?;
        s.set_write_timeout(timeout)?;
        Ok(Self::from_stream(s))
    }

    /// Launches `program` and talks to it over its standard streams.
    pub fn spawn(program: &str, args: &[String]) -> Result<Self, DenoiserError> {
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .spawn()?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        Ok(Self::from_stream(ProcessStream {
            child,
            stdin,
            stdout,
        }))
    }

    fn exchange(&mut self, request: &Request) -> Result<Vec<f32>, DenoiserError> {
        write_message(&mut self.stream, &request.encode())?;
        match Response::read_from(&mut self.stream, request.pixel_count())? {
            Response::Ok(eps) => Ok(eps),
            Response::Error(msg) => Err(DenoiserError::Remote(msg)),
        }
    }
}

impl Denoiser for ExternalDenoiser {
    fn predict_eps(
        &mut self,
        x_t: &Image,
        t: usize,
        condition: Option<&ConditionImage>,
    ) -> Result<Image, DenoiserError> {
        if self.broken {
            return Err(DenoiserError::Connection(std::io::Error::new(
                std::io::ErrorKind::NotConnected,
                "stream unusable after an earlier failure",
            )));
        }
        if let Some(c) = condition {
            if c.image().shape() != x_t.shape() {
                return Err(DenoiserError::ShapeMismatch {
                    expected: format!("{}x{} condition", x_t.height(), x_t.width()),
                    found: format!("{}x{}", c.image().height(), c.image().width()),
                });
            }
        }
        let request = Request {
            t: t as u32,
            height: x_t.height() as u32,
            width: x_t.width() as u32,
            x_t: to_f32(x_t),
            condition: condition.map(|c| to_f32(c.image())),
        };
        match self.exchange(&request) {
            Ok(eps) => Ok(x_t.like(eps.into_iter().map(f64::from).collect())),
            Err(e) => {
                if !matches!(e, DenoiserError::Remote(_)) {
                    self.broken = true;
                }
                Err(e)
            }
        }
    }
}

fn to_f32(img: &Image) -> Vec<f32> {
    img.pixels().iter().map(|&v| v as f32).collect()
}

/// Standard streams of a child process joined into one duplex stream.
pub struct ProcessStream {
    child: Child,
    stdin: ChildStdin,
    stdout: ChildStdout,
}

impl Read for ProcessStream {
    fn read(&mut self, buf: &mut [u8]) -> std::io::Result<usize> {
        self.stdout.read(buf)
    }
}

impl Write for ProcessStream {
    fn write(&mut self, buf: &[u8]) -> std::io::Result<usize> {
        self.stdin.write(buf)
    }

    fn flush(&mut self) -> std::io::Result<()> {
        self.stdin.flush()
    }
}

impl Drop for ProcessStream {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

/// Answers protocol requests on `stream` with `model` until the peer closes.
///
/// A malformed request gets a status-1 response and ends the session, since
/// the stream position can no longer be trusted. Model failures are
/// reported per request without closing.
pub fn serve<S, F>(stream: &mut S, mut model: F) -> Result<(), DenoiserError>
where
    S: Read + Write,
    F: FnMut(&Request) -> Result<Vec<f32>, String>,
{
    loop {
        let request = match Request::read_from(stream) {
            Ok(Some(r)) => r,
            Ok(None) => return Ok(()),
            Err(e @ DenoiserError::Protocol { .. }) => {
                write_message(stream, &Response::Error(e.to_string()).encode())?;
                return Err(e);
            }
            Err(e) => return Err(e),
        };
        let response = match model(&request) {
            Ok(eps) if eps.len() == request.pixel_count() => Response::Ok(eps),
            Ok(eps) => Response::Error(format!(
                "model produced {} values for {} pixels",
                eps.len(),
                request.pixel_count()
            )),
            Err(msg) => Response::Error(msg),
        };
        write_message(stream, &response.encode())?;
    }
}
