use std::fmt;
use std::io::{Read, Write};
use std::net::{TcpStream, ToSocketAddrs};
#[cfg(unix)]
use std::os::unix::net::UnixStream;
#[cfg(unix)]
use std::path::PathBuf;
use std::str::FromStr;
use std::sync::Mutex;
use std::time::Duration;

use super::prior::{PriorScore, StepContext};
use super::protocol::{decode_response, encode_request, read_frame, write_frame, ScoreResponse, MAX_FRAME_BYTES};
use crate::error::{Error, Result};
use crate::grid::Image;

/// Address of a score service.
///
/// `tcp://host:port` (or bare `host:port`) and `unix:/path` carry
/// length-prefixed frames; `http://host:port[/path]` posts to `/score` unless a
/// path is given.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Endpoint {
    Tcp(String),
    #[cfg(unix)]
    Unix(PathBuf),
    Http(String),
}

impl FromStr for Endpoint {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if let Some(rest) = s.strip_prefix("tcp://") {
            return Ok(Endpoint::Tcp(rest.to_string()));
        }
        if let Some(rest) = s.strip_prefix("unix:") {
            #[cfg(unix)]
            {
                let path = rest.strip_prefix("//").unwrap_or(rest);
                return Ok(Endpoint::Unix(PathBuf::from(path)));
            }
            #[cfg(not(unix))]
            return Err(Error::config(format!("unix sockets are unavailable here: {rest}")));
        }
        if let Some(rest) = s.strip_prefix("http://") {
            let url = if rest.contains('/') {
                s.to_string()
            } else {
                format!("{s}/score")
            };
            return Ok(Endpoint::Http(url));
        }
        if s.contains("://") {
            return Err(Error::config(format!("unsupported score service scheme in {s}")));
        }
        if s.rsplit_once(':').is_some_and(|(_, port)| port.parse::<u16>().is_ok()) {
            return Ok(Endpoint::Tcp(s.to_string()));
        }
        Err(Error::config(format!("cannot parse score service address {s}")))
    }
}

impl fmt::Display for Endpoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Endpoint::Tcp(addr) => write!(f, "tcp://{addr}"),
            #[cfg(unix)]
            Endpoint::Unix(path) => write!(f, "unix:{}", path.display()),
            Endpoint::Http(url) => f.write_str(url),
        }
    }
}

trait Duplex: Read + Write + Send {}
impl<T: Read + Write + Send> Duplex for T {}

/// Prior whose score is computed by an external service.
///
/// One connection is kept open and requests are issued one at a time, so the
/// prior declares itself serial.
pub struct RemotePrior {
    endpoint: Endpoint,
    timeout: Duration,
    connection: Mutex<Option<Box<dyn Duplex>>>,
    agent: Option<ureq::Agent>,
}

impl fmt::Debug for RemotePrior {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RemotePrior")
            .field("endpoint", &self.endpoint)
            .field("timeout", &self.timeout)
            .finish()
    }
}

impl RemotePrior {
    pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(30);

    pub fn new(endpoint: Endpoint, timeout: Duration) -> Self {
        let agent = matches!(endpoint, Endpoint::Http(_)).then(|| {
            ureq::Agent::config_builder()
                .timeout_global(Some(timeout))
                .http_status_as_error(false)
                .build()
                .into()
        });
        RemotePrior {
            endpoint,
            timeout,
            connection: Mutex::new(None),
            agent,
        }
    }

    pub fn endpoint(&self) -> &Endpoint {
        &self.endpoint
    }

    /// Opens the connection eagerly so that an unreachable service is reported
    /// before any work starts. HTTP endpoints are contacted lazily.
    pub fn connect(&self) -> Result<()> {
        if matches!(self.endpoint, Endpoint::Http(_)) {
            return Ok(());
        }
        let mut guard = self.lock()?;
        if guard.is_none() {
            *guard = Some(self.open()?);
        }
        Ok(())
    }

    fn lock(&self) -> Result<std::sync::MutexGuard<'_, Option<Box<dyn Duplex>>>> {
        self.connection
            .lock()
            .map_err(|_| Error::Remote("connection state poisoned by an earlier panic".into()))
    }

    fn unreachable(&self, e: impl fmt::Display) -> Error {
        Error::Remote(format!("cannot reach score service at {}: {e}", self.endpoint))
    }

    fn open(&self) -> Result<Box<dyn Duplex>> {
        match &self.endpoint {
            Endpoint::Tcp(addr) => {
                let addrs: Vec<_> = addr.to_socket_addrs().map_err(|e| self.unreachable(e))?.collect();
                let mut last = None;
                for a in addrs {
                    match TcpStream::connect_timeout(&a, self.timeout) {
                        Ok(stream) => {
                            stream.set_read_timeout(Some(self.timeout))?;
                            stream.set_write_timeout(Some(self.timeout))?;
                            stream.set_nodelay(true)?;
                            return Ok(Box::new(stream));
                        }
                        Err(e) => last = Some(e),
                    }
                }
                Err(self.unreachable(last.map_or_else(|| "no address resolved".to_string(), |e| e.to_string())))
            }
            #[cfg(unix)]
            Endpoint::Unix(path) => {
                let stream = UnixStream::connect(path).map_err(|e| self.unreachable(e))?;
                stream.set_read_timeout(Some(self.timeout))?;
                stream.set_write_timeout(Some(self.timeout))?;
                Ok(Box::new(stream))
            }
            Endpoint::Http(_) => unreachable!("HTTP endpoints do not hold a stream"),
        }
    }

    fn exchange_framed(&self, payload: &[u8]) -> Result<Vec<u8>> {
        let mut guard = self.lock()?;
        // A stale connection gets one fresh retry; the service is stateless.
        for attempt in 0..2 {
            if guard.is_none() {
                *guard = Some(self.open()?);
            }
            let conn = guard.as_mut().expect("connection just opened");
            let result = write_frame(conn.as_mut(), payload).and_then(|_| read_frame(conn.as_mut()));
            match result {
                Ok(reply) => return Ok(reply),
                Err(Error::Io(e)) => {
                    *guard = None;
                    if attempt == 1 {
                        return Err(Error::Remote(format!("score service at {} failed: {e}", self.endpoint)));
                    }
                }
                Err(other) => {
                    *guard = None;
                    return Err(other);
                }
            }
        }
        unreachable!("loop returns on its second attempt")
    }

    fn exchange_http(&self, url: &str, payload: &[u8]) -> Result<Vec<u8>> {
        let agent = self.agent.as_ref().expect("HTTP endpoints carry an agent");
        let mut response = agent
            .post(url)
            .content_type("application/octet-stream")
            .send(payload)
            .map_err(|e| self.unreachable(e))?;
        let status = response.status();
        if !status.is_success() {
            return Err(Error::Remote(format!("score service at {url} answered HTTP {status}")));
        }
        response
            .body_mut()
            .with_config()
            .limit(u64::from(MAX_FRAME_BYTES))
            .read_to_vec()
            .map_err(|e| Error::Remote(format!("reading reply from {url}: {e}")))
    }
}

impl PriorScore for RemotePrior {
    fn score(&self, state: &Image, step: &StepContext) -> Result<Image> {
        let payload = encode_request(step.k, state)?;
        let reply = match &self.endpoint {
            Endpoint::Http(url) => self.exchange_http(url, &payload)?,
            _ => self.exchange_framed(&payload)?,
        };
        let response = decode_response(&reply, state.width(), state.height())
            .map_err(|e| Error::Remote(format!("malformed reply from {}: {e}", self.endpoint)))?;
        match response {
            ScoreResponse::Score(image) if image.is_finite() => Ok(image),
            ScoreResponse::Score(_) => Err(Error::Remote(format!("{} returned non-finite scores", self.endpoint))),
            ScoreResponse::Failure { status, message } => Err(Error::Remote(format!(
                "{} rejected step {}: status {status}: {message}",
                self.endpoint, step.k
            ))),
        }
    }

    fn is_serial(&self) -> bool {
        true
    }

    fn describe(&self) -> String {
        format!("remote:{}", self.endpoint)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_endpoints() {
        assert_eq!(
            "tcp://127.0.0.1:9".parse::<Endpoint>().unwrap(),
            Endpoint::Tcp("127.0.0.1:9".into())
        );
        assert_eq!(
            "localhost:7000".parse::<Endpoint>().unwrap(),
            Endpoint::Tcp("localhost:7000".into())
        );
        assert_eq!(
            "http://127.0.0.1:8000".parse::<Endpoint>().unwrap(),
            Endpoint::Http("http://127.0.0.1:8000/score".into())
        );
        assert_eq!(
            "http://h:1/v1/score".parse::<Endpoint>().unwrap(),
            Endpoint::Http("http://h:1/v1/score".into())
        );
        #[cfg(unix)]
        assert_eq!(
            "unix:///tmp/s.sock".parse::<Endpoint>().unwrap(),
            Endpoint::Unix(PathBuf::from("/tmp/s.sock"))
        );
        assert!("ftp://x".parse::<Endpoint>().is_err());
        assert!("nonsense".parse::<Endpoint>().is_err());
    }

    #[test]
    fn unreachable_service_is_reported() {
        let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        drop(listener);
        let prior = RemotePrior::new(Endpoint::Tcp(addr.to_string()), Duration::from_secs(2));
        match prior.connect() {
            Err(Error::Remote(msg)) => assert!(msg.contains("cannot reach")),
            other => panic!("unexpected {other:?}"),
        }
    }
}
