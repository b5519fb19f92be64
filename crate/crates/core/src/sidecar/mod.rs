//! Client for an out-of-process model server speaking newline-delimited JSON.
//!
//! The server hosts the real noise predictor, captioner and embedder; this
//! side validates every response (ids, shapes, unit norms) so a misbehaving
//! server surfaces as a backend error instead of corrupt gradients.

pub mod wire;

use std::cell::RefCell;
use std::io::{BufRead, BufReader, Write};
use std::process::{Child, Command, Stdio};
use std::rc::Rc;

use serde::de::DeserializeOwned;
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::eval::Embedder;
use crate::guidance::{Captioner, NoisePredictor, NoiseQuery};
use crate::img::Image;
use crate::tensor::Tensor;
use wire::{Hello, Kind, LatentGeometry, Request, Response, WireTensor, PROTOCOL_VERSION};

/// Tolerance on the norm of returned embeddings.
pub const UNIT_NORM_TOL: f64 = 1e-4;

fn backend(msg: impl Into<String>) -> Error {
    Error::Backend(msg.into())
}

/// One session with a server. Requests are answered strictly in order.
pub struct Connection {
    reader: Box<dyn BufRead>,
    writer: Box<dyn Write>,
    child: Option<Child>,
    next_id: u64,
    hello: Hello,
}

impl Connection {
    /// Performs the handshake over an established stream pair.
    pub fn handshake(reader: Box<dyn BufRead>, writer: Box<dyn Write>) -> Result<Self> {
        let mut conn = Self {
            reader,
            writer,
            child: None,
            next_id: 0,
            hello: Hello {
                protocol: PROTOCOL_VERSION,
                latent: LatentGeometry {
                    channels: 0,
                    downscale: 1,
                },
                deterministic: false,
                server: String::new(),
            },
        };
        let hello: Hello = conn.call(Kind::Hello, json!({ "protocol": PROTOCOL_VERSION }))?;
        if hello.protocol != PROTOCOL_VERSION {
            return Err(backend(format!(
                "server speaks protocol {}, client speaks {PROTOCOL_VERSION}",
                hello.protocol
            )));
        }
        if hello.latent.channels == 0 || hello.latent.downscale == 0 {
            return Err(backend(format!("server declared an empty latent geometry {:?}", hello.latent)));
        }
        conn.hello = hello;
        Ok(conn)
    }

    /// Connects to `host:port`, `unix:<path>`, or spawns `exec:<command line>`
    /// and talks to it over its stdin/stdout.
    pub fn connect(endpoint: &str) -> Result<Self> {
        if let Some(cmd) = endpoint.strip_prefix("exec:") {
            let mut parts = cmd.split_whitespace();
            let program = parts.next().ok_or_else(|| Error::Config("empty sidecar command".into()))?;
            let mut child = Command::new(program)
                .args(parts)
                .stdin(Stdio::piped())
                .stdout(Stdio::piped())
                .stderr(Stdio::inherit())
                .spawn()
                .map_err(|e| backend(format!("cannot start sidecar {program:?}: {e}")))?;
            let stdin = child.stdin.take().expect("piped stdin");
            let stdout = child.stdout.take().expect("piped stdout");
            let mut conn = Self::handshake(Box::new(BufReader::new(stdout)), Box::new(stdin))?;
            conn.child = Some(child);
            return Ok(conn);
        }
        #[cfg(unix)]
        if let Some(path) = endpoint.strip_prefix("unix:") {
            let stream = std::os::unix::net::UnixStream::connect(path)
                .map_err(|e| backend(format!("cannot connect to {path}: {e}")))?;
            let read = stream.try_clone().map_err(|e| backend(e.to_string()))?;
            return Self::handshake(Box::new(BufReader::new(read)), Box::new(stream));
        }
        let stream =
            std::net::TcpStream::connect(endpoint).map_err(|e| backend(format!("cannot connect to {endpoint}: {e}")))?;
        let read = stream.try_clone().map_err(|e| backend(e.to_string()))?;
        Self::handshake(Box::new(BufReader::new(read)), Box::new(stream))
    }

    pub fn hello(&self) -> &Hello {
        &self.hello
    }

    /// Sends one request and returns its payload; wire errors become
    /// [`Error::Backend`] carrying the server's code and message.
    pub fn request(&mut self, kind: Kind, payload: Value) -> Result<Value> {
        let id = self.next_id;
        self.next_id += 1;
        let mut line = serde_json::to_string(&Request { id, kind, payload }).expect("requests serialize");
        line.push('\n');
        self.writer
            .write_all(line.as_bytes())
            .and_then(|_| self.writer.flush())
            .map_err(|e| backend(format!("sidecar write failed: {e}")))?;
        let mut reply = String::new();
        let n = self
            .reader
            .read_line(&mut reply)
            .map_err(|e| backend(format!("sidecar read failed: {e}")))?;
        if n == 0 {
            return Err(backend("sidecar closed the connection"));
        }
        let resp: Response =
            serde_json::from_str(&reply).map_err(|e| backend(format!("malformed sidecar response: {e}")))?;
        if resp.id != id {
            return Err(backend(format!("response id {} does not match request id {id}", resp.id)));
        }
        if let Some(err) = resp.error {
            return Err(backend(format!("sidecar {:?} failed [{}]: {}", kind, err.code, err.message)));
        }
        if resp.kind.is_some_and(|k| k != kind) {
            return Err(backend(format!("response kind {:?} does not match request {kind:?}", resp.kind)));
        }
        Ok(resp.payload)
    }

    fn call<T: DeserializeOwned>(&mut self, kind: Kind, payload: Value) -> Result<T> {
        let v = self.request(kind, payload)?;
        serde_json::from_value(v).map_err(|e| backend(format!("unexpected {kind:?} payload: {e}")))
    }

    fn tensor_field(&mut self, kind: Kind, payload: Value, field: &str) -> Result<Tensor> {
        let mut v = self.request(kind, payload)?;
        let t: WireTensor = serde_json::from_value(v[field].take())
            .map_err(|e| backend(format!("{kind:?} response lacks tensor {field:?}: {e}")))?;
        t.unpack()
    }

    pub fn ping(&mut self) -> Result<()> {
        self.request(Kind::Ping, json!({})).map(|_| ())
    }

    pub fn encode(&mut self, image: &Image) -> Result<Tensor> {
        let expected = self.hello.latent.latent_shape(image.height, image.width)?;
        let latent = self.tensor_field(
            Kind::Encode,
            json!({ "image": WireTensor::pack_image(image) }),
            "latent",
        )?;
        if latent.shape != expected {
            return Err(Error::Shape {
                expected,
                actual: latent.shape,
            });
        }
        Ok(latent)
    }

    pub fn predict_noise(&mut self, q: &NoiseQuery) -> Result<Tensor> {
        let noise = self.tensor_field(
            Kind::PredictNoise,
            json!({
                "latent": WireTensor::pack(q.latent),
                "text": q.prompt,
                "t": q.t,
                "guidance_scale": q.guidance_scale,
            }),
            "noise",
        )?;
        q.latent.check_shape(&noise)?;
        Ok(noise)
    }

    pub fn latent_grad_to_image(&mut self, grad: &Tensor, image: &Image) -> Result<Image> {
        let g = self.tensor_field(
            Kind::LatentGradToImage,
            json!({ "grad": WireTensor::pack(grad), "image": WireTensor::pack_image(image) }),
            "grad",
        )?;
        Tensor::from_image(image).check_shape(&g)?;
        g.to_image()
    }

    pub fn caption(&mut self, image: &Image) -> Result<String> {
        let v = self.request(Kind::Caption, json!({ "image": WireTensor::pack_image(image) }))?;
        v["text"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| backend("caption response lacks \"text\""))
    }

    fn embedding(&mut self, kind: Kind, payload: Value) -> Result<Vec<f64>> {
        let t = self.tensor_field(kind, payload, "embedding")?;
        let n = t.norm();
        if t.shape.len() != 1 || (n - 1.0).abs() > UNIT_NORM_TOL {
            return Err(backend(format!(
                "{kind:?} returned shape {:?} with norm {n}; expected a unit vector",
                t.shape
            )));
        }
        Ok(t.data)
    }

    pub fn embed_text(&mut self, text: &str) -> Result<Vec<f64>> {
        self.embedding(Kind::EmbedText, json!({ "text": text }))
    }

    pub fn embed_image(&mut self, image: &Image) -> Result<Vec<f64>> {
        self.embedding(Kind::EmbedImage, json!({ "image": WireTensor::pack_image(image) }))
    }
}

impl Drop for Connection {
    fn drop(&mut self) {
        if let Some(child) = &mut self.child {
            // closing stdin asks the server to exit; do not wait on a hung one
            self.writer = Box::new(std::io::sink());
            let _ = child.kill();
            let _ = child.wait();
        }
    }
}

/// Shared handle to one connection, usable as predictor, captioner and
/// embedder at the same time.
#[derive(Clone)]
pub struct Sidecar(Rc<RefCell<Connection>>);

impl Sidecar {
    pub fn new(conn: Connection) -> Self {
        Self(Rc::new(RefCell::new(conn)))
    }

    pub fn connect(endpoint: &str) -> Result<Self> {
        Connection::connect(endpoint).map(Self::new)
    }

    pub fn hello(&self) -> Hello {
        self.0.borrow().hello().clone()
    }

    pub fn ping(&self) -> Result<()> {
        self.0.borrow_mut().ping()
    }
}

impl NoisePredictor for Sidecar {
    fn encode(&mut self, image: &Image) -> Result<Tensor> {
        self.0.borrow_mut().encode(image)
    }

    fn predict_noise(&mut self, query: &NoiseQuery) -> Result<Tensor> {
        self.0.borrow_mut().predict_noise(query)
    }

    fn latent_grad_to_image(&mut self, grad: &Tensor, image: &Image) -> Result<Image> {
        self.0.borrow_mut().latent_grad_to_image(grad, image)
    }
}

impl Captioner for Sidecar {
    fn caption(&mut self, image: &Image) -> Result<String> {
        self.0.borrow_mut().caption(image)
    }
}

impl Embedder for Sidecar {
    fn embed_text(&mut self, text: &str) -> Result<Vec<f64>> {
        self.0.borrow_mut().embed_text(text)
    }

    fn embed_image(&mut self, image: &Image) -> Result<Vec<f64>> {
        self.0.borrow_mut().embed_image(image)
    }
}
