//! Process-boundary adapter for a neural generator.
//!
//! The request is `{"dim": D, "latent": [...]}`: written as one JSON line to
//! a subprocess's stdin, or POSTed as a JSON body to an HTTP endpoint. The
//! response is the PNG bytes of the rendered face. Any failure, including
//! a timeout or a PNG of the wrong size, surfaces as
//! [`Error::BackendUnavailable`] once the retries are spent.

use std::io::{Read, Write};
use std::process::{Command, Stdio};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use wait_timeout::ChildExt;

use super::{GeneratorDescriptor, GeneratorKind, ImageBuffer};
use crate::error::{Error, Result};
use crate::latent::LatentVector;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "transport", rename_all = "lowercase")]
pub enum ExternalEndpoint {
    Command {
        program: String,
        #[serde(default)]
        args: Vec<String>,
    },
    Http {
        url: String,
    },
}

/// Wire form of a render request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerateRequest {
    pub dim: usize,
    pub latent: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct ExternalGenerator {
    descriptor: GeneratorDescriptor,
    endpoint: ExternalEndpoint,
    timeout: Duration,
    retries: u32,
}

impl ExternalGenerator {
    pub fn new(descriptor: GeneratorDescriptor) -> Result<Self> {
        let GeneratorKind::ExternalModel {
            endpoint,
            timeout_ms,
            retries,
            ..
        } = &descriptor.kind
        else {
            return Err(Error::Configuration(
                "external generator needs an external-model descriptor".into(),
            ));
        };
        Ok(Self {
            endpoint: endpoint.clone(),
            timeout: Duration::from_millis(*timeout_ms),
            retries: *retries,
            descriptor,
        })
    }

    pub fn descriptor(&self) -> &GeneratorDescriptor {
        &self.descriptor
    }

    pub fn generate(&self, latent: &LatentVector) -> Result<ImageBuffer> {
        latent.check_dim(self.descriptor.dim)?;
        let request = GenerateRequest {
            dim: self.descriptor.dim,
            latent: latent.as_slice().to_vec(),
        };
        let mut last = String::new();
        for _ in 0..=self.retries {
            match self.attempt(&request) {
                Ok(img) => return Ok(img),
                Err(e) => last = e,
            }
        }
        Err(Error::BackendUnavailable(last))
    }

    fn attempt(&self, request: &GenerateRequest) -> std::result::Result<ImageBuffer, String> {
        let png = match &self.endpoint {
            ExternalEndpoint::Command { program, args } => self.run_command(program, args, request)?,
            ExternalEndpoint::Http { url } => self.post(url, request)?,
        };
        let img = ImageBuffer::from_png(&png).map_err(|e| format!("bad PNG from backend: {e}"))?;
        if img.width() != self.descriptor.width || img.height() != self.descriptor.height {
            return Err(format!(
                "backend returned {}x{}, expected {}x{}",
                img.width(),
                img.height(),
                self.descriptor.width,
                self.descriptor.height
            ));
        }
        Ok(img)
    }

    fn run_command(
        &self,
        program: &str,
        args: &[String],
        request: &GenerateRequest,
    ) -> std::result::Result<Vec<u8>, String> {
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()
            .map_err(|e| format!("failed to spawn {program}: {e}"))?;
        let mut line = serde_json::to_vec(request).map_err(|e| e.to_string())?;
        line.push(b'\n');
        {
            let mut stdin = child.stdin.take().expect("stdin piped");
            // A backend may exit before reading everything; its status decides.
            let _ = stdin.write_all(&line);
        }
        let mut stdout = child.stdout.take().expect("stdout piped");
        let reader = std::thread::spawn(move || {
            let mut buf = Vec::new();
            stdout.read_to_end(&mut buf).map(|_| buf)
        });
        let status = match child.wait_timeout(self.timeout).map_err(|e| e.to_string())? {
            Some(status) => status,
            None => {
                let _ = child.kill();
                let _ = child.wait();
                return Err(format!("{program} timed out after {:?}", self.timeout));
            }
        };
        let out = reader
            .join()
            .map_err(|_| "stdout reader panicked".to_string())?
            .map_err(|e| e.to_string())?;
        if !status.success() {
            return Err(format!("{program} exited with {status}"));
        }
        Ok(out)
    }

    fn post(&self, url: &str, request: &GenerateRequest) -> std::result::Result<Vec<u8>, String> {
        let body = serde_json::to_vec(request).map_err(|e| e.to_string())?;
        let client = reqwest::blocking::Client::builder()
            .timeout(self.timeout)
            .build()
            .map_err(|e| e.to_string())?;
        let resp = client
            .post(url)
            .header("content-type", "application/json")
            .body(body)
            .send()
            .map_err(|e| e.to_string())?;
        if !resp.status().is_success() {
            return Err(format!("{url} answered {}", resp.status()));
        }
        resp.bytes().map(|b| b.to_vec()).map_err(|e| e.to_string())
    }
}
