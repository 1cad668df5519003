//! Noise-prediction models ε̂ = ε_θ(x_t, m, t).

mod external;
mod gaussian;
pub mod protocol;

use thiserror::Error;

pub use external::{serve, ExternalDenoiser, ProcessStream};
pub use gaussian::{gaussian_predict_eps, GaussianDenoiser, GaussianPrior};

use crate::image::Image;

#[derive(Debug, Error)]
pub enum DenoiserError {
    #[error("connection failure: {0}")]
    Connection(#[source] std::io::Error),

    #[error("timed out waiting for denoiser")]
    Timeout,

    #[error("protocol violation: {message} (bytes: {})", hex(.bytes))]
    Protocol { message: String, bytes: Vec<u8> },

    #[error("shape mismatch: expected {expected}, found {found}")]
    ShapeMismatch { expected: String, found: String },

    #[error("remote model reported: {0}")]
    Remote(String),
}

impl DenoiserError {
    pub(crate) fn protocol(message: impl Into<String>, bytes: &[u8]) -> Self {
        DenoiserError::Protocol {
            message: message.into(),
            bytes: bytes.to_vec(),
        }
    }
}

impl From<std::io::Error> for DenoiserError {
    fn from(e: std::io::Error) -> Self {
        use std::io::ErrorKind;
        match e.kind() {
            ErrorKind::WouldBlock | ErrorKind::TimedOut => DenoiserError::Timeout,
            _ => DenoiserError::Connection(e),
        }
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect::<Vec<_>>()
        .join(" ")
}

/// Guidance image passed through to the model untouched.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionImage(Image);

impl ConditionImage {
    pub fn new(image: Image) -> Self {
        Self(image)
    }

    pub fn image(&self) -> &Image {
        &self.0
    }

    pub fn into_image(self) -> Image {
        self.0
    }
}

pub trait Denoiser {
    /// Predicts the noise in `x_t` at timestep `t`. The output has the shape
    /// of `x_t`, and identical arguments give identical outputs.
    fn predict_eps(
        &mut self,
        x_t: &Image,
        t: usize,
        condition: Option<&ConditionImage>,
    ) -> Result<Image, DenoiserError>;
}

impl<D: Denoiser + ?Sized> Denoiser for &mut D {
    fn predict_eps(
        &mut self,
        x_t: &Image,
        t: usize,
        condition: Option<&ConditionImage>,
    ) -> Result<Image, DenoiserError> {
        (**self).predict_eps(x_t, t, condition)
    }
}

impl<D: Denoiser + ?Sized> Denoiser for Box<D> {
    fn predict_eps(
        &mut self,
        x_t: &Image,
        t: usize,
        condition: Option<&ConditionImage>,
    ) -> Result<Image, DenoiserError> {
        (**self).predict_eps(x_t, t, condition)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn protocol_error_quotes_bytes() {
        let e = DenoiserError::protocol("bad magic", b"XY\x01");
        assert_eq!(
            e.to_string(),
            "protocol violation: bad magic (bytes: 58 59 01)"
        );
    }

    #[test]
    fn io_timeouts_are_classified() {
        let e: DenoiserError = std::io::Error::from(std::io::ErrorKind::WouldBlock).into();
        assert!(matches!(e, DenoiserError::Timeout));
        let e: DenoiserError = std::io::Error::from(std::io::ErrorKind::UnexpectedEof).into();
        assert!(matches!(e, DenoiserError::Connection(_)));
    }
}
