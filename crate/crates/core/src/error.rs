use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid ERP grid {width}x{height}: width must be 2*height, both even and >= 2")]
    InvalidGrid { width: usize, height: usize },
    #[error("coordinate out of domain: {0}")]
    Domain(String),
    #[error("invalid pose: {0}")]
    InvalidPose(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("no valid pixels to evaluate")]
    NoValidPixels,
    #[error("invalid scene: {0}")]
    InvalidScene(String),
}
