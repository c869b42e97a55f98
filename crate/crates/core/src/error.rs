use core::fmt;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    NonFinite(&'static str),
    NegativeVariance,
    NonUnitDirection,
    ZeroSamples,
    NegativeDensity { index: usize },
    NegativeWeight { index: usize },
    LengthMismatch { expected: usize, found: usize },
    TooFewPoints(usize),
    NonGroundRay { index: usize },
    NegativeLossWeight(&'static str),
    InvalidConfig(&'static str),
    DegenerateIntrinsics,
    ResolutionTooSmall { width: usize, height: usize },
    EmptyPixelSet,
    InvalidRay(&'static str),
    ImageIndex { index: usize, count: usize },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::NonFinite(what) => write!(f, "non-finite value in {what}"),
            Error::NegativeVariance => f.write_str("variance must be nonnegative"),
            Error::NonUnitDirection => f.write_str("direction is not unit-norm"),
            Error::ZeroSamples => f.write_str("sample count must be at least 1"),
            Error::NegativeDensity { index } => write!(f, "negative density at sample {index}"),
            Error::NegativeWeight { index } => write!(f, "invalid rendering weight at sample {index}"),
            Error::LengthMismatch { expected, found } => {
                write!(f, "length mismatch: expected {expected}, found {found}")
            }
            Error::TooFewPoints(n) => write!(f, "plane fit needs at least 3 points, got {n}"),
            Error::NonGroundRay { index } => write!(f, "ray {index} does not carry the ground mask"),
            Error::NegativeLossWeight(name) => write!(f, "loss weight {name} must be nonnegative"),
            Error::InvalidConfig(why) => write!(f, "invalid configuration: {why}"),
            Error::DegenerateIntrinsics => f.write_str("camera intrinsics are degenerate"),
            Error::ResolutionTooSmall { width, height } => {
                write!(f, "resolution {width}x{height} is below the 8x8 minimum")
            }
            Error::EmptyPixelSet => f.write_str("metric evaluated over an empty pixel set"),
            Error::InvalidRay(why) => write!(f, "invalid ray: {why}"),
            Error::ImageIndex { index, count } => {
                write!(f, "image index {index} out of range for {count} images")
            }
        }
    }
}

impl core::error::Error for Error {}
