use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::ModelError;

/// Luma heights the predictors are trained for.
pub const SUPPORTED_RESOLUTIONS: [u32; 7] = [360, 432, 540, 720, 1080, 1440, 2160];

/// An encoding resolution identified by its luma line count (16:9 frame).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u32", into = "u32")]
pub struct Resolution(u32);

impl Resolution {
    pub fn new(lines: u32) -> Result<Self, ModelError> {
        if SUPPORTED_RESOLUTIONS.contains(&lines) {
            Ok(Self(lines))
        } else {
            Err(ModelError::UnsupportedResolution(lines))
        }
    }

    pub fn all() -> impl Iterator<Item = Resolution> {
        SUPPORTED_RESOLUTIONS.into_iter().map(Resolution)
    }

    pub fn lines(self) -> u32 {
        self.0
    }

    /// 16:9 width rounded to an even number of samples.
    pub fn width(self) -> u32 {
        let w = (self.0 * 16).div_ceil(9);
        w + (w & 1)
    }

    pub fn pixels(self) -> u64 {
        u64::from(self.width()) * u64::from(self.0)
    }
}

impl TryFrom<u32> for Resolution {
    type Error = ModelError;

    fn try_from(lines: u32) -> Result<Self, Self::Error> {
        Self::new(lines)
    }
}

impl From<Resolution> for u32 {
    fn from(r: Resolution) -> u32 {
        r.0
    }
}

impl FromStr for Resolution {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let digits = s.trim().trim_end_matches('p');
        let lines = digits.parse().map_err(|_| ModelError::UnsupportedResolution(0))?;
        Self::new(lines)
    }
}

impl fmt::Display for Resolution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn widths() {
        let widths: Vec<u32> = Resolution::all().map(|r| r.width()).collect();
        assert_eq!(widths, [640, 768, 960, 1280, 1920, 2560, 3840]);
    }

    #[test]
    fn parsing() {
        assert_eq!("1080p".parse::<Resolution>().unwrap().lines(), 1080);
        assert!("999".parse::<Resolution>().is_err());
        assert!(Resolution::new(480).is_err());
    }
}
