use serde::{Deserialize, Serialize};

use super::SessionError;

pub const GOOD_PM25: f64 = 15.0;
pub const GOOD_PM10: f64 = 45.0;
pub const MODERATE_PM25: f64 = 35.0;
pub const MODERATE_PM10: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AirQualitySample {
    pub t_ms: u32,
    /// µg/m³
    pub pm25: f64,
    /// µg/m³
    pub pm10: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum AirBand {
    Good,
    Moderate,
    Poor,
}

/// Bands are inclusive at their upper bounds.
pub fn classify_air(pm25: f64, pm10: f64) -> Result<AirBand, SessionError> {
    if !(pm25 >= 0.0 && pm10 >= 0.0) {
        return Err(SessionError::Parameter(format!(
            "particulate concentrations must be non-negative (pm25 {pm25}, pm10 {pm10})"
        )));
    }
    Ok(if pm25 <= GOOD_PM25 && pm10 <= GOOD_PM10 {
        AirBand::Good
    } else if pm25 <= MODERATE_PM25 && pm10 <= MODERATE_PM10 {
        AirBand::Moderate
    } else {
        AirBand::Poor
    })
}
