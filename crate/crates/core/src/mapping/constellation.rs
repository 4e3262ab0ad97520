use std::f64::consts::FRAC_1_SQRT_2;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::linalg::C64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConstellationKind {
    Bpsk,
    Qpsk,
    Qam16,
}

impl std::str::FromStr for ConstellationKind {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "bpsk" => Ok(Self::Bpsk),
            "qpsk" => Ok(Self::Qpsk),
            "qam16" | "16qam" | "16-qam" => Ok(Self::Qam16),
            other => invalid(format!("unsupported constellation {other:?}")),
        }
    }
}

/// Unit-average-energy point set of size 2^bits.
///
/// Point order: for QAM the high half of the index picks the in-phase
/// level and the low half the quadrature level, levels ascending.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Constellation {
    pub kind: ConstellationKind,
    pub points: Vec<C64>,
}

impl Constellation {
    pub fn bits(&self) -> usize {
        self.points.len().trailing_zeros() as usize
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn mean_energy(&self) -> f64 {
        self.points.iter().map(|p| p.norm_sqr()).sum::<f64>() / self.points.len() as f64
    }
}

pub fn make_constellation(kind: ConstellationKind) -> Constellation {
    let points = match kind {
        ConstellationKind::Bpsk => vec![C64::new(1.0, 0.0), C64::new(-1.0, 0.0)],
        ConstellationKind::Qpsk => square_grid(&[-1.0, 1.0], FRAC_1_SQRT_2),
        ConstellationKind::Qam16 => square_grid(&[-3.0, -1.0, 1.0, 3.0], 1.0 / 10f64.sqrt()),
    };
    Constellation { kind, points }
}

fn square_grid(levels: &[f64], scale: f64) -> Vec<C64> {
    levels
        .iter()
        .flat_map(|&re| levels.iter().map(move |&im| C64::new(re * scale, im * scale)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bpsk_points() {
        let c = make_constellation(ConstellationKind::Bpsk);
        assert_eq!(c.points, vec![C64::new(1.0, 0.0), C64::new(-1.0, 0.0)]);
        assert_eq!(c.bits(), 1);
    }

    #[test]
    fn qpsk_unit_modulus() {
        let c = make_constellation(ConstellationKind::Qpsk);
        assert_eq!(c.len(), 4);
        for p in &c.points {
            assert!((p.norm_sqr() - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn qam16_unit_energy() {
        let c = make_constellation(ConstellationKind::Qam16);
        assert_eq!(c.len(), 16);
        assert_eq!(c.bits(), 4);
        assert!((c.mean_energy() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn parse_names() {
        assert_eq!("16-QAM".parse::<ConstellationKind>().unwrap(), ConstellationKind::Qam16);
        assert!("8psk".parse::<ConstellationKind>().is_err());
    }
}
