//! Uniform 8-bit quantization of continuous parameters.

use std::f64::consts::PI;

use super::command::{slot, N_BINS};
use super::CadError;

/// Maps `value` in `[lo, hi]` to one of 256 uniform bins. Values outside the
/// range are clamped. A value on the boundary between two bins goes to the
/// lower one, so bin `b` covers `(lo + b*w, lo + (b+1)*w]` (bin 0 also takes
/// `lo` itself).
pub fn quantize(value: f64, lo: f64, hi: f64) -> Result<u8, CadError> {
    check_range(lo, hi)?;
    let t = (value - lo) / (hi - lo) * N_BINS as f64;
    if t.is_nan() {
        return Ok(0);
    }
    let bin = t.ceil() - 1.0;
    Ok(bin.clamp(0.0, (N_BINS - 1) as f64) as u8)
}

/// Center of bin `bin`. The outer bins are nudged by an ulp when rounding
/// would leave `lo` or `hi` more than half a bin away.
pub fn dequantize(bin: u8, lo: f64, hi: f64) -> Result<f64, CadError> {
    check_range(lo, hi)?;
    let half = (hi - lo) / (2 * N_BINS) as f64;
    let mut c = lo + (f64::from(bin) + 0.5) * (hi - lo) / N_BINS as f64;
    if usize::from(bin) == N_BINS - 1 {
        while hi - c > half {
            c = c.next_up();
        }
    }
    if bin == 0 {
        while c - lo > half {
            c = c.next_down();
        }
    }
    Ok(c)
}

fn check_range(lo: f64, hi: f64) -> Result<(), CadError> {
    if lo < hi && lo.is_finite() && hi.is_finite() {
        Ok(())
    } else {
        Err(CadError::DegenerateRange { lo, hi })
    }
}

/// Parameter families sharing one quantization range.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParamFamily {
    /// Sketch-plane coordinates x, y in the normalized `[-1, 1]` frame.
    SketchCoord,
    /// Circle radius, `[0, 1]` in the sketch frame.
    Radius,
    /// Arc sweep angle θ over `(0, 2π]`.
    Sweep,
    /// Plane orientation α, β, γ: one full turn, offset by half a bin so that
    /// bins 0, 64, 128, 192 land exactly on -π, -π/2, 0, π/2.
    Orientation,
    /// Origin and sketch scale in the `[-1, 1]` model cube.
    Spatial,
    /// Extrude distances δ1, δ2: bin `b` is depth `b/128`, so bin 0 is
    /// exactly zero depth and the largest depth spans the cube.
    Depth,
}

impl ParamFamily {
    pub const ALL: [ParamFamily; 6] = [
        ParamFamily::SketchCoord,
        ParamFamily::Radius,
        ParamFamily::Sweep,
        ParamFamily::Orientation,
        ParamFamily::Spatial,
        ParamFamily::Depth,
    ];

    pub fn range(self) -> (f64, f64) {
        let half_bin = PI / N_BINS as f64;
        match self {
            ParamFamily::SketchCoord | ParamFamily::Spatial => (-1.0, 1.0),
            ParamFamily::Radius => (0.0, 1.0),
            ParamFamily::Sweep => (0.0, 2.0 * PI),
            ParamFamily::Orientation => (-PI - half_bin, PI - half_bin),
            ParamFamily::Depth => (-1.0 / N_BINS as f64, 2.0 - 1.0 / N_BINS as f64),
        }
    }

    /// Family of a continuous slot; `None` for the discrete flags c, b, w.
    pub fn of_slot(index: usize) -> Option<Self> {
        match index {
            slot::X | slot::Y => Some(Self::SketchCoord),
            slot::R => Some(Self::Radius),
            slot::THETA => Some(Self::Sweep),
            slot::ALPHA | slot::BETA | slot::GAMMA => Some(Self::Orientation),
            slot::OX | slot::OY | slot::OZ | slot::S => Some(Self::Spatial),
            slot::D1 | slot::D2 => Some(Self::Depth),
            _ => None,
        }
    }

    pub fn bin_width(self) -> f64 {
        let (lo, hi) = self.range();
        (hi - lo) / N_BINS as f64
    }

    pub fn quantize(self, value: f64) -> u8 {
        let (lo, hi) = self.range();
        quantize(value, lo, hi).expect("family ranges are non-degenerate")
    }

    pub fn dequantize(self, bin: u8) -> f64 {
        let (lo, hi) = self.range();
        dequantize(bin, lo, hi).expect("family ranges are non-degenerate")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn endpoints() {
        assert_eq!(quantize(-3.0, -3.0, 5.0).unwrap(), 0);
        assert_eq!(quantize(5.0, -3.0, 5.0).unwrap(), 255);
        assert_eq!(quantize(-10.0, -3.0, 5.0).unwrap(), 0);
        assert_eq!(quantize(10.0, -3.0, 5.0).unwrap(), 255);
    }

    #[test]
    fn midpoint_goes_to_lower_bin() {
        assert_eq!(quantize(0.0, -1.0, 1.0).unwrap(), 127);
        assert_eq!(quantize(0.5, 0.0, 1.0).unwrap(), 127);
    }

    #[test]
    fn degenerate_range() {
        assert!(matches!(quantize(0.0, 1.0, 1.0), Err(CadError::DegenerateRange { .. })));
        assert!(matches!(dequantize(3, 2.0, 1.0), Err(CadError::DegenerateRange { .. })));
    }

    #[test]
    fn dequantize_is_bin_center() {
        assert_eq!(dequantize(0, 0.0, 256.0).unwrap(), 0.5);
        assert_eq!(dequantize(255, 0.0, 256.0).unwrap(), 255.5);
        for b in 0..=255u8 {
            assert_eq!(quantize(dequantize(b, -1.0, 1.0).unwrap(), -1.0, 1.0).unwrap(), b);
        }
    }

    #[test]
    fn canonical_orientations_are_exact() {
        let f = ParamFamily::Orientation;
        assert!(f.dequantize(128).abs() < 1e-15);
        assert!((f.dequantize(64) + PI / 2.0).abs() < 1e-15);
        assert!((f.dequantize(192) - PI / 2.0).abs() < 1e-15);
        assert!((f.dequantize(0) + PI).abs() < 1e-15);
        assert_eq!(f.quantize(0.0), 128);
    }

    #[test]
    fn depth_bins_are_multiples_of_one_128th() {
        let f = ParamFamily::Depth;
        assert!(f.dequantize(0).abs() < 1e-15);
        assert!((f.dequantize(64) - 0.5).abs() < 1e-15);
        assert!((f.dequantize(255) - 255.0 / 128.0).abs() < 1e-15);
    }

    #[test]
    fn every_continuous_slot_has_a_family() {
        let discrete = [slot::CCW, slot::B, slot::W];
        for i in 0..16 {
            assert_eq!(ParamFamily::of_slot(i).is_none(), discrete.contains(&i), "slot {i}");
        }
    }
}
