//! JSI heatmaps as binary PPM images.

use std::io::Write;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    #[default]
    Linear,
    Log,
}

impl std::str::FromStr for Scale {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(Scale::Linear),
            "log" => Ok(Scale::Log),
            other => Err(Error::invalid("scale", format!("expected `linear` or `log`, got `{other}`"))),
        }
    }
}

/// Dynamic range of the log scale.
pub const LOG_FLOOR: f64 = 1e-6;

const ANCHORS: [[f64; 3]; 9] = [
    [68.0, 1.0, 84.0],
    [72.0, 36.0, 117.0],
    [65.0, 68.0, 135.0],
    [53.0, 95.0, 141.0],
    [42.0, 120.0, 142.0],
    [33.0, 145.0, 140.0],
    [34.0, 168.0, 132.0],
    [122.0, 209.0, 81.0],
    [253.0, 231.0, 37.0],
];

/// Perceptually ordered dark-to-bright colormap on `t in [0, 1]`.
pub fn colormap(t: f64) -> [u8; 3] {
    let t = if t.is_finite() { t.clamp(0.0, 1.0) } else { 0.0 };
    let x = t * (ANCHORS.len() - 1) as f64;
    let k = (x.floor() as usize).min(ANCHORS.len() - 2);
    let f = x - k as f64;
    let mut out = [0u8; 3];
    for c in 0..3 {
        out[c] = (ANCHORS[k][c] + f * (ANCHORS[k + 1][c] - ANCHORS[k][c])).round() as u8;
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct Heatmap {
    pub width: usize,
    pub height: usize,
    /// Row-major RGB, top row first.
    pub rgb: Vec<u8>,
    pub scale: Scale,
    /// Colorbar range in data units.
    pub min: f64,
    pub max: f64,
}

/// `jsi` is indexed `[signal, idler]`; signal runs left to right and idler
/// bottom to top.
pub fn heatmap(jsi: &Array2<f64>, scale: Scale) -> Heatmap {
    let (ns, ni) = jsi.dim();
    let max = jsi.iter().copied().fold(0.0, f64::max);
    let min = match scale {
        Scale::Linear => jsi.iter().copied().fold(f64::INFINITY, f64::min).min(max),
        Scale::Log => max * LOG_FLOOR,
    };
    let map = |v: f64| -> f64 {
        if max <= min {
            return 0.0;
        }
        match scale {
            Scale::Linear => (v - min) / (max - min),
            Scale::Log => (v.max(min).log10() - min.log10()) / (max.log10() - min.log10()),
        }
    };
    let mut rgb = Vec::with_capacity(3 * ns * ni);
    for row in (0..ni).rev() {
        for col in 0..ns {
            rgb.extend_from_slice(&colormap(map(jsi[[col, row]])));
        }
    }
    Heatmap {
        width: ns,
        height: ni,
        rgb,
        scale,
        min: if min.is_finite() { min } else { 0.0 },
        max,
    }
}

impl Heatmap {
    pub fn write_ppm<W: Write>(&self, mut out: W) -> Result<()> {
        let scale = match self.scale {
            Scale::Linear => "linear",
            Scale::Log => "log",
        };
        write!(
            out,
            "P6\n# colorbar scale={scale} min={:e} max={:e}\n{} {}\n255\n",
            self.min, self.max, self.width, self.height
        )?;
        out.write_all(&self.rgb)?;
        Ok(())
    }

    pub fn to_ppm(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_ppm(&mut buf).expect("writing to a Vec cannot fail");
        buf
    }

    pub fn to_rgba(&self) -> Vec<u8> {
        self.rgb.chunks(3).flat_map(|p| [p[0], p[1], p[2], 255]).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_grid_is_uniform() {
        let h = heatmap(&Array2::zeros((4, 3)), Scale::Log);
        assert!(h.rgb.chunks(3).all(|p| p == &h.rgb[0..3]));
        let h = heatmap(&Array2::zeros((4, 3)), Scale::Linear);
        assert!(h.rgb.chunks(3).all(|p| p == &h.rgb[0..3]));
    }

    #[test]
    fn orientation_and_header() {
        let mut jsi = Array2::zeros((2, 2));
        jsi[[1, 1]] = 1.0;
        let h = heatmap(&jsi, Scale::Linear);
        // top-right pixel is the bright one
        assert_eq!(&h.rgb[3..6], &colormap(1.0));
        assert_eq!(&h.rgb[0..3], &colormap(0.0));
        let ppm = h.to_ppm();
        let text = String::from_utf8_lossy(&ppm[..40]);
        assert!(text.starts_with("P6\n# colorbar scale=linear"));
        assert!(ppm.ends_with(&h.rgb) && h.rgb.len() == 12);
    }

    #[test]
    fn colormap_is_monotone_in_brightness() {
        let lum = |c: [u8; 3]| 0.2126 * c[0] as f64 + 0.7152 * c[1] as f64 + 0.0722 * c[2] as f64;
        let mut prev = -1.0;
        for k in 0..=100 {
            let l = lum(colormap(k as f64 / 100.0));
            assert!(l >= prev - 1.0);
            prev = l;
        }
    }

    #[test]
    fn log_scale_floor() {
        let jsi = Array2::from_shape_vec((3, 1), vec![1e-12, 1e-3, 1.0]).unwrap();
        let h = heatmap(&jsi, Scale::Log);
        assert_eq!(h.min, 1e-6);
        assert_eq!(&h.rgb[0..3], &colormap(0.0));
        assert_eq!(&h.rgb[6..9], &colormap(1.0));
        assert_eq!(&h.rgb[3..6], &colormap(0.5));
    }
}
