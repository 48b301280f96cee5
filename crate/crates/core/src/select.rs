//! Pixel selection and local volume extraction: confidence map, adaptive
//! Gaussian threshold filter, normalized Sub-DSIs, and the argmax /
//! morphological-dilation baselines.

use serde::{Deserialize, Serialize};

use crate::dsi::DsiGrid;
use crate::error::{Error, Result};

/// Per-pixel maximum ray count over all depth planes.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfidenceMap {
    width: usize,
    height: usize,
    values: Vec<f32>,
}

impl ConfidenceMap {
    pub fn from_values(width: usize, height: usize, values: Vec<f32>) -> Result<Self> {
        if values.len() != width * height {
            return Err(Error::ShapeMismatch(format!(
                "confidence map needs {} values, got {}",
                width * height,
                values.len()
            )));
        }
        Ok(Self {
            width,
            height,
            values,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn at(&self, x: usize, y: usize) -> f32 {
        self.values[y * self.width + x]
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }
}

pub fn confidence_map(dsi: &DsiGrid) -> ConfidenceMap {
    let (w, h) = (dsi.width(), dsi.height());
    let mut values = vec![0.0f32; w * h];
    for plane in 0..dsi.d() {
        let slab = &dsi.counts()[plane * w * h..(plane + 1) * w * h];
        for (v, &c) in values.iter_mut().zip(slab) {
            if c > *v {
                *v = c;
            }
        }
    }
    ConfidenceMap {
        width: w,
        height: h,
        values,
    }
}

/// Adaptive Gaussian threshold settings. A pixel is selected when its
/// confidence exceeds the Gaussian-weighted local mean minus `c`; the benchmark
/// settings use negative `c`, i.e. the confidence must exceed the local mean
/// by |c|.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgtConfig {
    /// Odd window size >= 3.
    pub window: usize,
    /// Subtractive constant.
    pub c: f64,
}

impl AgtConfig {
    pub fn new(window: usize, c: f64) -> Result<Self> {
        if window < 3 || window % 2 == 0 {
            return Err(Error::Config(format!(
                "AGT window must be odd and >= 3, got {window}"
            )));
        }
        Ok(Self { window, c })
    }

    /// Kernel standard deviation derived from the window size:
    /// 0.3 * ((window - 1)/2 - 1) + 0.8, the convention used by the adaptive
    /// threshold implementations this filter reproduces.
    pub fn sigma(&self) -> f64 {
        0.3 * ((self.window as f64 - 1.0) / 2.0 - 1.0) + 0.8
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PixelCoord {
    pub x: usize,
    pub y: usize,
}

fn gaussian_kernel(window: usize, sigma: f64) -> Vec<f64> {
    let c = (window - 1) as f64 / 2.0;
    let mut k: Vec<f64> = (0..window)
        .map(|i| {
            let d = i as f64 - c;
            (-d * d / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let sum: f64 = k.iter().sum();
    for v in &mut k {
        *v /= sum;
    }
    k
}

/// Separable Gaussian-weighted mean with replicate padding at the borders.
pub fn gaussian_weighted_mean(conf: &ConfidenceMap, window: usize, sigma: f64) -> Vec<f64> {
    let (w, h) = (conf.width, conf.height);
    let kernel = gaussian_kernel(window, sigma);
    let r = (window / 2) as i64;

    let mut horizontal = vec![0.0f64; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (ki, &kv) in kernel.iter().enumerate() {
                let xi = (x as i64 + ki as i64 - r).clamp(0, w as i64 - 1) as usize;
                acc += kv * conf.values[y * w + xi] as f64;
            }
            horizontal[y * w + x] = acc;
        }
    }
    let mut out = vec![0.0f64; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (ki, &kv) in kernel.iter().enumerate() {
                let yi = (y as i64 + ki as i64 - r).clamp(0, h as i64 - 1) as usize;
                acc += kv * horizontal[yi * w + x];
            }
            out[y * w + x] = acc;
        }
    }
    out
}

/// Selects pixels whose confidence exceeds the local Gaussian-weighted mean
/// minus `cfg.c`. Pixels closer than `(r_w, r_h)` to the border are excluded
/// so a full Sub-DSI window fits around every selected pixel. Output is
/// sorted row-major.
pub fn agt_select(
    conf: &ConfidenceMap,
    cfg: &AgtConfig,
    r_w: usize,
    r_h: usize,
) -> Result<Vec<PixelCoord>> {
    AgtConfig::new(cfg.window, cfg.c)?;
    if cfg.window > conf.width || cfg.window > conf.height {
        return Err(Error::Config(format!(
            "AGT window {} larger than {}x{} image",
            cfg.window, conf.width, conf.height
        )));
    }
    let gwm = gaussian_weighted_mean(conf, cfg.window, cfg.sigma());
    let mut selected = Vec::new();
    if conf.width < 2 * r_w + 1 || conf.height < 2 * r_h + 1 {
        return Ok(selected);
    }
    for y in r_h..conf.height - r_h {
        for x in r_w..conf.width - r_w {
            let i = y * conf.width + x;
            if conf.values[i] as f64 > gwm[i] - cfg.c {
                selected.push(PixelCoord { x, y });
            }
        }
    }
    Ok(selected)
}

/// Normalized local DSI volume around a selected pixel, the network input.
/// Values are the window counts divided by the window maximum, so the
/// maximum is exactly 1.
#[derive(Debug, Clone, PartialEq)]
pub struct SubDsi {
    d: usize,
    r_w: usize,
    r_h: usize,
    center: PixelCoord,
    /// (plane, wy, wx) with window width 2*r_w+1 and height 2*r_h+1.
    values: Vec<f32>,
}

impl SubDsi {
    pub fn from_values(
        d: usize,
        r_w: usize,
        r_h: usize,
        center: PixelCoord,
        values: Vec<f32>,
    ) -> Result<Self> {
        let expect = d * (2 * r_w + 1) * (2 * r_h + 1);
        if values.len() != expect {
            return Err(Error::ShapeMismatch(format!(
                "sub-DSI needs {expect} values, got {}",
                values.len()
            )));
        }
        Ok(Self {
            d,
            r_w,
            r_h,
            center,
            values,
        })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn r_w(&self) -> usize {
        self.r_w
    }

    pub fn r_h(&self) -> usize {
        self.r_h
    }

    pub fn window_width(&self) -> usize {
        2 * self.r_w + 1
    }

    pub fn window_height(&self) -> usize {
        2 * self.r_h + 1
    }

    pub fn center(&self) -> PixelCoord {
        self.center
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    #[inline]
    pub fn at(&self, plane: usize, wy: usize, wx: usize) -> f32 {
        self.values[(plane * self.window_height() + wy) * self.window_width() + wx]
    }
}

/// Extracts and normalizes the D x (2r_w+1) x (2r_h+1) window around `p`
/// (Sub-DSI). Errors if the window is all zero, which cannot happen for
/// pixels selected with positive confidence.
pub fn extract_subdsi(dsi: &DsiGrid, p: PixelCoord, r_w: usize, r_h: usize) -> Result<SubDsi> {
    if p.x < r_w || p.y < r_h || p.x + r_w >= dsi.width() || p.y + r_h >= dsi.height() {
        return Err(Error::Config(format!(
            "pixel ({}, {}) closer than ({r_w}, {r_h}) to the border of {}x{}",
            p.x,
            p.y,
            dsi.width(),
            dsi.height()
        )));
    }
    let (ww, wh) = (2 * r_w + 1, 2 * r_h + 1);
    let mut values = Vec::with_capacity(dsi.d() * ww * wh);
    let mut max = 0.0f32;
    for plane in 0..dsi.d() {
        for wy in 0..wh {
            let y = p.y - r_h + wy;
            for wx in 0..ww {
                let x = p.x - r_w + wx;
                let v = dsi.at(plane, x, y);
                if v > max {
                    max = v;
                }
                values.push(v);
            }
        }
    }
    if max <= 0.0 {
        return Err(Error::UnselectablePixel { x: p.x, y: p.y });
    }
    for v in &mut values {
        *v /= max;
    }
    Ok(SubDsi {
        d: dsi.d(),
        r_w,
        r_h,
        center: p,
        values,
    })
}

/// Semi-dense depth map: NaN marks pixels without an estimate.
#[derive(Debug, Clone)]
pub struct DepthMap {
    width: usize,
    height: usize,
    depths: Vec<f64>,
}

/// Equality treats two invalid (NaN) pixels as equal.
impl PartialEq for DepthMap {
    fn eq(&self, other: &Self) -> bool {
        self.width == other.width
            && self.height == other.height
            && self
                .depths
                .iter()
                .zip(&other.depths)
                .all(|(a, b)| a == b || (a.is_nan() && b.is_nan()))
    }
}

impl DepthMap {
    pub fn empty(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            depths: vec![f64::NAN; width * height],
        }
    }

    pub fn from_depths(width: usize, height: usize, depths: Vec<f64>) -> Result<Self> {
        if depths.len() != width * height {
            return Err(Error::ShapeMismatch(format!(
                "depth map needs {} values, got {}",
                width * height,
                depths.len()
            )));
        }
        Ok(Self {
            width,
            height,
            depths,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn depths(&self) -> &[f64] {
        &self.depths
    }

    pub fn get(&self, x: usize, y: usize) -> Option<f64> {
        let v = self.depths[y * self.width + x];
        if v.is_nan() {
            None
        } else {
            Some(v)
        }
    }

    pub fn set(&mut self, x: usize, y: usize, depth: f64) {
        self.depths[y * self.width + x] = depth;
    }

    pub fn invalidate(&mut self, x: usize, y: usize) {
        self.depths[y * self.width + x] = f64::NAN;
    }

    pub fn is_valid(&self, x: usize, y: usize) -> bool {
        !self.depths[y * self.width + x].is_nan()
    }

    pub fn valid_count(&self) -> usize {
        self.depths.iter().filter(|d| !d.is_nan()).count()
    }

    pub fn iter_valid(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.depths.iter().enumerate().filter_map(move |(i, &d)| {
            if d.is_nan() {
                None
            } else {
                Some((i % self.width, i / self.width, d))
            }
        })
    }
}

/// Argmax baseline: per listed pixel, the depth of the plane with the highest
/// ray count; ties break toward the smaller plane index (nearer depth).
pub fn argmax_depth(dsi: &DsiGrid, pixels: &[PixelCoord]) -> DepthMap {
    let depths = dsi.plane_depths();
    let mut dm = DepthMap::empty(dsi.width(), dsi.height());
    for p in pixels {
        let mut best = dsi.at(0, p.x, p.y);
        let mut best_plane = 0;
        for plane in 1..dsi.d() {
            let v = dsi.at(plane, p.x, p.y);
            if v > best {
                best = v;
                best_plane = plane;
            }
        }
        dm.set(p.x, p.y, depths[best_plane]);
    }
    dm
}

/// Single-pass 4-neighbor dilation: every invalid pixel with at least one
/// valid 4-neighbor in the input becomes the mean of those neighbors.
pub fn morph_dilate(dm: &DepthMap) -> DepthMap {
    let mut out = dm.clone();
    let (w, h) = (dm.width, dm.height);
    for y in 0..h {
        for x in 0..w {
            if dm.is_valid(x, y) {
                continue;
            }
            let mut sum = 0.0;
            let mut n = 0;
            if x > 0 {
                if let Some(z) = dm.get(x - 1, y) {
                    sum += z;
                    n += 1;
                }
            }
            if x + 1 < w {
                if let Some(z) = dm.get(x + 1, y) {
                    sum += z;
                    n += 1;
                }
            }
            if y > 0 {
                if let Some(z) = dm.get(x, y - 1) {
                    sum += z;
                    n += 1;
                }
            }
            if y + 1 < h {
                if let Some(z) = dm.get(x, y + 1) {
                    sum += z;
                    n += 1;
                }
            }
            if n > 0 {
                out.set(x, y, sum / n as f64);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsi::{plane_depths, DsiGrid};
    use crate::geometry::{CameraIntrinsics, Pose};
    use rand_core::{RngCore, SeedableRng};

    fn grid(d: usize, w: u32, h: u32) -> DsiGrid {
        let k = CameraIntrinsics::new(10.0, 10.0, w as f64 / 2.0, h as f64 / 2.0, w, h).unwrap();
        DsiGrid::zeros(d, 1.0, 4.0, Pose::identity(), k).unwrap()
    }

    fn random_grid(seed: u64, d: usize, w: u32, h: u32, max_count: u64) -> DsiGrid {
        let mut rng = rand_chacha::ChaCha20Rng::from_seed({
            let mut key = [0u8; 32];
            key[..8].copy_from_slice(&seed.to_le_bytes());
            key
        });
        let mut g = grid(d, w, h);
        for plane in 0..d {
            for y in 0..h as usize {
                for x in 0..w as usize {
                    g.set(plane, x, y, (rng.next_u64() % (max_count + 1)) as f32);
                }
            }
        }
        g
    }

    #[test]
    fn confidence_of_zero_grid_is_zero() {
        let c = confidence_map(&grid(4, 8, 8));
        assert!(c.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn confidence_single_voxel() {
        let mut g = grid(4, 8, 8);
        g.set(2, 3, 5, 7.0);
        let c = confidence_map(&g);
        assert_eq!(c.at(3, 5), 7.0);
        assert_eq!(c.values().iter().filter(|&&v| v != 0.0).count(), 1);
    }

    #[test]
    fn confidence_matches_loop_oracle() {
        let g = random_grid(11, 4, 8, 8, 50);
        let c = confidence_map(&g);
        for y in 0..8 {
            for x in 0..8 {
                let expect = (0..4).map(|p| g.at(p, x, y)).fold(0.0f32, f32::max);
                assert_eq!(c.at(x, y), expect);
            }
        }
    }

    fn constant_conf(w: usize, h: usize, v: f32) -> ConfidenceMap {
        ConfidenceMap::from_values(w, h, vec![v; w * h]).unwrap()
    }

    #[test]
    fn agt_constant_map_negative_c_selects_nothing() {
        let conf = constant_conf(16, 16, 5.0);
        let cfg = AgtConfig::new(5, -10.0).unwrap();
        assert!(agt_select(&conf, &cfg, 2, 2).unwrap().is_empty());
    }

    #[test]
    fn agt_constant_map_positive_c_selects_interior() {
        let conf = constant_conf(16, 16, 5.0);
        let cfg = AgtConfig::new(5, 5.0).unwrap();
        let sel = agt_select(&conf, &cfg, 2, 2).unwrap();
        assert_eq!(sel.len(), 12 * 12);
        // Row-major ordering.
        let mut sorted = sel.clone();
        sorted.sort_by_key(|p| (p.y, p.x));
        assert_eq!(sel, sorted);
    }

    #[test]
    fn agt_spike_selected_background_not() {
        let mut values = vec![0.0f32; 15 * 15];
        values[7 * 15 + 7] = 100.0;
        let conf = ConfidenceMap::from_values(15, 15, values).unwrap();
        let cfg = AgtConfig::new(5, -10.0).unwrap();
        let sel = agt_select(&conf, &cfg, 1, 1).unwrap();
        assert_eq!(sel, vec![PixelCoord { x: 7, y: 7 }]);
    }

    #[test]
    fn agt_window_larger_than_image_errors() {
        let conf = constant_conf(4, 4, 1.0);
        let cfg = AgtConfig::new(5, 0.0).unwrap();
        assert!(agt_select(&conf, &cfg, 0, 0).is_err());
    }

    #[test]
    fn agt_monotone_in_c() {
        for seed in 0..20 {
            let g = random_grid(seed, 3, 24, 20, 40);
            let conf = confidence_map(&g);
            let strict = agt_select(&conf, &AgtConfig::new(5, -6.0).unwrap(), 2, 2).unwrap();
            let loose = agt_select(&conf, &AgtConfig::new(5, -5.0).unwrap(), 2, 2).unwrap();
            let loose_set: std::collections::HashSet<_> = loose.iter().collect();
            assert!(strict.iter().all(|p| loose_set.contains(p)));
        }
    }

    #[test]
    fn subdsi_constant_window_is_all_ones() {
        let mut g = grid(3, 9, 9);
        for plane in 0..3 {
            for y in 0..9 {
                for x in 0..9 {
                    g.set(plane, x, y, 4.5);
                }
            }
        }
        let s = extract_subdsi(&g, PixelCoord { x: 4, y: 4 }, 2, 2).unwrap();
        assert!(s.values().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn subdsi_single_nonzero_becomes_one() {
        let mut g = grid(3, 9, 9);
        g.set(1, 4, 5, 5.0);
        let s = extract_subdsi(&g, PixelCoord { x: 4, y: 4 }, 2, 2).unwrap();
        assert_eq!(s.values().iter().filter(|&&v| v != 0.0).count(), 1);
        assert_eq!(s.at(1, 3, 2), 1.0);
    }

    #[test]
    fn subdsi_matches_slice_oracle() {
        let g = random_grid(3, 5, 12, 10, 30);
        let p = PixelCoord { x: 6, y: 5 };
        let (r_w, r_h) = (3, 2);
        let s = extract_subdsi(&g, p, r_w, r_h).unwrap();
        let mut max = 0.0f32;
        for plane in 0..5 {
            for y in p.y - r_h..=p.y + r_h {
                for x in p.x - r_w..=p.x + r_w {
                    max = max.max(g.at(plane, x, y));
                }
            }
        }
        let mut best_impl = (0, 0.0f32);
        let mut best_oracle = (0, 0.0f32);
        for plane in 0..5 {
            for wy in 0..2 * r_h + 1 {
                for wx in 0..2 * r_w + 1 {
                    let got = s.at(plane, wy, wx);
                    let want = g.at(plane, p.x - r_w + wx, p.y - r_h + wy) / max;
                    assert!((got - want).abs() <= 1e-7);
                    let flat = (plane * (2 * r_h + 1) + wy) * (2 * r_w + 1) + wx;
                    if got > best_impl.1 {
                        best_impl = (flat, got);
                    }
                    if want > best_oracle.1 {
                        best_oracle = (flat, want);
                    }
                }
            }
        }
        assert_eq!(best_impl.0, best_oracle.0);
        assert_eq!(s.values().iter().cloned().fold(0.0f32, f32::max), 1.0);
    }

    #[test]
    fn subdsi_zero_window_errors() {
        let g = grid(3, 9, 9);
        assert!(matches!(
            extract_subdsi(&g, PixelCoord { x: 4, y: 4 }, 2, 2),
            Err(Error::UnselectablePixel { .. })
        ));
    }

    #[test]
    fn subdsi_border_pixel_errors() {
        let g = grid(3, 9, 9);
        assert!(extract_subdsi(&g, PixelCoord { x: 1, y: 4 }, 2, 2).is_err());
    }

    #[test]
    fn subdsi_scale_invariant_bitwise_for_integer_counts() {
        let g = random_grid(8, 4, 12, 12, 25);
        let p = PixelCoord { x: 6, y: 6 };
        let base = extract_subdsi(&g, p, 2, 2).unwrap();
        for k in [0.5f32, 3.0, 10.0] {
            let scaled = extract_subdsi(&g.scaled(k), p, 2, 2).unwrap();
            assert_eq!(base.values(), scaled.values());
        }
    }

    #[test]
    fn argmax_one_hot_column() {
        let mut g = grid(5, 8, 8);
        let depths = plane_depths(1.0, 4.0, 5).unwrap();
        g.set(3, 2, 2, 9.0);
        let dm = argmax_depth(&g, &[PixelCoord { x: 2, y: 2 }]);
        assert_eq!(dm.get(2, 2).unwrap(), depths[3]);
        assert_eq!(dm.valid_count(), 1);
    }

    #[test]
    fn argmax_tie_breaks_to_nearest_plane() {
        let mut g = grid(5, 8, 8);
        for plane in 0..5 {
            g.set(plane, 1, 1, 2.0);
        }
        let dm = argmax_depth(&g, &[PixelCoord { x: 1, y: 1 }]);
        assert_eq!(dm.get(1, 1).unwrap(), 1.0);
    }

    #[test]
    fn argmax_matches_loop_oracle_and_lattice() {
        let g = random_grid(21, 6, 10, 10, 40);
        let depths = g.plane_depths();
        let pixels: Vec<PixelCoord> = (0..10)
            .flat_map(|y| (0..10).map(move |x| PixelCoord { x, y }))
            .collect();
        let dm = argmax_depth(&g, &pixels);
        for p in &pixels {
            let mut best = (0usize, f32::MIN);
            for plane in 0..6 {
                let v = g.at(plane, p.x, p.y);
                if v > best.1 {
                    best = (plane, v);
                }
            }
            assert_eq!(dm.get(p.x, p.y).unwrap(), depths[best.0]);
        }
        for (_, _, z) in dm.iter_valid() {
            assert!(depths.contains(&z));
        }
    }

    #[test]
    fn dilate_fully_valid_unchanged() {
        let mut dm = DepthMap::empty(4, 4);
        for y in 0..4 {
            for x in 0..4 {
                dm.set(x, y, 2.0);
            }
        }
        assert_eq!(morph_dilate(&dm), dm);
    }

    #[test]
    fn dilate_single_pixel_makes_plus() {
        let mut dm = DepthMap::empty(5, 5);
        dm.set(2, 2, 2.0);
        let out = morph_dilate(&dm);
        assert_eq!(out.valid_count(), 5);
        for (x, y) in [(2, 2), (1, 2), (3, 2), (2, 1), (2, 3)] {
            assert_eq!(out.get(x, y).unwrap(), 2.0);
        }
    }

    #[test]
    fn dilate_empty_stays_empty() {
        let dm = DepthMap::empty(4, 4);
        assert_eq!(morph_dilate(&dm).valid_count(), 0);
    }

    #[test]
    fn dilate_never_removes_valid_pixels() {
        let g = random_grid(31, 4, 12, 12, 20);
        let conf = confidence_map(&g);
        let sel = agt_select(&conf, &AgtConfig::new(3, -2.0).unwrap(), 1, 1).unwrap();
        let dm = argmax_depth(&g, &sel);
        let dilated = morph_dilate(&dm);
        for (x, y, z) in dm.iter_valid() {
            assert_eq!(dilated.get(x, y), Some(z));
        }
        // Fill value is the mean of the valid 4-neighbors.
        for y in 0..12usize {
            for x in 0..12usize {
                if dm.is_valid(x, y) || !dilated.is_valid(x, y) {
                    continue;
                }
                let mut vals = Vec::new();
                if x > 0 {
                    if let Some(z) = dm.get(x - 1, y) {
                        vals.push(z);
                    }
                }
                if x + 1 < 12 {
                    if let Some(z) = dm.get(x + 1, y) {
                        vals.push(z);
                    }
                }
                if y > 0 {
                    if let Some(z) = dm.get(x, y - 1) {
                        vals.push(z);
                    }
                }
                if y + 1 < 12 {
                    if let Some(z) = dm.get(x, y + 1) {
                        vals.push(z);
                    }
                }
                let mean = vals.iter().sum::<f64>() / vals.len() as f64;
                assert!((dilated.get(x, y).unwrap() - mean).abs() < 1e-12);
            }
        }
    }
}
