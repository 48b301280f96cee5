//! Frame-level plumbing shared by the CLI and the test suites: event
//! windowing around reference timestamps, pixel selection, and turning
//! batched predictions into depth maps.

use crate::dsi::{DsiGrid, Event};
use crate::error::Result;
use crate::net::DepthMode;
use crate::select::{agt_select, confidence_map, extract_subdsi, AgtConfig, DepthMap, PixelCoord};
use crate::train::{predict, EnsembleModel};

/// Events inside [t_center - span/2, t_center + span/2]; the stream must be
/// time-sorted. The window clips at the stream boundaries.
pub fn event_window(events: &[Event], t_center: f64, span: f64) -> &[Event] {
    let lo = t_center - span / 2.0;
    let hi = t_center + span / 2.0;
    let start = events.partition_point(|e| e.t < lo);
    let end = events.partition_point(|e| e.t <= hi);
    &events[start..end.max(start)]
}

/// Confidence map + AGT selection, dropping pixels whose confidence is zero
/// (their sub-volume cannot be normalized).
pub fn select_pixels(
    dsi: &DsiGrid,
    cfg: &AgtConfig,
    r_w: usize,
    r_h: usize,
) -> Result<Vec<PixelCoord>> {
    let conf = confidence_map(dsi);
    let selected = agt_select(&conf, cfg, r_w, r_h)?;
    Ok(selected
        .into_iter()
        .filter(|p| conf.at(p.x, p.y) > 0.0)
        .collect())
}

/// Network inference over selected pixels. The single head writes one depth
/// per pixel; the multi head writes 3x3 patches whose overlaps are resolved
/// by accumulating sums and counts and dividing once, so the result is
/// independent of pixel order.
pub fn infer_depth_map(
    model: &EnsembleModel,
    dsi: &DsiGrid,
    pixels: &[PixelCoord],
    depth_mode: DepthMode,
) -> Result<DepthMap> {
    model.validate()?;
    let cfg = model.members[0].1;
    let subs = pixels
        .iter()
        .map(|&p| extract_subdsi(dsi, p, cfg.r_w, cfg.r_h))
        .collect::<Result<Vec<_>>>()?;
    let depths = predict(model, &subs, dsi.z_min(), dsi.z_max(), depth_mode)?;

    let (w, h) = (dsi.width(), dsi.height());
    let mut dm = DepthMap::empty(w, h);
    match cfg.head.out_dim() {
        1 => {
            for (p, z) in pixels.iter().zip(&depths) {
                dm.set(p.x, p.y, z[0]);
            }
        }
        _ => {
            let mut sums = vec![0.0f64; w * h];
            let mut counts = vec![0u32; w * h];
            for (p, zs) in pixels.iter().zip(&depths) {
                for dy in 0..3usize {
                    for dx in 0..3usize {
                        let nx = p.x as i64 + dx as i64 - 1;
                        let ny = p.y as i64 + dy as i64 - 1;
                        if nx < 0 || ny < 0 || nx as usize >= w || ny as usize >= h {
                            continue;
                        }
                        let idx = ny as usize * w + nx as usize;
                        sums[idx] += zs[dy * 3 + dx];
                        counts[idx] += 1;
                    }
                }
            }
            for idx in 0..w * h {
                if counts[idx] > 0 {
                    dm.set(idx % w, idx / w, sums[idx] / counts[idx] as f64);
                }
            }
        }
    }
    Ok(dm)
}
