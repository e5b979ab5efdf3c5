use rayon::prelude::*;

use super::project::{project, Splat2D};
use super::{RasterConfig, View};
use crate::isp::LinearImage;
use crate::scene::GaussianCloud;

/// Per-view buffers a backward pass needs: depth-sorted splats and, per tile,
/// the sorted indices of the splats that may touch it.
#[derive(Debug, Clone)]
pub struct ForwardAux {
    pub splats: Vec<Splat2D>,
    pub tiles_x: usize,
    pub tiles_y: usize,
    pub tile_lists: Vec<Vec<u32>>,
}

#[derive(Debug, Clone)]
pub struct RenderOutput {
    pub color: LinearImage,
    /// `sum_i w_i * depth_i` with the compositing weights of `color`.
    pub depth: Vec<f64>,
    /// `1 - T_final`.
    pub alpha: Vec<f64>,
    pub final_transmittance: Vec<f64>,
    pub n_contrib: Vec<u32>,
    /// Screen radius of each Gaussian in this view, 0 when culled.
    pub radii: Vec<u32>,
    pub aux: Option<ForwardAux>,
}

impl RenderOutput {
    pub fn width(&self) -> usize {
        self.color.width
    }

    pub fn height(&self) -> usize {
        self.color.height
    }

    /// Depth normalized by accumulated alpha (0 where nothing was drawn).
    pub fn expected_depth(&self) -> Vec<f64> {
        self.depth
            .iter()
            .zip(&self.alpha)
            .map(|(&d, &a)| if a > 1e-6 { d / a } else { 0.0 })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct PixelResult {
    pub color: [f64; 3],
    pub depth: f64,
    pub transmittance: f64,
    pub n_contrib: u32,
}

/// Front-to-back compositing at one pixel over splats in depth order.
#[inline]
pub(crate) fn composite<'s>(
    splats: impl Iterator<Item = &'s Splat2D>,
    px: f64,
    py: f64,
    cfg: &RasterConfig,
) -> PixelResult {
    let mut out = PixelResult {
        transmittance: 1.0,
        ..Default::default()
    };
    for s in splats {
        let a = s.weight_at(px, py);
        if a < cfg.alpha_threshold || a <= 0.0 {
            continue;
        }
        let w = a * out.transmittance;
        for c in 0..3 {
            out.color[c] += w * s.rgb[c];
        }
        out.depth += w * s.depth;
        out.transmittance *= 1.0 - a;
        out.n_contrib += 1;
        if out.transmittance < cfg.transmittance_floor {
            break;
        }
    }
    out
}

pub(crate) fn sort_splats(splats: &mut [Splat2D]) {
    splats.sort_by(|a, b| {
        a.depth
            .total_cmp(&b.depth)
            .then(a.source_index.cmp(&b.source_index))
    });
}

/// Assigns each depth-sorted splat to every tile its reach overlaps.
fn bin_tiles(splats: &[Splat2D], width: usize, height: usize, tile: usize) -> (usize, usize, Vec<Vec<u32>>) {
    let tiles_x = width.div_ceil(tile);
    let tiles_y = height.div_ceil(tile);
    let mut lists = vec![Vec::new(); tiles_x * tiles_y];
    if width == 0 || height == 0 {
        return (tiles_x, tiles_y, lists);
    }
    for (k, s) in splats.iter().enumerate() {
        let (x0, x1, y0, y1) = if s.reach.is_finite() {
            // pixel centers lie at index + 0.5
            let lo_x = (s.mean2d[0] - s.reach - 0.5).floor();
            let hi_x = (s.mean2d[0] + s.reach - 0.5).ceil();
            let lo_y = (s.mean2d[1] - s.reach - 0.5).floor();
            let hi_y = (s.mean2d[1] + s.reach - 0.5).ceil();
            if hi_x < 0.0 || hi_y < 0.0 || lo_x > (width - 1) as f64 || lo_y > (height - 1) as f64 {
                continue;
            }
            let clamp = |v: f64, n: usize| v.clamp(0.0, (n - 1) as f64) as usize;
            (
                clamp(lo_x, width) / tile,
                clamp(hi_x, width) / tile,
                clamp(lo_y, height) / tile,
                clamp(hi_y, height) / tile,
            )
        } else {
            (0, tiles_x - 1, 0, tiles_y - 1)
        };
        for ty in y0..=y1 {
            for tx in x0..=x1 {
                lists[ty * tiles_x + tx].push(k as u32);
            }
        }
    }
    (tiles_x, tiles_y, lists)
}

fn empty_output(width: usize, height: usize, n: usize) -> RenderOutput {
    RenderOutput {
        color: LinearImage::zeros(width, height),
        depth: vec![0.0; width * height],
        alpha: vec![0.0; width * height],
        final_transmittance: vec![1.0; width * height],
        n_contrib: vec![0; width * height],
        radii: vec![0; n],
        aux: None,
    }
}

fn store(out: &mut RenderOutput, idx: usize, p: &PixelResult) {
    out.color.data[idx * 3..idx * 3 + 3].copy_from_slice(&p.color);
    out.depth[idx] = p.depth;
    out.alpha[idx] = 1.0 - p.transmittance;
    out.final_transmittance[idx] = p.transmittance;
    out.n_contrib[idx] = p.n_contrib;
}

/// Tiled forward pass. Tiles are rendered in parallel; each pixel is
/// composited sequentially, so the result does not depend on thread count.
pub fn rasterize_forward(cloud: &GaussianCloud, view: &View, cfg: &RasterConfig) -> RenderOutput {
    let (w, h) = (view.camera.width, view.camera.height);
    let mut splats = project(cloud, view, cfg);
    sort_splats(&mut splats);
    let tile = cfg.tile_size.max(1);
    let (tiles_x, tiles_y, tile_lists) = bin_tiles(&splats, w, h, tile);

    let rendered: Vec<Vec<PixelResult>> = (0..tiles_x * tiles_y)
        .into_par_iter()
        .map(|t| {
            let (tx, ty) = (t % tiles_x, t / tiles_x);
            let list = &tile_lists[t];
            let mut px = Vec::with_capacity(tile * tile);
            for y in ty * tile..((ty + 1) * tile).min(h) {
                for x in tx * tile..((tx + 1) * tile).min(w) {
                    let it = list.iter().map(|&k| &splats[k as usize]);
                    px.push(composite(it, x as f64 + 0.5, y as f64 + 0.5, cfg));
                }
            }
            px
        })
        .collect();

    let mut out = empty_output(w, h, cloud.len());
    for (t, pixels) in rendered.iter().enumerate() {
        let (tx, ty) = (t % tiles_x, t / tiles_x);
        let mut it = pixels.iter();
        for y in ty * tile..((ty + 1) * tile).min(h) {
            for x in tx * tile..((tx + 1) * tile).min(w) {
                store(&mut out, y * w + x, it.next().unwrap());
            }
        }
    }
    for s in &splats {
        out.radii[s.source_index] = s.radius;
    }
    out.aux = Some(ForwardAux {
        splats,
        tiles_x,
        tiles_y,
        tile_lists,
    });
    out
}

/// Reference renderer: every pixel walks every splat in global depth order,
/// with no tiling or reach culling. Only the skip threshold and the
/// transmittance floor are honored.
pub fn rasterize_oracle(cloud: &GaussianCloud, view: &View, cfg: &RasterConfig) -> RenderOutput {
    let (w, h) = (view.camera.width, view.camera.height);
    let mut splats = project(cloud, view, cfg);
    sort_splats(&mut splats);
    let rows: Vec<Vec<PixelResult>> = (0..h)
        .into_par_iter()
        .map(|y| {
            (0..w)
                .map(|x| composite(splats.iter(), x as f64 + 0.5, y as f64 + 0.5, cfg))
                .collect()
        })
        .collect();
    let mut out = empty_output(w, h, cloud.len());
    for (y, row) in rows.iter().enumerate() {
        for (x, p) in row.iter().enumerate() {
            store(&mut out, y * w + x, p);
        }
    }
    for s in &splats {
        out.radii[s.source_index] = s.radius;
    }
    out
}
