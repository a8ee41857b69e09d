//! Slow, obviously-correct reference implementations shared by test targets.
#![allow(dead_code)]

use mitodet::candidates::BoundingBox;
use mitodet::eval::Tolerance;
use mitodet::types::{Annotation, Detection, Frame, Mask, Point3};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn random_mask(rng: &mut ChaCha8Rng, w: usize, h: usize, density: f64) -> Mask {
    let data = (0..w * h).map(|_| rng.random_bool(density)).collect();
    Mask::from_vec(w, h, data)
}

fn flood(mask: &Mask, seen: &mut [bool], x: usize, y: usize, pixels: &mut Vec<(usize, usize)>) {
    let i = y * mask.width + x;
    if seen[i] || !*mask.get(x, y) {
        return;
    }
    seen[i] = true;
    pixels.push((x, y));
    for dy in -1isize..=1 {
        for dx in -1isize..=1 {
            let (nx, ny) = (x as isize + dx, y as isize + dy);
            if nx >= 0 && ny >= 0 && (nx as usize) < mask.width && (ny as usize) < mask.height {
                flood(mask, seen, nx as usize, ny as usize, pixels);
            }
        }
    }
}

/// Components as sorted pixel lists, found by recursive flood fill in raster order.
pub fn flood_components(mask: &Mask) -> Vec<Vec<(usize, usize)>> {
    let mut seen = vec![false; mask.data.len()];
    let mut out = Vec::new();
    for y in 0..mask.height {
        for x in 0..mask.width {
            let mut px = Vec::new();
            flood(mask, &mut seen, x, y, &mut px);
            if !px.is_empty() {
                px.sort();
                out.push(px);
            }
        }
    }
    out
}

pub fn box_of(px: &[(usize, usize)]) -> BoundingBox {
    let n = px.len() as f64;
    BoundingBox {
        x_min: px.iter().map(|p| p.0).min().unwrap(),
        y_min: px.iter().map(|p| p.1).min().unwrap(),
        x_max: px.iter().map(|p| p.0).max().unwrap(),
        y_max: px.iter().map(|p| p.1).max().unwrap(),
        area: px.len(),
        cx: px.iter().map(|p| p.0 as f64).sum::<f64>() / n,
        cy: px.iter().map(|p| p.1 as f64).sum::<f64>() / n,
    }
}

/// Zero-padded box mean by direct summation.
pub fn naive_average(f: &Frame, d: usize) -> Frame {
    let (w, h) = (f.width, f.height);
    let r = (d / 2) as isize;
    let mut out = Frame::filled(w, h, 0.0);
    for y in 0..h as isize {
        for x in 0..w as isize {
            let mut s = 0.0;
            for yy in y - r..=y + r {
                for xx in x - r..=x + r {
                    if xx >= 0 && yy >= 0 && xx < w as isize && yy < h as isize {
                        s += f.get(xx as usize, yy as usize);
                    }
                }
            }
            out.set(x as usize, y as usize, s / (d * d) as f64);
        }
    }
    out
}

/// Largest number of feasible pairs, by trying every assignment.
pub fn brute_force_cardinality(dets: &[Detection], gts: &[Annotation], tol: &Tolerance) -> usize {
    fn go(i: usize, dets: &[Detection], gts: &[Annotation], tol: &Tolerance, used: &mut Vec<bool>) -> usize {
        if i == dets.len() {
            return 0;
        }
        let mut best = go(i + 1, dets, gts, tol, used);
        for j in 0..gts.len() {
            let (d, g) = (&dets[i].point, &gts[j].point);
            if !used[j] && (d.t - g.t).abs() <= tol.tau_t && tol.metric.distance(d, g) <= tol.tau_s {
                used[j] = true;
                best = best.max(1 + go(i + 1, dets, gts, tol, used));
                used[j] = false;
            }
        }
        best
    }
    go(0, dets, gts, tol, &mut vec![false; gts.len()])
}

pub fn random_instance(rng: &mut ChaCha8Rng, max: usize, span: f64) -> (Vec<Detection>, Vec<Annotation>) {
    let nd = rng.random_range(0..=max);
    let ng = rng.random_range(0..=max);
    let p = |rng: &mut ChaCha8Rng| {
        Point3::new(
            rng.random_range(0.0..span).round(),
            rng.random_range(0.0..span).round(),
            rng.random_range(0.0..20.0f64).round(),
        )
    };
    let dets = (0..nd).map(|_| Detection { point: p(rng), score: 0.5 }).collect();
    let gts = (0..ng).map(|id| Annotation { id, point: p(rng) }).collect();
    (dets, gts)
}
