//! Exact (direct-summation) evaluation of far-field Gaussian bands.
//!
//! Used as the second route when validating the grid-based mid- and
//! long-range solvers: the same band of Gaussians, but summed per pair and
//! per Gaussian, with narrow Gaussians done over real-space images and wide
//! ones through the 2D Poisson-summed mode form. No windows, grids or
//! interpolation are involved.

use crate::geometry::ParticleSystem;
use crate::sog::SogDecomposition;
use rayon::prelude::*;

/// Potential of the Gaussian band l in [lo, hi] at every particle, including
/// the self Gaussian contribution (matching what the spectral solvers
/// produce before the self term is subtracted).
pub fn band_potential_exact(
    system: &ParticleSystem,
    decomp: &SogDecomposition,
    lo: usize,
    hi: usize,
) -> Vec<f64> {
    let [lx, ly, _] = system.box_lengths;
    let n = system.len();
    let mut out = vec![0.0; n];
    if lo > hi {
        return out;
    }

    // Split the band: per-Gaussian treatment until nodes dwarf the box, then
    // a combined k=0 Taylor tail for the remaining geometric weights.
    let s_big = 1e4 * lx.max(ly).max(system.box_lengths[2]);
    let per_l_hi = (lo..=hi).take_while(|&l| decomp.nodes[l] < s_big).last();

    if let Some(per_l_hi) = per_l_hi {
        for l in lo..=per_l_hi {
            let s = decomp.nodes[l];
            let w = decomp.weights[l];
            // route choice: images in real space vs Fourier modes; both
            // tails are pushed to the e^-37 scale
            let n_img = (6.1 * s / lx.min(ly)).ceil() as i64 + 1;
            let n_modes = (2.0 * 6.1 / s * lx.max(ly) / (2.0 * std::f64::consts::PI)).ceil()
                as i64;
            if (2 * n_img + 1) * (2 * n_img + 1) <= (2 * n_modes + 1) * (2 * n_modes + 1) {
                real_space_gaussian(system, s, w, n_img, &mut out);
            } else {
                fourier_gaussian(system, s, w, n_modes, &mut out);
            }
        }
    }

    // wide tail: s >> box, so e^{-|r|^2/s^2} ~ 1 - dz^2/s^2 per image; the
    // Poisson-summed k = 0 term with a two-term Taylor expansion and the
    // neutral monopole dropped analytically
    let tail_lo = per_l_hi.map(|l| l + 1).unwrap_or(lo);
    if tail_lo <= hi {
        let mut t0 = 0.0; // sum w_l (monopole coefficient, times -z^2 term)
        let mut t1 = 0.0; // sum w_l / s_l^2 (next order)
        for l in tail_lo..=hi {
            t0 += decomp.weights[l];
            t1 += decomp.weights[l] / (decomp.nodes[l] * decomp.nodes[l]);
        }
        let pref = std::f64::consts::PI / (lx * ly);
        let chunks: Vec<f64> = (0..n)
            .into_par_iter()
            .map(|i| {
                let zi = system.positions[i][2];
                let mut acc = 0.0;
                for (pj, &qj) in system.positions.iter().zip(&system.charges) {
                    let dz = zi - pj[2];
                    let z2 = dz * dz;
                    // w s^2 expm1(-z^2/s^2) = -w z^2 + w z^4/(2 s^2) - ...
                    acc += qj * (-t0 * z2 + 0.5 * t1 * z2 * z2);
                }
                pref * acc
            })
            .collect();
        for (o, c) in out.iter_mut().zip(chunks) {
            *o += c;
        }
    }
    out
}

fn real_space_gaussian(
    system: &ParticleSystem,
    s: f64,
    w: f64,
    n_img: i64,
    out: &mut [f64],
) {
    let [lx, ly, _] = system.box_lengths;
    let inv_s2 = 1.0 / (s * s);
    let contrib: Vec<f64> = (0..system.len())
        .into_par_iter()
        .map(|i| {
            let pi = system.positions[i];
            let mut acc = 0.0;
            for (pj, &qj) in system.positions.iter().zip(&system.charges) {
                let dz2 = (pi[2] - pj[2]) * (pi[2] - pj[2]);
                for nx in -n_img..=n_img {
                    let dx = pi[0] - pj[0] + nx as f64 * lx;
                    for ny in -n_img..=n_img {
                        let dy = pi[1] - pj[1] + ny as f64 * ly;
                        let r2 = dx * dx + dy * dy + dz2;
                        let arg = r2 * inv_s2;
                        if arg < 700.0 {
                            acc += qj * (-arg).exp();
                        }
                    }
                }
            }
            w * acc
        })
        .collect();
    for (o, c) in out.iter_mut().zip(contrib) {
        *o += c;
    }
}

fn fourier_gaussian(
    system: &ParticleSystem,
    s: f64,
    w: f64,
    n_modes: i64,
    out: &mut [f64],
) {
    let [lx, ly, _] = system.box_lengths;
    let pref = w * std::f64::consts::PI * s * s / (lx * ly);
    let inv_s2 = 1.0 / (s * s);
    let contrib: Vec<f64> = (0..system.len())
        .into_par_iter()
        .map(|i| {
            let pi = system.positions[i];
            let mut acc = 0.0;
            for (pj, &qj) in system.positions.iter().zip(&system.charges) {
                let dz = pi[2] - pj[2];
                // k = 0 with the monopole dropped (neutral systems)
                let mut pair = (-dz * dz * inv_s2).exp_m1();
                // nonzero modes
                for nx in -n_modes..=n_modes {
                    let kx = 2.0 * std::f64::consts::PI * nx as f64 / lx;
                    for ny in -n_modes..=n_modes {
                        if nx == 0 && ny == 0 {
                            continue;
                        }
                        let ky = 2.0 * std::f64::consts::PI * ny as f64 / ly;
                        let k2 = kx * kx + ky * ky;
                        let damp = s * s * k2 / 4.0;
                        if damp > 700.0 {
                            continue;
                        }
                        pair += (-damp).exp()
                            * (kx * (pi[0] - pj[0]) + ky * (pi[1] - pj[1])).cos()
                            * (-dz * dz * inv_s2).exp();
                    }
                }
                acc += qj * pair;
            }
            pref * acc
        })
        .collect();
    for (o, c) in out.iter_mut().zip(contrib) {
        *o += c;
    }
}

/// Exact mid-range band (l = 0..=m). A negative split index gives zeros.
pub fn mid_exact(system: &ParticleSystem, decomp: &SogDecomposition, m: isize) -> Vec<f64> {
    if m < 0 {
        return vec![0.0; system.len()];
    }
    band_potential_exact(system, decomp, 0, m as usize)
}

/// Exact long-range band (l = m+1..=M).
pub fn long_exact(system: &ParticleSystem, decomp: &SogDecomposition, m: isize) -> Vec<f64> {
    band_potential_exact(system, decomp, (m + 1).max(0) as usize, decomp.truncation)
}
