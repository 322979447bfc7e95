//! Fourier-Chebyshev solver for the long-range potential.
//!
//! Gaussians wider than eta*L_z are separable into a handful of x,y Fourier
//! modes times functions that are polynomial-smooth in z. Two variants:
//!
//! * Direct: sample the mode sums straight from the particles on Chebyshev
//!   nodes in z, interpolate, and evaluate per target (no grids at all).
//!   Preferred when the box is not strongly confined (few modes suffice).
//! * FFT: smear charges with an x,y window onto a uniform grid at each
//!   Chebyshev node, with the z dependence expanded in a truncated Taylor
//!   series (order Q) whose coefficients are combined per mode; 2D FFTs
//!   accelerate the periodic directions. Preferred under strong confinement.
//!
//! The k = 0 mode is evaluated separately in both variants: its wide-Gaussian
//! coefficients grow like b^l and must multiply exactly charge-neutral sums,
//! which is done stably via expm1 (the neutral monopole drops analytically).

use crate::chebyshev::{clenshaw_half_weight, clenshaw_half_weight_complex, ChebyshevGrid};
use crate::error::{Error, Result};
use crate::fft::{mode_index, Fft2};
use crate::geometry::ParticleSystem;
use crate::math::ln_factorial;
use crate::sog::SogDecomposition;
use crate::windows::{AxisWindow, WindowKind, WindowTable};
use rustfft::num_complex::Complex64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LongMode {
    Direct,
    Fft,
}

impl LongMode {
    pub fn name(&self) -> &'static str {
        match self {
            LongMode::Direct => "direct",
            LongMode::Fft => "fft",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "direct" => Ok(LongMode::Direct),
            "fft" => Ok(LongMode::Fft),
            other => Err(Error::InvalidParameter(format!("unknown long-range mode '{other}'"))),
        }
    }
}

/// Plan for the long-range stage.
pub struct LongRangePlan {
    pub mode: LongMode,
    /// Radial Fourier cutoff K_max^long.
    pub kmax: f64,
    /// Chebyshev degree P.
    pub cheb_degree: usize,
    /// Taylor order Q (FFT mode only).
    pub taylor_order: usize,
    /// Grid counts I_x^long, I_y^long (FFT mode only).
    pub counts: [usize; 2],
    box_lengths: [f64; 3],
    cheb: ChebyshevGrid,
    /// Direct mode: half-plane of nonzero modes (kx, ky); each stands for
    /// itself and its conjugate.
    half_modes: Vec<(f64, f64)>,
    /// FFT mode machinery.
    fft_part: Option<FftPart>,
}

struct FftPart {
    windows: [AxisWindow; 2],
    tables: [WindowTable; 2],
    /// a[p * nmodes + mode]: Taylor-combined kernel coefficients, k=0 zeroed.
    a_coeffs: Vec<f64>,
}

impl LongRangePlan {
    /// Build a DIRECT-mode plan: disk of modes |k| <= kmax, P Chebyshev nodes.
    pub fn direct(
        decomp: &SogDecomposition,
        box_lengths: [f64; 3],
        kmax: f64,
        cheb_degree: usize,
    ) -> Result<Self> {
        if cheb_degree < 1 {
            return Err(Error::InvalidParameter("Chebyshev degree P must be >= 1".into()));
        }
        let lz = box_lengths[2];
        let cheb = ChebyshevGrid::new(cheb_degree, (-lz / 2.0, lz / 2.0))?;
        let _ = decomp;
        let half_modes = disk_half_modes(box_lengths, kmax);
        Ok(Self {
            mode: LongMode::Direct,
            kmax,
            cheb_degree,
            taylor_order: 0,
            counts: [0, 0],
            box_lengths,
            cheb,
            half_modes,
            fft_part: None,
        })
    }

    /// Build an FFT-mode plan: rectangular I_x x I_y mode set, x,y window of
    /// `support` points, P Chebyshev nodes, Q Taylor terms.
    #[allow(clippy::too_many_arguments)]
    pub fn fft(
        decomp: &SogDecomposition,
        split_index: isize,
        box_lengths: [f64; 3],
        counts: [usize; 2],
        cheb_degree: usize,
        taylor_order: usize,
        kind: WindowKind,
        support: usize,
        shape: Option<f64>,
        poly_degree: usize,
    ) -> Result<Self> {
        if cheb_degree < 1 || taylor_order < 1 {
            return Err(Error::InvalidParameter("need P >= 1 and Q >= 1".into()));
        }
        let counts = [counts[0] + counts[0] % 2, counts[1] + counts[1] % 2];
        let lz = box_lengths[2];
        let cheb = ChebyshevGrid::new(cheb_degree, (-lz / 2.0, lz / 2.0))?;
        let mesh = [
            box_lengths[0] / counts[0] as f64,
            box_lengths[1] / counts[1] as f64,
        ];
        let windows = [
            AxisWindow::new(kind, support, mesh[0], shape)?,
            AxisWindow::new(kind, support, mesh[1], shape)?,
        ];
        if windows.iter().zip(counts).any(|(w, n)| w.support_points > n) {
            return Err(Error::InvalidParameter(
                "long-range window support exceeds the grid period".into(),
            ));
        }
        // Window bandwidth must stay below the narrowest long-range Gaussian.
        let s_next = decomp
            .nodes
            .get((split_index + 1) as usize)
            .copied()
            .ok_or_else(|| Error::InvalidParameter("empty long-range Gaussian set".into()))?;
        for w in &windows {
            let bw = w.half_width * w.half_width / w.effective_shape();
            if bw >= s_next * s_next {
                return Err(Error::InvalidParameter(format!(
                    "long-range window too wide: H^2/S = {bw:.3e} >= s_(m+1)^2 = {:.3e}",
                    s_next * s_next
                )));
            }
        }
        let tables = [windows[0].build_table(poly_degree)?, windows[1].build_table(poly_degree)?];
        let kmax = std::f64::consts::PI
            * (counts[0] as f64 / box_lengths[0]).min(counts[1] as f64 / box_lengths[1]);
        let a_coeffs =
            build_taylor_coeffs(decomp, split_index, box_lengths, counts, taylor_order, &windows);
        Ok(Self {
            mode: LongMode::Fft,
            kmax,
            cheb_degree,
            taylor_order,
            counts,
            box_lengths,
            cheb,
            half_modes: Vec::new(),
            fft_part: Some(FftPart { windows, tables, a_coeffs }),
        })
    }

    /// Evaluate the long-range potential at every particle.
    pub fn evaluate(
        &self,
        system: &ParticleSystem,
        decomp: &SogDecomposition,
        split_index: isize,
    ) -> Result<Vec<f64>> {
        if split_index >= decomp.truncation as isize {
            return Err(Error::InvalidParameter(format!(
                "long-range set is empty: split index {split_index} = truncation {}",
                decomp.truncation
            )));
        }
        match self.mode {
            LongMode::Direct => Ok(self.evaluate_direct(system, decomp, split_index)),
            LongMode::Fft => Ok(self.evaluate_fft(system, decomp, split_index, false)),
        }
    }

    /// FFT variant that loops the Gaussians explicitly instead of using the
    /// Taylor expansion; reference path for validating the acceleration.
    pub fn evaluate_fft_per_gaussian(
        &self,
        system: &ParticleSystem,
        decomp: &SogDecomposition,
        split_index: isize,
    ) -> Result<Vec<f64>> {
        if self.mode != LongMode::Fft {
            return Err(Error::InvalidParameter("per-Gaussian path requires an FFT plan".into()));
        }
        Ok(self.evaluate_fft(system, decomp, split_index, true))
    }

    fn evaluate_direct(
        &self,
        system: &ParticleSystem,
        decomp: &SogDecomposition,
        split_index: isize,
    ) -> Vec<f64> {
        let n = system.len();
        let p_deg = self.cheb_degree;
        let prefactor = std::f64::consts::PI / (self.box_lengths[0] * self.box_lengths[1]);
        let mut out = vec![0.0; n];

        // k = 0 column, stable path
        let k0 = kzero_column(system, decomp, split_index, &self.cheb.nodes);
        let k0_coeffs = self.cheb.coeffs_from_samples(&k0);
        for (i, pos) in system.positions.iter().enumerate() {
            let t = self.cheb.to_unit(pos[2]);
            out[i] += prefactor * clenshaw_half_weight(&k0_coeffs, t);
        }

        // nonzero modes: half-plane with conjugate doubling
        let mut samples = vec![Complex64::default(); p_deg];
        let mut phases: Vec<Complex64> = Vec::with_capacity(n);
        for &(kx, ky) in &self.half_modes {
            let k2 = kx * kx + ky * ky;
            phases.clear();
            phases.extend(system.positions.iter().map(|r| {
                let ph = kx * r[0] + ky * r[1];
                Complex64::new(ph.cos(), -ph.sin())
            }));
            samples.iter_mut().for_each(|s| *s = Complex64::default());
            for l in (split_index + 1) as usize..=decomp.truncation {
                let s = decomp.nodes[l];
                let arg = s * s * k2 / 4.0;
                if arg > 700.0 {
                    break;
                }
                let coef = decomp.weights[l] * s * s * (-arg).exp();
                let inv_s2 = 1.0 / (s * s);
                for (j, (pos, &q)) in
                    system.positions.iter().zip(&system.charges).enumerate()
                {
                    let w = phases[j] * (q * coef);
                    for (c, &zc) in self.cheb.nodes.iter().enumerate() {
                        let dz = zc - pos[2];
                        samples[c] += w * (-dz * dz * inv_s2).exp();
                    }
                }
            }
            let coeffs = self.cheb.coeffs_from_samples_complex(&samples);
            for (i, pos) in system.positions.iter().enumerate() {
                let ph = kx * pos[0] + ky * pos[1];
                let e = Complex64::new(ph.cos(), ph.sin());
                let t = self.cheb.to_unit(pos[2]);
                let val = clenshaw_half_weight_complex(&coeffs, t);
                out[i] += prefactor * 2.0 * (e * val).re;
            }
        }
        out
    }

    fn evaluate_fft(
        &self,
        system: &ParticleSystem,
        decomp: &SogDecomposition,
        split_index: isize,
        per_gaussian: bool,
    ) -> Vec<f64> {
        let part = self.fft_part.as_ref().expect("FFT plan");
        let [nx, ny] = self.counts;
        let nxy = nx * ny;
        let p_deg = self.cheb_degree;
        let q_ord = self.taylor_order;
        let lz = self.box_lengths[2];
        let n = system.len();
        let prefactor = std::f64::consts::PI / (self.box_lengths[0] * self.box_lengths[1]);
        let mut fft = Fft2::new([nx, ny]);

        // Fourier-Chebyshev coefficients D[(k, n)] of the scaled field
        let mut d_grid = vec![Complex64::default(); nxy * p_deg];

        let mut wx = vec![0.0; part.windows[0].support_points];
        let mut wy = vec![0.0; part.windows[1].support_points];

        if !per_gaussian {
            // Taylor-accelerated path: spread S^p on (grid x cheb nodes)
            let mut s_grids = vec![Complex64::default(); q_ord * p_deg * nxy];
            for (pos, &q) in system.positions.iter().zip(&system.charges) {
                if q == 0.0 {
                    continue;
                }
                let st = self.xy_stencil(pos, part, &mut wx, &mut wy);
                for (jx, &gx) in st.0.iter().enumerate() {
                    let fx = q * wx[jx];
                    for (jy, &gy) in st.1.iter().enumerate() {
                        let val = fx * wy[jy];
                        let g = gx * ny + gy;
                        for (c, &zc) in self.cheb.nodes.iter().enumerate() {
                            let dz = (zc - pos[2]) / lz;
                            let dz2 = dz * dz;
                            let mut pow = val;
                            for p in 0..q_ord {
                                s_grids[(p * p_deg + c) * nxy + g].re += pow;
                                pow *= dz2;
                            }
                        }
                    }
                }
            }
            // forward FFTs and Chebyshev transform, then combine with A_p
            let mut samples = vec![Complex64::default(); p_deg];
            for p in 0..q_ord {
                for c in 0..p_deg {
                    fft.forward(&mut s_grids[(p * p_deg + c) * nxy..(p * p_deg + c + 1) * nxy]);
                }
                for g in 0..nxy {
                    let a = part.a_coeffs[p * nxy + g];
                    if a == 0.0 {
                        continue;
                    }
                    for c in 0..p_deg {
                        samples[c] = s_grids[(p * p_deg + c) * nxy + g];
                    }
                    let coeffs = self.cheb.coeffs_from_samples_complex(&samples);
                    for (nn, &co) in coeffs.iter().enumerate() {
                        d_grid[nn * nxy + g] += co * a;
                    }
                }
            }
        } else {
            // explicit per-Gaussian path: spread exp(-(z_c - z_j)^2/s_l^2)
            let k_min = 2.0 * std::f64::consts::PI
                * (1.0 / self.box_lengths[0]).min(1.0 / self.box_lengths[1]);
            let measure = prefactor * (self.box_lengths[0] / nx as f64)
                * (self.box_lengths[1] / ny as f64)
                / prefactor;
            let _ = measure;
            let mut s_grid = vec![Complex64::default(); p_deg * nxy];
            let mut samples = vec![Complex64::default(); p_deg];
            for l in (split_index + 1) as usize..=decomp.truncation {
                let s = decomp.nodes[l];
                if s * s * k_min * k_min / 4.0 > 700.0 {
                    break;
                }
                let inv_s2 = 1.0 / (s * s);
                s_grid.iter_mut().for_each(|v| *v = Complex64::default());
                for (pos, &q) in system.positions.iter().zip(&system.charges) {
                    if q == 0.0 {
                        continue;
                    }
                    let st = self.xy_stencil(pos, part, &mut wx, &mut wy);
                    for (jx, &gx) in st.0.iter().enumerate() {
                        let fx = q * wx[jx];
                        for (jy, &gy) in st.1.iter().enumerate() {
                            let val = fx * wy[jy];
                            let g = gx * ny + gy;
                            for (c, &zc) in self.cheb.nodes.iter().enumerate() {
                                let dz = zc - pos[2];
                                s_grid[c * nxy + g].re += val * (-dz * dz * inv_s2).exp();
                            }
                        }
                    }
                }
                for c in 0..p_deg {
                    fft.forward(&mut s_grid[c * nxy..(c + 1) * nxy]);
                }
                // scale by the per-Gaussian kernel and accumulate into D
                let v_h = (self.box_lengths[0] / nx as f64) * (self.box_lengths[1] / ny as f64);
                let scale0 = std::f64::consts::PI
                    / (self.box_lengths[0] * self.box_lengths[1])
                    * v_h
                    * v_h;
                for g in 0..nxy {
                    let (gx, gy) = (g / ny, g % ny);
                    if gx == 0 && gy == 0 {
                        continue; // k = 0 handled stably
                    }
                    let kx = 2.0 * std::f64::consts::PI * mode_index(gx, nx) as f64
                        / self.box_lengths[0];
                    let ky = 2.0 * std::f64::consts::PI * mode_index(gy, ny) as f64
                        / self.box_lengths[1];
                    let k2 = kx * kx + ky * ky;
                    let arg = s * s * k2 / 4.0;
                    if arg > 700.0 {
                        continue;
                    }
                    let hat = part.windows[0].hat(kx) * part.windows[1].hat(ky);
                    let a = scale0 * decomp.weights[l] * s * s * (-arg).exp() / (hat * hat);
                    for c in 0..p_deg {
                        samples[c] = s_grid[c * nxy + g];
                    }
                    let coeffs = self.cheb.coeffs_from_samples_complex(&samples);
                    for (nn, &co) in coeffs.iter().enumerate() {
                        d_grid[nn * nxy + g] += co * a;
                    }
                }
            }
        }

        // backward FFTs per Chebyshev order
        for nn in 0..p_deg {
            fft.backward(&mut d_grid[nn * nxy..(nn + 1) * nxy]);
        }

        // gather: window stencil in x,y, Chebyshev evaluation in z
        let k0 = kzero_column(system, decomp, split_index, &self.cheb.nodes);
        let k0_coeffs = self.cheb.coeffs_from_samples(&k0);
        let mut out = vec![0.0; n];
        let mut v_n = vec![0.0; p_deg];
        for (i, pos) in system.positions.iter().enumerate() {
            let st = self.xy_stencil(pos, part, &mut wx, &mut wy);
            v_n.iter_mut().for_each(|v| *v = 0.0);
            for (jx, &gx) in st.0.iter().enumerate() {
                for (jy, &gy) in st.1.iter().enumerate() {
                    let wxy = wx[jx] * wy[jy];
                    let g = gx * ny + gy;
                    for (nn, v) in v_n.iter_mut().enumerate() {
                        *v += wxy * d_grid[nn * nxy + g].re;
                    }
                }
            }
            let t = self.cheb.to_unit(pos[2]);
            out[i] = clenshaw_half_weight(&v_n, t)
                + prefactor * clenshaw_half_weight(&k0_coeffs, t);
        }
        out
    }

    fn xy_stencil(
        &self,
        pos: &[f64; 3],
        part: &FftPart,
        wx: &mut [f64],
        wy: &mut [f64],
    ) -> (Vec<usize>, Vec<usize>) {
        let [nx, ny] = self.counts;
        let mut ix = Vec::with_capacity(wx.len());
        let mut iy = Vec::with_capacity(wy.len());
        for (axis, (buf, idx, n)) in
            [(&mut *wx, &mut ix, nx), (&mut *wy, &mut iy, ny)].into_iter().enumerate()
        {
            let (buf, idx, n) = (buf, idx, n);
            let l = self.box_lengths[axis];
            let h = l / n as f64;
            let frac = (pos[axis] + l / 2.0) / h;
            let g0 = frac.round();
            let u = (frac - g0) * h;
            part.tables[axis].weights_into(u, buf);
            let hw = (part.windows[axis].support_points as isize - 1) / 2;
            for d in -hw..=hw {
                idx.push((g0 as isize + d).rem_euclid(n as isize) as usize);
            }
        }
        (ix, iy)
    }
}

/// k = 0 mode of the long-range field at the Chebyshev nodes, computed with
/// the monopole subtracted analytically: sum_l w_l s_l^2 sum_j q_j
/// expm1(-(z_c - z_j)^2 / s_l^2). The dropped sum_l w_l s_l^2 * (sum_j q_j)
/// term vanishes for neutral systems and would otherwise amplify roundoff
/// by b^l.
fn kzero_column(
    system: &ParticleSystem,
    decomp: &SogDecomposition,
    split_index: isize,
    nodes: &[f64],
) -> Vec<f64> {
    let mut out = vec![0.0; nodes.len()];
    for l in (split_index + 1) as usize..=decomp.truncation {
        let s = decomp.nodes[l];
        let coef = decomp.weights[l] * s * s;
        let inv_s2 = 1.0 / (s * s);
        let mut column_max = 0.0f64;
        for (c, &zc) in nodes.iter().enumerate() {
            let mut acc = 0.0;
            for (pos, &q) in system.positions.iter().zip(&system.charges) {
                let dz = zc - pos[2];
                acc += q * (-dz * dz * inv_s2).exp_m1();
            }
            out[c] += coef * acc;
            column_max = column_max.max((coef * acc).abs());
        }
        // expm1 terms scale like w_l s_l^2 * (dz/s_l)^2 ~ b^{-l}: once they
        // stop contributing, the remaining tail is geometric and negligible
        if column_max < 1e-18 * out.iter().fold(1e-300f64, |a, &b| a.max(b.abs())) {
            break;
        }
    }
    out
}

/// All nonzero lattice modes with |k| <= kmax, one representative per
/// conjugate pair (kx > 0, or kx == 0 and ky > 0).
fn disk_half_modes(box_lengths: [f64; 3], kmax: f64) -> Vec<(f64, f64)> {
    let mut modes = Vec::new();
    let (bx, by) = (
        2.0 * std::f64::consts::PI / box_lengths[0],
        2.0 * std::f64::consts::PI / box_lengths[1],
    );
    let nx_max = (kmax / bx).floor() as i64;
    let ny_max = (kmax / by).floor() as i64;
    for nx in 0..=nx_max {
        for ny in -ny_max..=ny_max {
            if nx == 0 && ny <= 0 {
                continue;
            }
            let (kx, ky) = (nx as f64 * bx, ny as f64 * by);
            if kx * kx + ky * ky <= kmax * kmax {
                modes.push((kx, ky));
            }
        }
    }
    modes
}

/// Taylor-combined kernel coefficients for the FFT path:
/// a[p][k] = (pi Vh^2 / (Lx Ly)) ((-1)^p / p!) |W^(k)|^-2
///           sum_{l>m} w_l s_l^2 (L_z/s_l)^{2p} e^{-s_l^2 k^2 / 4},
/// with the k = 0 entry zeroed (handled by the stable direct column).
fn build_taylor_coeffs(
    decomp: &SogDecomposition,
    split_index: isize,
    box_lengths: [f64; 3],
    counts: [usize; 2],
    taylor_order: usize,
    windows: &[AxisWindow; 2],
) -> Vec<f64> {
    let [nx, ny] = counts;
    let lz = box_lengths[2];
    let v_h = (box_lengths[0] / nx as f64) * (box_lengths[1] / ny as f64);
    let measure = std::f64::consts::PI * v_h * v_h / (box_lengths[0] * box_lengths[1]);
    let hat_x: Vec<f64> = (0..nx)
        .map(|i| {
            windows[0]
                .hat(2.0 * std::f64::consts::PI * mode_index(i, nx) as f64 / box_lengths[0])
        })
        .collect();
    let hat_y: Vec<f64> = (0..ny)
        .map(|i| {
            windows[1]
                .hat(2.0 * std::f64::consts::PI * mode_index(i, ny) as f64 / box_lengths[1])
        })
        .collect();
    let mut a = vec![0.0; taylor_order * nx * ny];
    for gx in 0..nx {
        let kx = 2.0 * std::f64::consts::PI * mode_index(gx, nx) as f64 / box_lengths[0];
        for gy in 0..ny {
            if gx == 0 && gy == 0 {
                continue;
            }
            let ky = 2.0 * std::f64::consts::PI * mode_index(gy, ny) as f64 / box_lengths[1];
            let k2 = kx * kx + ky * ky;
            let hat2 = (hat_x[gx] * hat_y[gy]).powi(2);
            for p in 0..taylor_order {
                let mut sum = 0.0;
                for l in (split_index + 1) as usize..=decomp.truncation {
                    let s = decomp.nodes[l];
                    let arg = s * s * k2 / 4.0;
                    if arg > 700.0 {
                        break;
                    }
                    sum += decomp.weights[l] * s * s * (lz / s).powi(2 * p as i32) * (-arg).exp();
                }
                let sign = if p % 2 == 0 { 1.0 } else { -1.0 };
                a[p * nx * ny + gx * ny + gy] =
                    measure * sign * (-ln_factorial(p)).exp() * sum / hat2;
            }
        }
    }
    a
}

/// Choose between the direct and FFT-accelerated long-range variants from
/// the cost model: the direct variant pays `c_rat`-weighted complex
/// exponentials on the full mode disk per particle, the FFT variant pays
/// window stencils plus grid transforms.
pub fn select_long_mode(
    box_lengths: [f64; 3],
    kmax: f64,
    cheb_degree: usize,
    taylor_order: usize,
    support: usize,
    n_particles: usize,
    c_rat: f64,
) -> LongMode {
    let modes_disk =
        (kmax * kmax * box_lengths[0] * box_lengths[1] / (4.0 * std::f64::consts::PI)).max(1.0);
    let direct_cost = c_rat * cheb_degree as f64 * modes_disk;
    let counts = |l: f64| 2.0 * (kmax * l / (2.0 * std::f64::consts::PI)).ceil().max(1.0);
    let grid_work = counts(box_lengths[0]) * counts(box_lengths[1]) * cheb_degree as f64
        * (n_particles as f64).ln().max(1.0)
        / n_particles as f64;
    let fft_cost = (cheb_degree * support * support * (taylor_order + 1)) as f64 + grid_work;
    if direct_cost <= fft_cost {
        LongMode::Direct
    } else {
        LongMode::Fft
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_system(n: usize, l: [f64; 3], seed: u64) -> ParticleSystem {
        random_system_zspan(n, l, 1.0, seed)
    }

    /// `z_fraction` < 1 confines particles to a central sub-slab so that all
    /// pair separations stay within the Taylor lemma's interval.
    fn random_system_zspan(n: usize, l: [f64; 3], z_fraction: f64, seed: u64) -> ParticleSystem {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let zh = z_fraction * l[2] / 2.0;
        let positions = (0..n)
            .map(|_| {
                [
                    rng.random_range(-l[0] / 2.0..l[0] / 2.0),
                    rng.random_range(-l[1] / 2.0..l[1] / 2.0),
                    rng.random_range(-zh..zh),
                ]
            })
            .collect();
        let mut charges: Vec<f64> =
            (0..n).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        if n % 2 == 1 {
            charges[n - 1] = 0.0;
        }
        ParticleSystem::new(positions, charges, l).unwrap()
    }

    #[test]
    fn kzero_single_pair_matches_hand_formula() {
        let l = [4.0, 4.0, 2.0];
        let decomp = SogDecomposition::new(1.62976708826776469, 0.9, 40).unwrap();
        let m = -1isize; // everything long-range
        // kmax below the smallest lattice mode: only k = 0 contributes
        let plan = LongRangePlan::direct(&decomp, l, 1e-9, 12).unwrap();
        // placing the pair on Chebyshev nodes makes interpolation exact, so
        // the hand formula applies without an interpolation-error budget
        let (z1, z2) = (plan.cheb.nodes[3], plan.cheb.nodes[9]);
        let sys = ParticleSystem::new(
            vec![[0.3, -1.0, z1], [0.3, -1.0, z2]],
            vec![1.0, -1.0],
            l,
        )
        .unwrap();
        let phi = plan.evaluate(&sys, &decomp, m).unwrap();
        // phi(r_1) = (pi/(Lx Ly)) sum_l w_l s_l^2 q_2 (e^{-z12^2/s_l^2} - 1)
        let z12 = z1 - z2;
        let mut expect = 0.0;
        for l_idx in 0..=decomp.truncation {
            let s = decomp.nodes[l_idx];
            expect += decomp.weights[l_idx] * s * s * (-z12 * z12 / (s * s)).exp_m1();
        }
        expect *= -std::f64::consts::PI / (l[0] * l[1]);
        assert_relative_eq!(phi[0], expect, max_relative = 1e-11);
    }

    #[test]
    fn zero_charges_zero_output() {
        let l = [4.0, 4.0, 2.0];
        let sys = ParticleSystem::new(
            vec![[0.1, 0.2, 0.3], [-1.0, 0.5, -0.2]],
            vec![0.0, 0.0],
            l,
        )
        .unwrap();
        let decomp = SogDecomposition::new(1.62976708826776469, 0.9, 30).unwrap();
        let direct = LongRangePlan::direct(&decomp, l, 3.0, 8).unwrap();
        assert!(direct.evaluate(&sys, &decomp, 2).unwrap().iter().all(|&v| v == 0.0));
        let fft = LongRangePlan::fft(
            &decomp,
            2,
            l,
            [8, 8],
            8,
            8,
            WindowKind::KaiserBessel,
            5,
            None,
            10,
        )
        .unwrap();
        assert!(fft.evaluate(&sys, &decomp, 2).unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn rejects_empty_long_range_set() {
        let l = [4.0, 4.0, 2.0];
        let sys = random_system(4, l, 1);
        let decomp = SogDecomposition::new(2.0, 0.9, 10).unwrap();
        let plan = LongRangePlan::direct(&decomp, l, 3.0, 8).unwrap();
        assert!(plan.evaluate(&sys, &decomp, 10).is_err());
    }

    /// Algorithm 2 (FFT + Taylor) against Algorithm 3 (direct), cubic-ish box.
    #[test]
    fn fft_matches_direct_cubic() {
        let l = [4.0, 4.0, 3.0];
        // pair separations within [-L_z/2, L_z/2]: the Q = 16 Taylor
        // remainder then sits below the comparison tolerance
        let sys = random_system_zspan(20, l, 0.5, 9);
        let decomp = SogDecomposition::new(1.48783512395703226, 0.8, 60).unwrap();
        let m = decomp.range_split(l[2], 0.4).unwrap();
        assert!(m >= 0 && (m as usize) < decomp.truncation);
        // omitted-mode content at |k| = kmax is e^{-(kmax s/2)^2} ~ 1e-12
        let s_next = decomp.nodes[(m + 1) as usize];
        let kmax = 2.0 * (27.6f64).sqrt() / s_next;
        let direct = LongRangePlan::direct(&decomp, l, kmax, 24).unwrap();
        let fft = LongRangePlan::fft(
            &decomp,
            m,
            l,
            [22, 22],
            24,
            16,
            WindowKind::KaiserBessel,
            21,
            None,
            10,
        )
        .unwrap();
        let a = direct.evaluate(&sys, &decomp, m).unwrap();
        let b = fft.evaluate(&sys, &decomp, m).unwrap();
        let scale = a.iter().fold(0.0f64, |x, &y| x.max(y.abs()));
        for (x, y) in a.iter().zip(&b) {
            assert!(
                (x - y).abs() <= 1e-9 * scale,
                "direct {x} vs fft {y} (scale {scale:e})"
            );
        }
    }

    /// Same comparison in a strongly confined slab.
    #[test]
    fn fft_matches_direct_slab() {
        let l = [6.0, 6.0, 0.06];
        let sys = random_system(16, l, 10);
        let decomp = SogDecomposition::new(1.48783512395703226, 0.5, 60).unwrap();
        let m = -1isize; // slab: everything long-range
        let kmax = 2.0 * (27.6f64).sqrt() / decomp.nodes[0];
        let direct = LongRangePlan::direct(&decomp, l, kmax, 10).unwrap();
        let counts = [
            2 * ((kmax * l[0] / (2.0 * std::f64::consts::PI)).ceil() as usize).max(11),
            2 * ((kmax * l[1] / (2.0 * std::f64::consts::PI)).ceil() as usize).max(11),
        ];
        let fft = LongRangePlan::fft(
            &decomp,
            m,
            l,
            counts,
            10,
            16,
            WindowKind::KaiserBessel,
            21,
            None,
            10,
        )
        .unwrap();
        let a = direct.evaluate(&sys, &decomp, m).unwrap();
        let b = fft.evaluate(&sys, &decomp, m).unwrap();
        let scale = a.iter().fold(0.0f64, |x, &y| x.max(y.abs()));
        for (x, y) in a.iter().zip(&b) {
            assert!(
                (x - y).abs() <= 1e-9 * scale,
                "direct {x} vs fft {y} (scale {scale:e})"
            );
        }
    }

    /// Taylor-accelerated path against the explicit per-Gaussian path: the
    /// difference obeys the Lagrange remainder bound.
    #[test]
    fn taylor_error_within_lagrange_bound() {
        let l = [6.0, 6.0, 0.5];
        // the Lagrange bound covers expansion arguments in [-L_z/2, L_z/2];
        // the argument here is a pair separation z_i - z_j, so particles stay
        // inside a half-height sub-slab
        let sys = random_system_zspan(14, l, 0.5, 13);
        let decomp = SogDecomposition::new(1.48783512395703226, 0.7, 60).unwrap();
        let m = -1isize;
        let eta_eff = decomp.nodes[0] / l[2];
        let kmax = 2.0 * (25.0f64.ln()).sqrt() / decomp.nodes[0] * 1.3;
        let counts = [
            2 * ((kmax * l[0] / (2.0 * std::f64::consts::PI)).ceil() as usize).max(4),
            2 * ((kmax * l[1] / (2.0 * std::f64::consts::PI)).ceil() as usize).max(4),
        ];
        let make = |q: usize| {
            LongRangePlan::fft(
                &decomp,
                m,
                l,
                counts,
                14,
                q,
                WindowKind::KaiserBessel,
                11,
                None,
                10,
            )
            .unwrap()
        };
        let reference = make(2).evaluate_fft_per_gaussian(&sys, &decomp, m).unwrap();
        let scale = reference.iter().fold(0.0f64, |x, &y| x.max(y.abs()));
        let mut last = f64::INFINITY;
        for q in 2..=8 {
            let plan = make(q);
            let taylor = plan.evaluate(&sys, &decomp, m).unwrap();
            let diff = taylor
                .iter()
                .zip(&reference)
                .fold(0.0f64, |x, (a, b)| x.max((a - b).abs()))
                / scale;
            let bound = 10.0
                * (-crate::math::ln_factorial(q)).exp()
                / (2.0 * eta_eff).powi(2 * q as i32);
            assert!(diff <= bound.max(1e-15), "Q={q}: diff {diff:e} > bound {bound:e}");
            // decays with Q until the floor
            assert!(diff <= last * 1.5 + 1e-14);
            last = diff;
        }
    }

    #[test]
    fn mode_selection_examples() {
        // cubic box: a couple of modes, direct wins
        let cubic = select_long_mode([20.0, 20.0, 20.0], 0.4, 14, 8, 9, 1000, 50.0);
        assert_eq!(cubic, LongMode::Direct);
        // strongly confined slab: the mode disk explodes, FFT wins
        let slab = select_long_mode([100.0, 100.0, 1.0], 12.0, 8, 8, 9, 1000, 50.0);
        assert_eq!(slab, LongMode::Fft);
    }
}
