//! Fourier spectral solver for the mid-range potential.
//!
//! The mid-range band of Gaussians (s_l <= eta*L_z) is evaluated on a uniform
//! grid: particles are smeared with a separable window, a 3D FFT moves the
//! field to Fourier space, each mode is scaled by the precomputed kernel
//! multiplier, and the inverse FFT plus window gathering interpolates the
//! potential back to the particles. The grid is extended in z only (window
//! margin plus zero padding); the spectrum has exactly the grid's size, i.e.
//! no upsampling anywhere.

use crate::error::{Error, Result};
use crate::fft::{mode_index, Fft3};
use crate::geometry::ParticleSystem;
use crate::sog::SogDecomposition;
use crate::windows::{AxisWindow, WindowKind, WindowTable};
use rustfft::num_complex::Complex64;

/// Grid geometry for the mid-range solver: interior counts, meshes, and the
/// z extension (window margin delta_z, then zero padding factor lambda_z).
#[derive(Debug, Clone)]
pub struct GridSpec {
    pub box_lengths: [f64; 3],
    /// Interior grid counts (I_x, I_y, I_z), all even.
    pub counts: [usize; 3],
    pub mesh: [f64; 3],
    /// Window margin in z (>= 2 H_z Gaussian, >= 2.6 H_z KB/ES).
    pub delta_z: f64,
    pub lambda_z: f64,
    /// Extended z count and length: I_z* even, L_z* = h_z I_z*.
    pub i_z_star: usize,
    pub l_z_star: f64,
}

impl GridSpec {
    pub fn new(
        box_lengths: [f64; 3],
        counts_in: [usize; 3],
        delta_z: f64,
        lambda_z: f64,
    ) -> Result<Self> {
        if counts_in.iter().any(|&c| c < 2) {
            return Err(Error::InvalidParameter("grid counts must be >= 2".into()));
        }
        if !(lambda_z >= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "zero-padding factor must be >= 1, got {lambda_z}"
            )));
        }
        // even counts (round up)
        let counts = [
            counts_in[0] + counts_in[0] % 2,
            counts_in[1] + counts_in[1] % 2,
            counts_in[2] + counts_in[2] % 2,
        ];
        let mesh = [
            box_lengths[0] / counts[0] as f64,
            box_lengths[1] / counts[1] as f64,
            box_lengths[2] / counts[2] as f64,
        ];
        let delta_iz = (delta_z / mesh[2]).ceil() as usize;
        let i_z_star =
            2 * ((lambda_z * (counts[2] + delta_iz) as f64) / 2.0).ceil() as usize;
        let l_z_star = mesh[2] * i_z_star as f64;
        Ok(Self { box_lengths, counts, mesh, delta_z, lambda_z, i_z_star, l_z_star })
    }

    /// Extended-space dims actually transformed: [I_x, I_y, I_z*].
    pub fn fft_dims(&self) -> [usize; 3] {
        [self.counts[0], self.counts[1], self.i_z_star]
    }
}

/// Everything needed to run the mid-range solver: grid, windows with their
/// polynomial tables, and the per-mode multiplier.
pub struct MidPlan {
    pub grid: GridSpec,
    pub split_index: isize,
    pub windows: [AxisWindow; 3],
    tables: [WindowTable; 3],
    /// Per-mode real multiplier; absorbs the kernel, the inverse window
    /// sandwich and every measure constant of the transform chain.
    multiplier: Vec<f64>,
}

impl MidPlan {
    pub fn new(
        decomp: &SogDecomposition,
        grid: GridSpec,
        split_index: isize,
        kind: WindowKind,
        supports: [usize; 3],
        shape: Option<f64>,
        poly_degree: usize,
    ) -> Result<Self> {
        if split_index < 0 {
            return Err(Error::InvalidParameter(
                "mid-range plan needs a non-negative split index".into(),
            ));
        }
        let m = split_index as usize;
        if m > decomp.truncation {
            return Err(Error::InvalidParameter(format!(
                "split index {m} beyond truncation {}",
                decomp.truncation
            )));
        }
        let windows = [
            AxisWindow::new(kind, supports[0], grid.mesh[0], shape)?,
            AxisWindow::new(kind, supports[1], grid.mesh[1], shape)?,
            AxisWindow::new(kind, supports[2], grid.mesh[2], shape)?,
        ];
        // Window bandwidth must stay below the narrowest mid-range Gaussian
        // (Theorem hypothesis H_d^2/S < s_0^2); otherwise the scaling step
        // amplifies instead of damping.
        let s0 = decomp.nodes[0];
        for w in &windows {
            let bw = w.half_width * w.half_width / w.effective_shape();
            if bw >= s0 * s0 {
                return Err(Error::InvalidParameter(format!(
                    "window support too wide: H^2/S = {bw:.3e} >= s_0^2 = {:.3e}; \
                     increase the grid count or reduce the support",
                    s0 * s0
                )));
            }
        }
        // The z stencil must fit inside the extended box for every source in
        // [-L_z/2, L_z/2].
        let margin = (grid.l_z_star - grid.box_lengths[2]) / 2.0;
        if margin < windows[2].half_width + grid.mesh[2] {
            return Err(Error::InvalidParameter(format!(
                "window support exceeds the extended box: margin {margin:.3e} < H_z + h_z = {:.3e}",
                windows[2].half_width + grid.mesh[2]
            )));
        }
        if windows
            .iter()
            .zip(grid.fft_dims())
            .any(|(w, n)| w.support_points > n)
        {
            return Err(Error::InvalidParameter(
                "window support exceeds the grid period".into(),
            ));
        }
        let tables = [
            windows[0].build_table(poly_degree)?,
            windows[1].build_table(poly_degree)?,
            windows[2].build_table(poly_degree)?,
        ];
        let multiplier = build_multiplier(decomp, &grid, m, &windows);
        Ok(Self { grid, split_index, windows, tables, multiplier })
    }

    /// Smear charges onto the extended grid (separable window stencils; x,y
    /// wrap periodically, z relies on the extension margin).
    pub fn spread(&self, system: &ParticleSystem) -> Vec<Complex64> {
        let dims = self.grid.fft_dims();
        let mut grid = vec![Complex64::default(); dims[0] * dims[1] * dims[2]];
        let mut wx = vec![0.0; self.windows[0].support_points];
        let mut wy = vec![0.0; self.windows[1].support_points];
        let mut wz = vec![0.0; self.windows[2].support_points];
        for (p, &q) in system.positions.iter().zip(&system.charges) {
            let st = self.stencil(p, &mut wx, &mut wy, &mut wz);
            for (jx, &gx) in st.ix.iter().enumerate() {
                let fx = q * wx[jx];
                for (jy, &gy) in st.iy.iter().enumerate() {
                    let fxy = fx * wy[jy];
                    let row = (gx * dims[1] + gy) * dims[2] + st.iz0;
                    for (jz, w) in wz.iter().enumerate() {
                        grid[row + jz].re += fxy * w;
                    }
                }
            }
        }
        grid
    }

    /// Interpolate the scaled grid back to the particles (adjoint stencil).
    pub fn gather(&self, grid: &[Complex64], system: &ParticleSystem) -> Vec<f64> {
        let dims = self.grid.fft_dims();
        let mut out = vec![0.0; system.len()];
        let mut wx = vec![0.0; self.windows[0].support_points];
        let mut wy = vec![0.0; self.windows[1].support_points];
        let mut wz = vec![0.0; self.windows[2].support_points];
        for (i, p) in system.positions.iter().enumerate() {
            let st = self.stencil(p, &mut wx, &mut wy, &mut wz);
            let mut acc = 0.0;
            for (jx, &gx) in st.ix.iter().enumerate() {
                for (jy, &gy) in st.iy.iter().enumerate() {
                    let wxy = wx[jx] * wy[jy];
                    let row = (gx * dims[1] + gy) * dims[2] + st.iz0;
                    let mut lane = 0.0;
                    for (jz, w) in wz.iter().enumerate() {
                        lane += grid[row + jz].re * w;
                    }
                    acc += wxy * lane;
                }
            }
            out[i] = acc;
        }
        out
    }

    fn stencil(
        &self,
        p: &[f64; 3],
        wx: &mut [f64],
        wy: &mut [f64],
        wz: &mut [f64],
    ) -> Stencil {
        let g = &self.grid;
        let half = |w: &AxisWindow| (w.support_points as isize - 1) / 2;

        // periodic axes
        let mut ix = Vec::with_capacity(wx.len());
        let mut iy = Vec::with_capacity(wy.len());
        for (axis, (buf, idx)) in [(&mut *wx, &mut ix), (&mut *wy, &mut iy)]
            .into_iter()
            .enumerate()
        {
            let (buf, idx) = (buf, idx);
            let n = g.counts[axis] as isize;
            let h = g.mesh[axis];
            let l = g.box_lengths[axis];
            let frac = (p[axis] + l / 2.0) / h;
            let g0 = frac.round();
            let u = (frac - g0) * h;
            self.tables[axis].weights_into(u, buf);
            let hw = half(&self.windows[axis]);
            for d in -hw..=hw {
                idx.push((g0 as isize + d).rem_euclid(n) as usize);
            }
        }
        // free axis: no wrap, the margin guarantees bounds
        let h = g.mesh[2];
        let frac = (p[2] + g.l_z_star / 2.0) / h;
        let g0 = frac.round();
        let u = (frac - g0) * h;
        self.tables[2].weights_into(u, wz);
        let iz0 = (g0 as isize - half(&self.windows[2])) as usize;
        debug_assert!(iz0 + wz.len() <= g.i_z_star);
        Stencil { ix, iy, iz0 }
    }

    /// Run the full pipeline. `scratch` supplies the FFT plans (reusable
    /// across evaluations of the same plan).
    pub fn evaluate(&self, system: &ParticleSystem, fft: &mut Fft3) -> Vec<f64> {
        assert_eq!(fft.dims, self.grid.fft_dims());
        let mut grid = self.spread(system);
        fft.forward(&mut grid);
        for (g, m) in grid.iter_mut().zip(&self.multiplier) {
            *g *= *m;
        }
        fft.backward(&mut grid);
        self.gather(&grid, system)
    }

    pub fn fft(&self) -> Fft3 {
        Fft3::new(self.grid.fft_dims())
    }
}

struct Stencil {
    ix: Vec<usize>,
    iy: Vec<usize>,
    iz0: usize,
}

/// Per-mode multiplier: (4 pi V_h^2 / V*) * (sqrt(pi)/4) sum_{l<=m} w_l s_l^3
/// e^{-s_l^2 k^2/4} / |W^(k)|^2. The k = 0 value is finite by construction.
fn build_multiplier(
    decomp: &SogDecomposition,
    grid: &GridSpec,
    m: usize,
    windows: &[AxisWindow; 3],
) -> Vec<f64> {
    let dims = grid.fft_dims();
    let v_h = grid.mesh.iter().product::<f64>();
    let v_star = grid.box_lengths[0] * grid.box_lengths[1] * grid.l_z_star;
    let measure = 4.0 * std::f64::consts::PI * v_h * v_h / v_star
        * (std::f64::consts::PI.sqrt() / 4.0);
    let lengths = [grid.box_lengths[0], grid.box_lengths[1], grid.l_z_star];

    // per-axis window transforms over this axis' mode set
    let hats: Vec<Vec<f64>> = (0..3)
        .map(|axis| {
            (0..dims[axis])
                .map(|i| {
                    let k = 2.0 * std::f64::consts::PI * mode_index(i, dims[axis]) as f64
                        / lengths[axis];
                    windows[axis].hat(k)
                })
                .collect()
        })
        .collect();

    let mut mult = vec![0.0; dims[0] * dims[1] * dims[2]];
    for ixx in 0..dims[0] {
        let kx = 2.0 * std::f64::consts::PI * mode_index(ixx, dims[0]) as f64 / lengths[0];
        for iyy in 0..dims[1] {
            let ky =
                2.0 * std::f64::consts::PI * mode_index(iyy, dims[1]) as f64 / lengths[1];
            let hat_xy = hats[0][ixx] * hats[1][iyy];
            let k2_xy = kx * kx + ky * ky;
            let base = (ixx * dims[1] + iyy) * dims[2];
            for izz in 0..dims[2] {
                let kz = 2.0 * std::f64::consts::PI * mode_index(izz, dims[2]) as f64
                    / lengths[2];
                let k2 = k2_xy + kz * kz;
                let mut kernel = 0.0;
                for l in 0..=m {
                    let s = decomp.nodes[l];
                    let arg = s * s * k2 / 4.0;
                    if arg > 700.0 {
                        break;
                    }
                    kernel += decomp.weights[l] * s * s * s * (-arg).exp();
                }
                let hat = hat_xy * hats[2][izz];
                mult[base + izz] = measure * kernel / (hat * hat);
            }
        }
    }
    mult
}
