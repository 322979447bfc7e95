//! Thin complex FFT wrappers over rustfft for 2D/3D row-major arrays.

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use std::sync::Arc;

pub struct Fft3 {
    pub dims: [usize; 3],
    axis_plans: Vec<(Arc<dyn Fft<f64>>, Arc<dyn Fft<f64>>)>,
    scratch: Vec<Complex64>,
    lane: Vec<Complex64>,
}

impl Fft3 {
    /// dims = [nx, ny, nz] with z contiguous (index (ix*ny + iy)*nz + iz).
    pub fn new(dims: [usize; 3]) -> Self {
        let mut planner = FftPlanner::new();
        let axis_plans: Vec<_> = dims
            .iter()
            .map(|&n| (planner.plan_fft_forward(n), planner.plan_fft_inverse(n)))
            .collect();
        let max_scratch = axis_plans
            .iter()
            .map(|(f, b)| f.get_inplace_scratch_len().max(b.get_inplace_scratch_len()))
            .max()
            .unwrap_or(0);
        let max_lane = dims.iter().copied().max().unwrap_or(0);
        Self {
            dims,
            axis_plans,
            scratch: vec![Complex64::default(); max_scratch],
            lane: vec![Complex64::default(); max_lane],
        }
    }

    pub fn forward(&mut self, data: &mut [Complex64]) {
        self.transform(data, true);
    }

    /// Unnormalized inverse (sum of e^{+i...} terms, no 1/N factor).
    pub fn backward(&mut self, data: &mut [Complex64]) {
        self.transform(data, false);
    }

    fn transform(&mut self, data: &mut [Complex64], forward: bool) {
        let [nx, ny, nz] = self.dims;
        assert_eq!(data.len(), nx * ny * nz);
        // z: contiguous lanes
        {
            let plan =
                if forward { &self.axis_plans[2].0 } else { &self.axis_plans[2].1 }.clone();
            for lane in data.chunks_exact_mut(nz) {
                plan.process_with_scratch(lane, &mut self.scratch);
            }
        }
        // y: stride nz
        {
            let plan =
                if forward { &self.axis_plans[1].0 } else { &self.axis_plans[1].1 }.clone();
            for ix in 0..nx {
                for iz in 0..nz {
                    let base = ix * ny * nz + iz;
                    for iy in 0..ny {
                        self.lane[iy] = data[base + iy * nz];
                    }
                    plan.process_with_scratch(&mut self.lane[..ny], &mut self.scratch);
                    for iy in 0..ny {
                        data[base + iy * nz] = self.lane[iy];
                    }
                }
            }
        }
        // x: stride ny*nz
        {
            let plan =
                if forward { &self.axis_plans[0].0 } else { &self.axis_plans[0].1 }.clone();
            for iy in 0..ny {
                for iz in 0..nz {
                    let base = iy * nz + iz;
                    for ix in 0..nx {
                        self.lane[ix] = data[base + ix * ny * nz];
                    }
                    plan.process_with_scratch(&mut self.lane[..nx], &mut self.scratch);
                    for ix in 0..nx {
                        data[base + ix * ny * nz] = self.lane[ix];
                    }
                }
            }
        }
    }
}

pub struct Fft2 {
    pub dims: [usize; 2],
    axis_plans: Vec<(Arc<dyn Fft<f64>>, Arc<dyn Fft<f64>>)>,
    scratch: Vec<Complex64>,
    lane: Vec<Complex64>,
}

impl Fft2 {
    /// dims = [nx, ny] with y contiguous (index ix*ny + iy).
    pub fn new(dims: [usize; 2]) -> Self {
        let mut planner = FftPlanner::new();
        let axis_plans: Vec<_> = dims
            .iter()
            .map(|&n| (planner.plan_fft_forward(n), planner.plan_fft_inverse(n)))
            .collect();
        let max_scratch = axis_plans
            .iter()
            .map(|(f, b)| f.get_inplace_scratch_len().max(b.get_inplace_scratch_len()))
            .max()
            .unwrap_or(0);
        let max_lane = dims.iter().copied().max().unwrap_or(0);
        Self {
            dims,
            axis_plans,
            scratch: vec![Complex64::default(); max_scratch],
            lane: vec![Complex64::default(); max_lane],
        }
    }

    pub fn forward(&mut self, data: &mut [Complex64]) {
        self.transform(data, true);
    }

    pub fn backward(&mut self, data: &mut [Complex64]) {
        self.transform(data, false);
    }

    fn transform(&mut self, data: &mut [Complex64], forward: bool) {
        let [nx, ny] = self.dims;
        assert_eq!(data.len(), nx * ny);
        {
            let plan =
                if forward { &self.axis_plans[1].0 } else { &self.axis_plans[1].1 }.clone();
            for lane in data.chunks_exact_mut(ny) {
                plan.process_with_scratch(lane, &mut self.scratch);
            }
        }
        {
            let plan =
                if forward { &self.axis_plans[0].0 } else { &self.axis_plans[0].1 }.clone();
            for iy in 0..ny {
                for ix in 0..nx {
                    self.lane[ix] = data[ix * ny + iy];
                }
                plan.process_with_scratch(&mut self.lane[..nx], &mut self.scratch);
                for ix in 0..nx {
                    data[ix * ny + iy] = self.lane[ix];
                }
            }
        }
    }
}

/// Signed mode index for bin i of an n-point DFT.
#[inline]
pub fn mode_index(i: usize, n: usize) -> isize {
    if i <= n / 2 {
        i as isize
    } else {
        i as isize - n as isize
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn round_trip_3d() {
        let dims = [4usize, 6, 8];
        let n = dims.iter().product::<usize>();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let orig: Vec<Complex64> = (0..n)
            .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect();
        let mut data = orig.clone();
        let mut fft = Fft3::new(dims);
        fft.forward(&mut data);
        fft.backward(&mut data);
        let scale = n as f64;
        for (a, b) in data.iter().zip(&orig) {
            assert_relative_eq!(a.re / scale, b.re, epsilon = 1e-12);
            assert_relative_eq!(a.im / scale, b.im, epsilon = 1e-12);
        }
    }

    #[test]
    fn forward_matches_plane_wave() {
        // a single plane wave concentrates in one bin
        let dims = [8usize, 4, 6];
        let n: usize = dims.iter().product();
        let (kx, ky, kz) = (3usize, 1, 4);
        let mut data = vec![Complex64::default(); n];
        for ix in 0..dims[0] {
            for iy in 0..dims[1] {
                for iz in 0..dims[2] {
                    let phase = 2.0 * std::f64::consts::PI * (kx * ix) as f64 / dims[0] as f64
                        + 2.0 * std::f64::consts::PI * (ky * iy) as f64 / dims[1] as f64
                        + 2.0 * std::f64::consts::PI * (kz * iz) as f64 / dims[2] as f64;
                    data[(ix * dims[1] + iy) * dims[2] + iz] =
                        Complex64::new(phase.cos(), phase.sin());
                }
            }
        }
        let mut fft = Fft3::new(dims);
        // rustfft forward uses e^{-i}: the +k plane wave lands at bin k
        fft.forward(&mut data);
        for ix in 0..dims[0] {
            for iy in 0..dims[1] {
                for iz in 0..dims[2] {
                    let v = data[(ix * dims[1] + iy) * dims[2] + iz];
                    let expect = if (ix, iy, iz) == (kx, ky, kz) { n as f64 } else { 0.0 };
                    assert!(
                        (v.re - expect).abs() < 1e-9 && v.im.abs() < 1e-9,
                        "bin {ix},{iy},{iz}: {v}"
                    );
                }
            }
        }
    }

    #[test]
    fn round_trip_2d() {
        let dims = [10usize, 6];
        let n = dims[0] * dims[1];
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let orig: Vec<Complex64> =
            (0..n).map(|_| Complex64::new(rng.random_range(-1.0..1.0), 0.0)).collect();
        let mut data = orig.clone();
        let mut fft = Fft2::new(dims);
        fft.forward(&mut data);
        fft.backward(&mut data);
        for (a, b) in data.iter().zip(&orig) {
            assert_relative_eq!(a.re / n as f64, b.re, epsilon = 1e-12);
        }
    }

    #[test]
    fn mode_indices() {
        assert_eq!(mode_index(0, 8), 0);
        assert_eq!(mode_index(3, 8), 3);
        assert_eq!(mode_index(4, 8), 4);
        assert_eq!(mode_index(5, 8), -3);
        assert_eq!(mode_index(7, 8), -1);
    }
}
