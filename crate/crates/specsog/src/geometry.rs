//! Particle configurations, quasi-2D box geometry, minimum-image distances,
//! and cell-list neighbor search.
//!
//! The box is periodic in x and y and free in z: positions are wrapped
//! periodically in the first two axes while out-of-range z coordinates are
//! rejected outright.

use crate::error::{Error, Result};
use std::io::{BufRead, Write};
use std::path::Path;

pub const DEFAULT_NEUTRALITY_TOL: f64 = 1e-12;

/// N point charges in a box (L_x, L_y, L_z), periodic in x,y and free in z.
#[derive(Debug, Clone)]
pub struct ParticleSystem {
    pub positions: Vec<[f64; 3]>,
    pub charges: Vec<f64>,
    pub box_lengths: [f64; 3],
}

impl ParticleSystem {
    /// Validate and canonicalize a configuration. x and y are wrapped into
    /// [-L/2, L/2); z must already lie in [-L_z/2, L_z/2] (closed interval).
    pub fn new(
        positions: Vec<[f64; 3]>,
        charges: Vec<f64>,
        box_lengths: [f64; 3],
    ) -> Result<Self> {
        Self::with_neutrality_tol(positions, charges, box_lengths, DEFAULT_NEUTRALITY_TOL)
    }

    pub fn with_neutrality_tol(
        positions: Vec<[f64; 3]>,
        charges: Vec<f64>,
        box_lengths: [f64; 3],
        neutrality_tol: f64,
    ) -> Result<Self> {
        if positions.is_empty() {
            return Err(Error::InvalidSystem("need at least one particle".into()));
        }
        if positions.len() != charges.len() {
            return Err(Error::LengthMismatch(format!(
                "{} positions vs {} charges",
                positions.len(),
                charges.len()
            )));
        }
        if box_lengths.iter().any(|&l| !(l > 0.0) || !l.is_finite()) {
            return Err(Error::InvalidSystem(format!("box lengths must be positive, got {box_lengths:?}")));
        }
        if positions.iter().flatten().any(|v| !v.is_finite())
            || charges.iter().any(|q| !q.is_finite())
        {
            return Err(Error::InvalidSystem("non-finite position or charge".into()));
        }
        let qsum: f64 = charges.iter().sum();
        let qabs: f64 = charges.iter().map(|q| q.abs()).sum();
        if qsum.abs() > neutrality_tol * qabs {
            return Err(Error::InvalidSystem(format!(
                "system is not charge neutral: sum q = {qsum:e}, sum |q| = {qabs:e}"
            )));
        }
        let lz = box_lengths[2];
        for (i, p) in positions.iter().enumerate() {
            if p[2] < -lz / 2.0 || p[2] > lz / 2.0 {
                return Err(Error::InvalidSystem(format!(
                    "particle {i}: z = {} outside [-{}/2, {}/2] (z is not periodic)",
                    p[2], lz, lz
                )));
            }
        }
        let mut system = Self { positions, charges, box_lengths };
        system.canonicalize();
        Ok(system)
    }

    /// Wrap x,y into [-L/2, L/2); z and charges are untouched.
    fn canonicalize(&mut self) {
        let [lx, ly, _] = self.box_lengths;
        for p in &mut self.positions {
            p[0] = wrap_half_open(p[0], lx);
            p[1] = wrap_half_open(p[1], ly);
        }
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// Minimum-image displacement a - b: wrapped in x,y, raw difference in z.
    pub fn min_image(&self, a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
        [
            wrap_half_open(a[0] - b[0], self.box_lengths[0]),
            wrap_half_open(a[1] - b[1], self.box_lengths[1]),
            a[2] - b[2],
        ]
    }

    /// Plain-text reader: first data line "N Lx Ly Lz", then N lines
    /// "x y z q". Lines starting with '#' are comments.
    pub fn read_file(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        let reader = std::io::BufReader::new(file);
        let path_str = path.display().to_string();
        let mut header: Option<(usize, [f64; 3])> = None;
        let mut positions = Vec::new();
        let mut charges = Vec::new();
        for (lineno, line) in reader.lines().enumerate() {
            let line = line?;
            let lineno = lineno + 1;
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = trimmed.split_whitespace().collect();
            let parse = |s: &str, what: &str| -> Result<f64> {
                s.parse::<f64>().map_err(|_| Error::Parse {
                    path: path_str.clone(),
                    line: lineno,
                    message: format!("cannot parse {what} from '{s}'"),
                })
            };
            match header {
                None => {
                    if fields.len() != 4 {
                        return Err(Error::Parse {
                            path: path_str,
                            line: lineno,
                            message: format!("expected 'N Lx Ly Lz', got {} fields", fields.len()),
                        });
                    }
                    let n = fields[0].parse::<usize>().map_err(|_| Error::Parse {
                        path: path_str.clone(),
                        line: lineno,
                        message: format!("cannot parse particle count from '{}'", fields[0]),
                    })?;
                    let bx = [
                        parse(fields[1], "Lx")?,
                        parse(fields[2], "Ly")?,
                        parse(fields[3], "Lz")?,
                    ];
                    header = Some((n, bx));
                }
                Some((n, _)) => {
                    if positions.len() == n {
                        return Err(Error::Parse {
                            path: path_str,
                            line: lineno,
                            message: format!("more than the declared {n} particle lines"),
                        });
                    }
                    if fields.len() != 4 {
                        return Err(Error::Parse {
                            path: path_str,
                            line: lineno,
                            message: format!("expected 'x y z q', got {} fields", fields.len()),
                        });
                    }
                    positions.push([
                        parse(fields[0], "x")?,
                        parse(fields[1], "y")?,
                        parse(fields[2], "z")?,
                    ]);
                    charges.push(parse(fields[3], "q")?);
                }
            }
        }
        let (n, box_lengths) = header.ok_or_else(|| Error::Parse {
            path: path_str.clone(),
            line: 0,
            message: "empty particle file".into(),
        })?;
        if positions.len() != n {
            return Err(Error::Parse {
                path: path_str,
                line: 0,
                message: format!("declared {n} particles, found {}", positions.len()),
            });
        }
        Self::new(positions, charges, box_lengths)
    }

    pub fn write_file(&self, path: &Path) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(
            out,
            "{} {:.17e} {:.17e} {:.17e}",
            self.len(),
            self.box_lengths[0],
            self.box_lengths[1],
            self.box_lengths[2]
        )?;
        for (p, q) in self.positions.iter().zip(&self.charges) {
            writeln!(out, "{:.17e} {:.17e} {:.17e} {:.17e}", p[0], p[1], p[2], q)?;
        }
        Ok(())
    }
}

/// Wrap into [-L/2, L/2).
#[inline]
pub fn wrap_half_open(x: f64, l: f64) -> f64 {
    let w = x - l * (x / l + 0.5).floor();
    // guard against w == L/2 from rounding
    if w >= l / 2.0 {
        w - l
    } else {
        w
    }
}

/// Cell list over the quasi-2D box: periodic binning in x,y, plain binning in
/// z. `neighbors` returns a superset of all particles within the cutoff.
#[derive(Debug, Clone)]
pub struct CellList {
    cells: [usize; 3],
    cell_size: [f64; 3],
    box_lengths: [f64; 3],
    cutoff: f64,
    /// CSR layout: particle indices grouped by cell, ascending inside a cell.
    start: Vec<usize>,
    entries: Vec<usize>,
}

impl CellList {
    pub fn build(system: &ParticleSystem, cutoff: f64) -> Result<Self> {
        let [lx, ly, lz] = system.box_lengths;
        if !(cutoff > 0.0) {
            return Err(Error::InvalidParameter("cutoff must be positive".into()));
        }
        if cutoff > lx.min(ly) / 2.0 * (1.0 + 1e-12) {
            return Err(Error::InvalidParameter(format!(
                "cutoff {cutoff} exceeds min(Lx,Ly)/2 = {}; minimum image is ambiguous",
                lx.min(ly) / 2.0
            )));
        }
        // Cell size >= cutoff per axis: n = floor(L / rc), at least one cell.
        let n_of = |l: f64| ((l / cutoff).floor() as usize).max(1);
        let cells = [n_of(lx), n_of(ly), n_of(lz)];
        let cell_size = [lx / cells[0] as f64, ly / cells[1] as f64, lz / cells[2] as f64];
        let total = cells[0] * cells[1] * cells[2];

        let cell_of = |p: &[f64; 3]| -> usize {
            let ix = bin_periodic(p[0], lx, cells[0]);
            let iy = bin_periodic(p[1], ly, cells[1]);
            let iz = bin_clamped(p[2], lz, cells[2]);
            (ix * cells[1] + iy) * cells[2] + iz
        };

        let mut counts = vec![0usize; total + 1];
        for p in &system.positions {
            counts[cell_of(p) + 1] += 1;
        }
        for c in 1..=total {
            counts[c] += counts[c - 1];
        }
        let start = counts.clone();
        let mut cursor = counts;
        let mut entries = vec![0usize; system.len()];
        for (i, p) in system.positions.iter().enumerate() {
            let c = cell_of(p);
            entries[cursor[c]] = i;
            cursor[c] += 1;
        }
        Ok(Self { cells, cell_size, box_lengths: system.box_lengths, cutoff, start, entries })
    }

    pub fn cutoff(&self) -> f64 {
        self.cutoff
    }

    /// Particle indices in the 3x3x3 block of cells around `position`,
    /// excluding `exclude` (pass usize::MAX to keep everything). Guaranteed to
    /// contain every particle within the cutoff of `position`.
    pub fn neighbors_of_position(&self, position: [f64; 3], exclude: usize) -> Vec<usize> {
        let mut out = Vec::with_capacity(64);
        self.for_each_neighbor(position, exclude, |j| out.push(j));
        out
    }

    /// Streaming version of `neighbors_of_position`.
    pub fn for_each_neighbor<F: FnMut(usize)>(
        &self,
        position: [f64; 3],
        exclude: usize,
        mut f: F,
    ) {
        let [lx, ly, lz] = self.box_lengths;
        let ix = bin_periodic(position[0], lx, self.cells[0]) as isize;
        let iy = bin_periodic(position[1], ly, self.cells[1]) as isize;
        let iz = bin_clamped(position[2], lz, self.cells[2]) as isize;

        // Periodic axes may alias when fewer than three cells exist; collect
        // distinct cell indices per axis.
        let mut xs = [0usize; 3];
        let nx = distinct_periodic(ix, self.cells[0], &mut xs);
        let mut ys = [0usize; 3];
        let ny = distinct_periodic(iy, self.cells[1], &mut ys);

        for &cx in &xs[..nx] {
            for &cy in &ys[..ny] {
                for dz in -1..=1isize {
                    let cz = iz + dz;
                    if cz < 0 || cz >= self.cells[2] as isize {
                        continue;
                    }
                    let cell = (cx * self.cells[1] + cy) * self.cells[2] + cz as usize;
                    for &j in &self.entries[self.start[cell]..self.start[cell + 1]] {
                        if j != exclude {
                            f(j);
                        }
                    }
                }
            }
        }
    }

    pub fn cell_counts(&self) -> [usize; 3] {
        self.cells
    }

    pub fn cell_size(&self) -> [f64; 3] {
        self.cell_size
    }
}

#[inline]
fn bin_periodic(x: f64, l: f64, n: usize) -> usize {
    let frac = x / l + 0.5; // [0, 1)
    let mut idx = (frac * n as f64).floor() as isize;
    idx = idx.rem_euclid(n as isize);
    idx as usize
}

#[inline]
fn bin_clamped(x: f64, l: f64, n: usize) -> usize {
    let frac = x / l + 0.5;
    ((frac * n as f64).floor() as isize).clamp(0, n as isize - 1) as usize
}

fn distinct_periodic(center: isize, n: usize, out: &mut [usize; 3]) -> usize {
    let n = n as isize;
    let mut len = 0;
    for d in -1..=1isize {
        let c = (center + d).rem_euclid(n) as usize;
        if !out[..len].contains(&c) {
            out[len] = c;
            len += 1;
        }
    }
    len
}
