//! Tensor-product grids built from three mapped axes.
//!
//! Fields are flat `Vec<f64>` with x varying fastest, then y, then z:
//! `flat = i + nx * (j + ny * k)`. Differentiation along x is then the
//! Kronecker factor `I_z ⊗ I_y ⊗ D_x`.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cheb::{map_axis, AxisSpec, MappedAxis, SquareMatrix};
use crate::error::{Error, Result};

pub const ORDERING_TAG: &str = "x-fastest";

#[derive(Clone, Debug)]
pub struct TensorGrid {
    pub axes: [MappedAxis; 3],
    pub w3: Vec<f64>,
}

/// Grid manifest: per-axis parameters plus the flattening convention.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridManifest {
    pub x: AxisSpec,
    pub y: AxisSpec,
    pub z: AxisSpec,
    pub ordering: String,
}

impl TensorGrid {
    pub fn new(axes: [MappedAxis; 3]) -> Self {
        let [ax, ay, az] = &axes;
        let mut w3 = Vec::with_capacity(ax.len() * ay.len() * az.len());
        for wz in &az.weights {
            for wy in &ay.weights {
                for wx in &ax.weights {
                    w3.push(wx * wy * wz);
                }
            }
        }
        Self { axes, w3 }
    }

    /// Same degree, steepness and half-width on all three axes.
    pub fn cube(n: usize, a: f64, half_width: f64) -> Result<Self> {
        let ax = map_axis(n, a, half_width)?;
        Ok(Self::new([ax.clone(), ax.clone(), ax]))
    }

    pub fn from_manifest(m: &GridManifest) -> Result<Self> {
        if m.ordering != ORDERING_TAG {
            return Err(Error::Parse(format!("unsupported ordering tag '{}'", m.ordering)));
        }
        let mk = |s: &AxisSpec| map_axis(s.n, s.a, s.half_width);
        Ok(Self::new([mk(&m.x)?, mk(&m.y)?, mk(&m.z)?]))
    }

    pub fn manifest(&self) -> GridManifest {
        GridManifest {
            x: self.axes[0].spec(),
            y: self.axes[1].spec(),
            z: self.axes[2].spec(),
            ordering: ORDERING_TAG.to_string(),
        }
    }

    pub fn shape(&self) -> [usize; 3] {
        [self.axes[0].len(), self.axes[1].len(), self.axes[2].len()]
    }

    pub fn len(&self) -> usize {
        self.w3.len()
    }

    pub fn is_empty(&self) -> bool {
        self.w3.is_empty()
    }

    pub fn interior_shape(&self) -> [usize; 3] {
        let [nx, ny, nz] = self.shape();
        [nx.saturating_sub(2), ny.saturating_sub(2), nz.saturating_sub(2)]
    }

    pub fn interior_len(&self) -> usize {
        self.interior_shape().iter().product()
    }

    #[inline]
    pub fn flat(&self, i: usize, j: usize, k: usize) -> usize {
        let [nx, ny, _] = self.shape();
        i + nx * (j + ny * k)
    }

    /// Flat indices of the interior nodes in interior ordering (also x fastest).
    pub fn interior_index(&self) -> Vec<usize> {
        let [nx, ny, nz] = self.shape();
        let mut idx = Vec::with_capacity(self.interior_len());
        for k in 1..nz.saturating_sub(1) {
            for j in 1..ny.saturating_sub(1) {
                for i in 1..nx.saturating_sub(1) {
                    idx.push(self.flat(i, j, k));
                }
            }
        }
        idx
    }

    pub fn restrict(&self, field: &[f64]) -> Vec<f64> {
        self.interior_index().into_iter().map(|f| field[f]).collect()
    }

    /// Interior quadrature weights.
    pub fn interior_weights(&self) -> Vec<f64> {
        self.restrict(&self.w3)
    }

    /// Evaluates `f(x, y, z)` on every node.
    pub fn tabulate(&self, mut f: impl FnMut(f64, f64, f64) -> f64) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.len());
        for z in &self.axes[2].x {
            for y in &self.axes[1].x {
                for x in &self.axes[0].x {
                    out.push(f(*x, *y, *z));
                }
            }
        }
        out
    }

    /// Applies the axis `axis` first-derivative matrix to a full-grid field.
    pub fn diff(&self, field: &[f64], axis: usize) -> Vec<f64> {
        apply_along_axis(&self.axes[axis].d1, field, self.shape(), axis)
    }

    /// Index of the node mirrored in x (`x → −x`).
    pub fn flip_x(&self, field: &[f64]) -> Vec<f64> {
        flip_x(field, self.shape())
    }

    pub fn same_as(&self, other: &TensorGrid) -> bool {
        self.manifest() == other.manifest()
    }
}

/// Reverses the x index of a field laid out with shape `shape`.
pub fn flip_x(field: &[f64], shape: [usize; 3]) -> Vec<f64> {
    let nx = shape[0];
    let mut out = vec![0.0; field.len()];
    for (line_out, line_in) in out.chunks_mut(nx).zip(field.chunks(nx)) {
        for i in 0..nx {
            line_out[i] = line_in[nx - 1 - i];
        }
    }
    out
}

/// Contracts a square matrix along one axis of a 3D array (x fastest).
pub fn apply_along_axis(m: &SquareMatrix, field: &[f64], shape: [usize; 3], axis: usize) -> Vec<f64> {
    let mut out = vec![0.0; field.len()];
    apply_along_axis_into(m, 1.0, field, shape, axis, &mut out);
    out
}

/// `out += scale * (M along axis) field`.
pub(crate) fn apply_along_axis_into(
    m: &SquareMatrix,
    scale: f64,
    field: &[f64],
    shape: [usize; 3],
    axis: usize,
    out: &mut [f64],
) {
    let [nx, ny, nz] = shape;
    assert_eq!(m.dim(), shape[axis], "matrix does not match axis length");
    assert_eq!(field.len(), nx * ny * nz);
    match axis {
        0 => {
            for (src, dst) in field.chunks(nx).zip(out.chunks_mut(nx)) {
                for (i, d) in dst.iter_mut().enumerate() {
                    let row = m.row(i);
                    let mut s = 0.0;
                    for l in 0..nx {
                        s += row[l] * src[l];
                    }
                    *d += scale * s;
                }
            }
        }
        1 => {
            for k in 0..nz {
                let plane = k * nx * ny;
                for j in 0..ny {
                    let row = m.row(j);
                    let dst = &mut out[plane + j * nx..plane + (j + 1) * nx];
                    for (l, &c) in row.iter().enumerate() {
                        if c == 0.0 {
                            continue;
                        }
                        let c = scale * c;
                        let src = &field[plane + l * nx..plane + (l + 1) * nx];
                        for (d, s) in dst.iter_mut().zip(src) {
                            *d += c * s;
                        }
                    }
                }
            }
        }
        2 => {
            let plane = nx * ny;
            for k in 0..nz {
                let row = m.row(k);
                let dst = &mut out[k * plane..(k + 1) * plane];
                for (l, &c) in row.iter().enumerate() {
                    if c == 0.0 {
                        continue;
                    }
                    let c = scale * c;
                    let src = &field[l * plane..(l + 1) * plane];
                    for (d, s) in dst.iter_mut().zip(src) {
                        *d += c * s;
                    }
                }
            }
        }
        _ => panic!("axis must be 0, 1 or 2"),
    }
}

/// Quadrature inner product `Σ f g w3` over the full grid.
pub fn tensor_inner(f: &[f64], g: &[f64], grid: &TensorGrid) -> Result<f64> {
    weighted_inner(f, g, &grid.w3)
}

/// `Σ f_i g_i w_i` with a fixed left-to-right summation order.
pub fn weighted_inner(f: &[f64], g: &[f64], w: &[f64]) -> Result<f64> {
    if f.len() != w.len() {
        return Err(Error::ShapeMismatch { expected: w.len(), got: f.len() });
    }
    if g.len() != w.len() {
        return Err(Error::ShapeMismatch { expected: w.len(), got: g.len() });
    }
    Ok(f.iter().zip(g).zip(w).map(|((a, b), c)| (a * b) * c).sum())
}

/// Writes a field as raw little-endian f64 values plus a TOML manifest next to it.
pub fn write_field(path: &Path, field: &[f64], manifest: &GridManifest) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    for v in field {
        f.write_all(&v.to_le_bytes())?;
    }
    let text = toml::to_string(manifest).map_err(|e| Error::Parse(e.to_string()))?;
    std::fs::write(manifest_path(path), text)?;
    Ok(())
}

pub fn read_field(path: &Path) -> Result<(Vec<f64>, GridManifest)> {
    let text = std::fs::read_to_string(manifest_path(path))?;
    let manifest: GridManifest = toml::from_str(&text).map_err(|e| Error::Parse(e.to_string()))?;
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    if bytes.len() % 8 != 0 {
        return Err(Error::Parse(format!("{} is not a whole number of f64 values", path.display())));
    }
    let field = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    Ok((field, manifest))
}

fn manifest_path(path: &Path) -> std::path::PathBuf {
    let mut p = path.as_os_str().to_owned();
    p.push(".toml");
    p.into()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn sizes_and_interior() {
        let ax = map_axis(6, 4.0, 10.0).unwrap();
        let ay = map_axis(5, 4.0, 10.0).unwrap();
        let az = map_axis(4, 4.0, 10.0).unwrap();
        let g = TensorGrid::new([ax, ay, az]);
        assert_eq!(g.len(), 7 * 6 * 5);
        assert_eq!(g.interior_len(), 5 * 4 * 3);
        let idx = g.interior_index();
        assert_eq!(idx.len(), 60);
        assert_eq!(idx[0], g.flat(1, 1, 1));
        assert_eq!(idx[1], g.flat(2, 1, 1));
    }

    #[test]
    fn parity_kills_inner_product() {
        let g = TensorGrid::cube(12, 4.0, 10.0).unwrap();
        let even = g.tabulate(|x, y, z| (-(x * x + y * y + z * z)).exp());
        let odd = g.tabulate(|x, y, z| x * (-(x * x + 2.0 * y * y + z * z)).exp());
        assert!(tensor_inner(&even, &odd, &g).unwrap().abs() < 1e-12);
        assert!(tensor_inner(&even, &even, &g).unwrap() > 0.0);
    }

    #[test]
    fn gaussian_volume() {
        let g = TensorGrid::cube(32, 4.0, 30.0).unwrap();
        let f = g.tabulate(|x, y, z| (-(x * x + y * y + z * z)).exp());
        let one = vec![1.0; g.len()];
        let v = tensor_inner(&f, &one, &g).unwrap();
        assert!((v - std::f64::consts::PI.powf(1.5)).abs() < 1e-2);
    }

    #[test]
    fn diff_along_each_axis() {
        let g = TensorGrid::cube(24, 1.0, 6.0).unwrap();
        let f = g.tabulate(|x, y, z| (0.3 * x).sin() * (0.2 * y).cos() * (0.1 * z).sin());
        for (axis, exact) in [
            (0, g.tabulate(|x, y, z| 0.3 * (0.3 * x).cos() * (0.2 * y).cos() * (0.1 * z).sin())),
            (1, g.tabulate(|x, y, z| -0.2 * (0.3 * x).sin() * (0.2 * y).sin() * (0.1 * z).sin())),
            (2, g.tabulate(|x, y, z| 0.1 * (0.3 * x).sin() * (0.2 * y).cos() * (0.1 * z).cos())),
        ] {
            let d = g.diff(&f, axis);
            for (a, b) in d.iter().zip(&exact) {
                assert!((a - b).abs() < 1e-8, "axis {axis}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let g = TensorGrid::cube(4, 2.0, 3.0).unwrap();
        assert!(tensor_inner(&[1.0; 3], &vec![1.0; g.len()], &g).is_err());
    }

    #[test]
    fn field_file_round_trip() {
        let g = TensorGrid::cube(5, 2.0, 3.0).unwrap();
        let f = g.tabulate(|x, y, z| x - 2.0 * y + z * z / 3.0);
        let dir = std::env::temp_dir().join(format!("zkv-field-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let p = dir.join("f.bin");
        write_field(&p, &f, &g.manifest()).unwrap();
        let (back, m) = read_field(&p).unwrap();
        assert_eq!(back, f);
        assert!(TensorGrid::from_manifest(&m).unwrap().same_as(&g));
        std::fs::remove_dir_all(dir).ok();
    }

    proptest! {
        #[test]
        fn inner_product_is_exactly_symmetric(seed in any::<u64>()) {
            use rand::{Rng, SeedableRng};
            let g = TensorGrid::cube(5, 3.0, 4.0).unwrap();
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let f: Vec<f64> = (0..g.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let h: Vec<f64> = (0..g.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            prop_assert_eq!(tensor_inner(&f, &h, &g).unwrap(), tensor_inner(&h, &f, &g).unwrap());
            prop_assert!(tensor_inner(&f, &f, &g).unwrap() >= 0.0);
        }
    }
}
