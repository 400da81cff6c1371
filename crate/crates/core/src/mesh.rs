//! Rectangular cell-centered grid, zero-flux discrete operators, integrals
//! and norms.
//!
//! The domain is an axis-aligned rectangle `[0,lx]×[0,ly]` split into
//! `nx×ny` uniform cells. Scalar unknowns live at cell centers, fluxes on
//! cell faces. The zero-flux (Neumann) boundary condition is realized by
//! forcing boundary faces to carry flux exactly 0, which makes
//! `∫ div(F) = 0` a telescoping identity and mass conservation exact by
//! construction.
//!
//! Indexing is row-major: cell `(i,j)` maps to `j*nx + i` with `i` along x.
//! An x-face with index `i ∈ 0..=nx` sits between cells `i-1` and `i` of a
//! row; y-faces are analogous along columns.

use crate::{Error, Result};

/// Uniform rectangular cell-centered grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    nx: usize,
    ny: usize,
    lx: f64,
    ly: f64,
    hx: f64,
    hy: f64,
}

impl Grid {
    /// Create an `nx×ny` grid on `[0,lx]×[0,ly]`.
    ///
    /// Requires `nx, ny ≥ 3` (the stencils need an interior) and positive
    /// side lengths.
    pub fn new(nx: usize, ny: usize, lx: f64, ly: f64) -> Result<Self> {
        if nx < 3 || ny < 3 {
            return Err(Error::Parameter(format!(
                "grid needs nx, ny >= 3, got {nx}x{ny}"
            )));
        }
        if !(lx > 0.0) || !(ly > 0.0) || !lx.is_finite() || !ly.is_finite() {
            return Err(Error::Parameter(format!(
                "grid side lengths must be positive and finite, got {lx}x{ly}"
            )));
        }
        Ok(Self {
            nx,
            ny,
            lx,
            ly,
            hx: lx / nx as f64,
            hy: ly / ny as f64,
        })
    }

    /// Unit square helper used throughout the tests.
    pub fn unit_square(n: usize) -> Result<Self> {
        Self::new(n, n, 1.0, 1.0)
    }

    pub fn nx(&self) -> usize {
        self.nx
    }
    pub fn ny(&self) -> usize {
        self.ny
    }
    pub fn lx(&self) -> f64 {
        self.lx
    }
    pub fn ly(&self) -> f64 {
        self.ly
    }
    pub fn hx(&self) -> f64 {
        self.hx
    }
    pub fn hy(&self) -> f64 {
        self.hy
    }

    /// Domain measure `|Ω| = lx·ly`.
    pub fn area(&self) -> f64 {
        self.lx * self.ly
    }

    /// Cell count `nx·ny`.
    pub fn n_cells(&self) -> usize {
        self.nx * self.ny
    }

    /// Cell area `hx·hy` (the quadrature weight).
    pub fn cell_area(&self) -> f64 {
        self.hx * self.hy
    }

    /// Flat index of cell `(i, j)`.
    #[inline]
    pub fn idx(&self, i: usize, j: usize) -> usize {
        debug_assert!(i < self.nx && j < self.ny);
        j * self.nx + i
    }

    /// Center coordinates of cell `(i, j)`.
    #[inline]
    pub fn cell_center(&self, i: usize, j: usize) -> (f64, f64) {
        ((i as f64 + 0.5) * self.hx, (j as f64 + 0.5) * self.hy)
    }

    /// Number of x-faces, `(nx+1)·ny`.
    pub fn n_faces_x(&self) -> usize {
        (self.nx + 1) * self.ny
    }

    /// Number of y-faces, `nx·(ny+1)`.
    pub fn n_faces_y(&self) -> usize {
        self.nx * (self.ny + 1)
    }
}

/// One real value per cell, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    grid: Grid,
    values: Vec<f64>,
}

impl ScalarField {
    /// Field identically equal to `c`.
    pub fn constant(grid: Grid, c: f64) -> Self {
        Self {
            grid,
            values: vec![c; grid.n_cells()],
        }
    }

    /// Zero field.
    pub fn zeros(grid: Grid) -> Self {
        Self::constant(grid, 0.0)
    }

    /// Sample a closed-form function at cell centers.
    pub fn from_fn(grid: Grid, f: impl Fn(f64, f64) -> f64) -> Self {
        let mut values = Vec::with_capacity(grid.n_cells());
        for j in 0..grid.ny {
            for i in 0..grid.nx {
                let (x, y) = grid.cell_center(i, j);
                values.push(f(x, y));
            }
        }
        Self { grid, values }
    }

    /// Wrap an existing value vector; the length must be `nx·ny`.
    pub fn from_values(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n_cells() {
            return Err(Error::ShapeMismatch(format!(
                "field has {} values for a {}x{} grid",
                values.len(),
                grid.nx,
                grid.ny
            )));
        }
        Ok(Self { grid, values })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[self.grid.idx(i, j)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        let k = self.grid.idx(i, j);
        self.values[k] = v;
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Discrete integral `hx·hy · Σ values`.
    ///
    /// Errors with [`Error::NonFiniteField`] if any entry is NaN/∞.
    pub fn integrate(&self) -> Result<f64> {
        if !self.is_finite() {
            return Err(Error::NonFiniteField);
        }
        Ok(self.grid.cell_area() * self.values.iter().sum::<f64>())
    }

    /// Five-point Laplacian with mirrored ghost cells.
    ///
    /// Interior cells get `(φ_E − 2φ_c + φ_W)/hx² + (φ_N − 2φ_c + φ_S)/hy²`;
    /// a missing neighbor is mirrored (`ghost = φ_c`), which is the
    /// zero-gradient boundary face in stencil form.
    pub fn laplacian_neumann(&self) -> ScalarField {
        let mut out = ScalarField::zeros(self.grid);
        self.laplacian_neumann_into(&mut out);
        out
    }

    /// In-place variant of [`ScalarField::laplacian_neumann`].
    pub fn laplacian_neumann_into(&self, out: &mut ScalarField) {
        let g = &self.grid;
        let (nx, ny) = (g.nx, g.ny);
        let ihx2 = 1.0 / (g.hx * g.hx);
        let ihy2 = 1.0 / (g.hy * g.hy);
        let v = &self.values;
        let o = &mut out.values;
        for j in 0..ny {
            let row = j * nx;
            for i in 0..nx {
                let c = row + i;
                let vc = v[c];
                let w = if i > 0 { v[c - 1] } else { vc };
                let e = if i + 1 < nx { v[c + 1] } else { vc };
                let s = if j > 0 { v[c - nx] } else { vc };
                let n = if j + 1 < ny { v[c + nx] } else { vc };
                o[c] = (e - 2.0 * vc + w) * ihx2 + (n - 2.0 * vc + s) * ihy2;
            }
        }
    }

    /// Two-point face gradients; boundary faces are exactly 0.
    pub fn gradient_faces(&self) -> FaceFlux {
        let g = &self.grid;
        let (nx, ny) = (g.nx, g.ny);
        let mut flux = FaceFlux::zeros(self.grid);
        let ihx = 1.0 / g.hx;
        let ihy = 1.0 / g.hy;
        let v = &self.values;
        for j in 0..ny {
            let frow = j * (nx + 1);
            let crow = j * nx;
            for i in 1..nx {
                flux.fx[frow + i] = (v[crow + i] - v[crow + i - 1]) * ihx;
            }
        }
        for j in 1..ny {
            let frow = j * nx;
            for i in 0..nx {
                flux.fy[frow + i] = (v[frow + i] - v[frow - nx + i]) * ihy;
            }
        }
        flux
    }

    /// Face gradients averaged back to cell centers, per axis.
    ///
    /// This is the single gradient definition used by every norm and
    /// diagnostic (`W^{1,r}`, Fisher integrand, `∫|∇v|²`, the GN checks).
    pub fn gradient_centers(&self) -> (Vec<f64>, Vec<f64>) {
        let g = &self.grid;
        let (nx, ny) = (g.nx, g.ny);
        let flux = self.gradient_faces();
        let mut gx = vec![0.0; g.n_cells()];
        let mut gy = vec![0.0; g.n_cells()];
        for j in 0..ny {
            let frow = j * (nx + 1);
            let crow = j * nx;
            for i in 0..nx {
                gx[crow + i] = 0.5 * (flux.fx[frow + i] + flux.fx[frow + i + 1]);
            }
        }
        for j in 0..ny {
            let crow = j * nx;
            for i in 0..nx {
                gy[crow + i] = 0.5 * (flux.fy[crow + i] + flux.fy[crow + nx + i]);
            }
        }
        (gx, gy)
    }

    /// Discrete norm of the field.
    ///
    /// `Lp` and `W1r` use the cell quadrature; `W1r` takes its gradient from
    /// [`ScalarField::gradient_centers`]. Requires `p ≥ 1` and `r > 2`.
    pub fn norm(&self, kind: NormKind) -> Result<f64> {
        match kind {
            NormKind::Lp(p) => {
                if !(p >= 1.0) {
                    return Err(Error::Parameter(format!("Lp norm needs p >= 1, got {p}")));
                }
                let s: f64 = self.values.iter().map(|v| v.abs().powf(p)).sum();
                Ok((self.grid.cell_area() * s).powf(1.0 / p))
            }
            NormKind::Linf => Ok(self.max_abs()),
            NormKind::W1r(r) => {
                if !(r > 2.0) {
                    return Err(Error::Parameter(format!(
                        "W1r norm needs r > 2, got {r}"
                    )));
                }
                let (gx, gy) = self.gradient_centers();
                let mut s = 0.0;
                for (k, v) in self.values.iter().enumerate() {
                    let grad = (gx[k] * gx[k] + gy[k] * gy[k]).sqrt();
                    s += v.abs().powf(r) + grad.powf(r);
                }
                Ok((self.grid.cell_area() * s).powf(1.0 / r))
            }
        }
    }
}

/// Norm selector for [`ScalarField::norm`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NormKind {
    /// `(∫|φ|^p)^{1/p}`, `p ≥ 1`.
    Lp(f64),
    /// `max |φ|` over cells.
    Linf,
    /// `(∫|φ|^r + ∫|∇φ|^r)^{1/r}`, `r > 2`.
    W1r(f64),
}

/// Per-face flux values; boundary faces are identically 0.
#[derive(Debug, Clone, PartialEq)]
pub struct FaceFlux {
    grid: Grid,
    /// x-faces, `(nx+1)·ny`, row-major with `i ∈ 0..=nx`.
    pub fx: Vec<f64>,
    /// y-faces, `nx·(ny+1)`, row-major with `j ∈ 0..=ny`.
    pub fy: Vec<f64>,
}

impl FaceFlux {
    pub fn zeros(grid: Grid) -> Self {
        Self {
            grid,
            fx: vec![0.0; grid.n_faces_x()],
            fy: vec![0.0; grid.n_faces_y()],
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// x-face value between cells `(i-1,j)` and `(i,j)`; `i ∈ 0..=nx`.
    #[inline]
    pub fn fx_at(&self, i: usize, j: usize) -> f64 {
        self.fx[j * (self.grid.nx + 1) + i]
    }

    /// y-face value between cells `(i,j-1)` and `(i,j)`; `j ∈ 0..=ny`.
    #[inline]
    pub fn fy_at(&self, i: usize, j: usize) -> f64 {
        self.fy[j * self.grid.nx + i]
    }

    pub fn max_abs(&self) -> f64 {
        let mx = self.fx.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        self.fy.iter().fold(mx, |m, v| m.max(v.abs()))
    }

    /// True when every boundary face carries flux exactly 0.
    pub fn boundary_is_zero(&self) -> bool {
        let (nx, ny) = (self.grid.nx, self.grid.ny);
        for j in 0..ny {
            if self.fx[j * (nx + 1)] != 0.0 || self.fx[j * (nx + 1) + nx] != 0.0 {
                return false;
            }
        }
        for i in 0..nx {
            if self.fy[i] != 0.0 || self.fy[ny * nx + i] != 0.0 {
                return false;
            }
        }
        true
    }

    /// Conservative flux differencing `(fx_E − fx_W)/hx + (fy_N − fy_S)/hy`.
    ///
    /// With zero boundary faces the integral of the result telescopes to 0
    /// up to round-off.
    pub fn divergence(&self) -> ScalarField {
        let g = &self.grid;
        let (nx, ny) = (g.nx, g.ny);
        let ihx = 1.0 / g.hx;
        let ihy = 1.0 / g.hy;
        let mut out = ScalarField::zeros(self.grid);
        for j in 0..ny {
            let frow = j * (nx + 1);
            let crow = j * nx;
            for i in 0..nx {
                out.values[crow + i] = (self.fx[frow + i + 1] - self.fx[frow + i]) * ihx
                    + (self.fy[crow + nx + i] - self.fy[crow + i]) * ihy;
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn spike(grid: Grid, i: usize, j: usize, height: f64) -> ScalarField {
        let mut f = ScalarField::zeros(grid);
        f.set(i, j, height);
        f
    }

    #[test]
    fn grid_rejects_degenerate_shapes() {
        assert!(Grid::new(2, 5, 1.0, 1.0).is_err());
        assert!(Grid::new(5, 2, 1.0, 1.0).is_err());
        assert!(Grid::new(5, 5, 0.0, 1.0).is_err());
        assert!(Grid::new(5, 5, 1.0, -2.0).is_err());
    }

    #[test]
    fn grid_area_matches_cell_sum() {
        let g = Grid::new(7, 5, 2.5, 0.3).unwrap();
        let cells = g.cell_area() * g.n_cells() as f64;
        assert_relative_eq!(cells, g.area(), max_relative = 1e-14);
    }

    #[test]
    fn integrate_constants() {
        let unit = Grid::unit_square(10).unwrap();
        assert_relative_eq!(
            ScalarField::constant(unit, 1.0).integrate().unwrap(),
            1.0,
            max_relative = 1e-14
        );
        let two_by_two = Grid::new(8, 8, 2.0, 2.0).unwrap();
        assert_relative_eq!(
            ScalarField::constant(two_by_two, 2.0).integrate().unwrap(),
            8.0,
            max_relative = 1e-14
        );
    }

    #[test]
    fn integrate_single_cell_indicator() {
        // hx·hy = 0.1·0.1 on a 10x10 unit square.
        let g = Grid::unit_square(10).unwrap();
        let f = spike(g, 3, 7, 1.0);
        assert_relative_eq!(f.integrate().unwrap(), 0.01, max_relative = 1e-14);
    }

    #[test]
    fn integrate_rejects_non_finite() {
        let g = Grid::unit_square(4).unwrap();
        let f = spike(g, 1, 1, f64::NAN);
        assert!(matches!(f.integrate(), Err(Error::NonFiniteField)));
    }

    #[test]
    fn laplacian_of_constant_is_zero() {
        let g = Grid::new(6, 9, 1.3, 0.7).unwrap();
        let lap = ScalarField::constant(g, 4.2).laplacian_neumann();
        assert!(lap.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn laplacian_of_interior_spike_matches_hand_stencil() {
        let g = Grid::unit_square(10).unwrap();
        let h = g.hx();
        let lap = spike(g, 5, 5, 1.0).laplacian_neumann();
        assert_relative_eq!(lap.get(5, 5), -4.0 / (h * h), max_relative = 1e-13);
        for (i, j) in [(4, 5), (6, 5), (5, 4), (5, 6)] {
            assert_relative_eq!(lap.get(i, j), 1.0 / (h * h), max_relative = 1e-13);
        }
        assert_eq!(lap.get(3, 5), 0.0);
        assert_eq!(lap.get(5, 3), 0.0);
    }

    // Richardson refinement oracle: the discrete Laplacian of a Neumann
    // cosine mode converges to −2π²·φ at second order.
    #[test]
    fn laplacian_cosine_mode_is_second_order()
    {
        let mode = |x: f64, y: f64| (std::f64::consts::PI * x).cos() * (std::f64::consts::PI * y).cos();
        let err_for = |n: usize| {
            let g = Grid::unit_square(n).unwrap();
            let phi = ScalarField::from_fn(g, mode);
            let lap = phi.laplacian_neumann();
            let mut err = 0.0f64;
            let c = -2.0 * std::f64::consts::PI * std::f64::consts::PI;
            for (k, v) in lap.values().iter().enumerate() {
                err = err.max((v - c * phi.values()[k]).abs());
            }
            err
        };
        let (e16, e32, e64) = (err_for(16), err_for(32), err_for(64));
        let p1 = (e16 / e32).log2();
        let p2 = (e32 / e64).log2();
        assert!(
            (1.9..=2.1).contains(&p1) && (1.9..=2.1).contains(&p2),
            "observed orders {p1:.3}, {p2:.3}"
        );
    }

    #[test]
    fn gradient_of_constant_is_zero() {
        let g = Grid::new(4, 5, 1.0, 2.0).unwrap();
        let flux = ScalarField::constant(g, 3.0).gradient_faces();
        assert!(flux.fx.iter().all(|&v| v == 0.0));
        assert!(flux.fy.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn gradient_of_linear_fields() {
        let g = Grid::new(6, 6, 1.0, 1.0).unwrap();
        let fx_field = ScalarField::from_fn(g, |x, _| x).gradient_faces();
        for j in 0..6 {
            for i in 0..=6 {
                let expect = if i == 0 || i == 6 { 0.0 } else { 1.0 };
                assert_relative_eq!(fx_field.fx_at(i, j), expect, epsilon = 1e-13);
            }
        }
        assert!(fx_field.fy.iter().all(|&v| v.abs() < 1e-13));

        let fy_field = ScalarField::from_fn(g, |_, y| y).gradient_faces();
        for i in 0..6 {
            for j in 0..=6 {
                let expect = if j == 0 || j == 6 { 0.0 } else { 1.0 };
                assert_relative_eq!(fy_field.fy_at(i, j), expect, epsilon = 1e-13);
            }
        }
        assert!(fy_field.fx.iter().all(|&v| v.abs() < 1e-13));
    }

    #[test]
    fn divergence_of_zero_flux_is_zero() {
        let g = Grid::new(5, 4, 1.0, 1.0).unwrap();
        let div = FaceFlux::zeros(g).divergence();
        assert!(div.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn divergence_composed_with_gradient_matches_laplacian() {
        let g = Grid::unit_square(9).unwrap();
        let phi = spike(g, 4, 4, 1.0);
        let composed = phi.gradient_faces().divergence();
        let lap = phi.laplacian_neumann();
        let scale = lap.max_abs();
        for (a, b) in composed.values().iter().zip(lap.values()) {
            assert!((a - b).abs() <= 1e-12 * scale, "{a} vs {b}");
        }
    }

    #[test]
    fn norm_of_constants() {
        let g = Grid::unit_square(8).unwrap();
        let one = ScalarField::constant(g, 1.0);
        assert_relative_eq!(one.norm(NormKind::W1r(3.0)).unwrap(), 1.0, epsilon = 1e-13);
        let c = ScalarField::constant(g, -2.5);
        assert_relative_eq!(c.norm(NormKind::Lp(3.0)).unwrap(), 2.5, epsilon = 1e-13);
        assert_relative_eq!(c.norm(NormKind::Lp(1.0)).unwrap(), 2.5, epsilon = 1e-13);
    }

    #[test]
    fn norm_linf_of_spike() {
        let g = Grid::unit_square(7).unwrap();
        assert_eq!(spike(g, 2, 3, 5.0).norm(NormKind::Linf).unwrap(), 5.0);
    }

    #[test]
    fn norm_rejects_bad_exponents() {
        let g = Grid::unit_square(5).unwrap();
        let f = ScalarField::constant(g, 1.0);
        assert!(matches!(f.norm(NormKind::Lp(0.5)), Err(Error::Parameter(_))));
        assert!(matches!(f.norm(NormKind::W1r(2.0)), Err(Error::Parameter(_))));
        assert!(matches!(f.norm(NormKind::W1r(1.5)), Err(Error::Parameter(_))));
    }

    #[test]
    fn laplacian_commutes_with_quarter_rotation() {
        let n = 8;
        let g = Grid::unit_square(n).unwrap();
        let phi = ScalarField::from_fn(g, |x, y| (3.1 * x).sin() + (x * y).cos() + y * y);
        // (i, j) -> (j, n-1-i) is a 90° rotation of the cell lattice.
        let rotate = |f: &ScalarField| {
            let mut out = ScalarField::zeros(g);
            for j in 0..n {
                for i in 0..n {
                    out.set(j, n - 1 - i, f.get(i, j));
                }
            }
            out
        };
        let a = rotate(&phi.laplacian_neumann());
        let b = rotate(&phi).laplacian_neumann();
        for (x, y) in a.values().iter().zip(b.values()) {
            assert!((x - y).abs() <= 1e-12 * a.max_abs());
        }
    }

    proptest! {
        // Conservativity: any flux with zero boundary faces integrates the
        // divergence to zero up to round-off.
        #[test]
        fn divergence_is_conservative(seed in 0u64..1000) {
            use rand::{Rng, SeedableRng};
            let g = Grid::new(9, 7, 1.7, 0.9).unwrap();
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let mut flux = FaceFlux::zeros(g);
            for j in 0..7 {
                for i in 1..9 {
                    flux.fx[j * 10 + i] = rng.random_range(-5.0..5.0);
                }
            }
            for j in 1..7 {
                for i in 0..9 {
                    flux.fy[j * 9 + i] = rng.random_range(-5.0..5.0);
                }
            }
            prop_assert!(flux.boundary_is_zero());
            let total = flux.divergence().integrate().unwrap();
            prop_assert!(total.abs() <= 1e-12 * flux.max_abs() * g.area());
        }

        // Power-mean ordering: on unit-area grids the Lp norm is
        // non-decreasing in p.
        #[test]
        fn lp_norm_monotone_in_p(vals in proptest::collection::vec(-10.0f64..10.0, 16)) {
            let g = Grid::new(4, 4, 2.0, 0.5).unwrap();
            let f = ScalarField::from_values(g, vals).unwrap();
            let ps = [1.0, 1.5, 2.0, 3.0, 4.0, 8.0];
            let mut prev = f.norm(NormKind::Lp(ps[0])).unwrap();
            for &p in &ps[1..] {
                let cur = f.norm(NormKind::Lp(p)).unwrap();
                prop_assert!(cur >= prev - 1e-12 * (1.0 + prev.abs()));
                prev = cur;
            }
        }
    }
}
