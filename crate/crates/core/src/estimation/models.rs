use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::{RowSVector, SMatrix, SVector};

use crate::geometry::wrap;

/// Process and measurement functions with their analytic Jacobians.
///
/// `Input` is the known input `u` at the current step.
pub trait StateModel<const N: usize> {
    type Input: Copy;

    fn process(&self, x: &SVector<f64, N>, u: Self::Input) -> SVector<f64, N>;
    fn process_jacobian(&self, x: &SVector<f64, N>, u: Self::Input) -> SMatrix<f64, N, N>;
    fn measure(&self, x: &SVector<f64, N>, u: Self::Input) -> f64;
    fn measure_jacobian(&self, x: &SVector<f64, N>, u: Self::Input) -> RowSVector<f64, N>;

    /// Maps a state onto an equivalent canonical one (same measurement for every
    /// input). Returns the new state and the Jacobian of the map.
    fn normalize(&self, x: SVector<f64, N>) -> (SVector<f64, N>, SMatrix<f64, N, N>) {
        (x, SMatrix::identity())
    }
}

/// Planar model: state `[ψ]`, `ψ̇ = -ω`, `y = b sin ψ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Model2D {
    pub baseline: f64,
    pub omega: f64,
}

impl StateModel<1> for Model2D {
    type Input = ();

    fn process(&self, _x: &SVector<f64, 1>, _u: ()) -> SVector<f64, 1> {
        SVector::<f64, 1>::new(-self.omega)
    }

    fn process_jacobian(&self, _x: &SVector<f64, 1>, _u: ()) -> SMatrix<f64, 1, 1> {
        SMatrix::zeros()
    }

    fn measure(&self, x: &SVector<f64, 1>, _u: ()) -> f64 {
        self.baseline * x[0].sin()
    }

    fn measure_jacobian(&self, x: &SVector<f64, 1>, _u: ()) -> RowSVector<f64, 1> {
        RowSVector::<f64, 1>::new(self.baseline * x[0].cos())
    }

    fn normalize(&self, x: SVector<f64, 1>) -> (SVector<f64, 1>, SMatrix<f64, 1, 1>) {
        (SVector::<f64, 1>::new(wrap(x[0])), SMatrix::identity())
    }
}

/// Spherical model: state `[θ, ψ]`, `θ̇ = 0`, `ψ̇ = -ω`, `y = b cos θ sin ψ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Model3D {
    pub baseline: f64,
    pub omega: f64,
}

/// `C_J = [-b sin θ sin ψ, b cos θ cos ψ]`.
pub fn model3d_jacobians(theta: f64, psi: f64, baseline: f64) -> [f64; 2] {
    let (st, ct) = theta.sin_cos();
    let (sp, cp) = psi.sin_cos();
    [-baseline * st * sp, baseline * ct * cp]
}

impl StateModel<2> for Model3D {
    type Input = ();

    fn process(&self, _x: &SVector<f64, 2>, _u: ()) -> SVector<f64, 2> {
        SVector::<f64, 2>::new(0.0, -self.omega)
    }

    fn process_jacobian(&self, _x: &SVector<f64, 2>, _u: ()) -> SMatrix<f64, 2, 2> {
        SMatrix::zeros()
    }

    fn measure(&self, x: &SVector<f64, 2>, _u: ()) -> f64 {
        self.baseline * x[0].cos() * x[1].sin()
    }

    fn measure_jacobian(&self, x: &SVector<f64, 2>, _u: ()) -> RowSVector<f64, 2> {
        let [a, b] = model3d_jacobians(x[0], x[1], self.baseline);
        RowSVector::<f64, 2>::new(a, b)
    }

    /// Folds θ into `[0, π/2]`: `(−θ, ψ)` and `(π−θ, ψ+π)` give the same output.
    fn normalize(&self, x: SVector<f64, 2>) -> (SVector<f64, 2>, SMatrix<f64, 2, 2>) {
        let mut theta = wrap(x[0]);
        let mut psi = x[1];
        let mut sign = 1.0;
        if theta < 0.0 {
            theta = -theta;
            sign = -sign;
        }
        if theta > FRAC_PI_2 {
            theta = PI - theta;
            psi += PI;
            sign = -sign;
        }
        let j = SMatrix::<f64, 2, 2>::new(sign, 0.0, 0.0, 1.0);
        (SVector::<f64, 2>::new(theta, wrap(psi)), j)
    }
}

/// Translation model: state `[D]`, `Ḋ = 0`, `y = b Δd / sqrt(Δd² + D²)` with
/// the cumulative shift `Δd` as input.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelDist {
    pub baseline: f64,
}

/// `∂y/∂D = -b Δd D / (Δd² + D²)^{3/2}`.
pub fn modeldist_jacobian(distance: f64, delta_d: f64, baseline: f64) -> f64 {
    let s = delta_d * delta_d + distance * distance;
    -baseline * delta_d * distance / (s * s.sqrt())
}

impl StateModel<1> for ModelDist {
    type Input = f64;

    fn process(&self, _x: &SVector<f64, 1>, _u: f64) -> SVector<f64, 1> {
        SVector::<f64, 1>::zeros()
    }

    fn process_jacobian(&self, _x: &SVector<f64, 1>, _u: f64) -> SMatrix<f64, 1, 1> {
        SMatrix::zeros()
    }

    fn measure(&self, x: &SVector<f64, 1>, delta_d: f64) -> f64 {
        self.baseline * delta_d / (delta_d * delta_d + x[0] * x[0]).sqrt()
    }

    fn measure_jacobian(&self, x: &SVector<f64, 1>, delta_d: f64) -> RowSVector<f64, 1> {
        RowSVector::<f64, 1>::new(modeldist_jacobian(x[0], delta_d, self.baseline))
    }

    /// The output depends on `D²` only.
    fn normalize(&self, x: SVector<f64, 1>) -> (SVector<f64, 1>, SMatrix<f64, 1, 1>) {
        if x[0] < 0.0 {
            (-x, SMatrix::<f64, 1, 1>::new(-1.0))
        } else {
            (x, SMatrix::identity())
        }
    }
}
