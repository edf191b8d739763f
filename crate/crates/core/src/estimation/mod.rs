//! Continuous-discrete extended Kalman filter and the three ITD models.
//!
//! Each call to [`EkfState::step`] integrates the process model over one
//! output period in `substeps` Euler steps (propagating the covariance with
//! `P += dt (A P + P Aᵀ + Q)`), then applies one measurement update.

mod models;

use std::io::Write;

use nalgebra::{SMatrix, SVector};

pub use models::{model3d_jacobians, modeldist_jacobian, Model2D, Model3D, ModelDist, StateModel};

use crate::error::{ensure_positive, Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct EkfConfig<const N: usize> {
    /// Diagonal of `Q` (variance per unit time).
    pub process_noise: SVector<f64, N>,
    /// `R`.
    pub sensor_noise: f64,
    pub substeps: usize,
    /// seconds between measurements (`T_out`)
    pub sample_period: f64,
    pub initial_state: SVector<f64, N>,
    pub initial_covariance: SMatrix<f64, N, N>,
}

/// Standard deviations used for the angle filters.
pub const ORIENTATION_SIGMA_V: f64 = 0.01;
pub const ORIENTATION_SIGMA_W: f64 = 0.01;
/// Standard deviations used for the distance filter.
pub const DISTANCE_SIGMA_V: f64 = 0.1;
pub const DISTANCE_SIGMA_W: f64 = 0.001;
pub const INITIAL_AZIMUTH_DEG: f64 = 5.0;
pub const INITIAL_ELEVATION_DEG: f64 = 5.0;
pub const INITIAL_DISTANCE: f64 = 1.0;
pub const DEFAULT_SUBSTEPS: usize = 10;
/// Initial standard deviation of each angle state.
pub const INITIAL_ANGLE_STD_DEG: f64 = 10.0;
/// Initial standard deviation of the distance state, meters.
pub const INITIAL_DISTANCE_STD: f64 = 5.0;

impl EkfConfig<1> {
    /// Planar filter starting at `ψ = 5°` (the array starts aligned with the robot).
    pub fn orientation_2d(sample_period: f64) -> Self {
        let std = INITIAL_ANGLE_STD_DEG.to_radians();
        Self {
            process_noise: SVector::<f64, 1>::new(ORIENTATION_SIGMA_V.powi(2)),
            sensor_noise: ORIENTATION_SIGMA_W.powi(2),
            substeps: DEFAULT_SUBSTEPS,
            sample_period,
            initial_state: SVector::<f64, 1>::new(INITIAL_AZIMUTH_DEG.to_radians()),
            initial_covariance: SMatrix::<f64, 1, 1>::new(std * std),
        }
    }

    /// Distance filter starting at 1 m.
    pub fn distance(sample_period: f64) -> Self {
        Self {
            process_noise: SVector::<f64, 1>::new(DISTANCE_SIGMA_V.powi(2)),
            sensor_noise: DISTANCE_SIGMA_W.powi(2),
            substeps: DEFAULT_SUBSTEPS,
            sample_period,
            initial_state: SVector::<f64, 1>::new(INITIAL_DISTANCE),
            initial_covariance: SMatrix::<f64, 1, 1>::new(INITIAL_DISTANCE_STD.powi(2)),
        }
    }
}

impl EkfConfig<2> {
    /// Spherical filter starting at `θ = 5°, ψ = 5°`.
    pub fn orientation_3d(sample_period: f64) -> Self {
        let var = INITIAL_ANGLE_STD_DEG.to_radians().powi(2);
        let q = ORIENTATION_SIGMA_V.powi(2);
        Self {
            process_noise: SVector::<f64, 2>::new(q, q),
            sensor_noise: ORIENTATION_SIGMA_W.powi(2),
            substeps: DEFAULT_SUBSTEPS,
            sample_period,
            initial_state: SVector::<f64, 2>::new(
                INITIAL_ELEVATION_DEG.to_radians(),
                INITIAL_AZIMUTH_DEG.to_radians(),
            ),
            initial_covariance: SMatrix::<f64, 2, 2>::from_diagonal_element(var),
        }
    }
}

impl<const N: usize> EkfConfig<N> {
    pub fn validate(&self) -> Result<()> {
        ensure_positive("sensor_noise R", self.sensor_noise)?;
        ensure_positive("sample_period", self.sample_period)?;
        if self.substeps == 0 {
            return Err(Error::InvalidParameter {
                name: "substeps",
                reason: "must be >= 1".into(),
            });
        }
        if self.process_noise.iter().any(|&q| q.is_nan() || q < 0.0) {
            return Err(Error::InvalidParameter {
                name: "process_noise",
                reason: "variances must be finite and >= 0".into(),
            });
        }
        let p = &self.initial_covariance;
        if (p - p.transpose()).abs().max() > 1e-12 * p.abs().max().max(1.0) {
            return Err(Error::InvalidParameter {
                name: "initial_covariance",
                reason: "must be symmetric".into(),
            });
        }
        let eig = nalgebra::DMatrix::from_iterator(N, N, p.iter().copied()).symmetric_eigenvalues();
        if eig.iter().any(|&e| e.is_nan() || e < -1e-12) {
            return Err(Error::InvalidParameter {
                name: "initial_covariance",
                reason: "must be positive semidefinite".into(),
            });
        }
        Ok(())
    }
}

/// One filter step as recorded in the history.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord<const N: usize> {
    pub measurement: f64,
    pub innovation: f64,
    pub state: SVector<f64, N>,
    pub covariance: SMatrix<f64, N, N>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EkfState<const N: usize> {
    pub x: SVector<f64, N>,
    pub p: SMatrix<f64, N, N>,
    pub history: Vec<StepRecord<N>>,
}

impl<const N: usize> EkfState<N> {
    pub fn new(cfg: &EkfConfig<N>) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            x: cfg.initial_state,
            p: cfg.initial_covariance,
            history: Vec::new(),
        })
    }

    /// Predict over one output period, then update with `measurement`.
    /// Returns the innovation `y - h(x̂⁻)`.
    pub fn step<M: StateModel<N>>(
        &mut self,
        model: &M,
        cfg: &EkfConfig<N>,
        u: M::Input,
        measurement: f64,
    ) -> Result<f64> {
        if !measurement.is_finite() {
            return Err(Error::NonFinite("measurement"));
        }
        self.predict(model, cfg, u);
        self.update(model, cfg, u, measurement)
    }

    /// Euler integration of the state and covariance over one output period.
    pub fn predict<M: StateModel<N>>(&mut self, model: &M, cfg: &EkfConfig<N>, u: M::Input) {
        let dt = cfg.sample_period / cfg.substeps as f64;
        let q = SMatrix::<f64, N, N>::from_diagonal(&cfg.process_noise);
        for _ in 0..cfg.substeps {
            self.x += model.process(&self.x, u) * dt;
            let a = model.process_jacobian(&self.x, u);
            self.p += (a * self.p + self.p * a.transpose() + q) * dt;
        }
    }

    /// Measurement update; appends a history record.
    pub fn update<M: StateModel<N>>(
        &mut self,
        model: &M,
        cfg: &EkfConfig<N>,
        u: M::Input,
        measurement: f64,
    ) -> Result<f64> {
        let step = self.history.len();
        if !measurement.is_finite() {
            return Err(Error::NonFinite("measurement"));
        }
        let c = model.measure_jacobian(&self.x, u);
        let s = cfg.sensor_noise + (c * self.p * c.transpose())[(0, 0)];
        let k: SVector<f64, N> = self.p * c.transpose() / s;
        let innovation = measurement - model.measure(&self.x, u);
        // Joseph form: algebraically (I - K C) P, but keeps P symmetric PSD.
        let ikc = SMatrix::<f64, N, N>::identity() - k * c;
        self.p = ikc * self.p * ikc.transpose() + k * k.transpose() * cfg.sensor_noise;
        self.x += k * innovation;
        self.finish(model, step, measurement, innovation)?;
        Ok(innovation)
    }

    /// Predict-only step for a missing measurement; recorded with NaN measurement.
    pub fn skip<M: StateModel<N>>(
        &mut self,
        model: &M,
        cfg: &EkfConfig<N>,
        u: M::Input,
    ) -> Result<()> {
        let step = self.history.len();
        self.predict(model, cfg, u);
        self.finish(model, step, f64::NAN, f64::NAN)
    }

    fn finish<M: StateModel<N>>(
        &mut self,
        model: &M,
        step: usize,
        measurement: f64,
        innovation: f64,
    ) -> Result<()> {
        let (x, j) = model.normalize(self.x);
        self.x = x;
        self.p = j * self.p * j.transpose();
        self.p = (self.p + self.p.transpose()) * 0.5;

        if self.x.iter().chain(self.p.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Diverged {
                step,
                what: format!(
                    "non-finite state or covariance (x = {})",
                    self.x.transpose()
                ),
            });
        }
        self.history.push(StepRecord {
            measurement,
            innovation,
            state: self.x,
            covariance: self.p,
        });
        Ok(())
    }

    /// Runs the filter over `(input, measurement)` pairs.
    pub fn run<M, I>(model: &M, cfg: &EkfConfig<N>, data: I) -> Result<Self>
    where
        M: StateModel<N>,
        I: IntoIterator<Item = (M::Input, f64)>,
    {
        let mut st = Self::new(cfg)?;
        for (u, y) in data {
            st.step(model, cfg, u, y)?;
        }
        Ok(st)
    }

    /// Per-step history as CSV:
    /// `step,<pose_column>,measurement_m,innovation_m,<state...>,<var...>`.
    ///
    /// `poses` supplies the β (deg) or offset (m) value of each step.
    pub fn write_history_csv<W: Write>(
        &self,
        mut w: W,
        pose_column: &str,
        poses: &[f64],
        state_names: [&str; N],
    ) -> Result<()> {
        let mut header = format!("step,{pose_column},measurement_m,innovation_m");
        for n in state_names {
            header.push_str(&format!(",{n}"));
        }
        for n in state_names {
            header.push_str(&format!(",var_{n}"));
        }
        writeln!(w, "{header}")?;
        for (i, r) in self.history.iter().enumerate() {
            let pose = poses.get(i).copied().unwrap_or(f64::NAN);
            let mut line = format!("{i},{pose},{},{}", r.measurement, r.innovation);
            for v in r.state.iter() {
                line.push_str(&format!(",{v}"));
            }
            for d in 0..N {
                line.push_str(&format!(",{}", r.covariance[(d, d)]));
            }
            writeln!(w, "{line}")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{wrap, RotationSchedule};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::{FRAC_PI_2, PI};

    const B: f64 = 0.18;

    fn sched() -> RotationSchedule {
        RotationSchedule::standard()
    }

    fn rel_close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * a.abs().max(b.abs()).max(1e-300) || (a - b).abs() < 1e-14
    }

    /// Central-difference gradient of `h` in every state coordinate.
    fn fd_gradient<const N: usize, M: StateModel<N>>(
        m: &M,
        x: SVector<f64, N>,
        u: M::Input,
    ) -> [f64; N] {
        let mut g = [0.0; N];
        for (i, gi) in g.iter_mut().enumerate() {
            let h = 1e-6 * x[i].abs().max(1e-2);
            let mut xp = x;
            let mut xm = x;
            xp[i] += h;
            xm[i] -= h;
            *gi = (m.measure(&xp, u) - m.measure(&xm, u)) / (2.0 * h);
        }
        g
    }

    #[test]
    fn planar_filter_tracks_exact_measurements() {
        let s = sched();
        let m = Model2D {
            baseline: B,
            omega: s.omega,
        };
        let cfg = EkfConfig::orientation_2d(s.sample_period());
        let phi = 50f64.to_radians();
        // Measurement k is available at the end of window k, when the filter clock
        // reads (k+1)·T_out; generate it at that pose so the tracking is exact.
        let data = (0..360).map(|k| ((), B * (phi - s.beta_at(k + 1)).sin()));
        let st = EkfState::run(&m, &cfg, data).unwrap();
        let t_end = 360.0 * s.sample_period();
        let az = wrap(st.x[0] + s.omega * t_end);
        assert!(
            wrap(az - phi).abs().to_degrees() < 1.8,
            "{}",
            az.to_degrees()
        );
    }

    #[test]
    fn planar_error_decays_after_first_update() {
        let s = sched();
        let m = Model2D {
            baseline: B,
            omega: s.omega,
        };
        let cfg = EkfConfig {
            process_noise: SVector::<f64, 1>::new(0.0),
            sensor_noise: 1e-8,
            ..EkfConfig::orientation_2d(s.sample_period())
        };
        let phi = 20f64.to_radians();
        let mut st = EkfState::new(&cfg).unwrap();
        let mut errs = Vec::new();
        for k in 0..200 {
            let truth_psi = phi - s.beta_at(k + 1);
            st.step(&m, &cfg, (), B * truth_psi.sin()).unwrap();
            errs.push(wrap(st.x[0] - truth_psi).abs());
        }
        for w in errs.windows(2) {
            assert!(w[1] <= w[0] + 1e-12, "{} -> {}", w[0], w[1]);
        }
        assert!(
            errs.last().unwrap() < &1e-4,
            "{:?}",
            &errs[errs.len() - 3..]
        );
    }

    #[test]
    fn spherical_filter_recovers_elevation() {
        let s = sched();
        let m = Model3D {
            baseline: B,
            omega: s.omega,
        };
        let cfg = EkfConfig::orientation_3d(s.sample_period());
        let (theta, phi) = (20f64.to_radians(), 50f64.to_radians());
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let normal = rand_distr::Normal::new(0.0, 0.01).unwrap();
        let data: Vec<_> = (0..s.sample_count())
            .map(|k| {
                let n: f64 = rand_distr::Distribution::sample(&normal, &mut rng);
                ((), B * theta.cos() * (phi - s.beta_at(k)).sin() + n)
            })
            .collect();
        let st = EkfState::run(&m, &cfg, data).unwrap();
        let last = &st.history[st.history.len() - 360..];
        let mean_theta = last.iter().map(|r| r.state[0]).sum::<f64>() / 360.0;
        assert!(
            (mean_theta.to_degrees() - 20.0).abs() < 1.5,
            "theta {}",
            mean_theta.to_degrees()
        );
    }

    #[test]
    fn distance_filter_converges() {
        let m = ModelDist { baseline: B };
        let cfg = EkfConfig::distance(5.0 / 360.0);
        let data = (0..=200).map(|k| {
            let dd = k as f64 * 0.0007;
            (dd, B * dd / (dd * dd + 25.0).sqrt())
        });
        let st = EkfState::run(&m, &cfg, data).unwrap();
        assert!((st.x[0] - 5.0).abs() < 0.1, "D = {}", st.x[0]);
    }

    #[test]
    fn non_finite_measurement_rejected() {
        let m = ModelDist { baseline: B };
        let cfg = EkfConfig::distance(0.1);
        let mut st = EkfState::new(&cfg).unwrap();
        assert!(st.step(&m, &cfg, 0.1, f64::NAN).is_err());
    }

    #[test]
    fn invalid_config_rejected() {
        let mut cfg = EkfConfig::orientation_3d(0.1);
        cfg.substeps = 0;
        assert!(EkfState::new(&cfg).is_err());
        let mut cfg = EkfConfig::orientation_3d(0.1);
        cfg.sensor_noise = 0.0;
        assert!(cfg.validate().is_err());
        let mut cfg = EkfConfig::orientation_3d(0.1);
        cfg.initial_covariance = SMatrix::<f64, 2, 2>::new(1.0, 0.5, 0.0, 1.0);
        assert!(cfg.validate().is_err());
        let mut cfg = EkfConfig::orientation_3d(0.1);
        cfg.initial_covariance = SMatrix::<f64, 2, 2>::new(-1.0, 0.0, 0.0, 1.0);
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn history_csv_layout() {
        let m = ModelDist { baseline: B };
        let cfg = EkfConfig::distance(0.1);
        let st = EkfState::run(&m, &cfg, [(0.001, 0.0), (0.002, 0.0001)]).unwrap();
        let mut buf = Vec::new();
        st.write_history_csv(&mut buf, "offset_m", &[0.001, 0.002], ["distance_m"])
            .unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "step,offset_m,measurement_m,innovation_m,distance_m,var_distance_m"
        );
        assert_eq!(lines.count(), 2);
    }

    #[test]
    fn jacobians_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let m2 = Model2D {
            baseline: B,
            omega: 1.2,
        };
        let m3 = Model3D {
            baseline: B,
            omega: 1.2,
        };
        let md = ModelDist { baseline: B };
        for _ in 0..2000 {
            let psi: f64 = rng.gen_range(-PI..PI);
            let theta: f64 = rng.gen_range(0.05..FRAC_PI_2 - 0.05);
            if psi.cos().abs() < 0.05 || psi.sin().abs() < 0.05 {
                continue;
            }
            let x = SVector::<f64, 1>::new(psi);
            let g = fd_gradient(&m2, x, ());
            assert!(rel_close(m2.measure_jacobian(&x, ())[0], g[0], 1e-6));
            let x = SVector::<f64, 2>::new(theta, psi);
            let g = fd_gradient(&m3, x, ());
            let a = m3.measure_jacobian(&x, ());
            assert!(rel_close(a[0], g[0], 1e-6) && rel_close(a[1], g[1], 1e-6));
            let dist: f64 = rng.gen_range(0.5..20.0);
            let dd: f64 = rng.gen_range(1e-3..0.5);
            let x = SVector::<f64, 1>::new(dist);
            let g = fd_gradient(&md, x, dd);
            assert!(rel_close(md.measure_jacobian(&x, dd)[0], g[0], 1e-6));
        }
    }

    #[test]
    fn flipping_the_sign_convention_leaves_distance_unchanged() {
        #[derive(Clone, Copy)]
        struct Flipped(ModelDist);
        impl StateModel<1> for Flipped {
            type Input = f64;
            fn process(&self, x: &SVector<f64, 1>, u: f64) -> SVector<f64, 1> {
                self.0.process(x, u)
            }
            fn process_jacobian(&self, x: &SVector<f64, 1>, u: f64) -> SMatrix<f64, 1, 1> {
                self.0.process_jacobian(x, u)
            }
            fn measure(&self, x: &SVector<f64, 1>, u: f64) -> f64 {
                -self.0.measure(x, u)
            }
            fn measure_jacobian(
                &self,
                x: &SVector<f64, 1>,
                u: f64,
            ) -> nalgebra::RowSVector<f64, 1> {
                -self.0.measure_jacobian(x, u)
            }
            fn normalize(&self, x: SVector<f64, 1>) -> (SVector<f64, 1>, SMatrix<f64, 1, 1>) {
                self.0.normalize(x)
            }
        }
        let m = ModelDist { baseline: B };
        let cfg = EkfConfig::distance(0.05);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let data: Vec<(f64, f64)> = (0..=200)
            .map(|k| {
                let dd = k as f64 * 0.0007;
                (
                    dd,
                    B * dd / (dd * dd + 49.0).sqrt() + rng.gen_range(-1e-4..1e-4),
                )
            })
            .collect();
        let a = EkfState::run(&m, &cfg, data.iter().copied()).unwrap();
        let b = EkfState::run(&Flipped(m), &cfg, data.iter().map(|&(u, y)| (u, -y))).unwrap();
        assert_abs_diff_eq!(a.x[0], b.x[0], epsilon = 1e-12);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(8))]

        /// Random models, inputs and measurements: P stays symmetric PSD.
        #[test]
        fn covariance_stays_psd(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let m = Model3D { baseline: B, omega: rng.gen_range(0.1..3.0) };
            let cfg = EkfConfig {
                sensor_noise: rng.gen_range(1e-8..1e-2),
                ..EkfConfig::orientation_3d(rng.gen_range(1e-3..0.1))
            };
            let mut st = EkfState::new(&cfg).unwrap();
            for _ in 0..10_000 {
                st.step(&m, &cfg, (), rng.gen_range(-0.2..0.2)).unwrap();
                let p = st.p;
                prop_assert_eq!(p[(0, 1)], p[(1, 0)]);
                let eig = p.symmetric_eigenvalues();
                prop_assert!(eig.min() >= -1e-12, "eigenvalues {}", eig);
            }
        }
    }
}
