//! Continuous and discrete branch-current state-space models.
//!
//! States are branch currents, inputs are bus voltages, both as stacked
//! (d, q) real pairs. The continuous per-branch dynamics
//! `di/dt = -(R/L + j*omega) i + (1/L)(v_from - v_to)` discretize exactly
//! under zero-order hold because the state matrix is block diagonal.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::phasor::{phi1, Phasor};
use crate::scalar::{from_f64, Scalar};
use crate::topology::{BranchId, BusId, NetworkTopology};
use crate::units::{Bases, NoiseSpec};

/// Mapping between complex signal indices and their stacked (d, q) real rows.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PhasorLayout {
    /// Number of complex signals.
    pub complex_count: usize,
}

impl PhasorLayout {
    pub fn new(complex_count: usize) -> Self {
        Self { complex_count }
    }

    pub fn d_index(&self, k: usize) -> usize {
        2 * k
    }

    pub fn q_index(&self, k: usize) -> usize {
        2 * k + 1
    }

    /// Real dimension of the stacked vector.
    pub fn real_dim(&self) -> usize {
        2 * self.complex_count
    }
}

/// Continuous-time model `dx/dt = A_c x + B_c u` in stacked real form.
#[derive(Clone, Debug)]
pub struct ContinuousModel<T> {
    /// Block-diagonal 2n x 2n state matrix; branch k's block is
    /// [[-R/L, omega], [-omega, -R/L]].
    pub a_c: DMatrix<T>,
    /// 2n x 2m input matrix: the incidence pattern scaled by 1/L per branch,
    /// expanded to 2x2 identity blocks.
    pub b_c: DMatrix<T>,
    /// Complex-index to (d, q) real-index mapping for the states.
    pub layout: PhasorLayout,
}

/// Builds the continuous branch-current model from a topology.
pub fn build_continuous<T: Scalar>(topology: &NetworkTopology<T>) -> ContinuousModel<T> {
    let n = topology.n_branches();
    let m = topology.n_buses();
    let omega = topology.omega();
    let inc = topology.incidence();

    let mut a_c = DMatrix::zeros(2 * n, 2 * n);
    let mut b_c = DMatrix::zeros(2 * n, 2 * m);
    for (k, br) in topology.branches().iter().enumerate() {
        let decay = br.resistance / br.inductance;
        // -(R/L + j*omega) as a real block.
        Phasor::new(-decay, -omega).write_block(&mut a_c, 2 * k, 2 * k);
        let g = T::one() / br.inductance;
        for i in 0..m {
            let s = from_f64::<T>(f64::from(inc.entry(k, i))) * g;
            if s != T::zero() {
                b_c[(2 * k, 2 * i)] = s;
                b_c[(2 * k + 1, 2 * i + 1)] = s;
            }
        }
    }
    ContinuousModel {
        a_c,
        b_c,
        layout: PhasorLayout::new(n),
    }
}

/// Exact zero-order-hold discretization, per branch in closed form.
///
/// Branch k has complex pole `lambda = a_c[2k,2k] + j a_c[2k+1,2k]`; the
/// discrete block is exp(lambda dt) and the input rows are scaled by
/// (exp(lambda dt) - 1) / lambda.
pub fn discretize<T: Scalar>(
    model: &ContinuousModel<T>,
    dt: T,
) -> Result<(DMatrix<T>, DMatrix<T>)> {
    if dt <= T::zero() {
        return Err(Error::Parameter("dt must be positive".into()));
    }
    let n = model.layout.complex_count;
    let cols = model.b_c.ncols();
    let mut a = DMatrix::zeros(2 * n, 2 * n);
    let mut b = DMatrix::zeros(2 * n, cols);
    for k in 0..n {
        let lambda = Phasor::new(model.a_c[(2 * k, 2 * k)], model.a_c[(2 * k + 1, 2 * k)]);
        let z = lambda.scale(dt);
        z.exp().write_block(&mut a, 2 * k, 2 * k);
        // integral of exp(lambda s) ds over [0, dt]
        let gain = phi1(z).scale(dt);
        let gain_block = gain.to_block();
        let rows = model.b_c.rows(2 * k, 2);
        b.rows_mut(2 * k, 2).copy_from(&(gain_block * rows));
    }
    Ok((a, b))
}

/// Which branch currents and bus voltages carry PMU sensors. The d and q
/// components of a metered signal are always metered together.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MeasurementLayout {
    metered_branches: Vec<BranchId>,
    metered_buses: Vec<BusId>,
}

impl MeasurementLayout {
    /// Builds a layout; ids are deduplicated and kept in ascending order.
    pub fn new(mut branches: Vec<BranchId>, mut buses: Vec<BusId>) -> Self {
        branches.sort_unstable();
        branches.dedup();
        buses.sort_unstable();
        buses.dedup();
        Self {
            metered_branches: branches,
            metered_buses: buses,
        }
    }

    /// Every branch current and bus voltage metered.
    pub fn full<T: Scalar>(topology: &NetworkTopology<T>) -> Self {
        Self {
            metered_branches: (0..topology.n_branches()).map(BranchId).collect(),
            metered_buses: topology.buses().iter().map(|b| b.id).collect(),
        }
    }

    pub fn metered_branches(&self) -> &[BranchId] {
        &self.metered_branches
    }

    pub fn metered_buses(&self) -> &[BusId] {
        &self.metered_buses
    }

    pub fn is_branch_metered(&self, id: BranchId) -> bool {
        self.metered_branches.binary_search(&id).is_ok()
    }

    pub fn is_bus_metered(&self, id: BusId) -> bool {
        self.metered_buses.contains(&id)
    }

    /// Position of a branch within the metered-branch row order.
    pub fn branch_sensor_position(&self, id: BranchId) -> Option<usize> {
        self.metered_branches.binary_search(&id).ok()
    }

    pub fn validate<T: Scalar>(&self, topology: &NetworkTopology<T>) -> Result<()> {
        if self.metered_branches.is_empty() && self.metered_buses.is_empty() {
            return Err(Error::Config("empty measurement layout".into()));
        }
        for &BranchId(k) in &self.metered_branches {
            if k >= topology.n_branches() {
                return Err(Error::Config(format!("metered branch {k} out of range")));
            }
        }
        for &b in &self.metered_buses {
            topology.bus_index(b).map_err(|_| {
                Error::Config(format!("metered bus {b} not in topology"))
            })?;
        }
        Ok(())
    }
}

/// Builds the selection matrices (C, D): C picks the d/q pairs of metered
/// branch currents, D those of metered bus voltages. Metered buses appear in
/// topology order.
pub fn build_measurement_matrices<T: Scalar>(
    layout: &MeasurementLayout,
    topology: &NetworkTopology<T>,
) -> Result<(DMatrix<T>, DMatrix<T>)> {
    layout.validate(topology)?;
    let n = topology.n_branches();
    let m = topology.n_buses();
    let p = 2 * layout.metered_branches().len();
    let l = 2 * layout.metered_buses().len();

    let mut c = DMatrix::zeros(p, 2 * n);
    for (row, &BranchId(k)) in layout.metered_branches().iter().enumerate() {
        c[(2 * row, 2 * k)] = T::one();
        c[(2 * row + 1, 2 * k + 1)] = T::one();
    }
    let mut bus_indices: Vec<usize> = layout
        .metered_buses()
        .iter()
        .map(|&b| topology.bus_index(b))
        .collect::<Result<_>>()?;
    bus_indices.sort_unstable();
    let mut d = DMatrix::zeros(l, 2 * m);
    for (row, &i) in bus_indices.iter().enumerate() {
        d[(2 * row, 2 * i)] = T::one();
        d[(2 * row + 1, 2 * i + 1)] = T::one();
    }
    Ok((c, d))
}

/// Metered buses in the row order used by D and by measurement frames.
pub fn metered_bus_order<T: Scalar>(
    layout: &MeasurementLayout,
    topology: &NetworkTopology<T>,
) -> Result<Vec<BusId>> {
    let mut pairs: Vec<(usize, BusId)> = layout
        .metered_buses()
        .iter()
        .map(|&b| topology.bus_index(b).map(|i| (i, b)))
        .collect::<Result<_>>()?;
    pairs.sort_unstable();
    Ok(pairs.into_iter().map(|(_, b)| b).collect())
}

/// Discrete state-space model with noise covariances:
/// `x_k = A x_{k-1} + B u_{k-1} + w`, `z_x = C x + v_x`, `z_u = D u + v_u`.
#[derive(Clone, Debug)]
pub struct DiscreteModel<T> {
    pub a: DMatrix<T>,
    pub b: DMatrix<T>,
    pub c: DMatrix<T>,
    pub d: DMatrix<T>,
    /// Process-noise covariance (symmetric PSD, 2n x 2n).
    pub q: DMatrix<T>,
    /// Current-measurement noise covariance (SPD, p x p).
    pub r_x: DMatrix<T>,
    /// Voltage-measurement noise covariance (SPD, l x l).
    pub r_u: DMatrix<T>,
    /// Sampling interval in seconds.
    pub dt: T,
}

impl<T: Scalar> DiscreteModel<T> {
    /// Validates dimensions and covariance definiteness.
    ///
    /// `q` may be zero (positive semidefinite); `r_x` and `r_u` must admit a
    /// Cholesky factorization.
    pub fn new(
        a: DMatrix<T>,
        b: DMatrix<T>,
        c: DMatrix<T>,
        d: DMatrix<T>,
        q: DMatrix<T>,
        r_x: DMatrix<T>,
        r_u: DMatrix<T>,
        dt: T,
    ) -> Result<Self> {
        let nx = a.nrows();
        if a.ncols() != nx {
            return Err(Error::Dimension {
                context: "A",
                expected: nx,
                got: a.ncols(),
            });
        }
        if b.nrows() != nx {
            return Err(Error::Dimension {
                context: "B rows",
                expected: nx,
                got: b.nrows(),
            });
        }
        let nu = b.ncols();
        if c.ncols() != nx {
            return Err(Error::Dimension {
                context: "C cols",
                expected: nx,
                got: c.ncols(),
            });
        }
        if d.ncols() != nu {
            return Err(Error::Dimension {
                context: "D cols",
                expected: nu,
                got: d.ncols(),
            });
        }
        if q.nrows() != nx || q.ncols() != nx {
            return Err(Error::Dimension {
                context: "Q",
                expected: nx,
                got: q.nrows(),
            });
        }
        check_symmetric_psd(&q, "Q")?;
        check_spd(&r_x, c.nrows(), "R_x")?;
        check_spd(&r_u, d.nrows(), "R_u")?;
        if dt <= T::zero() {
            return Err(Error::Parameter("dt must be positive".into()));
        }
        Ok(Self {
            a,
            b,
            c,
            d,
            q,
            r_x,
            r_u,
            dt,
        })
    }

    /// Builds the full discrete model for a topology, sensor layout, sampling
    /// interval, and noise levels. Covariances are diagonal in SI units.
    pub fn build(
        topology: &NetworkTopology<T>,
        layout: &MeasurementLayout,
        dt: T,
        noise: &NoiseSpec<T>,
        bases: &Bases<T>,
    ) -> Result<Self> {
        let continuous = build_continuous(topology);
        let (a, b) = discretize(&continuous, dt)?;
        let (c, d) = build_measurement_matrices(layout, topology)?;
        let nx = a.nrows();
        let q = DMatrix::from_diagonal_element(nx, nx, noise.sigma2_q_si(bases));
        let p = c.nrows();
        let l = d.nrows();
        let r_x = DMatrix::from_diagonal_element(p, p, noise.sigma2_x_si(bases));
        let r_u = DMatrix::from_diagonal_element(l, l, noise.sigma2_u_si(bases));
        Self::new(a, b, c, d, q, r_x, r_u, dt)
    }

    /// Number of real state coordinates (2 per branch).
    pub fn n_states(&self) -> usize {
        self.a.nrows()
    }

    /// Number of real input coordinates (2 per bus).
    pub fn n_inputs(&self) -> usize {
        self.b.ncols()
    }

    /// Number of current-measurement rows.
    pub fn n_state_meas(&self) -> usize {
        self.c.nrows()
    }

    /// Number of voltage-measurement rows.
    pub fn n_input_meas(&self) -> usize {
        self.d.nrows()
    }
}

fn check_spd<T: Scalar>(m: &DMatrix<T>, dim: usize, name: &str) -> Result<()> {
    if m.nrows() != dim || m.ncols() != dim {
        return Err(Error::Dimension {
            context: "covariance",
            expected: dim,
            got: m.nrows(),
        });
    }
    check_symmetric(m, name)?;
    if dim > 0 && nalgebra::Cholesky::new(m.clone()).is_none() {
        return Err(Error::Numerical(format!("{name} is not positive definite")));
    }
    Ok(())
}

fn check_symmetric_psd<T: Scalar>(m: &DMatrix<T>, name: &str) -> Result<()> {
    check_symmetric(m, name)?;
    if m.nrows() == 0 {
        return Ok(());
    }
    let eig = SymmetricEigen::new(m.clone());
    let scale = eig
        .eigenvalues
        .iter()
        .fold(T::zero(), |acc, &e| acc.max(e.abs()));
    let tol = -from_f64::<T>(1e-10) * scale.max(T::one());
    if eig.eigenvalues.iter().any(|&e| e < tol) {
        return Err(Error::Numerical(format!("{name} is not positive semidefinite")));
    }
    Ok(())
}

fn check_symmetric<T: Scalar>(m: &DMatrix<T>, name: &str) -> Result<()> {
    let scale = m.amax().max(T::one());
    let tol = from_f64::<T>(1e-9) * scale;
    for i in 0..m.nrows() {
        for j in (i + 1)..m.ncols() {
            if (m[(i, j)] - m[(j, i)]).abs() > tol {
                return Err(Error::Numerical(format!("{name} is not symmetric")));
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::{Branch, Bus};
    use approx::assert_relative_eq;

    fn two_bus(r: f64, l: f64, omega: f64) -> NetworkTopology<f64> {
        NetworkTopology::new(
            vec![
                Bus {
                    id: BusId(1),
                    nominal_v: 13_200.0,
                },
                Bus {
                    id: BusId(2),
                    nominal_v: 13_200.0,
                },
            ],
            vec![Branch {
                from: BusId(1),
                to: BusId(2),
                resistance: r,
                inductance: l,
            }],
            omega,
        )
        .unwrap()
    }

    #[test]
    fn continuous_block_diagonal_case() {
        // R/L = 1, omega = 0 -> A_c = -I
        let topo = two_bus(1.0, 1.0, 0.0);
        let cm = build_continuous(&topo);
        assert_relative_eq!(cm.a_c[(0, 0)], -1.0);
        assert_relative_eq!(cm.a_c[(0, 1)], 0.0);
        assert_relative_eq!(cm.a_c[(1, 0)], 0.0);
        assert_relative_eq!(cm.a_c[(1, 1)], -1.0);
    }

    #[test]
    fn continuous_block_with_rotation() {
        // R/L = 1, omega = 2 -> [[-1, 2], [-2, -1]]
        let topo = two_bus(1.0, 1.0, 2.0);
        let cm = build_continuous(&topo);
        assert_relative_eq!(cm.a_c[(0, 0)], -1.0);
        assert_relative_eq!(cm.a_c[(0, 1)], 2.0);
        assert_relative_eq!(cm.a_c[(1, 0)], -2.0);
        assert_relative_eq!(cm.a_c[(1, 1)], -1.0);
    }

    #[test]
    fn continuous_input_rows_follow_incidence_over_l() {
        // L = 0.5 H, branch 1->2: d-row of B_c is [+2, 0, -2, 0]
        let topo = two_bus(0.05, 0.5, 0.0);
        let cm = build_continuous(&topo);
        let d_row: Vec<f64> = (0..4).map(|j| cm.b_c[(0, j)]).collect();
        assert_eq!(d_row, vec![2.0, 0.0, -2.0, 0.0]);
    }

    #[test]
    fn discretize_scalar_decay() {
        // R/L = 1, omega = 0, dt = 0.01 -> diagonal e^{-0.01}
        let topo = two_bus(1.0, 1.0, 0.0);
        let cm = build_continuous(&topo);
        let (a, _) = discretize(&cm, 0.01).unwrap();
        let expected = (-0.01_f64).exp(); // scalar exponential oracle
        assert_relative_eq!(a[(0, 0)], expected, epsilon = 1e-15);
        assert_relative_eq!(a[(1, 1)], expected, epsilon = 1e-15);
        assert_relative_eq!(a[(0, 1)], 0.0);
    }

    #[test]
    fn discretize_pure_integrator_limit() {
        // R/L -> 0, omega = 0: A = I, B = dt * B_c. Constructed directly since
        // a topology requires R > 0.
        let cm = ContinuousModel {
            a_c: DMatrix::zeros(2, 2),
            b_c: DMatrix::from_row_slice(2, 4, &[2.0, 0.0, -2.0, 0.0, 0.0, 2.0, 0.0, -2.0]),
            layout: PhasorLayout::new(1),
        };
        let (a, b) = discretize(&cm, 0.01).unwrap();
        assert_relative_eq!(a[(0, 0)], 1.0, epsilon = 1e-12);
        assert_relative_eq!(a[(1, 1)], 1.0, epsilon = 1e-12);
        assert_relative_eq!(b[(0, 0)], 0.02, epsilon = 1e-12);
        assert_relative_eq!(b[(0, 2)], -0.02, epsilon = 1e-12);
    }

    #[test]
    fn discretize_rotation_block() {
        // R/L = 1, omega = 100*pi, dt = 0.01:
        // block = e^{-0.01} [[cos pi, sin pi], [-sin pi, cos pi]]
        let omega = 100.0 * std::f64::consts::PI;
        let topo = two_bus(1.0, 1.0, omega);
        let cm = build_continuous(&topo);
        let (a, _) = discretize(&cm, 0.01).unwrap();
        let rho = (-0.01_f64).exp();
        assert_relative_eq!(a[(0, 0)], -rho, epsilon = 1e-12);
        assert_relative_eq!(a[(0, 1)], 0.0, epsilon = 1e-12);
        assert_relative_eq!(a[(1, 0)], 0.0, epsilon = 1e-12);
        assert_relative_eq!(a[(1, 1)], -rho, epsilon = 1e-12);
    }

    #[test]
    fn dt_must_be_positive() {
        let topo = two_bus(1.0, 1.0, 0.0);
        let cm = build_continuous(&topo);
        assert!(discretize(&cm, 0.0).is_err());
    }

    fn three_bus_chain() -> NetworkTopology<f64> {
        NetworkTopology::new(
            vec![
                Bus {
                    id: BusId(1),
                    nominal_v: 1.0,
                },
                Bus {
                    id: BusId(2),
                    nominal_v: 1.0,
                },
                Bus {
                    id: BusId(3),
                    nominal_v: 1.0,
                },
            ],
            vec![
                Branch {
                    from: BusId(1),
                    to: BusId(2),
                    resistance: 0.1,
                    inductance: 1e-3,
                },
                Branch {
                    from: BusId(2),
                    to: BusId(3),
                    resistance: 0.1,
                    inductance: 1e-3,
                },
            ],
            0.0,
        )
        .unwrap()
    }

    #[test]
    fn full_metering_gives_identities() {
        let topo = three_bus_chain();
        let layout = MeasurementLayout::full(&topo);
        let (c, d) = build_measurement_matrices(&layout, &topo).unwrap();
        assert_eq!(c, DMatrix::identity(4, 4));
        assert_eq!(d, DMatrix::identity(6, 6));
    }

    #[test]
    fn selection_of_second_branch_only() {
        let topo = three_bus_chain();
        let layout = MeasurementLayout::new(vec![BranchId(1)], vec![BusId(1)]);
        let (c, _) = build_measurement_matrices(&layout, &topo).unwrap();
        assert_eq!(
            c,
            DMatrix::from_row_slice(2, 4, &[0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0])
        );
    }

    #[test]
    fn no_buses_metered_gives_zero_rows() {
        let topo = three_bus_chain();
        let layout = MeasurementLayout::new(vec![BranchId(0), BranchId(1)], vec![]);
        let (_, d) = build_measurement_matrices(&layout, &topo).unwrap();
        assert_eq!(d.nrows(), 0);
        assert_eq!(d.ncols(), 6);
    }

    #[test]
    fn empty_layout_is_config_error() {
        let topo = three_bus_chain();
        let layout = MeasurementLayout::new(vec![], vec![]);
        let err = build_measurement_matrices(&layout, &topo).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn build_discrete_model_dimensions() {
        let topo = three_bus_chain();
        let layout = MeasurementLayout::full(&topo);
        let bases = Bases::new(1.0, 1.0).unwrap();
        let noise = NoiseSpec::new(5e-4, 5e-4, 1e-4, 0).unwrap();
        let model = DiscreteModel::build(&topo, &layout, 0.01, &noise, &bases).unwrap();
        assert_eq!(model.n_states(), 4);
        assert_eq!(model.n_inputs(), 6);
        assert_eq!(model.n_state_meas(), 4);
        assert_eq!(model.n_input_meas(), 6);
        // per-branch blocks are rho * rotation with 0 < rho < 1
        let rho = (model.a[(0, 0)].powi(2) + model.a[(1, 0)].powi(2)).sqrt();
        assert!(rho > 0.0 && rho < 1.0);
    }

    #[test]
    fn zero_q_is_accepted() {
        let topo = three_bus_chain();
        let layout = MeasurementLayout::full(&topo);
        let bases = Bases::new(1.0, 1.0).unwrap();
        let noise = NoiseSpec::new(5e-4, 5e-4, 0.0, 0).unwrap();
        assert!(DiscreteModel::build(&topo, &layout, 0.01, &noise, &bases).is_ok());
    }

    #[test]
    fn zero_measurement_variance_is_rejected() {
        let topo = three_bus_chain();
        let layout = MeasurementLayout::full(&topo);
        let bases = Bases::new(1.0, 1.0).unwrap();
        let noise = NoiseSpec::new(0.0, 5e-4, 1e-4, 0).unwrap();
        assert!(DiscreteModel::build(&topo, &layout, 0.01, &noise, &bases).is_err());
    }
}
