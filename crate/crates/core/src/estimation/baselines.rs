//! Static WLS and tracking-state-estimation baselines.
//!
//! Both use the quasi-static measurement model: bus voltages are the states,
//! voltage sensors map through selection rows, and current sensors map through
//! branch-admittance differences `i = (v_from - v_to) / (R + j omega L)`.
//! Current rows are exact only in sinusoidal steady state, which is the
//! premise these baselines rest on.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::estimation::MeasurementFrame;
use crate::linalg::{self, symmetrize};
use crate::model::MeasurementLayout;
use crate::scalar::Scalar;
use crate::topology::NetworkTopology;
use crate::units::{Bases, NoiseSpec};

/// Quasi-static measurement model over the stacked bus-voltage vector.
///
/// Rows follow frame order: current rows first (metered branches, (d, q)
/// pairs), then voltage rows (metered buses). `noise_cov` is the matching
/// diagonal measurement covariance in SI units.
#[derive(Clone, Debug)]
pub struct QuasiStaticModel<T> {
    pub h: DMatrix<T>,
    pub noise_cov: DMatrix<T>,
    pub n_current_rows: usize,
    pub n_voltage_rows: usize,
}

impl<T: Scalar> QuasiStaticModel<T> {
    pub fn build(
        topology: &NetworkTopology<T>,
        layout: &MeasurementLayout,
        noise: &NoiseSpec<T>,
        bases: &Bases<T>,
    ) -> Result<Self> {
        layout.validate(topology)?;
        let m = topology.n_buses();
        let p = 2 * layout.metered_branches().len();
        let l = 2 * layout.metered_buses().len();
        let mut h = DMatrix::zeros(p + l, 2 * m);
        for (row, &id) in layout.metered_branches().iter().enumerate() {
            let br = topology.branch(id);
            let admittance = crate::phasor::Phasor::new(T::one(), T::zero())
                / br.impedance(topology.omega());
            let from = topology.bus_index(br.from)?;
            let to = topology.bus_index(br.to)?;
            admittance.write_block(&mut h, 2 * row, 2 * from);
            (-admittance).write_block(&mut h, 2 * row, 2 * to);
        }
        let mut bus_indices: Vec<usize> = layout
            .metered_buses()
            .iter()
            .map(|&b| topology.bus_index(b))
            .collect::<Result<_>>()?;
        bus_indices.sort_unstable();
        for (row, &i) in bus_indices.iter().enumerate() {
            h[(p + 2 * row, 2 * i)] = T::one();
            h[(p + 2 * row + 1, 2 * i + 1)] = T::one();
        }
        let mut diag = DVector::zeros(p + l);
        let s2x = noise.sigma2_x_si(bases);
        let s2u = noise.sigma2_u_si(bases);
        if (p > 0 && s2x <= T::zero()) || (l > 0 && s2u <= T::zero()) {
            return Err(Error::Parameter(
                "quasi-static model needs positive measurement variances".into(),
            ));
        }
        for r in 0..p {
            diag[r] = s2x;
        }
        for r in p..p + l {
            diag[r] = s2u;
        }
        Ok(Self {
            h,
            noise_cov: DMatrix::from_diagonal(&diag),
            n_current_rows: p,
            n_voltage_rows: l,
        })
    }

    /// Measurement vector in row order: [z_x; z_u].
    pub fn stack_frame(&self, frame: &MeasurementFrame<T>) -> Result<DVector<T>> {
        if frame.z_x.len() != self.n_current_rows || frame.z_u.len() != self.n_voltage_rows {
            return Err(Error::Dimension {
                context: "quasi-static frame",
                expected: self.n_current_rows + self.n_voltage_rows,
                got: frame.z_x.len() + frame.z_u.len(),
            });
        }
        Ok(linalg::stack_vectors(&[&frame.z_x, &frame.z_u]))
    }

    /// Diagonal weight matrix W = R^{-1}.
    pub fn weight(&self) -> DMatrix<T> {
        DMatrix::from_diagonal(&self.noise_cov.diagonal().map(|v| T::one() / v))
    }
}

/// Weighted least-squares solve `x = (H^T W H)^{-1} H^T W z` through a
/// whitened QR factorization. Errors on rank deficiency.
pub fn static_wls_baseline<T: Scalar>(
    h: &DMatrix<T>,
    w: &DMatrix<T>,
    z: &DVector<T>,
) -> Result<DVector<T>> {
    Ok(linalg::wls_with_weight(h, w, z)?.estimate)
}

/// Static WLS solution with covariance (H^T W H)^{-1}.
pub fn static_wls_with_covariance<T: Scalar>(
    h: &DMatrix<T>,
    w: &DMatrix<T>,
    z: &DVector<T>,
) -> Result<(DVector<T>, DMatrix<T>)> {
    let sol = linalg::wls_with_weight(h, w, z)?;
    Ok((sol.estimate, sol.covariance))
}

/// Tracking state estimator: a Kalman filter with identity transition on the
/// bus voltages (random-walk model) over the quasi-static measurements.
#[derive(Clone, Debug)]
pub struct TseFilter<T> {
    h: DMatrix<T>,
    r: DMatrix<T>,
    q: DMatrix<T>,
    pub k: usize,
    pub v_hat: DVector<T>,
    pub p: DMatrix<T>,
}

/// Output of one TSE step: filtered voltages plus the innovation and its
/// covariance for bad-data testing.
#[derive(Clone, Debug)]
pub struct TseStep<T> {
    pub k: usize,
    pub v_hat: DVector<T>,
    pub innovation: DVector<T>,
    pub innovation_cov: DMatrix<T>,
}

impl<T: Scalar> TseFilter<T> {
    /// Builds the filter from raw matrices: measurement model `h`, measurement
    /// covariance `r`, process covariance `q`, and an initial estimate.
    pub fn from_parts(
        h: DMatrix<T>,
        r: DMatrix<T>,
        q: DMatrix<T>,
        k: usize,
        v0: DVector<T>,
        p0: DMatrix<T>,
    ) -> Self {
        Self {
            h,
            r,
            q,
            k,
            v_hat: v0,
            p: p0,
        }
    }

    /// Initializes from the first frame by a static WLS solve; the initial
    /// covariance is the WLS covariance.
    pub fn initialize(
        qsm: &QuasiStaticModel<T>,
        q_tse_variance_si: T,
        first: &MeasurementFrame<T>,
    ) -> Result<Self> {
        let z = qsm.stack_frame(first)?;
        let sol = linalg::wls_with_covariance(&qsm.h, &qsm.noise_cov, &z)?;
        let dim = qsm.h.ncols();
        Ok(Self::from_parts(
            qsm.h.clone(),
            qsm.noise_cov.clone(),
            DMatrix::from_diagonal_element(dim, dim, q_tse_variance_si),
            first.k,
            sol.estimate,
            sol.covariance,
        ))
    }

    /// Predict (random walk) then update with the stacked measurement vector.
    pub fn step(&mut self, k: usize, z: &DVector<T>) -> Result<TseStep<T>> {
        if z.len() != self.h.nrows() {
            return Err(Error::Dimension {
                context: "TSE measurement",
                expected: self.h.nrows(),
                got: z.len(),
            });
        }
        let p_pred = symmetrize(&(&self.p + &self.q));
        let innovation = z - &self.h * &self.v_hat;
        let s = symmetrize(&(&self.h * &p_pred * self.h.transpose() + &self.r));
        let chol = nalgebra::Cholesky::new(s.clone())
            .ok_or_else(|| Error::Numerical("TSE innovation covariance not SPD".into()))?;
        let gain = chol.solve(&(&self.h * &p_pred)).transpose();
        self.v_hat += &gain * &innovation;
        let dim = self.v_hat.len();
        self.p = symmetrize(&((DMatrix::identity(dim, dim) - &gain * &self.h) * &p_pred));
        self.k = k;
        Ok(TseStep {
            k,
            v_hat: self.v_hat.clone(),
            innovation,
            innovation_cov: s,
        })
    }
}

/// One TSE step over a measurement frame.
pub fn tse_step<T: Scalar>(
    state: &mut TseFilter<T>,
    qsm: &QuasiStaticModel<T>,
    frame: &MeasurementFrame<T>,
) -> Result<TseStep<T>> {
    let z = qsm.stack_frame(frame)?;
    state.step(frame.k, &z)
}
