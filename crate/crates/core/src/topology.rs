//! Network topology: buses, directed R-L branches, and the incidence matrix.

use std::collections::HashMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// External bus identifier (as written in configs and reports).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct BusId(pub u32);

impl std::fmt::Display for BusId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Branch identifier: index into the topology branch list.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct BranchId(pub usize);

#[derive(Clone, Debug)]
pub struct Bus<T> {
    pub id: BusId,
    /// Nominal voltage magnitude in volts.
    pub nominal_v: T,
}

/// Series R-L line from `from` to `to`; positive current flows from -> to.
#[derive(Clone, Debug)]
pub struct Branch<T> {
    pub from: BusId,
    pub to: BusId,
    /// Series resistance in ohms.
    pub resistance: T,
    /// Series inductance in henries.
    pub inductance: T,
}

impl<T: Scalar> Branch<T> {
    /// Complex series impedance R + j*omega*L.
    pub fn impedance(&self, omega: T) -> crate::phasor::Phasor<T> {
        crate::phasor::Phasor::new(self.resistance, omega * self.inductance)
    }
}

/// A connected directed graph of buses and R-L branches at a fixed synchronous
/// frequency.
#[derive(Clone, Debug)]
pub struct NetworkTopology<T> {
    buses: Vec<Bus<T>>,
    branches: Vec<Branch<T>>,
    omega: T,
    index: HashMap<BusId, usize>,
}

impl<T: Scalar> NetworkTopology<T> {
    /// Validates and builds a topology. Branch endpoints must exist, R and L
    /// must be positive, self-loops are rejected, and the graph must be
    /// connected.
    pub fn new(buses: Vec<Bus<T>>, branches: Vec<Branch<T>>, omega: T) -> Result<Self> {
        if buses.is_empty() {
            return Err(Error::Topology("no buses".into()));
        }
        let mut index = HashMap::new();
        for (i, bus) in buses.iter().enumerate() {
            if index.insert(bus.id, i).is_some() {
                return Err(Error::Topology(format!("duplicate bus id {}", bus.id)));
            }
            if bus.nominal_v <= T::zero() {
                return Err(Error::Topology(format!(
                    "bus {}: nominal voltage must be positive",
                    bus.id
                )));
            }
        }
        for (k, br) in branches.iter().enumerate() {
            if !index.contains_key(&br.from) || !index.contains_key(&br.to) {
                return Err(Error::Topology(format!(
                    "branch {k}: dangling endpoint {}-{}",
                    br.from, br.to
                )));
            }
            if br.from == br.to {
                return Err(Error::Topology(format!("branch {k}: self-loop at {}", br.from)));
            }
            if br.resistance <= T::zero() || br.inductance <= T::zero() {
                return Err(Error::Parameter(format!(
                    "branch {k} ({}-{}): R and L must be positive",
                    br.from, br.to
                )));
            }
        }
        let topo = Self {
            buses,
            branches,
            omega,
            index,
        };
        if !topo.is_connected() {
            return Err(Error::Topology("graph is not connected".into()));
        }
        Ok(topo)
    }

    fn is_connected(&self) -> bool {
        let m = self.buses.len();
        if m <= 1 {
            return true;
        }
        let mut adj = vec![Vec::new(); m];
        for br in &self.branches {
            let i = self.index[&br.from];
            let j = self.index[&br.to];
            adj[i].push(j);
            adj[j].push(i);
        }
        let mut seen = vec![false; m];
        let mut stack = vec![0usize];
        seen[0] = true;
        while let Some(v) = stack.pop() {
            for &w in &adj[v] {
                if !seen[w] {
                    seen[w] = true;
                    stack.push(w);
                }
            }
        }
        seen.iter().all(|&s| s)
    }

    pub fn n_branches(&self) -> usize {
        self.branches.len()
    }

    pub fn n_buses(&self) -> usize {
        self.buses.len()
    }

    pub fn omega(&self) -> T {
        self.omega
    }

    pub fn buses(&self) -> &[Bus<T>] {
        &self.buses
    }

    pub fn branches(&self) -> &[Branch<T>] {
        &self.branches
    }

    pub fn branch(&self, id: BranchId) -> &Branch<T> {
        &self.branches[id.0]
    }

    /// Dense column index of a bus id.
    pub fn bus_index(&self, id: BusId) -> Result<usize> {
        self.index
            .get(&id)
            .copied()
            .ok_or_else(|| Error::Topology(format!("unknown bus {id}")))
    }

    /// Finds a branch by its endpoint pair in either orientation.
    pub fn find_branch(&self, a: BusId, b: BusId) -> Option<BranchId> {
        self.branches
            .iter()
            .position(|br| (br.from == a && br.to == b) || (br.from == b && br.to == a))
            .map(BranchId)
    }

    /// "from-to" label used in CSV headers and reports.
    pub fn branch_label(&self, id: BranchId) -> String {
        let br = self.branch(id);
        format!("{}_{}", br.from, br.to)
    }

    /// Signed branch-to-bus incidence matrix (rows = branches).
    pub fn incidence(&self) -> IncidenceMatrix {
        let n = self.n_branches();
        let m = self.n_buses();
        let mut entries = DMatrix::<i8>::zeros(n, m);
        for (k, br) in self.branches.iter().enumerate() {
            entries[(k, self.index[&br.from])] = 1;
            entries[(k, self.index[&br.to])] = -1;
        }
        IncidenceMatrix { entries }
    }
}

/// Signed incidence matrix: entry (k, i) is +1 where branch k leaves bus i,
/// -1 where it enters, 0 elsewhere. Each row has exactly one +1 and one -1.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IncidenceMatrix {
    pub entries: DMatrix<i8>,
}

impl IncidenceMatrix {
    pub fn n_branches(&self) -> usize {
        self.entries.nrows()
    }

    pub fn n_buses(&self) -> usize {
        self.entries.ncols()
    }

    pub fn entry(&self, branch: usize, bus: usize) -> i8 {
        self.entries[(branch, bus)]
    }

    /// Real-valued copy for matrix arithmetic.
    pub fn to_matrix<T: Scalar>(&self) -> DMatrix<T> {
        DMatrix::from_fn(self.n_branches(), self.n_buses(), |k, i| {
            crate::scalar::from_f64::<T>(f64::from(self.entries[(k, i)]))
        })
    }
}

/// Builds the incidence matrix of a validated topology.
pub fn build_incidence<T: Scalar>(topology: &NetworkTopology<T>) -> IncidenceMatrix {
    topology.incidence()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bus(id: u32) -> Bus<f64> {
        Bus {
            id: BusId(id),
            nominal_v: 13_200.0,
        }
    }

    fn branch(from: u32, to: u32) -> Branch<f64> {
        Branch {
            from: BusId(from),
            to: BusId(to),
            resistance: 0.1,
            inductance: 1e-3,
        }
    }

    #[test]
    fn two_bus_single_branch_row() {
        let topo =
            NetworkTopology::new(vec![bus(1), bus(2)], vec![branch(1, 2)], 0.0).unwrap();
        let inc = build_incidence(&topo);
        assert_eq!(inc.entries, DMatrix::from_row_slice(1, 2, &[1, -1]));
    }

    #[test]
    fn three_bus_chain_rows() {
        let topo = NetworkTopology::new(
            vec![bus(1), bus(2), bus(3)],
            vec![branch(1, 2), branch(2, 3)],
            0.0,
        )
        .unwrap();
        let inc = build_incidence(&topo);
        assert_eq!(
            inc.entries,
            DMatrix::from_row_slice(2, 3, &[1, -1, 0, 0, 1, -1])
        );
    }

    #[test]
    fn dangling_endpoint_rejected() {
        let err = NetworkTopology::new(vec![bus(1), bus(2)], vec![branch(1, 3)], 0.0)
            .unwrap_err();
        assert!(matches!(err, Error::Topology(_)));
    }

    #[test]
    fn self_loop_rejected() {
        let err =
            NetworkTopology::new(vec![bus(1), bus(2)], vec![branch(1, 1), branch(1, 2)], 0.0)
                .unwrap_err();
        assert!(matches!(err, Error::Topology(_)));
    }

    #[test]
    fn nonpositive_parameters_rejected() {
        let mut b = branch(1, 2);
        b.inductance = 0.0;
        let err = NetworkTopology::new(vec![bus(1), bus(2)], vec![b], 0.0).unwrap_err();
        assert!(matches!(err, Error::Parameter(_)));
    }

    #[test]
    fn disconnected_graph_rejected() {
        let err = NetworkTopology::new(
            vec![bus(1), bus(2), bus(3), bus(4)],
            vec![branch(1, 2), branch(3, 4)],
            0.0,
        )
        .unwrap_err();
        assert!(matches!(err, Error::Topology(_)));
    }
}
