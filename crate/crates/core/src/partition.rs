//! Multi-area partitioning: local sub-models that share only bus-voltage
//! inputs at the coupling points.

use std::collections::BTreeMap;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::estimation::MeasurementFrame;
use crate::model::{DiscreteModel, MeasurementLayout};
use crate::scalar::Scalar;
use crate::topology::{BranchId, BusId, NetworkTopology};
use crate::units::{Bases, NoiseSpec};

/// Branch-to-area assignment; area index = position in the list. Bus sets are
/// derived from branch endpoints, so shared buses appear in every area that
/// owns an incident branch.
#[derive(Clone, Debug)]
pub struct AreaAssignment {
    pub branch_sets: Vec<Vec<BranchId>>,
}

impl AreaAssignment {
    pub fn new(branch_sets: Vec<Vec<BranchId>>) -> Self {
        Self { branch_sets }
    }
}

/// One area: branch and bus sets in canonical (global) order plus the local
/// restriction of the sensor layout.
#[derive(Clone, Debug)]
pub struct Area {
    /// Global branch ids, ascending.
    pub branches: Vec<BranchId>,
    /// Global bus ids, ascending by global topology index.
    pub buses: Vec<BusId>,
    /// Metered branches (global ids) inside this area.
    pub metered_branches: Vec<BranchId>,
    /// Metered buses (global ids) inside this area.
    pub metered_buses: Vec<BusId>,
}

/// Validated area decomposition with shared-bus bookkeeping and the index
/// maps needed to slice global measurement frames into local ones.
#[derive(Clone, Debug)]
pub struct AreaPartition {
    areas: Vec<Area>,
    /// Unordered pair (i < j) -> shared buses in canonical order.
    shared: BTreeMap<(usize, usize), Vec<BusId>>,
    /// Per area: positions of its metered branches in the global z_x sensor order.
    zx_positions: Vec<Vec<usize>>,
    /// Per area: positions of its metered buses in the global z_u sensor order.
    zu_positions: Vec<Vec<usize>>,
}

impl AreaPartition {
    pub fn new<T: Scalar>(
        topology: &NetworkTopology<T>,
        layout: &MeasurementLayout,
        assignment: &AreaAssignment,
    ) -> Result<Self> {
        layout.validate(topology)?;
        let n = topology.n_branches();
        let mut owner = vec![None::<usize>; n];
        for (a, set) in assignment.branch_sets.iter().enumerate() {
            if set.is_empty() {
                return Err(Error::Partition(format!("area {a} has no branches")));
            }
            for &BranchId(k) in set {
                if k >= n {
                    return Err(Error::Partition(format!("branch {k} out of range")));
                }
                if owner[k].is_some() {
                    return Err(Error::Partition(format!(
                        "branch {k} assigned to more than one area"
                    )));
                }
                owner[k] = Some(a);
            }
        }
        if let Some(k) = owner.iter().position(Option::is_none) {
            return Err(Error::Partition(format!("branch {k} not assigned to any area")));
        }

        let global_bus_order: Vec<BusId> = topology.buses().iter().map(|b| b.id).collect();
        let mut areas = Vec::with_capacity(assignment.branch_sets.len());
        for set in &assignment.branch_sets {
            let mut branches = set.clone();
            branches.sort_unstable();
            let mut bus_indices: Vec<usize> = Vec::new();
            for &id in &branches {
                let br = topology.branch(id);
                bus_indices.push(topology.bus_index(br.from)?);
                bus_indices.push(topology.bus_index(br.to)?);
            }
            bus_indices.sort_unstable();
            bus_indices.dedup();
            let buses: Vec<BusId> = bus_indices.iter().map(|&i| global_bus_order[i]).collect();
            let metered_branches: Vec<BranchId> = branches
                .iter()
                .copied()
                .filter(|&b| layout.is_branch_metered(b))
                .collect();
            let metered_buses: Vec<BusId> = buses
                .iter()
                .copied()
                .filter(|&b| layout.is_bus_metered(b))
                .collect();
            areas.push(Area {
                branches,
                buses,
                metered_branches,
                metered_buses,
            });
        }

        let mut shared = BTreeMap::new();
        for i in 0..areas.len() {
            for j in (i + 1)..areas.len() {
                let common: Vec<BusId> = areas[i]
                    .buses
                    .iter()
                    .copied()
                    .filter(|b| areas[j].buses.contains(b))
                    .collect();
                if !common.is_empty() {
                    shared.insert((i, j), common);
                }
            }
        }

        let metered_bus_order = crate::model::metered_bus_order(layout, topology)?;
        let zx_positions = areas
            .iter()
            .map(|area| {
                area.metered_branches
                    .iter()
                    .map(|&b| layout.branch_sensor_position(b).expect("metered"))
                    .collect()
            })
            .collect();
        let zu_positions = areas
            .iter()
            .map(|area| {
                area.metered_buses
                    .iter()
                    .map(|&b| {
                        metered_bus_order
                            .iter()
                            .position(|&mb| mb == b)
                            .expect("metered")
                    })
                    .collect()
            })
            .collect();

        Ok(Self {
            areas,
            shared,
            zx_positions,
            zu_positions,
        })
    }

    pub fn n_areas(&self) -> usize {
        self.areas.len()
    }

    pub fn area(&self, i: usize) -> &Area {
        &self.areas[i]
    }

    pub fn areas(&self) -> &[Area] {
        &self.areas
    }

    /// Shared buses of an unordered area pair, in canonical order.
    pub fn shared_buses(&self, a: usize, b: usize) -> &[BusId] {
        let key = if a < b { (a, b) } else { (b, a) };
        self.shared.get(&key).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Areas sharing at least one bus with `area`.
    pub fn neighbors(&self, area: usize) -> Vec<usize> {
        (0..self.areas.len())
            .filter(|&j| j != area && !self.shared_buses(area, j).is_empty())
            .collect()
    }

    /// Selection matrix mapping `area`'s local input vector onto the canonical
    /// shared-bus order of the pair {area, neighbor}. Each row has exactly one 1.
    pub fn selection_map<T: Scalar>(&self, area: usize, neighbor: usize) -> DMatrix<T> {
        let shared = self.shared_buses(area, neighbor);
        let buses = &self.areas[area].buses;
        let mut t = DMatrix::zeros(2 * shared.len(), 2 * buses.len());
        for (row, bus) in shared.iter().enumerate() {
            let local = buses.iter().position(|b| b == bus).expect("shared bus in area");
            t[(2 * row, 2 * local)] = T::one();
            t[(2 * row + 1, 2 * local + 1)] = T::one();
        }
        t
    }

    /// Restriction of a global measurement frame to one area's sensors.
    pub fn slice_frame<T: Scalar>(
        &self,
        area: usize,
        frame: &MeasurementFrame<T>,
    ) -> MeasurementFrame<T> {
        let zx = &self.zx_positions[area];
        let zu = &self.zu_positions[area];
        let mut z_x = nalgebra::DVector::zeros(2 * zx.len());
        for (r, &pos) in zx.iter().enumerate() {
            z_x[2 * r] = frame.z_x[2 * pos];
            z_x[2 * r + 1] = frame.z_x[2 * pos + 1];
        }
        let mut z_u = nalgebra::DVector::zeros(2 * zu.len());
        for (r, &pos) in zu.iter().enumerate() {
            z_u[2 * r] = frame.z_u[2 * pos];
            z_u[2 * r + 1] = frame.z_u[2 * pos + 1];
        }
        MeasurementFrame::new(frame.k, z_x, z_u)
    }

    /// Sub-topology of one area; bus ids are preserved, branches are renumbered
    /// in area order. The area subgraph must itself be connected.
    pub fn local_topology<T: Scalar>(
        &self,
        topology: &NetworkTopology<T>,
        area: usize,
    ) -> Result<NetworkTopology<T>> {
        let a = &self.areas[area];
        let buses = a
            .buses
            .iter()
            .map(|&id| {
                let i = topology.bus_index(id)?;
                Ok(topology.buses()[i].clone())
            })
            .collect::<Result<Vec<_>>>()?;
        let branches = a
            .branches
            .iter()
            .map(|&id| topology.branch(id).clone())
            .collect();
        NetworkTopology::new(buses, branches, topology.omega())
            .map_err(|e| Error::Partition(format!("area {area}: {e}")))
    }

    /// Sensor layout of one area in local branch numbering.
    pub fn local_layout(&self, area: usize) -> MeasurementLayout {
        let a = &self.areas[area];
        let branches = a
            .metered_branches
            .iter()
            .map(|&b| BranchId(a.branches.iter().position(|&x| x == b).expect("own branch")))
            .collect();
        MeasurementLayout::new(branches, a.metered_buses.clone())
    }
}

/// Builds the partition and the per-area discrete models. Local model i has
/// exactly area i's branches as states and area i's buses as inputs; buses at
/// coupling points appear in every adjacent area's input vector.
pub fn partition<T: Scalar>(
    topology: &NetworkTopology<T>,
    layout: &MeasurementLayout,
    assignment: &AreaAssignment,
    dt: T,
    noise: &NoiseSpec<T>,
    bases: &Bases<T>,
) -> Result<(AreaPartition, Vec<DiscreteModel<T>>)> {
    let part = AreaPartition::new(topology, layout, assignment)?;
    let mut models = Vec::with_capacity(part.n_areas());
    for i in 0..part.n_areas() {
        let local_topo = part.local_topology(topology, i)?;
        let local_layout = part.local_layout(i);
        models.push(DiscreteModel::build(
            &local_topo,
            &local_layout,
            dt,
            noise,
            bases,
        )?);
    }
    Ok((part, models))
}
