//! Everything needed to evaluate the state and the energy at any wavenumber.

use crate::assembly::{assemble, AssembledSystem, Discretization, LinerDensity, SourceData};
use crate::energy::EnergySpec;
use crate::error::{Error, Result};
use crate::params::{ImpedanceModel, PhysicalParams, Physics};
use crate::solver::{self, SolutionField};

pub struct Problem {
    pub disc: Discretization,
    pub params: PhysicalParams,
    pub physics: Physics,
    pub impedance: ImpedanceModel,
    pub sources: SourceData,
    pub energy: EnergySpec,
}

impl Problem {
    pub fn new(
        disc: Discretization,
        params: PhysicalParams,
        impedance: Option<ImpedanceModel>,
        sources: SourceData,
        energy: EnergySpec,
    ) -> Result<Problem> {
        let physics = Physics::new(&params)?;
        let impedance = impedance.unwrap_or(ImpedanceModel::Constant(params.impedance));
        impedance.validate()?;
        energy.validate()?;
        Ok(Problem { disc, params, physics, impedance, sources, energy })
    }

    pub fn physics_at(&self, k0: f64) -> Result<Physics> {
        self.physics.at_wavenumber(k0, Some(&self.impedance))
    }

    pub fn assemble_at(&self, k0: f64, chi: &LinerDensity) -> Result<AssembledSystem<'_>> {
        let ph = self.physics_at(k0)?;
        assemble(&self.disc, &ph, chi, &self.sources, None)
    }

    pub fn solve_at(&self, k0: f64, chi: &LinerDensity) -> Result<SolutionField> {
        let sys = self.assemble_at(k0, chi)?;
        solver::solve(&sys).map_err(|e| at(k0, e))
    }

    pub fn uniform_density(&self, value: f64) -> Result<LinerDensity> {
        LinerDensity::uniform(value, &self.disc)
    }
}

pub(crate) fn at(k0: f64, e: Error) -> Error {
    match e {
        Error::AtWavenumber { .. } => e,
        other => Error::AtWavenumber { k0, source: Box::new(other) },
    }
}
