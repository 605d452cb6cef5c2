//! Run configuration: a TOML file with sections `[physics]`, `[mesh]`,
//! `[measure]`, `[energy]`, `[optimize]` and `[run]`.
//!
//! Only `omega`, `u0` and `c0` are required; every other key has the default
//! listed on its field. Unknown keys are rejected.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::assembly::{BoundaryField, Discretization, Field, LinerDensity, SourceData};
use crate::energy::EnergySpec;
use crate::error::{Error, Result};
use crate::measure::{build_measure, CantorSpec};
use crate::mesh::{generate, load_or_generate, MeshSpec};
use crate::optimize::Mode;
use crate::params::{ImpedanceModel, PhysicalParams};
use crate::problem::Problem;
use crate::Complex64;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub physics: PhysicsSection,
    #[serde(default)]
    pub mesh: MeshSection,
    #[serde(default)]
    pub measure: MeasureSection,
    #[serde(default)]
    pub energy: EnergySection,
    #[serde(default)]
    pub optimize: OptimizeSection,
    #[serde(default)]
    pub run: RunSection,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhysicsSection {
    pub omega: f64,
    pub u0: f64,
    pub c0: f64,
    /// Default 1.
    #[serde(rename = "Z0", default = "one")]
    pub z0: f64,
    /// Default 1.
    #[serde(rename = "Z_re", default = "one")]
    pub z_re: f64,
    /// Default 0.
    #[serde(rename = "Z_im", default)]
    pub z_im: f64,
    /// Default 0 (Ingard-Myers).
    #[serde(default)]
    pub beta_v_re: f64,
    /// Default 0.
    #[serde(default)]
    pub beta_v_im: f64,
    /// Rows `[k0, Z_re, Z_im]`, interpolated linearly in k0 and held constant
    /// outside the table. Default: none, Z is constant.
    #[serde(default)]
    pub impedance_table: Option<Vec<[f64; 3]>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MeshSection {
    /// Default 1.
    pub length: f64,
    /// Default 0.5.
    pub radius: f64,
    /// Default 9.
    pub n_axial: usize,
    /// Default 4.
    pub n_ring: usize,
    /// Default 0.
    pub refine: u32,
    /// Directory of the binary mesh cache. Default: no cache.
    pub cache_dir: Option<PathBuf>,
}

impl Default for MeshSection {
    fn default() -> Self {
        MeshSection { length: 1.0, radius: 0.5, n_axial: 9, n_ring: 4, refine: 0, cache_dir: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MeasureSection {
    /// Default 1.
    pub surface_weight: f64,
    /// Default 0 (no Cantor part).
    pub cantor_mass: f64,
    /// Default 6.
    pub cantor_level: u32,
    /// Axial interval `[a, b]` carrying the Cantor part. Default `[0, length]`.
    pub cantor_support: Option<[f64; 2]>,
}

impl Default for MeasureSection {
    fn default() -> Self {
        MeasureSection { surface_weight: 1.0, cantor_mass: 0.0, cantor_level: 6, cantor_support: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnergySection {
    /// Default 1.
    pub a: f64,
    /// Default 0.
    pub b: f64,
    /// Default 0.
    pub d: f64,
    /// Default: omega / c0.
    pub k_min: Option<f64>,
    /// Default: omega / c0.
    pub k_max: Option<f64>,
    /// Default 9.
    pub n_quad: usize,
}

impl Default for EnergySection {
    fn default() -> Self {
        EnergySection { a: 1.0, b: 0.0, d: 0.0, k_min: None, k_max: None, n_quad: 9 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModeName {
    Single,
    Band,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizeSection {
    /// Default 0.5.
    pub gamma: f64,
    /// Default "single".
    pub mode: ModeName,
    /// Wavenumber of the single mode. Default: omega / c0.
    pub k0: Option<f64>,
    /// Default 50.
    pub max_iters: usize,
    /// Default 1e-8.
    pub tol: f64,
}

impl Default for OptimizeSection {
    fn default() -> Self {
        OptimizeSection { gamma: 0.5, mode: ModeName::Single, k0: None, max_iters: 50, tol: 1e-8 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    /// Inflow amplitude `g = A exp(i (ky y + kz z))`. Default 1 + 0i.
    pub inflow_re: f64,
    pub inflow_im: f64,
    /// Default 0.
    pub inflow_ky: f64,
    /// Default 0.
    pub inflow_kz: f64,
    /// Constant lateral source. Default 0.
    pub liner_source_re: f64,
    pub liner_source_im: f64,
    /// Uniform liner density used when no density file is given. Default 0.5.
    pub chi: f64,
    /// Seed of the regularity sampler. Default 0x5eed.
    pub seed: u64,
    /// Worker threads; 0 uses every core. Default 0.
    pub threads: usize,
    /// Directory for outputs given as bare file names. Default ".".
    pub output_dir: PathBuf,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection {
            inflow_re: 1.0,
            inflow_im: 0.0,
            inflow_ky: 0.0,
            inflow_kz: 0.0,
            liner_source_re: 0.0,
            liner_source_im: 0.0,
            chi: 0.5,
            seed: 0x5eed,
            threads: 0,
            output_dir: PathBuf::from("."),
        }
    }
}

fn one() -> f64 {
    1.0
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<RunConfig> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        RunConfig::parse(&text)
    }

    /// Every precondition that can be checked without computing anything.
    pub fn validate(&self) -> Result<()> {
        self.physical_params().validate()?;
        self.impedance_model().map_or(Ok(()), |m| m.validate())?;
        self.mesh_spec().validate()?;
        let m = &self.measure;
        if !(m.surface_weight >= 0.0 && m.cantor_mass >= 0.0 && m.surface_weight + m.cantor_mass > 0.0) {
            return Err(Error::InvalidMeasure(
                "surface_weight and cantor_mass must be >= 0 and not both 0".into(),
            ));
        }
        self.energy_spec()?.validate()?;
        let o = &self.optimize;
        if !(o.gamma > 0.0 && o.gamma < 1.0) {
            return Err(Error::InvalidParameter(format!("gamma = {} must lie in (0, 1)", o.gamma)));
        }
        if !(o.tol >= 0.0) {
            return Err(Error::InvalidParameter(format!("tol = {} must be >= 0", o.tol)));
        }
        if !(0.0..=1.0).contains(&self.run.chi) {
            return Err(Error::InvalidDensity(format!("chi = {} is outside [0, 1]", self.run.chi)));
        }
        Ok(())
    }

    pub fn physical_params(&self) -> PhysicalParams {
        let p = &self.physics;
        PhysicalParams {
            omega: p.omega,
            u0: p.u0,
            c0: p.c0,
            z0: p.z0,
            impedance: Complex64::new(p.z_re, p.z_im),
            beta_v: Complex64::new(p.beta_v_re, p.beta_v_im),
        }
    }

    pub fn impedance_model(&self) -> Option<ImpedanceModel> {
        self.physics.impedance_table.as_ref().map(|rows| {
            ImpedanceModel::Table(rows.iter().map(|r| (r[0], Complex64::new(r[1], r[2]))).collect())
        })
    }

    pub fn base_k0(&self) -> f64 {
        self.physics.omega / self.physics.c0
    }

    pub fn mesh_spec(&self) -> MeshSpec {
        let m = &self.mesh;
        MeshSpec { length: m.length, radius: m.radius, n_axial: m.n_axial, n_ring: m.n_ring, refinement_level: m.refine }
    }

    pub fn cantor_spec(&self) -> Option<CantorSpec> {
        let m = &self.measure;
        (m.cantor_mass > 0.0).then(|| CantorSpec {
            level: m.cantor_level,
            mass: m.cantor_mass,
            support: m.cantor_support.map(|s| (s[0], s[1])),
        })
    }

    pub fn energy_spec(&self) -> Result<EnergySpec> {
        let e = &self.energy;
        let k0 = self.base_k0();
        Ok(EnergySpec { a: e.a, b: e.b, d: e.d, k_min: e.k_min.unwrap_or(k0), k_max: e.k_max.unwrap_or(k0), n_quad: e.n_quad })
    }

    pub fn mode(&self) -> Mode {
        match self.optimize.mode {
            ModeName::Single => Mode::Single { k0: self.optimize.k0.unwrap_or(self.base_k0()) },
            ModeName::Band => Mode::Band,
        }
    }

    pub fn sources(&self) -> SourceData {
        let r = &self.run;
        let amp = Complex64::new(r.inflow_re, r.inflow_im);
        let (ky, kz) = (r.inflow_ky, r.inflow_kz);
        let g = if ky == 0.0 && kz == 0.0 {
            Field::Constant(amp)
        } else {
            Field::Analytic(Arc::new(move |x| amp * Complex64::new(0.0, ky * x[1] + kz * x[2]).exp()))
        };
        let eta = Complex64::new(r.liner_source_re, r.liner_source_im);
        SourceData {
            g: if amp == Complex64::new(0.0, 0.0) { Field::Zero } else { g },
            eta: if eta == Complex64::new(0.0, 0.0) { BoundaryField::Zero } else { BoundaryField::Constant(eta) },
            ..Default::default()
        }
    }

    pub fn discretization(&self) -> Result<Discretization> {
        let spec = self.mesh_spec();
        let mesh = match &self.mesh.cache_dir {
            Some(dir) => load_or_generate(&spec, dir)?,
            None => generate(&spec)?,
        };
        let measure = build_measure(&mesh, self.measure.surface_weight, self.cantor_spec())?;
        Discretization::new(mesh, measure)
    }

    pub fn problem(&self) -> Result<Problem> {
        Problem::new(
            self.discretization()?,
            self.physical_params(),
            self.impedance_model(),
            self.sources(),
            self.energy_spec()?,
        )
    }

    pub fn uniform_density(&self, disc: &Discretization) -> Result<LinerDensity> {
        LinerDensity::uniform(self.run.chi, disc)
    }

    /// Resolves a bare output name against `output_dir`.
    pub fn output_path(&self, name: &Path) -> PathBuf {
        if name.is_absolute() || name.parent().is_some_and(|p| !p.as_os_str().is_empty()) {
            name.to_path_buf()
        } else {
            self.run.output_dir.join(name)
        }
    }
}
