//! Run configuration: flat `section.key = value` text.
//!
//! Blank lines and lines starting with `#` are ignored. Unknown keys,
//! duplicates and malformed values are reported with their line number.
//! [`RunConfig::to_text`] writes every key in a fixed order, so
//! `parse(to_text(c)) == c` and the SHA-256 of that text identifies a run.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::oracle::OracleSettings;
use crate::potential::{EnsembleParams, PairPotential, Perturbation};
use crate::quadrature::{GridSpec, McSpec, QuadratureSpec};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PotentialSpec {
    /// ideal, hard_sphere, square_well or lennard_jones
    pub model: String,
    pub sigma: f64,
    pub lambda: f64,
    pub epsilon: f64,
    pub r_core: f64,
    pub r_cut: f64,
    /// Overrides the built-in stability constant when set.
    pub b: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Activity {
    Absolute(f64),
    /// Fraction of z_max.
    Fraction(f64),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSpec {
    pub beta: f64,
    pub activity: Activity,
    pub box_side: f64,
    pub t0: f64,
    /// When false, z ≥ z_max is accepted (oracle-only finite-difference runs).
    pub check_admissible: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerturbationSpec {
    /// zero, bump, step or gaussian
    pub model: String,
    pub center: f64,
    pub width: f64,
    pub amplitude: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComputeSpec {
    pub order: usize,
    pub n_cap: usize,
    pub grid_panels: usize,
    pub grid_order: usize,
    /// 0 means a grid for every label count.
    pub mc_samples: u64,
    pub mc_shards: u64,
    /// Largest integrated-label count kept on the grid when Monte Carlo is on; 0 is Monte Carlo throughout.
    pub grid_labels: usize,
    pub seed: u64,
    pub samples: usize,
    pub radii: Vec<f64>,
    pub t_values: Vec<f64>,
    pub targets: Vec<String>,
    pub r_points: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub potential: PotentialSpec,
    pub ensemble: EnsembleSpec,
    pub perturbation: PerturbationSpec,
    pub compute: ComputeSpec,
    pub output_dir: String,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            potential: PotentialSpec {
                model: "hard_sphere".into(),
                sigma: 1.0,
                lambda: 1.5,
                epsilon: 1.0,
                r_core: 0.8,
                r_cut: 2.5,
                b: None,
            },
            ensemble: EnsembleSpec {
                beta: 1.0,
                activity: Activity::Fraction(0.5),
                box_side: 4.0,
                t0: 0.5,
                check_admissible: true,
            },
            perturbation: PerturbationSpec {
                model: "bump".into(),
                center: 1.2,
                width: 0.15,
                amplitude: 0.06,
            },
            compute: ComputeSpec {
                order: 3,
                n_cap: 3,
                grid_panels: 2,
                grid_order: 2,
                mc_samples: 20_000,
                mc_shards: 16,
                grid_labels: 2,
                seed: 0,
                samples: 20,
                radii: vec![0.5, 1.5, 3.0],
                t_values: vec![1e-1, 1e-2, 1e-3, 1e-4],
                targets: vec!["rho1".into(), "rho2".into(), "omega2".into()],
                r_points: 64,
            },
            output_dir: "out".into(),
        }
    }
}

fn num<T: std::str::FromStr>(line: usize, key: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| Error::Parse {
        line,
        msg: format!("{key}: cannot parse '{v}'"),
    })
}

fn list<T: std::str::FromStr>(line: usize, key: &str, v: &str) -> Result<Vec<T>> {
    v.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| num(line, key, s))
        .collect()
}

fn join<T: ToString>(xs: &[T]) -> String {
    xs.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut c = RunConfig::default();
        let mut seen: BTreeMap<String, usize> = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let s = raw.trim();
            if s.is_empty() || s.starts_with('#') {
                continue;
            }
            let Some((k, v)) = s.split_once('=') else {
                return Err(Error::Parse {
                    line,
                    msg: format!("expected 'key = value', got '{s}'"),
                });
            };
            let (k, v) = (k.trim(), v.trim());
            if let Some(first) = seen.insert(k.to_string(), line) {
                return Err(Error::Parse {
                    line,
                    msg: format!("duplicate key {k} (first set on line {first})"),
                });
            }
            c.set(line, k, v)?;
        }
        if seen.contains_key("ensemble.z") && seen.contains_key("ensemble.z_fraction") {
            return Err(Error::Parse {
                line: seen["ensemble.z_fraction"],
                msg: "set either ensemble.z or ensemble.z_fraction, not both".into(),
            });
        }
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    fn set(&mut self, line: usize, k: &str, v: &str) -> Result<()> {
        let p = &mut self.potential;
        let e = &mut self.ensemble;
        let q = &mut self.perturbation;
        let c = &mut self.compute;
        match k {
            "potential.model" => p.model = v.to_string(),
            "potential.sigma" => p.sigma = num(line, k, v)?,
            "potential.lambda" => p.lambda = num(line, k, v)?,
            "potential.epsilon" => p.epsilon = num(line, k, v)?,
            "potential.r_core" => p.r_core = num(line, k, v)?,
            "potential.r_cut" => p.r_cut = num(line, k, v)?,
            "potential.B" => p.b = Some(num(line, k, v)?),
            "ensemble.beta" => e.beta = num(line, k, v)?,
            "ensemble.z" => e.activity = Activity::Absolute(num(line, k, v)?),
            "ensemble.z_fraction" => e.activity = Activity::Fraction(num(line, k, v)?),
            "ensemble.L" => e.box_side = num(line, k, v)?,
            "ensemble.t0" => e.t0 = num(line, k, v)?,
            "ensemble.check_admissible" => e.check_admissible = num(line, k, v)?,
            "perturbation.model" => q.model = v.to_string(),
            "perturbation.center" => q.center = num(line, k, v)?,
            "perturbation.width" => q.width = num(line, k, v)?,
            "perturbation.amplitude" => q.amplitude = num(line, k, v)?,
            "compute.order" => c.order = num(line, k, v)?,
            "compute.n_cap" => c.n_cap = num(line, k, v)?,
            "compute.grid_panels" => c.grid_panels = num(line, k, v)?,
            "compute.grid_order" => c.grid_order = num(line, k, v)?,
            "compute.mc_samples" => c.mc_samples = num(line, k, v)?,
            "compute.mc_shards" => c.mc_shards = num(line, k, v)?,
            "compute.grid_labels" => c.grid_labels = num(line, k, v)?,
            "compute.seed" => c.seed = num(line, k, v)?,
            "compute.samples" => c.samples = num(line, k, v)?,
            "compute.radii" => c.radii = list(line, k, v)?,
            "compute.t" => c.t_values = list(line, k, v)?,
            "compute.targets" => c.targets = list(line, k, v)?,
            "compute.r_points" => c.r_points = num(line, k, v)?,
            "output.dir" => self.output_dir = v.to_string(),
            _ => {
                return Err(Error::Parse {
                    line,
                    msg: format!("unknown key {k}"),
                })
            }
        }
        Ok(())
    }

    /// Canonical text with every key.
    pub fn to_text(&self) -> String {
        let p = &self.potential;
        let e = &self.ensemble;
        let q = &self.perturbation;
        let c = &self.compute;
        let mut s = String::new();
        let mut put = |k: &str, v: String| s.push_str(&format!("{k} = {v}\n"));
        put("potential.model", p.model.clone());
        put("potential.sigma", p.sigma.to_string());
        put("potential.lambda", p.lambda.to_string());
        put("potential.epsilon", p.epsilon.to_string());
        put("potential.r_core", p.r_core.to_string());
        put("potential.r_cut", p.r_cut.to_string());
        if let Some(b) = p.b {
            put("potential.B", b.to_string());
        }
        put("ensemble.beta", e.beta.to_string());
        match e.activity {
            Activity::Absolute(z) => put("ensemble.z", z.to_string()),
            Activity::Fraction(f) => put("ensemble.z_fraction", f.to_string()),
        }
        put("ensemble.L", e.box_side.to_string());
        put("ensemble.t0", e.t0.to_string());
        put("ensemble.check_admissible", e.check_admissible.to_string());
        put("perturbation.model", q.model.clone());
        put("perturbation.center", q.center.to_string());
        put("perturbation.width", q.width.to_string());
        put("perturbation.amplitude", q.amplitude.to_string());
        put("compute.order", c.order.to_string());
        put("compute.n_cap", c.n_cap.to_string());
        put("compute.grid_panels", c.grid_panels.to_string());
        put("compute.grid_order", c.grid_order.to_string());
        put("compute.mc_samples", c.mc_samples.to_string());
        put("compute.mc_shards", c.mc_shards.to_string());
        put("compute.grid_labels", c.grid_labels.to_string());
        put("compute.seed", c.seed.to_string());
        put("compute.samples", c.samples.to_string());
        put("compute.radii", join(&c.radii));
        put("compute.t", join(&c.t_values));
        put("compute.targets", c.targets.join(","));
        put("compute.r_points", c.r_points.to_string());
        put("output.dir", self.output_dir.clone());
        s
    }

    /// Hex SHA-256 of the canonical text.
    /// Canonical text without `output.dir`: where results go does not change them.
    pub fn content_text(&self) -> String {
        self.to_text()
            .lines()
            .filter(|l| !l.starts_with("output.dir"))
            .map(|l| format!("{l}\n"))
            .collect()
    }

    /// SHA-256 of `content_text`.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.content_text().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn potential(&self) -> Result<PairPotential> {
        let p = &self.potential;
        let pot = match p.model.as_str() {
            "ideal" => PairPotential::ideal(),
            "hard_sphere" => PairPotential::hard_sphere(p.sigma)?,
            "square_well" => PairPotential::square_well(p.sigma, p.lambda, p.epsilon)?,
            "lennard_jones" => PairPotential::lennard_jones(p.epsilon, p.sigma, p.r_core, p.r_cut)?,
            other => {
                return Err(Error::Configuration(format!("unknown potential model {other}")))
            }
        };
        match p.b {
            Some(b) => pot.with_b(b),
            None => Ok(pot),
        }
    }

    /// Ensemble parameters with z resolved; checks admissibility unless disabled.
    pub fn ensemble(&self, pot: &PairPotential) -> Result<EnsembleParams> {
        let e = &self.ensemble;
        let base = EnsembleParams {
            beta: e.beta,
            activity_z: 1.0,
            box_side: e.box_side,
            t0: e.t0,
        };
        let z = match e.activity {
            Activity::Absolute(z) => z,
            Activity::Fraction(f) => {
                let zm = base.z_max(pot)?;
                if !zm.is_finite() {
                    return Err(Error::Configuration(
                        "z_fraction needs a finite z_max; set ensemble.z".into(),
                    ));
                }
                f * zm
            }
        };
        let params = EnsembleParams::new(e.beta, z, e.box_side, e.t0)?;
        if e.check_admissible {
            params.check_admissible(pot)?;
        }
        Ok(params)
    }

    pub fn perturbation(&self) -> Result<Perturbation> {
        let q = &self.perturbation;
        Ok(match q.model.as_str() {
            "zero" => Perturbation::zero(),
            "bump" => Perturbation::bump(q.center, q.width, q.amplitude),
            "step" => Perturbation::step(q.center - q.width, q.center + q.width, q.amplitude),
            "gaussian" => Perturbation::gaussian(q.center, q.width, q.amplitude),
            other => {
                return Err(Error::Configuration(format!(
                    "unknown perturbation model {other}"
                )))
            }
        })
    }

    pub fn grid(&self) -> GridSpec {
        GridSpec {
            panels: self.compute.grid_panels,
            order: self.compute.grid_order,
        }
    }

    /// Grid for every label count, or grid up to `grid_labels` labels and Monte Carlo beyond.
    pub fn quadrature(&self) -> QuadratureSpec {
        let c = &self.compute;
        let mc = McSpec {
            base_samples: c.mc_samples,
            seed: c.seed,
            shards: c.mc_shards,
        };
        match (c.mc_samples, c.grid_labels) {
            (0, _) => QuadratureSpec::Grid(self.grid()),
            (_, 0) => QuadratureSpec::MonteCarlo(mc),
            (_, n) => QuadratureSpec::Auto {
                grid: self.grid(),
                mc,
                max_grid_labels: n,
            },
        }
    }

    /// Monte Carlo throughout when a sample budget is set: bound checks need
    /// unbiased estimates with an error bar, which a coarse grid cannot give.
    pub fn bound_quadrature(&self) -> QuadratureSpec {
        match self.quadrature() {
            QuadratureSpec::Auto { mc, .. } => QuadratureSpec::MonteCarlo(mc),
            q => q,
        }
    }

    pub fn oracle_settings(&self) -> OracleSettings {
        OracleSettings {
            n_cap: self.compute.n_cap,
            quadrature: self.quadrature(),
        }
    }
}
