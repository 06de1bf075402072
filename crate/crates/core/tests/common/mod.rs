#![allow(dead_code)]

use thermoevo::evolution::{
    EvolutionProblem, Forcing, ForcingBlock, ForcingSource, ForcingTerm, Scheme, SpatialProfile, TemporalShape,
};
use thermoevo::material::{assemble_material_law, Family, MaterialLaw, ModelSpec};
use thermoevo::spatial::{build_operators, Grid1D};

/// Unit coefficients for `family` with coupling `gamma`; extra pairs override.
pub fn spec(family: Family, gamma: f64, overrides: &[(&str, f64)]) -> ModelSpec {
    let mut pairs: Vec<(&str, f64)> = vec![("rho0", 1.0), ("C", 1.0), ("Gamma", gamma)];
    if family != Family::GreenLindsay {
        pairs.push(("nu", 1.0));
    }
    let defaults: &[(&str, f64)] = match family {
        Family::Classical => &[("kappa", 1.0)],
        Family::LordShulman => &[("kappa", 1.0), ("a0", 1.0)],
        Family::GreenNaghdiI => &[("k", 1.0)],
        Family::GreenNaghdiII => &[("k_star", 1.0)],
        Family::GreenNaghdiIII => &[("k", 1.0), ("k_star", 1.0)],
        Family::GreenLindsay => &[("kappa", 1.0), ("n0", 0.5), ("b", 0.3), ("d", 2.0), ("h", 1.0)],
        Family::DplI | Family::DplII => &[("kappa", 1.0), ("n1", 0.5), ("n2", 1.0)],
        Family::Custom => panic!("no defaults for custom laws"),
    };
    pairs.extend_from_slice(defaults);
    for (k, v) in overrides {
        match pairs.iter_mut().find(|(key, _)| key == k) {
            Some(p) => p.1 = *v,
            None => pairs.push((k, *v)),
        }
    }
    ModelSpec::from_scalars(family, &pairs).unwrap()
}

pub fn law(family: Family, gamma: f64, overrides: &[(&str, f64)], cells: usize) -> MaterialLaw {
    assemble_material_law(&spec(family, gamma, overrides).with_cells(cells).unwrap()).unwrap()
}

pub fn pulse(block: ForcingBlock, profile: SpatialProfile, center: f64, width: f64) -> Forcing {
    Forcing::single(ForcingTerm {
        block,
        profile,
        shape: TemporalShape::GaussianPulse { center, width },
        amplitude: 1.0,
    })
    .unwrap()
}

/// Heat pulse with a bump profile plus a body-force pulse in the second mode.
pub fn two_block_pulse(center: f64, width: f64) -> Forcing {
    pulse(ForcingBlock::H, SpatialProfile::Bump, center, width).plus(&pulse(
        ForcingBlock::F,
        SpatialProfile::Mode(2),
        center,
        width,
    ))
}

pub fn problem(
    law: MaterialLaw,
    forcing: Forcing,
    t_max: f64,
    dt: f64,
    scheme: Scheme,
    rho: f64,
) -> EvolutionProblem {
    let grid = Grid1D::new(1.0, law.n_cells()).unwrap();
    EvolutionProblem::new(law, build_operators(&grid).unwrap(), ForcingSource::Analytic(forcing), t_max, dt, scheme, rho)
        .unwrap()
}
