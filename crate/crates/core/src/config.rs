//! TOML run-configuration format.
//!
//! A config file has five sections — `[system]`, `[time]`, `[solvers]`,
//! `[correction]`, `[run]` — mapping onto [`PintConfig`]. Parsing is strict:
//! unknown keys anywhere are rejected, as are keys that do not apply to the
//! selected system or correction model, so typos fail loudly instead of
//! silently running defaults.
//!
//! ```toml
//! [system]
//! name = "burgers"
//! d = 32
//!
//! [time]
//! t0 = 0.0
//! t_end = 5.9
//! n_intervals = 32
//!
//! [solvers]
//! coarse_method = "rk1"
//! coarse_steps = 4
//! fine_method = "rk8"
//! fine_steps = 512
//!
//! [correction]
//! model = "randnet"
//! m = 16
//! hidden = 100
//!
//! [run]
//! epsilon = 5e-7
//! seed = 0
//! ```

use std::path::Path;

use serde::Deserialize;

use crate::engine::{
    CorrectionConfig, PintConfig, DEFAULT_BUDGET_SECONDS, DEFAULT_EPSILON, DEFAULT_NNGP_NEIGHBORS,
    DEFAULT_NNGP_RESTARTS, DEFAULT_RANDNET_HIDDEN, DEFAULT_RANDNET_NEIGHBORS,
};
use crate::integrators::{RkMethod, SolverSpec};
use crate::systems::{BrusselatorSpec, BurgersSpec, DiffusionReactionSpec, LinearSpec, SystemSpec};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    system: RawSystem,
    time: RawTime,
    solvers: RawSolvers,
    correction: RawCorrection,
    run: Option<RawRun>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSystem {
    name: String,
    // Linear / Burgers.
    d: Option<usize>,
    lambda: Option<f64>,
    half_width: Option<f64>,
    nu: Option<f64>,
    // Diffusion-reaction grid.
    nx: Option<usize>,
    ny: Option<usize>,
    du: Option<f64>,
    dv: Option<f64>,
    c: Option<f64>,
    // Brusselator grids.
    n_per_axis: Option<usize>,
    d0: Option<f64>,
    d1: Option<f64>,
    a: Option<f64>,
    b: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTime {
    #[serde(default)]
    t0: f64,
    t_end: f64,
    n_intervals: usize,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSolvers {
    coarse_method: String,
    coarse_steps: u32,
    fine_method: String,
    fine_steps: u32,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCorrection {
    model: String,
    m: Option<usize>,
    n_start: Option<usize>,
    hidden: Option<usize>,
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawRun {
    epsilon: Option<f64>,
    seed: Option<u64>,
    threads: Option<usize>,
    budget_seconds: Option<f64>,
}

fn reject_unused(section: &str, name: &str, unused: &[(&str, bool)]) -> Result<(), String> {
    for (key, present) in unused {
        if *present {
            return Err(format!(
                "[{section}] key `{key}` does not apply to `{name}`"
            ));
        }
    }
    Ok(())
}

fn build_system(raw: &RawSystem) -> Result<SystemSpec, String> {
    let name = raw.name.as_str();
    let spec = match name {
        "linear" => {
            reject_unused(
                "system",
                name,
                &[
                    ("half_width", raw.half_width.is_some()),
                    ("nu", raw.nu.is_some()),
                    ("nx", raw.nx.is_some()),
                    ("ny", raw.ny.is_some()),
                    ("du", raw.du.is_some()),
                    ("dv", raw.dv.is_some()),
                    ("c", raw.c.is_some()),
                    ("n_per_axis", raw.n_per_axis.is_some()),
                    ("d0", raw.d0.is_some()),
                    ("d1", raw.d1.is_some()),
                    ("a", raw.a.is_some()),
                    ("b", raw.b.is_some()),
                ],
            )?;
            let mut spec = LinearSpec::default();
            if let Some(d) = raw.d {
                spec.d = d;
            }
            if let Some(lambda) = raw.lambda {
                spec.lambda = lambda;
            }
            SystemSpec::Linear(spec)
        }
        "burgers" => {
            reject_unused(
                "system",
                name,
                &[
                    ("lambda", raw.lambda.is_some()),
                    ("nx", raw.nx.is_some()),
                    ("ny", raw.ny.is_some()),
                    ("du", raw.du.is_some()),
                    ("dv", raw.dv.is_some()),
                    ("c", raw.c.is_some()),
                    ("n_per_axis", raw.n_per_axis.is_some()),
                    ("d0", raw.d0.is_some()),
                    ("d1", raw.d1.is_some()),
                    ("a", raw.a.is_some()),
                    ("b", raw.b.is_some()),
                ],
            )?;
            let mut spec = BurgersSpec::default();
            if let Some(d) = raw.d {
                spec.d = d;
            }
            if let Some(half_width) = raw.half_width {
                spec.half_width = half_width;
            }
            if let Some(nu) = raw.nu {
                spec.nu = nu;
            }
            SystemSpec::Burgers(spec)
        }
        "diffusion_reaction" => {
            reject_unused(
                "system",
                name,
                &[
                    ("d", raw.d.is_some()),
                    ("lambda", raw.lambda.is_some()),
                    ("half_width", raw.half_width.is_some()),
                    ("nu", raw.nu.is_some()),
                    ("n_per_axis", raw.n_per_axis.is_some()),
                    ("d0", raw.d0.is_some()),
                    ("d1", raw.d1.is_some()),
                    ("a", raw.a.is_some()),
                    ("b", raw.b.is_some()),
                ],
            )?;
            let mut spec = DiffusionReactionSpec::default();
            if let Some(nx) = raw.nx {
                spec.nx = nx;
            }
            if let Some(ny) = raw.ny {
                spec.ny = ny;
            }
            if let Some(du) = raw.du {
                spec.du = du;
            }
            if let Some(dv) = raw.dv {
                spec.dv = dv;
            }
            if let Some(c) = raw.c {
                spec.c = c;
            }
            SystemSpec::DiffusionReaction(spec)
        }
        "brusselator2d" | "brusselator3d" => {
            reject_unused(
                "system",
                name,
                &[
                    ("d", raw.d.is_some()),
                    ("lambda", raw.lambda.is_some()),
                    ("half_width", raw.half_width.is_some()),
                    ("nu", raw.nu.is_some()),
                    ("nx", raw.nx.is_some()),
                    ("ny", raw.ny.is_some()),
                    ("du", raw.du.is_some()),
                    ("dv", raw.dv.is_some()),
                    ("c", raw.c.is_some()),
                ],
            )?;
            let mut spec = BrusselatorSpec {
                spatial_dim: if name == "brusselator2d" { 2 } else { 3 },
                ..BrusselatorSpec::default()
            };
            if let Some(n) = raw.n_per_axis {
                spec.n_per_axis = n;
            }
            if let Some(d0) = raw.d0 {
                spec.d0 = d0;
            }
            if let Some(d1) = raw.d1 {
                spec.d1 = d1;
            }
            if let Some(a) = raw.a {
                spec.a = a;
            }
            if let Some(b) = raw.b {
                spec.b = b;
            }
            SystemSpec::Brusselator(spec)
        }
        other => {
            return Err(format!(
                "[system] unknown name `{other}`; expected one of linear, burgers, \
                 diffusion_reaction, brusselator2d, brusselator3d"
            ));
        }
    };
    Ok(spec)
}

fn build_correction(raw: &RawCorrection) -> Result<CorrectionConfig, String> {
    match raw.model.as_str() {
        "parareal" => {
            reject_unused(
                "correction",
                "parareal",
                &[
                    ("m", raw.m.is_some()),
                    ("n_start", raw.n_start.is_some()),
                    ("hidden", raw.hidden.is_some()),
                ],
            )?;
            Ok(CorrectionConfig::Parareal)
        }
        "nngp" => {
            reject_unused("correction", "nngp", &[("hidden", raw.hidden.is_some())])?;
            Ok(CorrectionConfig::Nngp {
                m: raw.m.unwrap_or(DEFAULT_NNGP_NEIGHBORS),
                n_start: raw.n_start.unwrap_or(DEFAULT_NNGP_RESTARTS),
            })
        }
        "randnet" => {
            reject_unused(
                "correction",
                "randnet",
                &[("n_start", raw.n_start.is_some())],
            )?;
            Ok(CorrectionConfig::Randnet {
                m: raw.m.unwrap_or(DEFAULT_RANDNET_NEIGHBORS),
                hidden: raw.hidden.unwrap_or(DEFAULT_RANDNET_HIDDEN),
            })
        }
        other => Err(format!(
            "[correction] unknown model `{other}`; expected one of parareal, nngp, randnet"
        )),
    }
}

fn build_solver(which: &str, method: &str, steps: u32) -> Result<SolverSpec, String> {
    let method: RkMethod = method
        .parse()
        .map_err(|e| format!("[solvers] {which}_method: {e}"))?;
    Ok(SolverSpec { method, steps })
}

/// Parses a TOML document into a validated run configuration.
pub fn parse_config(text: &str) -> Result<PintConfig, String> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| format!("config parse error: {e}"))?;
    let run = raw.run.unwrap_or_default();
    let config = PintConfig {
        system: build_system(&raw.system)?,
        n_intervals: raw.time.n_intervals,
        t0: raw.time.t0,
        t_end: raw.time.t_end,
        coarse: build_solver(
            "coarse",
            &raw.solvers.coarse_method,
            raw.solvers.coarse_steps,
        )?,
        fine: build_solver("fine", &raw.solvers.fine_method, raw.solvers.fine_steps)?,
        epsilon: run.epsilon.unwrap_or(DEFAULT_EPSILON),
        correction: build_correction(&raw.correction)?,
        seed: run.seed.unwrap_or(0),
        threads: run.threads.unwrap_or(0),
        budget_seconds: run.budget_seconds.unwrap_or(DEFAULT_BUDGET_SECONDS),
    };
    config.validate()?;
    Ok(config)
}

/// Reads and parses a TOML config file.
pub fn load_config(path: &Path) -> Result<PintConfig, String> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    parse_config(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::integrators::RkMethod;

    const GOOD: &str = r#"
        [system]
        name = "burgers"
        d = 32

        [time]
        t0 = 0.0
        t_end = 5.9
        n_intervals = 32

        [solvers]
        coarse_method = "rk1"
        coarse_steps = 4
        fine_method = "rk8"
        fine_steps = 512

        [correction]
        model = "randnet"
        m = 16
        hidden = 100

        [run]
        epsilon = 5e-7
        seed = 3
    "#;

    #[test]
    fn full_config_round_trips() {
        let config = parse_config(GOOD).unwrap();
        assert_eq!(config.n_intervals, 32);
        assert_eq!(config.t_end, 5.9);
        assert_eq!(config.coarse.method, RkMethod::Rk1);
        assert_eq!(config.fine.steps, 512);
        assert_eq!(config.epsilon, 5e-7);
        assert_eq!(config.seed, 3);
        assert_eq!(config.threads, 0);
        assert_eq!(config.budget_seconds, DEFAULT_BUDGET_SECONDS);
        assert_eq!(
            config.correction,
            CorrectionConfig::Randnet { m: 16, hidden: 100 }
        );
        match config.system {
            SystemSpec::Burgers(ref s) => assert_eq!(s.d, 32),
            ref other => panic!("wrong system {other:?}"),
        }
    }

    #[test]
    fn omitted_run_section_uses_defaults() {
        let text = GOOD.replace("[run]", "[removed]");
        // Removing [run] entirely (here: renaming it) must fail only because
        // of the unknown section; drop it cleanly instead.
        let cleaned: String = GOOD
            .lines()
            .take_while(|line| !line.contains("[run]"))
            .collect::<Vec<_>>()
            .join("\n");
        assert!(parse_config(&text).is_err());
        let config = parse_config(&cleaned).unwrap();
        assert_eq!(config.epsilon, DEFAULT_EPSILON);
        assert_eq!(config.seed, 0);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = GOOD.replace("seed = 3", "seed = 3\nwalltime = 5");
        let err = parse_config(&text).unwrap_err();
        assert!(err.contains("walltime"), "{err}");
    }

    #[test]
    fn misapplied_system_keys_are_rejected() {
        let text = GOOD.replace("d = 32", "d = 32\nnx = 8");
        let err = parse_config(&text).unwrap_err();
        assert!(err.contains("nx") && err.contains("burgers"), "{err}");
    }

    #[test]
    fn misapplied_correction_keys_are_rejected() {
        let text = GOOD.replace("model = \"randnet\"", "model = \"parareal\"");
        let err = parse_config(&text).unwrap_err();
        assert!(err.contains("parareal"), "{err}");
    }

    #[test]
    fn unknown_names_are_rejected_with_choices() {
        let err = parse_config(&GOOD.replace("\"burgers\"", "\"burger\"")).unwrap_err();
        assert!(err.contains("diffusion_reaction"), "{err}");
        let err = parse_config(&GOOD.replace("\"randnet\"", "\"gp\"")).unwrap_err();
        assert!(err.contains("nngp"), "{err}");
        let err = parse_config(&GOOD.replace("\"rk8\"", "\"rk5\"")).unwrap_err();
        assert!(err.contains("fine_method"), "{err}");
    }

    #[test]
    fn nngp_defaults_fill_in() {
        let text = GOOD
            .replace("model = \"randnet\"", "model = \"nngp\"")
            .replace("m = 16\n", "")
            .replace("hidden = 100\n", "");
        let config = parse_config(&text).unwrap();
        assert_eq!(
            config.correction,
            CorrectionConfig::Nngp {
                m: DEFAULT_NNGP_NEIGHBORS,
                n_start: DEFAULT_NNGP_RESTARTS
            }
        );
    }

    #[test]
    fn all_system_names_parse() {
        for (name, extra) in [
            ("linear", "d = 4\nlambda = -1.0"),
            ("burgers", "d = 16"),
            ("diffusion_reaction", "nx = 4\nny = 4"),
            ("brusselator2d", "n_per_axis = 4"),
            ("brusselator3d", "n_per_axis = 3"),
        ] {
            let text = format!(
                "[system]\nname = \"{name}\"\n{extra}\n\n[time]\nt_end = 1.0\nn_intervals = 4\n\n\
                 [solvers]\ncoarse_method = \"rk1\"\ncoarse_steps = 2\nfine_method = \"rk4\"\n\
                 fine_steps = 8\n\n[correction]\nmodel = \"parareal\"\n"
            );
            let config = parse_config(&text).unwrap_or_else(|e| panic!("{name}: {e}"));
            assert_eq!(config.t0, 0.0);
        }
    }

    #[test]
    fn invalid_semantics_are_rejected() {
        let err = parse_config(&GOOD.replace("t_end = 5.9", "t_end = -1.0")).unwrap_err();
        assert!(err.contains("t0"), "{err}");
        let err = parse_config(&GOOD.replace("n_intervals = 32", "n_intervals = 1")).unwrap_err();
        assert!(err.contains("n_intervals"), "{err}");
    }
}
