//! Universe and dataset arguments.
//!
//! A universe argument is either a CSV file or an inline generator:
//! `thresholds:M`, `marginals2:D`, `cone:M:ALPHA[:DENSITY]`,
//! `sphere:M:SIZE:RADIUS`. Inline generators take their seed from `--seed`.

use std::path::Path;

use anyhow::{bail, Context, Result};
use meanpoint::harness::{
    gen_cone, gen_marginals2, gen_random_sphere, gen_thresholds, load_universe, DatasetMode,
    DEFAULT_CONE_DENSITY, DEFAULT_MARGINALS_CAP,
};
use meanpoint::Universe;

use crate::ConfigError;

fn field<T: std::str::FromStr>(parts: &[&str], i: usize, what: &str) -> Result<T> {
    let raw = parts
        .get(i)
        .ok_or_else(|| ConfigError(format!("missing {what} in universe spec")))?;
    raw.parse()
        .map_err(|_| ConfigError(format!("bad {what}: {raw:?}")).into())
}

pub fn load(spec: &str, seed: u64) -> Result<Universe> {
    let path = Path::new(spec);
    if path.exists() {
        return load_universe(path).with_context(|| format!("reading {}", path.display()));
    }
    let parts: Vec<&str> = spec.split(':').collect();
    let u = match parts[0] {
        "thresholds" => gen_thresholds(field(&parts, 1, "m")?)?,
        "marginals2" => gen_marginals2(field(&parts, 1, "d")?, DEFAULT_MARGINALS_CAP)?,
        "cone" => {
            let density = if parts.len() > 3 { field(&parts, 3, "density")? } else { DEFAULT_CONE_DENSITY };
            gen_cone(field(&parts, 1, "m")?, field(&parts, 2, "alpha")?, density, seed)?
        }
        "sphere" => gen_random_sphere(
            field(&parts, 1, "m")?,
            field(&parts, 2, "size")?,
            field(&parts, 3, "radius")?,
            seed,
        )?,
        _ => bail!(ConfigError(format!(
            "{spec:?} is neither a file nor a generator (thresholds:M, marginals2:D, cone:M:ALPHA[:DENSITY], sphere:M:SIZE:RADIUS)"
        ))),
    };
    Ok(u)
}

/// `iid`, `point:INDEX` or `mixture:WEIGHT:I,J,...`.
pub fn dataset_mode(spec: &str) -> Result<DatasetMode> {
    let parts: Vec<&str> = spec.split(':').collect();
    Ok(match parts[0] {
        "iid" => DatasetMode::IidUniform,
        "point" => DatasetMode::PointMass { index: field(&parts, 1, "index")? },
        "mixture" => {
            let anchor_weight = field(&parts, 1, "weight")?;
            let list: &str = parts.get(2).copied().unwrap_or("");
            let anchors = list
                .split(',')
                .map(|s| s.parse().map_err(|_| ConfigError(format!("bad anchor {s:?}"))))
                .collect::<std::result::Result<Vec<usize>, _>>()?;
            DatasetMode::Mixture { anchors, anchor_weight }
        }
        _ => bail!(ConfigError(format!("unknown dataset mode {spec:?}"))),
    })
}
