//! Environment addresses such as `finite:s20a3h4:seed7`,
//! `rkhs:d8a2h4j5:seed3` (optionally `:kernel=arccos1`) or `file:path/to/mdp.json`.

use std::collections::HashMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use super::{make_finite_feature_mdp, make_rkhs_mdp, EpisodicMdp, FiniteMdp};
use crate::error::{Error, Result};
use crate::kernel::KernelSpec;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EnvSpec {
    Finite {
        states: usize,
        actions: usize,
        horizon: usize,
        seed: u64,
    },
    Rkhs {
        dim: usize,
        actions: usize,
        horizon: usize,
        mixture: usize,
        seed: u64,
        kernel: KernelSpec,
    },
    /// A serialized finite MDP.
    File(PathBuf),
}

fn parse_sizes(s: &str) -> Result<HashMap<char, usize>> {
    let mut out = HashMap::new();
    let mut chars = s.chars().peekable();
    while let Some(c) = chars.next() {
        if !c.is_ascii_alphabetic() {
            return Err(Error::Parse(format!("expected a size letter in `{s}`")));
        }
        let mut digits = String::new();
        while let Some(d) = chars.peek().filter(|d| d.is_ascii_digit()) {
            digits.push(*d);
            chars.next();
        }
        let v = digits
            .parse()
            .map_err(|_| Error::Parse(format!("missing number after `{c}` in `{s}`")))?;
        if out.insert(c, v).is_some() {
            return Err(Error::Parse(format!("size `{c}` given twice in `{s}`")));
        }
    }
    Ok(out)
}

fn take(sizes: &HashMap<char, usize>, key: char, spec: &str) -> Result<usize> {
    sizes
        .get(&key)
        .copied()
        .ok_or_else(|| Error::Parse(format!("`{spec}` is missing size `{key}`")))
}

impl FromStr for EnvSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if let Some(path) = s.strip_prefix("file:") {
            return Ok(EnvSpec::File(PathBuf::from(path)));
        }
        let parts: Vec<&str> = s.split(':').collect();
        if parts.len() < 3 {
            return Err(Error::Parse(format!("expected `kind:sizes:seedN`, got `{s}`")));
        }
        let sizes = parse_sizes(parts[1])?;
        let seed = parts[2]
            .strip_prefix("seed")
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| Error::Parse(format!("bad seed field `{}`", parts[2])))?;
        let mut kernel = KernelSpec::Laplacian;
        for extra in &parts[3..] {
            match extra.split_once('=') {
                Some(("kernel", id)) => kernel = id.parse()?,
                _ => return Err(Error::Parse(format!("unknown option `{extra}`"))),
            }
        }
        match parts[0] {
            "finite" => {
                if parts.len() > 3 {
                    return Err(Error::Parse("finite environments take no options".into()));
                }
                Ok(EnvSpec::Finite {
                    states: take(&sizes, 's', s)?,
                    actions: take(&sizes, 'a', s)?,
                    horizon: take(&sizes, 'h', s)?,
                    seed,
                })
            }
            "rkhs" => Ok(EnvSpec::Rkhs {
                dim: take(&sizes, 'd', s)?,
                actions: take(&sizes, 'a', s)?,
                horizon: take(&sizes, 'h', s)?,
                mixture: take(&sizes, 'j', s)?,
                seed,
                kernel,
            }),
            other => Err(Error::Parse(format!("unknown environment kind `{other}`"))),
        }
    }
}

impl fmt::Display for EnvSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EnvSpec::Finite {
                states,
                actions,
                horizon,
                seed,
            } => write!(f, "finite:s{states}a{actions}h{horizon}:seed{seed}"),
            EnvSpec::Rkhs {
                dim,
                actions,
                horizon,
                mixture,
                seed,
                kernel,
            } => {
                write!(f, "rkhs:d{dim}a{actions}h{horizon}j{mixture}:seed{seed}")?;
                if *kernel != KernelSpec::Laplacian {
                    write!(f, ":kernel={kernel}")?;
                }
                Ok(())
            }
            EnvSpec::File(p) => write!(f, "file:{}", p.display()),
        }
    }
}

pub fn build_env(spec: &EnvSpec) -> Result<Box<dyn EpisodicMdp>> {
    Ok(match spec {
        EnvSpec::Finite {
            states,
            actions,
            horizon,
            seed,
        } => Box::new(make_finite_feature_mdp(*seed, *states, *actions, *horizon)?),
        EnvSpec::Rkhs {
            dim,
            actions,
            horizon,
            mixture,
            seed,
            kernel,
        } => Box::new(make_rkhs_mdp(*seed, *dim, *horizon, *actions, *mixture, *kernel)?),
        EnvSpec::File(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            Box::new(FiniteMdp::from_json(&text)?)
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_prints() {
        for s in [
            "finite:s20a3h4:seed7",
            "rkhs:d8a2h4j5:seed3",
            "rkhs:d8a2h4j5:seed3:kernel=arccos1",
        ] {
            let spec: EnvSpec = s.parse().unwrap();
            assert_eq!(spec.to_string(), s);
        }
        assert_eq!(
            "finite:s20a3h4:seed7".parse::<EnvSpec>().unwrap(),
            EnvSpec::Finite {
                states: 20,
                actions: 3,
                horizon: 4,
                seed: 7
            }
        );
    }

    #[test]
    fn rejects_malformed() {
        for s in ["finite:s20a3:seed7", "finite:s20a3h4:7", "maze:s2a2h2:seed1", "rkhs:d8a2h4j5:seed3:foo=1", "finite:s2a2h2h3:seed1"] {
            assert!(s.parse::<EnvSpec>().is_err(), "{s}");
        }
    }

    #[test]
    fn builds_both_kinds() {
        let f = build_env(&"finite:s6a2h3:seed1".parse().unwrap()).unwrap();
        assert!(f.as_finite().is_some());
        let r = build_env(&"rkhs:d4a2h2j3:seed1".parse().unwrap()).unwrap();
        assert_eq!(r.state_dim(), 4);
    }
}
