//! Compact method identifiers such as
//! `rfsq:stages=4:strategy=layernorm:levels=4,4,4,4,4`.
//!
//! Grammar: colon-separated, method name first, then `key=value` pairs.
//!
//! | method | keys |
//! |--------|------|
//! | `fsq`  | `levels=L,L,..` |
//! | `lfq`  | `dim=N` |
//! | `rfsq` | `stages=K`, `strategy=none\|scale\|layernorm`, `levels=L,..[/L,..]`, `alpha=a,..\|fit`, `eps=E` |
//!
//! Every method also accepts `seed=N`. A single `levels` list is shared by
//! all stages; otherwise one `/`-separated list per stage.

use std::fmt;
use std::str::FromStr;

use rfsq::conditioning::DEFAULT_LN_EPS;
use rfsq::lfq::LfqConfig;
use rfsq::{LevelsSpec, RfsqConfig, Strategy};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("bad method spec token '{token}': {reason}")]
pub struct SpecError {
    pub token: String,
    pub reason: String,
}

fn bad(token: &str, reason: impl Into<String>) -> SpecError {
    SpecError {
        token: token.to_string(),
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum AlphaSpec {
    Fixed(Vec<f64>),
    Fit,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Method {
    Fsq {
        levels: LevelsSpec,
    },
    Lfq {
        dim: u32,
    },
    Rfsq {
        levels: Vec<LevelsSpec>,
        strategy: Strategy,
        /// Scale strategy only; absent means every alpha is 1.0.
        alpha: Option<AlphaSpec>,
        /// Layernorm only; absent means the default eps.
        eps: Option<f64>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct MethodSpec {
    pub method: Method,
    pub seed: Option<u64>,
}

/// What a spec resolves to.
#[derive(Debug, Clone, PartialEq)]
pub enum Quantizer {
    /// Residual (or single-stage) FSQ; `fit` asks for fitted scales.
    Rfsq { cfg: RfsqConfig, fit: bool },
    Lfq(LfqConfig),
}

impl MethodSpec {
    pub fn dim(&self) -> usize {
        match &self.method {
            Method::Fsq { levels } => levels.dim(),
            Method::Lfq { dim } => *dim as usize,
            Method::Rfsq { levels, .. } => levels[0].dim(),
        }
    }

    pub fn quantizer(&self) -> rfsq::Result<Quantizer> {
        Ok(match &self.method {
            Method::Fsq { levels } => Quantizer::Rfsq {
                cfg: RfsqConfig::none(vec![levels.clone()])?,
                fit: false,
            },
            Method::Lfq { dim } => Quantizer::Lfq(LfqConfig::new(*dim)?),
            Method::Rfsq {
                levels,
                strategy,
                alpha,
                eps,
            } => {
                let levels = levels.clone();
                let k = levels.len();
                match strategy {
                    Strategy::None => Quantizer::Rfsq {
                        cfg: RfsqConfig::none(levels)?,
                        fit: false,
                    },
                    Strategy::LayerNorm => Quantizer::Rfsq {
                        cfg: RfsqConfig::layernorm(levels, eps.unwrap_or(DEFAULT_LN_EPS))?,
                        fit: false,
                    },
                    Strategy::Scale => match alpha {
                        Some(AlphaSpec::Fixed(a)) => Quantizer::Rfsq {
                            cfg: RfsqConfig::scaled(levels, a.clone())?,
                            fit: false,
                        },
                        Some(AlphaSpec::Fit) => Quantizer::Rfsq {
                            cfg: RfsqConfig::scaled(levels, vec![1.0; k])?,
                            fit: true,
                        },
                        None => Quantizer::Rfsq {
                            cfg: RfsqConfig::scaled(levels, vec![1.0; k])?,
                            fit: false,
                        },
                    },
                }
            }
        })
    }

    /// Same spec with fixed scales.
    pub fn with_alphas(&self, alphas: Vec<f64>) -> MethodSpec {
        let mut out = self.clone();
        if let Method::Rfsq { alpha, .. } = &mut out.method {
            *alpha = Some(AlphaSpec::Fixed(alphas));
        }
        out
    }
}

fn parse_list<T: FromStr>(token: &str, value: &str) -> Result<Vec<T>, SpecError> {
    value
        .split(',')
        .map(|v| v.trim().parse::<T>().map_err(|_| bad(token, format!("'{v}' is not a number"))))
        .collect()
}

fn parse_levels(token: &str, value: &str) -> Result<LevelsSpec, SpecError> {
    let levels = parse_list::<u32>(token, value)?;
    LevelsSpec::new(levels).map_err(|e| bad(token, e.to_string()))
}

impl FromStr for MethodSpec {
    type Err = SpecError;

    fn from_str(s: &str) -> Result<Self, SpecError> {
        let mut parts = s.trim().split(':');
        let name = parts.next().unwrap_or_default();
        if !matches!(name, "fsq" | "lfq" | "rfsq") {
            return Err(bad(name, "unknown method (expected fsq, lfq or rfsq)"));
        }
        let mut seed = None;
        let mut levels: Option<Vec<LevelsSpec>> = None;
        let mut dim = None;
        let mut stages: Option<usize> = None;
        let mut strategy = None;
        let mut alpha = None;
        let mut eps = None;
        for token in parts {
            let (key, value) = token
                .split_once('=')
                .ok_or_else(|| bad(token, "expected key=value"))?;
            let allowed = match name {
                "fsq" => matches!(key, "levels" | "seed"),
                "lfq" => matches!(key, "dim" | "seed"),
                "rfsq" => matches!(key, "levels" | "seed" | "stages" | "strategy" | "alpha" | "eps"),
                _ => false,
            };
            if !allowed {
                return Err(bad(token, format!("key '{key}' not valid for method '{name}'")));
            }
            match key {
                "seed" => seed = Some(value.parse().map_err(|_| bad(token, "seed must be an integer"))?),
                "dim" => dim = Some(value.parse::<u32>().map_err(|_| bad(token, "dim must be an integer"))?),
                "stages" => {
                    let k: usize = value.parse().map_err(|_| bad(token, "stages must be an integer"))?;
                    if k == 0 {
                        return Err(bad(token, "stages must be at least 1"));
                    }
                    stages = Some(k);
                }
                "strategy" => strategy = Some(value.parse::<Strategy>().map_err(|e| bad(token, e.to_string()))?),
                "levels" => {
                    levels = Some(
                        value
                            .split('/')
                            .map(|l| parse_levels(token, l))
                            .collect::<Result<Vec<_>, _>>()?,
                    )
                }
                "alpha" => {
                    alpha = Some(if value == "fit" {
                        AlphaSpec::Fit
                    } else {
                        AlphaSpec::Fixed(parse_list::<f64>(token, value)?)
                    })
                }
                "eps" => eps = Some(value.parse::<f64>().map_err(|_| bad(token, "eps must be a number"))?),
                _ => unreachable!("filtered above"),
            }
        }
        let method = match name {
            "fsq" => {
                let mut levels = levels.ok_or_else(|| bad(s, "fsq needs levels="))?;
                if levels.len() != 1 {
                    return Err(bad(s, "fsq takes a single levels list"));
                }
                Method::Fsq {
                    levels: levels.remove(0),
                }
            }
            "lfq" => {
                let dim = dim.ok_or_else(|| bad(s, "lfq needs dim="))?;
                LfqConfig::new(dim).map_err(|e| bad(&format!("dim={dim}"), e.to_string()))?;
                Method::Lfq { dim }
            }
            "rfsq" => {
                let mut levels = levels.ok_or_else(|| bad(s, "rfsq needs levels="))?;
                let strategy = strategy.unwrap_or(Strategy::None);
                let k = stages.unwrap_or(levels.len());
                if levels.len() == 1 {
                    levels = vec![levels[0].clone(); k];
                } else if levels.len() != k {
                    return Err(bad(s, format!("{} levels lists for {k} stages", levels.len())));
                }
                if let Some(d) = levels.iter().map(LevelsSpec::dim).find(|&d| d != levels[0].dim()) {
                    return Err(bad(s, format!("stage dimensions differ ({} vs {d})", levels[0].dim())));
                }
                if alpha.is_some() && strategy != Strategy::Scale {
                    return Err(bad(s, "alpha= needs strategy=scale"));
                }
                if let Some(AlphaSpec::Fixed(a)) = &alpha {
                    if a.len() != k {
                        return Err(bad(s, format!("{} alphas for {k} stages", a.len())));
                    }
                    if a.iter().any(|&x| !(x.is_finite() && x > 0.0)) {
                        return Err(bad(s, "alphas must be positive"));
                    }
                }
                if eps.is_some() && strategy != Strategy::LayerNorm {
                    return Err(bad(s, "eps= needs strategy=layernorm"));
                }
                if matches!(eps, Some(e) if !(e.is_finite() && e > 0.0)) {
                    return Err(bad(s, "eps must be positive"));
                }
                Method::Rfsq {
                    levels,
                    strategy,
                    alpha,
                    eps,
                }
            }
            other => return Err(bad(other, "unknown method (expected fsq, lfq or rfsq)")),
        };
        Ok(MethodSpec { method, seed })
    }
}

fn join<T: fmt::Display>(xs: &[T]) -> String {
    xs.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
}

impl fmt::Display for MethodSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.method {
            Method::Fsq { levels } => write!(f, "fsq:levels={levels}")?,
            Method::Lfq { dim } => write!(f, "lfq:dim={dim}")?,
            Method::Rfsq {
                levels,
                strategy,
                alpha,
                eps,
            } => {
                write!(f, "rfsq:stages={}:strategy={strategy}:levels=", levels.len())?;
                if levels.iter().all(|l| l == &levels[0]) {
                    write!(f, "{}", levels[0])?;
                } else {
                    let per: Vec<String> = levels.iter().map(ToString::to_string).collect();
                    f.write_str(&per.join("/"))?;
                }
                match alpha {
                    Some(AlphaSpec::Fit) => f.write_str(":alpha=fit")?,
                    Some(AlphaSpec::Fixed(a)) => write!(f, ":alpha={}", join(a))?,
                    None => {}
                }
                if let Some(e) = eps {
                    write!(f, ":eps={e}")?;
                }
            }
        }
        if let Some(seed) = self.seed {
            write!(f, ":seed={seed}")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::{any, prop, prop_assert_eq, prop_oneof, proptest};
    use proptest::strategy::Strategy as PropStrategy;

    #[test]
    fn reference_configs_parse() {
        for s in [
            "fsq:levels=8,8,8,8",
            "lfq:dim=12",
            "rfsq:stages=2:strategy=scale:levels=8,8,8,4:alpha=fit",
            "rfsq:stages=2:strategy=layernorm:levels=8,8,8,4",
            "rfsq:stages=2:strategy=none:levels=8,8,8,4",
            "rfsq:stages=4:strategy=scale:levels=4,4,4,4,4:alpha=fit",
            "rfsq:stages=4:strategy=layernorm:levels=4,4,4,4,4",
            "rfsq:stages=4:strategy=none:levels=4,4,4,4,4",
        ] {
            let m: MethodSpec = s.parse().unwrap();
            assert_eq!(m.to_string(), s);
            assert!(m.quantizer().is_ok());
        }
    }

    #[test]
    fn shorthand_normalises() {
        let m: MethodSpec = "rfsq:levels=3,3/3,3:eps=0.001:strategy=layernorm:seed=5".parse().unwrap();
        assert_eq!(m.to_string(), "rfsq:stages=2:strategy=layernorm:levels=3,3:eps=0.001:seed=5");
        let m: MethodSpec = "rfsq:stages=2:levels=3,3/4,4".parse().unwrap();
        assert_eq!(m.to_string(), "rfsq:stages=2:strategy=none:levels=3,3/4,4");
    }

    #[test]
    fn errors_name_the_token() {
        let e = "rfsq:stages=2:strategy=bogus:levels=8,8".parse::<MethodSpec>().unwrap_err();
        assert_eq!(e.token, "strategy=bogus");
        let e = "fsq:levels=8,1,8".parse::<MethodSpec>().unwrap_err();
        assert_eq!(e.token, "levels=8,1,8");
        assert!(e.reason.contains("level count must be ≥ 2"));
        let e = "fsq:levels=8:dim=3".parse::<MethodSpec>().unwrap_err();
        assert_eq!(e.token, "dim=3");
        let e = "vq:levels=8".parse::<MethodSpec>().unwrap_err();
        assert_eq!(e.token, "vq");
        assert!("rfsq:stages=2:levels=8,8:alpha=1,1".parse::<MethodSpec>().is_err());
        assert!("rfsq:stages=2:strategy=scale:levels=8,8:alpha=1".parse::<MethodSpec>().is_err());
        assert!("rfsq:stages=3:levels=8,8/8,8".parse::<MethodSpec>().is_err());
        assert!("rfsq:levels=8,8/8,8,8".parse::<MethodSpec>().is_err());
        assert!("lfq:dim=64".parse::<MethodSpec>().is_err());
        assert!("fsq:levels8".parse::<MethodSpec>().is_err());
    }

    #[test]
    fn fsq_resolves_to_single_stage() {
        let m: MethodSpec = "fsq:levels=8,8,8,8".parse().unwrap();
        let Quantizer::Rfsq { cfg, fit } = m.quantizer().unwrap() else { panic!() };
        assert!(!fit);
        assert_eq!(cfg.stages(), 1);
        assert_eq!(cfg.strategy(), Strategy::None);
    }

    fn canonical() -> impl proptest::strategy::Strategy<Value = String> {
        let levels = prop::collection::vec(2u32..20, 1..5);
        prop_oneof![
            (levels.clone(), prop::option::of(any::<u64>())).prop_map(|(l, s)| {
                let mut x = format!("fsq:levels={}", join(&l));
                if let Some(s) = s { x += &format!(":seed={s}"); }
                x
            }),
            (1u32..=63).prop_map(|d| format!("lfq:dim={d}")),
            (levels, 1usize..5, 0u8..5, prop::collection::vec(0.1f64..50.0, 4), 1e-8f64..1.0).prop_map(
                |(l, k, mode, a, e)| {
                    let base = format!("rfsq:stages={k}:strategy={{}}:levels={}", join(&l));
                    match mode {
                        0 => base.replace("{}", "none"),
                        1 => base.replace("{}", "scale"),
                        2 => base.replace("{}", "scale") + ":alpha=fit",
                        3 => base.replace("{}", "scale") + &format!(":alpha={}", join(&a[..k])),
                        _ => base.replace("{}", "layernorm") + &format!(":eps={e}"),
                    }
                }
            ),
        ]
    }

    proptest! {
        #[test]
        fn format_parse_identity(s in canonical()) {
            let m: MethodSpec = s.parse().unwrap();
            prop_assert_eq!(m.to_string(), s.clone());
            prop_assert_eq!(m.to_string().parse::<MethodSpec>().unwrap(), m);
        }
    }
}
