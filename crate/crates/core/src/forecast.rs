//! Probabilistic rollout forecasts shared by every uncertainty method.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::grid::Field;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Conformal,
    Dropout,
    Ensemble,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Conformal, Method::Dropout, Method::Ensemble];

    pub fn tag(self) -> &'static str {
        match self {
            Method::Conformal => "cp",
            Method::Dropout => "dropout",
            Method::Ensemble => "ensemble",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "cp" | "conformal" => Ok(Method::Conformal),
            "dropout" | "mc-dropout" => Ok(Method::Dropout),
            "ensemble" | "snapshot" => Ok(Method::Ensemble),
            other => Err(Error::Config(format!(
                "unknown method '{other}' (expected cp, dropout or ensemble)"
            ))),
        }
    }
}

/// Predictive standard deviation per rollout step.
#[derive(Debug, Clone, PartialEq)]
pub enum Sigma {
    /// One value broadcast over the whole grid.
    Uniform(Vec<f64>),
    PerCell(Vec<Field>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct UncertaintyForecast {
    pub method: Method,
    pub mean: Vec<Field>,
    pub sigma: Sigma,
}

impl UncertaintyForecast {
    pub fn new(method: Method, mean: Vec<Field>, sigma: Sigma) -> Result<Self> {
        let steps = match &sigma {
            Sigma::Uniform(s) => {
                if s.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
                    return Err(Error::numeric("sigma must be finite and non-negative"));
                }
                s.len()
            }
            Sigma::PerCell(fields) => {
                if fields.iter().any(|f| f.values().iter().any(|v| *v < 0.0)) {
                    return Err(Error::numeric("sigma must be non-negative"));
                }
                if let (Some(a), Some(b)) = (fields.first(), mean.first()) {
                    if a.size() != b.size() {
                        return Err(Error::DimensionMismatch {
                            expected: b.size(),
                            found: a.size(),
                        });
                    }
                }
                fields.len()
            }
        };
        if steps != mean.len() {
            return Err(Error::DimensionMismatch {
                expected: mean.len(),
                found: steps,
            });
        }
        if mean.is_empty() {
            return Err(Error::invalid("forecast has no steps"));
        }
        Ok(UncertaintyForecast {
            method,
            mean,
            sigma,
        })
    }

    pub fn horizon(&self) -> usize {
        self.mean.len()
    }

    pub fn size(&self) -> usize {
        self.mean[0].size()
    }

    pub fn sigma_at(&self, step: usize, cell: usize) -> f64 {
        match &self.sigma {
            Sigma::Uniform(s) => s[step],
            Sigma::PerCell(f) => f[step].values()[cell],
        }
    }

    pub fn sigma_field(&self, step: usize) -> Field {
        match &self.sigma {
            Sigma::Uniform(s) => Field::new(self.size(), vec![s[step]; self.size() * self.size()])
                .expect("valid sigma"),
            Sigma::PerCell(f) => f[step].clone(),
        }
    }

    pub fn mean_sigma(&self, step: usize) -> f64 {
        match &self.sigma {
            Sigma::Uniform(s) => s[step],
            Sigma::PerCell(f) => f[step].mean(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn method_names() {
        for m in Method::ALL {
            assert_eq!(m.tag().parse::<Method>().unwrap(), m);
        }
        assert!(matches!("bayes".parse::<Method>(), Err(Error::Config(_))));
    }

    #[test]
    fn validates_shapes() {
        let mean = vec![Field::zeros(4).unwrap(); 2];
        assert!(UncertaintyForecast::new(
            Method::Conformal,
            mean.clone(),
            Sigma::Uniform(vec![1.0])
        )
        .is_err());
        assert!(UncertaintyForecast::new(
            Method::Conformal,
            mean.clone(),
            Sigma::Uniform(vec![1.0, -1.0])
        )
        .is_err());
        let f = UncertaintyForecast::new(Method::Conformal, mean, Sigma::Uniform(vec![1.0, 2.0]))
            .unwrap();
        assert_eq!(f.sigma_at(1, 7), 2.0);
        assert_eq!(f.sigma_field(0).values(), &[1.0; 16]);
    }
}
