//! Packing of all model parameters into one real vector.
//!
//! Block order: for each included component (endemic, autoregressive,
//! spatio-temporal) its design-row coefficients followed by its region
//! intercepts (fixed) or region effects (random); then `log ψ` for the
//! negative binomial; then the log-scale weight parameters; finally one
//! log-variance per random-effect component.

use crate::error::{Error, Result};
use crate::model::family::Family;
use crate::model::spec::{Component, InterceptKind, ModelSpec};
use crate::scalar::Scalar;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Transform {
    Identity,
    /// Stored as the log of a positive parameter.
    Log,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "role", content = "component")]
pub enum ParamRole {
    Coefficient(Component),
    RegionIntercept(Component),
    RandomEffect(Component),
    Overdispersion,
    Weight,
    LogVariance(Component),
}

impl ParamRole {
    /// Estimated by plain maximum likelihood (random effects and their
    /// variances are not).
    pub fn is_fixed_effect(self) -> bool {
        !matches!(self, ParamRole::RandomEffect(_) | ParamRole::LogVariance(_))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamInfo {
    /// Name on the natural scale (e.g. `d`, `psi`).
    pub name: String,
    pub role: ParamRole,
    pub transform: Transform,
}

/// Region-specific intercept terms of one component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionTerms {
    pub random: bool,
    /// Parameter index per region.
    pub indices: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentLayout {
    pub include: bool,
    /// Parameter index per design-row column.
    pub columns: Vec<usize>,
    pub region: Option<RegionTerms>,
    pub log_variance: Option<usize>,
}

/// Descriptor mapping parameter names to positions in the packed vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layout {
    pub params: Vec<ParamInfo>,
    pub components: Vec<ComponentLayout>,
    pub log_psi: Option<usize>,
    pub weights: Vec<usize>,
    /// The trend enters the design as `t - trend_centre`.
    pub trend_centre: f64,
}

impl Layout {
    pub fn new<F: Scalar>(spec: &ModelSpec<F>, region_ids: &[String], trend_centre: F) -> Self {
        let mut params = Vec::new();
        let mut components = Vec::new();
        let mut random_components = Vec::new();
        for c in Component::ALL {
            let comp = spec.component(c);
            if !comp.include {
                components.push(ComponentLayout {
                    include: false,
                    columns: Vec::new(),
                    region: None,
                    log_variance: None,
                });
                continue;
            }
            let mut columns = Vec::new();
            for name in comp.column_names() {
                columns.push(params.len());
                params.push(ParamInfo {
                    name: format!("{}.{}", c.prefix(), name),
                    role: ParamRole::Coefficient(c),
                    transform: Transform::Identity,
                });
            }
            let region = match comp.intercept {
                InterceptKind::Common => None,
                kind => {
                    let random = kind == InterceptKind::PerRegionRandom;
                    let (label, role) = if random {
                        ("b", ParamRole::RandomEffect(c))
                    } else {
                        ("alpha", ParamRole::RegionIntercept(c))
                    };
                    let indices = region_ids
                        .iter()
                        .map(|id| {
                            params.push(ParamInfo {
                                name: format!("{}.{label}[{id}]", c.prefix()),
                                role,
                                transform: Transform::Identity,
                            });
                            params.len() - 1
                        })
                        .collect();
                    if random {
                        random_components.push(c);
                    }
                    Some(RegionTerms { random, indices })
                }
            };
            components.push(ComponentLayout {
                include: true,
                columns,
                region,
                log_variance: None,
            });
        }
        let log_psi = (spec.family == Family::NegBin).then(|| {
            params.push(ParamInfo {
                name: "psi".into(),
                role: ParamRole::Overdispersion,
                transform: Transform::Log,
            });
            params.len() - 1
        });
        let weights = if spec.spatiotemporal.include {
            spec.weights
                .param_names()
                .into_iter()
                .map(|name| {
                    params.push(ParamInfo {
                        name,
                        role: ParamRole::Weight,
                        transform: Transform::Log,
                    });
                    params.len() - 1
                })
                .collect()
        } else {
            Vec::new()
        };
        for c in random_components {
            params.push(ParamInfo {
                name: format!("sigma2.{}", c.prefix()),
                role: ParamRole::LogVariance(c),
                transform: Transform::Log,
            });
            components[c.index()].log_variance = Some(params.len() - 1);
        }
        Self {
            params,
            components,
            log_psi,
            weights,
            trend_centre: trend_centre.as_f64(),
        }
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn component(&self, c: Component) -> &ComponentLayout {
        &self.components[c.index()]
    }

    pub fn index_of(&self, name: &str) -> Result<usize> {
        self.params
            .iter()
            .position(|p| p.name == name)
            .ok_or_else(|| Error::UnknownParameter(name.to_string()))
    }

    pub fn names(&self) -> Vec<String> {
        self.params.iter().map(|p| p.name.clone()).collect()
    }

    /// Indices estimated by a plain (fixed-effects) fit.
    pub fn fixed_effect_indices(&self) -> Vec<usize> {
        (0..self.len())
            .filter(|&k| self.params[k].role.is_fixed_effect())
            .collect()
    }

    pub fn random_effect_indices(&self) -> Vec<usize> {
        (0..self.len())
            .filter(|&k| matches!(self.params[k].role, ParamRole::RandomEffect(_)))
            .collect()
    }

    pub fn random_components(&self) -> Vec<Component> {
        Component::ALL
            .into_iter()
            .filter(|c| self.component(*c).log_variance.is_some())
            .collect()
    }
}

/// Parameter values together with the layout that gives them meaning.
/// Log-transformed parameters are stored on the log scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterVector<F> {
    pub layout: Layout,
    pub values: Vec<F>,
}

impl<F: Scalar> ParameterVector<F> {
    pub fn zeros(layout: Layout) -> Self {
        let values = vec![F::zero(); layout.len()];
        Self { layout, values }
    }

    pub fn from_values(layout: Layout, values: Vec<F>) -> Result<Self> {
        if values.len() != layout.len() {
            return Err(Error::LengthMismatch(values.len(), layout.len()));
        }
        Ok(Self { layout, values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Value on the estimation (possibly log) scale.
    pub fn get(&self, name: &str) -> Result<F> {
        Ok(self.values[self.layout.index_of(name)?])
    }

    /// Value on the natural scale.
    pub fn natural(&self, name: &str) -> Result<F> {
        let k = self.layout.index_of(name)?;
        Ok(match self.layout.params[k].transform {
            Transform::Identity => self.values[k],
            Transform::Log => self.values[k].exp(),
        })
    }

    pub fn set(&mut self, name: &str, value: F) -> Result<()> {
        let k = self.layout.index_of(name)?;
        self.values[k] = value;
        Ok(())
    }

    /// Overdispersion `ψ` (0 for Poisson).
    pub fn psi(&self) -> F {
        self.layout
            .log_psi
            .map_or(F::zero(), |k| self.values[k].exp())
    }

    pub fn weight_params(&self) -> Vec<F> {
        self.layout
            .weights
            .iter()
            .map(|&k| self.values[k])
            .collect()
    }

    /// `(name, value)` pairs on the estimation scale.
    pub fn to_named(&self) -> Vec<(String, F)> {
        self.layout
            .params
            .iter()
            .zip(&self.values)
            .map(|(p, v)| (p.name.clone(), *v))
            .collect()
    }

    pub fn from_named(layout: Layout, named: &[(String, F)]) -> Result<Self> {
        let mut out = Self::zeros(layout);
        if named.len() != out.len() {
            return Err(Error::LengthMismatch(named.len(), out.len()));
        }
        for (name, v) in named {
            out.set(name, *v)?;
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::spec::ComponentSpec;
    use crate::weights::{WeightKind, WeightSpec};
    use proptest::prelude::*;

    fn ids() -> Vec<String> {
        vec!["x".into(), "y".into(), "z".into()]
    }

    fn rich_spec() -> ModelSpec<f64> {
        ModelSpec {
            endemic: ComponentSpec::intercept_only()
                .with_trend()
                .with_harmonics(2)
                .with_intercept(InterceptKind::PerRegionRandom),
            autoregressive: ComponentSpec::intercept_only()
                .with_intercept(InterceptKind::PerRegionFixed),
            spatiotemporal: ComponentSpec::intercept_only().with_covariate("pop"),
            weights: WeightSpec::new(WeightKind::OrderFactor { max_order: 3 }, true),
            family: Family::NegBin,
        }
    }

    #[test]
    fn block_order_and_names() {
        let layout = Layout::new(&rich_spec(), &ids(), 2.0);
        let names = layout.names();
        assert_eq!(
            names,
            vec![
                "end.(Intercept)",
                "end.t",
                "end.sin(1*w*t)",
                "end.cos(1*w*t)",
                "end.sin(2*w*t)",
                "end.cos(2*w*t)",
                "end.b[x]",
                "end.b[y]",
                "end.b[z]",
                "ar.alpha[x]",
                "ar.alpha[y]",
                "ar.alpha[z]",
                "ne.(Intercept)",
                "ne.pop",
                "psi",
                "omega2",
                "omega3",
                "sigma2.end",
            ]
        );
        assert_eq!(layout.fixed_effect_indices().len(), names.len() - 4);
        assert_eq!(layout.random_components(), vec![Component::Endemic]);
        assert_eq!(layout.index_of("psi").unwrap(), 14);
        assert!(matches!(
            layout.index_of("nope"),
            Err(Error::UnknownParameter(_))
        ));
    }

    #[test]
    fn natural_scale_access() {
        let layout = Layout::new(&rich_spec(), &ids(), 2.0);
        let mut theta = ParameterVector::<f64>::zeros(layout);
        theta.set("psi", 0.5f64.ln()).unwrap();
        assert!((theta.psi() - 0.5).abs() < 1e-15);
        assert!((theta.natural("psi").unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(theta.weight_params().len(), 2);
    }

    proptest! {
        #[test]
        fn named_roundtrip(values in proptest::collection::vec(-5.0f64..5.0, 18)) {
            let layout = Layout::new(&rich_spec(), &ids(), 2.0);
            let theta = ParameterVector::from_values(layout.clone(), values).unwrap();
            let back = ParameterVector::from_named(layout, &theta.to_named()).unwrap();
            prop_assert_eq!(back, theta);
        }
    }
}
