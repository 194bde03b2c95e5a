use crate::error::{Error, Result};
use crate::scalar::Scalar;
use ndarray::{s, Array2};
use std::collections::BTreeMap;

/// Region x time panel of counts with offsets and covariates.
///
/// Time is 1-based in every public accessor. Offsets and covariates may carry
/// more columns than the counts; the extra columns are values for future
/// periods used by forecasting and simulation.
#[derive(Debug, Clone, PartialEq)]
pub struct SurveillanceCounts<F> {
    region_ids: Vec<String>,
    counts: Array2<u64>,
    /// `None` means `e_it = 1` for every region and time.
    offsets: Option<Array2<F>>,
    covariates: BTreeMap<String, Array2<F>>,
    trend_centre: F,
}

impl<F: Scalar> SurveillanceCounts<F> {
    pub fn new(region_ids: Vec<String>, counts: Array2<u64>) -> Result<Self> {
        if counts.nrows() != region_ids.len() {
            return Err(Error::invalid(format!(
                "counts have {} rows but {} region ids were given",
                counts.nrows(),
                region_ids.len()
            )));
        }
        if counts.ncols() == 0 || counts.nrows() == 0 {
            return Err(Error::invalid("counts panel is empty"));
        }
        let t = counts.ncols();
        Ok(Self {
            region_ids,
            counts,
            offsets: None,
            covariates: BTreeMap::new(),
            trend_centre: F::from_index(t + 1) * F::lit(0.5),
        })
    }

    pub fn with_offsets(mut self, offsets: Array2<F>) -> Result<Self> {
        self.check_panel("offset", &offsets)?;
        if let Some(((i, t), v)) = offsets.indexed_iter().find(|(_, v)| !(**v > F::zero())) {
            return Err(Error::invalid(format!(
                "offset must be positive, got {v} at region {} time {}",
                self.region_ids[i],
                t + 1
            )));
        }
        self.offsets = Some(offsets);
        Ok(self)
    }

    pub fn with_covariate(mut self, name: impl Into<String>, values: Array2<F>) -> Result<Self> {
        let name = name.into();
        self.check_panel(&format!("covariate `{name}`"), &values)?;
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid(format!(
                "covariate `{name}` has non-finite values"
            )));
        }
        self.covariates.insert(name, values);
        Ok(self)
    }

    fn check_panel(&self, what: &str, m: &Array2<F>) -> Result<()> {
        if m.nrows() != self.n_regions() || m.ncols() < self.n_times() {
            return Err(Error::invalid(format!(
                "{what} is {}x{}, need {} regions and at least {} times",
                m.nrows(),
                m.ncols(),
                self.n_regions(),
                self.n_times()
            )));
        }
        Ok(())
    }

    pub fn n_regions(&self) -> usize {
        self.counts.nrows()
    }

    pub fn n_times(&self) -> usize {
        self.counts.ncols()
    }

    pub fn region_ids(&self) -> &[String] {
        &self.region_ids
    }

    /// Counts with `counts[[i, t - 1]] = Y_it`.
    pub fn counts(&self) -> &Array2<u64> {
        &self.counts
    }

    pub fn count(&self, i: usize, t: usize) -> u64 {
        self.counts[[i, t - 1]]
    }

    pub fn offsets(&self) -> Option<&Array2<F>> {
        self.offsets.as_ref()
    }

    pub fn covariates(&self) -> &BTreeMap<String, Array2<F>> {
        &self.covariates
    }

    pub fn covariate_names(&self) -> Vec<String> {
        self.covariates.keys().cloned().collect()
    }

    /// Centring constant of the linear trend, `(T + 1) / 2` of the panel the
    /// data was created with. Truncation keeps it.
    pub fn trend_centre(&self) -> F {
        self.trend_centre
    }

    pub fn with_trend_centre(mut self, centre: F) -> Self {
        self.trend_centre = centre;
        self
    }

    pub fn offset(&self, i: usize, t: usize) -> Result<F> {
        match &self.offsets {
            None => Ok(F::one()),
            Some(e) if t >= 1 && t <= e.ncols() => Ok(e[[i, t - 1]]),
            Some(_) => Err(Error::MissingFutureValues {
                what: "offset".into(),
                times: vec![t],
            }),
        }
    }

    pub fn covariate(&self, name: &str, i: usize, t: usize) -> Result<F> {
        let m = self
            .covariates
            .get(name)
            .ok_or_else(|| Error::UnknownCovariate {
                name: name.to_string(),
                available: self.covariate_names(),
            })?;
        if t >= 1 && t <= m.ncols() {
            Ok(m[[i, t - 1]])
        } else {
            Err(Error::MissingFutureValues {
                what: format!("covariate `{name}`"),
                times: vec![t],
            })
        }
    }

    /// Last time for which offsets and all covariates are available.
    pub fn covariate_horizon(&self) -> usize {
        let mut h = self.offsets.as_ref().map_or(usize::MAX, |e| e.ncols());
        for m in self.covariates.values() {
            h = h.min(m.ncols());
        }
        h
    }

    /// Panel restricted to times `1..=t`; offsets and covariates keep their
    /// future columns.
    pub fn head(&self, t: usize) -> Result<Self> {
        if t == 0 || t > self.n_times() {
            return Err(Error::invalid(format!(
                "cannot truncate a panel of length {} to {t}",
                self.n_times()
            )));
        }
        Ok(Self {
            region_ids: self.region_ids.clone(),
            counts: self.counts.slice(s![.., ..t]).to_owned(),
            offsets: self.offsets.clone(),
            covariates: self.covariates.clone(),
            trend_centre: self.trend_centre,
        })
    }

    /// Replaces the counts with another panel of the same regions, keeping
    /// offsets, covariates and the trend centre.
    pub fn with_counts(&self, counts: Array2<u64>) -> Result<Self> {
        let mut out = Self::new(self.region_ids.clone(), counts)?;
        if let Some(e) = &self.offsets {
            out.check_panel("offset", e)?;
        }
        for (name, m) in &self.covariates {
            out.check_panel(&format!("covariate `{name}`"), m)?;
        }
        out.offsets = self.offsets.clone();
        out.covariates = self.covariates.clone();
        out.trend_centre = self.trend_centre;
        Ok(out)
    }
}
