//! Observation panels: the response array over (area, time, disease) plus
//! named covariate arrays sharing that index space.

use crate::error::Error;
use crate::Result;

/// Named covariate values indexed by (area, time, disease, covariate).
#[derive(Debug, Clone, PartialEq)]
pub struct Covariates {
    names: Vec<String>,
    n_areas: usize,
    n_times: usize,
    n_diseases: usize,
    values: Vec<f64>,
}

impl Covariates {
    pub fn new(
        names: Vec<String>,
        n_areas: usize,
        n_times: usize,
        n_diseases: usize,
        values: Vec<f64>,
    ) -> Result<Self> {
        let p = names.len();
        {
            let mut sorted = names.clone();
            sorted.sort();
            sorted.dedup();
            if sorted.len() != p {
                return Err(Error::InvalidData("duplicate covariate names".into()));
            }
        }
        let expected = n_areas * n_times * n_diseases * p;
        if values.len() != expected {
            return Err(Error::DimensionMismatch(format!(
                "covariate array has {} values, expected {}",
                values.len(),
                expected
            )));
        }
        Ok(Self {
            names,
            n_areas,
            n_times,
            n_diseases,
            values,
        })
    }

    pub fn empty(n_areas: usize, n_times: usize, n_diseases: usize) -> Self {
        Self {
            names: Vec::new(),
            n_areas,
            n_times,
            n_diseases,
            values: Vec::new(),
        }
    }

    pub fn n_covariates(&self) -> usize {
        self.names.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn n_times(&self) -> usize {
        self.n_times
    }

    #[inline]
    fn base(&self, area: usize, time: usize, disease: usize) -> usize {
        (((area * self.n_times) + time) * self.n_diseases + disease) * self.names.len()
    }

    /// Covariate vector x_{itd} as a slice of length p.
    #[inline]
    pub fn row(&self, area: usize, time: usize, disease: usize) -> &[f64] {
        let b = self.base(area, time, disease);
        &self.values[b..b + self.names.len()]
    }

    /// Covariates restricted to `len` time points starting at `start`.
    pub fn slice_times(&self, start: usize, len: usize) -> Result<Self> {
        if start + len > self.n_times {
            return Err(Error::DimensionMismatch(format!(
                "slice {start}..{} of {} time points",
                start + len,
                self.n_times
            )));
        }
        let p = self.names.len();
        let mut values = Vec::with_capacity(self.n_areas * len * self.n_diseases * p);
        for i in 0..self.n_areas {
            for t in start..start + len {
                for d in 0..self.n_diseases {
                    values.extend_from_slice(self.row(i, t, d));
                }
            }
        }
        Covariates::new(self.names.clone(), self.n_areas, len, self.n_diseases, values)
    }
}

/// The response panel: y over (area, time, disease), with covariates and
/// optional calendar labels for the time axis.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationPanel {
    n_areas: usize,
    n_times: usize,
    n_diseases: usize,
    y: Vec<f64>,
    covariates: Covariates,
    week_labels: Option<Vec<String>>,
}

impl ObservationPanel {
    pub fn new(
        n_areas: usize,
        n_times: usize,
        n_diseases: usize,
        y: Vec<f64>,
        covariates: Covariates,
    ) -> Result<Self> {
        if n_diseases == 0 || n_areas == 0 || n_times == 0 {
            return Err(Error::InvalidData("panel dimensions must be positive".into()));
        }
        if y.len() != n_areas * n_times * n_diseases {
            return Err(Error::DimensionMismatch(format!(
                "y has {} values, expected {}",
                y.len(),
                n_areas * n_times * n_diseases
            )));
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidData("non-finite response value".into()));
        }
        if covariates.n_areas != n_areas
            || covariates.n_times != n_times
            || covariates.n_diseases != n_diseases
        {
            return Err(Error::DimensionMismatch(
                "covariates do not match panel dimensions".into(),
            ));
        }
        Ok(Self {
            n_areas,
            n_times,
            n_diseases,
            y,
            covariates,
            week_labels: None,
        })
    }

    pub fn with_week_labels(mut self, labels: Vec<String>) -> Result<Self> {
        if labels.len() != self.n_times {
            return Err(Error::DimensionMismatch(format!(
                "{} week labels for {} times",
                labels.len(),
                self.n_times
            )));
        }
        self.week_labels = Some(labels);
        Ok(self)
    }

    pub fn n_areas(&self) -> usize {
        self.n_areas
    }

    pub fn n_times(&self) -> usize {
        self.n_times
    }

    pub fn n_diseases(&self) -> usize {
        self.n_diseases
    }

    pub fn n_covariates(&self) -> usize {
        self.covariates.n_covariates()
    }

    pub fn covariates(&self) -> &Covariates {
        &self.covariates
    }

    pub fn week_labels(&self) -> Option<&[String]> {
        self.week_labels.as_deref()
    }

    #[inline]
    pub fn y(&self, area: usize, time: usize, disease: usize) -> f64 {
        self.y[(area * self.n_times + time) * self.n_diseases + disease]
    }

    #[inline]
    pub fn set_y(&mut self, area: usize, time: usize, disease: usize, value: f64) {
        self.y[(area * self.n_times + time) * self.n_diseases + disease] = value;
    }

    #[inline]
    pub fn x(&self, area: usize, time: usize, disease: usize) -> &[f64] {
        self.covariates.row(area, time, disease)
    }

    pub fn y_raw(&self) -> &[f64] {
        &self.y
    }

    /// Panel restricted to the first `t` time points.
    pub fn head_times(&self, t: usize) -> Result<Self> {
        if t == 0 || t > self.n_times {
            return Err(Error::DimensionMismatch(format!(
                "cannot keep {t} of {} time points",
                self.n_times
            )));
        }
        let mut y = Vec::with_capacity(self.n_areas * t * self.n_diseases);
        for i in 0..self.n_areas {
            for tt in 0..t {
                for d in 0..self.n_diseases {
                    y.push(self.y(i, tt, d));
                }
            }
        }
        let covariates = self.covariates.slice_times(0, t)?;
        let mut out = Self::new(self.n_areas, t, self.n_diseases, y, covariates)?;
        out.week_labels = self
            .week_labels
            .as_ref()
            .map(|labels| labels[..t].to_vec());
        Ok(out)
    }

    /// Reorder the disease axis; `order` lists the new position of each
    /// original disease (1-indexed), e.g. [2, 1] swaps a bivariate panel.
    pub fn with_disease_order(&self, order: &[usize]) -> Result<Self> {
        let d_count = self.n_diseases;
        if order.len() != d_count {
            return Err(Error::InvalidConfig(format!(
                "disease order has {} entries for {} diseases",
                order.len(),
                d_count
            )));
        }
        let mut seen = vec![false; d_count];
        for &o in order {
            if o == 0 || o > d_count || seen[o - 1] {
                return Err(Error::InvalidConfig(
                    "disease order must be a permutation of 1..=D".into(),
                ));
            }
            seen[o - 1] = true;
        }
        let p = self.covariates.n_covariates();
        let mut y = Vec::with_capacity(self.y.len());
        let mut xv = Vec::with_capacity(self.covariates.values.len());
        for i in 0..self.n_areas {
            for t in 0..self.n_times {
                for new_d in 0..d_count {
                    let old_d = order[new_d] - 1;
                    y.push(self.y(i, t, old_d));
                    let row = self.covariates.row(i, t, old_d);
                    for l in 0..p {
                        xv.push(row[l]);
                    }
                }
            }
        }
        let covariates = Covariates::new(
            self.covariates.names.clone(),
            self.n_areas,
            self.n_times,
            d_count,
            xv,
        )?;
        let mut out = Self::new(self.n_areas, self.n_times, d_count, y, covariates)?;
        out.week_labels = self.week_labels.clone();
        Ok(out)
    }
}
