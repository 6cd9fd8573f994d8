use crate::error::{Error, Result};

/// Streaming per-coordinate mean and variance (Welford), used to whiten
/// observations in the V2 variant.
#[derive(Clone, Debug, PartialEq)]
pub struct Normalizer {
    count: u64,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

const STD_FLOOR: f64 = 1e-8;

impl Normalizer {
    pub fn new(dim: usize) -> Self {
        Normalizer {
            count: 0,
            mean: vec![0.0; dim],
            m2: vec![0.0; dim],
        }
    }

    /// Rebuilds a normalizer from stored statistics.
    pub fn from_parts(count: u64, mean: Vec<f64>, m2: Vec<f64>) -> Result<Self> {
        if mean.len() != m2.len() {
            return Err(Error::dim("normalizer m2", mean.len(), m2.len()));
        }
        if m2.iter().any(|v| v.is_nan() || *v < 0.0) || mean.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("normalizer statistics".into()));
        }
        Ok(Normalizer { count, mean, m2 })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn m2(&self) -> &[f64] {
        &self.m2
    }

    /// Population standard deviation per coordinate.
    pub fn std(&self) -> Vec<f64> {
        if self.count == 0 {
            return vec![0.0; self.dim()];
        }
        self.m2.iter().map(|m| (m / self.count as f64).sqrt()).collect()
    }

    pub fn update(&mut self, observation: &[f64]) -> Result<()> {
        if observation.len() != self.dim() {
            return Err(Error::dim("normalizer observation", self.dim(), observation.len()));
        }
        self.count += 1;
        let n = self.count as f64;
        for ((m, s), &x) in self.mean.iter_mut().zip(&mut self.m2).zip(observation) {
            let delta = x - *m;
            *m += delta / n;
            *s += delta * (x - *m);
        }
        Ok(())
    }

    /// Combines statistics of two disjoint samples (Chan et al.).
    pub fn merge(&mut self, other: &Normalizer) -> Result<()> {
        if other.dim() != self.dim() {
            return Err(Error::dim("normalizer merge", self.dim(), other.dim()));
        }
        if other.count == 0 {
            return Ok(());
        }
        if self.count == 0 {
            *self = other.clone();
            return Ok(());
        }
        let na = self.count as f64;
        let nb = other.count as f64;
        let n = na + nb;
        for i in 0..self.dim() {
            let delta = other.mean[i] - self.mean[i];
            self.mean[i] += delta * nb / n;
            self.m2[i] += other.m2[i] + delta * delta * na * nb / n;
        }
        self.count += other.count;
        Ok(())
    }

    /// `(x - mean) / max(std, 1e-8)`; the identity until two samples are seen.
    pub fn apply(&self, observation: &[f64]) -> Result<Vec<f64>> {
        let mut out = observation.to_vec();
        self.apply_in_place(&mut out)?;
        Ok(out)
    }

    pub fn apply_in_place(&self, observation: &mut [f64]) -> Result<()> {
        if observation.len() != self.dim() {
            return Err(Error::dim("normalizer observation", self.dim(), observation.len()));
        }
        if self.count < 2 {
            return Ok(());
        }
        let n = self.count as f64;
        for ((x, m), s) in observation.iter_mut().zip(&self.mean).zip(&self.m2) {
            let std = (s / n).sqrt().max(STD_FLOOR);
            *x = (*x - m) / std;
        }
        Ok(())
    }
}

pub fn normalizer_update(n: &Normalizer, observation: &[f64]) -> Result<Normalizer> {
    let mut next = n.clone();
    next.update(observation)?;
    Ok(next)
}

pub fn normalizer_apply(n: &Normalizer, observation: &[f64]) -> Result<Vec<f64>> {
    n.apply(observation)
}
