use std::path::Path;

use crate::error::{input, Error, Result};

/// Independent Rademacher coordinates with `P(X_k = +1) = p_k`.
///
/// Also caches the two values of the normalised coordinate
/// `Y_k = (X_k - p_k + q_k) / (2 sqrt(p_k q_k))`.
#[derive(Debug, Clone, PartialEq)]
pub struct RademacherLaw {
    probs: Vec<f64>,
    y_plus: Vec<f64>,
    y_minus: Vec<f64>,
}

impl RademacherLaw {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return input("a law needs at least one coordinate");
        }
        if let Some((k, p)) = probs.iter().enumerate().find(|(_, &p)| !(p > 0.0 && p < 1.0)) {
            return input(format!("p_{} = {p} is not in (0, 1)", k + 1));
        }
        let y_plus = probs.iter().map(|&p| ((1.0 - p) / p).sqrt()).collect();
        let y_minus = probs.iter().map(|&p| -(p / (1.0 - p)).sqrt()).collect();
        Ok(Self {
            probs,
            y_plus,
            y_minus,
        })
    }

    pub fn symmetric(dim: usize) -> Result<Self> {
        Self::new(vec![0.5; dim])
    }

    pub fn homogeneous(dim: usize, p: f64) -> Result<Self> {
        Self::new(vec![p; dim])
    }

    pub fn dim(&self) -> usize {
        self.probs.len()
    }

    pub fn p(&self, k: usize) -> f64 {
        self.probs[k]
    }

    pub fn q(&self, k: usize) -> f64 {
        1.0 - self.probs[k]
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn is_symmetric(&self) -> bool {
        self.probs.iter().all(|&p| p == 0.5)
    }

    /// `Y_k` at `X_k = +1` (`plus = true`) or `X_k = -1`.
    pub fn normalized_value(&self, k: usize, plus: bool) -> f64 {
        if plus {
            self.y_plus[k]
        } else {
            self.y_minus[k]
        }
    }

    /// `Y` evaluated at a bitmask atom (bit `k` set means `X_k = +1`).
    pub fn normalized_at(&self, atom: u64) -> Vec<f64> {
        (0..self.dim())
            .map(|k| self.normalized_value(k, atom >> k & 1 == 1))
            .collect()
    }

    /// Probability of a bitmask atom.
    pub fn atom_prob(&self, atom: u64) -> f64 {
        (0..self.dim())
            .map(|k| if atom >> k & 1 == 1 { self.p(k) } else { self.q(k) })
            .product()
    }

    /// First `dim` coordinates of this law.
    pub fn truncated(&self, dim: usize) -> Result<Self> {
        if dim == 0 || dim > self.dim() {
            return input(format!("cannot truncate a {}-coordinate law to {dim}", self.dim()));
        }
        Self::new(self.probs[..dim].to_vec())
    }

    /// One `p_k` per line; blank lines and `#` comments are ignored.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut probs = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let p: f64 = line.parse().map_err(|_| Error::Parse {
                line: i + 1,
                msg: format!("bad probability `{line}`"),
            })?;
            probs.push(p);
        }
        Self::new(probs)
    }

    pub fn to_text(&self) -> String {
        self.probs.iter().map(|p| format!("{p:.16e}\n")).collect()
    }

    pub fn read_file(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn symmetric_values_are_signs() {
        let law = RademacherLaw::symmetric(2).unwrap();
        assert_eq!(law.normalized_value(0, true), 1.0);
        assert_eq!(law.normalized_value(0, false), -1.0);
    }

    #[test]
    fn biased_value() {
        let law = RademacherLaw::new(vec![0.8]).unwrap();
        assert!((law.normalized_value(0, true) - 0.5).abs() < 1e-15);
        assert!((law.normalized_value(0, false) + 2.0).abs() < 1e-15);
    }

    #[test]
    fn centred_with_unit_variance() {
        let law = RademacherLaw::new(vec![0.1, 0.37, 0.5, 0.93]).unwrap();
        for k in 0..law.dim() {
            let (a, b) = (law.normalized_value(k, true), law.normalized_value(k, false));
            assert!((law.p(k) * a + law.q(k) * b).abs() < 1e-15);
            assert!((law.p(k) * a * a + law.q(k) * b * b - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn rejects_degenerate_probabilities() {
        assert!(RademacherLaw::new(vec![0.5, 1.0]).is_err());
        assert!(RademacherLaw::new(vec![]).is_err());
        assert!(RademacherLaw::from_text("0.5\nabc\n").is_err());
        assert_eq!(RademacherLaw::from_text("# law\n0.25\n\n0.5\n").unwrap().dim(), 2);
    }
}
