use std::fmt::Write;

use serde::{Deserialize, Serialize};

use super::AnalysisError;

/// How bin edges are laid out between `min` and `max`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum BinPolicy {
    Fixed {
        min: f64,
        max: f64,
        bins: usize,
    },
    /// Edges uniform in `ln x`; `min` must be positive.
    Log {
        min: f64,
        max: f64,
        bins: usize,
    },
}

impl BinPolicy {
    pub fn edges(&self) -> Result<Vec<f64>, AnalysisError> {
        let (min, max, bins, log) = match *self {
            BinPolicy::Fixed { min, max, bins } => (min, max, bins, false),
            BinPolicy::Log { min, max, bins } => (min, max, bins, true),
        };
        if bins == 0 || !(max > min) || !min.is_finite() || !max.is_finite() || (log && min <= 0.0)
        {
            return Err(AnalysisError::InvalidBins(format!("{self:?}")));
        }
        Ok((0..=bins)
            .map(|i| {
                let t = i as f64 / bins as f64;
                if i == bins {
                    max
                } else if log {
                    (min.ln() + t * (max.ln() - min.ln())).exp()
                } else {
                    min + t * (max - min)
                }
            })
            .collect())
    }
}

/// Counts over half-open bins `[e_i, e_{i+1})`; the last bin also includes
/// its upper edge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
    pub n: u64,
    pub underflow: u64,
    pub overflow: u64,
}

impl Histogram {
    pub fn new(policy: BinPolicy) -> Result<Self, AnalysisError> {
        let edges = policy.edges()?;
        Ok(Histogram {
            counts: vec![0; edges.len() - 1],
            edges,
            n: 0,
            underflow: 0,
            overflow: 0,
        })
    }

    pub fn from_samples(policy: BinPolicy, samples: &[f64]) -> Result<Self, AnalysisError> {
        let mut h = Histogram::new(policy)?;
        for &x in samples {
            h.add(x);
        }
        Ok(h)
    }

    pub fn add(&mut self, x: f64) {
        self.n += 1;
        let last = *self.edges.last().unwrap();
        if x < self.edges[0] || x.is_nan() {
            self.underflow += 1;
        } else if x > last {
            self.overflow += 1;
        } else {
            let last_bin = self.counts.len() - 1;
            let i = self.edges.partition_point(|&e| e <= x).saturating_sub(1);
            self.counts[i.min(last_bin)] += 1;
        }
    }

    /// Combines two histograms over identical edges.
    pub fn merge(&self, other: &Histogram) -> Result<Histogram, AnalysisError> {
        if self.edges != other.edges {
            return Err(AnalysisError::InvalidBins(
                "cannot merge histograms with different edges".into(),
            ));
        }
        Ok(Histogram {
            edges: self.edges.clone(),
            counts: self
                .counts
                .iter()
                .zip(&other.counts)
                .map(|(a, b)| a + b)
                .collect(),
            n: self.n + other.n,
            underflow: self.underflow + other.underflow,
            overflow: self.overflow + other.overflow,
        })
    }

    pub fn bin_of(&self, x: f64) -> Option<usize> {
        if x < self.edges[0] || x > *self.edges.last().unwrap() {
            return None;
        }
        Some(
            self.edges
                .partition_point(|&e| e <= x)
                .saturating_sub(1)
                .min(self.counts.len() - 1),
        )
    }

    /// Midpoint of the fullest bin (first on ties).
    pub fn mode(&self) -> Option<f64> {
        let (i, &c) = self
            .counts
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(&a.0)))?;
        (c > 0).then(|| 0.5 * (self.edges[i] + self.edges[i + 1]))
    }

    /// `lo hi count` per bin, preceded by a summary comment line.
    pub fn to_text(&self) -> String {
        let mut s = format!(
            "# n {} underflow {} overflow {}\n",
            self.n, self.underflow, self.overflow
        );
        for (i, c) in self.counts.iter().enumerate() {
            writeln!(s, "{} {} {}", self.edges[i], self.edges[i + 1], c).unwrap();
        }
        s
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("lo,hi,count\n");
        for (i, c) in self.counts.iter().enumerate() {
            writeln!(s, "{},{},{}", self.edges[i], self.edges[i + 1], c).unwrap();
        }
        s
    }

    /// Bar chart with an optional overlaid density curve (per unit x).
    pub fn to_svg(&self, density: Option<&dyn Fn(f64) -> f64>) -> String {
        let (w, h, pad) = (640.0, 360.0, 30.0);
        let lo = self.edges[0];
        let hi = *self.edges.last().unwrap();
        let x = |v: f64| pad + (v - lo) / (hi - lo) * (w - 2.0 * pad);
        let total: u64 = self.counts.iter().sum();
        let dens = |i: usize| {
            if total == 0 {
                0.0
            } else {
                self.counts[i] as f64 / total as f64 / (self.edges[i + 1] - self.edges[i])
            }
        };
        let mut peak = (0..self.counts.len()).map(dens).fold(0.0, f64::max);
        let curve: Vec<(f64, f64)> = density
            .map(|f| {
                (0..=200)
                    .map(|i| {
                        let v = lo + (hi - lo) * i as f64 / 200.0;
                        (v, f(v))
                    })
                    .collect()
            })
            .unwrap_or_default();
        peak = curve
            .iter()
            .map(|p| p.1)
            .fold(peak, f64::max)
            .max(f64::MIN_POSITIVE);
        let y = |d: f64| h - pad - d / peak * (h - 2.0 * pad);

        let mut s = format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n"
        );
        for i in 0..self.counts.len() {
            let (x0, x1) = (x(self.edges[i]), x(self.edges[i + 1]));
            let top = y(dens(i));
            writeln!(
                s,
                "<rect x=\"{x0:.2}\" y=\"{top:.2}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"#8ab\"/>",
                (x1 - x0).max(0.0),
                (h - pad - top).max(0.0)
            )
            .unwrap();
        }
        if !curve.is_empty() {
            let pts: Vec<String> = curve
                .iter()
                .map(|&(v, d)| format!("{:.2},{:.2}", x(v), y(d)))
                .collect();
            writeln!(
                s,
                "<polyline fill=\"none\" stroke=\"#c33\" points=\"{}\"/>",
                pts.join(" ")
            )
            .unwrap();
        }
        writeln!(
            s,
            "<line x1=\"{pad}\" y1=\"{0}\" x2=\"{1}\" y2=\"{0}\" stroke=\"black\"/>",
            h - pad,
            w - pad
        )
        .unwrap();
        writeln!(
            s,
            "<text x=\"{pad}\" y=\"{}\" font-size=\"12\">{lo:.3}</text>",
            h - 8.0
        )
        .unwrap();
        writeln!(
            s,
            "<text x=\"{}\" y=\"{}\" font-size=\"12\">{hi:.3}</text>",
            w - pad - 30.0,
            h - 8.0
        )
        .unwrap();
        s.push_str("</svg>\n");
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixed() -> BinPolicy {
        BinPolicy::Fixed {
            min: 0.0,
            max: 4.0,
            bins: 8,
        }
    }

    #[test]
    fn conservation_of_counts() {
        let h = Histogram::from_samples(fixed(), &[-1.0, 0.0, 0.49, 0.5, 3.99, 4.0, 9.0]).unwrap();
        assert_eq!(h.counts.iter().sum::<u64>() + h.underflow + h.overflow, h.n);
        assert_eq!((h.underflow, h.overflow), (1, 1));
        assert_eq!(h.counts[0], 2);
        assert_eq!(h.counts[1], 1);
        assert_eq!(h.counts[7], 2, "upper edge lands in the last bin");
    }

    #[test]
    fn log_edges_are_geometric() {
        let e = BinPolicy::Log {
            min: 0.01,
            max: 100.0,
            bins: 4,
        }
        .edges()
        .unwrap();
        for (got, want) in e.iter().zip([0.01, 0.1, 1.0, 10.0, 100.0]) {
            assert!((got / want - 1.0).abs() < 1e-12);
        }
        assert!(BinPolicy::Log {
            min: 0.0,
            max: 1.0,
            bins: 3
        }
        .edges()
        .is_err());
    }

    #[test]
    fn merge_is_commutative_and_associative() {
        let a = Histogram::from_samples(fixed(), &[0.1, 0.2, 3.0]).unwrap();
        let b = Histogram::from_samples(fixed(), &[1.5, -3.0]).unwrap();
        let c = Histogram::from_samples(fixed(), &[2.5, 10.0, 0.1]).unwrap();
        assert_eq!(a.merge(&b).unwrap(), b.merge(&a).unwrap());
        assert_eq!(
            a.merge(&b).unwrap().merge(&c).unwrap(),
            a.merge(&b.merge(&c).unwrap()).unwrap()
        );
        let all =
            Histogram::from_samples(fixed(), &[0.1, 0.2, 3.0, 1.5, -3.0, 2.5, 10.0, 0.1]).unwrap();
        assert_eq!(a.merge(&b).unwrap().merge(&c).unwrap(), all);
    }

    #[test]
    fn mode_and_exports() {
        let h = Histogram::from_samples(fixed(), &[1.1, 1.2, 3.0]).unwrap();
        assert_eq!(h.mode(), Some(1.25));
        assert!(h.to_csv().starts_with("lo,hi,count\n0,0.5,0\n"));
        let svg = h.to_svg(Some(&|x: f64| (-x).exp()));
        assert!(svg.starts_with("<svg") && svg.contains("polyline"));
    }
}
