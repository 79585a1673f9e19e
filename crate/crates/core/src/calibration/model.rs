use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};

use super::{FeatureVector, HIDDEN_UNITS, OUTPUTS};
use crate::domain::Technology;
use crate::error::{Error, Result};
use crate::geometry::Point2;

/// Per-column affine map of `[min, max]` onto `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Normalizer {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl Normalizer {
    /// Fits on the rows of `data`. A constant column gets the range
    /// `[v - 1, v + 1]` so that it maps to zero instead of dividing by zero.
    pub fn fit(data: &DMatrix<f64>) -> Self {
        let (mut min, mut max) = (Vec::new(), Vec::new());
        for c in data.column_iter() {
            let lo = c.min();
            let hi = c.max();
            if hi - lo > 1e-12 * lo.abs().max(hi.abs()).max(1.0) {
                min.push(lo);
                max.push(hi);
            } else {
                min.push(lo - 1.0);
                max.push(lo + 1.0);
            }
        }
        Self { min, max }
    }

    pub fn dim(&self) -> usize {
        self.min.len()
    }

    pub fn apply(&self, i: usize, v: f64) -> f64 {
        2.0 * (v - self.min[i]) / (self.max[i] - self.min[i]) - 1.0
    }

    pub fn invert(&self, i: usize, v: f64) -> f64 {
        self.min[i] + 0.5 * (v + 1.0) * (self.max[i] - self.min[i])
    }

    pub fn apply_rows(&self, data: &DMatrix<f64>) -> DMatrix<f64> {
        DMatrix::from_fn(data.nrows(), data.ncols(), |r, c| self.apply(c, data[(r, c)]))
    }

    fn validate(&self) -> Result<()> {
        let ok = self.min.len() == self.max.len()
            && self.min.iter().zip(&self.max).all(|(a, b)| a.is_finite() && b.is_finite() && b > a);
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidInput("normalization range is degenerate".into()))
        }
    }
}

/// A trained calibration network.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibModel {
    pub technology: Technology,
    /// `HIDDEN_UNITS × d`.
    pub w1: DMatrix<f64>,
    pub b1: DVector<f64>,
    /// `OUTPUTS × HIDDEN_UNITS`.
    pub w2: DMatrix<f64>,
    pub b2: DVector<f64>,
    pub input: Normalizer,
    pub output: Normalizer,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl CalibModel {
    /// All weights zero.
    pub fn zeros(technology: Technology, input: Normalizer, output: Normalizer) -> Self {
        let d = technology.feature_dim();
        Self {
            technology,
            w1: DMatrix::zeros(HIDDEN_UNITS, d),
            b1: DVector::zeros(HIDDEN_UNITS),
            w2: DMatrix::zeros(OUTPUTS, HIDDEN_UNITS),
            b2: DVector::zeros(OUTPUTS),
            input,
            output,
            alpha: 0.0,
            beta: 0.0,
            gamma: 0.0,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w1.ncols()
    }

    /// Number of weights and biases.
    pub fn num_params(&self) -> usize {
        param_count(self.input_dim())
    }

    /// Network output before the output de-normalization.
    pub fn forward_normalized(&self, f: &FeatureVector) -> Result<[f64; OUTPUTS]> {
        if f.len() != self.input_dim() || f.technology != self.technology {
            return Err(Error::DimensionMismatch { expected: self.input_dim(), got: f.len() });
        }
        let x = DVector::from_iterator(f.len(), f.values.iter().enumerate().map(|(i, v)| self.input.apply(i, *v)));
        let h = (&self.w1 * x + &self.b1).map(super::network::tanh);
        let y = &self.w2 * h + &self.b2;
        Ok([y[0], y[1]])
    }

    pub fn forward(&self, f: &FeatureVector) -> Result<Point2> {
        let y = self.forward_normalized(f)?;
        Ok(Point2::new(self.output.invert(0, y[0]), self.output.invert(1, y[1])))
    }

    /// Flat parameter vector: for each hidden unit its input weights then
    /// its bias, followed by each output's hidden weights then its bias.
    pub fn params(&self) -> DVector<f64> {
        let d = self.input_dim();
        let mut p = DVector::zeros(self.num_params());
        for j in 0..HIDDEN_UNITS {
            for i in 0..d {
                p[j * (d + 1) + i] = self.w1[(j, i)];
            }
            p[j * (d + 1) + d] = self.b1[j];
        }
        let off = HIDDEN_UNITS * (d + 1);
        for o in 0..OUTPUTS {
            for k in 0..HIDDEN_UNITS {
                p[off + o * (HIDDEN_UNITS + 1) + k] = self.w2[(o, k)];
            }
            p[off + o * (HIDDEN_UNITS + 1) + HIDDEN_UNITS] = self.b2[o];
        }
        p
    }

    pub fn set_params(&mut self, p: &DVector<f64>) {
        let d = self.input_dim();
        assert_eq!(p.len(), self.num_params());
        for j in 0..HIDDEN_UNITS {
            for i in 0..d {
                self.w1[(j, i)] = p[j * (d + 1) + i];
            }
            self.b1[j] = p[j * (d + 1) + d];
        }
        let off = HIDDEN_UNITS * (d + 1);
        for o in 0..OUTPUTS {
            for k in 0..HIDDEN_UNITS {
                self.w2[(o, k)] = p[off + o * (HIDDEN_UNITS + 1) + k];
            }
            self.b2[o] = p[off + o * (HIDDEN_UNITS + 1) + HIDDEN_UNITS];
        }
    }

    /// Plain-text serialization; every number carries 17 significant
    /// digits so that [`CalibModel::from_text`] restores it bit for bit.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let row = |s: &mut String, key: &str, vals: &mut dyn Iterator<Item = f64>| {
            s.push_str(key);
            for v in vals {
                write!(s, " {v:.16e}").unwrap();
            }
            s.push('\n');
        };
        writeln!(s, "icon-model 1").unwrap();
        writeln!(s, "technology {}", self.technology).unwrap();
        writeln!(s, "dims {} {} {}", self.input_dim(), HIDDEN_UNITS, OUTPUTS).unwrap();
        row(&mut s, "alpha", &mut std::iter::once(self.alpha));
        row(&mut s, "beta", &mut std::iter::once(self.beta));
        row(&mut s, "gamma", &mut std::iter::once(self.gamma));
        row(&mut s, "input_min", &mut self.input.min.iter().copied());
        row(&mut s, "input_max", &mut self.input.max.iter().copied());
        row(&mut s, "output_min", &mut self.output.min.iter().copied());
        row(&mut s, "output_max", &mut self.output.max.iter().copied());
        for r in self.w1.row_iter() {
            row(&mut s, "w1", &mut r.iter().copied());
        }
        row(&mut s, "b1", &mut self.b1.iter().copied());
        for r in self.w2.row_iter() {
            row(&mut s, "w2", &mut r.iter().copied());
        }
        row(&mut s, "b2", &mut self.b2.iter().copied());
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let mut next = |key: &str, count: Option<usize>| -> Result<(usize, Vec<String>)> {
            let (n, line) = lines.next().ok_or(Error::Parse { line: 0, msg: format!("missing `{key}`") })?;
            let mut parts = line.split_whitespace();
            if parts.next() != Some(key) {
                return Err(Error::Parse { line: n + 1, msg: format!("expected `{key}`") });
            }
            let rest: Vec<String> = parts.map(str::to_owned).collect();
            if let Some(c) = count {
                if rest.len() != c {
                    return Err(Error::Parse { line: n + 1, msg: format!("`{key}` needs {c} values, found {}", rest.len()) });
                }
            }
            Ok((n + 1, rest))
        };
        let floats = |(n, v): (usize, Vec<String>)| -> Result<Vec<f64>> {
            v.iter()
                .map(|s| s.parse::<f64>().map_err(|e| Error::Parse { line: n, msg: format!("`{s}`: {e}") }))
                .collect()
        };

        let (n, v) = next("icon-model", Some(1))?;
        if v[0] != "1" {
            return Err(Error::Parse { line: n, msg: format!("unsupported model version {}", v[0]) });
        }
        let (n, v) = next("technology", Some(1))?;
        let technology: Technology = v[0].parse().map_err(|_| Error::Parse { line: n, msg: format!("technology `{}`", v[0]) })?;
        let (n, v) = next("dims", Some(3))?;
        let dims: Vec<usize> = v
            .iter()
            .map(|s| s.parse().map_err(|_| Error::Parse { line: n, msg: format!("dimension `{s}`") }))
            .collect::<Result<_>>()?;
        let d = technology.feature_dim();
        if dims != [d, HIDDEN_UNITS, OUTPUTS] {
            return Err(Error::Parse { line: n, msg: format!("dims {dims:?} do not fit a {technology} model") });
        }
        let alpha = floats(next("alpha", Some(1))?)?[0];
        let beta = floats(next("beta", Some(1))?)?[0];
        let gamma = floats(next("gamma", Some(1))?)?[0];
        let input = Normalizer { min: floats(next("input_min", Some(d))?)?, max: floats(next("input_max", Some(d))?)? };
        let output = Normalizer {
            min: floats(next("output_min", Some(OUTPUTS))?)?,
            max: floats(next("output_max", Some(OUTPUTS))?)?,
        };
        input.validate()?;
        output.validate()?;
        let mut w1 = DMatrix::zeros(HIDDEN_UNITS, d);
        for j in 0..HIDDEN_UNITS {
            let r = floats(next("w1", Some(d))?)?;
            w1.row_mut(j).iter_mut().zip(r).for_each(|(a, b)| *a = b);
        }
        let b1 = DVector::from_vec(floats(next("b1", Some(HIDDEN_UNITS))?)?);
        let mut w2 = DMatrix::zeros(OUTPUTS, HIDDEN_UNITS);
        for o in 0..OUTPUTS {
            let r = floats(next("w2", Some(HIDDEN_UNITS))?)?;
            w2.row_mut(o).iter_mut().zip(r).for_each(|(a, b)| *a = b);
        }
        let b2 = DVector::from_vec(floats(next("b2", Some(OUTPUTS))?)?);
        Ok(Self { technology, w1, b1, w2, b2, input, output, alpha, beta, gamma })
    }
}

/// Weights and biases of a network with `d` inputs.
pub fn param_count(d: usize) -> usize {
    HIDDEN_UNITS * (d + 1) + OUTPUTS * (HIDDEN_UNITS + 1)
}
