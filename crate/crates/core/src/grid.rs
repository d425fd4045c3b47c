//! Cell-centred radial grids and the fields that live on them.
//!
//! Integrals over R^N of radial functions reduce to
//! `omega * sum_i w_i f(r_i)`, where `w_i = int r^(N-1) dr` over cell `i`
//! and `omega` is the area of the unit sphere S^(N-1).

use std::io::{BufRead, Write};
use std::ops::{Add, Mul};
use std::sync::Arc;

use num_complex::Complex64;
use num_traits::Zero;
use statrs::function::gamma::gamma;

use crate::error::{Error, Result};

pub const MIN_NODES: usize = 16;

#[derive(Debug, Clone)]
pub struct RadialGrid {
    dim: usize,
    r_max: f64,
    h: f64,
    nodes: Vec<f64>,
    weights: Vec<f64>,
    omega: f64,
}

/// Area of the unit sphere in R^N, `2 pi^(N/2) / Gamma(N/2)`.
pub fn sphere_area(dim: usize) -> f64 {
    let half = dim as f64 / 2.0;
    2.0 * std::f64::consts::PI.powf(half) / gamma(half)
}

/// `int_a^b r^(N-1) dr` as `(b - a)/N sum_k b^k a^(N-1-k)`, free of the
/// cancellation in `(b^N - a^N)/N`.
fn cell_volume(dim: usize, a: f64, b: f64) -> f64 {
    let mut sum = 0.0;
    let mut bk = 1.0;
    for k in 0..dim {
        sum += bk * a.powi((dim - 1 - k) as i32);
        bk *= b;
    }
    (b - a) * sum / dim as f64
}

impl RadialGrid {
    pub fn new(dim: usize, r_max: f64, n: usize) -> Result<Self> {
        if dim < 1 {
            return Err(Error::InvalidParameter("dimension must be >= 1".into()));
        }
        if !(r_max > 0.0 && r_max.is_finite()) {
            return Err(Error::InvalidParameter(format!("r_max must be positive, got {r_max}")));
        }
        if n < MIN_NODES {
            return Err(Error::InvalidParameter(format!(
                "need at least {MIN_NODES} nodes, got {n}"
            )));
        }
        let h = r_max / n as f64;
        let nodes: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) * h).collect();
        let weights = (0..n).map(|i| cell_volume(dim, i as f64 * h, (i as f64 + 1.0) * h)).collect();
        Ok(Self { dim, r_max, h, nodes, weights, omega: sphere_area(dim) })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn r_max(&self) -> f64 {
        self.r_max
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn spacing(&self) -> f64 {
        self.h
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn omega(&self) -> f64 {
        self.omega
    }

    /// Position of the face between node `i` and node `i + 1`.
    pub fn face(&self, i: usize) -> f64 {
        (i as f64 + 1.0) * self.h
    }

    /// Same dimension, radius and resolution.
    pub fn same_as(&self, other: &RadialGrid) -> bool {
        self.dim == other.dim && self.nodes.len() == other.nodes.len() && self.r_max == other.r_max
    }

    fn check_len(&self, got: usize) -> Result<()> {
        if got != self.len() {
            return Err(Error::LengthMismatch { expected: self.len(), got });
        }
        Ok(())
    }

    /// `int_{R^N} f dx` for radial samples `f`.
    pub fn integrate<T>(&self, f: &[T]) -> Result<T>
    where
        T: Copy + Zero + Add<Output = T> + Mul<f64, Output = T>,
    {
        self.check_len(f.len())?;
        let sum = f
            .iter()
            .zip(&self.weights)
            .fold(T::zero(), |acc, (&fi, &w)| acc + fi * w);
        Ok(sum * self.omega)
    }

    /// Integral restricted to nodes with `r > r0`.
    pub fn integrate_outside(&self, f: &[f64], r0: f64) -> Result<f64> {
        self.check_len(f.len())?;
        let sum: f64 = f
            .iter()
            .zip(&self.weights)
            .zip(&self.nodes)
            .filter(|(_, &r)| r > r0)
            .map(|((fi, w), _)| fi * w)
            .sum();
        Ok(sum * self.omega)
    }

    pub fn sample<F: Fn(f64) -> f64>(&self, f: F) -> Vec<f64> {
        self.nodes.iter().map(|&r| f(r)).collect()
    }
}

impl PartialEq for RadialGrid {
    fn eq(&self, other: &Self) -> bool {
        self.same_as(other)
    }
}

/// Complex radial profile `u(t, r)` sampled at the grid nodes.
#[derive(Debug, Clone)]
pub struct Field {
    grid: Arc<RadialGrid>,
    values: Vec<Complex64>,
    pub t: f64,
}

impl Field {
    pub fn new(grid: Arc<RadialGrid>, values: Vec<Complex64>, t: f64) -> Result<Self> {
        grid.check_len(values.len())?;
        Ok(Self { grid, values, t })
    }

    pub fn zeros(grid: Arc<RadialGrid>) -> Self {
        let n = grid.len();
        Self { grid, values: vec![Complex64::zero(); n], t: 0.0 }
    }

    pub fn from_real(grid: Arc<RadialGrid>, values: &[f64]) -> Result<Self> {
        let values = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        Self::new(grid, values, 0.0)
    }

    pub fn from_fn<F: Fn(f64) -> Complex64>(grid: Arc<RadialGrid>, f: F) -> Self {
        let values = grid.nodes().iter().map(|&r| f(r)).collect();
        Self { grid, values, t: 0.0 }
    }

    pub fn grid(&self) -> &Arc<RadialGrid> {
        &self.grid
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Complex64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<Complex64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn with_values(&self, values: Vec<Complex64>) -> Self {
        debug_assert_eq!(values.len(), self.values.len());
        Self { grid: self.grid.clone(), values, t: self.t }
    }

    pub fn scaled(&self, c: Complex64) -> Self {
        self.with_values(self.values.iter().map(|&v| v * c).collect())
    }

    pub fn real_parts(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.re).collect()
    }

    pub fn abs_sq(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.norm_sqr()).collect()
    }

    /// A field with a NaN or infinite entry has collapsed.
    pub fn is_collapsed(&self) -> bool {
        self.values.iter().any(|v| !v.re.is_finite() || !v.im.is_finite())
    }

    pub fn check_same_grid(&self, other: &Field) -> Result<()> {
        if Arc::ptr_eq(&self.grid, &other.grid) || self.grid.same_as(&other.grid) {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// Writes `N,t,r_max,n` metadata followed by `r,re_u,im_u` rows.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let g = &self.grid;
        writeln!(out, "N,t,r_max,n")?;
        writeln!(out, "{},{},{},{}", g.dim, fmt_f64(self.t), fmt_f64(g.r_max), g.len())?;
        writeln!(out, "r,re_u,im_u")?;
        for (r, v) in g.nodes.iter().zip(&self.values) {
            writeln!(out, "{},{},{}", fmt_f64(*r), fmt_f64(v.re), fmt_f64(v.im))?;
        }
        Ok(())
    }

    /// Reads a field written by [`Field::write_csv`], rebuilding its grid.
    pub fn read_csv<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input.lines();
        let mut next = |what: &str| -> Result<String> {
            lines
                .next()
                .ok_or_else(|| Error::Parse(format!("missing {what}")))?
                .map_err(Error::from)
        };
        if next("metadata header")?.trim() != "N,t,r_max,n" {
            return Err(Error::Parse("bad metadata header".into()));
        }
        let meta = next("metadata row")?;
        let parts: Vec<&str> = meta.trim().split(',').collect();
        if parts.len() != 4 {
            return Err(Error::Parse(format!("bad metadata row '{meta}'")));
        }
        let dim: usize = parse_num(parts[0])?;
        let t: f64 = parse_num(parts[1])?;
        let r_max: f64 = parse_num(parts[2])?;
        let n: usize = parse_num(parts[3])?;
        if next("column header")?.trim() != "r,re_u,im_u" {
            return Err(Error::Parse("bad column header".into()));
        }
        let grid = Arc::new(RadialGrid::new(dim, r_max, n)?);
        let mut values = Vec::with_capacity(n);
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.trim().split(',').collect();
            if cols.len() != 3 {
                return Err(Error::Parse(format!("bad data row '{line}'")));
            }
            values.push(Complex64::new(parse_num(cols[1])?, parse_num(cols[2])?));
        }
        Self::new(grid, values, t)
    }
}

/// Fixed 17-significant-digit formatting used by every data file.
pub fn fmt_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else if x.is_nan() {
        "nan".into()
    } else if x > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

pub(crate) fn parse_num<T: std::str::FromStr>(s: &str) -> Result<T> {
    s.trim().parse().map_err(|_| Error::Parse(format!("bad number '{s}'")))
}

/// `int |u|^q dx` raised to `1/q`.
pub fn lp_norm(u: &Field, q: f64) -> Result<f64> {
    if !(q >= 1.0) {
        return Err(Error::InvalidParameter(format!("L^q norm needs q >= 1, got {q}")));
    }
    if q.is_infinite() {
        return Ok(u.max_abs());
    }
    let pow: Vec<f64> = u.values.iter().map(|v| v.norm().powf(q)).collect();
    Ok(u.grid.integrate(&pow)?.powf(1.0 / q))
}

/// `int |u|^q dx` without the root.
pub fn lp_norm_pow(u: &Field, q: f64) -> Result<f64> {
    let pow: Vec<f64> = u.values.iter().map(|v| v.norm().powf(q)).collect();
    u.grid.integrate(&pow)
}

/// `<u, v> = int conj(u) v dx`.
pub fn weighted_inner(u: &Field, v: &Field) -> Result<Complex64> {
    u.check_same_grid(v)?;
    let prod: Vec<Complex64> = u.values.iter().zip(&v.values).map(|(a, b)| a.conj() * b).collect();
    u.grid.integrate(&prod)
}

pub fn mass(u: &Field) -> f64 {
    u.grid.integrate(&u.abs_sq()).expect("field length matches its grid")
}
