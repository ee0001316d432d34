//! Radial discretization of functions on ℝ^N.
//!
//! A [`RadialGrid`] stores the node sequence `0 = r_0 < … < r_M = R_max`
//! together with volume quadrature weights that already contain the surface
//! factor `ω_N r^{N-1}`, so that `Σ_i W_i v_i ≈ ∫_{B_{R_max}} v(|x|) dx`.
//!
//! The weights come from a product rule: on each panel the integrand `v` is
//! replaced by its Lagrange interpolant (quadratic on two-cell panels, linear
//! on the first cell and on a trailing odd cell) and the moments of
//! `r^{N-1}` against the interpolation basis are computed exactly. The rule
//! is therefore exact for constants and for `v(r) = r` on any node sequence,
//! fourth order for smooth `v`, and covariant under dilations of the grid.
//!
//! The Dirichlet form `∫|u'|²` is the P1 (cellwise linear) form: on every cell
//! the derivative is the centred difference at the cell midpoint and the
//! radial weight is integrated exactly.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::io::{BufRead, Write};
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};

/// Surface area of the unit sphere in ℝ^N, `2π^{N/2}/Γ(N/2)`.
pub fn sphere_area(dim: usize) -> f64 {
    2.0 * PI.powf(dim as f64 / 2.0) / statrs::function::gamma::gamma(dim as f64 / 2.0)
}

/// Node placement for [`RadialGrid::new`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Grading {
    Uniform,
    /// Power map `r = R_max ξ^p` of a uniform parameter `ξ ∈ [0, 1]`.
    Graded(f64),
}

impl std::str::FromStr for Grading {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("uniform") {
            return Ok(Grading::Uniform);
        }
        let inner = s
            .strip_prefix("graded(")
            .and_then(|x| x.strip_suffix(')'))
            .or_else(|| s.strip_prefix("graded:"))
            .ok_or_else(|| Error::Parse(format!("unknown grading '{s}'")))?;
        let p: f64 = inner
            .parse()
            .map_err(|_| Error::Parse(format!("bad grading strength '{inner}'")))?;
        Ok(Grading::Graded(p))
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RadialGrid {
    dim: usize,
    r_max: f64,
    nodes: Vec<f64>,
    /// Volume weights `W_i`, including `ω_N r^{N-1}`.
    weights: Vec<f64>,
    /// Cell coefficients `ω_N ∫_{cell} r^{N-1} dr / h²` of the Dirichlet form.
    stiffness: Vec<f64>,
    omega: f64,
}

impl RadialGrid {
    /// Builds a grid with `cells` cells on `[0, r_max]`.
    pub fn new(dim: usize, r_max: f64, cells: usize, grading: Grading) -> Result<Self> {
        if dim < 3 {
            return Err(param(format!("dimension N = {dim} must be at least 3")));
        }
        if !(r_max > 0.0 && r_max.is_finite()) {
            return Err(param(format!("R_max = {r_max} must be positive and finite")));
        }
        if cells < 64 {
            return Err(param(format!("M = {cells} cells is below the minimum of 64")));
        }
        let p = match grading {
            Grading::Uniform => 1.0,
            Grading::Graded(p) if p >= 1.0 && p.is_finite() => p,
            Grading::Graded(p) => {
                return Err(param(format!("grading strength {p} must be >= 1")));
            }
        };
        let nodes = (0..=cells)
            .map(|i| {
                if i == cells {
                    r_max
                } else {
                    let xi = i as f64 / cells as f64;
                    if p == 1.0 {
                        r_max * xi
                    } else {
                        r_max * xi.powf(p)
                    }
                }
            })
            .collect();
        Self::from_nodes(dim, nodes)
    }

    /// Builds a grid on an explicit node sequence (first node 0, strictly increasing).
    pub fn from_nodes(dim: usize, nodes: Vec<f64>) -> Result<Self> {
        if dim < 3 {
            return Err(param(format!("dimension N = {dim} must be at least 3")));
        }
        if nodes.len() < 3 {
            return Err(param("a grid needs at least two cells"));
        }
        if nodes[0] != 0.0 {
            return Err(param(format!("first node must be 0, got {}", nodes[0])));
        }
        for w in nodes.windows(2) {
            if !(w[1] > w[0]) || !w[1].is_finite() {
                return Err(param(format!(
                    "nodes must be strictly increasing and finite ({} then {})",
                    w[0], w[1]
                )));
            }
        }
        let omega = sphere_area(dim);
        let weights = product_weights(dim, &nodes)
            .into_iter()
            .map(|w| omega * w)
            .collect();
        let stiffness = nodes
            .windows(2)
            .map(|w| {
                let h = w[1] - w[0];
                omega * shell_moment(dim, w[0], w[1]) / (h * h)
            })
            .collect();
        Ok(RadialGrid {
            dim,
            r_max: *nodes.last().unwrap(),
            nodes,
            weights,
            stiffness,
            omega,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn r_max(&self) -> f64 {
        self.r_max
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub(crate) fn stiffness(&self) -> &[f64] {
        &self.stiffness
    }

    pub fn omega(&self) -> f64 {
        self.omega
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Number of cells `M`.
    pub fn cells(&self) -> usize {
        self.nodes.len() - 1
    }

    /// `ω_N R_max^N / N`.
    pub fn ball_volume(&self) -> f64 {
        self.omega * self.r_max.powi(self.dim as i32) / self.dim as f64
    }

    /// Grid with every node multiplied by `s`. Weights are recomputed, so the
    /// result equals the exact dilation of the quadrature rule.
    pub fn scaled(&self, s: f64) -> Result<Self> {
        if !(s > 0.0 && s.is_finite()) {
            return Err(param(format!("grid scale {s} must be positive")));
        }
        Self::from_nodes(self.dim, self.nodes.iter().map(|r| r * s).collect())
    }

    /// Largest cell width among the cells that start inside `[0, r]`.
    pub fn max_spacing_below(&self, r: f64) -> f64 {
        self.nodes
            .windows(2)
            .take_while(|w| w[0] < r)
            .map(|w| w[1] - w[0])
            .fold(0.0, f64::max)
    }

    /// `Σ W_i v_i`, the integral over the ball `B_{R_max}`.
    pub fn integrate(&self, v: &[f64]) -> Result<f64> {
        if v.len() != self.nodes.len() {
            return Err(Error::Shape {
                expected: self.nodes.len(),
                got: v.len(),
            });
        }
        Ok(self.weights.iter().zip(v).map(|(w, x)| w * x).sum())
    }

    pub fn integrate_fn(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.weights
            .iter()
            .zip(&self.nodes)
            .map(|(w, &r)| w * f(r))
            .sum()
    }
}

/// `∫_a^b r^{N-1} dr`, evaluated without cancellation.
fn shell_moment(dim: usize, a: f64, b: f64) -> f64 {
    // (b^N - a^N)/N = (b - a) Σ_j b^j a^{N-1-j} / N
    let mut s = 0.0;
    for j in 0..dim {
        s += b.powi(j as i32) * a.powi((dim - 1 - j) as i32);
    }
    (b - a) * s / dim as f64
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// `∫_{lo}^{hi} x^m dx`.
fn power_moment(m: usize, lo: f64, hi: f64) -> f64 {
    let e = (m + 1) as i32;
    (hi.powi(e) - lo.powi(e)) / (m + 1) as f64
}

/// `∫_{lo}^{hi} (c + x)^{N-1} p(x) dx` for a polynomial `p` given by its
/// monomial coefficients.
fn shifted_moment(dim: usize, c: f64, lo: f64, hi: f64, poly: &[f64]) -> f64 {
    let mut total = 0.0;
    for j in 0..dim {
        let coef = binomial(dim - 1, j) * c.powi((dim - 1 - j) as i32);
        if coef == 0.0 {
            continue;
        }
        let mut inner = 0.0;
        for (k, pk) in poly.iter().enumerate() {
            if *pk != 0.0 {
                inner += pk * power_moment(j + k, lo, hi);
            }
        }
        total += coef * inner;
    }
    total
}

fn linear_cell(dim: usize, a: f64, b: f64) -> [f64; 2] {
    let h = b - a;
    // x = r - a on [0, h]; basis (h - x)/h and x/h
    let left = shifted_moment(dim, a, 0.0, h, &[1.0, -1.0 / h]);
    let right = shifted_moment(dim, a, 0.0, h, &[0.0, 1.0 / h]);
    [left, right]
}

fn quadratic_panel(dim: usize, a: f64, b: f64, c: f64) -> [f64; 3] {
    let h1 = b - a;
    let h2 = c - b;
    // x = r - b on [-h1, h2]
    let la = [0.0, -h2 / (h1 * (h1 + h2)), 1.0 / (h1 * (h1 + h2))];
    let lb = [1.0, (h2 - h1) / (h1 * h2), -1.0 / (h1 * h2)];
    let lc = [0.0, h1 / (h2 * (h1 + h2)), 1.0 / (h2 * (h1 + h2))];
    [
        shifted_moment(dim, b, -h1, h2, &la),
        shifted_moment(dim, b, -h1, h2, &lb),
        shifted_moment(dim, b, -h1, h2, &lc),
    ]
}

/// Product-rule weights (without the `ω_N` factor).
fn product_weights(dim: usize, nodes: &[f64]) -> Vec<f64> {
    let m = nodes.len() - 1;
    let mut w = vec![0.0; nodes.len()];
    let lin = linear_cell(dim, nodes[0], nodes[1]);
    w[0] += lin[0];
    w[1] += lin[1];
    let mut i = 1;
    while i + 2 <= m {
        let q = quadratic_panel(dim, nodes[i], nodes[i + 1], nodes[i + 2]);
        if q.iter().all(|x| *x >= 0.0) {
            w[i] += q[0];
            w[i + 1] += q[1];
            w[i + 2] += q[2];
        } else {
            // strongly uneven panel: fall back to the positive linear rule
            for k in i..i + 2 {
                let l = linear_cell(dim, nodes[k], nodes[k + 1]);
                w[k] += l[0];
                w[k + 1] += l[1];
            }
        }
        i += 2;
    }
    if i < m {
        let l = linear_cell(dim, nodes[i], nodes[i + 1]);
        w[i] += l[0];
        w[i + 1] += l[1];
    }
    w
}

/// A radial profile `u(|x|)` sampled at the nodes of a grid.
#[derive(Clone, Debug)]
pub struct RadialFunction {
    grid: Arc<RadialGrid>,
    values: Vec<f64>,
}

impl RadialFunction {
    pub fn new(grid: Arc<RadialGrid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Shape {
                expected: grid.len(),
                got: values.len(),
            });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(param(format!(
                "non-finite value {} at node {} (r = {})",
                values[i],
                i,
                grid.nodes()[i]
            )));
        }
        Ok(RadialFunction { grid, values })
    }

    pub fn from_fn(grid: Arc<RadialGrid>, f: impl Fn(f64) -> f64) -> Result<Self> {
        let values = grid.nodes().iter().map(|&r| f(r)).collect();
        Self::new(grid, values)
    }

    pub fn zeros(grid: Arc<RadialGrid>) -> Self {
        let n = grid.len();
        RadialFunction {
            grid,
            values: vec![0.0; n],
        }
    }

    pub fn grid(&self) -> &Arc<RadialGrid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn dim(&self) -> usize {
        self.grid.dim()
    }

    /// `‖u‖_s^s`.
    pub fn lp_pow(&self, s: f64) -> Result<f64> {
        if !(s >= 1.0) {
            return Err(param(format!("Lebesgue exponent s = {s} must be >= 1")));
        }
        Ok(lp_pow_raw(self.grid.weights(), &self.values, s))
    }

    /// `‖u‖_s`.
    pub fn lp_norm(&self, s: f64) -> Result<f64> {
        Ok(self.lp_pow(s)?.powf(1.0 / s))
    }

    /// `‖u‖_2^2`.
    pub fn mass(&self) -> f64 {
        lp_pow_raw(self.grid.weights(), &self.values, 2.0)
    }

    /// `‖∇u‖_2^2`.
    pub fn grad_norm_sq(&self) -> f64 {
        dirichlet(self.grid.stiffness(), &self.values)
    }

    /// Nodal derivative by central differences, one-sided at the endpoints.
    pub fn derivative(&self) -> Vec<f64> {
        let r = self.grid.nodes();
        let u = &self.values;
        let n = u.len();
        let mut d = vec![0.0; n];
        d[0] = (u[1] - u[0]) / (r[1] - r[0]);
        d[n - 1] = (u[n - 1] - u[n - 2]) / (r[n - 1] - r[n - 2]);
        for i in 1..n - 1 {
            // second-order on non-uniform nodes
            let h0 = r[i] - r[i - 1];
            let h1 = r[i + 1] - r[i];
            d[i] = (h0 * h0 * u[i + 1] - h1 * h1 * u[i - 1] + (h1 * h1 - h0 * h0) * u[i])
                / (h0 * h1 * (h0 + h1));
        }
        d
    }

    /// Monotone piecewise-cubic interpolant at `r`; zero beyond `R_max`.
    pub fn eval(&self, r: f64) -> f64 {
        self.interpolator().eval(r)
    }

    pub fn interpolator(&self) -> MonotoneCubic<'_> {
        MonotoneCubic::new(self.grid.nodes(), &self.values)
    }

    /// Values of the same profile on another grid.
    pub fn resample(&self, grid: Arc<RadialGrid>) -> Result<Self> {
        if grid.dim() != self.dim() {
            return Err(param("cannot resample across dimensions"));
        }
        let it = self.interpolator();
        let values = grid.nodes().iter().map(|&r| it.eval(r)).collect();
        Self::new(grid, values)
    }

    /// Exact mass-preserving dilation `t^{N/2} u(t·)`, carried by the grid
    /// scaled by `1/t`; no interpolation is involved.
    pub fn dilate(&self, t: f64) -> Result<Self> {
        if !(t > 0.0 && t.is_finite()) {
            return Err(param(format!("dilation factor t = {t} must be positive")));
        }
        let grid = Arc::new(self.grid.scaled(1.0 / t)?);
        let amp = t.powf(self.dim() as f64 / 2.0);
        Self::new(grid, self.values.iter().map(|v| amp * v).collect())
    }

    pub fn scale(&self, k: f64) -> Self {
        RadialFunction {
            grid: self.grid.clone(),
            values: self.values.iter().map(|v| k * v).collect(),
        }
    }

    /// Writes the two-column CSV with its `# N=… R_max=… M=…` header.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(
            w,
            "# N={} R_max={} M={}",
            self.dim(),
            self.grid.r_max(),
            self.grid.cells()
        )?;
        for (r, v) in self.grid.nodes().iter().zip(&self.values) {
            writeln!(w, "{r},{v}")?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "# N={} R_max={} M={}",
            self.dim(),
            self.grid.r_max(),
            self.grid.cells()
        );
        for (r, v) in self.grid.nodes().iter().zip(&self.values) {
            let _ = writeln!(s, "{r},{v}");
        }
        s
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(f))
    }

    pub fn read_csv<R: BufRead>(reader: R) -> Result<Self> {
        let mut lines = reader.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Parse("empty profile file".into()))??;
        let header = header
            .trim()
            .strip_prefix('#')
            .ok_or_else(|| Error::Parse("missing '# N=… R_max=… M=…' header".into()))?;
        let mut dim = None;
        let mut cells = None;
        for tok in header.split_whitespace() {
            if let Some(v) = tok.strip_prefix("N=") {
                dim = v.parse::<usize>().ok();
            } else if let Some(v) = tok.strip_prefix("M=") {
                cells = v.parse::<usize>().ok();
            }
        }
        let dim = dim.ok_or_else(|| Error::Parse("header lacks N=<dim>".into()))?;
        let mut nodes = Vec::new();
        let mut values = Vec::new();
        for (k, line) in lines.enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut it = line.split(',');
            let parse = |s: Option<&str>| -> Result<f64> {
                s.map(str::trim)
                    .ok_or_else(|| Error::Parse(format!("line {}: expected two columns", k + 2)))?
                    .parse::<f64>()
                    .map_err(|e| Error::Parse(format!("line {}: {e}", k + 2)))
            };
            nodes.push(parse(it.next())?);
            values.push(parse(it.next())?);
        }
        if let Some(m) = cells {
            if m + 1 != nodes.len() {
                return Err(Error::Parse(format!(
                    "header declares M={m} cells but file has {} rows",
                    nodes.len()
                )));
            }
        }
        let grid = Arc::new(RadialGrid::from_nodes(dim, nodes)?);
        Self::new(grid, values)
    }

    pub fn load_csv(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path)?;
        Self::read_csv(std::io::BufReader::new(f))
    }
}

pub(crate) fn lp_pow_raw(weights: &[f64], values: &[f64], s: f64) -> f64 {
    if s == 2.0 {
        weights.iter().zip(values).map(|(w, v)| w * v * v).sum()
    } else {
        weights
            .iter()
            .zip(values)
            .map(|(w, v)| w * v.abs().powf(s))
            .sum()
    }
}

pub(crate) fn dirichlet(stiffness: &[f64], values: &[f64]) -> f64 {
    stiffness
        .iter()
        .zip(values.windows(2))
        .map(|(k, w)| {
            let d = w[1] - w[0];
            k * d * d
        })
        .sum()
}

/// `A u`, where `uᵀ A u` is the Dirichlet form.
pub(crate) fn stiffness_apply(stiffness: &[f64], values: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; values.len()];
    for (i, k) in stiffness.iter().enumerate() {
        let d = k * (values[i + 1] - values[i]);
        out[i] -= d;
        out[i + 1] += d;
    }
    out
}

/// Fritsch–Carlson monotone cubic Hermite interpolation.
pub struct MonotoneCubic<'a> {
    x: &'a [f64],
    y: &'a [f64],
    slopes: Vec<f64>,
}

impl<'a> MonotoneCubic<'a> {
    pub fn new(x: &'a [f64], y: &'a [f64]) -> Self {
        let n = x.len();
        let delta: Vec<f64> = (0..n - 1)
            .map(|i| (y[i + 1] - y[i]) / (x[i + 1] - x[i]))
            .collect();
        let mut m = vec![0.0; n];
        m[0] = delta[0];
        m[n - 1] = delta[n - 2];
        for i in 1..n - 1 {
            if delta[i - 1] * delta[i] <= 0.0 {
                m[i] = 0.0;
            } else {
                // weighted harmonic mean keeps the interpolant monotone
                let h0 = x[i] - x[i - 1];
                let h1 = x[i + 1] - x[i];
                let w1 = 2.0 * h1 + h0;
                let w2 = h1 + 2.0 * h0;
                m[i] = (w1 + w2) / (w1 / delta[i - 1] + w2 / delta[i]);
            }
        }
        MonotoneCubic { x, y, slopes: m }
    }

    pub fn eval(&self, r: f64) -> f64 {
        let x = self.x;
        let n = x.len();
        if r > x[n - 1] || r.is_nan() {
            return 0.0;
        }
        if r <= x[0] {
            return self.y[0];
        }
        let i = match x.binary_search_by(|p| p.partial_cmp(&r).unwrap()) {
            Ok(i) => return self.y[i],
            Err(i) => i - 1,
        };
        let h = x[i + 1] - x[i];
        let s = (r - x[i]) / h;
        let h00 = (1.0 + 2.0 * s) * (1.0 - s) * (1.0 - s);
        let h10 = s * (1.0 - s) * (1.0 - s);
        let h01 = s * s * (3.0 - 2.0 * s);
        let h11 = s * s * (s - 1.0);
        h00 * self.y[i] + h10 * h * self.slopes[i] + h01 * self.y[i + 1] + h11 * h * self.slopes[i + 1]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(dim: usize, r_max: f64, m: usize, g: Grading) -> Arc<RadialGrid> {
        Arc::new(RadialGrid::new(dim, r_max, m, g).unwrap())
    }

    #[test]
    fn uniform_nodes_and_sphere_area() {
        let g = grid(3, 1.0, 64, Grading::Uniform);
        for (i, r) in g.nodes().iter().enumerate() {
            assert!((r - i as f64 / 64.0).abs() < 1e-15);
        }
        assert!((g.omega() / (4.0 * PI) - 1.0).abs() < 1e-12);
        let o4 = sphere_area(4);
        assert!((o4 / (2.0 * PI * PI) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ball_volume_is_exact() {
        let g = grid(4, 10.0, 128, Grading::Uniform);
        let vol = g.integrate(&vec![1.0; g.len()]).unwrap();
        let exact = 2.0 * PI * PI * 1e4 / 4.0;
        assert!((vol / exact - 1.0).abs() < 1e-10);
        for (dim, p) in [(3, 2.0), (5, 3.0), (6, 1.5)] {
            let g = grid(dim, 7.5, 333, Grading::Graded(p));
            let vol = g.integrate(&vec![1.0; g.len()]).unwrap();
            assert!((vol / g.ball_volume() - 1.0).abs() < 1e-10, "N={dim}");
            assert!(g.weights().iter().all(|w| *w >= 0.0));
        }
    }

    #[test]
    fn integrate_examples() {
        let g = grid(3, 1.0, 64, Grading::Uniform);
        assert_eq!(g.integrate(&vec![0.0; g.len()]).unwrap(), 0.0);
        let one = g.integrate(&vec![1.0; g.len()]).unwrap();
        assert!((one - 4.0 * PI / 3.0).abs() < 1e-10);
        let lin: Vec<f64> = g.nodes().to_vec();
        assert!((g.integrate(&lin).unwrap() - PI).abs() < 1e-10);
        assert!(matches!(g.integrate(&[1.0, 2.0]), Err(Error::Shape { .. })));
    }

    #[test]
    fn gaussian_on_graded_grid() {
        let g = grid(3, 20.0, 4096, Grading::Graded(2.0));
        let v = g.integrate_fn(|r| (-r * r).exp());
        assert!((v - PI.powf(1.5)).abs() < 1e-8, "{}", v - PI.powf(1.5));
    }

    #[test]
    fn gaussian_l2_norm() {
        let g = grid(3, 20.0, 4096, Grading::Graded(2.0));
        let u = RadialFunction::from_fn(g, |r| (-r * r / 2.0).exp()).unwrap();
        assert!((u.lp_pow(2.0).unwrap() - PI.powf(1.5)).abs() < 1e-8);
        assert!(matches!(u.lp_pow(0.5), Err(Error::Parameter(_))));
    }

    #[test]
    fn constant_function_norms() {
        let g = grid(5, 2.0, 200, Grading::Graded(1.7));
        let k = 0.7;
        let u = RadialFunction::from_fn(g.clone(), |_| k).unwrap();
        assert!((u.mass() / (k * k * g.ball_volume()) - 1.0).abs() < 1e-10);
        assert!(u.grad_norm_sq().abs() < 1e-12);
    }

    #[test]
    fn quadrature_is_higher_than_second_order() {
        let exact = PI.powf(1.5) / 2f64.powf(1.5);
        let err = |m| {
            let g = grid(3, 12.0, m, Grading::Uniform);
            (g.integrate_fn(|r| (-2.0 * r * r).exp()) - exact).abs()
        };
        let (e1, e2) = (err(64), err(128));
        assert!(e1 / e2 >= 3.0, "{e1} {e2}");
    }

    #[test]
    fn dirichlet_form_converges() {
        // u = e^{-r^2/2}: ‖∇u‖² = (N/2) π^{N/2}
        let exact = 1.5 * PI.powf(1.5);
        let err = |m| {
            let g = grid(3, 12.0, m, Grading::Uniform);
            let u = RadialFunction::from_fn(g, |r| (-r * r / 2.0).exp()).unwrap();
            (u.grad_norm_sq() - exact).abs()
        };
        let (e1, e2) = (err(256), err(512));
        assert!(e1 / e2 > 3.5 && e2 < 1e-4, "{e1} {e2}");
    }

    #[test]
    fn dilation_is_exact() {
        let g = grid(4, 9.0, 300, Grading::Graded(2.0));
        let u = RadialFunction::from_fn(g, |r| 1.0 / (1.0 + r * r).powi(2)).unwrap();
        let v = u.dilate(2.5).unwrap();
        assert!((v.mass() / u.mass() - 1.0).abs() < 1e-13);
        assert!((v.grad_norm_sq() / (2.5f64.powi(2) * u.grad_norm_sq()) - 1.0).abs() < 1e-13);
    }

    #[test]
    fn invalid_parameters() {
        assert!(RadialGrid::new(2, 1.0, 64, Grading::Uniform).is_err());
        assert!(RadialGrid::new(3, 0.0, 64, Grading::Uniform).is_err());
        assert!(RadialGrid::new(3, 1.0, 63, Grading::Uniform).is_err());
        assert!(RadialGrid::from_nodes(3, vec![0.0, 1.0, 1.0]).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let g = grid(3, 5.0, 80, Grading::Graded(2.0));
        let u = RadialFunction::from_fn(g, |r| (-r).exp()).unwrap();
        let text = u.to_csv_string();
        assert!(text.starts_with("# N=3 R_max=5 M=80\n"));
        let back = RadialFunction::read_csv(text.as_bytes()).unwrap();
        assert_eq!(back.values(), u.values());
        assert_eq!(back.grid().nodes(), u.grid().nodes());
    }

    #[test]
    fn monotone_interpolation_preserves_positivity() {
        let g = grid(3, 4.0, 64, Grading::Uniform);
        let u = RadialFunction::from_fn(g, |r| if r < 1.0 { 1.0 } else { 0.0 }).unwrap();
        for k in 0..1000 {
            let r = 4.0 * k as f64 / 1000.0;
            let v = u.eval(r);
            assert!((-1e-15..=1.0 + 1e-15).contains(&v), "r={r} v={v}");
        }
        assert_eq!(u.eval(4.5), 0.0);
    }

    #[test]
    fn grading_parses() {
        assert_eq!("uniform".parse::<Grading>().unwrap(), Grading::Uniform);
        assert_eq!("graded(2)".parse::<Grading>().unwrap(), Grading::Graded(2.0));
        assert!("cubic".parse::<Grading>().is_err());
    }
}
