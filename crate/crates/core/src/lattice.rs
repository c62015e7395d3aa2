//! Truncated boxes `{-L,…,L}^d`, state vectors and weighted norms.
//!
//! Sites are ordered lexicographically with the first coordinate most
//! significant, so `(-L,…,-L)` has index 0 and the origin sits at
//! `(total_sites - 1) / 2`.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::io::Write;
use std::sync::{Arc, RwLock};

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::fmt_f64;

/// Amplitudes beyond this many widths from a Gaussian's center are dropped
/// (relative size below 1e-16).
pub const GAUSSIAN_CUTOFF_WIDTHS: f64 = 12.5;

/// The box `{-L,…,L}^d` with its lexicographic site/index bijection.
#[derive(Debug)]
pub struct BoxGeometry {
    dim: usize,
    radius: i64,
    total: usize,
    strides: Vec<usize>,
    coords: Vec<i32>,
    norm_sq: Vec<u64>,
    weights: RwLock<HashMap<u64, Arc<[f64]>>>,
}

impl BoxGeometry {
    pub fn new(dim: usize, radius: usize) -> Result<Arc<Self>> {
        if dim == 0 || radius == 0 {
            return Err(Error::invalid("dimension and radius must be positive"));
        }
        if radius > i32::MAX as usize / 2 {
            return Err(Error::invalid("radius too large"));
        }
        let side = 2 * radius + 1;
        let total = side
            .checked_pow(dim as u32)
            .filter(|&t| t <= 1 << 31)
            .ok_or_else(|| Error::invalid("box too large"))?;
        let mut strides = vec![1usize; dim];
        for j in (0..dim.saturating_sub(1)).rev() {
            strides[j] = strides[j + 1] * side;
        }
        let radius = radius as i64;
        let mut coords = Vec::with_capacity(total * dim);
        let mut norm_sq = Vec::with_capacity(total);
        for idx in 0..total {
            let mut rem = idx;
            let mut ns = 0u64;
            for &s in &strides {
                let c = (rem / s) as i64 - radius;
                rem %= s;
                coords.push(c as i32);
                ns += (c * c) as u64;
            }
            norm_sq.push(ns);
        }
        Ok(Arc::new(Self {
            dim,
            radius,
            total,
            strides,
            coords,
            norm_sq,
            weights: RwLock::new(HashMap::new()),
        }))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn radius(&self) -> i64 {
        self.radius
    }

    pub fn total_sites(&self) -> usize {
        self.total
    }

    pub fn strides(&self) -> &[usize] {
        &self.strides
    }

    pub fn origin_index(&self) -> usize {
        (self.total - 1) / 2
    }

    /// Lexicographic index of `site`, or `None` when the site lies outside the box.
    pub fn index_of(&self, site: &[i64]) -> Option<usize> {
        if site.len() != self.dim {
            return None;
        }
        let mut idx = 0;
        for (&c, &s) in site.iter().zip(&self.strides) {
            if c.abs() > self.radius {
                return None;
            }
            idx += (c + self.radius) as usize * s;
        }
        Some(idx)
    }

    pub fn site_of(&self, index: usize) -> Vec<i64> {
        self.coords[index * self.dim..(index + 1) * self.dim]
            .iter()
            .map(|&c| c as i64)
            .collect()
    }

    /// Coordinate `j` of the site at `index`.
    #[inline]
    pub fn coord(&self, index: usize, axis: usize) -> i64 {
        self.coords[index * self.dim + axis] as i64
    }

    #[inline]
    pub(crate) fn coords_of(&self, index: usize) -> &[i32] {
        &self.coords[index * self.dim..(index + 1) * self.dim]
    }

    /// `|n|²` for the site at `index`.
    #[inline]
    pub fn norm_sq(&self, index: usize) -> u64 {
        self.norm_sq[index]
    }

    /// Index of `site ± e_axis`, `None` if that neighbor is outside the box.
    pub fn neighbor(&self, index: usize, axis: usize, forward: bool) -> Option<usize> {
        let c = self.coord(index, axis);
        if forward {
            (c < self.radius).then(|| index + self.strides[axis])
        } else {
            (c > -self.radius).then(|| index - self.strides[axis])
        }
    }

    /// Chebyshev distance from the site to the box surface: `min_j (L - |n_j|)`.
    pub fn boundary_distance(&self, index: usize) -> i64 {
        self.coords_of(index)
            .iter()
            .map(|&c| self.radius - (c as i64).abs())
            .min()
            .unwrap_or(0)
    }

    /// Cached table of `(1+|n|²)^r`.
    pub fn weights(&self, r: f64) -> Arc<[f64]> {
        let key = r.to_bits();
        if let Some(w) = self.weights.read().expect("weight cache poisoned").get(&key) {
            return w.clone();
        }
        let table: Arc<[f64]> = self
            .norm_sq
            .iter()
            .map(|&ns| (1.0 + ns as f64).powf(r))
            .collect();
        self.weights
            .write()
            .expect("weight cache poisoned")
            .entry(key)
            .or_insert(table)
            .clone()
    }

    pub fn same_as(&self, other: &BoxGeometry) -> bool {
        std::ptr::eq(self, other) || (self.dim == other.dim && self.radius == other.radius)
    }
}

/// Order `r ≥ 0` of the weighted norm `‖ψ‖_r`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct WeightedNormOrder(f64);

impl WeightedNormOrder {
    pub fn new(r: f64) -> Result<Self> {
        if !(r.is_finite() && r >= 0.0) {
            return Err(Error::invalid(format!("moment order must be finite and >= 0, got {r}")));
        }
        Ok(Self(r))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// Complex amplitude vector over a box.
#[derive(Debug, Clone)]
pub struct LatticeState {
    geometry: Arc<BoxGeometry>,
    amplitudes: Vec<Complex64>,
}

impl LatticeState {
    pub fn zeros(geometry: &Arc<BoxGeometry>) -> Self {
        Self {
            geometry: geometry.clone(),
            amplitudes: vec![Complex64::new(0.0, 0.0); geometry.total_sites()],
        }
    }

    pub fn from_amplitudes(geometry: &Arc<BoxGeometry>, amplitudes: Vec<Complex64>) -> Result<Self> {
        if amplitudes.len() != geometry.total_sites() {
            return Err(Error::GeometryMismatch {
                expected: geometry.total_sites(),
                found: amplitudes.len(),
            });
        }
        Ok(Self {
            geometry: geometry.clone(),
            amplitudes,
        })
    }

    pub fn delta(geometry: &Arc<BoxGeometry>, site: &[i64]) -> Result<Self> {
        let idx = geometry
            .index_of(site)
            .ok_or_else(|| Error::invalid(format!("site {site:?} outside the box")))?;
        let mut s = Self::zeros(geometry);
        s.amplitudes[idx] = Complex64::new(1.0, 0.0);
        Ok(s)
    }

    /// Normalized Gaussian packet `exp(-|n-c|²/(4w²) + i k·n)`, so `|ψ_n|²` has
    /// standard deviation `w` per axis. Amplitudes beyond
    /// [`GAUSSIAN_CUTOFF_WIDTHS`] widths are set to zero.
    pub fn gaussian(
        geometry: &Arc<BoxGeometry>,
        center: &[f64],
        width: f64,
        momentum: &[f64],
    ) -> Result<Self> {
        let d = geometry.dim();
        if center.len() != d || momentum.len() != d {
            return Err(Error::invalid("gaussian center/momentum dimension mismatch"));
        }
        if !(width.is_finite() && width > 0.0) {
            return Err(Error::invalid("gaussian width must be positive"));
        }
        let cutoff = GAUSSIAN_CUTOFF_WIDTHS * width;
        let mut s = Self::zeros(geometry);
        for idx in 0..geometry.total_sites() {
            let n = geometry.coords_of(idx);
            let mut dist_sq = 0.0;
            let mut phase = 0.0;
            for j in 0..d {
                let x = n[j] as f64 - center[j];
                dist_sq += x * x;
                phase += momentum[j] * n[j] as f64;
            }
            if dist_sq.sqrt() > cutoff {
                continue;
            }
            let env = (-dist_sq / (4.0 * width * width)).exp();
            s.amplitudes[idx] = Complex64::from_polar(env, phase);
        }
        s.normalize()?;
        Ok(s)
    }

    /// Random normalized state with independent Gaussian real and imaginary parts.
    pub fn random<R: Rng + ?Sized>(geometry: &Arc<BoxGeometry>, rng: &mut R) -> Self {
        let amplitudes = (0..geometry.total_sites())
            .map(|_| Complex64::new(standard_normal(rng), standard_normal(rng)))
            .collect();
        let mut s = Self {
            geometry: geometry.clone(),
            amplitudes,
        };
        s.normalize().expect("random state has nonzero norm");
        s
    }

    pub fn geometry(&self) -> &Arc<BoxGeometry> {
        &self.geometry
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn amplitudes_mut(&mut self) -> &mut [Complex64] {
        &mut self.amplitudes
    }

    pub fn into_amplitudes(self) -> Vec<Complex64> {
        self.amplitudes
    }

    pub fn amplitude_at(&self, site: &[i64]) -> Complex64 {
        self.geometry
            .index_of(site)
            .map_or(Complex64::new(0.0, 0.0), |i| self.amplitudes[i])
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn normalize(&mut self) -> Result<f64> {
        let n = self.norm();
        if n == 0.0 || !n.is_finite() {
            return Err(Error::ZeroNorm(0.0));
        }
        for a in &mut self.amplitudes {
            *a /= n;
        }
        Ok(n)
    }

    /// `⟨self, other⟩`, antilinear in the first slot.
    pub fn inner(&self, other: &LatticeState) -> Complex64 {
        self.amplitudes
            .iter()
            .zip(&other.amplitudes)
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    /// `(Σ_n (1+|n|²)^r |ψ_n|²)^{1/2}`.
    pub fn weighted_norm(&self, order: WeightedNormOrder) -> Result<f64> {
        Ok(self.weighted_norm_sq(order.value())?.sqrt())
    }

    pub fn weighted_norm_sq(&self, r: f64) -> Result<f64> {
        let w = self.geometry.weights(r);
        let mut acc = 0.0;
        for (i, (a, wi)) in self.amplitudes.iter().zip(w.iter()).enumerate() {
            let p = a.norm_sqr();
            if !p.is_finite() {
                return Err(Error::NonFinite { index: i });
            }
            acc += wi * p;
        }
        Ok(acc)
    }

    /// Probability mass inside the Euclidean ball `|n| ≤ radius`.
    pub fn ball_probability(&self, radius: u64) -> f64 {
        let r2 = radius.saturating_mul(radius);
        self.amplitudes
            .iter()
            .enumerate()
            .filter(|(i, _)| self.geometry.norm_sq(*i) <= r2)
            .map(|(_, a)| a.norm_sqr())
            .sum()
    }

    /// Largest `max_j |n_j|` over sites carrying nonzero amplitude.
    pub fn support_radius(&self) -> i64 {
        self.amplitudes
            .iter()
            .enumerate()
            .filter(|(_, a)| a.norm_sqr() > 0.0)
            .map(|(i, _)| {
                self.geometry
                    .coords_of(i)
                    .iter()
                    .map(|&c| (c as i64).abs())
                    .max()
                    .unwrap_or(0)
            })
            .max()
            .unwrap_or(0)
    }

    pub fn l2_distance(&self, other: &LatticeState) -> f64 {
        self.amplitudes
            .iter()
            .zip(&other.amplitudes)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            .sqrt()
    }

    /// Writes `index,n_1,…,n_d,re,im`, one row per site.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let d = self.geometry.dim();
        let mut header = String::from("index");
        for j in 1..=d {
            write!(header, ",n_{j}").unwrap();
        }
        header.push_str(",re,im\n");
        out.write_all(header.as_bytes())?;
        let mut line = String::new();
        for (i, a) in self.amplitudes.iter().enumerate() {
            line.clear();
            write!(line, "{i}").unwrap();
            for c in self.geometry.coords_of(i) {
                write!(line, ",{c}").unwrap();
            }
            writeln!(line, ",{},{}", fmt_f64(a.re), fmt_f64(a.im)).unwrap();
            out.write_all(line.as_bytes())?;
        }
        Ok(())
    }

    /// Parses the format written by [`LatticeState::write_csv`].
    pub fn read_csv(geometry: &Arc<BoxGeometry>, text: &str) -> Result<Self> {
        let mut s = Self::zeros(geometry);
        let d = geometry.dim();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') || line.starts_with("index") {
                continue;
            }
            let bad = |msg: &str| Error::Config {
                line: lineno + 1,
                field: "state".into(),
                message: msg.into(),
            };
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != d + 3 {
                return Err(bad("wrong number of columns"));
            }
            let site: Vec<i64> = fields[1..=d]
                .iter()
                .map(|f| f.trim().parse::<i64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| bad("bad site coordinate"))?;
            let idx = geometry.index_of(&site).ok_or_else(|| bad("site outside box"))?;
            let re: f64 = fields[d + 1].trim().parse().map_err(|_| bad("bad re"))?;
            let im: f64 = fields[d + 2].trim().parse().map_err(|_| bad("bad im"))?;
            s.amplitudes[idx] = Complex64::new(re, im);
        }
        Ok(s)
    }
}

fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn index_examples() {
        let g = BoxGeometry::new(1, 2).unwrap();
        assert_eq!(g.index_of(&[-2]), Some(0));
        assert_eq!(g.index_of(&[3]), None);
        let g2 = BoxGeometry::new(2, 1).unwrap();
        assert_eq!(g2.index_of(&[0, 0]), Some(4));
        assert_eq!(g2.origin_index(), 4);
    }

    #[test]
    fn bijection_round_trip() {
        for d in 1..=3 {
            for l in 1..=8 {
                let g = BoxGeometry::new(d, l).unwrap();
                assert_eq!(g.total_sites(), (2 * l + 1).pow(d as u32));
                for i in 0..g.total_sites() {
                    assert_eq!(g.index_of(&g.site_of(i)), Some(i));
                }
            }
        }
    }

    #[test]
    fn neighbors_outside_exactly_at_faces() {
        let g = BoxGeometry::new(2, 3).unwrap();
        for i in 0..g.total_sites() {
            let n = g.site_of(i);
            for j in 0..2 {
                assert_eq!(g.neighbor(i, j, true).is_none(), (n[j] + 1).abs() > 3);
                assert_eq!(g.neighbor(i, j, false).is_none(), (n[j] - 1).abs() > 3);
            }
        }
    }

    #[test]
    fn weighted_norm_examples() {
        let g = BoxGeometry::new(2, 3).unwrap();
        let d0 = LatticeState::delta(&g, &[0, 0]).unwrap();
        assert_eq!(d0.weighted_norm(WeightedNormOrder::new(5.0).unwrap()).unwrap(), 1.0);
        let d2 = LatticeState::delta(&g, &[2, 0]).unwrap();
        let v = d2.weighted_norm(WeightedNormOrder::new(1.0).unwrap()).unwrap();
        assert!((v - 5f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn weighted_norm_order_zero_is_l2() {
        let g = BoxGeometry::new(2, 6).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut s = LatticeState::random(&g, &mut rng);
        for a in s.amplitudes_mut() {
            *a *= 3.7;
        }
        let direct: f64 = s.amplitudes().iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        let w = s.weighted_norm(WeightedNormOrder::new(0.0).unwrap()).unwrap();
        assert!((w - direct).abs() <= 1e-14 * direct);
    }

    #[test]
    fn weighted_norm_flags_non_finite() {
        let g = BoxGeometry::new(1, 2).unwrap();
        let mut s = LatticeState::zeros(&g);
        s.amplitudes_mut()[3] = Complex64::new(f64::NAN, 0.0);
        assert!(matches!(
            s.weighted_norm(WeightedNormOrder::new(1.0).unwrap()),
            Err(Error::NonFinite { index: 3 })
        ));
    }

    #[test]
    fn negative_order_rejected() {
        assert!(WeightedNormOrder::new(-0.5).is_err());
    }

    #[test]
    fn ball_probability_examples() {
        let g = BoxGeometry::new(2, 4).unwrap();
        assert_eq!(LatticeState::delta(&g, &[0, 0]).unwrap().ball_probability(0), 1.0);
        assert_eq!(LatticeState::delta(&g, &[3, 0]).unwrap().ball_probability(2), 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = LatticeState::random(&g, &mut rng);
        // N ≥ L√d covers the whole box
        assert!((s.ball_probability(6) - 1.0).abs() < 1e-13);
    }

    #[test]
    fn gaussian_is_normalized_and_truncated() {
        let g = BoxGeometry::new(1, 200).unwrap();
        let s = LatticeState::gaussian(&g, &[0.0], 4.0, &[std::f64::consts::FRAC_PI_2]).unwrap();
        assert!((s.norm() - 1.0).abs() < 1e-14);
        assert_eq!(s.support_radius(), 50);
        let var: f64 = (0..g.total_sites())
            .map(|i| (g.coord(i, 0) as f64).powi(2) * s.amplitudes()[i].norm_sqr())
            .sum();
        assert!((var - 16.0).abs() < 1e-9);
    }

    #[test]
    fn csv_round_trip() {
        let g = BoxGeometry::new(2, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let s = LatticeState::random(&g, &mut rng);
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("index,n_1,n_2,re,im\n"));
        let back = LatticeState::read_csv(&g, &text).unwrap();
        assert_eq!(back.amplitudes(), s.amplitudes());
    }
}
