//! Potential families and decay diagnostics.
//!
//! `power_law` with `α > 1` sits inside the `V_n = o(|n|^{-1})` class the
//! transport results are about. `wigner_von_neumann` is the `O(|n|^{-1})`
//! contrast class; `anderson` and `periodic` are dynamical controls only.

use std::io::Write;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fmt_f64;
use crate::lattice::BoxGeometry;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum PotentialSpec {
    Zero,
    /// `V_n = c (1+|n|)^{-α}`
    PowerLaw { c: f64, alpha: f64 },
    /// `V_n = c sin(2kn) / max(1,|n|)`, one dimension only.
    WignerVonNeumann { c: f64, k: f64 },
    /// i.i.d. uniform on `[-λ/2, λ/2]`, keyed by `(seed, site)`.
    Anderson { lambda: f64, seed: u64 },
    /// `V_n = pattern[(n_1+…+n_d) mod p]`.
    Periodic { pattern: Vec<f64> },
}

impl PotentialSpec {
    pub fn family_name(&self) -> &'static str {
        match self {
            PotentialSpec::Zero => "zero",
            PotentialSpec::PowerLaw { .. } => "power_law",
            PotentialSpec::WignerVonNeumann { .. } => "wigner_von_neumann",
            PotentialSpec::Anderson { .. } => "anderson",
            PotentialSpec::Periodic { .. } => "periodic",
        }
    }

    pub fn validate(&self, geometry: &BoxGeometry) -> Result<()> {
        let finite = |name: &str, v: f64| {
            if v.is_finite() {
                Ok(())
            } else {
                Err(Error::invalid(format!("potential parameter {name} must be finite")))
            }
        };
        match self {
            PotentialSpec::Zero => Ok(()),
            PotentialSpec::PowerLaw { c, alpha } => {
                finite("c", *c)?;
                finite("alpha", *alpha)?;
                if *alpha <= 0.0 {
                    return Err(Error::invalid("power_law requires alpha > 0"));
                }
                Ok(())
            }
            PotentialSpec::WignerVonNeumann { c, k } => {
                finite("c", *c)?;
                finite("k", *k)?;
                if geometry.dim() != 1 {
                    return Err(Error::invalid("wigner_von_neumann requires d = 1"));
                }
                Ok(())
            }
            PotentialSpec::Anderson { lambda, .. } => finite("lambda", *lambda),
            PotentialSpec::Periodic { pattern } => {
                if pattern.is_empty() {
                    return Err(Error::invalid("periodic pattern must be nonempty"));
                }
                pattern.iter().try_for_each(|&v| finite("pattern", v))
            }
        }
    }
}

/// Realized real diagonal potential on a box.
#[derive(Debug, Clone)]
pub struct PotentialField {
    geometry: Arc<BoxGeometry>,
    values: Vec<f64>,
    sup_norm: f64,
}

impl PotentialField {
    pub fn zero(geometry: &Arc<BoxGeometry>) -> Self {
        Self {
            geometry: geometry.clone(),
            values: vec![0.0; geometry.total_sites()],
            sup_norm: 0.0,
        }
    }

    pub fn from_values(geometry: &Arc<BoxGeometry>, values: Vec<f64>) -> Result<Self> {
        if values.len() != geometry.total_sites() {
            return Err(Error::GeometryMismatch {
                expected: geometry.total_sites(),
                found: values.len(),
            });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index: i });
        }
        let sup_norm = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        Ok(Self {
            geometry: geometry.clone(),
            values,
            sup_norm,
        })
    }

    pub fn geometry(&self) -> &Arc<BoxGeometry> {
        &self.geometry
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn sup_norm(&self) -> f64 {
        self.sup_norm
    }

    pub fn is_zero(&self) -> bool {
        self.sup_norm == 0.0
    }

    /// Writes `index,n_1,…,n_d,value`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let d = self.geometry.dim();
        let mut header = String::from("index");
        for j in 1..=d {
            header.push_str(&format!(",n_{j}"));
        }
        header.push_str(",value\n");
        out.write_all(header.as_bytes())?;
        for (i, v) in self.values.iter().enumerate() {
            let mut line = i.to_string();
            for c in self.geometry.site_of(i) {
                line.push_str(&format!(",{c}"));
            }
            line.push_str(&format!(",{}\n", fmt_f64(*v)));
            out.write_all(line.as_bytes())?;
        }
        Ok(())
    }
}

/// Deterministic realization of `spec` on `geometry`.
pub fn realize(spec: &PotentialSpec, geometry: &Arc<BoxGeometry>) -> Result<PotentialField> {
    spec.validate(geometry)?;
    let n = geometry.total_sites();
    let values: Vec<f64> = match spec {
        PotentialSpec::Zero => vec![0.0; n],
        PotentialSpec::PowerLaw { c, alpha } => (0..n)
            .map(|i| c * (1.0 + (geometry.norm_sq(i) as f64).sqrt()).powf(-alpha))
            .collect(),
        PotentialSpec::WignerVonNeumann { c, k } => (0..n)
            .map(|i| {
                let m = geometry.coord(i, 0) as f64;
                c * (2.0 * k * m).sin() / m.abs().max(1.0)
            })
            .collect(),
        PotentialSpec::Anderson { lambda, seed } => {
            let base = ChaCha8Rng::seed_from_u64(*seed);
            (0..n)
                .map(|i| {
                    let mut rng = base.clone();
                    rng.set_stream(site_key(&geometry.site_of(i)));
                    rng.set_word_pos(0);
                    lambda * (rng.random::<f64>() - 0.5)
                })
                .collect()
        }
        PotentialSpec::Periodic { pattern } => {
            let p = pattern.len() as i64;
            (0..n)
                .map(|i| {
                    let s: i64 = geometry.site_of(i).iter().sum();
                    pattern[s.rem_euclid(p) as usize]
                })
                .collect()
        }
    };
    PotentialField::from_values(geometry, values)
}

/// Stream id for a site, independent of the box size.
fn site_key(site: &[i64]) -> u64 {
    site.iter().fold(0xcbf2_9ce4_8422_2325u64, |h, &c| {
        let zz = ((c << 1) ^ (c >> 63)) as u64;
        (h ^ zz).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

/// One point of the profile `R ↦ sup_{|n|≥R} |n|·|V_n|`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DecayPoint {
    pub radius: u64,
    pub sup_weighted: f64,
}

/// Profile at `R ∈ {1, 2, 4, …} ∪ {L}`.
pub fn decay_profile(field: &PotentialField) -> Vec<DecayPoint> {
    let g = field.geometry();
    let mut pairs: Vec<(f64, f64)> = (0..g.total_sites())
        .map(|i| {
            let r = (g.norm_sq(i) as f64).sqrt();
            (r, r * field.values()[i].abs())
        })
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    // suffix maxima over |n|
    let mut suffix = vec![0.0f64; pairs.len() + 1];
    for k in (0..pairs.len()).rev() {
        suffix[k] = suffix[k + 1].max(pairs[k].1);
    }
    let l = g.radius() as u64;
    let mut radii = Vec::new();
    let mut r = 1u64;
    while r < l {
        radii.push(r);
        r *= 2;
    }
    radii.push(l);
    radii
        .into_iter()
        .map(|r| {
            let start = pairs.partition_point(|p| p.0 < r as f64);
            DecayPoint {
                radius: r,
                sup_weighted: suffix[start],
            }
        })
        .collect()
}

/// Log-log slope above which the profile counts as not decaying.
pub const DECAY_SLOPE_THRESHOLD: f64 = -0.1;

/// Box-scale label for the `o(|n|^{-1})` hypothesis: the least-squares slope
/// of `ln sup_weighted` against `ln R` over `4 ≤ R ≤ L/2` must be at most
/// [`DECAY_SLOPE_THRESHOLD`]. The point at `R = L` sees only the outermost
/// shell and is left out.
pub fn satisfies_decay_hypothesis(profile: &[DecayPoint]) -> bool {
    let Some(l) = profile.last().map(|p| p.radius) else {
        return true;
    };
    let pts: Vec<&DecayPoint> = profile.iter().filter(|p| p.radius >= 4 && 2 * p.radius <= l).collect();
    if pts.iter().all(|p| p.sup_weighted == 0.0) {
        return true;
    }
    if pts.len() < 2 || pts.iter().any(|p| p.sup_weighted == 0.0) {
        // too small a box to tell, or an exactly vanishing tail
        return pts.last().is_some_and(|p| p.sup_weighted == 0.0);
    }
    let xs: Vec<f64> = pts.iter().map(|p| (p.radius as f64).ln()).collect();
    let ys: Vec<f64> = pts.iter().map(|p| p.sup_weighted.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx <= DECAY_SLOPE_THRESHOLD
}

#[cfg(test)]
mod tests {
    use super::*;

    fn field(spec: &PotentialSpec, d: usize, l: usize) -> PotentialField {
        realize(spec, &BoxGeometry::new(d, l).unwrap()).unwrap()
    }

    #[test]
    fn power_law_values() {
        let f = field(&PotentialSpec::PowerLaw { c: 1.0, alpha: 2.0 }, 1, 10);
        let g = f.geometry().clone();
        assert_eq!(f.values()[g.index_of(&[0]).unwrap()], 1.0);
        assert_eq!(f.values()[g.index_of(&[3]).unwrap()], 1.0 / 16.0);
        assert_eq!(f.sup_norm(), 1.0);
    }

    #[test]
    fn zero_spec_is_zero() {
        let f = field(&PotentialSpec::Zero, 2, 5);
        assert!(f.values().iter().all(|&v| v == 0.0));
        assert!(f.is_zero());
    }

    #[test]
    fn anderson_is_deterministic_and_bounded() {
        let spec = PotentialSpec::Anderson { lambda: 4.0, seed: 7 };
        let a = field(&spec, 2, 10);
        let b = field(&spec, 2, 10);
        assert!(a.values().iter().zip(b.values()).all(|(x, y)| x.to_bits() == y.to_bits()));
        assert!(a.values().iter().all(|v| v.abs() <= 2.0));
        let other = field(&PotentialSpec::Anderson { lambda: 4.0, seed: 8 }, 2, 10);
        assert_ne!(a.values(), other.values());
        // values are keyed by site, so nested boxes agree
        let big = field(&spec, 2, 12);
        let g = a.geometry();
        for i in 0..g.total_sites() {
            let j = big.geometry().index_of(&g.site_of(i)).unwrap();
            assert_eq!(a.values()[i], big.values()[j]);
        }
    }

    #[test]
    fn wigner_von_neumann_requires_d1() {
        let spec = PotentialSpec::WignerVonNeumann { c: 1.0, k: 1.0 };
        assert!(realize(&spec, &BoxGeometry::new(2, 3).unwrap()).is_err());
        assert!(realize(&spec, &BoxGeometry::new(1, 3).unwrap()).is_ok());
    }

    #[test]
    fn non_finite_parameters_rejected() {
        let g = BoxGeometry::new(1, 3).unwrap();
        assert!(realize(&PotentialSpec::PowerLaw { c: f64::NAN, alpha: 2.0 }, &g).is_err());
        assert!(realize(&PotentialSpec::Anderson { lambda: f64::INFINITY, seed: 1 }, &g).is_err());
        assert!(realize(&PotentialSpec::Periodic { pattern: vec![] }, &g).is_err());
    }

    #[test]
    fn decay_profile_examples() {
        let f = field(&PotentialSpec::PowerLaw { c: 1.0, alpha: 2.0 }, 1, 1024);
        let p = decay_profile(&f);
        let radii: Vec<u64> = p.iter().map(|x| x.radius).collect();
        assert_eq!(radii, vec![1, 2, 4, 8, 16, 32, 64, 128, 256, 512, 1024]);
        assert!(p.last().unwrap().sup_weighted <= 1.0 / 1024.0);
        assert!(satisfies_decay_hypothesis(&p));

        let z = decay_profile(&field(&PotentialSpec::Zero, 1, 64));
        assert!(z.iter().all(|x| x.sup_weighted == 0.0));
    }

    #[test]
    fn wigner_von_neumann_profile_plateaus() {
        let f = field(&PotentialSpec::WignerVonNeumann { c: 1.0, k: 1.0 }, 1, 4096);
        let p = decay_profile(&f);
        // R = L only sees the two boundary sites, where |sin(2L)| ≈ 0.956
        let (last, rest) = p.split_last().unwrap();
        for x in rest {
            assert!(x.sup_weighted > 0.99 && x.sup_weighted <= 1.0, "{x:?}");
        }
        let expected = (2.0f64 * 4096.0).sin().abs();
        assert!((last.sup_weighted - expected).abs() < 1e-12);
        assert!(!satisfies_decay_hypothesis(&p));
    }

    #[test]
    fn power_law_profile_strictly_decreasing_beyond_four() {
        for alpha in [1.5, 2.0, 3.0] {
            let f = field(&PotentialSpec::PowerLaw { c: 1.0, alpha }, 1, 2048);
            let p = decay_profile(&f);
            let tail: Vec<f64> = p.iter().filter(|x| x.radius >= 4).map(|x| x.sup_weighted).collect();
            assert!(tail.windows(2).all(|w| w[1] < w[0]), "alpha = {alpha}: {tail:?}");
        }
        let slow = field(&PotentialSpec::PowerLaw { c: 1.0, alpha: 1.0 }, 1, 2048);
        assert!(!satisfies_decay_hypothesis(&decay_profile(&slow)));
    }

    #[test]
    fn decay_label_by_family() {
        for l in [64, 300, 2048] {
            for alpha in [1.5, 2.0, 3.0] {
                let f = field(&PotentialSpec::PowerLaw { c: 1.0, alpha }, 1, l);
                assert!(satisfies_decay_hypothesis(&decay_profile(&f)), "alpha = {alpha}, L = {l}");
            }
            for alpha in [0.5, 1.0] {
                let f = field(&PotentialSpec::PowerLaw { c: 1.0, alpha }, 1, l);
                assert!(!satisfies_decay_hypothesis(&decay_profile(&f)), "alpha = {alpha}, L = {l}");
            }
            let w = field(&PotentialSpec::WignerVonNeumann { c: 1.0, k: 1.0 }, 1, l);
            assert!(!satisfies_decay_hypothesis(&decay_profile(&w)), "wvn L = {l}");
            let a = field(&PotentialSpec::Anderson { lambda: 1.0, seed: 2 }, 1, l);
            assert!(!satisfies_decay_hypothesis(&decay_profile(&a)), "anderson L = {l}");
        }
        assert!(satisfies_decay_hypothesis(&decay_profile(&field(&PotentialSpec::Zero, 2, 8))));
    }

    #[test]
    fn reflection_symmetric_families() {
        let specs = [
            PotentialSpec::Zero,
            PotentialSpec::PowerLaw { c: 0.7, alpha: 1.3 },
            PotentialSpec::Periodic { pattern: vec![1.0, -2.0] },
        ];
        for spec in &specs {
            for d in 1..=2 {
                let f = field(spec, d, 6);
                let g = f.geometry();
                for i in 0..g.total_sites() {
                    let neg: Vec<i64> = g.site_of(i).iter().map(|c| -c).collect();
                    let j = g.index_of(&neg).unwrap();
                    assert_eq!(f.values()[i], f.values()[j], "{spec:?}");
                    assert!(f.values()[i].is_finite());
                }
            }
        }
    }

    #[test]
    fn csv_header() {
        let f = field(&PotentialSpec::PowerLaw { c: 1.0, alpha: 2.0 }, 2, 1);
        let mut buf = Vec::new();
        f.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("index,n_1,n_2,value"));
        assert_eq!(lines.next(), Some("0,-1,-1,0.17157287525380993"));
    }
}
