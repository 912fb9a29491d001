//! Suspension semiflows over maps of the torus.
//!
//! Points are kept in the canonical form `(x, r)` with `0 <= r < h(x)`;
//! flowing for time `s` moves `r` up and applies the base map each time
//! the ceiling is reached.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sampling::{mean_stderr, par_map_indexed, substream};

/// Samples used for the ceiling integral and the lower-bound spot check.
pub const CEILING_SAMPLES: usize = 100_000;
const CEILING_SEED: u64 = 0x5eed_ce11;

/// A measure-preserving map of the unit torus `[0,1)^dim`.
pub trait BaseMap: Send + Sync + fmt::Debug {
    fn name(&self) -> &str;

    fn dim(&self) -> usize;

    fn apply(&self, x: &[f64]) -> Vec<f64>;

    /// `None` when the map is not invertible.
    fn inverse(&self, x: &[f64]) -> Option<Vec<f64>>;

    fn invertible(&self) -> bool;

    /// Entropy with respect to Lebesgue measure, when known in closed form.
    fn known_entropy(&self) -> Option<f64>;

    /// Lebesgue measure is invariant for every map provided here.
    fn sample_invariant(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        (0..self.dim()).map(|_| rng.random::<f64>()).collect()
    }

    /// Flat torus distance.
    fn distance(&self, a: &[f64], b: &[f64]) -> f64 {
        a.iter()
            .zip(b)
            .map(|(u, v)| {
                let d = (u - v).rem_euclid(1.0);
                d.min(1.0 - d).powi(2)
            })
            .sum::<f64>()
            .sqrt()
    }
}

fn wrap(v: f64) -> f64 {
    let r = v.rem_euclid(1.0);
    if r >= 1.0 {
        0.0
    } else {
        r
    }
}

/// `x -> A x mod 1` for an integer 2x2 matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToralAutomorphism {
    pub name: String,
    pub matrix: [[i64; 2]; 2],
}

impl ToralAutomorphism {
    pub fn new(name: &str, matrix: [[i64; 2]; 2]) -> Result<Self> {
        let [[a, b], [c, d]] = matrix;
        if a * d - b * c == 0 {
            return Err(Error::Invalid("singular toral endomorphism".into()));
        }
        Ok(Self {
            name: name.to_string(),
            matrix,
        })
    }

    pub fn cat() -> Self {
        Self::new("cat", [[2, 1], [1, 1]]).expect("cat matrix is unimodular")
    }

    fn det(&self) -> i64 {
        let [[a, b], [c, d]] = self.matrix;
        a * d - b * c
    }

    fn eigen_moduli(&self) -> [f64; 2] {
        let [[a, b], [c, d]] = self.matrix.map(|r| r.map(|v| v as f64));
        let tr = a + d;
        let det = a * d - b * c;
        let disc = tr * tr - 4.0 * det;
        if disc >= 0.0 {
            let s = disc.sqrt();
            [((tr + s) / 2.0).abs(), ((tr - s) / 2.0).abs()]
        } else {
            let m = det.abs().sqrt();
            [m, m]
        }
    }
}

impl BaseMap for ToralAutomorphism {
    fn name(&self) -> &str {
        &self.name
    }

    fn dim(&self) -> usize {
        2
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        let m = self.matrix.map(|r| r.map(|v| v as f64));
        vec![
            wrap(m[0][0] * x[0] + m[0][1] * x[1]),
            wrap(m[1][0] * x[0] + m[1][1] * x[1]),
        ]
    }

    fn inverse(&self, x: &[f64]) -> Option<Vec<f64>> {
        let det = self.det();
        if det.abs() != 1 {
            return None;
        }
        let [[a, b], [c, d]] = self.matrix;
        let inv = [[d * det, -b * det], [-c * det, a * det]].map(|r| r.map(|v| v as f64));
        Some(vec![
            wrap(inv[0][0] * x[0] + inv[0][1] * x[1]),
            wrap(inv[1][0] * x[0] + inv[1][1] * x[1]),
        ])
    }

    fn invertible(&self) -> bool {
        self.det().abs() == 1
    }

    fn known_entropy(&self) -> Option<f64> {
        Some(
            self.eigen_moduli()
                .iter()
                .filter(|&&m| m > 1.0)
                .map(|m| m.ln())
                .sum(),
        )
    }
}

/// Translation `x -> x + shift mod 1`; the identity when the shift is zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Translation {
    pub name: String,
    pub shift: Vec<f64>,
}

impl Translation {
    pub fn new(name: &str, shift: Vec<f64>) -> Self {
        Self {
            name: name.to_string(),
            shift,
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self::new("identity", vec![0.0; dim])
    }

    /// Rotation of the 2-torus by `(phi - 1, sqrt 2 - 1)`.
    pub fn golden_rotation() -> Self {
        Self::new(
            "rotation",
            vec![(5f64.sqrt() - 1.0) / 2.0, 2f64.sqrt() - 1.0],
        )
    }
}

impl BaseMap for Translation {
    fn name(&self) -> &str {
        &self.name
    }

    fn dim(&self) -> usize {
        self.shift.len()
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.shift)
            .map(|(a, s)| wrap(a + s))
            .collect()
    }

    fn inverse(&self, x: &[f64]) -> Option<Vec<f64>> {
        Some(
            x.iter()
                .zip(&self.shift)
                .map(|(a, s)| wrap(a - s))
                .collect(),
        )
    }

    fn invertible(&self) -> bool {
        true
    }

    fn known_entropy(&self) -> Option<f64> {
        Some(0.0)
    }
}

/// Resolves `cat`, `identity`, `rotation` or `rotation:a,b`.
pub fn base_from_name(name: &str) -> Result<Arc<dyn BaseMap>> {
    if let Some(rest) = name.strip_prefix("rotation:") {
        let shift = parse_numbers(rest)?;
        if shift.is_empty() {
            return Err(Error::Invalid(format!("bad rotation `{name}`")));
        }
        return Ok(Arc::new(Translation::new("rotation", shift)));
    }
    Ok(match name {
        "cat" => Arc::new(ToralAutomorphism::cat()),
        "identity" => Arc::new(Translation::identity(2)),
        "rotation" => Arc::new(Translation::golden_rotation()),
        other => return Err(Error::UnknownSystem(other.to_string())),
    })
}

fn parse_numbers(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| Error::Invalid(format!("not a number: `{t}`")))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CeilingShape {
    Const {
        c: f64,
    },
    /// `a + b cos(2 pi x_0)`
    Cosine {
        a: f64,
        b: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ceiling {
    pub shape: CeilingShape,
    /// Declared lower bound.
    pub alpha: f64,
}

impl Ceiling {
    pub fn constant(c: f64) -> Self {
        Self {
            shape: CeilingShape::Const { c },
            alpha: c,
        }
    }

    pub fn cosine(a: f64, b: f64) -> Result<Self> {
        if !(b >= 0.0) {
            return Err(Error::Invalid(format!(
                "cosine ceiling needs b >= 0, got {b}"
            )));
        }
        Ok(Self {
            shape: CeilingShape::Cosine { a, b },
            alpha: a - b,
        })
    }

    /// Parses `const:c` or `cosine:a,b`.
    pub fn parse(s: &str) -> Result<Self> {
        let (kind, args) = s
            .split_once(':')
            .ok_or_else(|| Error::Invalid(format!("bad ceiling `{s}`")))?;
        let v = parse_numbers(args)?;
        match (kind, v.as_slice()) {
            ("const", [c]) => Ok(Self::constant(*c)),
            ("cosine", [a, b]) => Self::cosine(*a, *b),
            _ => Err(Error::Invalid(format!("bad ceiling `{s}`"))),
        }
    }

    pub fn with_alpha(mut self, alpha: f64) -> Self {
        self.alpha = alpha;
        self
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        match self.shape {
            CeilingShape::Const { c } => c,
            CeilingShape::Cosine { a, b } => a + b * (2.0 * PI * x[0]).cos(),
        }
    }

    pub fn max_value(&self) -> f64 {
        match self.shape {
            CeilingShape::Const { c } => c,
            CeilingShape::Cosine { a, b } => a + b,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuspensionPoint {
    pub base_point: Vec<f64>,
    pub height: f64,
}

#[derive(Debug, Clone)]
pub struct SuspensionSystem {
    pub base: Arc<dyn BaseMap>,
    pub ceiling: Ceiling,
    /// Monte-Carlo estimate of `int h d(eta)`.
    pub integral: f64,
    pub integral_stderr: f64,
}

/// Builds the suspension of `base` under `ceiling` after checking the
/// declared lower bound on samples of the base measure.
pub fn suspend(base: Arc<dyn BaseMap>, ceiling: Ceiling) -> Result<SuspensionSystem> {
    if !(ceiling.alpha > 0.0) {
        return Err(Error::NonPositiveCeiling(ceiling.alpha));
    }
    let mut rng = substream(CEILING_SEED, 0);
    let mut values = Vec::with_capacity(CEILING_SAMPLES);
    for _ in 0..CEILING_SAMPLES {
        let x = base.sample_invariant(&mut rng);
        let h = ceiling.eval(&x);
        if h < ceiling.alpha {
            return Err(Error::CeilingBoundViolated {
                point: x,
                value: h,
                alpha: ceiling.alpha,
            });
        }
        values.push(h);
    }
    let (integral, integral_stderr) = mean_stderr(&values);
    Ok(SuspensionSystem {
        base,
        ceiling,
        integral,
        integral_stderr,
    })
}

impl SuspensionSystem {
    pub fn is_flow(&self) -> bool {
        self.base.invertible()
    }

    pub fn canonical(&self, p: &SuspensionPoint) -> Result<SuspensionPoint> {
        self.evolve(p, 0.0)
    }

    /// `S^s(p)`; negative `s` requires an invertible base.
    pub fn evolve(&self, p: &SuspensionPoint, s: f64) -> Result<SuspensionPoint> {
        if !s.is_finite() {
            return Err(Error::Invalid(format!("non-finite time {s}")));
        }
        let mut x = p.base_point.clone();
        let mut r = p.height + s;
        loop {
            let h = self.ceiling.eval(&x);
            if r >= h {
                r -= h;
                x = self.base.apply(&x);
            } else if r < 0.0 {
                x = self.base.inverse(&x).ok_or(Error::NotInvertible)?;
                r += self.ceiling.eval(&x);
            } else {
                break;
            }
        }
        Ok(SuspensionPoint {
            base_point: x,
            height: r,
        })
    }

    /// Predicted entropy of the time-1 map: base entropy over the mean ceiling.
    pub fn abramov_check(&self, base_entropy: f64) -> f64 {
        base_entropy / self.integral
    }

    /// One draw of the normalized lifted measure, by rejection.
    pub fn sample_lifted(&self, rng: &mut ChaCha8Rng) -> SuspensionPoint {
        let h_max = self.ceiling.max_value();
        loop {
            let x = self.base.sample_invariant(rng);
            let u = rng.random::<f64>() * h_max;
            if u < self.ceiling.eval(&x) {
                return SuspensionPoint {
                    base_point: x,
                    height: u,
                };
            }
        }
    }
}

/// `count` draws of `(eta x Leb) / int h`, sample `i` from substream `i`.
pub fn lift_measure_sample(
    sys: &SuspensionSystem,
    seed: u64,
    count: usize,
) -> Vec<SuspensionPoint> {
    par_map_indexed(count, |i| sys.sample_lifted(&mut substream(seed, i as u64)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpansivityReport {
    pub base: String,
    pub delta: f64,
    pub pairs: usize,
    pub horizon: usize,
    pub separated: usize,
    pub fraction: f64,
    /// Pairs redrawn because `y` landed on the orbit segment of `x`.
    pub redrawn: usize,
}

fn separates(base: &dyn BaseMap, x: &[f64], y: &[f64], delta: f64, horizon: usize) -> bool {
    let (mut fx, mut fy) = (x.to_vec(), y.to_vec());
    let (mut bx, mut by) = (x.to_vec(), y.to_vec());
    for _ in 0..horizon {
        fx = base.apply(&fx);
        fy = base.apply(&fy);
        bx = base.inverse(&bx).expect("checked invertible");
        by = base.inverse(&by).expect("checked invertible");
        if base.distance(&fx, &fy) > delta || base.distance(&bx, &by) > delta {
            return true;
        }
    }
    false
}

fn on_orbit_segment(base: &dyn BaseMap, x: &[f64], y: &[f64], horizon: usize) -> bool {
    let (mut f, mut b) = (x.to_vec(), x.to_vec());
    for _ in 0..horizon {
        f = base.apply(&f);
        b = base.inverse(&b).expect("checked invertible");
        if base.distance(&f, y) < 1e-12 || base.distance(&b, y) < 1e-12 {
            return true;
        }
    }
    false
}

/// Fraction of `delta`-close pairs whose orbits separate beyond `delta`
/// within `horizon` forward or backward iterates.
pub fn expansivity_probe(
    base: &dyn BaseMap,
    delta: f64,
    pairs: usize,
    horizon: usize,
    seed: u64,
) -> Result<ExpansivityReport> {
    if !base.invertible() {
        return Err(Error::NotInvertible);
    }
    if !(delta > 0.0) || pairs == 0 {
        return Err(Error::Invalid(
            "delta must be positive and pairs at least 1".into(),
        ));
    }
    let results: Vec<(bool, usize)> = par_map_indexed(pairs, |i| {
        let mut rng = substream(seed, i as u64);
        let mut redrawn = 0;
        loop {
            let x = base.sample_invariant(&mut rng);
            let radius = delta * rng.random::<f64>();
            let theta = 2.0 * PI * rng.random::<f64>();
            let mut dir: Vec<f64> = (0..base.dim()).map(|_| rng.random::<f64>() - 0.5).collect();
            if base.dim() == 2 {
                dir = vec![theta.cos(), theta.sin()];
            }
            let n = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
            if n == 0.0 {
                redrawn += 1;
                continue;
            }
            let y: Vec<f64> = x
                .iter()
                .zip(&dir)
                .map(|(a, d)| wrap(a + radius * d / n))
                .collect();
            if radius == 0.0 || on_orbit_segment(base, &x, &y, horizon) {
                redrawn += 1;
                continue;
            }
            return (separates(base, &x, &y, delta, horizon), redrawn);
        }
    });
    let separated = results.iter().filter(|r| r.0).count();
    Ok(ExpansivityReport {
        base: base.name().to_string(),
        delta,
        pairs,
        horizon,
        separated,
        fraction: separated as f64 / pairs as f64,
        redrawn: results.iter().map(|r| r.1).sum(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cat_system(c: f64) -> SuspensionSystem {
        suspend(Arc::new(ToralAutomorphism::cat()), Ceiling::constant(c)).unwrap()
    }

    fn pt(x: f64, y: f64, r: f64) -> SuspensionPoint {
        SuspensionPoint {
            base_point: vec![x, y],
            height: r,
        }
    }

    #[test]
    fn evolve_examples() {
        let s = cat_system(1.0);
        let p = s.evolve(&pt(0.1, 0.2, 0.25), 0.5).unwrap();
        assert_eq!(p, pt(0.1, 0.2, 0.75));
        let p = s.evolve(&pt(0.1, 0.2, 0.5), 1.0).unwrap();
        assert_eq!(p.height, 0.5);
        let cx = ToralAutomorphism::cat().apply(&[0.1, 0.2]);
        assert_eq!(p.base_point, cx);

        let s2 = cat_system(2.0);
        let p = s2.evolve(&pt(0.1, 0.2, 0.0), 5.0).unwrap();
        let c = ToralAutomorphism::cat();
        assert_eq!(p.base_point, c.apply(&c.apply(&[0.1, 0.2])));
        assert_eq!(p.height, 1.0);
    }

    #[test]
    fn backward_needs_inverse() {
        let non_inv = ToralAutomorphism::new("doubling", [[2, 0], [0, 1]]).unwrap();
        let s = suspend(Arc::new(non_inv), Ceiling::constant(1.0)).unwrap();
        assert!(!s.is_flow());
        assert_eq!(
            s.evolve(&pt(0.1, 0.1, 0.2), -0.5).unwrap_err(),
            Error::NotInvertible
        );
        let s = cat_system(1.0);
        let p = s.evolve(&pt(0.1, 0.2, 0.3), 2.5).unwrap();
        let back = s.evolve(&p, -2.5).unwrap();
        assert!((back.base_point[0] - 0.1).abs() < 1e-12 && (back.height - 0.3).abs() < 1e-12);
    }

    #[test]
    fn ceiling_validation() {
        let cat: Arc<dyn BaseMap> = Arc::new(ToralAutomorphism::cat());
        assert_eq!(
            suspend(cat.clone(), Ceiling::constant(0.0)).unwrap_err(),
            Error::NonPositiveCeiling(0.0)
        );
        assert!(matches!(
            suspend(
                cat.clone(),
                Ceiling::cosine(1.0, 0.5).unwrap().with_alpha(0.9)
            ),
            Err(Error::CeilingBoundViolated { .. })
        ));
        assert!(Ceiling::parse("cosine:1,-1").is_err());
        assert!(Ceiling::parse("sawtooth:1").is_err());
        assert_eq!(Ceiling::parse("const:2").unwrap(), Ceiling::constant(2.0));
        let s = suspend(cat, Ceiling::parse("const:2").unwrap()).unwrap();
        assert!((s.integral - 2.0).abs() <= 1e-12);
    }

    #[test]
    fn abramov_values() {
        let lc = ((3.0 + 5f64.sqrt()) / 2.0).ln();
        let h = ToralAutomorphism::cat().known_entropy().unwrap();
        assert!((h - lc).abs() < 1e-14);
        assert!((cat_system(1.0).abramov_check(h) - lc).abs() < 1e-12);
        assert!((cat_system(2.0).abramov_check(h) - lc / 2.0).abs() < 1e-12);
        assert_eq!(cat_system(3.0).abramov_check(0.0), 0.0);
    }

    #[test]
    fn inverse_round_trip() {
        let c = ToralAutomorphism::cat();
        let mut rng = substream(1, 0);
        for _ in 0..100 {
            let x = c.sample_invariant(&mut rng);
            let y = c.apply(&c.inverse(&x).unwrap());
            assert!(c.distance(&x, &y) < 1e-12);
        }
    }

    #[test]
    fn expansivity_examples() {
        let cat = ToralAutomorphism::cat();
        assert_eq!(
            expansivity_probe(&cat, 0.1, 200, 50, 1).unwrap().fraction,
            1.0
        );
        let id = Translation::identity(2);
        assert_eq!(
            expansivity_probe(&id, 0.1, 50, 50, 1).unwrap().fraction,
            0.0
        );
        let rot = Translation::golden_rotation();
        assert_eq!(
            expansivity_probe(&rot, 0.1, 50, 50, 1).unwrap().fraction,
            0.0
        );
        let dbl = ToralAutomorphism::new("doubling", [[2, 0], [0, 1]]).unwrap();
        assert_eq!(
            expansivity_probe(&dbl, 0.1, 5, 5, 1).unwrap_err(),
            Error::NotInvertible
        );
    }
}
