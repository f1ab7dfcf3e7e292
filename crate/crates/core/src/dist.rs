//! Univariate component densities and the γ-weighted retain/forget mixture.

use std::f64::consts::{E, PI};

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::quadrature;

/// Half-width of the integration window in units of the widest (tempered)
/// component standard deviation.
pub const WINDOW_STDDEVS: f64 = 12.0;

/// Offsets (in standard deviations) around each Gaussian mean at which the
/// quadrature window is split, so narrow peaks are never stepped over.
const BREAK_STDDEVS: [f64; 6] = [0.0, 1.0, 2.0, 4.0, 8.0, 12.0];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianComponent {
    mean: f64,
    variance: f64,
}

impl GaussianComponent {
    pub fn new(mean: f64, variance: f64) -> Result<Self> {
        if !mean.is_finite() || !(variance > 0.0) || !variance.is_finite() {
            return Err(Error::invalid(format!(
                "Gaussian needs finite mean and variance > 0, got N({mean}, {variance})"
            )));
        }
        Ok(Self { mean, variance })
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn variance(&self) -> f64 {
        self.variance
    }

    pub fn std_dev(&self) -> f64 {
        self.variance.sqrt()
    }

    pub fn log_density(&self, z: f64) -> f64 {
        let d = z - self.mean;
        -0.5 * (2.0 * PI * self.variance).ln() - d * d / (2.0 * self.variance)
    }

    pub fn density(&self, z: f64) -> f64 {
        self.log_density(z).exp()
    }

    pub fn entropy(&self) -> f64 {
        0.5 * (2.0 * PI * E * self.variance).ln()
    }

    pub fn peak_density(&self) -> f64 {
        (2.0 * PI * self.variance).powf(-0.5)
    }

    /// Returns `N(μ, T·v)` and `∫ N(μ, v)^{1/T}`, so that
    /// `N(μ,v)(z)^{1/T} == normalizer · N(μ,T·v)(z)`.
    pub fn temper(&self, temperature: f64) -> Result<(GaussianComponent, f64)> {
        check_temperature(temperature)?;
        let t = temperature;
        let normalizer = (2.0 * PI * self.variance).powf((t - 1.0) / (2.0 * t)) * t.sqrt();
        Ok((GaussianComponent { mean: self.mean, variance: t * self.variance }, normalizer))
    }

    pub fn sample_one<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let x: f64 = StandardNormal.sample(rng);
        self.mean + self.std_dev() * x
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UniformComponent {
    lo: f64,
    hi: f64,
}

impl UniformComponent {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::invalid(format!("uniform support needs lo < hi, got [{lo}, {hi}]")));
        }
        Ok(Self { lo, hi })
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn contains(&self, z: f64) -> bool {
        (self.lo..=self.hi).contains(&z)
    }

    pub fn density(&self, z: f64) -> f64 {
        if self.contains(z) {
            1.0 / self.width()
        } else {
            0.0
        }
    }

    pub fn log_density(&self, z: f64) -> f64 {
        if self.contains(z) {
            -self.width().ln()
        } else {
            f64::NEG_INFINITY
        }
    }

    pub fn entropy(&self) -> f64 {
        self.width().ln()
    }

    /// Equal to the squared ℓ2 norm of the density.
    pub fn peak_density(&self) -> f64 {
        1.0 / self.width()
    }

    pub fn overlaps(&self, other: &UniformComponent) -> bool {
        self.lo < other.hi && other.lo < self.hi
    }

    pub fn sample_one<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.lo + self.width() * rng.random::<f64>()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Component {
    Gaussian(GaussianComponent),
    Uniform(UniformComponent),
}

impl From<GaussianComponent> for Component {
    fn from(g: GaussianComponent) -> Self {
        Component::Gaussian(g)
    }
}

impl From<UniformComponent> for Component {
    fn from(u: UniformComponent) -> Self {
        Component::Uniform(u)
    }
}

impl Component {
    pub fn gaussian(mean: f64, variance: f64) -> Result<Self> {
        GaussianComponent::new(mean, variance).map(Component::Gaussian)
    }

    pub fn uniform(lo: f64, hi: f64) -> Result<Self> {
        UniformComponent::new(lo, hi).map(Component::Uniform)
    }

    /// Natural log of the density; `-∞` outside a uniform support.
    pub fn log_density(&self, z: f64) -> f64 {
        match self {
            Component::Gaussian(g) => g.log_density(z),
            Component::Uniform(u) => u.log_density(z),
        }
    }

    pub fn density(&self, z: f64) -> f64 {
        match self {
            Component::Gaussian(g) => g.density(z),
            Component::Uniform(u) => u.density(z),
        }
    }

    pub fn entropy(&self) -> f64 {
        match self {
            Component::Gaussian(g) => g.entropy(),
            Component::Uniform(u) => u.entropy(),
        }
    }

    pub fn peak_density(&self) -> f64 {
        match self {
            Component::Gaussian(g) => g.peak_density(),
            Component::Uniform(u) => u.peak_density(),
        }
    }

    pub fn mean(&self) -> f64 {
        match self {
            Component::Gaussian(g) => g.mean(),
            Component::Uniform(u) => 0.5 * (u.lo + u.hi),
        }
    }

    pub fn variance(&self) -> f64 {
        match self {
            Component::Gaussian(g) => g.variance(),
            Component::Uniform(u) => u.width() * u.width() / 12.0,
        }
    }

    pub fn as_gaussian(&self) -> Option<&GaussianComponent> {
        match self {
            Component::Gaussian(g) => Some(g),
            Component::Uniform(_) => None,
        }
    }

    /// Tempered component and `∫ c^{1/T}`. A uniform density keeps its
    /// support; only the constant changes.
    pub fn temper(&self, temperature: f64) -> Result<(Component, f64)> {
        match self {
            Component::Gaussian(g) => g.temper(temperature).map(|(g, z)| (Component::Gaussian(g), z)),
            Component::Uniform(u) => {
                check_temperature(temperature)?;
                Ok((*self, u.width().powf(1.0 - 1.0 / temperature)))
            }
        }
    }

    pub fn sample_one<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            Component::Gaussian(g) => g.sample_one(rng),
            Component::Uniform(u) => u.sample_one(rng),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, n: usize) -> Vec<f64> {
        (0..n).map(|_| self.sample_one(rng)).collect()
    }

    /// Integration window of the component after tempering at `temperature`.
    fn window(&self, temperature: f64) -> (f64, f64) {
        match self {
            Component::Gaussian(g) => {
                let half = WINDOW_STDDEVS * (temperature * g.variance).sqrt();
                (g.mean - half, g.mean + half)
            }
            Component::Uniform(u) => (u.lo, u.hi),
        }
    }

    fn push_breaks(&self, temperature: f64, out: &mut Vec<f64>) {
        match self {
            Component::Gaussian(g) => {
                let sd = (temperature * g.variance).sqrt();
                for k in BREAK_STDDEVS {
                    out.push(g.mean - k * sd);
                    out.push(g.mean + k * sd);
                }
            }
            Component::Uniform(u) => {
                out.push(u.lo);
                out.push(u.hi);
            }
        }
    }
}

fn check_temperature(t: f64) -> Result<()> {
    if t >= 1.0 && t.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(format!("temperature must be >= 1, got {t}")))
    }
}

/// `p(z) = (1-γ)·p_r(z) + γ·p_f(z)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mixture {
    gamma: f64,
    retain: Component,
    forget: Component,
}

impl Mixture {
    pub fn new(gamma: f64, retain: impl Into<Component>, forget: impl Into<Component>) -> Result<Self> {
        if !(gamma > 0.0 && gamma < 1.0) {
            return Err(Error::invalid(format!("mixture weight γ must lie in (0,1), got {gamma}")));
        }
        Ok(Self { gamma, retain: retain.into(), forget: forget.into() })
    }

    /// Two-Gaussian mixture `(1-γ)·N(μ_r, v_r) + γ·N(μ_f, v_f)`.
    pub fn gaussian(gamma: f64, mu_r: f64, v_r: f64, mu_f: f64, v_f: f64) -> Result<Self> {
        Self::new(gamma, GaussianComponent::new(mu_r, v_r)?, GaussianComponent::new(mu_f, v_f)?)
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn retain(&self) -> &Component {
        &self.retain
    }

    pub fn forget(&self) -> &Component {
        &self.forget
    }

    pub fn is_gaussian(&self) -> bool {
        self.retain.as_gaussian().is_some() && self.forget.as_gaussian().is_some()
    }

    /// `‖p_f‖_∞`.
    pub fn forget_peak(&self) -> f64 {
        self.forget.peak_density()
    }

    pub fn density(&self, z: f64) -> f64 {
        (1.0 - self.gamma) * self.retain.density(z) + self.gamma * self.forget.density(z)
    }

    pub fn log_density(&self, z: f64) -> f64 {
        log_add((1.0 - self.gamma).ln() + self.retain.log_density(z), self.gamma.ln() + self.forget.log_density(z))
    }

    /// Draws `(z, s)` pairs: `s ~ Bernoulli(1-γ)`, then `z ~ p_r` when `s`
    /// is true and `z ~ p_f` otherwise.
    pub fn sample_labeled<R: Rng + ?Sized>(&self, rng: &mut R, n: usize) -> Vec<(f64, bool)> {
        (0..n)
            .map(|_| {
                let s = rng.random::<f64>() < 1.0 - self.gamma;
                let z = if s { self.retain.sample_one(rng) } else { self.forget.sample_one(rng) };
                (z, s)
            })
            .collect()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, n: usize) -> Vec<f64> {
        self.sample_labeled(rng, n).into_iter().map(|(z, _)| z).collect()
    }

    /// `[min mean - 12·max sd, max mean + 12·max sd]` over the components
    /// tempered at `temperature`; uniform supports are always included.
    pub fn integration_window(&self, temperature: f64) -> (f64, f64) {
        let comps = [self.retain, self.forget];
        let max_sd = comps
            .iter()
            .filter_map(|c| c.as_gaussian())
            .map(|g| (temperature * g.variance()).sqrt())
            .fold(0.0, f64::max);
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for c in &comps {
            let (a, b) = match c {
                Component::Gaussian(g) => (g.mean() - WINDOW_STDDEVS * max_sd, g.mean() + WINDOW_STDDEVS * max_sd),
                Component::Uniform(_) => c.window(temperature),
            };
            lo = lo.min(a);
            hi = hi.max(b);
        }
        (lo, hi)
    }

    /// Sorted quadrature breakpoints inside the integration window.
    pub fn breakpoints(&self, temperature: f64) -> Vec<f64> {
        let (lo, hi) = self.integration_window(temperature);
        let mut pts = vec![lo, hi];
        self.retain.push_breaks(temperature, &mut pts);
        self.forget.push_breaks(temperature, &mut pts);
        pts.retain(|x| *x >= lo && *x <= hi);
        pts.sort_by(|a, b| a.total_cmp(b));
        pts.dedup();
        pts
    }

    /// Integrates `f` across the window used for temperature `temperature`.
    pub fn integrate<F: Fn(f64) -> f64>(&self, f: F, temperature: f64, tol: f64) -> Result<f64> {
        quadrature::integrate_pieces(f, &self.breakpoints(temperature), tol)
    }

    /// Like [`Mixture::integrate`], with extra breakpoints where `f` has kinks.
    pub fn integrate_with_breaks<F: Fn(f64) -> f64>(
        &self,
        f: F,
        temperature: f64,
        tol: f64,
        extra: &[f64],
    ) -> Result<f64> {
        let mut pts = self.breakpoints(temperature);
        let (lo, hi) = (pts[0], pts[pts.len() - 1]);
        pts.extend(extra.iter().copied().filter(|x| *x > lo && *x < hi));
        pts.sort_by(|a, b| a.total_cmp(b));
        pts.dedup();
        quadrature::integrate_pieces(f, &pts, tol)
    }

    /// Points inside the integration window where the density crosses
    /// `level`, located by a fine scan of every piece followed by bisection.
    pub fn level_crossings(&self, level: f64, temperature: f64) -> Vec<f64> {
        const SCAN: usize = 256;
        let pts = self.breakpoints(temperature);
        let g = |z: f64| self.log_density(z) - level.ln();
        let mut out = Vec::new();
        for w in pts.windows(2) {
            let mut a = w[0];
            let mut ga = g(a);
            for k in 1..=SCAN {
                let b = w[0] + (w[1] - w[0]) * k as f64 / SCAN as f64;
                let gb = g(b);
                if (ga < 0.0) != (gb < 0.0) && ga.is_finite() && gb.is_finite() {
                    let (mut l, mut r, gl) = (a, b, ga);
                    for _ in 0..200 {
                        let mid = 0.5 * (l + r);
                        if mid <= l || mid >= r {
                            break;
                        }
                        if (g(mid) < 0.0) == (gl < 0.0) {
                            l = mid;
                        } else {
                            r = mid;
                        }
                    }
                    out.push(0.5 * (l + r));
                }
                a = b;
                ga = gb;
            }
        }
        out
    }
}

/// `ln(e^a + e^b)` tolerant of `-∞` operands.
pub fn log_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn standard_normal_log_density_at_zero() {
        let g = Component::gaussian(0.0, 1.0).unwrap();
        assert!((g.log_density(0.0) + 0.918_938_533_204_672_7).abs() < 1e-15);
    }

    #[test]
    fn uniform_log_density_inside_and_outside() {
        let u = Component::uniform(0.0, 1.0).unwrap();
        assert_eq!(u.log_density(0.5), 0.0);
        assert_eq!(u.log_density(2.0), f64::NEG_INFINITY);
        assert_eq!(u.density(2.0), 0.0);
    }

    #[test]
    fn constructors_reject_bad_parameters() {
        assert!(GaussianComponent::new(0.0, 0.0).is_err());
        assert!(GaussianComponent::new(0.0, -1.0).is_err());
        assert!(UniformComponent::new(1.0, 1.0).is_err());
        assert!(Mixture::gaussian(0.0, 1.0, 1.0, 0.0, 1.0).is_err());
        assert!(Mixture::gaussian(1.0, 1.0, 1.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn entropy_values() {
        let e1 = GaussianComponent::new(3.0, 1.0).unwrap().entropy();
        assert!((e1 - 0.5 * (2.0 * PI * E).ln()).abs() < 1e-15);
        assert!((e1 - 1.41894).abs() < 1e-5);
        assert_eq!(UniformComponent::new(0.0, 1.0).unwrap().entropy(), 0.0);
        let zero = GaussianComponent::new(0.0, 1.0 / (2.0 * PI * E)).unwrap().entropy();
        assert!(zero.abs() < 1e-15);
    }

    #[test]
    fn gaussian_entropy_matches_quadrature() {
        for v in [0.01, 0.5, 1.0, 4.0] {
            let g = Component::gaussian(0.3, v).unwrap();
            let m = Mixture::new(0.5, g, g).unwrap();
            let h = m.integrate(|z| -g.density(z) * g.log_density(z), 1.0, 1e-11).unwrap();
            assert!((h - g.entropy()).abs() < 1e-8, "v={v}: {h} vs {}", g.entropy());
        }
    }

    #[test]
    fn temper_identity_and_normalizer() {
        let g = GaussianComponent::new(0.0, 1.0).unwrap();
        let (g1, z1) = g.temper(1.0).unwrap();
        assert_eq!(g1, g);
        assert_eq!(z1, 1.0);
        let (_, z2) = g.temper(2.0).unwrap();
        assert!((z2 - 2.23903).abs() < 1e-5);
        assert!(g.temper(0.5).is_err());
    }

    #[test]
    fn tempered_density_is_scaled_power() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for (mu, v, t) in [(0.0, 1.0, 2.0), (1.5, 0.01, 3.0), (-2.0, 7.0, 1.25)] {
            let g = GaussianComponent::new(mu, v).unwrap();
            let (gt, c) = g.temper(t).unwrap();
            for _ in 0..10 {
                let z = mu + 3.0 * v.sqrt() * (2.0 * rng.random::<f64>() - 1.0);
                let lhs = g.density(z).powf(1.0 / t);
                let rhs = c * gt.density(z);
                assert!((lhs - rhs).abs() <= 1e-12 * lhs.max(1.0), "{lhs} vs {rhs}");
            }
        }
    }

    #[test]
    fn tempered_normalizer_matches_quadrature() {
        for v in [1e-3, 0.1, 1.0, 4.0] {
            for t in [1.0, 1.5, 2.0, 3.0] {
                let g = Component::gaussian(0.7, v).unwrap();
                let m = Mixture::new(0.5, g, g).unwrap();
                let (_, exact) = g.temper(t).unwrap();
                let q = m.integrate(|z| g.density(z).powf(1.0 / t), t, 1e-12).unwrap();
                assert!(((q - exact) / exact).abs() < 1e-8, "v={v} t={t}: {q} vs {exact}");
            }
        }
    }

    #[test]
    fn uniform_temper_preserves_support() {
        let u = Component::uniform(0.0, 4.0).unwrap();
        let (ut, c) = u.temper(2.0).unwrap();
        assert_eq!(ut, u);
        assert!((u.density(1.0).powf(0.5) - c * ut.density(1.0)).abs() < 1e-15);
    }

    #[test]
    fn mixture_integrates_to_one() {
        let cases = [
            Mixture::gaussian(0.1, 1.0, 1.0, 0.0, 1.0).unwrap(),
            Mixture::gaussian(0.1, 1.0, 1.0, 0.0, 1e-6).unwrap(),
            Mixture::gaussian(0.4, -3.0, 0.2, 5.0, 9.0).unwrap(),
            Mixture::new(0.3, Component::uniform(0.0, 1.0).unwrap(), Component::uniform(2.0, 2.5).unwrap()).unwrap(),
            Mixture::new(0.2, Component::gaussian(0.0, 1.0).unwrap(), Component::uniform(3.0, 3.1).unwrap()).unwrap(),
        ];
        for m in cases {
            let total = m.integrate(|z| m.density(z), 1.0, 1e-11).unwrap();
            assert!((total - 1.0).abs() < 1e-8, "{m:?}: {total}");
        }
    }

    #[test]
    fn mixture_log_density_agrees_with_density() {
        let m = Mixture::gaussian(0.1, 1.0, 1.0, 0.0, 1e-3).unwrap();
        for z in [-3.0, -0.01, 0.0, 0.02, 1.0, 4.0] {
            assert!((m.log_density(z).exp() - m.density(z)).abs() < 1e-12 * m.density(z).max(1.0));
        }
        let u =
            Mixture::new(0.3, Component::uniform(0.0, 1.0).unwrap(), Component::uniform(2.0, 3.0).unwrap()).unwrap();
        assert_eq!(u.log_density(1.5), f64::NEG_INFINITY);
        assert!((u.log_density(2.5) - 0.3f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn peak_density_matches_dense_grid() {
        for v in [1e-3, 0.3, 1.0, 5.0] {
            let g = GaussianComponent::new(0.25, v).unwrap();
            let sd = v.sqrt();
            let grid_max = (-100_000..=100_000).map(|i| g.density(0.25 + sd * i as f64 * 1e-5)).fold(0.0, f64::max);
            assert!((grid_max - g.peak_density()).abs() < 1e-10 * g.peak_density().max(1.0));
        }
    }

    #[test]
    fn sampling_is_deterministic_per_seed() {
        let m = Mixture::gaussian(0.1, 1.0, 1.0, 0.0, 1.0).unwrap();
        let a = m.sample(&mut ChaCha8Rng::seed_from_u64(5), 100);
        let b = m.sample(&mut ChaCha8Rng::seed_from_u64(5), 100);
        assert_eq!(a, b);
        let u = Component::uniform(0.0, 1.0).unwrap();
        assert_eq!(u.sample(&mut ChaCha8Rng::seed_from_u64(9), 50), u.sample(&mut ChaCha8Rng::seed_from_u64(9), 50));
    }

    #[test]
    fn mixture_label_fraction() {
        let m = Mixture::gaussian(0.1, 1.0, 1.0, 0.0, 1.0).unwrap();
        let n = 1_000_000;
        let pts = m.sample_labeled(&mut ChaCha8Rng::seed_from_u64(1), n);
        let frac = pts.iter().filter(|(_, s)| !s).count() as f64 / n as f64;
        assert!((frac - 0.1).abs() <= 3.0 * (0.09f64 / n as f64).sqrt(), "{frac}");
    }

    #[test]
    fn gaussian_sample_moments() {
        let g = Component::gaussian(1.0, 1.0).unwrap();
        let n = 1_000_000;
        let xs = g.sample(&mut ChaCha8Rng::seed_from_u64(2), n);
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!((mean - 1.0).abs() < 3e-3, "{mean}");
        // Var of the sample variance of a Gaussian is 2σ⁴/(n-1).
        assert!((var - 1.0).abs() < 4.0 * (2.0 / n as f64).sqrt(), "{var}");
    }

    #[test]
    fn uniform_sample_moments() {
        let u = Component::uniform(-1.0, 3.0).unwrap();
        let n = 1_000_000;
        let xs = u.sample(&mut ChaCha8Rng::seed_from_u64(3), n);
        let mean = xs.iter().sum::<f64>() / n as f64;
        assert!((mean - u.mean()).abs() < 4.0 * (u.variance() / n as f64).sqrt());
        assert!(xs.iter().all(|x| (-1.0..=3.0).contains(x)));
    }

    #[test]
    fn window_covers_tempered_components() {
        let m = Mixture::gaussian(0.1, 1.0, 1.0, 0.0, 1e-6).unwrap();
        let (lo, hi) = m.integration_window(2.0);
        let half = 12.0 * 2f64.sqrt();
        assert!((lo - (0.0 - half)).abs() < 1e-12);
        assert!((hi - (1.0 + half)).abs() < 1e-12);
        let b = m.breakpoints(2.0);
        assert!(b.windows(2).all(|w| w[0] < w[1]));
        assert!(b.contains(&0.0));
    }

    #[test]
    fn level_crossings_of_a_gaussian() {
        let m = Mixture::gaussian(0.3, 0.5, 1.0, 0.5, 1.0).unwrap();
        let level = 0.2;
        let half = (-2.0 * (level * (2.0 * PI).sqrt()).ln()).sqrt();
        let xs = m.level_crossings(level, 1.0);
        assert_eq!(xs.len(), 2);
        assert!((xs[0] - (0.5 - half)).abs() < 1e-12, "{xs:?}");
        assert!((xs[1] - (0.5 + half)).abs() < 1e-12, "{xs:?}");
        assert!(m.level_crossings(1.0, 1.0).is_empty());
    }

    #[test]
    fn extra_breaks_resolve_a_kink() {
        let m = Mixture::gaussian(0.3, 0.0, 1.0, 0.2, 1e-3).unwrap();
        let kinks = m.level_crossings(1.0, 1.0);
        assert_eq!(kinks.len(), 2);
        let f = |z: f64| m.density(z) * m.log_density(z).abs();
        let with = m.integrate_with_breaks(f, 1.0, 1e-10, &kinks).unwrap();
        let direct: f64 = m.integrate(|z| m.density(z) * m.log_density(z), 1.0, 1e-10).unwrap();
        assert!(with >= direct.abs() - 1e-9);
    }
}
