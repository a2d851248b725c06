//! Built-in cache models: Consistent, LinearRegression, PolynomialRegression
//! and Cyclic (autoregressive on a differenced series).

use std::collections::{BTreeMap, VecDeque};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::CacheError;
use crate::numeric::least_squares;
use crate::value::Value;
use crate::Millis;

pub const DEFAULT_WINDOW: usize = 20;
pub const DEFAULT_DEGREE: usize = 2;
pub const DEFAULT_AR_ORDER: usize = 2;

/// Model interface: observations in, extrapolations out.
pub trait CacheModel: Send {
    fn name(&self) -> &str;
    /// Observations required before `predict_value` succeeds.
    fn min_points(&self) -> usize;
    fn len(&self) -> usize;
    fn last_time(&self) -> Option<Millis>;
    fn add_point(&mut self, time: Millis, value: Value) -> Result<(), CacheError>;
    fn predict_value(&self, time: Millis) -> Result<Value, CacheError>;

    /// Latest instant a prediction may be served: last observation + delta.
    fn expiration_time(&self, delta: Millis) -> Option<Millis> {
        self.last_time().map(|t| t.saturating_add(delta))
    }

    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Model name plus numeric parameters, as declared in a device manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub name: String,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
}

impl ModelSpec {
    pub fn named(name: &str) -> Self {
        Self {
            name: name.to_string(),
            params: BTreeMap::new(),
        }
    }

    pub fn with(mut self, key: &str, value: f64) -> Self {
        self.params.insert(key.to_string(), value);
        self
    }

    fn usize_param(&self, key: &str, default: usize) -> Result<usize, CacheError> {
        match self.params.get(key) {
            None => Ok(default),
            Some(v) if *v >= 0.0 && v.fract() == 0.0 => Ok(*v as usize),
            Some(v) => Err(CacheError::BadModelParam(format!("{key}={v}"))),
        }
    }
}

pub type ModelFactory = Arc<dyn Fn(&ModelSpec) -> Result<Box<dyn CacheModel>, CacheError> + Send + Sync>;

/// Name → factory table for cache models.
#[derive(Clone)]
pub struct ModelRegistry {
    factories: BTreeMap<String, ModelFactory>,
}

impl Default for ModelRegistry {
    fn default() -> Self {
        let mut r = Self {
            factories: BTreeMap::new(),
        };
        r.register("Consistent", Arc::new(|_| Ok(Box::new(Consistent::default()))));
        r.register(
            "LinearRegression",
            Arc::new(|spec| {
                let window = spec.usize_param("window", DEFAULT_WINDOW)?;
                Ok(Box::new(PolynomialRegression::linear(window)?))
            }),
        );
        r.register(
            "PolynomialRegression",
            Arc::new(|spec| {
                let window = spec.usize_param("window", DEFAULT_WINDOW)?;
                let degree = spec.usize_param("degree", DEFAULT_DEGREE)?;
                Ok(Box::new(PolynomialRegression::new(degree, window)?))
            }),
        );
        r.register(
            "Cyclic",
            Arc::new(|spec| {
                let window = spec.usize_param("window", DEFAULT_WINDOW)?;
                let order = spec.usize_param("order", DEFAULT_AR_ORDER)?;
                let season = spec.usize_param("season", 0)?;
                Ok(Box::new(Cyclic::new(order, (season > 0).then_some(season), window)?))
            }),
        );
        r
    }
}

impl ModelRegistry {
    pub fn register(&mut self, name: &str, factory: ModelFactory) {
        self.factories.insert(name.to_string(), factory);
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.factories.keys().map(String::as_str)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.factories.contains_key(name)
    }

    pub fn build(&self, spec: &ModelSpec) -> Result<Box<dyn CacheModel>, CacheError> {
        let factory = self
            .factories
            .get(&spec.name)
            .ok_or_else(|| CacheError::UnknownModel(spec.name.clone()))?;
        factory(spec)
    }
}

/// Bounded FIFO of strictly time-ordered observations.
#[derive(Debug, Clone)]
struct Window {
    capacity: usize,
    points: VecDeque<(Millis, Value)>,
}

impl Window {
    fn new(capacity: usize) -> Self {
        Self {
            capacity: capacity.max(1),
            points: VecDeque::with_capacity(capacity),
        }
    }

    fn push(&mut self, time: Millis, value: Value) -> Result<(), CacheError> {
        if let Some(&(last, ref prev)) = self.points.back() {
            if time <= last {
                return Err(CacheError::NonMonotonicTime { last, got: time });
            }
            if prev.data_type() != value.data_type() {
                return Err(CacheError::TypeMismatch(format!(
                    "window holds {} but got {}",
                    prev.data_type().name(),
                    value.data_type().name()
                )));
            }
        }
        self.points.push_back((time, value));
        while self.points.len() > self.capacity {
            self.points.pop_front();
        }
        Ok(())
    }

    fn last_time(&self) -> Option<Millis> {
        self.points.back().map(|p| p.0)
    }
}

/// Splits a numeric value into regression components.
fn components(value: &Value) -> Result<Vec<f64>, CacheError> {
    match value {
        Value::Double(v) => Ok(vec![*v]),
        Value::Coordinates { x, y } => Ok(vec![*x, *y]),
        other => Err(CacheError::TypeMismatch(format!(
            "numeric models cannot fit {}",
            other.data_type().name()
        ))),
    }
}

fn rebuild(template: &Value, comps: &[f64]) -> Value {
    match template {
        Value::Coordinates { .. } => Value::Coordinates {
            x: comps[0],
            y: comps[1],
        },
        _ => Value::Double(comps[0]),
    }
}

/// Predicts the most recent observation.
#[derive(Debug, Clone, Default)]
pub struct Consistent {
    last: Option<(Millis, Value)>,
    count: usize,
}

impl CacheModel for Consistent {
    fn name(&self) -> &str {
        "Consistent"
    }
    fn min_points(&self) -> usize {
        1
    }
    fn len(&self) -> usize {
        self.count.min(1)
    }
    fn last_time(&self) -> Option<Millis> {
        self.last.as_ref().map(|p| p.0)
    }
    fn add_point(&mut self, time: Millis, value: Value) -> Result<(), CacheError> {
        if let Some((last, _)) = &self.last {
            if time <= *last {
                return Err(CacheError::NonMonotonicTime { last: *last, got: time });
            }
        }
        self.last = Some((time, value));
        self.count += 1;
        Ok(())
    }
    fn predict_value(&self, _time: Millis) -> Result<Value, CacheError> {
        self.last
            .as_ref()
            .map(|p| p.1.clone())
            .ok_or(CacheError::InsufficientData { have: 0, need: 1 })
    }
}

/// Least-squares polynomial in time over the window. Degree 1 is the
/// LinearRegression model.
#[derive(Debug, Clone)]
pub struct PolynomialRegression {
    name: &'static str,
    degree: usize,
    window: Window,
    fit: Option<PolyFit>,
}

#[derive(Debug, Clone)]
struct PolyFit {
    origin: f64,
    scale: f64,
    /// One coefficient vector per value component, lowest order first.
    coeffs: Vec<Vec<f64>>,
    template: Value,
}

impl PolynomialRegression {
    pub fn new(degree: usize, window: usize) -> Result<Self, CacheError> {
        if window < degree + 1 {
            return Err(CacheError::BadModelParam(format!(
                "window {window} too small for degree {degree}"
            )));
        }
        Ok(Self {
            name: "PolynomialRegression",
            degree,
            window: Window::new(window),
            fit: None,
        })
    }

    pub fn linear(window: usize) -> Result<Self, CacheError> {
        let mut m = Self::new(1, window)?;
        m.name = "LinearRegression";
        Ok(m)
    }

    pub fn coefficients(&self) -> Option<&[Vec<f64>]> {
        self.fit.as_ref().map(|f| f.coeffs.as_slice())
    }

    fn refit(&mut self) -> Result<(), CacheError> {
        let n = self.window.points.len();
        if n < self.degree + 1 {
            self.fit = None;
            return Ok(());
        }
        let origin = self.window.last_time().unwrap() as f64;
        let first = self.window.points.front().unwrap().0 as f64;
        let scale = (origin - first).max(1.0);
        let cols = self.degree + 1;
        let mut design = Vec::with_capacity(n * cols);
        for (t, _) in &self.window.points {
            let s = (*t as f64 - origin) / scale;
            let mut p = 1.0;
            for _ in 0..cols {
                design.push(p);
                p *= s;
            }
        }
        let per_point: Vec<Vec<f64>> = self
            .window
            .points
            .iter()
            .map(|(_, v)| components(v))
            .collect::<Result<_, _>>()?;
        let dims = per_point[0].len();
        let mut coeffs = Vec::with_capacity(dims);
        for d in 0..dims {
            let rhs: Vec<f64> = per_point.iter().map(|c| c[d]).collect();
            coeffs.push(least_squares(n, cols, &design, &rhs).ok_or(CacheError::Singular)?);
        }
        self.fit = Some(PolyFit {
            origin,
            scale,
            coeffs,
            template: self.window.points.back().unwrap().1.clone(),
        });
        Ok(())
    }
}

impl CacheModel for PolynomialRegression {
    fn name(&self) -> &str {
        self.name
    }
    fn min_points(&self) -> usize {
        self.degree + 1
    }
    fn len(&self) -> usize {
        self.window.points.len()
    }
    fn last_time(&self) -> Option<Millis> {
        self.window.last_time()
    }
    fn add_point(&mut self, time: Millis, value: Value) -> Result<(), CacheError> {
        components(&value)?;
        self.window.push(time, value)?;
        self.refit()
    }
    fn predict_value(&self, time: Millis) -> Result<Value, CacheError> {
        let fit = self.fit.as_ref().ok_or(CacheError::InsufficientData {
            have: self.len(),
            need: self.min_points(),
        })?;
        let s = (time as f64 - fit.origin) / fit.scale;
        let comps: Vec<f64> = fit
            .coeffs
            .iter()
            .map(|c| c.iter().rev().fold(0.0, |acc, k| acc * s + k))
            .collect();
        Ok(rebuild(&fit.template, &comps))
    }
}

/// ARIMA(p,1,0)-style model: the window is differenced (first differences,
/// or seasonal differences at lag `season` when given), an AR(p) with
/// intercept is fitted by least squares, and forecasts are integrated back.
/// Time is measured in mean sampling steps of the window.
#[derive(Debug, Clone)]
pub struct Cyclic {
    order: usize,
    season: Option<usize>,
    window: Window,
    fit: Option<ArFit>,
}

#[derive(Debug, Clone)]
struct ArFit {
    /// intercept, then phi_1..phi_p, per component
    params: Vec<Vec<f64>>,
    step: f64,
    template: Value,
}

impl Cyclic {
    pub fn new(order: usize, season: Option<usize>, window: usize) -> Result<Self, CacheError> {
        if order == 0 {
            return Err(CacheError::BadModelParam("order must be >= 1".into()));
        }
        let lag = season.unwrap_or(1);
        // room for two full seasons plus the AR lags
        let capacity = window.max(2 * lag + order + 1).max(Self::min_points_for(order, lag));
        Ok(Self {
            order,
            season,
            window: Window::new(capacity),
            fit: None,
        })
    }

    fn min_points_for(order: usize, lag: usize) -> usize {
        // lag differenced points, then twice as many rows as unknowns
        lag + order + 2 * (order + 1)
    }

    fn lag(&self) -> usize {
        self.season.unwrap_or(1)
    }

    pub fn ar_params(&self) -> Option<&[Vec<f64>]> {
        self.fit.as_ref().map(|f| f.params.as_slice())
    }

    fn series(&self) -> Result<Vec<Vec<f64>>, CacheError> {
        let per_point: Vec<Vec<f64>> = self
            .window
            .points
            .iter()
            .map(|(_, v)| components(v))
            .collect::<Result<_, _>>()?;
        let dims = per_point.first().map_or(0, Vec::len);
        Ok((0..dims).map(|d| per_point.iter().map(|c| c[d]).collect()).collect())
    }

    fn refit(&mut self) -> Result<(), CacheError> {
        let n = self.window.points.len();
        if n < self.min_points() {
            self.fit = None;
            return Ok(());
        }
        let lag = self.lag();
        let p = self.order;
        let first = self.window.points.front().unwrap().0 as f64;
        let last = self.window.last_time().unwrap() as f64;
        let step = ((last - first) / (n - 1) as f64).max(1.0);
        let mut params = Vec::new();
        for y in self.series()? {
            let z: Vec<f64> = (lag..n).map(|i| y[i] - y[i - lag]).collect();
            let rows = z.len() - p;
            let cols = p + 1;
            let mut design = Vec::with_capacity(rows * cols);
            let mut rhs = Vec::with_capacity(rows);
            for t in p..z.len() {
                design.push(1.0);
                for k in 1..=p {
                    design.push(z[t - k]);
                }
                rhs.push(z[t]);
            }
            let phi = least_squares(rows, cols, &design, &rhs).ok_or(CacheError::Singular)?;
            // constant drift over the same rows: mean difference, no AR terms
            let mut drift = vec![0.0; cols];
            drift[0] = rhs.iter().sum::<f64>() / rows as f64;
            let rss = |params: &[f64]| -> f64 {
                (0..rows)
                    .map(|r| {
                        let fit: f64 = (0..cols).map(|c| design[r * cols + c] * params[c]).sum();
                        (rhs[r] - fit).powi(2)
                    })
                    .sum()
            };
            // BIC order selection between AR(p) and drift
            let bic = |rss: f64, k: usize| rows as f64 * (rss.max(1e-300) / rows as f64).ln() + k as f64 * (rows as f64).ln();
            if explosive(&phi[1..]) || bic(rss(&drift), 1) <= bic(rss(&phi), cols) {
                params.push(drift);
            } else {
                params.push(phi);
            }
        }
        self.fit = Some(ArFit {
            params,
            step,
            template: self.window.points.back().unwrap().1.clone(),
        });
        Ok(())
    }
}

/// True when the AR recursion has a characteristic root outside the unit
/// circle. Unit roots stay allowed so pure oscillations are reproduced.
fn explosive(phi: &[f64]) -> bool {
    let p = phi.len();
    if phi.iter().any(|v| !v.is_finite()) {
        return true;
    }
    let companion = nalgebra::DMatrix::from_fn(p, p, |i, j| {
        if i == 0 {
            phi[j]
        } else if i == j + 1 {
            1.0
        } else {
            0.0
        }
    });
    companion
        .complex_eigenvalues()
        .iter()
        .any(|z| z.norm() > 1.0 + 1e-6)
}

impl CacheModel for Cyclic {
    fn name(&self) -> &str {
        "Cyclic"
    }
    fn min_points(&self) -> usize {
        Self::min_points_for(self.order, self.lag())
    }
    fn len(&self) -> usize {
        self.window.points.len()
    }
    fn last_time(&self) -> Option<Millis> {
        self.window.last_time()
    }
    fn add_point(&mut self, time: Millis, value: Value) -> Result<(), CacheError> {
        components(&value)?;
        self.window.push(time, value)?;
        self.refit()
    }
    fn predict_value(&self, time: Millis) -> Result<Value, CacheError> {
        let fit = self.fit.as_ref().ok_or(CacheError::InsufficientData {
            have: self.len(),
            need: self.min_points(),
        })?;
        let last = self.window.last_time().unwrap();
        let steps = if time <= last {
            0
        } else {
            ((time - last) as f64 / fit.step).round() as usize
        };
        let lag = self.lag();
        let p = self.order;
        let mut out = Vec::new();
        for (y, phi) in self.series()?.into_iter().zip(&fit.params) {
            let n = y.len();
            let mut y_ext = y.clone();
            let mut z: Vec<f64> = (lag..n).map(|i| y[i] - y[i - lag]).collect();
            for _ in 0..steps {
                let m = z.len();
                let mut next = phi[0];
                for k in 1..=p {
                    next += phi[k] * z[m - k];
                }
                z.push(next);
                let base = y_ext[y_ext.len() - lag];
                y_ext.push(base + next);
            }
            out.push(*y_ext.last().unwrap());
        }
        Ok(rebuild(&fit.template, &out))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Closed-form least-squares line via the normal equations, independent
    /// of the SVD path.
    fn oracle_line(points: &[(f64, f64)]) -> (f64, f64) {
        let n = points.len() as f64;
        let sx: f64 = points.iter().map(|p| p.0).sum();
        let sy: f64 = points.iter().map(|p| p.1).sum();
        let sxx: f64 = points.iter().map(|p| p.0 * p.0).sum();
        let sxy: f64 = points.iter().map(|p| p.0 * p.1).sum();
        let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
        (sy / n - slope * sx / n, slope)
    }

    #[test]
    fn consistent_repeats_last_value() {
        let mut m = Consistent::default();
        assert!(matches!(m.predict_value(0), Err(CacheError::InsufficientData { .. })));
        m.add_point(10, Value::Double(42.0)).unwrap();
        assert_eq!(m.predict_value(25).unwrap(), Value::Double(42.0));
        assert_eq!(m.expiration_time(100), Some(110));
    }

    #[test]
    fn linear_extrapolates_exact_line() {
        let mut m = PolynomialRegression::linear(DEFAULT_WINDOW).unwrap();
        m.add_point(0, Value::Double(20.0)).unwrap();
        assert!(m.predict_value(60_000).is_err());
        m.add_point(60_000, Value::Double(20.1)).unwrap();
        m.add_point(120_000, Value::Double(20.2)).unwrap();
        let Value::Double(v) = m.predict_value(180_000).unwrap() else { panic!() };
        assert!((v - 20.3).abs() < 1e-9, "{v}");
        let (a, b) = oracle_line(&[(0.0, 20.0), (60_000.0, 20.1), (120_000.0, 20.2)]);
        assert!((v - (a + b * 180_000.0)).abs() < 1e-9);
    }

    #[test]
    fn linear_matches_oracle_on_noisy_data() {
        let pts: Vec<(f64, f64)> = (0..15)
            .map(|i| (i as f64 * 900_000.0, 10.0 + 0.3 * i as f64 + ((i * 7) % 5) as f64 * 0.1))
            .collect();
        let mut m = PolynomialRegression::linear(DEFAULT_WINDOW).unwrap();
        for (t, y) in &pts {
            m.add_point(*t as u64, Value::Double(*y)).unwrap();
        }
        let (a, b) = oracle_line(&pts);
        let t = 20.0 * 900_000.0;
        let Value::Double(v) = m.predict_value(t as u64).unwrap() else { panic!() };
        assert!((v - (a + b * t)).abs() < 1e-9 * v.abs().max(1.0));
    }

    #[test]
    fn window_truncates_to_most_recent() {
        let mut m = PolynomialRegression::linear(3).unwrap();
        for (t, v) in [(0, 100.0), (1, 0.0), (2, 1.0), (3, 2.0)] {
            m.add_point(t, Value::Double(v)).unwrap();
        }
        assert_eq!(m.len(), 3);
        let Value::Double(v) = m.predict_value(4).unwrap() else { panic!() };
        assert!((v - 3.0).abs() < 1e-9);
    }

    #[test]
    fn quadratic_is_exact_on_squares() {
        let mut m = PolynomialRegression::new(2, DEFAULT_WINDOW).unwrap();
        for i in 0..10u64 {
            let t = i * 1000;
            m.add_point(t, Value::Double((t as f64).powi(2))).unwrap();
        }
        for t in [10_000u64, 12_500, 20_000] {
            let Value::Double(v) = m.predict_value(t).unwrap() else { panic!() };
            let truth = (t as f64).powi(2);
            assert!(((v - truth) / truth).abs() < 1e-6, "{t}: {v} vs {truth}");
        }
    }

    #[test]
    fn coordinates_fit_per_component() {
        let mut m = PolynomialRegression::linear(DEFAULT_WINDOW).unwrap();
        for i in 0..4u64 {
            m.add_point(i * 10, Value::Coordinates { x: i as f64, y: 2.0 * i as f64 }).unwrap();
        }
        let Value::Coordinates { x, y } = m.predict_value(50).unwrap() else { panic!() };
        assert!((x - 5.0).abs() < 1e-9 && (y - 10.0).abs() < 1e-9);
    }

    #[test]
    fn non_monotonic_time_rejected() {
        let mut m = PolynomialRegression::linear(DEFAULT_WINDOW).unwrap();
        m.add_point(10, Value::Double(1.0)).unwrap();
        assert!(matches!(
            m.add_point(10, Value::Double(1.0)),
            Err(CacheError::NonMonotonicTime { .. })
        ));
        let mut c = Consistent::default();
        c.add_point(5, Value::Double(1.0)).unwrap();
        assert!(c.add_point(4, Value::Double(1.0)).is_err());
    }

    #[test]
    fn regression_rejects_images() {
        let mut m = PolynomialRegression::linear(DEFAULT_WINDOW).unwrap();
        let img = Value::Image(crate::value::Image::filled(1, 1, [0, 0, 0]));
        assert!(matches!(m.add_point(0, img), Err(CacheError::TypeMismatch(_))));
    }

    #[test]
    fn cyclic_seasonal_lookup_one_period_ahead() {
        let pattern: Vec<f64> = (0..24).map(|i| 10.0 + ((i * 37) % 11) as f64).collect();
        let mut m = Cyclic::new(2, Some(24), DEFAULT_WINDOW).unwrap();
        let step = 900_000u64;
        let n = 60;
        for i in 0..n {
            m.add_point(i as u64 * step, Value::Double(pattern[i % 24])).unwrap();
        }
        let last = (n - 1) as u64 * step;
        for h in 1..=24u64 {
            let Value::Double(v) = m.predict_value(last + h * step).unwrap() else { panic!() };
            let truth = pattern[((n - 1) + h as usize) % 24];
            assert!(((v - truth) / truth).abs() < 0.05, "h={h}: {v} vs {truth}");
        }
    }

    #[test]
    fn cyclic_without_season_tracks_sinusoid() {
        let f = |i: f64| 15.0 + 5.0 * (2.0 * std::f64::consts::PI * i / 24.0).sin();
        let mut m = Cyclic::new(2, None, DEFAULT_WINDOW).unwrap();
        for i in 0..20 {
            m.add_point(i * 60_000, Value::Double(f(i as f64))).unwrap();
        }
        for h in 1..=24 {
            let t = (19 + h) as f64;
            let Value::Double(v) = m.predict_value((19 + h) * 60_000).unwrap() else { panic!() };
            assert!((v - f(t)).abs() < 1e-6, "h={h}: {v} vs {}", f(t));
        }
    }

    #[test]
    fn explosive_roots_detected() {
        assert!(explosive(&[1.5, 0.0]));
        assert!(explosive(&[0.0, -1.2]));
        // sinusoid differences: complex pair on the unit circle
        assert!(!explosive(&[2.0 * (0.3f64).cos(), -1.0]));
        assert!(!explosive(&[0.5, 0.2]));
        assert!(explosive(&[f64::NAN, 0.0]));
    }

    #[test]
    fn cyclic_falls_back_to_drift_when_fit_explodes() {
        let mut m = Cyclic::new(2, None, DEFAULT_WINDOW).unwrap();
        // differences grow geometrically: an exact AR fit would be explosive
        let mut y = 0.0;
        for i in 0..m.min_points() as u64 {
            y += 1.7f64.powi(i as i32);
            m.add_point(i * 1000, Value::Double(y)).unwrap();
        }
        let phi = &m.ar_params().unwrap()[0];
        assert_eq!(&phi[1..], &[0.0, 0.0]);
    }

    #[test]
    fn cyclic_needs_min_points() {
        let mut m = Cyclic::new(2, None, DEFAULT_WINDOW).unwrap();
        for i in 0..(m.min_points() as u64 - 1) {
            m.add_point(i, Value::Double(i as f64)).unwrap();
        }
        assert!(matches!(m.predict_value(100), Err(CacheError::InsufficientData { .. })));
    }

    #[test]
    fn registry_builds_from_specs() {
        let r = ModelRegistry::default();
        for name in ["Consistent", "LinearRegression", "PolynomialRegression", "Cyclic"] {
            assert_eq!(r.build(&ModelSpec::named(name)).unwrap().name(), name);
        }
        let m = r.build(&ModelSpec::named("PolynomialRegression").with("degree", 3.0)).unwrap();
        assert_eq!(m.min_points(), 4);
        assert!(matches!(r.build(&ModelSpec::named("Nope")), Err(CacheError::UnknownModel(_))));
    }
}
