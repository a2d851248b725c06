//! Per-datatype difference functions used by the ERROR check.

use std::collections::BTreeMap;
use std::sync::Arc;

use super::CacheError;
use crate::value::{DataType, Image, Value};

/// `diff` must satisfy identity, symmetry and nonnegativity.
pub trait DiffAdapter: Send + Sync {
    fn name(&self) -> &str;
    fn diff(&self, a: &Value, b: &Value) -> Result<f64, CacheError>;
}

pub fn diff_double(a: f64, b: f64) -> f64 {
    (a - b).abs()
}

pub fn diff_cartesian(a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.0 - b.0).hypot(a.1 - b.1)
}

/// Sum of absolute per-channel RGB differences.
pub fn diff_image(a: &Image, b: &Image) -> Result<f64, CacheError> {
    if a.width != b.width || a.height != b.height || a.pixels.len() != b.pixels.len() {
        return Err(CacheError::DimensionMismatch {
            left: (a.width, a.height),
            right: (b.width, b.height),
        });
    }
    Ok(a
        .pixels
        .iter()
        .zip(&b.pixels)
        .map(|(p, q)| p.iter().zip(q).map(|(x, y)| x.abs_diff(*y) as u64).sum::<u64>())
        .sum::<u64>() as f64)
}

fn mismatch(adapter: &str, a: &Value, b: &Value) -> CacheError {
    CacheError::TypeMismatch(format!(
        "{adapter} adapter cannot compare {} and {}",
        a.data_type().name(),
        b.data_type().name()
    ))
}

pub struct DoubleAdapter;
pub struct CartesianAdapter;
pub struct ImageAdapter;
pub struct BooleanAdapter;
pub struct TextAdapter;

impl DiffAdapter for DoubleAdapter {
    fn name(&self) -> &str {
        "Double"
    }
    fn diff(&self, a: &Value, b: &Value) -> Result<f64, CacheError> {
        match (a, b) {
            (Value::Double(x), Value::Double(y)) => Ok(diff_double(*x, *y)),
            _ => Err(mismatch(self.name(), a, b)),
        }
    }
}

impl DiffAdapter for CartesianAdapter {
    fn name(&self) -> &str {
        "CartesianCoordinates"
    }
    fn diff(&self, a: &Value, b: &Value) -> Result<f64, CacheError> {
        match (a, b) {
            (Value::Coordinates { x: x1, y: y1 }, Value::Coordinates { x: x2, y: y2 }) => {
                Ok(diff_cartesian((*x1, *y1), (*x2, *y2)))
            }
            _ => Err(mismatch(self.name(), a, b)),
        }
    }
}

impl DiffAdapter for ImageAdapter {
    fn name(&self) -> &str {
        "Image"
    }
    fn diff(&self, a: &Value, b: &Value) -> Result<f64, CacheError> {
        match (a, b) {
            (Value::Image(x), Value::Image(y)) => diff_image(x, y),
            _ => Err(mismatch(self.name(), a, b)),
        }
    }
}

impl DiffAdapter for BooleanAdapter {
    fn name(&self) -> &str {
        "Boolean"
    }
    fn diff(&self, a: &Value, b: &Value) -> Result<f64, CacheError> {
        match (a, b) {
            (Value::Bool(x), Value::Bool(y)) => Ok(if x == y { 0.0 } else { 1.0 }),
            _ => Err(mismatch(self.name(), a, b)),
        }
    }
}

/// Number of differing character positions plus the length difference.
impl DiffAdapter for TextAdapter {
    fn name(&self) -> &str {
        "Text"
    }
    fn diff(&self, a: &Value, b: &Value) -> Result<f64, CacheError> {
        match (a, b) {
            (Value::Text(x), Value::Text(y)) => {
                let (xc, yc): (Vec<char>, Vec<char>) = (x.chars().collect(), y.chars().collect());
                let common = xc.iter().zip(&yc).filter(|(p, q)| p != q).count();
                Ok((common + xc.len().abs_diff(yc.len())) as f64)
            }
            _ => Err(mismatch(self.name(), a, b)),
        }
    }
}

/// Maps datatype names to adapters. Built-ins are registered by default;
/// extensions are added with [`AdapterRegistry::register`].
#[derive(Clone)]
pub struct AdapterRegistry {
    adapters: BTreeMap<String, Arc<dyn DiffAdapter>>,
}

impl Default for AdapterRegistry {
    fn default() -> Self {
        let mut r = Self {
            adapters: BTreeMap::new(),
        };
        r.register(Arc::new(DoubleAdapter));
        r.register(Arc::new(CartesianAdapter));
        r.register(Arc::new(ImageAdapter));
        r.register(Arc::new(BooleanAdapter));
        r.register(Arc::new(TextAdapter));
        r
    }
}

impl AdapterRegistry {
    pub fn register(&mut self, adapter: Arc<dyn DiffAdapter>) {
        self.adapters.insert(adapter.name().to_string(), adapter);
    }

    pub fn get(&self, name: &str) -> Option<Arc<dyn DiffAdapter>> {
        self.adapters.get(name).cloned()
    }

    pub fn for_type(&self, ty: DataType) -> Arc<dyn DiffAdapter> {
        self.get(ty.name()).expect("built-in adapters cover every DataType")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn builtin_examples() {
        assert_eq!(diff_double(27.0, 24.0), 3.0);
        assert_eq!(diff_cartesian((0.0, 0.0), (3.0, 4.0)), 5.0);
        let black = Image::filled(1, 1, [0, 0, 0]);
        let white = Image::filled(1, 1, [255, 255, 255]);
        assert_eq!(diff_image(&black, &white).unwrap(), 765.0);
        assert!(matches!(
            diff_image(&black, &Image::filled(2, 1, [0, 0, 0])),
            Err(CacheError::DimensionMismatch { .. })
        ));
    }

    fn value_of(ty: u8) -> BoxedStrategy<Value> {
        match ty {
            0 => (-1e6f64..1e6).prop_map(Value::Double).boxed(),
            1 => ((-1e3f64..1e3), (-1e3f64..1e3))
                .prop_map(|(x, y)| Value::Coordinates { x, y })
                .boxed(),
            2 => prop::collection::vec(any::<[u8; 3]>(), 4)
                .prop_map(|pixels| Value::Image(Image { width: 2, height: 2, pixels }))
                .boxed(),
            3 => any::<bool>().prop_map(Value::Bool).boxed(),
            _ => "[a-z]{0,6}".prop_map(Value::Text).boxed(),
        }
    }

    fn pair() -> impl Strategy<Value = (Value, Value)> {
        (0u8..5).prop_flat_map(|t| (value_of(t), value_of(t)))
    }

    proptest! {
        #[test]
        fn adapter_axioms_hold((a, b) in pair()) {
            let registry = AdapterRegistry::default();
            let adapter = registry.for_type(a.data_type());
            prop_assert_eq!(adapter.diff(&a, &a).unwrap(), 0.0);
            let ab = adapter.diff(&a, &b).unwrap();
            prop_assert!(ab >= 0.0);
            prop_assert_eq!(ab, adapter.diff(&b, &a).unwrap());
        }
    }
}
