//! Values produced by devices and carried through cache, privacy and wire layers.

use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DataType {
    Double,
    CartesianCoordinates,
    Image,
    Boolean,
    Text,
}

impl DataType {
    pub fn name(self) -> &'static str {
        match self {
            DataType::Double => "Double",
            DataType::CartesianCoordinates => "CartesianCoordinates",
            DataType::Image => "Image",
            DataType::Boolean => "Boolean",
            DataType::Text => "Text",
        }
    }

    /// Web Thing property type string used by the gateway protocol.
    pub fn thing_type(self) -> &'static str {
        match self {
            DataType::Double => "number",
            DataType::CartesianCoordinates => "coordinates",
            DataType::Image => "image",
            DataType::Boolean => "boolean",
            DataType::Text => "string",
        }
    }

    pub fn from_thing_type(s: &str) -> Option<Self> {
        Some(match s {
            "number" | "integer" => DataType::Double,
            "coordinates" => DataType::CartesianCoordinates,
            "image" => DataType::Image,
            "boolean" => DataType::Boolean,
            "string" => DataType::Text,
            _ => return None,
        })
    }
}

/// RGB raster, row-major.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Image {
    pub width: u32,
    pub height: u32,
    pub pixels: Vec<[u8; 3]>,
}

impl Image {
    pub fn filled(width: u32, height: u32, rgb: [u8; 3]) -> Self {
        Self {
            width,
            height,
            pixels: vec![rgb; (width * height) as usize],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Bool(bool),
    Double(f64),
    Text(String),
    Coordinates { x: f64, y: f64 },
    Image(Image),
}

impl Value {
    pub fn data_type(&self) -> DataType {
        match self {
            Value::Bool(_) => DataType::Boolean,
            Value::Double(_) => DataType::Double,
            Value::Text(_) => DataType::Text,
            Value::Coordinates { .. } => DataType::CartesianCoordinates,
            Value::Image(_) => DataType::Image,
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Value::Double(v) => Some(*v),
            Value::Bool(b) => Some(if *b { 1.0 } else { 0.0 }),
            _ => None,
        }
    }

    /// Parses a textual parameter into a value of the requested type.
    pub fn parse_as(text: &str, ty: DataType) -> Option<Value> {
        match ty {
            DataType::Double => text.parse().ok().map(Value::Double),
            DataType::Boolean => match text.to_ascii_lowercase().as_str() {
                "true" | "on" | "1" => Some(Value::Bool(true)),
                "false" | "off" | "0" => Some(Value::Bool(false)),
                _ => None,
            },
            DataType::Text => Some(Value::Text(text.to_string())),
            DataType::CartesianCoordinates => {
                let (x, y) = text.split_once(',')?;
                Some(Value::Coordinates {
                    x: x.trim().parse().ok()?,
                    y: y.trim().parse().ok()?,
                })
            }
            DataType::Image => None,
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Bool(b) => write!(f, "{b}"),
            Value::Double(v) => write!(f, "{v}"),
            Value::Text(s) => write!(f, "{s}"),
            Value::Coordinates { x, y } => write!(f, "({x},{y})"),
            Value::Image(img) => write!(f, "<image {}x{}>", img.width, img.height),
        }
    }
}
