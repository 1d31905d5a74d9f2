//! Model files: one JSON object holding every parameter block.
//!
//! ```text
//! {"format_version":1,"conv1":{"shape":[5,5,1,8],"data":[...]},"conv1_bias":[...],...,"fc2_bias":[...]}
//! ```

use std::path::Path;

use serde::Serialize;
use serde_json::{Map, Value};

use crate::cnn::{CnnModel, Matrix, CLASSES, FEATURES, FLAT, HIDDEN, KERNEL_SIDE};
use crate::error::{Error, Result};
use crate::tensor::{Tensor4, TensorDoc};

pub const FORMAT_VERSION: u32 = 1;

const FIELDS: [&str; 9] = [
    "format_version",
    "conv1",
    "conv1_bias",
    "conv2",
    "conv2_bias",
    "fc1",
    "fc1_bias",
    "fc2",
    "fc2_bias",
];

#[derive(Serialize)]
struct ModelDoc<'a> {
    format_version: u32,
    conv1: &'a Tensor4,
    conv1_bias: &'a [f64],
    conv2: &'a Tensor4,
    conv2_bias: &'a [f64],
    fc1: &'a Matrix,
    fc1_bias: &'a [f64],
    fc2: &'a Matrix,
    fc2_bias: &'a [f64],
}

/// Serialize with fields in a fixed order and a trailing newline. Floats use
/// the shortest representation that parses back to the same bits.
pub fn model_to_string(model: &CnnModel) -> Result<String> {
    model.validate()?;
    let doc = ModelDoc {
        format_version: FORMAT_VERSION,
        conv1: &model.conv1,
        conv1_bias: &model.conv1_bias,
        conv2: &model.conv2,
        conv2_bias: &model.conv2_bias,
        fc1: &model.fc1,
        fc1_bias: &model.fc1_bias,
        fc2: &model.fc2,
        fc2_bias: &model.fc2_bias,
    };
    let mut s = serde_json::to_string(&doc)?;
    s.push('\n');
    Ok(s)
}

fn syntax_error(e: serde_json::Error) -> Error {
    Error::ParseLine {
        line: e.line() as u64,
        message: e.to_string(),
    }
}

fn tensor(obj: &Map<String, Value>, field: &str, shape: &[usize]) -> Result<TensorDoc> {
    let value = obj
        .get(field)
        .ok_or_else(|| Error::schema(field, "missing"))?;
    let doc: TensorDoc =
        serde_json::from_value(value.clone()).map_err(|e| Error::schema(field, e.to_string()))?;
    doc.check(field, shape.len())?;
    if doc.shape != shape {
        return Err(Error::schema(
            field,
            format!("expected shape {shape:?}, found {:?}", doc.shape),
        ));
    }
    Ok(doc)
}

fn vector(obj: &Map<String, Value>, field: &str, len: usize) -> Result<Vec<f64>> {
    let value = obj
        .get(field)
        .ok_or_else(|| Error::schema(field, "missing"))?;
    let v: Vec<f64> =
        serde_json::from_value(value.clone()).map_err(|e| Error::schema(field, e.to_string()))?;
    if v.len() != len {
        return Err(Error::schema(field, format!("expected {len} values, found {}", v.len())));
    }
    Ok(v)
}

pub fn model_from_str(text: &str) -> Result<CnnModel> {
    let value: Value = serde_json::from_str(text).map_err(syntax_error)?;
    let obj = value
        .as_object()
        .ok_or_else(|| Error::schema("model", "expected a JSON object"))?;
    if let Some(extra) = obj.keys().find(|k| !FIELDS.contains(&k.as_str())) {
        return Err(Error::schema(extra.as_str(), "unknown field"));
    }
    match obj.get("format_version").and_then(Value::as_u64) {
        Some(v) if v == u64::from(FORMAT_VERSION) => {}
        _ => {
            return Err(Error::schema(
                "format_version",
                format!("expected {FORMAT_VERSION}"),
            ))
        }
    }
    let k = KERNEL_SIDE;
    let t4 = |field: &str, shape: [usize; 4]| -> Result<Tensor4> {
        tensor(obj, field, &shape)?.try_into()
    };
    let m2 = |field: &str, shape: [usize; 2]| -> Result<Matrix> {
        let doc = tensor(obj, field, &shape)?;
        Matrix::from_vec(shape[0], shape[1], doc.data)
    };
    let model = CnnModel {
        conv1: t4("conv1", [k, k, 1, FEATURES])?,
        conv1_bias: vector(obj, "conv1_bias", FEATURES)?,
        conv2: t4("conv2", [k, k, FEATURES, FEATURES])?,
        conv2_bias: vector(obj, "conv2_bias", FEATURES)?,
        fc1: m2("fc1", [HIDDEN, FLAT])?,
        fc1_bias: vector(obj, "fc1_bias", HIDDEN)?,
        fc2: m2("fc2", [CLASSES, HIDDEN])?,
        fc2_bias: vector(obj, "fc2_bias", CLASSES)?,
    };
    model.validate()?;
    Ok(model)
}

pub fn save_model(model: &CnnModel, path: &Path) -> Result<()> {
    let text = model_to_string(model)?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: &Path) -> Result<CnnModel> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let text = std::str::from_utf8(&bytes).map_err(|e| Error::Parse {
        offset: e.valid_up_to() as u64,
        message: "model file is not UTF-8".into(),
    })?;
    model_from_str(text)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> CnnModel {
        let mut m = CnnModel::zeros();
        for (i, v) in m.fc1.data_mut().iter_mut().enumerate() {
            *v = (i as f64 * 0.7317).sin() / 3.0;
        }
        m.conv2.data_mut()[17] = 1.0 / 3.0;
        m.fc2_bias[9] = -2.5e-17;
        m
    }

    #[test]
    fn roundtrip_is_bit_identical_and_byte_stable() {
        let m = sample();
        let text = model_to_string(&m).unwrap();
        let back = model_from_str(&text).unwrap();
        assert_eq!(back, m);
        assert_eq!(model_to_string(&back).unwrap(), text);
        assert!(text.starts_with(r#"{"format_version":1,"conv1":{"shape":[5,5,1,8]"#));
    }

    #[test]
    fn truncated_file_is_a_parse_error() {
        let text = model_to_string(&sample()).unwrap();
        let cut = &text[..text.len() / 2];
        assert!(matches!(model_from_str(cut), Err(Error::ParseLine { .. })));
    }

    #[test]
    fn wrong_shape_names_the_field() {
        let text = model_to_string(&sample())
            .unwrap()
            .replacen("[5,5,1,8]", "[5,5,2,4]", 1);
        match model_from_str(&text) {
            Err(Error::Schema { field, .. }) => assert_eq!(field, "conv1"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn version_and_unknown_fields() {
        let text = model_to_string(&sample()).unwrap();
        let v2 = text.replacen("\"format_version\":1", "\"format_version\":2", 1);
        assert!(matches!(model_from_str(&v2), Err(Error::Schema { field, .. }) if field == "format_version"));
        let extra = text.replacen('{', "{\"extra\":0,", 1);
        assert!(matches!(model_from_str(&extra), Err(Error::Schema { field, .. }) if field == "extra"));
        assert!(matches!(model_from_str("[1]"), Err(Error::Schema { .. })));
    }
}
