#![allow(dead_code)]

use std::path::{Path, PathBuf};

use serde_json::Value;

/// Validates `doc` against the subset of JSON Schema used by the published
/// result schema: type, enum, required, properties, items, minimum, maximum,
/// oneOf and local `$ref`s.
pub fn validate(schema_root: &Value, schema: &Value, doc: &Value, path: &str) -> Result<(), String> {
    if let Some(r) = schema.get("$ref").and_then(Value::as_str) {
        let name = r.strip_prefix("#/$defs/").ok_or(format!("unsupported ref {r}"))?;
        return validate(schema_root, &schema_root["$defs"][name], doc, path);
    }
    if let Some(t) = schema.get("type") {
        let types: Vec<&str> = match t {
            Value::String(s) => vec![s.as_str()],
            Value::Array(a) => a.iter().filter_map(Value::as_str).collect(),
            _ => return Err(format!("{path}: bad type keyword")),
        };
        let ok = types.iter().any(|ty| match *ty {
            "object" => doc.is_object(),
            "array" => doc.is_array(),
            "string" => doc.is_string(),
            "number" => doc.is_number(),
            "integer" => doc.is_u64() || doc.is_i64(),
            "boolean" => doc.is_boolean(),
            "null" => doc.is_null(),
            _ => false,
        });
        if !ok {
            return Err(format!("{path}: {doc} is not of type {types:?}"));
        }
    }
    if let Some(e) = schema.get("enum").and_then(Value::as_array) {
        if !e.contains(doc) {
            return Err(format!("{path}: {doc} not in {e:?}"));
        }
    }
    if let (Some(min), Some(v)) = (schema.get("minimum").and_then(Value::as_f64), doc.as_f64()) {
        if v < min {
            return Err(format!("{path}: {v} < {min}"));
        }
    }
    if let (Some(max), Some(v)) = (schema.get("maximum").and_then(Value::as_f64), doc.as_f64()) {
        if v > max {
            return Err(format!("{path}: {v} > {max}"));
        }
    }
    if let Some(req) = schema.get("required").and_then(Value::as_array) {
        for k in req.iter().filter_map(Value::as_str) {
            if doc.get(k).is_none() {
                return Err(format!("{path}: missing {k}"));
            }
        }
    }
    if let (Some(props), Some(obj)) = (schema.get("properties").and_then(Value::as_object), doc.as_object()) {
        for (k, sub) in props {
            if let Some(v) = obj.get(k) {
                validate(schema_root, sub, v, &format!("{path}.{k}"))?;
            }
        }
    }
    if let (Some(items), Some(arr)) = (schema.get("items"), doc.as_array()) {
        for (i, v) in arr.iter().enumerate() {
            validate(schema_root, items, v, &format!("{path}[{i}]"))?;
        }
    }
    if let Some(alts) = schema.get("oneOf").and_then(Value::as_array) {
        let passing = alts.iter().filter(|s| validate(schema_root, s, doc, path).is_ok()).count();
        if passing != 1 {
            return Err(format!("{path}: {passing} oneOf branches match"));
        }
    }
    Ok(())
}

pub fn result_schema() -> Value {
    let p = Path::new(env!("CARGO_MANIFEST_DIR")).join("schema/result.schema.json");
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

pub fn check_document(doc: &Value) {
    let schema = result_schema();
    validate(&schema, &schema, doc, "$").unwrap_or_else(|e| panic!("schema violation: {e}"));
}

/// Writes a CSV with header `names` and the given rows.
pub fn write_csv(path: &Path, names: &[&str], rows: &[Vec<f64>]) {
    let mut s = names.join(",") + "\n";
    for r in rows {
        s += &r.iter().map(|v| format!("{v:.17e}")).collect::<Vec<_>>().join(",");
        s.push('\n');
    }
    std::fs::write(path, s).unwrap();
}

pub fn path_arg(p: &Path) -> String {
    p.to_str().unwrap().to_string()
}

pub fn tmp_file(dir: &Path, name: &str) -> PathBuf {
    dir.join(name)
}

/// Runs the CLI in-process; returns (exit code, stdout, stderr).
pub fn run_cli(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let argv = std::iter::once("selkern").chain(args.iter().copied());
    let code = selkern::cli::run_with(argv, &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}
