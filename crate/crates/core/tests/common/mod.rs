//! Shared helpers for the integration tests: a small JSON-schema checker
//! (the subset of draft 2020-12 used by the shipped schemas) and binary runs.

#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

pub fn schema_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../schemas")
}

pub fn load_schema(cmd: &str) -> Value {
    let path = schema_dir().join(format!("{cmd}.schema.json"));
    serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap()
}

fn type_matches(t: &str, v: &Value) -> bool {
    match t {
        "null" => v.is_null(),
        "boolean" => v.is_boolean(),
        "integer" => v.is_i64() || v.is_u64(),
        "number" => v.is_number(),
        "string" => v.is_string(),
        "array" => v.is_array(),
        "object" => v.is_object(),
        _ => false,
    }
}

/// Every violation of `schema` by `v`, as "path: reason".
pub fn validate(schema: &Value, v: &Value, path: &str, out: &mut Vec<String>) {
    let Some(s) = schema.as_object() else { return };
    match s.get("type") {
        Some(Value::String(t)) if !type_matches(t, v) => {
            out.push(format!("{path}: expected {t}, got {v}"));
            return;
        }
        Some(Value::Array(ts)) if !ts.iter().any(|t| type_matches(t.as_str().unwrap_or(""), v)) => {
            out.push(format!("{path}: expected one of {ts:?}, got {v}"));
            return;
        }
        _ => {}
    }
    if let Some(c) = s.get("const") {
        if c != v {
            out.push(format!("{path}: expected const {c}"));
        }
    }
    if let Some(Value::Array(e)) = s.get("enum") {
        if !e.contains(v) {
            out.push(format!("{path}: {v} not in {e:?}"));
        }
    }
    if let (Some(min), Some(x)) = (s.get("minimum").and_then(Value::as_f64), v.as_f64()) {
        if x < min {
            out.push(format!("{path}: {x} below minimum {min}"));
        }
    }
    if let (Some(Value::String(p)), Some(x)) = (s.get("pattern"), v.as_str()) {
        if !regex::Regex::new(p).unwrap().is_match(x) {
            out.push(format!("{path}: {x:?} does not match {p}"));
        }
    }
    if let Some(Value::Array(alts)) = s.get("oneOf") {
        let ok = alts
            .iter()
            .filter(|a| {
                let mut e = Vec::new();
                validate(a, v, path, &mut e);
                e.is_empty()
            })
            .count();
        if ok != 1 {
            out.push(format!("{path}: {ok} oneOf branches match"));
        }
    }
    if let Some(obj) = v.as_object() {
        if let Some(Value::Array(req)) = s.get("required") {
            for k in req.iter().filter_map(Value::as_str) {
                if !obj.contains_key(k) {
                    out.push(format!("{path}: missing {k}"));
                }
            }
        }
        let props = s.get("properties").and_then(Value::as_object);
        for (k, x) in obj {
            match props.and_then(|p| p.get(k)) {
                Some(sub) => validate(sub, x, &format!("{path}/{k}"), out),
                None if s.get("additionalProperties") == Some(&Value::Bool(false)) => {
                    out.push(format!("{path}: unexpected property {k}"))
                }
                None => {}
            }
        }
    }
    if let (Some(items), Some(arr)) = (s.get("items"), v.as_array()) {
        for (i, x) in arr.iter().enumerate() {
            validate(items, x, &format!("{path}/{i}"), out);
        }
    }
}

/// Validates `<dir>/<cmd>.json` against the shipped schema.
pub fn check_output(dir: &Path, cmd: &str) -> Vec<String> {
    let v: Value = serde_json::from_str(&std::fs::read_to_string(dir.join(format!("{cmd}.json"))).unwrap()).unwrap();
    let mut errs = Vec::new();
    validate(&load_schema(cmd), &v, "", &mut errs);
    errs
}

pub fn nlhardy(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nlhardy")).args(args).env("NLHARDY_THREADS", "2").output().unwrap()
}
