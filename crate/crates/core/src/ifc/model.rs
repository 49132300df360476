//! In-memory STEP entity graph.

use std::collections::BTreeMap;

use rand::RngCore;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::ProjectMeta;

/// One STEP attribute value.
#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Ref(u32),
    Str(String),
    /// Enumeration literal without the dots.
    Enum(String),
    Real(f64),
    Int(i64),
    List(Vec<Value>),
    /// Typed parameter such as `IFCLABEL('x')`.
    Typed(String, Box<Value>),
    Unset,
    Derived,
}

impl Value {
    pub fn str(s: impl Into<String>) -> Value {
        Value::Str(s.into())
    }

    pub fn en(s: &str) -> Value {
        Value::Enum(s.to_string())
    }

    pub fn opt_str(s: &str) -> Value {
        if s.is_empty() {
            Value::Unset
        } else {
            Value::Str(s.to_string())
        }
    }

    pub fn refs(ids: &[u32]) -> Value {
        Value::List(ids.iter().map(|&i| Value::Ref(i)).collect())
    }

    pub fn reals(xs: &[f64]) -> Value {
        Value::List(xs.iter().map(|&x| Value::Real(x)).collect())
    }

    pub fn as_ref_id(&self) -> Option<u32> {
        match self {
            Value::Ref(i) => Some(*i),
            _ => None,
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Value::Real(x) => Some(*x),
            Value::Int(i) => Some(*i as f64),
            Value::Typed(_, v) => v.as_f64(),
            _ => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            Value::Str(s) => Some(s),
            Value::Typed(_, v) => v.as_str(),
            _ => None,
        }
    }

    pub fn as_list(&self) -> Option<&[Value]> {
        match self {
            Value::List(v) => Some(v),
            _ => None,
        }
    }

    /// Every entity reference nested in this value.
    pub fn collect_refs(&self, out: &mut Vec<u32>) {
        match self {
            Value::Ref(i) => out.push(*i),
            Value::List(v) => v.iter().for_each(|x| x.collect_refs(out)),
            Value::Typed(_, v) => v.collect_refs(out),
            _ => {}
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Entity {
    pub ty: String,
    pub args: Vec<Value>,
}

impl Entity {
    pub fn arg(&self, i: usize) -> &Value {
        self.args.get(i).unwrap_or(&Value::Unset)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepHeader {
    pub description: Vec<String>,
    pub implementation_level: String,
    pub file_name: String,
    pub time_stamp: String,
    pub author: Vec<String>,
    pub organization: Vec<String>,
    pub preprocessor: String,
    pub originating_system: String,
    pub authorization: String,
    pub schema: Vec<String>,
}

/// How IfcGloballyUniqueId values are made.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GuidMode {
    /// Hash of (seed, entity kind, index); reproducible.
    Seeded(u64),
    Random,
}

const GUID_CHARS: &[u8; 64] = b"0123456789ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz_$";

/// 22-character IFC base-64 form of a 128-bit value.
pub fn encode_guid(n: u128) -> String {
    let mut s = String::with_capacity(22);
    s.push(GUID_CHARS[(n >> 126) as usize] as char);
    for i in 1..22 {
        let shift = 126 - 6 * i;
        s.push(GUID_CHARS[((n >> shift) & 63) as usize] as char);
    }
    s
}

pub fn decode_guid(s: &str) -> Option<u128> {
    if s.len() != 22 {
        return None;
    }
    let mut n: u128 = 0;
    for (i, c) in s.bytes().enumerate() {
        let v = GUID_CHARS.iter().position(|&g| g == c)? as u128;
        if i == 0 && v > 3 {
            return None;
        }
        n = (n << if i == 0 { 0 } else { 6 }) | v;
    }
    Some(n)
}

#[derive(Debug, Clone)]
pub struct GuidSource {
    mode: GuidMode,
    counters: BTreeMap<String, u64>,
}

impl GuidSource {
    pub fn new(mode: GuidMode) -> Self {
        GuidSource {
            mode,
            counters: BTreeMap::new(),
        }
    }

    pub fn next(&mut self, kind: &str) -> String {
        let idx = self.counters.entry(kind.to_string()).or_insert(0);
        let n = match self.mode {
            GuidMode::Seeded(seed) => {
                let mut h = Sha256::new();
                h.update(seed.to_le_bytes());
                h.update(kind.as_bytes());
                h.update([0u8]);
                h.update(idx.to_le_bytes());
                let d = h.finalize();
                let mut b = [0u8; 16];
                b.copy_from_slice(&d[..16]);
                u128::from_be_bytes(b)
            }
            GuidMode::Random => {
                let mut b = [0u8; 16];
                rand::rng().fill_bytes(&mut b);
                u128::from_be_bytes(b)
            }
        };
        *idx += 1;
        encode_guid(n)
    }
}

/// Entities keyed by instance id, plus the header and the metadata used.
#[derive(Debug, Clone)]
pub struct IfcModel {
    pub header: StepHeader,
    pub entities: BTreeMap<u32, Entity>,
    pub meta: ProjectMeta,
    next_id: u32,
}

impl IfcModel {
    pub fn new(header: StepHeader, meta: ProjectMeta) -> Self {
        IfcModel {
            header,
            entities: BTreeMap::new(),
            meta,
            next_id: 1,
        }
    }

    pub fn add(&mut self, ty: &str, args: Vec<Value>) -> u32 {
        let id = self.next_id;
        self.next_id += 1;
        self.entities.insert(
            id,
            Entity {
                ty: ty.to_string(),
                args,
            },
        );
        id
    }

    pub fn count(&self, ty: &str) -> usize {
        self.entities.values().filter(|e| e.ty == ty).count()
    }

    pub fn ids_of(&self, ty: &str) -> Vec<u32> {
        self.entities
            .iter()
            .filter(|(_, e)| e.ty == ty)
            .map(|(&i, _)| i)
            .collect()
    }
}

/// Building elements counted in run summaries.
pub const ELEMENT_TYPES: [&str; 4] = ["IFCSLAB", "IFCWALL", "IFCOPENINGELEMENT", "IFCSPACE"];

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn guid_round_trip() {
        for n in [0u128, 1, u128::MAX, 0x0123_4567_89ab_cdef_0011_2233_4455_6677] {
            let s = encode_guid(n);
            assert_eq!(s.len(), 22);
            assert_eq!(decode_guid(&s), Some(n));
        }
        assert_eq!(encode_guid(0), "0000000000000000000000");
        assert_eq!(encode_guid(u128::MAX), "3$$$$$$$$$$$$$$$$$$$$$");
    }

    #[test]
    fn seeded_guids_repeat_and_differ() {
        let mut a = GuidSource::new(GuidMode::Seeded(5));
        let mut b = GuidSource::new(GuidMode::Seeded(5));
        let xs: Vec<String> = (0..20).map(|i| a.next(if i % 2 == 0 { "wall" } else { "slab" })).collect();
        let ys: Vec<String> = (0..20).map(|i| b.next(if i % 2 == 0 { "wall" } else { "slab" })).collect();
        assert_eq!(xs, ys);
        let set: std::collections::BTreeSet<_> = xs.iter().collect();
        assert_eq!(set.len(), 20);
        let mut c = GuidSource::new(GuidMode::Seeded(6));
        assert_ne!(c.next("wall"), xs[0]);
        let mut r = GuidSource::new(GuidMode::Random);
        assert_ne!(r.next("wall"), r.next("wall"));
    }
}
