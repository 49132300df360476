//! Structural self-check of written STEP files.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ifc::step::{parse_step, ParsedStep, ENVELOPE_END, ENVELOPE_START};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    Envelope,
    Syntax,
    Schema,
    DuplicateId,
    UnresolvedReference,
    ProjectCount,
    OpeningRelation,
    Containment,
}

impl fmt::Display for ViolationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ViolationKind::Envelope => "envelope",
            ViolationKind::Syntax => "syntax error",
            ViolationKind::Schema => "schema",
            ViolationKind::DuplicateId => "duplicate id",
            ViolationKind::UnresolvedReference => "unresolved reference",
            ViolationKind::ProjectCount => "project count",
            ViolationKind::OpeningRelation => "opening relation",
            ViolationKind::Containment => "containment",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub kind: ViolationKind,
    pub entity: Option<u32>,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
    pub entity_count: usize,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn count(&self, kind: ViolationKind) -> usize {
        self.violations.iter().filter(|v| v.kind == kind).count()
    }

    fn push(&mut self, kind: ViolationKind, entity: Option<u32>, message: String) {
        self.violations.push(Violation { kind, entity, message });
    }
}

/// Products that must reach the project through the spatial tree.
const PRODUCTS: [&str; 7] = [
    "IFCSITE",
    "IFCBUILDING",
    "IFCBUILDINGSTOREY",
    "IFCWALL",
    "IFCSLAB",
    "IFCSPACE",
    "IFCOPENINGELEMENT",
];

pub fn validate_step(path: impl AsRef<Path>) -> Result<ValidationReport> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(validate_step_str(&text))
}

pub fn validate_step_str(text: &str) -> ValidationReport {
    let mut r = ValidationReport::default();
    let t = text.trim();
    if !t.starts_with(ENVELOPE_START) {
        r.push(ViolationKind::Envelope, None, format!("file does not begin with {ENVELOPE_START}"));
    }
    if !t.ends_with(ENVELOPE_END) {
        r.push(ViolationKind::Envelope, None, format!("file does not end with {ENVELOPE_END}"));
    }
    match parse_step(text) {
        Ok(p) => check_parsed(&p, &mut r),
        Err(e) => r.push(ViolationKind::Syntax, None, e.to_string()),
    }
    r
}

fn check_parsed(p: &ParsedStep, r: &mut ValidationReport) {
    r.entity_count = p.entities.len();
    let schema = p.schema();
    if schema != ["IFC4"] {
        r.push(ViolationKind::Schema, None, format!("schema is {schema:?}, expected IFC4"));
    }
    for &d in &p.duplicates {
        r.push(ViolationKind::DuplicateId, Some(d), format!("#{d} defined more than once"));
    }
    for (&id, e) in &p.entities {
        let mut refs = Vec::new();
        e.args.iter().for_each(|a| a.collect_refs(&mut refs));
        for x in refs {
            if !p.entities.contains_key(&x) {
                r.push(ViolationKind::UnresolvedReference, Some(id), format!("unresolved reference #{x} in #{id}"));
            }
        }
    }
    let projects = p.ids_of("IFCPROJECT");
    match projects.len() {
        1 => {}
        0 => r.push(ViolationKind::ProjectCount, None, "missing IfcProject".into()),
        _ => r.push(
            ViolationKind::ProjectCount,
            Some(projects[1]),
            format!("multiple IfcProject: {projects:?}"),
        ),
    }

    // child -> parents through the decomposition, containment and void relations
    let mut parents: BTreeMap<u32, Vec<u32>> = BTreeMap::new();
    let mut voids: BTreeMap<u32, usize> = BTreeMap::new();
    for e in p.entities.values() {
        match e.ty.as_str() {
            "IFCRELAGGREGATES" => {
                if let (Some(whole), Some(parts)) = (e.arg(4).as_ref_id(), e.arg(5).as_list()) {
                    for part in parts.iter().filter_map(|v| v.as_ref_id()) {
                        parents.entry(part).or_default().push(whole);
                    }
                }
            }
            "IFCRELCONTAINEDINSPATIALSTRUCTURE" => {
                if let (Some(parts), Some(whole)) = (e.arg(4).as_list(), e.arg(5).as_ref_id()) {
                    for part in parts.iter().filter_map(|v| v.as_ref_id()) {
                        parents.entry(part).or_default().push(whole);
                    }
                }
            }
            "IFCRELVOIDSELEMENT" => {
                if let (Some(host), Some(opening)) = (e.arg(4).as_ref_id(), e.arg(5).as_ref_id()) {
                    parents.entry(opening).or_default().push(host);
                    *voids.entry(opening).or_default() += 1;
                }
            }
            _ => {}
        }
    }
    for id in p.ids_of("IFCOPENINGELEMENT") {
        let n = voids.get(&id).copied().unwrap_or(0);
        if n != 1 {
            r.push(
                ViolationKind::OpeningRelation,
                Some(id),
                format!("opening #{id} is voided by {n} IfcRelVoidsElement, expected 1"),
            );
        }
    }
    let project: BTreeSet<u32> = projects.into_iter().collect();
    for (&id, e) in &p.entities {
        if !PRODUCTS.contains(&e.ty.as_str()) {
            continue;
        }
        if !reaches(id, &parents, &project) {
            r.push(ViolationKind::Containment, Some(id), format!("{} #{id} is not connected to the IfcProject", e.ty));
        }
    }
}

fn reaches(start: u32, parents: &BTreeMap<u32, Vec<u32>>, goal: &BTreeSet<u32>) -> bool {
    let mut seen = BTreeSet::new();
    let mut stack = vec![start];
    while let Some(n) = stack.pop() {
        if goal.contains(&n) {
            return true;
        }
        if !seen.insert(n) {
            continue;
        }
        if let Some(ps) = parents.get(&n) {
            stack.extend(ps.iter().copied());
        }
    }
    false
}
