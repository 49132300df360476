//! IFC4 model building, STEP serialization and structural validation.

mod build;
pub mod geometry;
mod model;
mod step;
mod validate;

pub use build::{build_model, compound_angle, iso_timestamp, BuildOptions, BuildingElements, StoreyLevel, OPENING_OVERCUT};
pub use model::{decode_guid, encode_guid, Entity, GuidMode, GuidSource, IfcModel, StepHeader, Value, ELEMENT_TYPES};
pub use step::{
    default_header, encode_string, format_real, parse_step, to_step_string, write_step, ParsedStep, SyntaxError,
    ENVELOPE_END, ENVELOPE_START,
};
pub use validate::{validate_step, validate_step_str, ValidationReport, Violation, ViolationKind};

/// Number of slabs, walls, openings and spaces in a model.
pub fn element_count(model: &IfcModel) -> usize {
    ELEMENT_TYPES.iter().map(|t| model.count(t)).sum()
}

#[cfg(test)]
mod tests;
