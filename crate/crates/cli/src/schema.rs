//! Versioned JSON schemas for every JSON artifact.

/// `(name, schema text)`; the name is the artifact's `schema` tag.
pub const SCHEMAS: &[(&str, &str)] = &[
    ("constants.v1", include_str!("../schemas/constants.v1.json")),
    ("energy.v1", include_str!("../schemas/energy.v1.json")),
    ("field_summary.v1", include_str!("../schemas/field_summary.v1.json")),
    ("linking_report.v1", include_str!("../schemas/linking_report.v1.json")),
    ("manifest.v1", include_str!("../schemas/manifest.v1.json")),
    ("probe_report.v1", include_str!("../schemas/probe_report.v1.json")),
    ("solve_report.v1", include_str!("../schemas/solve_report.v1.json")),
];

pub fn schema(name: &str) -> Option<&'static str> {
    SCHEMAS.iter().find(|(n, _)| *n == name).map(|(_, s)| *s)
}

/// Schema governing a JSON artifact, by file name.
pub fn schema_for_artifact(file: &str) -> Option<&'static str> {
    let name = match file {
        "constants.json" => "constants.v1",
        "energy.json" => "energy.v1",
        "field_summary.json" => "field_summary.v1",
        "linking_report.json" => "linking_report.v1",
        "manifest.json" => "manifest.v1",
        "probe_report.json" => "probe_report.v1",
        "solve_report.json" => "solve_report.v1",
        _ => return None,
    };
    schema(name)
}
