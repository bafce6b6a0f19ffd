//! Reference failure-mode labels, for checking the shipped datasets.

#![allow(dead_code)]

/// (category, subcategory or "" when the table leaves it blank, failure mode)
pub const FINAL_TABLE: [(&str, &str, &str); 14] = [
    ("Faithfulness to the Query", "Structure", "General structural error"),
    ("Faithfulness to the Query", "Structure", "Information placed in an inappropriate section"),
    ("Faithfulness to the Query", "Content", "Addition of out-of-context information"),
    ("Faithfulness to the Query", "Content", "Inadequate level of detail"),
    ("Faithfulness to the Query", "Vocabulary", "Vocabulary inappropriate to the context"),
    ("Readability", "Intelligibility", "Ambiguous formulation"),
    ("Readability", "Intelligibility", "Response in the wrong language"),
    ("Readability", "Conciseness", "Lexical redundancy"),
    ("Readability", "Conciseness", "Redundancy of medical information"),
    ("Ethical Appropriateness", "", "Stigmatizing or discriminatory vocabulary"),
    (
        "Faithfulness of Content Relative to the Source Document",
        "Factual fidelity to source document information",
        "Presence of factually incorrect information relative to the source document(s)",
    ),
    (
        "Faithfulness of Content Relative to the Source Document",
        "Content traceability relative to the source document",
        "Presence of information absent from the source document(s)",
    ),
    ("Exhaustivity", "", "Omission of information present in the source document(s)"),
    ("Technical Issue", "Summary generation", "Failure to generate the summary"),
];

pub const FIRST_VERSION_MODES: [&str; 20] = [
    "General structural error",
    "Information placed in an inappropriate section",
    "Addition of out-of-context information",
    "Inadequate level of detail",
    "Presence of subjectivity or interpretation",
    "Vocabulary inappropriate to the context",
    "Ambiguous formulation",
    "Inconsistencies in generated content",
    "Response in the wrong language",
    "Lexical errors affecting comprehension",
    "Syntactic errors affecting comprehension",
    "Lexical redundancy",
    "Redundancy of medical information",
    "Stigmatizing or discriminatory vocabulary",
    "Presence of factually incorrect information relative to the source document(s)",
    "Date errors",
    "Errors in managing interrelated information",
    "Presence of information absent from the source document(s)",
    "Omission of information present in the source document(s)",
    "Failure to generate the summary",
];
