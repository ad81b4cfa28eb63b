//! Loading graphs from catalog names or files, and the roundtrip check
//! over every supported document format.

use std::path::Path;

use cfiblur::basegraph::catalog;
use cfiblur::cfi::RelationalCfi;
use cfiblur::game::Transcript;
use cfiblur::{BaseGraph, Blurer, CfiStructure};
use serde::Serialize;

use crate::scenario::Scenario;
use crate::HarnessError;

/// Parses a graph document, text or JSON.
pub fn parse_graph(text: &str) -> Result<BaseGraph, HarnessError> {
    if text.trim_start().starts_with('{') {
        Ok(BaseGraph::from_json(text)?)
    } else {
        Ok(BaseGraph::from_text(text)?)
    }
}

/// `spec` is a path to a graph file when one exists, otherwise a catalog
/// name such as `K4`, `Q4`, `petersen` or `prism5`.
pub fn load_graph(spec: &str) -> Result<BaseGraph, HarnessError> {
    let path = Path::new(spec);
    if path.is_file() {
        return parse_graph(&std::fs::read_to_string(path)?);
    }
    catalog::by_name(spec).map_err(|e| HarnessError::Input(format!("{spec}: not a file and {e}")))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Format {
    GraphText,
    GraphJson,
    Cfi,
    CfiStripped,
    Blurer,
    Transcript,
    Scenario,
}

pub fn detect(text: &str) -> Result<Format, HarnessError> {
    let trimmed = text.trim_start();
    if !trimmed.starts_with('{') {
        return Ok(Format::GraphText);
    }
    let v: serde_json::Value = serde_json::from_str(text)?;
    let has = |k: &str| v.get(k).is_some();
    let format = v.get("format").and_then(|f| f.as_str());
    Ok(match format {
        Some("basegraph/1") => Format::GraphJson,
        Some("cfi/1") if v.get("twist").is_some_and(|t| !t.is_null()) => Format::Cfi,
        Some("cfi/1") => Format::CfiStripped,
        Some(other) => return Err(HarnessError::Input(format!("unknown format tag {other:?}"))),
        None if has("tuples") && has("a") && has("d") => Format::Blurer,
        None if has("rounds") && has("outcome") => Format::Transcript,
        None if has("name") && has("verify") => Format::Scenario,
        None => return Err(HarnessError::Input("unrecognised document".into())),
    })
}

/// Outcome of [`roundtrip`].
#[derive(Clone, Debug, Serialize)]
pub struct Roundtrip {
    pub format: Format,
    /// Re-encoding the decoded value gives the same bytes twice in a row
    /// and the two decoded values are equal.
    pub stable: bool,
    /// The input already was in canonical encoding.
    pub canonical: bool,
}

impl Roundtrip {
    pub fn holds(&self) -> bool {
        self.stable
    }
}

/// Decodes, encodes, decodes and encodes again.
pub fn roundtrip(text: &str) -> Result<Roundtrip, HarnessError> {
    let format = detect(text)?;
    let encode: fn(&str) -> Result<String, HarnessError> = match format {
        Format::GraphText => |t| Ok(parse_graph(t)?.to_text()),
        Format::GraphJson => |t| Ok(parse_graph(t)?.to_json()),
        Format::Cfi => |t| Ok(CfiStructure::from_json(t)?.to_json(false)),
        Format::CfiStripped => |t| {
            RelationalCfi::from_json(t)?;
            let v: serde_json::Value = serde_json::from_str(t)?;
            Ok(format!("{}\n", serde_json::to_string(&v)?))
        },
        Format::Blurer => |t| {
            let b = Blurer::from_json(t)?.map_err(|v| HarnessError::Input(format!("not a blurer: {v}")))?;
            Ok(b.to_json())
        },
        Format::Transcript => |t| Ok(format!("{}\n", Transcript::from_json(t)?.to_json())),
        Format::Scenario => |t| {
            let s: Scenario = serde_json::from_str(t)?;
            Ok(format!("{}\n", serde_json::to_string_pretty(&s)?))
        },
    };
    let first = encode(text)?;
    let second = encode(&first)?;
    Ok(Roundtrip { format, stable: first == second, canonical: first == text })
}
