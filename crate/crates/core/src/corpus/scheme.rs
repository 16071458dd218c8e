use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::CorpusError;

/// A named group of move labels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Category {
    pub name: String,
    pub labels: Vec<String>,
}

/// An ordered coding scheme. Label order (category by category) is the
/// column order used by frequencies, design matrices and networks.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawScheme", into = "RawScheme")]
pub struct MoveScheme {
    name: String,
    categories: Vec<Category>,
    labels: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct RawScheme {
    name: String,
    categories: Vec<Category>,
}

impl TryFrom<RawScheme> for MoveScheme {
    type Error = CorpusError;

    fn try_from(raw: RawScheme) -> Result<Self, Self::Error> {
        MoveScheme::new(raw.name, raw.categories)
    }
}

impl From<MoveScheme> for RawScheme {
    fn from(s: MoveScheme) -> Self {
        RawScheme {
            name: s.name,
            categories: s.categories,
        }
    }
}

pub const BUILTIN_MOVES14: &str = "moves14";
pub const BUILTIN_SEDA8: &str = "seda8";

const MOVES14: &[(&str, &[&str])] = &[
    (
        "Elaborating Ideas",
        &[
            "Perspective Taking",
            "Building on Ideas",
            "Connecting with External Contexts",
        ],
    ),
    (
        "Position Taking",
        &[
            "Inviting Perspectives",
            "Position Declaration",
            "Certainty Expression",
        ],
    ),
    (
        "Reasoning & Justifications",
        &[
            "Logical Justification",
            "Evidence-based Argument",
            "Critical Questioning",
        ],
    ),
    (
        "Emotional Expression",
        &["Emotive/Experiential Argument", "Acknowledging Ambiguity"],
    ),
    (
        "Discussion Management",
        &[
            "Procedure Management",
            "Facilitating Agreement",
            "Conversation Maintenance",
        ],
    ),
];

const SEDA8: &[&str] = &[
    "Invite elaboration or reasoning",
    "Make reasoning explicit",
    "Build on ideas",
    "Express or invite ideas",
    "Positioning and coordination",
    "Reflect on the dialogue or activity",
    "Connect",
    "Guide direction of dialogue or activity",
];

impl MoveScheme {
    pub fn new(name: impl Into<String>, categories: Vec<Category>) -> Result<Self, CorpusError> {
        let name = name.into();
        if categories.is_empty() {
            return Err(CorpusError::schema(0, "scheme has no categories"));
        }
        let mut seen = HashSet::new();
        let mut labels = Vec::new();
        for (i, cat) in categories.iter().enumerate() {
            if cat.labels.is_empty() {
                return Err(CorpusError::schema(
                    i + 1,
                    format!("category {:?} has no labels", cat.name),
                ));
            }
            for label in &cat.labels {
                if label.is_empty() {
                    return Err(CorpusError::schema(i + 1, "empty label"));
                }
                if !seen.insert(label.as_str()) {
                    return Err(CorpusError::schema(
                        i + 1,
                        format!("duplicate label {label:?}"),
                    ));
                }
                labels.push(label.clone());
            }
        }
        Ok(Self {
            name,
            categories,
            labels,
        })
    }

    /// The 14-move scheme for ethical discussions, in five categories.
    pub fn moves14() -> Self {
        let categories = MOVES14
            .iter()
            .map(|(name, labels)| Category {
                name: name.to_string(),
                labels: labels.iter().map(|l| l.to_string()).collect(),
            })
            .collect();
        Self::new(BUILTIN_MOVES14, categories).expect("builtin scheme is valid")
    }

    /// The eight major SEDA clusters, one category holding all labels.
    pub fn seda8() -> Self {
        let categories = vec![Category {
            name: "SEDA clusters".to_string(),
            labels: SEDA8.iter().map(|l| l.to_string()).collect(),
        }];
        Self::new(BUILTIN_SEDA8, categories).expect("builtin scheme is valid")
    }

    pub fn builtin(name: &str) -> Option<Self> {
        match name {
            BUILTIN_MOVES14 => Some(Self::moves14()),
            BUILTIN_SEDA8 => Some(Self::seda8()),
            _ => None,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn categories(&self) -> &[Category] {
        &self.categories
    }

    /// All labels in scheme order.
    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    pub fn contains(&self, label: &str) -> bool {
        self.index_of(label).is_some()
    }

    pub fn category_of(&self, label: &str) -> Option<&str> {
        self.categories
            .iter()
            .find(|c| c.labels.iter().any(|l| l == label))
            .map(|c| c.name.as_str())
    }
}

/// Resolves a builtin scheme name or reads a scheme JSON file.
pub fn load_scheme(name_or_path: &str) -> Result<MoveScheme, CorpusError> {
    if let Some(s) = MoveScheme::builtin(name_or_path) {
        return Ok(s);
    }
    let path = Path::new(name_or_path);
    if !path.exists() {
        // Bare identifiers are treated as builtin names, not relative paths.
        if !name_or_path.contains(['/', '\\', '.']) {
            return Err(CorpusError::UnknownBuiltin(name_or_path.to_string()));
        }
        return Err(CorpusError::MissingFile(path.to_path_buf()));
    }
    let text = std::fs::read_to_string(path).map_err(|e| CorpusError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| match e.classify() {
        serde_json::error::Category::Data => {
            // `try_from` errors surface as data errors carrying our message.
            CorpusError::schema(0, e.to_string())
        }
        _ => CorpusError::schema(e.line(), e.to_string()),
    })
}
