//! Clothing attribute token: two categorical colours slotted into a fixed
//! prompt template.

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const PROMPT_TEMPLATE: &str = "a pedestrian wearing a {top} top and {pants} pants";

#[derive(Debug, Error, PartialEq)]
pub enum AttributeError {
    #[error("colour `{0}` is not in the palette")]
    UnknownColor(String),
    #[error("prompt does not follow the fixed template: `{0}`")]
    Template(String),
}

/// Named RGB colours the token may draw from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Palette {
    pub colors: Vec<NamedColor>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedColor {
    pub name: String,
    pub rgb: [u8; 3],
}

impl Default for Palette {
    fn default() -> Self {
        let entries: [(&str, [u8; 3]); 10] = [
            ("white", [255, 255, 255]),
            ("black", [0, 0, 0]),
            ("red", [200, 30, 30]),
            ("green", [40, 160, 60]),
            ("blue", [30, 60, 200]),
            ("yellow", [230, 210, 40]),
            ("gray", [128, 128, 128]),
            ("brown", [120, 80, 40]),
            ("orange", [240, 140, 30]),
            ("purple", [130, 50, 160]),
        ];
        Palette {
            colors: entries
                .into_iter()
                .map(|(name, rgb)| NamedColor {
                    name: name.to_string(),
                    rgb,
                })
                .collect(),
        }
    }
}

impl Palette {
    pub fn rgb(&self, name: &str) -> Result<[u8; 3], AttributeError> {
        self.colors
            .iter()
            .find(|c| c.name == name)
            .map(|c| c.rgb)
            .ok_or_else(|| AttributeError::UnknownColor(name.to_string()))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.colors.iter().any(|c| c.name == name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.colors.iter().map(|c| c.name.as_str())
    }
}

/// Top and pants colour names.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AttributeToken {
    pub top: String,
    pub pants: String,
}

impl AttributeToken {
    pub fn new(top: impl Into<String>, pants: impl Into<String>) -> Self {
        AttributeToken {
            top: top.into(),
            pants: pants.into(),
        }
    }

    pub fn validate(&self, palette: &Palette) -> Result<(), AttributeError> {
        palette.rgb(&self.top)?;
        palette.rgb(&self.pants)?;
        Ok(())
    }

    pub fn rgb(&self, palette: &Palette) -> Result<([u8; 3], [u8; 3]), AttributeError> {
        Ok((palette.rgb(&self.top)?, palette.rgb(&self.pants)?))
    }

    pub fn prompt(&self) -> String {
        PROMPT_TEMPLATE
            .replace("{top}", &self.top)
            .replace("{pants}", &self.pants)
    }

    /// Inverse of [`AttributeToken::prompt`]; only the colour words may vary.
    pub fn from_prompt(prompt: &str, palette: &Palette) -> Result<Self, AttributeError> {
        let bad = || AttributeError::Template(prompt.to_string());
        let text = prompt.trim().trim_end_matches('.');
        let lower = text.to_ascii_lowercase();
        let rest = lower.strip_prefix("a pedestrian wearing a ").ok_or_else(bad)?;
        let (top, rest) = rest.split_once(" top and ").ok_or_else(bad)?;
        let pants = rest.strip_suffix(" pants").ok_or_else(bad)?;
        if top.contains(' ') || pants.contains(' ') {
            return Err(bad());
        }
        let token = AttributeToken::new(top, pants);
        token.validate(palette)?;
        Ok(token)
    }
}
