//! Agent configurations and diversity layers.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::HarnessError;

/// System prompt used when an agent carries no persona.
pub const DEFAULT_SYSTEM_PROMPT: &str = "You are a helpful assistant.";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Decoding {
    pub temperature: f64,
    pub top_p: f64,
    pub max_tokens: u32,
}

impl Default for Decoding {
    fn default() -> Self {
        Self {
            temperature: 0.7,
            top_p: 0.95,
            max_tokens: 1024,
        }
    }
}

impl Decoding {
    pub fn validate(&self) -> Result<(), HarnessError> {
        if !(self.temperature.is_finite() && self.temperature >= 0.0) {
            return Err(HarnessError::InvalidConfig(format!(
                "temperature must be >= 0, got {}",
                self.temperature
            )));
        }
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return Err(HarnessError::InvalidConfig(format!(
                "top_p must be in (0, 1], got {}",
                self.top_p
            )));
        }
        if self.max_tokens == 0 {
            return Err(HarnessError::InvalidConfig("max_tokens must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Persona {
    pub id: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentConfig {
    pub type_label: String,
    pub model_id: String,
    pub persona_id: Option<String>,
    pub system_prompt: String,
    pub decoding: Decoding,
    #[serde(default)]
    pub tool_access: Vec<String>,
}

impl AgentConfig {
    pub fn new(model_id: &str, persona: Option<&Persona>, decoding: Decoding) -> Self {
        Self {
            type_label: type_label(model_id, persona.map(|p| p.id.as_str()), &decoding),
            model_id: model_id.to_string(),
            persona_id: persona.map(|p| p.id.clone()),
            system_prompt: persona
                .map(|p| p.text.clone())
                .unwrap_or_else(|| DEFAULT_SYSTEM_PROMPT.to_string()),
            decoding,
            tool_access: Vec::new(),
        }
    }
}

/// Label of the configuration type; equal (model, persona, decoding) tuples
/// give equal labels.
pub fn type_label(model_id: &str, persona_id: Option<&str>, decoding: &Decoding) -> String {
    format!(
        "{model_id}|{}|t{}|p{}|m{}",
        persona_id.unwrap_or("default"),
        decoding.temperature,
        decoding.top_p,
        decoding.max_tokens
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Layer {
    L1,
    L2,
    L3,
    L4,
}

impl Layer {
    pub const ALL: [Layer; 4] = [Layer::L1, Layer::L2, Layer::L3, Layer::L4];

    pub fn ordinal(self) -> u8 {
        match self {
            Layer::L1 => 1,
            Layer::L2 => 2,
            Layer::L3 => 3,
            Layer::L4 => 4,
        }
    }
}

impl fmt::Display for Layer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "L{}", self.ordinal())
    }
}

impl FromStr for Layer {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "L1" => Ok(Layer::L1),
            "L2" => Ok(Layer::L2),
            "L3" => Ok(Layer::L3),
            "L4" => Ok(Layer::L4),
            _ => Err(HarnessError::InvalidLayer(s.to_string())),
        }
    }
}

/// Builds the agent pool for a diversity layer.
///
/// * L1: `n` copies of the first model with the default prompt.
/// * L2: first model, personas cycled.
/// * L3: models cycled, default prompt.
/// * L4: (model, persona) pairs enumerated along shifted diagonals, so the
///   first `min(M, P)` agents differ in both model and persona, then cycled.
pub fn build_layer_pool(
    layer: Layer,
    models: &[String],
    personas: &[Persona],
    n_agents: usize,
    decoding: Decoding,
) -> Result<Vec<AgentConfig>, HarnessError> {
    if n_agents == 0 {
        return Err(HarnessError::InvalidConfig("n_agents must be at least 1".into()));
    }
    decoding.validate()?;
    let need = |ok: bool, what: &str| {
        if ok {
            Ok(())
        } else {
            Err(HarnessError::InsufficientPool(format!("layer {layer} needs {what}")))
        }
    };
    match layer {
        Layer::L1 => {
            need(!models.is_empty(), "at least one model")?;
            let cfg = AgentConfig::new(&models[0], None, decoding);
            Ok(vec![cfg; n_agents])
        }
        Layer::L2 => {
            need(!models.is_empty(), "at least one model")?;
            need(personas.len() >= 2, "at least two personas")?;
            Ok((0..n_agents)
                .map(|i| AgentConfig::new(&models[0], Some(&personas[i % personas.len()]), decoding))
                .collect())
        }
        Layer::L3 => {
            need(models.len() >= 2, "at least two models")?;
            Ok((0..n_agents)
                .map(|i| AgentConfig::new(&models[i % models.len()], None, decoding))
                .collect())
        }
        Layer::L4 => {
            need(models.len() >= 2, "at least two models")?;
            need(personas.len() >= 2, "at least two personas")?;
            let (m, p) = (models.len(), personas.len());
            let pairs: Vec<(usize, usize)> = (0..p)
                .flat_map(|offset| (0..m).map(move |i| (i, (i + offset) % p)))
                .collect();
            Ok((0..n_agents)
                .map(|k| {
                    let (mi, pi) = pairs[k % pairs.len()];
                    AgentConfig::new(&models[mi], Some(&personas[pi]), decoding)
                })
                .collect())
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiversityPlan {
    pub layer: Layer,
    pub model_pool: Vec<String>,
    pub persona_pool: Vec<Persona>,
    pub decoding: Decoding,
}

impl DiversityPlan {
    pub fn agents(&self, n_agents: usize) -> Result<Vec<AgentConfig>, HarnessError> {
        build_layer_pool(
            self.layer,
            &self.model_pool,
            &self.persona_pool,
            n_agents,
            self.decoding,
        )
    }
}
