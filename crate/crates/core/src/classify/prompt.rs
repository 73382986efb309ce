//! Three-part prompt: task description, category descriptions, POI observation.

use std::fmt::Write;

use serde::{Deserialize, Serialize};

use crate::activity::{ActivityCode, NUM_ACTIVITIES};
use crate::poi::PoiRecord;

pub const TASK_HEADER: &str = "### Task description";
pub const CATEGORY_HEADER: &str = "### Category descriptions";
pub const HINT_HEADER: &str = "### Dataset notes";
pub const OBSERVATION_HEADER: &str = "### POI observation";

const DEFAULT_TASK: &str = "You will be given the observation of one point of interest (POI) taken from an \
OpenStreetMap extract. Some features of the POI may be missing. Decide why a person would most likely visit \
this POI and classify it into the activity categories listed below. Return the three most relevant categories \
in decreasing order of probability, each with a probability between 0 and 1. Answer with exactly one line per \
category in the form `code: probability` (for example `7: 0.7`) and nothing else.";

const DEFAULT_CATEGORIES: [(&str, &str); NUM_ACTIVITIES] = [
    ("Staying at one's own residence.", "houses, apartments, residential buildings"),
    ("Working for pay at a workplace.", "offices, factories, warehouses, company premises"),
    ("Attending classes as a student.", "schools, universities, colleges, kindergartens"),
    ("Caring for a child or another person.", "daycare centres, nursing homes, childcare facilities"),
    ("Shopping for goods.", "supermarkets, malls, clothing stores, convenience stores, car dealers"),
    ("Paying for a service.", "banks, hair salons, car repair, laundries, beauty parlours"),
    ("Eating or buying food and drinks.", "restaurants, fast food, cafes, bakeries, food courts"),
    ("Running errands that are not shopping.", "post offices, government offices, libraries, fuel stations"),
    ("Leisure and entertainment.", "parks, cinemas, theatres, museums, tourist attractions"),
    ("Physical exercise and sports.", "gyms, fitness centres, sports halls, swimming pools, stadiums"),
    ("Visiting friends or relatives.", "residential areas that are not one's own home"),
    ("Receiving medical care.", "hospitals, clinics, doctors, dentists, pharmacies"),
    ("Religious or community activities.", "churches, mosques, temples, places of worship"),
    ("Any other purpose not covered above.", "toilets, benches, unclassifiable places"),
    ("Dropping off or picking up passengers.", "parking lots, bus stops, train stations, taxi stands"),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryDescription {
    pub code: ActivityCode,
    pub definition: String,
    pub examples: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptSpec {
    pub task_description: String,
    pub categories: Vec<CategoryDescription>,
    pub hints: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PromptSpecError {
    #[error("category {0} is described more than once")]
    Duplicate(ActivityCode),
    #[error("category {0} has no description")]
    Missing(ActivityCode),
}

impl Default for PromptSpec {
    fn default() -> Self {
        let categories = ActivityCode::all()
            .zip(DEFAULT_CATEGORIES)
            .map(|(code, (definition, examples))| CategoryDescription {
                code,
                definition: definition.into(),
                examples: examples.into(),
            })
            .collect();
        Self {
            task_description: DEFAULT_TASK.into(),
            categories,
            hints: Vec::new(),
        }
    }
}

impl PromptSpec {
    pub fn with_hints<I, S>(mut self, hints: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.hints = hints.into_iter().map(Into::into).collect();
        self
    }

    /// Every code must be described exactly once.
    pub fn validate(&self) -> Result<(), PromptSpecError> {
        let mut seen = [false; NUM_ACTIVITIES];
        for c in &self.categories {
            if std::mem::replace(&mut seen[c.code.index()], true) {
                return Err(PromptSpecError::Duplicate(c.code));
            }
        }
        match seen.iter().position(|s| !s) {
            Some(i) => Err(PromptSpecError::Missing(ActivityCode::from_index(i).unwrap())),
            None => Ok(()),
        }
    }
}

/// Renders a POI as plain sentences, skipping absent values.
pub fn describe_poi(poi: &PoiRecord) -> String {
    let mut sentences = Vec::with_capacity(poi.features.len() + 1);
    if let Some(name) = &poi.name {
        sentences.push(format!("The name is {name}."));
    }
    for (tag, value) in &poi.features {
        let tag = tag.replace(['_', ':'], " ");
        let value = value.replace('_', " ");
        sentences.push(format!("The {tag} is {value}."));
    }
    sentences.join(" ")
}

/// Pure: identical inputs give byte-identical prompts.
pub fn build_prompt(spec: &PromptSpec, poi: &PoiRecord) -> String {
    let mut out = String::with_capacity(2048);
    let _ = writeln!(out, "{TASK_HEADER}\n{}\n", spec.task_description.trim_end());
    let _ = writeln!(out, "{CATEGORY_HEADER}");
    for c in &spec.categories {
        let _ = writeln!(
            out,
            "{}. {}: {} Examples: {}.",
            c.code,
            c.code.label(),
            c.definition.trim_end(),
            c.examples.trim_end_matches('.')
        );
    }
    out.push('\n');
    if !spec.hints.is_empty() {
        let _ = writeln!(out, "{HINT_HEADER}");
        for h in &spec.hints {
            let _ = writeln!(out, "{h}");
        }
        out.push('\n');
    }
    let _ = writeln!(out, "{OBSERVATION_HEADER}\n{}", describe_poi(poi));
    out
}

/// The observation section of a prompt produced by [`build_prompt`].
pub fn observation_section(prompt: &str) -> Option<&str> {
    let start = prompt.rfind(OBSERVATION_HEADER)? + OBSERVATION_HEADER.len();
    Some(prompt[start..].trim())
}
