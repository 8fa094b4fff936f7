use serde::{Deserialize, Serialize};

use super::components::ComponentSet;
use super::features::RadiomicFeatures;
use crate::error::{Error, Result};

pub const MULTIPLE_MIN_COMPONENTS: usize = 3;
pub const DOMINANT_FRACTION: f64 = 0.8;
pub const WELL_SPHERICITY: f64 = 0.7;
pub const WELL_SOLIDITY: f64 = 0.9;
pub const INFILTRATIVE_SPHERICITY: f64 = 0.5;
pub const INFILTRATIVE_SOLIDITY: f64 = 0.7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    Multiple,
    WellCircumscribedSingle,
    InfiltrativeSingle,
    IrregularComplexSingle,
}

impl Category {
    pub const ALL: [Category; 4] = [
        Category::Multiple,
        Category::WellCircumscribedSingle,
        Category::InfiltrativeSingle,
        Category::IrregularComplexSingle,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Category::Multiple => "multiple",
            Category::WellCircumscribedSingle => "well_circumscribed_single",
            Category::InfiltrativeSingle => "infiltrative_single",
            Category::IrregularComplexSingle => "irregular_complex_single",
        }
    }
}

impl std::fmt::Display for Category {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Category {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Category::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| Error::Validation(format!("unknown category {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CategoryDecision {
    pub category: Category,
    /// The irregular/complex fallback was reached outside the intermediate
    /// sphericity 0.5-0.7, solidity 0.7-0.9 band.
    pub rule_gap: bool,
}

/// Rules are applied in order: multiplicity, well circumscribed,
/// infiltrative, then the irregular/complex fallback.
pub fn classify_category(components: &ComponentSet, dominant: &RadiomicFeatures) -> Result<CategoryDecision> {
    classify(components.n_components, components.largest_fraction(), dominant.sphericity, dominant.solidity)
}

pub fn classify(n_components: usize, largest_fraction: f64, sphericity: f64, solidity: f64) -> Result<CategoryDecision> {
    let decided = |category| Ok(CategoryDecision { category, rule_gap: false });
    match n_components {
        0 => return Err(Error::NoLesion),
        n if n >= MULTIPLE_MIN_COMPONENTS => return decided(Category::Multiple),
        2 if largest_fraction < DOMINANT_FRACTION => return decided(Category::Multiple),
        _ => {}
    }
    if sphericity > WELL_SPHERICITY && solidity > WELL_SOLIDITY {
        return decided(Category::WellCircumscribedSingle);
    }
    if sphericity < INFILTRATIVE_SPHERICITY || solidity < INFILTRATIVE_SOLIDITY {
        return decided(Category::InfiltrativeSingle);
    }
    let in_band = (INFILTRATIVE_SPHERICITY..=WELL_SPHERICITY).contains(&sphericity)
        && (INFILTRATIVE_SOLIDITY..=WELL_SOLIDITY).contains(&solidity);
    Ok(CategoryDecision { category: Category::IrregularComplexSingle, rule_gap: !in_band })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn single(sph: f64, sol: f64) -> CategoryDecision {
        classify(1, 1.0, sph, sol).unwrap()
    }

    #[test]
    fn three_components_are_multiple() {
        assert_eq!(classify(3, 0.99, 0.95, 0.99).unwrap().category, Category::Multiple);
    }

    #[test]
    fn two_components_below_dominance_are_multiple() {
        assert_eq!(classify(2, 0.75, 0.95, 0.99).unwrap().category, Category::Multiple);
        assert_eq!(classify(2, 0.85, 0.95, 0.99).unwrap().category, Category::WellCircumscribedSingle);
    }

    #[test]
    fn published_rule_examples() {
        assert_eq!(single(0.9, 0.95), CategoryDecision { category: Category::WellCircumscribedSingle, rule_gap: false });
        assert_eq!(single(0.4, 0.95), CategoryDecision { category: Category::InfiltrativeSingle, rule_gap: false });
        assert_eq!(single(0.6, 0.8), CategoryDecision { category: Category::IrregularComplexSingle, rule_gap: false });
    }

    #[test]
    fn rule_gap_is_flagged() {
        assert_eq!(single(0.6, 0.95), CategoryDecision { category: Category::IrregularComplexSingle, rule_gap: true });
        assert!(single(0.9, 0.8).rule_gap);
    }

    #[test]
    fn no_components_is_no_lesion() {
        assert!(matches!(classify(0, 0.0, 1.0, 1.0), Err(Error::NoLesion)));
    }

    #[test]
    fn string_round_trip() {
        for c in Category::ALL {
            assert_eq!(c.as_str().parse::<Category>().unwrap(), c);
            assert_eq!(serde_json::to_string(&c).unwrap(), format!("\"{c}\""));
        }
    }

    proptest! {
        #[test]
        fn total_and_deterministic(n in 1usize..6, frac in 0.0f64..=1.0, sph in 0.0f64..1.5, sol in 0.0f64..1.2) {
            let a = classify(n, frac, sph, sol).unwrap();
            prop_assert_eq!(a, classify(n, frac, sph, sol).unwrap());
        }
    }
}
