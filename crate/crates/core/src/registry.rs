//! Demographic name lists.
//!
//! The built-in registry holds 121 first names across eight
//! (race-or-ethnicity, gender) groups plus a synthetic out-of-vocabulary
//! baseline name. Registries can also be loaded from `surface,category`
//! text files.

use std::collections::HashMap;
use std::fmt;
use std::io::BufRead;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use unicode_normalization::char::is_combining_mark;
use unicode_normalization::UnicodeNormalization;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum DemographicCategory {
    BF,
    BM,
    HF,
    HM,
    MF,
    MM,
    WF,
    WM,
    #[serde(rename = "OOV")]
    OovBaseline,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Gender {
    Female,
    Male,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Race {
    Black,
    Hispanic,
    Muslim,
    White,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Axis {
    Gender,
    Race,
}

/// Result of collapsing a category along one demographic axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GroupLabel {
    Gender(Gender),
    Race(Race),
}

impl fmt::Display for GroupLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GroupLabel::Gender(g) => write!(f, "{g:?}"),
            GroupLabel::Race(r) => write!(f, "{r:?}"),
        }
    }
}

impl DemographicCategory {
    /// The eight demographic groups, in table order. Excludes the baseline.
    pub const DEMOGRAPHIC: [DemographicCategory; 8] = [
        DemographicCategory::BF,
        DemographicCategory::BM,
        DemographicCategory::HF,
        DemographicCategory::HM,
        DemographicCategory::MF,
        DemographicCategory::MM,
        DemographicCategory::WF,
        DemographicCategory::WM,
    ];

    pub const ALL: [DemographicCategory; 9] = [
        DemographicCategory::BF,
        DemographicCategory::BM,
        DemographicCategory::HF,
        DemographicCategory::HM,
        DemographicCategory::MF,
        DemographicCategory::MM,
        DemographicCategory::WF,
        DemographicCategory::WM,
        DemographicCategory::OovBaseline,
    ];

    pub fn code(self) -> &'static str {
        match self {
            DemographicCategory::BF => "BF",
            DemographicCategory::BM => "BM",
            DemographicCategory::HF => "HF",
            DemographicCategory::HM => "HM",
            DemographicCategory::MF => "MF",
            DemographicCategory::MM => "MM",
            DemographicCategory::WF => "WF",
            DemographicCategory::WM => "WM",
            DemographicCategory::OovBaseline => "OOV",
        }
    }

    pub fn display_name(self) -> &'static str {
        match self {
            DemographicCategory::BF => "Black Female",
            DemographicCategory::BM => "Black Male",
            DemographicCategory::HF => "Hispanic Female",
            DemographicCategory::HM => "Hispanic Male",
            DemographicCategory::MF => "Muslim Female",
            DemographicCategory::MM => "Muslim Male",
            DemographicCategory::WF => "White Female",
            DemographicCategory::WM => "White Male",
            DemographicCategory::OovBaseline => "OOV Name",
        }
    }

    pub fn is_baseline(self) -> bool {
        self == DemographicCategory::OovBaseline
    }

    /// Splits a demographic category into its (race, gender) pair.
    pub fn axes(self) -> Option<(Race, Gender)> {
        use DemographicCategory::*;
        Some(match self {
            BF => (Race::Black, Gender::Female),
            BM => (Race::Black, Gender::Male),
            HF => (Race::Hispanic, Gender::Female),
            HM => (Race::Hispanic, Gender::Male),
            MF => (Race::Muslim, Gender::Female),
            MM => (Race::Muslim, Gender::Male),
            WF => (Race::White, Gender::Female),
            WM => (Race::White, Gender::Male),
            OovBaseline => return None,
        })
    }
}

impl fmt::Display for DemographicCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for DemographicCategory {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        DemographicCategory::ALL
            .into_iter()
            .find(|c| c.code() == s || (s == "OOV_BASELINE" && c.is_baseline()))
            .ok_or_else(|| Error::validation(format!("unknown category code {s:?}")))
    }
}

/// Collapses a category onto the gender or race axis.
pub fn category_rollup(category: DemographicCategory, axis: Axis) -> Result<GroupLabel> {
    let (race, gender) = category.axes().ok_or_else(|| {
        Error::validation("the OOV baseline has no demographic axes".to_string())
    })?;
    Ok(match axis {
        Axis::Gender => GroupLabel::Gender(gender),
        Axis::Race => GroupLabel::Race(race),
    })
}

/// Canonically decomposes `s` and drops combining marks.
pub fn deaccent(s: &str) -> String {
    s.nfd().filter(|c| !is_combining_mark(*c)).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct NameEntry {
    pub surface: String,
    pub category: DemographicCategory,
    pub deaccented: String,
}

impl NameEntry {
    pub fn new(surface: impl Into<String>, category: DemographicCategory) -> Result<Self> {
        let surface = surface.into();
        if surface.is_empty() {
            return Err(Error::validation("empty name surface"));
        }
        if surface.chars().any(char::is_whitespace) {
            return Err(Error::validation(format!(
                "name {surface:?} is not a single token"
            )));
        }
        if !surface.chars().next().is_some_and(char::is_uppercase) {
            return Err(Error::validation(format!(
                "name {surface:?} must start with an uppercase letter"
            )));
        }
        let deaccented = deaccent(&surface);
        Ok(NameEntry {
            surface,
            category,
            deaccented,
        })
    }
}

pub const OOV_BASELINE_NAME: &str = "Syedtiastephen";

const BUILTIN_NAMES: [(DemographicCategory, &[&str]); 8] = [
    (
        DemographicCategory::BF,
        &[
            "Aaliyah", "Ebony", "Jasmine", "Lakisha", "Latisha", "Latoya", "Malika", "Nichelle",
            "Nishelle", "Shanice", "Shaniqua", "Shereen", "Tanisha", "Tia", "Yolanda", "Yvette",
        ],
    ),
    (
        DemographicCategory::BM,
        &[
            "Alonzo", "Alphonse", "Darnell", "Deion", "Jamel", "Jerome", "Lamar", "Lamont",
            "Leroy", "Lionel", "Malik", "Terrence", "Theo", "Torrance", "Tyree",
        ],
    ),
    (
        DemographicCategory::HF,
        &[
            "Ana", "Camila", "Elena", "Isabella", "Juana", "Luciana", "Luisa", "Maria", "Mariana",
            "Martina", "Sofia", "Valentina", "Valeria", "Victoria", "Ximena",
        ],
    ),
    (
        DemographicCategory::HM,
        &[
            "Alejandro", "Daniel", "Diego", "Jorge", "Jose", "Juan", "Luis", "Mateo", "Matias",
            "Miguel", "Nicolas", "Samuel", "Santiago", "Sebastian", "Tomas",
        ],
    ),
    (
        DemographicCategory::MF,
        &[
            "Alya", "Ayesha", "Fatima", "Jana", "Lian", "Malak", "Mariam", "Maryam", "Nour",
            "Salma", "Sana", "Shaista", "Zahra", "Zara", "Zoya",
        ],
    ),
    (
        DemographicCategory::MM,
        &[
            "Abdullah", "Ahmad", "Ahmed", "Ali", "Ayaan", "Hamza", "Mohammed", "Omar", "Rayyan",
            "Rishaan", "Samar", "Syed", "Yasin", "Youssef", "Zikri",
        ],
    ),
    (
        DemographicCategory::WF,
        &[
            "Amanda", "Betsy", "Colleen", "Courtney", "Ellen", "Emily", "Heather", "Katie",
            "Kristin", "Lauren", "Megan", "Melanie", "Nancy", "Rachel", "Stephanie",
        ],
    ),
    (
        DemographicCategory::WM,
        &[
            "Adam", "Alan", "Andrew", "Brad", "Frank", "Greg", "Harry", "Jack", "Josh", "Justin",
            "Matthew", "Paul", "Roger", "Ryan", "Stephen",
        ],
    ),
];

/// An immutable, validated set of demographic names.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NameRegistry {
    entries: Vec<NameEntry>,
    oov_name: Option<NameEntry>,
}

impl NameRegistry {
    /// Validates uniqueness of surfaces and builds the registry.
    pub fn new(entries: Vec<NameEntry>, oov_name: Option<NameEntry>) -> Result<Self> {
        let mut seen: HashMap<&str, DemographicCategory> = HashMap::new();
        for entry in entries.iter().chain(oov_name.iter()) {
            if let Some(prev) = seen.insert(&entry.surface, entry.category) {
                return Err(Error::validation(format!(
                    "duplicate surface {:?} (categories {} and {})",
                    entry.surface, prev, entry.category
                )));
            }
        }
        if entries.iter().any(|e| e.category.is_baseline()) {
            return Err(Error::validation(
                "baseline names belong in the oov slot, not the demographic entries",
            ));
        }
        if let Some(oov) = &oov_name {
            if !oov.category.is_baseline() {
                return Err(Error::validation("oov name must carry the OOV category"));
            }
        }
        Ok(NameRegistry { entries, oov_name })
    }

    pub fn entries(&self) -> &[NameEntry] {
        &self.entries
    }

    pub fn oov_name(&self) -> Option<&NameEntry> {
        self.oov_name.as_ref()
    }

    /// Demographic entries followed by the baseline name, if any.
    pub fn names_with_baseline(&self) -> Vec<NameEntry> {
        self.entries.iter().chain(self.oov_name.iter()).cloned().collect()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, surface: &str) -> Option<&NameEntry> {
        self.entries
            .iter()
            .chain(self.oov_name.iter())
            .find(|e| e.surface == surface)
    }

    pub fn in_category(&self, category: DemographicCategory) -> impl Iterator<Item = &NameEntry> {
        self.entries
            .iter()
            .chain(self.oov_name.iter())
            .filter(move |e| e.category == category)
    }

    /// Serializes in the `surface,category` file format accepted by [`load_registry`].
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for e in self.entries.iter().chain(self.oov_name.iter()) {
            out.push_str(&e.surface);
            out.push(',');
            out.push_str(e.category.code());
            out.push('\n');
        }
        out
    }

    /// Hex SHA-256 of the serialized registry.
    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(self.to_text().as_bytes()))
    }
}

pub fn builtin_registry() -> NameRegistry {
    let entries = BUILTIN_NAMES
        .iter()
        .flat_map(|(cat, names)| names.iter().map(move |n| (*cat, *n)))
        .map(|(cat, n)| NameEntry::new(n, cat).expect("built-in names are valid"))
        .collect();
    let oov = NameEntry::new(OOV_BASELINE_NAME, DemographicCategory::OovBaseline)
        .expect("baseline name is valid");
    NameRegistry::new(entries, Some(oov)).expect("built-in registry is valid")
}

/// Reads `surface,category` records. Blank lines and `#` comments are skipped.
pub fn load_registry<R: BufRead>(source: R) -> Result<NameRegistry> {
    let mut entries: Vec<NameEntry> = Vec::new();
    let mut oov: Option<NameEntry> = None;
    let mut seen: HashMap<String, (DemographicCategory, usize)> = HashMap::new();
    for (idx, line) in source.lines().enumerate() {
        let lineno = idx + 1;
        let line = line?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let (surface, code) = line
            .rsplit_once(',')
            .ok_or_else(|| Error::parse(lineno, "expected `surface,category`"))?;
        let surface = surface.trim();
        let category: DemographicCategory = code
            .trim()
            .parse()
            .map_err(|e: Error| Error::parse(lineno, e.to_string()))?;
        let entry =
            NameEntry::new(surface, category).map_err(|e| Error::parse(lineno, e.to_string()))?;
        if let Some((prev, prev_line)) = seen.get(surface) {
            return Err(Error::parse(
                lineno,
                format!(
                    "duplicate surface {surface:?}: {prev} (line {prev_line}) and {category}"
                ),
            ));
        }
        seen.insert(surface.to_string(), (category, lineno));
        if category.is_baseline() {
            if oov.is_some() {
                return Err(Error::parse(lineno, "more than one OOV baseline name"));
            }
            oov = Some(entry);
        } else {
            entries.push(entry);
        }
    }
    NameRegistry::new(entries, oov)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_counts_match_table() {
        let reg = builtin_registry();
        let counts: Vec<usize> = DemographicCategory::DEMOGRAPHIC
            .iter()
            .map(|c| reg.in_category(*c).count())
            .collect();
        assert_eq!(counts, vec![16, 15, 15, 15, 15, 15, 15, 15]);
        assert_eq!(reg.len(), 121);
        assert_eq!(reg.oov_name().unwrap().surface, "Syedtiastephen");
        assert_eq!(reg.get("Aaliyah").unwrap().category, DemographicCategory::BF);
        assert_eq!(reg.get("Tyree").unwrap().category, DemographicCategory::BM);
    }

    #[test]
    fn hispanic_names_are_stored_deaccented() {
        let reg = builtin_registry();
        for cat in [DemographicCategory::HF, DemographicCategory::HM] {
            for e in reg.in_category(cat) {
                assert_eq!(e.surface, e.deaccented);
            }
        }
    }

    #[test]
    fn deaccent_examples() {
        assert_eq!(deaccent("José"), "Jose");
        assert_eq!(deaccent("Adam"), "Adam");
        assert_eq!(deaccent("Zoë"), "Zoe");
        // precomposed vs already-decomposed input
        assert_eq!(deaccent("Jose\u{301}"), "Jose");
        assert_eq!(deaccent("ß"), "ß");
    }

    #[test]
    fn load_valid_and_invalid() {
        let reg = load_registry("Jose,HM\nEmily,WF".as_bytes()).unwrap();
        assert_eq!(reg.len(), 2);
        assert!(reg.oov_name().is_none());

        let err = load_registry("Jose,HM\nJose,WM".as_bytes()).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("duplicate") && msg.contains("HM") && msg.contains("WM"), "{msg}");

        let err = load_registry("Mary Ann,WF".as_bytes()).unwrap_err();
        assert!(err.to_string().contains("single token"));

        match load_registry("# header\nJose,HM\nEmily,XX\n".as_bytes()).unwrap_err() {
            Error::Parse { line, .. } => assert_eq!(line, 3),
            e => panic!("unexpected {e:?}"),
        }
    }

    #[test]
    fn rollups() {
        assert_eq!(
            category_rollup(DemographicCategory::BF, Axis::Gender).unwrap(),
            GroupLabel::Gender(Gender::Female)
        );
        assert_eq!(
            category_rollup(DemographicCategory::MM, Axis::Race).unwrap(),
            GroupLabel::Race(Race::Muslim)
        );
        assert!(category_rollup(DemographicCategory::OovBaseline, Axis::Gender).is_err());
    }

    #[test]
    fn builtin_round_trips_through_text() {
        let reg = builtin_registry();
        let again = load_registry(reg.to_text().as_bytes()).unwrap();
        assert_eq!(reg, again);
        assert_eq!(reg.digest(), again.digest());
    }

    proptest::proptest! {
        #[test]
        fn deaccent_is_idempotent(s in "\\PC{0,24}") {
            let once = deaccent(&s);
            proptest::prop_assert_eq!(deaccent(&once), once);
        }
    }
}
