//! Regenerates the synthetic fire-safety study and its replay cassette under
//! `crates/core/fixtures/`.
//!
//! Answers are scripted so that, after auto-judging, the paired 2x2 tables for
//! gemini-2.0-flash vs gpt-4o-mini are exactly the ones listed in `TABLES`.
//!
//!     cargo run -p sqare-core --example gen_fixture

use std::path::PathBuf;

use chrono::{TimeZone, Utc};
use serde_json::{json, Value};
use sqare_core::harness::{Cassette, CassetteRecord};
use sqare_core::studydef::{build_prompt, parse_study, ConditionKind};

const MODELS: [&str; 2] = ["gemini-2.0-flash", "gpt-4o-mini"];

// (language, condition, a, b, c, d): a both valid, b only the first model,
// c only the second, d neither.
const TABLES: [(&str, ConditionKind, usize, usize, usize, usize); 8] = [
    ("de", ConditionKind::Complete, 28, 0, 0, 0),
    ("de", ConditionKind::Incomplete, 10, 4, 8, 6),
    ("de", ConditionKind::Conflicting, 2, 0, 1, 25),
    ("de", ConditionKind::NoContext, 24, 2, 2, 0),
    ("en", ConditionKind::Complete, 28, 0, 0, 0),
    ("en", ConditionKind::Incomplete, 27, 1, 0, 0),
    ("en", ConditionKind::Conflicting, 2, 1, 1, 24),
    ("en", ConditionKind::NoContext, 14, 0, 9, 5),
];

struct Item {
    en: &'static str,
    de: &'static str,
    unit_en: &'static str,
    unit_de: &'static str,
    truth: u32,
    conflict: u32,
    other: u32,
}

macro_rules! items {
    ($(($en:literal, $de:literal, $ue:literal, $ud:literal, $t:literal, $c:literal, $o:literal)),* $(,)?) => {
        [$(Item { en: $en, de: $de, unit_en: $ue, unit_de: $ud, truth: $t, conflict: $c, other: $o }),*]
    };
}

const ITEMS: [Item; 28] = items![
    ("Which number reaches the fire brigade in an emergency?", "Unter welcher Nummer erreicht man im Notfall die Feuerwehr?", "", "", 112, 911, 110),
    ("How many minutes of fire resistance does an EI 30 door provide?", "Wie viele Minuten Feuerwiderstand bietet eine EI-30-Tür?", "minutes", "Minuten", 30, 60, 90),
    ("What is the maximum escape route length to the nearest exit in metres?", "Wie lang darf der Fluchtweg bis zum nächsten Ausgang höchstens sein (in Metern)?", "metres", "Meter", 35, 50, 20),
    ("At what maximum height in centimetres should an extinguisher handle hang?", "In welcher maximalen Höhe in Zentimetern soll der Griff eines Feuerlöschers hängen?", "centimetres", "Zentimeter", 120, 150, 80),
    ("How many months may pass between smoke alarm checks?", "Wie viele Monate dürfen zwischen zwei Prüfungen eines Rauchmelders liegen?", "months", "Monate", 12, 24, 6),
    ("Every how many years must portable extinguishers be serviced?", "Alle wie viele Jahre müssen tragbare Feuerlöscher gewartet werden?", "years", "Jahre", 2, 5, 3),
    ("How many seconds should the first attack with a 6 kg powder extinguisher last at most?", "Wie viele Sekunden reicht ein 6-kg-Pulverlöscher höchstens?", "seconds", "Sekunden", 15, 45, 8),
    ("How many litres of foam agent does the standard 9-litre extinguisher hold?", "Wie viele Liter Löschmittel fasst der Standard-Schaumlöscher?", "litres", "Liter", 9, 12, 6),
    ("What is the minimum clear width of a main escape corridor in centimetres?", "Wie breit muss ein Hauptfluchtweg mindestens sein (in Zentimetern)?", "centimetres", "Zentimeter", 120, 90, 200),
    ("How many fire wardens per 20 employees are recommended at minimum?", "Wie viele Brandschutzhelfer werden je 20 Beschäftigte mindestens empfohlen?", "", "", 1, 4, 3),
    ("How many metres should the distance to the next extinguisher be at most?", "Wie viele Meter darf der Weg zum nächsten Feuerlöscher höchstens betragen?", "metres", "Meter", 20, 40, 60),
    ("How many fire drills per year are required in a school?", "Wie viele Räumungsübungen pro Jahr sind an einer Schule vorgeschrieben?", "", "", 2, 6, 4),
    ("What temperature in degrees Celsius triggers a standard sprinkler bulb?", "Bei welcher Temperatur in Grad Celsius löst eine Standard-Sprinklerampulle aus?", "degrees Celsius", "Grad Celsius", 68, 93, 141),
    ("How many minutes must the emergency lighting run at least?", "Wie viele Minuten muss die Sicherheitsbeleuchtung mindestens leuchten?", "minutes", "Minuten", 60, 30, 180),
    ("At what distance in metres from a flame must flammable liquids be stored?", "In welchem Abstand in Metern von offenem Feuer sind brennbare Flüssigkeiten zu lagern?", "metres", "Meter", 5, 15, 2),
    ("How many hours of fire resistance does a fire wall need?", "Wie viele Stunden Feuerwiderstand braucht eine Brandwand?", "hours", "Stunden", 90, 30, 120),
    ("How many fire protection training hours does a warden receive?", "Wie viele Unterrichtsstunden umfasst die Ausbildung zum Brandschutzhelfer?", "hours", "Stunden", 4, 16, 8),
    ("At what height in centimetres must an escape sign be mounted at least?", "In welcher Mindesthöhe in Zentimetern ist ein Fluchtwegschild anzubringen?", "centimetres", "Zentimeter", 200, 100, 250),
    ("How many extinguishing units are needed for 50 square metres of office space?", "Wie viele Löschmitteleinheiten braucht eine Bürofläche von 50 Quadratmetern?", "units", "Einheiten", 6, 18, 12),
    ("How many square metres may a smoke compartment cover at most?", "Wie viele Quadratmeter darf ein Rauchabschnitt höchstens umfassen?", "square metres", "Quadratmeter", 1600, 400, 2500),
    ("Every how many years must the fire alarm system be inspected by an expert?", "Alle wie viele Jahre muss die Brandmeldeanlage durch Sachverständige geprüft werden?", "years", "Jahre", 3, 10, 7),
    ("How many bar of operating pressure does a stored-pressure extinguisher have?", "Wie viel bar Betriebsdruck hat ein Dauerdrucklöscher?", "bar", "bar", 14, 50, 200),
    ("How many kilograms of CO2 does the standard office extinguisher contain?", "Wie viele Kilogramm CO2 enthält der übliche Bürolöscher?", "kilograms", "Kilogramm", 5, 25, 10),
    ("How many centimetres of clearance must remain in front of a fire hose cabinet?", "Wie viele Zentimeter müssen vor einem Wandhydranten frei bleiben?", "centimetres", "Zentimeter", 100, 30, 60),
    ("How many storeys may a building have to count as low-rise?", "Wie viele Geschosse darf ein Gebäude geringer Höhe höchstens haben?", "storeys", "Geschosse", 7, 13, 22),
    ("How many metres high is the threshold for a high-rise building?", "Ab wie vielen Metern Höhe gilt ein Gebäude als Hochhaus?", "metres", "Meter", 22, 70, 100),
    ("How many minutes may the fire brigade take to arrive at most?", "Wie viele Minuten Hilfsfrist gelten höchstens für die Feuerwehr?", "minutes", "Minuten", 10, 40, 25),
    ("How many persons may use one escape stairway at most per module?", "Wie viele Personen dürfen je Modul einer Fluchttreppe höchstens zugeordnet werden?", "persons", "Personen", 80, 300, 150),
];

fn pattern(value: u32) -> Value {
    json!({"regex": [format!(r"\b{value}\b")]})
}

fn with_unit(value: u32, unit: &str) -> String {
    if unit.is_empty() {
        value.to_string()
    } else {
        format!("{value} {unit}")
    }
}

fn study_json() -> Value {
    let abstention = json!({
        "de": {"any_of": ["keine angabe", "nennt keinen", "nicht angegeben"]},
        "en": {"any_of": ["does not say", "not stated", "no information"]}
    });
    let questions: Vec<Value> = ITEMS
        .iter()
        .enumerate()
        .map(|(i, item)| {
            let material = format!("leaflet-{}", i % 4 + 1);
            json!({
                "id": format!("fs{:02}", i + 1),
                "text": {"de": item.de, "en": item.en},
                "factual_patterns": {"de": pattern(item.truth), "en": pattern(item.truth)},
                "abstention_patterns": abstention,
                "contexts": {
                    "complete": {
                        "de": {"body": format!("Laut Merkblatt beträgt der Wert {}.", with_unit(item.truth, item.unit_de)), "claim_patterns": pattern(item.truth)},
                        "en": {"body": format!("According to the leaflet the value is {}.", with_unit(item.truth, item.unit_en)), "claim_patterns": pattern(item.truth)}
                    },
                    "incomplete": {
                        "de": {"body": "Das Merkblatt behandelt dieses Thema, nennt aber keinen Wert.", "claim_patterns": abstention["de"]},
                        "en": {"body": "The leaflet covers this topic but gives no figure.", "claim_patterns": abstention["en"]}
                    },
                    "conflicting": {
                        "de": {"body": format!("Laut Merkblatt beträgt der Wert {}.", with_unit(item.conflict, item.unit_de)), "claim_patterns": pattern(item.conflict)},
                        "en": {"body": format!("According to the leaflet the value is {}.", with_unit(item.conflict, item.unit_en)), "claim_patterns": pattern(item.conflict)}
                    }
                },
                "material_ids": [material],
                "probes": {
                    "de": [format!("Der Wert ist {}.", item.truth), format!("Der Wert ist {}.", item.conflict)],
                    "en": [format!("The value is {}.", item.truth), format!("The value is {}.", item.conflict)]
                }
            })
        })
        .collect();
    let materials: Vec<Value> = (1..=4)
        .map(|n| {
            json!({
                "id": format!("leaflet-{n}"),
                "title": {"de": format!("Brandschutz-Merkblatt {n}"), "en": format!("Fire safety leaflet {n}")},
                "body": {
                    "de": "Allgemeine Hinweise zum vorbeugenden Brandschutz am Arbeitsplatz.",
                    "en": "General guidance on preventive fire safety at the workplace."
                },
                "source": format!("https://example.org/fire-safety/leaflet-{n}")
            })
        })
        .collect();
    json!({
        "id": "fire-safety",
        "base_iri": "https://example.org/sqare/fire-safety",
        "languages": ["de", "en"],
        "materials": materials,
        "questions": questions
    })
}

/// Whether the model at `model_index` answers question `q` correctly in the
/// cell described by `(a, b, c, d)`.
fn correct(q: usize, model_index: usize, (a, b, c): (usize, usize, usize)) -> bool {
    if q < a {
        true
    } else if q < a + b {
        model_index == 0
    } else if q < a + b + c {
        model_index == 1
    } else {
        false
    }
}

fn answer(item: &Item, language: &str, condition: ConditionKind, is_correct: bool) -> String {
    let (unit, correct_prefix, wrong_prefix) = match language {
        "de" => (item.unit_de, "Der Wert beträgt", "Der Wert beträgt"),
        _ => (item.unit_en, "The value is", "The value is"),
    };
    if is_correct {
        return format!("{correct_prefix} {}.", with_unit(item.truth, unit));
    }
    match condition {
        ConditionKind::Conflicting => format!("{wrong_prefix} {}.", with_unit(item.conflict, unit)),
        ConditionKind::Incomplete => match language {
            "de" => "Der Kontext nennt keinen Wert.".into(),
            _ => "The context does not say.".into(),
        },
        _ => format!("{wrong_prefix} {}.", with_unit(item.other, unit)),
    }
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    std::fs::create_dir_all(&dir)?;
    let study_text = serde_json::to_string_pretty(&study_json())? + "\n";
    let study = parse_study(&study_text)?;
    std::fs::write(dir.join("fire_safety_study.json"), &study_text)?;

    let cassette_path = dir.join("fire_safety_cassette.jsonl");
    if cassette_path.exists() {
        std::fs::remove_file(&cassette_path)?;
    }
    let cassette = Cassette::open(&cassette_path)?;
    let recorded_at = Utc.with_ymd_and_hms(2025, 3, 1, 12, 0, 0).unwrap();
    let mut count = 0u64;
    for (q, (item, question)) in ITEMS.iter().zip(&study.questions).enumerate() {
        for (model_index, model) in MODELS.iter().enumerate() {
            for &(language, condition, a, b, c, _) in &TABLES {
                let prompt = build_prompt(&study, &question.id, condition, language)?;
                let text = answer(item, language, condition, correct(q, model_index, (a, b, c)));
                let latency = 350 + (count * 37) % 900;
                cassette.append(CassetteRecord::new(model, &prompt, &text, latency, recorded_at))?;
                count += 1;
            }
        }
    }
    println!("wrote {} questions and {count} cassette records to {}", study.questions.len(), dir.display());
    Ok(())
}
