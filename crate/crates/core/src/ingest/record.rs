use std::collections::HashMap;
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::IngestError;

pub const CSV_HEADER: [&str; 12] = [
    "competition_id",
    "stage",
    "discipline",
    "apparatus",
    "performance_id",
    "gymnast_id",
    "gymnast_country",
    "judge_id",
    "judge_country",
    "judge_role",
    "mark_kind",
    "mark",
];

macro_rules! token_enum {
    ($name:ident, $what:literal, { $($variant:ident => $token:literal $(| $alias:literal)*),+ $(,)? }) => {
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(try_from = "String", into = "String")]
        pub enum $name { $($variant),+ }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn token(self) -> &'static str {
                match self { $($name::$variant => $token),+ }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.token())
            }
        }

        impl FromStr for $name {
            type Err = String;
            fn from_str(s: &str) -> Result<Self, String> {
                let t = s.trim();
                $(
                    if t.eq_ignore_ascii_case($token) || t.eq_ignore_ascii_case(stringify!($variant)) $(|| t.eq_ignore_ascii_case($alias))* {
                        return Ok($name::$variant);
                    }
                )+
                Err(format!("unknown {} `{}`", $what, s))
            }
        }

        impl TryFrom<String> for $name {
            type Error = String;
            fn try_from(s: String) -> Result<Self, String> { s.parse() }
        }

        impl From<$name> for String {
            fn from(v: $name) -> String { v.token().to_string() }
        }
    };
}

token_enum!(Stage, "stage", {
    Qualification => "QUAL" | "Q",
    ApparatusFinal => "AF",
    AllAroundFinal => "AAF",
});

token_enum!(Discipline, "discipline", {
    Acrobatics => "ACRO",
    Aerobics => "AERO",
    ArtisticsM => "ARTM" | "MAG",
    ArtisticsF => "ARTF" | "WAG",
    Rhythmics => "RG" | "RHY",
    Trampoline => "TRA",
});

token_enum!(JudgeRole, "judge_role", {
    Panel => "Panel",
    Reference => "Reference",
});

token_enum!(MarkKind, "mark_kind", {
    Execution => "Execution",
    Artistry => "Artistry",
    Difficulty => "Difficulty",
});

impl Stage {
    pub fn is_final(self) -> bool {
        matches!(self, Stage::ApparatusFinal | Stage::AllAroundFinal)
    }
}

/// Three-letter uppercase country code.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct CountryCode([u8; 3]);

impl CountryCode {
    pub fn as_str(&self) -> &str {
        std::str::from_utf8(&self.0).expect("ascii")
    }
}

impl FromStr for CountryCode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        let b = s.trim().as_bytes();
        if b.len() == 3 && b.iter().all(u8::is_ascii_alphabetic) {
            Ok(CountryCode([b[0].to_ascii_uppercase(), b[1].to_ascii_uppercase(), b[2].to_ascii_uppercase()]))
        } else {
            Err(format!("`{s}` is not a 3-letter country code"))
        }
    }
}

impl TryFrom<String> for CountryCode {
    type Error = String;
    fn try_from(s: String) -> Result<Self, String> {
        s.parse()
    }
}

impl From<CountryCode> for String {
    fn from(c: CountryCode) -> String {
        c.as_str().to_string()
    }
}

impl fmt::Display for CountryCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A judge's mark in tenths of a point, `0..=100`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Mark(u8);

impl Mark {
    pub const MAX_TENTHS: u8 = 100;

    pub fn from_tenths(tenths: u8) -> Option<Mark> {
        (tenths <= Self::MAX_TENTHS).then_some(Mark(tenths))
    }

    /// Rounds to the nearest tenth and clamps into `[0, 10]`.
    pub fn from_value_rounded(value: f64) -> Mark {
        let t = (value * 10.0).round();
        Mark(if t.is_nan() { 0 } else { t.clamp(0.0, f64::from(Self::MAX_TENTHS)) as u8 })
    }

    pub fn tenths(self) -> u8 {
        self.0
    }

    pub fn value(self) -> f64 {
        f64::from(self.0) / 10.0
    }
}

impl fmt::Display for Mark {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.0 / 10, self.0 % 10)
    }
}

/// Panel median on the 0.05 grid, stored in twentieths.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ControlScore(u16);

impl ControlScore {
    /// Median of the marks; mean of the two middle marks for even panels.
    pub fn median_of(marks: impl IntoIterator<Item = Mark>) -> Option<ControlScore> {
        let mut tenths: Vec<u16> = marks.into_iter().map(|m| u16::from(m.0)).collect();
        if tenths.is_empty() {
            return None;
        }
        tenths.sort_unstable();
        let n = tenths.len();
        let twice = if n % 2 == 1 { 2 * tenths[n / 2] } else { tenths[n / 2 - 1] + tenths[n / 2] };
        Some(ControlScore(twice))
    }

    pub fn from_twentieths(v: u16) -> ControlScore {
        ControlScore(v)
    }

    pub fn twentieths(self) -> u16 {
        self.0
    }

    pub fn value(self) -> f64 {
        f64::from(self.0) / 20.0
    }
}

impl fmt::Display for ControlScore {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.value())
    }
}

/// One judge's raw mark for one performance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MarkRecord {
    pub competition_id: String,
    pub stage: Stage,
    pub discipline: Discipline,
    pub apparatus: String,
    pub performance_id: String,
    pub gymnast_id: String,
    pub gymnast_country: CountryCode,
    pub judge_id: String,
    pub judge_country: CountryCode,
    pub judge_role: JudgeRole,
    pub mark_kind: MarkKind,
    pub mark: Mark,
}

impl MarkRecord {
    pub fn is_same_nationality(&self) -> bool {
        self.judge_country == self.gymnast_country
    }
}

fn parse_mark(raw: &str, line: u64) -> Result<Mark, IngestError> {
    let trimmed = raw.trim();
    let value: f64 = trimmed.parse().map_err(|_| IngestError::Malformed { line, message: format!("mark `{raw}` is not a number") })?;
    if !value.is_finite() || !(0.0..=10.0).contains(&value) {
        return Err(IngestError::MarkOutOfRange { line, value: raw.to_string() });
    }
    let tenths = value * 10.0;
    if (tenths - tenths.round()).abs() > 1e-6 {
        return Err(IngestError::MarkGranularity { line, value: raw.to_string() });
    }
    Ok(Mark(tenths.round() as u8))
}

fn parse_field<T: FromStr>(raw: &str, field: &'static str, line: u64) -> Result<T, IngestError> {
    raw.parse().map_err(|_| IngestError::UnknownValue { line, field, value: raw.to_string() })
}

/// Parses the mark CSV. Rows keep their input order. An empty stage field is
/// read as a qualification round.
pub fn parse_dataset<R: Read>(input: R) -> Result<Vec<MarkRecord>, IngestError> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(input);
    let headers = reader.headers()?.clone();
    if headers.iter().ne(CSV_HEADER.iter().copied()) {
        return Err(IngestError::Header { expected: CSV_HEADER.join(","), found: headers.iter().collect::<Vec<_>>().join(",") });
    }

    let mut records = Vec::new();
    let mut seen: HashMap<(String, String), u64> = HashMap::new();
    for row in reader.records() {
        let row = row.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            IngestError::Malformed { line, message: e.to_string() }
        })?;
        let line = row.position().map_or(0, |p| p.line());
        if row.len() != CSV_HEADER.len() {
            return Err(IngestError::Malformed { line, message: format!("expected {} fields, found {}", CSV_HEADER.len(), row.len()) });
        }
        let non_empty = |i: usize| -> Result<String, IngestError> {
            let v = &row[i];
            if v.is_empty() {
                Err(IngestError::Malformed { line, message: format!("empty {}", CSV_HEADER[i]) })
            } else {
                Ok(v.to_string())
            }
        };
        let stage = if row[1].is_empty() { Stage::Qualification } else { parse_field(&row[1], "stage", line)? };
        let record = MarkRecord {
            competition_id: non_empty(0)?,
            stage,
            discipline: parse_field(&row[2], "discipline", line)?,
            apparatus: non_empty(3)?,
            performance_id: non_empty(4)?,
            gymnast_id: non_empty(5)?,
            gymnast_country: parse_field(&row[6], "gymnast_country", line)?,
            judge_id: non_empty(7)?,
            judge_country: parse_field(&row[8], "judge_country", line)?,
            judge_role: parse_field(&row[9], "judge_role", line)?,
            mark_kind: parse_field(&row[10], "mark_kind", line)?,
            mark: parse_mark(&row[11], line)?,
        };
        let key = (record.performance_id.clone(), record.judge_id.clone());
        if let Some(&first_line) = seen.get(&key) {
            return Err(IngestError::Duplicate { line, first_line, performance_id: key.0, judge_id: key.1 });
        }
        seen.insert(key, line);
        records.push(record);
    }
    Ok(records)
}

/// Writes records in the same CSV layout [`parse_dataset`] reads.
pub fn write_dataset<W: Write>(records: &[MarkRecord], out: W) -> Result<(), IngestError> {
    let mut w = csv::WriterBuilder::new().from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in records {
        w.write_record([
            r.competition_id.as_str(),
            r.stage.token(),
            r.discipline.token(),
            r.apparatus.as_str(),
            r.performance_id.as_str(),
            r.gymnast_id.as_str(),
            r.gymnast_country.as_str(),
            r.judge_id.as_str(),
            r.judge_country.as_str(),
            r.judge_role.token(),
            r.mark_kind.token(),
            &r.mark.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
