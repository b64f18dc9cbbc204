//! File formats: comparison input (JSON-lines or CSV), selected-pair output
//! and float formatting for reproducible text output.

use std::io::{BufRead, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::ser::{CompactFormatter, Formatter, PrettyFormatter, Serializer};

use crate::comparison::{ComparisonRecord, Pair};
use crate::error::{RankError, Result};

/// Serializes hard outcomes as the integers 0/1.
pub(crate) mod outcome_serde {
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(y: &Option<bool>, s: S) -> Result<S::Ok, S::Error> {
        match y {
            Some(v) => s.serialize_u8(u8::from(*v)),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<bool>, D::Error> {
        match Option::<u8>::deserialize(d)? {
            None => Ok(None),
            Some(0) => Ok(Some(false)),
            Some(1) => Ok(Some(true)),
            Some(v) => Err(de::Error::custom(format!("y must be 0 or 1, got {v}"))),
        }
    }
}

/// Reads comparison records from JSON-lines text. Blank lines are skipped.
pub fn parse_jsonl<R: BufRead>(reader: R) -> Result<Vec<ComparisonRecord>> {
    let mut records = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| RankError::Parse {
            line: idx + 1,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let record: ComparisonRecord =
            serde_json::from_str(&line).map_err(|e| RankError::Parse {
                line: idx + 1,
                message: e.to_string(),
            })?;
        records.push(record);
    }
    Ok(records)
}

/// Reads comparison records from CSV with header `i,j,p,y`; `p` and `y` may
/// be left empty.
pub fn parse_csv<R: Read>(reader: R) -> Result<Vec<ComparisonRecord>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    rdr.deserialize()
        .enumerate()
        .map(|(idx, row)| {
            row.map_err(|e| RankError::Parse {
                line: idx + 2,
                message: e.to_string(),
            })
        })
        .collect()
}

/// Loads records from a `.csv` file or, for any other extension, JSON-lines.
pub fn load_records(path: &Path) -> Result<Vec<ComparisonRecord>> {
    let file = std::fs::File::open(path).map_err(|e| RankError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    let is_csv = path
        .extension()
        .is_some_and(|ext| ext.eq_ignore_ascii_case("csv"));
    if is_csv {
        parse_csv(file)
    } else {
        parse_jsonl(std::io::BufReader::new(file))
    }
}

pub fn write_jsonl<W: Write>(mut out: W, records: &[ComparisonRecord]) -> std::io::Result<()> {
    for r in records {
        write_json(&mut out, r, false)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// JSON formatter that writes every float with 17 significant digits.
struct Digits17<F> {
    inner: F,
}

macro_rules! delegate {
    ($($name:ident $(($arg:ident: $ty:ty))?),* $(,)?) => {
        $(
            fn $name<W: ?Sized + Write>(&mut self, w: &mut W $(, $arg: $ty)?) -> std::io::Result<()> {
                self.inner.$name(w $(, $arg)?)
            }
        )*
    };
}

impl<F: Formatter> Formatter for Digits17<F> {
    fn write_f64<W: ?Sized + Write>(&mut self, w: &mut W, value: f64) -> std::io::Result<()> {
        w.write_all(fmt_f64(value).as_bytes())
    }

    fn write_f32<W: ?Sized + Write>(&mut self, w: &mut W, value: f32) -> std::io::Result<()> {
        self.write_f64(w, f64::from(value))
    }

    delegate!(
        begin_array,
        end_array,
        begin_array_value(first: bool),
        end_array_value,
        begin_object,
        end_object,
        begin_object_key(first: bool),
        end_object_key,
        begin_object_value,
        end_object_value,
    );
}

/// Serializes `value` as JSON with 17-significant-digit floats. Non-finite
/// floats become `null`.
pub fn write_json<W: Write, T: Serialize + ?Sized>(out: W, value: &T, pretty: bool) -> std::io::Result<()> {
    if pretty {
        let fmt = Digits17 {
            inner: PrettyFormatter::new(),
        };
        value.serialize(&mut Serializer::with_formatter(out, fmt))?;
    } else {
        let fmt = Digits17 {
            inner: CompactFormatter,
        };
        value.serialize(&mut Serializer::with_formatter(out, fmt))?;
    }
    Ok(())
}

pub fn to_json_string<T: Serialize + ?Sized>(value: &T, pretty: bool) -> String {
    let mut buf = Vec::new();
    write_json(&mut buf, value, pretty).expect("writing to a Vec cannot fail");
    String::from_utf8(buf).expect("JSON output is UTF-8")
}

/// One line of the selected-pair export.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelectedPair {
    pub i: usize,
    pub j: usize,
    pub step: usize,
}

pub fn write_pairs<W: Write>(mut out: W, pairs: &[Pair]) -> std::io::Result<()> {
    for (step, &(i, j)) in pairs.iter().enumerate() {
        serde_json::to_writer(&mut out, &SelectedPair { i, j, step })?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn parse_pairs<R: BufRead>(reader: R) -> Result<Vec<SelectedPair>> {
    let mut pairs = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| RankError::Parse {
            line: idx + 1,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        pairs.push(serde_json::from_str(&line).map_err(|e| RankError::Parse {
            line: idx + 1,
            message: e.to_string(),
        })?);
    }
    Ok(pairs)
}

/// Formats a float with 17 significant digits, enough to round-trip any f64.
pub fn fmt_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        x.to_string()
    }
}
