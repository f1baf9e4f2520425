//! Dataset files.
//!
//! Binary layout, all little-endian:
//!
//! ```text
//! "XDCD" | version u32 | N u64 | d_visual u32 | d_audio u32 | num_classes u32
//! N × ( id u64 | class u32 | visual f64[d_visual] | audio f64[d_audio] )
//! ```
//!
//! The CSV form starts with a `#xdcd-csv` line carrying the header fields,
//! then a column header, then one sample per line. Floats are written in
//! their shortest round-tripping form, so both formats are lossless.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{Dataset, PairedSample};
use crate::error::{Error, Result};

pub const BINARY_MAGIC: &[u8; 4] = b"XDCD";
pub const BINARY_VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 8 + 4 + 4 + 4;

impl Dataset {
    pub fn encode_binary(&self) -> Vec<u8> {
        let record = 12 + 8 * (self.d_visual + self.d_audio);
        let mut out = Vec::with_capacity(HEADER_LEN + record * self.len());
        out.extend_from_slice(BINARY_MAGIC);
        out.extend_from_slice(&BINARY_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.len() as u64).to_le_bytes());
        out.extend_from_slice(&(self.d_visual as u32).to_le_bytes());
        out.extend_from_slice(&(self.d_audio as u32).to_le_bytes());
        out.extend_from_slice(&(self.num_classes as u32).to_le_bytes());
        for s in &self.samples {
            out.extend_from_slice(&s.id.to_le_bytes());
            out.extend_from_slice(&(s.class as u32).to_le_bytes());
            for v in s.visual.iter().chain(&s.audio) {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn decode_binary(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        let magic = r.take(4, "magic")?;
        if magic != BINARY_MAGIC {
            return Err(Error::parse("byte 0", "bad magic, expected \"XDCD\""));
        }
        let version = r.u32("version")?;
        if version != BINARY_VERSION {
            return Err(Error::parse("byte 4", format!("unsupported version {version}")));
        }
        let n = r.u64("sample count")?;
        let d_visual = r.u32("d_visual")? as usize;
        let d_audio = r.u32("d_audio")? as usize;
        let num_classes = r.u32("num_classes")? as usize;
        let record = (d_visual + d_audio)
            .checked_mul(8)
            .and_then(|b| b.checked_add(12))
            .ok_or_else(|| Error::parse("byte 16", "record size overflows"))?;
        let body = usize::try_from(n)
            .ok()
            .and_then(|n| n.checked_mul(record))
            .ok_or_else(|| Error::parse("byte 8", "sample count overflows"))?;
        let remaining = bytes.len() - r.pos;
        if remaining < body {
            let complete = remaining / record;
            return Err(Error::parse(
                format!("record {complete} (byte {})", r.pos + complete * record),
                format!("file truncated: header declares {n} records, found {complete} complete"),
            ));
        }
        if remaining > body {
            return Err(Error::parse(
                format!("byte {}", r.pos + body),
                "trailing bytes after the last record",
            ));
        }
        let mut samples = Vec::with_capacity(n as usize);
        for i in 0..n as usize {
            let start = r.pos;
            let id = r.u64("id")?;
            let class = r.u32("class")? as usize;
            let visual = r.f64s(d_visual)?;
            let audio = r.f64s(d_audio)?;
            if class >= num_classes {
                return Err(Error::parse(
                    format!("record {i} (byte {start})"),
                    format!("class {class} >= num_classes {num_classes}"),
                ));
            }
            if !visual.iter().chain(&audio).all(|v| v.is_finite()) {
                return Err(Error::parse(format!("record {i} (byte {start})"), "non-finite value"));
            }
            samples.push(PairedSample {
                id,
                visual,
                audio,
                class,
            });
        }
        Dataset::new(samples, num_classes, d_visual, d_audio)
    }

    pub fn encode_csv(&self) -> String {
        let mut out = format!(
            "#xdcd-csv version={BINARY_VERSION} num_classes={} d_visual={} d_audio={}\nid,class",
            self.num_classes, self.d_visual, self.d_audio
        );
        for j in 0..self.d_visual {
            let _ = write!(out, ",v{j}");
        }
        for j in 0..self.d_audio {
            let _ = write!(out, ",a{j}");
        }
        out.push('\n');
        for s in &self.samples {
            let _ = write!(out, "{},{}", s.id, s.class);
            for v in s.visual.iter().chain(&s.audio) {
                let _ = write!(out, ",{v:?}");
            }
            out.push('\n');
        }
        out
    }

    pub fn decode_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let (_, meta) = lines
            .next()
            .ok_or_else(|| Error::parse("line 1", "empty file"))?;
        let meta = meta
            .strip_prefix("#xdcd-csv")
            .ok_or_else(|| Error::parse("line 1", "missing #xdcd-csv header"))?;
        let (mut num_classes, mut d_visual, mut d_audio) = (None, None, None);
        for field in meta.split_whitespace() {
            let (key, value) = field
                .split_once('=')
                .ok_or_else(|| Error::parse("line 1", format!("malformed header field `{field}`")))?;
            let parsed: usize = value
                .parse()
                .map_err(|_| Error::parse("line 1", format!("`{key}` is not an integer")))?;
            match key {
                "version" if parsed as u32 == BINARY_VERSION => {}
                "version" => return Err(Error::parse("line 1", format!("unsupported version {parsed}"))),
                "num_classes" => num_classes = Some(parsed),
                "d_visual" => d_visual = Some(parsed),
                "d_audio" => d_audio = Some(parsed),
                other => return Err(Error::parse("line 1", format!("unknown header field `{other}`"))),
            }
        }
        let missing = |k: &str| Error::parse("line 1", format!("header lacks `{k}`"));
        let num_classes = num_classes.ok_or_else(|| missing("num_classes"))?;
        let d_visual = d_visual.ok_or_else(|| missing("d_visual"))?;
        let d_audio = d_audio.ok_or_else(|| missing("d_audio"))?;
        let width = d_visual
            .checked_add(d_audio)
            .and_then(|w| w.checked_add(2))
            .ok_or_else(|| Error::parse("line 1", "declared widths overflow"))?;

        let (_, columns) = lines
            .next()
            .ok_or_else(|| Error::parse("line 2", "missing column header"))?;
        if columns.split(',').count() != width {
            return Err(Error::parse(
                "line 2",
                format!("expected {width} columns in the header"),
            ));
        }

        let mut samples = Vec::new();
        for (idx, line) in lines {
            let loc = || format!("line {}", idx + 1);
            if line.is_empty() {
                continue;
            }
            let cells: Vec<&str> = line.split(',').collect();
            if cells.len() != width {
                return Err(Error::parse(
                    loc(),
                    format!("row has {} fields, expected {width}", cells.len()),
                ));
            }
            let id: u64 = cells[0]
                .trim()
                .parse()
                .map_err(|_| Error::parse(loc(), "bad id"))?;
            let class: usize = cells[1]
                .trim()
                .parse()
                .map_err(|_| Error::parse(loc(), "bad class"))?;
            if class >= num_classes {
                return Err(Error::parse(
                    loc(),
                    format!("class {class} >= num_classes {num_classes}"),
                ));
            }
            let mut values = Vec::with_capacity(width - 2);
            for (j, cell) in cells[2..].iter().enumerate() {
                let v: f64 = cell
                    .trim()
                    .parse()
                    .map_err(|_| Error::parse(loc(), format!("column {} is not a number", j + 2)))?;
                if !v.is_finite() {
                    return Err(Error::parse(loc(), format!("column {} is not finite", j + 2)));
                }
                values.push(v);
            }
            let audio = values.split_off(d_visual);
            samples.push(PairedSample {
                id,
                visual: values,
                audio,
                class,
            });
        }
        Dataset::new(samples, num_classes, d_visual, d_audio)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::parse(format!("byte {}", self.pos), format!("truncated {what}")))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let raw = self.take(n * 8, "values")?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

/// Writes `.csv` paths as CSV and everything else in the binary format.
pub fn save_dataset(data: &Dataset, path: &Path) -> Result<()> {
    if is_csv(path) {
        fs::write(path, data.encode_csv())?;
    } else {
        fs::write(path, data.encode_binary())?;
    }
    Ok(())
}

/// Reads either format, sniffing the magic bytes.
pub fn load_dataset(path: &Path) -> Result<Dataset> {
    let bytes = fs::read(path)?;
    if bytes.starts_with(BINARY_MAGIC) {
        return Dataset::decode_binary(&bytes);
    }
    let text = std::str::from_utf8(&bytes)
        .map_err(|e| Error::parse(format!("byte {}", e.valid_up_to()), "not UTF-8 text"))?;
    Dataset::decode_csv(text)
}

fn is_csv(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("csv"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthdata::{generate, GeneratorSpec};

    fn small() -> Dataset {
        generate(&GeneratorSpec {
            num_classes: 3,
            samples_per_class: 4,
            d_visual: 3,
            d_audio: 2,
            ..Default::default()
        })
        .unwrap()
    }

    #[test]
    fn binary_round_trip_is_bit_exact() {
        let d = small();
        let back = Dataset::decode_binary(&d.encode_binary()).unwrap();
        assert_eq!(back, d);
    }

    #[test]
    fn csv_round_trip_is_bit_exact() {
        let mut d = small();
        d.samples[0].visual[0] = 1e-300;
        d.samples[1].audio[1] = -0.1 - 0.2;
        let back = Dataset::decode_csv(&d.encode_csv()).unwrap();
        for (a, b) in back.samples.iter().zip(&d.samples) {
            for (x, y) in a.visual.iter().chain(&a.audio).zip(b.visual.iter().chain(&b.audio)) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
        assert_eq!(back, d);
    }

    #[test]
    fn empty_dataset_has_header_only() {
        let d = Dataset::new(vec![], 2, 3, 4).unwrap();
        let bytes = d.encode_binary();
        assert_eq!(bytes.len(), HEADER_LEN);
        assert_eq!(Dataset::decode_binary(&bytes).unwrap(), d);
        assert_eq!(Dataset::decode_csv(&d.encode_csv()).unwrap(), d);
    }

    #[test]
    fn truncated_binary_names_the_record() {
        let d = small();
        let mut bytes = d.encode_binary();
        let record = 12 + 8 * 5;
        // keep two complete records and half of the third
        bytes.truncate(HEADER_LEN + 2 * record + record / 2);
        match Dataset::decode_binary(&bytes) {
            Err(Error::Parse { location, .. }) => assert!(location.starts_with("record 2"), "{location}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn truncated_csv_row_names_the_line() {
        let d = small();
        let text = d.encode_csv();
        let mut lines: Vec<&str> = text.lines().collect();
        let short = lines[4].rsplit_once(',').unwrap().0.to_string();
        lines[4] = &short;
        match Dataset::decode_csv(&lines.join("\n")) {
            Err(Error::Parse { location, .. }) => assert_eq!(location, "line 5"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn huge_declared_count_does_not_allocate() {
        let mut bytes = Dataset::new(vec![], 2, 1, 1).unwrap().encode_binary();
        bytes[8..16].copy_from_slice(&u64::MAX.to_le_bytes());
        assert!(matches!(Dataset::decode_binary(&bytes), Err(Error::Parse { .. })));
    }

    #[test]
    fn files_round_trip_through_disk() {
        let dir = tempfile::tempdir().unwrap();
        let d = small();
        for name in ["data.xdcd", "data.csv"] {
            let p = dir.path().join(name);
            save_dataset(&d, &p).unwrap();
            assert_eq!(load_dataset(&p).unwrap(), d);
        }
    }
}
