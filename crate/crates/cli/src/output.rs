//! Versioned, deterministic artifacts.
//!
//! Every command produces a list of named files held in memory, so tests can
//! compare runs byte for byte before anything touches the disk. JSON files
//! open with `format_version`, `seed` and `config_hash`; CSV files carry the
//! same three values in a leading `#` comment line above the header row.

use std::path::Path;

use anyhow::Context;
use entangle_core::analysis::io::write_records;
use entangle_core::sim::CountRecord;
use serde::Serialize;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Provenance {
    pub format_version: u32,
    pub seed: u64,
    pub config_hash: String,
}

impl Provenance {
    pub fn new(seed: u64, config_hash: String) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            seed,
            config_hash,
        }
    }

    fn csv_preamble(&self) -> String {
        format!(
            "# format_version={} seed={} config_hash={}\n",
            self.format_version, self.seed, self.config_hash
        )
    }
}

#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    #[serde(flatten)]
    provenance: &'a Provenance,
    #[serde(flatten)]
    body: &'a T,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Artifact {
    pub name: String,
    pub bytes: Vec<u8>,
}

/// Output files of one command.
#[derive(Debug, Default, Clone, PartialEq, Eq)]
pub struct Artifacts {
    pub files: Vec<Artifact>,
}

impl Artifacts {
    pub fn json<T: Serialize>(
        &mut self,
        name: &str,
        prov: &Provenance,
        body: &T,
    ) -> anyhow::Result<()> {
        let mut text = serde_json::to_string_pretty(&Envelope {
            provenance: prov,
            body,
        })?;
        text.push('\n');
        self.push(name, text.into_bytes());
        Ok(())
    }

    /// Rows serialized with a header taken from the field names.
    pub fn csv<T: Serialize>(
        &mut self,
        name: &str,
        prov: &Provenance,
        rows: &[T],
    ) -> anyhow::Result<()> {
        let mut bytes = prov.csv_preamble().into_bytes();
        {
            let mut w = csv::Writer::from_writer(&mut bytes);
            for r in rows {
                w.serialize(r)?;
            }
            w.flush()?;
        }
        self.push(name, bytes);
        Ok(())
    }

    /// Count records in the exchange format read back by `--counts`.
    pub fn records(
        &mut self,
        name: &str,
        prov: &Provenance,
        records: &[CountRecord],
    ) -> anyhow::Result<()> {
        let mut bytes = prov.csv_preamble().into_bytes();
        write_records(&mut bytes, records)?;
        self.push(name, bytes);
        Ok(())
    }

    /// Headerless numeric matrix (one row per line).
    pub fn matrix(&mut self, name: &str, prov: &Provenance, rows: &[Vec<f64>]) {
        let mut text = prov.csv_preamble();
        for row in rows {
            let cells: Vec<String> = row.iter().map(|v| format!("{v:.10e}")).collect();
            text.push_str(&cells.join(","));
            text.push('\n');
        }
        self.push(name, text.into_bytes());
    }

    pub fn text(&mut self, name: &str, text: String) {
        self.push(name, text.into_bytes());
    }

    fn push(&mut self, name: &str, bytes: Vec<u8>) {
        self.files.push(Artifact {
            name: name.to_string(),
            bytes,
        });
    }

    pub fn get(&self, name: &str) -> Option<&[u8]> {
        self.files
            .iter()
            .find(|a| a.name == name)
            .map(|a| a.bytes.as_slice())
    }

    pub fn write_to(&self, dir: &Path) -> anyhow::Result<()> {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        for a in &self.files {
            let path = dir.join(&a.name);
            std::fs::write(&path, &a.bytes)
                .with_context(|| format!("writing {}", path.display()))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Serialize)]
    struct Row {
        power_w: f64,
        car: f64,
    }

    #[test]
    fn json_starts_with_provenance() {
        let mut a = Artifacts::default();
        let prov = Provenance::new(7, "abc".into());
        a.json(
            "x.json",
            &prov,
            &Row {
                power_w: 1e-5,
                car: 3.0,
            },
        )
        .unwrap();
        let v: serde_json::Value = serde_json::from_slice(a.get("x.json").unwrap()).unwrap();
        assert_eq!(v["format_version"], 1);
        assert_eq!(v["seed"], 7);
        assert_eq!(v["config_hash"], "abc");
        assert_eq!(v["car"], 3.0);
        let text = std::str::from_utf8(a.get("x.json").unwrap()).unwrap();
        assert!(text
            .trim_start_matches("{\n")
            .trim_start()
            .starts_with("\"format_version\""));
    }

    #[test]
    fn csv_has_preamble_and_single_header() {
        let mut a = Artifacts::default();
        let prov = Provenance::new(1, "h".into());
        a.csv(
            "t.csv",
            &prov,
            &[
                Row {
                    power_w: 1.0,
                    car: 2.0,
                },
                Row {
                    power_w: 3.0,
                    car: 4.0,
                },
            ],
        )
        .unwrap();
        let text = String::from_utf8(a.get("t.csv").unwrap().to_vec()).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "# format_version=1 seed=1 config_hash=h");
        assert_eq!(lines[1], "power_w,car");
        assert_eq!(lines.len(), 4);
    }
}
