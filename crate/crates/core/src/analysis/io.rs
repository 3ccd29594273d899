//! CSV exchange format for count records.
//!
//! One header row, then one row per setting with the columns `setting,
//! singles_s, singles_i, coincidences, accidentals, pulses, duration`. The
//! setting column holds a descriptor such as `pol:0.3927:0` or
//! `tb:0:1.5708:0:cc`. Extra columns and `#` comment lines are ignored on
//! input.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::CountRecord;

#[derive(Debug, Serialize, Deserialize)]
struct Row {
    setting: String,
    singles_s: u64,
    singles_i: u64,
    coincidences: u64,
    accidentals: u64,
    pulses: u64,
    duration: f64,
}

pub fn write_records<W: Write>(out: W, records: &[CountRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in records {
        w.serialize(Row {
            setting: r.setting.to_string(),
            singles_s: r.singles_s,
            singles_i: r.singles_i,
            coincidences: r.coincidences,
            accidentals: r.accidentals,
            pulses: r.pulses,
            duration: r.duration,
        })?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_records<R: Read>(input: R) -> Result<Vec<CountRecord>> {
    let mut rd = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(input);
    let mut out = Vec::new();
    for (line, row) in rd.deserialize::<Row>().enumerate() {
        let row = row?;
        let setting = row
            .setting
            .parse()
            .map_err(|e| Error::Parse(format!("row {}: {e}", line + 1)))?;
        if !(row.duration >= 0.0 && row.duration.is_finite()) {
            return Err(Error::Parse(format!(
                "row {}: duration must be finite and >= 0",
                line + 1
            )));
        }
        let mut rec = CountRecord::empty(setting);
        rec.singles_s = row.singles_s;
        rec.singles_i = row.singles_i;
        rec.coincidences = row.coincidences;
        rec.accidentals = row.accidentals;
        rec.pulses = row.pulses;
        rec.duration = row.duration;
        out.push(rec);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{AnalyzerSetting, Slot};

    #[test]
    fn roundtrip() {
        let mut a = CountRecord::empty(AnalyzerSetting::Polarization {
            theta_s: 0.25,
            theta_i: -1.0,
            chi_s: 0.0,
            chi_i: 1.5,
        });
        a.coincidences = 17;
        a.accidentals = 2;
        a.pulses = 1000;
        a.duration = 3.5e-5;
        let mut b = CountRecord::empty(AnalyzerSetting::TimeBin {
            phi_p: 0.0,
            phi_s: 1.0,
            phi_i: 2.0,
            slot_s: Slot::Early,
            slot_i: Slot::Central,
        });
        b.singles_s = 5;
        let mut buf = Vec::new();
        write_records(&mut buf, &[a.clone(), b.clone()]).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text
            .starts_with("setting,singles_s,singles_i,coincidences,accidentals,pulses,duration\n"));
        assert_eq!(read_records(&buf[..]).unwrap(), vec![a, b]);
    }

    #[test]
    fn rejects_malformed_rows() {
        let bad_setting = "setting,singles_s,singles_i,coincidences,accidentals,pulses,duration\nfoo,1,1,1,1,1,1\n";
        assert!(matches!(
            read_records(bad_setting.as_bytes()),
            Err(Error::Parse(_))
        ));
        let negative = "setting,singles_s,singles_i,coincidences,accidentals,pulses,duration\nopen,1,1,-1,1,1,1\n";
        assert!(read_records(negative.as_bytes()).is_err());
        let missing = "setting,singles_s\nopen,1\n";
        assert!(read_records(missing.as_bytes()).is_err());
    }

    #[test]
    fn skips_comment_lines() {
        let text = "# seed=1\nsetting,singles_s,singles_i,coincidences,accidentals,pulses,duration,extra\nopen,1,2,3,0,10,1e-6,x\n";
        let recs = read_records(text.as_bytes()).unwrap();
        assert_eq!(recs.len(), 1);
        assert_eq!(recs[0].coincidences, 3);
    }
}
