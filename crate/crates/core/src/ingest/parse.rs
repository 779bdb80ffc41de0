use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::path::Path;

use csv::StringRecord;

use super::{LabEvent, PatientId, PatientRecord, Vocabulary};
use crate::{Error, Result};

pub const EVENTS_HEADER: [&str; 4] = ["patient_id", "hours_before_end", "lab_name", "value"];
pub const DIAGNOSES_HEADER: [&str; 2] = ["patient_id", "diagnosis_name"];
pub const OUTCOMES_HEADER: [&str; 3] = ["patient_id", "died", "end_hour"];

struct Table {
    path: std::path::PathBuf,
    reader: csv::Reader<File>,
}

impl Table {
    fn open(path: &Path, header: &[&str]) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
        let found = reader.headers().map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            message: e.to_string(),
        })?;
        if found.iter().ne(header.iter().copied()) {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: 1,
                message: format!("expected header `{}`", header.join(",")),
            });
        }
        Ok(Table {
            path: path.to_path_buf(),
            reader,
        })
    }

    fn for_each(mut self, mut f: impl FnMut(&StringRecord) -> std::result::Result<(), String>) -> Result<()> {
        let mut row = StringRecord::new();
        loop {
            let line = self.reader.position().line();
            match self.reader.read_record(&mut row) {
                Ok(false) => return Ok(()),
                Ok(true) => {
                    let line = row.position().map_or(line, |p| p.line());
                    f(&row).map_err(|message| Error::Parse {
                        path: self.path.clone(),
                        line,
                        message,
                    })?;
                }
                Err(e) => {
                    return Err(Error::Parse {
                        path: self.path.clone(),
                        line: e.position().map_or(line, |p| p.line()),
                        message: e.to_string(),
                    })
                }
            }
        }
    }
}

fn field<'a>(row: &'a StringRecord, i: usize, name: &str) -> std::result::Result<&'a str, String> {
    match row.get(i) {
        Some(s) if !s.is_empty() => Ok(s),
        _ => Err(format!("missing `{name}`")),
    }
}

fn number<T: std::str::FromStr>(s: &str, name: &str) -> std::result::Result<T, String> {
    s.parse().map_err(|_| format!("invalid `{name}`: `{s}`"))
}

/// Reads the three CSV tables into one record per outcomes row, in outcomes
/// file order. Lab and diagnosis names missing from `vocab` are appended.
pub fn parse_records(
    events_file: &Path,
    diagnoses_file: &Path,
    outcomes_file: &Path,
    vocab: &mut Vocabulary,
) -> Result<Vec<PatientRecord>> {
    let mut records: Vec<PatientRecord> = Vec::new();
    let mut index: BTreeMap<PatientId, usize> = BTreeMap::new();

    Table::open(outcomes_file, &OUTCOMES_HEADER)?.for_each(|row| {
        let id = PatientId(field(row, 0, "patient_id")?.to_string());
        let died = match field(row, 1, "died")? {
            "0" => false,
            "1" => true,
            other => return Err(format!("`died` must be 0 or 1, got `{other}`")),
        };
        let end_hour: u32 = number(field(row, 2, "end_hour")?, "end_hour")?;
        if index.contains_key(&id) {
            return Err(format!("duplicate patient `{id}`"));
        }
        index.insert(id.clone(), records.len());
        records.push(PatientRecord {
            patient_id: id,
            events: Vec::new(),
            diagnoses: BTreeSet::new(),
            died,
            end_hour,
        });
        Ok(())
    })?;

    let mut unknown: Option<PatientId> = None;
    Table::open(events_file, &EVENTS_HEADER)?.for_each(|row| {
        let id = PatientId(field(row, 0, "patient_id")?.to_string());
        let hours: f64 = number(field(row, 1, "hours_before_end")?, "hours_before_end")?;
        if !(hours.is_finite() && hours >= 0.0) {
            return Err(format!("`hours_before_end` must be finite and non-negative, got {hours}"));
        }
        let lab_name = field(row, 2, "lab_name")?;
        let value: f64 = number(field(row, 3, "value")?, "value")?;
        if !value.is_finite() {
            return Err(format!("non-finite `value` {value}"));
        }
        let Some(&slot) = index.get(&id) else {
            unknown.get_or_insert(id);
            return Ok(());
        };
        let lab_id = vocab.lab_id_or_insert(lab_name);
        records[slot].events.push(LabEvent {
            patient_id: id,
            hours_before_end: hours,
            lab_id,
            value,
        });
        Ok(())
    })?;

    Table::open(diagnoses_file, &DIAGNOSES_HEADER)?.for_each(|row| {
        let id = PatientId(field(row, 0, "patient_id")?.to_string());
        let name = field(row, 1, "diagnosis_name")?;
        let Some(&slot) = index.get(&id) else {
            unknown.get_or_insert(id);
            return Ok(());
        };
        let d = vocab.diagnosis_id_or_insert(name);
        records[slot].diagnoses.insert(d);
        Ok(())
    })?;

    match unknown {
        Some(id) => Err(Error::UnknownPatient(id.0)),
        None => Ok(records),
    }
}

/// Writes records as the three CSV tables read by [`parse_records`].
pub fn write_records(
    records: &[PatientRecord],
    vocab: &Vocabulary,
    events_file: &Path,
    diagnoses_file: &Path,
    outcomes_file: &Path,
) -> Result<()> {
    let csv_err = |path: &Path| {
        let path = path.display().to_string();
        move |e: csv::Error| Error::io(path.clone(), e.into())
    };
    let open = |path: &Path| -> Result<csv::Writer<File>> {
        let f = File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        Ok(csv::Writer::from_writer(f))
    };

    let mut w = open(events_file)?;
    w.write_record(EVENTS_HEADER).map_err(csv_err(events_file))?;
    for r in records {
        for ev in &r.events {
            w.write_record([
                r.patient_id.0.as_str(),
                &ev.hours_before_end.to_string(),
                &vocab.labs()[ev.lab_id],
                &ev.value.to_string(),
            ])
            .map_err(csv_err(events_file))?;
        }
    }
    w.flush().map_err(|e| Error::io(events_file.display().to_string(), e))?;

    let mut w = open(diagnoses_file)?;
    w.write_record(DIAGNOSES_HEADER).map_err(csv_err(diagnoses_file))?;
    for r in records {
        for &d in &r.diagnoses {
            w.write_record([r.patient_id.0.as_str(), &vocab.diagnoses()[d]])
                .map_err(csv_err(diagnoses_file))?;
        }
    }
    w.flush().map_err(|e| Error::io(diagnoses_file.display().to_string(), e))?;

    let mut w = open(outcomes_file)?;
    w.write_record(OUTCOMES_HEADER).map_err(csv_err(outcomes_file))?;
    for r in records {
        w.write_record([
            r.patient_id.0.as_str(),
            if r.died { "1" } else { "0" },
            &r.end_hour.to_string(),
        ])
        .map_err(csv_err(outcomes_file))?;
    }
    w.flush().map_err(|e| Error::io(outcomes_file.display().to_string(), e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    struct Files {
        _dir: tempfile::TempDir,
        events: std::path::PathBuf,
        diagnoses: std::path::PathBuf,
        outcomes: std::path::PathBuf,
    }

    fn files(events: &str, diagnoses: &str, outcomes: &str) -> Files {
        let dir = tempfile::tempdir().unwrap();
        let write = |name: &str, body: &str| {
            let p = dir.path().join(name);
            std::fs::File::create(&p).unwrap().write_all(body.as_bytes()).unwrap();
            p
        };
        Files {
            events: write("events.csv", events),
            diagnoses: write("diagnoses.csv", diagnoses),
            outcomes: write("outcomes.csv", outcomes),
            _dir: dir,
        }
    }

    fn parse(f: &Files) -> Result<(Vec<PatientRecord>, Vocabulary)> {
        let mut vocab = Vocabulary::default();
        let r = parse_records(&f.events, &f.diagnoses, &f.outcomes, &mut vocab)?;
        Ok((r, vocab))
    }

    #[test]
    fn patient_without_events() {
        let f = files(
            "patient_id,hours_before_end,lab_name,value\n",
            "patient_id,diagnosis_name\n",
            "patient_id,died,end_hour\np1,1,50\n",
        );
        let (records, _) = parse(&f).unwrap();
        assert_eq!(records.len(), 1);
        assert!(records[0].died);
        assert_eq!(records[0].end_hour, 50);
        assert!(records[0].events.is_empty());
    }

    #[test]
    fn events_and_diagnoses_map_to_records() {
        let f = files(
            "patient_id,hours_before_end,lab_name,value\np1,2.0,glucose,5.5\np1,3.0,sodium,140\np2,1.5,glucose,7\n",
            "patient_id,diagnosis_name\np1,sepsis\np2,sepsis\np2,aki\n",
            "patient_id,died,end_hour\np1,0,20\np2,1,30\n",
        );
        let (records, vocab) = parse(&f).unwrap();
        assert_eq!(records[0].events.len(), 2);
        assert_eq!(records[0].events[1].lab_id, 1);
        assert_eq!(records[1].diagnoses.len(), 2);
        assert_eq!(vocab.n_labs(), 2);
        assert_eq!(vocab.diagnosis_id("aki"), Some(1));
    }

    #[test]
    fn malformed_row_names_file_and_line() {
        let f = files(
            "patient_id,hours_before_end,lab_name,value\np1,2.0,glucose,5.5\np1,abc,glucose,1\n",
            "patient_id,diagnosis_name\n",
            "patient_id,died,end_hour\np1,0,20\n",
        );
        let err = parse(&f).unwrap_err();
        match &err {
            Error::Parse { path, line, .. } => {
                assert!(path.ends_with("events.csv"));
                assert_eq!(*line, 3);
            }
            other => panic!("unexpected error {other}"),
        }
        assert!(err.to_string().contains("events.csv:3"));
    }

    #[test]
    fn bad_died_flag_rejected() {
        let f = files(
            "patient_id,hours_before_end,lab_name,value\n",
            "patient_id,diagnosis_name\n",
            "patient_id,died,end_hour\np1,2,20\n",
        );
        assert!(matches!(parse(&f), Err(Error::Parse { line: 2, .. })));
    }

    #[test]
    fn events_for_unknown_patient_rejected() {
        let f = files(
            "patient_id,hours_before_end,lab_name,value\np9,2.0,glucose,5.5\n",
            "patient_id,diagnosis_name\n",
            "patient_id,died,end_hour\np1,0,20\n",
        );
        assert!(matches!(parse(&f), Err(Error::UnknownPatient(id)) if id == "p9"));
    }

    #[test]
    fn wrong_header_rejected() {
        let f = files(
            "patient,hours,lab,value\n",
            "patient_id,diagnosis_name\n",
            "patient_id,died,end_hour\n",
        );
        assert!(matches!(parse(&f), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn full_lab_vocabulary_size() {
        let mut events = String::from("patient_id,hours_before_end,lab_name,value\n");
        for i in 0..409 {
            events.push_str(&format!("p1,{}.5,lab_{i},1.0\n", i % 48));
        }
        let f = files(&events, "patient_id,diagnosis_name\n", "patient_id,died,end_hour\np1,0,60\n");
        let (_, vocab) = parse(&f).unwrap();
        assert_eq!(vocab.n_labs(), 409);
    }
}
