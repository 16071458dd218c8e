use std::collections::{BTreeSet, HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{
    validate_corpus, Corpus, CorpusError, MoveScheme, Session, Severity, Utterance, IC_MAX, IC_MIN,
};

#[derive(Debug, Serialize, Deserialize)]
struct SessionRow {
    session_id: String,
    group_id: String,
    scenario_id: u8,
    ic_score: Option<f64>,
}

fn open(path: &Path) -> Result<File, CorpusError> {
    File::open(path).map_err(|e| CorpusError::io(path, e))
}

fn read_utterances(path: &Path, scheme: &MoveScheme) -> Result<Vec<Utterance>, CorpusError> {
    let reader = BufReader::new(open(path)?);
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let row = i + 1;
        let line = line.map_err(|e| CorpusError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let utt: Utterance =
            serde_json::from_str(&line).map_err(|e| CorpusError::schema(row, e.to_string()))?;
        if utt.utt_id.is_empty() || utt.session_id.is_empty() {
            return Err(CorpusError::schema(row, "empty utt_id or session_id"));
        }
        if let Some(code) = &utt.code {
            if !scheme.contains(code) {
                return Err(CorpusError::UnknownLabel(code.clone()));
            }
        }
        if !seen.insert(utt.utt_id.clone()) {
            return Err(CorpusError::DuplicateId(utt.utt_id));
        }
        out.push(utt);
    }
    Ok(out)
}

fn read_sessions(path: &Path) -> Result<Vec<SessionRow>, CorpusError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(open(path)?);
    let mut seen = HashSet::new();
    let mut rows = Vec::new();
    for (i, rec) in reader.deserialize::<SessionRow>().enumerate() {
        let row = i + 1;
        let rec = rec.map_err(|e| CorpusError::schema(row, e.to_string()))?;
        if rec.session_id.is_empty() || rec.group_id.is_empty() {
            return Err(CorpusError::schema(row, "empty session_id or group_id"));
        }
        if !(1..=5).contains(&rec.scenario_id) {
            return Err(CorpusError::schema(
                row,
                format!("scenario_id {} outside 1..=5", rec.scenario_id),
            ));
        }
        if let Some(ic) = rec.ic_score {
            if !(IC_MIN..=IC_MAX).contains(&ic) {
                return Err(CorpusError::schema(
                    row,
                    format!("ic_score {ic} outside [{IC_MIN}, {IC_MAX}]"),
                ));
            }
        }
        if !seen.insert(rec.session_id.clone()) {
            return Err(CorpusError::DuplicateId(rec.session_id));
        }
        rows.push(rec);
    }
    Ok(rows)
}

/// Reads the utterance JSON-lines file and the session CSV into a validated corpus.
///
/// Sessions keep the order of the session file; utterances are ordered by
/// `turn_index`. Any error-severity validation finding rejects the input.
pub fn load_corpus(
    utterances_path: impl AsRef<Path>,
    sessions_path: impl AsRef<Path>,
    scheme: MoveScheme,
) -> Result<Corpus, CorpusError> {
    let utterances_path = utterances_path.as_ref();
    let sessions_path = sessions_path.as_ref();
    let rows = read_sessions(sessions_path)?;
    let utterances = read_utterances(utterances_path, &scheme)?;

    let index: HashMap<&str, usize> = rows
        .iter()
        .enumerate()
        .map(|(i, r)| (r.session_id.as_str(), i))
        .collect();
    let mut buckets: Vec<Vec<Utterance>> = vec![Vec::new(); rows.len()];
    for (i, utt) in utterances.into_iter().enumerate() {
        let Some(&s) = index.get(utt.session_id.as_str()) else {
            return Err(CorpusError::schema(
                i + 1,
                format!("utterance {:?} references unknown session {:?}", utt.utt_id, utt.session_id),
            ));
        };
        buckets[s].push(utt);
    }

    let mut groups = BTreeSet::new();
    let sessions = rows
        .into_iter()
        .zip(buckets)
        .map(|(row, mut utterances)| {
            utterances.sort_by_key(|u| u.turn_index);
            groups.insert(row.group_id.clone());
            Session {
                session_id: row.session_id,
                group_id: row.group_id,
                scenario_id: row.scenario_id,
                utterances,
                ic_score: row.ic_score,
            }
        })
        .collect();

    let corpus = Corpus {
        scheme,
        groups,
        sessions,
    };
    let report = validate_corpus(&corpus);
    if let Some(f) = report
        .findings
        .iter()
        .find(|f| f.severity == Severity::Error)
    {
        return Err(CorpusError::schema(0, format!("{}: {}", f.location, f.message)));
    }
    Ok(corpus)
}

/// Writes the corpus in the same two-file layout `load_corpus` reads.
pub fn write_corpus(
    corpus: &Corpus,
    utterances_path: impl AsRef<Path>,
    sessions_path: impl AsRef<Path>,
) -> Result<(), CorpusError> {
    let utterances_path = utterances_path.as_ref();
    let sessions_path = sessions_path.as_ref();

    let file = File::create(utterances_path).map_err(|e| CorpusError::io(utterances_path, e))?;
    let mut w = BufWriter::new(file);
    for utt in corpus.utterances() {
        let line = serde_json::to_string(utt).expect("utterance serializes");
        writeln!(w, "{line}").map_err(|e| CorpusError::io(utterances_path, e))?;
    }
    w.flush().map_err(|e| CorpusError::io(utterances_path, e))?;

    let file = File::create(sessions_path).map_err(|e| CorpusError::io(sessions_path, e))?;
    let mut w = csv::Writer::from_writer(file);
    let to_io = |e: csv::Error| CorpusError::io(sessions_path, std::io::Error::other(e));
    if corpus.sessions.is_empty() {
        w.write_record(["session_id", "group_id", "scenario_id", "ic_score"])
            .map_err(to_io)?;
    }
    for s in &corpus.sessions {
        w.serialize(SessionRow {
            session_id: s.session_id.clone(),
            group_id: s.group_id.clone(),
            scenario_id: s.scenario_id,
            ic_score: s.ic_score,
        })
        .map_err(to_io)?;
    }
    w.flush().map_err(|e| CorpusError::io(sessions_path, e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Category;
    use proptest::prelude::*;

    fn ab() -> MoveScheme {
        MoveScheme::new(
            "ab",
            vec![Category {
                name: "c".into(),
                labels: vec!["A".into(), "B".into()],
            }],
        )
        .unwrap()
    }

    fn write(dir: &Path, utt: &str, sess: &str) -> (std::path::PathBuf, std::path::PathBuf) {
        let u = dir.join("utterances.jsonl");
        let s = dir.join("sessions.csv");
        std::fs::write(&u, utt).unwrap();
        std::fs::write(&s, sess).unwrap();
        (u, s)
    }

    #[test]
    fn empty_files_give_empty_corpus() {
        let dir = tempfile::tempdir().unwrap();
        let (u, s) = write(dir.path(), "", "");
        let c = load_corpus(&u, &s, ab()).unwrap();
        assert!(c.sessions.is_empty());
        assert!(c.groups.is_empty());
    }

    #[test]
    fn two_sessions_three_utterances_each() {
        let dir = tempfile::tempdir().unwrap();
        let mut utt = String::new();
        // Deliberately out of turn order within s2.
        for (sid, order) in [("s1", [0, 1, 2]), ("s2", [2, 0, 1])] {
            for t in order {
                let code = if t % 2 == 0 { "A" } else { "B" };
                utt.push_str(&format!(
                    "{{\"utt_id\":\"{sid}-{t}\",\"session_id\":\"{sid}\",\"speaker_id\":\"p{t}\",\"turn_index\":{t},\"text\":\"hello {t}\",\"code\":\"{code}\"}}\n"
                ));
            }
        }
        let (u, s) = write(
            dir.path(),
            &utt,
            "session_id,group_id,scenario_id,ic_score\ns1,g1,1,3.5\ns2,g1,2,\n",
        );
        let c = load_corpus(&u, &s, ab()).unwrap();
        assert_eq!(c.sessions.len(), 2);
        assert_eq!(c.utterances().count(), 6);
        assert_eq!(c.groups.len(), 1);
        for sess in &c.sessions {
            let turns: Vec<usize> = sess.utterances.iter().map(|u| u.turn_index).collect();
            assert_eq!(turns, vec![0, 1, 2]);
            let codes: Vec<&str> = sess.codes().collect();
            assert_eq!(codes, vec!["A", "B", "A"]);
            assert_eq!(sess.utterances[1].text.as_deref(), Some("hello 1"));
            assert_eq!(sess.utterances[2].utt_id, format!("{}-2", sess.session_id));
        }
        assert_eq!(c.sessions[0].ic_score, Some(3.5));
        assert_eq!(c.sessions[1].ic_score, None);
        assert_eq!(c.sessions[1].scenario_id, 2);
    }

    #[test]
    fn seventeen_groups_eighty_three_sessions() {
        let dir = tempfile::tempdir().unwrap();
        let mut sess = String::from("session_id,group_id,scenario_id,ic_score\n");
        let mut n = 0;
        for g in 0..17 {
            for sc in 1..=5 {
                // Two sessions dropped, as in the collected data.
                if (g == 3 && sc == 2) || (g == 11 && sc == 5) {
                    continue;
                }
                sess.push_str(&format!("g{g:02}-s{sc},g{g:02},{sc},4\n"));
                n += 1;
            }
        }
        assert_eq!(n, 83);
        let (u, s) = write(dir.path(), "", &sess);
        let c = load_corpus(&u, &s, ab()).unwrap();
        assert_eq!(c.sessions.len(), 83);
        assert_eq!(c.groups.len(), 17);
    }

    #[test]
    fn missing_file() {
        let dir = tempfile::tempdir().unwrap();
        let err = load_corpus(dir.path().join("nope"), dir.path().join("nope2"), ab()).unwrap_err();
        assert!(matches!(err, CorpusError::MissingFile(_)));
    }

    #[test]
    fn rejects_unknown_label_duplicates_and_bad_rows() {
        let dir = tempfile::tempdir().unwrap();
        let sess = "session_id,group_id,scenario_id,ic_score\ns1,g1,1,\n";
        let (u, s) = write(
            dir.path(),
            r#"{"utt_id":"u1","session_id":"s1","speaker_id":"p","turn_index":0,"code":"Z"}"#,
            sess,
        );
        assert!(matches!(
            load_corpus(&u, &s, ab()),
            Err(CorpusError::UnknownLabel(_))
        ));

        let (u, s) = write(
            dir.path(),
            "{\"utt_id\":\"u1\",\"session_id\":\"s1\",\"speaker_id\":\"p\",\"turn_index\":0,\"code\":\"A\"}\n{\"utt_id\":\"u1\",\"session_id\":\"s1\",\"speaker_id\":\"p\",\"turn_index\":1,\"code\":\"A\"}\n",
            sess,
        );
        assert!(matches!(
            load_corpus(&u, &s, ab()),
            Err(CorpusError::DuplicateId(_))
        ));

        let (u, s) = write(dir.path(), "{\"utt_id\":1}\n", sess);
        assert!(matches!(
            load_corpus(&u, &s, ab()),
            Err(CorpusError::SchemaViolation { row: 1, .. })
        ));

        let (u, s) = write(
            dir.path(),
            "",
            "session_id,group_id,scenario_id,ic_score\ns1,g1,1,9.5\n",
        );
        assert!(matches!(
            load_corpus(&u, &s, ab()),
            Err(CorpusError::SchemaViolation { row: 1, .. })
        ));

        let (u, s) = write(
            dir.path(),
            "",
            "session_id,group_id,scenario_id,ic_score\ns1,g1,1,\ns1,g2,1,\n",
        );
        assert!(matches!(
            load_corpus(&u, &s, ab()),
            Err(CorpusError::DuplicateId(_))
        ));
    }

    #[test]
    fn rejects_turn_gap() {
        let dir = tempfile::tempdir().unwrap();
        let (u, s) = write(
            dir.path(),
            "{\"utt_id\":\"u1\",\"session_id\":\"s1\",\"speaker_id\":\"p\",\"turn_index\":0,\"code\":\"A\"}\n{\"utt_id\":\"u2\",\"session_id\":\"s1\",\"speaker_id\":\"p\",\"turn_index\":2,\"code\":\"A\"}\n",
            "session_id,group_id,scenario_id,ic_score\ns1,g1,1,\n",
        );
        let err = load_corpus(&u, &s, ab()).unwrap_err();
        assert!(err.to_string().contains("non-contiguous turn_index"), "{err}");
    }

    fn arb_corpus() -> impl Strategy<Value = Corpus> {
        let session = (
            0usize..3,
            1u8..=5,
            prop::option::of(1.0f64..=7.0),
            prop::collection::vec(
                (prop::option::of(0usize..2), prop::option::of("[a-z ]{0,12}")),
                0..6,
            ),
        );
        prop::collection::vec(session, 0..5).prop_map(|sessions| {
            let scheme = ab();
            let mut groups = BTreeSet::new();
            let sessions = sessions
                .into_iter()
                .enumerate()
                .map(|(si, (g, scenario, ic, utts))| {
                    let sid = format!("s{si}");
                    let gid = format!("g{g}");
                    groups.insert(gid.clone());
                    Session {
                        utterances: utts
                            .into_iter()
                            .enumerate()
                            .map(|(t, (code, text))| Utterance {
                                utt_id: format!("{sid}-u{t}"),
                                session_id: sid.clone(),
                                speaker_id: format!("p{}", t % 3),
                                turn_index: t,
                                text,
                                code: code.map(|c| scheme.labels()[c].clone()),
                            })
                            .collect(),
                        session_id: sid,
                        group_id: gid,
                        scenario_id: scenario,
                        ic_score: ic,
                    }
                })
                .collect();
            Corpus {
                scheme,
                groups,
                sessions,
            }
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn write_then_load_is_identity(corpus in arb_corpus()) {
            let dir = tempfile::tempdir().unwrap();
            let u = dir.path().join("u.jsonl");
            let s = dir.path().join("s.csv");
            write_corpus(&corpus, &u, &s).unwrap();
            let back = load_corpus(&u, &s, corpus.scheme.clone()).unwrap();
            prop_assert_eq!(back, corpus);
        }
    }
}
