//! Text formats: the JSON machine document, KISS2 ingestion, key files and
//! partition files.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fsm::{Fsm, StateId, TransitionRecord};

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FsmDoc {
    states: Vec<StateId>,
    inputs: Vec<String>,
    outputs: Vec<String>,
    #[serde(default)]
    reset: Option<StateId>,
    transitions: Vec<TransitionRecord>,
}

fn syntax(e: serde_json::Error) -> Error {
    Error::Syntax {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    }
}

/// Parses the JSON interchange document.
pub fn parse_fsm(doc: &str) -> Result<Fsm> {
    let raw: FsmDoc = serde_json::from_str(doc).map_err(syntax)?;
    from_doc(raw)
}

fn from_doc(raw: FsmDoc) -> Result<Fsm> {
    let reset = raw.reset.ok_or_else(|| Error::Semantic("missing reset state".into()))?;
    let declared = raw.states.len();
    let states: std::collections::BTreeSet<_> = raw.states.iter().copied().collect();
    if states.len() != declared {
        return Err(Error::Semantic("duplicate state id".into()));
    }
    Fsm::new(states, raw.inputs, raw.outputs, reset, raw.transitions)
}

fn to_doc(m: &Fsm) -> FsmDoc {
    FsmDoc {
        states: m.states().iter().copied().collect(),
        inputs: m.inputs().to_vec(),
        outputs: m.outputs().to_vec(),
        reset: Some(m.reset()),
        transitions: m.transitions().collect(),
    }
}

/// Serializes a machine; identical machines produce identical bytes.
pub fn write_fsm(m: &Fsm) -> String {
    let mut s = serde_json::to_string_pretty(&to_doc(m)).expect("machine documents always serialize");
    s.push('\n');
    s
}

impl Serialize for Fsm {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        to_doc(self).serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Fsm {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let raw = FsmDoc::deserialize(deserializer)?;
        from_doc(raw).map_err(serde::de::Error::custom)
    }
}

/// Reads a KISS2 description. State names become ids in order of first
/// appearance (the `.r` state, when given, is id 0). Input cubes with `-`
/// are expanded to every concrete bit string they cover.
pub fn parse_kiss2(text: &str) -> Result<Fsm> {
    let mut reset_name: Option<String> = None;
    let mut rows: Vec<(usize, Vec<String>)> = Vec::new();
    let mut in_width: Option<usize> = None;
    for (n, line) in text.lines().enumerate() {
        let line_no = n + 1;
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if let Some(directive) = fields[0].strip_prefix('.') {
            match directive {
                "i" => in_width = Some(parse_num(fields.get(1), line_no)?),
                "o" | "p" | "s" => {
                    parse_num(fields.get(1), line_no)?;
                }
                "r" => {
                    reset_name = Some(
                        fields
                            .get(1)
                            .ok_or_else(|| kiss_err(line_no, "missing reset state name"))?
                            .to_string(),
                    )
                }
                "e" | "end" => break,
                "start_kiss" | "end_kiss" => {}
                other => return Err(kiss_err(line_no, &format!("unknown directive .{other}"))),
            }
            continue;
        }
        if fields.len() != 4 {
            return Err(kiss_err(line_no, "expected `input current next output`"));
        }
        rows.push((line_no, fields.iter().map(|s| s.to_string()).collect()));
    }

    let mut ids: BTreeMap<String, StateId> = BTreeMap::new();
    let mut order: Vec<String> = Vec::new();
    let mut intern = |name: &str, ids: &mut BTreeMap<String, StateId>| -> StateId {
        if let Some(&id) = ids.get(name) {
            return id;
        }
        let id = order.len() as StateId;
        order.push(name.to_string());
        ids.insert(name.to_string(), id);
        id
    };
    if let Some(r) = &reset_name {
        intern(r, &mut ids);
    }
    let mut inputs = std::collections::BTreeSet::new();
    let mut outputs = std::collections::BTreeSet::new();
    let mut records = Vec::new();
    for (line_no, f) in &rows {
        if f[1] == "*" {
            return Err(kiss_err(*line_no, "wildcard current state is not supported"));
        }
        if let Some(w) = in_width {
            if f[0].len() != w {
                return Err(kiss_err(*line_no, "input cube width differs from .i"));
            }
        }
        let from = intern(&f[1], &mut ids);
        let to = intern(&f[2], &mut ids);
        for cube in expand_cube(&f[0]).map_err(|m| kiss_err(*line_no, &m))? {
            inputs.insert(cube.clone());
            outputs.insert(f[3].clone());
            records.push(TransitionRecord::new(from, cube, to, f[3].clone()));
        }
    }
    let reset = match &reset_name {
        Some(_) => 0,
        None if !order.is_empty() => 0,
        None => return Err(Error::Semantic("missing reset state".into())),
    };
    Fsm::new(
        0..order.len() as StateId,
        inputs.into_iter().collect(),
        outputs.into_iter().collect(),
        reset,
        records,
    )
}

fn kiss_err(line: usize, message: &str) -> Error {
    Error::Syntax {
        line,
        column: 1,
        message: message.to_string(),
    }
}

fn parse_num(field: Option<&&str>, line: usize) -> Result<usize> {
    field
        .and_then(|f| f.parse().ok())
        .ok_or_else(|| kiss_err(line, "expected a number"))
}

fn expand_cube(cube: &str) -> std::result::Result<Vec<String>, String> {
    let mut acc = vec![String::new()];
    for ch in cube.chars() {
        acc = match ch {
            '0' | '1' => acc
                .into_iter()
                .map(|mut s| {
                    s.push(ch);
                    s
                })
                .collect(),
            '-' => acc
                .into_iter()
                .flat_map(|s| [format!("{s}0"), format!("{s}1")])
                .collect(),
            other => return Err(format!("bad input character {other:?}")),
        };
    }
    Ok(acc)
}

/// One line of space-separated image indices, e.g. `2 0 1`.
pub fn parse_key_line(text: &str) -> Result<Vec<usize>> {
    let line = text.trim();
    line.split_whitespace()
        .enumerate()
        .map(|(i, tok)| {
            tok.parse::<usize>().map_err(|_| Error::Syntax {
                line: 1,
                column: i + 1,
                message: format!("not an index: {tok:?}"),
            })
        })
        .collect()
}

pub fn write_key_line(image: &[usize]) -> String {
    let mut s = image.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ");
    s.push('\n');
    s
}

/// Partition file: one block per line, comma-separated state ids.
pub fn parse_blocks(text: &str) -> Result<Vec<Vec<StateId>>> {
    let mut blocks = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let block = line
            .split(',')
            .map(|t| {
                t.trim().parse::<StateId>().map_err(|_| Error::Syntax {
                    line: n + 1,
                    column: 1,
                    message: format!("not a state id: {:?}", t.trim()),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        blocks.push(block);
    }
    Ok(blocks)
}

pub fn write_blocks(blocks: &[Vec<StateId>]) -> String {
    let mut s = String::new();
    for b in blocks {
        s.push_str(&b.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(","));
        s.push('\n');
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn smallest_legal_machine() {
        let m = parse_fsm(
            r#"{"states":[0],"inputs":["0"],"outputs":["0"],"reset":0,
                "transitions":[{"from":0,"in":"0","to":0,"out":"0"}]}"#,
        )
        .unwrap();
        assert_eq!(m.num_states(), 1);
        assert_eq!(m.num_transitions(), 1);
    }

    #[test]
    fn missing_reset_is_semantic() {
        let e = parse_fsm(r#"{"states":[0],"inputs":[],"outputs":[],"transitions":[]}"#).unwrap_err();
        assert!(matches!(e, Error::Semantic(_)), "{e:?}");
    }

    #[test]
    fn syntax_error_reports_position() {
        let e = parse_fsm("{\n  \"states\": [0,\n  ]").unwrap_err();
        match e {
            Error::Syntax { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_state_and_duplicate_pair() {
        let unknown = parse_fsm(
            r#"{"states":[0],"inputs":["a"],"outputs":["x"],"reset":0,
                "transitions":[{"from":0,"in":"a","to":4,"out":"x"}]}"#,
        );
        assert!(matches!(unknown, Err(Error::Semantic(_))));
        let dup = parse_fsm(
            r#"{"states":[0],"inputs":["a"],"outputs":["x"],"reset":0,
                "transitions":[{"from":0,"in":"a","to":0,"out":"x"},{"from":0,"in":"a","to":0,"out":"x"}]}"#,
        );
        assert!(matches!(dup, Err(Error::Semantic(_))));
    }

    #[test]
    fn document_round_trip_is_byte_stable() {
        let text = r#"{"states":[0,1],"inputs":["a","b"],"outputs":["x"],"reset":1,
            "transitions":[{"from":1,"in":"b","to":0,"out":"x"},{"from":0,"in":"a","to":1,"out":"x"}]}"#;
        let m = parse_fsm(text).unwrap();
        let once = write_fsm(&m);
        let again = write_fsm(&parse_fsm(&once).unwrap());
        assert_eq!(once, again);
        assert_eq!(parse_fsm(&once).unwrap(), m);
    }

    #[test]
    fn kiss2_with_cubes() {
        let text = "\
.i 2
.o 1
.p 3
.s 2
.r st0
0- st0 st1 1
1- st0 st0 0
-- st1 st0 1
.e
";
        let m = parse_kiss2(text).unwrap();
        assert_eq!(m.num_states(), 2);
        assert_eq!(m.reset(), 0);
        assert_eq!(m.num_transitions(), 8);
        assert_eq!(m.step(0, "01"), Some((1, "1")));
        assert_eq!(m.step(1, "11"), Some((0, "1")));
    }

    #[test]
    fn kiss2_overlapping_cubes_rejected() {
        let text = ".i 1\n.o 1\n.r a\n- a a 0\n1 a b 1\n";
        assert!(matches!(parse_kiss2(text), Err(Error::Semantic(_))));
    }

    #[test]
    fn key_and_block_lines() {
        assert_eq!(parse_key_line("2 0 1\n").unwrap(), vec![2, 0, 1]);
        assert_eq!(write_key_line(&[2, 0, 1]), "2 0 1\n");
        assert!(parse_key_line("2 x").is_err());
        let blocks = parse_blocks("1,2\n\n3\n").unwrap();
        assert_eq!(blocks, vec![vec![1, 2], vec![3]]);
        assert_eq!(write_blocks(&blocks), "1,2\n3\n");
    }
}
