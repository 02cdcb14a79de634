//! Loader for hex test-vector files: one record per line, whitespace
//! separated hex fields, `#` starts a comment. A lone `-` is an empty field.

use std::path::Path;

use crate::error::Error;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VectorRecord {
    pub line: usize,
    pub fields: Vec<Vec<u8>>,
}

pub fn parse(text: &str) -> Result<Vec<VectorRecord>, Error> {
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let fields = content
            .split_whitespace()
            .map(|f| {
                if f == "-" {
                    Ok(Vec::new())
                } else {
                    hex::decode(f).map_err(|e| Error::Parse { line, msg: format!("bad hex {f:?}: {e}") })
                }
            })
            .collect::<Result<Vec<_>, _>>()?;
        out.push(VectorRecord { line, fields });
    }
    Ok(out)
}

pub fn load(path: impl AsRef<Path>) -> Result<Vec<VectorRecord>, Error> {
    parse(&std::fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_fields_and_comments() {
        let recs = parse("# header\n00ff 01  # trailing\n\n- ab\n").unwrap();
        assert_eq!(recs.len(), 2);
        assert_eq!(recs[0].fields, vec![vec![0x00, 0xff], vec![0x01]]);
        assert_eq!(recs[1].line, 4);
        assert!(recs[1].fields[0].is_empty());
    }

    #[test]
    fn reports_line_of_bad_hex() {
        let err = parse("00\nzz\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
    }
}
