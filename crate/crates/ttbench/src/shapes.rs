//! Core-shape strings in the "(2,2,256)x(2,2,512)" notation: a row-mode
//! tuple and a column-mode tuple of equal length joined by "x".

use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ShapeParseError {
    #[error("expected {expected:?} at position {position}")]
    Expected { expected: char, position: usize },
    #[error("expected a positive integer at position {position}")]
    ExpectedInteger { position: usize },
    #[error("trailing input at position {position}")]
    Trailing { position: usize },
    #[error("row tuple has {rows} entries but column tuple has {cols}")]
    UnequalLengths { rows: usize, cols: usize },
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn expect(&mut self, c: char) -> Result<(), ShapeParseError> {
        if self.bytes.get(self.pos) == Some(&(c as u8)) {
            self.pos += 1;
            Ok(())
        } else {
            Err(ShapeParseError::Expected {
                expected: c,
                position: self.pos,
            })
        }
    }

    fn integer(&mut self) -> Result<usize, ShapeParseError> {
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if self.pos == start {
            return Err(ShapeParseError::ExpectedInteger { position: start });
        }
        let text = std::str::from_utf8(&self.bytes[start..self.pos]).unwrap();
        match text.parse::<usize>() {
            Ok(v) if v > 0 => Ok(v),
            _ => Err(ShapeParseError::ExpectedInteger { position: start }),
        }
    }

    fn tuple(&mut self) -> Result<Vec<usize>, ShapeParseError> {
        self.expect('(')?;
        let mut out = vec![self.integer()?];
        while self.bytes.get(self.pos) == Some(&b',') {
            self.pos += 1;
            out.push(self.integer()?);
        }
        self.expect(')')?;
        Ok(out)
    }
}

/// Parses "(a,b,...)x(c,d,...)" into the row and column mode lists.
pub fn parse_shape_string(s: &str) -> Result<(Vec<usize>, Vec<usize>), ShapeParseError> {
    let mut cur = Cursor {
        bytes: s.as_bytes(),
        pos: 0,
    };
    let rows = cur.tuple()?;
    cur.expect('x')?;
    let cols = cur.tuple()?;
    if cur.pos != cur.bytes.len() {
        return Err(ShapeParseError::Trailing { position: cur.pos });
    }
    if rows.len() != cols.len() {
        return Err(ShapeParseError::UnequalLengths {
            rows: rows.len(),
            cols: cols.len(),
        });
    }
    Ok((rows, cols))
}

/// Canonical form of a mode split, inverse of [`parse_shape_string`].
pub fn format_shape_string(row_modes: &[usize], col_modes: &[usize]) -> String {
    let tuple = |modes: &[usize]| {
        let parts: Vec<String> = modes.iter().map(|m| m.to_string()).collect();
        format!("({})", parts.join(","))
    };
    format!("{}x{}", tuple(row_modes), tuple(col_modes))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parses_the_table_notation() {
        let (rows, cols) = parse_shape_string("(2,2,256)x(2,2,512)").unwrap();
        assert_eq!(rows, vec![2, 2, 256]);
        assert_eq!(cols, vec![2, 2, 512]);
    }

    #[test]
    fn parses_single_mode_tuples() {
        assert_eq!(parse_shape_string("(8)x(8)").unwrap(), (vec![8], vec![8]));
    }

    #[test]
    fn rejects_unequal_tuple_lengths() {
        assert_eq!(
            parse_shape_string("(2,2)x(2,2,2)").unwrap_err(),
            ShapeParseError::UnequalLengths { rows: 2, cols: 3 }
        );
    }

    #[test]
    fn reports_the_failing_position() {
        match parse_shape_string("(2,2x(2,2)") {
            Err(ShapeParseError::Expected {
                expected: ')',
                position,
            }) => {
                assert_eq!(position, 4)
            }
            other => panic!("unexpected {other:?}"),
        }
        match parse_shape_string("(2,,2)x(2,2)") {
            Err(ShapeParseError::ExpectedInteger { position }) => assert_eq!(position, 3),
            other => panic!("unexpected {other:?}"),
        }
        match parse_shape_string("(2)x(2) ") {
            Err(ShapeParseError::Trailing { position }) => assert_eq!(position, 7),
            other => panic!("unexpected {other:?}"),
        }
        assert!(parse_shape_string("(0,2)x(2,2)").is_err());
    }

    fn mode_pair() -> impl Strategy<Value = (Vec<usize>, Vec<usize>)> {
        (1usize..6).prop_flat_map(|len| {
            (
                proptest::collection::vec(1usize..1000, len),
                proptest::collection::vec(1usize..1000, len),
            )
        })
    }

    proptest! {
        #[test]
        fn format_then_parse_round_trips((modes, cols) in mode_pair()) {
            let s = format_shape_string(&modes, &cols);
            let (r, c) = parse_shape_string(&s).unwrap();
            prop_assert_eq!(r, modes);
            prop_assert_eq!(c, cols);
        }

        #[test]
        fn parse_then_format_is_canonical(
            modes in proptest::collection::vec(1usize..1000, 1..6),
        ) {
            let s = format_shape_string(&modes, &modes);
            let (r, c) = parse_shape_string(&s).unwrap();
            prop_assert_eq!(format_shape_string(&r, &c), s);
        }
    }
}
