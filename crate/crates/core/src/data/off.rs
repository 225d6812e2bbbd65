//! Reader for the OFF mesh format.
//!
//! Accepts an `OFF` header (optionally with the counts glued onto the same
//! line, as some ModelNet files have), a `vertices faces edges` counts line,
//! vertex lines and polygon lines `k i0 .. i{k-1}`. Polygons are split into
//! a triangle fan around their first vertex. `#` starts a comment.

use std::path::Path;

use super::mesh::{TriangleMesh, Vec3};
use crate::error::{Error, Result};

fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        line,
        msg: msg.into(),
    }
}

fn numbers<T: std::str::FromStr>(line: usize, text: &str, what: &str) -> Result<Vec<T>> {
    text.split_whitespace()
        .map(|t| {
            t.parse()
                .map_err(|_| parse_err(line, format!("invalid {what} '{t}'")))
        })
        .collect()
}

pub fn parse_off(text: &str) -> Result<TriangleMesh> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
        .filter(|(_, l)| !l.is_empty());

    let (hline, header) = lines
        .next()
        .ok_or_else(|| parse_err(1, "empty file, expected OFF header"))?;
    let rest = header
        .strip_prefix("OFF")
        .ok_or_else(|| parse_err(hline, format!("expected 'OFF' header, found '{header}'")))?;
    let (cline, counts) = if rest.trim().is_empty() {
        let (l, c) = lines
            .next()
            .ok_or_else(|| parse_err(hline + 1, "missing counts line"))?;
        (l, numbers::<usize>(l, c, "count")?)
    } else {
        (hline, numbers::<usize>(hline, rest, "count")?)
    };
    if counts.len() < 2 {
        return Err(parse_err(cline, "counts line needs vertex and face counts"));
    }
    let (nv, nf) = (counts[0], counts[1]);

    let mut vertices: Vec<Vec3> = Vec::with_capacity(nv);
    for k in 0..nv {
        let (l, text) = lines
            .next()
            .ok_or_else(|| parse_err(cline, format!("file ends after {k} of {nv} vertices")))?;
        let v = numbers::<f64>(l, text, "coordinate")?;
        if v.len() < 3 {
            return Err(parse_err(l, format!("vertex needs 3 coordinates, got {}", v.len())));
        }
        if v[..3].iter().any(|c| !c.is_finite()) {
            return Err(parse_err(l, "non-finite coordinate"));
        }
        vertices.push([v[0], v[1], v[2]]);
    }

    let mut faces = Vec::with_capacity(nf);
    for k in 0..nf {
        let (l, text) = lines
            .next()
            .ok_or_else(|| parse_err(cline, format!("file ends after {k} of {nf} faces")))?;
        let mut tokens = text.split_whitespace();
        let arity: usize = tokens
            .next()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| parse_err(l, "face line must start with a vertex count"))?;
        if arity < 3 {
            return Err(parse_err(l, format!("face with {arity} vertices")));
        }
        let idx: Vec<usize> = tokens
            .take(arity)
            .map(|t| {
                t.parse()
                    .map_err(|_| parse_err(l, format!("invalid vertex index '{t}'")))
            })
            .collect::<Result<_>>()?;
        if idx.len() != arity {
            return Err(parse_err(l, format!("face lists {} of {arity} indices", idx.len())));
        }
        if let Some(&bad) = idx.iter().find(|&&i| i >= nv) {
            return Err(parse_err(
                l,
                format!("vertex index {bad} out of range for {nv} vertices"),
            ));
        }
        for j in 1..arity - 1 {
            faces.push([idx[0], idx[j], idx[j + 1]]);
        }
    }
    TriangleMesh::new(vertices, faces)
}

pub fn load_off(path: impl AsRef<Path>) -> Result<TriangleMesh> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_off(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_triangle() {
        let m = parse_off("OFF\n3 1 0\n0 0 0\n1 0 0\n0 1 0\n3 0 1 2\n").unwrap();
        assert_eq!(m.vertices().len(), 3);
        assert_eq!(m.faces(), &[[0, 1, 2]]);
    }

    #[test]
    fn quad_is_fan_split() {
        let m = parse_off(
            "OFF\n# a unit square\n4 1 0\n0 0 0\n1 0 0\n1 1 0\n0 1 0\n4 0 1 2 3\n",
        )
        .unwrap();
        assert_eq!(m.faces(), &[[0, 1, 2], [0, 2, 3]]);
        assert!((m.total_area() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn glued_header_counts() {
        let m = parse_off("OFF3 1 0\n0 0 0\n1 0 0\n0 1 0\n3 0 1 2\n").unwrap();
        assert_eq!(m.faces().len(), 1);
    }

    #[test]
    fn out_of_range_index_names_the_line() {
        let err = parse_off("OFF\n3 1 0\n0 0 0\n1 0 0\n0 1 0\n3 0 1 7\n").unwrap_err();
        match err {
            Error::Parse { line, msg } => {
                assert_eq!(line, 6);
                assert!(msg.contains('7'));
            }
            e => panic!("unexpected {e:?}"),
        }
    }

    #[test]
    fn malformed_inputs() {
        assert!(matches!(parse_off("PLY\n"), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(parse_off("OFF\nx 1 0\n"), Err(Error::Parse { line: 2, .. })));
        assert!(matches!(
            parse_off("OFF\n3 1 0\n0 0 0\n1 0\n"),
            Err(Error::Parse { line: 4, .. })
        ));
        assert!(parse_off("OFF\n3 1 0\n0 0 0\n1 0 0\n0 1 0\n").is_err());
    }
}
