//! Plain-text multipatch format.
//!
//! ```text
//! multipatch 1
//! patch <p1> <p2> <n1> <n2>
//! <knots in x1>
//! <knots in x2>
//! x y z w        # n1*n2 lines, j2 fastest
//! ```
//!
//! Blank lines and everything after `#` are ignored.

use std::fmt::Write as _;
use std::path::Path;

use super::{MultipatchGeometry, NurbsPatch, Vec3};
use crate::error::{Error, Result};

pub fn load_geometry(path: impl AsRef<Path>) -> Result<MultipatchGeometry> {
    let text = std::fs::read_to_string(path)?;
    parse_geometry(&text)
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    last: usize,
}

impl<'a> Lines<'a> {
    fn next(&mut self) -> Option<(usize, &'a str)> {
        for (i, raw) in self.inner.by_ref() {
            let line = raw.split('#').next().unwrap_or("").trim();
            self.last = i + 1;
            if !line.is_empty() {
                return Some((i + 1, line));
            }
        }
        None
    }

    fn expect(&mut self, what: &str) -> Result<(usize, &'a str)> {
        self.next().ok_or_else(|| Error::Parse {
            line: self.last + 1,
            message: format!("unexpected end of file, expected {what}"),
        })
    }
}

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

fn numbers<T: std::str::FromStr>(line: usize, text: &str) -> Result<Vec<T>> {
    text.split_whitespace()
        .map(|tok| tok.parse::<T>().map_err(|_| parse_err(line, format!("invalid number '{tok}'"))))
        .collect()
}

pub fn parse_geometry(text: &str) -> Result<MultipatchGeometry> {
    let mut lines = Lines {
        inner: text.lines().enumerate(),
        last: 0,
    };
    let (ln, header) = lines.expect("header")?;
    if header.split_whitespace().collect::<Vec<_>>() != ["multipatch", "1"] {
        return Err(parse_err(ln, "expected header 'multipatch 1'"));
    }
    let mut patches = Vec::new();
    while let Some((ln, line)) = lines.next() {
        let mut tok = line.split_whitespace();
        if tok.next() != Some("patch") {
            return Err(parse_err(ln, format!("expected 'patch', found '{line}'")));
        }
        let dims: Vec<usize> = numbers(ln, &tok.collect::<Vec<_>>().join(" "))?;
        let [p1, p2, n1, n2] = dims[..] else {
            return Err(parse_err(ln, "patch line needs four integers: p1 p2 n1 n2"));
        };
        let mut knots = Vec::with_capacity(2);
        for (p, n) in [(p1, n1), (p2, n2)] {
            let (kl, k) = lines.expect("knot vector")?;
            let kv: Vec<f64> = numbers(kl, k)?;
            if kv.len() != n + p + 1 {
                return Err(parse_err(
                    kl,
                    format!("knot vector has {} entries, degree {p} with {n} functions needs {}", kv.len(), n + p + 1),
                ));
            }
            knots.push((kl, kv));
        }
        let mut pts = Vec::with_capacity(n1 * n2);
        let mut wts = Vec::with_capacity(n1 * n2);
        for _ in 0..n1 * n2 {
            let (cl, c) = lines.expect("control point")?;
            let v: Vec<f64> = numbers(cl, c)?;
            let [x, y, z, w] = v[..] else {
                return Err(parse_err(cl, "control point line needs 'x y z w'"));
            };
            if !(w > 0.0) {
                return Err(Error::Geometry(format!("line {cl}: weight {w} is not strictly positive")));
            }
            pts.push(Vec3::new(x, y, z));
            wts.push(w);
        }
        let (kl, ku) = knots.remove(0);
        let (_, kv) = knots.remove(0);
        let patch = NurbsPatch::new(p1, ku, p2, kv, pts, wts).map_err(|e| match e {
            Error::Geometry(m) => Error::Geometry(format!("patch {} (line {kl}): {m}", patches.len())),
            e => e,
        })?;
        patches.push(patch);
    }
    MultipatchGeometry::new(patches)
}

pub fn write_geometry(geometry: &MultipatchGeometry) -> String {
    let mut s = String::from("multipatch 1\n");
    for (k, p) in geometry.patches().iter().enumerate() {
        let (bu, bv) = (p.basis_u(), p.basis_v());
        let _ = writeln!(s, "# patch {k}");
        let _ = writeln!(s, "patch {} {} {} {}", bu.degree(), bv.degree(), bu.dim(), bv.dim());
        for b in [bu, bv] {
            let k: Vec<String> = b.knot_vector().knots().iter().map(|x| format!("{x:?}")).collect();
            let _ = writeln!(s, "{}", k.join(" "));
        }
        for (c, w) in p.control_points().iter().zip(p.weights()) {
            let _ = writeln!(s, "{:?} {:?} {:?} {:?}", c.x, c.y, c.z, w);
        }
    }
    s
}
