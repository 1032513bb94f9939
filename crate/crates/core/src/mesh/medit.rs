//! ASCII Medit (`.mesh`) reader and writer.
//!
//! Only the `Vertices` and `Tetrahedra` sections are interpreted. `Triangles`,
//! `Edges`, `Quadrilaterals`, `Corners`, `Ridges`, `RequiredVertices` and
//! `Hexahedra` are skipped. Indices in the file are 1-based.

use std::fmt::Write as _;

use super::{TetMesh, Vec3};
use crate::error::{Error, Result};

struct Tokens<'a> {
    iter: Box<dyn Iterator<Item = (usize, &'a str)> + 'a>,
    line: usize,
}

impl<'a> Tokens<'a> {
    fn new(text: &'a str) -> Self {
        let iter = text.lines().enumerate().flat_map(|(i, l)| {
            let l = l.split('#').next().unwrap_or("");
            l.split_whitespace().map(move |t| (i + 1, t))
        });
        Self {
            iter: Box::new(iter),
            line: 0,
        }
    }

    fn next(&mut self) -> Option<&'a str> {
        let (line, tok) = self.iter.next()?;
        self.line = line;
        Some(tok)
    }

    fn expect(&mut self, what: &str) -> Result<&'a str> {
        let line = self.line;
        self.next()
            .ok_or_else(|| Error::parse(line, format!("unexpected end of file, expected {what}")))
    }

    fn count(&mut self, section: &str) -> Result<usize> {
        let tok = self.expect(&format!("{section} count"))?;
        tok.parse()
            .map_err(|_| Error::parse(self.line, format!("invalid {section} count {tok:?}")))
    }

    fn real(&mut self) -> Result<f64> {
        let tok = self.expect("a coordinate")?;
        tok.parse()
            .map_err(|_| Error::parse(self.line, format!("invalid coordinate {tok:?}")))
    }

    fn index(&mut self, n: usize) -> Result<usize> {
        let tok = self.expect("a vertex index")?;
        let i: usize = tok
            .parse()
            .map_err(|_| Error::parse(self.line, format!("invalid vertex index {tok:?}")))?;
        if i == 0 || i > n {
            return Err(Error::parse(
                self.line,
                format!("vertex index {i} out of range 1..={n}"),
            ));
        }
        Ok(i - 1)
    }

    fn skip(&mut self, count: usize) -> Result<()> {
        for _ in 0..count {
            self.expect("section entry")?;
        }
        Ok(())
    }
}

/// Parses an ASCII Medit mesh into a validated [`TetMesh`].
pub fn parse_medit(text: &str) -> Result<TetMesh> {
    let mut tok = Tokens::new(text);
    let mut positions: Option<Vec<Vec3>> = None;
    let mut tets: Option<Vec<[usize; 4]>> = None;
    let mut tet_line = 0;

    while let Some(kw) = tok.next() {
        match kw {
            "MeshVersionFormatted" => {
                tok.expect("version")?;
            }
            "Dimension" => {
                let d = tok.expect("dimension")?;
                if d != "3" {
                    return Err(Error::parse(tok.line, format!("unsupported dimension {d}")));
                }
            }
            "Vertices" => {
                let n = tok.count("Vertices")?;
                let mut v = Vec::with_capacity(n);
                for _ in 0..n {
                    v.push([tok.real()?, tok.real()?, tok.real()?]);
                    tok.expect("vertex reference")?;
                }
                positions = Some(v);
            }
            "Tetrahedra" => {
                let Some(verts) = positions.as_ref() else {
                    return Err(Error::parse(
                        tok.line,
                        "Tetrahedra section precedes Vertices",
                    ));
                };
                let n = verts.len();
                tet_line = tok.line;
                let count = tok.count("Tetrahedra")?;
                let mut t = Vec::with_capacity(count);
                for _ in 0..count {
                    t.push([tok.index(n)?, tok.index(n)?, tok.index(n)?, tok.index(n)?]);
                    tok.expect("tet reference")?;
                }
                tets = Some(t);
            }
            "Triangles" => {
                let c = tok.count("Triangles")?;
                tok.skip(4 * c)?;
            }
            "Edges" => {
                let c = tok.count("Edges")?;
                tok.skip(3 * c)?;
            }
            "Quadrilaterals" => {
                let c = tok.count("Quadrilaterals")?;
                tok.skip(5 * c)?;
            }
            "Hexahedra" => {
                let c = tok.count("Hexahedra")?;
                tok.skip(9 * c)?;
            }
            "Corners" | "Ridges" | "RequiredVertices" | "RequiredEdges" => {
                let c = tok.count(kw)?;
                tok.skip(c)?;
            }
            "End" => break,
            other => {
                return Err(Error::parse(tok.line, format!("unknown keyword {other:?}")));
            }
        }
    }

    let positions =
        positions.ok_or_else(|| Error::parse(tok.line, "missing Vertices section"))?;
    let tets = tets.ok_or_else(|| Error::parse(tok.line, "missing Tetrahedra section"))?;
    if tets.is_empty() {
        return Err(Error::parse(tet_line, "no tetrahedra"));
    }
    TetMesh::new(positions, tets)
}

/// Serializes positions, tets and the derived surface triangles.
///
/// Coordinates use the shortest representation that parses back to the
/// same `f64`.
pub fn write_medit(mesh: &TetMesh) -> String {
    let mut s = String::new();
    s.push_str("MeshVersionFormatted 1\nDimension 3\n");
    let _ = writeln!(s, "Vertices\n{}", mesh.num_vertices());
    for p in mesh.positions() {
        let _ = writeln!(s, "{} {} {} 0", p[0], p[1], p[2]);
    }
    let _ = writeln!(s, "Tetrahedra\n{}", mesh.num_tets());
    for t in mesh.tets() {
        let _ = writeln!(s, "{} {} {} {} 0", t[0] + 1, t[1] + 1, t[2] + 1, t[3] + 1);
    }
    let _ = writeln!(s, "Triangles\n{}", mesh.surface_tris().len());
    for t in mesh.surface_tris() {
        let _ = writeln!(s, "{} {} {} 0", t[0] + 1, t[1] + 1, t[2] + 1);
    }
    s.push_str("End\n");
    s
}
