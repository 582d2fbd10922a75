//! Plain CSV output: header row, UNIX line endings, floats with 17
//! significant digits (enough to round-trip every `f64`).

use std::io::{self, Write};

pub fn fmt_f64(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        format!("{v}")
    }
}

/// A cell of a CSV row.
#[derive(Debug, Clone, Copy)]
pub enum Cell<'a> {
    F(f64),
    I(i64),
    U(u64),
    S(&'a str),
}

impl Cell<'_> {
    fn render(&self) -> String {
        match *self {
            Cell::F(v) => fmt_f64(v),
            Cell::I(v) => v.to_string(),
            Cell::U(v) => v.to_string(),
            Cell::S(s) => s.to_string(),
        }
    }
}

pub struct CsvWriter<W: Write> {
    out: W,
    columns: usize,
}

impl<W: Write> CsvWriter<W> {
    pub fn new(mut out: W, header: &[&str]) -> io::Result<Self> {
        writeln!(out, "{}", header.join(","))?;
        Ok(Self {
            out,
            columns: header.len(),
        })
    }

    pub fn row(&mut self, cells: &[Cell<'_>]) -> io::Result<()> {
        debug_assert_eq!(cells.len(), self.columns);
        let line: Vec<String> = cells.iter().map(Cell::render).collect();
        writeln!(self.out, "{}", line.join(","))
    }

    pub fn finish(mut self) -> io::Result<W> {
        self.out.flush()?;
        Ok(self.out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip() {
        for v in [0.1, -1.0 / 3.0, 1e-300, 6.02214076e23, 0.0] {
            let s = fmt_f64(v);
            assert_eq!(s.parse::<f64>().unwrap(), v);
        }
        assert_eq!(fmt_f64(1.0), "1.0000000000000000e0");
    }

    #[test]
    fn writer_emits_header_and_rows() {
        let mut w = CsvWriter::new(Vec::new(), &["t", "i", "x"]).unwrap();
        w.row(&[Cell::F(0.5), Cell::U(3), Cell::F(-2.0)]).unwrap();
        let text = String::from_utf8(w.finish().unwrap()).unwrap();
        assert_eq!(text, "t,i,x\n5.0000000000000000e-1,3,-2.0000000000000000e0\n");
    }
}
