//! File formats: dense CSV tables, the raw binary matrix format, chain trace
//! CSVs and `key = value` summaries. Numbers are written in Rust's shortest
//! round-trip representation, so write-read-write is byte-identical.

use std::fs;
use std::io::{self, BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::gibbs::ChainOutput;

/// Magic bytes opening a binary matrix file.
pub const MAGIC: &[u8; 4] = b"SSHK";
/// Flag bit: the last column of each row is the outcome.
pub const FLAG_OUTCOME: u32 = 1;
/// Flag bit: the outcome is a 0/1 indicator.
pub const FLAG_BINARY_OUTCOME: u32 = 2;

fn invalid(msg: impl Into<String>) -> io::Error {
    io::Error::new(io::ErrorKind::InvalidData, msg.into())
}

/// A header and rows of numbers.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let j = self.column_index(name)?;
        Some(self.rows.iter().map(|r| r[j]).collect())
    }
}

pub fn read_csv(path: &Path) -> io::Result<Table> {
    parse_csv(BufReader::new(fs::File::open(path)?))
}

pub fn parse_csv<R: BufRead>(reader: R) -> io::Result<Table> {
    let mut lines = reader.lines();
    let header: Vec<String> = match lines.next() {
        Some(line) => line?.split(',').map(|s| s.trim().to_string()).collect(),
        None => return Err(invalid("empty CSV file")),
    };
    let mut rows = Vec::new();
    for (k, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let row = line
            .split(',')
            .map(|s| parse_cell(s.trim()))
            .collect::<Option<Vec<f64>>>()
            .ok_or_else(|| invalid(format!("unparsable number on data line {}", k + 1)))?;
        if row.len() != header.len() {
            return Err(invalid(format!(
                "data line {} has {} fields, header has {}",
                k + 1,
                row.len(),
                header.len()
            )));
        }
        rows.push(row);
    }
    Ok(Table { header, rows })
}

fn parse_cell(s: &str) -> Option<f64> {
    match s {
        "true" => Some(1.0),
        "false" => Some(0.0),
        _ => s.parse().ok(),
    }
}

pub fn write_csv(path: &Path, table: &Table) -> io::Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    writeln!(w, "{}", table.header.join(","))?;
    for row in &table.rows {
        let mut first = true;
        for v in row {
            if !first {
                w.write_all(b",")?;
            }
            write!(w, "{v}")?;
            first = false;
        }
        w.write_all(b"\n")?;
    }
    w.flush()
}

/// Covariates with an optional outcome column, as stored in a binary file.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryMatrix {
    pub x: DMatrix<f64>,
    pub outcome: Option<DVector<f64>>,
    pub binary_outcome: bool,
}

pub fn write_binary(path: &Path, m: &BinaryMatrix) -> io::Result<()> {
    let (n, p) = m.x.shape();
    let n32 = u32::try_from(n).map_err(|_| invalid("too many rows"))?;
    let p32 = u32::try_from(p).map_err(|_| invalid("too many columns"))?;
    let mut flags = 0;
    if m.outcome.is_some() {
        flags |= FLAG_OUTCOME;
        if m.binary_outcome {
            flags |= FLAG_BINARY_OUTCOME;
        }
    }
    let mut w = BufWriter::new(fs::File::create(path)?);
    w.write_all(MAGIC)?;
    for v in [n32, p32, flags] {
        w.write_all(&v.to_le_bytes())?;
    }
    for i in 0..n {
        for j in 0..p {
            w.write_all(&m.x[(i, j)].to_le_bytes())?;
        }
        if let Some(y) = &m.outcome {
            w.write_all(&y[i].to_le_bytes())?;
        }
    }
    w.flush()
}

pub fn read_binary(path: &Path) -> io::Result<BinaryMatrix> {
    let mut r = BufReader::new(fs::File::open(path)?);
    let mut header = [0u8; 16];
    r.read_exact(&mut header)?;
    if &header[..4] != MAGIC {
        return Err(invalid("missing SSHK magic"));
    }
    let word = |k: usize| u32::from_le_bytes(header[4 * k..4 * k + 4].try_into().unwrap());
    let (n, p, flags) = (word(1) as usize, word(2) as usize, word(3));
    if flags & !(FLAG_OUTCOME | FLAG_BINARY_OUTCOME) != 0 {
        return Err(invalid(format!("unknown flags {flags:#x}")));
    }
    let has_outcome = flags & FLAG_OUTCOME != 0;
    let width = p + usize::from(has_outcome);
    let mut x = DMatrix::zeros(n, p);
    let mut y = DVector::zeros(if has_outcome { n } else { 0 });
    let mut buf = [0u8; 8];
    for i in 0..n {
        for j in 0..width {
            r.read_exact(&mut buf)?;
            let v = f64::from_le_bytes(buf);
            if j < p {
                x[(i, j)] = v;
            } else {
                y[i] = v;
            }
        }
    }
    if r.read(&mut buf)? != 0 {
        return Err(invalid("trailing bytes after matrix"));
    }
    Ok(BinaryMatrix {
        x,
        outcome: has_outcome.then_some(y),
        binary_outcome: flags & FLAG_BINARY_OUTCOME != 0,
    })
}

/// True when the file starts with the binary magic.
pub fn is_binary(path: &Path) -> io::Result<bool> {
    let mut f = fs::File::open(path)?;
    let mut magic = [0u8; 4];
    match f.read_exact(&mut magic) {
        Ok(()) => Ok(&magic == MAGIC),
        Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => Ok(false),
        Err(e) => Err(e),
    }
}

/// Trace table of one chain: `iteration, tau, log_tau`, then `sigma_sq` and
/// `accept` when recorded, then `beta_<j>` columns when recorded.
pub fn trace_table(out: &ChainOutput) -> Table {
    let d = &out.draws;
    let n = d.tau.len();
    let mut header: Vec<String> = vec!["iteration".into(), "tau".into(), "log_tau".into()];
    let has_sigma = d.sigma_sq.len() == n && n > 0;
    let has_accept = d.accept.len() == n && n > 0;
    if has_sigma {
        header.push("sigma_sq".into());
    }
    if has_accept {
        header.push("accept".into());
    }
    let width = if n > 0 { d.beta.len() / n } else { 0 };
    header.extend((0..width).map(|j| format!("beta_{j}")));
    // Linear traces also carry the coefficients on the response scale.
    let scaled = has_sigma && width > 0;
    if scaled {
        header.extend((0..width).map(|j| format!("beta_tilde_{j}")));
    }
    let rows = (0..n)
        .map(|t| {
            let mut row = vec![t as f64, d.tau[t], d.tau[t].ln()];
            if has_sigma {
                row.push(d.sigma_sq[t]);
            }
            if has_accept {
                row.push(f64::from(u8::from(d.accept[t])));
            }
            row.extend_from_slice(d.beta_row(t));
            if scaled {
                let sigma = d.sigma_sq[t].sqrt();
                row.extend(d.beta_row(t).iter().map(|b| sigma * b));
            }
            row
        })
        .collect();
    Table { header, rows }
}

/// Ordered `key = value` pairs.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Summary {
    pub entries: Vec<(String, String)>,
}

impl Summary {
    pub fn push(&mut self, key: impl Into<String>, value: impl ToString) {
        self.entries.push((key.into(), value.to_string()));
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn render(&self) -> String {
        self.entries
            .iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }

    pub fn parse(text: &str) -> io::Result<Self> {
        let mut entries = Vec::new();
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let (k, v) = line
                .split_once(" = ")
                .ok_or_else(|| invalid(format!("not a key = value line: {line}")))?;
            entries.push((k.to_string(), v.to_string()));
        }
        Ok(Self { entries })
    }

    pub fn write(&self, path: &Path) -> io::Result<()> {
        fs::write(path, self.render())
    }

    pub fn read(path: &Path) -> io::Result<Self> {
        Self::parse(&fs::read_to_string(path)?)
    }
}
