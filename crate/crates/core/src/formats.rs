//! Text formats: problem files, reference points and CSV convergence logs.
//!
//! A problem file is a sequence of `[section]`s:
//!
//! ```text
//! [problem]
//! name = svm n=4 m=2 C=1
//! objective_offset = 0.0
//! row_offsets = 0 1 2 3 4
//! col_offsets = 0 1 2 3
//! [g]
//! half_square 1
//! zero 1
//! [fstar]
//! linear_over_box 1.0 | -1.0 | 0.0
//! [f]
//! hinge 1.0 1
//! [matrix]
//! %%MatrixMarket matrix coordinate real general
//! ...
//! ```
//!
//! Floats are written in shortest round-trip form, so write/read is lossless.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::blockops::{read_matrix_market_lines, write_matrix_market, BlockMatrix, BlockPartition};
use crate::error::{create_file, open_file, Error, Result};
use crate::problem::{PrimalDualPoint, PrimalLoss, SaddleProblem};
use crate::prox::ProxAtom;
use crate::solver::IterationRecord;

pub const PROBLEM_BANNER: &str = "# dspdhg problem v1";
pub const POINT_BANNER: &str = "# dspdhg point v1";

fn join(v: &[f64]) -> String {
    let mut s = String::new();
    for (k, x) in v.iter().enumerate() {
        if k > 0 {
            s.push(' ');
        }
        write!(s, "{x:?}").unwrap();
    }
    s
}

fn parse_floats(s: &str, line: usize) -> Result<Vec<f64>> {
    s.split_whitespace()
        .map(|t| {
            t.parse::<f64>()
                .map_err(|_| Error::parse(line, format!("bad number '{t}'")))
        })
        .collect()
}

fn parse_usizes(s: &str, line: usize) -> Result<Vec<usize>> {
    s.split_whitespace()
        .map(|t| {
            t.parse::<usize>()
                .map_err(|_| Error::parse(line, format!("bad integer '{t}'")))
        })
        .collect()
}

fn atom_line(a: &ProxAtom) -> String {
    match a {
        ProxAtom::Zero { dim } => format!("zero {dim}"),
        ProxAtom::HalfSquare { dim } => format!("half_square {dim}"),
        ProxAtom::DiagQuadratic { weights } => format!("diag_quadratic {}", join(weights)),
        ProxAtom::LinearOverBox { slope, lo, hi } => {
            format!("linear_over_box {} | {} | {}", join(slope), join(lo), join(hi))
        }
        ProxAtom::DiagQuadOverBox { weights, lo, hi } => {
            format!("diag_quad_over_box {} | {} | {}", join(weights), join(lo), join(hi))
        }
    }
}

fn parse_atom(s: &str, line: usize) -> Result<ProxAtom> {
    let (kind, rest) = s.split_once(' ').unwrap_or((s, ""));
    let dim = || -> Result<usize> {
        rest.trim()
            .parse()
            .map_err(|_| Error::parse(line, format!("bad dimension '{rest}'")))
    };
    let three = || -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
        let parts: Vec<&str> = rest.split('|').collect();
        if parts.len() != 3 {
            return Err(Error::parse(line, "expected three '|'-separated vectors"));
        }
        Ok((
            parse_floats(parts[0], line)?,
            parse_floats(parts[1], line)?,
            parse_floats(parts[2], line)?,
        ))
    };
    let wrap = |r: Result<ProxAtom>| r.map_err(|e| Error::parse(line, e.to_string()));
    match kind {
        "zero" => Ok(ProxAtom::zero(dim()?)),
        "half_square" => Ok(ProxAtom::half_square(dim()?)),
        "diag_quadratic" => wrap(ProxAtom::diag_quadratic(parse_floats(rest, line)?)),
        "linear_over_box" => {
            let (c, lo, hi) = three()?;
            wrap(ProxAtom::linear_over_box(c, lo, hi))
        }
        "diag_quad_over_box" => {
            let (w, lo, hi) = three()?;
            wrap(ProxAtom::diag_quad_over_box(w, lo, hi))
        }
        other => Err(Error::parse(line, format!("unknown atom '{other}'"))),
    }
}

fn loss_line(l: &PrimalLoss) -> String {
    match l {
        PrimalLoss::Hinge { penalty, dim } => format!("hinge {penalty:?} {dim}"),
        PrimalLoss::EqualTo { target } => format!("equal_to {}", join(target)),
    }
}

fn parse_loss(s: &str, line: usize) -> Result<PrimalLoss> {
    let (kind, rest) = s.split_once(' ').unwrap_or((s, ""));
    match kind {
        "hinge" => {
            let tok: Vec<&str> = rest.split_whitespace().collect();
            if tok.len() != 2 {
                return Err(Error::parse(line, "hinge expects 'penalty dim'"));
            }
            let penalty = parse_floats(tok[0], line)?[0];
            let dim = parse_usizes(tok[1], line)?[0];
            Ok(PrimalLoss::Hinge { penalty, dim })
        }
        "equal_to" => Ok(PrimalLoss::EqualTo {
            target: parse_floats(rest, line)?,
        }),
        other => Err(Error::parse(line, format!("unknown loss '{other}'"))),
    }
}

fn one_line(s: &str) -> String {
    s.replace(['\n', '\r'], " ")
}

pub fn write_problem<W: Write>(p: &SaddleProblem, mut w: W) -> Result<()> {
    let a = p.matrix();
    writeln!(w, "{PROBLEM_BANNER}")?;
    writeln!(w, "[problem]")?;
    writeln!(w, "name = {}", one_line(&p.name))?;
    writeln!(w, "source = {}", one_line(&p.source))?;
    writeln!(w, "objective_offset = {:?}", p.objective_offset())?;
    let offs = |b: &BlockPartition| {
        b.offsets()
            .iter()
            .map(usize::to_string)
            .collect::<Vec<_>>()
            .join(" ")
    };
    writeln!(w, "row_offsets = {}", offs(a.row_partition()))?;
    writeln!(w, "col_offsets = {}", offs(a.col_partition()))?;
    writeln!(w, "[g]")?;
    for atom in p.g_atoms() {
        writeln!(w, "{}", atom_line(atom))?;
    }
    writeln!(w, "[fstar]")?;
    for atom in p.fstar_atoms() {
        writeln!(w, "{}", atom_line(atom))?;
    }
    if let Some(losses) = p.primal_losses() {
        writeln!(w, "[f]")?;
        for l in losses {
            writeln!(w, "{}", loss_line(l))?;
        }
    }
    writeln!(w, "[matrix]")?;
    write_matrix_market(a, &mut w)?;
    Ok(())
}

pub fn read_problem<R: BufRead>(r: R) -> Result<SaddleProblem> {
    let mut section = String::new();
    let mut keys: BTreeMap<String, (usize, String)> = BTreeMap::new();
    let mut g = Vec::new();
    let mut fstar = Vec::new();
    let mut f: Option<Vec<PrimalLoss>> = None;
    let mut lines = r.lines().enumerate().map(|(k, l)| (k + 1, l));
    let mut matrix = None;
    while let Some((line_no, line)) = lines.next() {
        let line = line?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        if t.starts_with('[') && t.ends_with(']') {
            section = t[1..t.len() - 1].to_string();
            if section == "matrix" {
                matrix = Some((line_no, read_matrix_market_lines(&mut lines)?));
                break;
            }
            if section == "f" {
                f.get_or_insert_with(Vec::new);
            }
            continue;
        }
        match section.as_str() {
            "problem" => {
                let (k, v) = t
                    .split_once('=')
                    .ok_or_else(|| Error::parse(line_no, "expected 'key = value'"))?;
                keys.insert(k.trim().to_string(), (line_no, v.trim().to_string()));
            }
            "g" => g.push(parse_atom(t, line_no)?),
            "fstar" => fstar.push(parse_atom(t, line_no)?),
            "f" => f.get_or_insert_with(Vec::new).push(parse_loss(t, line_no)?),
            "" => return Err(Error::parse(line_no, "content before first section")),
            other => return Err(Error::parse(line_no, format!("unknown section [{other}]"))),
        }
    }
    let (mline, coo) = matrix.ok_or_else(|| Error::parse(0, "missing [matrix] section"))?;
    let partition = |key: &str| -> Result<BlockPartition> {
        let (line, v) = keys
            .get(key)
            .ok_or_else(|| Error::parse(0, format!("missing '{key}'")))?;
        BlockPartition::new(parse_usizes(v, *line)?).map_err(|e| Error::parse(*line, e.to_string()))
    };
    let rp = partition("row_offsets")?;
    let cp = partition("col_offsets")?;
    if rp.dim() != coo.rows || cp.dim() != coo.cols {
        return Err(Error::parse(
            mline,
            format!(
                "matrix is {}x{} but partitions cover {}x{}",
                coo.rows,
                coo.cols,
                rp.dim(),
                cp.dim()
            ),
        ));
    }
    let a = BlockMatrix::from_triplets(rp, cp, coo.entries)?;
    let offset = match keys.get("objective_offset") {
        Some((line, v)) => parse_floats(v, *line)?.first().copied().unwrap_or(0.0),
        None => 0.0,
    };
    let name = keys.get("name").map(|v| v.1.clone()).unwrap_or_default();
    let source = keys.get("source").map(|v| v.1.clone()).unwrap_or_default();
    Ok(SaddleProblem::new(a, g, fstar, f)?
        .with_objective_offset(offset)
        .with_name(name)
        .with_source(source))
}

pub fn save_problem(p: &SaddleProblem, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(create_file(path.as_ref())?);
    write_problem(p, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn load_problem(path: impl AsRef<Path>) -> Result<SaddleProblem> {
    let path = path.as_ref();
    let p = read_problem(BufReader::new(open_file(path)?))?;
    Ok(if p.source.is_empty() {
        p.with_source(path.display().to_string())
    } else {
        p
    })
}

/// A (near) saddle point with its objective, as produced by a reference solve.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferencePoint {
    pub point: PrimalDualPoint,
    pub objective: Option<f64>,
    pub relkkt: f64,
    /// whether the requested tolerance was reached
    pub certified: bool,
}

pub fn write_point<W: Write>(r: &ReferencePoint, mut w: W) -> Result<()> {
    writeln!(w, "{POINT_BANNER}")?;
    if let Some(obj) = r.objective {
        writeln!(w, "objective = {obj:?}")?;
    }
    writeln!(w, "relkkt = {:?}", r.relkkt)?;
    writeln!(w, "certified = {}", r.certified)?;
    writeln!(w, "x = {}", join(&r.point.x))?;
    writeln!(w, "y = {}", join(&r.point.y))?;
    Ok(())
}

pub fn read_point<R: Read>(r: R) -> Result<ReferencePoint> {
    let mut objective = None;
    let mut relkkt = f64::NAN;
    let mut certified = false;
    let mut x = None;
    let mut y = None;
    for (k, line) in BufReader::new(r).lines().enumerate() {
        let line_no = k + 1;
        let line = line?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let (key, v) = t
            .split_once('=')
            .ok_or_else(|| Error::parse(line_no, "expected 'key = value'"))?;
        let v = v.trim();
        match key.trim() {
            "objective" => objective = parse_floats(v, line_no)?.first().copied(),
            "relkkt" => relkkt = parse_floats(v, line_no)?.first().copied().unwrap_or(f64::NAN),
            "certified" => {
                certified = v
                    .parse()
                    .map_err(|_| Error::parse(line_no, format!("bad flag '{v}'")))?
            }
            "x" => x = Some(parse_floats(v, line_no)?),
            "y" => y = Some(parse_floats(v, line_no)?),
            other => return Err(Error::parse(line_no, format!("unknown key '{other}'"))),
        }
    }
    match (x, y) {
        (Some(x), Some(y)) => Ok(ReferencePoint {
            point: PrimalDualPoint::new(x, y),
            objective,
            relkkt,
            certified,
        }),
        _ => Err(Error::parse(0, "point file needs both 'x' and 'y'")),
    }
}

pub fn save_point(r: &ReferencePoint, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(create_file(path.as_ref())?);
    write_point(r, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn load_point(path: impl AsRef<Path>) -> Result<ReferencePoint> {
    read_point(open_file(path.as_ref())?)
}

/// Which optional columns a log carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct LogColumns {
    pub rel_error: bool,
    pub infeasibility: bool,
    pub smoothed_gap: bool,
}

impl LogColumns {
    pub fn of(records: &[IterationRecord]) -> Self {
        Self {
            rel_error: records.iter().any(|r| r.rel_error.is_some()),
            infeasibility: records.iter().any(|r| r.infeasibility.is_some()),
            smoothed_gap: records.iter().any(|r| r.smoothed_gap.is_some()),
        }
    }

    fn names(&self) -> Vec<&'static str> {
        let mut v = vec!["cost_units", "iteration", "epoch", "relkkt"];
        if self.rel_error {
            v.push("rel_error");
        }
        if self.infeasibility {
            v.push("infeasibility");
        }
        if self.smoothed_gap {
            v.push("smoothed_gap");
        }
        v.extend(["wall_seconds", "restart_flag"]);
        v
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:?}")).unwrap_or_default()
}

/// Writes `# key = value` header lines followed by the CSV table.
pub fn write_log<W: Write>(
    header: &[(String, String)],
    records: &[IterationRecord],
    mut w: W,
) -> Result<()> {
    for (k, v) in header {
        writeln!(w, "# {k} = {}", one_line(v))?;
    }
    let cols = LogColumns::of(records);
    let mut csv = csv::Writer::from_writer(w);
    csv.write_record(cols.names())?;
    for r in records {
        let mut row = vec![
            format!("{:?}", r.cost_units),
            r.iteration.to_string(),
            r.epoch.to_string(),
            format!("{:?}", r.relkkt),
        ];
        if cols.rel_error {
            row.push(opt(r.rel_error));
        }
        if cols.infeasibility {
            row.push(opt(r.infeasibility));
        }
        if cols.smoothed_gap {
            row.push(opt(r.smoothed_gap));
        }
        row.push(format!("{:?}", r.wall_seconds));
        row.push(r.restart_flag.to_string());
        csv.write_record(&row)?;
    }
    csv.flush()?;
    Ok(())
}

pub struct ParsedLog {
    pub header: Vec<(String, String)>,
    pub records: Vec<IterationRecord>,
}

pub fn read_log<R: Read>(r: R) -> Result<ParsedLog> {
    let mut text = String::new();
    BufReader::new(r).read_to_string(&mut text)?;
    let mut header = Vec::new();
    for line in text.lines().take_while(|l| l.starts_with('#')) {
        if let Some((k, v)) = line.trim_start_matches('#').split_once('=') {
            header.push((k.trim().to_string(), v.trim().to_string()));
        }
    }
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let names: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let col = |n: &str| names.iter().position(|c| c == n);
    let need = |n: &str| col(n).ok_or_else(|| Error::parse(0, format!("missing column '{n}'")));
    let (ci, ii, ei, ki, wi, fi) = (
        need("cost_units")?,
        need("iteration")?,
        need("epoch")?,
        need("relkkt")?,
        need("wall_seconds")?,
        need("restart_flag")?,
    );
    let (ri, ni, gi) = (col("rel_error"), col("infeasibility"), col("smoothed_gap"));
    let mut records = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(k + 2);
        let num = |i: usize| -> Result<f64> {
            rec[i]
                .parse()
                .map_err(|_| Error::parse(line, format!("bad number '{}'", &rec[i])))
        };
        let int = |i: usize| -> Result<u64> {
            rec[i]
                .parse()
                .map_err(|_| Error::parse(line, format!("bad integer '{}'", &rec[i])))
        };
        let optional = |i: Option<usize>| -> Result<Option<f64>> {
            match i {
                Some(i) if !rec[i].is_empty() => num(i).map(Some),
                _ => Ok(None),
            }
        };
        records.push(IterationRecord {
            cost_units: num(ci)?,
            iteration: int(ii)?,
            epoch: int(ei)?,
            relkkt: num(ki)?,
            rel_error: optional(ri)?,
            infeasibility: optional(ni)?,
            smoothed_gap: optional(gi)?,
            wall_seconds: num(wi)?,
            restart_flag: rec[fi]
                .parse()
                .map_err(|_| Error::parse(line, format!("bad flag '{}'", &rec[fi])))?,
        });
    }
    Ok(ParsedLog { header, records })
}
