//! Field dumps: a text header terminated by `end`, then little-endian f64 pairs (re, im).
//!
//! Planar payload order is component, side (plus then minus), then `t · normal_points + j`.
//! Polar payload order is side, ring, angle with zero imaginary parts.

use std::collections::BTreeMap;
use std::io::{BufRead, Read, Write};

use num_complex::Complex;

use crate::error::{Error, Result};
use crate::fd_oracle::{PolarField, PolarGrid};
use crate::fields::{Side, TwoPhaseGrid, TwoPhaseScalarField, TwoPhaseVectorField};
use crate::scalar::Real;

pub const MAGIC: &str = "TWOPHASE-FIELD 1";

/// Which trace planes a planar dump carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Both,
    Plus,
    Minus,
}

impl Phase {
    pub fn tag(self) -> &'static str {
        match self {
            Phase::Both => "both",
            Phase::Plus => "plus",
            Phase::Minus => "minus",
        }
    }

    fn parse(s: &str) -> Result<Self> {
        match s {
            "both" => Ok(Phase::Both),
            "plus" => Ok(Phase::Plus),
            "minus" => Ok(Phase::Minus),
            _ => Err(Error::InvalidDump(format!("unknown phase tag {s:?}"))),
        }
    }

    fn sides(self) -> &'static [Side] {
        match self {
            Phase::Both => &Side::BOTH,
            Phase::Plus => &[Side::Plus],
            Phase::Minus => &[Side::Minus],
        }
    }
}

fn g17(x: f64) -> String {
    format!("{x:.16e}")
}

fn header_map<R: BufRead>(r: &mut R) -> Result<BTreeMap<String, String>> {
    let mut line = String::new();
    r.read_line(&mut line)?;
    if line.trim_end() != MAGIC {
        return Err(Error::InvalidDump(format!("bad magic {:?}", line.trim_end())));
    }
    let mut map = BTreeMap::new();
    loop {
        line.clear();
        if r.read_line(&mut line)? == 0 {
            return Err(Error::InvalidDump("header not terminated".into()));
        }
        let l = line.trim_end();
        if l == "end" {
            return Ok(map);
        }
        let (k, v) = l.split_once(' ').ok_or_else(|| Error::InvalidDump(format!("bad header line {l:?}")))?;
        map.insert(k.to_string(), v.trim().to_string());
    }
}

fn key<'a>(m: &'a BTreeMap<String, String>, k: &str) -> Result<&'a str> {
    m.get(k).map(|s| s.as_str()).ok_or_else(|| Error::InvalidDump(format!("missing header key {k}")))
}

fn num<V: std::str::FromStr>(m: &BTreeMap<String, String>, k: &str) -> Result<V> {
    key(m, k)?.parse().map_err(|_| Error::InvalidDump(format!("bad value for {k}")))
}

fn read_payload<R: Read>(r: &mut R, count: usize) -> Result<Vec<Complex<f64>>> {
    let mut buf = vec![0u8; count * 16];
    r.read_exact(&mut buf).map_err(|_| Error::InvalidDump(format!("payload shorter than {count} values")))?;
    let mut rest = Vec::new();
    r.read_to_end(&mut rest)?;
    if !rest.is_empty() {
        return Err(Error::InvalidDump(format!("{} trailing bytes", rest.len())));
    }
    Ok(buf
        .chunks_exact(16)
        .map(|c| {
            let re = f64::from_le_bytes(c[..8].try_into().unwrap());
            let im = f64::from_le_bytes(c[8..].try_into().unwrap());
            Complex::new(re, im)
        })
        .collect())
}

fn write_values<W: Write, T: Real>(w: &mut W, vals: &[Complex<T>]) -> Result<()> {
    for v in vals {
        w.write_all(&v.re.as_f64().to_le_bytes())?;
        w.write_all(&v.im.as_f64().to_le_bytes())?;
    }
    Ok(())
}

fn write_planar_header<W: Write, T: Real>(w: &mut W, g: &TwoPhaseGrid<T>, phase: Phase, comps: usize) -> Result<()> {
    writeln!(w, "{MAGIC}")?;
    writeln!(w, "layout planar")?;
    writeln!(w, "dim {}", g.dim)?;
    writeln!(w, "sizes {} {}", g.tangential_size, g.normal_points)?;
    writeln!(w, "period {}", g17(g.tangential_period.as_f64()))?;
    writeln!(w, "half_extent {}", g17(g.normal_half_extent.as_f64()))?;
    writeln!(w, "phase {}", phase.tag())?;
    writeln!(w, "components {comps}")?;
    writeln!(w, "end")?;
    Ok(())
}

pub fn write_vector<W: Write, T: Real>(w: &mut W, f: &TwoPhaseVectorField<T>) -> Result<()> {
    write_planar_header(w, &f.grid, Phase::Both, f.comps.len())?;
    for c in &f.comps {
        for side in Side::BOTH {
            write_values(w, c.side(side))?;
        }
    }
    Ok(())
}

pub fn write_scalar<W: Write, T: Real>(w: &mut W, f: &TwoPhaseScalarField<T>) -> Result<()> {
    write_planar_header(w, &f.grid, Phase::Both, 1)?;
    for side in Side::BOTH {
        write_values(w, f.side(side))?;
    }
    Ok(())
}

/// One side of a field, e.g. a whole-space potential.
pub fn write_one_sided<W: Write, T: Real>(
    w: &mut W,
    g: &TwoPhaseGrid<T>,
    side: Side,
    values: &[Complex<T>],
) -> Result<()> {
    let phase = if side == Side::Plus { Phase::Plus } else { Phase::Minus };
    write_planar_header(w, g, phase, 1)?;
    write_values(w, values)
}

/// Planar dump contents; missing sides of one-sided dumps are zero.
pub fn read_vector<R: BufRead, T: Real>(r: &mut R) -> Result<(TwoPhaseVectorField<T>, Phase)> {
    let m = header_map(r)?;
    if key(&m, "layout")? != "planar" {
        return Err(Error::InvalidDump("expected a planar layout".into()));
    }
    let dim: usize = num(&m, "dim")?;
    let sizes: Vec<usize> = key(&m, "sizes")?
        .split_whitespace()
        .map(|s| s.parse().map_err(|_| Error::InvalidDump("bad sizes".into())))
        .collect::<Result<_>>()?;
    if sizes.len() != 2 {
        return Err(Error::InvalidDump("sizes needs two entries".into()));
    }
    let period: f64 = num(&m, "period")?;
    let half: f64 = num(&m, "half_extent")?;
    let phase = Phase::parse(key(&m, "phase")?)?;
    let comps: usize = num(&m, "components")?;
    let grid = TwoPhaseGrid::new(dim, sizes[0], T::lit(period), T::lit(half), sizes[1])
        .map_err(|e| Error::InvalidDump(e.to_string()))?;
    let n = grid.len();
    let vals = read_payload(r, comps * phase.sides().len() * n)?;
    let mut field = TwoPhaseVectorField::zeros(grid);
    field.comps.resize(comps, TwoPhaseScalarField::zeros(grid));
    let mut it = vals.into_iter();
    for c in 0..comps {
        for side in phase.sides() {
            let dst = field.comps[c].side_mut(*side);
            for d in dst.iter_mut() {
                let v = it.next().unwrap();
                *d = Complex::new(T::lit(v.re), T::lit(v.im));
            }
        }
    }
    Ok((field, phase))
}

pub fn read_scalar<R: BufRead, T: Real>(r: &mut R) -> Result<TwoPhaseScalarField<T>> {
    let (f, _) = read_vector::<R, T>(r)?;
    if f.comps.len() != 1 {
        return Err(Error::InvalidDump(format!("expected one component, found {}", f.comps.len())));
    }
    Ok(f.comps.into_iter().next().unwrap())
}

pub fn write_polar<W: Write, T: Real>(w: &mut W, f: &PolarField<T>) -> Result<()> {
    let g = &f.grid;
    writeln!(w, "{MAGIC}")?;
    writeln!(w, "layout polar")?;
    writeln!(w, "dim 2")?;
    writeln!(w, "sizes {} {} {}", g.interface, g.outer, g.angles)?;
    writeln!(w, "spacing {}", g17(g.spacing.as_f64()))?;
    writeln!(w, "phase both")?;
    writeln!(w, "components 1")?;
    writeln!(w, "end")?;
    for side in Side::BOTH {
        let vals: Vec<Complex<T>> = f.side(side).iter().map(|v| Complex::new(*v, T::zero())).collect();
        write_values(w, &vals)?;
    }
    Ok(())
}

pub fn read_polar<R: BufRead, T: Real>(r: &mut R) -> Result<PolarField<T>> {
    let m = header_map(r)?;
    if key(&m, "layout")? != "polar" {
        return Err(Error::InvalidDump("expected a polar layout".into()));
    }
    let sizes: Vec<usize> = key(&m, "sizes")?
        .split_whitespace()
        .map(|s| s.parse().map_err(|_| Error::InvalidDump("bad sizes".into())))
        .collect::<Result<_>>()?;
    if sizes.len() != 3 {
        return Err(Error::InvalidDump("sizes needs three entries".into()));
    }
    let h: f64 = num(&m, "spacing")?;
    let grid =
        PolarGrid::new(T::lit(h), sizes[0], sizes[1], sizes[2]).map_err(|e| Error::InvalidDump(e.to_string()))?;
    let mut out = PolarField::zeros(grid);
    let n = grid.side_len(Side::Plus) + grid.side_len(Side::Minus);
    let vals = read_payload(r, n)?;
    let mut it = vals.into_iter();
    for side in Side::BOTH {
        for d in out.side_mut(side).iter_mut() {
            *d = T::lit(it.next().unwrap().re);
        }
    }
    Ok(out)
}

/// Ordered `key=value` report with 17 significant digits for floats.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Report {
    pub entries: Vec<(String, String)>,
}

impl Report {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn float(&mut self, k: &str, v: f64) -> &mut Self {
        self.entries.push((k.to_string(), g17(v)));
        self
    }

    pub fn int(&mut self, k: &str, v: usize) -> &mut Self {
        self.entries.push((k.to_string(), v.to_string()));
        self
    }

    pub fn text(&mut self, k: &str, v: &str) -> &mut Self {
        self.entries.push((k.to_string(), v.to_string()));
        self
    }

    pub fn flag(&mut self, k: &str, v: bool) -> &mut Self {
        self.text(k, if v { "true" } else { "false" })
    }

    pub fn get(&self, k: &str) -> Option<&str> {
        self.entries.iter().find(|(a, _)| a == k).map(|(_, b)| b.as_str())
    }

    pub fn render(&self) -> String {
        self.entries.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = Vec::new();
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let (k, v) = line.split_once('=').ok_or_else(|| Error::InvalidDump(format!("bad report line {line:?}")))?;
            entries.push((k.to_string(), v.to_string()));
        }
        Ok(Self { entries })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn planar_roundtrip_is_bitwise() {
        let g = TwoPhaseGrid::<f64>::planar(4, 2.0, 12).unwrap();
        let f = TwoPhaseVectorField::from_fn(g, |s, x| {
            vec![Complex::new(x[0], s.sign::<f64>() * x[1]), Complex::new(0.1, -1.0 / 3.0)]
        });
        let mut buf = Vec::new();
        write_vector(&mut buf, &f).unwrap();
        let (back, phase) = read_vector::<_, f64>(&mut buf.as_slice()).unwrap();
        assert_eq!(phase, Phase::Both);
        assert_eq!(back.comps, f.comps);
        let mut again = Vec::new();
        write_vector(&mut again, &back).unwrap();
        assert_eq!(buf, again);
    }

    #[test]
    fn header_layout() {
        let g = TwoPhaseGrid::<f64>::planar(4, 2.0, 12).unwrap();
        let mut buf = Vec::new();
        write_scalar(&mut buf, &TwoPhaseScalarField::zeros(g)).unwrap();
        let text = String::from_utf8_lossy(&buf[..buf.len() - 2 * 48 * 16]).to_string();
        assert!(text.starts_with("TWOPHASE-FIELD 1\nlayout planar\ndim 2\nsizes 4 12\n"));
        assert!(text.ends_with("components 1\nend\n"));
        assert_eq!(buf.len() - text.len(), 2 * 48 * 16);
    }

    #[test]
    fn polar_roundtrip_and_truncation() {
        let g = PolarGrid::new(0.25, 3, 8, 8).unwrap();
        let f = PolarField::from_fn(g, |_, r: f64, th: f64| r * th.cos());
        let mut buf = Vec::new();
        write_polar(&mut buf, &f).unwrap();
        let back: PolarField<f64> = read_polar(&mut buf.as_slice()).unwrap();
        assert_eq!(back, f);
        buf.truncate(buf.len() - 3);
        assert!(matches!(read_polar::<_, f64>(&mut buf.as_slice()), Err(Error::InvalidDump(_))));
    }

    #[test]
    fn report_formatting() {
        let mut r = Report::new();
        r.float("x", 0.1).int("n", 3).flag("ok", true);
        assert_eq!(r.render(), "x=1.0000000000000001e-1\nn=3\nok=true\n");
        assert_eq!(Report::parse(&r.render()).unwrap(), r);
        assert!(matches!(read_scalar::<_, f64>(&mut "nope\n".as_bytes()), Err(Error::InvalidDump(_))));
    }
}
