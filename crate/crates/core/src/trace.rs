//! CSV trace files: export, import, foreign-data mapping and comparison.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::hybrid::JumpEvent;
use crate::scenario::{PhaseTag, TrajectorySample};

/// Exact header of a trace file.
pub const HEADER: [&str; 13] = [
    "t", "theta", "gamma", "dtheta", "dgamma", "u", "gamma_d", "T", "T_radial", "V", "E", "W_cum", "phase",
];

/// Numeric channels, in column order.
pub const CHANNELS: [&str; 12] = [
    "t", "theta", "gamma", "dtheta", "dgamma", "u", "gamma_d", "T", "T_radial", "V", "E", "W_cum",
];

const JUMP_HEADER: [&str; 9] = [
    "t", "kind", "theta", "gamma_before", "gamma_after", "dtheta_before", "dtheta_after", "dT", "dV",
];

/// One row of a trace file.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TraceRow {
    pub values: [f64; 12],
    pub phase: PhaseTag,
}

impl TraceRow {
    pub fn t(&self) -> f64 {
        self.values[0]
    }

    pub fn theta(&self) -> f64 {
        self.values[1]
    }
}

impl From<&TrajectorySample> for TraceRow {
    fn from(s: &TrajectorySample) -> Self {
        TraceRow {
            values: [
                s.t,
                s.state.theta,
                s.state.gamma,
                s.state.dtheta,
                s.state.dgamma,
                s.u,
                s.gamma_d,
                s.energy.kinetic,
                s.energy.kinetic_radial,
                s.energy.potential,
                s.energy.total,
                s.work,
            ],
            phase: s.phase,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Trace {
    pub rows: Vec<TraceRow>,
}

/// Column index of a numeric channel.
pub fn channel_index(name: &str) -> Option<usize> {
    CHANNELS.iter().position(|c| *c == name)
}

fn fmt(v: f64) -> String {
    format!("{v:?}")
}

fn parse_f64(field: &str, line: u64, column: &str) -> Result<f64> {
    f64::from_str(field.trim())
        .map_err(|_| Error::Trace(format!("line {line}: column `{column}` is not a number: `{field}`")))
}

impl Trace {
    pub fn from_samples(samples: &[TrajectorySample]) -> Self {
        Trace {
            rows: samples.iter().map(TraceRow::from).collect(),
        }
    }

    pub fn write<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w);
        let err = |e: csv::Error| Error::Trace(e.to_string());
        out.write_record(HEADER).map_err(err)?;
        let mut record: Vec<String> = Vec::with_capacity(HEADER.len());
        for row in &self.rows {
            record.clear();
            record.extend(row.values.iter().map(|v| fmt(*v)));
            record.push(row.phase.as_str().to_string());
            out.write_record(&record).map_err(err)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write(&mut buf).expect("writing to memory cannot fail");
        String::from_utf8(buf).expect("trace output is ASCII")
    }

    pub fn write_file(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.write(std::io::BufWriter::new(file))
    }

    /// Parses a trace, checking the header and time monotonicity.
    pub fn read<R: Read>(r: R) -> Result<Self> {
        let mut input = csv::ReaderBuilder::new().has_headers(true).from_reader(r);
        let header = input.headers().map_err(|e| Error::Trace(e.to_string()))?.clone();
        if header.iter().ne(HEADER.iter().copied()) {
            return Err(Error::Trace(format!(
                "header mismatch: expected `{}`, found `{}`",
                HEADER.join(","),
                header.iter().collect::<Vec<_>>().join(",")
            )));
        }
        let mut rows: Vec<TraceRow> = Vec::new();
        for record in input.records() {
            let record = record.map_err(|e| Error::Trace(e.to_string()))?;
            let line = record.position().map_or(0, |p| p.line());
            let mut values = [0.0; 12];
            for (i, v) in values.iter_mut().enumerate() {
                *v = parse_f64(&record[i], line, CHANNELS[i])?;
            }
            let phase = PhaseTag::from_str(&record[12]).map_err(|e| Error::Trace(format!("line {line}: {e}")))?;
            if let Some(prev) = rows.last() {
                if values[0].partial_cmp(&prev.t()) != Some(std::cmp::Ordering::Greater) {
                    return Err(Error::NonMonotonicTime { index: rows.len() });
                }
            }
            rows.push(TraceRow { values, phase });
        }
        Ok(Trace { rows })
    }

    pub fn read_file(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)
            .map_err(|e| Error::Trace(format!("cannot open `{}`: {e}", path.display())))?;
        Self::read(std::io::BufReader::new(file))
    }

    pub fn span(&self) -> Option<(f64, f64)> {
        Some((self.rows.first()?.t(), self.rows.last()?.t()))
    }

    fn mean_spacing(&self) -> f64 {
        match self.span() {
            Some((a, b)) if self.rows.len() > 1 => (b - a) / (self.rows.len() - 1) as f64,
            _ => f64::INFINITY,
        }
    }

    /// Linear interpolation of a channel at time `t` inside the span.
    pub fn interpolate(&self, channel: usize, t: f64) -> f64 {
        let i = self.rows.partition_point(|r| r.t() <= t);
        if i == 0 {
            return self.rows[0].values[channel];
        }
        if i == self.rows.len() {
            return self.rows[i - 1].values[channel];
        }
        let (a, b) = (&self.rows[i - 1], &self.rows[i]);
        if t == a.t() {
            return a.values[channel];
        }
        let s = (t - a.t()) / (b.t() - a.t());
        a.values[channel] + s * (b.values[channel] - a.values[channel])
    }

    /// First time |θ| reaches π, interpolated between samples.
    pub fn pi_crossing(&self) -> Option<f64> {
        let pi = std::f64::consts::PI;
        let first = self.rows.first()?;
        if first.theta().abs() >= pi {
            return Some(first.t());
        }
        self.rows.windows(2).find_map(|w| {
            let (a, b) = (w[0].theta().abs(), w[1].theta().abs());
            (b >= pi).then(|| w[0].t() + (pi - a) / (b - a) * (w[1].t() - w[0].t()))
        })
    }
}

/// Result of comparing two traces.
#[derive(Clone, Debug, PartialEq)]
pub struct Comparison {
    /// Overlapping time span.
    pub overlap: (f64, f64),
    /// RMSE per requested channel.
    pub rmse: Vec<(String, f64)>,
    /// π-crossing time of the second trace minus that of the first.
    pub pi_cross_delta: Option<f64>,
    /// Final |θ| of the second trace minus that of the first.
    pub terminal_angle_delta: f64,
}

impl Comparison {
    pub fn within(&self, tol: f64) -> bool {
        self.rmse.iter().all(|(_, e)| *e <= tol)
    }

    pub fn report(&self) -> String {
        let mut s = format!("overlap        = [{}, {}] s\n", self.overlap.0, self.overlap.1);
        for (name, e) in &self.rmse {
            s.push_str(&format!("rmse {name:<9} = {e:e}\n"));
        }
        match self.pi_cross_delta {
            Some(d) => s.push_str(&format!("pi_cross_delta = {d:.4} s\n")),
            None => s.push_str("pi_cross_delta = n/a\n"),
        }
        s.push_str(&format!("terminal_delta = {:.6} rad\n", self.terminal_angle_delta));
        s
    }
}

/// Compares the requested channels of two traces over their common span,
/// resampling both onto the coarser of the two grids.
pub fn compare(a: &Trace, b: &Trace, channels: &[&str]) -> Result<Comparison> {
    let (Some((a0, a1)), Some((b0, b1))) = (a.span(), b.span()) else {
        return Err(Error::Trace("empty trace".into()));
    };
    let (lo, hi) = (a0.max(b0), a1.min(b1));
    if lo > hi {
        return Err(Error::Trace(format!("traces do not overlap: [{a0}, {a1}] vs [{b0}, {b1}]")));
    }
    let indices = channels
        .iter()
        .map(|c| channel_index(c).ok_or_else(|| Error::Trace(format!("unknown channel `{c}`"))))
        .collect::<Result<Vec<_>>>()?;
    let coarse = if a.mean_spacing() >= b.mean_spacing() { a } else { b };
    let grid: Vec<f64> = coarse
        .rows
        .iter()
        .map(TraceRow::t)
        .filter(|t| (lo..=hi).contains(t))
        .collect();
    let grid = if grid.is_empty() { vec![lo] } else { grid };
    let rmse = channels
        .iter()
        .zip(&indices)
        .map(|(name, &ch)| {
            let sq: f64 = grid
                .iter()
                .map(|&t| {
                    let d = a.interpolate(ch, t) - b.interpolate(ch, t);
                    // Channels that are NaN in both traces agree.
                    if d.is_nan() && a.interpolate(ch, t).is_nan() && b.interpolate(ch, t).is_nan() {
                        0.0
                    } else {
                        d * d
                    }
                })
                .sum();
            (name.to_string(), (sq / grid.len() as f64).sqrt())
        })
        .collect();
    let pi_cross_delta = match (a.pi_crossing(), b.pi_crossing()) {
        (Some(x), Some(y)) => Some(y - x),
        _ => None,
    };
    let terminal_angle_delta = b.rows.last().unwrap().theta().abs() - a.rows.last().unwrap().theta().abs();
    Ok(Comparison {
        overlap: (lo, hi),
        rmse,
        pi_cross_delta,
        terminal_angle_delta,
    })
}

/// Maps the columns of a foreign CSV (for instance measured data) onto trace
/// channels.
#[derive(Clone, Debug, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ColumnMapping {
    /// Trace channel to source column name.
    pub columns: BTreeMap<String, String>,
    /// Optional multiplier per trace channel, applied after reading.
    #[serde(default)]
    pub scale: BTreeMap<String, f64>,
    /// Optional offset per trace channel, added after scaling.
    #[serde(default)]
    pub offset: BTreeMap<String, f64>,
}

impl ColumnMapping {
    pub fn parse(text: &str) -> Result<Self> {
        let m: ColumnMapping = toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))?;
        for key in m.columns.keys().chain(m.scale.keys()).chain(m.offset.keys()) {
            if channel_index(key).is_none() {
                return Err(Error::invalid(key, "not a trace channel"));
            }
        }
        if !m.columns.contains_key("t") {
            return Err(Error::invalid("columns.t", "time column must be mapped"));
        }
        Ok(m)
    }
}

/// Converts a foreign CSV into a trace. Unmapped channels are NaN; the phase
/// latches to rotation once |θ| reaches π.
pub fn import<R: Read>(r: R, mapping: &ColumnMapping) -> Result<Trace> {
    let mut input = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(r);
    let header = input.headers().map_err(|e| Error::Trace(e.to_string()))?.clone();
    let mut sources: Vec<(usize, usize, f64, f64)> = Vec::new();
    for (channel, column) in &mapping.columns {
        let src = header
            .iter()
            .position(|h| h == column)
            .ok_or_else(|| Error::Trace(format!("source column `{column}` not found")))?;
        let ch = channel_index(channel).expect("validated mapping");
        let scale = mapping.scale.get(channel).copied().unwrap_or(1.0);
        let offset = mapping.offset.get(channel).copied().unwrap_or(0.0);
        sources.push((ch, src, scale, offset));
    }
    let mut rows: Vec<TraceRow> = Vec::new();
    let mut phase = PhaseTag::Swing;
    for record in input.records() {
        let record = record.map_err(|e| Error::Trace(e.to_string()))?;
        let line = record.position().map_or(0, |p| p.line());
        let mut values = [f64::NAN; 12];
        for &(ch, src, scale, offset) in &sources {
            let field = record
                .get(src)
                .ok_or_else(|| Error::Trace(format!("line {line}: missing column {src}")))?;
            values[ch] = parse_f64(field, line, CHANNELS[ch])? * scale + offset;
        }
        if values[1].abs() >= std::f64::consts::PI {
            phase = PhaseTag::Rotation;
        }
        if let Some(prev) = rows.last() {
            if values[0].partial_cmp(&prev.t()) != Some(std::cmp::Ordering::Greater) {
                return Err(Error::NonMonotonicTime { index: rows.len() });
            }
        }
        rows.push(TraceRow { values, phase });
    }
    Ok(Trace { rows })
}

/// Writes the jump log as CSV.
pub fn write_jumps<W: Write>(jumps: &[JumpEvent], w: W) -> Result<()> {
    let mut out = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w);
    let err = |e: csv::Error| Error::Trace(e.to_string());
    out.write_record(JUMP_HEADER).map_err(err)?;
    for j in jumps {
        out.write_record([
            fmt(j.t),
            j.kind.as_str().to_string(),
            fmt(j.before.theta),
            fmt(j.before.gamma),
            fmt(j.after.gamma),
            fmt(j.before.dtheta),
            fmt(j.after.dtheta),
            fmt(j.delta.kinetic),
            fmt(j.delta.potential),
        ])
        .map_err(err)?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(t: f64, theta: f64) -> TraceRow {
        let mut values = [0.0; 12];
        values[0] = t;
        values[1] = theta;
        values[6] = f64::NAN;
        TraceRow {
            values,
            phase: if theta.abs() >= std::f64::consts::PI { PhaseTag::Rotation } else { PhaseTag::Swing },
        }
    }

    fn ramp(dt: f64, n: usize) -> Trace {
        Trace {
            rows: (0..n).map(|k| row(k as f64 * dt, k as f64 * dt)).collect(),
        }
    }

    #[test]
    fn header_is_exact() {
        let text = ramp(0.5, 3).to_csv_string();
        assert!(text.starts_with("t,theta,gamma,dtheta,dgamma,u,gamma_d,T,T_radial,V,E,W_cum,phase\n"));
        assert!(!text.contains('\r'));
        let bad = text.replacen("W_cum", "W", 1);
        assert!(matches!(Trace::read(bad.as_bytes()), Err(Error::Trace(_))));
    }

    #[test]
    fn roundtrip_is_exact() {
        let mut t = ramp(0.1, 5);
        t.rows[2].values[3] = 1.0 / 3.0;
        t.rows[3].values[4] = -2.5e-300;
        t.rows[4].values[5] = 6.02e23;
        let back = Trace::read(t.to_csv_string().as_bytes()).unwrap();
        assert_eq!(back.rows.len(), t.rows.len());
        for (a, b) in t.rows.iter().zip(&back.rows) {
            for (x, y) in a.values.iter().zip(&b.values) {
                assert!(x.to_bits() == y.to_bits() || (x.is_nan() && y.is_nan()));
            }
            assert_eq!(a.phase, b.phase);
        }
    }

    #[test]
    fn rejects_non_monotonic_time() {
        let mut t = ramp(0.1, 4);
        t.rows[2].values[0] = 0.1;
        assert!(matches!(
            Trace::read(t.to_csv_string().as_bytes()),
            Err(Error::NonMonotonicTime { index: 2 })
        ));
    }

    #[test]
    fn self_comparison_is_zero() {
        let t = ramp(0.01, 50);
        let c = compare(&t, &t, &["theta", "gamma_d", "E"]).unwrap();
        assert!(c.rmse.iter().all(|(_, e)| *e == 0.0));
        assert_eq!(c.pi_cross_delta, None);
        assert!(c.within(0.0));
    }

    #[test]
    fn comparison_uses_overlap_and_coarse_grid() {
        let fine = ramp(0.01, 501);
        let mut coarse = ramp(0.1, 31);
        for r in &mut coarse.rows {
            r.values[1] += 0.5;
        }
        let c = compare(&fine, &coarse, &["theta"]).unwrap();
        assert_eq!(c.overlap, (0.0, 3.0));
        assert!((c.rmse[0].1 - 0.5).abs() < 1e-12);
        let d = c.pi_cross_delta.unwrap();
        assert!((d + 0.5).abs() < 1e-9, "{d}");
        assert!(!c.within(0.1));
    }

    #[test]
    fn unknown_channel_and_disjoint_spans() {
        let a = ramp(0.1, 5);
        assert!(compare(&a, &a, &["bogus"]).is_err());
        let mut b = ramp(0.1, 5);
        for r in &mut b.rows {
            r.values[0] += 10.0;
        }
        assert!(compare(&a, &b, &["theta"]).is_err());
    }

    #[test]
    fn import_with_mapping() {
        let mapping = ColumnMapping::parse(
            "[columns]\nt = \"time\"\ntheta = \"angle_deg\"\n[scale]\ntheta = 0.017453292519943295\n",
        )
        .unwrap();
        let data = "time, angle_deg, other\n0.0, 0.0, 1\n0.5, 90.0, 2\n1.0, 200.0, 3\n";
        let t = import(data.as_bytes(), &mapping).unwrap();
        assert_eq!(t.rows.len(), 3);
        assert!((t.rows[1].theta() - std::f64::consts::FRAC_PI_2).abs() < 1e-12);
        assert!(t.rows[0].values[2].is_nan());
        assert_eq!(t.rows[2].phase, PhaseTag::Rotation);
        assert!(ColumnMapping::parse("[columns]\ntheta = \"a\"\n").is_err());
        assert!(ColumnMapping::parse("[columns]\nt = \"a\"\nfoo = \"b\"\n").is_err());
    }
}
