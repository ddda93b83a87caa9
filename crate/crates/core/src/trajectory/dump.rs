//! Text dump of a single trajectory record.
//!
//! ```text
//! # mollow-trajectory v1
//! # params: omega=1, delta=0, gamma=0.05, Gamma=5
//! # config: dt=0.001, t_max=2000, n_traj=1, seed=7, record_stride=100, traj_index=0
//! t,re_a1,im_a1,re_a2,im_a2,jump
//! 0,0.7071067811865476,0,-0.7071067811865476,0,0
//! ```
//!
//! Amplitudes are dressed-basis. `jump` flags the events since the previous
//! row: 0 none, 1 emission, 2 noise, 3 both. Jump times read back from a dump
//! are the row times, which are exact only for `record_stride = 1`.

use std::fmt::Write as _;

use super::{JumpEvent, SimConfig, TrajectoryRecord};
use crate::atom::{AtomParams, Channel, PureState};
use crate::error::{Error, Result};
use crate::spectrum::parse_f64;
use crate::C64;

const MAGIC: &str = "# mollow-trajectory v1";
const COLUMNS: &str = "t,re_a1,im_a1,re_a2,im_a2,jump";

pub fn write_dump(rec: &TrajectoryRecord) -> String {
    let mut s = String::new();
    let p = &rec.params;
    let c = &rec.config;
    let _ = writeln!(s, "{MAGIC}");
    let _ = writeln!(
        s,
        "# params: omega={}, delta={}, gamma={}, Gamma={}",
        p.rabi, p.detuning, p.gamma, p.noise
    );
    let _ = writeln!(
        s,
        "# config: dt={}, t_max={}, n_traj={}, seed={}, record_stride={}, traj_index={}",
        c.dt, c.t_max, c.n_traj, c.seed, c.record_stride, rec.traj_index
    );
    let _ = writeln!(s, "{COLUMNS}");
    let mut next_jump = 0;
    let mut prev_t = f64::NEG_INFINITY;
    for (t, st) in rec.times.iter().zip(&rec.states) {
        let mut flag = 0u8;
        while next_jump < rec.jumps.len() && rec.jumps[next_jump].time <= *t {
            if rec.jumps[next_jump].time > prev_t {
                flag |= match rec.jumps[next_jump].channel {
                    Channel::Emission => 1,
                    Channel::Noise => 2,
                };
            }
            next_jump += 1;
        }
        prev_t = *t;
        let (a1, a2) = (st.amp1(), st.amp2());
        let _ = writeln!(s, "{t},{},{},{},{},{flag}", a1.re, a1.im, a2.re, a2.im);
    }
    s
}

fn fields<'a>(line: &'a str, prefix: &str, line_no: usize) -> Result<Vec<(&'a str, &'a str)>> {
    let rest = line
        .strip_prefix(prefix)
        .ok_or_else(|| Error::parse(line_no, format!("expected '{prefix}'")))?;
    rest.split(',')
        .map(|part| {
            part.trim()
                .split_once('=')
                .map(|(k, v)| (k.trim(), v.trim()))
                .ok_or_else(|| Error::parse(line_no, "entry without '='"))
        })
        .collect()
}

fn take<'a>(entries: &[(&str, &'a str)], key: &str, line_no: usize) -> Result<&'a str> {
    let mut found = entries.iter().filter(|(k, _)| *k == key);
    let v = found
        .next()
        .map(|(_, v)| *v)
        .ok_or_else(|| Error::parse(line_no, format!("missing {key}")))?;
    if found.next().is_some() {
        return Err(Error::parse(line_no, format!("duplicate {key}")));
    }
    Ok(v)
}

fn parse_int<T: std::str::FromStr>(s: &str, line_no: usize) -> Result<T> {
    s.parse()
        .map_err(|_| Error::parse(line_no, format!("invalid integer {s:?}")))
}

pub fn read_dump(text: &str) -> Result<TrajectoryRecord> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim_end_matches('\r')));
    let mut next = |what: &str| {
        lines
            .next()
            .ok_or_else(|| Error::parse(0, format!("truncated dump: missing {what}")))
    };
    let (n, magic) = next("magic line")?;
    if magic != MAGIC {
        return Err(Error::parse(n, "not a trajectory dump"));
    }
    let (n, line) = next("params header")?;
    let e = fields(line, "# params:", n)?;
    if e.len() != 4 {
        return Err(Error::parse(n, "expected four parameters"));
    }
    let params = AtomParams::new(
        parse_f64(take(&e, "omega", n)?, n)?,
        parse_f64(take(&e, "delta", n)?, n)?,
        parse_f64(take(&e, "gamma", n)?, n)?,
        parse_f64(take(&e, "Gamma", n)?, n)?,
    )
    .map_err(|err| Error::parse(n, err.to_string()))?;
    let (n, line) = next("config header")?;
    let e = fields(line, "# config:", n)?;
    if e.len() != 6 {
        return Err(Error::parse(n, "expected six config entries"));
    }
    let mut config = SimConfig::new(
        parse_f64(take(&e, "dt", n)?, n)?,
        parse_f64(take(&e, "t_max", n)?, n)?,
        parse_int(take(&e, "n_traj", n)?, n)?,
        parse_int(take(&e, "seed", n)?, n)?,
    );
    config.record_stride = parse_int(take(&e, "record_stride", n)?, n)?;
    let traj_index = parse_int(take(&e, "traj_index", n)?, n)?;
    if config.record_stride == 0 || !(config.dt > 0.0) || config.t_max < config.dt {
        return Err(Error::parse(n, "inconsistent config"));
    }
    let (n, cols) = next("column header")?;
    if cols != COLUMNS {
        return Err(Error::parse(n, format!("expected column header '{COLUMNS}'")));
    }
    let mut times = Vec::new();
    let mut states = Vec::new();
    let mut jumps = Vec::new();
    for (n, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != 6 {
            return Err(Error::parse(n, "expected six columns"));
        }
        let t = parse_f64(cells[0], n)?;
        if times.last().is_some_and(|&last: &f64| t <= last) {
            return Err(Error::parse(n, "times must increase"));
        }
        let a1 = C64::new(parse_f64(cells[1], n)?, parse_f64(cells[2], n)?);
        let a2 = C64::new(parse_f64(cells[3], n)?, parse_f64(cells[4], n)?);
        let norm = (a1.norm_sqr() + a2.norm_sqr()).sqrt();
        if (norm - 1.0).abs() > 1e-6 {
            return Err(Error::parse(n, format!("state norm {norm} is not 1")));
        }
        let flag: u8 = parse_int(cells[5], n)?;
        if flag > 3 {
            return Err(Error::parse(n, "jump flag must be 0..=3"));
        }
        if flag & 1 != 0 {
            jumps.push(JumpEvent {
                time: t,
                channel: Channel::Emission,
            });
        }
        if flag & 2 != 0 {
            jumps.push(JumpEvent {
                time: t,
                channel: Channel::Noise,
            });
        }
        times.push(t);
        // Keep the stored amplitudes bit for bit when they are normalized.
        states.push(if (norm - 1.0).abs() < 1e-12 {
            PureState::from_normalized(nalgebra::Vector2::new(a1, a2))
        } else {
            PureState::new(a1, a2)?
        });
    }
    if times.is_empty() {
        return Err(Error::parse(0, "dump has no samples"));
    }
    // n_samples() − 1, written so that absurd headers cannot overflow.
    let intervals = config.n_steps() / config.record_stride as u64;
    if (times.len() - 1) as u64 != intervals {
        return Err(Error::parse(
            0,
            format!("dump has {} samples, config implies {}", times.len(), intervals.saturating_add(1)),
        ));
    }
    Ok(TrajectoryRecord {
        params,
        config,
        traj_index,
        times,
        states,
        jumps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trajectory::run_trajectory;

    #[test]
    fn round_trip_with_unit_stride() {
        let p = AtomParams::scaled(0.0, 0.5, 5.0).unwrap();
        let cfg = SimConfig::new(0.005, 5.0, 1, 4);
        let rec = run_trajectory(&PureState::dressed1(), &p, &cfg, 2).unwrap();
        assert!(!rec.jumps.is_empty());
        let back = read_dump(&write_dump(&rec)).unwrap();
        assert_eq!(back, rec);
    }

    #[test]
    fn strided_dump_keeps_states() {
        let p = AtomParams::scaled(0.0, 0.5, 5.0).unwrap();
        let mut cfg = SimConfig::new(0.005, 5.0, 1, 4);
        cfg.record_stride = 10;
        let rec = run_trajectory(&PureState::dressed1(), &p, &cfg, 2).unwrap();
        let back = read_dump(&write_dump(&rec)).unwrap();
        assert_eq!(back.states, rec.states);
        assert_eq!(back.times, rec.times);
        assert!(back.jumps.len() <= rec.jumps.len());
    }

    #[test]
    fn rejects_garbage() {
        assert!(read_dump("").is_err());
        assert!(read_dump("hello\n").is_err());
        let p = AtomParams::scaled(0.0, 0.5, 5.0).unwrap();
        let cfg = SimConfig::new(0.01, 0.05, 1, 4);
        let good = write_dump(&run_trajectory(&PureState::dressed1(), &p, &cfg, 0).unwrap());
        assert!(read_dump(&good).is_ok());
        assert!(read_dump(&good.replace(",0\n", ",9\n")).is_err());
        assert!(read_dump(&good.replace("seed=4", "seed=-4")).is_err());
        assert!(read_dump(&good.replace("Gamma=5", "Gamma=-5")).is_err());
        let mut lines: Vec<&str> = good.lines().collect();
        lines.truncate(4);
        assert!(read_dump(&lines.join("\n")).is_err());
    }
}
