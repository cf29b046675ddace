//! Binary and CSV serialisation of trajectories, observations and ensembles.
//!
//! Binary layout, all little-endian: 8-byte magic `OTLPFBIN`, `u32` format
//! version, `u32` payload kind, `u64` node count `M`, time count `T`,
//! observation count `L`, particle count `P`, then the `f64` payload in
//! row-major order. The payload shape is fixed by the kind.

use crate::error::{Error, Result};
use std::io::{Read, Write};

pub const MAGIC: &[u8; 8] = b"OTLPFBIN";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u32)]
pub enum PayloadKind {
    /// `T x M` states.
    Trajectory = 1,
    /// `T x L` observed values.
    Observations = 2,
    /// `T x P x M` particle states.
    Ensembles = 3,
}

impl PayloadKind {
    fn from_code(code: u32) -> Result<Self> {
        match code {
            1 => Ok(PayloadKind::Trajectory),
            2 => Ok(PayloadKind::Observations),
            3 => Ok(PayloadKind::Ensembles),
            _ => Err(Error::Format(format!("unknown payload kind {code}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Header {
    pub kind: PayloadKind,
    pub nodes: u64,
    pub times: u64,
    pub observations: u64,
    pub particles: u64,
}

impl Header {
    pub fn payload_len(&self) -> Result<usize> {
        let n = match self.kind {
            PayloadKind::Trajectory => self.times.checked_mul(self.nodes),
            PayloadKind::Observations => self.times.checked_mul(self.observations),
            PayloadKind::Ensembles => self
                .times
                .checked_mul(self.particles)
                .and_then(|v| v.checked_mul(self.nodes)),
        };
        n.and_then(|v| usize::try_from(v).ok())
            .ok_or_else(|| Error::Format("payload size overflows".into()))
    }
}

pub fn write_binary<W: Write>(mut out: W, header: &Header, payload: &[f64]) -> Result<()> {
    if payload.len() != header.payload_len()? {
        return Err(Error::invalid(format!(
            "payload has {} values, header implies {}",
            payload.len(),
            header.payload_len()?
        )));
    }
    out.write_all(MAGIC)?;
    out.write_all(&FORMAT_VERSION.to_le_bytes())?;
    out.write_all(&(header.kind as u32).to_le_bytes())?;
    for v in [
        header.nodes,
        header.times,
        header.observations,
        header.particles,
    ] {
        out.write_all(&v.to_le_bytes())?;
    }
    let mut bytes = Vec::with_capacity(payload.len() * 8);
    for v in payload {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    out.write_all(&bytes)?;
    out.flush()?;
    Ok(())
}

pub fn read_binary<R: Read>(mut input: R) -> Result<(Header, Vec<f64>)> {
    let mut magic = [0u8; 8];
    input.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format("bad magic".into()));
    }
    let mut w4 = [0u8; 4];
    input.read_exact(&mut w4)?;
    let version = u32::from_le_bytes(w4);
    if version != FORMAT_VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    input.read_exact(&mut w4)?;
    let kind = PayloadKind::from_code(u32::from_le_bytes(w4))?;
    let mut dims = [0u64; 4];
    let mut w8 = [0u8; 8];
    for d in dims.iter_mut() {
        input.read_exact(&mut w8)?;
        *d = u64::from_le_bytes(w8);
    }
    let header = Header {
        kind,
        nodes: dims[0],
        times: dims[1],
        observations: dims[2],
        particles: dims[3],
    };
    let n = header.payload_len()?;
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    if bytes.len() != n * 8 {
        return Err(Error::Format(format!(
            "payload has {} bytes, header implies {}",
            bytes.len(),
            n * 8
        )));
    }
    let payload = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    Ok((header, payload))
}

/// Observations as CSV with columns `t,l,node,position,value`; `values` is
/// `T x L` row-major and times are 1-based.
pub fn write_observations_csv<W: Write>(
    out: W,
    nodes: &[usize],
    positions: &[f64],
    values: &[f64],
) -> Result<()> {
    let l = nodes.len();
    if l == 0 || values.len() % l != 0 || positions.len() != l {
        return Err(Error::invalid(
            "observation values do not match the locations",
        ));
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t", "l", "node", "position", "value"])?;
    for (t, row) in values.chunks_exact(l).enumerate() {
        for (j, v) in row.iter().enumerate() {
            w.write_record(&[
                (t + 1).to_string(),
                (j + 1).to_string(),
                nodes[j].to_string(),
                positions[j].to_string(),
                v.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binary_round_trip() {
        let header = Header {
            kind: PayloadKind::Observations,
            nodes: 8,
            times: 3,
            observations: 2,
            particles: 0,
        };
        let payload: Vec<f64> = (0..6).map(|i| i as f64 * 0.5 - 1.0).collect();
        let mut buf = Vec::new();
        write_binary(&mut buf, &header, &payload).unwrap();
        assert_eq!(&buf[..8], MAGIC);
        assert_eq!(buf.len(), 8 + 4 + 4 + 32 + 48);
        let (h, p) = read_binary(&buf[..]).unwrap();
        assert_eq!(h, header);
        assert_eq!(p, payload);
    }

    #[test]
    fn malformed_input_is_rejected() {
        let header = Header {
            kind: PayloadKind::Trajectory,
            nodes: 2,
            times: 2,
            observations: 0,
            particles: 0,
        };
        let mut buf = Vec::new();
        assert!(write_binary(&mut buf, &header, &[0.0; 3]).is_err());
        write_binary(&mut buf, &header, &[0.0; 4]).unwrap();
        assert!(read_binary(&buf[..buf.len() - 1]).is_err());
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(read_binary(&bad[..]).is_err());
    }

    #[test]
    fn observation_csv_has_one_row_per_value() {
        let mut buf = Vec::new();
        write_observations_csv(
            &mut buf,
            &[3, 11],
            &[3.0 / 512.0, 11.0 / 512.0],
            &[0.1, 0.2, 0.3, 0.4],
        )
        .unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 5);
        assert_eq!(lines[0], "t,l,node,position,value");
        assert!(lines[4].starts_with("2,2,11,"));
    }
}
